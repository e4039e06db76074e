//! Stage functions and the end-to-end runner.
//!
//! Each stage reads only what the previous ones produced, so the CLI can run
//! them one at a time through files and get the same result as `run`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use tubelink_core::actionness::{fit_motion_model, score_video};
use tubelink_core::completion::{initial_classifier, link_paths_into_tracks, MixtureAppearance};
use tubelink_core::{
    complete_track, emit_proposals, extract_all_path_sets, forward_backward_search, ActionPath, ActionProposal,
    FeatureHistogram, MotionModel, PathSet, Track, Video,
};

use crate::config::PipelineConfig;
use crate::error::{Result, Stage, StageContext};

pub fn score_stage(video: &mut Video, motion: Option<&MotionModel>, cfg: &PipelineConfig) -> Result<()> {
    let id = video.id.clone();
    score_video(video, motion, cfg.lambda_p).stage(Stage::Score, &id)
}

pub fn search_stage(video: &Video, cfg: &PipelineConfig) -> Result<Vec<ActionPath>> {
    forward_backward_search(video, &cfg.search()).stage(Stage::Search, &video.id)
}

pub fn associate_stage(paths: &[ActionPath], cfg: &PipelineConfig) -> Vec<PathSet> {
    extract_all_path_sets(paths, &cfg.association())
}

/// Per-frame displacement along a track: the shift of the track's detection
/// on that frame, else the last one seen before it.
pub fn track_shifts(track: &Track, video: &Video) -> BTreeMap<u32, (f64, f64)> {
    let mut out = BTreeMap::new();
    let mut last = None;
    for t in track.first_frame()..=track.last_frame() {
        let here = track.entry_at(t).and_then(|e| e.detection).and_then(|id| video.get(id)).and_then(|d| d.shift);
        if here.is_some() {
            last = here;
        }
        if let Some(s) = last {
            out.insert(t, s);
        }
    }
    out
}

/// Chains each set's paths into tracks and fills their gaps.
pub fn complete_stage(video: &Video, sets: &[PathSet], cfg: &PipelineConfig) -> Result<Vec<Track>> {
    let link = cfg.link();
    let appearance = MixtureAppearance::from_video(video);
    let tracks: Vec<Track> = sets.iter().flat_map(|s| link_paths_into_tracks(s, &link)).collect();
    let mut out = Vec::with_capacity(tracks.len());
    for (k, track) in tracks.into_iter().enumerate() {
        if track.is_contiguous() {
            out.push(track);
            continue;
        }
        let ccfg = cfg.completion(k);
        let mut clf = match initial_classifier(&track, video, &appearance, &ccfg) {
            Ok(c) => c,
            // nothing to contrast the track with; leave its gaps open
            Err(tubelink_core::Error::EmptyClass(_)) => {
                out.push(track);
                continue;
            }
            Err(e) => return Err(e).stage(Stage::Complete, &video.id),
        };
        let shifts = track_shifts(&track, video);
        let done =
            complete_track(&track, &ccfg, &mut clf, Some(&shifts), &appearance).stage(Stage::Complete, &video.id)?;
        out.push(done.track);
    }
    Ok(out)
}

pub fn emit_stage(video: &str, tracks: &[Track], cfg: &PipelineConfig) -> Vec<ActionProposal> {
    emit_proposals(video, tracks, &cfg.emit())
}

pub fn fit_motion(
    positives: &[FeatureHistogram],
    negatives: &[FeatureHistogram],
    cfg: &PipelineConfig,
) -> Result<MotionModel> {
    Ok(fit_motion_model(positives, negatives, &cfg.em())?)
}

/// Outcome for one video. Timings are informational and never written to
/// output files.
#[derive(Debug, Clone)]
pub struct VideoOutput {
    pub video: String,
    pub candidate_paths: usize,
    pub path_sets: usize,
    pub tracks: usize,
    pub proposals: Vec<ActionProposal>,
    pub timings: Vec<(Stage, Duration)>,
}

fn timed<T>(timings: &mut Vec<(Stage, Duration)>, stage: Stage, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push((stage, start.elapsed()));
    out
}

pub fn process_video(mut video: Video, motion: Option<&MotionModel>, cfg: &PipelineConfig) -> Result<VideoOutput> {
    let mut timings = Vec::with_capacity(5);
    timed(&mut timings, Stage::Score, || score_stage(&mut video, motion, cfg))?;
    let paths = timed(&mut timings, Stage::Search, || search_stage(&video, cfg))?;
    let sets = timed(&mut timings, Stage::Associate, || associate_stage(&paths, cfg));
    let tracks = timed(&mut timings, Stage::Complete, || complete_stage(&video, &sets, cfg))?;
    let proposals = timed(&mut timings, Stage::Emit, || emit_stage(&video.id, &tracks, cfg));
    Ok(VideoOutput {
        video: video.id,
        candidate_paths: paths.len(),
        path_sets: sets.len(),
        tracks: tracks.len(),
        proposals,
        timings,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// In video id order.
    pub videos: Vec<VideoOutput>,
}

impl PipelineOutput {
    pub fn proposals(&self) -> Vec<ActionProposal> {
        self.videos.iter().flat_map(|v| v.proposals.iter().cloned()).collect()
    }
}

/// Runs every stage on every video. Videos are independent and processed on
/// worker threads; results come back in input order, so output does not
/// depend on scheduling.
pub fn run_pipeline(videos: Vec<Video>, motion: Option<&MotionModel>, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let workers = match cfg.threads {
        0 => thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(videos.len().max(1));

    let queue: Vec<Mutex<Option<Video>>> = videos.into_iter().map(|v| Mutex::new(Some(v))).collect();
    let results: Vec<Mutex<Option<Result<VideoOutput>>>> = queue.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(slot) = queue.get(i) else { break };
                let video = slot.lock().expect("queue lock").take().expect("each video taken once");
                let out = process_video(video, motion, cfg);
                *results[i].lock().expect("result lock") = Some(out);
            });
        }
    });
    let videos = results
        .into_iter()
        .map(|r| r.into_inner().expect("result lock").expect("every video processed"))
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineOutput { videos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tubelink_core::synth::{generate_scenario, ScenarioSpec};
    use tubelink_core::track_iou;

    #[test]
    fn noiseless_single_actor_gives_one_exact_proposal() {
        let sc = generate_scenario(&ScenarioSpec::single_actor(0, 40)).unwrap();
        let out = run_pipeline(vec![sc.video.clone()], None, &PipelineConfig::default()).unwrap();
        let props = out.proposals();
        assert_eq!(props.len(), 1);
        assert_eq!(track_iou(&sc.ground_truth[0], &props[0]).unwrap(), 1.0);
    }

    #[test]
    fn no_videos_no_proposals() {
        let out = run_pipeline(Vec::new(), None, &PipelineConfig::default()).unwrap();
        assert!(out.proposals().is_empty());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let videos: Vec<Video> = (0..4)
            .map(|seed| {
                let mut v = generate_scenario(&ScenarioSpec::two_actor_crossing(seed)).unwrap().video;
                v.id = format!("v{seed}");
                v
            })
            .collect();
        let one = run_pipeline(videos.clone(), None, &PipelineConfig { threads: 1, ..Default::default() }).unwrap();
        let four = run_pipeline(videos, None, &PipelineConfig { threads: 4, ..Default::default() }).unwrap();
        assert_eq!(one.proposals(), four.proposals());
    }

    #[test]
    fn carried_shifts_cover_gaps() {
        let mut spec = ScenarioSpec::single_actor(0, 30);
        spec.actors[0].forced_gaps = vec![(10, 14)];
        let mut video = generate_scenario(&spec).unwrap().video;
        score_video(&mut video, None, 1.0).unwrap();
        let paths = forward_backward_search(&video, &PipelineConfig::default().search()).unwrap();
        let mut long: Vec<&ActionPath> = paths.iter().filter(|p| p.len() >= 10).collect();
        long.sort_by_key(|p| p.start_frame());
        let track = Track::from_paths(&long).unwrap();
        let shifts = track_shifts(&track, &video);
        assert_eq!(shifts.len(), 30);
        assert_eq!(shifts[&12], (1.5, 0.5));
    }
}
