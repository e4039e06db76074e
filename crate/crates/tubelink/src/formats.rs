//! JSON-lines record formats for detections, intermediate results,
//! proposals and ground truth, plus metric reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tubelink_core::completion::BoxSource;
use tubelink_core::evaluation::Metrics;
use tubelink_core::{
    ActionPath, ActionProposal, BoundingBox, Detection, DetectionRef, FeatureHistogram, GroundTruthTrack, MotionModel,
    PathSet, Track, TrackEntry, Video,
};

use crate::error::{Error, Result};

/// Parses one JSON value per non-blank line. Errors name the line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R, source_name: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source_name, i + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::parse(source_name, i + 1, e))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn read_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    read_jsonl(open(path)?, &path.display().to_string())
}

/// Writes the file in one go so that a failed write never leaves a partial
/// result behind a success status.
pub fn write_file<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records)?;
    write_bytes(path, &buf)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// One detection per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video: String,
    pub frame: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub human_score: f64,
    pub motion_hist: Vec<f64>,
    pub color_hist: Vec<f64>,
    pub grad_hist: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_dy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actionness: Option<f64>,
}

impl DetectionRecord {
    pub fn from_detection(video: &str, d: &Detection) -> Self {
        Self {
            video: video.to_string(),
            frame: d.bbox.frame,
            cx: d.bbox.cx,
            cy: d.bbox.cy,
            w: d.bbox.w,
            h: d.bbox.h,
            human_score: d.human_score,
            motion_hist: d.motion_hist.as_slice().to_vec(),
            color_hist: d.color_hist.as_slice().to_vec(),
            grad_hist: d.grad_hist.as_slice().to_vec(),
            shift_dx: d.shift.map(|s| s.0),
            shift_dy: d.shift.map(|s| s.1),
            actionness: d.actionness,
        }
    }

    /// Validates the record and renormalizes its histograms.
    pub fn into_detection(self) -> tubelink_core::Result<Detection> {
        let bbox = BoundingBox::new(self.frame, self.cx, self.cy, self.w, self.h)?;
        let mut d = Detection::new(
            bbox,
            self.human_score,
            FeatureHistogram::normalized(self.motion_hist)?,
            FeatureHistogram::normalized(self.color_hist)?,
            FeatureHistogram::normalized(self.grad_hist)?,
        )?;
        d.actionness = self.actionness;
        d.shift = match (self.shift_dx, self.shift_dy) {
            (None, None) => None,
            (dx, dy) => Some((dx.unwrap_or(0.0), dy.unwrap_or(0.0))),
        };
        Ok(d)
    }
}

/// Groups detections by video (sorted by id) and frame (file order within a
/// frame).
pub fn parse_detections<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Video>> {
    let mut videos: BTreeMap<String, Video> = BTreeMap::new();
    let mut dims: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (line, rec) in read_jsonl::<DetectionRecord, _>(reader, source_name)? {
        let shape = (rec.motion_hist.len(), rec.color_hist.len(), rec.grad_hist.len());
        let expected = *dims.entry(rec.video.clone()).or_insert(shape);
        if shape != expected {
            return Err(Error::parse(
                source_name,
                line,
                format!("histogram dimensions {shape:?} differ from earlier records {expected:?}"),
            ));
        }
        let video = rec.video.clone();
        let det = rec.into_detection().map_err(|e| Error::parse(source_name, line, e))?;
        videos.entry(video.clone()).or_insert_with(|| Video::new(video)).push(det);
    }
    Ok(videos.into_values().collect())
}

pub fn read_detections(path: &Path) -> Result<Vec<Video>> {
    parse_detections(open(path)?, &path.display().to_string())
}

pub fn detection_records(videos: &[Video]) -> Vec<DetectionRecord> {
    videos.iter().flat_map(|v| v.detections().map(move |(_, d)| DetectionRecord::from_detection(&v.id, d))).collect()
}

pub fn write_detections(path: &Path, videos: &[Video]) -> Result<()> {
    write_file(path, &detection_records(videos))
}

/// One box of a proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalBox {
    pub frame: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub source: BoxSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actionness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionRef>,
}

/// One proposal per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub video: String,
    pub start_frame: u32,
    pub end_frame: u32,
    pub boxes: Vec<ProposalBox>,
    pub score: f64,
}

impl From<&ActionProposal> for ProposalRecord {
    fn from(p: &ActionProposal) -> Self {
        Self {
            video: p.video.clone(),
            start_frame: p.start_frame(),
            end_frame: p.end_frame(),
            boxes: p
                .track
                .entries()
                .iter()
                .map(|e| ProposalBox {
                    frame: e.bbox.frame,
                    cx: e.bbox.cx,
                    cy: e.bbox.cy,
                    w: e.bbox.w,
                    h: e.bbox.h,
                    source: e.source,
                    actionness: e.actionness,
                    detection: e.detection,
                })
                .collect(),
            score: p.score,
        }
    }
}

impl ProposalRecord {
    pub fn into_proposal(self) -> tubelink_core::Result<ActionProposal> {
        let entries = self
            .boxes
            .into_iter()
            .map(|b| {
                Ok(TrackEntry {
                    bbox: BoundingBox::new(b.frame, b.cx, b.cy, b.w, b.h)?,
                    source: b.source,
                    actionness: b.actionness,
                    detection: b.detection,
                })
            })
            .collect::<tubelink_core::Result<Vec<_>>>()?;
        let track = Track::new(entries)?;
        if track.first_frame() != self.start_frame || track.last_frame() != self.end_frame {
            return Err(tubelink_core::Error::InvalidPath(format!(
                "frame range {}..={} does not match boxes {}..={}",
                self.start_frame,
                self.end_frame,
                track.first_frame(),
                track.last_frame()
            )));
        }
        Ok(ActionProposal { video: self.video, track, score: self.score })
    }
}

pub fn write_proposals(path: &Path, proposals: &[ActionProposal]) -> Result<()> {
    let records: Vec<ProposalRecord> = proposals.iter().map(ProposalRecord::from).collect();
    write_file(path, &records)
}

pub fn parse_proposals<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<ActionProposal>> {
    read_jsonl::<ProposalRecord, _>(reader, source_name)?
        .into_iter()
        .map(|(line, r)| r.into_proposal().map_err(|e| Error::parse(source_name, line, e)))
        .collect()
}

pub fn read_proposals(path: &Path) -> Result<Vec<ActionProposal>> {
    parse_proposals(open(path)?, &path.display().to_string())
}

pub fn write_ground_truth(path: &Path, gts: &[GroundTruthTrack]) -> Result<()> {
    write_file(path, gts)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthTrack>> {
    let name = path.display().to_string();
    read_file::<GroundTruthTrack>(path)?
        .into_iter()
        .map(|(line, g)| {
            if g.boxes.iter().all(Option::is_none) {
                return Err(Error::parse(&name, line, "ground truth has no annotated frame"));
            }
            let misplaced =
                g.boxes.iter().enumerate().any(|(i, b)| b.is_some_and(|b| b.frame != g.start_frame + i as u32));
            if misplaced {
                return Err(Error::parse(&name, line, "box frame does not match its position"));
            }
            Ok(g)
        })
        .collect()
}

/// Labeled motion histogram for fitting the mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub label: MotionLabel,
    pub hist: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionLabel {
    Positive,
    Negative,
}

/// Positive and negative training histograms, renormalized.
pub fn read_motion_samples(path: &Path) -> Result<(Vec<FeatureHistogram>, Vec<FeatureHistogram>)> {
    let name = path.display().to_string();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (line, s) in read_file::<MotionSample>(path)? {
        let h = FeatureHistogram::normalized(s.hist).map_err(|e| Error::parse(&name, line, e))?;
        match s.label {
            MotionLabel::Positive => pos.push(h),
            MotionLabel::Negative => neg.push(h),
        }
    }
    Ok((pos, neg))
}

pub fn write_motion_samples(path: &Path, positives: &[FeatureHistogram], negatives: &[FeatureHistogram]) -> Result<()> {
    let records: Vec<MotionSample> = positives
        .iter()
        .map(|h| (MotionLabel::Positive, h))
        .chain(negatives.iter().map(|h| (MotionLabel::Negative, h)))
        .map(|(label, h)| MotionSample { label, hist: h.as_slice().to_vec() })
        .collect();
    write_file(path, &records)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path.display().to_string(), e.line(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_motion_model(path: &Path) -> Result<MotionModel> {
    let m: MotionModel = read_json(path)?;
    MotionModel::new(m.positive, m.negative).map_err(|e| Error::parse(&path.display().to_string(), 1, e))
}

/// A candidate path as detection references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub video: String,
    pub rank: usize,
    pub score: f64,
    pub nodes: Vec<DetectionRef>,
}

impl PathRecord {
    pub fn new(video: &str, rank: usize, p: &ActionPath) -> Self {
        Self { video: video.to_string(), rank, score: p.score(), nodes: p.ids().collect() }
    }
}

/// A path set, members in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRecord {
    pub video: String,
    pub set: usize,
    pub objective: f64,
    pub trace: Vec<f64>,
    /// Ranks of the members among the video's candidate paths.
    pub indices: Vec<usize>,
    pub paths: Vec<Vec<DetectionRef>>,
}

impl SetRecord {
    pub fn new(video: &str, k: usize, s: &PathSet) -> Self {
        Self {
            video: video.to_string(),
            set: k,
            objective: s.objective(),
            trace: s.trace.clone(),
            indices: s.indices.clone(),
            paths: s.paths.iter().map(|p| p.ids().collect()).collect(),
        }
    }

    pub fn into_set(self, video: &Video, max_paths: usize, overlap_threshold: f64) -> tubelink_core::Result<PathSet> {
        let paths = self
            .paths
            .iter()
            .map(|ids| ActionPath::from_refs(video, ids))
            .collect::<tubelink_core::Result<Vec<_>>>()?;
        Ok(PathSet { paths, indices: self.indices, trace: self.trace, max_paths, overlap_threshold })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub video: String,
    pub track: Track,
}

/// Reads records carrying a `video` field and groups them by video id,
/// keeping file order within each video.
pub fn read_grouped<T: DeserializeOwned>(
    path: &Path,
    video_of: impl Fn(&T) -> &str,
) -> Result<BTreeMap<String, Vec<(usize, T)>>> {
    let mut out: BTreeMap<String, Vec<(usize, T)>> = BTreeMap::new();
    for (line, r) in read_file::<T>(path)? {
        out.entry(video_of(&r).to_string()).or_default().push((line, r));
    }
    Ok(out)
}

/// Metrics as `scope,metric,value` rows; scope is `all` or a class label.
pub fn metrics_csv(m: &Metrics) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scope", "metric", "value"])?;
    let all = [
        ("eta", m.eta),
        ("recall", m.recall),
        ("abo", m.abo),
        ("mabo", m.mabo),
        ("ground_truths", m.ground_truths as f64),
        ("proposals", m.proposals as f64),
        ("proposals_per_video", m.proposals_per_video),
    ];
    for (k, v) in all {
        w.write_record(["all", k, &v.to_string()])?;
    }
    for c in &m.per_class {
        w.write_record([c.label.as_str(), "abo", &c.abo.to_string()])?;
        w.write_record([c.label.as_str(), "ground_truths", &c.count.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"video":"a","frame":0,"cx":5,"cy":5,"w":4,"h":4,"human_score":0.5,"motion_hist":[1,1],"color_hist":[1,3],"grad_hist":[2]}"#;

    #[test]
    fn groups_by_video_and_frame() {
        let text =
            format!("{LINE}\n\n{}\n{}\n", LINE.replace("\"frame\":0", "\"frame\":2"), LINE.replace("\"a\"", "\"b\""));
        let videos = parse_detections(text.as_bytes(), "mem").unwrap();
        assert_eq!(videos.len(), 2);
        assert_eq!(videos[0].id, "a");
        assert_eq!(videos[0].frame_count(), 3);
        assert_eq!(videos[0].detection_count(), 2);
        assert_eq!(videos[1].detection_count(), 1);
        assert_eq!(videos[0].frames[0][0].color_hist.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn errors_name_the_line() {
        let text = format!("{LINE}\n{}\n", LINE.replace("\"w\":4", "\"w\":-1"));
        let err = parse_detections(text.as_bytes(), "dets.jsonl").unwrap_err();
        assert!(err.to_string().starts_with("dets.jsonl:2:"), "{err}");
        let err = parse_detections("{not json\n".as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let bad_score = LINE.replace("\"human_score\":0.5", "\"human_score\":1.5");
        assert!(parse_detections(bad_score.as_bytes(), "x").is_err());
    }

    #[test]
    fn inconsistent_dimensions_rejected() {
        let text = format!("{LINE}\n{}\n", LINE.replace("\"grad_hist\":[2]", "\"grad_hist\":[2,2]"));
        let err = parse_detections(text.as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn detection_records_round_trip() {
        let text = LINE.replace("}", r#","shift_dx":1.5,"shift_dy":-0.25,"actionness":1.2}"#);
        let videos = parse_detections(text.as_bytes(), "x").unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &detection_records(&videos)).unwrap();
        assert_eq!(parse_detections(buf.as_slice(), "y").unwrap(), videos);
    }
}
