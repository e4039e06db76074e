//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tubelink_core::evaluation::evaluate;
use tubelink_core::synth::{generate_scenario, ScenarioSpec};
use tubelink_core::{ActionPath, MotionModel, PathSet, Video};

use crate::config::PipelineConfig;
use crate::error::{Error, Result, Stage, StageContext};
use crate::formats::{self, PathRecord, SetRecord, TrackRecord};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "tubelink", version, about = "Action proposals from per-frame scored boxes")]
pub struct Cli {
    /// Pipeline configuration (JSON). Missing fields take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scene: detections, ground truth and motion samples.
    Generate {
        #[arg(long, value_enum, conflicts_with = "scenario")]
        preset: Option<Preset>,
        /// Scenario description (JSON).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
    },
    /// Compute actionness for every detection.
    Score {
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        motion: MotionArgs,
        /// Also write the fitted mixtures here.
        #[arg(long, requires = "fit")]
        save_gmm: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Find candidate paths in scored detections.
    Search {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Group candidate paths into path sets.
    Associate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        paths: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Chain path sets into tracks and fill their gaps.
    Complete {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        sets: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Gate tracks by duration and rank them as proposals.
    Emit {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score proposals against ground truth.
    Evaluate {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Metrics JSON; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// All stages end to end.
    Run {
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        motion: MotionArgs,
        /// When given, metrics are written next to the proposals.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
        /// Print per-stage timings to stderr.
        #[arg(long)]
        timings: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Crossing,
    Single,
}

#[derive(Debug, Args)]
pub struct MotionArgs {
    /// Fitted mixtures (JSON with `positive` and `negative`).
    #[arg(long, conflicts_with = "fit")]
    pub gmm: Option<PathBuf>,
    /// Labeled motion histograms to fit the mixtures from.
    #[arg(long)]
    pub fit: Option<PathBuf>,
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    match cli.command {
        Command::Generate { preset, scenario, output } => generate(preset, scenario.as_deref(), cli.seed, &output),
        Command::Score { detections, motion, save_gmm, output } => {
            let model = load_motion(&motion, &cfg)?;
            if let (Some(path), Some(m)) = (save_gmm, &model) {
                formats::write_json(&path, m)?;
            }
            let mut videos = formats::read_detections(&detections)?;
            for v in &mut videos {
                pipeline::score_stage(v, model.as_ref(), &cfg)?;
            }
            emit_records(output.as_deref(), &formats::detection_records(&videos))
        }
        Command::Search { detections, output } => {
            let videos = scored_detections(&detections)?;
            let mut records = Vec::new();
            for v in &videos {
                let paths = pipeline::search_stage(v, &cfg)?;
                records.extend(paths.iter().enumerate().map(|(k, p)| PathRecord::new(&v.id, k, p)));
            }
            emit_records(output.as_deref(), &records)
        }
        Command::Associate { detections, paths, output } => {
            let videos = scored_detections(&detections)?;
            let grouped = formats::read_grouped::<PathRecord>(&paths, |r| &r.video)?;
            let mut records = Vec::new();
            for v in &videos {
                let Some(rows) = grouped.get(&v.id) else { continue };
                let candidates = rows
                    .iter()
                    .map(|(line, r)| {
                        ActionPath::from_refs(v, &r.nodes)
                            .map_err(|e| Error::parse(&paths.display().to_string(), *line, e))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let sets = pipeline::associate_stage(&candidates, &cfg);
                records.extend(sets.iter().enumerate().map(|(k, s)| SetRecord::new(&v.id, k, s)));
            }
            emit_records(output.as_deref(), &records)
        }
        Command::Complete { detections, sets, output } => {
            let videos = scored_detections(&detections)?;
            let grouped = formats::read_grouped::<SetRecord>(&sets, |r| &r.video)?;
            let assoc = cfg.association();
            let mut records = Vec::new();
            for v in &videos {
                let Some(rows) = grouped.get(&v.id) else { continue };
                let path_sets = rows
                    .iter()
                    .map(|(line, r)| {
                        r.clone()
                            .into_set(v, assoc.max_paths, assoc.overlap_threshold)
                            .map_err(|e| Error::parse(&sets.display().to_string(), *line, e))
                    })
                    .collect::<Result<Vec<PathSet>>>()?;
                let tracks = pipeline::complete_stage(v, &path_sets, &cfg)?;
                records.extend(tracks.into_iter().map(|track| TrackRecord { video: v.id.clone(), track }));
            }
            emit_records(output.as_deref(), &records)
        }
        Command::Emit { tracks, output } => {
            let grouped = formats::read_grouped::<TrackRecord>(&tracks, |r| &r.video)?;
            let mut proposals = Vec::new();
            for (video, rows) in grouped {
                let ts: Vec<_> = rows.into_iter().map(|(_, r)| r.track).collect();
                proposals.extend(pipeline::emit_stage(&video, &ts, &cfg));
            }
            let records: Vec<formats::ProposalRecord> = proposals.iter().map(Into::into).collect();
            emit_records(output.as_deref(), &records)
        }
        Command::Evaluate { proposals, ground_truth, output, csv } => {
            let props = formats::read_proposals(&proposals)?;
            let gts = formats::read_ground_truth(&ground_truth)?;
            let metrics = evaluate(&props, &gts, cfg.eval_eta).stage(Stage::Evaluate, "*")?;
            if let Some(path) = csv {
                formats::write_bytes(&path, &formats::metrics_csv(&metrics)?)?;
            }
            match output {
                Some(path) => formats::write_json(&path, &metrics),
                None => {
                    let text = serde_json::to_string_pretty(&metrics)?;
                    println!("{text}");
                    Ok(())
                }
            }
        }
        Command::Run { detections, motion, ground_truth, output, timings } => {
            let model = load_motion(&motion, &cfg)?;
            let videos = formats::read_detections(&detections)?;
            let gts = ground_truth.as_deref().map(formats::read_ground_truth).transpose()?;
            let out = pipeline::run_pipeline(videos, model.as_ref(), &cfg)?;
            if timings {
                for v in &out.videos {
                    let parts: Vec<String> =
                        v.timings.iter().map(|(s, d)| format!("{s}={:.3}ms", d.as_secs_f64() * 1e3)).collect();
                    eprintln!("{}: {}", v.video, parts.join(" "));
                }
            }
            std::fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
            let proposals = out.proposals();
            formats::write_proposals(&output.join("proposals.jsonl"), &proposals)?;
            if let Some(gts) = gts {
                let metrics = evaluate(&proposals, &gts, cfg.eval_eta).stage(Stage::Evaluate, "*")?;
                formats::write_json(&output.join("metrics.json"), &metrics)?;
                formats::write_bytes(&output.join("metrics.csv"), &formats::metrics_csv(&metrics)?)?;
            }
            Ok(())
        }
    }
}

fn generate(preset: Option<Preset>, scenario: Option<&Path>, seed: Option<u64>, output: &Path) -> Result<()> {
    let mut spec = match (preset, scenario) {
        (_, Some(path)) => formats::read_json::<ScenarioSpec>(path)?,
        (Some(Preset::Single), None) => ScenarioSpec::single_actor(0, 100),
        (Some(Preset::Crossing), None) => ScenarioSpec::two_actor_crossing(0),
        (None, None) => return Err(Error::Config("generate needs --preset or --scenario".into())),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let sc = generate_scenario(&spec)?;
    std::fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    formats::write_json(&output.join("scenario.json"), &spec)?;
    formats::write_detections(&output.join("detections.jsonl"), std::slice::from_ref(&sc.video))?;
    formats::write_ground_truth(&output.join("ground_truth.jsonl"), &sc.ground_truth)?;
    formats::write_motion_samples(&output.join("motion_samples.jsonl"), &sc.actor_motion, &sc.clutter_motion)
}

fn load_motion(args: &MotionArgs, cfg: &PipelineConfig) -> Result<Option<MotionModel>> {
    match (&args.gmm, &args.fit) {
        (Some(path), _) => formats::read_motion_model(path).map(Some),
        (None, Some(path)) => {
            let (pos, neg) = formats::read_motion_samples(path)?;
            pipeline::fit_motion(&pos, &neg, cfg).map(Some)
        }
        (None, None) => Ok(None),
    }
}

fn scored_detections(path: &Path) -> Result<Vec<Video>> {
    let videos = formats::read_detections(path)?;
    for v in &videos {
        if let Some((id, _)) = v.detections().find(|(_, d)| d.actionness.is_none()) {
            return Err(Error::Config(format!(
                "{}: detection {}:{} of video {:?} has no actionness; run `score` first",
                path.display(),
                id.frame,
                id.index,
                v.id
            )));
        }
    }
    Ok(videos)
}

fn emit_records<T: serde::Serialize>(output: Option<&Path>, records: &[T]) -> Result<()> {
    match output {
        Some(path) => formats::write_file(path, records),
        None => {
            let mut buf = Vec::new();
            formats::write_jsonl(&mut buf, records)?;
            std::io::stdout().lock().write_all(&buf).map_err(|e| Error::io("<stdout>", e))
        }
    }
}
