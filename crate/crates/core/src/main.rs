use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gentween::datapipe::{
    clean_clips, export_bvh, load_bvh_tree, load_store, parse_bvh, save_store, split_corpus,
    synthetic_corpus, FilterConfig, MotionClip, STYLES,
};
use gentween::keyframe::KeyframeSet;
use gentween::nn::{NetworkSpec, Weights};
use gentween::rcfk::Skeleton;
use gentween::rotmath::{audit_gimbal_safety, JointLimitTable};
use gentween::synth::{
    benchmark_timing, enforce_keyframes, eval_alignment, synthesize, SynthesisRequest,
    REFERENCE_TIMINGS,
};
use gentween::trainer::{
    keyframe_error, path_errors, train_inbetweener, train_path_predictor, validation_batch, RunIo,
    TrainConfig, TrainState, TrainingData,
};
use gentween::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gentween",
    version,
    about = "Keyframe-conditioned motion inbetweening"
)]
struct Cli {
    /// Training config (TOML); defaults to the single-CPU preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Bvh,
    Store,
    /// Joint positions per frame (`3M` values: world root, then root-relative joints).
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Clean and split a BVH tree (or the synthetic corpus) into train/test stores.
    PrepareData {
        /// Root of a BVH tree whose top-level folders are classes.
        #[arg(long, conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        /// Generate this many procedural clips per style instead.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Output directory for train.gts and test.gts.
        #[arg(long)]
        out: PathBuf,
    },
    /// First stage: train the root path predictor.
    TrainPath {
        /// Directory written by prepare-data.
        #[arg(long)]
        data: PathBuf,
        /// Training state file; the metrics log goes next to it.
        #[arg(long)]
        out: PathBuf,
        /// Continue from a saved first-stage state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Second stage: adversarial inbetweener training with the path predictor frozen.
    TrainTween {
        #[arg(long)]
        data: PathBuf,
        /// Trained first-stage state, or an inbetweener state to resume.
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a sequence from keyframes.
    Synthesize {
        /// Weights or training state.
        #[arg(long)]
        weights: PathBuf,
        /// JSON request: frames, keyframes and optional DNA poses.
        #[arg(long, conflicts_with = "clip")]
        request: Option<PathBuf>,
        /// Take keyframes from this BVH clip instead.
        #[arg(long)]
        clip: Option<PathBuf>,
        /// Keyframe spacing when sampling from --clip.
        #[arg(long, default_value_t = 120)]
        every: usize,
        /// Output length; rounded up to a multiple of 64.
        #[arg(long)]
        length: Option<usize>,
        /// Match keyframe positions exactly after synthesis (BVH output
        /// only receives the corrected root).
        #[arg(long)]
        exact: bool,
        #[arg(long, value_enum, default_value_t = Format::Bvh)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Path and keyframe errors of trained weights on the test store.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Per-stage synthesis timings.
    Bench {
        /// Weights to time; freshly initialised ones otherwise.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [512, 1024, 2048, 4096])]
        length: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Check the shipped joint limit table for gimbal-prone axis orders.
    AuditLimits,
}

#[derive(Deserialize)]
struct KeyframeJson {
    frame: usize,
    pose: Vec<f64>,
    #[serde(default)]
    mask: Option<Vec<bool>>,
}

#[derive(Deserialize)]
struct RequestJson {
    frames: usize,
    keyframes: Vec<KeyframeJson>,
    #[serde(default)]
    dna: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct EvalReport {
    path_v1_cm: f64,
    path_v128_cm: f64,
    path_height_cm: f64,
    keyframe_cm: f64,
}

fn load_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::desk(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn load_weights(path: &Path, spec: &NetworkSpec) -> Result<Weights> {
    Weights::load(path, spec).or_else(|_| TrainState::load(path, spec).map(|s| s.weights))
}

fn load_data(dir: &Path, skel: &Arc<Skeleton>) -> Result<(TrainingData, Option<TrainingData>)> {
    let train = load_store(&dir.join("train.gts"), skel)?;
    let test = load_store(&dir.join("test.gts"), skel)?;
    let train = TrainingData::new(train, Arc::clone(skel))?;
    let test = if test.is_empty() {
        None
    } else {
        Some(TrainingData::new(test, Arc::clone(skel))?)
    };
    Ok((train, test))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn request_from_json(path: &Path, skel: &Skeleton) -> Result<SynthesisRequest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let r: RequestJson =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("request: {e}")))?;
    let ch = skel.pose_channels();
    let mut indices = Vec::new();
    let mut poses = Vec::new();
    let mut masks = Vec::new();
    for k in r.keyframes {
        masks.push(k.mask.unwrap_or_else(|| vec![true; ch]));
        indices.push(k.frame);
        poses.push(k.pose);
    }
    Ok(SynthesisRequest {
        keys: KeyframeSet::new(indices, poses, masks)?,
        frames: r.frames,
        dna: r.dna,
    })
}

fn request_from_clip(clip: &MotionClip, every: usize, skel: &Skeleton) -> Result<SynthesisRequest> {
    let every = every.max(1);
    let mut indices: Vec<usize> = (0..clip.len()).step_by(every).collect();
    if indices.last() != Some(&(clip.len() - 1)) {
        indices.push(clip.len() - 1);
    }
    let poses = indices.iter().map(|&t| clip.pose_vector(t, skel)).collect();
    Ok(SynthesisRequest {
        keys: KeyframeSet::full(indices, poses)?,
        frames: clip.len(),
        dna: Vec::new(),
    })
}

fn run(cli: Cli) -> Result<()> {
    let skel = Arc::new(Skeleton::cmu());
    let cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::PrepareData {
            input,
            synthetic,
            out,
        } => {
            let clips = match (input, synthetic) {
                (Some(dir), None) => load_bvh_tree(&dir, &skel)?,
                (None, Some(n)) => synthetic_corpus(&skel, &STYLES, n, 600..=2400, cfg.seed),
                _ => {
                    return Err(Error::Config(
                        "give exactly one of --input or --synthetic".into(),
                    ))
                }
            };
            let (clean, report) = clean_clips(clips, &skel, &FilterConfig::default());
            let corpus = split_corpus(clean, cfg.seed);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            save_store(&out.join("train.gts"), &corpus.train, &skel)?;
            save_store(&out.join("test.gts"), &corpus.test, &skel)?;
            println!(
                "{} clips in, {} dropped by the ground filter, {} frames removed as noise; {} train, {} test, {} classes",
                report.input,
                report.dropped_ground.len(),
                report.frames_removed,
                corpus.train.len(),
                corpus.test.len(),
                corpus.classes.len()
            );
        }
        Cmd::TrainPath { data, out, resume } => {
            let (train, test) = load_data(&data, &skel)?;
            let spec = cfg.network_spec(&skel)?;
            let resume = resume.map(|p| TrainState::load(&p, &spec)).transpose()?;
            let mut log = create(&out.with_extension("log"))?;
            let o = train_path_predictor(
                &train,
                test.as_ref(),
                &cfg,
                resume,
                &mut RunIo {
                    log: &mut log,
                    checkpoint: Some(&out),
                },
            )?;
            log.flush().map_err(|e| Error::io(&out, e))?;
            let e = o.best_errors;
            println!(
                "best V1 {:.3} cm, V128 {:.3} cm, height {:.3} cm",
                e.v1, e.v128, e.y
            );
        }
        Cmd::TrainTween { data, weights, out } => {
            let (train, test) = load_data(&data, &skel)?;
            let spec = cfg.network_spec(&skel)?;
            let start = TrainState::load(&weights, &spec)?;
            let mut log = create(&out.with_extension("log"))?;
            let o = train_inbetweener(
                &train,
                test.as_ref(),
                &cfg,
                start,
                &mut RunIo {
                    log: &mut log,
                    checkpoint: Some(&out),
                },
            )?;
            log.flush().map_err(|e| Error::io(&out, e))?;
            println!("best keyframe error {:.3} cm", o.best_error);
        }
        Cmd::Synthesize {
            weights,
            request,
            clip,
            every,
            length,
            exact,
            format,
            out,
        } => {
            let w = load_weights(&weights, &cfg.network_spec(&skel)?)?;
            let mut req = match (request, clip) {
                (Some(p), None) => request_from_json(&p, &skel)?,
                (None, Some(p)) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    let c = parse_bvh(&text)?.to_clip(&skel, "input", "input")?;
                    request_from_clip(&c, every, &skel)?
                }
                _ => {
                    return Err(Error::Config(
                        "give exactly one of --request or --clip".into(),
                    ))
                }
            };
            if let Some(n) = length {
                req.frames = n;
            }
            req.frames = req.frames.div_ceil(64) * 64;
            let mut s = synthesize(&req, &w, &skel)?;
            for warn in &s.warnings {
                eprintln!("warning: {warn}");
            }
            let before = eval_alignment(&s.poses, &req.keys);
            if exact {
                s.poses = enforce_keyframes(&s.poses, &req.keys)?;
                for (p, r) in s.clip.root_positions.iter_mut().zip(&s.poses) {
                    *p = [r[0], r[1], r[2]];
                }
            }
            println!(
                "{} frames, keyframe error root {:.3} cm, local {:.3} cm",
                req.frames, before.root, before.local
            );
            match format {
                Format::Bvh => {
                    let text = export_bvh(&s.clip, &skel)?;
                    std::fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
                }
                Format::Store => save_store(&out, &[s.clip], &skel)?,
                Format::Json => {
                    let text = serde_json::to_string(&s.poses).expect("poses serialize");
                    std::fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
                }
            }
        }
        Cmd::Eval { weights, data } => {
            let (train, test) = load_data(&data, &skel)?;
            let set = test.as_ref().unwrap_or(&train);
            let w = load_weights(&weights, &cfg.network_spec(&skel)?)?;
            let p = path_errors(set, &w)?;
            let k = keyframe_error(&w, &validation_batch(set, &cfg)?, &skel)?;
            let report = EvalReport {
                path_v1_cm: p.v1,
                path_v128_cm: p.v128,
                path_height_cm: p.y,
                keyframe_cm: k,
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
        }
        Cmd::Bench {
            weights,
            length,
            repeats,
        } => {
            let spec = cfg.network_spec(&skel)?;
            let w = match weights {
                Some(p) => load_weights(&p, &spec)?,
                None => Weights::init(&spec, cfg.seed),
            };
            let longest = length.iter().copied().max().unwrap_or(512);
            let clip = synthetic_corpus(&skel, &STYLES[..1], 1, longest..=longest, cfg.seed)
                .pop()
                .expect("one clip");
            let rows = benchmark_timing(&w, &skel, &clip, &length, repeats)?;
            println!("frames     local      path      post     total   (reference total)");
            for r in rows {
                let reference = REFERENCE_TIMINGS
                    .iter()
                    .find(|x| x.0 == r.frames)
                    .map_or("-".to_string(), |x| format!("{:.3}", x.4));
                println!(
                    "{:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}   ({reference})",
                    r.frames, r.local, r.path, r.post, r.total
                );
            }
        }
        Cmd::AuditLimits => {
            let audit = audit_gimbal_safety(&JointLimitTable::cmu());
            println!("{} joints checked", audit.checked.len());
            for v in &audit.violations {
                println!(
                    "{} ({:?}): second axis range {:.1}..{:.1} deg",
                    v.joint, v.order, v.second_axis_range_deg.0, v.second_axis_range_deg.1
                );
            }
            if !audit.is_safe() {
                return Err(Error::Skeleton(format!(
                    "{} gimbal-prone joints",
                    audit.violations.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
