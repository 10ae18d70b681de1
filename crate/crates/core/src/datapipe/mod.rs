//! Mocap ingestion: BVH I/O, cleaning filters, the clip store, the corpus
//! split and a procedural stand-in corpus.

mod bvh;
mod clip;
mod corpus;
mod filters;
mod store;

use std::path::{Path, PathBuf};

pub use bvh::{export_bvh, parse_bvh, BvhDocument, BvhJoint, Channel};
pub use clip::{MotionClip, FPS, MIN_CLIP_FRAMES};
pub use corpus::{
    split_corpus, synthesize_clip, synthetic_corpus, test_count, Corpus, MotionStyle, STYLES,
    TEST_FRACTION,
};
pub use filters::{
    acceleration_scores, filter_ground_plane, filter_noise, noisy_frames, FilterConfig,
    GroundReport,
};
pub use store::{load_store, save_store, store_from_bytes, store_to_bytes};

use crate::error::{Error, Result};
use crate::rcfk::Skeleton;

/// Outcome of cleaning a set of clips.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanReport {
    pub input: usize,
    pub dropped_ground: Vec<String>,
    pub kept: usize,
    pub frames_removed: usize,
}

/// Ground filter, then noise removal and splitting.
pub fn clean_clips(
    clips: Vec<MotionClip>,
    skel: &Skeleton,
    cfg: &FilterConfig,
) -> (Vec<MotionClip>, CleanReport) {
    let mut report = CleanReport {
        input: clips.len(),
        ..CleanReport::default()
    };
    let mut out = Vec::new();
    for c in clips {
        if !filter_ground_plane(&c, skel, cfg).keep {
            report.dropped_ground.push(c.name.clone());
            continue;
        }
        let pieces = filter_noise(&c, skel, cfg);
        report.frames_removed += c.len() - pieces.iter().map(MotionClip::len).sum::<usize>();
        out.extend(pieces);
    }
    report.kept = out.len();
    (out, report)
}

fn collect_bvh(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_bvh(&p, out)?;
        } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("bvh")) {
            out.push(p);
        }
    }
    Ok(())
}

/// Parses every `.bvh` below `root`; the class is the top-level folder name
/// (or `unlabelled` for files directly in `root`).
pub fn load_bvh_tree(root: &Path, skel: &Skeleton) -> Result<Vec<MotionClip>> {
    let mut files = Vec::new();
    collect_bvh(root, &mut files)?;
    let mut clips = Vec::with_capacity(files.len());
    for f in files {
        let rel = f.strip_prefix(root).unwrap_or(&f);
        let class = match rel.components().count() {
            0 | 1 => "unlabelled".to_string(),
            _ => rel
                .components()
                .next()
                .unwrap()
                .as_os_str()
                .to_string_lossy()
                .into_owned(),
        };
        let text = std::fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        let name = f
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let mut clip = parse_bvh(&text)?.to_clip(skel, &class, &name)?;
        clip.source = rel.to_string_lossy().into_owned();
        clips.push(clip);
    }
    Ok(clips)
}
