//! Browser bindings for three core operations: the joint range map, pose
//! decoding through range-constrained FK, and dense keyframe conditioning.

use std::sync::OnceLock;

use gentween::keyframe::{build_dense_input, KeyframeSet, DISTANCE_SCALE};
use gentween::rcfk::{rc_fk_decode, Skeleton};
use gentween::rotmath::{map_to_range, AxisRange};
use wasm_bindgen::prelude::*;

fn skeleton() -> &'static Skeleton {
    static SKEL: OnceLock<Skeleton> = OnceLock::new();
    SKEL.get_or_init(Skeleton::cmu)
}

/// `samples` points of the range map over raw values in `[-span, span]`,
/// interleaved as `(raw, degrees)`.
#[wasm_bindgen]
pub fn range_curve(min_deg: f64, max_deg: f64, span: f64, samples: usize) -> Vec<f64> {
    let (lo, hi) = if min_deg <= max_deg {
        (min_deg, max_deg)
    } else {
        (max_deg, min_deg)
    };
    let range = AxisRange::from_degrees(lo, hi);
    let n = samples.max(2);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let v = -span + 2.0 * span * i as f64 / (n - 1) as f64;
        out.push(v);
        out.push(map_to_range(v, range).to_degrees());
    }
    out
}

#[wasm_bindgen]
pub fn raw_channels() -> usize {
    skeleton().raw_channels()
}

/// Parent index per joint, `-1` for the root.
#[wasm_bindgen]
pub fn joint_parents() -> Vec<i32> {
    let s = skeleton();
    (0..s.len())
        .map(|j| s.parent(j).map_or(-1, |p| p as i32))
        .collect()
}

#[wasm_bindgen]
pub fn joint_names() -> String {
    skeleton().names().join(",")
}

/// Decodes one raw network frame (6D root rotation, then three raw values per
/// joint) to root-relative joint positions in cm, `x, y, z` per joint.
#[wasm_bindgen]
pub fn decode_pose(raw: &[f64]) -> Result<Vec<f64>, String> {
    let f = rc_fk_decode(raw, skeleton()).map_err(|e| e.to_string())?;
    Ok(f.joint_positions.iter().flatten().copied().collect())
}

/// Dense conditioning for a scalar track: keyframe `i` at frame
/// `frames[i]` carries `values[i]`. Returns `(value, distance)` per frame,
/// distance in frames.
#[wasm_bindgen]
pub fn dense_conditioning(n: usize, frames: &[u32], values: &[f64]) -> Result<Vec<f64>, String> {
    if frames.len() != values.len() {
        return Err("frames and values differ in length".into());
    }
    let mut pairs: Vec<(usize, f64)> = frames
        .iter()
        .map(|&f| f as usize)
        .zip(values.iter().copied())
        .collect();
    pairs.sort_by_key(|p| p.0);
    pairs.dedup_by_key(|p| p.0);
    let keys = KeyframeSet::full(
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| vec![p.1; 3]).collect(),
    )
    .map_err(|e| e.to_string())?;
    let d = build_dense_input(&keys, n).map_err(|e| e.to_string())?;
    Ok((0..n)
        .flat_map(|t| [d.value(t, 0), d.weight_at(t, 0) * DISTANCE_SCALE])
        .collect())
}
