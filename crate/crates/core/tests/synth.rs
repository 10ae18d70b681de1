mod common;

use std::sync::Arc;

use gentween::keyframe::{KeyframeSet, MAX_GAP};
use gentween::nn::{NetworkSpec, Weights};
use gentween::rcfk::Skeleton;
use gentween::synth::{enforce_keyframes, eval_alignment, synthesize, SynthesisRequest};
use gentween::Error;

fn setup() -> (Arc<Skeleton>, Weights, gentween::trainer::TrainingData) {
    let skel = Arc::new(Skeleton::cmu());
    let w = Weights::init(&NetworkSpec::new(skel.len(), 32).unwrap(), 3);
    let data = common::tiny_data(&skel);
    (skel, w, data)
}

fn keys_from(data: &gentween::trainer::TrainingData, at: &[usize]) -> KeyframeSet {
    let clip = &data.poses[0];
    KeyframeSet::full(
        at.to_vec(),
        at.iter().map(|&t| clip[t % clip.len()].clone()).collect(),
    )
    .unwrap()
}

#[test]
fn long_request_has_requested_length_and_finite_output() {
    let (skel, w, data) = setup();
    let keys = keys_from(&data, &[0, 500, 1000, 1500, 2047]);
    let s = synthesize(
        &SynthesisRequest {
            keys,
            frames: 2048,
            dna: vec![],
        },
        &w,
        &skel,
    )
    .unwrap();
    assert_eq!(s.poses.len(), 2048);
    assert_eq!(s.lambda.len(), 2048);
    assert_eq!(s.clip.len(), 2048);
    assert!(s.warnings.is_empty());
    assert!(s.poses.iter().flatten().all(|v| v.is_finite()));
    s.clip.validate(&skel).unwrap();
}

#[test]
fn wide_gap_warns_but_still_synthesizes() {
    let (skel, w, data) = setup();
    let keys = keys_from(&data, &[0, MAX_GAP + 10]);
    let s = synthesize(
        &SynthesisRequest {
            keys,
            frames: 704,
            dna: vec![],
        },
        &w,
        &skel,
    )
    .unwrap();
    assert_eq!(s.warnings.len(), 1);
    assert_eq!(s.poses.len(), 704);
}

#[test]
fn bad_requests_are_rejected() {
    let (skel, w, data) = setup();
    let keys = keys_from(&data, &[0, 60]);
    let r = synthesize(
        &SynthesisRequest {
            keys: keys.clone(),
            frames: 100,
            dna: vec![],
        },
        &w,
        &skel,
    );
    assert!(matches!(r, Err(Error::Shape(_))));
    let r = synthesize(
        &SynthesisRequest {
            keys,
            frames: 64,
            dna: vec![vec![0.0; 5]],
        },
        &w,
        &skel,
    );
    assert!(matches!(r, Err(Error::Shape(_))));
    let small = KeyframeSet::full(vec![0], vec![vec![0.0; 9]]).unwrap();
    let r = synthesize(
        &SynthesisRequest {
            keys: small,
            frames: 64,
            dna: vec![],
        },
        &w,
        &skel,
    );
    assert!(matches!(r, Err(Error::Shape(_))));
}

#[test]
fn enforced_output_hits_keyframes_and_dna_changes_only_the_inbetweens() {
    let (skel, w, data) = setup();
    let keys = keys_from(&data, &[0, 100, 255]);
    let req = |dna: &Vec<Vec<f64>>| SynthesisRequest {
        keys: keys.clone(),
        frames: 256,
        dna: dna.clone(),
    };
    let a = synthesize(&req(&data.class_pools[0]), &w, &skel).unwrap();
    let b = synthesize(&req(&data.class_pools[1]), &w, &skel).unwrap();
    let ea = enforce_keyframes(&a.poses, &keys).unwrap();
    let eb = enforce_keyframes(&b.poses, &keys).unwrap();
    for (&f, p) in keys.indices().iter().zip(keys.poses()) {
        assert_eq!(&ea[f], p);
        assert_eq!(&eb[f], p);
    }
    let e = eval_alignment(&ea, &keys);
    assert_eq!((e.root, e.local), (0.0, 0.0));
    let diff = (0..256)
        .filter(|t| !keys.indices().contains(t))
        .flat_map(|t| ea[t].iter().zip(&eb[t]).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(diff > 0.0);
}

#[test]
fn synthesis_is_deterministic_and_translation_equivariant() {
    let (skel, w, data) = setup();
    let keys = keys_from(&data, &[0, 130, 255]);
    let a = synthesize(
        &SynthesisRequest {
            keys: keys.clone(),
            frames: 256,
            dna: vec![],
        },
        &w,
        &skel,
    )
    .unwrap();
    let b = synthesize(
        &SynthesisRequest {
            keys: keys.clone(),
            frames: 256,
            dna: vec![],
        },
        &w,
        &skel,
    )
    .unwrap();
    assert_eq!(a, b);
    let moved = keys.translated(250.0, -80.0);
    let c = synthesize(
        &SynthesisRequest {
            keys: moved,
            frames: 256,
            dna: vec![],
        },
        &w,
        &skel,
    )
    .unwrap();
    for (p, q) in a.poses.iter().zip(&c.poses) {
        assert!((q[0] - p[0] - 250.0).abs() < 1e-6);
        assert!((q[2] - p[2] + 80.0).abs() < 1e-6);
        assert!((p[1] - q[1]).abs() < 1e-9);
        for (x, y) in p[3..].iter().zip(&q[3..]) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
