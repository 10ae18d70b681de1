use gentween::datapipe::*;
use gentween::rcfk::{JointDef, Skeleton};
use gentween::rotmath::{AxisRange, EulerOrder, Mat3};
use gentween::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_joint_skeleton() -> Skeleton {
    let free = AxisRange::from_degrees(-170.0, 170.0);
    Skeleton::new(vec![
        JointDef {
            name: "hip".into(),
            parent: None,
            offset: [0.0; 3],
            order: EulerOrder::Xzy,
            ranges: [free; 3],
            is_end_site: false,
        },
        JointDef {
            name: "knee".into(),
            parent: Some(0),
            offset: [0.0, -40.0, 0.0],
            order: EulerOrder::Xzy,
            ranges: [free, AxisRange::from_degrees(-80.0, 80.0), free],
            is_end_site: false,
        },
        JointDef {
            name: "knee_Nub".into(),
            parent: Some(1),
            offset: [0.0, -45.0, 5.0],
            order: EulerOrder::Xzy,
            ranges: [AxisRange::FIXED_ZERO; 3],
            is_end_site: true,
        },
    ])
    .unwrap()
}

const TWO_JOINT: &str = "HIERARCHY
ROOT hip
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation
  JOINT knee
  {
    OFFSET 0 -40 0
    CHANNELS 3 Xrotation Zrotation Yrotation
    End Site
    {
      OFFSET 0 -45 5
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.0166666667
1 90 2 0 0 0 30 10 -20
1 91 3 0 45 0 0 0 0
";

#[test]
fn two_joint_file_recovers_offsets_and_rotations() {
    let doc = parse_bvh(TWO_JOINT).unwrap();
    assert_eq!(doc.joints.len(), 3);
    assert_eq!(doc.joints[1].offset, [0.0, -40.0, 0.0]);
    assert_eq!(doc.joints[2].offset, [0.0, -45.0, 5.0]);
    assert!(doc.joints[2].end_site);
    let skel = two_joint_skeleton();
    let clip = doc.to_clip(&skel, "test", "two").unwrap();
    assert_eq!(clip.len(), 2);
    assert_eq!(clip.root_positions[0], [1.0, 90.0, 2.0]);
    let a = clip.angles[0][1];
    for (got, want) in a.iter().zip([30.0f64, -20.0, 10.0]) {
        assert!((got - want.to_radians()).abs() < 1e-12, "{a:?}");
    }
    assert!(
        clip.root_rotations[1]
            .sub(&Mat3::rot_y(45f64.to_radians()))
            .frobenius()
            < 1e-12
    );
    assert_eq!(clip.clamp, vec![0.0, 0.0]);
}

#[test]
fn unknown_joint_is_named() {
    let text = TWO_JOINT.replace("JOINT knee", "JOINT elbow");
    match parse_bvh(&text)
        .unwrap()
        .to_clip(&two_joint_skeleton(), "c", "n")
    {
        Err(Error::UnknownJoint(n)) => assert_eq!(n, "elbow"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_motion_is_a_parse_error() {
    let cut = &TWO_JOINT[..TWO_JOINT.find("MOTION").unwrap()];
    assert!(matches!(parse_bvh(cut), Err(Error::BvhParse { .. })));
}

#[test]
fn resampling_120_to_60() {
    let n = 41;
    let mut text = TWO_JOINT[..TWO_JOINT.find("MOTION").unwrap()].to_string();
    text.push_str(&format!(
        "MOTION\nFrames: {n}\nFrame Time: 0.00833333333333\n"
    ));
    for i in 0..n {
        text.push_str(&format!("{} 90 0 0 0 0 {} 0 0\n", i as f64 * 3.0, i as f64));
    }
    let clip = parse_bvh(&text)
        .unwrap()
        .to_clip(&two_joint_skeleton(), "c", "ramp")
        .unwrap();
    assert_eq!(clip.len(), 21);
    for (k, p) in clip.root_positions.iter().enumerate() {
        assert!((p[0] - 6.0 * k as f64).abs() < 1e-6, "frame {k}: {p:?}");
        assert!((clip.angles[k][1][0] - (2.0 * k as f64).to_radians()).abs() < 1e-6);
    }
}

fn cmu_clip(frames: usize, seed: u64) -> (Skeleton, MotionClip) {
    let skel = Skeleton::cmu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = synthesize_clip(&skel, &STYLES[0], frames, "walk_x", &mut rng);
    (skel, c)
}

#[test]
fn export_round_trip_below_tolerance() {
    let (skel, clip) = cmu_clip(30, 4);
    let text = export_bvh(&clip, &skel).unwrap();
    assert!(text.contains("Frame Time: 0.016666666666666666"));
    let back = parse_bvh(&text)
        .unwrap()
        .to_clip(&skel, "walk", "walk_x")
        .unwrap();
    assert_eq!(back.len(), clip.len());
    for t in 0..clip.len() {
        let (a, b) = (
            clip.world_positions(t, &skel),
            back.world_positions(t, &skel),
        );
        for (p, q) in a.iter().zip(&b) {
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            assert!(d < 1e-3, "frame {t}: {d}");
        }
    }
}

#[test]
fn ground_filter_cases() {
    let cfg = FilterConfig::default();
    let (skel, clip) = cmu_clip(240, 1);
    assert!(filter_ground_plane(&clip, &skel, &cfg).keep);
    let mut sunk = clip.clone();
    sunk.root_positions.iter_mut().for_each(|p| p[1] -= 10.0);
    assert!(!filter_ground_plane(&sunk, &skel, &cfg).keep);
    let mut stairs = clip.clone();
    for (t, p) in stairs.root_positions.iter_mut().enumerate() {
        p[1] += 18.0 * (t / 40) as f64;
    }
    assert!(!filter_ground_plane(&stairs, &skel, &cfg).keep);
}

#[test]
fn clean_clip_passes_noise_filter_unchanged() {
    let (skel, clip) = cmu_clip(300, 2);
    let out = filter_noise(&clip, &skel, &FilterConfig::default());
    assert_eq!(out, vec![clip]);
}

#[test]
fn spike_splits_exactly_at_injected_frame() {
    let (skel, mut clip) = cmu_clip(600, 3);
    let f = 290;
    clip.root_positions[f][0] += 50.0;
    let flags = noisy_frames(&clip, &skel, &FilterConfig::default());
    let hit: Vec<usize> = (0..flags.len()).filter(|&t| flags[t]).collect();
    assert_eq!(hit, vec![f]);
    let out = filter_noise(&clip, &skel, &FilterConfig::default());
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].len(), f);
    assert_eq!(out[1].len(), 600 - f - 1);
    assert_eq!(out[1].root_positions[0], clip.root_positions[f + 1]);
}

#[test]
fn limit_violation_removes_frame() {
    let (skel, mut clip) = cmu_clip(600, 5);
    clip.clamp[100] = 0.5;
    let out = filter_noise(&clip, &skel, &FilterConfig::default());
    assert_eq!(
        out.iter().map(MotionClip::len).collect::<Vec<_>>(),
        vec![499]
    );
}

#[test]
fn store_round_trip_is_byte_stable_and_checked() {
    let skel = Skeleton::cmu();
    let clips = synthetic_corpus(&skel, &STYLES[..2], 2, 60..=90, 7);
    let bytes = store_to_bytes(&clips, &skel).unwrap();
    let back = store_from_bytes(&bytes, &skel).unwrap();
    assert_eq!(back, clips);
    assert_eq!(store_to_bytes(&back, &skel).unwrap(), bytes);
    let mut bad = bytes.clone();
    let n = bad.len();
    bad[n - 9] ^= 1;
    assert!(matches!(
        store_from_bytes(&bad, &skel),
        Err(Error::Store(_))
    ));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clips.gtw");
    save_store(&path, &clips, &skel).unwrap();
    assert_eq!(load_store(&path, &skel).unwrap(), clips);
}

#[test]
fn split_is_seeded_and_stratified() {
    let skel = Skeleton::cmu();
    let clips = synthetic_corpus(&skel, &STYLES, 7, 30..=40, 11);
    let a = split_corpus(clips.clone(), 5);
    let b = split_corpus(clips.clone(), 5);
    assert_eq!(a, b);
    for class in &a.classes {
        let total = clips.iter().filter(|c| &c.class_label == class).count();
        let held = a.test.iter().filter(|c| &c.class_label == class).count();
        assert!((held as f64 - total as f64 * TEST_FRACTION).abs() <= 1.0);
    }
    assert_eq!(a.train.len() + a.test.len(), clips.len());
}

#[test]
fn synthetic_styles_are_clean_and_grounded() {
    let skel = Skeleton::cmu();
    let cfg = FilterConfig::default();
    for (i, style) in STYLES.iter().enumerate() {
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed * 7 + i as u64);
            let c = synthesize_clip(&skel, style, 400, "s", &mut rng);
            assert!(
                filter_ground_plane(&c, &skel, &cfg).keep,
                "{} {seed}",
                style.name
            );
            assert!(
                !noisy_frames(&c, &skel, &cfg).iter().any(|&b| b),
                "{} {seed}",
                style.name
            );
        }
    }
}
