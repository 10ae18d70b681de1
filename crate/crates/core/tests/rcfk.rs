mod common;

use std::sync::Arc;

use common::{fk_audit, graph_check_on, noise, rng};
use gentween::nn::Tensor;
use gentween::rcfk::{encode_raw, rc_fk_decode, remove_root_rotation, Skeleton};
use gentween::rotmath::{audit_gimbal_safety, JointLimitTable};
use proptest::prelude::*;

#[test]
fn random_raw_vectors_stay_valid() {
    let skel = Skeleton::cmu();
    let a = fk_audit(&skel, 2000, 1);
    assert_eq!(a.out_of_limits, 0);
    assert!(a.max_bone_rel < 1e-6, "{:e}", a.max_bone_rel);
    assert!(a.max_ortho < 1e-10, "{:e}", a.max_ortho);
}

#[test]
fn shipped_limits_are_gimbal_safe() {
    let audit = audit_gimbal_safety(&JointLimitTable::cmu());
    assert!(audit.is_safe(), "{:?}", audit.violations);
    assert_eq!(audit.checked.len(), 20);
}

#[test]
fn encode_then_decode_recovers_angles() {
    let skel = Skeleton::cmu();
    let mut r = rng(5);
    for _ in 0..50 {
        let raw = noise(&mut r, skel.raw_channels(), 2.0);
        let f = rc_fk_decode(&raw, &skel).unwrap();
        let back =
            rc_fk_decode(&encode_raw(&f.root_rotation, &f.joint_angles, &skel), &skel).unwrap();
        for j in 0..skel.len() {
            for k in 0..3 {
                assert!((back.joint_angles[j][k] - f.joint_angles[j][k]).abs() < 1e-6);
                assert!((back.joint_positions[j][k] - f.joint_positions[j][k]).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn lambda_has_no_root_gradient() {
    let skel = Arc::new(Skeleton::cmu());
    let raw = Tensor::new(
        vec![1, skel.raw_channels(), 3],
        noise(&mut rng(9), skel.raw_channels() * 3, 1.0),
    )
    .unwrap();
    let s = Arc::clone(&skel);
    let (_, grad) = graph_check_on(&[raw], 4, &[], move |g, v| {
        g.rc_fk(v[0], &s, false).unwrap()
    });
    assert!(grad[..18].iter().all(|&x| x == 0.0));
    assert!(grad[18..].iter().any(|&x| x != 0.0));
}

proptest! {
    #[test]
    fn root_rotation_preserves_distances(seed in any::<u64>(), scale in 0.1..20.0f64) {
        let skel = Skeleton::cmu();
        let raw = noise(&mut rng(seed), skel.raw_channels(), scale);
        let f = rc_fk_decode(&raw, &skel).unwrap();
        let lambda = remove_root_rotation(&f);
        prop_assert_eq!(f.joint_positions[0], [0.0; 3]);
        for j in 0..skel.len() {
            let a: f64 = f.joint_positions[j].iter().map(|v| v * v).sum();
            let b: f64 = lambda[j].iter().map(|v| v * v).sum();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn root_rotation_does_not_change_lambda(seed in any::<u64>()) {
        let skel = Skeleton::cmu();
        let mut r = rng(seed);
        let mut raw = noise(&mut r, skel.raw_channels(), 1.5);
        let a = remove_root_rotation(&rc_fk_decode(&raw, &skel).unwrap());
        raw[..6].copy_from_slice(&noise(&mut r, 6, 3.0));
        let b = remove_root_rotation(&rc_fk_decode(&raw, &skel).unwrap());
        for j in 0..skel.len() {
            for k in 0..3 {
                prop_assert!((a[j][k] - b[j][k]).abs() < 1e-9);
            }
        }
    }
}
