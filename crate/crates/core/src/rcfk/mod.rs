//! Range-constrained forward kinematics.
//!
//! A raw per-frame vector holds the root's 6D rotation followed by three
//! unconstrained reals for every non-root joint (end sites and fixed joints
//! included, so the layout is always `6 + 3(M − 1)`). Decoding squashes each
//! triple into the joint's limits, builds the Euler rotation, and chains the
//! rest offsets down the hierarchy.

mod skeleton;

pub use skeleton::{JointDef, Skeleton, CMU_OFFSETS_ASSET};

use crate::error::{Error, Result};
use crate::rotmath::{
    add, euler_to_matrix, map_to_range, map_to_range3, map_to_range_derivative, matrix_to_sixd,
    sixd_to_matrix, sixd_to_matrix_backward, Mat3, Rotation6D, Vec3,
};

/// One decoded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPoseFrame {
    pub root_rotation: Mat3,
    /// Local rotation of every joint; entry 0 (the root) is the identity.
    pub joint_rotations: Vec<Mat3>,
    /// Ranged Euler angles `[θx, θy, θz]` per joint; entry 0 is zero.
    pub joint_angles: Vec<[f64; 3]>,
    /// Root-relative positions with the root orientation applied; entry 0 is
    /// the origin.
    pub joint_positions: Vec<Vec3>,
}

impl LocalPoseFrame {
    /// Non-root positions flattened to `3(M − 1)` values.
    pub fn local_vector(&self) -> Vec<f64> {
        self.joint_positions[1..]
            .iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// Positions of every joint relative to the root, without any root rotation.
/// `rotations[0]` is ignored.
pub fn forward_kinematics(rotations: &[Mat3], skel: &Skeleton) -> Vec<Vec3> {
    let m = skel.len();
    assert_eq!(rotations.len(), m, "one rotation per joint");
    let mut global = vec![Mat3::IDENTITY; m];
    let mut pos = vec![[0.0; 3]; m];
    for j in 1..m {
        let p = skel.parent(j).expect("non-root joint has a parent");
        pos[j] = add(pos[p], global[p].mul_vec(skel.offset(j)));
        global[j] = global[p] * rotations[j];
    }
    pos
}

fn check_raw(raw: &[f64], skel: &Skeleton) -> Result<()> {
    if raw.len() != skel.raw_channels() {
        return Err(Error::Shape(format!(
            "raw frame has {} values, skeleton needs {}",
            raw.len(),
            skel.raw_channels()
        )));
    }
    Ok(())
}

fn joint_raw(raw: &[f64], j: usize) -> [f64; 3] {
    let o = 6 + 3 * (j - 1);
    [raw[o], raw[o + 1], raw[o + 2]]
}

/// Decodes one raw frame into rotations and root-relative positions.
pub fn rc_fk_decode(raw: &[f64], skel: &Skeleton) -> Result<LocalPoseFrame> {
    check_raw(raw, skel)?;
    let r6 = Rotation6D([raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]]);
    let root_rotation = sixd_to_matrix(&r6)?;
    let m = skel.len();
    let mut joint_rotations = vec![Mat3::IDENTITY; m];
    let mut joint_angles = vec![[0.0; 3]; m];
    for j in 1..m {
        if skel.is_end_site(j) {
            continue;
        }
        let u = map_to_range3(joint_raw(raw, j), skel.ranges(j))?;
        joint_angles[j] = u;
        joint_rotations[j] = euler_to_matrix(u, skel.order(j));
    }
    let local = forward_kinematics(&joint_rotations, skel);
    let joint_positions = local.iter().map(|p| root_rotation.mul_vec(*p)).collect();
    Ok(LocalPoseFrame {
        root_rotation,
        joint_rotations,
        joint_angles,
        joint_positions,
    })
}

/// `Λ`: positions expressed in the root's own frame.
pub fn remove_root_rotation(pose: &LocalPoseFrame) -> Vec<Vec3> {
    pose.joint_positions
        .iter()
        .map(|p| pose.root_rotation.tmul_vec(*p))
        .collect()
}

/// Inverse of the range map for building raw vectors from known poses.
/// Angles on or outside a bound are first pulled 1e-7 rad inside it.
pub fn encode_raw(root_rotation: &Mat3, angles: &[[f64; 3]], skel: &Skeleton) -> Vec<f64> {
    let mut raw = vec![0.0; skel.raw_channels()];
    raw[..6].copy_from_slice(&matrix_to_sixd(root_rotation).0);
    const MARGIN: f64 = 1e-7;
    for j in 1..skel.len() {
        for (k, r) in skel.ranges(j).iter().enumerate() {
            let v = if r.is_fixed() {
                0.0
            } else {
                let hw = r.half_width();
                let a = angles[j][k].clamp(r.min + MARGIN.min(hw), r.max - MARGIN.min(hw));
                ((a - r.midpoint()) / hw)
                    .clamp(-1.0 + 1e-15, 1.0 - 1e-15)
                    .atanh()
            };
            raw[6 + 3 * (j - 1) + k] = v;
        }
    }
    raw
}

/// Vector-Jacobian product of the decode. `grad_positions` is the gradient
/// with respect to `joint_positions` when `apply_root` is set, or with
/// respect to `Λ` (positions without root rotation) otherwise.
pub fn rc_fk_backward(
    raw: &[f64],
    skel: &Skeleton,
    grad_positions: &[Vec3],
    apply_root: bool,
) -> Result<Vec<f64>> {
    check_raw(raw, skel)?;
    let m = skel.len();
    if grad_positions.len() != m {
        return Err(Error::Shape("one position gradient per joint".into()));
    }
    let r6 = Rotation6D([raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]]);
    let mut angles = vec![[0.0; 3]; m];
    let mut rot = vec![Mat3::IDENTITY; m];
    for j in 1..m {
        if skel.is_end_site(j) {
            continue;
        }
        let v = joint_raw(raw, j);
        let rg = skel.ranges(j);
        angles[j] = [
            map_to_range(v[0], rg[0]),
            map_to_range(v[1], rg[1]),
            map_to_range(v[2], rg[2]),
        ];
        rot[j] = euler_to_matrix(angles[j], skel.order(j));
    }
    let mut global = vec![Mat3::IDENTITY; m];
    let mut pos = vec![[0.0; 3]; m];
    for j in 1..m {
        let p = skel.parent(j).unwrap();
        pos[j] = add(pos[p], global[p].mul_vec(skel.offset(j)));
        global[j] = global[p] * rot[j];
    }

    let mut grad = vec![0.0; raw.len()];
    let mut gq: Vec<Vec3> = grad_positions.to_vec();
    if apply_root {
        let rr = sixd_to_matrix(&r6)?;
        let mut g_rr = Mat3::ZERO;
        for j in 0..m {
            g_rr = g_rr.add(&Mat3::outer(grad_positions[j], pos[j]));
            gq[j] = rr.tmul_vec(grad_positions[j]);
        }
        grad[..6].copy_from_slice(&sixd_to_matrix_backward(&r6, &g_rr)?);
    }

    let mut g_global = vec![Mat3::ZERO; m];
    for j in (1..m).rev() {
        let p = skel.parent(j).unwrap();
        // pos[j] = pos[p] + G_p · o_j ;  G_j = G_p · R_j
        let gqj = gq[j];
        gq[p] = add(gq[p], gqj);
        let gg_j = g_global[j];
        let from_rot = gg_j * rot[j].transpose();
        g_global[p] = g_global[p]
            .add(&Mat3::outer(gqj, skel.offset(j)))
            .add(&from_rot);
        if skel.is_end_site(j) {
            continue;
        }
        let g_rot = global[p].transpose() * gg_j;
        let order = skel.order(j);
        let axes = order.axes();
        let a = [
            axes[0].rotation(angles[j][axes[0].index()]),
            axes[1].rotation(angles[j][axes[1].index()]),
            axes[2].rotation(angles[j][axes[2].index()]),
        ];
        let rg = skel.ranges(j);
        let v = joint_raw(raw, j);
        for (slot, axis) in axes.iter().enumerate() {
            let k = axis.index();
            if rg[k].is_fixed() {
                continue;
            }
            let d = axis.rotation_derivative(angles[j][k]);
            let dr = match slot {
                0 => d * a[1] * a[2],
                1 => a[0] * d * a[2],
                _ => a[0] * a[1] * d,
            };
            grad[6 + 3 * (j - 1) + k] = g_rot.inner(&dr) * map_to_range_derivative(v[k], rg[k]);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotmath::{sub, AxisRange, EulerOrder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raw(rng: &mut ChaCha8Rng, skel: &Skeleton, scale: f64) -> Vec<f64> {
        (0..skel.raw_channels())
            .map(|_| rng.gen_range(-scale..scale))
            .collect()
    }

    #[test]
    fn cmu_skeleton_shape() {
        let s = Skeleton::cmu();
        assert_eq!(s.len(), 57);
        assert_eq!(s.raw_channels(), 174);
        assert_eq!(s.pose_channels(), 171);
        assert!(s.is_end_site(s.index_of("lFoot_Nub").unwrap()));
        assert_eq!(s.order(s.index_of("rForeArm").unwrap()), EulerOrder::Yxz);
    }

    #[test]
    fn identity_rotations_give_t_pose() {
        let s = Skeleton::cmu();
        let pos = forward_kinematics(&vec![Mat3::IDENTITY; s.len()], &s);
        for j in 1..s.len() {
            let p = s.parent(j).unwrap();
            assert!(sub(pos[j], add(pos[p], s.offset(j)))
                .iter()
                .all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn zero_raw_decodes_to_range_midpoints() {
        let s = Skeleton::cmu();
        let mut raw = vec![0.0; s.raw_channels()];
        raw[..6].copy_from_slice(&Rotation6D::IDENTITY.0);
        let f = rc_fk_decode(&raw, &s).unwrap();
        assert_eq!(f.root_rotation, Mat3::IDENTITY);
        assert_eq!(f.joint_positions[0], [0.0; 3]);
        let shin = s.index_of("rShin").unwrap();
        assert!((f.joint_angles[shin][0].to_degrees() - 85.0).abs() < 1e-9);
        let abd = s.index_of("abdomen").unwrap();
        assert!((f.joint_angles[abd][1]).abs() < 1e-12);
    }

    #[test]
    fn two_bone_chain_matches_homogeneous_oracle() {
        let s = Skeleton::new(vec![
            JointDef {
                name: "root".into(),
                parent: None,
                offset: [0.0; 3],
                order: EulerOrder::Xzy,
                ranges: [AxisRange::FIXED_ZERO; 3],
                is_end_site: false,
            },
            JointDef {
                name: "a".into(),
                parent: Some(0),
                offset: [1.0, 0.0, 0.0],
                order: EulerOrder::Xzy,
                ranges: [AxisRange::from_degrees(-180.0, 180.0); 3],
                is_end_site: false,
            },
            JointDef {
                name: "b".into(),
                parent: Some(1),
                offset: [2.0, 0.0, 0.0],
                order: EulerOrder::Xzy,
                ranges: [AxisRange::FIXED_ZERO; 3],
                is_end_site: true,
            },
        ])
        .unwrap();
        let rots = vec![
            Mat3::IDENTITY,
            Mat3::rot_z(std::f64::consts::FRAC_PI_2),
            Mat3::IDENTITY,
        ];
        let pos = forward_kinematics(&rots, &s);

        // 4x4 chain: T(o_a) R_a T(o_b) applied to the origin.
        type M4 = [[f64; 4]; 4];
        fn mul(a: M4, b: M4) -> M4 {
            let mut r = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        r[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            r
        }
        fn homog(r: [[f64; 3]; 3], t: [f64; 3]) -> M4 {
            [
                [r[0][0], r[0][1], r[0][2], t[0]],
                [r[1][0], r[1][1], r[1][2], t[1]],
                [r[2][0], r[2][1], r[2][2], t[2]],
                [0.0, 0.0, 0.0, 1.0],
            ]
        }
        let ident = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let ta = homog(rots[1].0, [1.0, 0.0, 0.0]);
        let tb = homog(ident, [2.0, 0.0, 0.0]);
        let chain = mul(ta, tb);
        let expected_b = [chain[0][3], chain[1][3], chain[2][3]];
        assert!(
            sub(pos[2], expected_b).iter().all(|v| v.abs() < 1e-12),
            "{:?}",
            pos[2]
        );
        assert!(sub(pos[2], [1.0, 2.0, 0.0]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn bone_lengths_and_limits_hold_for_random_raw() {
        let s = Skeleton::cmu();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let raw = random_raw(&mut rng, &s, 5.0);
            let f = rc_fk_decode(&raw, &s).unwrap();
            for j in 1..s.len() {
                let p = s.parent(j).unwrap();
                let len = crate::rotmath::norm(sub(f.joint_positions[j], f.joint_positions[p]));
                let rest = s.bone_length(j);
                assert!(((len - rest) / rest).abs() < 1e-6);
                if !s.is_end_site(j) {
                    for k in 0..3 {
                        assert!(s.ranges(j)[k].contains_open(f.joint_angles[j][k]));
                    }
                }
            }
        }
    }

    #[test]
    fn lambda_strips_root_rotation() {
        let s = Skeleton::cmu();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = random_raw(&mut rng, &s, 2.0);
        let a = rc_fk_decode(&raw, &s).unwrap();
        let mut raw2 = raw.clone();
        let yaw = Mat3::rot_y(0.7) * a.root_rotation;
        raw2[..6].copy_from_slice(&matrix_to_sixd(&yaw).0);
        let b = rc_fk_decode(&raw2, &s).unwrap();
        let la = remove_root_rotation(&a);
        let lb = remove_root_rotation(&b);
        for (p, q) in la.iter().zip(&lb) {
            assert!(sub(*p, *q).iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn encode_raw_round_trips() {
        let s = Skeleton::cmu();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = random_raw(&mut rng, &s, 1.5);
        let f = rc_fk_decode(&raw, &s).unwrap();
        let back = encode_raw(&f.root_rotation, &f.joint_angles, &s);
        let g = rc_fk_decode(&back, &s).unwrap();
        for (p, q) in f.joint_positions.iter().zip(&g.joint_positions) {
            assert!(sub(*p, *q).iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = Skeleton::cmu();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for apply_root in [true, false] {
            let raw = random_raw(&mut rng, &s, 1.0);
            let w: Vec<Vec3> = (0..s.len())
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();
            let f = |r: &[f64]| -> f64 {
                let fr = rc_fk_decode(r, &s).unwrap();
                let p = if apply_root {
                    fr.joint_positions.clone()
                } else {
                    remove_root_rotation(&fr)
                };
                p.iter()
                    .zip(&w)
                    .map(|(a, b)| crate::rotmath::dot(*a, *b))
                    .sum()
            };
            let g = rc_fk_backward(&raw, &s, &w, apply_root).unwrap();
            for k in 0..raw.len() {
                let h = 1e-5;
                let mut rp = raw.clone();
                rp[k] += h;
                let mut rm = raw.clone();
                rm[k] -= h;
                let fd = (f(&rp) - f(&rm)) / (2.0 * h);
                let denom = fd.abs().max(g[k].abs()).max(1e-6);
                assert!(
                    (fd - g[k]).abs() / denom < 1e-4 || (fd - g[k]).abs() < 1e-7,
                    "{k}: fd {fd} vs {}",
                    g[k]
                );
            }
        }
    }
}
