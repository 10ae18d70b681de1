use super::mat::{cross, dot, norm, scale, sub, Mat3, Vec3};
use crate::error::{Error, Result};

/// Two pre-orthogonalisation 3-vectors; they become the first two columns of
/// the decoded rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub const IDENTITY: Rotation6D = Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn first(&self) -> Vec3 {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn second(&self) -> Vec3 {
        [self.0[3], self.0[4], self.0[5]]
    }
}

const DEGENERATE_EPS: f64 = 1e-12;

struct GramSchmidt {
    b1: Vec3,
    b2: Vec3,
    b3: Vec3,
    n1: f64,
    nu: f64,
    proj: f64,
}

fn gram_schmidt(r6: &Rotation6D) -> Result<GramSchmidt> {
    let (a1, a2) = (r6.first(), r6.second());
    if r6.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("6D rotation"));
    }
    let n1 = norm(a1);
    if n1 < DEGENERATE_EPS {
        return Err(Error::Degenerate6d(format!("first vector has norm {n1:e}")));
    }
    let b1 = scale(a1, 1.0 / n1);
    let proj = dot(b1, a2);
    let u = sub(a2, scale(b1, proj));
    let nu = norm(u);
    if nu < DEGENERATE_EPS * norm(a2).max(1.0) {
        return Err(Error::Degenerate6d(format!(
            "vectors are (nearly) parallel or second is zero: residual norm {nu:e}"
        )));
    }
    let b2 = scale(u, 1.0 / nu);
    let b3 = cross(b1, b2);
    Ok(GramSchmidt {
        b1,
        b2,
        b3,
        n1,
        nu,
        proj,
    })
}

/// Gram-Schmidt decode: normalised first vector, orthogonalised second, cross
/// product third, as matrix columns.
pub fn sixd_to_matrix(r6: &Rotation6D) -> Result<Mat3> {
    let gs = gram_schmidt(r6)?;
    Ok(Mat3::from_cols(gs.b1, gs.b2, gs.b3))
}

/// First two columns of `r`.
pub fn matrix_to_sixd(r: &Mat3) -> Rotation6D {
    let (c0, c1) = (r.col(0), r.col(1));
    Rotation6D([c0[0], c0[1], c0[2], c1[0], c1[1], c1[2]])
}

/// Vector-Jacobian product of [`sixd_to_matrix`]: given `∂L/∂R` returns `∂L/∂r6`.
pub fn sixd_to_matrix_backward(r6: &Rotation6D, grad_r: &Mat3) -> Result<[f64; 6]> {
    let gs = gram_schmidt(r6)?;
    let a2 = r6.second();
    let mut g1 = grad_r.col(0);
    let mut g2 = grad_r.col(1);
    let g3 = grad_r.col(2);
    // b3 = b1 × b2
    let t = cross(gs.b2, g3);
    g1 = [g1[0] + t[0], g1[1] + t[1], g1[2] + t[2]];
    let t = cross(g3, gs.b1);
    g2 = [g2[0] + t[0], g2[1] + t[1], g2[2] + t[2]];
    // b2 = u/|u|
    let gu = scale(sub(g2, scale(gs.b2, dot(gs.b2, g2))), 1.0 / gs.nu);
    // u = a2 − (b1·a2) b1
    let ga2 = sub(gu, scale(gs.b1, dot(gs.b1, gu)));
    let b1_gu = dot(gs.b1, gu);
    let gb1 = [
        g1[0] - gs.proj * gu[0] - b1_gu * a2[0],
        g1[1] - gs.proj * gu[1] - b1_gu * a2[1],
        g1[2] - gs.proj * gu[2] - b1_gu * a2[2],
    ];
    // b1 = a1/|a1|
    let ga1 = scale(sub(gb1, scale(gs.b1, dot(gs.b1, gb1))), 1.0 / gs.n1);
    Ok([ga1[0], ga1[1], ga1[2], ga2[0], ga2[1], ga2[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Standalone orthogonalisation written without the shared helpers.
    fn oracle(r: [f64; 6]) -> [[f64; 3]; 3] {
        let l1 = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        let x = [r[0] / l1, r[1] / l1, r[2] / l1];
        let d = x[0] * r[3] + x[1] * r[4] + x[2] * r[5];
        let mut y = [r[3] - d * x[0], r[4] - d * x[1], r[5] - d * x[2]];
        let l2 = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        y = [y[0] / l2, y[1] / l2, y[2] / l2];
        let z = [
            x[1] * y[2] - x[2] * y[1],
            x[2] * y[0] - x[0] * y[2],
            x[0] * y[1] - x[1] * y[0],
        ];
        [[x[0], y[0], z[0]], [x[1], y[1], z[1]], [x[2], y[2], z[2]]]
    }

    #[test]
    fn identity_and_scale_invariance() {
        let r = sixd_to_matrix(&Rotation6D::IDENTITY).unwrap();
        assert_eq!(r, Mat3::IDENTITY);
        let r = sixd_to_matrix(&Rotation6D([2.0, 0.0, 0.0, 0.0, 3.0, 0.0])).unwrap();
        assert!(r.sub(&Mat3::IDENTITY).frobenius() < 1e-15);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(
            sixd_to_matrix(&Rotation6D([0.0; 6])),
            Err(Error::Degenerate6d(_))
        ));
        assert!(matches!(
            sixd_to_matrix(&Rotation6D([1.0, 2.0, 3.0, 2.0, 4.0, 6.0])),
            Err(Error::Degenerate6d(_))
        ));
    }

    #[test]
    fn matches_oracle_and_is_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mut v = [0.0; 6];
            v.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
            let r = sixd_to_matrix(&Rotation6D(v)).unwrap();
            assert!(r.sub(&Mat3(oracle(v))).frobenius() < 1e-10);
            assert!(r.orthonormality_error() < 1e-10);
            assert!((r.det() - 1.0).abs() < 1e-10);
            // Column round trip.
            let back = sixd_to_matrix(&matrix_to_sixd(&r)).unwrap();
            assert!(back.sub(&r).frobenius() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut v = [0.0; 6];
            v.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
            let mut w = Mat3::ZERO;
            w.0.iter_mut()
                .flatten()
                .for_each(|x| *x = rng.gen_range(-1.0..1.0));
            let f = |v: [f64; 6]| sixd_to_matrix(&Rotation6D(v)).unwrap().inner(&w);
            let g = sixd_to_matrix_backward(&Rotation6D(v), &w).unwrap();
            for k in 0..6 {
                let h = 1e-6;
                let mut vp = v;
                vp[k] += h;
                let mut vm = v;
                vm[k] -= h;
                let fd = (f(vp) - f(vm)) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }
}
