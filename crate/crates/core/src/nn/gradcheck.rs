use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Worst coordinate of an analytic-vs-central-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative error floor: differences are divided by
/// `max(|analytic|, |numeric|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares `analytic` against `(f(x + εeₖ) − f(x − εeₖ)) / 2ε` on the given
/// coordinates (all of them when `coords` is empty).
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    coords: &[usize],
) -> GradCheckReport {
    let all: Vec<usize>;
    let coords = if coords.is_empty() {
        all = (0..x.len()).collect();
        &all[..]
    } else {
        coords
    };
    let mut xp = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    for &k in coords {
        let orig = xp[k];
        xp[k] = orig + eps;
        let fp = f(&xp);
        xp[k] = orig - eps;
        let fm = f(&xp);
        xp[k] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > report.max_rel_error || !rel.is_finite() {
            report = GradCheckReport {
                max_rel_error: if rel.is_finite() { rel } else { f64::INFINITY },
                worst_index: k,
                analytic: a,
                numeric,
                checked: coords.len(),
            };
        }
    }
    report
}

/// Up to `k` distinct coordinates out of `n`, sorted, reproducible.
pub fn sample_coords(n: usize, k: usize, seed: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, n, k).into_vec();
    v.sort_unstable();
    v
}
