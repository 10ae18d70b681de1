//! 1-D convolution kernels on `[C, T]` blocks via im2col and `dgemm`.

/// `c = a · b + beta · c` where `a` is logically `[m, k]` and `b` is `[k, n]`.
/// `ta`/`tb` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices cover the strided extents computed above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv_out_len(t: usize, k: usize, s: usize, p: usize) -> usize {
    (t + 2 * p - k) / s + 1
}

pub fn conv_t_out_len(t: usize, k: usize, s: usize, p: usize) -> usize {
    (t - 1) * s + k - 2 * p
}

fn im2col(
    x: &[f64],
    cin: usize,
    t: usize,
    k: usize,
    s: usize,
    p: usize,
    tout: usize,
    cols: &mut [f64],
) {
    for ci in 0..cin {
        let xr = &x[ci * t..(ci + 1) * t];
        for m in 0..k {
            let row = &mut cols[(ci * k + m) * tout..(ci * k + m + 1) * tout];
            for (o, r) in row.iter_mut().enumerate() {
                let i = (o * s + m) as isize - p as isize;
                *r = if i >= 0 && (i as usize) < t {
                    xr[i as usize]
                } else {
                    0.0
                };
            }
        }
    }
}

fn col2im(
    cols: &[f64],
    cin: usize,
    t: usize,
    k: usize,
    s: usize,
    p: usize,
    tout: usize,
    gx: &mut [f64],
) {
    for ci in 0..cin {
        for m in 0..k {
            let row = &cols[(ci * k + m) * tout..(ci * k + m + 1) * tout];
            for (o, r) in row.iter().enumerate() {
                let i = (o * s + m) as isize - p as isize;
                if i >= 0 && (i as usize) < t {
                    gx[ci * t + i as usize] += r;
                }
            }
        }
    }
}

/// `y[co, o] = Σ w[co, ci, m] · x[ci, o·s − p + m]`, `w` shaped `[cout, cin, k]`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_forward(
    x: &[f64],
    cin: usize,
    t: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    s: usize,
    p: usize,
    y: &mut [f64],
) {
    let tout = conv_out_len(t, k, s, p);
    if k == 1 && s == 1 && p == 0 {
        gemm(cout, cin, tout, w, false, x, false, 0.0, y);
        return;
    }
    let mut cols = vec![0.0; cin * k * tout];
    im2col(x, cin, t, k, s, p, tout, &mut cols);
    gemm(cout, cin * k, tout, w, false, &cols, false, 0.0, y);
}

/// Accumulates `gx` and `gw` for [`conv1d_forward`].
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    x: &[f64],
    cin: usize,
    t: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    s: usize,
    p: usize,
    gy: &[f64],
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
) {
    let tout = conv_out_len(t, k, s, p);
    let direct = k == 1 && s == 1 && p == 0;
    let cols = if direct {
        None
    } else {
        let mut c = vec![0.0; cin * k * tout];
        im2col(x, cin, t, k, s, p, tout, &mut c);
        Some(c)
    };
    if let Some(gw) = gw {
        let src = cols.as_deref().unwrap_or(x);
        gemm(cout, tout, cin * k, gy, false, src, true, 1.0, gw);
    }
    if let Some(gx) = gx {
        if direct {
            gemm(cin, cout, tout, w, true, gy, false, 1.0, gx);
        } else {
            let mut gcols = vec![0.0; cin * k * tout];
            gemm(cin * k, cout, tout, w, true, gy, false, 0.0, &mut gcols);
            col2im(&gcols, cin, t, k, s, p, tout, gx);
        }
    }
}

/// Transposed convolution, `w` shaped `[cin, cout, k]`:
/// `y[co, i·s − p + m] += w[ci, co, m] · x[ci, i]`.
#[allow(clippy::too_many_arguments)]
pub fn conv_t1d_forward(
    x: &[f64],
    cin: usize,
    t: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    s: usize,
    p: usize,
    y: &mut [f64],
) {
    let tout = conv_t_out_len(t, k, s, p);
    let mut cols = vec![0.0; cout * k * t];
    gemm(cout * k, cin, t, w, true, x, false, 0.0, &mut cols);
    y[..cout * tout].iter_mut().for_each(|v| *v = 0.0);
    for co in 0..cout {
        for m in 0..k {
            let row = &cols[(co * k + m) * t..(co * k + m + 1) * t];
            for (i, r) in row.iter().enumerate() {
                let o = (i * s + m) as isize - p as isize;
                if o >= 0 && (o as usize) < tout {
                    y[co * tout + o as usize] += r;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv_t1d_backward(
    x: &[f64],
    cin: usize,
    t: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    s: usize,
    p: usize,
    gy: &[f64],
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
) {
    let tout = conv_t_out_len(t, k, s, p);
    let mut gcols = vec![0.0; cout * k * t];
    for co in 0..cout {
        for m in 0..k {
            let row = &mut gcols[(co * k + m) * t..(co * k + m + 1) * t];
            for (i, r) in row.iter_mut().enumerate() {
                let o = (i * s + m) as isize - p as isize;
                if o >= 0 && (o as usize) < tout {
                    *r = gy[co * tout + o as usize];
                }
            }
        }
    }
    if let Some(gx) = gx {
        gemm(cin, cout * k, t, w, false, &gcols, false, 1.0, gx);
    }
    if let Some(gw) = gw {
        gemm(cin, t, cout * k, x, false, &gcols, true, 1.0, gw);
    }
}
