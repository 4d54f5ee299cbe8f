//! Raw numeric kernels shared by the tape and by the value-level APIs.
//!
//! Spectra produced by the temporal transforms use the layout
//! `[2, modes, batch, feat]`: real parts first, then imaginary parts. Keeping
//! `batch` inside `modes` lets the per-mode complex mixing run as one GEMM over
//! every batch row.

use std::f64::consts::PI;

/// `c = a·b + beta·c` for row-major matrices.
///
/// `a` is logically `m×k` (stored `k×m` when `a_t`), `b` is logically `k×n`
/// (stored `n×k` when `b_t`), `c` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: out length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices were length-checked above and the strides describe
    // dense row-major storage of exactly those extents.
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

/// `cos` and `sin` of `2π κ n / len` for `κ < modes`, `n < len`, row-major by
/// `κ`. The product `κ n` is reduced modulo `len` before scaling so large
/// indices stay exact.
#[derive(Debug, Clone)]
pub struct Twiddles {
    pub len: usize,
    pub modes: usize,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Twiddles {
    pub fn new(len: usize, modes: usize) -> Self {
        let mut cos = Vec::with_capacity(len * modes);
        let mut sin = Vec::with_capacity(len * modes);
        for kappa in 0..modes {
            for n in 0..len {
                let r = (kappa * n) % len;
                let theta = 2.0 * PI * r as f64 / len as f64;
                let (s, c) = exact_sin_cos(r, len, theta);
                cos.push(c);
                sin.push(s);
            }
        }
        Self {
            len,
            modes,
            cos,
            sin,
        }
    }

    #[inline]
    fn at(&self, kappa: usize, n: usize) -> (f64, f64) {
        let i = kappa * self.len + n;
        (self.cos[i], self.sin[i])
    }

    /// Weight of mode `κ` when reconstructing a real signal from its one-sided
    /// spectrum: 1 for DC and (even lengths) Nyquist, 2 otherwise.
    #[inline]
    pub fn hermitian_weight(&self, kappa: usize) -> f64 {
        if kappa == 0 || 2 * kappa == self.len {
            1.0
        } else {
            2.0
        }
    }
}

// Snap the angles that have exact values so that DC, Nyquist and quarter
// turns reconstruct without rounding residue.
fn exact_sin_cos(r: usize, len: usize, theta: f64) -> (f64, f64) {
    if r == 0 {
        (0.0, 1.0)
    } else if 2 * r == len {
        (0.0, -1.0)
    } else if 4 * r == len {
        (1.0, 0.0)
    } else if 4 * r == 3 * len {
        (-1.0, 0.0)
    } else {
        theta.sin_cos()
    }
}

/// Unnormalized forward real DFT along the middle axis of `src: [batch, len, feat]`,
/// keeping modes `0..modes`. Writes `out: [2, modes, batch, feat]`.
pub fn dft_forward(tw: &Twiddles, batch: usize, feat: usize, src: &[f64], out: &mut [f64]) {
    let (len, modes) = (tw.len, tw.modes);
    debug_assert_eq!(src.len(), batch * len * feat);
    debug_assert_eq!(out.len(), 2 * modes * batch * feat);
    out.iter_mut().for_each(|v| *v = 0.0);
    let im_base = modes * batch * feat;
    for kappa in 0..modes {
        for b in 0..batch {
            let o = (kappa * batch + b) * feat;
            for n in 0..len {
                let (c, s) = tw.at(kappa, n);
                let x = &src[(b * len + n) * feat..(b * len + n + 1) * feat];
                let (re, im) = out.split_at_mut(im_base);
                let re = &mut re[o..o + feat];
                let im = &mut im[o..o + feat];
                for f in 0..feat {
                    re[f] += c * x[f];
                    im[f] -= s * x[f];
                }
            }
        }
    }
}

/// Adjoint of [`dft_forward`]: accumulates into `grad_src`.
pub fn dft_adjoint(tw: &Twiddles, batch: usize, feat: usize, grad_out: &[f64], grad_src: &mut [f64]) {
    let (len, modes) = (tw.len, tw.modes);
    let im_base = modes * batch * feat;
    for kappa in 0..modes {
        for b in 0..batch {
            let o = (kappa * batch + b) * feat;
            let gre = &grad_out[o..o + feat];
            let gim = &grad_out[im_base + o..im_base + o + feat];
            for n in 0..len {
                let (c, s) = tw.at(kappa, n);
                let g = &mut grad_src[(b * len + n) * feat..(b * len + n + 1) * feat];
                for f in 0..feat {
                    g[f] += c * gre[f] - s * gim[f];
                }
            }
        }
    }
}

/// Inverse real DFT with `1/len` normalization from a one-sided spectrum
/// `[2, modes, batch, feat]`; modes above `modes` are treated as zero.
/// Imaginary parts of DC and Nyquist drop out. Writes `[batch, len, feat]`.
pub fn idft_forward(tw: &Twiddles, batch: usize, feat: usize, spec: &[f64], out: &mut [f64]) {
    let (len, modes) = (tw.len, tw.modes);
    out.iter_mut().for_each(|v| *v = 0.0);
    let im_base = modes * batch * feat;
    let inv = 1.0 / len as f64;
    for kappa in 0..modes {
        let w = tw.hermitian_weight(kappa) * inv;
        for b in 0..batch {
            let o = (kappa * batch + b) * feat;
            let re = &spec[o..o + feat];
            let im = &spec[im_base + o..im_base + o + feat];
            for n in 0..len {
                let (c, s) = tw.at(kappa, n);
                let (wc, ws) = (w * c, w * s);
                let y = &mut out[(b * len + n) * feat..(b * len + n + 1) * feat];
                for f in 0..feat {
                    y[f] += wc * re[f] - ws * im[f];
                }
            }
        }
    }
}

/// Adjoint of [`idft_forward`]: accumulates into `grad_spec`.
pub fn idft_adjoint(tw: &Twiddles, batch: usize, feat: usize, grad_out: &[f64], grad_spec: &mut [f64]) {
    let (len, modes) = (tw.len, tw.modes);
    let im_base = modes * batch * feat;
    let inv = 1.0 / len as f64;
    for kappa in 0..modes {
        let w = tw.hermitian_weight(kappa) * inv;
        for b in 0..batch {
            let o = (kappa * batch + b) * feat;
            for n in 0..len {
                let (c, s) = tw.at(kappa, n);
                let (wc, ws) = (w * c, w * s);
                let g = &grad_out[(b * len + n) * feat..(b * len + n + 1) * feat];
                let (gre, gim) = grad_spec.split_at_mut(im_base);
                let gre = &mut gre[o..o + feat];
                let gim = &mut gim[o..o + feat];
                for f in 0..feat {
                    gre[f] += wc * g[f];
                    gim[f] -= ws * g[f];
                }
            }
        }
    }
}

/// Extents of a per-mode complex channel mixing.
///
/// The spectrum is `[2, modes, rows, cin]`, the kernel halves are
/// `[modes, cout, cin]` and the output is `[2, modes, rows, cout]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixDims {
    pub modes: usize,
    pub rows: usize,
    pub cin: usize,
    pub cout: usize,
}

/// `out[i, r, j] = Σ_l K[i, j, l] · S[i, r, l]` in complex arithmetic.
pub fn mode_mix_forward(d: MixDims, spec: &[f64], kre: &[f64], kim: &[f64], out: &mut [f64]) {
    let s_half = d.modes * d.rows * d.cin;
    let o_half = d.modes * d.rows * d.cout;
    let k_blk = d.cout * d.cin;
    let (s_re, s_im) = spec.split_at(s_half);
    let (o_re, o_im) = out.split_at_mut(o_half);
    for i in 0..d.modes {
        let sr = &s_re[i * d.rows * d.cin..(i + 1) * d.rows * d.cin];
        let si = &s_im[i * d.rows * d.cin..(i + 1) * d.rows * d.cin];
        let kr = &kre[i * k_blk..(i + 1) * k_blk];
        let ki = &kim[i * k_blk..(i + 1) * k_blk];
        let or = &mut o_re[i * d.rows * d.cout..(i + 1) * d.rows * d.cout];
        let oi = &mut o_im[i * d.rows * d.cout..(i + 1) * d.rows * d.cout];
        let neg_ki: Vec<f64> = ki.iter().map(|v| -v).collect();
        // re = Sr·Krᵀ − Si·Kiᵀ ; im = Si·Krᵀ + Sr·Kiᵀ
        gemm(d.rows, d.cin, d.cout, sr, false, kr, true, 0.0, or);
        gemm(d.rows, d.cin, d.cout, si, false, &neg_ki, true, 1.0, or);
        gemm(d.rows, d.cin, d.cout, si, false, kr, true, 0.0, oi);
        gemm(d.rows, d.cin, d.cout, sr, false, ki, true, 1.0, oi);
    }
}

/// Backward of [`mode_mix_forward`]; each gradient buffer is optional and
/// accumulated into when present.
pub fn mode_mix_backward(
    d: MixDims,
    spec: &[f64],
    kre: &[f64],
    kim: &[f64],
    grad_out: &[f64],
    grad_spec: Option<&mut [f64]>,
    grad_kre: Option<&mut [f64]>,
    grad_kim: Option<&mut [f64]>,
) {
    let s_half = d.modes * d.rows * d.cin;
    let o_half = d.modes * d.rows * d.cout;
    let k_blk = d.cout * d.cin;
    let s_blk = d.rows * d.cin;
    let o_blk = d.rows * d.cout;
    let (g_re, g_im) = grad_out.split_at(o_half);
    let (s_re, s_im) = spec.split_at(s_half);

    if let Some(gs) = grad_spec {
        let (gs_re, gs_im) = gs.split_at_mut(s_half);
        for i in 0..d.modes {
            let gr = &g_re[i * o_blk..(i + 1) * o_blk];
            let gi = &g_im[i * o_blk..(i + 1) * o_blk];
            let kr = &kre[i * k_blk..(i + 1) * k_blk];
            let ki = &kim[i * k_blk..(i + 1) * k_blk];
            let neg_ki: Vec<f64> = ki.iter().map(|v| -v).collect();
            let sr = &mut gs_re[i * s_blk..(i + 1) * s_blk];
            // dSr = Gr·Kr + Gi·Ki ; dSi = −Gr·Ki + Gi·Kr
            gemm(d.rows, d.cout, d.cin, gr, false, kr, false, 1.0, sr);
            gemm(d.rows, d.cout, d.cin, gi, false, ki, false, 1.0, sr);
            let si = &mut gs_im[i * s_blk..(i + 1) * s_blk];
            gemm(d.rows, d.cout, d.cin, gr, false, &neg_ki, false, 1.0, si);
            gemm(d.rows, d.cout, d.cin, gi, false, kr, false, 1.0, si);
        }
    }
    if let Some(gk) = grad_kre {
        for i in 0..d.modes {
            let gr = &g_re[i * o_blk..(i + 1) * o_blk];
            let gi = &g_im[i * o_blk..(i + 1) * o_blk];
            let sr = &s_re[i * s_blk..(i + 1) * s_blk];
            let si = &s_im[i * s_blk..(i + 1) * s_blk];
            let k = &mut gk[i * k_blk..(i + 1) * k_blk];
            // dKr = Grᵀ·Sr + Giᵀ·Si
            gemm(d.cout, d.rows, d.cin, gr, true, sr, false, 1.0, k);
            gemm(d.cout, d.rows, d.cin, gi, true, si, false, 1.0, k);
        }
    }
    if let Some(gk) = grad_kim {
        for i in 0..d.modes {
            let gr = &g_re[i * o_blk..(i + 1) * o_blk];
            let gi = &g_im[i * o_blk..(i + 1) * o_blk];
            let sr = &s_re[i * s_blk..(i + 1) * s_blk];
            let neg_si: Vec<f64> = s_im[i * s_blk..(i + 1) * s_blk].iter().map(|v| -v).collect();
            let k = &mut gk[i * k_blk..(i + 1) * k_blk];
            // dKi = −Grᵀ·Si + Giᵀ·Sr
            gemm(d.cout, d.rows, d.cin, gr, true, &neg_si, false, 1.0, k);
            gemm(d.cout, d.rows, d.cin, gi, true, sr, false, 1.0, k);
        }
    }
}
