//! Equivariant temporal convolution: truncated real DFT along time, per-mode
//! complex channel mixing, inverse DFT and a residual update.
//!
//! The directional channels `Z = [x − CoM, v]` are mixed by complex scalars
//! only, so the three spatial coordinates never interact and any rotation
//! commutes with the layer.

use egno_tensor::kernels::{self, MixDims, Twiddles};
use egno_tensor::{Bound, ComplexSpectrum, ParamSet, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::egnn::{tensor_to_vec3s, vec3s_to_tensor, GraphLayout};
use crate::error::{CoreError, Result};
use crate::geometry::Vec3;

/// Which feature groups receive the spectral update. Masked groups pass
/// through the residual unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMask {
    pub include_h: bool,
    pub include_x: bool,
    pub include_v: bool,
}

impl Default for FeatureMask {
    fn default() -> Self {
        Self::all()
    }
}

impl FeatureMask {
    pub const fn all() -> Self {
        Self {
            include_h: true,
            include_x: true,
            include_v: true,
        }
    }

    pub const fn hx() -> Self {
        Self {
            include_v: false,
            ..Self::all()
        }
    }

    pub const fn h_only() -> Self {
        Self {
            include_h: true,
            include_x: false,
            include_v: false,
        }
    }

    pub const fn none() -> Self {
        Self {
            include_h: false,
            include_x: false,
            include_v: false,
        }
    }

    /// Number of active directional channels `m`.
    pub fn z_channels(&self) -> usize {
        self.include_x as usize + self.include_v as usize
    }

    pub fn is_empty(&self) -> bool {
        !self.include_h && self.z_channels() == 0
    }
}

fn check_mode_count(len: usize, modes: usize) -> Result<()> {
    if len == 0 {
        return Err(CoreError::InvalidConfig("sequence length must be at least 1".into()));
    }
    if modes == 0 || modes > len / 2 + 1 {
        return Err(CoreError::InvalidConfig(format!(
            "mode count {modes} outside 1..={} for length {len}",
            len / 2 + 1
        )));
    }
    Ok(())
}

/// One-sided DFT of `seq` (`[P, channels...]`) along the leading axis,
/// unnormalized, keeping modes `0..modes`.
pub fn dft_truncate(seq: &Tensor, modes: usize) -> Result<ComplexSpectrum> {
    let len = *seq.shape().first().unwrap_or(&0);
    check_mode_count(len, modes)?;
    let channels = seq.shape()[1..].to_vec();
    let c: usize = channels.iter().product();
    let tw = Twiddles::new(len, modes);
    let mut out = vec![0.0; 2 * modes * c];
    kernels::dft_forward(&tw, 1, c, seq.data(), &mut out);
    let im = out.split_off(modes * c);
    Ok(ComplexSpectrum::new(modes, channels, out, im)?)
}

/// Inverse of [`dft_truncate`] onto `len` samples with `1/len` scaling;
/// modes beyond those stored are treated as zero.
pub fn idft_pad(spec: &ComplexSpectrum, len: usize) -> Result<Tensor> {
    check_mode_count(len, spec.modes())?;
    let c = spec.channel_len();
    let tw = Twiddles::new(len, spec.modes());
    let mut packed = spec.re().to_vec();
    packed.extend_from_slice(spec.im());
    let mut out = vec![0.0; len * c];
    kernels::idft_forward(&tw, 1, c, &packed, &mut out);
    let mut shape = vec![len];
    shape.extend(spec.channels());
    Ok(Tensor::new(shape, out)?)
}

/// Complex spectral weights: `m_h` is `I × [k, k]`, `m_z` is `I × [m, m]`,
/// both indexed `[mode, out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierKernel {
    pub m_h: ComplexSpectrum,
    pub m_z: ComplexSpectrum,
}

impl FourierKernel {
    pub fn new(m_h: ComplexSpectrum, m_z: ComplexSpectrum) -> Result<Self> {
        for (name, s) in [("M_h", &m_h), ("M_Z", &m_z)] {
            let c = s.channels();
            if c.len() != 2 || c[0] != c[1] {
                return Err(CoreError::Shape(format!("{name} channels {c:?} are not square")));
            }
        }
        if m_h.modes() != m_z.modes() {
            return Err(CoreError::Shape(format!(
                "M_h has {} modes but M_Z has {}",
                m_h.modes(),
                m_z.modes()
            )));
        }
        Ok(Self { m_h, m_z })
    }

    pub fn modes(&self) -> usize {
        self.m_h.modes()
    }

    pub fn hidden(&self) -> usize {
        self.m_h.channels()[0]
    }

    pub fn z_channels(&self) -> usize {
        self.m_z.channels()[0]
    }

    pub fn identity(modes: usize, hidden: usize, m: usize) -> Self {
        let eye = |w: usize| {
            let mut s = ComplexSpectrum::zeros(modes, vec![w, w]);
            for i in 0..modes {
                for j in 0..w {
                    s.re_mut()[(i * w + j) * w + j] = 1.0;
                }
            }
            s
        };
        Self {
            m_h: eye(hidden),
            m_z: eye(m),
        }
    }

    pub fn zeros(modes: usize, hidden: usize, m: usize) -> Self {
        Self {
            m_h: ComplexSpectrum::zeros(modes, vec![hidden, hidden]),
            m_z: ComplexSpectrum::zeros(modes, vec![m, m]),
        }
    }

    /// Entries with real and imaginary parts `~ N(0, 1/(I·width))`.
    pub fn random<R: Rng>(modes: usize, hidden: usize, m: usize, rng: &mut R) -> Self {
        let mut draw = |w: usize| {
            let n = modes * w * w;
            let d = Normal::new(0.0, (1.0 / (modes * w.max(1)) as f64).sqrt()).expect("positive std");
            let re = (0..n).map(|_| d.sample(rng)).collect();
            let im = (0..n).map(|_| d.sample(rng)).collect();
            ComplexSpectrum::new(modes, vec![w, w], re, im).expect("kernel length")
        };
        let m_h = draw(hidden);
        let m_z = draw(m);
        Self { m_h, m_z }
    }

    pub fn scale(&mut self, s: f64) {
        for spec in [&mut self.m_h, &mut self.m_z] {
            spec.re_mut().iter_mut().for_each(|w| *w *= s);
            spec.im_mut().iter_mut().for_each(|w| *w *= s);
        }
    }
}

fn mix_value(kernel: &ComplexSpectrum, spec_re: &[f64], spec_im: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>) {
    let modes = kernel.modes();
    let (cout, cin) = (kernel.channels()[0], kernel.channels()[1]);
    let mut packed = spec_re.to_vec();
    packed.extend_from_slice(spec_im);
    let mut out = vec![0.0; 2 * modes * rows * cout];
    let dims = MixDims {
        modes,
        rows,
        cin,
        cout,
    };
    kernels::mode_mix_forward(dims, &packed, kernel.re(), kernel.im(), &mut out);
    let im = out.split_off(modes * rows * cout);
    (out, im)
}

/// Mode-wise products: `spec_h` is `I × [k]`, `spec_z` is `I × [m, 3]`. Each
/// spatial coordinate of `Z` is mixed by the same complex scalars.
pub fn fourier_kernel_apply(
    spec_h: &ComplexSpectrum,
    spec_z: &ComplexSpectrum,
    kernel: &FourierKernel,
) -> Result<(ComplexSpectrum, ComplexSpectrum)> {
    let (i, k, m) = (kernel.modes(), kernel.hidden(), kernel.z_channels());
    if spec_h.modes() != i || spec_h.channels() != [k] {
        return Err(CoreError::Shape(format!(
            "h spectrum {:?} does not match kernel ({i} modes, width {k})",
            spec_h.shape()
        )));
    }
    if spec_z.modes() != i || spec_z.channels() != [m, 3] {
        return Err(CoreError::Shape(format!(
            "Z spectrum {:?} does not match kernel ({i} modes, {m} channels × 3)",
            spec_z.shape()
        )));
    }
    let (hre, him) = mix_value(&kernel.m_h, spec_h.re(), spec_h.im(), 1);
    // [I, m, 3] → [I, 3, m] so channels are the contiguous axis
    let transpose = |src: &[f64], a: usize, b: usize| {
        let mut dst = vec![0.0; src.len()];
        for mode in 0..i {
            for r in 0..a {
                for c in 0..b {
                    dst[mode * a * b + c * a + r] = src[mode * a * b + r * b + c];
                }
            }
        }
        dst
    };
    let (zre, zim) = mix_value(
        &kernel.m_z,
        &transpose(spec_z.re(), m, 3),
        &transpose(spec_z.im(), m, 3),
        3,
    );
    Ok((
        ComplexSpectrum::new(i, vec![k], hre, him)?,
        ComplexSpectrum::new(i, vec![m, 3], transpose(&zre, 3, m), transpose(&zim, 3, m))?,
    ))
}

/// Parameter names and hyperparameters of one temporal convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConv {
    pub name: String,
    pub hidden: usize,
    pub modes: usize,
    pub mask: FeatureMask,
    pub norm_gate: bool,
}

/// Kernel tensors bound on a tape, `[modes, out, in]` each.
#[derive(Clone, Copy)]
pub struct KernelVars<'t> {
    pub h: Option<(Var<'t>, Var<'t>)>,
    pub z: Option<(Var<'t>, Var<'t>)>,
}

impl TemporalConv {
    pub fn new(name: &str, hidden: usize, modes: usize, mask: FeatureMask, norm_gate: bool) -> Self {
        Self {
            name: name.to_string(),
            hidden,
            modes,
            mask,
            norm_gate,
        }
    }

    fn names(&self, group: &str) -> (String, String) {
        (format!("{}.{group}.re", self.name), format!("{}.{group}.im", self.name))
    }

    /// Random kernel with every entry multiplied by `scale`.
    pub fn init<R: Rng>(&self, params: &mut ParamSet, scale: f64, rng: &mut R) {
        let mut k = FourierKernel::random(self.modes, self.hidden, self.mask.z_channels(), rng);
        k.scale(scale);
        self.store(params, &k);
    }

    pub fn init_zero(&self, params: &mut ParamSet) {
        self.store(params, &FourierKernel::zeros(self.modes, self.hidden, self.mask.z_channels()));
    }

    /// Writes the parts of `kernel` that the mask uses.
    pub fn store(&self, params: &mut ParamSet, kernel: &FourierKernel) {
        let put = |params: &mut ParamSet, (re, im): (String, String), s: &ComplexSpectrum| {
            let shape = s.shape();
            params.insert(re, Tensor::new(shape.clone(), s.re().to_vec()).expect("kernel shape"));
            params.insert(im, Tensor::new(shape, s.im().to_vec()).expect("kernel shape"));
        };
        if self.mask.include_h {
            put(params, self.names("mh"), &kernel.m_h);
        }
        if self.mask.z_channels() > 0 {
            put(params, self.names("mz"), &kernel.m_z);
        }
    }

    pub fn bind<'t>(&self, p: &Bound<'t>) -> Result<KernelVars<'t>> {
        let get = |(re, im): (String, String)| -> Result<(Var<'t>, Var<'t>)> { Ok((p.get(&re)?, p.get(&im)?)) };
        Ok(KernelVars {
            h: if self.mask.include_h { Some(get(self.names("mh"))?) } else { None },
            z: if self.mask.z_channels() > 0 { Some(get(self.names("mz"))?) } else { None },
        })
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        layout: &GraphLayout,
        steps: usize,
        h: Var<'t>,
        x: Var<'t>,
        v: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
        if self.mask.is_empty() {
            return Ok((h, x, v));
        }
        self.apply(self.bind(p)?, layout, steps, h, x, v)
    }

    /// Rows are ordered `(batch, step, node)`; `layout` groups each
    /// `(batch, step)` slice as one graph.
    pub fn apply<'t>(
        &self,
        kern: KernelVars<'t>,
        layout: &GraphLayout,
        steps: usize,
        h: Var<'t>,
        x: Var<'t>,
        v: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
        if steps < 2 {
            return Err(CoreError::InvalidConfig(format!(
                "temporal convolution needs at least 2 time steps, got {steps}"
            )));
        }
        if !layout.graphs().is_multiple_of(steps) {
            return Err(CoreError::Shape(format!(
                "{} graphs do not split into {steps} steps",
                layout.graphs()
            )));
        }
        let batch = layout.graphs() / steps;
        let n = layout.nodes();
        let rows = layout.rows();
        let modes = self.modes;
        check_mode_count(steps, modes)?;

        let h_out = match kern.h {
            Some((kre, kim)) => {
                let k = h.shape()[1];
                let spec = h
                    .reshape(vec![batch, steps, n * k])?
                    .temporal_dft(modes)?
                    .reshape(vec![2, modes, batch * n, k])?
                    .mode_mix(kre, kim)?
                    .reshape(vec![2, modes, batch, n * k])?;
                let dh = spec.temporal_idft(steps)?.reshape(vec![rows, k])?;
                h.add(dh.silu())?
            }
            None => h,
        };

        let (x_out, v_out) = match kern.z {
            Some((kre, kim)) => {
                let m = self.mask.z_channels();
                let group = layout.group();
                let com = x
                    .scatter_add_rows(group, layout.graphs())?
                    .scale(1.0 / n as f64)
                    .gather_rows(group)?;
                let mut chans = Vec::with_capacity(2);
                if self.mask.include_x {
                    chans.push(x.sub(com)?.reshape(vec![rows * 3, 1])?);
                }
                if self.mask.include_v {
                    chans.push(v.reshape(vec![rows * 3, 1])?);
                }
                let z = x.tape().concat_cols(&chans)?;
                let spec = z
                    .reshape(vec![batch, steps, n * 3 * m])?
                    .temporal_dft(modes)?
                    .reshape(vec![2, modes, batch * n * 3, m])?
                    .mode_mix(kre, kim)?
                    .reshape(vec![2, modes, batch, n * 3 * m])?;
                let dz = spec.temporal_idft(steps)?.reshape(vec![rows * 3, m])?;
                let mut col = 0;
                let mut update = |base: Var<'t>, on: bool| -> Result<Var<'t>> {
                    if !on {
                        return Ok(base);
                    }
                    let mut d = dz.slice_cols(col, 1)?.reshape(vec![rows, 3])?;
                    col += 1;
                    if self.norm_gate {
                        d = d.mul_col(d.row_norm().silu())?;
                    }
                    Ok(base.add(d)?)
                };
                let xo = update(x, self.mask.include_x)?;
                let vo = update(v, self.mask.include_v)?;
                (xo, vo)
            }
            None => (x, v),
        };
        Ok((h_out, x_out, v_out))
    }
}

/// Per-step node states `P × N`.
pub type Sequence = Vec<Vec<Vec3>>;

/// Applies the layer to one graph's length-`P` sequence. `h_seq` is
/// `[P, N, k]`.
pub fn temporal_conv_forward(
    h_seq: &Tensor,
    x_seq: &[Vec<Vec3>],
    v_seq: &[Vec<Vec3>],
    kernel: &FourierKernel,
    mask: FeatureMask,
    norm_gate: bool,
) -> Result<(Tensor, Sequence, Sequence)> {
    let s = h_seq.shape();
    if s.len() != 3 {
        return Err(CoreError::Shape(format!("h sequence must be [P, N, k], got {s:?}")));
    }
    let (steps, n, k) = (s[0], s[1], s[2]);
    if x_seq.len() != steps || v_seq.len() != steps || x_seq.iter().chain(v_seq).any(|f| f.len() != n) {
        return Err(CoreError::Shape(format!("x and v sequences must be {steps} × {n}")));
    }
    if kernel.hidden() != k || kernel.z_channels() != mask.z_channels() {
        return Err(CoreError::Shape(format!(
            "kernel widths (h {}, Z {}) do not match features (h {k}, Z {})",
            kernel.hidden(),
            kernel.z_channels(),
            mask.z_channels()
        )));
    }
    if steps < 2 {
        return Err(CoreError::InvalidConfig("temporal convolution needs at least 2 time steps, got 1".into()));
    }
    let layer = TemporalConv::new("conv", k, kernel.modes(), mask, norm_gate);
    let mut params = ParamSet::new();
    layer.store(&mut params, kernel);
    let layout = GraphLayout::new(n, &vec![&[][..]; steps])?;
    let tape = Tape::new();
    let p = tape.bind(&params);
    let flat = |seq: &[Vec<Vec3>]| vec3s_to_tensor(&seq.concat());
    let (h, x, v) = layer.forward(
        &p,
        &layout,
        steps,
        tape.constant(h_seq.clone().reshape(vec![steps * n, k])?),
        tape.constant(flat(x_seq)),
        tape.constant(flat(v_seq)),
    )?;
    let split = |t: &Tensor| -> Sequence { tensor_to_vec3s(t).chunks(n).map(|c| c.to_vec()).collect() };
    let out = (
        h.to_tensor().reshape(vec![steps, n, k])?,
        split(&x.to_tensor()),
        split(&v.to_tensor()),
    );
    Ok(out)
}
