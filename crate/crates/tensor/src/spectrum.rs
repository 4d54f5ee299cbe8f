use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Complex array stored as paired real and imaginary buffers. The mode axis
/// is leading: element `(i, c)` lives at `i * channel_len + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    modes: usize,
    channels: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexSpectrum {
    pub fn new(modes: usize, channels: Vec<usize>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n = modes * channels.iter().product::<usize>();
        if re.len() != n || im.len() != n {
            let mut shape = vec![modes];
            shape.extend(&channels);
            return Err(TensorError::DataLength {
                shape,
                len: re.len().max(im.len()),
            });
        }
        Ok(Self {
            modes,
            channels,
            re,
            im,
        })
    }

    pub fn zeros(modes: usize, channels: Vec<usize>) -> Self {
        let n = modes * channels.iter().product::<usize>();
        Self {
            modes,
            channels,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn channel_len(&self) -> usize {
        self.channels.iter().product()
    }

    /// Full shape `[modes, channels...]`.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.modes];
        s.extend(&self.channels);
        s
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    pub fn get(&self, mode: usize, channel: usize) -> (f64, f64) {
        let i = mode * self.channel_len() + channel;
        (self.re[i], self.im[i])
    }

    /// Packs into the tape spectrum layout `[2, modes, 1, channel_len]`.
    pub fn to_packed(&self) -> Tensor {
        let mut d = self.re.clone();
        d.extend_from_slice(&self.im);
        Tensor::new(vec![2, self.modes, 1, self.channel_len()], d).expect("packed length")
    }

    /// Inverse of [`ComplexSpectrum::to_packed`] for any `[2, modes, rows, cols]`
    /// tensor; `channels` must multiply to `rows * cols`.
    pub fn from_packed(t: &Tensor, channels: Vec<usize>) -> Result<Self> {
        let s = t.shape();
        if s.len() != 4 || s[0] != 2 || s[2] * s[3] != channels.iter().product::<usize>() {
            return Err(TensorError::ShapeMismatch {
                op: "from_packed",
                lhs: s.to_vec(),
                rhs: channels,
            });
        }
        let half = t.len() / 2;
        Self::new(
            s[1],
            channels,
            t.data()[..half].to_vec(),
            t.data()[half..].to_vec(),
        )
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
