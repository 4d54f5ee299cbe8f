//! Named dense layers over a [`ParamSet`].

use egno_tensor::{Bound, ParamSet, Tensor, Var};
use rand::Rng;

use crate::error::Result;

/// `y = x W + b` with `W: [fan_in, fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: String,
    pub bias: Option<String>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(prefix: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        Self {
            weight: format!("{prefix}.w"),
            bias: bias.then(|| format!("{prefix}.b")),
            fan_in,
            fan_out,
        }
    }

    /// Uniform `±1/√fan_in` for weights and bias.
    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        let bound = 1.0 / (self.fan_in as f64).sqrt();
        self.init_uniform(params, rng, bound);
    }

    pub fn init_uniform<R: Rng>(&self, params: &mut ParamSet, rng: &mut R, bound: f64) {
        params.insert(
            self.weight.clone(),
            Tensor::from_fn(vec![self.fan_in, self.fan_out], |_| rng.random_range(-bound..=bound)),
        );
        if let Some(b) = &self.bias {
            params.insert(b.clone(), Tensor::from_fn(vec![self.fan_out], |_| rng.random_range(-bound..=bound)));
        }
    }

    pub fn init_zero(&self, params: &mut ParamSet) {
        params.insert(self.weight.clone(), Tensor::zeros(vec![self.fan_in, self.fan_out]));
        if let Some(b) = &self.bias {
            params.insert(b.clone(), Tensor::zeros(vec![self.fan_out]));
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let y = x.matmul(p.get(&self.weight)?)?;
        Ok(match &self.bias {
            Some(b) => y.add_bias(p.get(b)?)?,
            None => y,
        })
    }
}

/// Two linear layers with a SiLU in between; `act_out` adds a trailing SiLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
    pub act_out: bool,
}

impl Mlp {
    pub fn new(prefix: &str, fan_in: usize, hidden: usize, fan_out: usize, act_out: bool) -> Self {
        Self {
            first: Linear::new(&format!("{prefix}.0"), fan_in, hidden, true),
            second: Linear::new(&format!("{prefix}.1"), hidden, fan_out, true),
            act_out,
        }
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        self.first.init(params, rng);
        self.second.init(params, rng);
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let y = self.second.forward(p, self.first.forward(p, x)?.silu())?;
        Ok(if self.act_out { y.silu() } else { y })
    }
}
