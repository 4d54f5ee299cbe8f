//! EGNO assembly: repeat the input state over the time grid, add time
//! embeddings, run blocks of (temporal convolution → EGNN layer) and decode
//! every grid step in one pass.

use std::sync::Arc;

use egno_tensor::{Bound, ParamSet, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::egnn::{EgnnLayer, GraphLayout};
use crate::error::{CoreError, Result};
use crate::geometry::{Frame, GeometricGraph};
use crate::grid::{Discretization, TimeGrid};
use crate::nn::Linear;
use crate::temporal::{FeatureMask, TemporalConv};

/// `emb_{2j} = sin(i / 10000^{2j/d})`, `emb_{2j+1} = cos(i / 10000^{2j/d})`.
pub fn time_embedding(index: f64, d_emb: usize) -> Result<Vec<f64>> {
    if !d_emb.is_multiple_of(2) {
        return Err(CoreError::InvalidConfig(format!("time embedding width must be even, got {d_emb}")));
    }
    let mut out = Vec::with_capacity(d_emb);
    for j in 0..d_emb / 2 {
        let freq = 10000f64.powf(2.0 * j as f64 / d_emb as f64);
        let a = index / freq;
        out.push(a.sin());
        out.push(a.cos());
    }
    Ok(out)
}

/// Where predicted frames are read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    /// All grid steps decoded in parallel from the last layer.
    #[default]
    Final,
    /// One step per layer from the last `P` layers of a single-state pass.
    PerLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgnoConfig {
    pub layers: usize,
    pub hidden: usize,
    pub modes: usize,
    pub p_steps: usize,
    /// 0 disables the time embedding.
    pub time_emb: usize,
    pub discretization: Discretization,
    pub delta: usize,
    pub mask: FeatureMask,
    /// Multiplies the `N(0, 1/(I·width))` spectral kernel draw at init.
    pub kernel_init_scale: f64,
    pub norm_gate: bool,
    pub supervise_velocity: bool,
    pub readout: Readout,
}

impl Default for EgnoConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden: 64,
            modes: 2,
            p_steps: 5,
            time_emb: 32,
            discretization: Discretization::Uniform,
            delta: 1,
            mask: FeatureMask::all(),
            kernel_init_scale: 0.1,
            norm_gate: false,
            supervise_velocity: false,
            readout: Readout::Final,
        }
    }
}

impl EgnoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidConfig(m));
        if self.layers == 0 || self.hidden == 0 || self.p_steps == 0 || self.delta == 0 {
            return bad("layers, hidden, p_steps and delta must be positive".into());
        }
        if !(self.kernel_init_scale >= 0.0 && self.kernel_init_scale.is_finite()) {
            return bad(format!("kernel_init_scale must be finite and ≥ 0, got {}", self.kernel_init_scale));
        }
        if !self.time_emb.is_multiple_of(2) {
            return bad(format!("time_emb must be even, got {}", self.time_emb));
        }
        if !self.mask.is_empty() {
            if self.readout == Readout::PerLayer {
                return bad("per-layer readout has no temporal axis to convolve".into());
            }
            if self.p_steps < 2 {
                return bad("temporal convolution needs p_steps ≥ 2".into());
            }
            if self.modes == 0 || self.modes > self.p_steps / 2 + 1 {
                return bad(format!(
                    "modes = {} must lie in 1..={} for p_steps = {}",
                    self.modes,
                    self.p_steps / 2 + 1,
                    self.p_steps
                ));
            }
        }
        if self.readout == Readout::PerLayer && self.layers < self.p_steps {
            return bad(format!(
                "per-layer readout needs layers ≥ p_steps, got {} < {}",
                self.layers, self.p_steps
            ));
        }
        Ok(())
    }
}

/// Inputs of several graphs with equal node counts.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    size: usize,
    nodes: usize,
    k_raw: usize,
    attr_dim: usize,
    h: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
    edges: Vec<Vec<(usize, usize)>>,
    attr: Vec<Vec<f64>>,
}

impl GraphBatch {
    pub fn new(graphs: &[&GeometricGraph]) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| CoreError::InvalidConfig("empty batch".into()))?;
        let (nodes, k_raw, attr_dim) = (first.num_nodes(), first.feature_dim(), first.edge_attr_dim());
        let mut b = Self {
            size: graphs.len(),
            nodes,
            k_raw,
            attr_dim,
            h: Vec::with_capacity(graphs.len() * nodes * k_raw),
            x: Vec::with_capacity(graphs.len() * nodes * 3),
            v: Vec::with_capacity(graphs.len() * nodes * 3),
            edges: Vec::with_capacity(graphs.len()),
            attr: Vec::with_capacity(graphs.len()),
        };
        for g in graphs {
            if (g.num_nodes(), g.feature_dim(), g.edge_attr_dim()) != (nodes, k_raw, attr_dim) {
                return Err(CoreError::Shape(format!(
                    "batch mixes graphs of shape (N {}, k {}, a {}) and (N {nodes}, k {k_raw}, a {attr_dim})",
                    g.num_nodes(),
                    g.feature_dim(),
                    g.edge_attr_dim()
                )));
            }
            b.h.extend_from_slice(g.h());
            b.x.extend(g.x().iter().flatten());
            b.v.extend(g.v().iter().flatten());
            b.edges.push(g.edges().to_vec());
            b.attr.push(g.edge_attr().to_vec());
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }
}

/// Stacks per-sample target frames into `[B·S·N, 3]` tensors for `x` and
/// `v`, rows ordered `(batch, step, node)`.
pub fn stack_targets(targets: &[&[Frame]]) -> Result<(Tensor, Tensor)> {
    let mut x = Vec::new();
    let mut v = Vec::new();
    for t in targets {
        for f in *t {
            x.extend(f.x.iter().flatten());
            v.extend(f.v.iter().flatten());
        }
    }
    let rows = x.len() / 3;
    Ok((Tensor::new(vec![rows, 3], x)?, Tensor::new(vec![rows, 3], v)?))
}

/// Model structure: parameter names and hyperparameters. Weights live in a
/// separate [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Egno {
    config: EgnoConfig,
    k_raw: usize,
    edge_attr_dim: usize,
    embed: Linear,
    convs: Vec<TemporalConv>,
    layers: Vec<EgnnLayer>,
}

impl Egno {
    pub fn new(config: EgnoConfig, k_raw: usize, edge_attr_dim: usize) -> Result<Self> {
        config.validate()?;
        let k = config.hidden;
        let embed = Linear::new("embed", k_raw + config.time_emb, k, true);
        let convs = (0..config.layers)
            .map(|l| TemporalConv::new(&format!("block{l}.conv"), k, config.modes, config.mask, config.norm_gate))
            .collect();
        let layers = (0..config.layers)
            .map(|l| EgnnLayer::new(&format!("block{l}.egnn"), k, edge_attr_dim))
            .collect();
        Ok(Self {
            config,
            k_raw,
            edge_attr_dim,
            embed,
            convs,
            layers,
        })
    }

    pub fn config(&self) -> &EgnoConfig {
        &self.config
    }

    pub fn k_raw(&self) -> usize {
        self.k_raw
    }

    pub fn edge_attr_dim(&self) -> usize {
        self.edge_attr_dim
    }

    pub fn layers(&self) -> &[EgnnLayer] {
        &self.layers
    }

    pub fn convs(&self) -> &[TemporalConv] {
        &self.convs
    }

    fn has_temporal(&self) -> bool {
        !self.config.mask.is_empty()
    }

    pub fn init(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        self.embed.init(&mut params, &mut rng);
        for (conv, layer) in self.convs.iter().zip(&self.layers) {
            if self.has_temporal() {
                conv.init(&mut params, self.config.kernel_init_scale, &mut rng);
            }
            layer.init(&mut params, &mut rng);
        }
        params
    }

    /// Zeroes every position and velocity update so the model predicts the
    /// input positions at every step.
    pub fn zero_updates(&self, params: &mut ParamSet) {
        for (conv, layer) in self.convs.iter().zip(&self.layers) {
            if self.has_temporal() {
                conv.init_zero(params);
            }
            layer.zero_updates(params);
        }
    }

    /// Internal sequence length for a grid.
    fn steps(&self, grid: &TimeGrid) -> Result<usize> {
        match self.config.readout {
            Readout::Final => Ok(grid.len()),
            Readout::PerLayer => {
                if grid.len() > self.config.layers {
                    return Err(CoreError::InvalidConfig(format!(
                        "per-layer readout of {} steps needs at least as many layers, have {}",
                        grid.len(),
                        self.config.layers
                    )));
                }
                Ok(1)
            }
        }
    }

    /// Predicted positions and velocities, each `[B·S·N, 3]` with rows
    /// ordered `(batch, step, node)` and `S = grid.len()`.
    pub fn forward<'t>(&self, p: &Bound<'t>, batch: &GraphBatch, grid: &TimeGrid) -> Result<(Var<'t>, Var<'t>)> {
        if batch.k_raw != self.k_raw || batch.attr_dim != self.edge_attr_dim {
            return Err(CoreError::Shape(format!(
                "batch widths (h {}, edge {}) do not match the model (h {}, edge {})",
                batch.k_raw, batch.attr_dim, self.k_raw, self.edge_attr_dim
            )));
        }
        let tape = p.get(&self.embed.weight)?.tape();
        let steps = self.steps(grid)?;
        let (b, n) = (batch.size, batch.nodes);
        let rows = b * steps * n;

        let expand: Arc<[usize]> = (0..rows)
            .map(|r| (r / (steps * n)) * n + r % n)
            .collect();
        let edge_lists: Vec<&[(usize, usize)]> = (0..b * steps).map(|g| batch.edges[g / steps].as_slice()).collect();
        let layout = GraphLayout::new(n, &edge_lists)?;
        let attr: Vec<f64> = (0..b * steps).flat_map(|g| batch.attr[g / steps].iter().copied()).collect();
        let attr = tape.constant(Tensor::new(vec![layout.num_edges(), self.edge_attr_dim], attr)?);

        let h_raw = tape.constant(Tensor::new(vec![b * n, self.k_raw], batch.h.clone())?);
        let x0 = tape.constant(Tensor::new(vec![b * n, 3], batch.x.clone())?);
        let v0 = tape.constant(Tensor::new(vec![b * n, 3], batch.v.clone())?);

        let mut h_in = h_raw.gather_rows(&expand)?;
        let d = self.config.time_emb;
        if d > 0 {
            let indices: Vec<f64> = match self.config.readout {
                Readout::Final => grid.indices().to_vec(),
                Readout::PerLayer => vec![0.0],
            };
            let mut emb = Vec::with_capacity(rows * d);
            for r in 0..rows {
                emb.extend(time_embedding(indices[(r / n) % steps], d)?);
            }
            h_in = tape.concat_cols(&[h_in, tape.constant(Tensor::new(vec![rows, d], emb)?)])?;
        }
        let mut h = self.embed.forward(p, h_in)?;
        let mut x = x0.gather_rows(&expand)?;
        let mut v = v0.gather_rows(&expand)?;

        let mut readouts = Vec::new();
        for (conv, layer) in self.convs.iter().zip(&self.layers) {
            if self.has_temporal() {
                (h, x, v) = conv.forward(p, &layout, steps, h, x, v)?;
            }
            (h, x, v) = layer.forward(p, &layout, attr, h, x, v)?;
            if self.config.readout == Readout::PerLayer {
                readouts.push((x, v));
            }
        }

        match self.config.readout {
            Readout::Final => Ok((x, v)),
            Readout::PerLayer => {
                let p_out = grid.len();
                let tail = &readouts[readouts.len() - p_out..];
                // [B·N, 3P] has rows (b, n) and columns (p, c); reorder to (b, p, n)
                let reorder: Arc<[usize]> = (0..b * p_out * n)
                    .map(|r| {
                        let (bi, rest) = (r / (p_out * n), r % (p_out * n));
                        let (pi, ni) = (rest / n, rest % n);
                        (bi * n + ni) * p_out + pi
                    })
                    .collect();
                let stack = |parts: Vec<Var<'t>>| -> Result<Var<'t>> {
                    Ok(tape
                        .concat_cols(&parts)?
                        .reshape(vec![b * n * p_out, 3])?
                        .gather_rows(&reorder)?)
                };
                Ok((
                    stack(tail.iter().map(|r| r.0).collect())?,
                    stack(tail.iter().map(|r| r.1).collect())?,
                ))
            }
        }
    }

    /// Mean over steps of the per-node, per-coordinate squared position
    /// error; velocities are added when `supervise_velocity` is set.
    pub fn loss<'t>(
        &self,
        p: &Bound<'t>,
        batch: &GraphBatch,
        grid: &TimeGrid,
        target_x: &Tensor,
        target_v: &Tensor,
    ) -> Result<Var<'t>> {
        let (x, v) = self.forward(p, batch, grid)?;
        let tape = x.tape();
        if x.shape() != target_x.shape() {
            return Err(CoreError::Shape(format!(
                "prediction {:?} vs target {:?}",
                x.shape(),
                target_x.shape()
            )));
        }
        let mut loss = x.sub(tape.constant(target_x.clone()))?.square().mean()?;
        if self.config.supervise_velocity {
            loss = loss.add(v.sub(tape.constant(target_v.clone()))?.square().mean()?)?;
        }
        Ok(loss)
    }

    /// Predicted frames for each graph.
    pub fn predict(&self, params: &ParamSet, graphs: &[&GeometricGraph], grid: &TimeGrid) -> Result<Vec<Vec<Frame>>> {
        let batch = GraphBatch::new(graphs)?;
        let tape = Tape::new();
        let p = tape.bind(params);
        let (x, v) = self.forward(&p, &batch, grid)?;
        let (x, v) = (x.value(), v.value());
        let n = batch.nodes;
        let frame = |r0: usize| Frame {
            x: x.data()[r0 * 3..(r0 + n) * 3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            v: v.data()[r0 * 3..(r0 + n) * 3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        };
        let s = grid.len();
        Ok((0..batch.size)
            .map(|bi| (0..s).map(|si| frame((bi * s + si) * n)).collect())
            .collect())
    }
}

/// Predicted frames of one graph at every grid offset.
pub fn egno_forward(model: &Egno, params: &ParamSet, g: &GeometricGraph, grid: &TimeGrid) -> Result<Vec<Frame>> {
    Ok(model.predict(params, &[g], grid)?.pop().expect("one graph"))
}

/// Decodes on the grid refined by `factor` without retraining.
pub fn decode_super_resolution(
    model: &Egno,
    params: &ParamSet,
    g: &GeometricGraph,
    grid: &TimeGrid,
    factor: usize,
) -> Result<(TimeGrid, Vec<Frame>)> {
    if factor < 1 {
        return Err(CoreError::InvalidConfig("super-resolution factor must be at least 1".into()));
    }
    let fine = grid.refine(factor)?;
    let frames = egno_forward(model, params, g, &fine)?;
    Ok((fine, frames))
}

fn frame_mse(a: &Frame, b: &Frame) -> Result<f64> {
    if a.x.len() != b.x.len() || a.x.is_empty() {
        return Err(CoreError::Shape(format!("frames with {} and {} nodes", a.x.len(), b.x.len())));
    }
    let s: f64 = a
        .x
        .iter()
        .zip(&b.x)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).powi(2)))
        .sum();
    Ok(s / (3 * a.x.len()) as f64)
}

/// Per-step position MSE over nodes and coordinates.
pub fn step_mse(pred: &[Frame], target: &[Frame]) -> Result<Vec<f64>> {
    if pred.len() != target.len() {
        return Err(CoreError::Shape(format!(
            "{} predicted steps vs {} target steps",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(CoreError::InvalidConfig("empty trajectory".into()));
    }
    pred.iter().zip(target).map(|(a, b)| frame_mse(a, b)).collect()
}

/// Mean over steps of the position MSE.
pub fn trajectory_loss(pred: &[Frame], target: &[Frame]) -> Result<f64> {
    let s = step_mse(pred, target)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Position MSE at the final step.
    pub f_mse: f64,
    /// Position MSE averaged over all steps.
    pub a_mse: f64,
}

pub fn compute_metrics(pred: &[Frame], target: &[Frame]) -> Result<Metrics> {
    let s = step_mse(pred, target)?;
    Ok(Metrics {
        f_mse: *s.last().expect("nonempty"),
        a_mse: s.iter().sum::<f64>() / s.len() as f64,
    })
}
