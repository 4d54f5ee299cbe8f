//! Registry of trainable model variants. Every variant is an [`Egno`]
//! configuration plus the grid it trains on and the way it is scored.

use egno_core::dataset::DatasetSpec;
use egno_core::geometry::{Frame, GeometricGraph};
use egno_core::grid::{Discretization, TimeGrid};
use egno_core::model::{Egno, EgnoConfig, Readout};
use egno_core::temporal::FeatureMask;
use egno_tensor::ParamSet;

use crate::error::{HarnessError, Result};

pub trait ModelVariant: Send + Sync {
    fn name(&self) -> &'static str;

    fn summary(&self) -> &'static str;

    /// Model configuration derived from the run's `[egno]` table.
    fn model_config(&self, base: &EgnoConfig) -> Result<EgnoConfig>;

    /// Grid of the supervised targets over a window of `window` frames.
    fn train_grid(&self, cfg: &EgnoConfig, window: usize) -> Result<TimeGrid>;

    /// Grid the test metrics are computed on.
    fn eval_grid(&self, cfg: &EgnoConfig, window: usize) -> Result<TimeGrid> {
        self.train_grid(cfg, window)
    }

    /// Rejects datasets the model cannot be trained or scored on.
    fn check_dataset(&self, cfg: &EgnoConfig, spec: &DatasetSpec) -> Result<()> {
        if cfg.p_steps != spec.p_steps {
            return Err(HarnessError::mismatch("p_steps", spec.p_steps, cfg.p_steps));
        }
        Ok(())
    }

    /// Whether one forward pass decodes a whole trajectory that can be
    /// resampled on a finer grid.
    fn decodes_trajectory(&self) -> bool {
        false
    }

    /// Predicted frames at every offset of `grid` for each graph.
    fn predict(&self, model: &Egno, params: &ParamSet, graphs: &[&GeometricGraph], grid: &TimeGrid) -> Result<Vec<Vec<Frame>>> {
        Ok(model.predict(params, graphs, grid)?)
    }
}

fn window_grid(cfg: &EgnoConfig, window: usize) -> Result<TimeGrid> {
    Ok(TimeGrid::discretize(cfg.discretization, window, cfg.p_steps, cfg.delta)?)
}

/// Single-step model configuration: no temporal axis, no time embedding.
fn single_step(base: &EgnoConfig, p_steps: usize) -> EgnoConfig {
    EgnoConfig {
        p_steps,
        time_emb: 0,
        mask: FeatureMask::none(),
        readout: Readout::Final,
        ..base.clone()
    }
}

/// The operator, optionally with temporal-convolution channels masked out.
struct Operator {
    name: &'static str,
    summary: &'static str,
    mask: FeatureMask,
}

impl ModelVariant for Operator {
    fn name(&self) -> &'static str {
        self.name
    }

    fn summary(&self) -> &'static str {
        self.summary
    }

    fn model_config(&self, base: &EgnoConfig) -> Result<EgnoConfig> {
        Ok(EgnoConfig {
            mask: self.mask,
            readout: Readout::Final,
            ..base.clone()
        })
    }

    fn train_grid(&self, cfg: &EgnoConfig, window: usize) -> Result<TimeGrid> {
        window_grid(cfg, window)
    }

    fn decodes_trajectory(&self) -> bool {
        !self.mask.is_empty()
    }
}

/// EGNN mapping the state at `t` straight to `t + ΔT`.
struct Egnn;

impl ModelVariant for Egnn {
    fn name(&self) -> &'static str {
        "egnn"
    }

    fn summary(&self) -> &'static str {
        "single-step EGNN trained on t -> t+ΔT"
    }

    fn model_config(&self, base: &EgnoConfig) -> Result<EgnoConfig> {
        Ok(single_step(base, 1))
    }

    fn train_grid(&self, _cfg: &EgnoConfig, window: usize) -> Result<TimeGrid> {
        Ok(TimeGrid::new(vec![window as f64], vec![1.0])?)
    }

    fn check_dataset(&self, _cfg: &EgnoConfig, _spec: &DatasetSpec) -> Result<()> {
        Ok(())
    }
}

/// EGNN trained on `ΔT/P` and applied `P` times. `p_steps` is kept in the
/// model configuration as the rollout count.
struct EgnnRoll;

impl EgnnRoll {
    fn step(cfg: &EgnoConfig, window: usize) -> Result<usize> {
        if !window.is_multiple_of(cfg.p_steps) {
            return Err(HarnessError::Config(format!(
                "rollout needs ΔT = {window} divisible by P = {}",
                cfg.p_steps
            )));
        }
        Ok(window / cfg.p_steps)
    }
}

impl ModelVariant for EgnnRoll {
    fn name(&self) -> &'static str {
        "egnn-roll"
    }

    fn summary(&self) -> &'static str {
        "EGNN trained on t -> t+ΔT/P, rolled out P times"
    }

    fn model_config(&self, base: &EgnoConfig) -> Result<EgnoConfig> {
        Ok(single_step(base, base.p_steps))
    }

    fn train_grid(&self, cfg: &EgnoConfig, window: usize) -> Result<TimeGrid> {
        Ok(TimeGrid::new(vec![Self::step(cfg, window)? as f64], vec![1.0])?)
    }

    fn eval_grid(&self, cfg: &EgnoConfig, window: usize) -> Result<TimeGrid> {
        let step = Self::step(cfg, window)?;
        Ok(TimeGrid::discretize(Discretization::Uniform, window, cfg.p_steps, step)?)
    }

    fn check_dataset(&self, cfg: &EgnoConfig, spec: &DatasetSpec) -> Result<()> {
        Self::step(cfg, spec.window).map(|_| ())
    }

    fn predict(&self, model: &Egno, params: &ParamSet, graphs: &[&GeometricGraph], grid: &TimeGrid) -> Result<Vec<Vec<Frame>>> {
        let window = grid.offsets().last().copied().unwrap_or(0.0).round() as usize;
        let one = self.train_grid(model.config(), window)?;
        let step = one.offsets()[0];
        for (p, &o) in grid.offsets().iter().enumerate() {
            if o != step * (p + 1) as f64 {
                return Err(HarnessError::Config(format!(
                    "rollout with step {step} cannot reach grid offsets {:?}",
                    grid.offsets()
                )));
            }
        }
        let mut current: Vec<GeometricGraph> = graphs.iter().map(|g| (*g).clone()).collect();
        let mut out = vec![Vec::with_capacity(grid.len()); graphs.len()];
        for _ in 0..grid.len() {
            let refs: Vec<&GeometricGraph> = current.iter().collect();
            let next = model.predict(params, &refs, &one)?;
            current = current
                .iter()
                .zip(next)
                .zip(&mut out)
                .map(|((g, mut frames), traj)| {
                    let f = frames.pop().expect("one step");
                    let g = restate(g, &f);
                    traj.push(f);
                    g
                })
                .collect::<std::result::Result<_, _>>()?;
        }
        Ok(out)
    }
}

/// Same graph at a new state, with `h_i = ‖v_i‖` recomputed.
pub fn restate(g: &GeometricGraph, f: &Frame) -> egno_core::Result<GeometricGraph> {
    let h = f.v.iter().map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).collect();
    GeometricGraph::new(
        h,
        1,
        f.x.clone(),
        f.v.clone(),
        g.edges().to_vec(),
        g.edge_attr().to_vec(),
        g.edge_attr_dim(),
    )
}

/// EGNN whose `p`-th output frame is read from layer `L − P + p`.
struct EgnnSeq;

impl ModelVariant for EgnnSeq {
    fn name(&self) -> &'static str {
        "egnn-seq"
    }

    fn summary(&self) -> &'static str {
        "EGNN reading frame p from layer L-P+p (needs L >= P)"
    }

    fn model_config(&self, base: &EgnoConfig) -> Result<EgnoConfig> {
        let cfg = EgnoConfig {
            readout: Readout::PerLayer,
            ..single_step(base, base.p_steps)
        };
        if cfg.layers < cfg.p_steps {
            return Err(HarnessError::Config(format!(
                "egnn-seq needs layers ≥ p_steps, got {} < {}",
                cfg.layers, cfg.p_steps
            )));
        }
        Ok(cfg)
    }

    fn train_grid(&self, cfg: &EgnoConfig, window: usize) -> Result<TimeGrid> {
        window_grid(cfg, window)
    }
}

static VARIANTS: &[&dyn ModelVariant] = &[
    &Operator {
        name: "egno",
        summary: "full operator, temporal convolution over h, x and v",
        mask: FeatureMask::all(),
    },
    &Egnn,
    &EgnnRoll,
    &EgnnSeq,
    &Operator {
        name: "egno-mask-hx",
        summary: "temporal convolution over h and x only",
        mask: FeatureMask::hx(),
    },
    &Operator {
        name: "egno-mask-h",
        summary: "temporal convolution over h only",
        mask: FeatureMask::h_only(),
    },
    &Operator {
        name: "egno-mask-none",
        summary: "no temporal convolution, time embedding kept",
        mask: FeatureMask::none(),
    },
];

pub fn all() -> &'static [&'static dyn ModelVariant] {
    VARIANTS
}

pub fn names() -> Vec<&'static str> {
    VARIANTS.iter().map(|v| v.name()).collect()
}

pub fn lookup(name: &str) -> Result<&'static dyn ModelVariant> {
    VARIANTS
        .iter()
        .copied()
        .find(|v| v.name() == name)
        .ok_or_else(|| HarnessError::UnknownVariant {
            name: name.to_string(),
            known: names().join(", "),
        })
}
