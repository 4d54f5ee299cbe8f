//! Test-split scoring and zero-shot temporal super-resolution.

use egno_core::dataset::{Dataset, Sample};
use egno_core::geometry::GeometricGraph;
use egno_core::grid::TimeGrid;
use egno_core::model::{step_mse, Egno};
use egno_tensor::ParamSet;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{HarnessError, Result};
use crate::variant::ModelVariant;

/// Predictions are made this many samples at a time; results do not depend
/// on it.
pub const EVAL_BATCH: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Position MSE at the last grid step.
    pub f_mse: f64,
    /// Position MSE averaged over grid steps.
    pub a_mse: f64,
    /// Per-step position MSE, averaged over samples.
    pub step_mse: Vec<f64>,
    pub offsets: Vec<f64>,
    pub samples: usize,
}

pub(crate) fn samples_on(ds: &Dataset, grid: &TimeGrid) -> Result<Vec<Sample>> {
    (0..ds.len()).map(|i| Ok(ds.sample_on(i, grid)?)).collect()
}

/// Mean per-step MSE of `variant`'s predictions over `samples`.
pub fn score(
    variant: &dyn ModelVariant,
    model: &Egno,
    params: &ParamSet,
    samples: &[Sample],
    grid: &TimeGrid,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(HarnessError::Config("cannot evaluate an empty split".into()));
    }
    let mut sums = vec![0.0; grid.len()];
    for chunk in samples.chunks(EVAL_BATCH) {
        let graphs: Vec<&GeometricGraph> = chunk.iter().map(|s| &s.graph).collect();
        let preds = variant.predict(model, params, &graphs, grid)?;
        for (pred, s) in preds.iter().zip(chunk) {
            for (acc, e) in sums.iter_mut().zip(step_mse(pred, &s.targets)?) {
                *acc += e;
            }
        }
    }
    let step_mse: Vec<f64> = sums.iter().map(|s| s / samples.len() as f64).collect();
    Ok(Evaluation {
        f_mse: *step_mse.last().expect("nonempty grid"),
        a_mse: step_mse.iter().sum::<f64>() / step_mse.len() as f64,
        step_mse,
        offsets: grid.offsets().to_vec(),
        samples: samples.len(),
    })
}

/// Scores a checkpoint on every trajectory of `ds`.
pub fn evaluate(ck: &Checkpoint, ds: &Dataset) -> Result<Evaluation> {
    let variant = ck.variant()?;
    variant.check_dataset(&ck.config, ds.spec())?;
    let grid = variant.eval_grid(&ck.config, ds.window())?;
    let model = ck.model()?;
    score(variant, &model, &ck.params, &samples_on(ds, &grid)?, &grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperResolution {
    /// Scores at the trained resolution.
    pub coarse: Evaluation,
    /// Scores on the refined grid.
    pub fine: Evaluation,
    /// Fine-grid MSE averaged over the offsets shared with the coarse grid.
    pub shared_mse: f64,
}

/// Decodes on the grid refined by `factor` with the trained parameters.
pub fn super_resolve(ck: &Checkpoint, ds: &Dataset, factor: usize) -> Result<SuperResolution> {
    let variant = ck.variant()?;
    if !variant.decodes_trajectory() {
        return Err(HarnessError::Config(format!(
            "super-resolution needs an operator variant, `{}` is not one",
            variant.name()
        )));
    }
    variant.check_dataset(&ck.config, ds.spec())?;
    let model = ck.model()?;
    let grid = variant.eval_grid(&ck.config, ds.window())?;
    let fine_grid = grid.refine(factor)?;
    let coarse = score(variant, &model, &ck.params, &samples_on(ds, &grid)?, &grid)?;
    let fine = score(variant, &model, &ck.params, &samples_on(ds, &fine_grid)?, &fine_grid)?;
    let shared: Vec<f64> = fine
        .offsets
        .iter()
        .zip(&fine.step_mse)
        .filter(|(o, _)| grid.offsets().contains(o))
        .map(|(_, e)| *e)
        .collect();
    let shared_mse = shared.iter().sum::<f64>() / shared.len() as f64;
    Ok(SuperResolution {
        coarse,
        fine,
        shared_mse,
    })
}
