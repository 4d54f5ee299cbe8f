//! Mini-batch Adam with early stopping on the validation loss.

use std::path::Path;
use std::time::Instant;

use egno_core::dataset::{load_splits, Dataset, Sample};
use egno_core::geometry::{Frame, GeometricGraph};
use egno_core::grid::TimeGrid;
use egno_core::model::{stack_targets, Egno, GraphBatch};
use egno_tensor::{adam_step, AdamState, ParamSet, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::eval::{evaluate, samples_on, Evaluation};
use crate::variant::{self, ModelVariant};

/// Node features are the speed; edge attributes the charge product.
pub const K_RAW: usize = 1;
pub const EDGE_ATTR_DIM: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 holds the losses of the initialization.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub test: Evaluation,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub history: Vec<EpochRecord>,
    pub train_samples: usize,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_secs: f64,
    pub config: RunConfig,
}

impl MetricsReport {
    /// Equality on everything except wall-clock time.
    pub fn same_results(&self, other: &Self) -> bool {
        Self {
            wall_clock_secs: 0.0,
            ..self.clone()
        } == Self {
            wall_clock_secs: 0.0,
            ..other.clone()
        }
    }
}

/// Train, valid and test splits in memory.
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn load(dir: &Path) -> Result<Self> {
        let [train, valid, test] = load_splits(dir)?;
        Ok(Self { train, valid, test })
    }

    /// All splits must come from one simulator setup.
    fn check(&self) -> Result<()> {
        let spec = |d: &Dataset| {
            let mut s = d.spec().clone();
            (s.train, s.valid, s.test) = (0, 0, 0);
            s
        };
        for d in [&self.valid, &self.test] {
            if d.num_nodes() != self.train.num_nodes() {
                return Err(HarnessError::mismatch("node count", self.train.num_nodes(), d.num_nodes()));
            }
            if spec(d) != spec(&self.train) {
                return Err(HarnessError::Config(format!(
                    "split `{}` was generated with a different dataset spec than `train`",
                    d.split().name()
                )));
            }
        }
        Ok(())
    }
}

fn batch_loss<'t>(
    model: &Egno,
    p: &egno_tensor::Bound<'t>,
    samples: &[&Sample],
    grid: &TimeGrid,
) -> Result<egno_tensor::Var<'t>> {
    let graphs: Vec<&GeometricGraph> = samples.iter().map(|s| &s.graph).collect();
    let targets: Vec<&[Frame]> = samples.iter().map(|s| s.targets.as_slice()).collect();
    let batch = GraphBatch::new(&graphs)?;
    let (tx, tv) = stack_targets(&targets)?;
    Ok(model.loss(p, &batch, grid, &tx, &tv)?)
}

/// Sample-weighted mean training objective over `samples`.
pub fn mean_loss(model: &Egno, params: &ParamSet, samples: &[Sample], grid: &TimeGrid, batch: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(batch) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let tape = Tape::new();
        let p = tape.bind(params);
        total += batch_loss(model, &p, &refs, grid)?.value().item()? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Builds the model of `run.model`, checks it against the data and returns
/// it with its training grid.
pub fn prepare(run: &RunConfig, splits: &Splits) -> Result<(&'static dyn ModelVariant, Egno, TimeGrid)> {
    run.validate()?;
    splits.check()?;
    let variant = variant::lookup(&run.model)?;
    let cfg = variant.model_config(&run.egno)?;
    variant.check_dataset(&cfg, splits.train.spec())?;
    let model = Egno::new(cfg, K_RAW, EDGE_ATTR_DIM)?;
    let grid = variant.train_grid(model.config(), splits.train.window())?;
    Ok((variant, model, grid))
}

/// Trains `run.model` and scores the best-validation parameters on the
/// test split.
pub fn train_on(run: &RunConfig, splits: &Splits) -> Result<(Checkpoint, MetricsReport)> {
    let start = Instant::now();
    let (variant, model, grid) = prepare(run, splits)?;
    let train_ds = match run.train_size {
        Some(n) => splits.train.truncated(n)?,
        None => splits.train.clone(),
    };
    let train = samples_on(&train_ds, &grid)?;
    let valid = samples_on(&splits.valid, &grid)?;
    if train.is_empty() || valid.is_empty() {
        return Err(HarnessError::Config("training and validation splits must be nonempty".into()));
    }

    let mut params = model.init(run.seed);
    let mut adam = AdamState::new(&params, run.optimizer.adam());
    let bs = run.batch_size;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: mean_loss(&model, &params, &train, &grid, bs)?,
        valid_loss: mean_loss(&model, &params, &valid, &grid, bs)?,
    }];
    let (mut best, mut best_epoch, mut best_valid) = (params.clone(), 0, history[0].valid_loss);
    log::info!(
        "{}: {} parameters, initial valid loss {best_valid:.6}",
        variant.name(),
        params.num_scalars()
    );

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stale = 0;
    for epoch in 1..=run.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for idx in order.chunks(bs) {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let tape = Tape::new();
            let p = tape.bind(&params);
            let loss = batch_loss(&model, &p, &refs, &grid)?;
            total += loss.value().item()? * idx.len() as f64;
            let grads = tape.backward(loss)?.collect(&p);
            drop(p);
            adam_step(&mut params, &grads, &mut adam)?;
        }
        let train_loss = total / train.len() as f64;
        let valid_loss = mean_loss(&model, &params, &valid, &grid, bs)?;
        if !train_loss.is_finite() || !valid_loss.is_finite() {
            return Err(HarnessError::Config(format!(
                "training diverged at epoch {epoch} (train {train_loss}, valid {valid_loss})"
            )));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
        });
        log::info!("epoch {epoch}: train {train_loss:.6} valid {valid_loss:.6}");
        if valid_loss < best_valid {
            (best, best_epoch, best_valid) = (params.clone(), epoch, valid_loss);
            stale = 0;
        } else {
            stale += 1;
            if stale >= run.patience {
                break;
            }
        }
    }

    let ck = Checkpoint {
        variant: variant.name().to_string(),
        config: model.config().clone(),
        k_raw: K_RAW,
        edge_attr_dim: EDGE_ATTR_DIM,
        seed: run.seed,
        epoch: best_epoch,
        valid_loss: best_valid,
        params: best,
    };
    let test = evaluate(&ck, &splits.test)?;
    let report = MetricsReport {
        variant: ck.variant.clone(),
        test,
        best_epoch,
        best_valid_loss: best_valid,
        history,
        train_samples: train.len(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        config: run.clone(),
    };
    Ok((ck, report))
}

/// Loads the splits from `run.data` and trains.
pub fn train(run: &RunConfig) -> Result<(Checkpoint, MetricsReport)> {
    train_on(run, &Splits::load(&run.data)?)
}
