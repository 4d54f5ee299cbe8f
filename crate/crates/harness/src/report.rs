//! CSV outputs: `metric,value` summaries and `epoch,train_loss,valid_loss`
//! histories.

use std::path::Path;

use crate::error::Result;
use crate::eval::{Evaluation, SuperResolution};
use crate::train::{EpochRecord, MetricsReport};

pub const METRICS_FILE: &str = "metrics.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "best.egnockpt";
pub const CONFIG_FILE: &str = "config.toml";

pub fn write_metric_rows(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metric_rows(path: &Path) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((rec[0].to_string(), rec[1].to_string()))
        })
        .collect()
}

fn row(k: impl Into<String>, v: impl ToString) -> (String, String) {
    (k.into(), v.to_string())
}

pub fn evaluation_rows(e: &Evaluation) -> Vec<(String, String)> {
    let mut rows = vec![row("f_mse", e.f_mse), row("a_mse", e.a_mse), row("test_samples", e.samples)];
    for (o, m) in e.offsets.iter().zip(&e.step_mse) {
        rows.push(row(format!("mse@{o}"), m));
    }
    rows
}

pub fn report_rows(r: &MetricsReport) -> Vec<(String, String)> {
    let mut rows = evaluation_rows(&r.test);
    rows.extend([
        row("best_epoch", r.best_epoch),
        row("best_valid_loss", r.best_valid_loss),
        row("epochs_run", r.history.len() - 1),
        row("train_samples", r.train_samples),
        row("wall_clock_secs", r.wall_clock_secs),
    ]);
    rows
}

pub fn super_resolution_rows(s: &SuperResolution) -> Vec<(String, String)> {
    let mut rows = vec![
        row("coarse_f_mse", s.coarse.f_mse),
        row("coarse_a_mse", s.coarse.a_mse),
        row("fine_a_mse", s.fine.a_mse),
        row("shared_mse", s.shared_mse),
    ];
    for (o, m) in s.fine.offsets.iter().zip(&s.fine.step_mse) {
        rows.push(row(format!("fine_mse@{o}"), m));
    }
    rows
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes the checkpoint, `metrics.csv`, `history.csv` and the config echo
/// into `dir`.
pub fn write_run(dir: &Path, ck: &crate::checkpoint::Checkpoint, report: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    ck.save(&dir.join(CHECKPOINT_FILE))?;
    write_metric_rows(&dir.join(METRICS_FILE), &report_rows(report))?;
    write_history(&dir.join(HISTORY_FILE), &report.history)?;
    std::fs::write(dir.join(CONFIG_FILE), report.config.to_toml_string())?;
    Ok(())
}
