use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use egno_core::dataset::{generate_dataset, Dataset, Split};
use egno_core::grid::Discretization;
use egno_harness::checkpoint::Checkpoint;
use egno_harness::config::RunConfig;
use egno_harness::eval::{evaluate, super_resolve};
use egno_harness::report::{self, write_metric_rows};
use egno_harness::train::{train_on, Splits};
use egno_harness::variant;

#[derive(Parser)]
#[command(name = "egno", version, about = "Equivariant graph neural operators for N-body dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate train/valid/test splits into the data directory (or --out).
    Gen(Common),
    /// Train one model variant and score it on the test split.
    Train(Common),
    /// Score a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train several variants with identical settings and tabulate them.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variant names.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "egno,egno-mask-hx,egno-mask-h,egno-mask-none,egnn"
        )]
        variants: Vec<String>,
    },
    /// Decode a trained operator on a refined time grid.
    SuperRes {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        factor: usize,
    },
    /// List the registered model variants.
    Variants,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    p_steps: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    discretization: Option<Discretization>,
    #[arg(long)]
    train_size: Option<usize>,
}

impl Common {
    /// Config file plus flag overrides. For `gen`, the seed and the
    /// training size go to the dataset instead of the run.
    fn run_config(&self, for_gen: bool) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            if for_gen {
                c.dataset.sim.seed = s;
            } else {
                c.seed = s;
            }
        }
        if let Some(d) = &self.data {
            c.data = d.clone();
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if let Some(m) = &self.model {
            c.model = m.clone();
        }
        if let Some(p) = self.p_steps {
            c.egno.p_steps = p;
            c.dataset.p_steps = p;
        }
        if let Some(m) = self.modes {
            c.egno.modes = m;
        }
        if let Some(d) = self.discretization {
            c.egno.discretization = d;
            c.dataset.discretization = d;
        }
        if let Some(n) = self.train_size {
            if for_gen {
                c.dataset.train = n;
            } else {
                c.train_size = Some(n);
            }
        }
        Ok(c)
    }

    fn checkpoint(&self) -> anyhow::Result<Checkpoint> {
        let Some(path) = &self.checkpoint else {
            bail!("--checkpoint <path> is required");
        };
        Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
    }
}

fn print_rows(rows: &[(String, String)]) {
    println!("metric,value");
    for (k, v) in rows {
        println!("{k},{v}");
    }
}

fn emit(out: Option<&Path>, file: &str, rows: &[(String, String)]) -> anyhow::Result<()> {
    print_rows(rows);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_metric_rows(&dir.join(file), rows)?;
    }
    Ok(())
}

fn split_named(name: &str) -> anyhow::Result<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .with_context(|| format!("unknown split `{name}` (expected train, valid or test)"))
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Gen(common) => {
            let c = common.run_config(true)?;
            let dir = common.out.clone().unwrap_or(c.data.clone());
            for p in generate_dataset(&c.dataset, &dir)? {
                println!("{}", p.display());
            }
        }
        Command::Train(common) => {
            let c = common.run_config(false)?;
            let (ck, rep) = train_on(&c, &Splits::load(&c.data)?)?;
            report::write_run(&c.out, &ck, &rep)?;
            print_rows(&report::report_rows(&rep));
        }
        Command::Eval { common, split } => {
            let c = common.run_config(false)?;
            let ck = common.checkpoint()?;
            let ds = Dataset::read(&c.data.join(split_named(&split)?.file_name()))?;
            let e = evaluate(&ck, &ds)?;
            emit(common.out.as_deref(), report::METRICS_FILE, &report::evaluation_rows(&e))?;
        }
        Command::Ablate { common, variants } => {
            let base = common.run_config(false)?;
            let splits = Splits::load(&base.data)?;
            let mut rows = Vec::new();
            for name in &variants {
                variant::lookup(name)?;
                let run = RunConfig {
                    model: name.clone(),
                    out: base.out.join(name),
                    ..base.clone()
                };
                let (ck, rep) = train_on(&run, &splits)?;
                report::write_run(&run.out, &ck, &rep)?;
                rows.push((format!("{name}.f_mse"), rep.test.f_mse.to_string()));
                rows.push((format!("{name}.a_mse"), rep.test.a_mse.to_string()));
            }
            emit(Some(&base.out), "ablation.csv", &rows)?;
        }
        Command::SuperRes { common, factor } => {
            let c = common.run_config(false)?;
            let ck = common.checkpoint()?;
            let ds = Dataset::read(&c.data.join(Split::Test.file_name()))?;
            let s = super_resolve(&ck, &ds, factor)?;
            emit(common.out.as_deref(), "superres.csv", &report::super_resolution_rows(&s))?;
        }
        Command::Variants => {
            for v in variant::all() {
                println!("{:<16}{}", v.name(), v.summary());
            }
        }
    }
    Ok(())
}
