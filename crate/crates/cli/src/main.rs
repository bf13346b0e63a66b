use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use speckle_hdc::experiment::{
    recalibrate_once, recalibration_grid, sweep_n, write_contrast_csv, write_recal_csv, write_sweep_csv,
    Analysis, EncodedDataset,
};
use speckle_hdc::io::{load_memory, save_memory, write_atomic};
use speckle_hdc::scenario::{generate_dataset, SCENARIO_FILE};
use speckle_hdc::{BinarizePolicy, Error, ErrorKind, ScenarioConfig};

/// Speckle-based HDC sensing: simulate datasets, train prototype memories,
/// evaluate, sweep, recalibrate and analyze.
#[derive(Parser, Debug)]
#[command(name = "speckle-hdc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a scenario to `<out>/frames/*.pgm` plus `manifest.csv`.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a prototype memory on the train split.
    Train {
        #[command(flatten)]
        data: DatasetArg,
        /// Output model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate a model on the test split.
    Eval {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        model: PathBuf,
        /// Write the confusion matrix CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy against the number of training samples N.
    SweepN {
        #[command(flatten)]
        data: DatasetArg,
        /// Comma-separated N values; defaults to the scenario's `experiment.n_list`.
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge a model with prototypes from a new-condition dataset.
    Recalibrate {
        #[arg(long)]
        model: PathBuf,
        /// Dataset recorded under the new conditions.
        #[command(flatten)]
        data: DatasetArg,
        /// Comma-separated merge weights.
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// Comma-separated new samples per class.
        #[arg(long, value_delimiter = ',')]
        n_new: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Updated model file; needs exactly one (p, n_new) pair.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Speckle, hypervector and prototype correlation matrices.
    Analyze {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        model: PathBuf,
        /// Directory for the CSV outputs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct DatasetArg {
    #[arg(long)]
    dataset: PathBuf,
    /// Scenario file for experiment defaults; `<dataset>/scenario.toml` if absent.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl DatasetArg {
    fn scenario(&self) -> Result<Option<ScenarioConfig>> {
        let path = match &self.config {
            Some(p) => p.clone(),
            None => {
                let p = self.dataset.join(SCENARIO_FILE);
                if !p.exists() {
                    return Ok(None);
                }
                p
            }
        };
        Ok(Some(ScenarioConfig::load(&path)?))
    }

    fn encode(&self) -> Result<(EncodedDataset, Option<ScenarioConfig>)> {
        let scenario = self.scenario()?;
        let policy = scenario
            .as_ref()
            .map(ScenarioConfig::binarize_policy)
            .unwrap_or_default();
        Ok((load_dataset(&self.dataset, &policy)?, scenario))
    }
}

fn load_dataset(dir: &Path, policy: &BinarizePolicy) -> Result<EncodedDataset> {
    EncodedDataset::load(dir, policy)
        .with_context(|| format!("loading dataset {}", dir.display()))
}

fn emit_csv<F>(out: Option<&Path>, write: F) -> Result<()>
where
    F: Fn(&mut Vec<u8>) -> speckle_hdc::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    match out {
        Some(path) => write_atomic(path, &buf)?,
        None => io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let manifest = generate_dataset(&cfg, &out)?;
            println!(
                "wrote {} frames for {} labels to {}",
                manifest.records.len(),
                manifest.labels().len(),
                out.display()
            );
        }
        Command::Train { data, model } => {
            let (ds, _) = data.encode()?;
            let n = ds.split(speckle_hdc::io::Split::Train).len();
            let start = Instant::now();
            let memory = ds.train()?;
            let elapsed = start.elapsed();
            save_memory(&model, &memory)?;
            println!("N={n} L={} D={}", memory.len(), memory.dim());
            println!("train_time_s={:.6}", elapsed.as_secs_f64());
        }
        Command::Eval { data, model, out } => {
            let (ds, _) = data.encode()?;
            let memory = load_memory(&model)?;
            let report = ds.evaluate(&memory)?;
            print!("{report}");
            if let Some(path) = out {
                emit_csv(Some(&path), |w| report.write_csv(w))?;
            }
        }
        Command::SweepN { data, n_list, out } => {
            let (ds, scenario) = data.encode()?;
            let n_list = if n_list.is_empty() {
                scenario.map(|s| s.experiment.n_list).unwrap_or_default()
            } else {
                n_list
            };
            if n_list.is_empty() {
                return Err(Error::Config("no N values: pass --n-list or set experiment.n_list".into()).into());
            }
            let rows = sweep_n(&ds, &n_list)?;
            emit_csv(out.as_deref(), |w| write_sweep_csv(w, &rows))?;
        }
        Command::Recalibrate {
            model,
            data,
            p,
            n_new,
            seed,
            out,
        } => {
            let (ds, scenario) = data.encode()?;
            let exp = scenario.map(|s| s.experiment).unwrap_or_default();
            let p = if p.is_empty() { exp.p_list } else { p };
            let n_new = if n_new.is_empty() { exp.n_new_list } else { n_new };
            if p.is_empty() || n_new.is_empty() {
                return Err(Error::Config("pass --p and --n-new (or set them in the scenario)".into()).into());
            }
            let memory = load_memory(&model)?;
            match out {
                Some(path) => {
                    if p.len() != 1 || n_new.len() != 1 {
                        return Err(Error::Config("--out needs exactly one --p and one --n-new value".into()).into());
                    }
                    let (row, updated) = recalibrate_once(&memory, &ds, p[0], n_new[0], seed)?;
                    save_memory(&path, &updated)?;
                    emit_csv(None, |w| write_recal_csv(w, &[row]))?;
                }
                None => {
                    let rows = recalibration_grid(&memory, &ds, &p, &n_new, seed)?;
                    emit_csv(None, |w| write_recal_csv(w, &rows))?;
                }
            }
        }
        Command::Analyze { data, model, out } => {
            let (ds, _) = data.encode()?;
            let memory = load_memory(&model)?;
            let analysis = Analysis::from_dir(&data.dataset, &ds, &memory)?;
            for m in [&analysis.speckle, &analysis.hv, &analysis.prototype] {
                println!("{m}");
            }
            emit_csv(None, |w| write_contrast_csv(w, &analysis))?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for m in [&analysis.speckle, &analysis.hv, &analysis.prototype] {
                    let path = dir.join(format!("{}.csv", m.kind.name()));
                    emit_csv(Some(&path), |w| m.write_csv(w))?;
                }
                emit_csv(Some(&dir.join("contrast.csv")), |w| write_contrast_csv(w, &analysis))?;
            }
        }
    }
    Ok(())
}

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DIMENSION: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.kind() {
                ErrorKind::Config => EXIT_CONFIG,
                ErrorKind::Io => EXIT_IO,
                ErrorKind::Dimension => EXIT_DIMENSION,
                ErrorKind::Data => EXIT_OTHER,
            };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_OTHER
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("HDC_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => bail!(Error::Config(format!("HDC_THREADS must be a positive integer, got {v:?}"))),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
