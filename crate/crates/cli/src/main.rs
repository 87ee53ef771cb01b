use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landmark_sc::dataset::{generate_union_of_subspaces, save_columns_raw, save_rows_csv, FileFormat};
use landmark_sc::pipeline::{
    run_pipeline, save_labels, scaling_benchmark, verify_bounds, BenchConfig, BoundsConfig, DataSource, RunConfig,
};
use landmark_sc::{Error, Result};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "landmark-sc", version, about = "Landmark-factorized deep subspace clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit, cluster and evaluate one configuration.
    Run {
        #[command(flatten)]
        common: Common,
        /// Largest n for dense affinity dumps and CONN.
        #[arg(long)]
        dense_cap: Option<usize>,
    },
    /// Time affinity construction and clustering over growing n.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Check the Markov bounds by Monte Carlo and rerun the projector replication.
    VerifyBounds {
        #[command(flatten)]
        common: Common,
    },
    /// Write the synthetic dataset of a run config to disk.
    GenData {
        #[command(flatten)]
        common: Common,
        /// csv or raw_f64.
        #[arg(long, default_value = "raw_f64")]
        format: FileFormat,
    },
}

fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn load_run_config(common: &Common) -> Result<(RunConfig, String)> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::config("--config <path> is required"))?;
    let (mut cfg, text) = RunConfig::from_path(path)?;
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seeds.base = seed;
    }
    Ok((cfg, text))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, dense_cap } => {
            let (mut cfg, text) = load_run_config(&common)?;
            if let Some(cap) = dense_cap {
                cfg.output.dense_cap = cap;
            }
            let report = run_pipeline(&cfg, Some(&text))?;
            if let Some(m) = &report.metrics {
                println!("acc={:.4} nmi={:.4} spe={:.4}", m.acc, m.nmi, m.spe);
            }
            println!("results in {}", cfg.output.dir.display());
        }
        Command::Bench { common } => {
            let mut cfg: BenchConfig = read_toml(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let report = scaling_benchmark(&cfg)?;
            let table = report.to_tsv();
            print!("{table}");
            if !report.monotone() {
                log::warn!("median timings are not monotone in n");
            }
            if let Some(dir) = &common.out {
                write(dir, "bench.tsv", &table)?;
            }
        }
        Command::VerifyBounds { common } => {
            let mut cfg: BoundsConfig = read_toml(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let report = verify_bounds(&cfg)?;
            let table = report.to_tsv();
            print!("{table}");
            if let Some(dir) = &common.out {
                write(dir, "bounds.tsv", &table)?;
            }
        }
        Command::GenData { common, format } => {
            let (cfg, _) = load_run_config(&common)?;
            let mut gen = match (cfg.data.source, cfg.data.synthetic) {
                (DataSource::Synthetic, Some(g)) => g,
                _ => return Err(Error::config("gen-data needs source = \"synthetic\"")),
            };
            if let Some(seed) = common.seed {
                gen.seed = seed;
            }
            let ds = generate_union_of_subspaces(&gen)?;
            let dir = &cfg.output.dir;
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            match format {
                FileFormat::RawF64 => save_columns_raw(dir.join("data.raw"), ds.data.values())?,
                FileFormat::Csv => save_rows_csv(dir.join("data.csv"), &ds.data.values().transpose())?,
            }
            save_labels(&dir.join("labels.txt"), &ds.labels)?;
            println!("wrote {} samples of dimension {} to {}", ds.data.n(), ds.data.dim(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
