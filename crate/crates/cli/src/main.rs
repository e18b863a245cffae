//! `rmcos` command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
//! 3 training divergence, 4 I/O or checkpoint error, 5 failed verification.
//! Diagnostics go to stderr; stdout carries only results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rmcos::data::{serialize_idx, DataError, IdxData, IdxTensor};
use rmcos::harness::{
    evaluate_checkpoint, generate_samples, run_seed_variance, sample_count_csv, sweep_margin,
    sweep_sample_count_checkpoint, train, Checkpoint, ExperimentConfig, HarnessError, RunSummary,
};
use rmcos::verify::{self, Objectives};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "rmcos", version, about = "GAN loss laboratory: training, evaluation, sweeps and property checks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set adam.lr=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory for artifacts.
    #[arg(long, env = "RMCOS_OUT", global = true)]
    out: Option<PathBuf>,
    /// Training seed (train, sweeps) or sampling seed (eval, gen, verify).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one configuration.
    Train,
    /// Evaluate a checkpoint's generator.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Generated sample count (default: the checkpoint's eval_samples).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train every (margin, seed) pair of a margin-cosine config.
    SweepMargin {
        #[arg(long, value_delimiter = ',', default_value = "0,0.15,0.8")]
        margins: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// FID and IS of a checkpoint at increasing sample counts.
    SweepSamples {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "500,2000,10000")]
        counts: Vec<usize>,
    },
    /// Train one run per seed and tabulate best-FID spread.
    SeedVariance {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        seeds: Vec<u64>,
    },
    /// Write generated samples: CSV for point data, IDX u8 for images.
    Gen {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 60)]
        n: usize,
        /// Output file (default: `samples.csv` or `samples.idx` under --out).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the property suite.
    Verify {
        /// Run only the named property.
        #[arg(long)]
        property: Option<String>,
    },
}

#[derive(Debug)]
enum CliError {
    Harness(HarnessError),
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Verify(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Harness(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Verify(_) => EXIT_VERIFY,
            CliError::Harness(e) if e.is_config() => EXIT_CONFIG,
            CliError::Harness(HarnessError::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Harness(HarnessError::Io { .. } | HarnessError::Checkpoint(_)) => EXIT_IO,
            CliError::Harness(HarnessError::Data(DataError::Io { .. })) => EXIT_IO,
            CliError::Harness(_) => EXIT_OTHER,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Harness(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Verify(name) => write!(f, "property {name} failed"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match &cli.command {
        Command::Train => cmd_train(common),
        Command::Eval { checkpoint, samples } => cmd_eval(common, checkpoint, *samples),
        Command::SweepMargin { margins, seeds } => cmd_sweep_margin(common, margins, seeds),
        Command::SweepSamples { checkpoint, counts } => cmd_sweep_samples(common, checkpoint, counts),
        Command::SeedVariance { seeds } => cmd_seed_variance(common, seeds),
        Command::Gen { checkpoint, n, output } => cmd_gen(common, checkpoint, *n, output.as_deref()),
        Command::Verify { property } => cmd_verify(common, property.as_deref()),
    }
}

/// Config file plus `--set` overrides, `--seed` and the output directory.
fn load_config(common: &Common, default_out: &str) -> Result<ExperimentConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path, &common.overrides)?,
        None => ExperimentConfig::from_toml_with_overrides("", &common.overrides)?,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.display().to_string();
    } else if config.output_dir.is_empty() {
        config.output_dir = default_out.to_string();
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable value")
}

fn cmd_train(common: &Common) -> Result<(), CliError> {
    let config = load_config(common, "runs/train")?;
    eprintln!("training {} for {} steps into {}", config.loss, config.steps, config.output_dir);
    let outcome = train(&config)?;
    print_summary(&outcome.summary);
    Ok(())
}

fn print_summary(summary: &RunSummary) {
    println!("{}", json(summary));
}

fn cmd_eval(common: &Common, checkpoint: &Path, samples: Option<usize>) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let n = samples.unwrap_or(ckpt.config.eval_samples);
    let seed = common.seed.unwrap_or(ckpt.config.eval_seed);
    let e = evaluate_checkpoint(&ckpt, n, seed)?;
    println!(
        "{}",
        json(&serde_json::json!({
            "step": ckpt.step,
            "samples": e.samples,
            "eval_seed": seed,
            "fid": e.fid,
            "is_mean": e.inception.mean,
            "is_std": e.inception.std,
            "modes": e.coverage.modes_covered,
            "hq_frac": e.coverage.high_quality_fraction,
        }))
    );
    Ok(())
}

fn cmd_sweep_margin(common: &Common, margins: &[f64], seeds: &[u64]) -> Result<(), CliError> {
    let config = load_config(common, "runs/sweep-margin")?;
    let table = sweep_margin(&config, margins, seeds)?;
    let dir = PathBuf::from(&config.output_dir);
    write_file(&dir.join("margin_runs.csv"), table.runs_csv().as_bytes())?;
    write_file(&dir.join("margin_summary.csv"), table.summary_csv().as_bytes())?;
    print!("{}", table.summary_csv());
    Ok(())
}

fn cmd_sweep_samples(common: &Common, checkpoint: &Path, counts: &[usize]) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let seed = common.seed.unwrap_or(ckpt.config.eval_seed);
    let rows = sweep_sample_count_checkpoint(&ckpt, counts, seed)?;
    let csv = sample_count_csv(&rows);
    if let Some(dir) = &common.out {
        write_file(&dir.join("sample_counts.csv"), csv.as_bytes())?;
    }
    print!("{csv}");
    Ok(())
}

fn cmd_seed_variance(common: &Common, seeds: &[u64]) -> Result<(), CliError> {
    let config = load_config(common, "runs/seed-variance")?;
    let table = run_seed_variance(&config, seeds)?;
    let dir = PathBuf::from(&config.output_dir);
    write_file(&dir.join("seed_variance.csv"), table.to_csv().as_bytes())?;
    print!("{}", table.to_csv());
    Ok(())
}

/// Generated points as CSV (`x,y` header for 2-D data, `x0,x1,...` otherwise).
fn samples_csv(values: &[f64], dim: usize) -> String {
    let mut out = if dim == 2 {
        String::from("x,y\n")
    } else {
        (0..dim).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",") + "\n"
    };
    for row in values.chunks_exact(dim) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).expect("write to string");
    }
    out
}

fn cmd_gen(common: &Common, checkpoint: &Path, n: usize, output: Option<&Path>) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let seed = common.seed.unwrap_or(0);
    let samples = generate_samples(&ckpt, n, seed)?;
    let dim = samples.shape()[1];
    let image_mode = ckpt.config.dataset.kind.eq_ignore_ascii_case("mnist");
    let default_name = if image_mode { "samples.idx" } else { "samples.csv" };
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(common, ".").join(default_name),
    };
    let bytes = if image_mode {
        let side = (dim as f64).sqrt().round() as usize;
        let shape = if side * side == dim { vec![n, side, side] } else { vec![n, dim] };
        let pixels = rmcos::data::denormalize_images(&samples);
        let t = IdxTensor::new(shape, IdxData::U8(pixels)).map_err(HarnessError::from)?;
        serialize_idx(&t)
    } else {
        samples_csv(samples.data(), dim).into_bytes()
    };
    write_file(&path, &bytes)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_verify(common: &Common, property: Option<&str>) -> Result<(), CliError> {
    let seed = common.seed.unwrap_or(0);
    let objectives = Objectives::default();
    let report = match property {
        Some(name) => {
            let r = verify::run_property(name, &objectives, seed).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown property {name:?}; valid: {}",
                    verify::PROPERTIES.join(", ")
                ))
            })?;
            println!("{r}");
            verify::VerifyReport { results: vec![r] }
        }
        None => verify::run_all(&objectives, seed, |r| println!("{r}")),
    };
    match report.first_failure() {
        Some(r) => Err(CliError::Verify(r.name.to_string())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_follows_dimension() {
        assert_eq!(samples_csv(&[1.0, 2.0], 2), "x,y\n1,2\n");
        assert_eq!(samples_csv(&[1.0, 2.0, 3.0], 3), "x0,x1,x2\n1,2,3\n");
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [EXIT_OTHER, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO, EXIT_VERIFY];
        for (i, a) in codes.iter().enumerate() {
            assert!(codes[i + 1..].iter().all(|b| a != b));
        }
        let e = CliError::Harness(HarnessError::Checkpoint("x".into()));
        assert_eq!(e.exit_code(), EXIT_IO);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
