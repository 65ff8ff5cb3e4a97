//! `ciblp`: config-driven SER, block-length and timing sweeps plus the validation suite.
//!
//! Exit codes: 0 success, 1 I/O or solver error, 2 config error, 3 solver
//! failure budget exceeded, 4 validation failure.

mod config;
mod manifest;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use ciblp::sim::{run_blocklen, run_ser, run_timing, ExperimentConfig, SerResult};
use ciblp::validation::run_all;
use ciblp::CiError;
use clap::{Parser, Subcommand};

use crate::config::{parse_config, ConfigError};
use crate::manifest::{ErrorRecord, FailureRecord, RunManifest};

const VERSION: &str = concat!("ciblp v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "ciblp", version, about = "Constructive-interference block-level precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML); required except for `validate`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV results, plot scripts and the manifest.
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo blocks; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// SER versus SNR at block length N.
    Ser,
    /// SER versus block length over `sweep.block_lengths`.
    Blocklen,
    /// QP solve time versus block length over `sweep.block_lengths`.
    Timing,
    /// Property and oracle suite; exits 4 if any check fails.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ser => "ser",
            Command::Blocklen => "blocklen",
            Command::Timing => "timing",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug)]
struct RunError {
    kind: &'static str,
    message: String,
    exit_code: u8,
    line: Option<usize>,
}

impl RunError {
    fn io(context: &Path, e: std::io::Error) -> Self {
        Self {
            kind: "io",
            message: format!("{}: {e}", context.display()),
            exit_code: 1,
            line: None,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self {
            kind: "config",
            message: e.message,
            exit_code: 2,
            line: e.line,
        }
    }
}

impl From<CiError> for RunError {
    fn from(e: CiError) -> Self {
        let (kind, exit_code) = match e {
            CiError::InvalidConfig(_) => ("config", 2),
            CiError::FailureBudgetExceeded { .. } => ("failure_budget", 3),
            _ => ("solver", 1),
        };
        Self {
            kind,
            message: e.to_string(),
            exit_code,
            line: None,
        }
    }
}

fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, RunError> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut config = parse_config(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(Some(config))
}

fn record_failures(manifest: &mut RunManifest, result: &SerResult) {
    for e in result.entries.iter().filter(|e| e.failures > 0) {
        let record = FailureRecord {
            scheme: e.scheme.name().into(),
            block_length: e.block_length,
            failures: e.failures,
            attempts: e.attempts,
        };
        if !manifest.solver_failures.contains(&record) {
            eprintln!(
                "note: {} at N={}: {} of {} solves failed and were excluded",
                record.scheme, record.block_length, record.failures, record.attempts
            );
            manifest.solver_failures.push(record);
        }
    }
}

fn print_ser(result: &SerResult) {
    println!("{:<8} {:>4} {:>8} {:>12} {:>12} {:>10}", "scheme", "N", "snr_db", "symbols", "SER", "±95%");
    for e in &result.entries {
        println!(
            "{:<8} {:>4} {:>8} {:>12} {:>12.4e} {:>10.2e}",
            e.scheme.name(),
            e.block_length,
            e.snr_db,
            e.symbols_sent,
            e.ser,
            e.ci95_halfwidth
        );
    }
}

fn run(cli: &Cli, manifest: &mut RunManifest) -> Result<(), RunError> {
    let config = load_config(cli)?;
    manifest.config = config.clone();
    let dir = cli.out_dir.as_path();
    let stem = cli.command.name();
    let (csv, plot) = output::artifact_paths(dir, stem);
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e| RunError::io(&p, e)
    };

    if let Command::Validate = cli.command {
        let seed = cli.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
        manifest.seed = Some(seed.to_string());
        let reports = run_all(seed);
        for r in &reports {
            println!("{r}");
        }
        output::write_validate_csv(&csv, &reports).map_err(io_err(&csv))?;
        output::write_validate_plot(&plot, &csv).map_err(io_err(&plot))?;
        manifest.outputs = vec![format!("{stem}.csv"), format!("{stem}.gp")];
        let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
        if !failed.is_empty() {
            return Err(RunError {
                kind: "validation",
                message: format!("failed checks: {}", failed.join(", ")),
                exit_code: 4,
                line: None,
            });
        }
        return Ok(());
    }

    let config = config.ok_or_else(|| RunError {
        kind: "config",
        message: format!("--config is required for `{stem}`"),
        exit_code: 2,
        line: None,
    })?;
    manifest.seed = Some(config.seed.to_string());
    match cli.command {
        Command::Ser | Command::Blocklen => {
            let result = if let Command::Ser = cli.command {
                run_ser(&config)?
            } else {
                run_blocklen(&config)?
            };
            record_failures(manifest, &result);
            print_ser(&result);
            output::write_ser_csv(&csv, &config, &result).map_err(io_err(&csv))?;
            if let Command::Ser = cli.command {
                output::write_ser_plot(&plot, &csv, &config).map_err(io_err(&plot))?;
            } else {
                output::write_blocklen_plot(&plot, &csv, &config).map_err(io_err(&plot))?;
            }
        }
        Command::Timing => {
            let result = run_timing(&config)?;
            for e in &result.entries {
                println!(
                    "{:<8} N={:<4} QPs/block={:<4} mean={:.3e}s p95={:.3e}s total={:.3e}s",
                    e.scheme.name(),
                    e.block_length,
                    e.qp_per_block,
                    e.mean_s,
                    e.p95_s,
                    e.total_s
                );
            }
            output::write_timing_csv(&csv, &config, &result).map_err(io_err(&csv))?;
            output::write_timing_plot(&plot, &csv, &config).map_err(io_err(&plot))?;
        }
        Command::Validate => unreachable!("handled above"),
    }
    manifest.outputs = vec![format!("{stem}.csv"), format!("{stem}.gp")];
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = timestamp();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    if let Err(e) = fs::create_dir_all(&cli.out_dir) {
        eprintln!("error: cannot create {}: {e}", cli.out_dir.display());
        return ExitCode::from(1);
    }

    let mut manifest = RunManifest {
        version: VERSION.into(),
        subcommand: cli.command.name().into(),
        seed: None,
        started,
        finished: String::new(),
        status: "ok".into(),
        outputs: Vec::new(),
        solver_failures: Vec::new(),
        error: None,
        config: None,
    };
    let code = match run(&cli, &mut manifest) {
        Ok(()) => 0,
        Err(e) => {
            match e.line {
                Some(line) => eprintln!("error ({}): line {line}: {}", e.kind, e.message),
                None => eprintln!("error ({}): {}", e.kind, e.message),
            }
            manifest.status = "error".into();
            manifest.error = Some(ErrorRecord {
                kind: e.kind.into(),
                message: e.message,
                exit_code: e.exit_code.into(),
                line: e.line,
            });
            e.exit_code
        }
    };
    manifest.finished = timestamp();
    if let Err(e) = manifest.write(&cli.out_dir) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
