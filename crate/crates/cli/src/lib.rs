//! Command-line driver: reads an experiment config, runs one of the
//! experiment commands and writes CSV tables plus a run manifest.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::commands::{CommandError, CommandOutput, EXIT_OK, EXIT_USAGE};
use crate::config::{load_file_config, resolve, MethodChoice, Overrides, RunConfig};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "bbis",
    version,
    about = "Black-box importance sampling for VaR and CVaR"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One VaR / CVaR estimate per tail level.
    Estimate(RunArgs),
    /// Cross-validate `h` over the grid given in the config.
    Crossval(RunArgs),
    /// Replicated IS and naive runs, relative RMSE and naive sample complexity.
    Benchmark(RunArgs),
    /// Coefficient of variation of IS and naive CVaR per tail level.
    Varratio(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Crossval(_) => "crossval",
            Command::Benchmark(_) => "benchmark",
            Command::Varratio(_) => "varratio",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Estimate(a)
            | Command::Crossval(a)
            | Command::Benchmark(a)
            | Command::Varratio(a) => a,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML) or a manifest (JSON) from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Base seed; every replication seed is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    /// Tail level; repeat to give several. Replaces the levels in the config.
    #[arg(long = "beta")]
    pub betas: Vec<f64>,
    /// Fixed hyper-parameter, replacing the config's rule.
    #[arg(long)]
    pub h: Option<f64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            betas: self.betas.clone(),
            h: self.h,
            method: self.method,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.exit_code
        }
    }
}

fn execute(command: &Command) -> Result<i32, CommandError> {
    let args = command.args();
    let started = Instant::now();
    let usage = |message: String| CommandError {
        exit_code: EXIT_USAGE,
        message,
    };

    let file = load_file_config(&args.config).map_err(|e| usage(e.to_string()))?;
    let cfg = resolve(file, &args.overrides()).map_err(|e| usage(e.to_string()))?;

    let output = match args.threads {
        Some(0) => return Err(usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| usage(format!("cannot start {n} worker threads: {e}")))?
            .install(|| dispatch(command, &cfg))?,
        None => dispatch(command, &cfg)?,
    };

    std::fs::create_dir_all(&args.out).map_err(|e| {
        usage(format!(
            "cannot create output directory {}: {e}",
            args.out.display()
        ))
    })?;
    let mut outputs = Vec::new();
    for table in &output.tables {
        let path = output::write_atomic(&args.out, table.file_name, &table.bytes)
            .map_err(|e| usage(format!("cannot write {}: {e}", table.file_name)))?;
        outputs.push(path);
    }
    let manifest = RunManifest {
        command: command.name().to_string(),
        config_path: args.config.clone(),
        resolved: cfg.resolved.clone(),
        outputs: outputs.clone(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: args.threads,
        notes: output.notes.clone(),
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    let manifest_name = format!("{}.manifest.json", command.name());
    output::write_atomic(&args.out, &manifest_name, &json)
        .map_err(|e| usage(format!("cannot write {manifest_name}: {e}")))?;
    for path in &outputs {
        println!("wrote {}", path.display());
    }
    Ok(output.exit_code)
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    match command {
        Command::Estimate(_) => commands::cmd_estimate(cfg),
        Command::Crossval(_) => commands::cmd_crossval(cfg),
        Command::Benchmark(_) => commands::cmd_benchmark(cfg),
        Command::Varratio(_) => commands::cmd_varratio(cfg),
    }
}
