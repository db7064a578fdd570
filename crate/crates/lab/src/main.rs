use std::path::PathBuf;
use std::process::ExitCode;

use boussinesq_lab::{load_config, run_command, Command, ExperimentConfig, LabError, RunOptions};
use clap::{CommandFactory, Parser};

/// Environment variable that overrides the output directory.
const OUT_ENV: &str = "BOUSSINESQ_OUT";

#[derive(Parser, Debug)]
#[command(name = "boussinesq-lab", version, about = "Boussinesq optimal-control experiments")]
struct Cli {
    /// One of: solve, optimize, taylor-test, duality-check, mms, tikhonov-path,
    /// stability-sweep, growth-probe, second-order-check, measure-condition
    command: String,
    /// JSON configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config and BOUSSINESQ_OUT)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write a field snapshot every k levels
    #[arg(long = "snapshot-stride")]
    snapshot_stride: Option<usize>,
}

fn run(cli: &Cli) -> Result<boussinesq_lab::Outcome, LabError> {
    let cmd: Command = cli.command.parse()?;
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let opts = RunOptions {
        threads: cli.threads,
        snapshot_stride: cli.snapshot_stride,
    };
    log::info!("{cmd}: config hash {}, output {}", cfg.hash(), out.display());
    run_command(cmd, &cfg, &out, opts)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            for l in &o.lines {
                println!("{l}");
            }
            println!("wrote {} files", o.manifest.files.len() + 1);
            if o.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: check failed", cli.command);
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, LabError::Usage(_)) {
                eprintln!("{}", Cli::command().render_usage());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
