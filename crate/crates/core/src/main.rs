use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gbmpo::runner::{
    compare_report, parse_config, read_summary, run_experiment, validate_seeds, RunOptions, OUTPUT_ROOT_ENV,
};

#[derive(Parser)]
#[command(name = "gbmpo", version, about = "Bregman-regularized group policy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every replicate seed of a configuration and write metrics + summary.
    Run {
        config: PathBuf,
        /// Comma-separated replicate seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory (default: config `output_dir`, else
        /// $GBMPO_OUTPUT_ROOT/<config name>, else runs/<config name>).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Maximum concurrently running seeds.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Stamp metric records with wall-clock time.
        #[arg(long)]
        timestamps: bool,
    },
    /// Print a comparison table from one or more summary.csv files.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also write the machine-readable table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
}

fn default_output_dir(config: &Path, configured: Option<PathBuf>) -> PathBuf {
    if let Some(dir) = configured {
        return dir;
    }
    let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(stem)
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = parse_config(&config).map_err(|e| e.to_string())?;
            println!(
                "ok: {} ({} prompts, {} seeds{})",
                cfg.label,
                cfg.task.num_prompts(),
                cfg.seeds.len(),
                if cfg.es.is_some() { ", es" } else { "" }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, seeds, output_dir, jobs, timestamps } => {
            let mut cfg = parse_config(&config).map_err(|e| e.to_string())?;
            if let Some(seeds) = seeds {
                cfg.seeds = validate_seeds(seeds).map_err(|e| e.to_string())?;
            }
            let output_dir = output_dir.unwrap_or_else(|| default_output_dir(&config, cfg.output_dir.clone()));
            let summary = run_experiment(&cfg, &RunOptions { output_dir, jobs, timestamps }).map_err(|e| e.to_string())?;
            let report = compare_report(std::slice::from_ref(&summary.row)).map_err(|e| e.to_string())?;
            print!("{}", report.text);
            println!("wrote {}", summary.output_dir.display());
            let mut failed = false;
            for r in summary.failed_runs() {
                eprintln!("run {} aborted: {}", r.run_id, r.error.as_deref().unwrap_or("unknown error"));
                failed = true;
            }
            Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Report { summaries, csv } => {
            let mut rows = Vec::new();
            for path in &summaries {
                rows.extend(read_summary(path).map_err(|e| e.to_string())?);
            }
            let report = compare_report(&rows).map_err(|e| e.to_string())?;
            print!("{}", report.text);
            if let Some(path) = csv {
                std::fs::write(&path, &report.csv).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
