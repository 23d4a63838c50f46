//! Command-line front end: `verify`, `experiment` and `calibrate`.
//!
//! Thread count follows `RAYON_NUM_THREADS`; results do not depend on it.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bloom_dyadic::harness::{
    self, calibrate, exit, run_experiment, run_suite, summarize, write_csv, ExperimentConfig, Suite, VerifyOptions,
};
use bloom_dyadic::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bloom-dyadic", version, about = "Dyadic multi-parameter harmonic analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite (or `all`).
    Verify {
        suite: String,
        /// Directory of experiment configs for calibrated suites.
        #[arg(long)]
        configs: Option<PathBuf>,
        /// Directory of calibration fixtures.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Override the tolerance multiplier stored in fixtures.
        #[arg(long)]
        multiplier: Option<f64>,
        /// Rerun calibrated experiments with a seed derived from this round.
        #[arg(long, default_value_t = 0)]
        reseed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run an experiment config, writing one CSV row per instance.
    Experiment {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Summary JSON path; defaults to the output with a `.summary.json` extension.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run an experiment config and record a calibration fixture.
    Calibrate {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Replace an existing fixture.
        #[arg(long)]
        force: bool,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Verify { suite, configs, fixtures, multiplier, reseed, json } => {
            let suites = if suite == "all" { Suite::ALL.to_vec() } else { vec![suite.parse()?] };
            let defaults = VerifyOptions::default();
            let opts = VerifyOptions {
                configs: configs.unwrap_or(defaults.configs),
                fixtures: fixtures.unwrap_or(defaults.fixtures),
                multiplier,
                reseed,
            };
            let mut ok = true;
            let mut reports = Vec::new();
            for s in suites {
                let report = run_suite(s, &opts)?;
                ok &= report.passed();
                if !json {
                    println!("{report}");
                }
                reports.push(report);
            }
            if json {
                let items: Vec<String> = reports.iter().map(|r| r.to_json()).collect();
                println!("[{}]", items.join(",\n"));
            }
            Ok(if ok { exit::PASS } else { exit::ASSERTION })
        }
        Command::Experiment { config, output, summary } => {
            let cfg = load_config(&config)?;
            let rows = run_experiment(&cfg)?;
            let file = File::create(&output).map_err(|e| io_err(&output, e))?;
            write_csv(&rows, BufWriter::new(file))?;
            let summary_path = summary.unwrap_or_else(|| output.with_extension("summary.json"));
            let s = summarize(&cfg, &rows);
            let text = s.to_json() + "\n";
            std::fs::write(&summary_path, text).map_err(|e| io_err(&summary_path, e))?;
            eprintln!("{} rows -> {}, summary -> {}", rows.len(), output.display(), summary_path.display());
            Ok(exit::PASS)
        }
        Command::Calibrate { config, output, force } => {
            let cfg = load_config(&config)?;
            if output.exists() && !force {
                return Err(Error::Io(format!("{} exists; pass --force to overwrite", output.display())));
            }
            let fixture = calibrate(&cfg)?;
            fixture.save(&output, force)?;
            eprintln!("{} groups -> {}", fixture.entries.len(), output.display());
            Ok(exit::PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        harness::exit::CONFIG
    });
    ExitCode::from(code as u8)
}
