//! Command-line harness: `train`, `sweep`, `report`, `preview`, `selftest`.

pub mod plan;
pub mod preview;
pub mod report;
pub mod selftest;

use crate::error::{Error, Result};
use crate::train::{self, RunConfig, Split, METRICS_FILE};
use clap::{Parser, Subcommand};
use plan::{ExperimentPlan, FinalRow, SweepRow, FINAL_HEADER, SWEEP_HEADER};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SELFTEST: i32 = 4;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const FINAL_FILE: &str = "final.csv";

#[derive(Parser, Debug)]
#[command(
    name = "vadlab",
    version,
    about = "Multi-task vs multi-view self-supervised training lab"
)]
pub struct Cli {
    /// Directory holding the CIFAR archives (falls back to VADLAB_DATA_DIR).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one run from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's output_dir, else runs/<run_id>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configuration of an experiment plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Summarize finished runs.
    Report {
        #[arg(long)]
        runs: PathBuf,
    },
    /// Render every view of an image as PPM files.
    Preview {
        #[arg(long)]
        spec: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write all views side by side into grid.ppm.
        #[arg(long)]
        grid: bool,
    },
    /// Run the built-in verification suites.
    Selftest,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes the config echo, then trains into `out_dir`.
pub fn train_into(
    cfg: &RunConfig,
    data_dir: Option<&Path>,
    out_dir: &Path,
) -> Result<train::RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(report::CONFIG_FILE), cfg.to_json())?;
    train::run(cfg, data_dir, out_dir)
}

pub fn cmd_train(config: &Path, out: Option<&Path>, data_dir: Option<&Path>) -> Result<PathBuf> {
    let cfg = RunConfig::from_json(&read_text(config)?)?;
    let dir = match (out, &cfg.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("runs").join(&cfg.run_id),
    };
    let r = train_into(&cfg, data_dir, &dir)?;
    log::info!(
        "{}: {} metric rows written to {}",
        cfg.run_id,
        r.rows.len(),
        dir.display()
    );
    Ok(dir)
}

/// Executes every planned run in order, appending to the combined CSV
/// after each run. Returns the combined CSV path.
pub fn cmd_sweep(plan_path: &Path, data_dir: Option<&Path>) -> Result<PathBuf> {
    let plan = ExperimentPlan::from_json(&read_text(plan_path)?)?;
    let runs = plan.expand()?;
    let out = &plan.output_dir;
    std::fs::create_dir_all(out)?;
    let sweep_path = out.join(SWEEP_FILE);
    let mut sweep = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&sweep_path)?;
    sweep.write_record(SWEEP_HEADER)?;
    let mut finals = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(out.join(FINAL_FILE))?;
    finals.write_record(FINAL_HEADER)?;
    sweep.flush()?;
    finals.flush()?;
    for (i, planned) in runs.iter().enumerate() {
        let cfg = &planned.config;
        log::info!("[{}/{}] {}", i + 1, runs.len(), cfg.run_id);
        let dir = out.join("runs").join(&cfg.run_id);
        let result = train_into(cfg, data_dir, &dir)?;
        let c = &planned.coords;
        for r in &result.rows {
            sweep.serialize(SweepRow {
                run_id: cfg.run_id.clone(),
                pipeline: c.pipeline,
                shared_blocks: c.shared_blocks,
                views: c.views.clone(),
                view_count: c.view_count,
                seed: c.seed,
                epoch: r.epoch,
                split: r.split,
                loss: r.loss,
                acc_single: r.acc_single,
                acc_agg: r.acc_agg,
                lr: r.lr,
                wall_ms: r.wall_ms,
            })?;
        }
        let last = result.rows.iter().rev().find(|r| r.split == Split::Test);
        finals.serialize(FinalRow {
            run_id: cfg.run_id.clone(),
            pipeline: c.pipeline,
            shared_blocks: c.shared_blocks,
            views: c.views.clone(),
            view_count: c.view_count,
            seed: c.seed,
            epochs: cfg.epochs,
            acc_single: last.map(|r| r.acc_single),
            acc_agg: last.and_then(|r| r.acc_agg),
        })?;
        sweep.flush()?;
        finals.flush()?;
    }
    Ok(sweep_path)
}

pub fn cmd_report(runs: &Path) -> Result<String> {
    let (rows, groups) = report::collect(runs)?;
    let text = report::render(&rows, &groups);
    report::write_csv(&runs.join(report::REPORT_FILE), &rows)?;
    Ok(text)
}

/// Outcome of `selftest`: rendered report and whether every suite passed.
pub fn cmd_selftest(analytic_offset: f64) -> (String, bool) {
    let suites = selftest::run_all(analytic_offset);
    let mut text = String::new();
    for s in &suites {
        text += &format!(
            "{:<16} {:>4}/{:<4} {}\n",
            s.name,
            s.passed,
            s.total,
            if s.ok() { "ok" } else { "FAILED" }
        );
        for f in &s.failures {
            text += &format!("    {f}\n");
        }
    }
    (text, suites.iter().all(selftest::Suite::ok))
}

fn exit_with(e: &Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

/// Parses `args` and runs the chosen command, returning the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let data_dir = cli.data_dir.as_deref();
    match cli.command {
        Command::Train { config, out } => match cmd_train(&config, out.as_deref(), data_dir) {
            Ok(dir) => {
                println!("{}", dir.join(METRICS_FILE).display());
                EXIT_OK
            }
            Err(e) => exit_with(&e),
        },
        Command::Sweep { plan } => match cmd_sweep(&plan, data_dir) {
            Ok(path) => {
                println!("{}", path.display());
                EXIT_OK
            }
            Err(e) => exit_with(&e),
        },
        Command::Report { runs } => match cmd_report(&runs) {
            Ok(text) => {
                print!("{text}");
                EXIT_OK
            }
            Err(e) => exit_with(&e),
        },
        Command::Preview {
            spec,
            input,
            out,
            grid,
        } => match preview::preview(&spec, &input, &out, grid) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                EXIT_OK
            }
            Err(e) => exit_with(&e),
        },
        Command::Selftest => {
            let offset = match std::env::var(selftest::GRAD_OFFSET_ENV) {
                Ok(v) => match v.parse::<f64>() {
                    Ok(x) => x,
                    Err(_) => {
                        return exit_with(&Error::Config(format!(
                            "{}={v} is not a number",
                            selftest::GRAD_OFFSET_ENV
                        )))
                    }
                },
                Err(_) => 0.0,
            };
            let (text, ok) = cmd_selftest(offset);
            print!("{text}");
            if ok {
                EXIT_OK
            } else {
                EXIT_SELFTEST
            }
        }
    }
}
