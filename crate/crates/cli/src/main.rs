//! Command-line front end: data ingestion, single runs, sweeps, analysis,
//! rendering and calibration.

mod commands;
mod config;

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trainscape::fractal::Binarization;

use config::Preset;

#[derive(Parser, Debug)]
#[command(
    name = "trainscape",
    version,
    about = "Trainability landscapes of a character transformer"
)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for both initialization and batch order.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    /// Corpus text file (UTF-8).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Distance between consecutive training windows.
    #[arg(long)]
    stride: Option<usize>,
    /// Keep Project Gutenberg header and footer text.
    #[arg(long)]
    no_strip: bool,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Training steps per run.
    #[arg(long)]
    steps: Option<usize>,
    /// Sequences per minibatch.
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tokenize a corpus and report vocabulary and sequence counts.
    Data {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train once and score the run.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        lr_att: Option<f64>,
        #[arg(long)]
        lr_fc: Option<f64>,
        /// Prompt for the generated sample.
        #[arg(long)]
        prompt: Option<String>,
        /// Characters to generate after the prompt.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Train every cell of a learning-rate grid.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Built-in grid sized for a desktop CPU.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Continue the sweep stored in this directory.
        #[arg(long, conflicts_with_all = ["preset", "corpus", "stride", "no_strip", "steps", "batch_size"])]
        resume: Option<PathBuf>,
        /// Stop after this many new cells.
        #[arg(long)]
        max_cells: Option<usize>,
    },
    /// Binary map, edges, boundary dimension and μ histogram of a sweep.
    Analyze {
        /// Sweep directory.
        sweep: PathBuf,
        /// `converged` or `mu-above:<level>`.
        #[arg(long, value_parser = config::parse_binarization)]
        binarize: Option<Binarization>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Color heatmap of a sweep.
    Render {
        /// Sweep directory.
        sweep: PathBuf,
    },
    /// Check the dimension estimator on reference fractals.
    Calibrate,
}

/// Log lines go to stderr and, once the output directory is known, to its
/// `run.log`. Timestamps appear only there.
struct Tee {
    file: Option<fs::File>,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        io::stderr().write_all(buf)?;
        if let Some(f) = &mut self.file {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        io::stderr().flush()?;
        if let Some(f) = &mut self.file {
            f.flush()?;
        }
        Ok(())
    }
}

fn init_logging(out: &Path, quiet: bool) -> anyhow::Result<()> {
    fs::create_dir_all(out)
        .map_err(|e| trainscape::Error::Config(format!("cannot create {}: {e}", out.display())))?;
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("run.log"))
        .ok();
    let default = if quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .target(env_logger::Target::Pipe(Box::new(Tee { file })))
        .try_init()
        .ok();
    Ok(())
}

/// Error classes and the exit codes they map to.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    use trainscape::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) => ("config", 2),
                E::Input(_) | E::Format { .. } | E::Io { .. } | E::Dimension { .. } => ("data", 3),
                E::Incomplete { .. } => ("incomplete", 4),
                E::Contract(_) => ("internal", 1),
            };
        }
        if cause
            .downcast_ref::<commands::CalibrationFailed>()
            .is_some()
        {
            return ("calibration", 1);
        }
    }
    ("internal", 1)
}

fn report_error(kind: &str, code: u8, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            return report_error("config", 2, first.trim_start_matches("error: "));
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            report_error(kind, code, &format!("{err:#}"))
        }
    }
}
