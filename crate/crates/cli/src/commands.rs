use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use trainscape::data::{
    extract_sequences, write_token_cache, Corpus, DataReport, SequenceSet, REFERENCE_VOCAB_SIZE,
};
use trainscape::fractal::{
    binarize_convergence, box_count_dimension, calibrate, histogram_mu, sobel_edges,
    DimensionEstimate, EdgeThreshold,
};
use trainscape::model::{generate, param_count, Transformer};
use trainscape::render::{render_heatmap, write_ppm, RgbImage};
use trainscape::sweep::{
    continue_sweep, load_result, run_sweep, DataSpec, SweepMeta, SweepOptions, SweepResult,
};
use trainscape::training::{train_with, ConvergenceReport};
use trainscape::Error;

use crate::config::Config;
use crate::{init_logging, Cli, Command, DataArgs, RunArgs};

/// The calibration ran but at least one check missed its target.
#[derive(Debug)]
pub struct CalibrationFailed(pub Vec<String>);

impl fmt::Display for CalibrationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "calibration failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for CalibrationFailed {}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s)
}

fn apply_data(config: &mut Config, args: &DataArgs) {
    if let Some(c) = &args.corpus {
        config.data.corpus = Some(c.clone());
    }
    if let Some(s) = args.stride {
        config.data.stride = s;
    }
    if args.no_strip {
        config.data.strip = false;
    }
}

fn apply_run(config: &mut Config, args: &RunArgs) {
    if let Some(n) = args.steps {
        config.run.n_steps = n;
    }
    if let Some(b) = args.batch_size {
        config.run.batch_size = b;
    }
}

/// Loads the corpus and sizes the model vocabulary to it.
fn load_data(config: &mut Config) -> Result<(Corpus, SequenceSet)> {
    let path = config.corpus()?.to_path_buf();
    if config.data.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()).into());
    }
    let corpus = Corpus::load(&path, config.data.strip)?;
    if config.model.vocab_size != corpus.vocab.len() {
        log::info!(
            "model vocabulary set to the corpus size {} (configured {})",
            corpus.vocab.len(),
            config.model.vocab_size
        );
        config.model.vocab_size = corpus.vocab.len();
    }
    config.model.validate()?;
    let sequences = extract_sequences(
        corpus.stream.clone(),
        config.model.context_len + 1,
        config.data.stride,
    )?;
    log::info!(
        "{}: {} characters, vocabulary {}, {} sequences (window {}, stride {})",
        path.display(),
        corpus.stream.len(),
        corpus.vocab.len(),
        sequences.len(),
        sequences.window(),
        sequences.stride()
    );
    Ok((corpus, sequences))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(seed) = cli.seed {
        config.model.seed = seed;
        config.run.seed = seed;
    }
    if config.workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()).into());
    }
    let resume = match &cli.command {
        Command::Sweep { resume, .. } => resume.clone(),
        _ => None,
    };
    let out = match (&cli.out, &resume) {
        (Some(out), Some(dir)) if out != dir => {
            return Err(
                Error::Config("--out must match --resume when both are given".into()).into(),
            )
        }
        (_, Some(dir)) => dir.clone(),
        (Some(out), None) => out.clone(),
        (None, None) => PathBuf::from("out"),
    };
    init_logging(&out, cli.quiet)?;

    match cli.command {
        Command::Data { data } => {
            apply_data(&mut config, &data);
            cmd_data(config, &out)
        }
        Command::Train {
            data,
            run,
            lr_att,
            lr_fc,
            prompt,
            length,
        } => {
            apply_data(&mut config, &data);
            apply_run(&mut config, &run);
            if let Some(v) = lr_att {
                config.run.lr_att = v;
            }
            if let Some(v) = lr_fc {
                config.run.lr_fc = v;
            }
            if let Some(p) = prompt {
                config.generate.prompt = p;
            }
            if let Some(n) = length {
                config.generate.length = n;
            }
            cmd_train(config, &out)
        }
        Command::Sweep {
            data,
            run,
            preset,
            resume,
            max_cells,
        } => {
            if let Some(p) = preset {
                config.grid = p.grid();
                config.run.n_steps = p.steps();
            }
            apply_data(&mut config, &data);
            apply_run(&mut config, &run);
            match resume {
                Some(dir) => cmd_resume(config, &dir, max_cells, cli.seed.is_some()),
                None => cmd_sweep(config, &out, max_cells),
            }
        }
        Command::Analyze {
            sweep,
            binarize,
            bins,
        } => {
            if let Some(b) = binarize {
                config.analysis.binarize = b;
            }
            if let Some(b) = bins {
                config.analysis.bins = b;
            }
            cmd_analyze(config, &sweep, &out)
        }
        Command::Render { sweep } => cmd_render(config, &sweep, &out),
        Command::Calibrate => cmd_calibrate(config, &out),
    }
}

fn cmd_data(mut config: Config, out: &Path) -> Result<()> {
    let (corpus, sequences) = load_data(&mut config)?;
    if corpus.vocab.len() != REFERENCE_VOCAB_SIZE {
        log::warn!(
            "VOCABULARY SIZE {} DIFFERS FROM THE REFERENCE {}",
            corpus.vocab.len(),
            REFERENCE_VOCAB_SIZE
        );
    }
    let report = DataReport {
        characters: corpus.stream.len(),
        vocab_size: corpus.vocab.len(),
        reference_vocab_size: REFERENCE_VOCAB_SIZE,
        sequences: sequences.len(),
        window: sequences.window(),
        stride: sequences.stride(),
        corpus_sha256: corpus.hash.clone(),
    };
    write_file(&out.join("config.json"), config.to_json())?;
    write_token_cache(&out.join("tokens.bin"), &corpus.vocab, &corpus.stream)?;
    write_json(&out.join("data.json"), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    #[serde(flatten)]
    convergence: ConvergenceReport,
    lr_att: f64,
    lr_fc: f64,
    steps_taken: usize,
    diverged_at: Option<usize>,
    initial_loss: f64,
    final_loss: f64,
    param_count: usize,
}

fn cmd_train(mut config: Config, out: &Path) -> Result<()> {
    let (corpus, sequences) = load_data(&mut config)?;
    config.run.validate()?;
    write_file(&out.join("config.json"), config.to_json())?;
    log::info!(
        "training {} parameters for {} steps (lr_att {:e}, lr_fc {:e})",
        param_count(&config.model),
        config.run.n_steps,
        config.run.lr_att,
        config.run.lr_fc
    );
    let every = (config.run.n_steps / 20).max(1);
    let outcome = train_with(&config.model, &config.run, &sequences, |step, loss| {
        if step % every == 0 {
            log::info!("step {step}: loss {loss:.6}");
        }
    })?;
    let trace = &outcome.trace;
    let report = trace.report(&config.run.criteria)?;

    let mut csv = String::from("step,loss,normalized\n");
    for (step, norm) in trace.normalized.iter().enumerate() {
        let raw = trace
            .raw
            .get(step)
            .map(|v| v.to_string())
            .unwrap_or_default();
        csv.push_str(&format!("{step},{raw},{norm}\n"));
    }
    write_file(&out.join("loss.csv"), csv)?;

    let summary = TrainReport {
        convergence: report,
        lr_att: config.run.lr_att,
        lr_fc: config.run.lr_fc,
        steps_taken: trace.raw.len(),
        diverged_at: trace.diverged_at,
        initial_loss: trace.raw[0],
        final_loss: *trace.raw.last().expect("at least one step"),
        param_count: param_count(&config.model),
    };
    write_json(&out.join("report.json"), &summary)?;

    let model = Transformer::new(config.model.clone())?;
    let sample = generate(
        &model,
        &outcome.params,
        &corpus.vocab,
        &config.generate.prompt,
        config.generate.length,
        config.model.temperature,
        config.run.seed,
    )?;
    write_file(&out.join("sample.txt"), format!("{sample}\n"))?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn sweep_options(config: &Config, dir: &Path, max_cells: Option<usize>) -> SweepOptions {
    SweepOptions {
        workers: config.workers,
        checkpoint_dir: Some(dir.to_path_buf()),
        max_new_cells: max_cells,
        ..SweepOptions::default()
    }
}

fn finish_sweep(result: &SweepResult) -> Result<()> {
    log::info!(
        "{} of {} cells complete",
        result.completed(),
        result.grid().cells()
    );
    let converged = result.converged_values().iter().filter(|&&c| c).count();
    println!(
        "{}",
        serde_json::json!({
            "completed": result.completed(),
            "cells": result.grid().cells(),
            "converged": converged,
            "failed": result.notes().len(),
        })
    );
    Ok(())
}

fn cmd_sweep(mut config: Config, out: &Path, max_cells: Option<usize>) -> Result<()> {
    let (corpus, sequences) = load_data(&mut config)?;
    let data = DataSpec {
        corpus: config.corpus()?.to_path_buf(),
        corpus_sha256: corpus.hash.clone(),
        stride: config.data.stride,
        strip: config.data.strip,
    };
    let meta = SweepMeta::new(config.grid, config.model.clone(), config.run.clone(), data);
    meta.validate()?;
    write_file(&out.join("config.json"), config.to_json())?;
    let result = run_sweep(meta, &sequences, &sweep_options(&config, out, max_cells))?;
    finish_sweep(&result)
}

fn cmd_resume(
    mut config: Config,
    dir: &Path,
    max_cells: Option<usize>,
    seed_flag: bool,
) -> Result<()> {
    if seed_flag {
        return Err(Error::Config("--seed cannot change a sweep being resumed".into()).into());
    }
    let result = load_result(dir)?;
    let meta = &result.meta;
    config.grid = meta.grid;
    config.model = meta.model.clone();
    config.run = meta.run.clone();
    config.data.corpus = Some(meta.data.corpus.clone());
    config.data.stride = meta.data.stride;
    config.data.strip = meta.data.strip;
    let sequences = meta
        .data
        .load_sequences(&meta.model)
        .context("reloading the sweep corpus")?;
    log::info!(
        "resuming {}: {} of {} cells done",
        dir.display(),
        result.completed(),
        meta.grid.cells()
    );
    write_file(&dir.join("config.json"), config.to_json())?;
    let result = continue_sweep(result, &sequences, &sweep_options(&config, dir, max_cells))?;
    finish_sweep(&result)
}

#[derive(Serialize)]
struct DimensionReport {
    /// Slope rounded to four decimals; `None` when the edge map is empty.
    dimension: Option<f64>,
    estimate: Option<DimensionEstimate>,
    edge_pixels: usize,
    map_width: usize,
    map_height: usize,
}

fn cmd_analyze(config: Config, sweep: &Path, out: &Path) -> Result<()> {
    let result = load_result(sweep)?;
    result.require_complete()?;
    write_file(&out.join("config.json"), config.to_json())?;
    let analysis = &config.analysis;

    let binary = binarize_convergence(&result, analysis.binarize)?;
    write_ppm(&RgbImage::from_mask(&binary), &out.join("binary.ppm"))?;
    let threshold = analysis
        .sobel_threshold
        .unwrap_or_else(|| EdgeThreshold::default_for(&binary));
    let edges = sobel_edges(&binary, threshold)?;
    write_ppm(&RgbImage::from_mask(&edges), &out.join("edges.ppm"))?;

    let padded = edges.padded_pow2_square();
    let estimate = if edges.count_set() == 0 {
        log::warn!("the edge map is empty (no boundary); dimension is undefined");
        None
    } else {
        Some(box_count_dimension(&padded, analysis.box_sizes.as_deref())?)
    };
    let csv = match &estimate {
        Some(e) => e.to_csv(),
        None => "epsilon,count\n".to_string(),
    };
    write_file(&out.join("boxcount.csv"), csv)?;
    let report = DimensionReport {
        dimension: estimate.as_ref().map(DimensionEstimate::dimension),
        estimate,
        edge_pixels: edges.count_set(),
        map_width: binary.width(),
        map_height: binary.height(),
    };
    write_json(&out.join("dimension.json"), &report)?;

    let histogram = histogram_mu(&result, analysis.bins)?;
    write_file(&out.join("histogram.csv"), histogram.to_csv())?;
    println!(
        "{}",
        serde_json::json!({ "dimension": report.dimension, "edge_pixels": report.edge_pixels })
    );
    Ok(())
}

fn cmd_render(config: Config, sweep: &Path, out: &Path) -> Result<()> {
    let result = load_result(sweep)?;
    let image = render_heatmap(&result)?;
    write_file(&out.join("config.json"), config.to_json())?;
    write_ppm(&image, &out.join("heatmap.ppm"))?;
    Ok(())
}

fn cmd_calibrate(config: Config, out: &Path) -> Result<()> {
    write_file(&out.join("config.json"), config.to_json())?;
    let (report, images) = calibrate()?;
    write_json(&out.join("calibration.json"), &report)?;
    write_ppm(
        &RgbImage::from_mask(&images.sierpinski),
        &out.join("sierpinski.ppm"),
    )?;
    write_ppm(
        &RgbImage::from_raster(&images.mandelbrot),
        &out.join("mandelbrot.ppm"),
    )?;
    write_ppm(
        &RgbImage::from_mask(&images.mandelbrot_edges),
        &out.join("mandelbrot_edges.ppm"),
    )?;
    for check in &report.checks {
        println!(
            "{} {}: {:.4} (target {} ± {})",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.value,
            check.target,
            check.tolerance
        );
    }
    if report.pass {
        Ok(())
    } else {
        let failed = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect();
        Err(CalibrationFailed(failed).into())
    }
}
