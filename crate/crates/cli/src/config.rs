use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trainscape::fractal::{Binarization, EdgeThreshold, DEFAULT_BINS};
use trainscape::model::ModelConfig;
use trainscape::sweep::{AxisSpec, GridSpec};
use trainscape::training::TrainRunConfig;
use trainscape::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub corpus: Option<PathBuf>,
    pub stride: usize,
    /// Strip Project Gutenberg header and footer.
    pub strip: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            corpus: None,
            stride: 5,
            strip: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub prompt: String,
    pub length: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            prompt: "To be or not to be".into(),
            length: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub binarize: Binarization,
    /// Defaults to 1.0 on the binary map.
    pub sobel_threshold: Option<EdgeThreshold>,
    /// Defaults to powers of two in [2, side/4].
    pub box_sizes: Option<Vec<usize>>,
    pub bins: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            binarize: Binarization::Converged,
            sobel_threshold: None,
            box_sizes: None,
            bins: DEFAULT_BINS,
        }
    }
}

/// Everything a subcommand may read. The merged value is written to
/// `config.json` in every output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub model: ModelConfig,
    pub run: TrainRunConfig,
    pub grid: GridSpec,
    pub generate: GenerateSection,
    pub analysis: AnalysisSection,
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data: DataSection::default(),
            model: ModelConfig::default(),
            run: TrainRunConfig::default(),
            grid: Preset::Desk8.grid(),
            generate: GenerateSection::default(),
            analysis: AnalysisSection::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn corpus(&self) -> Result<&Path, Error> {
        self.data
            .corpus
            .as_deref()
            .ok_or_else(|| Error::Config("no corpus given (use --corpus or data.corpus)".into()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Built-in grids sized for a desktop CPU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 8×8 over [1e-4, 3e-2]² at 2000 steps.
    Desk8,
    /// 4×4 over [1e-4, 3e-2]² at 500 steps.
    Ci4,
}

impl Preset {
    pub fn grid(self) -> GridSpec {
        let n = match self {
            Preset::Desk8 => 8,
            Preset::Ci4 => 4,
        };
        let axis = AxisSpec::spanning(1e-4, 3e-2, n);
        GridSpec {
            att: axis,
            fc: axis,
        }
    }

    pub fn steps(self) -> usize {
        match self {
            Preset::Desk8 => 2000,
            Preset::Ci4 => 500,
        }
    }
}

/// Parses `converged` or `mu-above:<level>`.
pub fn parse_binarization(s: &str) -> Result<Binarization, String> {
    if s == "converged" {
        return Ok(Binarization::Converged);
    }
    match s.strip_prefix("mu-above:").map(str::parse::<f64>) {
        Some(Ok(level)) if (-1.0..=1.0).contains(&level) => Ok(Binarization::MuAbove(level)),
        _ => Err(format!(
            "expected `converged` or `mu-above:<level in [-1, 1]>`, got {s:?}"
        )),
    }
}
