use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sweep::SweepResult;

/// Counts over uniform bins spanning [−1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (k, count) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.edges[k],
                self.edges[k + 1],
                count
            ));
        }
        out
    }
}

pub const DEFAULT_BINS: usize = 100;

/// Bins values in [−1, 1]; the value 1 falls in the last bin. Values outside
/// the range (including NaN) are rejected.
pub fn histogram_values(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let edges = (0..=bins)
        .map(|k| -1.0 + 2.0 * k as f64 / bins as f64)
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(-1.0..=1.0).contains(&v) {
            return Err(Error::Input(format!("value {v} outside [-1, 1]")));
        }
        let k = (((v + 1.0) / 2.0 * bins as f64).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Histogram of the convergence measure over every cell of a finished sweep.
pub fn histogram_mu(result: &SweepResult, bins: usize) -> Result<Histogram> {
    result.require_complete()?;
    histogram_values(result.mu_values(), bins)
}
