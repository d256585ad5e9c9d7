use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One learning-rate axis: `count` rates `start + i·step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl AxisSpec {
    /// Evenly spaced axis from `lo` to `hi` inclusive.
    pub fn spanning(lo: f64, hi: f64, count: usize) -> Self {
        let step = if count > 1 {
            (hi - lo) / (count - 1) as f64
        } else {
            1.0
        };
        AxisSpec {
            start: lo,
            step,
            count,
        }
    }

    pub fn rate(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.start.is_finite() && self.start >= 0.0) {
            return Err(Error::Config(format!(
                "{name} axis start must be finite and >= 0, got {}",
                self.start
            )));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!(
                "{name} axis step must be finite and > 0, got {}",
                self.step
            )));
        }
        if self.count == 0 {
            return Err(Error::Config(format!(
                "{name} axis needs at least one cell"
            )));
        }
        if !self.rate(self.count - 1).is_finite() {
            return Err(Error::Config(format!("{name} axis overflows")));
        }
        Ok(())
    }
}

/// Linear grid over (attention rate, fully-connected rate). Cells are
/// numbered attention-index-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub att: AxisSpec,
    pub fc: AxisSpec,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.att.validate("att")?;
        self.fc.validate("fc")
    }

    pub fn cells(&self) -> usize {
        self.att.count * self.fc.count
    }

    pub fn index(&self, att: usize, fc: usize) -> usize {
        att * self.fc.count + fc
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.fc.count, index % self.fc.count)
    }

    /// (η_att, η_fc) of a cell.
    pub fn rates(&self, att: usize, fc: usize) -> (f64, f64) {
        (self.att.rate(att), self.fc.rate(fc))
    }
}
