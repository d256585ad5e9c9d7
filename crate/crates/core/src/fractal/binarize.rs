use serde::{Deserialize, Serialize};

use super::raster::RasterImage;
use crate::error::Result;
use crate::sweep::SweepResult;

/// Rule deciding which sweep cells count as set pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarization {
    /// The cell's convergence test passed.
    #[default]
    Converged,
    /// μ strictly above the given level.
    MuAbove(f64),
}

/// Binary map of a finished sweep: pixel (x, y) is cell (att = y, fc = x),
/// with no flipping or transposition.
pub fn binarize_convergence(result: &SweepResult, rule: Binarization) -> Result<RasterImage> {
    result.require_complete()?;
    let grid = result.grid();
    let (rows, cols) = (grid.att.count, grid.fc.count);
    let set = match rule {
        Binarization::Converged => result.converged_values().to_vec(),
        Binarization::MuAbove(level) => result.mu_values().iter().map(|&m| m > level).collect(),
    };
    RasterImage::binary(cols, rows, set)
}
