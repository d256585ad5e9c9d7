use serde::{Deserialize, Serialize};

use super::raster::{PixelRange, RasterImage};
use crate::error::{Error, Result};

/// How the edge threshold on the Sobel magnitude is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeThreshold {
    Absolute(f64),
    /// Fraction of the largest magnitude in the image.
    FractionOfMax(f64),
}

impl EdgeThreshold {
    /// 1.0 for binary images (any nonzero response), a quarter of the peak
    /// magnitude for grayscale ones.
    pub fn default_for(image: &RasterImage) -> Self {
        match image.range() {
            PixelRange::Binary => EdgeThreshold::Absolute(1.0),
            PixelRange::Grayscale => EdgeThreshold::FractionOfMax(0.25),
        }
    }
}

/// Gradient magnitude with the 3×3 Sobel kernels and replicated borders.
pub fn sobel_magnitude(image: &RasterImage) -> Result<Vec<f64>> {
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 {
        return Err(Error::Input(format!(
            "Sobel needs at least a 3x3 image, got {w}x{h}"
        )));
    }
    let px = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        image.get(x, y)
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    Ok(out)
}

/// Binary edge map: a pixel is an edge iff its Sobel magnitude reaches the
/// threshold. A flat image never has edges, whatever the threshold rule.
pub fn sobel_edges(image: &RasterImage, threshold: EdgeThreshold) -> Result<RasterImage> {
    let magnitude = sobel_magnitude(image)?;
    let peak = magnitude.iter().copied().fold(0.0, f64::max);
    let cut = match threshold {
        EdgeThreshold::Absolute(t) => t,
        EdgeThreshold::FractionOfMax(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "threshold fraction must lie in (0, 1], got {f}"
                )));
            }
            f * peak
        }
    };
    if !(cut.is_finite() && cut >= 0.0) {
        return Err(Error::Config(format!("invalid edge threshold {cut}")));
    }
    let set = magnitude.iter().map(|&m| m > 0.0 && m >= cut).collect();
    RasterImage::binary(image.width(), image.height(), set)
}

/// Fraction of edge pixels whose 3×3 neighbourhood in `image` (clipped at
/// the border) holds both zero and nonzero pixels, i.e. that sit on the
/// boundary of the set. `None` when there are no edge pixels.
pub fn edge_straddle_fraction(edges: &RasterImage, image: &RasterImage) -> Result<Option<f64>> {
    let (w, h) = (image.width(), image.height());
    if edges.width() != w || edges.height() != h {
        return Err(Error::Dimension {
            op: "edge straddle",
            lhs: vec![edges.height(), edges.width()],
            rhs: vec![h, w],
        });
    }
    let (mut total, mut straddling) = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if !edges.is_set(x, y) {
                continue;
            }
            total += 1;
            let (mut inside, mut outside) = (false, false);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if image.is_set(nx, ny) {
                        outside = true;
                    } else {
                        inside = true;
                    }
                }
            }
            if inside && outside {
                straddling += 1;
            }
        }
    }
    Ok((total > 0).then(|| straddling as f64 / total as f64))
}
