use serde::{Deserialize, Serialize};

use super::raster::RasterImage;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Least-squares slope of ln N(ε) against ln(1/ε).
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// (box size, number of occupied boxes), box size increasing.
    pub counts: Vec<(usize, usize)>,
}

impl DimensionEstimate {
    /// The slope rounded to four decimals, as it is reported.
    pub fn dimension(&self) -> f64 {
        (self.slope * 1e4).round() / 1e4
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,count\n");
        for (eps, n) in &self.counts {
            out.push_str(&format!("{eps},{n}\n"));
        }
        out
    }
}

/// Powers of two in [2, side/4]. Small images that would get fewer than two
/// sizes fall back to [1, side/2], and a 2×2 image to [1, 2].
pub fn default_box_sizes(side: usize) -> Vec<usize> {
    let pick = |lo: usize, hi: usize| {
        std::iter::successors(Some(lo), |&s| Some(s * 2))
            .take_while(|&s| s <= hi)
            .collect::<Vec<_>>()
    };
    let sizes = pick(2, side / 4);
    if sizes.len() >= 2 {
        sizes
    } else if side >= 4 {
        pick(1, side / 2)
    } else {
        pick(1, side)
    }
}

/// Occupied-box counts for every power-of-two box size up to `side`, built by
/// OR-pooling 2×2 blocks level by level. Index k holds N(2^k).
fn occupancy_pyramid(image: &RasterImage) -> Vec<usize> {
    let mut side = image.width();
    let mut level: Vec<bool> = image.values().iter().map(|&v| v != 0.0).collect();
    let mut counts = vec![level.iter().filter(|&&b| b).count()];
    while side > 1 {
        let half = side / 2;
        let mut next = vec![false; half * half];
        for y in 0..half {
            for x in 0..half {
                let r0 = 2 * y * side + 2 * x;
                let r1 = r0 + side;
                next[y * half + x] = level[r0] | level[r0 + 1] | level[r1] | level[r1 + 1];
            }
        }
        counts.push(next.iter().filter(|&&b| b).count());
        level = next;
        side = half;
    }
    counts
}

/// Box-counting dimension of the set pixels of a square, power-of-two image.
/// Boxes form an axis-aligned grid anchored at the origin. `sizes` defaults to
/// [`default_box_sizes`].
pub fn box_count_dimension(
    image: &RasterImage,
    sizes: Option<&[usize]>,
) -> Result<DimensionEstimate> {
    let side = image.width();
    if side != image.height() || !side.is_power_of_two() {
        return Err(Error::Input(format!(
            "box counting needs a square power-of-two image, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    let mut sizes = match sizes {
        Some(s) => s.to_vec(),
        None => default_box_sizes(side),
    };
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(Error::Config(
            "box counting needs at least two distinct box sizes".into(),
        ));
    }
    if let Some(bad) = sizes.iter().find(|&&s| !s.is_power_of_two() || s > side) {
        return Err(Error::Config(format!(
            "box size {bad} is not a power of two no larger than {side}"
        )));
    }

    let pyramid = occupancy_pyramid(image);
    if pyramid[0] == 0 {
        return Err(Error::Input(
            "dimension is undefined for an image with no set pixels".into(),
        ));
    }
    let counts: Vec<(usize, usize)> = sizes
        .iter()
        .map(|&s| (s, pyramid[s.trailing_zeros() as usize]))
        .collect();

    let xs: Vec<f64> = counts.iter().map(|&(s, _)| -(s as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&(_, n)| (n as f64).ln()).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys);
    Ok(DimensionEstimate {
        slope,
        intercept,
        r_squared,
        counts,
    })
}

/// Ordinary least squares y = a·x + b. Returns (a, b, r²); a perfectly flat
/// response is a perfect fit.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, intercept, r2)
}
