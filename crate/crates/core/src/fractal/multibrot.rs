use serde::{Deserialize, Serialize};

use super::raster::RasterImage;
use crate::error::{Error, Result};

/// Axis-aligned rectangle in the complex plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Region {
    pub const MANDELBROT: Region = Region {
        re_min: -2.0,
        re_max: 1.0,
        im_min: -1.5,
        im_max: 1.5,
    };

    fn validate(&self) -> Result<()> {
        let ok = [self.re_min, self.re_max, self.im_min, self.im_max]
            .iter()
            .all(|v| v.is_finite())
            && self.re_max > self.re_min
            && self.im_max > self.im_min;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate region {self:?}")))
        }
    }
}

/// Escape radius used when the caller does not supply one.
pub fn default_escape_radius(d: u32) -> f64 {
    if d <= 2 {
        2.0
    } else {
        2f64.max(2f64.powf(1.0 / (d as f64 - 1.0)))
    }
}

fn complex_pow(re: f64, im: f64, d: u32) -> (f64, f64) {
    let (mut r, mut i) = (re, im);
    for _ in 1..d {
        (r, i) = (r * re - i * im, r * im + i * re);
    }
    (r, i)
}

/// Iterates z ← z^d + c from z = 0. Returns the first iteration (1-based) at
/// which |z| exceeds `radius`, or `None` if it stays bounded for `max_iter`
/// iterations.
pub fn escape_time(c: (f64, f64), d: u32, max_iter: u32, radius: f64) -> Option<u32> {
    let r2 = radius * radius;
    let (mut zr, mut zi) = (0.0, 0.0);
    for n in 1..=max_iter {
        let (pr, pi) = complex_pow(zr, zi, d);
        zr = pr + c.0;
        zi = pi + c.1;
        // Written so NaN counts as escaped.
        if !(zr * zr + zi * zi <= r2) {
            return Some(n);
        }
    }
    None
}

/// Escape-time rendering of the degree-`d` Multibrot set. Pixels are sampled
/// at their centres, row 0 at the top (largest imaginary part).
///
/// Interior pixels are 0. Exterior pixels get `1 − ½·ln n / ln max_iter`,
/// which keeps every exterior pixel at ≥ 0.5 so the set boundary is the
/// dominant edge in the shading.
pub fn gen_multibrot(
    d: u32,
    region: Region,
    resolution: (usize, usize),
    max_iter: u32,
    escape_radius: Option<f64>,
) -> Result<RasterImage> {
    if d < 2 {
        return Err(Error::Config(format!(
            "Multibrot degree must be ≥ 2, got {d}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    region.validate()?;
    let (width, height) = resolution;
    if width == 0 || height == 0 {
        return Err(Error::Config(format!(
            "degenerate resolution {width}x{height}"
        )));
    }
    let radius = escape_radius.unwrap_or_else(|| default_escape_radius(d));
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Config(format!(
            "escape radius must be positive, got {radius}"
        )));
    }

    let dx = (region.re_max - region.re_min) / width as f64;
    let dy = (region.im_max - region.im_min) / height as f64;
    let log_max = (max_iter as f64).ln();
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        let im = region.im_max - (row as f64 + 0.5) * dy;
        for col in 0..width {
            let re = region.re_min + (col as f64 + 0.5) * dx;
            let shade = match escape_time((re, im), d, max_iter, radius) {
                None => 0.0,
                Some(_) if log_max == 0.0 => 1.0,
                Some(n) => 1.0 - 0.5 * (n as f64).ln() / log_max,
            };
            values.push(shade);
        }
    }
    RasterImage::grayscale(width, height, values)
}
