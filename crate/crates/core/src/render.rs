//! Color-mapped heatmaps and binary PPM output.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fractal::RasterImage;
use crate::sweep::SweepResult;

/// Row-major 8-bit RGB image, row 0 at the top.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                op: "rgb image",
                lhs: vec![height, width],
                rhs: vec![pixels.len()],
            });
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Grayscale rendering of a raster: 0 → black, 1 → white.
    pub fn from_raster(image: &RasterImage) -> Self {
        let pixels = image
            .values()
            .iter()
            .map(|&v| {
                let g = (255.0 * v).round() as u8;
                [g, g, g]
            })
            .collect();
        RgbImage {
            width: image.width(),
            height: image.height(),
            pixels,
        }
    }

    /// Binary rendering with set pixels drawn black.
    pub fn from_mask(image: &RasterImage) -> Self {
        let pixels = image
            .values()
            .iter()
            .map(|&v| if v != 0.0 { [0, 0, 0] } else { [255, 255, 255] })
            .collect();
        RgbImage {
            width: image.width(),
            height: image.height(),
            pixels,
        }
    }
}

/// White at μ = 0, fading linearly to pure blue at 1 and pure red at −1.
pub fn colormap_pixel(mu: f64) -> Result<[u8; 3]> {
    if !(-1.0..=1.0).contains(&mu) {
        return Err(Error::Input(format!("μ = {mu} outside [-1, 1]")));
    }
    let channel = |t: f64| (255.0 * t).round() as u8;
    Ok(if mu >= 0.0 {
        let c = channel(1.0 - mu);
        [c, c, 255]
    } else {
        let c = channel(1.0 + mu);
        [255, c, c]
    })
}

/// One pixel per cell: η_fc grows to the right, η_att grows upward.
pub fn render_heatmap(result: &SweepResult) -> Result<RgbImage> {
    result.require_complete()?;
    let grid = result.grid();
    let (rows, cols) = (grid.att.count, grid.fc.count);
    let mut pixels = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        let att = rows - 1 - y;
        for fc in 0..cols {
            let mu = result.mu(att, fc).expect("sweep is complete");
            pixels.push(colormap_pixel(mu)?);
        }
    }
    RgbImage::new(cols, rows, pixels)
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.reserve(image.pixels.len() * 3);
    for p in &image.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn write_ppm(image: &RgbImage, path: &Path) -> Result<()> {
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

/// Parses the binary PPM layout produced by [`encode_ppm`] (single
/// whitespace separators, maxval 255, no comments).
pub fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<RgbImage> {
    let bad = |msg: &str| Error::format(path, msg.to_string());
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos == start || pos >= bytes.len() {
            return Err(bad("truncated PPM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        pos += 1;
    }
    if fields[0] != "P6" {
        return Err(bad("not a binary PPM (missing P6 magic)"));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| bad("invalid image size"));
    let (width, height) = (dim(fields[1])?, dim(fields[2])?);
    if fields[3] != "255" {
        return Err(bad("only maxval 255 is supported"));
    }
    let payload = &bytes[pos..];
    if payload.len() != width * height * 3 {
        return Err(Error::format(
            path,
            format!(
                "expected {} pixel bytes for {width}x{height}, found {}",
                width * height * 3,
                payload.len()
            ),
        ));
    }
    let pixels = payload
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    RgbImage::new(width, height, pixels)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(path, &bytes)
}
