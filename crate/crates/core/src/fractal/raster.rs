use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelRange {
    /// Values are exactly 0 or 1.
    Binary,
    /// Values lie in [0, 1].
    Grayscale,
}

/// Row-major single-channel image; row 0 is the top.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
    range: PixelRange,
}

impl RasterImage {
    pub fn binary(width: usize, height: usize, set: Vec<bool>) -> Result<Self> {
        if set.len() != width * height {
            return Err(Error::Dimension {
                op: "binary image",
                lhs: vec![height, width],
                rhs: vec![set.len()],
            });
        }
        Ok(RasterImage {
            width,
            height,
            values: set.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
            range: PixelRange::Binary,
        })
    }

    pub fn grayscale(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension {
                op: "grayscale image",
                lhs: vec![height, width],
                rhs: vec![values.len()],
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("grayscale value {v} outside [0, 1]")));
        }
        Ok(RasterImage {
            width,
            height,
            values,
            range: PixelRange::Grayscale,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn range(&self) -> PixelRange {
        self.range
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.get(x, y) != 0.0
    }

    pub fn count_set(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn transposed(&self) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                values[x * self.height + y] = self.get(x, y);
            }
        }
        RasterImage {
            width: self.height,
            height: self.width,
            values,
            range: self.range,
        }
    }

    pub fn rotated_180(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        RasterImage {
            values,
            ..self.clone()
        }
    }

    /// Zero-pads right and bottom to the smallest power-of-two square that
    /// holds the image. Box counts anchored at the origin are unchanged.
    pub fn padded_pow2_square(&self) -> Self {
        let side = self.width.max(self.height).max(1).next_power_of_two();
        let mut values = vec![0.0; side * side];
        for y in 0..self.height {
            values[y * side..y * side + self.width]
                .copy_from_slice(&self.values[y * self.width..(y + 1) * self.width]);
        }
        RasterImage {
            width: side,
            height: side,
            values,
            range: self.range,
        }
    }
}
