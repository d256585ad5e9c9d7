use super::raster::RasterImage;
use crate::error::{Error, Result};

/// Discrete Sierpinski triangle on a `size`×`size` canvas with `depth` levels
/// of subdivision. The right angle sits in the bottom-left corner.
///
/// At the finest level the canvas is split into `2^depth` tiles per side; a
/// tile is kept when its column and row indices share no set bit (Pascal's
/// triangle mod 2), and each kept tile is filled with a right triangle.
pub fn gen_sierpinski(size: usize, depth: u32) -> Result<RasterImage> {
    if size == 0 || !size.is_power_of_two() {
        return Err(Error::Config(format!(
            "Sierpinski size must be a power of two, got {size}"
        )));
    }
    if depth == 0 {
        return Err(Error::Config("Sierpinski depth must be at least 1".into()));
    }
    let tiles = 1usize
        .checked_shl(depth)
        .filter(|&t| t <= size)
        .ok_or_else(|| {
            Error::Config(format!(
                "depth {depth} needs at least 2^{depth} pixels per side, got {size}"
            ))
        })?;
    let tile = size / tiles;

    let mut set = vec![false; size * size];
    for row in 0..size {
        // Measure y upward so the figure stands on its base.
        let y = size - 1 - row;
        let (by, iy) = (y / tile, y % tile);
        for x in 0..size {
            let (bx, ix) = (x / tile, x % tile);
            set[row * size + x] = bx & by == 0 && ix + iy < tile;
        }
    }
    RasterImage::binary(size, size, set)
}

/// Number of filled sub-triangles in the construction.
pub fn sierpinski_cells(depth: u32) -> u64 {
    3u64.pow(depth)
}
