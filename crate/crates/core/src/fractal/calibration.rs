use serde::{Deserialize, Serialize};

use super::{
    box_count_dimension, edge_straddle_fraction, gen_multibrot, gen_sierpinski, sobel_edges,
    EdgeThreshold, RasterImage, Region,
};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCheck {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CalibrationCheck {
    fn within(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        CalibrationCheck {
            name: name.into(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }

    fn at_least(name: &str, value: f64, floor: f64) -> Self {
        CalibrationCheck {
            name: name.into(),
            value,
            target: floor,
            tolerance: 0.0,
            pass: value >= floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub checks: Vec<CalibrationCheck>,
    pub pass: bool,
}

/// Images produced along the way, for inspection.
pub struct CalibrationImages {
    pub sierpinski: RasterImage,
    pub mandelbrot: RasterImage,
    pub mandelbrot_edges: RasterImage,
}

/// Self-test of the dimension machinery on sets with known answers: the
/// Sierpinski triangle, a filled square, a straight line, and the boundary
/// of the Mandelbrot set.
pub fn calibrate() -> Result<(CalibrationReport, CalibrationImages)> {
    let mut checks = Vec::new();

    let sierpinski = gen_sierpinski(1024, 7)?;
    let est = box_count_dimension(&sierpinski, None)?;
    checks.push(CalibrationCheck::within(
        "sierpinski_dimension",
        est.slope,
        3f64.ln() / 2f64.ln(),
        0.02,
    ));
    checks.push(CalibrationCheck::at_least(
        "sierpinski_r_squared",
        est.r_squared,
        0.99,
    ));

    let square = RasterImage::binary(256, 256, vec![true; 256 * 256])?;
    checks.push(CalibrationCheck::within(
        "square_dimension",
        box_count_dimension(&square, None)?.slope,
        2.0,
        0.01,
    ));
    let mut line = vec![false; 256 * 256];
    line[128 * 256..129 * 256].fill(true);
    let line = RasterImage::binary(256, 256, line)?;
    checks.push(CalibrationCheck::within(
        "line_dimension",
        box_count_dimension(&line, None)?.slope,
        1.0,
        0.01,
    ));

    let mandelbrot = gen_multibrot(2, Region::MANDELBROT, (512, 512), 200, None)?;
    let mandelbrot_edges = sobel_edges(&mandelbrot, EdgeThreshold::default_for(&mandelbrot))?;
    let straddle = edge_straddle_fraction(&mandelbrot_edges, &mandelbrot)?.unwrap_or(0.0);
    checks.push(CalibrationCheck::at_least(
        "mandelbrot_edge_straddle",
        straddle,
        0.99,
    ));

    let pass = checks.iter().all(|c| c.pass);
    Ok((
        CalibrationReport { checks, pass },
        CalibrationImages {
            sierpinski,
            mandelbrot,
            mandelbrot_edges,
        },
    ))
}
