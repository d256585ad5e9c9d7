//! Reference fractals, edge extraction, box-counting dimension and μ
//! histograms.

mod binarize;
mod boxcount;
mod calibration;
mod histogram;
mod multibrot;
mod raster;
mod sierpinski;
mod sobel;

pub use binarize::{binarize_convergence, Binarization};
pub use boxcount::{box_count_dimension, default_box_sizes, DimensionEstimate};
pub use calibration::{calibrate, CalibrationCheck, CalibrationImages, CalibrationReport};
pub use histogram::{histogram_mu, histogram_values, Histogram, DEFAULT_BINS};
pub use multibrot::{default_escape_radius, escape_time, gen_multibrot, Region};
pub use raster::{PixelRange, RasterImage};
pub use sierpinski::{gen_sierpinski, sierpinski_cells};
pub use sobel::{edge_straddle_fraction, sobel_edges, sobel_magnitude, EdgeThreshold};
