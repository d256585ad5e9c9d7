//! The decoder-only character transformer.

mod config;
mod generate;
mod params;
mod transformer;

pub use config::{param_count, AttentionGrouping, ModelConfig};
pub use generate::generate;
pub use params::{classify, init_params, sinusoidal_pe, ParamEntry, ParamGroup, ParamTree};
pub use transformer::{Recorded, TokenGrid, Transformer};
