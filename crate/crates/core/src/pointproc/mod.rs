//! Point processes on the torus: intensity measures, samplers, a grid
//! index for neighbour queries, and a Mecke identity check.

mod config;
mod grid;
mod intensity;
mod mecke;
mod rng;
pub mod sampler;
pub mod window;

pub use config::PointConfiguration;
pub use grid::{knn_distance, knn_distance_brute, GridIndex};
pub use intensity::{Density, FieldFn, IntensityMeasure, ScalarFn};
pub use mecke::{mecke_check, CheckReport};
pub use rng::RngSpec;
pub use sampler::{sample_binomial, sample_poisson};
