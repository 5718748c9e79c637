use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mc::{replicate, Estimate};

use super::sampler::{sample_location, sample_poisson_with};
use super::{IntensityMeasure, PointConfiguration, RngSpec};

/// Both sides of a Mecke identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub z: f64,
    pub pass: bool,
}

/// Compares `E sum_{x in eta} f(x, eta)` with `int E f(x, eta + delta_x) K(dx)`.
///
/// The test receives the index of `x` inside the configuration. The right
/// side draws one location per replicate from `K / K(X)` and weights it by
/// the total mass. Passes when the two estimates lie within four combined
/// standard errors.
pub fn mecke_check<F>(measure: &IntensityMeasure, test: F, reps: u64, rng: RngSpec) -> Result<CheckReport>
where
    F: Fn(usize, &PointConfiguration) -> f64 + Sync + Send,
{
    let lhs_spec = rng.fork(1);
    let rhs_spec = rng.fork(2);
    let mass = measure.total_mass();
    let lhs: Result<Vec<f64>> = replicate(reps, |i| {
        let mut r = lhs_spec.with_stream(i).rng();
        let eta = sample_poisson_with(measure, &mut r)?;
        Ok((0..eta.len()).map(|j| test(j, &eta)).sum())
    })
    .into_iter()
    .collect();
    let rhs: Result<Vec<f64>> = replicate(reps, |i| {
        let mut r = rhs_spec.with_stream(i).rng();
        let mut eta = sample_poisson_with(measure, &mut r)?;
        if mass <= 0.0 {
            return Ok(0.0);
        }
        let mut x = vec![0.0; measure.dim()];
        sample_location(measure, &mut r, &mut x)?;
        eta.push_unchecked(&x);
        Ok(mass * test(eta.len() - 1, &eta))
    })
    .into_iter()
    .collect();
    let lhs = Estimate::from_samples(&lhs?);
    let rhs = Estimate::from_samples(&rhs?);
    let z = lhs.z_against(&rhs);
    Ok(CheckReport {
        lhs,
        rhs,
        z,
        pass: z.abs() <= 4.0,
    })
}
