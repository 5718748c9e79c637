use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, wrap_coord};

use super::{IntensityMeasure, PointConfiguration, RngSpec};

/// Poisson(mean) draw; zero for a zero mean.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Draws one location from the normalized density by rejection against
/// the upper bound (direct uniform for constant densities).
pub fn sample_location<R: Rng + ?Sized>(measure: &IntensityMeasure, rng: &mut R, out: &mut [f64]) -> Result<()> {
    let budget = measure.tolerances().sampler_budget;
    let mut proposals = 0u64;
    loop {
        out.iter_mut().for_each(|c| *c = rng.random::<f64>());
        if measure.is_constant() {
            return Ok(());
        }
        proposals += 1;
        if rng.random::<f64>() * measure.upper() < measure.density(out) {
            return Ok(());
        }
        if proposals >= budget {
            return Err(Error::SamplerStuck { proposals });
        }
    }
}

/// Poisson process with intensity measure `measure` on the whole torus.
pub fn sample_poisson(measure: &IntensityMeasure, rng: RngSpec) -> Result<PointConfiguration> {
    let mut r = rng.rng();
    sample_poisson_with(measure, &mut r)
}

pub fn sample_poisson_with<R: Rng + ?Sized>(measure: &IntensityMeasure, rng: &mut R) -> Result<PointConfiguration> {
    let n = poisson_count(measure.total_mass(), rng) as usize;
    fill_iid(measure, n, rng)
}

/// `n` independent points with law `q`, which must be a probability measure.
pub fn sample_binomial(n: usize, q: &IntensityMeasure, rng: RngSpec) -> Result<PointConfiguration> {
    let mut r = rng.rng();
    sample_binomial_with(n, q, &mut r)
}

pub fn sample_binomial_with<R: Rng + ?Sized>(n: usize, q: &IntensityMeasure, rng: &mut R) -> Result<PointConfiguration> {
    check_probability(q)?;
    fill_iid(q, n, rng)
}

pub(crate) fn check_probability(q: &IntensityMeasure) -> Result<()> {
    if (q.total_mass() - 1.0).abs() > q.tolerances().probability_mass {
        return Err(Error::NotAProbability { mass: q.total_mass() });
    }
    Ok(())
}

fn fill_iid<R: Rng + ?Sized>(measure: &IntensityMeasure, n: usize, rng: &mut R) -> Result<PointConfiguration> {
    let d = measure.dim();
    let mut c = PointConfiguration::with_capacity(d, n);
    let mut p = vec![0.0; d];
    for _ in 0..n {
        sample_location(measure, rng, &mut p)?;
        c.push_unchecked(&p);
    }
    Ok(c)
}

/// Uniform point in the Euclidean ball `B_r(center)`, wrapped onto the torus.
pub fn uniform_in_ball<R: Rng + ?Sized>(center: &[f64], r: f64, rng: &mut R, out: &mut [f64]) {
    let d = center.len();
    loop {
        let mut s = 0.0;
        for o in out.iter_mut().take(d) {
            let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
            *o = v;
            s += v * v;
        }
        if s <= 1.0 {
            break;
        }
    }
    for j in 0..d {
        out[j] = wrap_coord(center[j] + r * out[j]);
    }
}

/// Point `center + v` with `|v|` uniform on `[0, r]` and uniform direction.
///
/// Returns the importance weight `r * d * omega_d * |v|^(d-1)`, the inverse
/// of the proposal density of `v` with respect to Lebesgue measure.
pub fn radial_in_ball<R: Rng + ?Sized>(center: &[f64], r: f64, rng: &mut R, out: &mut [f64]) -> f64 {
    let d = center.len();
    // direction from a normalized Gaussian vector
    let mut norm;
    loop {
        norm = 0.0;
        for o in out.iter_mut().take(d) {
            let g: f64 = rand_distr::StandardNormal.sample(rng);
            *o = g;
            norm += g * g;
        }
        if norm > 0.0 {
            break;
        }
    }
    let norm = norm.sqrt();
    let s = r * rng.random::<f64>();
    for j in 0..d {
        out[j] = wrap_coord(center[j] + s * out[j] / norm);
    }
    r * d as f64 * unit_ball_volume(d) * s.powi(d as i32 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;

    #[test]
    fn zero_mass_gives_empty() {
        let m = IntensityMeasure::constant(2, 0.0).unwrap();
        assert!(sample_poisson(&m, RngSpec::new(1, 0)).unwrap().is_empty());
    }

    #[test]
    fn binomial_exact_count_and_probability_check() {
        let q = IntensityMeasure::constant(2, 1.0).unwrap();
        for s in 0..5 {
            assert_eq!(sample_binomial(7, &q, RngSpec::new(2, s)).unwrap().len(), 7);
        }
        assert_eq!(sample_binomial(0, &q, RngSpec::new(2, 0)).unwrap().len(), 0);
        let bad = IntensityMeasure::constant(2, 2.0).unwrap();
        assert!(matches!(
            sample_binomial(3, &bad, RngSpec::new(2, 0)),
            Err(Error::NotAProbability { .. })
        ));
    }

    #[test]
    fn deterministic_given_spec() {
        let m = IntensityMeasure::cosine(2, 0.5).unwrap().scaled(40.0);
        let a = sample_poisson(&m, RngSpec::new(9, 4)).unwrap();
        let b = sample_poisson(&m, RngSpec::new(9, 4)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn radial_stays_in_ball() {
        let mut rng = RngSpec::new(3, 0).rng();
        let mut p = [0.0; 3];
        for _ in 0..1000 {
            let w = radial_in_ball(&[0.99, 0.0, 0.5], 0.1, &mut rng, &mut p);
            assert!(dist(&p, &[0.99, 0.0, 0.5]) <= 0.1 + 1e-12);
            assert!(w >= 0.0);
        }
    }
}
