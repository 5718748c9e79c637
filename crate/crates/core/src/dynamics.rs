//! Spatial birth–death (Glauber) dynamics whose stationary law is the
//! Poisson process with a given intensity measure.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::discrepancy::{cellwise_report, count_tv, dyadic_cells, DiscrepancyReport};
use crate::error::{Error, Result};
use crate::functionals::{Atom, MarkedConfiguration};
use crate::mc::{replicate, Estimate};
use crate::pointproc::sampler::{poisson_count, sample_location};
use crate::pointproc::{IntensityMeasure, PointConfiguration, RngSpec};

/// Configuration of a running chain: births at rate `birth_rate`, each
/// particle dies at rate 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GlauberState {
    pub configuration: PointConfiguration,
    pub clock: f64,
    pub birth_rate: f64,
}

impl GlauberState {
    pub fn new(omega0: PointConfiguration, measure: &IntensityMeasure) -> Result<Self> {
        check_measure(measure)?;
        if omega0.dim() != measure.dim() {
            return Err(Error::DimensionMismatch {
                expected: measure.dim(),
                got: omega0.dim(),
            });
        }
        Ok(GlauberState {
            configuration: omega0,
            clock: 0.0,
            birth_rate: measure.total_mass(),
        })
    }

    /// Performs the next event if it happens no later than `horizon`.
    /// Otherwise moves the clock to `horizon` and returns `false`.
    pub fn step<R: Rng + ?Sized>(&mut self, measure: &IntensityMeasure, horizon: f64, rng: &mut R) -> Result<bool> {
        let count = self.configuration.len() as f64;
        let rate = self.birth_rate + count;
        if rate <= 0.0 {
            self.clock = self.clock.max(horizon);
            return Ok(false);
        }
        let wait: f64 = Exp1.sample(rng);
        let next = self.clock + wait / rate;
        if next > horizon {
            self.clock = self.clock.max(horizon);
            return Ok(false);
        }
        debug_assert!(next > self.clock);
        self.clock = next;
        if rng.random::<f64>() * rate < self.birth_rate {
            let mut p = vec![0.0; measure.dim()];
            sample_location(measure, rng, &mut p)?;
            self.configuration.push_unchecked(&p);
        } else {
            let i = rng.random_range(0..self.configuration.len());
            self.configuration.remove(i);
        }
        Ok(true)
    }
}

fn check_measure(measure: &IntensityMeasure) -> Result<()> {
    let mass = measure.total_mass();
    if !(mass.is_finite() && mass >= 0.0) {
        return Err(Error::invalid("measure", format!("total mass {mass} must be finite")));
    }
    Ok(())
}

/// Event-by-event simulation of the chain from `omega0` up to `horizon`.
pub fn simulate<R: Rng + ?Sized>(
    omega0: &PointConfiguration,
    measure: &IntensityMeasure,
    horizon: f64,
    rng: &mut R,
) -> Result<PointConfiguration> {
    if !(horizon >= 0.0) {
        return Err(Error::invalid("horizon", "must be nonnegative"));
    }
    let mut state = GlauberState::new(omega0.clone(), measure)?;
    while state.step(measure, horizon, rng)? {}
    Ok(state.configuration)
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|c| c.to_bits()).collect()
}

/// Runs two chains on a common probability space up to `horizon`.
///
/// Both chains see the same births (times, locations, lifetimes). Points
/// present in both starting configurations share their death clock; the
/// remaining points get independent clocks. The symmetric difference at
/// the horizon is then the set of surviving initial discrepancy points.
pub fn simulate_coupled<R: Rng + ?Sized>(
    omega1: &PointConfiguration,
    omega2: &PointConfiguration,
    measure: &IntensityMeasure,
    horizon: f64,
    rng: &mut R,
) -> Result<(PointConfiguration, PointConfiguration)> {
    check_measure(measure)?;
    if !(horizon >= 0.0) {
        return Err(Error::invalid("horizon", "must be nonnegative"));
    }
    let d = measure.dim();
    for w in [omega1, omega2] {
        if w.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: w.dim() });
        }
    }
    let mut out1 = PointConfiguration::empty(d);
    let mut out2 = PointConfiguration::empty(d);
    let survives = |rng: &mut R, age: f64| -> bool {
        let life: f64 = Exp1.sample(rng);
        life > age
    };

    let mut in_second: HashMap<Vec<u64>, usize> = HashMap::new();
    for p in omega2.iter() {
        *in_second.entry(key(p)).or_insert(0) += 1;
    }
    for p in omega1.iter() {
        let shared = match in_second.get_mut(&key(p)) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        };
        if survives(rng, horizon) {
            out1.push_unchecked(p);
            if shared {
                out2.push_unchecked(p);
            }
        }
    }
    for p in omega2.iter() {
        if let Some(c) = in_second.get_mut(&key(p)) {
            if *c > 0 {
                *c -= 1;
                if survives(rng, horizon) {
                    out2.push_unchecked(p);
                }
            }
        }
    }

    let births = poisson_count(measure.total_mass() * horizon, rng);
    let mut p = vec![0.0; d];
    for _ in 0..births {
        let born = rng.random::<f64>() * horizon;
        sample_location(measure, rng, &mut p)?;
        if survives(rng, horizon - born) {
            out1.push_unchecked(&p);
            out2.push_unchecked(&p);
        }
    }
    Ok((out1, out2))
}

/// Mean symmetric difference of coupled chains at time `s`, with its
/// target `e^{-s}` times the initial symmetric difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub horizon: f64,
    pub initial: usize,
    pub estimate: Estimate,
    pub target: f64,
    pub z: f64,
    pub pass: bool,
}

pub fn contraction_check(
    omega1: &PointConfiguration,
    omega2: &PointConfiguration,
    measure: &IntensityMeasure,
    horizon: f64,
    reps: u64,
    rng: RngSpec,
) -> Result<ContractionRow> {
    let initial = omega1.symmetric_difference_count(omega2);
    let draws: Result<Vec<f64>> = replicate(reps, |i| {
        let mut r = rng.with_stream(i).rng();
        let (a, b) = simulate_coupled(omega1, omega2, measure, horizon, &mut r)?;
        Ok(a.symmetric_difference_count(&b) as f64)
    })
    .into_iter()
    .collect();
    let estimate = Estimate::from_samples(&draws?);
    let target = (-horizon).exp() * initial as f64;
    let z = estimate.z_exact(target);
    Ok(ContractionRow {
        horizon,
        initial,
        estimate,
        target,
        z,
        pass: z.abs() <= 4.0,
    })
}

/// Terminal law of the chain started empty, against the Poisson process
/// with intensity `(1 - e^{-horizon}) M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub horizon: f64,
    pub replicates: u64,
    pub expected_count: f64,
    pub mean_count: Estimate,
    pub count_tv: f64,
    pub cells: DiscrepancyReport,
    pub pass: bool,
}

/// Count TV below `0.02` and every cell z-score within 4 pass.
/// Cells are the `2^d` half-boxes of the torus.
pub fn stationarity_report(measure: &IntensityMeasure, horizon: f64, reps: u64, rng: RngSpec) -> Result<StationarityReport> {
    let d = measure.dim();
    let empty = PointConfiguration::empty(d);
    let finals: Result<Vec<PointConfiguration>> = replicate(reps, |i| {
        let mut r = rng.with_stream(i).rng();
        simulate(&empty, measure, horizon, &mut r)
    })
    .into_iter()
    .collect();
    let finals = finals?;
    let factor = 1.0 - (-horizon).exp();
    let expected_count = measure.total_mass() * factor;
    let counts: Vec<u64> = finals.iter().map(|w| w.len() as u64).collect();
    let tv = count_tv(&counts, expected_count)?;
    let mean_count = Estimate::from_samples(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());

    let cells = dyadic_cells(d, 1, &[f64::NEG_INFINITY]);
    let expected: Result<Vec<f64>> = cells
        .iter()
        .map(|c| {
            let sides: Vec<f64> = c.lower.iter().zip(&c.upper).map(|(l, u)| u - l).collect();
            Ok(measure.box_mass(&c.lower, &sides)? * factor)
        })
        .collect();
    let marked: Vec<MarkedConfiguration> = finals
        .iter()
        .map(|w| {
            let atoms = w
                .iter()
                .enumerate()
                .map(|(i, p)| Atom {
                    unit: Some(p.to_vec()),
                    mark: 0.0,
                    provenance: vec![i],
                })
                .collect();
            MarkedConfiguration::new(d, 1, atoms)
        })
        .collect();
    let cells = cellwise_report(&marked, &cells, &expected?)?;
    let pass = tv < 0.02 && cells.pass;
    Ok(StationarityReport {
        horizon,
        replicates: reps,
        expected_count,
        mean_count,
        count_tv: tv,
        cells,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f64; 2]]) -> PointConfiguration {
        PointConfiguration::from_points(2, &v.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_horizon_keeps_the_start() {
        let m = IntensityMeasure::constant(2, 5.0).unwrap();
        let w = pts(&[[0.1, 0.2], [0.5, 0.5]]);
        let mut rng = RngSpec::new(1, 0).rng();
        assert_eq!(simulate(&w, &m, 0.0, &mut rng).unwrap(), w);
    }

    #[test]
    fn pure_death_is_binomial_thinning() {
        let m = IntensityMeasure::constant(2, 0.0).unwrap();
        let w = pts(&[[0.1, 0.1], [0.2, 0.2], [0.3, 0.3], [0.4, 0.4], [0.5, 0.5]]);
        let s = 0.7;
        let v: Vec<f64> = replicate(100_000, |i| {
            let mut r = RngSpec::new(2, i).rng();
            let out = simulate(&w, &m, s, &mut r).unwrap();
            assert!(out.len() <= w.len());
            assert_eq!(out.difference(&w).len(), 0);
            out.len() as f64
        });
        let e = Estimate::from_samples(&v);
        assert!(e.z_exact(5.0 * (-s as f64).exp()).abs() < 4.0, "{e:?}");
    }

    #[test]
    fn immigration_death_count_law() {
        let m = IntensityMeasure::constant(2, 5.0).unwrap();
        let empty = PointConfiguration::empty(2);
        let counts: Vec<u64> = replicate(100_000, |i| {
            let mut r = RngSpec::new(3, i).rng();
            simulate(&empty, &m, 10.0, &mut r).unwrap().len() as u64
        });
        let tv = count_tv(&counts, 5.0 * (1.0 - (-10f64).exp())).unwrap();
        assert!(tv < 0.02, "{tv}");
    }

    #[test]
    fn coupling_identities() {
        let m = IntensityMeasure::constant(2, 3.0).unwrap();
        let w = pts(&[[0.1, 0.1], [0.6, 0.3]]);
        for s in [0.0, 0.5, 3.0] {
            let mut r = RngSpec::new(4, 0).rng();
            let (a, b) = simulate_coupled(&w, &w, &m, s, &mut r).unwrap();
            assert_eq!(a, b);
        }
        let mut plus = w.clone();
        plus.push(&[0.9, 0.9]).unwrap();
        for s in [0.5, 1.0, 2.0] {
            let row = contraction_check(&plus, &w, &m, s, 20_000, RngSpec::new(5, 0)).unwrap();
            assert!(row.pass, "{row:?}");
        }
        let row = contraction_check(&plus, &w, &m, 20.0, 1000, RngSpec::new(6, 0)).unwrap();
        assert_eq!(row.estimate.mean, 0.0);
    }

    #[test]
    fn stationarity_passes_and_empty_measure_stays_empty() {
        let m = IntensityMeasure::constant(2, 5.0).unwrap();
        let r = stationarity_report(&m, 10.0, 20_000, RngSpec::new(7, 0)).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.cells.cells.len(), 4);
        for c in &r.cells.cells {
            assert!((c.expected - 1.25 * (1.0 - (-10f64).exp())).abs() < 1e-12);
        }
        let zero = IntensityMeasure::constant(2, 0.0).unwrap();
        let mut rng = RngSpec::new(8, 0).rng();
        assert!(simulate(&PointConfiguration::empty(2), &zero, 5.0, &mut rng).unwrap().is_empty());
    }
}
