//! Exact multiset distances and statistical checks against a Poisson limit.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crate::error::{Error, Result};
use crate::functionals::MarkedConfiguration;
use crate::pointproc::{IntensityMeasure, PointConfiguration};

/// How atoms of two configurations are identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    /// Same generating tuple and same mark.
    Provenance,
    /// Bitwise equal coordinates and mark.
    Coordinates,
}

/// Anything viewed as a finite multiset of hashable atoms.
pub trait Multiset {
    fn atom_keys(&self, mode: MatchMode) -> Vec<Vec<u64>>;
}

impl Multiset for PointConfiguration {
    fn atom_keys(&self, _: MatchMode) -> Vec<Vec<u64>> {
        self.iter().map(|p| p.iter().map(|c| c.to_bits()).collect()).collect()
    }
}

impl Multiset for MarkedConfiguration {
    fn atom_keys(&self, mode: MatchMode) -> Vec<Vec<u64>> {
        self.atoms()
            .iter()
            .map(|a| {
                let mut key: Vec<u64> = match mode {
                    MatchMode::Provenance => a.provenance.iter().map(|&i| i as u64).collect(),
                    MatchMode::Coordinates => match &a.unit {
                        Some(u) => u.iter().map(|c| c.to_bits()).collect(),
                        None => vec![u64::MAX],
                    },
                };
                key.push(a.mark.to_bits());
                key
            })
            .collect()
    }
}

/// Sizes of `a \ b` and `b \ a` as multisets.
pub fn one_sided_differences<T: Multiset + ?Sized>(a: &T, b: &T, mode: MatchMode) -> (usize, usize) {
    let mut count: HashMap<Vec<u64>, i64> = HashMap::new();
    for k in a.atom_keys(mode) {
        *count.entry(k).or_default() += 1;
    }
    for k in b.atom_keys(mode) {
        *count.entry(k).or_default() -= 1;
    }
    let mut left = 0;
    let mut right = 0;
    for v in count.values() {
        if *v > 0 {
            left += *v as usize;
        } else {
            right += (-*v) as usize;
        }
    }
    (left, right)
}

/// `(a sym-diff b)(X)`.
pub fn symmetric_difference<T: Multiset + ?Sized>(a: &T, b: &T, mode: MatchMode) -> usize {
    let (l, r) = one_sided_differences(a, b, mode);
    l + r
}

/// Total variation between counting measures: `max((a\b)(X), (b\a)(X))`.
pub fn config_dtv<T: Multiset + ?Sized>(a: &T, b: &T, mode: MatchMode) -> usize {
    let (l, r) = one_sided_differences(a, b, mode);
    l.max(r)
}

/// Count cap `mean + 10 sqrt(mean)` used for exact count comparisons.
pub fn count_cap(mean: f64) -> usize {
    (mean + 10.0 * mean.sqrt()).ceil() as usize
}

/// Total variation between the empirical law of `samples` and Poisson(mean)
/// on `0..=cap`, plus half the mass of both above the cap.
pub fn count_tv(samples: &[u64], mean: f64) -> Result<f64> {
    if samples.len() < 1000 {
        return Err(Error::TooFewSamples {
            needed: 1000,
            got: samples.len(),
        });
    }
    if !(mean >= 0.0) {
        return Err(Error::invalid("mean", "must be nonnegative"));
    }
    let cap = count_cap(mean);
    let mut freq = vec![0u64; cap + 1];
    let mut over = 0u64;
    for &s in samples {
        match freq.get_mut(s as usize) {
            Some(c) => *c += 1,
            None => over += 1,
        }
    }
    let total = samples.len() as f64;
    let pmf = |i: usize| -> f64 {
        if mean == 0.0 {
            return if i == 0 { 1.0 } else { 0.0 };
        }
        Poisson::new(mean).map(|p| p.pmf(i as u64)).unwrap_or(0.0)
    };
    let mut tv = 0.0;
    let mut inside = 0.0;
    for (i, &c) in freq.iter().enumerate() {
        let p = pmf(i);
        inside += p;
        tv += (c as f64 / total - p).abs();
    }
    let tail_p = if mean == 0.0 {
        0.0
    } else {
        Poisson::new(mean)
            .map(|p| 1.0 - p.cdf(cap as u64))
            .unwrap_or(0.0)
            .max(1.0 - inside)
            .max(0.0)
    };
    Ok(0.5 * (tv + over as f64 / total + tail_p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GumbelRow {
    pub b: f64,
    pub empirical: f64,
    pub target: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GumbelReport {
    pub rows: Vec<GumbelRow>,
    pub samples: usize,
    pub max_abs_z: f64,
    pub pass: bool,
}

/// Compares `P(max mark <= b)` with `exp(-tail(b))` on a grid of levels.
pub fn gumbel_check<T: Fn(f64) -> f64>(max_marks: &[f64], b_grid: &[f64], tail: T) -> Result<GumbelReport> {
    if max_marks.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if let Some(m) = max_marks.iter().find(|m| m.is_nan() || **m == f64::INFINITY) {
        return Err(Error::invalid("max_marks", format!("{m} is not finite")));
    }
    let n = max_marks.len() as f64;
    let mut rows = Vec::with_capacity(b_grid.len());
    let mut worst: f64 = 0.0;
    for &b in b_grid {
        let empirical = max_marks.iter().filter(|&&m| m <= b).count() as f64 / n;
        let target = (-tail(b)).exp();
        let se = (target * (1.0 - target) / n).sqrt();
        let diff = empirical - target;
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z.abs());
        rows.push(GumbelRow {
            b,
            empirical,
            target,
            z,
        });
    }
    Ok(GumbelReport {
        rows,
        samples: max_marks.len(),
        max_abs_z: worst,
        pass: worst <= 4.0,
    })
}

/// A box of locations crossed with a mark band `(mark_lo, mark_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mark_lo: f64,
    pub mark_hi: f64,
}

/// `2^(d * level)` dyadic boxes crossed with the bands between consecutive
/// entries of `bands` (the last band is open above).
pub fn dyadic_cells(d: usize, level: u32, bands: &[f64]) -> Vec<Cell> {
    let m = 1usize << level;
    let side = 1.0 / m as f64;
    let mut cells = Vec::new();
    let total = m.pow(d as u32);
    for idx in 0..total {
        let mut rest = idx;
        let mut lower = Vec::with_capacity(d);
        for _ in 0..d {
            lower.push((rest % m) as f64 * side);
            rest /= m;
        }
        let upper: Vec<f64> = lower.iter().map(|l| l + side).collect();
        for (i, &lo) in bands.iter().enumerate() {
            let hi = bands.get(i + 1).copied().unwrap_or(f64::INFINITY);
            cells.push(Cell {
                lower: lower.clone(),
                upper: upper.clone(),
                mark_lo: lo,
                mark_hi: hi,
            });
        }
    }
    cells
}

/// Mass of a cell under `lambda(x) dx e^{-u} du`.
pub fn limit_cell_mass(lambda: &IntensityMeasure, cell: &Cell) -> Result<f64> {
    let sides: Vec<f64> = cell.lower.iter().zip(&cell.upper).map(|(l, u)| u - l).collect();
    let space = lambda.box_mass(&cell.lower, &sides)?;
    Ok(space * ((-cell.mark_lo).exp() - (-cell.mark_hi).exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub cell: usize,
    pub expected: f64,
    pub mean: f64,
    pub variance: f64,
    pub z_mean: f64,
    pub z_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub samples: usize,
    pub cells: Vec<CellStat>,
    pub max_abs_z_mean: f64,
    pub max_abs_z_variance: f64,
    pub max_abs_z_covariance: f64,
    pub count_tv: Option<f64>,
    pub pass: bool,
}

impl DiscrepancyReport {
    /// One row per cell, then one row for the covariance summary.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("test,cell,expected,mean,variance,z_mean,z_variance\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "cell,{},{:.10e},{:.10e},{:.10e},{:.6},{:.6}",
                c.cell, c.expected, c.mean, c.variance, c.z_mean, c.z_variance
            );
        }
        let _ = writeln!(s, "covariance,,,,,{:.6},", self.max_abs_z_covariance);
        if let Some(tv) = self.count_tv {
            let _ = writeln!(s, "count_tv,,,{tv:.10e},,,");
        }
        s
    }
}

fn ratio(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Per-cell count means and variances against Poisson(expected) and
/// pairwise covariances against zero, with z-scores.
pub fn cellwise_report(samples: &[MarkedConfiguration], cells: &[Cell], expected: &[f64]) -> Result<DiscrepancyReport> {
    if samples.len() < 10_000 {
        return Err(Error::TooFewSamples {
            needed: 10_000,
            got: samples.len(),
        });
    }
    if cells.len() != expected.len() {
        return Err(Error::invalid("expected", "one mass per cell"));
    }
    let n = samples.len() as f64;
    let counts: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            cells
                .iter()
                .map(|c| s.count_in_cell(&c.lower, &c.upper, c.mark_lo, c.mark_hi) as f64)
                .collect()
        })
        .collect();
    let m = cells.len();
    let mut means = vec![0.0; m];
    for row in &counts {
        for (a, v) in means.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in means.iter_mut() {
        *a /= n;
    }
    let mut cov = vec![vec![0.0; m]; m];
    for row in &counts {
        for i in 0..m {
            let di = row[i] - means[i];
            for j in i..m {
                cov[i][j] += di * (row[j] - means[j]);
            }
        }
    }
    for (i, r) in cov.iter_mut().enumerate() {
        for v in r.iter_mut().skip(i) {
            *v /= n - 1.0;
        }
    }
    let mut stats = Vec::with_capacity(m);
    let (mut zm, mut zv, mut zc): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..m {
        let mu = expected[i];
        let z_mean = ratio(means[i] - mu, (mu / n).sqrt());
        let z_variance = ratio(cov[i][i] - mu, ((mu + 2.0 * mu * mu) / n).sqrt());
        zm = zm.max(z_mean.abs());
        zv = zv.max(z_variance.abs());
        for j in i + 1..m {
            zc = zc.max(ratio(cov[i][j], (expected[i] * expected[j] / n).sqrt()).abs());
        }
        stats.push(CellStat {
            cell: i,
            expected: mu,
            mean: means[i],
            variance: cov[i][i],
            z_mean,
            z_variance,
        });
    }
    Ok(DiscrepancyReport {
        samples: samples.len(),
        cells: stats,
        max_abs_z_mean: zm,
        max_abs_z_variance: zv,
        max_abs_z_covariance: zc,
        count_tv: None,
        pass: zm <= 4.0 && zv <= 4.0 && zc <= 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::Atom;
    use crate::pointproc::sampler::poisson_count;
    use crate::pointproc::RngSpec;
    use rand::Rng;

    fn pc(v: &[f64]) -> PointConfiguration {
        PointConfiguration::from_flat(1, v.to_vec()).unwrap()
    }

    #[test]
    fn multiset_examples() {
        let (a, b, c) = (0.1, 0.2, 0.3);
        assert_eq!(config_dtv(&pc(&[a, b]), &pc(&[b, a]), MatchMode::Coordinates), 0);
        assert_eq!(config_dtv(&pc(&[a, a, b]), &pc(&[a, b, c]), MatchMode::Coordinates), 1);
        assert_eq!(config_dtv(&pc(&[a]), &pc(&[a, b, c]), MatchMode::Coordinates), 2);
        assert_eq!(symmetric_difference(&pc(&[a, a, b]), &pc(&[a, b, c]), MatchMode::Coordinates), 2);
    }

    #[test]
    fn provenance_includes_mark() {
        let atom = |p: usize, mark: f64| Atom {
            unit: Some(vec![0.5]),
            mark,
            provenance: vec![p],
        };
        let x = MarkedConfiguration::new(1, 1, vec![atom(0, 1.0), atom(1, 2.0)]);
        let y = MarkedConfiguration::new(1, 1, vec![atom(0, 1.0), atom(1, 2.5)]);
        assert_eq!(symmetric_difference(&x, &y, MatchMode::Provenance), 2);
        assert_eq!(config_dtv(&x, &y, MatchMode::Provenance), 1);
    }

    #[test]
    fn count_tv_examples() {
        assert!(count_tv(&[0; 10], 1.0).is_err());
        let tv = count_tv(&[0; 2000], 5.0).unwrap();
        assert!((tv - (1.0 - (-5f64).exp())).abs() < 1e-9);
        assert!(count_tv(&[0; 2000], 1e-9).unwrap() < 1e-8);
        let mut rng = RngSpec::new(2, 0).rng();
        let s: Vec<u64> = (0..1_000_000).map(|_| poisson_count(3.0, &mut rng)).collect();
        assert!(count_tv(&s, 3.0).unwrap() < 0.005);
        let mut r = s.clone();
        r.reverse();
        assert_eq!(count_tv(&s, 3.0).unwrap(), count_tv(&r, 3.0).unwrap());
    }

    #[test]
    fn gumbel_targets() {
        let marks = vec![0.5; 10];
        let r = gumbel_check(&marks, &[0.0, 1.0, 1e6], |b| (-b).exp()).unwrap();
        assert!((r.rows[0].target - (-1f64).exp()).abs() < 1e-15);
        assert!((r.rows[1].target - 0.6922006275553464).abs() < 1e-15);
        assert!((r.rows[2].target - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cellwise_null_and_degenerate() {
        let cells = dyadic_cells(1, 1, &[0.0]);
        assert_eq!(cells.len(), 2);
        let lambda = IntensityMeasure::constant(1, 1.0).unwrap();
        let expected: Vec<f64> = cells.iter().map(|c| limit_cell_mass(&lambda, c).unwrap()).collect();
        assert!((expected[0] - 0.5).abs() < 1e-15);
        let mut rng = RngSpec::new(8, 0).rng();
        let samples: Vec<MarkedConfiguration> = (0..10_000)
            .map(|_| {
                let n = poisson_count(1.0, &mut rng);
                let atoms = (0..n)
                    .map(|i| {
                        let u: f64 = rng.random();
                        let e: f64 = -rng.random::<f64>().ln();
                        Atom {
                            unit: Some(vec![u]),
                            mark: e,
                            provenance: vec![i as usize],
                        }
                    })
                    .collect();
                MarkedConfiguration::new(1, 1, atoms)
            })
            .collect();
        let r = cellwise_report(&samples, &cells, &expected).unwrap();
        assert!(r.pass, "{r:?}");
        let one = MarkedConfiguration::new(
            1,
            1,
            vec![Atom {
                unit: Some(vec![0.25]),
                mark: 1.0,
                provenance: vec![0],
            }],
        );
        let r = cellwise_report(&vec![one; 10_000], &cells, &expected).unwrap();
        assert!(!r.pass && r.max_abs_z_variance > 40.0);
        assert!(r.to_csv().lines().count() >= 3);
    }
}
