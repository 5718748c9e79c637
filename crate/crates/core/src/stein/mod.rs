//! Monte Carlo estimates of the approximation bound terms.

mod binomial;
mod coupling;
mod dtv;
mod poisson;

pub use binomial::estimate_bounds_binomial;
pub use coupling::{coupling_bound, CouplingSampler, KnnNaturalCoupling};
pub use dtv::{dtv_intensities, knn_binomial_dtv, knn_binomial_density, knn_poisson_density, knn_poisson_dtv, knn_tail_cut};
pub use poisson::estimate_bounds_poisson;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{KnnFunctional, StabilizingFunctional};
use crate::geometry::unit_ball_volume;
use crate::mc::{replicate, Estimate};
use crate::pointproc::sampler::uniform_in_ball;
use crate::pointproc::{IntensityMeasure, RngSpec};

/// Replicate count and base seed for an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub replicates: u64,
    pub rng: RngSpec,
}

impl McConfig {
    pub fn new(replicates: u64, seed: u64) -> Self {
        McConfig {
            replicates,
            rng: RngSpec::new(seed, 0),
        }
    }
}

/// Estimated bound terms with standard errors.
///
/// Poisson input fills `e1..e4`; binomial input fills `e1..e6`. Terms that
/// do not apply are zero. `dtv_lm` is absent when no closed form for the
/// intensity of the functional is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub model: String,
    pub dtv_lm: Option<f64>,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub e5: f64,
    pub e6: f64,
    pub se_e1: f64,
    pub se_e2: f64,
    pub se_e3: f64,
    pub se_e4: f64,
    pub se_e5: f64,
    pub se_e6: f64,
    pub total: f64,
    pub n: f64,
    pub k: usize,
    pub d: usize,
    pub b: Option<f64>,
    pub b0: Option<f64>,
    pub seed: u64,
    pub replicates: u64,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn from_terms(model: &str, terms: &[TermColumn; 6], n: f64, k: usize, d: usize, mc: &McConfig) -> Self {
        let est: Vec<Estimate> = terms.iter().map(|t| t.estimate()).collect();
        let mut notes = Vec::new();
        for (i, t) in terms.iter().enumerate() {
            if let Some(note) = t.zero_hit_note(i + 1, mc.replicates) {
                notes.push(note);
            }
        }
        let mut r = BoundReport {
            model: model.to_string(),
            dtv_lm: None,
            e1: est[0].mean,
            e2: est[1].mean,
            e3: est[2].mean,
            e4: est[3].mean,
            e5: est[4].mean,
            e6: est[5].mean,
            se_e1: est[0].se,
            se_e2: est[1].se,
            se_e3: est[2].se,
            se_e4: est[3].se,
            se_e5: est[4].se,
            se_e6: est[5].se,
            total: 0.0,
            n,
            k,
            d,
            b: None,
            b0: None,
            seed: mc.rng.seed,
            replicates: mc.replicates,
            notes,
        };
        r.retotal();
        r
    }

    /// Sets the intensity distance and recomputes the total.
    pub fn with_dtv(mut self, dtv: f64) -> Self {
        self.dtv_lm = Some(dtv);
        self.retotal();
        self
    }

    pub fn with_levels(mut self, b: f64, b0: f64) -> Self {
        self.b = Some(b);
        self.b0 = Some(b0);
        self
    }

    fn retotal(&mut self) {
        self.total = self.dtv_lm.unwrap_or(0.0) + self.e1 + self.e2 + self.e3 + self.e4 + self.e5 + self.e6;
    }

    pub fn terms(&self) -> [Estimate; 6] {
        let e = |mean, se| Estimate {
            mean,
            se,
            n: self.replicates,
        };
        [
            e(self.e1, self.se_e1),
            e(self.e2, self.se_e2),
            e(self.e3, self.se_e3),
            e(self.e4, self.se_e4),
            e(self.e5, self.se_e5),
            e(self.e6, self.se_e6),
        ]
    }

    /// Standard error of the total, treating the terms as independent.
    pub fn se_total(&self) -> f64 {
        self.terms().iter().map(|t| t.se * t.se).sum::<f64>().sqrt()
    }
}

/// Per-replicate contribution to one term: the value and the weight it
/// would have carried had the indicator fired.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Draw {
    pub value: f64,
    pub scale: f64,
}

impl Draw {
    pub fn new(scale: f64, hit: bool) -> Self {
        Draw {
            value: if hit { scale } else { 0.0 },
            scale,
        }
    }

    pub const ZERO: Draw = Draw { value: 0.0, scale: 0.0 };
}

#[derive(Debug, Clone, Default)]
pub(crate) struct TermColumn {
    values: Vec<f64>,
    hits: u64,
    max_scale: f64,
}

impl TermColumn {
    fn push(&mut self, d: Draw) {
        self.values.push(d.value);
        if d.value != 0.0 {
            self.hits += 1;
        }
        if d.scale.is_finite() {
            self.max_scale = self.max_scale.max(d.scale.abs());
        }
    }

    fn estimate(&self) -> Estimate {
        Estimate::from_samples(&self.values)
    }

    fn zero_hit_note(&self, term: usize, reps: u64) -> Option<String> {
        if self.hits > 0 || self.max_scale == 0.0 || reps == 0 {
            return None;
        }
        Some(format!(
            "e{term}: no hits in {reps} replicates; one-sided 95% upper bound {:.3e}",
            3.0 / reps as f64 * self.max_scale
        ))
    }
}

/// Runs `draw` once per replicate and collects the six columns in
/// replicate order.
pub(crate) fn run_columns<F>(mc: &McConfig, draw: F) -> Result<[TermColumn; 6]>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<[Draw; 6]> + Sync + Send,
{
    if mc.replicates == 0 {
        return Err(Error::invalid("replicates", "must be positive"));
    }
    let base = mc.rng.fork(0x5745_494e);
    let rows = replicate(mc.replicates, |i| {
        let mut rng = base.with_stream(i).rng();
        draw(&mut rng)
    });
    let mut cols: [TermColumn; 6] = Default::default();
    for row in rows {
        let row = row?;
        for (c, d) in cols.iter_mut().zip(row) {
            c.push(d);
        }
    }
    Ok(cols)
}

/// Uniform point on the torus with weight equal to the density there.
pub(crate) fn draw_anywhere<R: Rng + ?Sized>(measure: &IntensityMeasure, rng: &mut R) -> (Vec<f64>, f64) {
    let x: Vec<f64> = (0..measure.dim()).map(|_| rng.random::<f64>()).collect();
    let w = measure.density(&x);
    (x, w)
}

/// Uniform point in `B_r(center)` with weight density times ball volume.
pub(crate) fn draw_in_ball<R: Rng + ?Sized>(measure: &IntensityMeasure, center: &[f64], r: f64, rng: &mut R) -> (Vec<f64>, f64) {
    let d = measure.dim();
    let mut x = vec![0.0; d];
    uniform_in_ball(center, r, rng, &mut x);
    let w = measure.density(&x) * unit_ball_volume(d) * r.powi(d as i32);
    (x, w)
}

/// Rejects functionals whose balls would wrap around the torus.
pub(crate) fn check_radii<F: StabilizingFunctional + ?Sized>(f: &F) -> Result<()> {
    let r = f.max_truncation_radius();
    if !(4.0 * r < 1.0) || !(2.0 * f.tuple_radius() < 1.0) {
        return Err(Error::BallTooLarge { radius: r });
    }
    Ok(())
}

/// Bound report for k-NN marks under Poisson input, including the exact
/// intensity distance.
pub fn knn_poisson_report(f: &KnnFunctional, mc: &McConfig) -> Result<BoundReport> {
    let p = *f.params();
    let report = estimate_bounds_poisson(f, f.scaled_measure(), mc)?;
    let lower = f.scaled_measure().lower() / p.n;
    let dtv = knn_poisson_dtv(&p, lower, f.dim())?;
    Ok(report.with_dtv(dtv).with_levels(f.b(), p.b0))
}

/// Bound report for k-NN marks under binomial input, including the exact
/// intensity distance. `q` is the probability measure of the points.
pub fn knn_binomial_report(f: &KnnFunctional, q: &IntensityMeasure, mc: &McConfig) -> Result<BoundReport> {
    let p = *f.params();
    let n = p.n.round() as usize;
    let report = estimate_bounds_binomial(f, q, n, mc)?;
    let dtv = knn_binomial_dtv(&p, q.lower(), f.dim())?;
    Ok(report.with_dtv(dtv).with_levels(f.b(), p.b0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_sum_of_terms() {
        let mut cols: [TermColumn; 6] = Default::default();
        for (i, c) in cols.iter_mut().enumerate() {
            c.push(Draw::new(i as f64, true));
            c.push(Draw::new(i as f64 + 2.0, true));
        }
        let r = BoundReport::from_terms("poisson", &cols, 10.0, 1, 2, &McConfig::new(2, 0)).with_dtv(0.5);
        assert_eq!(r.total, 0.5 + 1.0 + 2.0 + 3.0 + 4.0 + 5.0 + 6.0);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["dtv_lm", "e1", "e6", "se_e1", "se_e6", "total", "n", "k", "d", "b", "b0", "seed", "replicates"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn zero_hits_are_flagged() {
        let mut cols: [TermColumn; 6] = Default::default();
        for c in cols.iter_mut() {
            c.push(Draw::new(6.0, false));
        }
        let r = BoundReport::from_terms("poisson", &cols, 10.0, 1, 2, &McConfig::new(1, 0));
        assert_eq!(r.notes.len(), 6);
        assert!(r.notes[0].contains("1.800e1"));
    }
}
