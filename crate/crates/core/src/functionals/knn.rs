use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::Ball;
use crate::pointproc::IntensityMeasure;

use super::{Cloud, Evaluation, ExceedanceLocality, Mark, StabilizingFunctional};

/// Parameters of the k-nearest-neighbour exceedance functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub n: f64,
    /// Lower mark cutoff.
    pub b0: f64,
}

impl KnnParams {
    pub fn new(k: usize, n: f64, b0: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k", "must be at least 1"));
        }
        if !(n >= 3.0) {
            return Err(Error::invalid("n", "must be at least 3"));
        }
        if !b0.is_finite() {
            return Err(Error::invalid("b0", "must be finite"));
        }
        Ok(KnnParams { k, n, b0 })
    }

    /// Centering `log n + (k-1) log log n - log (k-1)!`.
    pub fn a_n(&self) -> f64 {
        let l = self.n.ln();
        l + (self.k as f64 - 1.0) * l.ln() - ln_gamma(self.k as f64)
    }
}

/// Choice of the truncation level `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BPolicy {
    LogN,
    AN,
    Explicit(f64),
}

impl BPolicy {
    pub fn value(&self, p: &KnnParams) -> f64 {
        match *self {
            BPolicy::LogN => p.n.ln(),
            BPolicy::AN => p.a_n(),
            BPolicy::Explicit(b) => b,
        }
    }
}

/// Marks `n K(B_{R_k(x)}(x)) - a_n` for points whose mark exceeds `b0`;
/// stabilization ball `B_{R_k(x)}(x)`, truncation `B_{r(x,b)}(x)` where
/// `n K(B_{r(x,b)}(x)) = a_n + b`.
#[derive(Debug, Clone)]
pub struct KnnFunctional {
    params: KnnParams,
    a_n: f64,
    b: f64,
    /// The measure `n K`.
    scaled: IntensityMeasure,
    /// Truncation radius when the density is constant.
    fixed_radius: Option<f64>,
    max_radius: f64,
}

impl KnnFunctional {
    /// `measure` is the probability measure `K`; the functional works with `n K`.
    pub fn new(params: KnnParams, measure: &IntensityMeasure, b: f64) -> Result<Self> {
        let a_n = params.a_n();
        if !(b >= params.b0.max(0.0)) {
            return Err(Error::invalid("b", format!("{b} must be at least max(0, b0)")));
        }
        if a_n + params.b0 <= 0.0 {
            return Err(Error::invalid("b0", "a_n + b0 must be positive"));
        }
        let scaled = measure.scaled(params.n);
        let target = a_n + b;
        let fixed_radius = if scaled.is_constant() {
            Some(scaled.radius_for_mass(&vec![0.0; scaled.dim()], target)?)
        } else {
            None
        };
        // worst case over locations: the density bound gives the largest radius
        let w = crate::geometry::unit_ball_volume(scaled.dim());
        let max_radius = fixed_radius.unwrap_or((target / (scaled.lower() * w)).powf(1.0 / scaled.dim() as f64));
        if 2.0 * max_radius >= 1.0 {
            return Err(Error::BallTooLarge { radius: max_radius });
        }
        Ok(KnnFunctional {
            params,
            a_n,
            b,
            scaled,
            fixed_radius,
            max_radius,
        })
    }

    pub fn params(&self) -> &KnnParams {
        &self.params
    }

    pub fn a_n(&self) -> f64 {
        self.a_n
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// The measure `n K` used for marks and windows.
    pub fn scaled_measure(&self) -> &IntensityMeasure {
        &self.scaled
    }

    /// `r(x, u)`: radius whose ball has `n K`-mass `a_n + u`.
    pub fn radius_at(&self, x: &[f64], u: f64) -> f64 {
        self.scaled
            .radius_for_mass(x, self.a_n + u)
            .unwrap_or(f64::INFINITY)
    }

    fn truncation_radius(&self, x: &[f64]) -> f64 {
        self.fixed_radius.unwrap_or_else(|| self.radius_at(x, self.b))
    }

    /// Mark from a k-NN radius; balls reaching around the torus get the full mass.
    pub fn mark_for_radius(&self, x: &[f64], r: f64) -> f64 {
        let mass = if 2.0 * r >= 1.0 {
            self.scaled.total_mass()
        } else {
            self.scaled.ball_mass(x, r).unwrap_or(self.scaled.total_mass())
        };
        mass - self.a_n
    }
}

impl StabilizingFunctional for KnnFunctional {
    fn arity(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        self.scaled.dim()
    }

    fn evaluate(&self, tuple: &[usize], cloud: &Cloud) -> Evaluation {
        let i = tuple[0];
        let x = cloud.point(i);
        let r = cloud
            .index()
            .kth_distance_of(x, i, self.params.k)
            .unwrap_or(f64::INFINITY);
        let value = self.mark_for_radius(x, r);
        Evaluation {
            g: value > self.params.b0,
            mark: Mark {
                location: Some(x.to_vec()),
                value,
            },
            stabilization: Ball::new(x.to_vec(), r),
        }
    }

    fn truncation(&self, tuple: &[&[f64]]) -> Ball {
        Ball::new(tuple[0].to_vec(), self.truncation_radius(tuple[0]))
    }

    fn max_truncation_radius(&self) -> f64 {
        self.max_radius
    }

    fn tuple_radius(&self) -> f64 {
        0.0
    }

    fn exceedance_locality(&self) -> ExceedanceLocality {
        // b >= b0, so g = 1 whenever the k-NN ball leaves the truncation ball
        ExceedanceLocality::Truncation
    }

    fn window_tilt(&self, tuple: &[&[f64]]) -> Option<(Ball, f64)> {
        let mean = self.a_n + self.params.b0;
        if mean <= self.params.k as f64 {
            return None;
        }
        let x = tuple[0];
        let r = self.radius_at(x, self.params.b0).min(self.truncation_radius(x));
        Some((Ball::new(x.to_vec(), r), self.params.k as f64 / mean))
    }

    fn exceedance_tilt(&self) -> f64 {
        (self.params.k as f64 / (self.a_n + self.b)).min(1.0)
    }

    fn g_tilde(&self, tuple: &[usize], cloud: &Cloud) -> bool {
        let i = tuple[0];
        let x = cloud.point(i);
        let r = self.truncation_radius(x);
        let mut inside = Vec::with_capacity(self.params.k + 4);
        cloud.index().within(x, r, |j, s| {
            if j != i {
                inside.push(s)
            }
        });
        if inside.len() < self.params.k {
            return false;
        }
        let k = self.params.k;
        let (_, v, _) = inside.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
        self.mark_for_radius(x, v.sqrt()) > self.params.b0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::eval_xi;
    use crate::pointproc::PointConfiguration;
    use std::f64::consts::PI;

    #[test]
    fn a_n_formula() {
        let p = KnnParams::new(3, 1000.0, 0.0).unwrap();
        let l = 1000f64.ln();
        assert!((p.a_n() - (l + 2.0 * l.ln() - 2f64.ln())).abs() < 1e-12);
        assert!(KnnParams::new(1, 2.0, 0.0).is_err());
    }

    #[test]
    fn two_point_marks() {
        let k = IntensityMeasure::constant(2, 1.0).unwrap();
        let params = KnnParams::new(1, 1000.0, 0.0).unwrap();
        let f = KnnFunctional::new(params, &k, 1000f64.ln()).unwrap();
        let r = 0.08;
        let w = PointConfiguration::from_points(2, &[vec![0.1, 0.1], vec![0.1, 0.18]]).unwrap();
        let xi = eval_xi(&f, &w);
        let expected = 1000.0 * PI * r * r - params.a_n();
        assert_eq!(xi.len(), 2);
        for a in xi.atoms() {
            assert!((a.mark - expected).abs() < 1e-9);
        }
        // marks below b0 are filtered
        let f = KnnFunctional::new(KnnParams::new(1, 1000.0, 30.0).unwrap(), &k, 30.0).unwrap();
        assert!(eval_xi(&f, &w).is_empty());
    }

    #[test]
    fn g_tilde_shortcut_agrees_with_definition() {
        let k = IntensityMeasure::constant(2, 1.0).unwrap();
        let f = KnnFunctional::new(KnnParams::new(2, 500.0, -1.0).unwrap(), &k, 500f64.ln()).unwrap();
        let w = crate::pointproc::sample_poisson(&k.scaled(500.0), crate::pointproc::RngSpec::new(4, 0)).unwrap();
        let cloud = Cloud::new(w);
        for i in 0..cloud.len() {
            let e = f.evaluate(&[i], &cloud);
            let slow = e.g && f.truncation(&[cloud.point(i)]).contains_ball(&e.stabilization);
            assert_eq!(slow, f.g_tilde(&[i], &cloud));
        }
    }
}
