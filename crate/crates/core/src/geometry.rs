//! Flat-torus geometry: distances, lifts, ball volumes and circumspheres.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::pointproc::IntensityMeasure;
use crate::tolerances::Tolerances;

/// A point of the flat torus `[0,1)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Builds a point, rejecting coordinates outside `[0,1)`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        for &c in &coords {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::invalid("coords", format!("{c} is outside [0,1)")));
            }
        }
        Ok(TorusPoint { coords })
    }

    /// Builds a point by reducing each coordinate modulo one.
    pub fn wrap(coords: &[f64]) -> Self {
        TorusPoint {
            coords: coords.iter().map(|&c| wrap_coord(c)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Reduces a real coordinate into `[0,1)`.
#[inline]
pub fn wrap_coord(c: f64) -> f64 {
    let w = c.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Signed shortest displacement from `a` to `b` along one axis.
#[inline]
pub fn wrap_delta(a: f64, b: f64) -> f64 {
    let d = b - a;
    d - d.round()
}

/// Squared torus distance between two coordinate slices of equal length.
#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let t = wrap_delta(x, y);
            t * t
        })
        .sum()
}

/// Torus distance between two coordinate slices of equal length.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn torus_distance(p: &TorusPoint, q: &TorusPoint) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(dist(&p.coords, &q.coords))
}

/// Lifts torus points to `R^d` representatives near the anchor.
///
/// Each output is the shift of its input that lies within the lifting
/// window of the anchor's canonical coordinates.
pub fn torus_lift(points: &[&[f64]], anchor: &[f64], tol: &Tolerances) -> Result<Vec<Vec<f64>>> {
    let d = anchor.len();
    let mut out = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        let distance = dist(p, anchor);
        if distance > tol.lift_window {
            return Err(Error::LiftAmbiguous {
                index,
                distance,
                window: tol.lift_window,
            });
        }
        out.push(
            p.iter()
                .zip(anchor)
                .map(|(&c, &a)| a + wrap_delta(a, c))
                .collect(),
        );
    }
    Ok(out)
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

pub fn ball_volume(r: f64, d: usize) -> Result<f64> {
    if 2.0 * r >= 1.0 {
        return Err(Error::BallTooLarge { radius: r });
    }
    Ok(unit_ball_volume(d) * r.powi(d as i32))
}

/// Mass of `B_r(x)` under `measure`.
pub fn ball_measure(measure: &IntensityMeasure, x: &TorusPoint, r: f64) -> Result<f64> {
    measure.ball_mass(x.coords(), r)
}

/// Smallest radius whose ball around `x` carries `target` mass.
pub fn radius_for_mass(measure: &IntensityMeasure, x: &TorusPoint, target: f64) -> Result<f64> {
    measure.radius_for_mass(x.coords(), target)
}

/// Volume of the cap of height `h` cut from a ball of radius `r` in `R^d`.
pub fn cap_volume(r: f64, h: f64, d: usize) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let full = unit_ball_volume(d) * r.powi(d as i32);
    if h >= 2.0 * r {
        return full;
    }
    if h > r {
        return full - cap_volume(r, 2.0 * r - h, d);
    }
    let x = ((2.0 * r * h - h * h) / (r * r)).clamp(0.0, 1.0);
    0.5 * full * beta_reg((d as f64 + 1.0) / 2.0, 0.5, x)
}

/// Volume of the intersection of two Euclidean balls at center distance `t`.
pub fn lens_volume(r1: f64, r2: f64, t: f64, d: usize) -> f64 {
    if t >= r1 + r2 {
        return 0.0;
    }
    let small = r1.min(r2);
    if t <= (r1 - r2).abs() {
        return unit_ball_volume(d) * small.powi(d as i32);
    }
    let x1 = (t * t + r1 * r1 - r2 * r2) / (2.0 * t);
    let h1 = r1 - x1;
    let h2 = r2 - (t - x1);
    cap_volume(r1, h1, d) + cap_volume(r2, h2, d)
}

/// A closed ball on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        dist_sq(&self.center, p) <= self.radius * self.radius
    }

    /// Whether `other` lies inside this ball. Valid while both radii are
    /// below a quarter so the balls lift to Euclidean balls.
    pub fn contains_ball(&self, other: &Ball) -> bool {
        dist(&self.center, &other.center) + other.radius <= self.radius
    }

    pub fn intersects(&self, other: &Ball) -> bool {
        dist(&self.center, &other.center) <= self.radius + other.radius
    }
}

/// Circumsphere of a tuple, in the tuple's affine hull.
#[derive(Debug, Clone, PartialEq)]
pub struct Circumsphere {
    pub center: TorusPoint,
    pub radius: f64,
    /// Center lies in the open convex hull of the tuple.
    pub interior: bool,
}

/// Circumsphere of `k+1` points lifted around the first one.
pub fn circumsphere(tuple: &[&[f64]], tol: &Tolerances) -> Result<Circumsphere> {
    if tuple.len() < 2 {
        return Err(Error::invalid("tuple", "need at least two points"));
    }
    let d = tuple[0].len();
    let k = tuple.len() - 1;
    if k > d {
        return Err(Error::invalid("tuple", format!("{} points exceed d+1", k + 1)));
    }
    let lifted = torus_lift(tuple, tuple[0], tol)?;
    let x0 = &lifted[0];
    let a = DMatrix::from_fn(k, d, |i, j| lifted[i + 1][j] - x0[j]);
    let gram = &a * a.transpose();
    let eig = gram.clone().symmetric_eigenvalues();
    let lo = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v.abs()));
    let hi = eig.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > tol.gram_condition_max {
        return Err(Error::Degenerate { condition });
    }
    let rhs = DVector::from_fn(k, |i, _| 0.5 * gram[(i, i)]);
    let mu = gram
        .cholesky()
        .ok_or(Error::Degenerate { condition })?
        .solve(&rhs);
    let offset = a.transpose() * &mu;
    let radius = offset.norm();
    if radius >= tol.lift_window {
        return Err(Error::CircumradiusTooLarge {
            radius,
            bound: tol.lift_window,
        });
    }
    let w0 = 1.0 - mu.sum();
    let interior = w0 > tol.barycentric_min && mu.iter().all(|&m| m > tol.barycentric_min);
    let center: Vec<f64> = (0..d).map(|j| x0[j] + offset[j]).collect();
    Ok(Circumsphere {
        center: TorusPoint::wrap(&center),
        radius,
        interior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(c: &[f64]) -> TorusPoint {
        TorusPoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let t = |a: &[f64], b: &[f64]| torus_distance(&tp(a), &tp(b)).unwrap();
        assert_eq!(t(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!((t(&[0.1, 0.1], &[0.9, 0.9]) - 0.282_842_712_474_619).abs() < 1e-12);
        assert!((t(&[0.0], &[0.5]) - 0.5).abs() < 1e-15);
        assert!(matches!(
            torus_distance(&tp(&[0.1]), &tp(&[0.1, 0.2])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lift_examples() {
        let tol = Tolerances::DEFAULT;
        let out = torus_lift(&[&[0.95, 0.5]], &[0.05, 0.5], &tol).unwrap();
        assert!((out[0][0] + 0.05).abs() < 1e-12 && (out[0][1] - 0.5).abs() < 1e-15);
        let out = torus_lift(&[&[0.05, 0.5]], &[0.05, 0.5], &tol).unwrap();
        assert_eq!(out[0], vec![0.05, 0.5]);
        let out = torus_lift(&[&[0.02, 0.02], &[0.98, 0.98]], &[0.0, 0.0], &tol).unwrap();
        assert_eq!(out[0], vec![0.02, 0.02]);
        assert!((out[1][0] + 0.02).abs() < 1e-12 && (out[1][1] + 0.02).abs() < 1e-12);
        assert!(matches!(
            torus_lift(&[&[0.5, 0.5]], &[0.0, 0.0], &tol),
            Err(Error::LiftAmbiguous { .. })
        ));
    }

    #[test]
    fn volume_examples() {
        assert_eq!(ball_volume(0.0, 3).unwrap(), 0.0);
        assert!((ball_volume(0.1, 2).unwrap() - 0.031_415_926_535_897_93).abs() < 1e-15);
        assert!((ball_volume(0.2, 3).unwrap() - 0.033_510_321_638_291_124).abs() < 1e-15);
        assert!(matches!(ball_volume(0.5, 2), Err(Error::BallTooLarge { .. })));
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lens_limits() {
        let d = 2;
        let full = PI * 0.01;
        assert!((lens_volume(0.1, 0.1, 0.0, d) - full).abs() < 1e-15);
        assert_eq!(lens_volume(0.1, 0.1, 0.2, d), 0.0);
        // two unit disks at distance 1: 2pi/3 - sqrt(3)/2
        let v = lens_volume(1.0, 1.0, 1.0, d);
        assert!((v - (2.0 * PI / 3.0 - 3f64.sqrt() / 2.0)).abs() < 1e-12);
        // d=3 equal spheres: pi (4r + t)(2r - t)^2 / 12
        let v = lens_volume(1.0, 1.0, 0.7, 3);
        assert!((v - PI * (4.0 + 0.7) * (1.3f64).powi(2) / 12.0).abs() < 1e-12);
        // unequal radii, d=2, checked against the textbook formula
        let (r, s, t): (f64, f64, f64) = (1.0, 0.6, 0.9);
        let a = r * r * ((t * t + r * r - s * s) / (2.0 * t * r)).acos()
            + s * s * ((t * t + s * s - r * r) / (2.0 * t * s)).acos()
            - 0.5 * ((-t + r + s) * (t + r - s) * (t - r + s) * (t + r + s)).sqrt();
        assert!((lens_volume(r, s, t, 2) - a).abs() < 1e-12);
    }

    #[test]
    fn circumsphere_examples() {
        let tol = Tolerances::DEFAULT;
        let c = circumsphere(&[&[0.5, 0.5], &[0.5, 0.6]], &tol).unwrap();
        assert!((c.center.coords()[0] - 0.5).abs() < 1e-12);
        assert!((c.center.coords()[1] - 0.55).abs() < 1e-12);
        assert!((c.radius - 0.05).abs() < 1e-12);
        assert!(c.interior);

        let c = circumsphere(&[&[0.0, 0.0], &[0.2, 0.0], &[0.0, 0.2]], &tol).unwrap();
        assert!((c.center.coords()[0] - 0.1).abs() < 1e-12);
        assert!((c.center.coords()[1] - 0.1).abs() < 1e-12);
        assert!((c.radius - 0.141_421_356_237_309_5).abs() < 1e-12);
        assert!(!c.interior);

        let s = 0.1;
        let h = s * 3f64.sqrt() / 2.0;
        let c = circumsphere(&[&[0.3, 0.3], &[0.3 + s, 0.3], &[0.3 + s / 2.0, 0.3 + h]], &tol)
            .unwrap();
        assert!((c.radius - 0.057_735_026_918_962_58).abs() < 1e-12);
        assert!(c.interior);
    }

    #[test]
    fn circumsphere_wraps_and_rejects() {
        let tol = Tolerances::DEFAULT;
        let c = circumsphere(&[&[0.98, 0.5], &[0.02, 0.5]], &tol).unwrap();
        assert!(c.center.coords()[0].abs() < 1e-12 || (c.center.coords()[0] - 1.0).abs() < 1e-12);
        assert!((c.radius - 0.02).abs() < 1e-12);
        assert!(matches!(
            circumsphere(&[&[0.2, 0.2], &[0.2, 0.2]], &tol),
            Err(Error::Degenerate { .. })
        ));
        assert!(matches!(
            circumsphere(&[&[0.1, 0.1], &[0.2, 0.2], &[0.15, 0.15]], &tol),
            Err(Error::Degenerate { .. })
        ));
        assert!(matches!(
            circumsphere(&[&[0.1, 0.1], &[0.4, 0.1]], &tol),
            Err(Error::LiftAmbiguous { .. })
        ));
    }

    #[test]
    fn ball_relations() {
        let a = Ball::new(vec![0.05, 0.5], 0.1);
        let b = Ball::new(vec![0.98, 0.5], 0.02);
        assert!(a.contains_ball(&b));
        assert!(a.intersects(&b));
        assert!(a.contains_point(&[0.97, 0.5]));
        assert!(!a.contains_point(&[0.5, 0.5]));
    }
}
