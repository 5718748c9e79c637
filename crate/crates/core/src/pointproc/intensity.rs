use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{lens_volume, unit_ball_volume, wrap_coord, wrap_delta};
use crate::quadrature::{integrate, integrate_ball, integrate_box};
use crate::tolerances::Tolerances;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Shape of a density on the torus, before scaling.
#[derive(Clone)]
pub enum Density {
    Constant,
    /// Product of one periodic factor per axis.
    Separable(Vec<ScalarFn>),
    General(FieldFn),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Constant => write!(f, "Constant"),
            Density::Separable(v) => write!(f, "Separable({} factors)", v.len()),
            Density::General(_) => write!(f, "General"),
        }
    }
}

/// A finite measure on the torus with a bounded, strictly positive density.
#[derive(Debug, Clone)]
pub struct IntensityMeasure {
    d: usize,
    density: Density,
    scale: f64,
    lower: f64,
    upper: f64,
    total_mass: f64,
    label: String,
    tol: Tolerances,
}

impl IntensityMeasure {
    /// Constant density `level` on `[0,1)^d`. A zero level gives the null measure.
    pub fn constant(d: usize, level: f64) -> Result<Self> {
        check_dim(d)?;
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::invalid("level", "must be finite and nonnegative"));
        }
        Ok(IntensityMeasure {
            d,
            density: Density::Constant,
            scale: level,
            lower: level,
            upper: level,
            total_mass: level,
            label: format!("constant:{level}"),
            tol: Tolerances::DEFAULT,
        })
    }

    /// Product density `prod_i factors[i](x_i)` with declared bounds.
    pub fn separable(
        factors: Vec<ScalarFn>,
        lower: f64,
        upper: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let d = factors.len();
        check_dim(d)?;
        let tol = Tolerances::DEFAULT;
        let mut total = 1.0;
        for f in &factors {
            let f = f.clone();
            total *= integrate(|t| f(t), 0.0, 1.0, tol.quadrature_rel * 1e-2, &tol)?.value;
        }
        let m = IntensityMeasure {
            d,
            density: Density::Separable(factors),
            scale: 1.0,
            lower,
            upper,
            total_mass: total,
            label: label.into(),
            tol,
        };
        m.spot_check()?;
        Ok(m)
    }

    /// Arbitrary density with declared bounds; the mass is found by quadrature.
    pub fn general(
        d: usize,
        f: FieldFn,
        lower: f64,
        upper: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        check_dim(d)?;
        let tol = Tolerances::DEFAULT;
        let g = f.clone();
        let total = integrate_box(
            &move |p: &[f64]| g(p),
            &vec![0.0; d],
            &vec![1.0; d],
            1e-7,
            &tol,
        )?;
        let m = IntensityMeasure {
            d,
            density: Density::General(f),
            scale: 1.0,
            lower,
            upper,
            total_mass: total,
            label: label.into(),
            tol,
        };
        m.spot_check()?;
        Ok(m)
    }

    /// Probability density `prod_i (1 + amplitude cos(2 pi x_i))`.
    pub fn cosine(d: usize, amplitude: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(Error::invalid("amplitude", "must lie in [0,1)"));
        }
        let factor: ScalarFn = Arc::new(move |t: f64| 1.0 + amplitude * (2.0 * PI * t).cos());
        let mut m = Self::separable(
            vec![factor; d],
            (1.0 - amplitude).powi(d as i32),
            (1.0 + amplitude).powi(d as i32),
            format!("cosine:{amplitude}"),
        )?;
        m.total_mass = 1.0;
        Ok(m)
    }

    fn spot_check(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.lower <= self.upper && self.upper.is_finite()) {
            return Err(Error::invalid("bounds", "need 0 < lower <= upper < inf"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut p = vec![0.0; self.d];
        for _ in 0..512 {
            p.iter_mut().for_each(|c| *c = rng.random::<f64>());
            let v = self.density(&p);
            let slack = 1e-12 * self.upper;
            if v < self.lower - slack || v > self.upper + slack {
                return Err(Error::invalid(
                    "density",
                    format!("value {v} at {p:?} outside [{}, {}]", self.lower, self.upper),
                ));
            }
        }
        Ok(())
    }

    /// Multiplies the measure by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.scale *= factor;
        m.lower *= factor;
        m.upper *= factor;
        m.total_mass *= factor;
        m
    }

    /// The probability measure proportional to this one.
    pub fn normalized(&self) -> Result<Self> {
        if self.total_mass <= 0.0 {
            return Err(Error::NotAProbability { mass: 0.0 });
        }
        Ok(self.scaled(1.0 / self.total_mass))
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }
    pub fn lower(&self) -> f64 {
        self.lower
    }
    pub fn upper(&self) -> f64 {
        self.upper
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }
    pub fn is_constant(&self) -> bool {
        matches!(self.density, Density::Constant)
    }
    pub fn kind(&self) -> &Density {
        &self.density
    }

    /// Density at a point (coordinates are wrapped first).
    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.density {
            Density::Constant => self.scale,
            Density::Separable(fs) => {
                self.scale * fs.iter().zip(x).map(|(f, &c)| f(wrap_coord(c))).product::<f64>()
            }
            Density::General(f) => {
                let w: Vec<f64> = x.iter().map(|&c| wrap_coord(c)).collect();
                self.scale * f(&w)
            }
        }
    }

    pub fn ball_mass(&self, center: &[f64], r: f64) -> Result<f64> {
        self.check_point(center)?;
        if 2.0 * r >= 1.0 {
            return Err(Error::BallTooLarge { radius: r });
        }
        if r <= 0.0 {
            return Ok(0.0);
        }
        if self.is_constant() {
            return Ok(self.scale * unit_ball_volume(self.d) * r.powi(self.d as i32));
        }
        integrate_ball(
            &|p: &[f64]| self.density(p),
            center,
            r,
            self.tol.quadrature_rel,
            &self.tol,
        )
    }

    /// Smallest `r` with `ball_mass(center, r) >= target`, up to the
    /// bisection tolerance (the upper bracket is returned).
    pub fn radius_for_mass(&self, center: &[f64], target: f64) -> Result<f64> {
        self.check_point(center)?;
        if target.is_nan() || target < 0.0 {
            return Err(Error::invalid("target", "must be nonnegative"));
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        let rmax = 0.5 * (1.0 - f64::EPSILON);
        if self.is_constant() {
            let reachable = self.scale * unit_ball_volume(self.d) * rmax.powi(self.d as i32);
            if target > reachable || self.scale == 0.0 {
                return Err(Error::TargetUnreachable { target, reachable });
            }
            return Ok((target / (self.scale * unit_ball_volume(self.d))).powf(1.0 / self.d as f64));
        }
        let reachable = self.ball_mass(center, rmax)?;
        if target > reachable {
            return Err(Error::TargetUnreachable { target, reachable });
        }
        // start from the bracket implied by the density bounds
        let w = unit_ball_volume(self.d);
        let inv = |level: f64| (target / (level * w)).powf(1.0 / self.d as f64);
        let mut lo = inv(self.upper).min(rmax);
        let mut hi = inv(self.lower).min(rmax);
        if self.ball_mass(center, lo)? >= target {
            hi = lo;
            lo = 0.0;
        }
        while hi - lo > self.tol.bisection_abs {
            let mid = 0.5 * (lo + hi);
            if self.ball_mass(center, mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Mass of the box `lower + [0, sides]` (coordinates may exceed `[0,1)`).
    pub fn box_mass(&self, lower: &[f64], sides: &[f64]) -> Result<f64> {
        self.check_point(lower)?;
        match &self.density {
            Density::Constant => Ok(self.scale * sides.iter().product::<f64>()),
            Density::Separable(fs) => {
                let mut m = self.scale;
                for ((f, &a), &s) in fs.iter().zip(lower).zip(sides) {
                    m *= integrate(|t| f(wrap_coord(t)), a, a + s, self.tol.quadrature_rel, &self.tol)?
                        .value;
                }
                Ok(m)
            }
            Density::General(_) => integrate_box(
                &|p: &[f64]| self.density(p),
                lower,
                sides,
                self.tol.quadrature_rel,
                &self.tol,
            ),
        }
    }

    /// Mass of `B_{r1}(c1) ∪ B_{r2}(c2)`.
    pub fn union_mass(&self, c1: &[f64], r1: f64, c2: &[f64], r2: f64) -> Result<f64> {
        let m1 = self.ball_mass(c1, r1)?;
        let m2 = self.ball_mass(c2, r2)?;
        Ok(m1 + m2 - self.intersection_mass(c1, r1, c2, r2)?)
    }

    /// Mass of `B_{r1}(c1) ∩ B_{r2}(c2)`; both radii must be below a quarter.
    pub fn intersection_mass(&self, c1: &[f64], r1: f64, c2: &[f64], r2: f64) -> Result<f64> {
        self.check_point(c1)?;
        self.check_point(c2)?;
        for r in [r1, r2] {
            if r >= self.tol.lift_window {
                return Err(Error::BallTooLarge { radius: r });
            }
        }
        let rel: Vec<f64> = c1.iter().zip(c2).map(|(&a, &b)| wrap_delta(a, b)).collect();
        let t = rel.iter().map(|v| v * v).sum::<f64>().sqrt();
        if t >= r1 + r2 || r1 <= 0.0 || r2 <= 0.0 {
            return Ok(0.0);
        }
        if self.is_constant() {
            return Ok(self.scale * lens_volume(r1, r2, t, self.d));
        }
        // integrate over the first ball with the last axis clipped to the second
        let d = self.d;
        let chord = |p: &[f64], rho: f64| -> Option<(f64, f64)> {
            let mut off = 0.0;
            for j in 0..d - 1 {
                let v = p[j] - rel[j];
                off += v * v;
            }
            let s = r2 * r2 - off;
            if s <= 0.0 {
                return None;
            }
            let s = s.sqrt();
            let lo = (rel[d - 1] - s).max(-rho);
            let hi = (rel[d - 1] + s).min(rho);
            (hi > lo).then_some((lo, hi))
        };
        let eval_line = |p: &mut Vec<f64>, rho: f64| -> Result<f64> {
            match chord(p, rho) {
                None => Ok(0.0),
                Some((lo, hi)) => {
                    let base = p.clone();
                    Ok(integrate(
                        |s| {
                            let mut q: Vec<f64> = base.iter().zip(c1).map(|(v, c)| c + v).collect();
                            q[d - 1] = c1[d - 1] + s;
                            self.density(&q)
                        },
                        lo,
                        hi,
                        self.tol.quadrature_rel * 1e-2,
                        &self.tol,
                    )?
                    .value)
                }
            }
        };
        let mut offsets = vec![0.0; d];
        self.lens_level(&eval_line, &mut offsets, 0, r1, self.tol.quadrature_rel)
    }

    fn lens_level<G: Fn(&mut Vec<f64>, f64) -> Result<f64>>(
        &self,
        line: &G,
        offsets: &mut Vec<f64>,
        axis: usize,
        rho: f64,
        rel: f64,
    ) -> Result<f64> {
        if axis + 1 == self.d {
            return line(offsets, rho);
        }
        let mut failure = None;
        let v = integrate(
            |phi| {
                if failure.is_some() {
                    return 0.0;
                }
                let (s, c) = phi.sin_cos();
                let mut local = offsets.clone();
                local[axis] = rho * s;
                match self.lens_level(line, &mut local, axis + 1, rho * c, rel * 0.1) {
                    Ok(v) => rho * c * v,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            },
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            rel,
            &self.tol,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(v.value),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be at least 1"));
    }
    Ok(())
}
