//! Sampling point processes restricted to small windows (unions of balls),
//! optionally under an exponential tilt of the point count.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::geometry::{wrap_coord, Ball};

use super::sampler::poisson_count;
use super::{IntensityMeasure, PointConfiguration};

/// A union of at most two balls together with its mass.
#[derive(Debug, Clone)]
pub struct Region {
    balls: Vec<Ball>,
    mass: f64,
}

impl Region {
    pub fn new(measure: &IntensityMeasure, balls: Vec<Ball>) -> Result<Self> {
        let mass = match balls.as_slice() {
            [] => 0.0,
            [a] => measure.ball_mass(&a.center, a.radius)?,
            [a, b] => measure.union_mass(&a.center, a.radius, &b.center, b.radius)?,
            _ => return Err(Error::invalid("region", "at most two balls are supported")),
        };
        Ok(Region { balls, mass })
    }

    pub fn ball(measure: &IntensityMeasure, ball: Ball) -> Result<Self> {
        Self::new(measure, vec![ball])
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.balls.iter().any(|b| b.contains_point(p))
    }
}

/// Proposes from the bounding cube of ball `i` and keeps the point if it
/// belongs to ball `i` but to no earlier ball, so overlapping balls split
/// the union into disjoint pieces.
fn propose_in_piece<R: Rng + ?Sized>(balls: &[Ball], i: usize, rng: &mut R, out: &mut [f64]) -> bool {
    let b = &balls[i];
    for (j, o) in out.iter_mut().enumerate() {
        *o = wrap_coord(b.center[j] + b.radius * (2.0 * rng.random::<f64>() - 1.0));
    }
    b.contains_point(out) && !balls[..i].iter().any(|e| e.contains_point(out))
}

fn cube_volume(b: &Ball) -> f64 {
    (2.0 * b.radius).powi(b.center.len() as i32)
}

/// Intensity factor `theta` applied on a sub-region of a sampling window.
/// The region must lie inside the window it is used with.
#[derive(Debug, Clone)]
pub struct Tilt {
    pub region: Region,
    pub theta: f64,
}

impl Tilt {
    pub fn new(region: Region, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::invalid("theta", format!("{theta} must lie in (0, 1]")));
        }
        Ok(Tilt { region, theta })
    }

    /// The same factor over a whole window.
    pub fn uniform(window: &Region, theta: f64) -> Result<Self> {
        Self::new(window.clone(), theta)
    }
}

/// Poisson process with intensity `measure` on the window, multiplied by
/// `tilt.theta` on the tilt region, appended to `out`. Returns the log
/// likelihood ratio of the untilted law against the sampled one,
/// `-(1 - theta) K(T) - N_T ln theta`.
pub fn poisson_on<R: Rng + ?Sized>(
    measure: &IntensityMeasure,
    window: &Region,
    tilt: Option<&Tilt>,
    rng: &mut R,
    out: &mut PointConfiguration,
) -> Result<f64> {
    let d = measure.dim();
    let mut p = vec![0.0; d];
    let mut in_tilt = 0usize;
    let upper = measure.upper();
    for i in 0..window.balls.len() {
        let proposals = poisson_count(upper * cube_volume(&window.balls[i]), rng);
        for _ in 0..proposals {
            if !propose_in_piece(&window.balls, i, rng, &mut p) {
                continue;
            }
            if !measure.is_constant() && rng.random::<f64>() * upper >= measure.density(&p) {
                continue;
            }
            if let Some(t) = tilt {
                if t.region.contains(&p) {
                    if t.theta < 1.0 && rng.random::<f64>() >= t.theta {
                        continue;
                    }
                    in_tilt += 1;
                }
            }
            out.push_unchecked(&p);
        }
    }
    Ok(match tilt {
        Some(t) => log_lr_poisson(t.theta, t.region.mass, in_tilt),
        None => 0.0,
    })
}

pub fn log_lr_poisson(theta: f64, mass: f64, count: usize) -> f64 {
    if theta == 1.0 {
        0.0
    } else {
        -(1.0 - theta) * mass - count as f64 * theta.ln()
    }
}

/// One point with density proportional to the measure on the region.
pub fn point_in_region<R: Rng + ?Sized>(
    measure: &IntensityMeasure,
    region: &Region,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    let cubes: Vec<f64> = region.balls.iter().map(cube_volume).collect();
    let total: f64 = cubes.iter().sum();
    let budget = measure.tolerances().sampler_budget;
    let mut proposals = 0u64;
    loop {
        proposals += 1;
        if proposals > budget {
            return Err(Error::SamplerStuck { proposals });
        }
        let mut u = rng.random::<f64>() * total;
        let mut i = 0;
        while i + 1 < cubes.len() && u >= cubes[i] {
            u -= cubes[i];
            i += 1;
        }
        if !propose_in_piece(&region.balls, i, rng, out) {
            continue;
        }
        if measure.is_constant() || rng.random::<f64>() * measure.upper() < measure.density(out) {
            return Ok(());
        }
    }
}

/// A sampling window for binomial input.
///
/// `scale` converts window masses into probabilities for a single point
/// (1 for the law itself, `1 / (1 - Q(S))` for the law conditioned off `S`).
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub region: &'a Region,
    pub tilt: Option<&'a Tilt>,
    pub scale: f64,
}

impl<'a> Window<'a> {
    pub fn new(region: &'a Region, tilt: Option<&'a Tilt>, scale: f64) -> Self {
        Window { region, tilt, scale }
    }
}

/// Points of a binomial process of `m` points restricted to disjoint
/// windows, appended to `out`.
///
/// Each point lands in a tilt region with its probability multiplied by
/// `theta`; the remaining probability goes outside the windows. Returns the
/// log likelihood ratio of the untilted law against the sampled one.
pub fn binomial_on<R: Rng + ?Sized>(
    measure: &IntensityMeasure,
    m: u64,
    windows: &[Window<'_>],
    rng: &mut R,
    out: &mut PointConfiguration,
) -> Result<f64> {
    // cells: (window, inside tilt region, untilted prob, sampled prob)
    let mut cells = Vec::with_capacity(2 * windows.len());
    for (j, w) in windows.iter().enumerate() {
        let whole = w.scale * w.region.mass;
        match w.tilt {
            Some(t) => {
                let pt = (w.scale * t.region.mass).min(whole);
                cells.push((j, Some(true), pt, t.theta * pt, t.theta));
                cells.push((j, Some(false), whole - pt, whole - pt, 1.0));
            }
            None => cells.push((j, None, whole, whole, 1.0)),
        }
    }
    let p_in: f64 = cells.iter().map(|c| c.2).sum();
    let q_in: f64 = cells.iter().map(|c| c.3).sum();
    if !(p_in >= 0.0 && p_in < 1.0 + 1e-12) {
        return Err(Error::NotAProbability { mass: p_in });
    }
    let mut remaining = m;
    let mut rest = 1.0;
    let mut llr = 0.0;
    let d = measure.dim();
    let mut p = vec![0.0; d];
    let budget = measure.tolerances().sampler_budget;
    for &(j, part, _, q, theta) in &cells {
        let share = (q / rest).clamp(0.0, 1.0);
        let c = if remaining == 0 || share == 0.0 {
            0
        } else {
            Binomial::new(remaining, share).expect("valid binomial").sample(rng)
        };
        remaining -= c;
        rest = (rest - q).max(0.0);
        if part == Some(true) {
            llr -= c as f64 * theta.ln();
        }
        let w = &windows[j];
        for _ in 0..c {
            match (part, w.tilt) {
                (Some(true), Some(t)) => point_in_region(measure, &t.region, rng, &mut p)?,
                (Some(false), Some(t)) => {
                    let mut tries = 0u64;
                    loop {
                        point_in_region(measure, w.region, rng, &mut p)?;
                        if !t.region.contains(&p) {
                            break;
                        }
                        tries += 1;
                        if tries > budget {
                            return Err(Error::SamplerStuck { proposals: tries });
                        }
                    }
                }
                _ => point_in_region(measure, w.region, rng, &mut p)?,
            }
            out.push_unchecked(&p);
        }
    }
    if remaining > 0 && q_in != p_in {
        llr += remaining as f64 * ((1.0 - p_in).ln() - (1.0 - q_in).ln());
    }
    Ok(llr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointproc::RngSpec;

    #[test]
    fn tilted_poisson_void_probability_is_unbiased() {
        // P(no point in B) = exp(-mass), estimated under a tilt
        let m = IntensityMeasure::constant(2, 1000.0).unwrap();
        let region = Region::ball(&m, Ball::new(vec![0.3, 0.3], 0.06)).unwrap();
        let exact = (-region.mass()).exp();
        let mut rng = RngSpec::new(5, 0).rng();
        let theta = 0.1;
        let reps = 20000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let mut out = PointConfiguration::empty(2);
            let tilt = Tilt::uniform(&region, theta).unwrap();
            let llr = poisson_on(&m, &region, Some(&tilt), &mut rng, &mut out).unwrap();
            if out.is_empty() {
                acc += llr.exp();
            }
        }
        let est = acc / reps as f64;
        assert!((est / exact - 1.0).abs() < 0.05, "{est} vs {exact}");
    }

    #[test]
    fn union_pieces_have_the_right_mass() {
        let m = IntensityMeasure::constant(2, 500.0).unwrap();
        let region = Region::new(
            &m,
            vec![Ball::new(vec![0.5, 0.5], 0.05), Ball::new(vec![0.55, 0.5], 0.05)],
        )
        .unwrap();
        let mut rng = RngSpec::new(6, 0).rng();
        let reps = 4000;
        let mut total = 0usize;
        for _ in 0..reps {
            let mut out = PointConfiguration::empty(2);
            poisson_on(&m, &region, None, &mut rng, &mut out).unwrap();
            assert!(out.iter().all(|p| region.contains(p)));
            total += out.len();
        }
        let mean = total as f64 / reps as f64;
        let se = (region.mass() / reps as f64).sqrt();
        assert!((mean - region.mass()).abs() < 4.0 * se);
    }

    #[test]
    fn tilted_binomial_void_probability() {
        let q = IntensityMeasure::constant(2, 1.0).unwrap();
        let region = Region::ball(&q, Ball::new(vec![0.1, 0.9], 0.05)).unwrap();
        let p = region.mass();
        let m = 1000u64;
        let exact = (1.0 - p).powi(m as i32);
        let mut rng = RngSpec::new(8, 0).rng();
        let reps = 20000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let mut out = PointConfiguration::empty(2);
            let tilt = Tilt::uniform(&region, 0.2).unwrap();
            let llr = binomial_on(&q, m, &[Window::new(&region, Some(&tilt), 1.0)], &mut rng, &mut out).unwrap();
            if out.is_empty() {
                acc += llr.exp();
            }
        }
        let est = acc / reps as f64;
        assert!((est / exact - 1.0).abs() < 0.05, "{est} vs {exact}");
    }

    #[test]
    fn inner_tilt_estimates_annulus_event() {
        // no point in the inner ball, at least one in the annulus
        let m = IntensityMeasure::constant(2, 1000.0).unwrap();
        let c = vec![0.4, 0.6];
        let window = Region::ball(&m, Ball::new(c.clone(), 0.066)).unwrap();
        let inner = Region::ball(&m, Ball::new(c.clone(), 0.047)).unwrap();
        let exact = (-inner.mass()).exp() * (1.0 - (inner.mass() - window.mass()).exp());
        let tilt = Tilt::new(inner.clone(), 1.0 / inner.mass()).unwrap();
        let mut rng = RngSpec::new(9, 0).rng();
        let reps = 20000;
        let mut v = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut out = PointConfiguration::empty(2);
            let llr = poisson_on(&m, &window, Some(&tilt), &mut rng, &mut out).unwrap();
            let hit = !out.is_empty() && out.iter().all(|p| !inner.contains(p));
            v.push(if hit { llr.exp() } else { 0.0 });
        }
        let e = crate::mc::Estimate::from_samples(&v);
        assert!(e.z_exact(exact).abs() < 4.0, "{e:?} vs {exact}");
        assert!(e.se < 0.05 * exact);
    }

    #[test]
    fn inner_tilt_binomial_two_windows() {
        let q = IntensityMeasure::constant(2, 1.0).unwrap();
        let a = Region::ball(&q, Ball::new(vec![0.2, 0.2], 0.06)).unwrap();
        let ia = Region::ball(&q, Ball::new(vec![0.2, 0.2], 0.04)).unwrap();
        let b = Region::ball(&q, Ball::new(vec![0.7, 0.7], 0.06)).unwrap();
        let m = 800u64;
        // P(no point in the inner ball of a, none in b)
        let exact = (1.0 - ia.mass() - b.mass()).powi(m as i32);
        let tilt = Tilt::new(ia.clone(), 0.3).unwrap();
        let bt = Tilt::uniform(&b, 0.2).unwrap();
        let mut rng = RngSpec::new(10, 0).rng();
        let reps = 20000;
        let mut v = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut out = PointConfiguration::empty(2);
            let llr = binomial_on(
                &q,
                m,
                &[Window::new(&a, Some(&tilt), 1.0), Window::new(&b, Some(&bt), 1.0)],
                &mut rng,
                &mut out,
            )
            .unwrap();
            let hit = out.iter().all(|p| !ia.contains(p) && !b.contains(p));
            v.push(if hit { llr.exp() } else { 0.0 });
        }
        let e = crate::mc::Estimate::from_samples(&v);
        assert!(e.z_exact(exact).abs() < 4.0, "{e:?} vs {exact}");
    }
}
