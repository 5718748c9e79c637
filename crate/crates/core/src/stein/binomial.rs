use rand::Rng;

use crate::error::{Error, Result};
use crate::functionals::{Cloud, ExceedanceLocality, StabilizingFunctional};
use crate::geometry::Ball;
use crate::pointproc::sampler::sample_binomial_with;
use crate::pointproc::window::{binomial_on, Region, Tilt, Window};
use crate::pointproc::{IntensityMeasure, PointConfiguration};

use super::poisson::tuple_tilt;
use super::{check_radii, draw_anywhere, draw_in_ball, run_columns, BoundReport, Draw, McConfig};

struct Ctx<'a, F: ?Sized> {
    f: &'a F,
    q: &'a IntensityMeasure,
}

impl<F: StabilizingFunctional + ?Sized> Ctx<'_, F> {
    /// Fixed points, then the part of `m` i.i.d. points falling in the
    /// disjoint windows `(region, scale, tilt)`, where `scale` times the
    /// region mass is the chance of the window.
    fn cloud<R: Rng + ?Sized>(
        &self,
        fixed: &[&[f64]],
        m: usize,
        windows: &[(&Region, f64, Option<&Tilt>)],
        rng: &mut R,
    ) -> Result<(Cloud, f64)> {
        let mut pts = PointConfiguration::with_capacity(self.q.dim(), fixed.len() + 16);
        for p in fixed {
            pts.push_unchecked(p);
        }
        let ws: Vec<Window<'_>> = windows.iter().map(|&(r, s, t)| Window::new(r, t, s)).collect();
        let llr = binomial_on(self.q, m as u64, &ws, rng, &mut pts)?;
        Ok((Cloud::new(pts), llr))
    }

    fn tilt(&self, tuples: &[&[&[f64]]]) -> Result<Option<Tilt>> {
        tuple_tilt(self.f, self.q, tuples)
    }

    /// One-sample estimate of `E g~(x, beta + delta_x + extra)` where
    /// `beta` has `m` points with chance `scale * Q(window)` of landing in
    /// the window.
    fn single<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        extra: &[&[f64]],
        window: &Region,
        scale: f64,
        m: usize,
        rng: &mut R,
    ) -> Result<Draw> {
        let mut fixed = vec![x];
        fixed.extend_from_slice(extra);
        let tilt = self.tilt(&[&[x]])?;
        let (cloud, llr) = self.cloud(&fixed, m, &[(window, scale, tilt.as_ref())], rng)?;
        Ok(Draw::new(llr.exp(), self.f.g_tilde(&[0], &cloud)))
    }

    fn truncation(&self, x: &[f64]) -> Result<(Ball, Region)> {
        let s = self.f.truncation(&[x]);
        let r = Region::ball(self.q, s.clone())?;
        if r.mass() >= 1.0 {
            return Err(Error::StabilizationTooLarge { mass: r.mass() });
        }
        Ok((s, r))
    }
}

fn product(c: f64, parts: &[Draw]) -> Draw {
    parts.iter().fold(Draw { value: c, scale: c }, |acc, p| Draw {
        value: acc.value * p.value,
        scale: acc.scale * p.scale,
    })
}

fn sum(a: Draw, b: Draw) -> Draw {
    Draw {
        value: a.value + b.value,
        scale: a.scale + b.scale,
    }
}

/// Estimates the six bound terms for `xi[beta_n]` with `beta_n` made of
/// `n` i.i.d. points with law `q`. Arity 1 only.
///
/// Conditioned processes on the complement of a truncation window are
/// realized by rescaling the window probabilities; every binomial
/// expectation uses a fresh sample.
pub fn estimate_bounds_binomial<F: StabilizingFunctional + ?Sized>(
    f: &F,
    q: &IntensityMeasure,
    n: usize,
    mc: &McConfig,
) -> Result<BoundReport> {
    if f.arity() != 1 {
        return Err(Error::ArityUnsupported { arity: f.arity() });
    }
    if f.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: q.dim(),
        });
    }
    if n < 3 {
        return Err(Error::invalid("n", "need at least three points"));
    }
    let mass = q.total_mass();
    if (mass - 1.0).abs() > q.tolerances().probability_mass {
        return Err(Error::NotAProbability { mass });
    }
    let probe = f.truncation(&[&vec![0.0; q.dim()]]);
    if probe.radius >= (q.dim() as f64).sqrt() / 2.0 {
        return Err(Error::StabilizationTooLarge { mass });
    }
    check_radii(f)?;
    let ctx = Ctx { f, q };
    let rmax = f.max_truncation_radius();
    let nf = n as f64;

    let cols = run_columns(mc, |rng| {
        let (x, wx) = draw_anywhere(q, rng);
        let (sx, rx) = ctx.truncation(&x)?;
        let qx = rx.mass();
        let outside = 1.0 - qx;

        let e1 = match f.exceedance_locality() {
            ExceedanceLocality::Vanishes => Draw::ZERO,
            ExceedanceLocality::Truncation => {
                let tilt = Tilt::uniform(&rx, f.exceedance_tilt())?;
                let (cloud, llr) = ctx.cloud(&[&x], n - 1, &[(&rx, 1.0, Some(&tilt))], rng)?;
                let e = f.evaluate(&[0], &cloud);
                Draw::new(2.0 * nf * wx * llr.exp(), e.g && !sx.contains_ball(&e.stabilization))
            }
            ExceedanceLocality::Global => {
                let beta = sample_binomial_with(n - 1, q, rng)?;
                let mut pts = PointConfiguration::with_capacity(q.dim(), n);
                pts.push_unchecked(&x);
                pts.extend(&beta);
                let cloud = Cloud::new(pts);
                let e = f.evaluate(&[0], &cloud);
                Draw::new(2.0 * nf * wx, e.g && !sx.contains_ball(&e.stabilization))
            }
        };

        let reach = sx.radius + rmax;
        let e2 = {
            let (y, wy) = draw_in_ball(q, &x, reach, rng);
            let (sy, ry) = ctx.truncation(&y)?;
            if sx.intersects(&sy) {
                let px = ctx.single(&x, &[], &rx, 1.0, n - 1, rng)?;
                let py = ctx.single(&y, &[], &ry, 1.0, n - 1, rng)?;
                product(2.0 * nf * nf * wx * wy, &[px, py])
            } else {
                Draw::ZERO
            }
        };

        let e3 = {
            let (y, wy) = draw_in_ball(q, &x, reach, rng);
            let sy = f.truncation(&[&y]);
            if sx.intersects(&sy) {
                let region = if sx.contains_ball(&sy) {
                    rx.clone()
                } else {
                    Region::new(q, vec![sx.clone(), sy.clone()])?
                };
                let tilt = ctx.tilt(&[&[&x], &[&y]])?;
                let (cloud, llr) = ctx.cloud(&[&x, &y], n - 2, &[(&region, 1.0, tilt.as_ref())], rng)?;
                let hit = f.g_tilde(&[0], &cloud) && f.g_tilde(&[1], &cloud);
                Draw::new(2.0 * nf * nf * wx * wy * llr.exp(), hit)
            } else {
                Draw::ZERO
            }
        };

        let e4 = {
            let p1 = ctx.single(&x, &[], &rx, 1.0, n - 1, rng)?;
            let (z, wz) = draw_in_ball(q, &x, sx.radius, rng);
            let pz = ctx.single(&x, &[&z], &rx, 1.0, n - 2, rng)?;
            let a = sum(product(1.0 + nf * qx, &[p1]), product(nf * wz, &[pz]));

            let (y, wy) = draw_anywhere(q, rng);
            let (sy, ry) = ctx.truncation(&y)?;
            let b1 = if sx.intersects(&sy) {
                Draw::ZERO
            } else {
                let p = ctx.single(&y, &[], &ry, 1.0 / outside, n - 1, rng)?;
                product(wy / outside, &[p])
            };
            let (y1, w1) = draw_anywhere(q, rng);
            let (s1, r1) = ctx.truncation(&y1)?;
            let b2 = if sx.intersects(&s1) {
                Draw::ZERO
            } else {
                let (y2, w2) = draw_in_ball(q, &y1, s1.radius, rng);
                let p = ctx.single(&y1, &[&y2], &r1, 1.0 / outside, n - 2, rng)?;
                product(nf * w1 * w2 / (outside * outside), &[p])
            };
            product(2.0 * nf * wx, &[a, sum(b1, b2)])
        };

        let e5 = {
            let (y, wy) = draw_anywhere(q, rng);
            let (sy, ry) = ctx.truncation(&y)?;
            if sx.intersects(&sy) {
                Draw::ZERO
            } else {
                let px = ctx.single(&x, &[], &rx, 1.0, n - 2, rng)?;
                let py = ctx.single(&y, &[], &ry, 1.0, n - 2, rng)?;
                let c = 2.0 * nf.powi(3) * wx * wy * qx * ry.mass() / outside;
                product(c, &[px, py])
            }
        };

        let e6a = {
            let (y, wy) = draw_anywhere(q, rng);
            let (sy, ry) = ctx.truncation(&y)?;
            if sx.intersects(&sy) {
                Draw::ZERO
            } else {
                let (tx, ty) = (ctx.tilt(&[&[&x]])?, ctx.tilt(&[&[&y]])?);
                let windows = [(&rx, 1.0, tx.as_ref()), (&ry, 1.0, ty.as_ref())];
                let (cloud, llr) = ctx.cloud(&[&x, &y], n - 2, &windows, rng)?;
                let hit = f.g_tilde(&[0], &cloud) && f.g_tilde(&[1], &cloud);
                Draw::new(2.0 * nf * nf * wx * wy * ry.mass() / outside * llr.exp(), hit)
            }
        };
        let e6b = {
            let (y, wy) = draw_anywhere(q, rng);
            let (sy, ry) = ctx.truncation(&y)?;
            if sx.intersects(&sy) {
                Draw::ZERO
            } else {
                let (z, wz) = draw_in_ball(q, &x, sx.radius, rng);
                let (tx, ty) = (ctx.tilt(&[&[&x]])?, ctx.tilt(&[&[&y]])?);
                let windows = [(&rx, 1.0, tx.as_ref()), (&ry, 1.0, ty.as_ref())];
                let (cloud, llr) = ctx.cloud(&[&x, &y, &z], n - 3, &windows, rng)?;
                let hit = f.g_tilde(&[0], &cloud) && f.g_tilde(&[1], &cloud);
                let c = 2.0 * nf.powi(3) * wx * wy * wz * ry.mass() / outside;
                Draw::new(c * llr.exp(), hit)
            }
        };

        Ok([e1, e2, e3, e4, e5, sum(e6a, e6b)])
    })?;
    Ok(BoundReport::from_terms("binomial", &cols, nf, 1, q.dim(), mc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{Evaluation, KnnFunctional, KnnParams, Mark};


    struct Never(f64);

    impl StabilizingFunctional for Never {
        fn arity(&self) -> usize {
            1
        }
        fn dim(&self) -> usize {
            2
        }
        fn evaluate(&self, tuple: &[usize], cloud: &Cloud) -> Evaluation {
            let x = cloud.point(tuple[0]).to_vec();
            Evaluation {
                g: false,
                mark: Mark {
                    location: Some(x.clone()),
                    value: 0.0,
                },
                stabilization: Ball::new(x, 0.0),
            }
        }
        fn truncation(&self, tuple: &[&[f64]]) -> Ball {
            Ball::new(tuple[0].to_vec(), self.0)
        }
        fn max_truncation_radius(&self) -> f64 {
            self.0
        }
        fn tuple_radius(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn vanishing_indicator_gives_zero_terms() {
        let q = IntensityMeasure::constant(2, 1.0).unwrap();
        let r = estimate_bounds_binomial(&Never(0.05), &q, 100, &McConfig::new(50, 1)).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn fifth_term_matches_closed_form() {
        let n = 1000usize;
        let nf = n as f64;
        let q = IntensityMeasure::constant(2, 1.0).unwrap();
        let params = KnnParams::new(1, nf, 0.0).unwrap();
        let a = params.a_n();
        let f = KnnFunctional::new(params, &q, a).unwrap();
        let r = estimate_bounds_binomial(&f, &q, n, &McConfig::new(20_000, 7)).unwrap();
        let p0 = a / nf;
        let pb = 2.0 * a / nf;
        let g = (1.0 - p0).powi(n as i32 - 2) - (1.0 - pb).powi(n as i32 - 2);
        let e5 = 2.0 * nf.powi(3) * g * g * pb * pb / (1.0 - pb) * (1.0 - 4.0 * pb);
        assert!(((r.e5 - e5) / r.se_e5).abs() < 4.0, "e5 {} ± {} vs {e5}", r.e5, r.se_e5);
        for t in r.terms() {
            assert!(t.mean >= 0.0 && t.mean.is_finite());
        }
    }

    #[test]
    fn oversized_truncation_is_rejected() {
        let q = IntensityMeasure::constant(2, 1.0).unwrap();
        assert!(matches!(
            estimate_bounds_binomial(&Never(1.0), &q, 20, &McConfig::new(5, 0)),
            Err(Error::StabilizationTooLarge { .. })
        ));
        let two = crate::functionals::CriticalFunctional::new(
            crate::functionals::CritParams::new(2, 1, 2000.0, 0.0, Some(0.1)).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            estimate_bounds_binomial(&two, &q, 100, &McConfig::new(5, 0)),
            Err(Error::ArityUnsupported { arity: 2 })
        ));
    }
}
