use rand::Rng;
use statrs::function::factorial::{binomial, factorial};

use crate::error::{Error, Result};
use crate::functionals::{Cloud, ExceedanceLocality, StabilizingFunctional};
use crate::geometry::Ball;
use crate::pointproc::sampler::sample_poisson_with;
use crate::pointproc::window::{poisson_on, Region, Tilt};
use crate::pointproc::{IntensityMeasure, PointConfiguration};

use super::{check_radii, draw_anywhere, draw_in_ball, run_columns, BoundReport, Draw, McConfig};

/// A tuple whose first point is uniform on the torus or in a ball and whose
/// other points are uniform within `spread` of the first, with the product
/// of densities and proposal volumes as weight.
fn draw_tuple<R: Rng + ?Sized>(
    measure: &IntensityMeasure,
    around: Option<(&[f64], f64)>,
    k: usize,
    spread: f64,
    rng: &mut R,
) -> (Vec<Vec<f64>>, f64) {
    let (first, mut w) = match around {
        None => draw_anywhere(measure, rng),
        Some((c, r)) => draw_in_ball(measure, c, r, rng),
    };
    let mut pts = vec![first];
    for _ in 1..k {
        let (p, wp) = draw_in_ball(measure, &pts[0], spread, rng);
        w *= wp;
        pts.push(p);
    }
    (pts, w)
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|p| p.as_slice()).collect()
}

/// Fixed points first, then a tilted Poisson sample on the region.
fn window_cloud<R: Rng + ?Sized>(
    measure: &IntensityMeasure,
    fixed: &[&[f64]],
    region: &Region,
    tilt: Option<&Tilt>,
    rng: &mut R,
) -> Result<(Cloud, f64)> {
    let mut pts = PointConfiguration::with_capacity(measure.dim(), fixed.len() + 16);
    for p in fixed {
        pts.push_unchecked(p);
    }
    let llr = poisson_on(measure, region, tilt, rng, &mut pts)?;
    Ok((Cloud::new(pts), llr))
}

fn region_of(measure: &IntensityMeasure, a: &Ball, b: &Ball) -> Result<Region> {
    if a.contains_ball(b) {
        Region::ball(measure, a.clone())
    } else if b.contains_ball(a) {
        Region::ball(measure, b.clone())
    } else {
        Region::new(measure, vec![a.clone(), b.clone()])
    }
}

/// Combined tilt for the windows of several tuples.
pub(crate) fn tuple_tilt<F: StabilizingFunctional + ?Sized>(
    f: &F,
    measure: &IntensityMeasure,
    tuples: &[&[&[f64]]],
) -> Result<Option<Tilt>> {
    let mut balls: Vec<Ball> = Vec::new();
    let mut theta = 1.0f64;
    for t in tuples {
        if let Some((b, th)) = f.window_tilt(t) {
            theta = theta.min(th);
            balls.push(b);
        }
    }
    let region = match balls.len() {
        0 => return Ok(None),
        1 => Region::ball(measure, balls.pop().unwrap())?,
        _ => region_of(measure, &balls[0], &balls[1])?,
    };
    Ok(Some(Tilt::new(region, theta)?))
}

/// Tilted one-sample estimate of `E g~(x, eta + delta_x)`.
fn p_tilde<F: StabilizingFunctional + ?Sized, R: Rng + ?Sized>(
    f: &F,
    measure: &IntensityMeasure,
    x: &[&[f64]],
    sx: &Ball,
    rng: &mut R,
) -> Result<Draw> {
    let region = Region::ball(measure, sx.clone())?;
    let tilt = tuple_tilt(f, measure, &[x])?;
    let (cloud, llr) = window_cloud(measure, x, &region, tilt.as_ref(), rng)?;
    let idx: Vec<usize> = (0..x.len()).collect();
    Ok(Draw::new(llr.exp(), f.g_tilde(&idx, &cloud)))
}

/// Estimates the four bound terms for `xi[eta]` with `eta` Poisson with
/// intensity `measure`.
///
/// Outer tuples are drawn uniformly with density weights; partner tuples
/// are drawn in the ball where their truncation can meet the outer one;
/// expectations over `eta` use fresh tilted samples on the truncation
/// windows, reweighted by the exact likelihood ratio.
pub fn estimate_bounds_poisson<F: StabilizingFunctional + ?Sized>(
    f: &F,
    measure: &IntensityMeasure,
    mc: &McConfig,
) -> Result<BoundReport> {
    if f.dim() != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: measure.dim(),
        });
    }
    check_radii(f)?;
    let k = f.arity();
    let kf = factorial(k as u64);
    let theta = f.exceedance_tilt();
    let rmax = f.max_truncation_radius();
    let spread = f.tuple_radius();
    let first: Vec<usize> = (0..k).collect();
    let second: Vec<usize> = (k..2 * k).collect();
    let c1 = 2.0 / kf;
    let c2 = 2.0 / (kf * kf);

    let cols = run_columns(mc, |rng| {
        let (x, wx) = draw_tuple(measure, None, k, spread, rng);
        let xr = refs(&x);
        let sx = f.truncation(&xr);

        let e1 = match f.exceedance_locality() {
            ExceedanceLocality::Vanishes => Draw::ZERO,
            ExceedanceLocality::Truncation => {
                let region = Region::ball(measure, sx.clone())?;
                let tilt = Tilt::uniform(&region, theta)?;
                let (cloud, llr) = window_cloud(measure, &xr, &region, Some(&tilt), rng)?;
                let e = f.evaluate(&first, &cloud);
                Draw::new(c1 * wx * llr.exp(), e.g && !sx.contains_ball(&e.stabilization))
            }
            ExceedanceLocality::Global => {
                let eta = sample_poisson_with(measure, rng)?;
                let mut pts = PointConfiguration::with_capacity(measure.dim(), eta.len() + k);
                for p in &xr {
                    pts.push_unchecked(p);
                }
                pts.extend(&eta);
                let cloud = Cloud::new(pts);
                let e = f.evaluate(&first, &cloud);
                Draw::new(c1 * wx, e.g && !sx.contains_ball(&e.stabilization))
            }
        };

        let reach = sx.radius + rmax;
        let px = p_tilde(f, measure, &xr, &sx, rng)?;
        let (z, wz) = draw_tuple(measure, Some((&x[0], reach)), k, spread, rng);
        let zr = refs(&z);
        let sz = f.truncation(&zr);
        let e2 = if sx.intersects(&sz) {
            let pz = p_tilde(f, measure, &zr, &sz, rng)?;
            Draw {
                value: c2 * wx * wz * px.value * pz.value,
                scale: c2 * wx * wz * px.scale * pz.scale,
            }
        } else {
            Draw::ZERO
        };

        let (z, wz) = draw_tuple(measure, Some((&x[0], reach)), k, spread, rng);
        let zr = refs(&z);
        let sz = f.truncation(&zr);
        let e3 = if sx.intersects(&sz) {
            let region = region_of(measure, &sx, &sz)?;
            let mut fixed = xr.clone();
            fixed.extend(&zr);
            let tilt = tuple_tilt(f, measure, &[&xr, &zr])?;
            let (cloud, llr) = window_cloud(measure, &fixed, &region, tilt.as_ref(), rng)?;
            let hit = f.g_tilde(&first, &cloud) && f.g_tilde(&second, &cloud);
            Draw::new(c2 * wx * wz * llr.exp(), hit)
        } else {
            Draw::ZERO
        };

        let mut e4 = Draw::ZERO;
        for j in 1..k {
            let fresh = k - j;
            let mut wz = 1.0;
            let mut z = Vec::with_capacity(fresh);
            for _ in 0..fresh {
                let (p, w) = draw_in_ball(measure, &x[0], spread, rng);
                wz *= w;
                z.push(p);
            }
            let mut other: Vec<&[f64]> = xr[..j].to_vec();
            other.extend(z.iter().map(|p| p.as_slice()));
            let so = f.truncation(&other);
            let region = region_of(measure, &sx, &so)?;
            let mut fixed = xr.clone();
            fixed.extend(z.iter().map(|p| p.as_slice()));
            let tilt = tuple_tilt(f, measure, &[&xr, &other])?;
            let (cloud, llr) = window_cloud(measure, &fixed, &region, tilt.as_ref(), rng)?;
            let mut idx: Vec<usize> = (0..j).collect();
            idx.extend(k..k + fresh);
            let hit = f.g_tilde(&first, &cloud) && f.g_tilde(&idx, &cloud);
            let c = c1 * binomial(k as u64, j as u64) / factorial(fresh as u64);
            let d = Draw::new(c * wx * wz * llr.exp(), hit);
            e4.value += d.value;
            e4.scale += d.scale;
        }

        Ok([e1, e2, e3, e4, Draw::ZERO, Draw::ZERO])
    })?;
    Ok(BoundReport::from_terms(
        "poisson",
        &cols,
        measure.total_mass(),
        k,
        measure.dim(),
        mc,
    ))
}
