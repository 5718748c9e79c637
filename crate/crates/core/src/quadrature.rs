//! Adaptive Gauss–Kronrod quadrature in one dimension, and nested
//! integration over balls and boxes built on top of it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

// 15-point Kronrod nodes (non-negative half) with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: k * half,
        error: ((k - g) * half).abs(),
    }
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive G7–K15 integration of `f` over `[a, b]`.
///
/// Stops once the summed error estimate falls below
/// `max(tol.quadrature_abs, rel * |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel: f64,
    tol: &Tolerances,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut heap = BinaryHeap::new();
    let first = kronrod(&mut f, lo, hi);
    let mut value = first.value;
    let mut error = first.error;
    let mut evaluations = 15;
    heap.push(first);
    while error > tol.quadrature_abs.max(rel * value.abs()) {
        if evaluations + 30 > tol.quadrature_budget {
            return Err(Error::QuadratureNotConverged {
                evaluations,
                estimate: sign * value,
                error,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision; accept what we have
            heap.push(worst);
            break;
        }
        let left = kronrod(&mut f, worst.a, mid);
        let right = kronrod(&mut f, mid, worst.b);
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to limit drift from the incremental updates
    let (v, e) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(Integral {
        value: sign * v,
        error: e,
        evaluations,
    })
}

/// Integrates `f` over the Euclidean ball of radius `r` around `center`.
///
/// The ball is parameterized by nested sine substitutions
/// `t_i = rho_i sin(phi_i)`, which removes the square-root endpoint
/// behaviour of the chord lengths. The innermost coordinate is integrated
/// directly. Coordinates handed to `f` are not wrapped.
pub fn integrate_ball<F: Fn(&[f64]) -> f64>(
    f: &F,
    center: &[f64],
    r: f64,
    rel: f64,
    tol: &Tolerances,
) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    let mut scratch = center.to_vec();
    ball_level(f, center, &mut scratch, 0, r, rel, tol)
}

fn ball_level<F: Fn(&[f64]) -> f64>(
    f: &F,
    center: &[f64],
    scratch: &mut Vec<f64>,
    axis: usize,
    rho: f64,
    rel: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let d = center.len();
    if axis + 1 == d {
        let integral = integrate(
            |t| {
                let mut p = scratch.clone();
                p[axis] = center[axis] + t;
                f(&p)
            },
            -rho,
            rho,
            rel,
            tol,
        )?;
        return Ok(integral.value);
    }
    let inner_rel = rel * 0.1;
    let mut failure = None;
    let integral = integrate(
        |phi| {
            if failure.is_some() {
                return 0.0;
            }
            let (s, c) = phi.sin_cos();
            let mut local = scratch.clone();
            local[axis] = center[axis] + rho * s;
            match ball_level(f, center, &mut local, axis + 1, rho * c, inner_rel, tol) {
                Ok(v) => rho * c * v,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        -FRAC_PI_2,
        FRAC_PI_2,
        rel,
        tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(integral.value)
}

/// Integrates `f` over the axis-aligned box `lower + [0, sides]`.
pub fn integrate_box<F: Fn(&[f64]) -> f64>(
    f: &F,
    lower: &[f64],
    sides: &[f64],
    rel: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let mut scratch = lower.to_vec();
    box_level(f, lower, sides, &mut scratch, 0, rel, tol)
}

fn box_level<F: Fn(&[f64]) -> f64>(
    f: &F,
    lower: &[f64],
    sides: &[f64],
    scratch: &mut Vec<f64>,
    axis: usize,
    rel: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let d = lower.len();
    let last = axis + 1 == d;
    let inner_rel = rel * 0.1;
    let mut failure = None;
    let integral = integrate(
        |t| {
            if failure.is_some() {
                return 0.0;
            }
            let mut local = scratch.clone();
            local[axis] = t;
            if last {
                f(&local)
            } else {
                match box_level(f, lower, sides, &mut local, axis + 1, inner_rel, tol) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            }
        },
        lower[axis],
        lower[axis] + sides[axis],
        rel,
        tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(integral.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let tol = Tolerances::DEFAULT;
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-10, &tol).unwrap();
        assert!((v.value - 0.0).abs() < 1e-12);
        let v = integrate(|x| x * x, -1.0, 2.0, 1e-10, &tol).unwrap();
        assert!((v.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kink_converges() {
        let tol = Tolerances::DEFAULT;
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-9, &tol).unwrap();
        assert!((v.value - (0.045 + 0.245)).abs() < 1e-9);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let tol = Tolerances::DEFAULT;
        let v = integrate(|x: f64| x.exp(), 1.0, 0.0, 1e-10, &tol).unwrap();
        assert!((v.value + (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn ball_volume_by_quadrature() {
        let tol = Tolerances::DEFAULT;
        let one = |_: &[f64]| 1.0;
        let a2 = integrate_ball(&one, &[0.3, 0.4], 0.1, 1e-8, &tol).unwrap();
        assert!((a2 - PI * 0.01).abs() < 1e-10);
        let a3 = integrate_ball(&one, &[0.0, 0.0, 0.0], 0.2, 1e-8, &tol).unwrap();
        assert!((a3 - 4.0 / 3.0 * PI * 0.008).abs() < 1e-10);
    }

    #[test]
    fn ball_second_moment() {
        // integral of |z|^2 over the unit disk is pi/2
        let tol = Tolerances::DEFAULT;
        let f = |p: &[f64]| p[0] * p[0] + p[1] * p[1];
        let v = integrate_ball(&f, &[0.0, 0.0], 1.0, 1e-9, &tol).unwrap();
        assert!((v - PI / 2.0).abs() < 1e-8);
    }

    #[test]
    fn box_integral() {
        let tol = Tolerances::DEFAULT;
        let f = |p: &[f64]| p[0] * p[1];
        let v = integrate_box(&f, &[0.0, 0.0], &[1.0, 2.0], 1e-9, &tol).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let tol = Tolerances {
            quadrature_budget: 40,
            ..Tolerances::DEFAULT
        };
        let r = integrate(|x: f64| (1.0 / x).sin(), 1e-4, 1.0, 1e-12, &tol);
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }
}
