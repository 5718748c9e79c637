use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::functionals::KnnParams;
use crate::geometry::unit_ball_volume;
use crate::quadrature::integrate;
use crate::tolerances::Tolerances;

/// Total variation `sup_A |L(A) - M(A)|` between two measures on the mark
/// line given by densities on `(lo, hi)` plus masses beyond `hi`.
///
/// On the bulk the supremum is attained at `{l > m}` or `{m > l}`; the
/// tails are treated as unresolved, so each side adds its whole tail.
pub fn dtv_intensities<L, M>(l: L, m: M, lo: f64, hi: f64, tails: (f64, f64), tol: &Tolerances) -> Result<f64>
where
    L: Fn(f64) -> f64,
    M: Fn(f64) -> f64,
{
    let (mut up, mut down) = (0.0, 0.0);
    let mut a = lo;
    let mut width = 1.0;
    while a < hi {
        let b = (a + width).min(hi);
        up += integrate(|u| (l(u) - m(u)).max(0.0), a, b, tol.quadrature_rel, tol)?.value;
        down += integrate(|u| (m(u) - l(u)).max(0.0), a, b, tol.quadrature_rel, tol)?.value;
        a = b;
        width *= 2.0;
    }
    Ok((up + tails.0).max(down + tails.1))
}

/// Mark level beyond which the k-NN ball of some point may wrap around
/// the torus: `n lambda_min omega_d / 2^d - a_n`.
pub fn knn_tail_cut(p: &KnnParams, lambda_min: f64, d: usize) -> f64 {
    p.n * lambda_min * unit_ball_volume(d) / 2f64.powi(d as i32) - p.a_n()
}

/// Mark density of the k-NN intensity under Poisson input, per unit of the
/// spatial density: `e^{-u} (a_n + u)^{k-1} / (log n)^{k-1}`.
pub fn knn_poisson_density(p: &KnnParams, u: f64) -> f64 {
    let a = p.a_n();
    let k1 = p.k as i32 - 1;
    (-u).exp() * ((a + u) / p.n.ln()).powi(k1)
}

/// Mark density of the k-NN intensity under binomial input:
/// `(n-1) C(n-2, k-1) p^{k-1} (1-p)^{n-1-k}` with `p = (a_n + u)/n`.
pub fn knn_binomial_density(p: &KnnParams, u: f64) -> f64 {
    let n = p.n.round() as u64;
    let k = p.k as u64;
    let prob = (p.a_n() + u) / p.n;
    if !(0.0..1.0).contains(&prob) || n < k + 1 {
        return 0.0;
    }
    let ln = ((n - 1) as f64).ln()
        + ln_binomial(n - 2, k - 1)
        + (k - 1) as f64 * prob.ln()
        + (n - 1 - k) as f64 * (1.0 - prob).ln();
    ln.exp()
}

fn poisson_below(mean: f64, k: usize) -> f64 {
    let mut term = (-mean).exp();
    let mut s = 0.0;
    for i in 0..k {
        if i > 0 {
            term *= mean / i as f64;
        }
        s += term;
    }
    s
}

/// Distance between the k-NN mark intensity on marks above `b0` and the
/// limit `lambda(x) dx e^{-u} du`, for Poisson input of intensity `n K`.
pub fn knn_poisson_dtv(p: &KnnParams, lambda_min: f64, d: usize) -> Result<f64> {
    let cut = knn_tail_cut(p, lambda_min, d).max(p.b0);
    let tail_l = p.n * poisson_below(p.a_n() + cut, p.k);
    dtv_intensities(
        |u| knn_poisson_density(p, u),
        |u| (-u).exp(),
        p.b0,
        cut,
        (tail_l, (-cut).exp()),
        &Tolerances::DEFAULT,
    )
}

/// As [`knn_poisson_dtv`] for `n` i.i.d. points.
pub fn knn_binomial_dtv(p: &KnnParams, lambda_min: f64, d: usize) -> Result<f64> {
    let n = p.n.round();
    if n < 2.0 || (n - p.n).abs() > 0.0 {
        return Err(Error::invalid("n", "binomial input needs an integer point count"));
    }
    let cut = knn_tail_cut(p, lambda_min, d).min(p.n - p.a_n()).max(p.b0);
    let prob = ((p.a_n() + cut) / p.n).clamp(0.0, 1.0);
    let below = if p.k as f64 > n - 1.0 {
        1.0
    } else {
        Binomial::new(prob, n as u64 - 1)
            .map_err(|e| Error::invalid("n", e.to_string()))?
            .cdf(p.k as u64 - 1)
    };
    dtv_intensities(
        |u| knn_binomial_density(p, u),
        |u| (-u).exp(),
        p.b0,
        cut,
        (p.n * below, (-cut).exp()),
        &Tolerances::DEFAULT,
    )
}
