use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geometry::{circumsphere, unit_ball_volume, wrap_coord, Ball};
use crate::tolerances::Tolerances;

use super::{subsets, Cloud, Evaluation, ExceedanceLocality, Mark, StabilizingFunctional};

/// Parameters for counting index-k critical points of the distance function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CritParams {
    pub d: usize,
    /// Morse index; tuples have `k + 1` points.
    pub k: usize,
    pub n: f64,
    pub alpha0: f64,
    /// Upper radius; `None` means `sqrt(r_n)`.
    pub upper: Option<f64>,
}

impl CritParams {
    pub fn new(d: usize, k: usize, n: f64, alpha0: f64, upper: Option<f64>) -> Result<Self> {
        let p = CritParams {
            d,
            k,
            n,
            alpha0,
            upper,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.d {
            return Err(Error::invalid("k", "need 1 <= k <= d"));
        }
        if !(self.n >= 3.0) {
            return Err(Error::invalid("n", "must be at least 3"));
        }
        if self.centering() + self.alpha0 <= 0.0 {
            return Err(Error::invalid("alpha0", "log n + (k-1) log log n + alpha0 must be positive"));
        }
        let (r, big) = (self.r_n(), self.upper_radius());
        if !(big > r) {
            return Err(Error::invalid("upper", format!("{big} must exceed r_n = {r}")));
        }
        if big >= 0.5 {
            return Err(Error::invalid("upper", format!("{big} must stay below 1/2")));
        }
        Ok(())
    }

    /// `log n + (k-1) log log n`.
    pub fn centering(&self) -> f64 {
        let l = self.n.ln();
        l + (self.k as f64 - 1.0) * l.ln()
    }

    /// Lower radius solving `omega_d n r^d = log n + (k-1) log log n + alpha0`.
    pub fn r_n(&self) -> f64 {
        ((self.centering() + self.alpha0) / (unit_ball_volume(self.d) * self.n)).powf(1.0 / self.d as f64)
    }

    pub fn upper_radius(&self) -> f64 {
        self.upper.unwrap_or_else(|| self.r_n().sqrt())
    }
}

// Circumspheres of radius at least the lift window are never evaluated, so
// radii above it count as g = 0.

/// `g = 1` when a `(k+1)`-tuple has a circumcenter inside its open hull,
/// no point of the configuration strictly inside the circumball, and a
/// circumradius in `(r_n, R_n]`. Marks are the circumcenter and
/// `omega_d n rho^d - log n - (k-1) log log n`.
#[derive(Debug, Clone)]
pub struct CriticalFunctional {
    params: CritParams,
    r_lo: f64,
    r_hi: f64,
    tol: Tolerances,
    sign_flip: bool,
}

impl CriticalFunctional {
    pub fn new(params: CritParams) -> Result<Self> {
        params.validate()?;
        Ok(CriticalFunctional {
            r_lo: params.r_n(),
            r_hi: params.upper_radius(),
            params,
            tol: Tolerances::DEFAULT,
            sign_flip: false,
        })
    }

    /// A deliberately broken copy whose circumcenters are reflected through
    /// the first tuple point; used to check that the self test notices.
    pub fn corrupted(params: CritParams) -> Result<Self> {
        let mut f = Self::new(params)?;
        f.sign_flip = true;
        Ok(f)
    }

    pub fn params(&self) -> &CritParams {
        &self.params
    }

    pub fn r_n(&self) -> f64 {
        self.r_lo
    }

    pub fn upper_radius(&self) -> f64 {
        self.r_hi
    }

    fn rejected(&self, anchor: &[f64]) -> Evaluation {
        Evaluation {
            g: false,
            mark: Mark {
                location: None,
                value: f64::NAN,
            },
            stabilization: Ball::new(anchor.to_vec(), 0.0),
        }
    }
}

impl StabilizingFunctional for CriticalFunctional {
    fn arity(&self) -> usize {
        self.params.k + 1
    }

    fn dim(&self) -> usize {
        self.params.d
    }

    fn evaluate(&self, tuple: &[usize], cloud: &Cloud) -> Evaluation {
        let x1 = cloud.point(tuple[0]);
        let pts: Vec<&[f64]> = tuple.iter().map(|&i| cloud.point(i)).collect();
        for (a, &i) in tuple.iter().enumerate() {
            if tuple[..a].contains(&i) {
                return self.rejected(x1);
            }
        }
        let sphere = match circumsphere(&pts, &self.tol) {
            Ok(s) => s,
            Err(_) => return self.rejected(x1),
        };
        let mut center = sphere.center.coords().to_vec();
        if self.sign_flip {
            for (c, &a) in center.iter_mut().zip(x1) {
                *c = wrap_coord(2.0 * a - *c);
            }
        }
        let rho = sphere.radius;
        if !sphere.interior || !(rho > self.r_lo && rho <= self.r_hi) {
            return self.rejected(x1);
        }
        let open = rho * (1.0 - 1e-12);
        let mut occupied = false;
        cloud.index().within(&center, open, |j, s| {
            if s < open * open && !tuple.contains(&j) {
                occupied = true;
            }
        });
        if occupied {
            return self.rejected(x1);
        }
        let (d, n) = (self.params.d, self.params.n);
        let value = unit_ball_volume(d) * n * rho.powi(d as i32) - self.params.centering();
        Evaluation {
            g: true,
            mark: Mark {
                location: Some(center),
                value,
            },
            stabilization: Ball::new(x1.to_vec(), 2.0 * rho),
        }
    }

    fn truncation(&self, tuple: &[&[f64]]) -> Ball {
        Ball::new(tuple[0].to_vec(), 2.0 * self.r_hi)
    }

    fn max_truncation_radius(&self) -> f64 {
        2.0 * self.r_hi
    }

    fn tuple_radius(&self) -> f64 {
        2.0 * self.r_hi
    }

    fn exceedance_locality(&self) -> ExceedanceLocality {
        ExceedanceLocality::Vanishes
    }

    /// Hierarchical scan of the vacant set `{q : dist(q, omega) > r_n}`.
    ///
    /// A cell with center `q` and half-diagonal `h` can only contain a
    /// critical center when `dist(q, omega) > r_n - h`. Surviving cells are
    /// refined until `h <= r_n / 16`; a generating point then lies at
    /// distance between `dist(q, omega) - 2h` and
    /// `min(dist(q, omega) + 2h, R_n + h)` from `q`.
    fn for_each_candidate(&self, cloud: &Cloud, visit: &mut dyn FnMut(&[usize])) {
        let d = self.params.d;
        let arity = self.arity();
        if cloud.len() < arity {
            return;
        }
        let r_n = self.r_lo;
        let mut side = 1.0 / (1.0 / r_n).ceil();
        let m = (1.0 / side).round() as usize;
        let mut cells: Vec<Vec<f64>> = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            cells.push(idx.iter().map(|&i| i as f64 * side).collect());
            let mut j = d;
            let mut done = true;
            while j > 0 {
                j -= 1;
                idx[j] += 1;
                if idx[j] < m {
                    done = false;
                    break;
                }
                idx[j] = 0;
            }
            if done {
                break;
            }
        }
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut pool = Vec::new();
        let mut tuple = vec![0usize; arity];
        let mut found: Vec<Vec<usize>> = Vec::new();
        while !cells.is_empty() {
            let half_diag = 0.5 * side * (d as f64).sqrt();
            let last = half_diag <= r_n / 16.0;
            let mut next = Vec::new();
            for corner in &cells {
                let q: Vec<f64> = corner.iter().map(|c| c + 0.5 * side).collect();
                let delta = match cloud.index().kth_distance(&q, 1, |_, _| false) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                if delta + half_diag <= r_n || delta - half_diag > self.r_hi {
                    continue;
                }
                if !last {
                    let child = 0.5 * side;
                    for mask in 0..(1usize << d) {
                        next.push(
                            corner
                                .iter()
                                .enumerate()
                                .map(|(j, c)| c + if mask >> j & 1 == 1 { child } else { 0.0 })
                                .collect(),
                        );
                    }
                    continue;
                }
                let outer = (delta + 2.0 * half_diag).min(self.r_hi + half_diag);
                let inner = delta - 2.0 * half_diag;
                pool.clear();
                cloud.index().within(&q, outer, |j, s| {
                    if inner <= 0.0 || s >= inner * inner {
                        pool.push(j)
                    }
                });
                if pool.len() < arity {
                    continue;
                }
                pool.sort_unstable();
                for first in 0..pool.len() {
                    tuple[0] = pool[first];
                    let rest = &pool[first + 1..];
                    subsets(rest, arity - 1, 0, &mut tuple, 1, &mut |t| {
                        if seen.insert(t.to_vec()) {
                            found.push(t.to_vec());
                        }
                    });
                }
            }
            if last {
                break;
            }
            cells = next;
            side *= 0.5;
        }
        found.sort_unstable();
        for t in &found {
            visit(t);
        }
    }
}

/// Brute-force reference: every `(k+1)`-subset within `2 R_n` of its first point.
pub fn brute_force_count(f: &CriticalFunctional, cloud: &Cloud) -> usize {
    let mut count = 0;
    super::default_candidates(f.arity(), f.tuple_radius(), cloud, &mut |t| {
        if f.evaluate(t, cloud).g {
            count += 1;
        }
    });
    count
}
