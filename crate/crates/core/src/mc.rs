//! Replicate scheduling and order-independent reductions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Runs `f(i)` for `i in 0..reps` on the current rayon pool and returns the
/// results in index order, so the outcome does not depend on scheduling.
pub fn replicate<T: Send, F: Fn(u64) -> T + Sync + Send>(reps: u64, f: F) -> Vec<T> {
    (0..reps).into_par_iter().map(f).collect()
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate {
        mean: 0.0,
        se: 0.0,
        n: 0,
    };

    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len();
        if n == 0 {
            return Self::ZERO;
        }
        let mean = pairwise_sum(v) / n as f64;
        let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 {
            pairwise_sum(&dev) / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            se: (var / n as f64).sqrt(),
            n: n as u64,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        Estimate {
            mean: self.mean * c,
            se: self.se * c.abs(),
            n: self.n,
        }
    }

    /// z-score of the difference of two independent estimates.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        let s = (self.se * self.se + other.se * other.se).sqrt();
        let diff = self.mean - other.mean;
        if s > 0.0 {
            diff / s
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }

    /// z-score against an exact value.
    pub fn z_exact(&self, value: f64) -> f64 {
        self.z_against(&Estimate {
            mean: value,
            se: 0.0,
            n: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn estimate_of_constant_has_zero_se() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.se, 0.0);
        assert_eq!(e.z_exact(2.0), 0.0);
    }

    #[test]
    fn replicate_preserves_order() {
        let v = replicate(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }
}
