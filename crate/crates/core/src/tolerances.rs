//! Numerical tolerances used throughout the crate, gathered in one record.

/// Every numerical tolerance and budget in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Largest torus distance from the anchor at which a point may be lifted.
    pub lift_window: f64,
    /// Relative tolerance for adaptive quadrature.
    pub quadrature_rel: f64,
    /// Absolute floor for adaptive quadrature.
    pub quadrature_abs: f64,
    /// Maximum integrand evaluations per one-dimensional adaptive pass.
    pub quadrature_budget: usize,
    /// Absolute tolerance (in radius) for mass-to-radius bisection.
    pub bisection_abs: f64,
    /// Gram systems above this condition number are degenerate.
    pub gram_condition_max: f64,
    /// Barycentric weights must exceed this for a center to count as interior.
    pub barycentric_min: f64,
    /// Allowed deviation of a probability measure's mass from one.
    pub probability_mass: f64,
    /// Proposal budget for rejection samplers.
    pub sampler_budget: u64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        lift_window: 0.25,
        quadrature_rel: 1e-6,
        quadrature_abs: 1e-14,
        quadrature_budget: 200_000,
        bisection_abs: 1e-12,
        gram_condition_max: 1e12,
        barycentric_min: 1e-10,
        probability_mass: 1e-9,
        sampler_budget: 1_000_000_000,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
