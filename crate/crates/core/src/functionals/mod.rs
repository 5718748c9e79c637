//! Stabilizing functionals and the marked processes they induce.

mod critical;
mod knn;
mod marked;

pub use critical::{brute_force_count, CritParams, CriticalFunctional};
pub use knn::{BPolicy, KnnFunctional, KnnParams};
pub use marked::{Atom, MarkedConfiguration};

use crate::geometry::Ball;
use crate::pointproc::{GridIndex, PointConfiguration};

/// A configuration bundled with its neighbour index.
#[derive(Debug, Clone)]
pub struct Cloud {
    points: PointConfiguration,
    index: GridIndex,
}

impl Cloud {
    pub fn new(points: PointConfiguration) -> Self {
        let index = GridIndex::new(&points);
        Cloud { points, index }
    }

    pub fn points(&self) -> &PointConfiguration {
        &self.points
    }

    pub fn index(&self) -> &GridIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.point(i)
    }
}

/// Mark attached to an atom of the marked process.
#[derive(Debug, Clone, PartialEq)]
pub struct Mark {
    pub location: Option<Vec<f64>>,
    pub value: f64,
}

/// Result of evaluating a functional at one tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub g: bool,
    pub mark: Mark,
    /// Region the evaluation depends on.
    pub stabilization: Ball,
}

/// How the term with `g * 1{stabilization not inside truncation}` localizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExceedanceLocality {
    /// The stabilization region always fits when `g = 1`; the term vanishes.
    Vanishes,
    /// Determined by the points inside the truncation ball.
    Truncation,
    /// Needs the whole configuration.
    Global,
}

pub trait StabilizingFunctional: Send + Sync {
    /// Tuple size.
    fn arity(&self) -> usize;

    fn dim(&self) -> usize;

    /// Evaluates `g`, the mark and the stabilization region at the tuple of
    /// cloud indices. Tuple points must belong to the cloud.
    fn evaluate(&self, tuple: &[usize], cloud: &Cloud) -> Evaluation;

    /// Deterministic truncation ball for a tuple of locations.
    fn truncation(&self, tuple: &[&[f64]]) -> Ball;

    /// Upper bound on every truncation radius.
    fn max_truncation_radius(&self) -> f64;

    /// Every tuple with `g = 1` lies within this distance of its first point.
    fn tuple_radius(&self) -> f64;

    fn exceedance_locality(&self) -> ExceedanceLocality {
        ExceedanceLocality::Global
    }

    /// Ball inside the truncation window that must stay nearly empty for
    /// `g~ = 1`, with the intensity factor used there when sampling.
    fn window_tilt(&self, _tuple: &[&[f64]]) -> Option<(Ball, f64)> {
        None
    }

    /// Intensity factor over the whole truncation window when sampling the
    /// exceedance event.
    fn exceedance_tilt(&self) -> f64 {
        1.0
    }

    /// Calls `visit` with every unordered tuple that may have `g = 1`,
    /// each once, as increasing index lists.
    fn for_each_candidate(&self, cloud: &Cloud, visit: &mut dyn FnMut(&[usize])) {
        default_candidates(self.arity(), self.tuple_radius(), cloud, visit)
    }

    /// Truncated indicator: `g` and the stabilization region inside the truncation.
    fn g_tilde(&self, tuple: &[usize], cloud: &Cloud) -> bool {
        let e = self.evaluate(tuple, cloud);
        if !e.g {
            return false;
        }
        let pts: Vec<&[f64]> = tuple.iter().map(|&i| cloud.point(i)).collect();
        self.truncation(&pts).contains_ball(&e.stabilization)
    }
}

/// Increasing tuples whose later points all lie within `radius` of the first.
pub fn default_candidates(arity: usize, radius: f64, cloud: &Cloud, visit: &mut dyn FnMut(&[usize])) {
    if arity == 1 {
        for i in 0..cloud.len() {
            visit(&[i]);
        }
        return;
    }
    let mut near = Vec::new();
    let mut tuple = vec![0; arity];
    for i in 0..cloud.len() {
        near.clear();
        cloud.index().within(cloud.point(i), radius, |j, _| {
            if j > i {
                near.push(j)
            }
        });
        near.sort_unstable();
        tuple[0] = i;
        subsets(&near, arity - 1, 0, &mut tuple, 1, visit);
    }
}

pub(crate) fn subsets(
    pool: &[usize],
    need: usize,
    from: usize,
    tuple: &mut Vec<usize>,
    slot: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if need == 0 {
        visit(tuple);
        return;
    }
    for p in from..pool.len() {
        if pool.len() - p < need {
            break;
        }
        tuple[slot] = pool[p];
        subsets(pool, need - 1, p + 1, tuple, slot + 1, visit);
    }
}

/// The marked process: one atom per unordered tuple with `g = 1`, sorted by
/// generating indices.
pub fn eval_xi<F: StabilizingFunctional + ?Sized>(f: &F, omega: &PointConfiguration) -> MarkedConfiguration {
    let cloud = Cloud::new(omega.clone());
    eval_xi_cloud(f, &cloud)
}

pub fn eval_xi_cloud<F: StabilizingFunctional + ?Sized>(f: &F, cloud: &Cloud) -> MarkedConfiguration {
    let mut atoms = Vec::new();
    f.for_each_candidate(cloud, &mut |t| {
        let e = f.evaluate(t, cloud);
        if e.g {
            atoms.push(Atom {
                unit: e.mark.location,
                mark: e.mark.value,
                provenance: t.to_vec(),
            });
        }
    });
    atoms.sort_by(|a, b| a.provenance.cmp(&b.provenance));
    MarkedConfiguration::new(f.dim(), f.arity(), atoms)
}
