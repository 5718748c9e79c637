use rand_chacha::ChaCha8Rng;

use crate::discrepancy::{symmetric_difference, MatchMode};
use crate::error::Result;
use crate::functionals::{eval_xi_cloud, Cloud, KnnFunctional, MarkedConfiguration, StabilizingFunctional};
use crate::mc::{replicate, Estimate};
use crate::pointproc::sampler::{sample_location, sample_poisson_with};
use crate::pointproc::IntensityMeasure;

use super::McConfig;

/// Produces, for a location `x`, a pair of processes on a common
/// probability space. `None` means `x` contributes nothing in this draw.
pub trait CouplingSampler: Sync {
    fn pair(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Option<(MarkedConfiguration, MarkedConfiguration)>>;
}

/// Estimates `2 int E[(xi^x sym-diff xi~^x)(Y)] L(dx)`, drawing `x` from
/// `L / L(X)` and weighting by the total mass.
pub fn coupling_bound<S: CouplingSampler + ?Sized>(l: &IntensityMeasure, sampler: &S, mc: &McConfig) -> Result<Estimate> {
    let mass = l.total_mass();
    let base = mc.rng.fork(0x434f_5550);
    let draws: Result<Vec<f64>> = replicate(mc.replicates, |i| {
        let mut rng = base.with_stream(i).rng();
        if mass <= 0.0 {
            return Ok(0.0);
        }
        let mut x = vec![0.0; l.dim()];
        sample_location(l, &mut rng, &mut x)?;
        Ok(match sampler.pair(&x, &mut rng)? {
            Some((a, b)) => 2.0 * mass * symmetric_difference(&a, &b, MatchMode::Provenance) as f64,
            None => 0.0,
        })
    })
    .into_iter()
    .collect();
    Ok(Estimate::from_samples(&draws?))
}

/// The coupling obtained by adding `x` to one Poisson sample: `xi[eta]`
/// against `xi[eta + delta_x]` without the atom of `x`, kept only when
/// `g(x, eta + delta_x) = 1`.
///
/// With `L` set to the Poisson intensity, [`coupling_bound`] then returns
/// the Palm coupling term for the k-NN marks.
pub struct KnnNaturalCoupling<'a> {
    f: &'a KnnFunctional,
}

impl<'a> KnnNaturalCoupling<'a> {
    pub fn new(f: &'a KnnFunctional) -> Self {
        KnnNaturalCoupling { f }
    }
}

impl CouplingSampler for KnnNaturalCoupling<'_> {
    fn pair(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Option<(MarkedConfiguration, MarkedConfiguration)>> {
        let eta = sample_poisson_with(self.f.scaled_measure(), rng)?;
        let plain = eval_xi_cloud(self.f, &Cloud::new(eta.clone()));
        let mut with = eta;
        with.push(x)?;
        let last = with.len() - 1;
        let cloud = Cloud::new(with);
        if !self.f.evaluate(&[last], &cloud).g {
            return Ok(None);
        }
        let full = eval_xi_cloud(self.f, &cloud);
        let atoms = full.atoms().iter().filter(|a| a.provenance != [last]).cloned().collect();
        Ok(Some((plain, MarkedConfiguration::new(full.dim(), 1, atoms))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{Atom, KnnParams};
    use crate::pointproc::RngSpec;

    struct Fixed(usize);

    impl CouplingSampler for Fixed {
        fn pair(&self, x: &[f64], _: &mut ChaCha8Rng) -> Result<Option<(MarkedConfiguration, MarkedConfiguration)>> {
            let a = MarkedConfiguration::new(
                x.len(),
                1,
                vec![Atom {
                    unit: Some(x.to_vec()),
                    mark: 1.0,
                    provenance: vec![0],
                }],
            );
            let mut b = a.clone();
            for i in 0..self.0 {
                b.push(Atom {
                    unit: None,
                    mark: 2.0,
                    provenance: vec![i + 1],
                });
            }
            Ok(Some((a, b)))
        }
    }

    #[test]
    fn trivial_couplings() {
        let l = IntensityMeasure::constant(2, 3.5).unwrap();
        let mc = McConfig::new(100, 1);
        assert_eq!(coupling_bound(&l, &Fixed(0), &mc).unwrap().mean, 0.0);
        let e = coupling_bound(&l, &Fixed(1), &mc).unwrap();
        assert!((e.mean - 7.0).abs() < 1e-12 && e.se == 0.0);
    }

    #[test]
    fn natural_coupling_matches_nested_monte_carlo() {
        let n = 100.0;
        let k = IntensityMeasure::constant(2, 1.0).unwrap();
        let f = KnnFunctional::new(KnnParams::new(1, n, -2.0).unwrap(), &k, n.ln()).unwrap();
        let coupling = KnnNaturalCoupling::new(&f);
        let est = coupling_bound(f.scaled_measure(), &coupling, &McConfig::new(4000, 3)).unwrap();
        // nested: outer locations, inner Poisson samples per location
        let outer = 400u64;
        let inner = 10u64;
        let vals: Vec<f64> = replicate(outer, |i| {
            let spec = RngSpec::new(99, i);
            let mut rng = spec.rng();
            let mut x = vec![0.0; 2];
            sample_location(&k, &mut rng, &mut x).unwrap();
            let mut s = 0.0;
            for _ in 0..inner {
                if let Some((a, b)) = coupling.pair(&x, &mut rng).unwrap() {
                    s += symmetric_difference(&a, &b, MatchMode::Provenance) as f64;
                }
            }
            2.0 * n * s / inner as f64
        });
        let nested = Estimate::from_samples(&vals);
        assert!(est.mean > 0.0 && est.mean.is_finite());
        assert!(est.z_against(&nested).abs() < 4.0, "{est:?} vs {nested:?}");
    }
}
