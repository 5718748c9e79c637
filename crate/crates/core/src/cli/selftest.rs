use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use crate::discrepancy::{config_dtv, count_tv, gumbel_check, MatchMode};
use crate::dynamics::{simulate, simulate_coupled};
use crate::error::{Error, Result};
use crate::functionals::{eval_xi, CritParams, CriticalFunctional, KnnFunctional, KnnParams};
use crate::geometry::circumsphere;
use crate::mc::{replicate, Estimate};
use crate::pointproc::{knn_distance, knn_distance_brute, mecke_check, IntensityMeasure, PointConfiguration, RngSpec};
use crate::stein::{estimate_bounds_poisson, McConfig};
use crate::Tolerances;

use super::config::{Experiment, ExperimentConfig};
use super::experiments::run;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestLine {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn pts(v: &[&[f64]]) -> PointConfiguration {
    PointConfiguration::from_points(v[0].len(), &v.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).expect("valid points")
}

fn ensure(cond: bool, detail: impl Into<String>) -> Result<String> {
    if cond {
        Ok(String::new())
    } else {
        Err(Error::invalid("selftest", detail.into()))
    }
}

fn multiset_distances() -> Result<String> {
    let (a, b, c) = ([0.1, 0.1], [0.2, 0.7], [0.9, 0.4]);
    let x = pts(&[&a, &a, &b]);
    let y = pts(&[&a, &b, &c]);
    let d = config_dtv(&x, &y, MatchMode::Coordinates);
    ensure(d == 1, format!("d({{a,a,b}}, {{a,b,c}}) = {d}"))?;
    ensure(config_dtv(&x, &x, MatchMode::Coordinates) == 0, "d(w, w) != 0")?;
    let sub = pts(&[&a]);
    ensure(config_dtv(&sub, &y, MatchMode::Coordinates) == 2, "subset difference")
}

fn count_and_gumbel_targets() -> Result<String> {
    let tv = count_tv(&vec![0u64; 1000], 5.0)?;
    ensure((tv - (1.0 - (-5f64).exp())).abs() < 1e-9, format!("point mass TV {tv}"))?;
    let tv0 = count_tv(&vec![0u64; 1000], 1e-12)?;
    ensure(tv0 < 1e-9, format!("vanishing mean TV {tv0}"))?;
    let g = gumbel_check(&[-1.0; 10], &[0.0, 1.0], |b| (-b).exp())?;
    ensure((g.rows[0].target - (-1f64).exp()).abs() < 1e-15, "target at 0")?;
    ensure((g.rows[1].target - (-(-1f64).exp()).exp()).abs() < 1e-15, "target at 1")
}

fn circumspheres() -> Result<String> {
    let tol = Tolerances::DEFAULT;
    let c = circumsphere(&[&[0.2, 0.3], &[0.4, 0.3]], &tol)?;
    ensure((c.radius - 0.1).abs() < 1e-12 && c.interior, "pair")?;
    let c = circumsphere(&[&[0.5, 0.5], &[0.6, 0.5], &[0.55, 0.58]], &tol)?;
    let r = c.radius;
    for p in [[0.5, 0.5], [0.6, 0.5], [0.55, 0.58]] {
        let d = crate::geometry::dist(c.center.coords(), &p);
        ensure((d - r).abs() < 1e-12, "equidistance")?;
    }
    ensure(c.interior, "acute triangle center inside")
}

fn critical_pair(inject_fault: bool) -> Result<String> {
    let n = 5000.0;
    let p = CritParams::new(2, 1, n, 0.0, None)?;
    let f = if inject_fault {
        CriticalFunctional::corrupted(p)?
    } else {
        CriticalFunctional::new(p)?
    };
    let w = pts(&[&[0.5, 0.5], &[0.5, 0.56], &[0.0, 0.0]]);
    let xi = eval_xi(&f, &w);
    ensure(xi.len() == 1, format!("{} atoms instead of 1", xi.len()))?;
    let a = &xi.atoms()[0];
    let u = a.unit.clone().unwrap_or_default();
    ensure(
        u.len() == 2 && (u[0] - 0.5).abs() < 1e-12 && (u[1] - 0.53).abs() < 1e-12,
        format!("critical point at {u:?}"),
    )?;
    ensure((a.mark - (PI * n * 0.03 * 0.03 - n.ln())).abs() < 1e-9, "mark")
}

fn knn_brute_force() -> Result<String> {
    let mut rng = RngSpec::new(11, 0).rng();
    for t in 0..300 {
        let m = 2 + t % 40;
        let k = 1 + t % 4;
        let coords: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random(), rng.random()]).collect();
        let w = PointConfiguration::from_points(2, &coords)?;
        let x = &coords[t % m];
        let (fast, slow) = (knn_distance(x, &w, k, true), knn_distance_brute(x, &w, k, true));
        match (fast, slow) {
            (Ok(a), Ok(b)) => ensure(a == b, format!("instance {t}: {a} vs {b}"))?,
            (Err(_), Err(_)) => String::new(),
            _ => return ensure(false, format!("instance {t}: error mismatch")),
        };
    }
    Ok(String::new())
}

fn glauber_small() -> Result<String> {
    let m = IntensityMeasure::constant(2, 3.0)?;
    let w = pts(&[&[0.1, 0.1], &[0.3, 0.8], &[0.6, 0.2]]);
    let mut rng = RngSpec::new(12, 0).rng();
    ensure(simulate(&w, &m, 0.0, &mut rng)? == w, "horizon 0 changed the start")?;
    let (a, b) = simulate_coupled(&w, &w, &m, 1.5, &mut rng)?;
    ensure(a == b, "identical starts diverged")?;
    let dead = IntensityMeasure::constant(2, 0.0)?;
    let s = 0.8;
    let v: Result<Vec<f64>> = replicate(20_000, |i| {
        let mut r = RngSpec::new(13, i).rng();
        Ok(simulate(&w, &dead, s, &mut r)?.len() as f64)
    })
    .into_iter()
    .collect();
    let e = Estimate::from_samples(&v?);
    let z = e.z_exact(3.0 * (-s as f64).exp());
    ensure(z.abs() <= 4.0, format!("pure death z = {z:.2}"))
}

fn mecke_small() -> Result<String> {
    let m = IntensityMeasure::constant(2, 50.0)?;
    let r = mecke_check(
        &m,
        |i, w| w.count_in(&crate::geometry::Ball::new(w.point(i).to_vec(), 0.1)) as f64,
        2000,
        RngSpec::new(14, 0),
    )?;
    ensure(r.pass, format!("z = {:.2}", r.z))
}

fn bound_oracles() -> Result<String> {
    let n: f64 = 1000.0;
    let q = IntensityMeasure::constant(2, 1.0)?;
    let b = n.ln();
    let p = KnnParams::new(1, n, 0.0)?;
    let f = KnnFunctional::new(p, &q, b)?;
    let r = estimate_bounds_poisson(&f, f.scaled_measure(), &McConfig::new(4000, 15))?;
    let t = r.terms();
    let e2 = 2.0 * (1.0 - (-b).exp()).powi(2) * 4.0 * (p.a_n() + b) / n;
    let (z1, z2) = (t[0].z_exact(2.0 / n), t[1].z_exact(e2));
    ensure(z1.abs() <= 4.0 && z2.abs() <= 4.0, format!("z(e1) = {z1:.2}, z(e2) = {z2:.2}"))
}

fn validation() -> Result<String> {
    let mut c = ExperimentConfig::defaults(Experiment::KnnPoisson);
    c.replicates = 0;
    ensure(run(&c, None).is_err(), "replicates = 0 accepted")
}

fn determinism() -> Result<String> {
    let mut c = ExperimentConfig::defaults(Experiment::KnnPoisson);
    c.n = vec![300.0, 600.0];
    c.replicates = 500;
    c.samples = 1000;
    c.seed = 16;
    let pool = |t: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))
    };
    let one = pool(1)?.install(|| run(&c, None))?;
    let three = pool(3)?.install(|| run(&c, None))?;
    let again = pool(1)?.install(|| run(&c, None))?;
    ensure(one == three && one == again, "outputs differ between runs")
}

/// Fast checks of exact identities and small oracles. With `inject_fault`
/// the critical-point check runs on a corrupted circumcenter.
pub fn selftest(inject_fault: bool) -> Vec<SelftestLine> {
    let checks: Vec<(&'static str, Box<dyn Fn() -> Result<String>>)> = vec![
        ("multiset distances", Box::new(multiset_distances)),
        ("count and Gumbel targets", Box::new(count_and_gumbel_targets)),
        ("circumspheres", Box::new(circumspheres)),
        ("critical pair example", Box::new(move || critical_pair(inject_fault))),
        ("k-NN grid against brute force", Box::new(knn_brute_force)),
        ("Glauber dynamics", Box::new(glauber_small)),
        ("Mecke identity", Box::new(mecke_small)),
        ("bound term oracles", Box::new(bound_oracles)),
        ("config validation", Box::new(validation)),
        ("determinism across thread counts", Box::new(determinism)),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok(_) => SelftestLine {
                name,
                pass: true,
                detail: String::new(),
            },
            Err(e) => SelftestLine {
                name,
                pass: false,
                detail: e.to_string(),
            },
        })
        .collect()
}
