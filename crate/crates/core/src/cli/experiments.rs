use std::path::Path;

use statrs::distribution::{Binomial, DiscreteCDF, Poisson};

use crate::discrepancy::{cellwise_report, count_tv, dyadic_cells, gumbel_check, limit_cell_mass};
use crate::dynamics::{contraction_check, stationarity_report};
use crate::error::Result;
use crate::functionals::{eval_xi, CritParams, CriticalFunctional, KnnFunctional, KnnParams, MarkedConfiguration};
use crate::geometry::{unit_ball_volume, Ball};
use crate::mc::{replicate, Estimate};
use crate::pointproc::sampler::sample_location;
use crate::pointproc::{mecke_check, sample_binomial, sample_poisson, IntensityMeasure, RngSpec};
use crate::stein::{estimate_bounds_poisson, knn_binomial_report, knn_poisson_report, BoundReport, McConfig};

use super::config::{DensitySpec, Experiment, ExperimentConfig, FunctionalKind, Model};
use super::output::{build_artifacts, flush_partial, Artifacts, Cell, Check, Table};

/// Runs the configured experiment. With `flush` set, the rows finished so
/// far are rewritten there after each one.
pub fn run(config: &ExperimentConfig, flush: Option<&Path>) -> Result<Artifacts> {
    config.validate()?;
    let mut table = Table::default();
    let mut checks = Vec::new();
    let mut progress = |t: &Table| -> Result<()> {
        if let Some(dir) = flush {
            flush_partial(dir, config, t)?;
        }
        Ok(())
    };
    match config.experiment {
        Experiment::KnnPoisson | Experiment::KnnBinomial => knn(config, &mut table, &mut checks, &mut progress)?,
        Experiment::CriticalPoints => critical(config, &mut table, &mut checks, &mut progress)?,
        Experiment::GlauberCheck => glauber(config, &mut table, &mut checks)?,
        Experiment::MeckeCheck => mecke(config, &mut table, &mut checks)?,
        Experiment::Bounds => bounds(config, &mut table, &mut checks, &mut progress)?,
    }
    Ok(build_artifacts(config, &table, &checks))
}

fn base(config: &ExperimentConfig) -> RngSpec {
    RngSpec::new(config.seed, 0)
}

fn log_line(msg: String) {
    eprintln!("[steinpp] {msg}");
}

const TERM_COLUMNS: [&str; 15] = [
    "e1", "e1_se", "e2", "e2_se", "e3", "e3_se", "e4", "e4_se", "e5", "e5_se", "e6", "e6_se", "dtv_lm", "total", "total_se",
];

fn term_cells(r: &BoundReport) -> Vec<Cell> {
    let mut v: Vec<Cell> = Vec::with_capacity(15);
    for t in r.terms() {
        v.push(t.mean.into());
        v.push(t.se.into());
    }
    v.push(r.dtv_lm.into());
    v.push(r.total.into());
    v.push(r.se_total().into());
    v
}

/// Exact `E xi(X x (u, inf))` for k-NN marks, ignoring balls that wrap
/// around the torus.
pub fn knn_exceedance(p: &KnnParams, binomial_input: bool, u: f64) -> f64 {
    let mean = p.a_n() + u;
    let k = p.k as u64;
    if binomial_input {
        let n = p.n.round() as u64;
        let prob = (mean / p.n).clamp(0.0, 1.0);
        p.n * Binomial::new(prob, n - 1).map_or(0.0, |b| b.cdf(k - 1))
    } else {
        p.n * Poisson::new(mean).map_or(0.0, |d| d.cdf(k - 1))
    }
}

fn knn(
    config: &ExperimentConfig,
    table: &mut Table,
    checks: &mut Vec<Check>,
    progress: &mut dyn FnMut(&Table) -> Result<()>,
) -> Result<()> {
    let binomial_input = config.experiment == Experiment::KnnBinomial;
    *table = Table::new(&[
        "n", "k", "d", "b", "b0", "e1", "e1_se", "e2", "e2_se", "e3", "e3_se", "e4", "e4_se", "e5", "e5_se", "e6", "e6_se",
        "dtv_lm", "total", "total_se", "replicates", "u0", "exceed_u0", "exceed_u0_se", "exceed_u0_exact", "exceed_u1",
        "exceed_u1_se", "exceed_u1_exact", "exceed_u2", "exceed_u2_se", "exceed_u2_exact", "count_mean", "count_mean_se",
        "count_tv", "gumbel_max_abs_z", "cell_max_abs_z", "samples",
    ]);
    let q = config.density.measure(config.d)?;
    let mut totals = Vec::new();
    for (i, &n) in config.n.iter().enumerate() {
        let p = KnnParams::new(config.k, n, config.b0)?;
        let b = config.b_policy.value(&p);
        let f = KnnFunctional::new(p, &q, b)?;
        let mc = McConfig {
            replicates: config.replicates,
            rng: base(config).fork(0x100 + i as u64),
        };
        let report = if binomial_input {
            knn_binomial_report(&f, &q, &mc)?
        } else {
            knn_poisson_report(&f, &mc)?
        };
        totals.push((n, report.total));
        let mut row: Vec<Cell> = vec![
            Cell::Num(n),
            config.k.into(),
            config.d.into(),
            b.into(),
            config.b0.into(),
        ];
        row.extend(term_cells(&report));
        row.push(config.replicates.into());

        let u0 = config.b0.max(0.0);
        let sampled = config.samples > 0 && n <= config.sample_max_n;
        if sampled {
            let spec = base(config).fork(0x200 + i as u64);
            let samples: Result<Vec<MarkedConfiguration>> = replicate(config.samples, |j| {
                let eta = if binomial_input {
                    sample_binomial(n.round() as usize, &q, spec.with_stream(j))?
                } else {
                    sample_poisson(f.scaled_measure(), spec.with_stream(j))?
                };
                Ok(eval_xi(&f, &eta).restrict_above(u0))
            })
            .into_iter()
            .collect();
            let samples = samples?;
            row.push(u0.into());
            for j in 0..3 {
                let u = u0 + j as f64;
                let v: Vec<f64> = samples.iter().map(|s| s.count_above(u) as f64).collect();
                let e = Estimate::from_samples(&v);
                let exact = knn_exceedance(&p, binomial_input, u);
                row.extend([e.mean.into(), e.se.into(), exact.into()]);
                let z = e.z_exact(exact);
                checks.push(Check::new(format!("n={n} exceedance u={u} |z|"), z.abs(), "<= 4", z.abs() <= 4.0));
            }
            let counts: Vec<u64> = samples.iter().map(|s| s.len() as u64).collect();
            let limit_mean = (-u0).exp();
            let tv = count_tv(&counts, limit_mean)?;
            let c = Estimate::from_samples(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
            let maxes: Vec<f64> = samples.iter().map(|s| s.max_mark()).collect();
            let gumbel = gumbel_check(&maxes, &[u0, u0 + 1.0, u0 + 2.0], |b| (-b).exp())?;
            let cells = dyadic_cells(config.d, 1, &[u0, u0 + 1.0]);
            let expected: Result<Vec<f64>> = cells.iter().map(|c| limit_cell_mass(&q, c)).collect();
            let cellwise = if samples.len() >= 10_000 {
                Some(cellwise_report(&samples, &cells, &expected?)?)
            } else {
                None
            };
            row.extend([
                c.mean.into(),
                c.se.into(),
                tv.into(),
                gumbel.max_abs_z.into(),
                cellwise.as_ref().map(|r| r.max_abs_z_mean.max(r.max_abs_z_variance).max(r.max_abs_z_covariance)).into(),
                config.samples.into(),
            ]);
            checks.push(Check::new(format!("n={n} count_tv"), tv, "< 0.03", tv < 0.03));
            checks.push(Check::new(format!("n={n} gumbel max |z|"), gumbel.max_abs_z, "<= 4", gumbel.pass));
            if let Some(r) = &cellwise {
                let worst = r.max_abs_z_mean.max(r.max_abs_z_variance).max(r.max_abs_z_covariance);
                checks.push(Check::new(format!("n={n} cell max |z|"), worst, "<= 4", r.pass));
            }
        } else {
            row.push(Cell::Missing);
            row.extend((0..15).map(|_| Cell::Missing));
        }
        table.push(row);
        log_line(format!("{} n={n}: total {:.4e} ± {:.1e}", config.experiment.name(), report.total, report.se_total()));
        progress(table)?;
    }
    rate_checks(&totals, checks, !binomial_input);
    Ok(())
}

/// Totals strictly decreasing in `n`; with `rate` also within a factor 3 of
/// `C log log n / log n`, `C` fitted at the first `n`.
fn rate_checks(totals: &[(f64, f64)], checks: &mut Vec<Check>, rate: bool) {
    if totals.len() < 2 {
        return;
    }
    let decreasing = totals.windows(2).all(|w| w[1].1 < w[0].1);
    checks.push(Check::new("total decreasing in n", totals.len() as f64, "strict", decreasing));
    if rate {
        let shape = |n: f64| n.ln().ln() / n.ln();
        let c = totals[0].1 / shape(totals[0].0);
        for &(n, t) in &totals[1..] {
            let ratio = t / (c * shape(n));
            checks.push(Check::new(
                format!("n={n} total / fitted rate"),
                ratio,
                "in [1/3, 3]",
                (1.0 / 3.0..=3.0).contains(&ratio),
            ));
        }
    }
}

struct Moments {
    mean: Estimate,
    variance: f64,
    variance_se: f64,
}

fn moments(v: &[f64]) -> Moments {
    let mean = Estimate::from_samples(v);
    let n = v.len() as f64;
    let c2: Vec<f64> = v.iter().map(|x| (x - mean.mean).powi(2)).collect();
    let c4: Vec<f64> = c2.iter().map(|x| x * x).collect();
    let variance = crate::mc::pairwise_sum(&c2) / (n - 1.0);
    let m4 = crate::mc::pairwise_sum(&c4) / n;
    Moments {
        mean,
        variance,
        variance_se: ((m4 - variance * variance).max(0.0) / n).sqrt(),
    }
}

fn critical_counts(p: CritParams, reps: u64, spec: RngSpec) -> Result<Vec<f64>> {
    let f = CriticalFunctional::new(p)?;
    let m = IntensityMeasure::constant(p.d, p.n)?;
    replicate(reps, |j| {
        let eta = sample_poisson(&m, spec.with_stream(j))?;
        Ok(eval_xi(&f, &eta).len() as f64)
    })
    .into_iter()
    .collect()
}

fn critical(
    config: &ExperimentConfig,
    table: &mut Table,
    checks: &mut Vec<Check>,
    progress: &mut dyn FnMut(&Table) -> Result<()>,
) -> Result<()> {
    *table = Table::new(&[
        "n",
        "k",
        "d",
        "alpha0",
        "r_n",
        "upper",
        "mean",
        "mean_se",
        "variance",
        "variance_se",
        "dispersion",
        "upper_doubled",
        "mean_doubled",
        "mean_doubled_se",
        "doubled_z",
        "replicates",
    ]);
    for (i, &n) in config.n.iter().enumerate() {
        let p = CritParams::new(config.d, config.k, n, config.alpha0, config.upper)?;
        let counts = critical_counts(p, config.replicates, base(config).fork(0x300 + i as u64))?;
        let m = moments(&counts);
        let dispersion = m.variance / m.mean.mean;
        let mut row: Vec<Cell> = vec![
            Cell::Num(n),
            config.k.into(),
            config.d.into(),
            config.alpha0.into(),
            p.r_n().into(),
            p.upper_radius().into(),
            m.mean.mean.into(),
            m.mean.se.into(),
            m.variance.into(),
            m.variance_se.into(),
            dispersion.into(),
        ];
        checks.push(Check::new(
            format!("n={n} variance / mean"),
            dispersion,
            "within 10% of 1",
            (dispersion - 1.0).abs() <= 0.1,
        ));
        let wide = 2.0 * p.upper_radius();
        match CritParams::new(config.d, config.k, n, config.alpha0, Some(wide)) {
            Ok(pw) => {
                let counts = critical_counts(pw, config.replicates, base(config).fork(0x400 + i as u64))?;
                let e = Estimate::from_samples(&counts);
                let z = e.z_against(&m.mean);
                row.extend([wide.into(), e.mean.into(), e.se.into(), z.into()]);
                checks.push(Check::new(format!("n={n} doubled upper radius |z|"), z.abs(), "<= 2", z.abs() <= 2.0));
            }
            Err(_) => row.extend((0..4).map(|_| Cell::Missing)),
        }
        row.push(config.replicates.into());
        table.push(row);
        log_line(format!(
            "critical-points n={n}: mean {:.4} variance {:.4}",
            m.mean.mean, m.variance
        ));
        progress(table)?;
    }
    Ok(())
}

fn glauber(config: &ExperimentConfig, table: &mut Table, checks: &mut Vec<Check>) -> Result<()> {
    *table = Table::new(&["test", "horizon", "estimate", "se", "target", "z", "replicates"]);
    let m = IntensityMeasure::constant(config.d, config.mass)?;
    let s = stationarity_report(&m, config.horizon, config.replicates, base(config).fork(0x500))?;
    let z = s.mean_count.z_exact(s.expected_count);
    let reps: Cell = config.replicates.into();
    table.push(vec![
        "mean_count".into(),
        config.horizon.into(),
        s.mean_count.mean.into(),
        s.mean_count.se.into(),
        s.expected_count.into(),
        z.into(),
        reps.clone(),
    ]);
    table.push(vec![
        "count_tv".into(),
        config.horizon.into(),
        s.count_tv.into(),
        Cell::Missing,
        Cell::Missing,
        Cell::Missing,
        reps.clone(),
    ]);
    let c = &s.cells;
    let worst = c.max_abs_z_mean.max(c.max_abs_z_variance).max(c.max_abs_z_covariance);
    table.push(vec![
        "cell_max_abs_z".into(),
        config.horizon.into(),
        worst.into(),
        Cell::Missing,
        Cell::Missing,
        Cell::Missing,
        reps.clone(),
    ]);
    checks.push(Check::new("stationarity count_tv", s.count_tv, "< 0.02", s.count_tv < 0.02));
    checks.push(Check::new("stationarity cell max |z|", worst, "<= 4", c.pass));

    // start pair: a Poisson sample and the same sample plus two points
    let mut rng = base(config).fork(0x600).rng();
    let omega2 = crate::pointproc::sampler::sample_poisson_with(&m, &mut rng)?;
    let mut omega1 = omega2.clone();
    let mut x = vec![0.0; config.d];
    for _ in 0..2 {
        sample_location(&IntensityMeasure::constant(config.d, 1.0)?, &mut rng, &mut x)?;
        omega1.push(&x)?;
    }
    for (i, s) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let row = contraction_check(&omega1, &omega2, &m, s, config.replicates, base(config).fork(0x700 + i as u64))?;
        table.push(vec![
            "contraction".into(),
            s.into(),
            row.estimate.mean.into(),
            row.estimate.se.into(),
            row.target.into(),
            row.z.into(),
            reps.clone(),
        ]);
        checks.push(Check::new(format!("contraction s={s} |z|"), row.z.abs(), "<= 4", row.pass));
    }
    log_line(format!("glauber-check: count TV {:.4}", s.count_tv));
    Ok(())
}

fn mecke(config: &ExperimentConfig, table: &mut Table, checks: &mut Vec<Check>) -> Result<()> {
    *table = Table::new(&["mass", "radius", "lhs", "lhs_se", "rhs", "rhs_se", "exact", "z", "replicates"]);
    let m = config.density.measure(config.d)?.scaled(config.mass);
    let r = config.radius;
    let report = mecke_check(
        &m,
        |i, w| w.count_in(&Ball::new(w.point(i).to_vec(), r)) as f64,
        config.replicates,
        base(config).fork(0x800),
    )?;
    let exact = match config.density {
        DensitySpec::Constant => Some(config.mass * (1.0 + config.mass * unit_ball_volume(config.d) * r.powi(config.d as i32))),
        DensitySpec::Cosine(_) => None,
    };
    table.push(vec![
        config.mass.into(),
        r.into(),
        report.lhs.mean.into(),
        report.lhs.se.into(),
        report.rhs.mean.into(),
        report.rhs.se.into(),
        exact.into(),
        report.z.into(),
        config.replicates.into(),
    ]);
    checks.push(Check::new("mecke |z|", report.z.abs(), "<= 4", report.pass));
    log_line(format!("mecke-check: z = {:.3}", report.z));
    Ok(())
}

fn bounds(
    config: &ExperimentConfig,
    table: &mut Table,
    checks: &mut Vec<Check>,
    progress: &mut dyn FnMut(&Table) -> Result<()>,
) -> Result<()> {
    let mut columns = vec!["model", "functional", "n", "k", "d", "b", "b0"];
    columns.extend(TERM_COLUMNS);
    columns.extend(["e1_oracle", "e2_oracle", "replicates", "notes"]);
    *table = Table::new(&columns);
    for (i, &n) in config.n.iter().enumerate() {
        let mc = McConfig {
            replicates: config.replicates,
            rng: base(config).fork(0x900 + i as u64),
        };
        let (report, oracles) = match config.functional {
            FunctionalKind::Knn => {
                let q = config.density.measure(config.d)?;
                let p = KnnParams::new(config.k, n, config.b0)?;
                let b = config.b_policy.value(&p);
                let f = KnnFunctional::new(p, &q, b)?;
                match config.model {
                    Model::Poisson => {
                        let r = knn_poisson_report(&f, &mc)?;
                        let oracle = (config.k == 1 && config.b0 == 0.0 && config.density == DensitySpec::Constant).then(|| {
                            let a = p.a_n();
                            let e1 = 2.0 * (-b).exp();
                            let e2 = 2.0 * (1.0 - (-b).exp()).powi(2) * 2f64.powi(config.d as i32) * (a + b) / n;
                            (e1, e2)
                        });
                        (r, oracle)
                    }
                    Model::Binomial => (knn_binomial_report(&f, &q, &mc)?, None),
                }
            }
            FunctionalKind::Critical => {
                let p = CritParams::new(config.d, config.k, n, config.alpha0, config.upper)?;
                let f = CriticalFunctional::new(p)?;
                let m = IntensityMeasure::constant(config.d, n)?;
                (estimate_bounds_poisson(&f, &m, &mc)?, None)
            }
        };
        let mut row: Vec<Cell> = vec![
            report.model.as_str().into(),
            match config.functional {
                FunctionalKind::Knn => "knn",
                FunctionalKind::Critical => "critical",
            }
            .into(),
            Cell::Num(n),
            config.k.into(),
            config.d.into(),
            report.b.into(),
            report.b0.into(),
        ];
        row.extend(term_cells(&report));
        row.push(oracles.map(|o| o.0).into());
        row.push(oracles.map(|o| o.1).into());
        row.push(config.replicates.into());
        row.push(Cell::Text(report.notes.join(" | ")));
        table.push(row);
        if let Some((e1, e2)) = oracles {
            let t = report.terms();
            for (name, est, exact) in [("e1", t[0], e1), ("e2", t[1], e2)] {
                let z = est.z_exact(exact);
                checks.push(Check::new(format!("n={n} {name} oracle |z|"), z.abs(), "<= 4", z.abs() <= 4.0));
            }
        }
        checks.push(Check::new(
            format!("n={n} total finite"),
            report.total,
            "finite, >= 0",
            report.total.is_finite() && report.total >= 0.0,
        ));
        log_line(format!("bounds n={n}: total {:.4e} ± {:.1e}", report.total, report.se_total()));
        progress(table)?;
    }
    Ok(())
}
