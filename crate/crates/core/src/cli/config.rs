use std::fmt;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::functionals::{BPolicy, CritParams, KnnParams};
use crate::pointproc::IntensityMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    KnnPoisson,
    KnnBinomial,
    CriticalPoints,
    GlauberCheck,
    MeckeCheck,
    Bounds,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::KnnPoisson => "knn-poisson",
            Experiment::KnnBinomial => "knn-binomial",
            Experiment::CriticalPoints => "critical-points",
            Experiment::GlauberCheck => "glauber-check",
            Experiment::MeckeCheck => "mecke-check",
            Experiment::Bounds => "bounds",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Experiment::KnnPoisson,
            Experiment::KnnBinomial,
            Experiment::CriticalPoints,
            Experiment::GlauberCheck,
            Experiment::MeckeCheck,
            Experiment::Bounds,
        ]
        .into_iter()
        .find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Spatial density of the points, normalized to a probability measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensitySpec {
    Constant,
    Cosine(f64),
}

impl DensitySpec {
    pub fn measure(self, d: usize) -> Result<IntensityMeasure> {
        match self {
            DensitySpec::Constant => IntensityMeasure::constant(d, 1.0),
            DensitySpec::Cosine(a) => IntensityMeasure::cosine(d, a),
        }
    }
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::Constant => write!(f, "constant"),
            DensitySpec::Cosine(a) => write!(f, "cosine:{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Poisson,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    Knn,
    Critical,
}

/// Everything an experiment run needs. Built from defaults for the
/// experiment, then a config file, then command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub d: usize,
    pub k: usize,
    pub n: Vec<f64>,
    pub b0: f64,
    pub alpha0: f64,
    pub b_policy: BPolicy,
    pub density: DensitySpec,
    pub replicates: u64,
    /// Replicates for the simulated-process statistics.
    pub samples: u64,
    /// Largest `n` for which the process itself is simulated.
    pub sample_max_n: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    /// Upper radius `R_n` for critical points; `sqrt(r_n)` when absent.
    pub upper: Option<f64>,
    pub horizon: f64,
    pub mass: f64,
    pub radius: f64,
    pub model: Model,
    pub functional: FunctionalKind,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            d: 2,
            k: 1,
            n: vec![1e3, 1e4],
            b0: 0.0,
            alpha0: 0.0,
            b_policy: BPolicy::LogN,
            density: DensitySpec::Constant,
            replicates: 10_000,
            samples: 10_000,
            sample_max_n: 1e4,
            seed: 0,
            out: PathBuf::from("steinpp-out"),
            format: Format::Csv,
            upper: None,
            horizon: 10.0,
            mass: 5.0,
            radius: 0.1,
            model: Model::Poisson,
            functional: FunctionalKind::Knn,
        };
        match experiment {
            Experiment::KnnBinomial => c.b_policy = BPolicy::AN,
            Experiment::CriticalPoints => c.n = vec![5000.0],
            Experiment::GlauberCheck => c.replicates = 100_000,
            Experiment::MeckeCheck => c.mass = 50.0,
            Experiment::Bounds => c.n = vec![1000.0],
            Experiment::KnnPoisson => {}
        }
        c
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut samples_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            self.set(&key, value).map_err(|e| match e {
                Error::InvalidParameter { field, reason } => Error::Parse {
                    line: i + 1,
                    reason: format!("{field}: {reason}"),
                },
                other => other,
            })?;
            samples_set |= key == "samples";
            if key == "replicates" && !samples_set {
                self.samples = self.replicates;
            }
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(field: &str, v: &str) -> Result<T> {
            v.parse::<T>().map_err(|_| Error::invalid(field, format!("cannot parse `{v}`")))
        }
        fn count(field: &str, v: &str) -> Result<u64> {
            let x: f64 = num(field, v)?;
            if x < 0.0 || x.fract() != 0.0 || x > 1e15 {
                return Err(Error::invalid(field, format!("`{v}` is not a whole number")));
            }
            Ok(x as u64)
        }
        match key {
            "experiment" => {
                let e = Experiment::parse(value).ok_or_else(|| Error::invalid(key, format!("unknown experiment `{value}`")))?;
                if e != self.experiment {
                    return Err(Error::invalid(
                        key,
                        format!("file is for `{value}` but `{}` was requested", self.experiment.name()),
                    ));
                }
            }
            "d" => self.d = count(key, value)? as usize,
            "k" => self.k = count(key, value)? as usize,
            "n" => {
                self.n = value
                    .split(',')
                    .map(|s| num::<f64>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "b0" => self.b0 = num(key, value)?,
            "alpha0" => self.alpha0 = num(key, value)?,
            "b_policy" => {
                self.b_policy = match value {
                    "log-n" => BPolicy::LogN,
                    "a-n" => BPolicy::AN,
                    v => match v.strip_prefix("explicit:") {
                        Some(b) => BPolicy::Explicit(num("b_policy", b)?),
                        None => return Err(Error::invalid(key, "use log-n, a-n or explicit:<b>")),
                    },
                }
            }
            "b" => self.b_policy = BPolicy::Explicit(num(key, value)?),
            "density" => {
                self.density = match value {
                    "constant" => DensitySpec::Constant,
                    v => match v.strip_prefix("cosine:") {
                        Some(a) => DensitySpec::Cosine(num(key, a)?),
                        None => return Err(Error::invalid(key, "use constant or cosine:<amplitude>")),
                    },
                }
            }
            "replicates" => self.replicates = count(key, value)?,
            "samples" => self.samples = count(key, value)?,
            "sample_max_n" => self.sample_max_n = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "format" => {
                self.format = match value {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(Error::invalid(key, "use csv or json")),
                }
            }
            "upper" => self.upper = Some(num(key, value)?),
            "horizon" => self.horizon = num(key, value)?,
            "mass" => self.mass = num(key, value)?,
            "radius" => self.radius = num(key, value)?,
            "model" => {
                self.model = match value {
                    "poisson" => Model::Poisson,
                    "binomial" => Model::Binomial,
                    _ => return Err(Error::invalid(key, "use poisson or binomial")),
                }
            }
            "functional" => {
                self.functional = match value {
                    "knn" => FunctionalKind::Knn,
                    "critical" => FunctionalKind::Critical,
                    _ => return Err(Error::invalid(key, "use knn or critical")),
                }
            }
            _ => return Err(Error::invalid(key, "unknown key")),
        }
        Ok(())
    }

    fn binomial_input(&self) -> bool {
        self.experiment == Experiment::KnnBinomial || (self.experiment == Experiment::Bounds && self.model == Model::Binomial)
    }

    /// Checks every field the chosen experiment uses.
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be at least 1"));
        }
        match self.experiment {
            Experiment::GlauberCheck => {
                if !(self.mass >= 0.0 && self.mass.is_finite()) {
                    return Err(Error::invalid("mass", "must be finite and nonnegative"));
                }
                if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
                    return Err(Error::invalid("horizon", "must be finite and nonnegative"));
                }
                if self.replicates < 10_000 {
                    return Err(Error::invalid("replicates", "the cell statistics need at least 10000"));
                }
                return Ok(());
            }
            Experiment::MeckeCheck => {
                if !(self.mass >= 0.0 && self.mass.is_finite()) {
                    return Err(Error::invalid("mass", "must be finite and nonnegative"));
                }
                if !(self.radius > 0.0 && self.radius < 0.5) {
                    return Err(Error::invalid("radius", "must lie in (0, 1/2)"));
                }
                return self.density.measure(self.d).map(|_| ());
            }
            _ => {}
        }
        if self.n.is_empty() {
            return Err(Error::invalid("n", "need at least one value"));
        }
        let critical = self.experiment == Experiment::CriticalPoints
            || (self.experiment == Experiment::Bounds && self.functional == FunctionalKind::Critical);
        if critical {
            if self.density != DensitySpec::Constant {
                return Err(Error::invalid("density", "critical points use the constant density"));
            }
            if self.binomial_input() {
                return Err(Error::invalid("model", "critical points use Poisson input"));
            }
            for &n in &self.n {
                CritParams::new(self.d, self.k, n, self.alpha0, self.upper)?;
            }
            return Ok(());
        }
        if self.d < 2 {
            return Err(Error::invalid("d", "k-NN marks need d >= 2"));
        }
        if self.d > 8 {
            return Err(Error::invalid("d", "at most 8"));
        }
        if self.k < 1 {
            return Err(Error::invalid("k", "must be at least 1"));
        }
        self.density.measure(self.d)?;
        for &n in &self.n {
            let p = KnnParams::new(self.k, n, self.b0).map_err(|e| relabel(e, "n"))?;
            if self.binomial_input() && (n.fract() != 0.0 || n < (self.k + 2) as f64) {
                return Err(Error::invalid("n", format!("{n} must be a whole number above k + 1")));
            }
            let b = self.b_policy.value(&p);
            if !(b >= self.b0.max(0.0)) {
                return Err(Error::invalid("b_policy", format!("b = {b} is below max(0, b0) at n = {n}")));
            }
        }
        if self.samples > 0 && self.samples < 1000 && self.sample_max_n > 0.0 {
            return Err(Error::invalid("samples", "the count statistics need at least 1000 (or 0 to skip)"));
        }
        Ok(())
    }

    /// Canonical `key = value` text of the fields in use.
    pub fn canonical(&self) -> String {
        let b_policy = match self.b_policy {
            BPolicy::LogN => "log-n".to_string(),
            BPolicy::AN => "a-n".to_string(),
            BPolicy::Explicit(b) => format!("explicit:{b}"),
        };
        let n: Vec<String> = self.n.iter().map(|x| x.to_string()).collect();
        let mut lines = vec![format!("experiment = {}", self.experiment.name())];
        let mut add = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        match self.experiment {
            Experiment::GlauberCheck => {
                add("mass", self.mass.to_string());
                add("horizon", self.horizon.to_string());
                add("d", self.d.to_string());
            }
            Experiment::MeckeCheck => {
                add("mass", self.mass.to_string());
                add("radius", self.radius.to_string());
                add("d", self.d.to_string());
                add("density", self.density.to_string());
            }
            Experiment::CriticalPoints => {
                add("d", self.d.to_string());
                add("k", self.k.to_string());
                add("n", n.join(", "));
                add("alpha0", self.alpha0.to_string());
                add("upper", self.upper.map_or("sqrt-r_n".into(), |u| u.to_string()));
            }
            _ => {
                add("d", self.d.to_string());
                add("k", self.k.to_string());
                add("n", n.join(", "));
                add("b0", self.b0.to_string());
                add("b_policy", b_policy);
                add("density", self.density.to_string());
                if self.experiment == Experiment::Bounds {
                    add("model", format!("{:?}", self.model).to_lowercase());
                    add("functional", format!("{:?}", self.functional).to_lowercase());
                    add("alpha0", self.alpha0.to_string());
                    add("upper", self.upper.map_or("sqrt-r_n".into(), |u| u.to_string()));
                } else {
                    add("samples", self.samples.to_string());
                    add("sample_max_n", self.sample_max_n.to_string());
                }
            }
        }
        add("replicates", self.replicates.to_string());
        add("seed", self.seed.to_string());
        add("format", self.format.extension().to_string());
        lines.join("\n") + "\n"
    }
}

fn relabel(e: Error, field: &str) -> Error {
    match e {
        Error::InvalidParameter { reason, .. } => Error::invalid(field, reason),
        other => other,
    }
}
