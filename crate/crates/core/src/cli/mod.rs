//! Command-line experiment runner.

pub mod config;
pub mod experiments;
pub mod output;
pub mod selftest;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};

pub use config::{DensitySpec, Experiment, ExperimentConfig, Format, FunctionalKind, Model};
pub use experiments::run;
pub use output::{Artifacts, Cell, Check, Table};
pub use selftest::{selftest, SelftestLine};

#[derive(Debug, Parser)]
#[command(name = "steinpp", version, about = "Poisson process approximation experiments on the flat torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config file (`key = value` lines, `#` comments).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "STEINPP_THREADS")]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// k-NN marks under Poisson input: bounds, exceedances, limit law.
    KnnPoisson,
    /// k-NN marks under binomial input.
    KnnBinomial,
    /// Counts of large critical points of the distance function.
    CriticalPoints,
    /// Stationarity and contraction of the birth-death dynamics.
    GlauberCheck,
    /// Mecke identity for a ball-count functional.
    MeckeCheck,
    /// Bound terms for one functional and input model.
    Bounds,
    /// Quick identity and oracle checks.
    Selftest {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

impl Command {
    fn experiment(&self) -> Option<Experiment> {
        Some(match self {
            Command::KnnPoisson => Experiment::KnnPoisson,
            Command::KnnBinomial => Experiment::KnnBinomial,
            Command::CriticalPoints => Experiment::CriticalPoints,
            Command::GlauberCheck => Experiment::GlauberCheck,
            Command::MeckeCheck => Experiment::MeckeCheck,
            Command::Bounds => Experiment::Bounds,
            Command::Selftest { .. } => return None,
        })
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli, experiment: Experiment) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::defaults(experiment);
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        c.apply_text(&text)?;
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out = o.clone();
    }
    if let Some(f) = cli.format {
        c.format = f;
    }
    c.validate()?;
    Ok(c)
}

fn install_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::invalid("threads", e.to_string()))?;
    }
    Ok(())
}

/// Runs the program on `args` and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    install_threads(cli.threads)?;
    match &cli.command {
        Command::Selftest { inject_fault } => {
            let lines = selftest(*inject_fault);
            for l in &lines {
                if l.pass {
                    println!("PASS {}", l.name);
                } else {
                    println!("FAIL {}: {}", l.name, l.detail);
                }
            }
            let pass = lines.iter().all(|l| l.pass);
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)?;
                let v = serde_json::json!({ "experiment": "selftest", "pass": pass, "checks": lines });
                fs::write(dir.join("passfail.json"), serde_json::to_string_pretty(&v).expect("serializable") + "\n")?;
            }
            Ok(pass)
        }
        cmd => {
            let experiment = cmd.experiment().expect("experiment command");
            let config = resolve_config(cli, experiment)?;
            let artifacts = run(&config, Some(&config.out))?;
            artifacts.write(&config.out)?;
            for f in &artifacts.failed {
                println!("FAIL {f}");
            }
            println!(
                "{}: {} ({})",
                experiment.name(),
                if artifacts.pass { "pass" } else { "fail" },
                config.out.join(&artifacts.results_name).display()
            );
            Ok(artifacts.pass)
        }
    }
}
