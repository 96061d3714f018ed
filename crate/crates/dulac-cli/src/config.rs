//! TOML run configuration; command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dulac_core::{
    DomainSpec, FormalClass, GevreyConfig, HornConfig, IterationConfig, OrbitConfig, RoundtripConfig,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub moduli: Option<PathBuf>,
    pub m: Option<i32>,
    pub rho: Option<f64>,
    /// `linear:a,b` or `quadratic:C,R`.
    pub domain: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Seed of the germ sample jitter.
    pub seed: Option<u64>,
    pub iteration: IterationConfig,
    pub gevrey: GevreyConfig,
    /// Orbit truncation; realized germs default to the slow-decay preset.
    pub orbit: Option<OrbitConfig>,
    pub horn: HornConfig,
    /// Tolerance of the equivalence search.
    pub equivalence_tol: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }
}

/// Command-line overrides shared by the numerical subcommands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML file with any of the parameters below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Exponent m of the formal class
    #[arg(long, allow_hyphen_values = true)]
    pub m: Option<i32>,
    /// Residual invariant ρ of the formal class
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Domain, `linear:a,b` or `quadratic:C,R`
    #[arg(long)]
    pub domain: Option<String>,
    /// Maximal number of Fatou iterations
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Iteration tolerance on the sup-norm deltas
    #[arg(long)]
    pub tol: Option<f64>,
    /// Cauchy-Heine contour length
    #[arg(long)]
    pub length: Option<f64>,
    /// Quadrature nodes per unit length
    #[arg(long)]
    pub nodes_per_unit: Option<f64>,
    /// Deformation distance ε of the Cauchy-Heine contours
    #[arg(long)]
    pub eps: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resolved {
    pub class: FormalClass,
    pub domain: DomainSpec,
    pub iteration: IterationConfig,
    pub gevrey: GevreyConfig,
    /// Orbit truncation from the file, if given.
    pub orbit: Option<OrbitConfig>,
    pub horn: HornConfig,
    pub equivalence_tol: f64,
    pub out: PathBuf,
    pub seed: u64,
}

impl Resolved {
    pub fn roundtrip(&self) -> RoundtripConfig {
        RoundtripConfig {
            iteration: self.iteration,
            orbit: self.orbit.unwrap_or_else(OrbitConfig::slow_decay),
            horn: self.horn,
            tol: self.equivalence_tol,
        }
    }
}

pub fn resolve(file: &FileConfig, o: &Overrides) -> Result<Resolved> {
    let m = o.m.or(file.m).unwrap_or(0);
    let rho = o.rho.or(file.rho).unwrap_or(0.0);
    let domain: DomainSpec = o
        .domain
        .clone()
        .or_else(|| file.domain.clone())
        .unwrap_or_else(|| "linear:2,0".into())
        .parse()?;
    let mut iteration = file.iteration;
    if let Some(v) = o.max_steps {
        iteration.max_steps = v;
    }
    if let Some(v) = o.tol {
        iteration.tol = v;
    }
    if let Some(v) = o.length {
        iteration.ch.length = v;
    }
    if let Some(v) = o.nodes_per_unit {
        iteration.ch.nodes_per_unit = v;
    }
    if let Some(v) = o.eps {
        iteration.ch.eps = v;
    }
    iteration.validate()?;
    if let Some(orbit) = &file.orbit {
        orbit.validate()?;
    }
    file.horn.validate()?;
    Ok(Resolved {
        class: FormalClass::new(m, rho),
        domain,
        iteration,
        gevrey: file.gevrey.clone(),
        orbit: file.orbit,
        horn: file.horn,
        equivalence_tol: file.equivalence_tol.unwrap_or(1e-3),
        out: o.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| "dulac-out".into()),
        seed: file.seed.unwrap_or(0),
    })
}
