//! Experiment configuration files (TOML) and their translation into
//! oracles and chain configurations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::BoundOptions;
use crate::error::{invalid, Error, Result};
use crate::planner::PlanRequest;
use crate::potentials::{self, Params};
use crate::samplers::{ChainConfig, Execution, GradientOracle, Init};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmName {
    Lmc,
    SgLmc,
    SsLmc,
    SsSgLmc,
}

impl AlgorithmName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lmc => "lmc",
            Self::SgLmc => "sg_lmc",
            Self::SsLmc => "ss_lmc",
            Self::SsSgLmc => "ss_sg_lmc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub params: Params,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    #[default]
    StandardGaussian,
    Point {
        x: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub beta: f64,
    pub eta: f64,
    pub k: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_u64")]
    pub thin: u64,
    #[serde(default)]
    pub init: InitSection,
}

/// Radius and batch size of the spherically smoothed gradient. For plain
/// LMC only `r` is read, as the analysis radius of the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSection {
    pub r: f64,
    #[serde(default = "one_usize")]
    pub n_batch: usize,
}

/// Mini-batch gradient of a finite sum with declared variance coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinibatchSection {
    pub n_batch: usize,
    #[serde(default)]
    pub var0: f64,
    #[serde(default)]
    pub var2: f64,
    #[serde(default = "one_f64")]
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Also evaluate the error bound during `sample`.
    #[serde(default)]
    pub bound: bool,
    #[serde(default)]
    pub execution: Execution,
    /// Burn-in for the summary moments; half the recorded iterates by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            bound: false,
            execution: Execution::default(),
            burn_in: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmName,
    #[serde(default = "one_usize")]
    pub replicas: usize,
    pub potential: PotentialSection,
    pub chain: ChainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minibatch: Option<MinibatchSection>,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default, skip_serializing_if = "is_default_options")]
    pub bound: BoundOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanRequest>,
}

fn one_u64() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn is_default_options(o: &BoundOptions) -> bool {
    o.a_abs.is_none() && o.kappa0.is_none() && o.p0_sup_log.is_none() && o.pi_first_moment.is_none()
}

enum Target {
    Single(potentials::PotentialSpec),
    Sum(potentials::FiniteSumPotential),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, as lowercase hex. The output
    /// directory and the scheduling mode do not change any trace, so they
    /// are left out of the hash.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.outputs.dir = PathBuf::new();
        canonical.outputs.execution = Execution::default();
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        let mut s = String::with_capacity(64);
        for b in digest.iter() {
            let _ = write!(s, "{b:02x}");
        }
        Ok(s)
    }

    /// Checks every numeric range and the algorithm/potential pairing.
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(invalid("replicas must be at least 1"));
        }
        self.chain_config().validate()?;
        if let InitSection::Point { x } = &self.chain.init {
            if x.len() != self.potential.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.potential.dim,
                    got: x.len(),
                });
            }
        }
        if let Some(p) = &self.plan {
            p.validate()?;
        }
        self.oracle().map(|_| ())
    }

    pub fn chain_config(&self) -> ChainConfig {
        let init = match &self.chain.init {
            InitSection::StandardGaussian => Init::StandardGaussian,
            InitSection::Point { x } => Init::Point(x.clone()),
        };
        ChainConfig::new(self.chain.beta, self.chain.eta, self.chain.k, self.chain.seed)
            .with_thin(self.chain.thin)
            .with_init(init)
    }

    fn target(&self) -> Result<Target> {
        let p = &self.potential;
        if potentials::FINITE_SUM_NAMES.contains(&p.name.as_str()) {
            Ok(Target::Sum(potentials::builtin_finite_sum(&p.name, p.dim, &p.params)?))
        } else {
            Ok(Target::Single(potentials::builtin(&p.name, p.dim, &p.params)?))
        }
    }

    fn smoothing(&self) -> Result<&SmoothingSection> {
        self.smoothing
            .as_ref()
            .ok_or_else(|| invalid(format!("algorithm {} needs a [smoothing] section", self.algorithm.as_str())))
    }

    /// The gradient oracle the configured algorithm uses.
    pub fn oracle(&self) -> Result<GradientOracle> {
        let target = self.target()?;
        let needs_sum = |alg: AlgorithmName| invalid(format!("algorithm {} needs a finite-sum potential", alg.as_str()));
        match self.algorithm {
            AlgorithmName::Lmc => {
                let r = self.smoothing.as_ref().map_or(1.0, |s| s.r);
                let spec = match target {
                    Target::Single(p) => p,
                    Target::Sum(f) => f.to_spec(),
                };
                GradientOracle::exact(spec, r)
            }
            AlgorithmName::SsLmc => {
                let s = self.smoothing()?;
                let spec = match target {
                    Target::Single(p) => p,
                    Target::Sum(f) => f.to_spec(),
                };
                GradientOracle::smoothed(spec, s.r, s.n_batch)
            }
            AlgorithmName::SgLmc => {
                let Target::Sum(f) = target else {
                    return Err(needs_sum(self.algorithm));
                };
                let mb = self
                    .minibatch
                    .as_ref()
                    .ok_or_else(|| invalid("algorithm sg_lmc needs a [minibatch] section"))?;
                GradientOracle::minibatch(f, mb.n_batch, mb.radius, mb.var0, mb.var2)
            }
            AlgorithmName::SsSgLmc => {
                let Target::Sum(f) = target else {
                    return Err(needs_sum(self.algorithm));
                };
                let s = self.smoothing()?;
                GradientOracle::finite_sum_smoothed(f, s.r, s.n_batch)
            }
        }
    }
}
