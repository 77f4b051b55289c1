//! Langevin chains Y_{(i+1)η} = Y_{iη} − ηG(Y_{iη}, a_{iη}) + √(2η/β)·z_i with
//! exact, spherically smoothed, mini-batch or user-supplied gradients.

use std::fmt;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mollifier::Mollifier;
use crate::potentials::{FiniteSumPotential, PotentialSpec};
use crate::rng::{replica_seed, ChainStreams, StreamRng};

/// Iterates with norm above this are treated as divergence.
pub const DIVERGENCE_RADIUS: f64 = 1e8;

/// A user-supplied initial law.
pub trait InitLaw: Send + Sync + fmt::Debug {
    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]);
}

#[derive(Clone, Debug, Default)]
pub enum Init {
    #[default]
    StandardGaussian,
    Point(Vec<f64>),
    Custom(Arc<dyn InitLaw>),
}

impl Init {
    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        match self {
            Init::StandardGaussian => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            Init::Point(x0) => {
                if x0.len() != out.len() {
                    return Err(Error::DimensionMismatch {
                        expected: out.len(),
                        got: x0.len(),
                    });
                }
                out.copy_from_slice(x0);
            }
            Init::Custom(law) => law.sample_into(rng, out),
        }
        Ok(())
    }

    fn label(&self) -> String {
        match self {
            Init::StandardGaussian => "standard_gaussian".into(),
            Init::Point(x) => format!("point{x:?}"),
            Init::Custom(law) => format!("custom({law:?})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub beta: f64,
    pub eta: f64,
    pub k: u64,
    pub seed: u64,
    pub init: Init,
    /// Record every `thin`-th iterate (the initial point is always recorded).
    pub thin: u64,
}

impl ChainConfig {
    pub fn new(beta: f64, eta: f64, k: u64, seed: u64) -> Self {
        Self {
            beta,
            eta,
            k,
            seed,
            init: Init::StandardGaussian,
            thin: 1,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_thin(mut self, thin: u64) -> Self {
        self.thin = thin;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta {} must be positive", self.beta)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!("eta {} must be positive", self.eta)));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        Ok(())
    }

    /// Serializable summary of the configuration.
    pub fn echo(&self) -> ChainEcho {
        ChainEcho {
            beta: self.beta,
            eta: self.eta,
            k: self.k,
            seed: self.seed,
            thin: self.thin,
            init: self.init.label(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainEcho {
    pub beta: f64,
    pub eta: f64,
    pub k: u64,
    pub seed: u64,
    pub thin: u64,
    pub init: String,
}

/// Bias and variance growth coefficients of a stochastic gradient:
/// |G̃ − ∇Ū_r|² ≤ 2·bias2·|x|² + 2·bias0 and E|G − G̃|² ≤ 2·var2·|x|² + 2·var0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub bias0: f64,
    pub bias2: f64,
    pub var0: f64,
    pub var2: f64,
}

impl Delta {
    /// δ_{r,0} = bias0 + var0.
    pub fn r0(&self) -> f64 {
        self.bias0 + self.var0
    }

    /// δ_{r,2} = bias2 + var2.
    pub fn r2(&self) -> f64 {
        self.bias2 + self.var2
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.bias0, self.bias2, self.var0, self.var2];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(invalid(format!("delta components must be finite and nonnegative: {self:?}")))
        }
    }
}

/// Declared constants of the averaged field G̃(x) = E[G(x, a)]:
/// dissipativity (m̃, b̃), |G̃(0)| and ω_G̃(1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConstants {
    pub m: f64,
    pub b: f64,
    pub grad_at_zero: f64,
    pub omega_one: f64,
}

impl FieldConstants {
    pub fn mnorm(&self) -> f64 {
        self.grad_at_zero + self.omega_one
    }
}

/// A user-supplied stochastic gradient G(x, a).
pub trait StochasticGradient: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn sample_into(&self, x: &[f64], streams: &mut ChainStreams, out: &mut [f64]);
}

#[derive(Clone, Debug)]
pub enum GradientOracle {
    /// G = ∇U. `radius` is the mollification radius used only in the analysis.
    Exact { potential: PotentialSpec, radius: f64 },
    /// G(x) = N_B⁻¹ Σ_j ∇U(x + rζ_j).
    SphericalSmoothed {
        potential: PotentialSpec,
        smoother: Mollifier,
        n_batch: usize,
    },
    /// G(x) = (N/N_B) Σ_j ∇U_{λ_j}(x + rζ_j).
    FiniteSumSpherical {
        sum: FiniteSumPotential,
        smoother: Mollifier,
        n_batch: usize,
    },
    /// G(x) = (N/N_B) Σ_j ∇U_{λ_j}(x), with declared variance coefficients.
    FiniteSumMinibatch {
        sum: FiniteSumPotential,
        n_batch: usize,
        radius: f64,
        var0: f64,
        var2: f64,
    },
    Custom {
        oracle: Arc<dyn StochasticGradient>,
        target: PotentialSpec,
        delta: Delta,
        field: FieldConstants,
    },
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("radius {r} not in (0, 1]")))
    }
}

fn check_batch(n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(invalid("n_batch must be at least 1"))
    }
}

impl GradientOracle {
    pub fn exact(potential: PotentialSpec, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Self::Exact { potential, radius })
    }

    pub fn smoothed(potential: PotentialSpec, r: f64, n_batch: usize) -> Result<Self> {
        check_batch(n_batch)?;
        let smoother = Mollifier::new(potential.dim(), r)?;
        Ok(Self::SphericalSmoothed {
            potential,
            smoother,
            n_batch,
        })
    }

    pub fn finite_sum_smoothed(sum: FiniteSumPotential, r: f64, n_batch: usize) -> Result<Self> {
        check_batch(n_batch)?;
        let smoother = Mollifier::new(sum.dim(), r)?;
        Ok(Self::FiniteSumSpherical { sum, smoother, n_batch })
    }

    pub fn minibatch(sum: FiniteSumPotential, n_batch: usize, radius: f64, var0: f64, var2: f64) -> Result<Self> {
        check_batch(n_batch)?;
        check_radius(radius)?;
        Delta {
            bias0: 0.0,
            bias2: 0.0,
            var0,
            var2,
        }
        .validate()?;
        Ok(Self::FiniteSumMinibatch {
            sum,
            n_batch,
            radius,
            var0,
            var2,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Exact { potential, .. } | Self::SphericalSmoothed { potential, .. } => potential.dim(),
            Self::FiniteSumSpherical { sum, .. } | Self::FiniteSumMinibatch { sum, .. } => sum.dim(),
            Self::Custom { oracle, .. } => oracle.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Exact { .. } => "exact",
            Self::SphericalSmoothed { .. } => "spherical_smoothed",
            Self::FiniteSumSpherical { .. } => "finite_sum_spherical",
            Self::FiniteSumMinibatch { .. } => "finite_sum_minibatch",
            Self::Custom { .. } => "custom",
        }
    }

    /// The mollification radius r the analysis refers to.
    pub fn radius(&self) -> Option<f64> {
        match self {
            Self::Exact { radius, .. } | Self::FiniteSumMinibatch { radius, .. } => Some(*radius),
            Self::SphericalSmoothed { smoother, .. } | Self::FiniteSumSpherical { smoother, .. } => Some(smoother.radius()),
            Self::Custom { .. } => None,
        }
    }

    /// The potential U whose Gibbs measure is targeted.
    pub fn target(&self) -> PotentialSpec {
        match self {
            Self::Exact { potential, .. } | Self::SphericalSmoothed { potential, .. } => potential.clone(),
            Self::FiniteSumSpherical { sum, .. } | Self::FiniteSumMinibatch { sum, .. } => sum.to_spec(),
            Self::Custom { target, .. } => target.clone(),
        }
    }

    fn modulus_at(&self, r: f64) -> Result<f64> {
        let target = self.target();
        let modulus = target
            .modulus
            .as_ref()
            .ok_or_else(|| Error::Precondition(format!("potential `{}` has no finite gradient modulus", target.name)))?;
        modulus.eval(r)
    }

    /// The (δ_{b,r,0}, δ_{b,r,2}, δ_{v,0}, δ_{v,2}) quadruple of this oracle.
    pub fn delta(&self) -> Result<Delta> {
        Ok(match self {
            Self::Exact { radius, .. } => Delta {
                bias0: 0.5 * self.modulus_at(*radius)?.powi(2),
                ..Delta::default()
            },
            Self::SphericalSmoothed { smoother, n_batch, .. } | Self::FiniteSumSpherical { smoother, n_batch, .. } => Delta {
                var0: self.modulus_at(smoother.radius())?.powi(2) / (2.0 * *n_batch as f64),
                ..Delta::default()
            },
            Self::FiniteSumMinibatch { radius, var0, var2, .. } => Delta {
                bias0: 0.5 * self.modulus_at(*radius)?.powi(2),
                bias2: 0.0,
                var0: *var0,
                var2: *var2,
            },
            Self::Custom { delta, .. } => *delta,
        })
    }

    /// Constants of G̃. Exact and mini-batch oracles average to ∇U itself.
    /// Smoothed oracles average to ∇Ū_r, which is (m/2, b + m)-dissipative,
    /// satisfies |∇Ū_r(0)| ≤ |∇U(0)| + ω(r) and inherits the modulus of ∇U.
    pub fn averaged_field(&self) -> Result<FieldConstants> {
        let target = self.target();
        let omega_one = match &self {
            Self::Custom { field, .. } => return Ok(*field),
            _ => self.modulus_at(1.0)?,
        };
        let (m, b) = (target.dissipativity.m, target.dissipativity.b);
        Ok(match self {
            Self::SphericalSmoothed { smoother, .. } | Self::FiniteSumSpherical { smoother, .. } => FieldConstants {
                m: 0.5 * m,
                b: b + m,
                grad_at_zero: target.grad_at_zero + self.modulus_at(smoother.radius())?,
                omega_one,
            },
            _ => FieldConstants {
                m,
                b,
                grad_at_zero: target.grad_at_zero,
                omega_one,
            },
        })
    }

    /// One draw of G(x, a) into `out`.
    pub fn sample_into(&self, x: &[f64], streams: &mut ChainStreams, scratch: &mut Scratch, out: &mut [f64]) {
        match self {
            Self::Exact { potential, .. } => potential.grad_into(x, out),
            Self::SphericalSmoothed {
                potential,
                smoother,
                n_batch,
            } => {
                out.fill(0.0);
                for _ in 0..*n_batch {
                    scratch.shift(x, smoother, &mut streams.smoothing);
                    potential.grad_into(&scratch.point, &mut scratch.grad);
                    add_assign(out, &scratch.grad);
                }
                scale(out, 1.0 / *n_batch as f64);
            }
            Self::FiniteSumSpherical { sum, smoother, n_batch } => {
                out.fill(0.0);
                for _ in 0..*n_batch {
                    let i = streams.index.random_range(0..sum.len());
                    scratch.shift(x, smoother, &mut streams.smoothing);
                    sum.component(i).grad_into(&scratch.point, &mut scratch.grad);
                    add_assign(out, &scratch.grad);
                }
                scale(out, sum.len() as f64 / *n_batch as f64);
            }
            Self::FiniteSumMinibatch { sum, n_batch, .. } => {
                out.fill(0.0);
                for _ in 0..*n_batch {
                    let i = streams.index.random_range(0..sum.len());
                    sum.component(i).grad_into(x, &mut scratch.grad);
                    add_assign(out, &scratch.grad);
                }
                scale(out, sum.len() as f64 / *n_batch as f64);
            }
            Self::Custom { oracle, .. } => oracle.sample_into(x, streams, out),
        }
    }
}

fn add_assign(out: &mut [f64], v: &[f64]) {
    out.iter_mut().zip(v).for_each(|(o, v)| *o += v);
}

fn scale(out: &mut [f64], c: f64) {
    out.iter_mut().for_each(|o| *o *= c);
}

/// Work buffers reused across gradient draws.
#[derive(Clone, Debug)]
pub struct Scratch {
    point: Vec<f64>,
    zeta: Vec<f64>,
    grad: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Self {
            point: vec![0.0; dim],
            zeta: vec![0.0; dim],
            grad: vec![0.0; dim],
        }
    }

    fn shift(&mut self, x: &[f64], smoother: &Mollifier, rng: &mut StreamRng) {
        smoother.sample_into(rng, &mut self.zeta);
        for ((p, a), z) in self.point.iter_mut().zip(x).zip(&self.zeta) {
            *p = a + z;
        }
    }
}

/// One draw of the spherically smoothed gradient at `x`.
pub fn ss_gradient(oracle: &GradientOracle, x: &[f64], streams: &mut ChainStreams) -> Result<Vec<f64>> {
    match oracle {
        GradientOracle::SphericalSmoothed { .. } | GradientOracle::FiniteSumSpherical { .. } => {}
        other => return Err(invalid(format!("{} oracle is not spherically smoothed", other.kind()))),
    }
    check_dim(oracle.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    oracle.sample_into(x, streams, &mut Scratch::new(x.len()), &mut out);
    Ok(out)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

fn diverged(y: &[f64]) -> bool {
    let mut s = 0.0;
    for v in y {
        if !v.is_finite() {
            return true;
        }
        s += v * v;
    }
    s > DIVERGENCE_RADIUS * DIVERGENCE_RADIUS
}

/// y ← y − ηg + √(2η/β)z in place, z drawn from `rng`.
pub fn step_in_place(y: &mut [f64], g: &[f64], eta: f64, beta: f64, rng: &mut StreamRng) {
    let sigma = (2.0 * eta / beta).sqrt();
    for (yi, gi) in y.iter_mut().zip(g) {
        let z: f64 = rng.sample(StandardNormal);
        *yi += -eta * gi + sigma * z;
    }
}

/// A single transition from `y` with gradient `g`. A non-finite or runaway
/// result is reported as divergence at step 1.
pub fn step(y: &[f64], g: &[f64], cfg: &ChainConfig, rng: &mut StreamRng) -> Result<Vec<f64>> {
    check_dim(y.len(), g.len())?;
    if y.iter().chain(g).any(|v| !v.is_finite()) {
        return Err(invalid("step inputs must be finite"));
    }
    let mut out = y.to_vec();
    step_in_place(&mut out, g, cfg.eta, cfg.beta, rng);
    if diverged(&out) {
        return Err(Error::Divergence { step: 1 });
    }
    Ok(out)
}

/// A running chain. Each call to [`Chain::advance`] performs one transition.
pub struct Chain<'a> {
    oracle: &'a GradientOracle,
    eta: f64,
    beta: f64,
    streams: ChainStreams,
    y: Vec<f64>,
    g: Vec<f64>,
    scratch: Scratch,
    step: u64,
}

impl<'a> Chain<'a> {
    pub fn new(oracle: &'a GradientOracle, cfg: &ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = oracle.dim();
        let mut streams = ChainStreams::new(cfg.seed);
        let mut y = vec![0.0; dim];
        cfg.init.sample_into(&mut streams.noise, &mut y)?;
        Ok(Self {
            oracle,
            eta: cfg.eta,
            beta: cfg.beta,
            streams,
            y,
            g: vec![0.0; dim],
            scratch: Scratch::new(dim),
            step: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn advance(&mut self) -> Result<&[f64]> {
        self.oracle
            .sample_into(&self.y, &mut self.streams, &mut self.scratch, &mut self.g);
        step_in_place(&mut self.y, &self.g, self.eta, self.beta, &mut self.streams.noise);
        self.step += 1;
        if diverged(&self.y) {
            return Err(Error::Divergence { step: self.step });
        }
        Ok(&self.y)
    }
}

/// Runs `cfg.k` steps, calling `visit(step, y)` for the initial point and
/// every `cfg.thin`-th iterate.
pub fn run_with(oracle: &GradientOracle, cfg: &ChainConfig, mut visit: impl FnMut(u64, &[f64])) -> Result<()> {
    let mut chain = Chain::new(oracle, cfg)?;
    visit(0, chain.state());
    for i in 1..=cfg.k {
        let y = chain.advance()?;
        if i % cfg.thin == 0 {
            visit(i, y);
        }
    }
    Ok(())
}

/// Recorded iterates of one chain.
#[derive(Clone, Debug)]
pub struct Trace {
    dim: usize,
    steps: Vec<u64>,
    points: Vec<f64>,
    pub config: ChainConfig,
    pub elapsed: Duration,
    /// Step at which the chain left the finite region, if it did.
    pub diverged_at: Option<u64>,
}

impl Trace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.points.chunks_exact(self.dim).last()
    }

    /// Writes the CSV trace: optional `#` comment lines, a `step,x0,..` header
    /// and one row per recorded iterate with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        writeln!(w, "step,{}", header.join(","))?;
        for (s, p) in self.steps.iter().zip(self.points()) {
            write!(w, "{s}")?;
            for v in p {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        if let Some(step) = self.diverged_at {
            writeln!(w, "# diverged_at_step={step}")?;
        }
        Ok(())
    }
}

/// Runs the chain and keeps the partial trace if it diverges. Errors other
/// than divergence (bad configuration) are returned directly.
pub fn run_partial(oracle: &GradientOracle, cfg: &ChainConfig) -> Result<Trace> {
    let dim = oracle.dim();
    let start = Instant::now();
    let capacity = (cfg.k / cfg.thin.max(1)).saturating_add(1).min(1 << 24) as usize;
    let mut steps = Vec::with_capacity(capacity);
    let mut points = Vec::with_capacity(capacity * dim);
    let result = run_with(oracle, cfg, |s, y| {
        steps.push(s);
        points.extend_from_slice(y);
    });
    let diverged_at = match result {
        Ok(()) => None,
        Err(Error::Divergence { step }) => Some(step),
        Err(e) => return Err(e),
    };
    Ok(Trace {
        dim,
        steps,
        points,
        config: cfg.clone(),
        elapsed: start.elapsed(),
        diverged_at,
    })
}

/// Runs the chain; divergence is an error.
pub fn run(oracle: &GradientOracle, cfg: &ChainConfig) -> Result<Trace> {
    let trace = run_partial(oracle, cfg)?;
    match trace.diverged_at {
        Some(step) => Err(Error::Divergence { step }),
        None => Ok(trace),
    }
}

/// How independent replicas are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// `f(0), .., f(n-1)` in index order. Parallel execution uses the current
/// rayon pool when the `parallel` feature is enabled and falls back to a
/// plain loop otherwise.
pub fn map_replicas<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Config of replica `index`: the seed becomes `replica_seed(cfg.seed, index)`.
pub fn replica_config(cfg: &ChainConfig, index: usize) -> ChainConfig {
    cfg.clone().with_seed(replica_seed(cfg.seed, index as u64))
}

/// Runs `n` independent replicas, keeping partial traces of diverged ones.
pub fn run_replicas(oracle: &GradientOracle, cfg: &ChainConfig, n: usize, exec: Execution) -> Result<Vec<Trace>> {
    map_replicas(n, exec, |i| run_partial(oracle, &replica_config(cfg, i)))
        .into_iter()
        .collect()
}
