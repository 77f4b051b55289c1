//! Potentials U with their declared dissipativity, gradient modulus and the
//! scalar constants (|∇U(0)|, ‖U‖_{L∞(B₁)}) that feed the error bounds.

use std::collections::BTreeMap;
const LN_3: f64 = 1.098_612_288_668_109_8;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::continuity::{MNorm, Modulus};
use crate::error::{invalid, Error, Result};
use crate::mollifier::unit_sphere_into;
use crate::rng::stream;

/// Largest value of |σ''(t)| for the logistic sigmoid σ, 1/(6√3).
pub const SIGMOID_CURVATURE: f64 = 0.096_225_044_864_937_64;
/// Upper bound on sup_t t σ(t) σ(−t) ≈ 0.2238716.
pub const SIGMOID_DRIFT: f64 = 0.223_88;

/// A potential function with a representative weak gradient.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad_into(&self, x: &[f64], out: &mut [f64]);
}

/// Constants (m, b) with ⟨x, ∇U(x)⟩ ≥ m|x|² − b.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dissipativity {
    pub m: f64,
    pub b: f64,
}

/// A potential together with everything the bounds need to know about it.
#[derive(Clone)]
pub struct PotentialSpec {
    pub name: String,
    potential: Arc<dyn Potential>,
    pub dissipativity: Dissipativity,
    /// Declared modulus of ∇U; `None` when ∇U has no finite modulus.
    pub modulus: Option<Modulus>,
    /// |∇U(0)|.
    pub grad_at_zero: f64,
    /// ‖U‖_{L∞(B₁(0))}, or a declared upper bound on it.
    pub u0: f64,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("dissipativity", &self.dissipativity)
            .field("modulus", &self.modulus)
            .field("grad_at_zero", &self.grad_at_zero)
            .field("u0", &self.u0)
            .finish()
    }
}

impl PotentialSpec {
    pub fn new(
        name: impl Into<String>,
        potential: Arc<dyn Potential>,
        dissipativity: Dissipativity,
        modulus: Option<Modulus>,
        grad_at_zero: f64,
        u0: f64,
    ) -> Self {
        Self {
            name: name.into(),
            potential,
            dissipativity,
            modulus,
            grad_at_zero,
            u0,
        }
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.potential.value(x)
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.potential.grad_into(x, out)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(x, &mut g);
        g
    }

    pub fn potential(&self) -> &Arc<dyn Potential> {
        &self.potential
    }

    /// ‖∇U‖_𝕄 split into its two parts.
    pub fn mnorm(&self) -> Option<MNorm> {
        self.modulus
            .as_ref()
            .map(|m| MNorm::new(self.grad_at_zero, m.at_one()))
    }

    /// A copy with different declared constants, e.g. to test that a
    /// falsified declaration is caught.
    pub fn with_dissipativity(mut self, d: Dissipativity) -> Self {
        self.dissipativity = d;
        self
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["quadratic", "double_well", "hoelder_mix", "elastic_net_logistic"];
/// Names accepted by [`builtin_finite_sum`].
pub const FINITE_SUM_NAMES: [&str; 2] = ["quadratic_sum", "logistic_sum"];

pub type Params = BTreeMap<String, f64>;

struct ParamReader<'a> {
    name: &'a str,
    params: &'a Params,
    used: Vec<&'static str>,
}

impl<'a> ParamReader<'a> {
    fn new(name: &'a str, params: &'a Params) -> Self {
        Self {
            name,
            params,
            used: Vec::new(),
        }
    }

    fn get(&mut self, key: &'static str, default: f64) -> f64 {
        self.used.push(key);
        self.params.get(key).copied().unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        match self.params.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(invalid(format!("unknown parameter `{k}` for potential `{}`", self.name))),
            None => Ok(()),
        }
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// U(x) = |x|²/2.
#[derive(Debug)]
pub struct Quadratic {
    pub dim: usize,
}

impl Potential for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * norm_sq(x)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// U(x) = (|x|² − c)²/4 + |x|²/2.
#[derive(Debug)]
pub struct DoubleWell {
    pub dim: usize,
    pub c: f64,
}

impl Potential for DoubleWell {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        let s = norm_sq(x);
        0.25 * (s - self.c).powi(2) + 0.5 * s
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let f = norm_sq(x) - self.c + 1.0;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = f * xi;
        }
    }
}

/// U(x) = |x|²/2 + Σ |x_i|^{1+α}/(1+α).
#[derive(Debug)]
pub struct HoelderMix {
    pub dim: usize,
    pub alpha: f64,
}

impl Potential for HoelderMix {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        let p = 1.0 + self.alpha;
        0.5 * norm_sq(x) + x.iter().map(|v| v.abs().powf(p)).sum::<f64>() / p
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = xi + sign(xi) * xi.abs().powf(self.alpha);
        }
    }
}

/// U(x) = Σ σ(c − x_i) + λ₁|x|₁ + λ₂|x|²/2: a non-convex sigmoid loss with
/// elastic-net regularization. The weak gradient uses sign(0) = 0.
#[derive(Debug)]
pub struct ElasticNetLogistic {
    pub dim: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub shift: f64,
}

impl Potential for ElasticNetLogistic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|&t| sigmoid(self.shift - t) + self.lambda1 * t.abs() + 0.5 * self.lambda2 * t * t)
            .sum()
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(x) {
            let s = sigmoid(t - self.shift);
            *o = -s * (1.0 - s) + self.lambda1 * sign(t) + self.lambda2 * t;
        }
    }
}

/// A built-in potential by name.
pub fn builtin(name: &str, dim: usize, params: &Params) -> Result<PotentialSpec> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let mut p = ParamReader::new(name, params);
    let d = dim as f64;
    let spec = match name {
        "quadratic" => PotentialSpec::new(
            name,
            Arc::new(Quadratic { dim }),
            Dissipativity { m: 1.0, b: 0.0 },
            Some(Modulus::lipschitz(1.0)?),
            0.0,
            0.5,
        ),
        "double_well" => {
            let c = p.get("c", 1.0);
            if !c.is_finite() {
                return Err(invalid("double_well: c must be finite"));
            }
            // ⟨x,∇U⟩ = |x|⁴ − (c − 1)|x|² ≥ |x|² − c²/4 (minimize t² − ct, t = |x|²)
            let b = if c > 0.0 { c * c / 4.0 } else { 0.0 };
            // U on B₁ is convex in s = |x|² ∈ [0, 1]: maximal at an endpoint.
            let u0 = (c * c / 4.0).max(0.25 * (1.0 - c).powi(2) + 0.5);
            PotentialSpec::new(
                name,
                Arc::new(DoubleWell { dim, c }),
                Dissipativity { m: 1.0, b },
                // ∇U grows cubically: no finite modulus.
                None,
                0.0,
                u0,
            )
        }
        "hoelder_mix" => {
            let alpha = p.get("alpha", 0.5);
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(invalid(format!("hoelder_mix: alpha {alpha} not in (0, 1]")));
            }
            // t ↦ sign(t)|t|^α is α-Hölder with constant 2^{1−α}; summing
            // coordinates costs d^{(1−α)/2} by the power-mean inequality.
            let m_const = 1.0 + 2f64.powf(1.0 - alpha) * d.powf(0.5 * (1.0 - alpha));
            // Σ|x_i|^{1+α} on the unit ball peaks at equal coordinates.
            let u0 = 0.5 + d.powf(0.5 * (1.0 - alpha)) / (1.0 + alpha);
            PotentialSpec::new(
                name,
                Arc::new(HoelderMix { dim, alpha }),
                Dissipativity { m: 1.0, b: 0.0 },
                Some(Modulus::hoelder(m_const, alpha)?),
                0.0,
                u0,
            )
        }
        "elastic_net_logistic" => {
            let lambda1 = p.get("lambda1", 0.1);
            let lambda2 = p.get("lambda2", 1.0);
            let shift = p.get("shift", 1.0);
            if !(lambda1 >= 0.0 && lambda2 > 0.0 && shift.is_finite()) {
                return Err(invalid("elastic_net_logistic: need lambda1 >= 0, lambda2 > 0"));
            }
            let b1 = elastic_net_drift_deficit(lambda1, shift);
            let slope = SIGMOID_CURVATURE + lambda2;
            let jump = 2.0 * lambda1 * d.sqrt();
            let modulus = affine_modulus(slope, jump)?;
            let s0 = sigmoid(-shift);
            PotentialSpec::new(
                name,
                Arc::new(ElasticNetLogistic {
                    dim,
                    lambda1,
                    lambda2,
                    shift,
                }),
                Dissipativity { m: lambda2, b: d * b1 },
                Some(modulus),
                d.sqrt() * s0 * (1.0 - s0),
                // upper bound: each sigmoid ≤ σ(c + 1) on B₁, |x|₁ ≤ √d
                d * sigmoid(shift + 1.0) + lambda1 * d.sqrt() + 0.5 * lambda2,
            )
        }
        other => return Err(Error::UnknownPotential(other.to_string())),
    };
    p.finish()?;
    Ok(spec)
}

/// ω(r) = slope·r + jump as a tabulated modulus. Linear interpolation is exact
/// between the knots and the first knot value dominates below it.
fn affine_modulus(slope: f64, jump: f64) -> Result<Modulus> {
    let lo = 1e-9;
    Modulus::table(vec![(lo, slope * lo + jump), (1.0, slope + jump)])
}

/// max(0, sup_t [t σ(t − c) σ(c − t) − λ₁|t|]) on a grid of step 1e−3 over
/// [−60, 60], plus 1e−6 to cover the grid resolution.
fn elastic_net_drift_deficit(lambda1: f64, shift: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let n = 120_000;
    for i in 0..=n {
        let t = -60.0 + 120.0 * i as f64 / n as f64;
        let s = sigmoid(t - shift);
        worst = worst.max(t * s * (1.0 - s) - lambda1 * t.abs());
    }
    if worst > 0.0 {
        worst + 1e-6
    } else {
        0.0
    }
}

/// U = Σ_{i=1}^N U_i with per-component gradient moduli ω̂/N.
#[derive(Clone)]
pub struct FiniteSumPotential {
    pub name: String,
    dim: usize,
    components: Vec<Arc<dyn Potential>>,
    pub dissipativity: Dissipativity,
    /// ω̂: N·ω_{∇U_i} ≤ ω̂ for every component.
    pub omega_hat: Modulus,
    pub grad_at_zero: f64,
    pub u0: f64,
}

impl fmt::Debug for FiniteSumPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteSumPotential")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("n", &self.components.len())
            .field("dissipativity", &self.dissipativity)
            .field("omega_hat", &self.omega_hat)
            .finish()
    }
}

#[derive(Debug)]
struct SumOf(Vec<Arc<dyn Potential>>, usize);

impl Potential for SumOf {
    fn dim(&self) -> usize {
        self.1
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|c| c.value(x)).sum()
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut g = vec![0.0; self.1];
        for c in &self.0 {
            c.grad_into(x, &mut g);
            out.iter_mut().zip(&g).for_each(|(o, v)| *o += v);
        }
    }
}

impl FiniteSumPotential {
    pub fn new(
        name: impl Into<String>,
        components: Vec<Arc<dyn Potential>>,
        dissipativity: Dissipativity,
        omega_hat: Modulus,
        grad_at_zero: f64,
        u0: f64,
    ) -> Result<Self> {
        let dim = components
            .first()
            .ok_or_else(|| invalid("finite sum needs at least one component"))?
            .dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        Ok(Self {
            name: name.into(),
            dim,
            components,
            dissipativity,
            omega_hat,
            grad_at_zero,
            u0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, i: usize) -> &Arc<dyn Potential> {
        &self.components[i]
    }

    /// The sum as a single potential. Its gradient modulus is bounded by ω̂.
    pub fn to_spec(&self) -> PotentialSpec {
        PotentialSpec::new(
            self.name.clone(),
            Arc::new(SumOf(self.components.clone(), self.dim)),
            self.dissipativity,
            Some(self.omega_hat.clone()),
            self.grad_at_zero,
            self.u0,
        )
    }
}

/// U_i(x) = |x − a_i|²/(2N).
#[derive(Debug)]
struct ShiftedQuadratic {
    center: Vec<f64>,
    scale: f64,
}

impl Potential for ShiftedQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.scale * x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(&self.center) {
            *o = self.scale * (a - b);
        }
    }
}

/// U_i(x) = σ(−y_i⟨a_i, x⟩) + (λ₁|x|₁ + λ₂|x|²/2)/N.
#[derive(Debug)]
struct LogisticTerm {
    feature: Vec<f64>,
    label: f64,
    lambda1: f64,
    lambda2: f64,
    inv_n: f64,
}

impl Potential for LogisticTerm {
    fn dim(&self) -> usize {
        self.feature.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let t = self.label * dot(&self.feature, x);
        let reg: f64 = x.iter().map(|v| self.lambda1 * v.abs() + 0.5 * self.lambda2 * v * v).sum();
        sigmoid(-t) + self.inv_n * reg
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let t = self.label * dot(&self.feature, x);
        let s = sigmoid(t);
        let c = -s * (1.0 - s) * self.label;
        for ((o, a), v) in out.iter_mut().zip(&self.feature).zip(x) {
            *o = c * a + self.inv_n * (self.lambda1 * sign(*v) + self.lambda2 * v);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A built-in finite-sum potential. Synthetic data come from `data_seed`.
pub fn builtin_finite_sum(name: &str, dim: usize, params: &Params) -> Result<FiniteSumPotential> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let mut p = ParamReader::new(name, params);
    let n_f = p.get("n", 16.0);
    if !(n_f >= 1.0 && n_f.fract() == 0.0 && n_f <= 1e7) {
        return Err(invalid(format!("{name}: n must be a positive integer")));
    }
    let n = n_f as usize;
    let seed = p.get("data_seed", 0.0) as u64;
    let mut rng = stream(seed, 7);
    let d = dim as f64;
    let out = match name {
        "quadratic_sum" => {
            let spread = p.get("spread", 1.0);
            let centers: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            let mean: Vec<f64> = (0..dim)
                .map(|j| centers.iter().map(|c| c[j]).sum::<f64>() / n_f)
                .collect();
            let mean_norm = norm_sq(&mean).sqrt();
            let second: f64 = centers.iter().map(|c| norm_sq(c)).sum::<f64>() / (2.0 * n_f);
            let comps: Vec<Arc<dyn Potential>> = centers
                .into_iter()
                .map(|center| Arc::new(ShiftedQuadratic { center, scale: 1.0 / n_f }) as Arc<dyn Potential>)
                .collect();
            // ⟨x, x − ā⟩ ≥ |x|²/2 − |ā|²/2
            FiniteSumPotential::new(
                name,
                comps,
                Dissipativity {
                    m: 0.5,
                    b: 0.5 * mean_norm * mean_norm,
                },
                Modulus::lipschitz(1.0)?,
                mean_norm,
                0.5 + mean_norm + second,
            )?
        }
        "logistic_sum" => {
            let lambda1 = p.get("lambda1", 0.1);
            let lambda2 = p.get("lambda2", 1.0);
            if !(lambda1 >= 0.0 && lambda2 > 0.0) {
                return Err(invalid("logistic_sum: need lambda1 >= 0, lambda2 > 0"));
            }
            let scale = 1.0 / d.sqrt();
            let mut max_sq: f64 = 0.0;
            let mut grad0 = vec![0.0; dim];
            let mut u0 = lambda1 * d.sqrt() + 0.5 * lambda2;
            let mut comps: Vec<Arc<dyn Potential>> = Vec::with_capacity(n);
            for _ in 0..n {
                let feature: Vec<f64> = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let fsq = norm_sq(&feature);
                max_sq = max_sq.max(fsq);
                u0 += sigmoid(fsq.sqrt());
                grad0.iter_mut().zip(&feature).for_each(|(g, a)| *g -= 0.25 * label * a);
                comps.push(Arc::new(LogisticTerm {
                    feature,
                    label,
                    lambda1,
                    lambda2,
                    inv_n: 1.0 / n_f,
                }));
            }
            let omega_hat = affine_modulus(n_f * SIGMOID_CURVATURE * max_sq + lambda2, 2.0 * lambda1 * d.sqrt())?;
            FiniteSumPotential::new(
                name,
                comps,
                Dissipativity {
                    m: lambda2,
                    b: n_f * SIGMOID_DRIFT,
                },
                omega_hat,
                norm_sq(&grad0).sqrt(),
                u0,
            )?
        }
        other => return Err(Error::UnknownPotential(other.to_string())),
    };
    p.finish()?;
    Ok(out)
}

/// Outcome of one sampled check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Smallest observed slack (bound minus observed); negative means violated.
    pub worst_margin: f64,
    pub worst_at: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub potential: String,
    pub checks: Vec<Check>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Worst {
    name: &'static str,
    margin: f64,
    at: Vec<f64>,
}

impl Worst {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            margin: f64::INFINITY,
            at: Vec::new(),
        }
    }

    /// Record `bound - observed`, scaled-tolerant.
    fn record(&mut self, bound: f64, observed: f64, x: &[f64]) {
        let margin = bound - observed;
        let tol = 1e-9 * (1.0 + bound.abs().max(observed.abs()));
        let adjusted = if margin < 0.0 && margin > -tol { 0.0 } else { margin };
        if adjusted < self.margin || adjusted.is_nan() {
            self.margin = adjusted;
            self.at = x.to_vec();
        }
    }

    fn finish(self) -> Check {
        Check {
            name: self.name.to_string(),
            passed: self.margin >= 0.0,
            worst_margin: self.margin,
            worst_at: self.at,
            note: None,
        }
    }
}

/// Points x with |x| on a log grid over [1e−3, 1e2] and uniform directions.
fn radial_points<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 1.0 };
            let radius = 10f64.powf(-3.0 + 5.0 * t);
            let mut x = vec![0.0; dim];
            unit_sphere_into(rng, &mut x);
            x.iter_mut().for_each(|v| *v *= radius);
            x
        })
        .collect()
}

/// Spot-checks the declared constants of `p` at sampled points and pairs.
pub fn check_assumptions<R: Rng + ?Sized>(p: &PotentialSpec, n_samples: usize, rng: &mut R) -> Result<AssumptionReport> {
    if n_samples == 0 {
        return Err(invalid("n_samples must be at least 1"));
    }
    let dim = p.dim();
    let Dissipativity { m, b } = p.dissipativity;
    let points = radial_points(dim, n_samples, rng);
    let mut nonneg = Worst::new("nonnegativity");
    let mut dissip = Worst::new("dissipativity");
    let mut lower = Worst::new("quadratic_lower_bound");
    let mut g = vec![0.0; dim];
    for x in &points {
        let u = p.value(x);
        let r2 = norm_sq(x);
        p.grad_into(x, &mut g);
        nonneg.record(u, 0.0, x);
        dissip.record(dot(x, &g), m * r2 - b, x);
        lower.record(u, m / 3.0 * r2 - 0.5 * b * LN_3, x);
    }

    let mut grad0 = Worst::new("grad_at_zero");
    let zero = vec![0.0; dim];
    p.grad_into(&zero, &mut g);
    grad0.record(p.grad_at_zero, norm_sq(&g).sqrt(), &zero);

    let mut sup_ball = Worst::new("sup_unit_ball");
    for _ in 0..n_samples {
        let mut x = vec![0.0; dim];
        unit_sphere_into(rng, &mut x);
        let radius = rng.random::<f64>().powf(1.0 / dim as f64);
        x.iter_mut().for_each(|v| *v *= radius);
        sup_ball.record(p.u0, p.value(&x), &x);
    }

    let mut checks = vec![nonneg.finish(), dissip.finish(), lower.finish(), grad0.finish(), sup_ball.finish()];
    checks.push(match &p.modulus {
        Some(modulus) => modulus_check(dim, n_samples, rng, modulus, 1.0, |x, out| p.grad_into(x, out))?,
        None => Check {
            name: "gradient_modulus".into(),
            passed: false,
            worst_margin: f64::NEG_INFINITY,
            worst_at: Vec::new(),
            note: Some("no finite modulus declared for the gradient".into()),
        },
    });
    Ok(AssumptionReport {
        potential: p.name.clone(),
        checks,
    })
}

/// Sampled check of |∇(x) − ∇(y)| ≤ scale·ω(|x − y|).
fn modulus_check<R: Rng + ?Sized>(
    dim: usize,
    n: usize,
    rng: &mut R,
    modulus: &Modulus,
    scale: f64,
    grad: impl Fn(&[f64], &mut [f64]),
) -> Result<Check> {
    let mut worst = Worst::new("gradient_modulus");
    let mut gx = vec![0.0; dim];
    let mut gy = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let xs = radial_points(dim, n, rng);
    for x in &xs {
        // pair distance log-uniform in [1e−4, 10]
        let dist = 10f64.powf(-4.0 + 5.0 * rng.random::<f64>());
        unit_sphere_into(rng, &mut dir);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + dist * u).collect();
        let actual = norm_sq(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
        grad(x, &mut gx);
        grad(&y, &mut gy);
        let diff = norm_sq(&gx.iter().zip(&gy).map(|(a, b)| a - b).collect::<Vec<_>>()).sqrt();
        worst.record(scale * modulus.eval(actual)?, diff, x);
    }
    Ok(worst.finish())
}

/// Spot-checks a finite sum: dissipativity of Σ∇U_i and the per-component
/// gradient modulus bound ω̂/N.
pub fn check_finite_sum<R: Rng + ?Sized>(f: &FiniteSumPotential, n_samples: usize, rng: &mut R) -> Result<AssumptionReport> {
    let mut report = check_assumptions(&f.to_spec(), n_samples, rng)?;
    let scale = 1.0 / f.len() as f64;
    for i in 0..f.len().min(8) {
        let comp = f.component(i).clone();
        let mut c = modulus_check(f.dim(), n_samples.div_ceil(4), rng, &f.omega_hat, scale, |x, out| {
            comp.grad_into(x, out)
        })?;
        c.name = format!("component_{i}_modulus");
        report.checks.push(c);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> Params {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn fd_grad(p: &PotentialSpec, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (p.value(&a) - p.value(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn quadratic_gradient_and_dissipativity() {
        let p = builtin("quadratic", 2, &Params::new()).unwrap();
        assert_eq!(p.grad(&[1.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(p.dissipativity, Dissipativity { m: 1.0, b: 0.0 });
        assert_eq!(p.u0, 0.5);
    }

    #[test]
    fn unknown_names_and_params() {
        assert!(matches!(builtin("nope", 1, &Params::new()), Err(Error::UnknownPotential(_))));
        assert!(builtin("hoelder_mix", 1, &params(&[("alpha", 0.0)])).is_err());
        assert!(builtin("hoelder_mix", 1, &params(&[("alpha", 1.5)])).is_err());
        assert!(builtin("quadratic", 1, &params(&[("alpha", 0.5)])).is_err());
        assert!(builtin("quadratic", 0, &Params::new()).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream(5, 0);
        let specs = [
            builtin("quadratic", 3, &Params::new()).unwrap(),
            builtin("double_well", 3, &params(&[("c", 2.0)])).unwrap(),
            builtin("hoelder_mix", 3, &params(&[("alpha", 0.5)])).unwrap(),
            builtin("elastic_net_logistic", 3, &Params::new()).unwrap(),
        ];
        for p in &specs {
            let mut checked = 0;
            while checked < 100 {
                let x: Vec<f64> = (0..3).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                if x.iter().any(|v| v.abs() < 1e-3) {
                    continue;
                }
                let g = p.grad(&x);
                let fd = fd_grad(p, &x);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "{} at {x:?}: {a} vs {b}", p.name);
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn hoelder_mix_modulus_on_pairs() {
        let p = builtin("hoelder_mix", 1, &params(&[("alpha", 0.5)])).unwrap();
        let modulus = p.modulus.clone().unwrap();
        let mut rng = stream(9, 0);
        for _ in 0..10_000 {
            let x = 4.0 * (rng.random::<f64>() - 0.5);
            let y = x + 10f64.powf(-5.0 + 6.0 * rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let lhs = (p.grad(&[x])[0] - p.grad(&[y])[0]).abs();
            assert!(lhs <= modulus.eval((x - y).abs()).unwrap() * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn elastic_net_dissipativity_constant() {
        let p = builtin("elastic_net_logistic", 1, &params(&[("lambda2", 1.0)])).unwrap();
        assert_eq!(p.dissipativity.m, 1.0);
        let b = p.dissipativity.b;
        // independent dense grid of ⟨x,∇U⟩ − λ₂x²
        let mut worst = f64::INFINITY;
        for i in 0..=400_000 {
            let x = -40.0 + 80.0 * i as f64 / 400_000.0;
            worst = worst.min(x * p.grad(&[x])[0] - x * x);
        }
        assert!(worst >= -b, "worst {worst} b {b}");
        assert!(b < worst.abs() + 1e-3);
        assert_eq!(p.grad(&[0.0])[0], -sigmoid(-1.0) * sigmoid(1.0));
    }

    #[test]
    fn assumption_checks_on_builtins() {
        for d in [1, 2, 5, 10] {
            let p = builtin("quadratic", d, &Params::new()).unwrap();
            let r = check_assumptions(&p, 2000, &mut stream(d as u64, 0)).unwrap();
            assert!(r.all_passed(), "{r:?}");
        }
        for name in ["hoelder_mix", "elastic_net_logistic"] {
            for d in [1, 3] {
                let p = builtin(name, d, &Params::new()).unwrap();
                let r = check_assumptions(&p, 4000, &mut stream(1, 0)).unwrap();
                assert!(r.all_passed(), "{name} d={d}: {r:?}");
            }
        }
    }

    #[test]
    fn falsified_m_is_caught() {
        let p = builtin("quadratic", 2, &Params::new())
            .unwrap()
            .with_dissipativity(Dissipativity { m: 2.0, b: 0.0 });
        let r = check_assumptions(&p, 500, &mut stream(2, 0)).unwrap();
        assert!(!r.check("dissipativity").unwrap().passed);
    }

    #[test]
    fn double_well_reports_missing_modulus() {
        let p = builtin("double_well", 2, &Params::new()).unwrap();
        let r = check_assumptions(&p, 1000, &mut stream(3, 0)).unwrap();
        assert!(r.check("dissipativity").unwrap().passed);
        assert!(r.check("nonnegativity").unwrap().passed);
        assert!(r.check("quadratic_lower_bound").unwrap().passed);
        assert!(r.check("sup_unit_ball").unwrap().passed);
        assert!(!r.check("gradient_modulus").unwrap().passed);
    }

    #[test]
    fn hoelder_mix_lower_bound_radial() {
        let p = builtin("hoelder_mix", 2, &params(&[("alpha", 0.5)])).unwrap();
        let Dissipativity { m, b } = p.dissipativity;
        for i in 0..=1000 {
            let r = 10.0 * i as f64 / 1000.0;
            let x = [r / 2f64.sqrt(), -r / 2f64.sqrt()];
            assert!(p.value(&x) >= m / 3.0 * r * r - 0.5 * b * LN_3);
        }
    }

    #[test]
    fn finite_sums_pass_checks() {
        for name in FINITE_SUM_NAMES {
            for d in [1, 3] {
                let f = builtin_finite_sum(name, d, &params(&[("n", 10.0)])).unwrap();
                assert_eq!(f.len(), 10);
                let r = check_finite_sum(&f, 2000, &mut stream(4, 0)).unwrap();
                assert!(r.all_passed(), "{name} d={d}: {r:?}");
            }
        }
    }

    #[test]
    fn finite_sum_gradient_is_component_sum() {
        let f = builtin_finite_sum("logistic_sum", 2, &params(&[("n", 5.0)])).unwrap();
        let spec = f.to_spec();
        let x = [0.3, -1.2];
        let mut total = [0.0; 2];
        let mut g = [0.0; 2];
        for i in 0..f.len() {
            f.component(i).grad_into(&x, &mut g);
            total[0] += g[0];
            total[1] += g[1];
        }
        let s = spec.grad(&x);
        assert!((s[0] - total[0]).abs() < 1e-14 && (s[1] - total[1]).abs() < 1e-14);
        let fd = fd_grad(&spec, &x);
        assert!((fd[0] - s[0]).abs() < 1e-5 && (fd[1] - s[1]).abs() < 1e-5);
    }
}
