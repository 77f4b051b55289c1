//! Closed-form schedules (k, η, r, N_B) that drive the concise W₂ envelope
//! below a target ε, and an independent re-check of every inequality.
//!
//! Step counts grow like e^{2Cd}/ε^{16}, so all formulas are evaluated on
//! natural logarithms. A plan whose k does not fit a 53-bit integer is marked
//! astronomical; its η and r are still reported (with their logarithms).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest step count represented exactly: 2^53.
pub const MAX_EXACT_K: f64 = 9_007_199_254_740_992.0;

/// Relative slack allowed when re-checking equalities that hold by construction.
pub const VERIFY_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Lmc,
    SsSgLmc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// α ∈ (1/3, 2/3]
    LowHoelder,
    /// α ∈ (2/3, 1)
    HighHoelder,
    /// α = 1
    Lipschitz,
    SphericalSmoothing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub epsilon: f64,
    pub d: usize,
    /// Hölder exponent of ∇U; required for LMC.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// The constant C ≥ 1 of the concise bound.
    #[serde(default = "one")]
    pub c_const: f64,
    #[serde(default = "one")]
    pub m: f64,
    /// ω_{∇U}(1) for LMC, ω̂(1) for SS-SG-LMC.
    #[serde(default = "one")]
    pub omega_one: f64,
}

fn one() -> f64 {
    1.0
}

impl PlanRequest {
    pub fn new(epsilon: f64, d: usize, c_const: f64) -> Self {
        Self {
            epsilon,
            d,
            alpha: None,
            c_const,
            m: 1.0,
            omega_one: 1.0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid(format!("epsilon {} not in (0, 1]", self.epsilon)));
        }
        if self.d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(self.c_const >= 1.0 && self.c_const.is_finite()) {
            return Err(invalid(format!("C = {} must be at least 1", self.c_const)));
        }
        if !(self.m > 0.0 && self.m.is_finite() && self.omega_one > 0.0 && self.omega_one.is_finite()) {
            return Err(invalid("m and omega_one must be positive"));
        }
        Ok(())
    }

    /// log of 1 ∧ m/(2ω(1)²).
    fn ln_eta_cap(&self) -> f64 {
        (self.m / (2.0 * self.omega_one * self.omega_one)).min(1.0).ln()
    }

    /// log A with A = ε⁴/(48C⁴d²), the per-term budget.
    fn ln_budget(&self) -> f64 {
        4.0 * self.epsilon.ln() - 48f64.ln() - 4.0 * self.c_const.ln() - 2.0 * (self.d as f64).ln()
    }

    /// log log(2Cd/ε).
    fn ln_l(&self) -> f64 {
        (2.0 * self.c_const * self.d as f64 / self.epsilon).ln().ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub algorithm: Algorithm,
    pub branch: Branch,
    /// `None` for astronomical plans.
    pub k: Option<u64>,
    /// log of k (of the lower bound when astronomical).
    pub ln_k: f64,
    pub log10_k: f64,
    pub astronomical: bool,
    pub eta: f64,
    pub ln_eta: f64,
    /// Whether η was cut to 1 ∧ m/(2ω(1)²).
    pub eta_capped: bool,
    /// Underflows to 0 for astronomical plans; `ln_r` keeps the value.
    pub r: Option<f64>,
    pub ln_r: Option<f64>,
    /// `None` for LMC and for batch sizes beyond exact integers.
    pub n_batch: Option<u64>,
    /// log N_B, kept when N_B itself is astronomical.
    pub ln_n_batch: Option<f64>,
    pub predicted_envelope: f64,
}

/// Rounds a log-valued lower bound on k up to an integer, or flags it.
fn round_k(ln_bound: f64) -> (Option<u64>, f64, bool) {
    let bound = ln_bound.exp();
    if bound <= 1.0 {
        (Some(1), 0.0, false)
    } else if bound.ceil() <= MAX_EXACT_K {
        let k = bound.ceil();
        (Some(k as u64), k.ln(), false)
    } else {
        (None, ln_bound, true)
    }
}

/// log of the Hölder-branch lower bound
/// d²(Cd³e^{Cd}L)^{(3α+1)/(3α−1)}(48C⁴d²/ε⁴)^{2/(3α−1)}.
fn ln_k_low(req: &PlanRequest, alpha: f64) -> f64 {
    let (c, d) = (req.c_const, req.d as f64);
    let ln_inner = c.ln() + 3.0 * d.ln() + c * d + req.ln_l();
    2.0 * d.ln() + (3.0 * alpha + 1.0) / (3.0 * alpha - 1.0) * ln_inner - 2.0 / (3.0 * alpha - 1.0) * req.ln_budget()
}

/// log of the extra α ∈ (2/3, 1) bound d^{(5+3α)/2}(48C⁴d²/ε⁴)^{3α}.
fn ln_k_high_extra(req: &PlanRequest, alpha: f64) -> f64 {
    0.5 * (5.0 + 3.0 * alpha) * (req.d as f64).ln() - 3.0 * alpha * req.ln_budget()
}

/// Lower bound on k for the LMC branch containing α.
pub fn lmc_k_lower_bound_ln(req: &PlanRequest, alpha: f64) -> Result<(Branch, f64)> {
    if !(alpha > 1.0 / 3.0) {
        return Err(Error::UnsupportedRegime(format!("alpha = {alpha} must exceed 1/3")));
    }
    if alpha > 1.0 {
        return Err(invalid(format!("alpha = {alpha} exceeds 1")));
    }
    Ok(if alpha <= 2.0 / 3.0 {
        (Branch::LowHoelder, ln_k_low(req, alpha))
    } else if alpha < 1.0 {
        (Branch::HighHoelder, ln_k_low(req, alpha).max(ln_k_high_extra(req, alpha)))
    } else {
        let (c, d) = (req.c_const, req.d as f64);
        // 16C⁸d¹⁶e^{2Cd}L²/ε⁴
        let ln = 16f64.ln() + 8.0 * c.ln() + 16.0 * d.ln() + 2.0 * c * d + 2.0 * req.ln_l() - 4.0 * req.epsilon.ln();
        (Branch::Lipschitz, ln)
    })
}

/// The LMC schedule of the proposition matching α.
pub fn plan_lmc(req: &PlanRequest) -> Result<Plan> {
    req.validate()?;
    let alpha = req.alpha.ok_or_else(|| invalid("LMC planning needs alpha"))?;
    let (branch, ln_bound) = lmc_k_lower_bound_ln(req, alpha)?;
    let (k, ln_k, astronomical) = round_k(ln_bound);
    let d = req.d as f64;
    let cap = req.ln_eta_cap();
    let (ln_eta_raw, r) = if branch == Branch::Lipschitz {
        // η = √(ε⁴/(16C⁴d⁴k))
        let ln = 0.5 * (4.0 * req.epsilon.ln() - 16f64.ln() - 4.0 * req.c_const.ln() - 4.0 * d.ln() - ln_k);
        (ln, None)
    } else {
        let ln_a = req.ln_budget();
        let ln = -4.0 * alpha / (1.0 + 3.0 * alpha) * d.ln() + (1.0 + alpha) / (1.0 + 3.0 * alpha) * (ln_a - ln_k);
        (ln, Some(()))
    };
    let ln_eta = ln_eta_raw.min(cap);
    let ln_r = r.map(|()| (req.ln_budget() - ln_k - ln_eta) / (2.0 * alpha));
    let mut plan = Plan {
        algorithm: Algorithm::Lmc,
        branch,
        k,
        ln_k,
        log10_k: ln_k / std::f64::consts::LN_10,
        astronomical,
        eta: ln_eta.exp(),
        ln_eta,
        eta_capped: ln_eta_raw > cap,
        r: ln_r.map(f64::exp),
        ln_r,
        n_batch: None,
        ln_n_batch: None,
        predicted_envelope: f64::NAN,
    };
    plan.predicted_envelope = envelope_terms(&plan, req)?.total;
    Ok(plan)
}

/// The SS-SG-LMC schedule. η is ε⁴/(48C⁴d^{13/4}√k) ∧ m/(2ω̂(1)²), the value
/// for which every term of the proof's budget holds; see
/// [`ss_sg_lmc_displayed_eta`] for the other closed form.
pub fn plan_ss_sg_lmc(req: &PlanRequest) -> Result<Plan> {
    req.validate()?;
    let (c, d) = (req.c_const, req.d as f64);
    let ln_bound = 4.0 * 48f64.ln() + 18.0 * c.ln() + 17.5 * d.ln() + 2.0 * c * d + 2.0 * req.ln_l()
        - 16.0 * req.epsilon.ln();
    let (k, ln_k, astronomical) = round_k(ln_bound);
    let ln_eta_raw = 4.0 * req.epsilon.ln() - 48f64.ln() - 4.0 * c.ln() - 3.25 * d.ln() - 0.5 * ln_k;
    let cap = req.ln_eta_cap();
    let ln_eta = ln_eta_raw.min(cap);
    ss_plan(req, k, ln_k, astronomical, ln_eta, ln_eta_raw > cap)
}

/// η = √(ε⁴/(16C⁴d⁴k)) ∧ m/(2ω̂(1)²) for the SS-SG-LMC step count. Uncapped,
/// this step makes the discretization term d²r⁻¹kη² equal to 3√d, far above
/// its budget ε⁴/(48C⁴d²).
pub fn ss_sg_lmc_displayed_eta(req: &PlanRequest, k: u64) -> f64 {
    let (c, d) = (req.c_const, req.d as f64);
    let ln = 0.5 * (4.0 * req.epsilon.ln() - 16f64.ln() - 4.0 * c.ln() - 4.0 * d.ln() - (k as f64).ln());
    ln.min(req.ln_eta_cap()).exp()
}

/// An SS-SG-LMC plan with the given step size; N_B and r follow from it.
pub fn ss_plan_with_eta(req: &PlanRequest, k: u64, eta: f64) -> Result<Plan> {
    req.validate()?;
    if !(eta > 0.0) {
        return Err(invalid("eta must be positive"));
    }
    let ln_k = (k as f64).ln();
    ss_plan(req, Some(k), ln_k, false, eta.ln(), false)
}

fn ss_plan(req: &PlanRequest, k: Option<u64>, ln_k: f64, astronomical: bool, ln_eta: f64, eta_capped: bool) -> Result<Plan> {
    let d = req.d as f64;
    // The batch term kη/N_B must stay within A, so N_B = ⌈kη/A⌉ = ⌈48C⁴d²kη/ε⁴⌉.
    let (n_batch, ln_nb, nb_astronomical) = round_k(ln_k + ln_eta - req.ln_budget());
    let ln_r = req.ln_budget() - 0.5 * d.ln();
    let mut plan = Plan {
        algorithm: Algorithm::SsSgLmc,
        branch: Branch::SphericalSmoothing,
        k,
        ln_k,
        log10_k: ln_k / std::f64::consts::LN_10,
        astronomical: astronomical || nb_astronomical,
        eta: ln_eta.exp(),
        ln_eta,
        eta_capped,
        r: Some(ln_r.exp()),
        ln_r: Some(ln_r),
        n_batch,
        ln_n_batch: Some(ln_nb),
        predicted_envelope: f64::NAN,
    };
    plan.predicted_envelope = envelope_terms(&plan, req)?.total;
    Ok(plan)
}

/// Dispatches on the algorithm.
pub fn plan(algorithm: Algorithm, req: &PlanRequest) -> Result<Plan> {
    match algorithm {
        Algorithm::Lmc => plan_lmc(req),
        Algorithm::SsSgLmc => plan_ss_sg_lmc(req),
    }
}

/// Terms of the concise envelope
/// C√d·X^{1/4} + Cd·exp(−kη/(C r^{α−1} d³ e^{Cd})), where X is the sum of
/// `budget_terms` and r^{α−1} is 1 for α = 1 and r⁻¹ for SS-SG-LMC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTerms {
    /// (name, value, budget) for each summand of X.
    pub budget_terms: Vec<(String, f64, f64)>,
    pub x: f64,
    pub first: f64,
    pub exponential: f64,
    pub total: f64,
}

fn envelope_terms(plan: &Plan, req: &PlanRequest) -> Result<EnvelopeTerms> {
    let (c, d, eps) = (req.c_const, req.d as f64, req.epsilon);
    let ln_d = d.ln();
    let ln_a = req.ln_budget();
    let (ln_k, ln_eta) = (plan.ln_k, plan.ln_eta);
    let ln_keta = ln_k + ln_eta;
    let (terms, ln_rate_den) = match plan.algorithm {
        Algorithm::Lmc => {
            let alpha = req.alpha.ok_or_else(|| invalid("LMC envelope needs alpha"))?;
            match plan.ln_r {
                None => {
                    // r → 0 limit of the α = 1 envelope: X = d²kη²
                    let budget = 4.0 * eps.ln() - 16f64.ln() - 4.0 * c.ln() - 2.0 * ln_d;
                    (vec![("discretization", 2.0 * ln_d + ln_keta + ln_eta, budget)], c.ln() + 3.0 * ln_d + c * d)
                }
                Some(ln_r) => {
                    (
                        vec![
                            ("discretization", 2.0 * ln_d + (alpha - 1.0) * ln_r + ln_keta + ln_eta, ln_a),
                            ("smoothing", 2.0 * alpha * ln_r + ln_keta, ln_a),
                            ("radius", ln_r + 0.5 * ln_d, ln_a),
                        ],
                        c.ln() + (alpha - 1.0) * ln_r + 3.0 * ln_d + c * d,
                    )
                }
            }
        }
        Algorithm::SsSgLmc => {
            let ln_r = plan.ln_r.ok_or_else(|| invalid("SS-SG-LMC plan without radius"))?;
            let ln_nb = plan.ln_n_batch.ok_or_else(|| invalid("SS-SG-LMC plan without batch size"))?;
            (
                vec![
                    ("discretization", 2.0 * ln_d - ln_r + ln_keta + ln_eta, ln_a),
                    ("batch", ln_keta - ln_nb, ln_a),
                    ("radius", ln_r + 0.5 * ln_d, ln_a),
                ],
                c.ln() - ln_r + 3.0 * ln_d + c * d,
            )
        }
    };
    let budget_terms: Vec<(String, f64, f64)> = terms
        .into_iter()
        .map(|(n, v, b)| (n.to_string(), v.exp(), b.exp()))
        .collect();
    let x: f64 = budget_terms.iter().map(|t| t.1).sum();
    let first = c * d.sqrt() * x.powf(0.25);
    let exponential = c * d * (-(ln_keta - ln_rate_den).exp()).exp();
    Ok(EnvelopeTerms {
        budget_terms,
        x,
        first,
        exponential,
        total: first + exponential,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// bound − value; differences at rounding level are reported as 0.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub checks: Vec<PlanCheck>,
    pub envelope: EnvelopeTerms,
    pub all_passed: bool,
}

impl PlanReport {
    pub fn failures(&self) -> Vec<&PlanCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&PlanCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn le_check(name: &str, value: f64, bound: f64) -> PlanCheck {
    let raw = bound - value;
    PlanCheck {
        name: name.to_string(),
        value,
        bound,
        margin: if raw.abs() <= VERIFY_RTOL * bound.abs() { 0.0 } else { raw },
        passed: value <= bound * (1.0 + VERIFY_RTOL),
    }
}

/// Re-evaluates every inequality the proposition relies on for `plan`.
pub fn verify_plan(plan: &Plan, req: &PlanRequest) -> Result<PlanReport> {
    req.validate()?;
    let env = envelope_terms(plan, req)?;
    let eps = req.epsilon;
    let mut checks = vec![
        le_check("eta_positive", 0.0, plan.eta),
        le_check("eta_range", plan.eta, req.ln_eta_cap().exp()),
        le_check("k_at_least_one", 0.0, plan.ln_k),
    ];
    if let Some(r) = plan.r {
        checks.push(le_check("radius_range", r, 1.0));
    }
    if let Some(ln_nb) = plan.ln_n_batch {
        checks.push(le_check("batch_at_least_one", 0.0, ln_nb));
    }
    for (name, value, budget) in &env.budget_terms {
        checks.push(le_check(&format!("{name}_term"), *value, *budget));
    }
    checks.push(le_check("precondition", env.x, 1.0));
    checks.push(le_check("first_summand", env.first, 0.5 * eps));
    checks.push(le_check("exponential_term", env.exponential, 0.5 * eps));
    checks.push(le_check("total", env.total, eps));
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(PlanReport {
        checks,
        envelope: env,
        all_passed,
    })
}

/// A copy of `plan` with a different step count, keeping η, r and N_B.
pub fn with_k(plan: &Plan, k: u64) -> Plan {
    let ln_k = (k.max(1) as f64).ln();
    Plan {
        k: Some(k),
        ln_k,
        log10_k: ln_k / std::f64::consts::LN_10,
        astronomical: false,
        ..plan.clone()
    }
}
