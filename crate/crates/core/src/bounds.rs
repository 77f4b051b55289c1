//! Explicit evaluation of the 2-Wasserstein error envelope of SG-LMC and of the
//! lemmas it is assembled from. Nothing here is clamped: vacuous bounds are
//! returned as computed and flagged.
//!
//! The Poincaré and log-Sobolev bounds contain factors like e^{βU₀} that leave
//! the f64 range quickly, so they are carried as natural logarithms as well.

use serde::{Deserialize, Serialize};

use crate::continuity::Modulus;
use crate::error::{invalid, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::samplers::{ChainConfig, Delta, GradientOracle, Init};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d: usize,
    pub beta: f64,
    pub m: f64,
    pub b: f64,
    pub m_tilde: f64,
    pub b_tilde: f64,
    /// κ₀ = log ∫ e^{|x|} p₀(x) dx.
    pub kappa0: f64,
    /// log ‖p₀‖∞; +∞ for laws without a bounded density.
    pub p0_sup_log: f64,
    /// |∇U(0)|.
    pub grad_u_at_zero: f64,
    pub omega_grad_u: Modulus,
    /// ‖G̃‖_𝕄.
    pub g_tilde_mnorm: f64,
    /// ω_G̃(1).
    pub omega_g_tilde_one: f64,
    /// U₀ = ‖U‖_{L∞(B₁)}.
    pub u0: f64,
    pub delta: Delta,
    /// The absolute constant a of the Poincaré bound.
    pub a_abs: f64,
    /// ∫|x|π(dx); defaults to √((b + d/β)/m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_first_moment: Option<f64>,
}

/// Overrides for constants that cannot be derived from a run configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundOptions {
    #[serde(default)]
    pub a_abs: Option<f64>,
    #[serde(default)]
    pub kappa0: Option<f64>,
    #[serde(default)]
    pub p0_sup_log: Option<f64>,
    #[serde(default)]
    pub pi_first_moment: Option<f64>,
}

fn d_f(x: &BoundInputs) -> f64 {
    x.d as f64
}

impl BoundInputs {
    /// Inputs for running `oracle` under `cfg`.
    pub fn from_run(oracle: &GradientOracle, cfg: &ChainConfig, opts: &BoundOptions) -> Result<Self> {
        let target = oracle.target();
        let d = target.dim();
        let modulus = target.modulus.clone().ok_or_else(|| {
            Error::Precondition(format!("potential `{}` has no finite gradient modulus", target.name))
        })?;
        let field = oracle.averaged_field()?;
        let (kappa0, p0_sup_log) = match &cfg.init {
            Init::StandardGaussian => (gaussian_kappa0(d), -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()),
            Init::Point(x0) => (x0.iter().map(|v| v * v).sum::<f64>().sqrt(), f64::INFINITY),
            Init::Custom(_) => (
                opts.kappa0
                    .ok_or_else(|| invalid("custom initial law needs kappa0"))?,
                opts.p0_sup_log
                    .ok_or_else(|| invalid("custom initial law needs p0_sup_log"))?,
            ),
        };
        let inputs = Self {
            d,
            beta: cfg.beta,
            m: target.dissipativity.m,
            b: target.dissipativity.b,
            m_tilde: field.m,
            b_tilde: field.b,
            kappa0: opts.kappa0.unwrap_or(kappa0),
            p0_sup_log: opts.p0_sup_log.unwrap_or(p0_sup_log),
            grad_u_at_zero: target.grad_at_zero,
            omega_grad_u: modulus,
            g_tilde_mnorm: field.mnorm(),
            omega_g_tilde_one: field.omega_one,
            u0: target.u0,
            delta: oracle.delta()?,
            a_abs: opts.a_abs.unwrap_or(1.0),
            pi_first_moment: opts.pi_first_moment,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let positive = [
            ("beta", self.beta),
            ("m", self.m),
            ("m_tilde", self.m_tilde),
            ("a_abs", self.a_abs),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} = {v} must be positive")));
            }
        }
        let nonneg = [
            ("b", self.b),
            ("b_tilde", self.b_tilde),
            ("grad_u_at_zero", self.grad_u_at_zero),
            ("g_tilde_mnorm", self.g_tilde_mnorm),
            ("omega_g_tilde_one", self.omega_g_tilde_one),
            ("u0", self.u0),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if !self.kappa0.is_finite() {
            return Err(invalid("kappa0 must be finite"));
        }
        if self.p0_sup_log.is_nan() {
            return Err(invalid("p0_sup_log is NaN"));
        }
        self.delta.validate()
    }

    /// ω_{∇U}(1).
    pub fn omega_one(&self) -> f64 {
        self.omega_grad_u.at_one()
    }

    /// ‖∇U‖_𝕄 = |∇U(0)| + ω_{∇U}(1).
    pub fn grad_u_mnorm(&self) -> f64 {
        self.grad_u_at_zero + self.omega_one()
    }

    /// Upper end of the admissible step range, 1 ∧ m̃/(2(ω_G̃(1)² + δ_{v,2})).
    pub fn eta_max(&self) -> f64 {
        let denom = 2.0 * (self.omega_g_tilde_one.powi(2) + self.delta.var2);
        if denom > 0.0 {
            (self.m_tilde / denom).min(1.0)
        } else {
            1.0
        }
    }

    pub fn check_eta(&self, eta: f64) -> Result<()> {
        let max = self.eta_max();
        if eta > 0.0 && eta < max {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "eta = {eta} outside (0, 1 ∧ m̃/(2(ω_G̃(1)² + δ_v2))) = (0, {max})"
            )))
        }
    }

    fn default_moment(&self) -> f64 {
        ((self.b + d_f(self) / self.beta) / self.m).sqrt()
    }
}

/// κ₀ of the standard Gaussian on ℝ^d: log E e^{|X|} with |X| chi-distributed,
/// by Gauss–Legendre quadrature of the radial density.
pub fn gaussian_kappa0(d: usize) -> f64 {
    let df = d as f64;
    let log_norm = (0.5 * df - 1.0) * std::f64::consts::LN_2 + statrs::function::gamma::ln_gamma(0.5 * df);
    let upper = df.sqrt() + 45.0;
    let gl = GaussLegendre::new(40);
    let integral = gl.integrate_composite(0.0, upper, 64, |r| {
        if r <= 0.0 {
            return if d == 1 { (-log_norm).exp() } else { 0.0 };
        }
        (r + (df - 1.0) * r.ln() - 0.5 * r * r - log_norm).exp()
    });
    integral.ln()
}

/// κ∞ = κ₀ + 2(1 ∨ 1/m̃)(b̃ + η‖G̃‖²_𝕄 + δ_{v,0} + d/β).
pub fn kappa_inf(x: &BoundInputs, eta: f64) -> Result<f64> {
    x.check_eta(eta)?;
    Ok(kappa_inf_unchecked(x, eta))
}

fn kappa_inf_unchecked(x: &BoundInputs, eta: f64) -> f64 {
    x.kappa0
        + 2.0 * (1.0f64).max(1.0 / x.m_tilde) * (x.b_tilde + eta * x.g_tilde_mnorm.powi(2) + x.delta.var0 + d_f(x) / x.beta)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// log of the Poincaré constant bound
/// 4/(mβ(d+(b+m)β)) + 8a(d+(b+m)β)/(mβ)·exp(β(25/16‖∇U‖_𝕄(1 + 8(d+(b+m)β)/(mβ)) + U₀)).
pub fn log_poincare_bound(x: &BoundInputs) -> f64 {
    let direct = poincare_bound(x);
    if direct.is_finite() {
        return direct.ln();
    }
    let mb = x.m * x.beta;
    let s = d_f(x) + (x.b + x.m) * x.beta;
    let first = (4.0 / (mb * s)).ln();
    let exponent = x.beta * (25.0 / 16.0 * x.grad_u_mnorm() * (1.0 + 8.0 * s / mb) + x.u0);
    let second = (8.0 * x.a_abs * s / mb).ln() + exponent;
    log_add_exp(first, second)
}

pub fn poincare_bound(x: &BoundInputs) -> f64 {
    let mb = x.m * x.beta;
    let s = d_f(x) + (x.b + x.m) * x.beta;
    let exponent = x.beta * (25.0 / 16.0 * x.grad_u_mnorm() * (1.0 + 8.0 * s / mb) + x.u0);
    4.0 / (mb * s) + 8.0 * x.a_abs * s / mb * exponent.exp()
}

/// Coefficients (P, Q) with c_LS ≤ P + Q·c_P.
fn log_sobolev_parts(x: &BoundInputs, r: f64) -> Result<(f64, f64)> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(invalid(format!("radius {r} not in (0, 1]")));
    }
    let w = x.omega_grad_u.eval(r)?;
    if w <= 0.0 {
        return Err(Error::DegenerateModulus { r });
    }
    let mb = x.m * x.beta;
    let s = d_f(x) + (x.b + x.m) * x.beta;
    let lip = (d_f(x) + 4.0) * w / r;
    let p = lip * 32.0 / (mb * mb) + 2.0 * r / ((d_f(x) + 4.0) * w);
    let q = lip * 12.0 * s / mb + 2.0;
    Ok((p, q))
}

/// log of the log-Sobolev constant bound
/// (d+4)ω(r)/r·(32/(m²β²) + 12(d+(b+m)β)c_P/(mβ)) + 2r/((d+4)ω(r)) + 2c_P.
pub fn log_log_sobolev_bound(x: &BoundInputs, r: f64) -> Result<f64> {
    let (p, q) = log_sobolev_parts(x, r)?;
    Ok(log_add_exp(p.ln(), q.ln() + log_poincare_bound(x)))
}

pub fn log_sobolev_bound(x: &BoundInputs, r: f64) -> Result<f64> {
    Ok(log_log_sobolev_bound(x, r)?.exp())
}

/// C₀ = (d+4)(β/3(δ_{v,0} + ‖G̃‖²_𝕄 + (ω_G̃(1)² + δ_{v,2})κ∞) + d/2).
pub fn c0(x: &BoundInputs, kappa_inf: f64) -> f64 {
    (d_f(x) + 4.0)
        * (x.beta / 3.0
            * (x.delta.var0 + x.g_tilde_mnorm.powi(2) + (x.omega_g_tilde_one.powi(2) + x.delta.var2) * kappa_inf)
            + 0.5 * d_f(x))
}

/// (C₀ω(r)/r·η + β(δ_{r,2}κ∞ + δ_{r,0}))·kη.
pub fn kl_discretization(x: &BoundInputs, r: f64, eta: f64, k: u64) -> Result<f64> {
    let kinf = kappa_inf(x, eta)?;
    let w = x.omega_grad_u.eval(r)?;
    Ok(kl_discretization_with(x, kinf, w / r, eta, k))
}

fn kl_discretization_with(x: &BoundInputs, kinf: f64, w_over_r: f64, eta: f64, k: u64) -> f64 {
    (c0(x, kinf) * w_over_r * eta + x.beta * (x.delta.r2() * kinf + x.delta.r0())) * k as f64 * eta
}

/// The expression under the square root of C₂:
/// log‖p₀‖∞ + (d/2)log(3π/(mβ)) + β(ω(1)κ₀/2 + 5/2‖∇U‖_𝕄κ₀^{1/2} + U₀ + (b/2)log 3).
pub fn kl_initial(x: &BoundInputs) -> f64 {
    let group = 0.5 * x.omega_one() * x.kappa0
        + 2.5 * x.grad_u_mnorm() * x.kappa0.max(0.0).sqrt()
        + x.u0
        + 0.5 * x.b * 3f64.ln();
    x.p0_sup_log + 0.5 * d_f(x) * (3.0 * std::f64::consts::PI / (x.m * x.beta)).ln() + x.beta * group
}

/// βr(|∇U(0)| + 3ω(1)/2 + ω(1)/2·∫|x|π(dx)).
pub fn kl_gibbs(x: &BoundInputs, r: f64, pi_first_moment: f64) -> Result<f64> {
    if !(pi_first_moment >= 0.0) {
        return Err(invalid("first moment must be nonnegative"));
    }
    if r < 0.0 {
        return Err(invalid("radius must be nonnegative"));
    }
    let w1 = x.omega_one();
    Ok(x.beta * r * (x.grad_u_at_zero + 1.5 * w1 + 0.5 * w1 * pi_first_moment))
}

/// kl_gibbs with the moment from the inputs or its default bound.
pub fn kl_gibbs_default(x: &BoundInputs, r: f64) -> Result<f64> {
    kl_gibbs(x, r, x.pi_first_moment.unwrap_or_else(|| x.default_moment()))
}

/// c·(kl^{1/2} + (kl/2)^{1/4}).
pub fn w2_from_kl(kl: f64, c_nu: f64) -> Result<f64> {
    if !(kl >= 0.0) {
        return Err(invalid(format!("KL divergence {kl} must be nonnegative")));
    }
    if !(c_nu > 0.0) {
        return Err(invalid("c_nu must be positive"));
    }
    Ok(c_nu * (kl.sqrt() + (0.5 * kl).powf(0.25)))
}

fn c1_core(x: &BoundInputs) -> f64 {
    32.0 * (x.b + x.m + d_f(x) / x.beta) / x.m + 10.0 / (1.0f64).min(x.beta * x.m / 4.0)
}

/// C₁ = 2√(4κ₀ + 32(b+m+d/β)/m + 10/(1 ∧ βm/4)).
pub fn c1(x: &BoundInputs) -> f64 {
    2.0 * (4.0 * x.kappa0 + c1_core(x)).sqrt()
}

/// C₁′ = C₁ without the 4κ₀ term.
pub fn c1_prime(x: &BoundInputs) -> f64 {
    2.0 * c1_core(x).sqrt()
}

/// f(δ_r, r, k, η).
pub fn f_value(x: &BoundInputs, r: f64, eta: f64, k: u64) -> Result<f64> {
    let kl = kl_discretization(x, r, eta, k)?;
    Ok(kl + f_gibbs_part(x, r))
}

fn f_gibbs_part(x: &BoundInputs, r: f64) -> f64 {
    0.5 * x.beta * r * x.grad_u_mnorm() * (3.0 + x.default_moment())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoremBound {
    pub c0: f64,
    pub c1: f64,
    pub c1_prime: f64,
    /// The expression under the root of C₂.
    pub c2_inner: f64,
    /// `None` when `c2_inner` is negative.
    pub c2: Option<f64>,
    pub kappa_inf: f64,
    pub c_p_bound: f64,
    pub log_c_p_bound: f64,
    pub c_ls_bound: f64,
    pub log_c_ls_bound: f64,
    pub f_value: f64,
    /// 2C₁(f^{1/2} + f^{1/4}).
    pub first_term: f64,
    /// C₁′√(C₂ + √C₂)·exp(−kη/(2βc_LS)).
    pub second_term: Option<f64>,
    pub w2_bound: Option<f64>,
    /// Reasons the bound is not informative.
    pub flags: Vec<String>,
}

impl TheoremBound {
    pub fn is_vacuous(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// The full right-hand side of the W₂ error estimate.
pub fn theorem_bound(x: &BoundInputs, r: f64, eta: f64, k: u64) -> Result<TheoremBound> {
    x.validate()?;
    let kinf = kappa_inf(x, eta)?;
    let w = x.omega_grad_u.eval(r)?;
    let log_cp = log_poincare_bound(x);
    let log_cls = log_log_sobolev_bound(x, r)?;
    let f = kl_discretization_with(x, kinf, w / r, eta, k) + f_gibbs_part(x, r);
    let c1v = c1(x);
    let c1p = c1_prime(x);
    let inner = kl_initial(x);
    let c2 = (inner >= 0.0).then(|| inner.sqrt());
    let first = 2.0 * c1v * (f.sqrt() + f.powf(0.25));
    // exp(−kη/(2β c_LS)) with c_LS carried in log form
    let decay = (-(k as f64) * eta / (2.0 * x.beta) * (-log_cls).exp()).exp();
    let second = c2.map(|c| c1p * (c + c.sqrt()).sqrt() * decay);
    let mut flags = Vec::new();
    if c2.is_none() {
        flags.push(format!("C2 undefined: inner expression {inner} is negative"));
    } else if !inner.is_finite() {
        flags.push("C2 infinite: initial law has no bounded density".into());
    }
    if f > 1.0 {
        flags.push(format!("f = {f} exceeds 1"));
    }
    if !log_cls.is_finite() || log_cls > f64::MAX.ln() {
        flags.push(format!("log-Sobolev bound overflows: log c_LS = {log_cls}"));
    }
    let w2 = second.map(|s| first + s);
    if let Some(v) = w2 {
        if !v.is_finite() {
            flags.push("total bound is not finite".into());
        }
    }
    Ok(TheoremBound {
        c0: c0(x, kinf),
        c1: c1v,
        c1_prime: c1p,
        c2_inner: inner,
        c2,
        kappa_inf: kinf,
        c_p_bound: log_cp.exp(),
        log_c_p_bound: log_cp,
        c_ls_bound: log_cls.exp(),
        log_c_ls_bound: log_cls,
        f_value: f,
        first_term: first,
        second_term: second,
        w2_bound: w2,
        flags,
    })
}

/// Bound on E[e^{α|X̄_t|²}] for the mollified diffusion started at ξ, with
/// m̄ = m/2 and b̄ = b + m:
/// E[e^{α|ξ|²}]e^{−2α(b̄+d/β)t} + 2exp(2α(b̄+d/β)/(m̄ − α/β))(1 − e^{−2α(b̄+d/β)t}).
pub fn exp_moment_bound(x: &BoundInputs, t: f64, alpha: f64, init_exp_moment: f64) -> Result<f64> {
    let (rate, asym) = exp_moment_parts(x, alpha)?;
    if !(t >= 0.0) {
        return Err(invalid("time must be nonnegative"));
    }
    let decay = (-rate * t).exp();
    Ok(init_exp_moment * decay + asym * (1.0 - decay))
}

/// The t → ∞ limit 2exp(2α(b̄+d/β)/(m̄ − α/β)).
pub fn exp_moment_asymptote(x: &BoundInputs, alpha: f64) -> Result<f64> {
    Ok(exp_moment_parts(x, alpha)?.1)
}

fn exp_moment_parts(x: &BoundInputs, alpha: f64) -> Result<(f64, f64)> {
    let m_bar = 0.5 * x.m;
    let b_bar = x.b + x.m;
    if !(alpha > 0.0 && alpha < x.beta * m_bar) {
        return Err(Error::Precondition(format!(
            "alpha = {alpha} outside (0, βm̄) = (0, {})",
            x.beta * m_bar
        )));
    }
    let s = b_bar + d_f(x) / x.beta;
    Ok((2.0 * alpha * s, 2.0 * (2.0 * alpha * s / (m_bar - alpha / x.beta)).exp()))
}

/// The exponent α = 1 ∧ (βm̄/2) used for exponential-moment diagnostics.
pub fn default_exp_alpha(beta: f64, m: f64) -> f64 {
    (1.0f64).min(0.25 * beta * m)
}
