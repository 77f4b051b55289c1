//! Invariant batteries for the `verify` subcommand. Each suite recomputes
//! known values with an independent method and reports every check.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bounds::{self, BoundInputs};
use crate::continuity::Modulus;
use crate::error::{invalid, Result};
use crate::metrics::{self, SampleSet};
use crate::mollifier::{grad_l1_norm, Mollifier};
use crate::potentials::{self, Params};
use crate::quadrature::integrate_ball;
use crate::rng::stream;
use crate::samplers::Delta;

pub const SUITES: [&str; 4] = ["mollifier", "potential", "metrics", "bounds"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<SuiteCheck>,
}

impl SuiteReport {
    pub fn failures(&self) -> Vec<&SuiteCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

#[derive(Default)]
struct Collector(Vec<SuiteCheck>);

impl Collector {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.0.push(SuiteCheck {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn close(&mut self, name: impl Into<String>, value: f64, expected: f64, tol: f64) {
        let err = (value - expected).abs();
        self.push(name, err <= tol, format!("value {value:.15e}, expected {expected:.15e}, |err| {err:.3e} <= {tol:.1e}"));
    }

    fn finish(self, suite: &str) -> SuiteReport {
        SuiteReport {
            suite: suite.to_string(),
            passed: self.0.iter().all(|c| c.passed),
            checks: self.0,
        }
    }
}

/// Runs the named suite.
pub fn run_suite(name: &str) -> Result<SuiteReport> {
    match name {
        "mollifier" => mollifier_suite(),
        "potential" => potential_suite(),
        "metrics" => metrics_suite(),
        "bounds" => bounds_suite(),
        other => Err(invalid(format!("unknown suite `{other}`; expected one of {SUITES:?}"))),
    }
}

/// ∫ρ over ℝ^d by iterated Gauss–Legendre on the unit ball, d ≤ 3.
pub fn mollifier_mass(d: usize) -> Result<f64> {
    let rho = Mollifier::unit(d)?;
    Ok(integrate_ball(d, 1.0, 24, |x| rho.density(x).unwrap_or(f64::NAN)))
}

/// ∫|∇ρ| over ℝ^d by iterated Gauss–Legendre, d ≤ 3.
pub fn grad_l1_quadrature(d: usize) -> Result<f64> {
    let rho = Mollifier::unit(d)?;
    Ok(integrate_ball(d, 1.0, 24, |x| {
        rho.grad_density(x)
            .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
            .unwrap_or(f64::NAN)
    }))
}

/// Result of testing |ζ|² ~ Beta(d/2, 4) for draws ζ ~ ρ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialTest {
    pub d: usize,
    pub n: usize,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub mean_sq: f64,
    pub mean_sq_se: f64,
    pub expected_mean_sq: f64,
}

pub fn radial_law_test(d: usize, n: usize, seed: u64) -> Result<RadialTest> {
    let rho = Mollifier::unit(d)?;
    let mut rng = stream(seed, 0);
    let mut z = vec![0.0; d];
    let sq: Vec<f64> = (0..n)
        .map(|_| {
            rho.sample_into(&mut rng, &mut z);
            z.iter().map(|v| v * v).sum()
        })
        .collect();
    let beta = Beta::new(0.5 * d as f64, 4.0).map_err(|e| invalid(e.to_string()))?;
    let ks = metrics::ks_statistic(&sq, |t| beta.cdf(t));
    let (mean_sq, mean_sq_se) = metrics::mean_and_iid_se(&sq);
    Ok(RadialTest {
        d,
        n,
        ks_statistic: ks,
        ks_p_value: metrics::ks_p_value(n, ks),
        mean_sq,
        mean_sq_se,
        expected_mean_sq: d as f64 / (d as f64 + 8.0),
    })
}

fn mollifier_suite() -> Result<SuiteReport> {
    let mut c = Collector::default();
    for d in 1..=3 {
        c.close(format!("mass_d{d}"), mollifier_mass(d)?, 1.0, 1e-6);
        c.close(format!("grad_l1_d{d}"), grad_l1_quadrature(d)?, grad_l1_norm(d)?, 1e-4);
    }
    c.close("peak_d1", Mollifier::unit(1)?.peak(), 35.0 / 32.0, 1e-12);
    let mut worst: f64 = f64::INFINITY;
    for d in 1..=100 {
        let v = grad_l1_norm(d)?;
        worst = worst.min((v - d as f64).min(d as f64 + 4.0 - v));
    }
    c.push("grad_l1_between_d_and_d_plus_4", worst >= 0.0, format!("smallest slack {worst:.3e} over d <= 100"));
    for (i, d) in [1usize, 3].into_iter().enumerate() {
        let t = radial_law_test(d, 20_000, 100 + i as u64)?;
        c.push(
            format!("radial_ks_d{d}"),
            t.ks_p_value > 0.01,
            format!("D = {:.4e}, p = {:.4}", t.ks_statistic, t.ks_p_value),
        );
        c.push(
            format!("radial_mean_d{d}"),
            (t.mean_sq - t.expected_mean_sq).abs() <= 3.0 * t.mean_sq_se,
            format!("{:.6} vs {:.6} (se {:.2e})", t.mean_sq, t.expected_mean_sq, t.mean_sq_se),
        );
    }
    Ok(c.finish("mollifier"))
}

fn potential_suite() -> Result<SuiteReport> {
    let mut c = Collector::default();
    let none = Params::new();
    for d in [1usize, 2, 3] {
        for name in ["quadratic", "hoelder_mix", "elastic_net_logistic"] {
            let p = potentials::builtin(name, d, &none)?;
            let r = potentials::check_assumptions(&p, 2000, &mut stream(d as u64, 9))?;
            let failed: Vec<&str> = r.checks.iter().filter(|x| !x.passed).map(|x| x.name.as_str()).collect();
            c.push(format!("{name}_d{d}"), r.all_passed(), format!("failed: {failed:?}"));
        }
        let dw = potentials::builtin("double_well", d, &none)?;
        let r = potentials::check_assumptions(&dw, 2000, &mut stream(d as u64, 10))?;
        let others_ok = r.checks.iter().filter(|x| x.name != "gradient_modulus").all(|x| x.passed);
        let modulus_flagged = r.check("gradient_modulus").is_some_and(|x| !x.passed);
        c.push(
            format!("double_well_d{d}"),
            others_ok && modulus_flagged,
            "declared constants hold; missing gradient modulus is reported",
        );
        for name in potentials::FINITE_SUM_NAMES {
            let mut params = Params::new();
            params.insert("n".into(), 8.0);
            let f = potentials::builtin_finite_sum(name, d, &params)?;
            let r = potentials::check_finite_sum(&f, 1000, &mut stream(d as u64, 11))?;
            c.push(format!("{name}_d{d}"), r.all_passed(), format!("{} checks", r.checks.len()));
        }
    }
    let falsified = potentials::builtin("quadratic", 2, &none)?.with_dissipativity(potentials::Dissipativity { m: 1.5, b: 0.0 });
    let r = potentials::check_assumptions(&falsified, 500, &mut stream(1, 12))?;
    c.push(
        "falsified_dissipativity_detected",
        r.check("dissipativity").is_some_and(|x| !x.passed),
        "m = 1.5 declared for |x|²/2",
    );
    Ok(c.finish("potential"))
}

fn gaussian_set(d: usize, n: usize, rng: &mut impl Rng) -> Result<SampleSet> {
    SampleSet::new(d, (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// w2_1d and the assignment solver against permutation enumeration on
/// `count` random 1-D instances with n ∈ {2..8}; returns the largest deviation.
pub fn w2_oracle_deviation(count: usize, seed: u64) -> Result<f64> {
    let mut rng = stream(seed, 0);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = 2 + i % 7;
        let a = gaussian_set(1, n, &mut rng)?;
        let b = gaussian_set(1, n, &mut rng)?;
        let e = metrics::w2_enumerate(&a, &b)?;
        worst = worst
            .max((metrics::w2_1d(&a, &b)? - e).abs())
            .max((metrics::w2_exact(&a, &b)? - e).abs());
    }
    Ok(worst)
}

fn metrics_suite() -> Result<SuiteReport> {
    let mut c = Collector::default();
    let dev = w2_oracle_deviation(100, 21)?;
    c.push("w2_1d_matches_enumeration", dev <= 1e-12, format!("max deviation {dev:.3e}"));
    let mut rng = stream(22, 0);
    let (mut sym, mut tri, mut scale, mut trans): (f64, f64, f64, f64) = (0.0, f64::INFINITY, 0.0, 0.0);
    for i in 0..50 {
        let n = 2 + i % 7;
        let d = 1 + i % 3;
        let a = gaussian_set(d, n, &mut rng)?;
        let b = gaussian_set(d, n, &mut rng)?;
        let e = gaussian_set(d, n, &mut rng)?;
        let ab = metrics::w2_exact(&a, &b)?;
        sym = sym.max((ab - metrics::w2_exact(&b, &a)?).abs());
        tri = tri.min(ab + metrics::w2_exact(&b, &e)? - metrics::w2_exact(&a, &e)?);
        let s = 0.1 + 3.0 * rng.random::<f64>();
        let sa = a.map(|p, q| q.iter_mut().zip(p).for_each(|(o, v)| *o = s * v));
        let sb = b.map(|p, q| q.iter_mut().zip(p).for_each(|(o, v)| *o = s * v));
        scale = scale.max((metrics::w2_exact(&sa, &sb)? - s * ab).abs());
        let shift: Vec<f64> = (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let moved = a.map(|p, q| q.iter_mut().zip(p).zip(&shift).for_each(|((o, v), t)| *o = v + t));
        let norm = shift.iter().map(|t| t * t).sum::<f64>().sqrt();
        trans = trans.max((metrics::w2_enumerate(&a, &moved)? - norm).abs());
    }
    c.push("symmetry", sym <= 1e-12, format!("max asymmetry {sym:.3e}"));
    c.push("triangle_inequality", tri >= -1e-12, format!("smallest slack {tri:.3e}"));
    c.push("scale_equivariance", scale <= 1e-12, format!("max deviation {scale:.3e}"));
    c.push("translation_identity", trans <= 1e-12, format!("max deviation {trans:.3e}"));
    let mut worst: f64 = f64::INFINITY;
    for _ in 0..10 {
        let a = gaussian_set(3, 64, &mut rng)?;
        let b = gaussian_set(3, 64, &mut rng)?;
        let sq = metrics::sliced_projections(&a, &b, 64, &mut rng)?;
        let (m, se) = metrics::mean_and_iid_se(&sq);
        let exact = metrics::w2_exact(&a, &b)?;
        worst = worst.min(exact * exact + 3.0 * se - m);
    }
    c.push("sliced_below_exact", worst >= 0.0, format!("smallest slack {worst:.3e} (squared scale)"));
    Ok(c.finish("metrics"))
}

/// The bound inputs of the worked examples: d = 1, β = 1, m = m̃ = 1,
/// b = b̃ = 0, κ₀ = 1, ‖G̃‖_𝕄 = ω_G̃(1) = 1, Lipschitz(1) modulus, δ = 0, a = 1.
pub fn example_inputs() -> BoundInputs {
    BoundInputs {
        d: 1,
        beta: 1.0,
        m: 1.0,
        b: 0.0,
        m_tilde: 1.0,
        b_tilde: 0.0,
        kappa0: 1.0,
        p0_sup_log: -0.5 * (2.0 * std::f64::consts::PI).ln(),
        grad_u_at_zero: 0.0,
        omega_grad_u: Modulus::Lipschitz { k: 1.0 },
        g_tilde_mnorm: 1.0,
        omega_g_tilde_one: 1.0,
        u0: 0.0,
        delta: Delta::default(),
        a_abs: 1.0,
        pi_first_moment: None,
    }
}

fn bounds_suite() -> Result<SuiteReport> {
    let mut c = Collector::default();
    let x = example_inputs();
    c.close("kappa_inf_example", bounds::kappa_inf(&x, 0.1)?, 3.2, 1e-14);
    let zero_grad = BoundInputs {
        omega_grad_u: Modulus::table(vec![(1.0, 0.0)])?,
        ..x.clone()
    };
    c.close("poincare_example", bounds::poincare_bound(&zero_grad), 18.0, 0.0);
    c.close("c0_example", bounds::c0(&x, 3.2), 9.5, 1e-14);
    c.close("kl_gibbs_example", bounds::kl_gibbs(&x, 0.1, 1.0)?, 0.2, 1e-15);
    c.close("w2_from_kl_example", bounds::w2_from_kl(2.0, 1.0)?, 2f64.sqrt() + 1.0, 1e-15);
    let b4 = BoundInputs { beta: 4.0, ..x.clone() };
    c.close("c1_example", bounds::c1(&b4), 2.0 * 54f64.sqrt(), 1e-13);
    let e = BoundInputs {
        m: 2.0,
        beta: 4.0,
        ..x.clone()
    };
    c.close("exp_moment_asymptote", bounds::exp_moment_asymptote(&e, 1.0)?, 2.0 * 6f64.exp(), 1e-11);
    let mut prev = f64::INFINITY;
    let mut decreasing = true;
    for i in 0..=35 {
        let y = BoundInputs {
            m: 0.5 + 0.1 * i as f64,
            ..zero_grad.clone()
        };
        let v = bounds::poincare_bound(&y);
        decreasing &= v < prev;
        prev = v;
    }
    c.push("poincare_decreasing_in_m", decreasing, "m in [0.5, 4]");
    let t = bounds::theorem_bound(&x, 0.05, 0.01, 1000)?;
    c.push(
        "theorem_bound_finite",
        [t.c0, t.c1, t.c1_prime, t.kappa_inf, t.c_p_bound, t.c_ls_bound, t.f_value]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && t.w2_bound.is_some_and(f64::is_finite),
        format!("w2 bound {:?}", t.w2_bound),
    );
    let seconds: Vec<f64> = [100u64, 1000, 10_000]
        .iter()
        .map(|&k| bounds::theorem_bound(&x, 0.05, 0.01, k).map(|t| t.second_term.unwrap_or(f64::NAN)))
        .collect::<Result<_>>()?;
    c.push(
        "exponential_term_decreasing_in_k",
        seconds[0] > seconds[1] && seconds[1] > seconds[2],
        format!("{seconds:?}"),
    );
    Ok(c.finish("bounds"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for s in SUITES {
            let r = run_suite(s).unwrap();
            assert!(r.passed, "{s}: {:#?}", r.failures());
        }
        assert!(run_suite("nope").is_err());
    }
}
