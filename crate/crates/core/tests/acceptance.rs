//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line with its
//! measured value and runtime, then asserts. Tests hold a shared lock so the
//! runtime budgets are measured without competing for cores.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use smoothlmc::bounds::{self, BoundInputs, BoundOptions};
use smoothlmc::cli;
use smoothlmc::config::ExperimentConfig;
use smoothlmc::continuity::Modulus;
use smoothlmc::metrics::{self, SampleSet};
use smoothlmc::mollifier::{grad_l1_norm, Mollifier};
use smoothlmc::planner::{self, Algorithm, Branch, PlanRequest};
use smoothlmc::potentials::{self, Params};
use smoothlmc::quadrature::GaussLegendre;
use smoothlmc::rng::{replica_seed, ChainStreams};
use smoothlmc::samplers::{
    self, map_replicas, replica_config, ChainConfig, Delta, Execution, GradientOracle,
};
use smoothlmc::verify;

static SERIAL: Mutex<()> = Mutex::new(());

fn criterion(id: u32, title: &str, budget: Duration, body: impl FnOnce() -> (bool, String)) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (passed, detail) = body();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let tag = if passed && in_time { "PASS" } else { "FAIL" };
    println!(
        "[{tag}] {id:>2} {title}: {detail} ({:.2}s of {:.0}s)",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(passed, "criterion {id} failed: {detail}");
    assert!(in_time, "criterion {id} exceeded its {budget:?} budget: {elapsed:?}");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn quadratic(d: usize) -> potentials::PotentialSpec {
    potentials::builtin("quadratic", d, &Params::new()).unwrap()
}

#[test]
fn c01_mollifier_normalization() {
    criterion(1, "mollifier normalization", secs(10), || {
        let mut worst: f64 = 0.0;
        for d in 1..=3 {
            worst = worst.max((verify::mollifier_mass(d).unwrap() - 1.0).abs());
        }
        let peak_err = (Mollifier::unit(1).unwrap().peak() - 35.0 / 32.0).abs();
        (
            worst <= 1e-6 && peak_err <= 1e-9,
            format!("max |mass - 1| = {worst:.2e} (tol 1e-6), |peak - 35/32| = {peak_err:.2e} (tol 1e-9)"),
        )
    });
}

#[test]
fn c02_gradient_l1_norm() {
    criterion(2, "gradient L1 norm", secs(10), || {
        let mut worst: f64 = 0.0;
        for d in 1..=3 {
            let df = d as f64;
            let closed = (df + 6.0) * (df + 4.0) * (df + 2.0) * df / ((df + 5.0) * (df + 3.0) * (df + 1.0));
            worst = worst.max((verify::grad_l1_quadrature(d).unwrap() - closed).abs());
        }
        let mut slack = f64::INFINITY;
        for d in 1..=100 {
            let v = grad_l1_norm(d).unwrap();
            slack = slack.min((v - d as f64).min(d as f64 + 4.0 - v));
        }
        (
            worst <= 1e-4 && slack >= 0.0,
            format!("max quadrature error {worst:.2e} (tol 1e-4), min slack in [d, d+4] up to d=100 {slack:.3}"),
        )
    });
}

#[test]
fn c03_mollifier_sampler() {
    criterion(3, "mollifier sampler", secs(30), || {
        let mut ok = true;
        let mut parts = Vec::new();
        for (i, d) in [1usize, 3, 10].into_iter().enumerate() {
            let t = verify::radial_law_test(d, 100_000, 3_000 + i as u64).unwrap();
            let z = (t.mean_sq - t.expected_mean_sq) / t.mean_sq_se;
            ok &= t.ks_p_value > 0.01 && z.abs() <= 3.0;
            parts.push(format!("d={d}: KS p={:.3}, mean z={z:+.2}", t.ks_p_value));
        }
        (ok, parts.join("; "))
    });
}

#[test]
fn c04_lmc_stationary_variance() {
    criterion(4, "LMC stationary variance", secs(120), || {
        let (eta, beta, steps, burn) = (0.01, 1.0, 10_000u64, 2_000u64);
        let target = 2.0 / (beta * (2.0 - eta));
        let mut ok = true;
        let mut parts = Vec::new();
        for d in [1usize, 5] {
            let oracle = GradientOracle::exact(quadratic(d), 1.0).unwrap();
            let cfg = ChainConfig::new(beta, eta, steps, 40 + d as u64);
            // per chain: (Σx, Σx²) per coordinate after burn-in
            let sums = map_replicas(1_000, Execution::Parallel, |i| {
                let mut s = vec![(0.0f64, 0.0f64); d];
                samplers::run_with(&oracle, &replica_config(&cfg, i), |t, y| {
                    if t > burn {
                        for (acc, v) in s.iter_mut().zip(y) {
                            acc.0 += v;
                            acc.1 += v * v;
                        }
                    }
                })
                .unwrap();
                s
            });
            let n = (steps - burn) as f64;
            let mut worst: f64 = 0.0;
            for j in 0..d {
                let per_chain: Vec<f64> = sums
                    .iter()
                    .map(|s| {
                        let m = s[j].0 / n;
                        s[j].1 / n - m * m
                    })
                    .collect();
                let (v, _) = metrics::mean_and_iid_se(&per_chain);
                // the within-chain variance misses the spread of chain means
                let means: Vec<f64> = sums.iter().map(|s| s[j].0 / n).collect();
                let (_, mse) = metrics::mean_and_iid_se(&means);
                let total = v + mse * mse * means.len() as f64;
                worst = worst.max((total / target - 1.0).abs());
            }
            ok &= worst <= 0.02;
            parts.push(format!("d={d}: max relative error {worst:.4}"));
        }
        (ok, format!("target {target:.6}; {} (tol 0.02)", parts.join(", ")))
    });
}

#[test]
fn c05_smoothed_gradient_moments() {
    criterion(5, "spherically smoothed gradient", secs(60), || {
        let d = 3usize;
        let x = [0.3, -0.7, 1.1];
        let calls = 100_000;
        let mut ok = true;
        let mut parts = Vec::new();
        for (i, (r, nb)) in [(0.5, 1usize), (0.5, 4), (1.0, 16)].into_iter().enumerate() {
            let oracle = GradientOracle::smoothed(quadratic(d), r, nb).unwrap();
            let mut streams = ChainStreams::new(500 + i as u64);
            let mut dev: Vec<Vec<f64>> = (0..d).map(|_| Vec::with_capacity(calls)).collect();
            let mut sq = Vec::with_capacity(calls);
            for _ in 0..calls {
                let g = samplers::ss_gradient(&oracle, &x, &mut streams).unwrap();
                let e: Vec<f64> = g.iter().zip(&x).map(|(g, x)| g - x).collect();
                sq.push(e.iter().map(|v| v * v).sum::<f64>());
                for (col, v) in dev.iter_mut().zip(&e) {
                    col.push(*v);
                }
            }
            let bias_z = dev
                .iter()
                .map(|c| {
                    let (m, se) = metrics::mean_and_iid_se(c);
                    (m / se).abs()
                })
                .fold(0.0, f64::max);
            let expected = r * r * d as f64 / ((d as f64 + 8.0) * nb as f64);
            let (v, se) = metrics::mean_and_iid_se(&sq);
            let var_z = (v - expected) / se;
            ok &= bias_z <= 3.0 && var_z.abs() <= 3.0;
            parts.push(format!("(r={r}, N_B={nb}): bias |z|≤{bias_z:.2}, variance {v:.5} vs {expected:.5} z={var_z:+.2}"));
        }
        (ok, parts.join("; "))
    });
}

struct EnvelopeRun {
    label: &'static str,
    config: &'static str,
    replicas: usize,
}

const ENVELOPE_RUNS: [EnvelopeRun; 5] = [
    EnvelopeRun {
        label: "quadratic lmc",
        config: r#"
algorithm = "lmc"
[potential]
name = "quadratic"
dim = 2
[chain]
beta = 1.0
eta = 0.05
k = 2000
seed = 61
"#,
        replicas: 400,
    },
    EnvelopeRun {
        label: "hoelder_mix ss_lmc",
        config: r#"
algorithm = "ss_lmc"
[potential]
name = "hoelder_mix"
dim = 1
[chain]
beta = 1.0
eta = 0.01
k = 2000
seed = 62
init = { kind = "point", x = [3.0] }
[smoothing]
r = 0.05
n_batch = 4
"#,
        replicas: 400,
    },
    EnvelopeRun {
        label: "elastic_net_logistic lmc",
        config: r#"
algorithm = "lmc"
[potential]
name = "elastic_net_logistic"
dim = 2
[chain]
beta = 2.0
eta = 0.02
k = 2000
seed = 63
[smoothing]
r = 0.1
"#,
        replicas: 400,
    },
    EnvelopeRun {
        label: "logistic_sum ss_sg_lmc",
        config: r#"
algorithm = "ss_sg_lmc"
[potential]
name = "logistic_sum"
dim = 2
params = { n = 16 }
[chain]
beta = 1.0
eta = 0.002
k = 5000
seed = 64
[smoothing]
r = 0.1
n_batch = 4
"#,
        replicas: 400,
    },
    EnvelopeRun {
        label: "quadratic_sum sg_lmc",
        config: r#"
algorithm = "sg_lmc"
[potential]
name = "quadratic_sum"
dim = 2
params = { n = 16 }
[chain]
beta = 1.0
eta = 0.01
k = 2000
seed = 65
[minibatch]
n_batch = 4
var0 = 4.0
var2 = 0.05
"#,
        replicas: 400,
    },
];

#[test]
fn c06_moment_envelopes() {
    criterion(6, "moment envelopes", secs(120), || {
        let mut ok = true;
        let mut parts = Vec::new();
        for run in &ENVELOPE_RUNS {
            let cfg = ExperimentConfig::from_toml(run.config).unwrap();
            let oracle = cfg.oracle().unwrap();
            let chain = cfg.chain_config();
            let inputs = BoundInputs::from_run(&oracle, &chain, &BoundOptions::default()).unwrap();
            let kinf = bounds::kappa_inf(&inputs, chain.eta).unwrap();
            let every = chain.k / 10;
            let alpha = bounds::default_exp_alpha(chain.beta, inputs.m);
            let per_chain = map_replicas(run.replicas, Execution::Parallel, |i| {
                let mut sq = Vec::with_capacity(11);
                let mut last_exp = 0.0;
                samplers::run_with(&oracle, &replica_config(&chain, i), |t, y| {
                    if t % every == 0 {
                        let s: f64 = y.iter().map(|v| v * v).sum();
                        sq.push(s);
                        last_exp = (alpha * s).exp();
                    }
                })
                .unwrap();
                (sq, last_exp)
            });
            let mut worst = f64::NEG_INFINITY;
            for c in 0..per_chain[0].0.len() {
                let col: Vec<f64> = per_chain.iter().map(|p| p.0[c]).collect();
                let (m, se) = metrics::mean_and_iid_se(&col);
                worst = worst.max(m - 5.0 * se - kinf);
            }
            ok &= worst <= 0.0;
            parts.push(format!("{}: max(E|Y|² - 5se) - κ∞ = {worst:.3} (κ∞ = {kinf:.3})", run.label));
            if run.label == "quadratic lmc" {
                let ex: Vec<f64> = per_chain.iter().map(|p| p.1).collect();
                let (m, se) = metrics::mean_and_iid_se(&ex);
                let asym = bounds::exp_moment_asymptote(&inputs, alpha).unwrap();
                ok &= m - 5.0 * se <= asym;
                parts.push(format!("exp-moment {m:.3} ± {se:.3} vs asymptote {asym:.3e}"));
            }
        }
        (ok, parts.join("; "))
    });
}

#[test]
fn c07_planner_fidelity() {
    criterion(7, "planner fidelity", secs(5), || {
        let req = PlanRequest::new(1.0, 1, 1.0).with_alpha(1.0);
        let p = planner::plan(Algorithm::Lmc, &req).unwrap();
        let eta_err = (p.eta - (1.0f64 / 912.0).sqrt()).abs();
        let mut ok = p.k == Some(57) && eta_err <= 1e-15;
        let mut checked = 0;
        let mut failures = Vec::new();
        let mut identity_err: f64 = 0.0;
        for eps in [0.5, 1.0] {
            for d in [1usize, 2] {
                for alpha in [0.4, 0.7, 1.0] {
                    let req = PlanRequest::new(eps, d, 1.0).with_alpha(alpha);
                    for alg in [Algorithm::Lmc, Algorithm::SsSgLmc] {
                        let plan = planner::plan(alg, &req).unwrap();
                        let report = planner::verify_plan(&plan, &req).unwrap();
                        checked += 1;
                        if !report.all_passed {
                            failures.push(format!("{alg:?} eps={eps} d={d} alpha={alpha}"));
                        }
                        if plan.branch == Branch::LowHoelder {
                            let df = d as f64;
                            let lhs = 2.0 * df.ln() + (alpha - 1.0) * plan.ln_r.unwrap() + plan.ln_k + 2.0 * plan.ln_eta;
                            let rhs = 4.0 * eps.ln() - 48f64.ln() - 2.0 * df.ln();
                            identity_err = identity_err.max((lhs - rhs).abs());
                        }
                    }
                }
            }
        }
        ok &= failures.is_empty() && identity_err <= 1e-9;
        (
            ok,
            format!(
                "k = {:?}, |η - √(1/912)| = {eta_err:.1e}; {checked} grid plans, failures {failures:?}; max |log identity error| {identity_err:.1e}",
                p.k
            ),
        )
    });
}

/// The bound written out directly from its statement, for a Hölder modulus
/// M(r^α ∨ r) and plain f64 arithmetic.
#[allow(clippy::too_many_arguments)]
fn hand_bound(x: &BoundInputs, hm: f64, ha: f64, r: f64, eta: f64, k: f64) -> f64 {
    let omega = |t: f64| hm * t.powf(ha).max(t);
    let d = x.d as f64;
    let (beta, m, b) = (x.beta, x.m, x.b);
    let grad_m = x.grad_u_at_zero + omega(1.0);
    let kinf = x.kappa0 + 2.0 * f64::max(1.0, 1.0 / x.m_tilde) * (x.b_tilde + eta * x.g_tilde_mnorm * x.g_tilde_mnorm + x.delta.var0 + d / beta);
    let c0 = (d + 4.0)
        * (beta / 3.0 * (x.delta.var0 + x.g_tilde_mnorm * x.g_tilde_mnorm + (x.omega_g_tilde_one * x.omega_g_tilde_one + x.delta.var2) * kinf)
            + d / 2.0);
    let dr0 = x.delta.bias0 + x.delta.var0;
    let dr2 = x.delta.bias2 + x.delta.var2;
    let f = (c0 * omega(r) / r * eta + beta * (dr2 * kinf + dr0)) * k * eta
        + beta * r * grad_m / 2.0 * (3.0 + ((b + d / beta) / m).sqrt());
    let c1 = 2.0 * (4.0 * x.kappa0 + 32.0 * (b + m + d / beta) / m + 10.0 / f64::min(1.0, beta * m / 4.0)).sqrt();
    let c1p = 2.0 * (32.0 * (b + m + d / beta) / m + 10.0 / f64::min(1.0, beta * m / 4.0)).sqrt();
    let c2 = (x.p0_sup_log
        + d / 2.0 * (3.0 * std::f64::consts::PI / (m * beta)).ln()
        + beta * (omega(1.0) / 2.0 * x.kappa0 + 2.5 * grad_m * x.kappa0.sqrt() + x.u0 + b / 2.0 * 3f64.ln()))
    .sqrt();
    let s = d + (b + m) * beta;
    let cp = 4.0 / (m * beta * s)
        + 8.0 * x.a_abs * s / (m * beta) * (beta * (25.0 / 16.0 * grad_m * (1.0 + 8.0 * s / (m * beta)) + x.u0)).exp();
    let cls = (d + 4.0) * omega(r) / r * (32.0 / (m * m * beta * beta) + 12.0 * s * cp / (m * beta))
        + 2.0 * r / ((d + 4.0) * omega(r))
        + 2.0 * cp;
    2.0 * c1 * (f.sqrt() + f.powf(0.25)) + c1p * (c2 + c2.sqrt()).sqrt() * (-k * eta / (2.0 * beta * cls)).exp()
}

#[test]
fn c08_bounds_oracle_equivalence() {
    criterion(8, "bounds oracle equivalence", secs(1), || {
        let (hm, ha) = (1.2, 0.5);
        let x = BoundInputs {
            d: 2,
            beta: 2.0,
            m: 1.5,
            b: 0.5,
            m_tilde: 0.75,
            b_tilde: 2.0,
            kappa0: 1.3,
            p0_sup_log: -1.2,
            grad_u_at_zero: 0.3,
            omega_grad_u: Modulus::hoelder(hm, ha).unwrap(),
            g_tilde_mnorm: 1.7,
            omega_g_tilde_one: 1.2,
            u0: 0.8,
            delta: Delta {
                bias0: 0.01,
                bias2: 0.02,
                var0: 0.03,
                var2: 0.04,
            },
            a_abs: 1.0,
            pi_first_moment: None,
        };
        let mut worst: f64 = 0.0;
        for (r, eta, k) in [(0.25, 0.01, 5_000u64), (1.0, 0.2, 100), (0.01, 0.001, 1_000_000)] {
            let got = bounds::theorem_bound(&x, r, eta, k).unwrap().w2_bound.unwrap();
            let want = hand_bound(&x, hm, ha, r, eta, k as f64);
            worst = worst.max((got - want).abs() / want);
        }
        let mut p = x.clone();
        p.d = 1;
        p.beta = 1.0;
        p.m = 1.0;
        p.b = 0.0;
        p.grad_u_at_zero = 0.0;
        p.omega_grad_u = Modulus::table(vec![(1.0, 0.0)]).unwrap();
        p.u0 = 0.0;
        let cp = bounds::poincare_bound(&p);
        (
            worst <= 1e-12 && cp == 18.0,
            format!("max relative deviation {worst:.2e} (tol 1e-12), Poincaré example = {cp}"),
        )
    });
}

#[test]
fn c09_w2_estimators() {
    criterion(9, "W2 estimators", secs(30), || {
        let dev = verify::w2_oracle_deviation(100, 909).unwrap();
        let suite = verify::run_suite("metrics").unwrap();
        let failed: Vec<&str> = suite.failures().iter().map(|c| c.name.as_str()).collect();
        (
            dev <= 1e-12 && suite.passed,
            format!("max |w2_1d - enumeration| = {dev:.1e}; property failures {failed:?}"),
        )
    });
}

/// The last `n` recorded points of one chain as a 1-D sample set.
fn tail_samples(oracle: &GradientOracle, cfg: &ChainConfig, n: usize) -> SampleSet {
    let trace = samplers::run(oracle, cfg).unwrap();
    let v: Vec<f64> = trace.points().skip(trace.len() - n).map(|p| p[0]).collect();
    SampleSet::from_scalars(&v).unwrap()
}

/// Quantiles of π ∝ e^{-U} on the line at (i + 1/2)/n, by tabulated CDF.
fn gibbs_quantiles(u: impl Fn(f64) -> f64, n: usize) -> SampleSet {
    let gl = GaussLegendre::new(16);
    let grid: Vec<f64> = (0..=4000).map(|i| -8.0 + 16.0 * i as f64 / 4000.0).collect();
    let mut cdf = vec![0.0];
    for w in grid.windows(2) {
        let last = *cdf.last().unwrap();
        cdf.push(last + gl.integrate(w[0], w[1], |t| (-u(t)).exp()));
    }
    let z = *cdf.last().unwrap();
    let q: Vec<f64> = (0..n)
        .map(|i| {
            let p = (i as f64 + 0.5) / n as f64 * z;
            let j = cdf.partition_point(|c| *c < p).clamp(1, grid.len() - 1);
            let frac = (p - cdf[j - 1]) / (cdf[j] - cdf[j - 1]);
            grid[j - 1] + frac * (grid[j] - grid[j - 1])
        })
        .collect();
    SampleSet::from_scalars(&q).unwrap()
}

#[test]
fn c10_end_to_end() {
    criterion(10, "end-to-end SS-LMC on hoelder_mix", secs(300), || {
        let mut params = Params::new();
        params.insert("alpha".into(), 0.5);
        let pot = potentials::builtin("hoelder_mix", 1, &params).unwrap();
        let smoothed = GradientOracle::smoothed(pot.clone(), 0.05, 4).unwrap();
        let exact = GradientOracle::exact(pot.clone(), 0.05).unwrap();
        let n = 10_000usize;
        let replicas = 8;
        // same time horizon 1010 and spacing 0.1 for every chain: 10 units of
        // burn-in followed by 10⁴ kept points
        let runs = map_replicas(replicas, Execution::Parallel, |i| {
            let seed = replica_seed(1010, i as u64);
            let main = tail_samples(&smoothed, &ChainConfig::new(1.0, 1e-3, 1_010_000, seed).with_thin(100), n);
            let half = tail_samples(&smoothed, &ChainConfig::new(1.0, 5e-4, 2_020_000, seed ^ 1).with_thin(200), n);
            let reference = tail_samples(&exact, &ChainConfig::new(1.0, 1e-4, 10_100_000, seed ^ 2).with_thin(1000), n);
            (main, half, reference)
        });
        let exact_pi = gibbs_quantiles(|t| pot.value(&[t]), n);
        let w = |f: &dyn Fn(&(SampleSet, SampleSet, SampleSet)) -> f64| {
            let v: Vec<f64> = runs.iter().map(f).collect();
            metrics::mean_and_iid_se(&v)
        };
        let (w_main, se_main) = w(&|r| metrics::w2_1d(&r.0, &r.2).unwrap());
        let (w_half, se_half) = w(&|r| metrics::w2_1d(&r.1, &r.2).unwrap());
        let (w_pi, se_pi) = w(&|r| metrics::w2_1d(&r.0, &exact_pi).unwrap());
        let se_diff = (se_main * se_main + se_half * se_half).sqrt();
        (
            w_main < 0.1 && w_half <= w_main + 2.0 * se_diff,
            format!(
                "W2(η=1e-3) = {w_main:.4} ± {se_main:.4} (< 0.1), W2(η=5e-4) = {w_half:.4} ± {se_half:.4} (≤ +2se {:.4}); vs π quantiles {w_pi:.4} ± {se_pi:.4}",
                2.0 * se_diff
            ),
        )
    });
}

const DETERMINISM_CONFIG: &str = r#"
algorithm = "ss_sg_lmc"
replicas = 3
[potential]
name = "logistic_sum"
dim = 2
params = { n = 12, data_seed = 5 }
[chain]
beta = 1.0
eta = 0.01
k = 3000
seed = 1111
thin = 3
[smoothing]
r = 0.2
n_batch = 3
"#;

fn trace_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn c11_determinism() {
    criterion(11, "determinism", secs(60), || {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml(DETERMINISM_CONFIG).unwrap();
        let mut outputs = Vec::new();
        for (i, exec) in [Execution::Parallel, Execution::Parallel, Execution::Sequential].into_iter().enumerate() {
            cfg.outputs.dir = tmp.path().join(format!("run{i}"));
            cfg.outputs.execution = exec;
            cli::sample(&cfg).unwrap();
            outputs.push(trace_bytes(&cfg.outputs.dir));
        }
        let files = outputs[0].len();
        let identical = files == 3 && outputs.iter().all(|o| *o == outputs[0]);
        cfg.chain.seed += 1;
        cfg.outputs.dir = tmp.path().join("other_seed");
        cli::sample(&cfg).unwrap();
        let differs = trace_bytes(&cfg.outputs.dir) != outputs[0];
        (
            identical && differs,
            format!("{files} trace files byte-identical across 3 runs (parallel, parallel, sequential): {identical}; new seed changes them: {differs}"),
        )
    });
}
