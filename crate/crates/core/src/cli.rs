//! Command-line front end: `sample`, `plan`, `bound` and `verify`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{self, BoundInputs, TheoremBound};
use crate::config::{AlgorithmName, ExperimentConfig, SmoothingSection};
use crate::error::{invalid, Result};
use crate::metrics::{self, MomentReport};
use crate::planner::{self, Algorithm, Plan, PlanReport, PlanRequest};
use crate::rng::replica_seed;
use crate::samplers::{replica_config, run_replicas};
use crate::verify::{self, SuiteReport};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "SMOOTHLMC_THREADS";

/// Step cap applied by `plan --execute` when `--cap` is not given.
pub const DEFAULT_EXECUTE_CAP: u64 = 10_000_000;

#[derive(Debug, Parser)]
#[command(name = "smoothlmc", version, about = "Langevin samplers for weakly smooth potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured chains and write traces and a summary.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute a step-size and iteration plan for a target accuracy.
    Plan(PlanArgs),
    /// Evaluate the error-bound constants of a configured run.
    Bound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write bound.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an invariant suite: mollifier, potential, metrics, bounds or all.
    Verify {
        suite: String,
        /// Also write verify_<suite>.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanAlgorithm {
    Lmc,
    SsSgLmc,
}

#[derive(Debug, clap::Args)]
pub struct PlanArgs {
    /// Base experiment; its [plan] section supplies defaults and `--execute` runs it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    /// The constant C of the concise error envelope.
    #[arg(long = "c")]
    pub c_const: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub omega_one: Option<f64>,
    #[arg(long, value_enum)]
    pub algorithm: Option<PlanAlgorithm>,
    /// Run the planned chain through `sample` when k is within the cap.
    #[arg(long)]
    pub execute: bool,
    /// Refuse plans with more steps than this.
    #[arg(long)]
    pub cap: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How a command ended, beyond hard errors.
#[derive(Debug, PartialEq)]
pub enum Outcome {
    Success,
    /// Some chain left the finite region; the partial traces were written.
    Diverged(String),
    /// The plan was not executed or printed as feasible.
    Refused(String),
    /// Some invariant failed.
    Failed(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Failed(_) => 1,
            Outcome::Diverged(_) => 2,
            Outcome::Refused(_) => 3,
        }
    }
}

/// Builds the global rayon pool from `SMOOTHLMC_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| invalid(format!("{THREADS_ENV}={v} is not a thread count")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| invalid(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Sample { config, seed, out } => {
            let cfg = load_config(&config, seed, out)?;
            let summary = sample(&cfg)?;
            print_json(stdout, &summary)?;
            Ok(summary.outcome())
        }
        Command::Plan(args) => plan_command(args, stdout),
        Command::Bound { config, seed, out } => {
            let cfg = load_config(&config, seed, None)?;
            let report = bound_report(&cfg)?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_json(&dir.join("bound.json"), &report)?;
            }
            print_json(stdout, &report)?;
            Ok(Outcome::Success)
        }
        Command::Verify { suite, out } => {
            let names: Vec<&str> = if suite == "all" {
                verify::SUITES.to_vec()
            } else {
                vec![suite.as_str()]
            };
            let reports: Vec<SuiteReport> = names.iter().map(|s| verify::run_suite(s)).collect::<Result<_>>()?;
            let failed: Vec<String> = reports
                .iter()
                .flat_map(|r| r.failures().into_iter().map(move |c| format!("{}/{}: {}", r.suite, c.name, c.detail)))
                .collect();
            let doc = VerifyOutput {
                passed: failed.is_empty(),
                suites: reports,
            };
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_json(&dir.join(format!("verify_{suite}.json")), &doc)?;
            }
            print_json(stdout, &doc)?;
            Ok(if failed.is_empty() {
                Outcome::Success
            } else {
                Outcome::Failed(failed.join("\n"))
            })
        }
    }
}

#[derive(Serialize)]
struct VerifyOutput {
    passed: bool,
    suites: Vec<SuiteReport>,
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.chain.seed = s;
    }
    if let Some(dir) = out {
        cfg.outputs.dir = dir;
    }
    Ok(cfg)
}

fn print_json<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicaSummary {
    pub index: usize,
    pub seed: u64,
    pub file: String,
    pub recorded: usize,
    pub diverged_at: Option<u64>,
    pub elapsed_s: f64,
    pub moments: Option<MomentReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleSummary {
    pub config_sha256: String,
    pub seed: u64,
    pub algorithm: String,
    pub potential: String,
    pub dim: usize,
    pub replicas: Vec<ReplicaSummary>,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_error: Option<String>,
}

impl SampleSummary {
    pub fn outcome(&self) -> Outcome {
        let diverged: Vec<String> = self
            .replicas
            .iter()
            .filter_map(|r| r.diverged_at.map(|s| format!("replica {} diverged at step {s}", r.index)))
            .collect();
        if diverged.is_empty() {
            Outcome::Success
        } else {
            Outcome::Diverged(diverged.join("\n"))
        }
    }
}

/// Runs every replica, writes `trace_NNNN.csv`, `config.toml`,
/// `summary.json` (and `bound.json` when requested) into the output directory.
pub fn sample(cfg: &ExperimentConfig) -> Result<SampleSummary> {
    let start = Instant::now();
    let hash = cfg.hash()?;
    let oracle = cfg.oracle()?;
    let chain = cfg.chain_config();
    let dir = &cfg.outputs.dir;
    fs::create_dir_all(dir)?;
    let provenance = format!("config_sha256={hash} seed={}", chain.seed);
    fs::write(dir.join("config.toml"), format!("# {provenance}\n{}", cfg.to_toml()?))?;

    let traces = run_replicas(&oracle, &chain, cfg.replicas, cfg.outputs.execution)?;
    let exp_alpha = bounds::default_exp_alpha(chain.beta, oracle.target().dissipativity.m);
    let mut replicas = Vec::with_capacity(traces.len());
    for (i, trace) in traces.iter().enumerate() {
        let file = format!("trace_{i:04}.csv");
        let seed = replica_config(&chain, i).seed;
        let mut w = BufWriter::new(fs::File::create(dir.join(&file))?);
        trace.write_csv(&mut w, &[format!("{provenance} replica={i} replica_seed={seed}")])?;
        w.flush()?;
        let moments = if trace.diverged_at.is_none() {
            let burn_in = cfg.outputs.burn_in.unwrap_or_else(|| metrics::default_burn_in(trace.len()));
            metrics::moment_report(trace, burn_in, exp_alpha).ok()
        } else {
            None
        };
        replicas.push(ReplicaSummary {
            index: i,
            seed,
            file,
            recorded: trace.len(),
            diverged_at: trace.diverged_at,
            elapsed_s: trace.elapsed.as_secs_f64(),
            moments,
        });
    }
    debug_assert!(replicas.iter().enumerate().all(|(i, r)| r.seed == replica_seed(chain.seed, i as u64)));

    let (bound, bound_error) = if cfg.outputs.bound {
        match bound_report(cfg) {
            Ok(b) => {
                write_json(&dir.join("bound.json"), &b)?;
                (Some(b), None)
            }
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let summary = SampleSummary {
        config_sha256: hash,
        seed: chain.seed,
        algorithm: cfg.algorithm.as_str().to_string(),
        potential: cfg.potential.name.clone(),
        dim: cfg.potential.dim,
        replicas,
        wall_time_s: start.elapsed().as_secs_f64(),
        bound,
        bound_error,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub config_sha256: String,
    pub seed: u64,
    pub r: f64,
    pub eta: f64,
    pub k: u64,
    pub eta_max: f64,
    pub inputs: BoundInputs,
    pub theorem: TheoremBound,
    pub exp_moment_alpha: f64,
    pub exp_moment_asymptote: f64,
}

/// Every constant of the error bound for the configured run.
pub fn bound_report(cfg: &ExperimentConfig) -> Result<BoundReport> {
    let oracle = cfg.oracle()?;
    let chain = cfg.chain_config();
    let inputs = BoundInputs::from_run(&oracle, &chain, &cfg.bound)?;
    let r = oracle.radius().unwrap_or(1.0);
    let theorem = bounds::theorem_bound(&inputs, r, chain.eta, chain.k)?;
    let alpha = bounds::default_exp_alpha(inputs.beta, inputs.m);
    Ok(BoundReport {
        config_sha256: cfg.hash()?,
        seed: chain.seed,
        r,
        eta: chain.eta,
        k: chain.k,
        eta_max: inputs.eta_max(),
        exp_moment_alpha: alpha,
        exp_moment_asymptote: bounds::exp_moment_asymptote(&inputs, alpha)?,
        inputs,
        theorem,
    })
}

/// `m.mmme±X` from a base-10 logarithm, valid far beyond f64 range.
pub fn scientific_from_log10(log10: f64) -> String {
    if !log10.is_finite() {
        return format!("10^{log10}");
    }
    let mut exp = log10.floor();
    let mut mantissa = 10f64.powf(log10 - exp);
    if format!("{mantissa:.3}") == "10.000" {
        mantissa = 1.0;
        exp += 1.0;
    }
    format!("{mantissa:.3}e{exp}")
}

#[derive(Serialize)]
struct PlanOutput {
    request: PlanRequest,
    plan: Plan,
    k_scientific: String,
    verification: PlanReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    refusal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample: Option<SampleSummary>,
}

fn plan_request(args: &PlanArgs, base: Option<&ExperimentConfig>) -> Result<(Algorithm, PlanRequest)> {
    let from_cfg = base.and_then(|c| c.plan.clone());
    let epsilon = args
        .epsilon
        .or(from_cfg.as_ref().map(|p| p.epsilon))
        .ok_or_else(|| invalid("plan needs --epsilon"))?;
    let d = args
        .d
        .or(from_cfg.as_ref().map(|p| p.d))
        .or(base.map(|c| c.potential.dim))
        .ok_or_else(|| invalid("plan needs --d"))?;
    let c_const = args.c_const.or(from_cfg.as_ref().map(|p| p.c_const)).unwrap_or(1.0);
    let mut req = PlanRequest::new(epsilon, d, c_const);
    req.alpha = args.alpha.or(from_cfg.as_ref().and_then(|p| p.alpha));
    req.m = args.m.or(from_cfg.as_ref().map(|p| p.m)).unwrap_or(1.0);
    req.omega_one = args.omega_one.or(from_cfg.as_ref().map(|p| p.omega_one)).unwrap_or(1.0);
    req.validate()?;
    let algorithm = match (args.algorithm, base.map(|c| c.algorithm)) {
        (Some(PlanAlgorithm::Lmc), _) | (None, Some(AlgorithmName::Lmc)) => Algorithm::Lmc,
        (Some(PlanAlgorithm::SsSgLmc), _) | (None, Some(AlgorithmName::SsSgLmc)) => Algorithm::SsSgLmc,
        (None, None) => Algorithm::Lmc,
        (None, Some(other)) => return Err(invalid(format!("no planner for algorithm {}", other.as_str()))),
    };
    Ok((algorithm, req))
}

fn plan_command(args: PlanArgs, stdout: &mut dyn Write) -> Result<Outcome> {
    let base = match &args.config {
        Some(p) => Some(load_config(p, args.seed, args.out.clone())?),
        None => None,
    };
    if args.execute && base.is_none() {
        return Err(invalid("--execute needs --config"));
    }
    let (algorithm, req) = plan_request(&args, base.as_ref())?;
    let plan = planner::plan(algorithm, &req)?;
    let k_scientific = scientific_from_log10(plan.log10_k);
    let cap = args.cap.or(args.execute.then_some(DEFAULT_EXECUTE_CAP));
    let refusal = match (plan.k, cap) {
        (None, _) => Some(format!(
            "refusing: k ≈ {k_scientific} (log10 k = {:.3}) is astronomically large",
            plan.log10_k
        )),
        (Some(k), Some(cap)) if k > cap => Some(format!(
            "refusing: k = {k} ≈ {k_scientific} (log10 k = {:.3}) exceeds the cap {cap}",
            plan.log10_k
        )),
        _ => None,
    };
    let verification = planner::verify_plan(&plan, &req)?;
    let mut sample_summary = None;
    if let (true, None, Some(mut cfg), Some(k)) = (args.execute, &refusal, base, plan.k) {
        if cfg.potential.dim != req.d {
            return Err(invalid(format!("plan dimension {} differs from the potential's {}", req.d, cfg.potential.dim)));
        }
        cfg.chain.eta = plan.eta;
        cfg.chain.k = k;
        if let (Some(r), Some(n_batch)) = (plan.r, plan.n_batch) {
            cfg.smoothing = Some(SmoothingSection {
                r,
                n_batch: usize::try_from(n_batch).map_err(|_| invalid("batch size overflows"))?,
            });
        }
        cfg.validate()?;
        sample_summary = Some(sample(&cfg)?);
    }
    let outcome = match (&refusal, &sample_summary, &verification) {
        (Some(r), _, _) => Outcome::Refused(r.clone()),
        (None, Some(s), _) => s.outcome(),
        (None, None, v) if !v.all_passed => Outcome::Failed(format!("plan checks failed: {:?}", v.failures())),
        _ => Outcome::Success,
    };
    print_json(
        stdout,
        &PlanOutput {
            request: req,
            plan,
            k_scientific,
            verification,
            refusal,
            sample: sample_summary,
        },
    )?;
    Ok(outcome)
}
