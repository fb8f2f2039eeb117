//! `liplab`: command-line front end for the Lipschitz-constant toolkit.
//!
//! Machine-readable JSON goes to stdout, human summaries to stderr.
//! Exit codes: 0 success, 1 failed assertion, 2 usage or configuration error,
//! 3 budget or numerical failure.

mod parse;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use liplab_core::bounds::{self, BoundConstants, BoundValue};
use liplab_core::estimators::{pattern_hill_climb, sampled_lip_lower};
use liplab_core::exact::{enumerate_regions, exact_lipschitz, Budget, EnumerationMode, LipOptions};
use liplab_core::experiments::{counterexample_suite, run_experiment, CheckKind, CounterexampleConfig, ExperimentReport};
use liplab_core::init::derive_trial_rng;
use liplab_core::linalg::norm2;
use liplab_core::{sample_network, EstimateConfig, InitConfig, LipError, SampleLaw};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "liplab", version, about = "Exact and estimated Lipschitz constants of ReLU networks")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "LIPLAB_THREADS")]
    threads: Option<usize>,

    /// Extra human-readable output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a He-initialized network and write it as JSON.
    Gen {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long = "L")]
        l: Option<usize>,
        /// zero, gaussian:S, uniform:M, rademacher[:S], constant:V, or a JSON object.
        #[arg(long)]
        bias: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON object with InitConfig fields; explicit flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate the network at a point.
    Eval {
        #[arg(long)]
        net: PathBuf,
        /// `1,2` or `[1,2]`.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Gradient at a point.
    Grad {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Exact Lipschitz constant by region enumeration.
    LipExact {
        #[arg(long)]
        net: PathBuf,
        /// Also compute the supremum over all realizable patterns.
        #[arg(long)]
        sup_all: bool,
        #[arg(long)]
        budget_lps: Option<u64>,
        #[arg(long)]
        budget_secs: Option<f64>,
        /// Include every full-dimensional region certificate.
        #[arg(long)]
        regions: bool,
    },
    /// Certified lower bound by sampling and local search.
    LipEstimate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        hill_climb: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// gaussian, sphere:R, ball:R, multiscale:R[:MIN], or a JSON object.
        #[arg(long)]
        law: Option<String>,
        /// JSON object with EstimateConfig fields; explicit flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a closed-form bound.
    Bounds(BoundsArgs),
    /// Run a Monte Carlo experiment.
    Experiment {
        /// scaling_shallow, isotropy_check, subgaussian_tail_check, near_isometry_check,
        /// deep_lower_event or counterexample_suite.
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory receiving rows.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the fixed counterexample constructions.
    Counterexamples {
        /// Print the full report as JSON after the PASS/FAIL lines.
        #[arg(long)]
        json: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Which {
    ShallowUpper,
    ShallowUpperSimple,
    ShallowExpectation,
    DeepUpper,
    DeepUpperConvenience,
    DeepUpperSimple,
    DeepExpectation,
    ShallowLower,
    ShallowLowerConvenience,
    DeepLower,
    DeepLowerConvenience,
    CoveringShallow,
    CoveringDeep,
    DudleyShallow,
    DudleyDeep,
}

#[derive(clap::Args, Debug)]
struct BoundsArgs {
    #[arg(long, value_enum)]
    which: Which,
    #[arg(long)]
    d: Option<usize>,
    /// Hidden width; omit for the infinite-width limit of shallow-expectation.
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    u: f64,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    /// Scale for covering numbers.
    #[arg(long)]
    eps: Option<f64>,
    /// `‖W⁽⁰⁾‖₂` for the shallow covering number.
    #[arg(long)]
    norm_w0: Option<f64>,
    /// Rank parameter `k` of the shallow covering number (default min(d, N)).
    #[arg(long)]
    k: Option<usize>,
    /// Radius `Λ` of the deep gradient set.
    #[arg(long)]
    lambda: Option<f64>,
    /// Leading constant of the upper bounds.
    #[arg(long = "C")]
    c_upper: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c_lower: Option<f64>,
    #[arg(long = "c")]
    c: Option<f64>,
    #[arg(long)]
    c_iso: Option<f64>,
    #[arg(long)]
    c_cov: Option<f64>,
    /// JSON object with BoundConstants fields; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Failure mapped to an exit code.
enum Failure {
    Assertion(String),
    Lib(LipError),
}

impl From<LipError> for Failure {
    fn from(e: LipError) -> Self {
        Failure::Lib(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn emit(v: &Value) -> CmdResult {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn require<T>(v: Option<T>, name: &str) -> std::result::Result<T, Failure> {
    v.ok_or_else(|| Failure::Lib(LipError::InvalidConfig(format!("--{name} is required"))))
}

fn gen(
    d: Option<usize>,
    n: Option<usize>,
    l: Option<usize>,
    bias: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
) -> CmdResult {
    let bias = bias.map(|b| parse::bias(&b)).transpose()?;
    let merged = parse::merge(
        parse::config_object(config.as_deref())?,
        vec![
            ("d", d.map(Value::from)),
            ("N", n.map(Value::from)),
            ("L", l.map(Value::from)),
            ("bias", bias.map(serde_json::to_value).transpose()?),
            ("seed", seed.map(Value::from)),
        ],
    );
    let cfg: InitConfig = serde_json::from_value(merged)?;
    let net = sample_network(&cfg)?;
    let text = serde_json::to_string_pretty(&net)?;
    match out {
        Some(path) => {
            fs::write(&path, text + "\n")?;
            eprintln!("wrote d={} N={} L={} network to {}", cfg.d, cfg.n, cfg.l, path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn lip_exact(net: PathBuf, sup_all: bool, budget_lps: Option<u64>, budget_secs: Option<f64>, regions: bool) -> CmdResult {
    let net = parse::read_net(&net)?;
    let mut budget = Budget::default();
    if let Some(n) = budget_lps {
        budget.max_lp_calls = n;
    }
    if let Some(s) = budget_secs {
        if !(s > 0.0 && s.is_finite()) {
            return Err(LipError::InvalidConfig("--budget-secs must be positive".into()).into());
        }
        budget.max_time = Duration::from_secs_f64(s);
    }
    let r = exact_lipschitz(&net, LipOptions { budget, sup_all })?;
    let mut v = serde_json::to_value(&r)?;
    if regions {
        let e = enumerate_regions(&net, EnumerationMode::FullDimOnly, budget)?;
        let mut list = Vec::with_capacity(e.regions.len());
        for r in &e.regions {
            let g = net.pattern_gradient(&r.pattern)?;
            list.push(json!({
                "pattern": r.pattern.to_string(),
                "witness": r.witness,
                "margin": r.margin,
                "grad_norm": norm2(&g),
                "gradient": g,
            }));
        }
        v["regions"] = Value::Array(list);
    }
    eprintln!("lip = {} over {} full-dimensional regions ({} LP calls)", r.lip, r.full_dim_region_count, r.lp_calls);
    emit(&v)
}

fn lip_estimate(
    net: PathBuf,
    samples: Option<usize>,
    hill_climb: Option<usize>,
    seed: Option<u64>,
    law: Option<String>,
    config: Option<PathBuf>,
) -> CmdResult {
    let net = parse::read_net(&net)?;
    let law: Option<SampleLaw> = law.map(|l| parse::sample_law(&l)).transpose()?;
    let merged = parse::merge(
        parse::config_object(config.as_deref())?,
        vec![
            ("n_samples", samples.map(Value::from)),
            ("hill_climb_steps", hill_climb.map(Value::from)),
            ("seed", seed.map(Value::from)),
            ("sample_law", law.map(serde_json::to_value).transpose()?),
        ],
    );
    let mut merged = merged;
    if merged.get("n_samples").is_none() {
        merged["n_samples"] = EstimateConfig::default().n_samples.into();
    }
    let cfg: EstimateConfig = serde_json::from_value(merged)?;
    let est = sampled_lip_lower(&net, &cfg)?;
    let mut lower = est.lower_bound;
    let mut pattern = est.best_pattern.clone();
    let mut climbed = Value::Null;
    if let (Some(x), true) = (&est.best_point, cfg.hill_climb_steps > 0) {
        let mut rng = derive_trial_rng(cfg.seed, u64::MAX);
        let hc = pattern_hill_climb(&net, x, cfg.hill_climb_steps, &mut rng)?;
        climbed = json!({
            "grad_norm": hc.grad_norm,
            "moves": hc.trajectory.len() - 1,
            "pattern": hc.pattern.to_string(),
            "witness": hc.witness,
        });
        if hc.grad_norm > lower {
            lower = hc.grad_norm;
            pattern = Some(hc.pattern);
        }
    }
    eprintln!("certified lower bound {lower} ({} of {} samples differentiable)", est.certified_samples, cfg.n_samples);
    emit(&json!({
        "lower_bound": lower,
        "best_pattern": pattern.map(|p| p.to_string()),
        "method_breakdown": {
            "sampled": {
                "lower_bound": est.lower_bound,
                "best_point": est.best_point,
                "certified_samples": est.certified_samples,
                "n_samples": cfg.n_samples,
                "sample_law": cfg.sample_law,
            },
            "hill_climb": climbed,
        },
        "seed": cfg.seed,
    }))
}

fn bounds_cmd(a: BoundsArgs) -> CmdResult {
    let base = parse::config_object(a.config.as_deref())?;
    let merged = parse::merge(
        base,
        vec![
            ("c_upper", a.c_upper.map(Value::from)),
            ("c1", a.c1.map(Value::from)),
            ("c_lower", a.c_lower.map(Value::from)),
            ("c", a.c.map(Value::from)),
            ("c_iso", a.c_iso.map(Value::from)),
            ("c_cov", a.c_cov.map(Value::from)),
        ],
    );
    let k: BoundConstants = serde_json::from_value(merged)?;
    k.validate()?;
    let d = || require(a.d, "d");
    let n = || require(a.n, "N");
    let l = || require(a.l, "L");
    let eps = || require(a.eps, "eps");
    let with_prob = |b: BoundValue| (b.value, Some(b.prob_lower_bound));
    let (value, prob) = match a.which {
        Which::ShallowUpper => with_prob(bounds::shallow_upper(d()?, n()?, a.u, a.t, &k)?),
        Which::ShallowUpperSimple => (bounds::shallow_upper_simple(d()?, &k)?, None),
        Which::ShallowExpectation => (bounds::shallow_expectation(d()?, a.n, &k)?, None),
        Which::DeepUpper => with_prob(bounds::deep_upper(d()?, n()?, l()?, a.u, a.t, &k)?),
        Which::DeepUpperConvenience => with_prob(bounds::deep_upper_convenience(d()?, n()?, l()?, &k)?),
        Which::DeepUpperSimple => (bounds::deep_upper_simple(d()?, n()?, l()?, &k)?, None),
        Which::DeepExpectation => (bounds::deep_expectation(d()?, n()?, l()?, &k)?, None),
        Which::ShallowLower => with_prob(bounds::shallow_lower(d()?, n()?, a.u, a.t, &k)?),
        Which::ShallowLowerConvenience => with_prob(bounds::shallow_lower_convenience(d()?, n()?, &k)?),
        Which::DeepLower => with_prob(bounds::deep_lower(d()?, n()?, l()?, a.u, a.t, &k)?),
        Which::DeepLowerConvenience => with_prob(bounds::deep_lower_convenience(d()?, n()?, l()?, &k)?),
        Which::CoveringShallow => {
            let rank = match a.k {
                Some(r) => r,
                None => d()?.min(n()?),
            };
            (bounds::covering_bound_shallow(require(a.norm_w0, "norm-w0")?, rank, eps()?, &k)?, None)
        }
        Which::CoveringDeep => (bounds::covering_bound_deep(require(a.lambda, "lambda")?, d()?, n()?, l()?, eps()?)?, None),
        Which::DudleyShallow => {
            let rank = match a.k {
                Some(r) => r,
                None => d()?.min(n()?),
            };
            (bounds::dudley_shallow(require(a.norm_w0, "norm-w0")?, rank, &k)?, None)
        }
        Which::DudleyDeep => (bounds::dudley_deep(require(a.lambda, "lambda")?, d()?, n()?, l()?)?, None),
    };
    let which = a.which.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default();
    eprintln!("{which} = {value}");
    emit(&json!({
        "which": which,
        "value": value,
        "prob_lower_bound": prob,
        "inputs": {"d": a.d, "N": a.n, "L": a.l, "u": a.u, "t": a.t, "eps": a.eps, "norm_w0": a.norm_w0, "k": a.k, "lambda": a.lambda},
        "constants": k,
    }))
}

fn print_checks(rep: &ExperimentReport) {
    for c in &rep.checks {
        let tag = match (c.kind, c.passed) {
            (CheckKind::Assertive, true) => "PASS",
            (CheckKind::Assertive, false) => "FAIL",
            (CheckKind::Descriptive, _) => "INFO",
        };
        eprintln!("{tag} {}: observed {} (expected {}; tolerance: {})", c.name, c.observed, c.expected, c.tolerance);
    }
    for f in &rep.failures {
        eprintln!("trial {} failed: {}", f.trial, f.error);
    }
}

fn experiment(name: String, config: Option<PathBuf>, out: Option<PathBuf>, seed: Option<u64>) -> CmdResult {
    let cfg = parse::config_object(config.as_deref())?;
    let cfg = parse::merge(cfg, vec![("seed", seed.map(Value::from))]);
    let rep = run_experiment(&name, Some(&cfg))?;
    if let Some(dir) = &out {
        rep.write_to(dir)?;
        eprintln!("wrote {} rows to {}", rep.rows.len(), dir.join("rows.csv").display());
    }
    print_checks(&rep);
    println!("{}", rep.summary_json()?);
    if rep.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = rep.failed_checks().iter().map(|c| c.name.as_str()).collect();
        Err(Failure::Assertion(format!("failed checks: {}", names.join("; "))))
    }
}

fn counterexamples(json_out: bool) -> CmdResult {
    let rep = counterexample_suite(&CounterexampleConfig::default())?;
    for c in &rep.checks {
        println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    if json_out {
        println!("{}", rep.summary_json()?);
    }
    if rep.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = rep.failed_checks().iter().map(|c| c.name.as_str()).collect();
        Err(Failure::Assertion(format!("failed cases: {}", names.join("; "))))
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Gen { d, n, l, bias, seed, out, config } => gen(d, n, l, bias, seed, out, config),
        Command::Eval { net, x } => {
            let net = parse::read_net(&net)?;
            let (value, trace) = net.forward(&parse::point(&x)?)?;
            emit(&json!({
                "value": value,
                "pattern": trace.pattern.to_string(),
                "boundary_margin": trace.boundary_margin,
            }))
        }
        Command::Grad { net, x } => {
            let net = parse::read_net(&net)?;
            let x = parse::point(&x)?;
            let (value, g, trace) = net.value_and_gradient(&x)?;
            emit(&json!({
                "value": value,
                "gradient": g,
                "norm": norm2(&g),
                "pattern": trace.pattern.to_string(),
                "boundary_margin": trace.boundary_margin,
                "differentiable": trace.boundary_margin > 0.0,
            }))
        }
        Command::LipExact { net, sup_all, budget_lps, budget_secs, regions } => {
            lip_exact(net, sup_all, budget_lps, budget_secs, regions)
        }
        Command::LipEstimate { net, samples, hill_climb, seed, law, config } => {
            lip_estimate(net, samples, hill_climb, seed, law, config)
        }
        Command::Bounds(a) => bounds_cmd(a),
        Command::Experiment { name, config, out, seed } => experiment(name, config, out, seed),
        Command::Counterexamples { json } => counterexamples(json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.verbose > 0 {
        eprintln!("liplab {}", env!("CARGO_PKG_VERSION"));
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
