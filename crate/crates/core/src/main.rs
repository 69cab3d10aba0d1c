use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num::{One, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use olcpm::cli::{olcpm_to_value, parse_instance, upm_to_value, ParsedInstance};
use olcpm::error::Error;
use olcpm::frugal::{exact_utilities, run_frugal};
use olcpm::grades::{critical_values, perturbation_epsilon};
use olcpm::model::{
    format_rat, parse_rat, rat, rat_to_f64, OlcpmInstance, Rat, Realization, UpmInstance,
    DEFAULT_ENUM_CAP,
};
use olcpm::sampler::{SampleConfig, DEFAULT_REPLICATION_CAP};
use olcpm::solver::{
    solve_exact, solve_fpras_balanced, solve_fpras_bounded_support, sweep, ContractSolution,
    SweepMode, Utility,
};
use olcpm::upm::{
    choose_reduction_params, olcpm_to_upm, upm_exact, upm_monte_carlo, upm_to_olcpm,
    upm_to_olcpm_bounded_support, upm_uniform_poly, upm_via_olcpm, upm_via_olcpm_approx,
};

#[derive(Parser)]
#[command(name = "olcpm", about = "Linear contracts and unreliability on matroids", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SampleArgs {
    /// RNG seed for sampled paths.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Explicit replication count (overrides --mu).
    #[arg(long)]
    samples: Option<u64>,
    /// Per-probability accuracy target, as p/q.
    #[arg(long)]
    mu: Option<String>,
    /// Lift the budget and enumeration caps.
    #[arg(long)]
    allow_large: bool,
}

impl SampleArgs {
    fn config(&self) -> Result<SampleConfig, Error> {
        Ok(SampleConfig {
            seed: self.seed,
            replications: self.samples,
            mu: self.mu.as_deref().map(parse_rat).transpose()?,
            allow_large: self.allow_large,
            cap: DEFAULT_REPLICATION_CAP,
        })
    }

    fn enum_cap(&self) -> u64 {
        if self.allow_large {
            u64::MAX
        } else {
            DEFAULT_ENUM_CAP
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file and report its shape.
    Validate { file: String },
    /// Find the optimal contract.
    Solve {
        file: String,
        #[arg(long, default_value = "exact")]
        method: String,
        /// Approximation accuracy ε for the sampling methods.
        #[arg(long, default_value = "1/10")]
        epsilon: String,
        /// Balance bound ω for --method balanced.
        #[arg(long, default_value = "10")]
        omega: String,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Exact expected utilities at one contract.
    Evaluate {
        file: String,
        #[arg(long)]
        alpha: String,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// The candidate contract values the exact solver searches.
    CriticalValues {
        file: String,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Run the probing policy on one realization.
    Trace {
        file: String,
        #[arg(long)]
        alpha: String,
        /// Comma-separated outcome indices, one per element; drawn from the
        /// seed when omitted.
        #[arg(long)]
        realization: Option<String>,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Utilities across a grid of contracts plus all critical values.
    Sweep {
        file: String,
        #[arg(long, default_value_t = 20)]
        grid: u32,
        #[arg(long, default_value = "exact")]
        method: String,
        #[arg(long, default_value = "json")]
        format: String,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Unreliability problems.
    #[command(subcommand)]
    Upm(UpmCommand),
}

#[derive(Subcommand)]
enum UpmCommand {
    /// Probability that the special element stays unspanned.
    Solve {
        file: String,
        #[arg(long, default_value = "exact")]
        method: String,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Recast one acceptance probability of a contract instance.
    FromOlcpm {
        file: String,
        #[arg(long)]
        alpha: String,
        #[arg(long)]
        element: usize,
        #[arg(long, default_value_t = 0)]
        outcome: usize,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Build the contract instance whose optimum encodes the answer.
    ToOlcpm {
        file: String,
        #[arg(long)]
        beta: String,
        #[arg(long, default_value = "1/4")]
        epsilon: String,
        #[arg(long, default_value = "exact")]
        method: String,
    },
    /// Solve through the exact contract solver as the oracle.
    ViaOlcpm {
        file: String,
        /// Approximation factor; exact search when omitted.
        #[arg(long)]
        psi: Option<String>,
        #[command(flatten)]
        sample: SampleArgs,
    },
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn utility_value(u: &Utility) -> Value {
    match u {
        Utility::Exact(r) => Value::String(format_rat(r)),
        Utility::Sampled(x) => Value::String(fmt_f64(*x)),
    }
}

fn solution_value(sol: &ContractSolution) -> Value {
    let mut doc = json!({
        "alpha": format_rat(&sol.alpha_star),
        "utility": utility_value(&sol.utility),
        "method": sol.method,
        "candidates": sol
            .candidates
            .iter()
            .map(|(a, u)| json!({"alpha": format_rat(a), "utility": utility_value(u)}))
            .collect::<Vec<_>>(),
    });
    let obj = doc.as_object_mut().unwrap();
    if let Some(b) = &sol.certified_budget {
        obj.insert("certified_budget".into(), Value::String(b.to_string()));
    }
    if let Some(mu) = &sol.mu {
        obj.insert("mu".into(), Value::String(format_rat(mu)));
    }
    doc
}

fn load(path: &str) -> Result<ParsedInstance, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(vec![format!("{path}: {e}")]))?;
    parse_instance(&text)
}

fn load_olcpm(path: &str) -> Result<OlcpmInstance, Error> {
    match load(path)? {
        ParsedInstance::Olcpm(i) => Ok(i),
        ParsedInstance::Upm(_) => Err(Error::Validation(vec![format!(
            "{path}: expected an olcpm instance"
        )])),
    }
}

fn load_upm(path: &str) -> Result<UpmInstance, Error> {
    match load(path)? {
        ParsedInstance::Upm(i) => Ok(i),
        ParsedInstance::Olcpm(_) => Err(Error::Validation(vec![format!(
            "{path}: expected a upm instance"
        )])),
    }
}

fn parse_alpha(text: &str) -> Result<Rat, Error> {
    let a = parse_rat(text)?;
    if a.is_negative() || a > Rat::one() {
        return Err(Error::Validation(vec![format!(
            "alpha {text} outside [0,1]"
        )]));
    }
    Ok(a)
}

fn draw_realization(inst: &OlcpmInstance, seed: u64) -> Realization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = inst
        .elements
        .iter()
        .map(|e| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (k, (_, p)) in e.dist.outcomes.iter().enumerate() {
                acc += rat_to_f64(p);
                if u < acc {
                    return k;
                }
            }
            e.dist.outcomes.len().saturating_sub(1)
        })
        .collect();
    Realization { outcome }
}

fn run(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Validate { file } => {
            let inst = load(&file)?;
            let (n, m) = match &inst {
                ParsedInstance::Olcpm(i) => (i.n(), i.m),
                ParsedInstance::Upm(i) => (i.n(), 0),
            };
            Ok(json!({"ok": true, "kind": inst.kind(), "n": n, "m": m}).to_string())
        }
        Command::Solve {
            file,
            method,
            epsilon,
            omega,
            sample,
        } => {
            let inst = load_olcpm(&file)?;
            let sol = match method.as_str() {
                "exact" => solve_exact(&inst, sample.enum_cap())?,
                "balanced" => solve_fpras_balanced(
                    &inst,
                    &parse_rat(&epsilon)?,
                    &parse_rat(&omega)?,
                    &sample.config()?,
                )?,
                "bounded-support" => {
                    solve_fpras_bounded_support(&inst, &parse_rat(&epsilon)?, &sample.config()?)?
                }
                other => {
                    return Err(Error::Validation(vec![format!(
                        "unknown solve method {other:?}"
                    )]))
                }
            };
            Ok(solution_value(&sol).to_string())
        }
        Command::Evaluate {
            file,
            alpha,
            sample,
        } => {
            let inst = load_olcpm(&file)?;
            let a = parse_alpha(&alpha)?;
            let r = exact_utilities(&inst, &a, sample.enum_cap())?;
            Ok(json!({
                "alpha": format_rat(&a),
                "u_principal": format_rat(&r.u_principal),
                "u_agent": format_rat(&r.u_agent),
                "expected_cost": format_rat(&r.expected_cost),
                "expected_reward": format_rat(&r.expected_reward),
                "epsilon": format_rat(&r.epsilon),
                "acceptance": r
                    .acceptance
                    .iter()
                    .map(|row| row.iter().map(|x| Value::String(format_rat(x))).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            })
            .to_string())
        }
        Command::CriticalValues { file, format } => {
            let inst = load_olcpm(&file)?;
            let vals = critical_values(&inst);
            match format.as_str() {
                "csv" => Ok(vals.iter().map(format_rat).collect::<Vec<_>>().join("\n")),
                _ => Ok(Value::Array(
                    vals.iter().map(|a| Value::String(format_rat(a))).collect(),
                )
                .to_string()),
            }
        }
        Command::Trace {
            file,
            alpha,
            realization,
            sample,
        } => {
            let inst = load_olcpm(&file)?;
            let a = parse_alpha(&alpha)?;
            let real = match realization {
                Some(text) => {
                    let outcome: Vec<usize> = text
                        .split(',')
                        .map(|s| {
                            s.trim().parse().map_err(|_| {
                                Error::Validation(vec![format!(
                                    "realization: {s:?} is not an outcome index"
                                )])
                            })
                        })
                        .collect::<Result<_, _>>()?;
                    if outcome.len() != inst.n() {
                        return Err(Error::Validation(vec![format!(
                            "realization has {} entries for {} elements",
                            outcome.len(),
                            inst.n()
                        )]));
                    }
                    for (i, &k) in outcome.iter().enumerate() {
                        if k >= inst.m {
                            return Err(Error::Validation(vec![format!(
                                "realization: element {i} outcome {k} out of range (m={})",
                                inst.m
                            )]));
                        }
                    }
                    Realization { outcome }
                }
                None => draw_realization(&inst, sample.seed),
            };
            let eps = perturbation_epsilon(&inst, &a);
            let trace = run_frugal(&inst, &a, &real, &inst.perturbed_costs(&eps));
            Ok(json!({
                "alpha": format_rat(&a),
                "epsilon": format_rat(&eps),
                "realization": real.outcome,
                "probe_order": trace.probe_order,
                "returned": trace.returned,
                "principal_reward": format_rat(&trace.principal_reward),
                "agent_payment": format_rat(&trace.agent_payment),
                "probing_cost": format_rat(&trace.probing_cost),
            })
            .to_string())
        }
        Command::Sweep {
            file,
            grid,
            method,
            format,
            sample,
        } => {
            let inst = load_olcpm(&file)?;
            let mut alphas: Vec<Rat> = (0..=grid).map(|i| rat(i as i64, grid.max(1) as i64)).collect();
            alphas.extend(critical_values(&inst));
            alphas.sort();
            alphas.dedup();
            let mode = match method.as_str() {
                "exact" => SweepMode::Exact {
                    cap: sample.enum_cap(),
                },
                "monte-carlo" => SweepMode::Sampled(sample.config()?),
                other => {
                    return Err(Error::Validation(vec![format!(
                        "unknown sweep method {other:?}"
                    )]))
                }
            };
            let rows = sweep(&inst, &alphas, &mode)?;
            let cells = |u: &Utility| match u {
                Utility::Exact(r) => format_rat(r),
                Utility::Sampled(x) => fmt_f64(*x),
            };
            match format.as_str() {
                "csv" => {
                    let mut out = String::from("alpha,u_principal,u_agent,expected_cost");
                    for r in &rows {
                        out.push('\n');
                        out.push_str(&format!(
                            "{},{},{},{}",
                            format_rat(&r.alpha),
                            cells(&r.u_principal),
                            cells(&r.u_agent),
                            cells(&r.expected_cost)
                        ));
                    }
                    Ok(out)
                }
                _ => Ok(Value::Array(
                    rows.iter()
                        .map(|r| {
                            json!({
                                "alpha": format_rat(&r.alpha),
                                "u_principal": utility_value(&r.u_principal),
                                "u_agent": utility_value(&r.u_agent),
                                "expected_cost": utility_value(&r.expected_cost),
                            })
                        })
                        .collect(),
                )
                .to_string()),
            }
        }
        Command::Upm(cmd) => run_upm(cmd),
    }
}

fn run_upm(cmd: UpmCommand) -> Result<String, Error> {
    match cmd {
        UpmCommand::Solve {
            file,
            method,
            sample,
        } => {
            let inst = load_upm(&file)?;
            match method.as_str() {
                "exact" => {
                    let rho = upm_exact(&inst, sample.enum_cap())?;
                    Ok(json!({"rho": format_rat(&rho)}).to_string())
                }
                "uniform-poly" => {
                    let rho = upm_uniform_poly(&inst)?;
                    Ok(json!({"rho": format_rat(&rho)}).to_string())
                }
                "monte-carlo" => {
                    let mut cfg = sample.config()?;
                    if cfg.replications.is_none() && cfg.mu.is_none() {
                        cfg.replications = Some(100_000);
                    }
                    let est = upm_monte_carlo(&inst, &cfg)?;
                    Ok(json!({"rho_estimate": fmt_f64(est), "seed": cfg.seed}).to_string())
                }
                other => Err(Error::Validation(vec![format!(
                    "unknown upm method {other:?}"
                )])),
            }
        }
        UpmCommand::FromOlcpm {
            file,
            alpha,
            element,
            outcome,
            sample,
        } => {
            let inst = load_olcpm(&file)?;
            let a = parse_alpha(&alpha)?;
            let red = olcpm_to_upm(&inst, &a, element, outcome, sample.enum_cap())?;
            let mut doc = json!({"r": format_rat(&red.r)});
            if let Some(upm) = &red.upm {
                doc.as_object_mut()
                    .unwrap()
                    .insert("instance".into(), upm_to_value(upm));
            }
            Ok(doc.to_string())
        }
        UpmCommand::ToOlcpm {
            file,
            beta,
            epsilon,
            method,
        } => {
            let inst = load_upm(&file)?;
            let params = choose_reduction_params(inst.n(), &parse_rat(&beta)?, &parse_rat(&epsilon)?);
            let out = match method.as_str() {
                "exact" => upm_to_olcpm(&inst, &params)?,
                "bounded-support" => upm_to_olcpm_bounded_support(&inst, &params)?,
                other => {
                    return Err(Error::Validation(vec![format!(
                        "unknown reduction method {other:?}"
                    )]))
                }
            };
            Ok(json!({
                "beta": format_rat(&params.beta),
                "epsilon": format_rat(&params.eps),
                "delta": format_rat(&params.delta),
                "xi": format_rat(&params.xi),
                "instance": olcpm_to_value(&out),
            })
            .to_string())
        }
        UpmCommand::ViaOlcpm { file, psi, sample } => {
            let inst = load_upm(&file)?;
            let cap = sample.enum_cap();
            let oracle = |o: &OlcpmInstance| solve_exact(o, cap);
            let rho = match psi {
                None => upm_via_olcpm(&inst, oracle, cap)?,
                Some(text) => upm_via_olcpm_approx(&inst, &parse_rat(&text)?, oracle, cap)?,
            };
            Ok(json!({"rho": format_rat(&rho)}).to_string())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InfeasibleParams(_)
        | Error::BalanceViolated { .. }
        | Error::SupportShape(_)
        | Error::NegativeSplit { .. } => 2,
        Error::EnumerationInfeasible { .. } | Error::ReplicationCapExceeded { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
