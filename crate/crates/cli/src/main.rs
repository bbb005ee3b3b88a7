//! Benchmark driver: generate instances, run solvers, and post-process
//! bound traces.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dlns_core::generators::{
    default_participant_pool, gen_grid, gen_meeting, gen_random, gen_scale_free, DEFAULT_COST_MAX,
    DEFAULT_SLOT_MAX,
};
use dlns_core::{
    dpop, dsa, engine, io, normalize_quality, oracle, quality_ratios, sim, DomainKnowledgeDestroy,
    EngineConfig, InitMode, RandomDestroy, RepairAlgorithm, RunTrace, TerminationRule, Utility,
};

#[derive(Parser)]
#[command(
    name = "dlns",
    about = "Large neighborhood search solver for DCOPs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Random,
    ScaleFree,
    Grid,
    Meeting,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Tdbr,
    DpopDbr,
    Dsa,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum Destroy {
    Random,
    Dk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Random,
    Greedy,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark instance file.
    Gen {
        #[arg(long, value_enum)]
        family: Family,
        /// Agent count (random and scale-free families).
        #[arg(long)]
        n: Option<usize>,
        /// Edge density of random networks.
        #[arg(long, default_value_t = 0.5)]
        p1: f64,
        /// Domain size.
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        /// Meeting count (meeting family).
        #[arg(long)]
        meetings: Option<usize>,
        /// Participant pool size (meeting family).
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_COST_MAX)]
        cost_max: i64,
        #[arg(long, default_value_t = DEFAULT_SLOT_MAX)]
        slot_max: i64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a solver on an instance and emit a bound trace.
    Solve {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        iters: Option<u64>,
        #[arg(long)]
        timeout_ms: Option<u64>,
        #[arg(long)]
        sim_timeout: Option<u64>,
        /// Relative bound-gap stopping threshold.
        #[arg(long)]
        gap: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Destroy::Random)]
        destroy: Destroy,
        #[arg(long, default_value_t = 0.5)]
        p_destroy: f64,
        /// Activation probability of the local-search baseline.
        #[arg(long, default_value_t = dsa::DEFAULT_ACTIVATION_P)]
        dsa_p: f64,
        #[arg(long, value_enum, default_value_t = Init::Random)]
        init: Init,
        #[arg(long, default_value_t = sim::DEFAULT_T_MSG)]
        t_msg: u64,
        #[arg(long, default_value_t = sim::DEFAULT_T_CC)]
        t_cc: u64,
        #[arg(long, default_value_t = dpop::DEFAULT_WIDTH_CAP)]
        width_cap: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Min-max normalize the bound series of several traces on one instance.
    Normalize {
        /// Trace CSV files, one per algorithm.
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        traces: Vec<PathBuf>,
        /// Labels matching the trace files.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long, default_value_t = 32)]
        buckets: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn seed_or_env(seed: Option<u64>) -> Result<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var("DLNS_SEED") {
        Ok(text) => text
            .parse()
            .with_context(|| format!("DLNS_SEED must be an integer, got {text:?}")),
        Err(_) => Ok(0),
    }
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            family,
            n,
            p1,
            d,
            rows,
            cols,
            meetings,
            pool,
            cost_max,
            slot_max,
            seed,
            out,
        } => {
            let seed = seed_or_env(seed)?;
            let inst = match family {
                Family::Random => {
                    let n = n.context("--n is required for the random family")?;
                    gen_random(n, p1, d, cost_max, seed)?
                }
                Family::ScaleFree => {
                    let n = n.context("--n is required for the scale-free family")?;
                    gen_scale_free(n, d, cost_max, seed)?
                }
                Family::Grid => {
                    let rows = rows.context("--rows is required for the grid family")?;
                    let cols = cols.context("--cols is required for the grid family")?;
                    gen_grid(rows, cols, d, cost_max, seed)?
                }
                Family::Meeting => {
                    let meetings = meetings.context("--meetings is required")?;
                    let pool = pool.unwrap_or_else(|| default_participant_pool(meetings));
                    gen_meeting(meetings, pool, slot_max, seed)?
                }
            };
            io::write_file(&inst, &out)?;
            println!(
                "wrote {} ({} agents, {} functions)",
                out.display(),
                inst.variables().len(),
                inst.functions().len()
            );
            Ok(())
        }

        Command::Solve {
            algo,
            input,
            iters,
            timeout_ms,
            sim_timeout,
            gap,
            seed,
            destroy,
            p_destroy,
            dsa_p,
            init,
            t_msg,
            t_cc,
            width_cap,
            trace,
            summary,
        } => {
            let seed = seed_or_env(seed)?;
            if !(0.0..=1.0).contains(&p_destroy) {
                bail!("--p-destroy must be in [0, 1], got {p_destroy}");
            }
            if !(0.0..=1.0).contains(&dsa_p) {
                bail!("--dsa-p must be in [0, 1], got {dsa_p}");
            }
            let inst =
                io::read_file(&input).with_context(|| format!("reading {}", input.display()))?;

            if let Algo::Exact = algo {
                let (assignment, optimum) = oracle::exact_solve(&inst, 1 << 24)?;
                println!("optimum {optimum}");
                println!("assignment {}", io::assignment_to_json(&assignment));
                if let Some(path) = summary {
                    let text = serde_json::json!({
                        "algo": "exact",
                        "instance": input.display().to_string(),
                        "optimum": utility_json(Some(optimum)),
                        "feasible": optimum.is_finite(),
                    });
                    std::fs::write(path, format!("{text:#}\n"))?;
                }
                return Ok(());
            }

            let result = match algo {
                Algo::Dsa => {
                    let iters = iters.unwrap_or(100);
                    dsa::dsa_b(&inst, dsa_p, iters, seed, t_cc, t_msg)?
                }
                Algo::Tdbr | Algo::DpopDbr => {
                    let termination = TerminationRule {
                        max_iterations: iters,
                        wall_timeout: timeout_ms.map(std::time::Duration::from_millis),
                        simulated_timeout: sim_timeout,
                        gap_threshold: gap,
                    };
                    if termination.validate().is_err() {
                        bail!("set at least one of --iters, --timeout-ms, --sim-timeout, --gap");
                    }
                    let mut cfg = EngineConfig::new(termination, seed);
                    cfg.t_cc = t_cc;
                    cfg.t_msg = t_msg;
                    cfg.init = match init {
                        Init::Random => InitMode::Random,
                        Init::Greedy => InitMode::Greedy,
                    };
                    let repair = match algo {
                        Algo::Tdbr => RepairAlgorithm::TreeDbr,
                        _ => RepairAlgorithm::DpopDbr {
                            width_cap,
                            max_table_bytes: dpop::DEFAULT_MAX_TABLE_BYTES,
                        },
                    };
                    match destroy {
                        Destroy::Random => {
                            let mut strat = RandomDestroy { p_destroy, seed };
                            engine::run(&inst, &repair, &mut strat, &cfg)?
                        }
                        Destroy::Dk => {
                            let mut strat = DomainKnowledgeDestroy;
                            engine::run(&inst, &repair, &mut strat, &cfg)?
                        }
                    }
                }
                Algo::Exact => unreachable!(),
            };

            if let Some(path) = &trace {
                result.write_csv(path)?;
            }
            print_outcome(&result);
            if let Some(path) = summary {
                let text = summary_json(&inst, &input.display().to_string(), &result);
                std::fs::write(path, format!("{text:#}\n"))?;
            }
            Ok(())
        }

        Command::Normalize {
            traces,
            labels,
            buckets,
            out,
            summary,
        } => {
            if !labels.is_empty() && labels.len() != traces.len() {
                bail!("{} labels for {} traces", labels.len(), traces.len());
            }
            let mut loaded = Vec::new();
            for (i, path) in traces.iter().enumerate() {
                let trace = RunTrace::read_csv(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let label = labels.get(i).cloned().unwrap_or_else(|| format!("algo{i}"));
                loaded.push((label, trace));
            }
            let pool: Vec<(String, &RunTrace)> =
                loaded.iter().map(|(l, t)| (l.clone(), t)).collect();
            let series = normalize_quality(&pool, buckets)?;

            let mut csv = String::from("sim_time");
            for label in series.lb.keys() {
                csv.push_str(&format!(",{label}_lb"));
            }
            for label in series.ub.keys() {
                csv.push_str(&format!(",{label}_ub"));
            }
            csv.push('\n');
            for (i, t) in series.buckets.iter().enumerate() {
                csv.push_str(&t.to_string());
                for vals in series.lb.values() {
                    csv.push_str(&format!(",{}", vals[i]));
                }
                for vals in series.ub.values() {
                    csv.push_str(&format!(",{}", vals[i]));
                }
                csv.push('\n');
            }
            std::fs::write(&out, csv)?;

            let finals: BTreeMap<String, f64> = pool
                .iter()
                .filter_map(|(l, t)| t.final_best_lb().finite().map(|v| (l.clone(), v)))
                .collect();
            let eps = quality_ratios(&finals);
            println!("quality ratios: {eps:?}");
            if let Some(path) = summary {
                let text = serde_json::json!({
                    "epsilon": eps,
                    "final_quality": finals,
                    "buckets": series.buckets.len(),
                });
                std::fs::write(path, format!("{text:#}\n"))?;
            }
            Ok(())
        }
    }
}

fn utility_json(u: Option<Utility>) -> serde_json::Value {
    match u {
        Some(Utility::Finite(v)) => serde_json::json!(v),
        Some(Utility::NegInf) => serde_json::json!("-inf"),
        None => serde_json::Value::Null,
    }
}

fn print_outcome(trace: &RunTrace) {
    let last = trace.rows.last();
    println!(
        "{}: {} iterations, best_lb {}, best_ub {}, rho {}",
        trace.algo,
        trace.rows.len().saturating_sub(1),
        last.map(|r| r.best_lb.to_string()).unwrap_or_default(),
        last.and_then(|r| r.best_ub)
            .map(|u| u.to_string())
            .unwrap_or_else(|| "-".into()),
        trace
            .rho()
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "-".into()),
    );
}

fn summary_json(
    inst: &dlns_core::DcopInstance,
    input: &str,
    trace: &RunTrace,
) -> serde_json::Value {
    let last = trace.rows.last();
    serde_json::json!({
        "algo": trace.algo,
        "instance": input,
        "agents": inst.variables().len(),
        "functions": inst.functions().len(),
        "iterations": trace.rows.len().saturating_sub(1),
        "best_lb": utility_json(last.map(|r| r.best_lb)),
        "best_ub": utility_json(last.and_then(|r| r.best_ub)),
        "rho": trace.rho(),
        "sim_time": last.map(|r| r.sim_time),
        "wall_ms": last.map(|r| r.wall_ms),
        "messages": last.map(|r| r.msgs),
        "payload": last.map(|r| r.payload),
        "max_payload": last.map(|r| r.max_payload),
        "constraint_checks": last.map(|r| r.ccs),
        "first_feasible_k": trace.first_feasible_k,
    })
}
