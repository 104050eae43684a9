//! Command-line harness: simulation runs, parameter sweeps, the
//! truthfulness fuzzer, the offline oracle and trace statistics.
//!
//! Every random quantity flows from explicit seeds through ChaCha12, so
//! identical configurations reproduce byte-identical outputs on any
//! platform.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use mchain::baselines::{offline_optimal, random_greedy};
use mchain::engine::run_mchain;
use mchain::metrics::{
    aggregate, fuzz_truthfulness, FuzzReport, Mechanism, ManipulationKind, RunMetrics,
};
use mchain::model::ProblemInstance;
use mchain::vm::VmConfig;
use mchain::workload::{
    gen_instance, load_trace, trace_to_instance, ProximityTrace, SynthParams, TraceValueParams,
};

#[derive(Parser)]
#[command(name = "mchain", version, about = "Multi-market dynamic double auction simulator")]
struct Cli {
    /// TOML config file; command-line flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the mechanism and baselines per seed; write one metrics row each.
    Simulate(SimulateArgs),
    /// Run a grid over inter-arrival × volatility × groups-per-user and
    /// write per-cell aggregates.
    Sweep(SweepArgs),
    /// Attack a mechanism with randomized misreports.
    Fuzz(FuzzArgs),
    /// Print the offline optimal value of an instance file.
    Oracle(OracleArgs),
    /// Print per-period group statistics of a proximity trace.
    TraceInfo(TraceInfoArgs),
}

/// Synthetic-workload knobs shared by simulate and sweep.
#[derive(Args, Clone, Default)]
struct ParamFlags {
    #[arg(long)]
    mean_interarrival: Option<f64>,
    #[arg(long)]
    max_patience: Option<u32>,
    #[arg(long)]
    num_groups: Option<u32>,
    #[arg(long)]
    groups_per_user: Option<u32>,
    #[arg(long)]
    volatility: Option<f64>,
    #[arg(long)]
    initial_mean: Option<f64>,
    #[arg(long)]
    total_users: Option<u64>,
    #[arg(long)]
    buyer_fraction: Option<f64>,
}

impl ParamFlags {
    fn apply(&self, mut p: SynthParams) -> SynthParams {
        if let Some(v) = self.mean_interarrival {
            p.mean_interarrival = v;
        }
        if let Some(v) = self.max_patience {
            p.max_patience = v;
        }
        if let Some(v) = self.num_groups {
            p.num_groups = v;
        }
        if let Some(v) = self.groups_per_user {
            p.groups_per_user = v;
        }
        if let Some(v) = self.volatility {
            p.volatility = v;
        }
        if let Some(v) = self.initial_mean {
            p.initial_mean = v;
        }
        if let Some(v) = self.total_users {
            p.total_users = v;
        }
        if let Some(v) = self.buyer_fraction {
            p.buyer_fraction = v;
        }
        p
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamFlags,
    /// Comma-separated seed list, e.g. 0,1,2,3,4.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Proximity trace CSV; switches from synthetic to trace workload.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    params: ParamFlags,
    /// Grid values for the mean inter-arrival time.
    #[arg(long, value_delimiter = ',')]
    interarrival_grid: Vec<f64>,
    /// Grid values for the volatility γ.
    #[arg(long, value_delimiter = ',')]
    volatility_grid: Vec<f64>,
    /// Grid values for groups per user ℓ.
    #[arg(long, value_delimiter = ',')]
    ell_grid: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismFlag {
    Mchain,
    PerGroupMcafeeSequential,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, value_enum)]
    mechanism: Option<MechanismFlag>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args)]
struct TraceInfoArgs {
    #[arg(long)]
    trace: PathBuf,
}

/// Keys of the optional TOML config file; any command-line flag overrides
/// the corresponding key.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    params: SynthParams,
    seeds: Option<Vec<u64>>,
    trace: Option<PathBuf>,
    out: Option<PathBuf>,
    mechanism: Option<String>,
    trials: Option<u64>,
    fuzz_seed: Option<u64>,
    interarrival_grid: Option<Vec<f64>>,
    volatility_grid: Option<Vec<f64>>,
    ell_grid: Option<Vec<u32>>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, String> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            toml::from_str(&text).map_err(|e| format!("config {}: {e}", p.display()))
        }
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), String> {
    match path {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(p) => std::fs::write(p, content)
            .map_err(|e| format!("cannot write {}: {e}", p.display())),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "null".into())
}

/// One end-to-end evaluation: mechanism, offline optimum and greedy
/// baseline on the same instance.
fn evaluate(instance: &ProblemInstance, params: &SynthParams, seed: u64) -> RunMetrics {
    let outcome =
        run_mchain(instance, None, &VmConfig::default()).expect("generated instance is valid");
    let (v_opt, _) = offline_optimal(instance);
    let (v_g, _) = random_greedy(instance, seed);
    RunMetrics {
        seed,
        mean_interarrival: params.mean_interarrival,
        volatility: params.volatility,
        groups_per_user: params.groups_per_user,
        v_mchain: outcome.total_value,
        v_opt,
        v_g,
    }
}

fn metrics_rows(rows: &[(RunMetrics, Option<u64>)]) -> String {
    let mut out = String::from("# schema: mchain-metrics-v1\n");
    out.push_str("seed,interarrival,gamma,ell,v_mchain,v_opt,v_g,e,l,trace_digest\n");
    for (m, digest) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            m.seed,
            m.mean_interarrival,
            m.volatility,
            m.groups_per_user,
            m.v_mchain,
            m.v_opt,
            m.v_g,
            fmt_opt(m.efficiency()),
            fmt_opt(m.loss()),
            digest.map(|d| format!("{d:016x}")).unwrap_or_default(),
        );
    }
    out
}

fn warn_ranges(params: &SynthParams) {
    for w in params.range_warnings() {
        eprintln!("warning: {w}");
    }
}

fn cmd_simulate(args: &SimulateArgs, file: &FileConfig) -> Result<(), String> {
    let params = args.params.apply(file.params.clone());
    params.validate().map_err(|e| e.to_string())?;
    warn_ranges(&params);
    let seeds = args
        .seeds
        .clone()
        .or_else(|| file.seeds.clone())
        .unwrap_or_else(|| (0..5).collect());
    if seeds.is_empty() {
        return Err("need at least one seed".into());
    }
    let trace_path = args.trace.clone().or_else(|| file.trace.clone());

    let trace: Option<ProximityTrace> = match &trace_path {
        Some(p) => Some(load_trace(p).map_err(|e| e.to_string())?),
        None => None,
    };

    let mut rows: Vec<(RunMetrics, Option<u64>)> = seeds
        .par_iter()
        .map(|&seed| match &trace {
            Some(t) => {
                let value_params = TraceValueParams {
                    initial_mean: params.initial_mean,
                    volatility: params.volatility,
                    buyer_fraction: params.buyer_fraction,
                };
                let (instance, _) =
                    trace_to_instance(t, &value_params, params.max_patience, seed);
                let cell = SynthParams { seed, ..params.clone() };
                (evaluate(&instance, &cell, seed), Some(t.digest()))
            }
            None => {
                let cell = SynthParams { seed, ..params.clone() };
                let instance = gen_instance(&cell).expect("params validated");
                (evaluate(&instance, &cell, seed), None)
            }
        })
        .collect();
    rows.sort_by_key(|(m, _)| m.seed);

    let out_path = args.out.clone().or_else(|| file.out.clone());
    write_output(out_path.as_deref(), &metrics_rows(&rows))
}

fn cmd_sweep(args: &SweepArgs, file: &FileConfig) -> Result<(), String> {
    let base = args.params.apply(file.params.clone());
    let ia_grid = if args.interarrival_grid.is_empty() {
        file.interarrival_grid.clone().unwrap_or_default()
    } else {
        args.interarrival_grid.clone()
    };
    let vol_grid = if args.volatility_grid.is_empty() {
        file.volatility_grid.clone().unwrap_or_default()
    } else {
        args.volatility_grid.clone()
    };
    let ell_grid = if args.ell_grid.is_empty() {
        file.ell_grid.clone().unwrap_or_default()
    } else {
        args.ell_grid.clone()
    };
    if ia_grid.is_empty() || vol_grid.is_empty() || ell_grid.is_empty() {
        return Err("empty sweep grid: provide interarrival, volatility and ell values".into());
    }
    let seeds = args
        .seeds
        .clone()
        .or_else(|| file.seeds.clone())
        .unwrap_or_else(|| (0..5).collect());
    if seeds.is_empty() {
        return Err("need at least one seed".into());
    }

    let mut cells = Vec::new();
    for &ia in &ia_grid {
        for &vol in &vol_grid {
            for &ell in &ell_grid {
                for &seed in &seeds {
                    let params = SynthParams {
                        mean_interarrival: ia,
                        volatility: vol,
                        groups_per_user: ell,
                        seed,
                        ..base.clone()
                    };
                    params.validate().map_err(|e| e.to_string())?;
                    cells.push(params);
                }
            }
        }
    }
    warn_ranges(&cells[0]);

    let mut runs: Vec<RunMetrics> = cells
        .par_iter()
        .map(|params| {
            let instance = gen_instance(params).expect("params validated");
            evaluate(&instance, params, params.seed)
        })
        .collect();
    runs.sort_by(|a, b| {
        (a.mean_interarrival, a.volatility, a.groups_per_user, a.seed)
            .partial_cmp(&(b.mean_interarrival, b.volatility, b.groups_per_user, b.seed))
            .expect("finite parameters")
    });

    let mut out = String::from("# schema: mchain-sweep-v1\n");
    out.push_str("interarrival,gamma,ell,runs,mean_e,std_e,mean_l,std_l\n");
    for c in aggregate(&runs) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.mean_interarrival,
            c.volatility,
            c.groups_per_user,
            c.runs,
            fmt_opt(c.mean_e),
            fmt_opt(c.std_e),
            fmt_opt(c.mean_l),
            fmt_opt(c.std_l),
        );
    }
    let out_path = args.out.clone().or_else(|| file.out.clone());
    write_output(out_path.as_deref(), &out)
}

fn describe_manipulation(kind: &ManipulationKind) -> String {
    match kind {
        ManipulationKind::LaterArrival { delta } => format!("later_arrival(+{delta})"),
        ManipulationKind::Departure { departure } => format!("departure({departure})"),
        ManipulationKind::Value { value } => format!("value({value})"),
        ManipulationKind::GroupSubset { .. } => "group_subset".into(),
    }
}

fn fuzz_report_csv(report: &FuzzReport) -> String {
    let mut out = String::from("# schema: mchain-fuzz-v1\n");
    let mech = match report.mechanism {
        Mechanism::MChain => "mchain",
        Mechanism::PerGroupMcafeeSequential => "per_group_mcafee_sequential",
    };
    let _ = writeln!(
        out,
        "# mechanism={mech} trials={} comparisons={} violations={}",
        report.trials,
        report.comparisons,
        report.violations.len()
    );
    out.push_str("instance_digest,target,manipulation,utility_truth,utility_lie\n");
    for v in &report.violations {
        let _ = writeln!(
            out,
            "{:016x},{},{},{},{}",
            v.instance_digest,
            v.manipulation.target.0,
            describe_manipulation(&v.manipulation.kind),
            v.utility_truth,
            v.utility_lie,
        );
    }
    out
}

fn cmd_fuzz(args: &FuzzArgs, file: &FileConfig) -> Result<bool, String> {
    let mechanism = match args.mechanism {
        Some(MechanismFlag::Mchain) => Mechanism::MChain,
        Some(MechanismFlag::PerGroupMcafeeSequential) => Mechanism::PerGroupMcafeeSequential,
        None => match file.mechanism.as_deref() {
            None | Some("mchain") => Mechanism::MChain,
            Some("per_group_mcafee_sequential") => Mechanism::PerGroupMcafeeSequential,
            Some(other) => return Err(format!("unknown mechanism {other:?}")),
        },
    };
    let trials = args.trials.or(file.trials).unwrap_or(1000);
    if trials == 0 {
        return Err("trials must be ≥ 1".into());
    }
    let seed = args.seed.or(file.fuzz_seed).unwrap_or(0);
    let report = fuzz_truthfulness(mechanism, trials, seed, &VmConfig::default());
    let out_path = args.out.clone().or_else(|| file.out.clone());
    write_output(out_path.as_deref(), &fuzz_report_csv(&report))?;
    Ok(report.violations.is_empty())
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.instance)
        .map_err(|e| format!("cannot read {}: {e}", args.instance.display()))?;
    let instance = ProblemInstance::from_json(&text).map_err(|e| e.to_string())?;
    let problems = instance.validate();
    if !problems.is_empty() {
        return Err(format!("invalid instance: {}", problems.join("; ")));
    }
    let (v_opt, matching) = offline_optimal(&instance);
    println!("v_opt,{v_opt}");
    for (b, s) in matching {
        println!("pair,{},{}", b.0, s.0);
    }
    Ok(())
}

fn cmd_trace_info(args: &TraceInfoArgs) -> Result<(), String> {
    let trace = load_trace(&args.trace).map_err(|e| e.to_string())?;
    println!("# schema: mchain-trace-info-v1");
    println!("# trace_digest={:016x}", trace.digest());
    println!("period,users,groups,mean_group_size,frac_groups_le2");
    let mut small = 0usize;
    let mut total = 0usize;
    for (&t, edges) in &trace.edges {
        let users = trace.users_at(t);
        let groups = mchain::workload::cliques_to_groups(&users, edges);
        let sizes: Vec<usize> = groups.iter().map(BTreeSet::len).collect();
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64;
        let le2 = sizes.iter().filter(|&&s| s <= 2).count();
        small += le2;
        total += sizes.len();
        println!(
            "{t},{},{},{mean},{}",
            users.len(),
            sizes.len(),
            le2 as f64 / sizes.len().max(1) as f64
        );
    }
    if total > 0 {
        println!("# overall_frac_groups_le2={}", small as f64 / total as f64);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match load_config(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a, &file).map(|()| true),
        Cmd::Sweep(a) => cmd_sweep(a, &file).map(|()| true),
        Cmd::Fuzz(a) => cmd_fuzz(a, &file),
        Cmd::Oracle(a) => cmd_oracle(a).map(|()| true),
        Cmd::TraceInfo(a) => cmd_trace_info(a).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        // Fuzz found violations: report written, fail the gate.
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
