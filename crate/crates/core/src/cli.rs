//! Command-line surface: solve instances, run certification, generate
//! instances, run the oracle, and emit JSON reports. All reports are JSON;
//! `--pretty` switches to indented output. Wall-clock timings go to stderr
//! so reports stay byte-reproducible for fixed seeds.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::certifier::{grid_certify, GridConfig};
use crate::error::{Error, Result};
use crate::gen::{gen_lower_bound_instance, gen_random_instance, RandomKind};
use crate::growth::DualGrowthResult;
use crate::model::{brute_force_opt, validate_instance, CenterSet, Instance, Objective};
use crate::nqis::{expected_size, NestedQis};
use crate::solver::{
    assemble_k_solution, client_case_stats, lmp_solve, sweep_lambda_traced, SolverParams,
};

#[derive(Parser, Debug)]
#[command(
    name = "pdcluster",
    version,
    about = "Primal-dual solver and ratio certifier for Euclidean k-means / k-median"
)]
pub struct Cli {
    /// Worker threads for grid certification and sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve for exactly k centers via the λ sweep and exact-k assembly.
    Solve(SolveArgs),
    /// Certify an approximation-ratio target by grid infeasibility search.
    Certify(CertifyArgs),
    /// Exact brute-force optimum over all k-subsets (small instances).
    Oracle(OracleArgs),
    /// Generate a synthetic or adversarial instance.
    Gen(GenArgs),
    /// Single-λ LMP run with Monte Carlo diagnostics.
    Lmp(LmpArgs),
    /// Per-client case classification and accounting sums at one λ.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rounding probability override (defaults to the objective's constant).
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "C", default_value_t = 3)]
    pub c: usize,
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: usize,
    /// Compare against the brute-force optimum and report the realized ratio.
    #[arg(long, default_value_t = false)]
    pub oracle: bool,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, default_value_t = false)]
    pub pretty: bool,
    #[arg(long, default_value_t = false)]
    pub dump_duals: bool,
    #[arg(long, default_value_t = false)]
    pub dump_nqis: bool,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[arg(long)]
    pub objective: String,
    #[arg(long)]
    pub target: f64,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, default_value_t = false)]
    pub pretty: bool,
    /// Trim the cell list from the report (verdict counts stay).
    #[arg(long, default_value_t = false)]
    pub summary_only: bool,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, default_value_t = false)]
    pub pretty: bool,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// uniform | clustered | lower-bound
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value = "kmeans")]
    pub objective: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower-bound gadget scale.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t: f64,
    /// Lower-bound copy count (defaults to n).
    #[arg(long = "N")]
    pub copies: Option<usize>,
    /// Lower-bound simplex size.
    #[arg(long, default_value_t = 64)]
    pub h: usize,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, default_value_t = false)]
    pub pretty: bool,
}

#[derive(Args, Debug)]
pub struct LmpArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "C", default_value_t = 3)]
    pub c: usize,
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: usize,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, default_value_t = false)]
    pub pretty: bool,
    #[arg(long, default_value_t = false)]
    pub dump_duals: bool,
    #[arg(long, default_value_t = false)]
    pub dump_nqis: bool,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, default_value_t = false)]
    pub pretty: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceSummary {
    pub objective: Objective,
    pub clients: usize,
    pub facilities: usize,
    pub dimension: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub degenerate: bool,
    pub range_exceeded: bool,
}

impl InstanceSummary {
    fn new(instance: &Instance) -> Result<Self> {
        let v = validate_instance(instance)?;
        Ok(InstanceSummary {
            objective: instance.objective,
            clients: instance.num_clients(),
            facilities: instance.num_facilities(),
            dimension: instance.dimension(),
            label: instance.label.clone(),
            degenerate: v.degenerate,
            range_exceeded: v.range_exceeded,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualDiagnostics {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub degenerate_bracket: bool,
    pub expected_size_lo: f64,
    pub expected_size_hi: f64,
    pub alpha_sum_lo: f64,
    /// Lagrangian dual objective at the returned k, a certified lower bound
    /// on the optimum.
    pub dual_objective_at_k: f64,
    pub sweep_points: usize,
}

/// The solve command's JSON report. Every number here is recomputable from
/// the serialized inputs and the seed.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub instance: InstanceSummary,
    pub k: usize,
    pub seed: u64,
    pub params: SolverParams,
    pub centers: CenterSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt: Option<CenterSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realized_ratio: Option<f64>,
    pub dual: DualDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_duals: Option<DualGrowthResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_nqis: Option<NestedQis>,
}

fn load_instance(path: &str) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    Instance::from_json(&text)
}

fn emit(json: String, out: &Option<String>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn render<T: Serialize>(value: &T, pretty: bool) -> String {
    if pretty {
        serde_json::to_string_pretty(value).expect("report serializes")
    } else {
        serde_json::to_string(value).expect("report serializes")
    }
}

pub fn cmd_solve(args: &SolveArgs) -> Result<RunReport> {
    let instance = load_instance(&args.instance)?;
    if args.k < 1 || args.k > instance.num_facilities() {
        return Err(Error::InvalidParam(format!(
            "--k {} outside [1, {}]",
            args.k,
            instance.num_facilities()
        )));
    }
    let mut params = SolverParams::default_for(instance.objective);
    params.rng_seed = args.seed;
    params.c = args.c;
    params.mc_samples = args.mc_samples;
    if let Some(p) = args.p {
        params.p1 = p;
    }
    let summary = InstanceSummary::new(&instance)?;
    if summary.degenerate {
        eprintln!("note: a client coincides with a facility; normalization skipped");
    }
    if summary.range_exceeded {
        eprintln!("note: distance spread exceeds n^6; dual lower bounds may be loose");
    }

    let (bracket, trace) = sweep_lambda_traced(&instance, args.k, &params)?;
    let centers = assemble_k_solution(&instance, &bracket, args.k, &params)?;
    let opt = if args.oracle {
        Some(brute_force_opt(&instance, args.k)?)
    } else {
        None
    };
    let realized_ratio = opt.as_ref().map(|o| {
        if o.cost > 0.0 {
            centers.cost / o.cost
        } else {
            f64::INFINITY
        }
    });
    let alpha_sum_lo: f64 = bracket.growth_lo.alpha.iter().sum();
    let dual = DualDiagnostics {
        lambda_lo: bracket.lambda_lo,
        lambda_hi: bracket.lambda_hi,
        degenerate_bracket: bracket.degenerate,
        expected_size_lo: expected_size(&bracket.nqis_lo, params.p1),
        expected_size_hi: expected_size(&bracket.nqis_hi, params.p1),
        alpha_sum_lo,
        dual_objective_at_k: alpha_sum_lo - bracket.lambda_lo * args.k as f64,
        sweep_points: trace.len(),
    };
    Ok(RunReport {
        command: format!(
            "solve --instance {} --k {} --seed {}",
            args.instance, args.k, args.seed
        ),
        instance: summary,
        k: args.k,
        seed: args.seed,
        params,
        centers,
        opt,
        realized_ratio,
        dual,
        dump_duals: args.dump_duals.then(|| bracket.growth_lo.clone()),
        dump_nqis: args.dump_nqis.then(|| bracket.nqis_lo.clone()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LmpReport {
    pub command: String,
    pub instance: InstanceSummary,
    pub lambda: f64,
    pub p: f64,
    pub seed: u64,
    pub layer_sizes: (usize, usize, usize),
    pub expected_size: f64,
    pub mc: crate::solver::McSummary,
    pub dual_surrogate: f64,
    pub per_client: Vec<crate::solver::PerClientDiag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_duals: Option<DualGrowthResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_nqis: Option<NestedQis>,
}

pub fn cmd_lmp(args: &LmpArgs) -> Result<LmpReport> {
    let instance = load_instance(&args.instance)?;
    let mut params = SolverParams::default_for(instance.objective);
    params.rng_seed = args.seed;
    params.c = args.c;
    params.mc_samples = args.mc_samples;
    if let Some(p) = args.p {
        params.p1 = p;
    }
    let outcome = lmp_solve(&instance, args.lambda, &params)?;
    Ok(LmpReport {
        command: format!(
            "lmp --instance {} --lambda {} --seed {}",
            args.instance, args.lambda, args.seed
        ),
        instance: InstanceSummary::new(&instance)?,
        lambda: args.lambda,
        p: params.p1,
        seed: args.seed,
        layer_sizes: (
            outcome.nqis.i1.len(),
            outcome.nqis.i2.len(),
            outcome.nqis.i3.len(),
        ),
        expected_size: expected_size(&outcome.nqis, params.p1),
        mc: outcome.sampled_costs.clone(),
        dual_surrogate: outcome.dual_surrogate,
        per_client: outcome.per_client,
        dump_duals: args.dump_duals.then(|| outcome.growth.clone()),
        dump_nqis: args.dump_nqis.then(|| outcome.nqis.clone()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub command: String,
    pub instance: InstanceSummary,
    pub lambda: f64,
    pub accounting: crate::solver::CaseAccounting,
}

pub fn cmd_stats(args: &StatsArgs) -> Result<StatsReport> {
    let instance = load_instance(&args.instance)?;
    let params = SolverParams::default_for(instance.objective);
    let growth = crate::growth::grow_duals(&instance, args.lambda)?;
    let nqis = crate::nqis::build_nqis(
        &growth,
        &instance,
        params.deltas,
        crate::solver::variant_for(instance.objective),
    )?;
    let accounting = client_case_stats(&instance, &growth, &nqis)?;
    Ok(StatsReport {
        command: format!(
            "stats --instance {} --lambda {}",
            args.instance, args.lambda
        ),
        instance: InstanceSummary::new(&instance)?,
        lambda: args.lambda,
        accounting,
    })
}

/// Runs one parsed command; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let started = std::time::Instant::now();
    let outcome: Result<i32> = match &cli.command {
        Command::Solve(args) => cmd_solve(args).and_then(|report| {
            emit(render(&report, args.pretty), &args.out)?;
            Ok(0)
        }),
        Command::Certify(args) => Objective::parse(&args.objective).and_then(|objective| {
            let grid = GridConfig::default_for(objective);
            let mut report = grid_certify(objective, args.target, &grid)?;
            if args.summary_only {
                report.cells.clear();
            }
            let code = if report.success { 0 } else { 1 };
            emit(render(&report, args.pretty), &args.out)?;
            Ok(code)
        }),
        Command::Oracle(args) => load_instance(&args.instance).and_then(|instance| {
            let opt = brute_force_opt(&instance, args.k)?;
            emit(render(&opt, args.pretty), &args.out)?;
            Ok(0)
        }),
        Command::Gen(args) => gen_command(args),
        Command::Lmp(args) => cmd_lmp(args).and_then(|report| {
            emit(render(&report, args.pretty), &args.out)?;
            Ok(0)
        }),
        Command::Stats(args) => cmd_stats(args).and_then(|report| {
            emit(render(&report, args.pretty), &args.out)?;
            Ok(0)
        }),
    };
    eprintln!("wall time: {} ms", started.elapsed().as_millis());
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn gen_command(args: &GenArgs) -> Result<i32> {
    let json = match args.kind.as_str() {
        "lower-bound" => {
            let copies = args.copies.unwrap_or(args.n);
            let lb = gen_lower_bound_instance(args.t, copies, args.h, args.eps)?;
            eprintln!("recommended lambda: {}", lb.lambda);
            render(&lb.instance, args.pretty)
        }
        other => {
            let kind = RandomKind::parse(other)?;
            let objective = Objective::parse(&args.objective)?;
            let inst = gen_random_instance(args.n, args.m, args.d, kind, objective, args.seed)?;
            render(&inst, args.pretty)
        }
    };
    emit(json, &args.out)?;
    Ok(0)
}
