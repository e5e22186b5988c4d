use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use evcec::approx::approximate;
use evcec::bp::{branch_and_price, BpLimits, BpStatus, PricingEngine};
use evcec::evcec::{check_feasible, objective_value, Deployment, EvcecModel};
use evcec::generate::{generate, GenerateParams};
use evcec::heuristic::{best_greedy, local_search};
use evcec::instance::Instance;
use evcec::milp::{solve_mip_from, MipLimits, MipStatus};
use evcec::report::{compare_metrics, queue_report, render_tables, to_csv, ResultRow};
use evcec::solution::SolutionFile;
use evcec::Error;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NO_INCUMBENT: u8 = 3;

#[derive(Parser)]
#[command(name = "evcec", version, about = "Plan EV charging networks under congestion")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// Solve one instance with one algorithm.
    Solve(SolveArgs),
    /// Run the algorithm matrix over seeded instances and thresholds.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Tiny,
    Small,
    Medium,
}

impl Preset {
    fn params(self, mj: Option<usize>) -> GenerateParams {
        match self {
            Preset::Tiny => {
                let mut p = GenerateParams::tiny();
                if let Some(m) = mj {
                    p.m_max = m;
                }
                p
            }
            Preset::Small => GenerateParams::small(mj.unwrap_or(8)),
            Preset::Medium => GenerateParams::medium(mj.unwrap_or(8)),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::Small => "small",
            Preset::Medium => "medium",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Mip,
    Approx,
    Heuristic,
    Bp,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Mip => "mip",
            Algo::Approx => "approx",
            Algo::Heuristic => "heuristic",
            Algo::Bp => "bp",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Auto,
    Mip,
    Enumerate,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = positive, conflicts_with = "preset", required_unless_present = "preset")]
    zones: Option<usize>,
    #[arg(long, value_parser = positive, conflicts_with = "preset", required_unless_present = "preset")]
    locations: Option<usize>,
    /// Tree levels including the root.
    #[arg(long, value_parser = positive, conflicts_with = "preset")]
    depth: Option<usize>,
    /// Children per node.
    #[arg(long, value_parser = positive, conflicts_with = "preset")]
    branching: Option<usize>,
    /// Maximum posts per station.
    #[arg(long, value_parser = positive)]
    mj: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    #[arg(long)]
    instance: PathBuf,
    /// Queue threshold; defaults to the instance's.
    #[arg(long)]
    b: Option<u32>,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    /// Service rate per post; defaults to the instance's.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 7200.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    /// Branch-and-price: stop after the root node.
    #[arg(long)]
    root_only: bool,
    /// Branch-and-price pricing engine.
    #[arg(long, value_enum, default_value = "auto")]
    engine: Engine,
    /// Seed recorded in the solution file.
    #[arg(long)]
    seed: Option<u64>,
    /// Solution file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the metrics row as CSV here.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum, default_value = "tiny")]
    preset: Preset,
    /// Number of seeded instances per post limit.
    #[arg(long, default_value_t = 5, value_parser = positive)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Post limits to generate; small and medium default to 8 and 10.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    mj: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    b: Vec<u32>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mip,approx,heuristic,bp")]
    algos: Vec<Algo>,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    /// Per-cell time limit, seconds.
    #[arg(long, default_value_t = 7200.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1e-6)]
    gap_tol: f64,
    /// Write zero run times so reports compare byte for byte.
    #[arg(long)]
    omit_times: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Optimal,
    Feasible,
    Infeasible,
    NoIncumbent,
}

struct Outcome {
    status: Status,
    deployment: Option<Deployment>,
    z: f64,
    lb: Option<f64>,
    gap_lb: Option<f64>,
    seconds: f64,
    detail: serde_json::Value,
}

struct RunOptions {
    time_limit: Duration,
    gap_tol: f64,
    root_only: bool,
    engine: PricingEngine,
}

fn run(inst: &Instance, algo: Algo, opts: &RunOptions) -> anyhow::Result<Outcome> {
    let started = Instant::now();
    let limits = MipLimits {
        time_limit: Some(opts.time_limit),
        gap_tol: opts.gap_tol,
        node_limit: None,
    };
    let mut out = Outcome {
        status: Status::Feasible,
        deployment: None,
        z: f64::INFINITY,
        lb: None,
        gap_lb: None,
        seconds: 0.0,
        detail: json!({}),
    };
    match algo {
        Algo::Mip => {
            let em = EvcecModel::build(inst, false)?;
            let start = best_greedy(inst).ok().and_then(|h| em.encode(inst, &h.deployment).ok());
            let sol = solve_mip_from(&em.model, &limits, start.as_deref());
            out.status = match (sol.status, sol.has_incumbent()) {
                (MipStatus::Optimal, _) => Status::Optimal,
                (MipStatus::Infeasible, _) => Status::Infeasible,
                (MipStatus::Unbounded, _) => bail!("model reported unbounded"),
                (_, true) => Status::Feasible,
                (_, false) => Status::NoIncumbent,
            };
            if let Some(v) = &sol.values {
                let dep = em.decode(v);
                out.z = objective_value(inst, &dep);
                out.deployment = Some(dep);
            }
            out.lb = sol.bound.is_finite().then_some(sol.bound);
            out.detail = json!({"status": format!("{:?}", sol.status), "nodes": sol.nodes, "gap": sol.gap});
        }
        Algo::Approx => match approximate(inst, &limits) {
            Ok(a) => {
                out.z = a.z_appr;
                out.lb = Some(a.lb);
                out.gap_lb = Some(a.gap_lb);
                out.detail = json!({"status": format!("{:?}", a.status), "lifted": a.lifted});
                out.deployment = Some(a.deployment);
            }
            Err(Error::Infeasible(_)) => out.status = Status::Infeasible,
            Err(Error::LimitReached(_)) => out.status = Status::NoIncumbent,
            Err(e) => return Err(e.into()),
        },
        Algo::Heuristic => {
            let h = best_greedy(inst)?;
            let dep = local_search(inst, &h.deployment)?;
            out.z = objective_value(inst, &dep);
            out.detail = json!({"criterion": format!("{:?}", h.criterion), "greedy": h.objective});
            out.deployment = Some(dep);
        }
        Algo::Bp => {
            let limits = BpLimits {
                time_limit: Some(opts.time_limit),
                gap_tol: opts.gap_tol,
                root_only: opts.root_only,
                engine: opts.engine,
                ..BpLimits::default()
            };
            let res = branch_and_price(inst, &limits)?;
            out.status = match (res.status, res.incumbent.is_some()) {
                (BpStatus::Optimal, _) => Status::Optimal,
                (BpStatus::Infeasible, _) => Status::Infeasible,
                (_, true) => Status::Feasible,
                (_, false) => Status::NoIncumbent,
            };
            out.z = res.z;
            out.lb = res.bound.is_finite().then_some(res.bound);
            out.detail = json!({"status": format!("{:?}", res.status), "gap": res.gap, "stats": res.stats});
            out.deployment = res.incumbent;
        }
    }
    if let Some(dep) = &out.deployment {
        let rep = check_feasible(inst, dep);
        if !rep.feasible {
            bail!("{} produced an infeasible deployment: {:?}", algo.name(), rep.violations[0]);
        }
    }
    out.seconds = started.elapsed().as_secs_f64();
    Ok(out)
}

fn row_for(inst: &Instance, id: &str, algo: Algo, out: &Outcome) -> anyhow::Result<ResultRow> {
    let q = match &out.deployment {
        Some(dep) => Some(queue_report(inst, dep, inst.queue.b)?),
        None => None,
    };
    Ok(ResultRow {
        instance_id: id.to_string(),
        algo: algo.name().to_string(),
        m: inst.max_posts(),
        b: inst.queue.b,
        alpha: inst.queue.alpha,
        t_s: out.seconds,
        z: out.z,
        lb: out.lb,
        gap: None,
        ts_pct: None,
        avg_wait_min: q.as_ref().map_or(f64::NAN, |q| q.avg_wait_min),
        avg_queue_len: q.as_ref().map_or(f64::NAN, |q| q.avg_queue_len),
        service_ok: q.is_some_and(|q| q.service_ok),
    })
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<ExitCode> {
    let params = match args.preset {
        Some(p) => p.params(args.mj),
        None => GenerateParams::uniform(
            args.zones.expect("clap requires zones"),
            args.locations.expect("clap requires locations"),
            args.depth.unwrap_or(3),
            args.branching.unwrap_or(2),
            args.mj.unwrap_or(4),
        ),
    };
    let inst = generate(&params, args.seed)?;
    inst.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    log::info!(
        "wrote {} zones, {} locations, {} nodes to {}",
        inst.n_zones(),
        inst.n_locations(),
        inst.n_nodes(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn with_overrides(inst: &Instance, b: Option<u32>, alpha: f64, mu: Option<f64>) -> anyhow::Result<Instance> {
    let mut queue = inst.queue.clone();
    queue.alpha = alpha;
    if let Some(b) = b {
        queue.b = b;
    }
    if let Some(mu) = mu {
        queue.mu = mu;
    }
    if let Err(errs) = queue.validate() {
        bail!("invalid queue settings: {}", errs.join("; "));
    }
    let inst = inst.with_queue(queue);
    inst.validate()?;
    Ok(inst)
}

fn cmd_solve(args: &SolveArgs) -> anyhow::Result<ExitCode> {
    let base = Instance::load(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    let inst = with_overrides(&base, args.b, args.alpha, args.mu)?;
    let opts = RunOptions {
        time_limit: Duration::from_secs_f64(args.time_limit),
        gap_tol: args.gap_tol,
        root_only: args.root_only,
        engine: match args.engine {
            Engine::Auto => PricingEngine::Auto,
            Engine::Mip => PricingEngine::Mip,
            Engine::Enumerate => PricingEngine::Enumerate,
        },
    };
    let out = run(&inst, args.algo, &opts)?;
    let id = args.instance.file_stem().map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned());
    match out.status {
        Status::Infeasible => {
            eprintln!("proven infeasible");
            return Ok(ExitCode::from(EXIT_INFEASIBLE));
        }
        Status::NoIncumbent => {
            eprintln!("limit reached without a feasible solution");
            return Ok(ExitCode::from(EXIT_NO_INCUMBENT));
        }
        Status::Optimal | Status::Feasible => {}
    }
    let dep = out.deployment.as_ref().expect("feasible outcome has a deployment");
    SolutionFile::new(&inst, dep, args.algo.name(), args.seed, out.z).save(&args.out)?;
    let row = row_for(&inst, &id, args.algo, &out)?;
    if let Some(path) = &args.metrics {
        fs::write(path, to_csv(std::slice::from_ref(&row))?)?;
    }
    let status = match out.status {
        Status::Optimal => "optimal",
        _ => "feasible",
    };
    let line = json!({
        "instance_id": row.instance_id,
        "algo": row.algo,
        "status": status,
        "M": row.m,
        "b": row.b,
        "alpha": row.alpha,
        "t_s": row.t_s,
        "z": row.z,
        "lb": row.lb,
        "gap_lb": out.gap_lb,
        "avg_wait_min": row.avg_wait_min,
        "avg_queue_len": row.avg_queue_len,
        "service_ok": row.service_ok,
        "detail": out.detail,
    });
    println!("{line}");
    Ok(ExitCode::SUCCESS)
}

fn worker_count() -> usize {
    std::env::var("EVCEC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Rows for one instance across thresholds and algorithms, with time
/// savings and gaps measured against the exact solvers.
fn bench_instance(base: &Instance, id: &str, args: &BenchmarkArgs, opts: &RunOptions) -> anyhow::Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for &b in &args.b {
        let inst = with_overrides(base, Some(b), args.alpha, None)?;
        let mut cell = Vec::new();
        for &algo in &args.algos {
            let out = run(&inst, algo, opts).with_context(|| format!("{id} b={b} {}", algo.name()))?;
            log::info!("{id} b={b} {}: {:?} z={} in {:.2}s", algo.name(), out.status, out.z, out.seconds);
            cell.push((algo, out));
        }
        let exact = |a: Algo| cell.iter().find(|(x, o)| *x == a && o.status == Status::Optimal).map(|(_, o)| o);
        let z_star = exact(Algo::Mip).or_else(|| exact(Algo::Bp)).map(|o| o.z);
        let t_star = exact(Algo::Mip).map(|o| o.seconds);
        for (algo, out) in &cell {
            let mut row = row_for(&inst, id, *algo, out)?;
            if let Some(zs) = z_star.filter(|_| out.deployment.is_some()) {
                let m = compare_metrics(t_star.unwrap_or(f64::NAN), zs, out.seconds, out.z, out.lb);
                row.gap = Some(m.gap);
                if t_star.is_some_and(|t| t > 0.0) && !args.omit_times {
                    row.ts_pct = Some(m.ts * 100.0);
                }
            }
            if args.omit_times {
                row.t_s = 0.0;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

fn write_report(dir: &Path, rows: &[ResultRow]) -> anyhow::Result<()> {
    let report = render_tables(rows)?;
    fs::write(dir.join("report.csv"), &report.csv)?;
    fs::write(dir.join("report.txt"), &report.text)?;
    Ok(())
}

fn cmd_benchmark(args: &BenchmarkArgs) -> anyhow::Result<ExitCode> {
    fs::create_dir_all(&args.out_dir)?;
    let mjs = if !args.mj.is_empty() {
        args.mj.clone()
    } else {
        match args.preset {
            Preset::Tiny => vec![GenerateParams::tiny().m_max],
            _ => vec![8, 10],
        }
    };
    let opts = RunOptions {
        time_limit: Duration::from_secs_f64(args.time_limit),
        gap_tol: args.gap_tol,
        root_only: false,
        engine: PricingEngine::Auto,
    };
    let cells: Vec<(usize, u64)> = mjs
        .iter()
        .flat_map(|&m| (0..args.instances as u64).map(move |k| (m, args.first_seed + k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build()?;
    let done: Mutex<Vec<ResultRow>> = Mutex::new(Vec::new());
    let result: anyhow::Result<()> = pool.install(|| {
        cells.par_iter().try_for_each(|&(m, seed)| {
            let inst = generate(&args.preset.params(Some(m)), seed)?;
            let id = format!("{}-m{m}-s{seed}", args.preset.name());
            let rows = bench_instance(&inst, &id, args, &opts)?;
            let mut all = done.lock().expect("no poisoned lock");
            all.extend(rows);
            // Flush after every instance so an interrupted run keeps its rows.
            write_report(&args.out_dir, &all)
        })
    });
    let rows = done.into_inner().expect("no poisoned lock");
    write_report(&args.out_dir, &rows)?;
    result?;
    let report = render_tables(&rows)?;
    print!("{}", report.text);
    if !report.monotonicity_violations.is_empty() {
        log::warn!("{} row(s) break monotonicity in b", report.monotonicity_violations.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
