//! Column generation, primal repair and the branch-and-price tree search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::pricing::{Guidance, Pricer, PricingEngine};
use super::rmp::{build_rmp, RmpDuals, RmpSolution};
use super::{columns_of, cost_coefficients, ColumnPool, CostCoeffs, Fixings};
use crate::approx::approximate;
use crate::error::{Error, Result};
use crate::evcec::{objective_value, Deployment};
use crate::heuristic::{best_greedy, greedy_with, local_search, Criterion};
use crate::instance::Instance;
use crate::milp::{relative_gap, LpStatus, MipLimits};

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BpLimits {
    pub time_limit: Option<Duration>,
    pub gap_tol: f64,
    pub node_limit: Option<usize>,
    /// Stop after the root: column generation plus repair, no branching.
    pub root_only: bool,
    pub engine: PricingEngine,
    /// Pass the parent's fresh column to its children's pricing.
    pub guided: bool,
    /// Seed the pool with the rounding approximation as well as the greedy.
    pub seed_with_approx: bool,
    pub max_cg_iterations: usize,
}

impl Default for BpLimits {
    fn default() -> Self {
        Self {
            time_limit: None,
            gap_tol: 1e-6,
            node_limit: None,
            root_only: false,
            engine: PricingEngine::Auto,
            guided: true,
            seed_with_approx: true,
            max_cg_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BpStatus {
    Optimal,
    /// Root-only mode finished; the gap is against the root bound.
    RootOnly,
    NodeLimit,
    TimeLimit,
    Infeasible,
    /// Some master LP failed numerically; its subtree bound is kept but
    /// the search below it was abandoned.
    Unsettled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CgIteration {
    pub branch_node: usize,
    pub iteration: usize,
    pub lp_value: f64,
    /// Present in rounds where every node was priced without guidance.
    pub lagrangian_lb: Option<f64>,
    pub best_lb: f64,
    pub columns_added: usize,
    pub reduced_costs: Vec<f64>,
    pub artificial: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LogRecord {
    Cg(CgIteration),
    Node {
        id: usize,
        depth: usize,
        bound: f64,
        lp_value: f64,
        incumbent: f64,
        outcome: String,
    },
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub lp_value: f64,
    /// Best Lagrangian bound seen (`-inf` if none was computed).
    pub lagrangian_lb: f64,
    pub duals: RmpDuals,
    pub solution: Option<RmpSolution>,
    pub new_columns: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Pricing proved some node has no column under the fixings.
    pub infeasible: bool,
    /// Status of a master LP that failed for reasons other than the deadline.
    pub master_failure: Option<LpStatus>,
}

/// Column generation at one branch node. Stops when a full unguided round
/// finds no new column, on pricing infeasibility, or at the deadline.
pub fn column_generation(
    pricer: &Pricer,
    pool: &mut ColumnPool,
    fixings: &Fixings,
    limits: &BpLimits,
    deadline: Option<Instant>,
    branch_node: usize,
    log: &mut Vec<LogRecord>,
) -> CgResult {
    let inst = pricer.inst;
    let nn = inst.n_nodes();
    let mut best_lb = f64::NEG_INFINITY;
    let mut new_columns = 0;
    let mut force_unguided = !limits.guided;
    let mut last: Option<RmpSolution> = None;
    let mut iterations = 0;
    let mut master_failure = None;
    for iteration in 0..limits.max_cg_iterations {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let rmp = build_rmp(inst, pricer.coeffs, pool, fixings);
        let sol = match rmp.solve(deadline) {
            Ok(sol) => sol,
            Err(LpStatus::TimeLimit) => break,
            Err(status) => {
                log::warn!("branch node {branch_node}: master LP {status:?}");
                master_failure = Some(status);
                break;
            }
        };
        let lp_value = sol.value;

        let mip_limits = MipLimits {
            time_limit: deadline.map(|d| d.saturating_duration_since(Instant::now())),
            gap_tol: 1e-9,
            node_limit: None,
        };
        let mut fresh: Vec<Option<super::Column>> = vec![None; nn];
        let mut rcs = vec![f64::INFINITY; nn];
        let mut exact = true;
        let mut rc_sum = 0.0;
        let mut added = 0;
        let mut infeasible = false;
        for n in 0..nn {
            let guidance = if force_unguided {
                None
            } else {
                inst.tree[n].parent.and_then(|p| fresh[p].as_ref()).map(Guidance::from_column)
            };
            let mut out = pricer.price(n, &sol.duals, guidance.as_ref(), fixings, &mip_limits);
            let mut guided = guidance.is_some();
            if guided && out.column.is_none() {
                out = pricer.price(n, &sol.duals, None, fixings, &mip_limits);
                guided = false;
            }
            if out.infeasible {
                infeasible = true;
                break;
            }
            if guided {
                exact = false;
            } else {
                rc_sum += out.rc_bound.min(0.0);
            }
            rcs[n] = out.best_rc;
            if let Some(col) = out.column {
                fresh[n] = Some(col.clone());
                if pool.add(col) {
                    added += 1;
                }
            }
        }
        if infeasible {
            log::debug!("branch node {branch_node}: pricing infeasible");
            return CgResult {
                lp_value,
                lagrangian_lb: f64::INFINITY,
                duals: sol.duals.clone(),
                solution: Some(sol),
                new_columns,
                iterations: iteration + 1,
                converged: true,
                infeasible: true,
                master_failure: None,
            };
        }
        let lag = exact.then_some(lp_value + rc_sum);
        if let Some(l) = lag {
            best_lb = best_lb.max(l);
        }
        new_columns += added;
        log.push(LogRecord::Cg(CgIteration {
            branch_node,
            iteration,
            lp_value,
            lagrangian_lb: lag,
            best_lb,
            columns_added: added,
            reduced_costs: rcs,
            artificial: sol.artificial,
        }));
        if added == 0 {
            if exact {
                let infeasible = sol.artificial > 1e-6;
                return CgResult {
                    lp_value,
                    lagrangian_lb: best_lb,
                    duals: sol.duals.clone(),
                    solution: Some(sol),
                    new_columns,
                    iterations: iteration + 1,
                    converged: true,
                    infeasible,
                    master_failure: None,
                };
            }
            force_unguided = true;
        } else {
            force_unguided = !limits.guided;
        }
        last = Some(sol);
        iterations = iteration + 1;
    }
    let (lp_value, duals) = match &last {
        Some(s) => (s.value, s.duals.clone()),
        None => (f64::INFINITY, RmpDuals::zero(nn, inst.n_locations())),
    };
    CgResult {
        lp_value,
        lagrangian_lb: best_lb,
        duals,
        solution: last,
        new_columns,
        iterations,
        converged: false,
        infeasible: false,
        master_failure,
    }
}

/// Aggregated station flags of a master solution, `xbar[n][j]`.
fn aggregate(inst: &Instance, pool: &ColumnPool, sol: &RmpSolution) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let nl = inst.n_locations();
    let mut xbar = vec![vec![0.0; nl]; inst.n_nodes()];
    let mut kbar = vec![vec![0.0; nl]; inst.n_nodes()];
    for &(q, w) in &sol.weights {
        let col = &pool.columns[q];
        for j in 0..nl {
            xbar[col.node][j] += w * f64::from(u8::from(col.open[j]));
            kbar[col.node][j] += w * col.posts[j] as f64;
        }
    }
    (xbar, kbar)
}

/// The deployment of an integral master solution, if it is one.
fn integral_deployment(inst: &Instance, pool: &ColumnPool, sol: &RmpSolution) -> Option<Deployment> {
    if sol.artificial > INT_TOL {
        return None;
    }
    let mut chosen: Vec<Option<usize>> = vec![None; inst.n_nodes()];
    for &(q, w) in &sol.weights {
        if w <= INT_TOL {
            continue;
        }
        let n = pool.columns[q].node;
        if chosen[n].is_some() {
            return None;
        }
        chosen[n] = Some(q);
    }
    let mut dep = Deployment::closed(inst.n_nodes(), inst.n_locations());
    for (n, q) in chosen.iter().enumerate() {
        let col = &pool.columns[(*q)?];
        dep.open[n] = col.open.clone();
        dep.posts[n] = col.posts.clone();
    }
    Some(dep)
}

/// Builds a feasible deployment from a master solution: decode it if
/// integral, otherwise open the stations with aggregated flag at least 0.5,
/// complete with the greedy and improve with local search. The result's
/// columns join the pool.
pub fn primal_repair(
    inst: &Instance,
    coeffs: &CostCoeffs,
    sol: &RmpSolution,
    pool: &mut ColumnPool,
) -> Option<Deployment> {
    if let Some(dep) = integral_deployment(inst, pool, sol) {
        return Some(dep);
    }
    let (xbar, _) = aggregate(inst, pool, sol);
    let mut seed = Deployment::closed(inst.n_nodes(), inst.n_locations());
    for n in 0..inst.n_nodes() {
        for j in 0..inst.n_locations() {
            seed.open[n][j] = xbar[n][j] >= 0.5;
        }
    }
    let forbidden = vec![false; inst.n_locations()];
    let dep = greedy_with(inst, Criterion::MostZones, Some(&seed), &forbidden).ok()?;
    let dep = local_search(inst, &dep).ok()?;
    for col in columns_of(coeffs, &dep) {
        pool.add(col);
    }
    Some(dep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchNode {
    pub id: usize,
    pub depth: usize,
    /// Lower bound inherited from the parent.
    pub bound: f64,
    pub fixings: Fixings,
}

struct Queued(BranchNode);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.bound.total_cmp(&self.0.bound).then(other.0.id.cmp(&self.0.id))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BpStats {
    pub branch_nodes: usize,
    pub branchings: usize,
    pub cg_iterations: usize,
    pub columns: usize,
    pub root_lp: f64,
    pub root_lb: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpResult {
    pub status: BpStatus,
    pub incumbent: Option<Deployment>,
    pub z: f64,
    pub bound: f64,
    pub gap: f64,
    pub stats: BpStats,
    pub log: Vec<LogRecord>,
}

enum Branch {
    Integral(Deployment),
    OnX(usize, usize),
    OnPosts(usize, usize, usize),
}

fn choose_branch(inst: &Instance, pool: &ColumnPool, sol: &RmpSolution) -> Branch {
    let (xbar, kbar) = aggregate(inst, pool, sol);
    let mut best: Option<(usize, usize)> = None;
    let mut best_frac = INT_TOL;
    for (n, row) in xbar.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let f = v - v.floor();
            let d = f.min(1.0 - f);
            if d > best_frac + 1e-12 {
                best_frac = d;
                best = Some((n, j));
            }
        }
    }
    if let Some((n, j)) = best {
        return Branch::OnX(n, j);
    }
    if let Some(dep) = integral_deployment(inst, pool, sol) {
        return Branch::Integral(dep);
    }
    // Flags integral but several columns share a node: split on posts.
    for n in 0..inst.n_nodes() {
        for j in 0..inst.n_locations() {
            let support = sol
                .weights
                .iter()
                .filter(|&&(q, w)| w > INT_TOL && pool.columns[q].node == n)
                .map(|&(q, _)| pool.columns[q].posts[j]);
            let (lo, hi) = support.fold((usize::MAX, 0), |(a, b), k| (a.min(k), b.max(k)));
            if lo < hi {
                let t = (kbar[n][j].floor() as usize).clamp(lo, hi - 1);
                return Branch::OnPosts(n, j, t);
            }
        }
    }
    // Columns identical on every pair are the same column.
    unreachable!("pool holds no duplicate columns")
}

/// Best-first branch-and-price. Each branch node runs column generation,
/// repairs the master solution into an incumbent candidate and branches on
/// the station flag closest to one half.
pub fn branch_and_price(inst: &Instance, limits: &BpLimits) -> Result<BpResult> {
    inst.validate()?;
    let started = Instant::now();
    let deadline = limits.time_limit.map(|t| started + t);
    let coeffs = cost_coefficients(inst);
    let pricer = Pricer::new(inst, &coeffs, limits.engine)?;
    let mut pool = ColumnPool::new();
    let mut log = Vec::new();
    let mut stats = BpStats::default();

    let mut incumbent: Option<Deployment> = None;
    let mut z = f64::INFINITY;
    let offer = |dep: Deployment, z: &mut f64, inc: &mut Option<Deployment>| {
        let v = objective_value(inst, &dep);
        if v < *z - 1e-9 * v.abs().max(1.0) {
            *z = v;
            *inc = Some(dep);
        }
    };
    match best_greedy(inst) {
        Ok(h) => {
            let dep = local_search(inst, &h.deployment)?;
            for col in columns_of(&coeffs, &dep) {
                pool.add(col);
            }
            offer(dep, &mut z, &mut incumbent);
        }
        Err(Error::Infeasible(msg)) => log::info!("greedy found no start: {msg}"),
        Err(e) => return Err(e),
    }
    if limits.seed_with_approx {
        let approx_limits = MipLimits {
            time_limit: limits.time_limit.map(|t| t / 10),
            ..MipLimits::default()
        };
        match approximate(inst, &approx_limits) {
            Ok(a) => {
                for col in columns_of(&coeffs, &a.deployment) {
                    pool.add(col);
                }
                offer(a.deployment, &mut z, &mut incumbent);
            }
            Err(e) => log::info!("approximation seed skipped: {e}"),
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Queued(BranchNode {
        id: 0,
        depth: 0,
        bound: f64::NEG_INFINITY,
        fixings: Fixings::none(inst),
    }));
    let mut next_id = 1;
    let mut status = None;
    let mut open_bounds: Vec<f64> = Vec::new();
    // Bound of subtrees given up after a master LP failure.
    let mut lost_subtree_bound = f64::INFINITY;

    while let Some(Queued(node)) = heap.pop() {
        if incumbent.is_some() && relative_gap(z, node.bound) <= limits.gap_tol {
            // Best-first: every remaining node is at least as bad.
            heap.clear();
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            open_bounds.push(node.bound);
            status = Some(BpStatus::TimeLimit);
            break;
        }
        if limits.node_limit.is_some_and(|l| stats.branch_nodes >= l) {
            open_bounds.push(node.bound);
            status = Some(BpStatus::NodeLimit);
            break;
        }
        stats.branch_nodes += 1;
        let cg = column_generation(&pricer, &mut pool, &node.fixings, limits, deadline, node.id, &mut log);
        stats.cg_iterations += cg.iterations;
        let node_lb = node.bound.max(cg.lagrangian_lb);
        if node.id == 0 {
            stats.root_lp = cg.lp_value;
            stats.root_lb = cg.lagrangian_lb;
        }
        let record = |outcome: &str, z: f64, log: &mut Vec<LogRecord>| {
            log.push(LogRecord::Node {
                id: node.id,
                depth: node.depth,
                bound: node_lb,
                lp_value: cg.lp_value,
                incumbent: z,
                outcome: outcome.to_string(),
            });
        };
        if cg.infeasible {
            record("infeasible", z, &mut log);
            continue;
        }
        if cg.master_failure.is_some() {
            if let Some(sol) = cg.solution.as_ref().filter(|s| s.artificial <= INT_TOL) {
                if let Some(dep) = primal_repair(inst, &coeffs, sol, &mut pool) {
                    offer(dep, &mut z, &mut incumbent);
                }
            }
            record("master LP failed", z, &mut log);
            lost_subtree_bound = lost_subtree_bound.min(node_lb);
            continue;
        }
        let Some(sol) = cg.solution.as_ref() else {
            record("no master solution", z, &mut log);
            open_bounds.push(node_lb);
            status = Some(BpStatus::TimeLimit);
            break;
        };
        if sol.artificial <= INT_TOL {
            if let Some(dep) = primal_repair(inst, &coeffs, sol, &mut pool) {
                offer(dep, &mut z, &mut incumbent);
            }
        }
        if !cg.converged {
            record("interrupted", z, &mut log);
            open_bounds.push(node_lb);
            status = Some(BpStatus::TimeLimit);
            break;
        }
        if incumbent.is_some() && relative_gap(z, node_lb) <= limits.gap_tol {
            record("pruned by bound", z, &mut log);
            continue;
        }
        if limits.root_only {
            record("root only", z, &mut log);
            open_bounds.push(node_lb);
            status = Some(BpStatus::RootOnly);
            break;
        }
        match choose_branch(inst, &pool, sol) {
            Branch::Integral(dep) => {
                offer(dep, &mut z, &mut incumbent);
                record("integral", z, &mut log);
            }
            branch => {
                stats.branchings += 1;
                let mut kids = Vec::with_capacity(2);
                match branch {
                    Branch::OnX(n, j) => {
                        for value in [false, true] {
                            let mut f = node.fixings.clone();
                            f.fix_x(inst, n, j, value);
                            kids.push(f);
                        }
                        record(&format!("branch x[{n},{j}]"), z, &mut log);
                    }
                    Branch::OnPosts(n, j, t) => {
                        let mut lo = node.fixings.clone();
                        lo.posts_at_most(inst, n, j, t);
                        let mut hi = node.fixings.clone();
                        hi.posts_at_least(inst, n, j, t + 1);
                        kids.push(lo);
                        kids.push(hi);
                        record(&format!("branch posts[{n},{j}] at {t}"), z, &mut log);
                    }
                    Branch::Integral(_) => unreachable!(),
                }
                for fixings in kids {
                    if fixings.contradictory() {
                        continue;
                    }
                    heap.push(Queued(BranchNode {
                        id: next_id,
                        depth: node.depth + 1,
                        bound: node_lb,
                        fixings,
                    }));
                    next_id += 1;
                }
            }
        }
    }
    open_bounds.extend(heap.iter().map(|q| q.0.bound));
    let bound = open_bounds.iter().copied().fold(z.min(lost_subtree_bound), f64::min);
    let status = match status {
        Some(s) => s,
        None if lost_subtree_bound.is_finite() && relative_gap(z, lost_subtree_bound) > limits.gap_tol => BpStatus::Unsettled,
        None if incumbent.is_none() => BpStatus::Infeasible,
        None => BpStatus::Optimal,
    };
    stats.columns = pool.len();
    stats.seconds = started.elapsed().as_secs_f64();
    Ok(BpResult {
        status,
        gap: relative_gap(z, bound),
        incumbent,
        z,
        bound,
        stats,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evcec::{check_feasible, EvcecModel};
    use crate::generate::{generate, GenerateParams};
    use crate::milp::{solve_mip, MipStatus};

    fn mip_optimum(inst: &Instance) -> f64 {
        let m = EvcecModel::build(inst, false).unwrap();
        let sol = solve_mip(&m.model, &MipLimits { gap_tol: 1e-9, ..MipLimits::default() });
        assert_eq!(sol.status, MipStatus::Optimal);
        sol.objective
    }

    fn exact_limits(engine: PricingEngine) -> BpLimits {
        BpLimits {
            gap_tol: 1e-9,
            engine,
            ..BpLimits::default()
        }
    }

    #[test]
    fn matches_mip_on_tiny_instances() {
        for seed in 0..3 {
            let inst = generate(&GenerateParams::tiny(), seed).unwrap();
            let z_star = mip_optimum(&inst);
            for engine in [PricingEngine::Mip, PricingEngine::Enumerate] {
                let res = branch_and_price(&inst, &exact_limits(engine)).unwrap();
                assert_eq!(res.status, BpStatus::Optimal);
                assert!((res.z - z_star).abs() <= 1e-6 * z_star.abs().max(1.0), "seed {seed}: {} vs {z_star}", res.z);
                let dep = res.incumbent.as_ref().unwrap();
                assert!(check_feasible(&inst, dep).feasible);
                assert!((objective_value(&inst, dep) - res.z).abs() < 1e-9);
                assert!(res.stats.root_lb <= z_star + 1e-6);
            }
        }
    }

    #[test]
    fn unguided_pricing_reaches_the_same_optimum() {
        let inst = generate(&GenerateParams::tiny(), 4).unwrap();
        let z_star = mip_optimum(&inst);
        let limits = BpLimits {
            guided: false,
            seed_with_approx: false,
            ..exact_limits(PricingEngine::Enumerate)
        };
        let res = branch_and_price(&inst, &limits).unwrap();
        assert!((res.z - z_star).abs() <= 1e-6 * z_star.abs().max(1.0));
    }

    #[test]
    fn root_only_brackets_the_optimum() {
        let inst = generate(&GenerateParams::tiny(), 1).unwrap();
        let z_star = mip_optimum(&inst);
        let limits = BpLimits {
            root_only: true,
            ..exact_limits(PricingEngine::Enumerate)
        };
        let res = branch_and_price(&inst, &limits).unwrap();
        assert!(matches!(res.status, BpStatus::RootOnly | BpStatus::Optimal));
        assert!(res.bound <= z_star + 1e-6);
        assert!(res.z >= z_star - 1e-6);
        assert_eq!(res.stats.branch_nodes, 1);
    }

    #[test]
    fn lagrangian_bounds_stay_below_the_optimum() {
        let inst = generate(&GenerateParams::tiny(), 2).unwrap();
        let z_star = mip_optimum(&inst);
        let res = branch_and_price(&inst, &exact_limits(PricingEngine::Enumerate)).unwrap();
        for rec in &res.log {
            if let LogRecord::Cg(it) = rec {
                if it.branch_node == 0 {
                    if let Some(lb) = it.lagrangian_lb {
                        assert!(lb <= z_star + 1e-6, "{lb} > {z_star}");
                    }
                    assert!(it.best_lb <= it.lp_value + 1e-6);
                }
            }
        }
    }

    #[test]
    fn repair_returns_integral_master_solutions_unchanged() {
        let inst = generate(&GenerateParams::tiny(), 0).unwrap();
        let coeffs = cost_coefficients(&inst);
        let dep = best_greedy(&inst).unwrap().deployment;
        let mut pool = ColumnPool::new();
        for col in columns_of(&coeffs, &dep) {
            pool.add(col);
        }
        let sol = build_rmp(&inst, &coeffs, &pool, &Fixings::none(&inst)).solve(None).unwrap();
        let repaired = primal_repair(&inst, &coeffs, &sol, &mut pool).unwrap();
        assert_eq!(repaired, dep);
    }
}
