//! Best-first LP-based branch and bound over the binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::model::{Model, VarKind};
use super::simplex::{solve_lp_until, LpStatus};

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MipLimits {
    pub time_limit: Option<Duration>,
    /// Relative gap at which the search stops.
    pub gap_tol: f64,
    pub node_limit: Option<usize>,
}

impl Default for MipLimits {
    fn default() -> Self {
        Self {
            time_limit: None,
            gap_tol: 1e-6,
            node_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MipStatus {
    /// Proven optimal within the gap tolerance.
    Optimal,
    /// Node limit hit with an incumbent in hand.
    Feasible,
    Infeasible,
    Unbounded,
    /// Time limit hit, or a node LP the kernel could not solve left no
    /// incumbent; `values` may still hold one.
    TimeLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MipSolution {
    pub status: MipStatus,
    pub values: Option<Vec<f64>>,
    /// Incumbent objective, `+inf` without one.
    pub objective: f64,
    /// Best proven lower bound.
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

impl MipSolution {
    pub fn has_incumbent(&self) -> bool {
        self.values.is_some()
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    if !objective.is_finite() {
        return f64::INFINITY;
    }
    if bound >= objective {
        return 0.0;
    }
    (objective - bound) / objective.abs().max(1e-10)
}

/// Solves `model` to optimality (or until a limit is reached).
pub fn solve_mip(model: &Model, limits: &MipLimits) -> MipSolution {
    solve_mip_from(model, limits, None)
}

/// As [`solve_mip`], optionally seeded with a known feasible point.
pub fn solve_mip_from(model: &Model, limits: &MipLimits, start: Option<&[f64]>) -> MipSolution {
    let started = Instant::now();
    let deadline = limits.time_limit.map(|t| started + t);
    let base_lo: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let base_hi: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    let binaries: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();

    let mut incumbent: Option<Vec<f64>> = None;
    let mut best = f64::INFINITY;
    if let Some(x) = start {
        let integral = binaries.iter().all(|&j| (x[j] - x[j].round()).abs() <= INT_TOL);
        if integral && model.max_violation(x) <= 1e-6 {
            best = model.evaluate(x);
            incumbent = Some(x.to_vec());
        } else {
            log::warn!("ignoring infeasible MIP start");
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq: 0,
        fixings: Vec::new(),
    });
    let mut seq = 1;
    let mut nodes = 0usize;
    let mut global_bound = f64::NEG_INFINITY;
    // Set when a node could not be settled; the bound is then not proven.
    let mut lost_subtree_bound = f64::INFINITY;
    let mut lost_subtree = false;
    let mut status = None;

    let mut lo = base_lo.clone();
    let mut hi = base_hi.clone();
    while let Some(node) = heap.pop() {
        global_bound = node.bound.min(lost_subtree_bound);
        if incumbent.is_some() && relative_gap(best, global_bound) <= limits.gap_tol {
            break;
        }
        if limits.time_limit.is_some_and(|t| started.elapsed() >= t) {
            heap.push(node);
            status = Some(MipStatus::TimeLimit);
            break;
        }
        if limits.node_limit.is_some_and(|n| nodes >= n) {
            heap.push(node);
            status = Some(if incumbent.is_some() {
                MipStatus::Feasible
            } else {
                MipStatus::TimeLimit
            });
            break;
        }
        nodes += 1;

        lo.copy_from_slice(&base_lo);
        hi.copy_from_slice(&base_hi);
        for &(j, l, u) in &node.fixings {
            lo[j] = l;
            hi[j] = u;
        }
        let lp = solve_lp_until(model, &lo, &hi, deadline);
        match lp.status {
            LpStatus::TimeLimit => {
                heap.push(node);
                status = Some(MipStatus::TimeLimit);
                break;
            }
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if node.depth == 0 {
                    return MipSolution {
                        status: MipStatus::Unbounded,
                        values: None,
                        objective: f64::NEG_INFINITY,
                        bound: f64::NEG_INFINITY,
                        gap: f64::INFINITY,
                        nodes,
                    };
                }
                continue;
            }
            LpStatus::IterationLimit | LpStatus::TooLarge => {
                log::warn!("LP {:?} at B&B node {}", lp.status, node.seq);
                lost_subtree_bound = lost_subtree_bound.min(node.bound);
                lost_subtree = true;
                continue;
            }
        }
        let bound = lp.objective.max(node.bound);
        if incumbent.is_some() && relative_gap(best, bound) <= limits.gap_tol {
            continue;
        }

        // Most fractional binary, lowest index on ties.
        let mut branch = None;
        let mut best_frac = INT_TOL;
        for &j in &binaries {
            let f = lp.values[j] - lp.values[j].floor();
            let dist = f.min(1.0 - f);
            if dist > best_frac + 1e-12 {
                best_frac = dist;
                branch = Some(j);
            }
        }
        match branch {
            None => {
                let mut x = lp.values;
                for &j in &binaries {
                    x[j] = x[j].round();
                }
                let obj = model.evaluate(&x);
                if obj < best {
                    best = obj;
                    incumbent = Some(x);
                }
            }
            Some(j) => {
                for (l, u) in [(0.0, 0.0), (1.0, 1.0)] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, l, u));
                    heap.push(Node {
                        bound,
                        depth: node.depth + 1,
                        seq,
                        fixings,
                    });
                    seq += 1;
                }
            }
        }
    }
    if heap.is_empty() && status.is_none() {
        global_bound = best.min(lost_subtree_bound);
    } else if let Some(top) = heap.peek() {
        global_bound = global_bound.max(top.bound.min(lost_subtree_bound)).min(best);
    }

    let status = match status {
        Some(s) => s,
        None if incumbent.is_none() => {
            if lost_subtree {
                MipStatus::TimeLimit
            } else {
                MipStatus::Infeasible
            }
        }
        None if lost_subtree && lost_subtree_bound < best => MipStatus::Feasible,
        None => MipStatus::Optimal,
    };
    MipSolution {
        status,
        objective: best,
        bound: if incumbent.is_none() && status == MipStatus::Infeasible {
            f64::INFINITY
        } else {
            global_bound
        },
        gap: relative_gap(best, global_bound),
        values: incumbent,
        nodes,
    }
}
