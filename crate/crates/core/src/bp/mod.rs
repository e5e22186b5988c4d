//! Branch-and-price over per-node columns.
//!
//! Each scenario node contributes columns: in-scenario feasible
//! `(open, posts)` points. The master links parent and child through the
//! station-persistence and post-growth rows and picks a convex combination
//! of columns per node. Pricing searches each node for a column with
//! negative reduced cost; branching acts on the original station flags
//! (and, when those are integral, on post counts).

mod pricing;
mod rmp;
mod search;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::evcec::Deployment;
use crate::instance::Instance;

pub use pricing::{solve_pricing, Guidance, PricingEngine, PricingOutcome};
pub use rmp::{build_rmp, Rmp, RmpDuals, RmpSolution, BIG_M};
pub use search::{
    branch_and_price, column_generation, primal_repair, BpLimits, BpResult, BpStats, BpStatus, BranchNode,
    CgIteration, CgResult, LogRecord,
};

/// Per-node cost coefficients of the decomposed objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCoeffs {
    /// Coefficient of a station flag.
    pub c1: Vec<Vec<f64>>,
    /// Coefficient of a post count.
    pub c2: Vec<Vec<f64>>,
    /// Constant removed from the sum of column costs (initial network).
    pub psi: f64,
}

/// Telescopes the build/expansion costs so that each node's column carries
/// its own operating costs plus the build costs it saves its children.
pub fn cost_coefficients(inst: &Instance) -> CostCoeffs {
    let children = inst.children();
    let nl = inst.n_locations();
    let mut c1 = vec![vec![0.0; nl]; inst.n_nodes()];
    let mut c2 = vec![vec![0.0; nl]; inst.n_nodes()];
    for (n, node) in inst.tree.iter().enumerate() {
        for j in 0..nl {
            let mut a = node.prob * (node.cost_build[j] + node.cost_op_station[j]);
            let mut b = node.prob * (node.cost_post[j] + node.cost_op_post[j]);
            for &c in &children[n] {
                let child = &inst.tree[c];
                a -= child.prob * child.cost_build[j];
                b -= child.prob * child.cost_post[j];
            }
            c1[n][j] = a;
            c2[n][j] = b;
        }
    }
    let root = &inst.tree[0];
    let psi = root.prob
        * inst
            .locations
            .iter()
            .enumerate()
            .map(|(j, l)| root.cost_build[j] * f64::from(u8::from(l.x0)) + root.cost_post[j] * l.y0 as f64)
            .sum::<f64>();
    CostCoeffs { c1, c2, psi }
}

/// An in-scenario feasible point of one tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub node: usize,
    pub open: Vec<bool>,
    pub posts: Vec<usize>,
    pub cost: f64,
}

impl Column {
    pub fn new(coeffs: &CostCoeffs, node: usize, open: Vec<bool>, posts: Vec<usize>) -> Self {
        let cost = open
            .iter()
            .zip(&posts)
            .enumerate()
            .map(|(j, (&o, &k))| coeffs.c1[node][j] * f64::from(u8::from(o)) + coeffs.c2[node][j] * k as f64)
            .sum();
        Self {
            node,
            open,
            posts,
            cost,
        }
    }

    /// Reduced cost under the given master duals.
    pub fn reduced_cost(&self, children: &[Vec<usize>], duals: &RmpDuals) -> f64 {
        let n = self.node;
        let mut rc = self.cost - duals.sigma[n];
        for j in 0..self.open.len() {
            let (mut p1, mut p2) = (duals.pi1[n][j], duals.pi2[n][j]);
            for &c in &children[n] {
                p1 -= duals.pi1[c][j];
                p2 -= duals.pi2[c][j];
            }
            rc -= p1 * f64::from(u8::from(self.open[j])) + p2 * self.posts[j] as f64;
        }
        rc
    }
}

/// Splits a deployment into one column per node.
pub fn columns_of(coeffs: &CostCoeffs, dep: &Deployment) -> Vec<Column> {
    (0..dep.n_nodes())
        .map(|n| Column::new(coeffs, n, dep.open[n].clone(), dep.posts[n].clone()))
        .collect()
}

/// Deduplicated column store shared by every branch node.
#[derive(Debug, Clone, Default)]
pub struct ColumnPool {
    pub columns: Vec<Column>,
    seen: HashSet<(usize, Vec<bool>, Vec<usize>)>,
}

impl ColumnPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `col` unless an identical one is present; returns whether it was new.
    pub fn add(&mut self, col: Column) -> bool {
        let key = (col.node, col.open.clone(), col.posts.clone());
        if self.seen.insert(key) {
            self.columns.push(col);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Branching restrictions: fixed station flags and post-count ranges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fixings {
    pub x: Vec<Vec<Option<bool>>>,
    pub k_lo: Vec<Vec<usize>>,
    pub k_hi: Vec<Vec<usize>>,
    pub conflict: bool,
}

impl Fixings {
    pub fn none(inst: &Instance) -> Self {
        let nl = inst.n_locations();
        let nn = inst.n_nodes();
        Self {
            x: vec![vec![None; nl]; nn],
            k_lo: vec![vec![0; nl]; nn],
            k_hi: vec![inst.locations.iter().map(|l| l.m_max).collect(); nn],
            conflict: false,
        }
    }

    pub fn allows(&self, col: &Column) -> bool {
        let n = col.node;
        col.open.iter().zip(&col.posts).enumerate().all(|(j, (&o, &k))| {
            self.x[n][j].is_none_or(|f| f == o) && k >= self.k_lo[n][j] && k <= self.k_hi[n][j]
        })
    }

    /// True when no column can satisfy the restrictions on some pair.
    pub fn contradictory(&self) -> bool {
        self.conflict
            || self.x.iter().enumerate().any(|(n, row)| {
            row.iter().enumerate().any(|(j, f)| {
                let (lo, hi) = (self.k_lo[n][j], self.k_hi[n][j]);
                lo > hi || (*f == Some(false) && lo > 0) || (*f == Some(true) && hi == 0)
            })
        })
    }

    /// Fixes `x[n][j]`, propagating openings to descendants and closings to
    /// ancestors (stations never close along a path).
    pub fn fix_x(&mut self, inst: &Instance, n: usize, j: usize, value: bool) {
        let targets = if value { inst.descendants(n) } else { inst.ancestors(n) };
        for t in std::iter::once(n).chain(targets) {
            if self.x[t][j].is_some_and(|v| v != value) {
                self.conflict = true;
                continue;
            }
            self.x[t][j] = Some(value);
            if value {
                self.k_lo[t][j] = self.k_lo[t][j].max(1);
            } else {
                self.k_hi[t][j] = 0;
            }
        }
    }

    /// Requires at least `t` posts at `(n, j)` and its descendants.
    pub fn posts_at_least(&mut self, inst: &Instance, n: usize, j: usize, t: usize) {
        for d in std::iter::once(n).chain(inst.descendants(n)) {
            self.k_lo[d][j] = self.k_lo[d][j].max(t);
        }
    }

    /// Allows at most `t` posts at `(n, j)` and its ancestors.
    pub fn posts_at_most(&mut self, inst: &Instance, n: usize, j: usize, t: usize) {
        for a in std::iter::once(n).chain(inst.ancestors(n)) {
            self.k_hi[a][j] = self.k_hi[a][j].min(t);
        }
    }
}
