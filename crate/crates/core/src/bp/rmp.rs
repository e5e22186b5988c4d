//! Restricted master problem over the current column pool.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Column, ColumnPool, CostCoeffs, Fixings};
use crate::instance::Instance;
use crate::milp::{solve_lp_until, LpStatus, Model, Sense, VarId};

/// Penalty on the artificial variables that keep every master LP feasible.
pub const BIG_M: f64 = 1e7;

/// Duals of the linking rows (nonnegative) and of the convexity rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmpDuals {
    pub pi1: Vec<Vec<f64>>,
    pub pi2: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl RmpDuals {
    pub fn zero(n_nodes: usize, n_locations: usize) -> Self {
        Self {
            pi1: vec![vec![0.0; n_locations]; n_nodes],
            pi2: vec![vec![0.0; n_locations]; n_nodes],
            sigma: vec![0.0; n_nodes],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rmp {
    pub model: Model,
    /// `(pool index, variable)` for every column admitted by the fixings.
    pub columns: Vec<(usize, VarId)>,
    pub artificials: Vec<VarId>,
    link_x: Vec<Vec<usize>>,
    link_k: Vec<Vec<usize>>,
    convexity: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RmpSolution {
    /// Master value including the constant, i.e. comparable with the
    /// original objective.
    pub value: f64,
    /// `(pool index, weight)` for columns with positive weight.
    pub weights: Vec<(usize, f64)>,
    pub duals: RmpDuals,
    /// Total artificial activity; positive means the restriction is
    /// infeasible with the current columns.
    pub artificial: f64,
}

/// Builds the master LP over the columns of `pool` admitted by `fixings`.
/// Each row carries an artificial with cost [`BIG_M`], so the LP is always
/// feasible.
pub fn build_rmp(inst: &Instance, coeffs: &CostCoeffs, pool: &ColumnPool, fixings: &Fixings) -> Rmp {
    let nn = inst.n_nodes();
    let nl = inst.n_locations();
    let mut model = Model::new();
    model.objective_offset = -coeffs.psi;

    let mut by_node: Vec<Vec<(usize, &Column)>> = vec![Vec::new(); nn];
    for (q, col) in pool.columns.iter().enumerate() {
        if fixings.allows(col) {
            by_node[col.node].push((q, col));
        }
    }
    let mut columns = Vec::new();
    let mut var_of = vec![Vec::new(); nn];
    for (n, cols) in by_node.iter().enumerate() {
        for &(q, col) in cols {
            let v = model.add_continuous(0.0, f64::INFINITY, format!("lambda[{n},{q}]"));
            model.add_objective_term(v, col.cost);
            columns.push((q, v));
            var_of[n].push((v, col));
        }
    }

    let mut artificials = Vec::new();
    let mut link_x = vec![vec![0; nl]; nn];
    let mut link_k = vec![vec![0; nl]; nn];
    for n in 0..nn {
        let parent = inst.tree[n].parent;
        for j in 0..nl {
            for posts in [false, true] {
                let value = |c: &Column| {
                    if posts {
                        c.posts[j] as f64
                    } else {
                        f64::from(u8::from(c.open[j]))
                    }
                };
                let mut terms: Vec<(VarId, f64)> = var_of[n].iter().map(|&(v, c)| (v, value(c))).collect();
                let rhs = match parent {
                    Some(p) => {
                        terms.extend(var_of[p].iter().map(|&(v, c)| (v, -value(c))));
                        0.0
                    }
                    None => {
                        let loc = &inst.locations[j];
                        if posts {
                            loc.y0 as f64
                        } else {
                            f64::from(u8::from(loc.x0))
                        }
                    }
                };
                let art = model.add_continuous(0.0, f64::INFINITY, "");
                model.add_objective_term(art, BIG_M);
                artificials.push(art);
                terms.push((art, 1.0));
                let name = if posts { "link_posts" } else { "link_open" };
                let row = model.add_constraint(terms, Sense::Ge, rhs, format!("{name}[{n},{j}]"));
                if posts {
                    link_k[n][j] = row;
                } else {
                    link_x[n][j] = row;
                }
            }
        }
    }
    let mut convexity = Vec::with_capacity(nn);
    for n in 0..nn {
        let art = model.add_continuous(0.0, f64::INFINITY, "");
        model.add_objective_term(art, BIG_M);
        artificials.push(art);
        let mut terms: Vec<(VarId, f64)> = var_of[n].iter().map(|&(v, _)| (v, 1.0)).collect();
        terms.push((art, 1.0));
        convexity.push(model.add_constraint(terms, Sense::Eq, 1.0, format!("convexity[{n}]")));
    }
    Rmp {
        model,
        columns,
        artificials,
        link_x,
        link_k,
        convexity,
    }
}

impl Rmp {
    /// Solves the master LP, handing back the LP status when it does not
    /// reach optimality.
    pub fn solve(&self, deadline: Option<Instant>) -> Result<RmpSolution, LpStatus> {
        let lower: Vec<f64> = self.model.variables.iter().map(|v| v.lower).collect();
        let upper: Vec<f64> = self.model.variables.iter().map(|v| v.upper).collect();
        let lp = solve_lp_until(&self.model, &lower, &upper, deadline);
        if lp.status != LpStatus::Optimal {
            return Err(lp.status);
        }
        let weights = self
            .columns
            .iter()
            .filter(|(_, v)| lp.values[v.0] > 1e-12)
            .map(|&(q, v)| (q, lp.values[v.0]))
            .collect();
        let artificial = self.artificials.iter().map(|v| lp.values[v.0]).sum();
        let duals = RmpDuals {
            pi1: self
                .link_x
                .iter()
                .map(|r| r.iter().map(|&i| lp.duals[i].max(0.0)).collect())
                .collect(),
            pi2: self
                .link_k
                .iter()
                .map(|r| r.iter().map(|&i| lp.duals[i].max(0.0)).collect())
                .collect(),
            sigma: self.convexity.iter().map(|&i| lp.duals[i]).collect(),
        };
        Ok(RmpSolution {
            value: lp.objective,
            weights,
            duals,
            artificial,
        })
    }
}
