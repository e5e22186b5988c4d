//! The expansion model with congestion constraints: model builders for the
//! full MILP and its partial relaxation, closed-form evaluation of demand
//! rates and logit shares, objective evaluation and feasibility auditing.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{CoverageSets, Instance};
use crate::milp::{Model, Sense, VarId, VarKind};
use crate::queueing::RhoTable;

/// Tolerance used when auditing a deployment against the model rows.
pub const FEAS_TOL: f64 = 1e-7;

/// Station flags and post counts per scenario node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Deployment {
    pub open: Vec<Vec<bool>>,
    pub posts: Vec<Vec<usize>>,
}

impl Deployment {
    /// Nothing open anywhere.
    pub fn closed(n_nodes: usize, n_locations: usize) -> Self {
        Self {
            open: vec![vec![false; n_locations]; n_nodes],
            posts: vec![vec![0; n_locations]; n_nodes],
        }
    }

    /// The initial network carried unchanged through the whole tree.
    pub fn initial(inst: &Instance) -> Self {
        let open: Vec<bool> = inst.locations.iter().map(|l| l.x0).collect();
        let posts: Vec<usize> = inst.locations.iter().map(|l| l.y0).collect();
        Self {
            open: vec![open; inst.n_nodes()],
            posts: vec![posts; inst.n_nodes()],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.open.len()
    }

    pub fn n_open(&self, n: usize) -> usize {
        self.open[n].iter().filter(|&&o| o).count()
    }
}

/// State inherited by node `n` from its predecessor (the initial network for
/// the root).
pub fn inherited(inst: &Instance, dep: &Deployment, n: usize) -> (Vec<bool>, Vec<usize>) {
    match inst.tree[n].parent {
        Some(p) => (dep.open[p].clone(), dep.posts[p].clone()),
        None => (
            inst.locations.iter().map(|l| l.x0).collect(),
            inst.locations.iter().map(|l| l.y0).collect(),
        ),
    }
}

/// Logit shares of zone `i` at node `n` over the open stations within its
/// radius, as `(location, share)` pairs in location order.
pub fn logit_shares(
    cov: &CoverageSets,
    e: &[Vec<f64>],
    open: &[bool],
    n: usize,
    i: usize,
) -> Result<Vec<(usize, f64)>> {
    let near = &cov.locs_near[n][i];
    let total: f64 = near.iter().filter(|&&j| open[j]).map(|&j| e[i][j]).sum();
    if total <= 0.0 {
        return Err(Error::Coverage { node: n, zone: i });
    }
    Ok(near
        .iter()
        .filter(|&&j| open[j])
        .map(|&j| (j, e[i][j] / total))
        .collect())
}

/// Choice probabilities of zone `i` at node `n` for every location (zero for
/// closed or out-of-radius ones).
pub fn logit_probabilities(inst: &Instance, open: &[bool], n: usize, i: usize) -> Result<Vec<f64>> {
    let cov = CoverageSets::new(inst);
    let e = inst.attractions();
    let mut out = vec![0.0; inst.n_locations()];
    for (j, p) in logit_shares(&cov, &e, open, n, i)? {
        out[j] = p;
    }
    Ok(out)
}

/// Arrival rate at every location of node `n` under the open set `open`.
///
/// With `x` integral the linearized shares collapse to closed forms:
/// `alpha_ij = e_ij x_j / sum_k e_ik x_k` and `sum_k z_ijk = alpha_ij * #open near i`.
pub fn demand_rates(
    inst: &Instance,
    cov: &CoverageSets,
    e: &[Vec<f64>],
    open: &[bool],
    n: usize,
) -> Result<Vec<f64>> {
    let node = &inst.tree[n];
    let mut lambda = vec![0.0; inst.n_locations()];
    for i in 0..inst.n_zones() {
        let shares = logit_shares(cov, e, open, n, i)?;
        let n_open = shares.len() as f64;
        for (j, a) in shares {
            lambda[j] += node.theta[i] * (node.w[i] * a + node.bcoef[i] * a * n_open);
        }
    }
    Ok(lambda)
}

/// Arrival rate at location `j` of node `n`.
pub fn demand_rate(inst: &Instance, dep: &Deployment, n: usize, j: usize) -> Result<f64> {
    let cov = CoverageSets::new(inst);
    let e = inst.attractions();
    Ok(demand_rates(inst, &cov, &e, &dep.open[n], n)?[j])
}

/// Expected total cost of a deployment, including the initial-state terms.
pub fn objective_value(inst: &Instance, dep: &Deployment) -> f64 {
    let mut total = 0.0;
    for (n, node) in inst.tree.iter().enumerate() {
        let (prev_open, prev_posts) = inherited(inst, dep, n);
        let mut s = 0.0;
        for j in 0..inst.n_locations() {
            let x = f64::from(u8::from(dep.open[n][j]));
            let x_prev = f64::from(u8::from(prev_open[j]));
            let k = dep.posts[n][j] as f64;
            let k_prev = prev_posts[j] as f64;
            s += node.cost_build[j] * (x - x_prev)
                + node.cost_post[j] * (k - k_prev)
                + node.cost_op_station[j] * x
                + node.cost_op_post[j] * k;
        }
        total += node.prob * s;
    }
    total
}

/// Row families of the model, named after what they enforce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintFamily {
    /// Arrival rate within the service-level capacity of the installed posts.
    Congestion,
    /// Every zone has an open station within its radius.
    Coverage,
    /// Logit choice shares consistent with the open set.
    LogitChoice,
    /// Product linearization `z <= x`, `z <= alpha`, `z >= alpha + x - 1`.
    Linearization,
    /// Exactly one post count selected iff the station is open.
    PostSelection,
    /// Stations never close along a tree path.
    StationPersistence,
    /// Post counts never decrease along a tree path.
    PostMonotonicity,
    /// Post counts within `[0, m_max]`.
    Bounds,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Congestion => "congestion",
            Self::Coverage => "coverage",
            Self::LogitChoice => "logit-choice",
            Self::Linearization => "linearization",
            Self::PostSelection => "post-selection",
            Self::StationPersistence => "station-persistence",
            Self::PostMonotonicity => "post-monotonicity",
            Self::Bounds => "bounds",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub family: ConstraintFamily,
    pub node: usize,
    /// Zone and/or location indices, depending on the family.
    pub indices: Vec<usize>,
    /// Amount by which the row is violated (positive).
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn has(&self, family: ConstraintFamily) -> bool {
        self.violations.iter().any(|v| v.family == family)
    }
}

/// Audits a deployment against every row family, with shares computed in
/// closed form.
pub fn check_feasible(inst: &Instance, dep: &Deployment) -> FeasibilityReport {
    let mut violations = Vec::new();
    let nn = inst.n_nodes();
    let nl = inst.n_locations();
    if dep.open.len() != nn || dep.posts.len() != nn {
        violations.push(Violation {
            family: ConstraintFamily::Bounds,
            node: 0,
            indices: vec![],
            slack: f64::INFINITY,
        });
        return FeasibilityReport {
            feasible: false,
            violations,
        };
    }
    let cov = CoverageSets::new(inst);
    let e = inst.attractions();
    let rho = inst.rho_table().ok();
    let mu = inst.queue.mu;
    for n in 0..nn {
        let (prev_open, prev_posts) = inherited(inst, dep, n);
        for j in 0..nl {
            let k = dep.posts[n][j];
            if k > inst.locations[j].m_max {
                violations.push(Violation {
                    family: ConstraintFamily::Bounds,
                    node: n,
                    indices: vec![j],
                    slack: (k - inst.locations[j].m_max) as f64,
                });
            }
            if (k >= 1) != dep.open[n][j] {
                violations.push(Violation {
                    family: ConstraintFamily::PostSelection,
                    node: n,
                    indices: vec![j],
                    slack: 1.0,
                });
            }
            if prev_open[j] && !dep.open[n][j] {
                violations.push(Violation {
                    family: ConstraintFamily::StationPersistence,
                    node: n,
                    indices: vec![j],
                    slack: 1.0,
                });
            }
            if prev_posts[j] > k {
                violations.push(Violation {
                    family: ConstraintFamily::PostMonotonicity,
                    node: n,
                    indices: vec![j],
                    slack: (prev_posts[j] - k) as f64,
                });
            }
        }
        let mut covered = true;
        for i in 0..inst.n_zones() {
            if !cov.locs_near[n][i].iter().any(|&j| dep.open[n][j]) {
                covered = false;
                violations.push(Violation {
                    family: ConstraintFamily::Coverage,
                    node: n,
                    indices: vec![i],
                    slack: 1.0,
                });
            }
        }
        if !covered {
            continue;
        }
        // The linearization rows hold identically under the closed forms;
        // re-evaluate the logit rows as a guard against drift in the formulas.
        for i in 0..inst.n_zones() {
            let near = &cov.locs_near[n][i];
            let shares = logit_shares(&cov, &e, &dep.open[n], n, i).expect("covered");
            let n_open = shares.len() as f64;
            for &j in near {
                let a = shares.iter().find(|s| s.0 == j).map_or(0.0, |s| s.1);
                let lhs: f64 = near
                    .iter()
                    .filter(|&&k| dep.open[n][k])
                    .map(|&k| e[i][k] * a)
                    .sum();
                let rhs = if dep.open[n][j] { e[i][j] } else { 0.0 };
                let gap = (lhs - rhs).abs();
                if gap > 1e-9 {
                    violations.push(Violation {
                        family: ConstraintFamily::LogitChoice,
                        node: n,
                        indices: vec![i, j],
                        slack: gap,
                    });
                }
            }
            let total: f64 = shares.iter().map(|s| s.1).sum();
            if (total - 1.0).abs() > 1e-9 || n_open < 1.0 {
                violations.push(Violation {
                    family: ConstraintFamily::Linearization,
                    node: n,
                    indices: vec![i],
                    slack: (total - 1.0).abs(),
                });
            }
        }
        let Some(rho) = rho.as_ref() else { continue };
        let lambda = demand_rates(inst, &cov, &e, &dep.open[n], n).expect("covered");
        for j in 0..nl {
            let k = dep.posts[n][j].min(rho.max_posts());
            let cap = mu * rho.rho(k);
            if lambda[j] > cap + FEAS_TOL * cap.max(1.0) {
                violations.push(Violation {
                    family: ConstraintFamily::Congestion,
                    node: n,
                    indices: vec![j],
                    slack: lambda[j] - cap,
                });
            }
        }
    }
    FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
    }
}

/// Variables of one scenario block.
#[derive(Debug, Clone)]
pub struct BlockVars {
    pub x: Vec<VarId>,
    /// `y[j][k-1]` for `k = 1..=m_max(j)`.
    pub y: Vec<Vec<VarId>>,
    /// `alpha[i][t]` for the `t`-th location of `locs_near[n][i]`.
    pub alpha: Vec<Vec<VarId>>,
    /// `z[i][t * len + u]` for the `t`-th and `u`-th nearby locations.
    pub z: Vec<Vec<VarId>>,
}

/// Adds the in-scenario variables and rows of node `n` to `model`: congestion,
/// coverage, logit choice, the product linearization and post selection.
/// Shared by the full model and the pricing problems.
pub fn add_scenario_block(
    model: &mut Model,
    inst: &Instance,
    cov: &CoverageSets,
    e: &[Vec<f64>],
    rho: &RhoTable,
    n: usize,
    relax_y: bool,
) -> BlockVars {
    let node = &inst.tree[n];
    let nl = inst.n_locations();
    let y_kind = if relax_y {
        VarKind::Continuous
    } else {
        VarKind::Binary
    };
    let x: Vec<VarId> = (0..nl).map(|j| model.add_binary(format!("x[{n},{j}]"))).collect();
    let y: Vec<Vec<VarId>> = (0..nl)
        .map(|j| {
            (1..=inst.locations[j].m_max)
                .map(|k| model.add_var(y_kind, 0.0, 1.0, format!("y[{n},{j},{k}]")))
                .collect()
        })
        .collect();
    let mut alpha = Vec::with_capacity(inst.n_zones());
    let mut z = Vec::with_capacity(inst.n_zones());
    for i in 0..inst.n_zones() {
        let near = &cov.locs_near[n][i];
        let a: Vec<VarId> = near
            .iter()
            .map(|&j| model.add_continuous(0.0, 1.0, format!("alpha[{n},{i},{j}]")))
            .collect();
        let mut zz = Vec::with_capacity(near.len() * near.len());
        for &j in near {
            for &k in near {
                zz.push(model.add_continuous(0.0, f64::INFINITY, format!("z[{n},{i},{j},{k}]")));
            }
        }
        alpha.push(a);
        z.push(zz);
    }

    for j in 0..nl {
        let mut terms = Vec::new();
        for &i in &cov.zones_near[n][j] {
            let near = &cov.locs_near[n][i];
            let t = near.binary_search(&j).expect("coverage sets are symmetric");
            terms.push((alpha[i][t], node.theta[i] * node.w[i]));
            for u in 0..near.len() {
                terms.push((z[i][t * near.len() + u], node.theta[i] * node.bcoef[i]));
            }
        }
        for (k, &v) in y[j].iter().enumerate() {
            terms.push((v, -inst.queue.mu * rho.rho(k + 1)));
        }
        model.add_constraint(terms, Sense::Le, 0.0, format!("congestion[{n},{j}]"));
    }
    for i in 0..inst.n_zones() {
        let terms = cov.locs_near[n][i].iter().map(|&k| (x[k], 1.0));
        model.add_constraint(terms, Sense::Ge, 1.0, format!("coverage[{n},{i}]"));
    }
    for i in 0..inst.n_zones() {
        let near = &cov.locs_near[n][i];
        let len = near.len();
        for (t, &j) in near.iter().enumerate() {
            let mut terms: Vec<(VarId, f64)> =
                near.iter().enumerate().map(|(u, &k)| (z[i][t * len + u], e[i][k])).collect();
            terms.push((x[j], -e[i][j]));
            model.add_constraint(terms, Sense::Eq, 0.0, format!("logit[{n},{i},{j}]"));
        }
        for (t, &j) in near.iter().enumerate() {
            for (u, &k) in near.iter().enumerate() {
                let zv = z[i][t * len + u];
                let av = alpha[i][t];
                model.add_constraint([(zv, 1.0), (x[k], -1.0)], Sense::Le, 0.0, format!("z_le_x[{n},{i},{j},{k}]"));
                model.add_constraint([(zv, 1.0), (av, -1.0)], Sense::Le, 0.0, format!("z_le_alpha[{n},{i},{j},{k}]"));
                model.add_constraint(
                    [(zv, 1.0), (av, -1.0), (x[k], -1.0)],
                    Sense::Ge,
                    -1.0,
                    format!("z_ge[{n},{i},{j},{k}]"),
                );
            }
        }
    }
    for j in 0..nl {
        let mut terms: Vec<(VarId, f64)> = y[j].iter().map(|&v| (v, 1.0)).collect();
        terms.push((x[j], -1.0));
        model.add_constraint(terms, Sense::Eq, 0.0, format!("post_select[{n},{j}]"));
    }
    BlockVars { x, y, alpha, z }
}

/// Post count encoded by a block's `y` values (`sum_k k y_k`).
pub fn post_expr(y: &[VarId]) -> impl Iterator<Item = (VarId, f64)> + '_ {
    y.iter().enumerate().map(|(k, &v)| (v, (k + 1) as f64))
}

/// A built model together with its variable layout.
#[derive(Debug, Clone)]
pub struct EvcecModel {
    pub model: Model,
    pub blocks: Vec<BlockVars>,
    pub relaxed_y: bool,
}

impl EvcecModel {
    pub fn build(inst: &Instance, relax_y: bool) -> Result<Self> {
        inst.validate()?;
        let cov = CoverageSets::new(inst);
        let e = inst.attractions();
        let rho = inst.rho_table()?;
        let mut model = Model::new();
        let blocks: Vec<BlockVars> = (0..inst.n_nodes())
            .map(|n| add_scenario_block(&mut model, inst, &cov, &e, &rho, n, relax_y))
            .collect();
        let nl = inst.n_locations();

        for n in 0..inst.n_nodes() {
            let b = &blocks[n];
            match inst.tree[n].parent {
                Some(p) => {
                    let pb = &blocks[p];
                    for j in 0..nl {
                        model.add_constraint(
                            [(pb.x[j], 1.0), (b.x[j], -1.0)],
                            Sense::Le,
                            0.0,
                            format!("persist[{n},{j}]"),
                        );
                        let terms = post_expr(&pb.y[j]).chain(post_expr(&b.y[j]).map(|(v, c)| (v, -c)));
                        model.add_constraint(terms, Sense::Le, 0.0, format!("posts_grow[{n},{j}]"));
                    }
                }
                None => {
                    for (j, loc) in inst.locations.iter().enumerate() {
                        if loc.x0 {
                            model.add_constraint([(b.x[j], 1.0)], Sense::Ge, 1.0, format!("persist[{n},{j}]"));
                        }
                        if loc.y0 > 0 {
                            model.add_constraint(
                                post_expr(&b.y[j]),
                                Sense::Ge,
                                loc.y0 as f64,
                                format!("posts_grow[{n},{j}]"),
                            );
                        }
                    }
                }
            }
        }

        // Objective, node by node: build and expansion costs relative to the
        // predecessor plus operating costs.
        for (n, node) in inst.tree.iter().enumerate() {
            let phi = node.prob;
            let b = &blocks[n];
            for j in 0..nl {
                model.add_objective_term(b.x[j], phi * (node.cost_build[j] + node.cost_op_station[j]));
                for (v, k) in post_expr(&b.y[j]) {
                    model.add_objective_term(v, phi * k * (node.cost_post[j] + node.cost_op_post[j]));
                }
                match node.parent {
                    Some(p) => {
                        model.add_objective_term(blocks[p].x[j], -phi * node.cost_build[j]);
                        for (v, k) in post_expr(&blocks[p].y[j]) {
                            model.add_objective_term(v, -phi * k * node.cost_post[j]);
                        }
                    }
                    None => {
                        let loc = &inst.locations[j];
                        let x0 = f64::from(u8::from(loc.x0));
                        model.objective_offset -= phi * (node.cost_build[j] * x0 + node.cost_post[j] * loc.y0 as f64);
                    }
                }
            }
        }
        Ok(Self {
            model,
            blocks,
            relaxed_y: relax_y,
        })
    }

    /// Reads a deployment off a solution vector. Post counts are the rounded
    /// weighted sums, which is exact for integral `y`.
    pub fn decode(&self, values: &[f64]) -> Deployment {
        let open = self
            .blocks
            .iter()
            .map(|b| b.x.iter().map(|v| values[v.0] > 0.5).collect())
            .collect();
        let posts = self
            .blocks
            .iter()
            .map(|b| {
                b.y.iter()
                    .map(|ys| post_expr(ys).map(|(v, k)| k * values[v.0]).sum::<f64>().round() as usize)
                    .collect()
            })
            .collect();
        Deployment { open, posts }
    }

    /// Relaxed `y` values of node `n`, location `j`, indexed by `k - 1`.
    pub fn y_values(&self, values: &[f64], n: usize, j: usize) -> Vec<f64> {
        self.blocks[n].y[j].iter().map(|v| values[v.0]).collect()
    }

    /// Full variable vector for a deployment, with shares and products in
    /// closed form. Errors if some zone is uncovered.
    pub fn encode(&self, inst: &Instance, dep: &Deployment) -> Result<Vec<f64>> {
        let cov = CoverageSets::new(inst);
        let e = inst.attractions();
        let mut values = vec![0.0; self.model.num_vars()];
        for (n, b) in self.blocks.iter().enumerate() {
            for j in 0..inst.n_locations() {
                if dep.open[n][j] {
                    values[b.x[j].0] = 1.0;
                }
                let k = dep.posts[n][j];
                if k >= 1 && k <= b.y[j].len() {
                    values[b.y[j][k - 1].0] = 1.0;
                }
            }
            for i in 0..inst.n_zones() {
                let near = &cov.locs_near[n][i];
                let shares = logit_shares(&cov, &e, &dep.open[n], n, i)?;
                let len = near.len();
                for (t, &j) in near.iter().enumerate() {
                    let a = shares.iter().find(|s| s.0 == j).map_or(0.0, |s| s.1);
                    values[b.alpha[i][t].0] = a;
                    for (u, &k) in near.iter().enumerate() {
                        if dep.open[n][k] {
                            values[b.z[i][t * len + u].0] = a;
                        }
                    }
                }
            }
        }
        Ok(values)
    }
}

/// The full mixed-integer model.
pub fn build_evcec(inst: &Instance) -> Result<Model> {
    Ok(EvcecModel::build(inst, false)?.model)
}

/// The model with post indicators relaxed to `[0,1]`; station flags stay binary.
pub fn build_revcec(inst: &Instance) -> Result<Model> {
    Ok(EvcecModel::build(inst, true)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GenerateParams};
    use crate::instance::tests::single_node;
    use crate::milp::{solve_lp, solve_mip, MipLimits, MipStatus};

    #[test]
    fn logit_examples() {
        let inst = single_node(vec![1.0], 5.0);
        assert_eq!(logit_probabilities(&inst, &[true], 0, 0).unwrap(), vec![1.0]);

        let inst = single_node(vec![2.0, 2.0], 5.0);
        let p = logit_probabilities(&inst, &[true, true], 0, 0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        // e_0 = 2 e_1 when d_1 - d_0 = ln 2 with a = 1.
        let inst = single_node(vec![1.0, 1.0 + 2f64.ln()], 5.0);
        let p = logit_probabilities(&inst, &[true, true], 0, 0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[1] - 1.0 / 3.0).abs() < 1e-12);

        assert!(matches!(
            logit_probabilities(&inst, &[false, false], 0, 0),
            Err(Error::Coverage { node: 0, zone: 0 })
        ));
    }

    #[test]
    fn demand_rate_examples() {
        let mut inst = single_node(vec![1.0, 1.0], 5.0);
        inst.tree[0].w = vec![4.0];
        inst.tree[0].bcoef = vec![1.0];
        let dep = Deployment {
            open: vec![vec![true, false]],
            posts: vec![vec![2, 0]],
        };
        assert!((demand_rate(&inst, &dep, 0, 0).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(demand_rate(&inst, &dep, 0, 1).unwrap(), 0.0);

        inst.tree[0].bcoef = vec![0.0];
        let both = Deployment {
            open: vec![vec![true, true]],
            posts: vec![vec![1, 1]],
        };
        assert!((demand_rate(&inst, &both, 0, 0).unwrap() - 2.0).abs() < 1e-12);
        assert!((demand_rate(&inst, &both, 0, 1).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_station_optimum_by_hand() {
        let mut inst = single_node(vec![1.0], 5.0);
        inst.locations[0].m_max = 1;
        inst.tree[0].cost_build = vec![3.0];
        inst.tree[0].cost_op_station = vec![5.0];
        inst.tree[0].cost_post = vec![7.0];
        inst.tree[0].cost_op_post = vec![11.0];
        // w = 1 <= 4 * 0.316 so one post suffices.
        let s = solve_mip(&build_evcec(&inst).unwrap(), &MipLimits::default());
        assert_eq!(s.status, MipStatus::Optimal);
        assert!((s.objective - 26.0).abs() < 1e-9);
        let dep = Deployment {
            open: vec![vec![true]],
            posts: vec![vec![1]],
        };
        assert!((objective_value(&inst, &dep) - 26.0).abs() < 1e-12);
    }

    #[test]
    fn objective_examples() {
        let params = GenerateParams::tiny();
        let mut inst = generate(&params, 3).unwrap();
        for node in &mut inst.tree {
            node.cost_op_post.iter_mut().for_each(|c| *c = 0.0);
            node.cost_op_station.iter_mut().for_each(|c| *c = 0.0);
        }
        let init = Deployment::initial(&inst);
        assert!(objective_value(&inst, &init).abs() < 1e-9);

        let inst = generate(&params, 3).unwrap();
        let mut doubled = inst.clone();
        for node in &mut doubled.tree {
            for v in [
                &mut node.cost_build,
                &mut node.cost_post,
                &mut node.cost_op_station,
                &mut node.cost_op_post,
            ] {
                v.iter_mut().for_each(|c| *c *= 2.0);
            }
        }
        let all = Deployment {
            open: vec![vec![true; inst.n_locations()]; inst.n_nodes()],
            posts: vec![vec![2; inst.n_locations()]; inst.n_nodes()],
        };
        let a = objective_value(&inst, &all);
        assert!((objective_value(&doubled, &all) - 2.0 * a).abs() < 1e-9 * a.abs());
    }

    #[test]
    fn capacity_violation_reports_excess() {
        let mut inst = single_node(vec![1.0], 5.0);
        inst.tree[0].w = vec![4.0];
        inst.tree[0].bcoef = vec![1.0];
        let dep = Deployment {
            open: vec![vec![true]],
            posts: vec![vec![1]],
        };
        let rep = check_feasible(&inst, &dep);
        assert!(!rep.feasible);
        assert_eq!(rep.violations.len(), 1);
        let v = &rep.violations[0];
        assert_eq!(v.family, ConstraintFamily::Congestion);
        assert!((v.slack - (5.0 - 4.0 * 0.31622776601683794)).abs() < 1e-8);
    }

    #[test]
    fn closing_a_parent_station_is_flagged() {
        let inst = generate(&GenerateParams::tiny(), 1).unwrap();
        let mut dep = Deployment {
            open: vec![vec![true; inst.n_locations()]; inst.n_nodes()],
            posts: vec![vec![inst.locations[0].m_max; inst.n_locations()]; inst.n_nodes()],
        };
        assert!(check_feasible(&inst, &dep).feasible);
        dep.open[1][0] = false;
        dep.posts[1][0] = 0;
        let rep = check_feasible(&inst, &dep);
        assert!(rep.has(ConstraintFamily::StationPersistence));
        assert!(rep.has(ConstraintFamily::PostMonotonicity));
    }

    #[test]
    fn binary_counts_match_sizes() {
        for (m, expect) in [(8, 1080), (10, 1320)] {
            let inst = generate(&GenerateParams::small(m), 0).unwrap();
            assert_eq!(build_evcec(&inst).unwrap().num_binaries(), expect);
        }
    }

    #[test]
    fn relaxation_differs_only_in_y_kinds() {
        let inst = generate(&GenerateParams::tiny(), 2).unwrap();
        let full = EvcecModel::build(&inst, false).unwrap();
        let rel = EvcecModel::build(&inst, true).unwrap();
        assert_eq!(full.model.constraints, rel.model.constraints);
        let mut y_ids = std::collections::HashSet::new();
        for b in &full.blocks {
            for ys in &b.y {
                y_ids.extend(ys.iter().map(|v| v.0));
            }
        }
        for (idx, (a, b)) in full.model.variables.iter().zip(&rel.model.variables).enumerate() {
            if y_ids.contains(&idx) {
                assert_eq!(a.kind, VarKind::Binary);
                assert_eq!(b.kind, VarKind::Continuous);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn optimum_roundtrips_and_matches_evaluation() {
        for seed in 0..3 {
            let inst = generate(&GenerateParams::tiny(), seed).unwrap();
            let em = EvcecModel::build(&inst, false).unwrap();
            let s = solve_mip(&em.model, &MipLimits::default());
            assert_eq!(s.status, MipStatus::Optimal);
            let x = s.values.unwrap();
            let dep = em.decode(&x);
            assert!(check_feasible(&inst, &dep).feasible);
            assert!((objective_value(&inst, &dep) - s.objective).abs() < 1e-6 * s.objective.abs().max(1.0));
            let enc = em.encode(&inst, &dep).unwrap();
            for v in em.model.variables.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Binary) {
                assert_eq!(enc[v.0], x[v.0].round());
            }
            assert!(em.model.max_violation(&enc) < 1e-9);
            // The relaxation can only be cheaper.
            let r = solve_mip(&build_revcec(&inst).unwrap(), &MipLimits::default());
            assert!(r.objective <= s.objective + 1e-6);
        }
    }

    #[test]
    fn encoded_points_satisfy_linearization() {
        let inst = generate(&GenerateParams::tiny(), 5).unwrap();
        let em = EvcecModel::build(&inst, false).unwrap();
        let dep = Deployment {
            open: vec![vec![true; inst.n_locations()]; inst.n_nodes()],
            posts: vec![vec![inst.locations[0].m_max; inst.n_locations()]; inst.n_nodes()],
        };
        let x = em.encode(&inst, &dep).unwrap();
        assert!(em.model.max_violation(&x) < 1e-9);
        assert!((em.model.evaluate(&x) - objective_value(&inst, &dep)).abs() < 1e-6);
        assert!(solve_lp(&em.model).objective <= em.model.evaluate(&x) + 1e-6);
    }
}
