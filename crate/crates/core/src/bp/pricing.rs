//! Per-node pricing: find the in-scenario point of least reduced cost.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Column, CostCoeffs, Fixings, RmpDuals};
use crate::error::{Error, Result};
use crate::evcec::{add_scenario_block, demand_rates, post_expr};
use crate::heuristic::min_posts;
use crate::instance::{CoverageSets, Instance};
use crate::milp::{solve_mip, MipLimits, MipStatus, Model, Sense};
use crate::queueing::RhoTable;

/// Reduced costs above this are not worth a column.
pub const RC_TOL: f64 = 1e-6;

/// Largest location count the enumeration engine accepts.
pub const MAX_ENUM_LOCATIONS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PricingEngine {
    /// The pricing MIP on the embedded solver.
    Mip,
    /// Exhaustive search over open sets; exact, for small location counts.
    Enumerate,
    /// Enumeration when the location count allows it, else the MIP.
    Auto,
}

/// The parent's column generated earlier in the same round. A child priced
/// under guidance keeps the parent's stations open with at least the same
/// post counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    pub open: Vec<bool>,
    pub posts: Vec<usize>,
}

impl Guidance {
    pub fn from_column(col: &Column) -> Self {
        Self {
            open: col.open.clone(),
            posts: col.posts.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PricingOutcome {
    /// Best column found if its reduced cost is below `-RC_TOL`.
    pub column: Option<Column>,
    /// Reduced cost of the best point found (`+inf` if none).
    pub best_rc: f64,
    /// Proven lower bound on the reduced cost over the restricted region.
    pub rc_bound: f64,
    pub infeasible: bool,
}

/// Bounds on `x` and the post count of each location at one node.
struct Restriction {
    x_lo: Vec<bool>,
    x_hi: Vec<bool>,
    k_lo: Vec<usize>,
    k_hi: Vec<usize>,
}

fn restriction(inst: &Instance, n: usize, fixings: &Fixings, guidance: Option<&Guidance>) -> Restriction {
    let nl = inst.n_locations();
    let mut r = Restriction {
        x_lo: vec![false; nl],
        x_hi: vec![true; nl],
        k_lo: fixings.k_lo[n].clone(),
        k_hi: (0..nl).map(|j| fixings.k_hi[n][j].min(inst.locations[j].m_max)).collect(),
    };
    for j in 0..nl {
        match fixings.x[n][j] {
            Some(true) => r.x_lo[j] = true,
            Some(false) => r.x_hi[j] = false,
            None => {}
        }
        if n == 0 {
            // The initial network is already in place at the root.
            let loc = &inst.locations[j];
            r.x_lo[j] |= loc.x0;
            r.k_lo[j] = r.k_lo[j].max(loc.y0);
        }
        if let Some(g) = guidance {
            if g.open[j] {
                r.x_lo[j] = true;
                r.k_lo[j] = r.k_lo[j].max(g.posts[j]);
            }
        }
        if r.k_lo[j] >= 1 {
            r.x_lo[j] = true;
        }
        if r.k_hi[j] == 0 {
            r.x_hi[j] = false;
        }
    }
    r
}

/// Shared data for pricing calls on one instance.
pub struct Pricer<'a> {
    pub inst: &'a Instance,
    pub coeffs: &'a CostCoeffs,
    cov: CoverageSets,
    e: Vec<Vec<f64>>,
    rho: RhoTable,
    children: Vec<Vec<usize>>,
    pub engine: PricingEngine,
}

impl<'a> Pricer<'a> {
    pub fn new(inst: &'a Instance, coeffs: &'a CostCoeffs, engine: PricingEngine) -> Result<Self> {
        let small = inst.n_locations() <= MAX_ENUM_LOCATIONS;
        let engine = match engine {
            PricingEngine::Enumerate if !small => {
                return Err(Error::Parameter(format!(
                    "enumeration pricing supports at most {MAX_ENUM_LOCATIONS} locations"
                )))
            }
            PricingEngine::Auto if small => PricingEngine::Enumerate,
            PricingEngine::Auto => PricingEngine::Mip,
            e => e,
        };
        Ok(Self {
            inst,
            coeffs,
            cov: CoverageSets::new(inst),
            e: inst.attractions(),
            rho: inst.rho_table()?,
            children: inst.children(),
            engine,
        })
    }

    pub fn children(&self) -> &[Vec<usize>] {
        &self.children
    }

    /// Objective coefficients of the station flag and post count at node `n`.
    fn reduced_coeffs(&self, n: usize, duals: &RmpDuals) -> (Vec<f64>, Vec<f64>) {
        let nl = self.inst.n_locations();
        let mut a = self.coeffs.c1[n].clone();
        let mut b = self.coeffs.c2[n].clone();
        for j in 0..nl {
            a[j] -= duals.pi1[n][j];
            b[j] -= duals.pi2[n][j];
            for &c in &self.children[n] {
                a[j] += duals.pi1[c][j];
                b[j] += duals.pi2[c][j];
            }
        }
        (a, b)
    }

    pub fn price(
        &self,
        n: usize,
        duals: &RmpDuals,
        guidance: Option<&Guidance>,
        fixings: &Fixings,
        limits: &MipLimits,
    ) -> PricingOutcome {
        let r = restriction(self.inst, n, fixings, guidance);
        let found = match self.engine {
            PricingEngine::Mip | PricingEngine::Auto => self.price_mip(n, duals, &r, limits),
            PricingEngine::Enumerate => self.price_enum(n, duals, &r, limits),
        };
        let sigma = duals.sigma[n];
        match found {
            None => PricingOutcome {
                column: None,
                best_rc: f64::INFINITY,
                rc_bound: f64::INFINITY,
                infeasible: true,
            },
            Some((point, bound)) => {
                let col = point.map(|(open, posts)| Column::new(self.coeffs, n, open, posts));
                let best_rc = col.as_ref().map_or(f64::INFINITY, |c| c.reduced_cost(&self.children, duals));
                PricingOutcome {
                    column: col.filter(|_| best_rc < -RC_TOL),
                    best_rc,
                    rc_bound: (bound - sigma).min(best_rc),
                    infeasible: false,
                }
            }
        }
    }

    /// `None` when infeasible, else the best point (if any) and a bound on
    /// the pricing objective.
    #[allow(clippy::type_complexity)]
    fn price_mip(
        &self,
        n: usize,
        duals: &RmpDuals,
        r: &Restriction,
        limits: &MipLimits,
    ) -> Option<(Option<(Vec<bool>, Vec<usize>)>, f64)> {
        let inst = self.inst;
        let (a, b) = self.reduced_coeffs(n, duals);
        let mut model = Model::new();
        let block = add_scenario_block(&mut model, inst, &self.cov, &self.e, &self.rho, n, false);
        for j in 0..inst.n_locations() {
            let xv = &mut model.variables[block.x[j].0];
            xv.lower = f64::from(u8::from(r.x_lo[j]));
            xv.upper = f64::from(u8::from(r.x_hi[j]));
            model.add_objective_term(block.x[j], a[j]);
            for (v, k) in post_expr(&block.y[j]) {
                model.add_objective_term(v, b[j] * k);
            }
            if r.k_lo[j] > 1 {
                model.add_constraint(post_expr(&block.y[j]), Sense::Ge, r.k_lo[j] as f64, format!("posts_lo[{j}]"));
            }
            if r.k_hi[j] < inst.locations[j].m_max {
                model.add_constraint(post_expr(&block.y[j]), Sense::Le, r.k_hi[j] as f64, format!("posts_hi[{j}]"));
            }
        }
        if r.x_lo.iter().zip(&r.x_hi).any(|(lo, hi)| *lo && !*hi) || r.k_lo.iter().zip(&r.k_hi).any(|(l, h)| l > h) {
            return None;
        }
        let sol = solve_mip(&model, limits);
        match sol.status {
            MipStatus::Infeasible => None,
            _ => {
                let point = sol.values.map(|v| {
                    let open: Vec<bool> = block.x.iter().map(|x| v[x.0] > 0.5).collect();
                    let posts: Vec<usize> = block
                        .y
                        .iter()
                        .map(|ys| post_expr(ys).map(|(y, k)| k * v[y.0]).sum::<f64>().round() as usize)
                        .collect();
                    (open, posts)
                });
                Some((point, sol.bound))
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn price_enum(
        &self,
        n: usize,
        duals: &RmpDuals,
        r: &Restriction,
        limits: &MipLimits,
    ) -> Option<(Option<(Vec<bool>, Vec<usize>)>, f64)> {
        let inst = self.inst;
        let deadline = limits.time_limit.map(|t| Instant::now() + t);
        let mut complete = true;
        let nl = inst.n_locations();
        let (a, b) = self.reduced_coeffs(n, duals);
        let mut best: Option<(f64, Vec<bool>, Vec<usize>)> = None;
        let mut open = vec![false; nl];
        'subsets: for mask in 0u64..(1u64 << nl) {
            if mask % 4096 == 4095 && deadline.is_some_and(|d| Instant::now() >= d) {
                complete = false;
                break;
            }
            for (j, o) in open.iter_mut().enumerate() {
                *o = mask >> j & 1 == 1;
                if (*o && !r.x_hi[j]) || (!*o && r.x_lo[j]) {
                    continue 'subsets;
                }
            }
            let Ok(lambda) = demand_rates(inst, &self.cov, &self.e, &open, n) else {
                continue;
            };
            let mut posts = vec![0; nl];
            let mut cost = 0.0;
            for j in 0..nl {
                if !open[j] {
                    continue;
                }
                let Some(kmin) = min_posts(lambda[j], inst.queue.mu, &self.rho, inst.locations[j].m_max, r.k_lo[j])
                else {
                    continue 'subsets;
                };
                if kmin > r.k_hi[j] {
                    continue 'subsets;
                }
                let k = if b[j] >= 0.0 { kmin } else { r.k_hi[j] };
                posts[j] = k;
                cost += a[j] + b[j] * k as f64;
            }
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c - 1e-12) {
                best = Some((cost, open.clone(), posts));
            }
        }
        match best {
            Some((cost, o, k)) => Some((Some((o, k)), if complete { cost } else { f64::NEG_INFINITY })),
            None if complete => None,
            None => Some((None, f64::NEG_INFINITY)),
        }
    }
}

/// One-off pricing call; see [`Pricer::price`].
#[allow(clippy::too_many_arguments)]
pub fn solve_pricing(
    inst: &Instance,
    coeffs: &CostCoeffs,
    n: usize,
    duals: &RmpDuals,
    guidance: Option<&Guidance>,
    fixings: &Fixings,
    engine: PricingEngine,
    limits: &MipLimits,
) -> Result<PricingOutcome> {
    Ok(Pricer::new(inst, coeffs, engine)?.price(n, duals, guidance, fixings, limits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::cost_coefficients;
    use crate::generate::{generate, GenerateParams};
    use crate::instance::tests::single_node;
    use rand::{Rng, SeedableRng};

    fn exact() -> MipLimits {
        MipLimits {
            gap_tol: 1e-9,
            ..MipLimits::default()
        }
    }

    #[test]
    fn convexity_dual_only_gives_cheapest_point() {
        // Two locations; a demand of 2 needs two posts at one station.
        let mut inst = single_node(vec![1.0, 2.0], 5.0);
        inst.tree[0].w = vec![2.0];
        inst.tree[0].cost_build = vec![5.0, 1.0];
        let coeffs = cost_coefficients(&inst);
        let mut duals = RmpDuals::zero(1, 2);
        duals.sigma[0] = 10.0;
        for engine in [PricingEngine::Mip, PricingEngine::Enumerate] {
            let out = solve_pricing(&inst, &coeffs, 0, &duals, None, &Fixings::none(&inst), engine, &exact()).unwrap();
            let col = out.column.clone().unwrap_or_else(|| panic!("{engine:?}"));
            // Candidates: {0}x2 = 5+1+2*2 = 10, {1}x2 = 1+1+4 = 6, both x1 = 5+1+2 + 1+1+2 = 12.
            assert_eq!(col.open, vec![false, true]);
            assert_eq!(col.posts, vec![0, 2]);
            assert!((out.best_rc + 4.0).abs() < 1e-9);
            assert!((out.rc_bound + 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn huge_convexity_dual_yields_column() {
        let inst = single_node(vec![1.0, 2.0], 5.0);
        let coeffs = cost_coefficients(&inst);
        let mut duals = RmpDuals::zero(1, 2);
        duals.sigma[0] = 1e6;
        let out = solve_pricing(&inst, &coeffs, 0, &duals, None, &Fixings::none(&inst), PricingEngine::Mip, &exact()).unwrap();
        assert!(out.column.is_some());
        assert!(out.best_rc < -9e5);
    }

    #[test]
    fn closing_the_only_cover_is_infeasible() {
        let inst = single_node(vec![1.0, 9.0], 5.0);
        let coeffs = cost_coefficients(&inst);
        let mut fix = Fixings::none(&inst);
        fix.fix_x(&inst, 0, 0, false);
        for engine in [PricingEngine::Mip, PricingEngine::Enumerate] {
            let out = solve_pricing(&inst, &coeffs, 0, &RmpDuals::zero(1, 2), None, &fix, engine, &exact()).unwrap();
            assert!(out.infeasible);
            assert!(out.column.is_none());
        }
    }

    #[test]
    fn engines_agree_under_random_duals() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for seed in 0..6 {
            let inst = generate(&GenerateParams::tiny(), seed).unwrap();
            let coeffs = cost_coefficients(&inst);
            let nn = inst.n_nodes();
            let nl = inst.n_locations();
            let mut duals = RmpDuals::zero(nn, nl);
            for n in 0..nn {
                for j in 0..nl {
                    duals.pi1[n][j] = rng.gen_range(0.0..2000.0);
                    duals.pi2[n][j] = rng.gen_range(0.0..600.0);
                }
                duals.sigma[n] = rng.gen_range(0.0..5000.0);
            }
            let fix = Fixings::none(&inst);
            for n in 0..nn {
                let g = (n > 0).then(|| Guidance {
                    open: (0..nl).map(|j| j == 0).collect(),
                    posts: (0..nl).map(|j| usize::from(j == 0)).collect(),
                });
                for guidance in [None, g.as_ref()] {
                    let m = solve_pricing(&inst, &coeffs, n, &duals, guidance, &fix, PricingEngine::Mip, &exact()).unwrap();
                    let e = solve_pricing(&inst, &coeffs, n, &duals, guidance, &fix, PricingEngine::Enumerate, &exact())
                        .unwrap();
                    assert!(
                        (m.best_rc - e.best_rc).abs() < 1e-6 * e.best_rc.abs().max(1.0),
                        "seed {seed} node {n}: {} vs {}",
                        m.best_rc,
                        e.best_rc
                    );
                    assert!(m.rc_bound <= e.best_rc + 1e-6);
                }
            }
        }
    }
}
