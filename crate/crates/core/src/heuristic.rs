//! Greedy construction with congestion-aware post sizing, and a
//! close-and-repair local search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evcec::{demand_rates, inherited, objective_value, Deployment};
use crate::instance::{CoverageSets, Instance};
use crate::queueing::RhoTable;

/// How the greedy picks the next location to open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    MostZones,
    LowestCost,
    LowestCostPerZone,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Self::MostZones, Self::LowestCost, Self::LowestCostPerZone];
}

/// Smallest post count in `[max(1, floor_k), m_max]` whose capacity covers
/// `lambda`, or `None` if even `m_max` posts fall short.
pub fn min_posts(lambda: f64, mu: f64, rho: &RhoTable, m_max: usize, floor_k: usize) -> Option<usize> {
    let top = m_max.min(rho.max_posts());
    (floor_k.max(1)..=top).find(|&k| mu * rho.rho(k) >= lambda)
}

struct Ctx<'a> {
    inst: &'a Instance,
    cov: CoverageSets,
    e: Vec<Vec<f64>>,
    rho: RhoTable,
}

impl<'a> Ctx<'a> {
    fn new(inst: &'a Instance) -> Result<Self> {
        Ok(Self {
            inst,
            cov: CoverageSets::new(inst),
            e: inst.attractions(),
            rho: inst.rho_table()?,
        })
    }

    /// Proxy cost of opening `j` at node `n` with one post.
    fn open_cost(&self, n: usize, j: usize) -> f64 {
        let node = &self.inst.tree[n];
        node.cost_build[j] + node.cost_op_station[j] + node.cost_post[j] + node.cost_op_post[j]
    }

    /// Picks among `cands`, given as `(location, relevant zone count)`.
    fn choose(&self, criterion: Criterion, n: usize, cands: &[(usize, usize)]) -> Option<usize> {
        let score = |&(j, cnt): &(usize, usize)| -> f64 {
            match criterion {
                Criterion::MostZones => -(cnt as f64),
                Criterion::LowestCost => self.open_cost(n, j),
                Criterion::LowestCostPerZone => self.open_cost(n, j) / cnt.max(1) as f64,
            }
        };
        let mut best: Option<(usize, f64)> = None;
        for c in cands {
            let s = score(c);
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((c.0, s));
            }
        }
        best.map(|b| b.0)
    }

    fn node_step(
        &self,
        criterion: Criterion,
        n: usize,
        open: &mut [bool],
        floor: &[usize],
        forbidden: &[bool],
    ) -> Result<Vec<usize>> {
        let inst = self.inst;
        let nl = inst.n_locations();
        let nz = inst.n_zones();
        // Coverage.
        loop {
            let uncovered: Vec<usize> = (0..nz)
                .filter(|&i| !self.cov.locs_near[n][i].iter().any(|&j| open[j]))
                .collect();
            if uncovered.is_empty() {
                break;
            }
            let cands: Vec<(usize, usize)> = (0..nl)
                .filter(|&j| !open[j] && !forbidden[j])
                .map(|j| {
                    let cnt = uncovered.iter().filter(|&&i| self.cov.covers(n, i, j)).count();
                    (j, cnt)
                })
                .filter(|c| c.1 > 0)
                .collect();
            match self.choose(criterion, n, &cands) {
                Some(j) => open[j] = true,
                None => {
                    return Err(Error::Infeasible(format!(
                        "zone {} cannot be covered at node {n}",
                        uncovered[0]
                    )))
                }
            }
        }
        // Sizing.
        loop {
            let lambda = demand_rates(inst, &self.cov, &self.e, open, n)?;
            let mut posts = vec![0; nl];
            let mut overloaded = Vec::new();
            for j in 0..nl {
                if !open[j] {
                    continue;
                }
                match min_posts(lambda[j], inst.queue.mu, &self.rho, inst.locations[j].m_max, floor[j]) {
                    Some(k) => posts[j] = k,
                    None => overloaded.push(j),
                }
            }
            if overloaded.is_empty() {
                return Ok(posts);
            }
            let relief: Vec<usize> = (0..nz)
                .filter(|&i| overloaded.iter().any(|&j| self.cov.covers(n, i, j)))
                .collect();
            let free: Vec<usize> = (0..nl).filter(|&j| !open[j] && !forbidden[j]).collect();
            let mut cands: Vec<(usize, usize)> = free
                .iter()
                .map(|&j| (j, relief.iter().filter(|&&i| self.cov.covers(n, i, j)).count()))
                .filter(|c| c.1 > 0)
                .collect();
            if cands.is_empty() {
                cands = free
                    .iter()
                    .map(|&j| (j, self.cov.zones_near[n][j].len()))
                    .collect();
            }
            match self.choose(criterion, n, &cands) {
                Some(j) => open[j] = true,
                None => {
                    return Err(Error::Infeasible(format!(
                        "node {n}: station {} is overloaded with every location open",
                        overloaded[0]
                    )))
                }
            }
        }
    }
}

/// Greedy deployment under one opening criterion.
pub fn greedy(inst: &Instance, criterion: Criterion) -> Result<Deployment> {
    greedy_with(inst, criterion, None, &vec![false; inst.n_locations()])
}

/// Greedy seeded with stations already open per node, never opening a
/// `forbidden` location. Nodes are processed in tree order, each starting
/// from its predecessor's stations and post counts.
pub fn greedy_with(
    inst: &Instance,
    criterion: Criterion,
    seed: Option<&Deployment>,
    forbidden: &[bool],
) -> Result<Deployment> {
    let ctx = Ctx::new(inst)?;
    let nl = inst.n_locations();
    let mut dep = Deployment::closed(inst.n_nodes(), nl);
    for n in 0..inst.n_nodes() {
        let (mut open, floor) = inherited(inst, &dep, n);
        if let Some(s) = seed {
            for j in 0..nl {
                open[j] |= s.open[n][j] && !forbidden[j];
            }
        }
        let posts = ctx.node_step(criterion, n, &mut open, &floor, forbidden)?;
        dep.open[n] = open;
        dep.posts[n] = posts;
    }
    Ok(dep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeuristicResult {
    pub deployment: Deployment,
    pub objective: f64,
    pub criterion: Criterion,
}

/// Best of the three single-criterion greedy runs.
pub fn best_greedy(inst: &Instance) -> Result<HeuristicResult> {
    let mut best: Option<HeuristicResult> = None;
    let mut last_err = None;
    for criterion in Criterion::ALL {
        match greedy(inst, criterion) {
            Ok(deployment) => {
                let objective = objective_value(inst, &deployment);
                if best.as_ref().is_none_or(|b| objective < b.objective) {
                    best = Some(HeuristicResult {
                        deployment,
                        objective,
                        criterion,
                    });
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("three runs"))
}

/// First-improvement local search: close a location everywhere, repair
/// with the most-zones greedy, keep the result if it is cheaper. Sweeps
/// repeat until none improves.
pub fn local_search(inst: &Instance, start: &Deployment) -> Result<Deployment> {
    let nl = inst.n_locations();
    let mut current = start.clone();
    let mut best = objective_value(inst, &current);
    loop {
        let mut improved = false;
        for j in 0..nl {
            if inst.locations[j].x0 || !(0..inst.n_nodes()).any(|n| current.open[n][j]) {
                continue;
            }
            let mut seed = current.clone();
            for n in 0..inst.n_nodes() {
                seed.open[n][j] = false;
                seed.posts[n][j] = 0;
            }
            let mut forbidden = vec![false; nl];
            forbidden[j] = true;
            let Ok(trial) = greedy_with(inst, Criterion::MostZones, Some(&seed), &forbidden) else {
                continue;
            };
            let z = objective_value(inst, &trial);
            if z < best - 1e-9 * best.abs().max(1.0) {
                best = z;
                current = trial;
                improved = true;
            }
        }
        if !improved {
            return Ok(current);
        }
    }
}
