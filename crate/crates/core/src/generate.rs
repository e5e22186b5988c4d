//! Seeded random instances.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evcec::demand_rates;
use crate::instance::{CoverageSets, Instance, Location, ScenarioNode, Zone};
use crate::queueing::{rho_alpha, QueueConfig, DEFAULT_RHO_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateParams {
    pub n_zones: usize,
    pub n_locations: usize,
    /// Children per node at each stage below the root; the tree has
    /// `1 + b1 + b1*b2 + ...` nodes.
    pub branching: Vec<usize>,
    pub m_max: usize,
    /// Side of the square holding zone and location points.
    pub side: f64,
    pub decay: (f64, f64),
    /// Root-stage base demand rate per zone, vehicles per hour.
    pub demand: (f64, f64),
    /// Per-stage multiplicative demand growth.
    pub growth: (f64, f64),
    pub bcoef: (f64, f64),
    pub theta: (f64, f64),
    pub radius: (f64, f64),
    pub cost_build: (f64, f64),
    pub cost_post: (f64, f64),
    pub cost_op_station: (f64, f64),
    pub cost_op_post: (f64, f64),
    /// Locations holding a station before the horizon.
    pub initial_stations: usize,
    /// Peak station load of the fully built network, as a fraction of the
    /// `m_max`-post capacity at queue threshold 0. Node demand is scaled down
    /// when it would exceed this, which keeps every generated instance
    /// feasible for all thresholds `b >= 0`.
    pub max_load: f64,
    pub queue: QueueConfig,
}

impl GenerateParams {
    fn base(n_zones: usize, n_locations: usize, branching: Vec<usize>, m_max: usize) -> Self {
        Self {
            n_zones,
            n_locations,
            branching,
            m_max,
            side: 100.0,
            decay: (0.02, 0.06),
            demand: (1.0, 4.0),
            growth: (1.0, 1.3),
            bcoef: (0.0, 0.3),
            theta: (0.7, 1.0),
            radius: (25.0, 45.0),
            cost_build: (1000.0, 2000.0),
            cost_post: (200.0, 400.0),
            cost_op_station: (100.0, 300.0),
            cost_op_post: (50.0, 100.0),
            initial_stations: 0,
            max_load: 0.9,
            queue: QueueConfig {
                mu: 2.0,
                alpha: 0.9,
                b: 0,
            },
        }
    }

    /// Uniform tree with `depth` levels (the root is level 1).
    pub fn uniform(
        n_zones: usize,
        n_locations: usize,
        depth: usize,
        branching: usize,
        m_max: usize,
    ) -> Self {
        Self::base(
            n_zones,
            n_locations,
            vec![branching; depth.saturating_sub(1)],
            m_max,
        )
    }

    /// 10 zones, 15 locations, 8 nodes (one deterministic stage, then two
    /// binary stages).
    pub fn small(m_max: usize) -> Self {
        let mut p = Self::base(10, 15, vec![1, 2, 2], m_max);
        p.initial_stations = 2;
        p
    }

    /// 10 zones, 25 locations, 16 nodes (3 then 4 children per node).
    pub fn medium(m_max: usize) -> Self {
        let mut p = Self::base(10, 25, vec![3, 4], m_max);
        p.initial_stations = 2;
        p
    }

    /// Desk-scale instances the exact solvers handle in seconds: 4 zones,
    /// 5 locations, 3 nodes, at most 3 posts.
    pub fn tiny() -> Self {
        let mut p = Self::base(4, 5, vec![2], 3);
        p.radius = (35.0, 55.0);
        p
    }

    pub fn n_nodes(&self) -> usize {
        let mut total = 1;
        let mut level = 1;
        for &b in &self.branching {
            level *= b;
            total += level;
        }
        total
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Parameter(msg.to_string()));
        if self.n_zones == 0 {
            return bad("n_zones must be at least 1");
        }
        if self.n_locations == 0 {
            return bad("n_locations must be at least 1");
        }
        if self.m_max == 0 || self.m_max > crate::queueing::MAX_SERVERS {
            return bad("m_max must be in 1..=30");
        }
        if self.branching.iter().any(|&b| b == 0) {
            return bad("branching factors must be at least 1");
        }
        if self.initial_stations > self.n_locations {
            return bad("more initial stations than locations");
        }
        if !(self.max_load > 0.0 && self.max_load <= 1.0) {
            return bad("max_load must lie in (0,1]");
        }
        let ranges = [
            self.decay,
            self.demand,
            self.growth,
            self.bcoef,
            self.theta,
            self.radius,
            self.cost_build,
            self.cost_post,
            self.cost_op_station,
            self.cost_op_post,
        ];
        if ranges.iter().any(|(lo, hi)| !(lo <= hi) || *lo < 0.0) {
            return bad("ranges must be nonnegative with lo <= hi");
        }
        if self.decay.0 <= 0.0 || self.radius.0 <= 0.0 {
            return bad("decay and radius ranges must be positive");
        }
        if self.theta.1 > 1.0 {
            return bad("theta range must lie in [0,1]");
        }
        if let Err(errs) = self.queue.validate() {
            return Err(Error::Parameter(errs.join("; ")));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Generates a random instance. Identical `(params, seed)` give identical
/// instances.
pub fn generate(params: &GenerateParams, seed: u64) -> Result<Instance> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nz = params.n_zones;
    let nl = params.n_locations;

    let point = |rng: &mut ChaCha8Rng| {
        (
            rng.gen_range(0.0..params.side),
            rng.gen_range(0.0..params.side),
        )
    };
    let zone_pts: Vec<_> = (0..nz).map(|_| point(&mut rng)).collect();
    let loc_pts: Vec<_> = (0..nl).map(|_| point(&mut rng)).collect();
    let dist: Vec<Vec<f64>> = zone_pts
        .iter()
        .map(|(zx, zy)| {
            loc_pts
                .iter()
                .map(|(lx, ly)| ((zx - lx).powi(2) + (zy - ly).powi(2)).sqrt())
                .collect()
        })
        .collect();
    let nearest: Vec<f64> = dist
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();

    let zones = (0..nz)
        .map(|id| Zone {
            id,
            a: draw(&mut rng, params.decay),
        })
        .collect();

    let mut locations: Vec<Location> = (0..nl)
        .map(|id| Location {
            id,
            m_max: params.m_max,
            x0: false,
            y0: 0,
        })
        .collect();
    for j in sample(&mut rng, nl, params.initial_stations).into_iter() {
        locations[j].x0 = true;
        locations[j].y0 = rng.gen_range(1..=(params.m_max / 2).max(1));
    }

    let mut tree: Vec<ScenarioNode> = Vec::with_capacity(params.n_nodes());
    let root_w: Vec<f64> = (0..nz).map(|_| draw(&mut rng, params.demand)).collect();
    let bcoef: Vec<f64> = (0..nz).map(|_| draw(&mut rng, params.bcoef)).collect();
    tree.push(make_node(&mut rng, params, 0, None, 1.0, root_w, bcoef, &nearest));
    let mut frontier = vec![0usize];
    for &width in &params.branching {
        let mut next = Vec::new();
        for &p in &frontier {
            let weights: Vec<f64> = (0..width).map(|_| rng.gen_range(0.5..1.5)).collect();
            let total: f64 = weights.iter().sum();
            let parent_prob = tree[p].prob;
            let parent_w = tree[p].w.clone();
            let parent_b = tree[p].bcoef.clone();
            for wt in weights {
                let id = tree.len();
                let w = parent_w.iter().map(|v| v * draw(&mut rng, params.growth)).collect();
                let node = make_node(
                    &mut rng,
                    params,
                    id,
                    Some(p),
                    parent_prob * wt / total,
                    w,
                    parent_b.clone(),
                    &nearest,
                );
                tree.push(node);
                next.push(id);
            }
        }
        frontier = next;
    }
    // Children must partition the parent's mass exactly.
    let children = {
        let mut ch = vec![Vec::new(); tree.len()];
        for node in &tree {
            if let Some(p) = node.parent {
                ch[p].push(node.id);
            }
        }
        ch
    };
    for (p, kids) in children.iter().enumerate() {
        if let Some((&last, rest)) = kids.split_last() {
            let used: f64 = rest.iter().map(|&c| tree[c].prob).sum();
            tree[last].prob = tree[p].prob - used;
        }
    }

    let mut inst = Instance {
        zones,
        locations,
        dist,
        tree,
        queue: params.queue,
    };
    scale_to_capacity(&mut inst, params)?;
    inst.validate()
        .map_err(|e| Error::Parameter(format!("generated instance is invalid: {e}")))?;
    Ok(inst)
}

#[allow(clippy::too_many_arguments)]
fn make_node(
    rng: &mut ChaCha8Rng,
    params: &GenerateParams,
    id: usize,
    parent: Option<usize>,
    prob: f64,
    w: Vec<f64>,
    bcoef: Vec<f64>,
    nearest: &[f64],
) -> ScenarioNode {
    let nz = params.n_zones;
    let nl = params.n_locations;
    let theta = (0..nz).map(|_| draw(rng, params.theta)).collect();
    // Enlarge radii that would leave a zone uncovered.
    let radius = (0..nz)
        .map(|i| draw(rng, params.radius).max(nearest[i]))
        .collect();
    let mut costs = |range| (0..nl).map(|_| draw(rng, range)).collect::<Vec<f64>>();
    let cost_build = costs(params.cost_build);
    let cost_post = costs(params.cost_post);
    let cost_op_station = costs(params.cost_op_station);
    let cost_op_post = costs(params.cost_op_post);
    ScenarioNode {
        id,
        parent,
        prob,
        w,
        bcoef,
        theta,
        radius,
        cost_build,
        cost_post,
        cost_op_station,
        cost_op_post,
    }
}

fn scale_to_capacity(inst: &mut Instance, params: &GenerateParams) -> Result<()> {
    let cov = CoverageSets::new(inst);
    let all_open = vec![true; inst.n_locations()];
    let cap = params.queue.mu * rho_alpha(params.m_max, 0, params.queue.alpha, DEFAULT_RHO_TOL)?;
    let e = inst.attractions();
    for n in 0..inst.n_nodes() {
        let loads = demand_rates(inst, &cov, &e, &all_open, n)?;
        let peak = loads.iter().copied().fold(0.0, f64::max);
        let limit = params.max_load * cap;
        if peak > limit {
            let factor = limit / peak;
            let node = &mut inst.tree[n];
            node.w.iter_mut().for_each(|v| *v *= factor);
            node.bcoef.iter_mut().for_each(|v| *v *= factor);
        }
    }
    Ok(())
}
