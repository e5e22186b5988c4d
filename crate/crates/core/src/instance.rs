//! Problem data: zones, candidate locations, distances and the scenario tree.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::queueing::{QueueConfig, RhoTable};

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: usize,
    /// Distance-decay coefficient of the logit attraction.
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: usize,
    /// Maximum number of posts.
    pub m_max: usize,
    /// Station present before the planning horizon.
    pub x0: bool,
    /// Posts present before the planning horizon.
    pub y0: usize,
}

/// One node of the scenario tree. Per-zone vectors are indexed by zone id,
/// per-location vectors by location id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioNode {
    pub id: usize,
    /// `None` for the root, whose predecessor is the initial state.
    pub parent: Option<usize>,
    /// Unconditional probability of reaching this node.
    pub prob: f64,
    pub w: Vec<f64>,
    pub bcoef: Vec<f64>,
    pub theta: Vec<f64>,
    pub radius: Vec<f64>,
    pub cost_build: Vec<f64>,
    pub cost_post: Vec<f64>,
    pub cost_op_station: Vec<f64>,
    pub cost_op_post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub zones: Vec<Zone>,
    pub locations: Vec<Location>,
    /// `dist[i][j]`, zones by locations.
    pub dist: Vec<Vec<f64>>,
    pub tree: Vec<ScenarioNode>,
    pub queue: QueueConfig,
}

/// Zone/location incidence per scenario node under the coverage radii.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSets {
    /// `zones_near[n][j]`: zones within radius of location `j` at node `n`.
    pub zones_near: Vec<Vec<Vec<usize>>>,
    /// `locs_near[n][i]`: locations within the radius of zone `i` at node `n`.
    pub locs_near: Vec<Vec<Vec<usize>>>,
}

impl CoverageSets {
    pub fn new(inst: &Instance) -> Self {
        let nz = inst.zones.len();
        let nl = inst.locations.len();
        let mut zones_near = Vec::with_capacity(inst.tree.len());
        let mut locs_near = Vec::with_capacity(inst.tree.len());
        for node in &inst.tree {
            let mut zn = vec![Vec::new(); nl];
            let mut ln = vec![Vec::new(); nz];
            for i in 0..nz {
                for j in 0..nl {
                    // boundary inclusive
                    if inst.dist[i][j] <= node.radius[i] {
                        zn[j].push(i);
                        ln[i].push(j);
                    }
                }
            }
            zones_near.push(zn);
            locs_near.push(ln);
        }
        Self {
            zones_near,
            locs_near,
        }
    }

    pub fn covers(&self, n: usize, i: usize, j: usize) -> bool {
        self.locs_near[n][i].binary_search(&j).is_ok()
    }
}

pub fn coverage_sets(inst: &Instance) -> CoverageSets {
    CoverageSets::new(inst)
}

/// Logit attraction `exp(-a_i d_ij)`.
pub fn attraction(inst: &Instance, i: usize, j: usize) -> f64 {
    (-inst.zones[i].a * inst.dist[i][j]).exp()
}

impl Instance {
    pub fn n_zones(&self) -> usize {
        self.zones.len()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.tree.len()
    }

    pub fn max_posts(&self) -> usize {
        self.locations.iter().map(|l| l.m_max).max().unwrap_or(0)
    }

    /// Children of every node, in id order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.tree.len()];
        for node in &self.tree {
            if let Some(p) = node.parent {
                ch[p].push(node.id);
            }
        }
        ch
    }

    pub fn parent(&self, n: usize) -> Option<usize> {
        self.tree[n].parent
    }

    /// Ancestors of `n`, nearest first.
    pub fn ancestors(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.tree[n].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.tree[p].parent;
        }
        out
    }

    /// Strict descendants of `n`.
    pub fn descendants(&self, n: usize) -> Vec<usize> {
        let children = self.children();
        let mut out = Vec::new();
        let mut stack = children[n].clone();
        while let Some(c) = stack.pop() {
            out.push(c);
            stack.extend(children[c].iter().copied());
        }
        out.sort_unstable();
        out
    }

    /// Attraction matrix `e[i][j]`.
    pub fn attractions(&self) -> Vec<Vec<f64>> {
        (0..self.n_zones())
            .map(|i| (0..self.n_locations()).map(|j| attraction(self, i, j)).collect())
            .collect()
    }

    pub fn rho_table(&self) -> Result<RhoTable> {
        RhoTable::new(self.max_posts().max(1), self.queue.b, self.queue.alpha)
    }

    /// Same instance with a different queue configuration.
    pub fn with_queue(&self, queue: QueueConfig) -> Self {
        Self {
            queue,
            ..self.clone()
        }
    }

    /// Checks every structural invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let nz = self.zones.len();
        let nl = self.locations.len();
        if nz == 0 {
            errs.push("at least one zone is required".to_string());
        }
        if nl == 0 {
            errs.push("at least one location is required".to_string());
        }
        if self.tree.is_empty() {
            errs.push("scenario tree is empty".to_string());
        }
        for (idx, z) in self.zones.iter().enumerate() {
            if z.id != idx {
                errs.push(format!("zones[{idx}].id is {}, expected {idx}", z.id));
            }
            if !(z.a > 0.0 && z.a.is_finite()) {
                errs.push(format!("zones[{idx}].a must be positive, got {}", z.a));
            }
        }
        for (idx, l) in self.locations.iter().enumerate() {
            if l.id != idx {
                errs.push(format!("locations[{idx}].id is {}, expected {idx}", l.id));
            }
            if l.m_max < 1 {
                errs.push(format!("locations[{idx}].m_max must be at least 1"));
            }
            if l.m_max > crate::queueing::MAX_SERVERS {
                errs.push(format!(
                    "locations[{idx}].m_max exceeds the supported {}",
                    crate::queueing::MAX_SERVERS
                ));
            }
            if l.y0 > l.m_max {
                errs.push(format!("locations[{idx}].y0 = {} exceeds m_max = {}", l.y0, l.m_max));
            }
            if l.y0 > 0 && !l.x0 {
                errs.push(format!("locations[{idx}] has initial posts but x0 = false"));
            }
        }
        if self.dist.len() != nz {
            errs.push(format!("dist has {} rows, expected {nz}", self.dist.len()));
        }
        for (i, row) in self.dist.iter().enumerate() {
            if row.len() != nl {
                errs.push(format!("dist[{i}] has {} entries, expected {nl}", row.len()));
            }
            if row.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                errs.push(format!("dist[{i}] contains a negative or non-finite entry"));
            }
        }
        if let Err(mut q) = self.queue.validate() {
            errs.append(&mut q);
        }
        let mut roots = 0;
        for (idx, node) in self.tree.iter().enumerate() {
            let tag = format!("tree[{idx}]");
            if node.id != idx {
                errs.push(format!("{tag}.id is {}, expected {idx}", node.id));
            }
            match node.parent {
                None => roots += 1,
                Some(p) if p >= idx => {
                    errs.push(format!("{tag}.parent = {p} must precede the node"))
                }
                Some(_) => {}
            }
            if !(node.prob > 0.0 && node.prob <= 1.0 + PROB_TOL) {
                errs.push(format!("{tag}.prob must lie in (0,1], got {}", node.prob));
            }
            let zone_fields = [
                ("w", &node.w),
                ("bcoef", &node.bcoef),
                ("theta", &node.theta),
                ("radius", &node.radius),
            ];
            for (name, v) in zone_fields {
                if v.len() != nz {
                    errs.push(format!("{tag}.{name} has {} entries, expected {nz}", v.len()));
                }
            }
            let loc_fields = [
                ("cost_build", &node.cost_build),
                ("cost_post", &node.cost_post),
                ("cost_op_station", &node.cost_op_station),
                ("cost_op_post", &node.cost_op_post),
            ];
            for (name, v) in loc_fields {
                if v.len() != nl {
                    errs.push(format!("{tag}.{name} has {} entries, expected {nl}", v.len()));
                }
                if v.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
                    errs.push(format!("{tag}.{name} contains a negative or non-finite cost"));
                }
            }
            if node.w.iter().chain(&node.bcoef).any(|v| !(*v >= 0.0 && v.is_finite())) {
                errs.push(format!("{tag}: demand rates and coefficients must be nonnegative"));
            }
            if node.theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
                errs.push(format!("{tag}.theta entries must lie in [0,1]"));
            }
            if node.radius.iter().any(|r| !(*r > 0.0)) {
                errs.push(format!("{tag}.radius entries must be positive"));
            }
        }
        if !self.tree.is_empty() {
            if roots != 1 {
                errs.push(format!("scenario tree must have exactly one root, found {roots}"));
            }
            if self.tree[0].parent.is_some() {
                errs.push("tree[0] must be the root".to_string());
            }
            if (self.tree[0].prob - 1.0).abs() > PROB_TOL {
                errs.push(format!("root probability must be 1, got {}", self.tree[0].prob));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        // Structure is sound; now the cross-node invariants.
        for (n, kids) in self.children().iter().enumerate() {
            if kids.is_empty() {
                continue;
            }
            let mass: f64 = kids.iter().map(|&c| self.tree[c].prob).sum();
            if (mass - self.tree[n].prob).abs() > 1e-7 {
                errs.push(format!(
                    "children of node {n} carry probability {mass}, expected {}",
                    self.tree[n].prob
                ));
            }
        }
        let cov = CoverageSets::new(self);
        for n in 0..self.tree.len() {
            for i in 0..nz {
                if cov.locs_near[n][i].is_empty() {
                    errs.push(format!(
                        "zone {i} has no candidate location within radius at node {n}; the coverage requirement is infeasible"
                    ));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn content_hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("instance serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// One zone, `nl` locations, a single root node.
    pub fn single_node(dist: Vec<f64>, radius: f64) -> Instance {
        let nl = dist.len();
        Instance {
            zones: vec![Zone { id: 0, a: 1.0 }],
            locations: (0..nl)
                .map(|id| Location {
                    id,
                    m_max: 2,
                    x0: false,
                    y0: 0,
                })
                .collect(),
            dist: vec![dist],
            tree: vec![ScenarioNode {
                id: 0,
                parent: None,
                prob: 1.0,
                w: vec![1.0],
                bcoef: vec![0.0],
                theta: vec![1.0],
                radius: vec![radius],
                cost_build: vec![1.0; nl],
                cost_post: vec![1.0; nl],
                cost_op_station: vec![1.0; nl],
                cost_op_post: vec![1.0; nl],
            }],
            queue: QueueConfig {
                mu: 4.0,
                alpha: 0.9,
                b: 0,
            },
        }
    }

    #[test]
    fn coverage_inclusive_and_per_node() {
        let inst = single_node(vec![3.0], 5.0);
        let cov = coverage_sets(&inst);
        assert_eq!(cov.zones_near[0][0], vec![0]);
        assert_eq!(cov.locs_near[0][0], vec![0]);

        let inst = single_node(vec![5.0], 5.0);
        assert!(coverage_sets(&inst).covers(0, 0, 0));

        let mut inst = single_node(vec![6.0, 1.0], 5.0);
        let mut child = inst.tree[0].clone();
        child.id = 1;
        child.parent = Some(0);
        child.radius = vec![7.0];
        inst.tree.push(child);
        let cov = coverage_sets(&inst);
        assert!(!cov.covers(0, 0, 0));
        assert!(cov.covers(1, 0, 0));
        assert_eq!(cov.zones_near[1][0], vec![0]);
        assert!(cov.zones_near[0][0].is_empty());
    }

    #[test]
    fn attraction_values() {
        let mut inst = single_node(vec![0.0, 2.0_f64.ln(), 2.0], 5.0);
        assert_eq!(attraction(&inst, 0, 0), 1.0);
        assert!((attraction(&inst, 0, 1) - 0.5).abs() < 1e-15);
        inst.zones[0].a = 0.5;
        assert!((attraction(&inst, 0, 2) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn missing_field_is_reported() {
        let inst = single_node(vec![1.0], 5.0);
        let mut v: serde_json::Value = serde_json::from_str(&inst.to_json()).unwrap();
        v["queue"].as_object_mut().unwrap().remove("alpha");
        let err = Instance::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn uncovered_zone_rejected() {
        let inst = single_node(vec![9.0], 5.0);
        match inst.validate() {
            Err(Error::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("coverage requirement is infeasible")))
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn invariant_violations_listed() {
        let mut inst = single_node(vec![1.0], 5.0);
        inst.locations[0].y0 = 1;
        inst.zones[0].a = 0.0;
        inst.queue.alpha = 1.5;
        match inst.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn probability_mass_checked() {
        let mut inst = single_node(vec![1.0], 5.0);
        for id in 1..=2 {
            let mut c = inst.tree[0].clone();
            c.id = id;
            c.parent = Some(0);
            c.prob = 0.4;
            inst.tree.push(c);
        }
        assert!(inst.validate().is_err());
        inst.tree[2].prob = 0.6;
        inst.validate().unwrap();
    }

    #[test]
    fn save_load_round_trip() {
        let inst = single_node(vec![1.0, 2.5], 5.0);
        let dir = std::env::temp_dir().join(format!("evcec-inst-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("inst.json");
        inst.save(&path).unwrap();
        let back = Instance::load(&path).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.content_hash(), inst.content_hash());
        std::fs::remove_dir_all(&dir).ok();
    }
}
