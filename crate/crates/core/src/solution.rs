//! Solution files: the deployment keyed by node id plus where it came from.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evcec::Deployment;
use crate::instance::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub algorithm: String,
    /// Seed of the generated instance, when known.
    pub seed: Option<u64>,
    pub instance_hash: String,
    pub objective: f64,
    /// Station flags per node id, indexed by location.
    pub open: BTreeMap<String, Vec<bool>>,
    /// Post counts per node id, indexed by location.
    pub posts: BTreeMap<String, Vec<usize>>,
}

impl SolutionFile {
    pub fn new(inst: &Instance, dep: &Deployment, algorithm: &str, seed: Option<u64>, objective: f64) -> Self {
        let key = |n: usize| inst.tree[n].id.to_string();
        Self {
            algorithm: algorithm.to_string(),
            seed,
            instance_hash: inst.content_hash(),
            objective,
            open: (0..dep.n_nodes()).map(|n| (key(n), dep.open[n].clone())).collect(),
            posts: (0..dep.n_nodes()).map(|n| (key(n), dep.posts[n].clone())).collect(),
        }
    }

    /// Rebuilds the deployment for `inst`, refusing files written for a
    /// different instance.
    pub fn deployment(&self, inst: &Instance) -> Result<Deployment> {
        if self.instance_hash != inst.content_hash() {
            return Err(Error::Parameter("solution belongs to a different instance".into()));
        }
        let mut dep = Deployment::closed(inst.n_nodes(), inst.n_locations());
        for (n, node) in inst.tree.iter().enumerate() {
            let id = node.id.to_string();
            let missing = || Error::Parameter(format!("solution lacks node {id}"));
            dep.open[n] = self.open.get(&id).ok_or_else(missing)?.clone();
            dep.posts[n] = self.posts.get(&id).ok_or_else(missing)?.clone();
            if dep.open[n].len() != inst.n_locations() || dep.posts[n].len() != inst.n_locations() {
                return Err(Error::Parameter(format!("node {id} has the wrong number of locations")));
            }
        }
        Ok(dep)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evcec::objective_value;
    use crate::generate::{generate, GenerateParams};
    use crate::heuristic::best_greedy;

    #[test]
    fn round_trip() {
        let inst = generate(&GenerateParams::tiny(), 2).unwrap();
        let dep = best_greedy(&inst).unwrap().deployment;
        let file = SolutionFile::new(&inst, &dep, "heuristic", Some(2), objective_value(&inst, &dep));
        let back = SolutionFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.deployment(&inst).unwrap(), dep);
        assert!(back.open.contains_key("0"));

        let other = generate(&GenerateParams::tiny(), 3).unwrap();
        assert!(back.deployment(&other).is_err());
    }
}
