use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub kind: VarKind,
    pub lower: f64,
    /// Written as `null` when infinite, since JSON has no infinity.
    #[serde(with = "upper_bound")]
    pub upper: f64,
    pub name: String,
}

mod upper_bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub name: String,
}

/// A minimization model. Lower bounds must be finite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(VarId, f64)>,
    pub objective_offset: f64,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, kind: VarKind, lower: f64, upper: f64, name: impl Into<String>) -> VarId {
        assert!(lower.is_finite(), "lower bounds must be finite");
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.variables.push(Variable {
            kind,
            lower,
            upper,
            name: name.into(),
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(VarKind::Binary, 0.0, 1.0, name)
    }

    pub fn add_continuous(&mut self, lower: f64, upper: f64, name: impl Into<String>) -> VarId {
        self.add_var(VarKind::Continuous, lower, upper, name)
    }

    /// Adds a row; repeated variables in `terms` are merged.
    pub fn add_constraint(
        &mut self,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
        name: impl Into<String>,
    ) -> usize {
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (v, c) in terms {
            debug_assert!(v.0 < self.variables.len());
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += c,
                None => merged.push((v, c)),
            }
        }
        self.constraints.push(Constraint {
            terms: merged,
            sense,
            rhs,
            name: name.into(),
        });
        self.constraints.len() - 1
    }

    pub fn add_objective_term(&mut self, var: VarId, coeff: f64) {
        match self.objective.iter_mut().find(|(w, _)| *w == var) {
            Some(slot) => slot.1 += coeff,
            None => self.objective.push((var, coeff)),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn objective_dense(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.variables.len()];
        for &(v, coef) in &self.objective {
            c[v.0] += coef;
        }
        c
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .map(|&(v, c)| c * values[v.0])
                .sum::<f64>()
    }

    /// Largest violation over rows and bounds at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v.0]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Human-readable LP-style dump. Not meant to be parsed back.
    pub fn to_lp_string(&self) -> String {
        let name = |v: VarId| -> String {
            let n = &self.variables[v.0].name;
            if n.is_empty() {
                format!("v{}", v.0)
            } else {
                n.clone()
            }
        };
        let expr = |terms: &[(VarId, f64)]| -> String {
            let mut s = String::new();
            for (idx, &(v, c)) in terms.iter().enumerate() {
                if idx == 0 {
                    let _ = write!(s, "{c} {}", name(v));
                } else if c < 0.0 {
                    let _ = write!(s, " - {} {}", -c, name(v));
                } else {
                    let _ = write!(s, " + {c} {}", name(v));
                }
            }
            if s.is_empty() {
                s.push('0');
            }
            s
        };
        let mut out = String::new();
        let _ = writeln!(out, "Minimize\n obj: {}", expr(&self.objective));
        if self.objective_offset != 0.0 {
            let _ = writeln!(out, " \\ constant {}", self.objective_offset);
        }
        let _ = writeln!(out, "Subject To");
        for (idx, c) in self.constraints.iter().enumerate() {
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let label = if c.name.is_empty() { format!("c{idx}") } else { c.name.clone() };
            let _ = writeln!(out, " {label}: {} {op} {}", expr(&c.terms), c.rhs);
        }
        let _ = writeln!(out, "Bounds");
        for (idx, v) in self.variables.iter().enumerate() {
            let _ = writeln!(out, " {} <= {} <= {}", v.lower, name(VarId(idx)), v.upper);
        }
        let bins: Vec<String> = (0..self.variables.len())
            .filter(|&i| self.variables[i].kind == VarKind::Binary)
            .map(|i| name(VarId(i)))
            .collect();
        if !bins.is_empty() {
            let _ = writeln!(out, "Binaries\n {}", bins.join(" "));
        }
        out.push_str("End\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_keeps_infinite_bounds() {
        let mut m = Model::new();
        let x = m.add_continuous(0.0, f64::INFINITY, "x");
        let y = m.add_binary("y");
        m.add_constraint([(x, 1.0), (y, -2.0)], Sense::Ge, 0.5, "r");
        m.add_objective_term(x, 1.5);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"upper\":null"));
        let back: Model = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn merges_duplicate_terms() {
        let mut m = Model::new();
        let x = m.add_continuous(0.0, 1.0, "x");
        m.add_constraint([(x, 1.0), (x, 2.0)], Sense::Le, 1.0, "r");
        assert_eq!(m.constraints[0].terms, vec![(x, 3.0)]);
    }

    #[test]
    fn lp_dump_mentions_everything() {
        let mut m = Model::new();
        let x = m.add_binary("x");
        let y = m.add_continuous(0.0, 4.0, "y");
        m.add_objective_term(x, 2.0);
        m.add_objective_term(y, -1.0);
        m.add_constraint([(x, 1.0), (y, -1.0)], Sense::Ge, 0.0, "link");
        let s = m.to_lp_string();
        assert!(s.contains("link: 1 x - 1 y >= 0"));
        assert!(s.contains("Binaries\n x"));
    }
}
