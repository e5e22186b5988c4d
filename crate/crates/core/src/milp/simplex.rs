//! Dense bounded-variable two-phase primal simplex.
//!
//! Every variable is shifted to a zero lower bound; finite upper bounds are
//! handled by the ratio test (bound flips) rather than extra rows. Each row
//! starts with either its slack or an artificial as the basic column, scaled
//! so that column is `+e_i`; those columns of the tableau therefore hold the
//! current basis inverse, which yields duals and lets the basic values be
//! recomputed from scratch to shed round-off.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model::{Model, Sense};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-7;
const DROP_TOL: f64 = 1e-13;
const RATIO_TIE_TOL: f64 = 1e-12;
const REFRESH_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted; only reachable through numerical trouble.
    IterationLimit,
    /// The dense tableau would exceed [`MAX_DENSE_CELLS`].
    TooLarge,
    /// The deadline passed mid-solve.
    TimeLimit,
}

/// Cap on tableau entries (rows times columns), about 400 MB of `f64`.
pub const MAX_DENSE_CELLS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    /// One per constraint, see the module docs for the sign convention.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            values: vec![0.0; n],
            objective,
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    ncols: usize,
    n_struct: usize,
    t: Vec<f64>,
    /// Scaled constraint columns, sparse, for refreshes.
    cols: Vec<Vec<(usize, f64)>>,
    /// Scaled, shifted right-hand side.
    rhs: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    barred: Vec<bool>,
    artificial: Vec<bool>,
    init_col: Vec<usize>,
    /// Coefficient of `init_col[i]` in the unscaled row `i` (always +-1).
    init_sign: Vec<f64>,
    iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn build(model: &Model, lower: &[f64], upper: &[f64]) -> Self {
        let n = model.num_vars();
        let m = model.num_constraints();
        let n_slack = model
            .constraints
            .iter()
            .filter(|c| c.sense != Sense::Eq)
            .count();

        // Decide per row which column starts basic and the row scaling.
        let mut shifted_rhs = Vec::with_capacity(m);
        for c in &model.constraints {
            let shift: f64 = c.terms.iter().map(|&(v, a)| a * lower[v.0]).sum();
            shifted_rhs.push(c.rhs - shift);
        }
        let mut needs_art = vec![false; m];
        let mut scale = vec![1.0; m];
        for (i, c) in model.constraints.iter().enumerate() {
            let r = shifted_rhs[i];
            match c.sense {
                Sense::Le => {
                    if r < 0.0 {
                        needs_art[i] = true;
                        scale[i] = -1.0;
                    }
                }
                Sense::Ge => {
                    if r <= 0.0 {
                        scale[i] = -1.0;
                    } else {
                        needs_art[i] = true;
                    }
                }
                Sense::Eq => {
                    needs_art[i] = true;
                    scale[i] = if r >= 0.0 { 1.0 } else { -1.0 };
                }
            }
        }
        let n_art = needs_art.iter().filter(|&&a| a).count();
        let ncols = n + n_slack + n_art;

        let mut t = vec![0.0; m * ncols];
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        let mut ub = vec![f64::INFINITY; ncols];
        let mut artificial = vec![false; ncols];
        let mut init_col = vec![0; m];
        let mut init_sign = vec![1.0; m];
        let mut basis = vec![0; m];
        let mut rhs = vec![0.0; m];
        let mut state = vec![State::Lower; ncols];
        for j in 0..n {
            ub[j] = upper[j] - lower[j];
        }
        let mut next_slack = n;
        let mut next_art = n + n_slack;
        for (i, c) in model.constraints.iter().enumerate() {
            let s = scale[i];
            for &(v, a) in &c.terms {
                if a != 0.0 {
                    t[i * ncols + v.0] += s * a;
                }
            }
            rhs[i] = s * shifted_rhs[i];
            let slack = match c.sense {
                Sense::Le => Some(1.0),
                Sense::Ge => Some(-1.0),
                Sense::Eq => None,
            };
            if let Some(sign) = slack {
                let col = next_slack;
                next_slack += 1;
                t[i * ncols + col] = s * sign;
                if !needs_art[i] {
                    init_col[i] = col;
                    init_sign[i] = sign;
                }
            }
            if needs_art[i] {
                let col = next_art;
                next_art += 1;
                artificial[col] = true;
                t[i * ncols + col] = 1.0;
                init_col[i] = col;
                init_sign[i] = s;
            }
            basis[i] = init_col[i];
            state[init_col[i]] = State::Basic;
        }
        for i in 0..m {
            for j in 0..ncols {
                let v = t[i * ncols + j];
                if v != 0.0 {
                    cols[j].push((i, v));
                }
            }
        }
        let xb = rhs.clone();
        Self {
            m,
            ncols,
            n_struct: n,
            t,
            cols,
            rhs,
            xb,
            basis,
            state,
            ub,
            cost: vec![0.0; ncols],
            d: vec![0.0; ncols],
            barred: vec![false; ncols],
            artificial,
            init_col,
            init_sign,
            iterations: 0,
        }
    }

    /// Recomputes reduced costs for the current `cost` vector.
    fn price_out(&mut self) {
        // y = c_B^T B^{-1}, with B^{-1} read off the initial-basis columns.
        let mut y = vec![0.0; self.m];
        for r in 0..self.m {
            let cb = self.cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += cb * self.at(r, self.init_col[i]);
            }
        }
        for j in 0..self.ncols {
            let dot: f64 = self.cols[j].iter().map(|&(i, a)| y[i] * a).sum();
            self.d[j] = if self.state[j] == State::Basic {
                0.0
            } else {
                self.cost[j] - dot
            };
        }
    }

    /// Rebuilds the tableau from the original columns and a fresh inverse of
    /// the basis, discarding the error accumulated by successive pivots.
    /// Leaves the tableau alone if the basis looks singular.
    fn reinvert(&mut self) {
        let m = self.m;
        let mut b = vec![0.0; m * m];
        for (r, &col) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[col] {
                b[i * m + r] = a;
            }
        }
        let Some(inv) = invert(&mut b, m) else { return };
        let nc = self.ncols;
        self.t.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..nc {
            for &(i, a) in &self.cols[j] {
                for r in 0..m {
                    let v = inv[r * m + i];
                    if v != 0.0 {
                        self.t[r * nc + j] += v * a;
                    }
                }
            }
        }
        for v in self.t.iter_mut() {
            if v.abs() < DROP_TOL {
                *v = 0.0;
            }
        }
        for (r, &col) in self.basis.iter().enumerate() {
            for i in 0..m {
                self.t[i * nc + col] = if i == r { 1.0 } else { 0.0 };
            }
        }
    }

    /// Recomputes basic values from the nonbasic bound values.
    fn refresh_xb(&mut self) {
        let mut eff = self.rhs.clone();
        for j in 0..self.ncols {
            if self.state[j] == State::Upper {
                let u = self.ub[j];
                for &(i, a) in &self.cols[j] {
                    eff[i] -= a * u;
                }
            }
        }
        for r in 0..self.m {
            let mut v = 0.0;
            for (i, e) in eff.iter().enumerate() {
                if *e != 0.0 {
                    v += self.at(r, self.init_col[i]) * e;
                }
            }
            self.xb[r] = v;
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let nc = self.ncols;
        let piv = self.t[r * nc + j];
        let row: Vec<(usize, f64)> = {
            let slice = &mut self.t[r * nc..(r + 1) * nc];
            let mut nz = Vec::new();
            for (k, v) in slice.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v /= piv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        nz.push((k, *v));
                    }
                }
            }
            slice[j] = 1.0;
            nz
        };
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nc + j];
            if f == 0.0 {
                continue;
            }
            let base = i * nc;
            for &(k, v) in &row {
                let cell = &mut self.t[base + k];
                *cell -= f * v;
                if cell.abs() < DROP_TOL {
                    *cell = 0.0;
                }
            }
            self.t[base + j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for &(k, v) in &row {
                self.d[k] -= f * v;
            }
        }
        self.d[j] = 0.0;
    }

    fn run(&mut self, max_iter: usize, deadline: Option<Instant>) -> Outcome {
        let mut since_refresh = 0usize;
        let mut since_reinvert = 0usize;
        let mut dirty = false;
        let mut local_iter = 0usize;
        // Keep reinversion, O(m^3), from dominating the O(m n) pivots.
        let reinvert_every = REFRESH_EVERY.max(self.m * self.m / self.ncols.max(1));
        // Reduced costs carry absolute error proportional to the largest cost.
        let opt_tol = OPT_TOL * self.cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        loop {
            if local_iter >= max_iter {
                return Outcome::IterationLimit;
            }
            if local_iter % 32 == 31 && deadline.is_some_and(|d| Instant::now() >= d) {
                return Outcome::TimeLimit;
            }
            // Entering column.
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..self.ncols {
                if self.barred[j] {
                    continue;
                }
                let dj = self.d[j];
                let score = match self.state[j] {
                    State::Basic => continue,
                    State::Lower if dj < -opt_tol && self.ub[j] > 0.0 => -dj,
                    State::Upper if dj > opt_tol => dj,
                    _ => continue,
                };
                if score > best {
                    best = score;
                    enter = Some(j);
                }
            }
            let Some(j) = enter else {
                if dirty {
                    // Confirm optimality on a freshly inverted basis.
                    self.reinvert();
                    self.refresh_xb();
                    self.price_out();
                    dirty = false;
                    since_refresh = 0;
                    since_reinvert = 0;
                    continue;
                }
                return Outcome::Optimal;
            };
            let dir = if self.state[j] == State::Lower { 1.0 } else { -1.0 };

            // Ratio test.
            let limit_of = |this: &Self, i: usize, slack: f64| -> Option<(f64, bool)> {
                let a = this.at(i, j);
                if a.abs() < PIVOT_TOL {
                    return None;
                }
                let rate = -dir * a;
                let bi = this.basis[i];
                if rate < 0.0 {
                    Some((((this.xb[i] + slack) / -rate).max(0.0), false))
                } else {
                    let u = this.ub[bi];
                    if u.is_infinite() {
                        None
                    } else {
                        Some((((u - this.xb[i] + slack) / rate).max(0.0), true))
                    }
                }
            };
            // Minimum ratio. Ties are broken lexicographically on the rows of
            // B^{-1} (signed for rows heading to an upper bound), which rules
            // out cycling on degenerate vertices.
            let mut leave: Option<(usize, bool)> = None;
            let mut step = self.ub[j];
            let mut min_lim = f64::INFINITY;
            for i in 0..self.m {
                if let Some((lim, _)) = limit_of(self, i, 0.0) {
                    min_lim = min_lim.min(lim);
                }
            }
            if min_lim + RATIO_TIE_TOL < step {
                let mut ties = Vec::new();
                for i in 0..self.m {
                    if let Some((lim, to_upper)) = limit_of(self, i, 0.0) {
                        if lim <= min_lim + RATIO_TIE_TOL {
                            ties.push((i, to_upper, lim));
                        }
                    }
                }
                // Only well-sized pivots compete, to keep the basis well conditioned.
                let amax = ties.iter().map(|t| self.at(t.0, j).abs()).fold(0.0, f64::max);
                ties.retain(|t| self.at(t.0, j).abs() >= 1e-3 * amax);
                let (i, to_upper, lim) = if ties.len() == 1 { ties[0] } else { self.lex_min(j, &ties) };
                leave = Some((i, to_upper));
                step = lim;
            }
            if leave.is_none() && step.is_infinite() {
                return Outcome::Unbounded;
            }

            for i in 0..self.m {
                let a = self.at(i, j);
                if a != 0.0 {
                    self.xb[i] -= dir * step * a;
                }
            }
            match leave {
                None => {
                    self.state[j] = if dir > 0.0 { State::Upper } else { State::Lower };
                }
                Some((r, to_upper)) => {
                    let leaving = self.basis[r];
                    self.state[leaving] = if to_upper { State::Upper } else { State::Lower };
                    self.xb[r] = if dir > 0.0 { step } else { self.ub[j] - step };
                    self.basis[r] = j;
                    self.state[j] = State::Basic;
                    self.pivot(r, j);
                    since_refresh += 1;
                    since_reinvert += 1;
                    dirty = true;
                }
            }
            if since_refresh >= REFRESH_EVERY {
                if since_reinvert >= reinvert_every {
                    self.reinvert();
                    since_reinvert = 0;
                }
                self.refresh_xb();
                self.price_out();
                since_refresh = 0;
            }
            local_iter += 1;
            self.iterations += 1;
        }
    }

    /// Among tied leaving rows `(row, to_upper, ratio)`, the one whose
    /// signed, pivot-scaled row of B^{-1} is lexicographically smallest.
    fn lex_min(&self, j: usize, ties: &[(usize, bool, f64)]) -> (usize, bool, f64) {
        let key = |i: usize, to_upper: bool, k: usize| {
            let sign = if to_upper { -1.0 } else { 1.0 };
            sign * self.at(i, self.init_col[k]) / self.at(i, j).abs()
        };
        let mut best = ties[0];
        for &cand in &ties[1..] {
            for k in 0..self.m {
                let (a, b) = (key(cand.0, cand.1, k), key(best.0, best.1, k));
                let tol = 1e-9 * a.abs().max(b.abs()).max(1e-9);
                if a < b - tol {
                    best = cand;
                    break;
                }
                if a > b + tol {
                    break;
                }
            }
        }
        best
    }

    fn phase_one_infeasibility(&self) -> f64 {
        (0..self.m)
            .filter(|&r| self.artificial[self.basis[r]])
            .map(|r| self.xb[r].max(0.0))
            .sum()
    }

    /// Pivots basic artificials (at zero) out where a structural or slack
    /// column can replace them.
    fn expel_artificials(&mut self) {
        for r in 0..self.m {
            if !self.artificial[self.basis[r]] {
                continue;
            }
            let mut best = None;
            let mut best_mag = 1e-5;
            for k in 0..self.ncols {
                if self.artificial[k] || self.state[k] == State::Basic {
                    continue;
                }
                let mag = self.at(r, k).abs();
                if mag > best_mag {
                    best_mag = mag;
                    best = Some(k);
                }
            }
            if let Some(k) = best {
                let leaving = self.basis[r];
                let value = if self.state[k] == State::Upper { self.ub[k] } else { 0.0 };
                self.state[leaving] = State::Lower;
                self.basis[r] = k;
                self.state[k] = State::Basic;
                self.xb[r] = value;
                self.pivot(r, k);
            }
        }
    }
}

/// Solves the LP relaxation of `model` (binaries relaxed to `[0,1]`).
/// Gauss-Jordan inverse of the row-major `m x m` matrix `a` (destroyed),
/// or None when a pivot is too small to trust.
fn invert(a: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))?;
        if a[p * m + c].abs() < 1e-11 {
            return None;
        }
        if p != c {
            for k in 0..m {
                a.swap(p * m + k, c * m + k);
                inv.swap(p * m + k, c * m + k);
            }
        }
        let piv = a[c * m + c];
        for k in 0..m {
            a[c * m + k] /= piv;
            inv[c * m + k] /= piv;
        }
        for i in 0..m {
            let f = a[i * m + c];
            if i == c || f == 0.0 {
                continue;
            }
            for k in 0..m {
                a[i * m + k] -= f * a[c * m + k];
                inv[i * m + k] -= f * inv[c * m + k];
            }
        }
    }
    Some(inv)
}

pub fn solve_lp(model: &Model) -> LpSolution {
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    solve_lp_bounded(model, &lower, &upper)
}

/// Solves the LP relaxation with the given variable bounds in place of the
/// model's own.
pub fn solve_lp_bounded(model: &Model, lower: &[f64], upper: &[f64]) -> LpSolution {
    solve_lp_until(model, lower, upper, None)
}

/// As [`solve_lp_bounded`], giving up with [`LpStatus::TimeLimit`] once
/// `deadline` passes.
pub fn solve_lp_until(model: &Model, lower: &[f64], upper: &[f64], deadline: Option<Instant>) -> LpSolution {
    let n = model.num_vars();
    let m = model.num_constraints();
    if lower.iter().zip(upper).any(|(l, u)| l > &(u + FEAS_TOL)) {
        return LpSolution::without_point(LpStatus::Infeasible, n, m, 0);
    }
    // Columns: structurals plus at most one slack and one artificial per row.
    if m.saturating_mul(n + 2 * m) > MAX_DENSE_CELLS {
        log::warn!("LP with {m} rows and {n} columns is too large for the dense tableau");
        return LpSolution::without_point(LpStatus::TooLarge, n, m, 0);
    }
    let mut tab = Tableau::build(model, lower, upper);
    let max_iter = 50 * (tab.m + tab.ncols) + 1000;

    // Phase one.
    let has_art = tab.artificial.iter().any(|&a| a);
    if has_art {
        for k in 0..tab.ncols {
            tab.cost[k] = if tab.artificial[k] { 1.0 } else { 0.0 };
        }
        tab.price_out();
        match tab.run(max_iter, deadline) {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase one is bounded below by zero"),
            Outcome::IterationLimit => {
                return LpSolution::without_point(LpStatus::IterationLimit, n, m, tab.iterations)
            }
            Outcome::TimeLimit => return LpSolution::without_point(LpStatus::TimeLimit, n, m, tab.iterations),
        }
        tab.refresh_xb();
        let scale = 1.0 + tab.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if tab.phase_one_infeasibility() > 1e-7 * scale {
            return LpSolution::without_point(LpStatus::Infeasible, n, m, tab.iterations);
        }
        for k in 0..tab.ncols {
            if tab.artificial[k] {
                tab.barred[k] = true;
                tab.ub[k] = 0.0;
            }
        }
        tab.expel_artificials();
        tab.refresh_xb();
    }

    // Phase two.
    let c = model.objective_dense();
    for k in 0..tab.ncols {
        tab.cost[k] = if k < n { c[k] } else { 0.0 };
    }
    tab.price_out();
    match tab.run(max_iter, deadline) {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return LpSolution::without_point(LpStatus::Unbounded, n, m, tab.iterations)
        }
        Outcome::IterationLimit => {
            return LpSolution::without_point(LpStatus::IterationLimit, n, m, tab.iterations)
        }
        Outcome::TimeLimit => return LpSolution::without_point(LpStatus::TimeLimit, n, m, tab.iterations),
    }
    tab.refresh_xb();
    tab.price_out();

    let mut values = vec![0.0; n];
    for (j, v) in values.iter_mut().enumerate() {
        *v = lower[j]
            + match tab.state[j] {
                State::Lower => 0.0,
                State::Upper => tab.ub[j],
                State::Basic => 0.0,
            };
    }
    for r in 0..tab.m {
        let col = tab.basis[r];
        if col < n {
            values[col] = lower[col] + tab.xb[r];
        }
    }
    for (j, v) in values.iter_mut().enumerate() {
        *v = v.clamp(lower[j], upper[j]);
    }
    let duals: Vec<f64> = (0..m)
        .map(|i| -tab.d[tab.init_col[i]] * tab.init_sign[i])
        .collect();
    let reduced_costs = tab.d[..tab.n_struct].to_vec();
    let objective = model.evaluate(&values);
    LpSolution {
        status: LpStatus::Optimal,
        values,
        objective,
        duals,
        reduced_costs,
        iterations: tab.iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::VarId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bound_row() {
        let mut m = Model::new();
        let x = m.add_continuous(0.0, f64::INFINITY, "x");
        m.add_objective_term(x, 1.0);
        m.add_constraint([(x, 1.0)], Sense::Ge, 3.0, "lo");
        m.add_constraint([(x, 1.0)], Sense::Le, 10.0, "hi");
        let s = solve_lp(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 3.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
        assert!((s.duals[0] - 1.0).abs() < 1e-9);
        assert!(s.duals[1].abs() < 1e-9);
    }

    #[test]
    fn degenerate_optimum_face() {
        let mut m = Model::new();
        let x = m.add_continuous(0.0, 1.0, "x");
        let y = m.add_continuous(0.0, 1.0, "y");
        m.add_objective_term(x, -1.0);
        m.add_objective_term(y, -1.0);
        m.add_constraint([(x, 1.0), (y, 1.0)], Sense::Le, 1.0, "cap");
        let s = solve_lp(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
        assert!((s.duals[0] + 1.0).abs() < 1e-9, "dual {}", s.duals[0]);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut m = Model::new();
        let x = m.add_continuous(0.0, 1.0, "x");
        m.add_constraint([(x, 1.0)], Sense::Ge, 2.0, "");
        assert_eq!(solve_lp(&m).status, LpStatus::Infeasible);

        let mut m = Model::new();
        let x = m.add_continuous(0.0, f64::INFINITY, "x");
        let y = m.add_continuous(0.0, f64::INFINITY, "y");
        m.add_objective_term(x, -1.0);
        m.add_constraint([(x, 1.0), (y, -1.0)], Sense::Le, 1.0, "");
        assert_eq!(solve_lp(&m).status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_shifted_bounds() {
        // min 2x + 3y s.t. x + y = 5, x in [1,3], y in [1, inf)
        let mut m = Model::new();
        let x = m.add_continuous(1.0, 3.0, "x");
        let y = m.add_continuous(1.0, f64::INFINITY, "y");
        m.add_objective_term(x, 2.0);
        m.add_objective_term(y, 3.0);
        m.add_constraint([(x, 1.0), (y, 1.0)], Sense::Eq, 5.0, "");
        let s = solve_lp(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 3.0).abs() < 1e-9);
        assert!((s.values[1] - 2.0).abs() < 1e-9);
        assert!((s.objective - 12.0).abs() < 1e-9);
        // Raising the rhs buys more y at 3.
        assert!((s.duals[0] - 3.0).abs() < 1e-9);
        // x sits at its upper bound with reduced cost 2 - 3 = -1.
        assert!((s.reduced_costs[0] + 1.0).abs() < 1e-9);
    }

    /// Brute-force oracle: enumerate every vertex of `{Ax <= b, 0 <= x <= u}`
    /// by choosing `n` active constraints among rows and bounds.
    fn vertex_oracle(a: &[Vec<f64>], b: &[f64], u: &[f64], c: &[f64]) -> Option<f64> {
        let n = c.len();
        let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e.clone(), u[j]));
            let neg: Vec<f64> = e.iter().map(|v| -v).collect();
            rows.push((neg, 0.0));
        }
        let total = rows.len();
        let mut best: Option<f64> = None;
        let mut pick = (0..n).collect::<Vec<_>>();
        loop {
            // Solve the n x n system by Gaussian elimination.
            let mut mat: Vec<Vec<f64>> = pick
                .iter()
                .map(|&r| {
                    let mut row = rows[r].0.clone();
                    row.push(rows[r].1);
                    row
                })
                .collect();
            let mut ok = true;
            for col in 0..n {
                let p = (col..n).max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs())).unwrap();
                if mat[p][col].abs() < 1e-10 {
                    ok = false;
                    break;
                }
                mat.swap(col, p);
                for r in 0..n {
                    if r != col {
                        let f = mat[r][col] / mat[col][col];
                        for k in col..=n {
                            mat[r][k] -= f * mat[col][k];
                        }
                    }
                }
            }
            if ok {
                let x: Vec<f64> = (0..n).map(|r| mat[r][n] / mat[r][r]).collect();
                let feasible = rows
                    .iter()
                    .all(|(row, rhs)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9);
                if feasible {
                    let obj: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                    best = Some(best.map_or(obj, |b: f64| b.min(obj)));
                }
            }
            // next combination
            let mut k = n;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if pick[k] < total - n + k {
                    pick[k] += 1;
                    for l in k + 1..n {
                        pick[l] = pick[l - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn random_lps_match_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let n = 6;
            let mrows = 4;
            let a: Vec<Vec<f64>> = (0..mrows)
                .map(|_| (0..n).map(|_| rng.gen_range(-3.0..5.0f64).round()).collect())
                .collect();
            let b: Vec<f64> = (0..mrows).map(|_| rng.gen_range(-2.0..8.0f64).round()).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..4.0f64).round()).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0f64).round()).collect();
            let mut m = Model::new();
            let vars: Vec<VarId> = (0..n).map(|j| m.add_continuous(0.0, u[j], format!("x{j}"))).collect();
            for (j, &cj) in c.iter().enumerate() {
                m.add_objective_term(vars[j], cj);
            }
            for (row, &rhs) in a.iter().zip(&b) {
                m.add_constraint(vars.iter().copied().zip(row.iter().copied()), Sense::Le, rhs, "");
            }
            let s = solve_lp(&m);
            match vertex_oracle(&a, &b, &u, &c) {
                None => assert_eq!(s.status, LpStatus::Infeasible),
                Some(opt) => {
                    assert_eq!(s.status, LpStatus::Optimal);
                    assert!((s.objective - opt).abs() < 1e-6, "{} vs {opt}", s.objective);
                    assert!(m.max_violation(&s.values) < 1e-7);
                    check_duality(&m, &s);
                }
            }
        }
    }

    /// Strong duality and complementary slackness with explicit bounds.
    pub(crate) fn check_duality(m: &Model, s: &LpSolution) {
        let c = m.objective_dense();
        let mut dual_obj = m.objective_offset;
        for (i, con) in m.constraints.iter().enumerate() {
            let y = s.duals[i];
            match con.sense {
                Sense::Ge => assert!(y >= -1e-7, "ge dual {y}"),
                Sense::Le => assert!(y <= 1e-7, "le dual {y}"),
                Sense::Eq => {}
            }
            let lhs: f64 = con.terms.iter().map(|&(v, a)| a * s.values[v.0]).sum();
            assert!(y.abs() < 1e-7 || (lhs - con.rhs).abs() < 1e-6, "slackness row {i}");
            dual_obj += y * con.rhs;
        }
        for (j, v) in m.variables.iter().enumerate() {
            let col: f64 = m
                .constraints
                .iter()
                .enumerate()
                .flat_map(|(i, con)| con.terms.iter().filter(|t| t.0 .0 == j).map(move |t| t.1 * s.duals[i]))
                .sum();
            let rc = c[j] - col;
            assert!((rc - s.reduced_costs[j]).abs() < 1e-6);
            if rc > 1e-7 {
                dual_obj += rc * v.lower;
            } else if rc < -1e-7 {
                dual_obj += rc * v.upper;
            }
        }
        assert!((dual_obj - s.objective).abs() < 1e-6, "dual {dual_obj} primal {}", s.objective);
    }

    #[test]
    fn deterministic() {
        let mut m = Model::new();
        let v: Vec<VarId> = (0..4).map(|j| m.add_continuous(0.0, 2.0, format!("x{j}"))).collect();
        for (j, &x) in v.iter().enumerate() {
            m.add_objective_term(x, -(j as f64 + 1.0));
        }
        m.add_constraint(v.iter().map(|&x| (x, 1.0)), Sense::Le, 3.0, "");
        m.add_constraint([(v[0], 1.0), (v[3], 1.0)], Sense::Ge, 1.0, "");
        assert_eq!(solve_lp(&m), solve_lp(&m));
    }
}
