//! Linear/integer model representation and the embedded solvers.
//!
//! Dual sign convention (minimization): duals of `>=` rows are nonnegative,
//! of `<=` rows nonpositive, of `=` rows free. A dual is the rate of change
//! of the optimal objective per unit increase of the row's right-hand side.

mod bnb;
mod model;
mod simplex;

pub use bnb::{relative_gap, solve_mip, solve_mip_from, MipLimits, MipSolution, MipStatus};
pub use model::{Constraint, Model, Sense, VarId, VarKind, Variable};
pub use simplex::{solve_lp, solve_lp_bounded, solve_lp_until, LpSolution, LpStatus, MAX_DENSE_CELLS};
