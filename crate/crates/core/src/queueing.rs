//! Service-level function for M/M/s stations and the utilization thresholds
//! derived from it.
//!
//! With `m` posts, queue threshold `b` and aggregate load `rho = lambda / mu`,
//! the probability that an arriving EV finds at most `b` vehicles waiting is
//! at least `alpha` iff
//!
//! ```text
//! L(m, b, rho) = sum_{k=0}^{m-1} (m-k) m! m^b / k! * rho^-(m+b+1-k) >= 1 / (1 - alpha)
//! ```
//!
//! `L` is strictly decreasing in `rho`, so the condition is equivalent to
//! `rho <= rho_alpha(m, b, alpha)`, which is what the linear models use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest post count for which factorials are tabulated.
pub const MAX_SERVERS: usize = 30;

pub const DEFAULT_RHO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueConfig {
    /// Service rate of one post, vehicles per hour.
    pub mu: f64,
    /// Required service level.
    pub alpha: f64,
    /// Queue-length threshold.
    pub b: u32,
}

impl QueueConfig {
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            errs.push(format!("queue.mu must be positive, got {}", self.mu));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            errs.push(format!("queue.alpha must lie in (0,1), got {}", self.alpha));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Left-hand side `L(m, b, rho)` of the service-level condition.
///
/// Evaluated in log space; very small `rho` overflows to `+inf`, which keeps
/// the function monotone for bracketing.
pub fn service_level_lhs(m: usize, b: u32, rho: f64) -> Result<f64> {
    if m < 1 || m > MAX_SERVERS {
        return Err(Error::Domain(format!(
            "server count must be in 1..={MAX_SERVERS}, got {m}"
        )));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    let ln_rho = rho.ln();
    let ln_head = ln_factorial(m) + b as f64 * (m as f64).ln();
    let mut total = 0.0;
    for k in 0..m {
        let exponent = (m + b as usize + 1 - k) as f64;
        let ln_term = ((m - k) as f64).ln() + ln_head - ln_factorial(k) - exponent * ln_rho;
        total += ln_term.exp();
    }
    Ok(total)
}

/// Aggregate utilization `rho_alpha` at which `L(m, b, rho)` equals
/// `1 / (1 - alpha)`, found by bisection.
pub fn rho_alpha(m: usize, b: u32, alpha: f64, tol: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let target = 1.0 / (1.0 - alpha);
    let mut lo = 1e-9;
    let mut hi = m as f64;
    let cap = 2f64.powi(40) * m as f64;
    while service_level_lhs(m, b, hi)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            return Err(Error::Convergence(format!(
                "no bracket for m={m}, b={b}, alpha={alpha}"
            )));
        }
    }
    if service_level_lhs(m, b, lo)? < target {
        return Err(Error::Convergence(format!(
            "lower bracket end already below target for m={m}, b={b}, alpha={alpha}"
        )));
    }
    let mut best = (f64::INFINITY, 0.5 * (lo + hi));
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let value = service_level_lhs(m, b, mid)?;
        let err = (value - target).abs();
        if err < best.0 {
            best = (err, mid);
        }
        if err <= tol * target {
            return Ok(mid);
        }
        if value > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    // Interval collapsed to adjacent floats; the best midpoint is as close as
    // double precision allows.
    Ok(best.1)
}

/// Thresholds `rho_{alpha,k}` for `k = 1..=max_posts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoTable {
    alpha: f64,
    b: u32,
    values: Vec<f64>,
}

impl RhoTable {
    pub fn new(max_posts: usize, b: u32, alpha: f64) -> Result<Self> {
        if max_posts < 1 {
            return Err(Error::Domain("rho table needs at least one post".into()));
        }
        let values = (1..=max_posts)
            .map(|k| rho_alpha(k, b, alpha, DEFAULT_RHO_TOL))
            .collect::<Result<Vec<_>>>()?;
        if let Some(w) = values.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Convergence(format!(
                "rho table not increasing at k={}",
                w + 2
            )));
        }
        Ok(Self { alpha, b, values })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn max_posts(&self) -> usize {
        self.values.len()
    }

    /// Threshold for `k` posts; zero posts admit no traffic.
    pub fn rho(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueMeasures {
    /// Expected wait in queue, hours.
    pub wq: f64,
    /// Expected number waiting.
    pub lq: f64,
    pub p0: f64,
    /// Probability that at most `b` vehicles are waiting.
    pub p_le_b: f64,
    pub stable: bool,
}

impl QueueMeasures {
    pub fn wq_minutes(&self) -> f64 {
        self.wq * 60.0
    }
}

/// Steady-state M/M/s measures. Unstable systems (`lambda >= s * mu`) come
/// back with `stable == false` and infinite queue measures.
pub fn mms_measures(lambda: f64, mu: f64, s: usize, b: u32) -> Result<QueueMeasures> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("service rate must be positive, got {mu}")));
    }
    if s < 1 {
        return Err(Error::Domain("at least one server is required".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("arrival rate must be nonnegative, got {lambda}")));
    }
    let a = lambda / mu;
    let r = a / s as f64;
    if r >= 1.0 {
        return Ok(QueueMeasures {
            wq: f64::INFINITY,
            lq: f64::INFINITY,
            p0: 0.0,
            p_le_b: 0.0,
            stable: false,
        });
    }
    // Unnormalized P_n / P_0 for n = 0..=s.
    let mut terms = Vec::with_capacity(s + 1);
    terms.push(1.0);
    for n in 1..=s {
        let prev = terms[n - 1];
        terms.push(prev * a / n as f64);
    }
    let head: f64 = terms[..s].iter().sum();
    let tail = terms[s] / (1.0 - r);
    let p0 = 1.0 / (head + tail);
    let lq = p0 * terms[s] * r / ((1.0 - r) * (1.0 - r));
    let wq = if lambda > 0.0 { lq / lambda } else { 0.0 };
    // P(N <= s + b) = P0 * (head + terms[s] * sum_{j=0}^{b} r^j)
    let geometric = if r == 0.0 {
        1.0
    } else {
        (1.0 - r.powi(b as i32 + 1)) / (1.0 - r)
    };
    let p_le_b = (p0 * (head + terms[s] * geometric)).clamp(0.0, 1.0);
    Ok(QueueMeasures {
        wq,
        lq,
        p0,
        p_le_b,
        stable: true,
    })
}
