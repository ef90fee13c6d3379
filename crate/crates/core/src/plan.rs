//! Batch grid and split-factor planner.
//!
//! Given the horizon, the batch budget and the smoothness/margin exponents,
//! the planner produces the grid `0 = t_0 < ... < t_M = T`, the per-layer
//! split factors `g_0, ..., g_{M-1}` and the bin widths `w_i`. The base `b`
//! is the largest value (found by bisection) for which the geometric
//! recursion `t_M = b t_{M-1}^gamma` does not overshoot `T`; the plan is
//! rejected if some intermediate batch is then empty. The last batch absorbs
//! the remainder.

use std::fmt;

use thiserror::Error;

/// Distance below which a computed root snaps to the nearest integer.
pub const ROUNDING_GUARD: f64 = 1e-9;

const BISECTION_STEPS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("alpha * beta = {0} exceeds 1; the problem reduces to a static two-armed bandit")]
    MarginTooLarge(f64),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("M = {batches} exceeds D1 * ln T = {limit:.3}")]
    TooManyBatches { batches: usize, limit: f64 },
    #[error("no base b gives a strictly increasing grid for T = {horizon}, M = {batches}")]
    Infeasible { horizon: u64, batches: usize },
    #[error("layer {index} out of range 0..{len}")]
    LayerOutOfRange { index: usize, len: usize },
}

/// `gamma = beta (1 + alpha) / (2 beta + d)`.
pub fn gamma(alpha: f64, beta: f64, dim: usize) -> f64 {
    beta * (1.0 + alpha) / (2.0 * beta + dim as f64)
}

/// Regret exponent `(1 - gamma) / (1 - gamma^M)` of an `M`-batch policy.
pub fn rate_exponent(alpha: f64, beta: f64, dim: usize, batches: usize) -> f64 {
    let g = gamma(alpha, beta, dim);
    (1.0 - g) / (1.0 - g.powi(batches as i32))
}

/// Floor that snaps values within [`ROUNDING_GUARD`] of an integer to it.
pub fn guarded_floor(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= ROUNDING_GUARD {
        r.max(0.0) as u64
    } else {
        x.floor().max(0.0) as u64
    }
}

/// Elimination threshold `c_thresh * 4 sqrt(ln(2 T w^d) / tau)`.
pub fn threshold_u(tau: u64, horizon: u64, width: f64, dim: usize, c_thresh: f64) -> Result<f64, PlanError> {
    if tau == 0 {
        return Err(PlanError::InvalidParameter {
            name: "tau",
            reason: "threshold needs at least one pull".into(),
        });
    }
    let arg = 2.0 * horizon as f64 * width.powi(dim as i32);
    if arg <= 1.0 {
        return Err(PlanError::InvalidParameter {
            name: "width",
            reason: format!("2 T w^d = {arg} must exceed 1"),
        });
    }
    Ok(c_thresh * 4.0 * (arg.ln() / tau as f64).sqrt())
}

/// Inputs of the planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanParams {
    pub horizon: u64,
    pub batches: usize,
    pub alpha: f64,
    pub beta: f64,
    pub dim: usize,
    pub lipschitz: f64,
    /// Multiplier on batch lengths.
    pub c_batch: f64,
    /// Multiplier on the elimination threshold.
    pub c_thresh: f64,
    /// Batch budget guard: `M <= d1 ln T`.
    pub d1: f64,
}

impl PlanParams {
    pub fn new(horizon: u64, batches: usize, alpha: f64, beta: f64, dim: usize) -> PlanParams {
        PlanParams {
            horizon,
            batches,
            alpha,
            beta,
            dim,
            lipschitz: 1.0,
            c_batch: 1.0,
            c_thresh: 1.0,
            d1: 10.0,
        }
    }

    pub fn lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = l;
        self
    }

    pub fn c_batch(mut self, c: f64) -> Self {
        self.c_batch = c;
        self
    }

    pub fn c_thresh(mut self, c: f64) -> Self {
        self.c_thresh = c;
        self
    }

    pub fn gamma(&self) -> f64 {
        gamma(self.alpha, self.beta, self.dim)
    }

    /// `c0 = 2 L d^(beta/2) + 1`.
    pub fn c0(&self) -> f64 {
        2.0 * self.lipschitz * (self.dim as f64).powf(self.beta / 2.0) + 1.0
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PlanError::InvalidParameter {
                    name,
                    reason: format!("{v} must be positive and finite"),
                })
            }
        };
        positive("alpha", self.alpha)?;
        positive("L", self.lipschitz)?;
        positive("c_batch", self.c_batch)?;
        positive("c_thresh", self.c_thresh)?;
        positive("d1", self.d1)?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(PlanError::InvalidParameter {
                name: "beta",
                reason: format!("{} must lie in (0, 1]", self.beta),
            });
        }
        if self.alpha * self.beta > 1.0 {
            return Err(PlanError::MarginTooLarge(self.alpha * self.beta));
        }
        if self.dim == 0 {
            return Err(PlanError::InvalidParameter {
                name: "d",
                reason: "dimension must be at least 1".into(),
            });
        }
        if self.batches == 0 {
            return Err(PlanError::InvalidParameter {
                name: "M",
                reason: "need at least one batch".into(),
            });
        }
        if self.horizon < self.batches as u64 {
            return Err(PlanError::InvalidParameter {
                name: "T",
                reason: format!("horizon {} is shorter than M = {}", self.horizon, self.batches),
            });
        }
        let limit = self.d1 * (self.horizon as f64).ln();
        if self.batches > 1 && self.batches as f64 > limit {
            return Err(PlanError::TooManyBatches {
                batches: self.batches,
                limit,
            });
        }
        Ok(())
    }
}

/// A resolved batch plan.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub params: PlanParams,
    pub gamma: f64,
    pub b: f64,
    /// `g_0, ..., g_{M-1}`.
    pub split_factors: Vec<u64>,
    /// `w_0, ..., w_{M-1}`.
    pub widths: Vec<f64>,
    /// `t_0, ..., t_M`.
    pub grid: Vec<u64>,
    /// `l_1, ..., l_{M-1}`.
    pub l_consts: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
}

struct Candidate {
    split_factors: Vec<u64>,
    widths: Vec<f64>,
    grid: Vec<u64>,
}

fn split_factors_for(b: f64, params: &PlanParams) -> Vec<u64> {
    let m = params.batches;
    let g = params.gamma();
    let mut out = Vec::with_capacity(m);
    if m == 1 {
        out.push(1);
        return out;
    }
    out.push(guarded_floor(b.powf(1.0 / (2.0 * params.beta + params.dim as f64))).max(1));
    for _ in 1..m - 1 {
        let prev = *out.last().unwrap() as f64;
        out.push(guarded_floor(prev.powf(g)).max(1));
    }
    out.push(1);
    out
}

/// `w_i = (prod_{l<i} g_l)^(-1)` for `i = 0..g.len()`.
pub fn widths_for(split_factors: &[u64]) -> Vec<f64> {
    let mut widths = Vec::with_capacity(split_factors.len());
    let mut prod = 1.0;
    for &g in split_factors {
        widths.push(1.0 / prod);
        prod *= g as f64;
    }
    widths
}

enum Reject {
    /// The grid overshoots the horizon; `b` must shrink.
    TooLarge,
    /// Some intermediate batch is empty.
    Empty,
}

fn candidate(b: f64, params: &PlanParams, l: f64) -> Result<Candidate, Reject> {
    let split_factors = split_factors_for(b, params);
    let widths = widths_for(&split_factors);
    let t = params.horizon as f64;
    let p = 2.0 * params.beta + params.dim as f64;
    let mut grid = vec![0u64];
    let mut last = 0u64;
    let mut empty = false;
    for &w in &widths[1..] {
        let log_arg = t * w.powi(params.dim as i32);
        if log_arg <= 1.0 {
            return Err(Reject::TooLarge);
        }
        let len = guarded_floor(params.c_batch * l * w.powf(-p) * log_arg.ln());
        empty |= len == 0;
        last = last.checked_add(len).ok_or(Reject::TooLarge)?;
        if last >= params.horizon {
            return Err(Reject::TooLarge);
        }
        grid.push(last);
    }
    if params.batches > 1 && b * (last as f64).powf(params.gamma()) > t {
        return Err(Reject::TooLarge);
    }
    if empty {
        return Err(Reject::Empty);
    }
    grid.push(params.horizon);
    Ok(Candidate {
        split_factors,
        widths,
        grid,
    })
}

/// Resolves the plan for `params`.
pub fn solve_plan(params: &PlanParams) -> Result<BatchPlan, PlanError> {
    params.validate()?;
    let c0 = params.c0();
    let l = 2.0 / (c0 * c0);
    let m = params.batches;
    let build = |b: f64, c: Candidate| BatchPlan {
        params: *params,
        gamma: params.gamma(),
        b,
        split_factors: c.split_factors,
        widths: c.widths,
        grid: c.grid,
        l_consts: vec![l; m - 1],
        c0,
        c1: 8.0 * c0,
    };
    let t = params.horizon as f64;
    if m == 1 {
        let c = candidate(t, params, l).unwrap_or_else(|_| unreachable!("single batch is always feasible"));
        return Ok(build(t, c));
    }
    let infeasible = PlanError::Infeasible {
        horizon: params.horizon,
        batches: m,
    };
    let too_large = |b: f64| matches!(candidate(b, params, l), Err(Reject::TooLarge));
    if too_large(1.0) {
        return Err(infeasible);
    }
    let b = if too_large(t) {
        let (mut lo, mut hi) = (1.0_f64, t);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if too_large(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    } else {
        t
    };
    let c = candidate(b, params, l).map_err(|_| infeasible)?;
    Ok(build(b, c))
}

impl BatchPlan {
    /// A plan on the given grid with explicit split factors (`g_{M-1}` must be 1).
    pub fn with_split_factors(
        params: PlanParams,
        grid: Vec<u64>,
        split_factors: Vec<u64>,
    ) -> Result<BatchPlan, PlanError> {
        params.validate()?;
        let m = params.batches;
        if grid.len() != m + 1
            || grid[0] != 0
            || *grid.last().unwrap() != params.horizon
            || grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(PlanError::InvalidParameter {
                name: "grid",
                reason: format!("need 0 = t_0 < ... < t_{m} = {}", params.horizon),
            });
        }
        if split_factors.len() != m || split_factors.contains(&0) || split_factors[m - 1] != 1 {
            return Err(PlanError::InvalidParameter {
                name: "split_factors",
                reason: format!("need {m} factors >= 1 ending in 1"),
            });
        }
        let c0 = params.c0();
        Ok(BatchPlan {
            params,
            gamma: params.gamma(),
            b: f64::NAN,
            widths: widths_for(&split_factors),
            split_factors,
            grid,
            l_consts: vec![2.0 / (c0 * c0); m - 1],
            c0,
            c1: 8.0 * c0,
        })
    }

    /// Static binning on this plan's grid: split factors `(g, 1, ..., 1)`.
    pub fn static_binning(&self, g: u64) -> Result<BatchPlan, PlanError> {
        let mut splits = vec![1; self.batches()];
        splits[0] = g;
        if self.batches() == 1 && g != 1 {
            return Err(PlanError::InvalidParameter {
                name: "g",
                reason: "a single-batch plan cannot bin".into(),
            });
        }
        BatchPlan::with_split_factors(self.params, self.grid.clone(), splits)
    }

    pub fn horizon(&self) -> u64 {
        self.params.horizon
    }

    pub fn batches(&self) -> usize {
        self.params.batches
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn width_of_layer(&self, i: usize) -> Result<f64, PlanError> {
        self.widths.get(i).copied().ok_or(PlanError::LayerOutOfRange {
            index: i,
            len: self.widths.len(),
        })
    }

    /// `t_i - t_{i-1}` for `1 <= i <= M`.
    pub fn batch_len(&self, i: usize) -> u64 {
        self.grid[i] - self.grid[i - 1]
    }

    /// Threshold `U(tau, T, C)` for a bin of width `width`.
    pub fn threshold(&self, tau: u64, width: f64) -> Result<f64, PlanError> {
        threshold_u(tau, self.horizon(), width, self.dim(), self.params.c_thresh)
    }

    /// Rows `(i, t_i, t_i - t_{i-1}, g_i, w_i)` for `i = 0..=M`; layer `M` has no split factor.
    pub fn table(&self) -> Vec<PlanRow> {
        (0..=self.batches())
            .map(|i| PlanRow {
                i,
                t: self.grid[i],
                dt: if i == 0 { 0 } else { self.batch_len(i) },
                g: self.split_factors.get(i).copied(),
                w: self.widths.get(i).copied(),
            })
            .collect()
    }

    /// Split factors joined by `-`, e.g. `10-4-1`.
    pub fn splits_label(&self) -> String {
        self.split_factors
            .iter()
            .map(|g| g.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRow {
    pub i: usize,
    pub t: u64,
    pub dt: u64,
    pub g: Option<u64>,
    pub w: Option<f64>,
}

impl fmt::Display for BatchPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "T={} M={} gamma={} b={} c0={} c1={}",
            self.horizon(),
            self.batches(),
            self.gamma,
            self.b,
            self.c0,
            self.c1
        )?;
        writeln!(f, "{:>3} {:>12} {:>12} {:>6} {:>14}", "i", "t_i", "dt_i", "g_i", "w_i")?;
        for row in self.table() {
            let g = row.g.map_or("-".to_string(), |g| g.to_string());
            let w = row.w.map_or("-".to_string(), |w| format!("{w:.6}"));
            writeln!(f, "{:>3} {:>12} {:>12} {:>6} {:>14}", row.i, row.t, row.dt, g, w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((gamma(1.0, 1.0, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((gamma(0.2, 1.0, 1) - 0.4).abs() < 1e-15);
        assert!((rate_exponent(1.0, 1.0, 1, 3) - 9.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn cube_root_guard() {
        assert_eq!(guarded_floor(1000f64.powf(1.0 / 3.0)), 10);
        assert_eq!(guarded_floor(4.6416), 4);
        let params = PlanParams::new(1_000_000, 3, 1.0, 1.0, 1);
        assert_eq!(split_factors_for(1000.0, &params), vec![10, 4, 1]);
    }

    #[test]
    fn single_batch_plan() {
        let plan = solve_plan(&PlanParams::new(500, 1, 1.0, 1.0, 1)).unwrap();
        assert_eq!(plan.grid, vec![0, 500]);
        assert_eq!(plan.split_factors, vec![1]);
        assert_eq!(plan.widths, vec![1.0]);
    }

    #[test]
    fn widths_follow_products() {
        assert_eq!(widths_for(&[4, 3, 1]), vec![1.0, 0.25, 1.0 / 12.0]);
        let w = widths_for(&[10, 4, 1]);
        assert!((w[2] - 1.0 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn width_of_layer_range() {
        let plan = solve_plan(&PlanParams::new(100_000, 3, 1.0, 1.0, 1)).unwrap();
        assert_eq!(plan.width_of_layer(0).unwrap(), 1.0);
        assert!(plan.width_of_layer(3).is_err());
    }

    #[test]
    fn constants() {
        let plan = solve_plan(&PlanParams::new(100_000, 3, 1.0, 1.0, 1).lipschitz(2.0)).unwrap();
        assert_eq!(plan.c0, 5.0);
        assert_eq!(plan.c1, 40.0);
        assert!((plan.l_consts[0] - 2.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_example() {
        let u = threshold_u(100, 1000, 0.5, 1, 1.0).unwrap();
        assert!((u - 1.0513).abs() < 1e-4, "{u}");
        let u4 = threshold_u(400, 1000, 0.5, 1, 1.0).unwrap();
        assert!((u4 - u / 2.0).abs() < 1e-12);
        assert!((threshold_u(100, 1000, 0.5, 1, 0.5).unwrap() - u / 2.0).abs() < 1e-12);
        assert!(threshold_u(0, 1000, 0.5, 1, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(
            solve_plan(&PlanParams::new(1000, 3, 2.0, 1.0, 1)),
            Err(PlanError::MarginTooLarge(_))
        ));
        assert!(matches!(
            solve_plan(&PlanParams::new(10, 5, 1.0, 1.0, 1)),
            Err(PlanError::Infeasible { .. })
        ));
        let mut p = PlanParams::new(100, 50, 1.0, 1.0, 1);
        p.d1 = 1.0;
        assert!(matches!(solve_plan(&p), Err(PlanError::TooManyBatches { .. })));
    }

    #[test]
    fn first_batch_exponent_at_large_horizon() {
        let plan = solve_plan(&PlanParams::new(10_000_000, 3, 1.0, 1.0, 1)).unwrap();
        let e = (plan.grid[1] as f64).ln() / 1e7f64.ln();
        assert!(
            (9.0 / 19.0 - 0.05..=9.0 / 19.0 + 0.08).contains(&e),
            "exponent {e}, plan {plan}"
        );
    }

    #[test]
    fn static_binning_keeps_grid() {
        let plan = solve_plan(&PlanParams::new(100_000, 3, 1.0, 1.0, 1)).unwrap();
        let s = plan.static_binning(7).unwrap();
        assert_eq!(s.grid, plan.grid);
        assert_eq!(s.split_factors, vec![7, 1, 1]);
        assert_eq!(s.widths, vec![1.0, 1.0 / 7.0, 1.0 / 7.0]);
    }
}
