//! Two-armed nonparametric bandit instances on `[0,1]^d`.
//!
//! An instance is a pair of mean-reward functions, one per arm, a covariate
//! law with a bounded density, and Bernoulli reward noise. Instances are
//! immutable once built and are shared read-only between concurrent episodes;
//! every random draw goes through a caller-owned stream.

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use thiserror::Error;

/// Absolute slack used when checking smoothness numerically.
pub const SMOOTHNESS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} = {value} lies outside [0, 1]")]
    OutOfCube { index: usize, value: f64 },
    #[error("alpha * beta = {0} exceeds 1; the problem reduces to a static two-armed bandit")]
    MarginTooLarge(f64),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("sign vector has length {got}, expected {expected}")]
    SignLength { expected: usize, got: usize },
    #[error("mean reward may leave [0, 1] (range [{low}, {high}])")]
    RewardRange { low: f64, high: f64 },
    #[error("covariate density must be positive and finite in every cell")]
    BadDensity,
    #[error("bump supports overlap: {0}")]
    OverlappingBumps(String),
}

/// One of the two arms, labelled `+1` and `-1`.
///
/// The derived ordering follows the labels, so `Arm::Minus < Arm::Plus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Minus,
    Plus,
}

impl Arm {
    pub const ALL: [Arm; 2] = [Arm::Plus, Arm::Minus];

    pub fn value(self) -> i8 {
        match self {
            Arm::Plus => 1,
            Arm::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Arm> {
        match v {
            1 => Some(Arm::Plus),
            -1 => Some(Arm::Minus),
            _ => None,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Plus => Arm::Minus,
            Arm::Minus => Arm::Plus,
        }
    }

    /// Slot in per-arm arrays: `+1` is slot 0, `-1` is slot 1.
    pub fn slot(self) -> usize {
        match self {
            Arm::Plus => 0,
            Arm::Minus => 1,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

/// A nonempty-or-empty subset of the two arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArmSet(u8);

impl ArmSet {
    pub const BOTH: ArmSet = ArmSet(0b11);

    pub fn single(arm: Arm) -> ArmSet {
        ArmSet(1 << arm.slot())
    }

    pub fn contains(self, arm: Arm) -> bool {
        self.0 & (1 << arm.slot()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn without(self, arm: Arm) -> ArmSet {
        ArmSet(self.0 & !(1 << arm.slot()))
    }

    /// Arms in the set, `+1` first.
    pub fn iter(self) -> impl Iterator<Item = Arm> {
        Arm::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// Arm with the smallest label (`-1` before `+1`).
    pub fn smallest(self) -> Option<Arm> {
        if self.contains(Arm::Minus) {
            Some(Arm::Minus)
        } else if self.contains(Arm::Plus) {
            Some(Arm::Plus)
        } else {
            None
        }
    }
}

impl fmt::Display for ArmSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.iter().map(|a| a.to_string()).collect();
        write!(f, "{{{}}}", labels.join(" "))
    }
}

/// A context in `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Point, InstanceError> {
        if coords.is_empty() {
            return Err(InstanceError::ZeroDimension);
        }
        for (index, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(InstanceError::OutOfCube { index, value });
            }
        }
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Point {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Bump profile `(1 - ||u||_inf)^beta` on the unit ball of the sup norm, zero outside.
pub fn bump_profile(u: &[f64], beta: f64) -> f64 {
    let r = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if r <= 1.0 {
        (1.0 - r).powf(beta)
    } else {
        0.0
    }
}

/// Row-major flat index of a lattice cell (first axis most significant).
pub fn row_major(cell: &[u64], per_axis: u64) -> u64 {
    cell.iter().fold(0, |acc, &c| acc * per_axis + c)
}

/// Signed bumps on a regular lattice over an axis-aligned cube.
///
/// The cube `[origin, origin + extent]` is cut into `cells^d` cells. Cell `j`
/// in row-major order carries `signs[j] * amplitude * profile(2 * cells * (x - q_j) / extent)`
/// for `j < signs.len()`, where `q_j` is the cell centre; later cells are flat.
/// Each bump vanishes on the boundary of its own cell, so supports are disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpGrid {
    pub origin: Vec<f64>,
    pub extent: f64,
    pub cells: u64,
    pub amplitude: f64,
    pub beta: f64,
    pub signs: Vec<i8>,
}

impl BumpGrid {
    fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.origin)
            .all(|(&xi, &o)| xi >= o && xi <= o + self.extent)
    }

    fn cell_of(&self, x: &[f64], cell: &mut [u64]) {
        let n = self.cells as f64;
        for ((c, &xi), &o) in cell.iter_mut().zip(x).zip(&self.origin) {
            let u = ((xi - o) / self.extent * n).floor();
            *c = (u.max(0.0) as u64).min(self.cells - 1);
        }
    }

    /// Signed bump value at `x` (zero off the bump cells).
    pub fn value(&self, x: &[f64]) -> f64 {
        if self.signs.is_empty() || !self.contains(x) {
            return 0.0;
        }
        let d = x.len();
        let mut cell = [0u64; 8];
        let mut heap;
        let cell: &mut [u64] = if d <= 8 {
            &mut cell[..d]
        } else {
            heap = vec![0u64; d];
            &mut heap
        };
        self.cell_of(x, cell);
        let idx = row_major(cell, self.cells) as usize;
        let Some(&sign) = self.signs.get(idx) else {
            return 0.0;
        };
        if sign == 0 {
            return 0.0;
        }
        let n = self.cells as f64;
        let r = x
            .iter()
            .zip(&self.origin)
            .zip(cell.iter())
            .fold(0.0_f64, |m, ((&xi, &o), &c)| {
                let local = (xi - o) / self.extent * n;
                m.max((2.0 * (local - (c as f64 + 0.5))).abs())
            });
        if r <= 1.0 {
            f64::from(sign) * self.amplitude * (1.0 - r).powf(self.beta)
        } else {
            0.0
        }
    }
}

/// `base + sum of bump fields`; fields must have disjoint supports.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFunction {
    pub base: f64,
    pub fields: Vec<BumpGrid>,
}

impl MeanFunction {
    pub fn constant(base: f64) -> MeanFunction {
        MeanFunction {
            base,
            fields: Vec::new(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.base + self.fields.iter().map(|f| f.value(x)).sum::<f64>()
    }

    /// Bounds on the range, valid because field supports are disjoint.
    fn range(&self) -> (f64, f64) {
        let up = self
            .fields
            .iter()
            .filter(|f| f.signs.iter().any(|&s| s > 0))
            .fold(0.0_f64, |m, f| m.max(f.amplitude));
        let down = self
            .fields
            .iter()
            .filter(|f| f.signs.iter().any(|&s| s < 0))
            .fold(0.0_f64, |m, f| m.max(f.amplitude));
        (self.base - down, self.base + up)
    }
}

/// Law of the contexts. Only bounded densities are supported.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateLaw {
    Uniform,
    /// Density constant on each cell of a regular `cells^d` lattice.
    PiecewiseConstant {
        cells: u64,
        /// Row-major cell probabilities; sums to one.
        masses: Vec<f64>,
        cumulative: Vec<f64>,
    },
}

impl CovariateLaw {
    /// Builds a piecewise-constant law from positive per-cell weights.
    pub fn piecewise(dim: usize, cells: u64, weights: Vec<f64>) -> Result<CovariateLaw, InstanceError> {
        let expected = (cells as usize).pow(dim as u32);
        if cells == 0 || weights.len() != expected {
            return Err(InstanceError::InvalidParameter {
                name: "weights",
                reason: format!("need {expected} cell weights, got {}", weights.len()),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(InstanceError::BadDensity);
        }
        let total: f64 = weights.iter().sum();
        let masses: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        Ok(CovariateLaw::PiecewiseConstant {
            cells,
            masses,
            cumulative,
        })
    }

    /// Lower and upper density bounds.
    pub fn density_bounds(&self, dim: usize) -> (f64, f64) {
        match self {
            CovariateLaw::Uniform => (1.0, 1.0),
            CovariateLaw::PiecewiseConstant { cells, masses, .. } => {
                let vol = (*cells as f64).powi(dim as i32);
                masses.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), m| {
                    (lo.min(m * vol), hi.max(m * vol))
                })
            }
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            CovariateLaw::Uniform => {
                for c in out.iter_mut() {
                    *c = rng.random::<f64>();
                }
            }
            CovariateLaw::PiecewiseConstant { cells, cumulative, .. } => {
                let u: f64 = rng.random();
                let mut idx = cumulative.partition_point(|&c| c <= u);
                idx = idx.min(cumulative.len() - 1);
                let n = *cells as usize;
                let w = 1.0 / *cells as f64;
                for c in out.iter_mut().rev() {
                    let v = idx % n;
                    idx /= n;
                    *c = (v as f64 + rng.random::<f64>()) * w;
                }
            }
        }
    }

    /// Probability of the box `[lo, lo + width]^d` (per-axis lower corner `lo`).
    pub fn box_mass(&self, lo: &[f64], width: f64) -> f64 {
        match self {
            CovariateLaw::Uniform => width.powi(lo.len() as i32),
            CovariateLaw::PiecewiseConstant { cells, masses, .. } => {
                let n = *cells as usize;
                let cw = 1.0 / *cells as f64;
                let d = lo.len();
                let mut total = 0.0;
                for (idx, m) in masses.iter().enumerate() {
                    let mut rem = idx;
                    let mut frac = 1.0;
                    for axis in (0..d).rev() {
                        let v = rem % n;
                        rem /= n;
                        let a = v as f64 * cw;
                        let overlap = ((a + cw).min(lo[axis] + width) - a.max(lo[axis])).max(0.0);
                        frac *= overlap / cw;
                    }
                    total += m * frac;
                }
                total
            }
        }
    }
}

/// Known margin envelope: `P(0 < gap <= delta) <= d0 * delta^alpha` for `delta <= delta0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginEnvelope {
    pub delta0: f64,
    pub d0: f64,
}

/// Smoothness and margin parameters an instance claims to satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredParams {
    pub alpha: f64,
    pub beta: f64,
    pub lipschitz: f64,
    pub margin: Option<MarginEnvelope>,
}

/// A simulated two-armed environment with Bernoulli rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    name: String,
    dim: usize,
    plus: MeanFunction,
    minus: MeanFunction,
    law: CovariateLaw,
    declared: DeclaredParams,
}

impl BanditInstance {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        plus: MeanFunction,
        minus: MeanFunction,
        law: CovariateLaw,
        declared: DeclaredParams,
    ) -> Result<BanditInstance, InstanceError> {
        if dim == 0 {
            return Err(InstanceError::ZeroDimension);
        }
        for f in [&plus, &minus] {
            let (low, high) = f.range();
            if low < 0.0 || high > 1.0 {
                return Err(InstanceError::RewardRange { low, high });
            }
            if f.fields.iter().any(|g| g.origin.len() != dim) {
                return Err(InstanceError::DimensionMismatch {
                    expected: dim,
                    got: f.fields[0].origin.len(),
                });
            }
        }
        if let CovariateLaw::PiecewiseConstant { cells, masses, .. } = &law {
            if masses.len() != (*cells as usize).pow(dim as u32) {
                return Err(InstanceError::BadDensity);
            }
        }
        Ok(BanditInstance {
            name: name.into(),
            dim,
            plus,
            minus,
            law,
            declared,
        })
    }

    /// Both arms have constant means.
    pub fn constant(
        plus: f64,
        minus: f64,
        dim: usize,
        declared: DeclaredParams,
    ) -> Result<BanditInstance, InstanceError> {
        BanditInstance::new(
            "constant",
            dim,
            MeanFunction::constant(plus),
            MeanFunction::constant(minus),
            CovariateLaw::Uniform,
            declared,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn law(&self) -> &CovariateLaw {
        &self.law
    }

    pub fn declared(&self) -> DeclaredParams {
        self.declared
    }

    pub fn with_declared(mut self, declared: DeclaredParams) -> BanditInstance {
        self.declared = declared;
        self
    }

    pub fn mean_function(&self, arm: Arm) -> &MeanFunction {
        match arm {
            Arm::Plus => &self.plus,
            Arm::Minus => &self.minus,
        }
    }

    pub fn mean(&self, arm: Arm, x: &[f64]) -> f64 {
        self.mean_function(arm).eval(x)
    }

    /// `max_k f^(k)(x)`.
    pub fn best_mean(&self, x: &[f64]) -> f64 {
        self.mean(Arm::Plus, x).max(self.mean(Arm::Minus, x))
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut p = Point::zeros(self.dim);
        self.law.sample_into(rng, &mut p.0);
        p
    }

    /// Fills `out` with a fresh context; avoids allocating in hot loops.
    pub fn sample_context_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        self.law.sample_into(rng, out)
    }

    /// Bernoulli draw with success probability `f^(arm)(x)`.
    pub fn draw_reward<R: Rng + ?Sized>(&self, arm: Arm, x: &[f64], rng: &mut R) -> f64 {
        let p = self.mean(arm, x);
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }

    /// Optimal arm and `|f^(+1)(x) - f^(-1)(x)|`. Ties go to `+1`.
    pub fn optimal_arm_and_gap(&self, x: &[f64]) -> (Arm, f64) {
        let p = self.mean(Arm::Plus, x);
        let m = self.mean(Arm::Minus, x);
        let arm = if p >= m { Arm::Plus } else { Arm::Minus };
        (arm, (p - m).abs())
    }

    /// Monte Carlo check of Hölder smoothness with the declared `(beta, L)`.
    ///
    /// Half of the pairs are independent uniform points, the other half are
    /// local pairs at log-uniform distances in `[1e-6, 0.1]`, which is where
    /// slope violations show up.
    pub fn verify_smoothness<R: Rng + ?Sized>(&self, n_pairs: usize, rng: &mut R) -> SmoothnessReport {
        let DeclaredParams { beta, lipschitz, .. } = self.declared;
        let d = self.dim;
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut max_violation = f64::NEG_INFINITY;
        for k in 0..n_pairs.max(1) {
            self.law.sample_into(rng, &mut x);
            if k % 2 == 0 {
                self.law.sample_into(rng, &mut y);
            } else {
                let r = 10f64.powf(-6.0 + 5.0 * rng.random::<f64>());
                for (yi, xi) in y.iter_mut().zip(&x) {
                    *yi = (xi + r * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0);
                }
            }
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let bound = lipschitz * dist.powf(beta);
            for arm in Arm::ALL {
                let diff = (self.mean(arm, &x) - self.mean(arm, &y)).abs();
                max_violation = max_violation.max(diff - bound);
            }
        }
        SmoothnessReport {
            max_violation,
            holds: max_violation <= SMOOTHNESS_TOLERANCE,
            pairs: n_pairs.max(1),
        }
    }

    /// Monte Carlo estimate of `P(0 < |f^(+1)(X) - f^(-1)(X)| <= delta)` over a grid.
    ///
    /// `fitted_d0` is the smallest constant with `p(delta) <= d0 * delta^alpha`
    /// on the grid. When the instance declares an envelope, the check holds if
    /// every estimate with `delta <= delta0` sits below the envelope plus three
    /// standard errors; without one the report is informational and holds
    /// whenever the fit is finite.
    pub fn verify_margin<R: Rng + ?Sized>(
        &self,
        deltas: &[f64],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<MarginReport, InstanceError> {
        if n_samples == 0 {
            return Err(InstanceError::InvalidParameter {
                name: "n_samples",
                reason: "must be positive".into(),
            });
        }
        if let Some(bad) = deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(InstanceError::InvalidParameter {
                name: "delta",
                reason: format!("{bad} is not a positive margin"),
            });
        }
        let alpha = self.declared.alpha;
        let mut counts = vec![0usize; deltas.len()];
        let mut x = vec![0.0; self.dim];
        for _ in 0..n_samples {
            self.law.sample_into(rng, &mut x);
            let gap = self.optimal_arm_and_gap(&x).1;
            if gap > 0.0 {
                for (c, &delta) in counts.iter_mut().zip(deltas) {
                    if gap <= delta {
                        *c += 1;
                    }
                }
            }
        }
        let n = n_samples as f64;
        let per_delta: Vec<MarginEstimate> = deltas
            .iter()
            .zip(&counts)
            .map(|(&delta, &c)| {
                let prob = c as f64 / n;
                MarginEstimate {
                    delta,
                    prob,
                    std_err: (prob * (1.0 - prob) / n).sqrt(),
                }
            })
            .collect();
        let fitted_d0 = per_delta
            .iter()
            .map(|e| e.prob / e.delta.powf(alpha))
            .fold(0.0_f64, f64::max);
        let holds = match self.declared.margin {
            Some(env) => per_delta
                .iter()
                .filter(|e| e.delta <= env.delta0)
                .all(|e| e.prob <= env.d0 * e.delta.powf(alpha) * (1.0 + MARGIN_REL_TOL) + 3.0 * e.std_err),
            None => fitted_d0.is_finite(),
        };
        Ok(MarginReport {
            per_delta,
            fitted_d0,
            envelope: self.declared.margin,
            holds,
        })
    }
}

/// Relative slack on the margin envelope for rounding in `d0 * delta^alpha`.
const MARGIN_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessReport {
    pub max_violation: f64,
    pub holds: bool,
    pub pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginEstimate {
    pub delta: f64,
    pub prob: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub per_delta: Vec<MarginEstimate>,
    pub fitted_d0: f64,
    pub envelope: Option<MarginEnvelope>,
    pub holds: bool,
}
