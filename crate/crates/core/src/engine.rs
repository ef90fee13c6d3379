//! Seeded episodes, clean-event monitoring and Monte Carlo replication.
//!
//! An episode draws contexts and rewards from two independent ChaCha streams
//! derived from one seed, so a policy change never shifts the context
//! sequence. Regret is pseudo-regret computed with the true means.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{Arm, BanditInstance};
use crate::plan::BatchPlan;
use crate::policy::{BatchSummary, LeafRecord, ObservationBuffer, Policy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("policy {policy} was planned for T = {planned}, episode asks for T = {requested}")]
    HorizonMismatch {
        policy: String,
        planned: u64,
        requested: u64,
    },
    #[error("slope fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("slope fit needs positive values, got {0}")]
    NonPositive(f64),
    #[error("slope fit needs distinct horizons")]
    RepeatedHorizon,
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),
}

/// Constants used by the clean-event monitor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanEventParams {
    pub c1: f64,
    pub beta: f64,
}

impl CleanEventParams {
    pub fn from_plan(plan: &BatchPlan) -> CleanEventParams {
        CleanEventParams {
            c1: plan.c1,
            beta: plan.params.beta,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeOptions {
    /// Rounds after which cumulative regret is recorded.
    pub checkpoints: Vec<u64>,
    pub monitor: Option<CleanEventParams>,
    /// Keep every batch summary (for tree dumps).
    pub keep_summaries: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub horizon: u64,
    pub regret: f64,
    /// `(t, cumulative regret after round t)` at each checkpoint.
    pub regret_curve: Vec<(u64, f64)>,
    /// Rounds that pulled a strictly suboptimal arm.
    pub inferior_count: u64,
    /// Pulls of `+1` and `-1` (slot order).
    pub pulls: [u64; 2],
    pub reward_sum: f64,
    /// Some bin's pull count left `[m*/2, 3m*/2]`.
    pub e_violation: bool,
    /// Some bin dropped an arm that beats the other by more than `c1 w^beta` somewhere in it.
    pub ac_violation: bool,
    /// Eliminations of an arm that is strictly optimal somewhere in its bin.
    pub wrong_eliminations: u64,
    pub summaries: Vec<BatchSummary>,
}

/// `n` log-spaced checkpoints in `[1, horizon]`, deduplicated, always ending at `horizon`.
pub fn log_checkpoints(horizon: u64, n: usize) -> Vec<u64> {
    if horizon == 0 || n == 0 {
        return Vec::new();
    }
    let top = (horizon as f64).ln();
    let mut out: Vec<u64> = (0..n)
        .map(|j| {
            let f = if n == 1 { 1.0 } else { j as f64 / (n - 1) as f64 };
            ((top * f).exp().round() as u64).clamp(1, horizon)
        })
        .collect();
    out.dedup();
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

/// Grid points used to scan a bin for the supremum of a gap.
fn scan_points(lower: &[f64], width: f64) -> impl Iterator<Item = Vec<f64>> + '_ {
    let d = lower.len();
    let per_axis: u64 = if d == 1 { 513 } else { 33 };
    let total = per_axis.pow(d as u32);
    (0..total).map(move |k| {
        let mut rem = k;
        let mut p = vec![0.0; d];
        for axis in (0..d).rev() {
            let j = rem % per_axis;
            rem /= per_axis;
            p[axis] = (lower[axis] + width * j as f64 / (per_axis - 1) as f64).min(1.0);
        }
        p
    })
}

/// `sup_{x in C} f^(arm)(x) - f^(-arm)(x)` over the scan grid.
fn max_advantage(instance: &BanditInstance, leaf: &LeafRecord, arm: Arm) -> f64 {
    let lower = leaf.lower_corner();
    scan_points(&lower, leaf.width())
        .map(|x| instance.mean(arm, &x) - instance.mean(arm.other(), &x))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Default, Clone, Copy)]
struct CleanFlags {
    e: bool,
    ac: bool,
    wrong: u64,
}

fn inspect(instance: &BanditInstance, summary: &BatchSummary, params: CleanEventParams, flags: &mut CleanFlags) {
    for leaf in &summary.leaves {
        let lower = leaf.lower_corner();
        let expected = summary.batch_len as f64 * instance.law().box_mass(&lower, leaf.width());
        let m = leaf.total_pulls() as f64;
        if m < 0.5 * expected || m > 1.5 * expected {
            flags.e = true;
        }
        if let Some(arm) = leaf.eliminated() {
            let adv = max_advantage(instance, leaf, arm);
            if adv > params.c1 * leaf.width().powf(params.beta) {
                flags.ac = true;
            }
            if adv > 0.0 {
                flags.wrong += 1;
            }
        }
    }
}

/// Runs one episode of `policy` on `instance` for `horizon` rounds.
pub fn run_episode<P: Policy + ?Sized>(
    instance: &BanditInstance,
    policy: &mut P,
    horizon: u64,
    seed: u64,
    options: &EpisodeOptions,
) -> Result<EpisodeResult, EngineError> {
    if policy.horizon() != horizon {
        return Err(EngineError::HorizonMismatch {
            policy: policy.name().to_string(),
            planned: policy.horizon(),
            requested: horizon,
        });
    }
    let mut context_rng = ChaCha8Rng::seed_from_u64(seed);
    context_rng.set_stream(0);
    let mut reward_rng = ChaCha8Rng::seed_from_u64(seed);
    reward_rng.set_stream(1);

    let dim = instance.dim();
    let mut x = vec![0.0; dim];
    let mut buffer = ObservationBuffer::new(dim);
    let mut regret = 0.0;
    let mut curve = Vec::with_capacity(options.checkpoints.len());
    let mut next_checkpoint = options.checkpoints.iter().peekable();
    let mut inferior = 0u64;
    let mut pulls = [0u64; 2];
    let mut reward_sum = 0.0;
    let mut flags = CleanFlags::default();
    let mut summaries = Vec::new();

    let mut t = 0u64;
    for end in policy.schedule().boundaries(horizon) {
        while t < end {
            instance.sample_context_into(&mut context_rng, &mut x);
            let arm = policy.select(&x);
            let plus = instance.mean(Arm::Plus, &x);
            let minus = instance.mean(Arm::Minus, &x);
            let (chosen, other) = match arm {
                Arm::Plus => (plus, minus),
                Arm::Minus => (minus, plus),
            };
            if other > chosen {
                regret += other - chosen;
                inferior += 1;
            }
            let reward = instance.draw_reward(arm, &x, &mut reward_rng);
            pulls[arm.slot()] += 1;
            reward_sum += reward;
            buffer.push(&x, arm, reward);
            t += 1;
            while next_checkpoint.peek().is_some_and(|&&c| c <= t) {
                curve.push((t, regret));
                next_checkpoint.next();
            }
        }
        if let Some(summary) = policy.end_batch(&buffer) {
            if let Some(params) = options.monitor {
                inspect(instance, &summary, params, &mut flags);
            }
            if options.keep_summaries {
                summaries.push(summary);
            }
        }
        buffer.clear();
    }
    Ok(EpisodeResult {
        seed,
        horizon,
        regret,
        regret_curve: curve,
        inferior_count: inferior,
        pulls,
        reward_sum,
        e_violation: flags.e,
        ac_violation: flags.ac,
        wrong_eliminations: flags.wrong,
        summaries,
    })
}

/// How replications are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    /// Uses the rayon pool when built with the `parallel` feature, serial otherwise.
    #[default]
    Parallel,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` in cell `cell_id`.
pub fn replication_seed(master_seed: u64, cell_id: &str, rep: usize) -> u64 {
    let a = splitmix64(master_seed ^ fnv1a(cell_id.as_bytes()));
    splitmix64(a ^ splitmix64(rep as u64))
}

/// Runs `job(rep, seed)` for every replication; results are in replication order.
pub fn replicate<T, F>(reps: usize, master_seed: u64, cell_id: &str, execution: Execution, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    let run = |rep: usize| job(rep, replication_seed(master_seed, cell_id, rep));
    match execution {
        Execution::Serial => (0..reps).map(run).collect(),
        Execution::Parallel => parallel_map(reps, run),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Aggregate statistics of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub reps: usize,
    pub mean_regret: f64,
    pub std_err: f64,
    pub mean_inferior: f64,
    pub e_rate: f64,
    pub ac_rate: f64,
    /// Fraction of replications with at least one wrong elimination.
    pub wrong_elimination_rate: f64,
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn summarize(results: &[EpisodeResult]) -> Result<CellStats, EngineError> {
    if results.len() < 2 {
        return Err(EngineError::TooFewReplications(results.len()));
    }
    let regrets: Vec<f64> = results.iter().map(|r| r.regret).collect();
    let (mean_regret, std_err) = mean_and_se(&regrets);
    let n = results.len() as f64;
    let rate = |f: &dyn Fn(&EpisodeResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(CellStats {
        reps: results.len(),
        mean_regret,
        std_err,
        mean_inferior: results.iter().map(|r| r.inferior_count as f64).sum::<f64>() / n,
        e_rate: rate(&|r| r.e_violation),
        ac_rate: rate(&|r| r.ac_violation),
        wrong_elimination_rate: rate(&|r| r.wrong_eliminations > 0),
    })
}

/// Least-squares fit of `ln(value)` on `ln(T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit, EngineError> {
    if points.len() < 3 {
        return Err(EngineError::TooFewPoints(points.len()));
    }
    if let Some(&(t, v)) = points.iter().find(|(t, v)| !(*t > 0.0 && *v > 0.0)) {
        return Err(EngineError::NonPositive(if t > 0.0 { v } else { t }));
    }
    let mut ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    ts.sort_by(f64::total_cmp);
    if ts.windows(2).any(|w| w[0] == w[1]) {
        return Err(EngineError::RepeatedHorizon);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(SlopeFit { slope, intercept, r2 })
}

/// `S_n / (n^(1/(1+alpha)) R_n^(alpha/(1+alpha)))`, the inferior-sampling diagnostic.
pub fn inferior_sampling_ratio(inferior: f64, n: f64, regret: f64, alpha: f64) -> f64 {
    inferior / (n.powf(1.0 / (1.0 + alpha)) * regret.powf(alpha / (1.0 + alpha)))
}
