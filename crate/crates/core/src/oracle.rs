//! Reference centralized solver for a single carrier.
//!
//! Maximizes `sum_j ln U_j(r_j + c_j)` over `{r >= 0, sum_j r_j <= R}` directly,
//! without prices or bids, so it can be used to check [`crate::enodeb::dual_ascent`].
//!
//! The solve has three stages:
//!
//! 1. projected gradient ascent with step `(R / 10) / sqrt(t)` along the normalized
//!    gradient, keeping the best iterate;
//! 2. for two users, a uniform grid over the split of `R`;
//! 3. exact pairwise transfers: for every pair, move rate between the two users
//!    until their log-marginals agree (or one of them hits zero), repeated until no
//!    transfer is larger than a few ulps of `R`.
//!
//! The result is accepted only if its KKT residual is below the requested tolerance.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::enodeb::{validate_entries, BidEntry, SolverError};
use crate::model::UserId;
use crate::utility::RATE_FLOOR;

pub const GRADIENT_ITERS: usize = 100_000;
pub const GRID_POINTS: usize = 10_000;
const MAX_SWEEPS: usize = 100_000;
const TRANSFER_BISECTIONS: usize = 200;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Instance(#[from] SolverError),
    #[error("tolerance must be finite and > 0, got {0}")]
    Tolerance(f64),
    #[error("KKT residual {residual:e} above tolerance {tolerance:e}")]
    NotConverged { residual: f64, tolerance: f64 },
    #[error("user sets differ: only in algorithm {only_algorithm:?}, only in oracle {only_oracle:?}")]
    UserMismatch {
        only_algorithm: Vec<UserId>,
        only_oracle: Vec<UserId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedInstance {
    pub entries: Vec<BidEntry>,
    pub capacity: f64,
}

impl CentralizedInstance {
    pub fn new(entries: Vec<BidEntry>, capacity: f64) -> Self {
        Self { entries, capacity }
    }
}

fn slope(e: &BidEntry, r: f64) -> f64 {
    e.utility.marginal((r + e.offset).max(RATE_FLOOR))
}

fn total(entries: &[BidEntry], rates: &[f64]) -> f64 {
    entries
        .iter()
        .zip(rates)
        .map(|(e, &r)| e.utility.log_utility(r + e.offset))
        .sum()
}

/// `sum_j ln U_j(r_j + c_j)`; users missing from `rates` count as `r_j = 0`.
pub fn objective(instance: &CentralizedInstance, rates: &BTreeMap<UserId, f64>) -> f64 {
    instance
        .entries
        .iter()
        .map(|e| e.utility.log_utility(rates.get(&e.user).copied().unwrap_or(0.0) + e.offset))
        .sum()
}

/// Euclidean projection onto `{r >= 0, sum r <= cap}`.
fn project(v: &mut [f64], cap: f64) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    if v.iter().sum::<f64>() <= cap {
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        acc += x;
        let t = (acc - cap) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

fn gradient_ascent(entries: &[BidEntry], cap: f64) -> Vec<f64> {
    let m = entries.len();
    let alpha0 = cap / 10.0;
    let mut r = vec![cap / m as f64; m];
    let mut best = r.clone();
    let mut best_value = total(entries, &r);
    let mut g = vec![0.0; m];
    for t in 1..=GRADIENT_ITERS {
        for (gj, (e, &rj)) in g.iter_mut().zip(entries.iter().zip(&r)) {
            *gj = slope(e, rj);
        }
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        let step = alpha0 / (t as f64).sqrt() / norm;
        r.iter_mut().zip(&g).for_each(|(x, gj)| *x += step * gj);
        project(&mut r, cap);
        let value = total(entries, &r);
        if value > best_value {
            best_value = value;
            best.copy_from_slice(&r);
        }
    }
    best
}

fn grid_search(entries: &[BidEntry], cap: f64) -> Vec<f64> {
    let mut best = vec![cap, 0.0];
    let mut best_value = f64::NEG_INFINITY;
    for i in 0..=GRID_POINTS {
        let r1 = cap * i as f64 / GRID_POINTS as f64;
        let r = [r1, cap - r1];
        let value = total(entries, &r);
        if value > best_value {
            best_value = value;
            best = r.to_vec();
        }
    }
    best
}

/// Amount to move from user `j` to user `i` so their log-marginals meet.
fn transfer(ei: &BidEntry, ri: f64, ej: &BidEntry, rj: f64) -> f64 {
    let gap = |t: f64| slope(ei, ri + t) - slope(ej, rj - t);
    let (mut lo, mut hi) = (-ri, rj);
    if gap(lo) <= 0.0 {
        return lo;
    }
    if gap(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..TRANSFER_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn pairwise(entries: &[BidEntry], r: &mut [f64], cap: f64) {
    let m = entries.len();
    let stop = 1e-13 * cap;
    for _ in 0..MAX_SWEEPS {
        let mut moved = 0.0_f64;
        for i in 0..m {
            for j in i + 1..m {
                let t = transfer(&entries[i], r[i], &entries[j], r[j]);
                // Keep the pair sum exact so the capacity stays tight.
                let pair = r[i] + r[j];
                r[i] = (r[i] + t).clamp(0.0, pair);
                r[j] = pair - r[i];
                moved = moved.max(t.abs());
            }
        }
        if moved <= stop {
            break;
        }
    }
}

/// Relative KKT residual: spread of the log-marginal across users with positive
/// rate, plus how far any zero-rate user's marginal exceeds the common level.
pub fn kkt_residual(instance: &CentralizedInstance, rates: &BTreeMap<UserId, f64>) -> f64 {
    let point: Vec<(f64, f64)> = instance
        .entries
        .iter()
        .map(|e| {
            let r = rates.get(&e.user).copied().unwrap_or(0.0);
            (r, slope(e, r))
        })
        .collect();
    let active: Vec<f64> = point.iter().filter(|(r, _)| *r > 0.0).map(|&(_, s)| s).collect();
    let Some(level) = active.iter().copied().reduce(f64::max) else {
        return f64::INFINITY;
    };
    let spread = active.iter().map(|s| (level - s) / level).fold(0.0, f64::max);
    let excess = point
        .iter()
        .filter(|(r, _)| *r <= 0.0)
        .map(|&(_, s)| ((s - level) / level).max(0.0))
        .fold(0.0, f64::max);
    let used: f64 = point.iter().map(|(r, _)| r).sum();
    let slack = ((instance.capacity - used) / instance.capacity).max(0.0);
    spread.max(excess).max(slack)
}

/// Optimal rates of `instance`, accepted when the KKT residual is at most
/// `tolerance`.
pub fn solve_centralized(
    instance: &CentralizedInstance,
    tolerance: f64,
) -> Result<BTreeMap<UserId, f64>, OracleError> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(OracleError::Tolerance(tolerance));
    }
    validate_entries(&instance.entries, instance.capacity)?;
    let entries = &instance.entries;
    let cap = instance.capacity;

    let mut r = if entries.len() == 1 {
        vec![cap]
    } else {
        gradient_ascent(entries, cap)
    };
    if entries.len() == 2 {
        let grid = grid_search(entries, cap);
        if total(entries, &grid) > total(entries, &r) {
            r = grid;
        }
    }
    // Every log-marginal is positive, so unused capacity always helps.
    let slack = cap - r.iter().sum::<f64>();
    if slack > 0.0 {
        let best = (0..r.len())
            .max_by(|&a, &b| slope(&entries[a], r[a]).total_cmp(&slope(&entries[b], r[b])))
            .expect("instance is not empty");
        r[best] += slack;
    }
    pairwise(entries, &mut r, cap);

    let rates: BTreeMap<UserId, f64> = entries.iter().map(|e| e.user).zip(r).collect();
    let residual = kkt_residual(instance, &rates);
    if residual.is_nan() || residual > tolerance {
        return Err(OracleError::NotConverged {
            residual,
            tolerance,
        });
    }
    Ok(rates)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// `max_j |r_alg - r_oracle| / max(r_oracle, 1)`.
    pub max_deviation: f64,
    pub pass: bool,
}

pub fn compare(
    algorithm: &BTreeMap<UserId, f64>,
    oracle: &BTreeMap<UserId, f64>,
    tol: f64,
) -> Result<Comparison, OracleError> {
    let a: BTreeSet<_> = algorithm.keys().copied().collect();
    let o: BTreeSet<_> = oracle.keys().copied().collect();
    if a != o {
        return Err(OracleError::UserMismatch {
            only_algorithm: a.difference(&o).copied().collect(),
            only_oracle: o.difference(&a).copied().collect(),
        });
    }
    let max_deviation = oracle
        .iter()
        .map(|(u, &ro)| (algorithm[u] - ro).abs() / ro.max(1.0))
        .fold(0.0, f64::max);
    Ok(Comparison {
        max_deviation,
        pass: max_deviation <= tol,
    })
}
