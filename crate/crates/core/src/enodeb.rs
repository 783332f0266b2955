//! eNodeB-side shadow-price iteration.
//!
//! A carrier with capacity `R` serving users `j` (utility `U_j`, rate offset `c_j`)
//! solves
//!
//! ```text
//! maximize  sum_j ln U_j(r_j + c_j)   subject to  sum_j r_j <= R,  r_j >= 0
//! ```
//!
//! by iterating on per-user bids `w_j = p * r_j`:
//!
//! ```text
//! p(n)   = sum_j w_j(n-1) / R
//! r_j(n) = argmax_r  ln U_j(r + c_j) - p(n) r
//! w_j(n) = w_j(n-1) + clamp(p(n) r_j(n) - w_j(n-1), ±l1 e^{-n/l2})
//! ```
//!
//! until no bid moves by more than `delta * min(1, p)`. With all offsets zero the limit price
//! is the carrier's *offered* price; with the offsets reported by the users it is
//! the allocation price and the rates are the carrier's final allocation.
//!
//! Two guards keep the loop well-posed away from the reference scenario:
//!
//! * The price is projected onto `[max_j m_j(R + c_j), max_j m_j(R/M + c_j)]`,
//!   where `m_j` is the log-marginal of user `j`. The optimal price always lies in
//!   that interval. The projection keeps `p(n)` from collapsing to zero when every
//!   user is priced out at once, which would leave the inner argmax unbounded.
//! * The decay `l1 e^{-n/l2}` caps the total distance a bid can travel at about
//!   `l1 / (e^{1/l2} - 1)`. When the loop meets the `delta` test only because the
//!   clamp has shrunk, while some bid is still being pushed the same way
//!   ([`DRIFT_WINDOW`] clamped steps in a row), the decay clock restarts instead
//!   of reporting convergence, up to `max_decay_restarts` times. The cap matters
//!   for slow oscillations around a sigmoidal user's near-flat log-marginal, which
//!   look like drift over short windows.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{ParamsError, RateCapPolicy, SolverParams, UserId};
use crate::utility::{UtilityError, UtilityFunction};

/// Consecutive same-direction clamps that mark a drifting bid.
pub const DRIFT_WINDOW: usize = 3;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no users to allocate to")]
    NoEntries,
    #[error("capacity must be finite and > 0, got {0}")]
    Capacity(f64),
    #[error("user {0} appears more than once")]
    DuplicateUser(UserId),
    #[error("user {user}: {source}")]
    Utility {
        user: UserId,
        #[source]
        source: UtilityError,
    },
    #[error("solver parameters: {0}")]
    Params(#[from] ParamsError),
}

/// One user as seen by a carrier: utility plus the rate already held from
/// lower-priced carriers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidEntry {
    pub user: UserId,
    pub utility: UtilityFunction,
    pub offset: f64,
}

impl BidEntry {
    pub fn new(user: UserId, utility: UtilityFunction, offset: f64) -> Self {
        Self {
            user,
            utility,
            offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Outer iteration, starting at 1.
    pub iteration: usize,
    pub price: f64,
    /// Bids after the fluctuation clamp, in [`ConvergenceTrace::users`] order.
    pub bids: Vec<f64>,
    /// Inner-solve rates at `price`, same order.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    pub users: Vec<UserId>,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualAscentResult {
    pub shadow_price: f64,
    pub rates: BTreeMap<UserId, f64>,
    pub trace: ConvergenceTrace,
    pub iterations: usize,
    pub converged: bool,
    pub decay_restarts: usize,
}

impl DualAscentResult {
    pub fn total_rate(&self) -> f64 {
        self.rates.values().sum()
    }
}

/// Allowed bid movement at iteration `n`: `l1 * exp(-n / l2)`.
pub fn decay_step(n: usize, l1: f64, l2: f64) -> f64 {
    l1 * (-(n as f64) / l2).exp()
}

/// Limit the move from `w_prev` to `w_new` to the decay step of iteration `n`.
pub fn fluctuation_clamp(w_new: f64, w_prev: f64, n: usize, l1: f64, l2: f64) -> f64 {
    let step = decay_step(n, l1, l2);
    let diff = w_new - w_prev;
    if diff.abs() > step {
        w_prev + step.copysign(diff)
    } else {
        w_new
    }
}

/// Interval that contains the optimal shadow price of `entries` at `capacity`.
pub fn price_bracket(entries: &[BidEntry], capacity: f64, rate_floor: f64) -> (f64, f64) {
    let share = capacity / entries.len() as f64;
    let max_marginal = |rate: f64| {
        entries
            .iter()
            .map(|e| e.utility.marginal((rate + e.offset).max(rate_floor)))
            .fold(0.0_f64, f64::max)
    };
    let low = max_marginal(capacity).max(f64::MIN_POSITIVE);
    let high = max_marginal(share).max(low);
    (low, high)
}

fn rate_cap(entries: &[BidEntry], capacity: f64, policy: RateCapPolicy) -> f64 {
    match policy {
        RateCapPolicy::Fixed(cap) => cap,
        RateCapPolicy::CapacityOrFullRate => entries
            .iter()
            .filter_map(|e| e.utility.full_rate())
            .fold(capacity, f64::max),
    }
}

fn validate(entries: &[BidEntry], capacity: f64, params: &SolverParams) -> Result<(), SolverError> {
    params.validate()?;
    validate_entries(entries, capacity)
}

pub(crate) fn validate_entries(entries: &[BidEntry], capacity: f64) -> Result<(), SolverError> {
    if entries.is_empty() {
        return Err(SolverError::NoEntries);
    }
    if !(capacity.is_finite() && capacity > 0.0) {
        return Err(SolverError::Capacity(capacity));
    }
    let mut seen = BTreeSet::new();
    for e in entries {
        if !seen.insert(e.user) {
            return Err(SolverError::DuplicateUser(e.user));
        }
        e.utility.validate().map_err(|source| SolverError::Utility {
            user: e.user,
            source,
        })?;
        if !(e.offset.is_finite() && e.offset >= 0.0) {
            return Err(SolverError::Utility {
                user: e.user,
                source: UtilityError::Offset(e.offset),
            });
        }
    }
    Ok(())
}

/// Run the bid/price iteration for one carrier.
///
/// Non-convergence within `params.max_outer_iters` is not an error: the result
/// comes back with `converged == false` and the caller decides.
///
/// Bids start at `w_j(0) = p0 * R / M` where `p0` is 1 projected onto
/// [`price_bracket`], so the first price is `p0`. The returned shadow price is
/// `sum_j w_j / R` over the final bids and the rates are `w_j / p`, which
/// allocates the capacity exactly. If that price is below the bracket floor, the
/// floor is returned instead and the capacity left over goes to the user whose
/// log-marginal stays highest after taking it.
pub fn dual_ascent(
    entries: &[BidEntry],
    capacity: f64,
    params: &SolverParams,
) -> Result<DualAscentResult, SolverError> {
    validate(entries, capacity, params)?;
    let m = entries.len();
    let cap = rate_cap(entries, capacity, params.rate_cap);
    let bisection = params.bisection();
    let (low, high) = price_bracket(entries, capacity, params.rate_floor);

    let p0 = 1.0_f64.clamp(low, high);
    let mut bids = vec![p0 * capacity / m as f64; m];
    let mut rates = vec![0.0; m];
    let mut streak = vec![(0.0_f64, 0_usize); m];
    let mut trace = ConvergenceTrace {
        users: entries.iter().map(|e| e.user).collect(),
        steps: Vec::new(),
    };
    let mut clock = 0;
    let mut restarts = 0;
    let mut converged = false;
    let mut iterations = 0;

    for n in 1..=params.max_outer_iters {
        iterations = n;
        clock += 1;
        let price = (bids.iter().sum::<f64>() / capacity).clamp(low, high);
        let mut change = 0.0_f64;
        for (j, e) in entries.iter().enumerate() {
            let r = e
                .utility
                .net_benefit_maximizer_with(price, e.offset, cap, &bisection)
                .map_err(|source| SolverError::Utility {
                    user: e.user,
                    source,
                })?;
            rates[j] = r;
            let raw = price * r;
            let next = fluctuation_clamp(raw, bids[j], clock, params.l1, params.l2);
            if next != raw {
                let dir = (raw - bids[j]).signum();
                streak[j] = if streak[j].0 == dir {
                    (dir, streak[j].1 + 1)
                } else {
                    (dir, 1)
                };
            } else {
                streak[j] = (0.0, 0);
            }
            change = change.max((next - bids[j]).abs());
            bids[j] = next;
        }
        trace.steps.push(TraceStep {
            iteration: n,
            price,
            bids: bids.clone(),
            rates: rates.clone(),
        });
        // Bids scale with the price; at p < 1 an absolute test would stop early.
        if change <= params.delta * price.min(1.0) {
            let drifting = streak.iter().any(|&(_, run)| run >= DRIFT_WINDOW);
            if drifting && restarts < params.max_decay_restarts {
                clock = 0;
                restarts += 1;
                streak.iter_mut().for_each(|s| *s = (0.0, 0));
                continue;
            }
            converged = true;
            break;
        }
    }

    let (shadow_price, rates) = extract(entries, &bids, capacity, low);
    Ok(DualAscentResult {
        shadow_price,
        rates,
        trace,
        iterations,
        converged,
        decay_restarts: restarts,
    })
}

/// Price and rates from the final bids.
///
/// Normally `p = sum_j w_j / R` and `r_j = w_j / p`. When that price falls below
/// the bracket, the bids undershoot because some user's log-marginal is flat at
/// the price to machine precision and its demand is not resolved by the inner
/// solve. Then the price stays at the bracket floor, rates are `w_j / p`, and the
/// unallocated capacity goes to the user whose log-marginal stays highest after
/// taking it.
fn extract(entries: &[BidEntry], bids: &[f64], capacity: f64, low: f64) -> (f64, BTreeMap<UserId, f64>) {
    let raw = bids.iter().sum::<f64>() / capacity;
    let price = raw.max(low);
    let mut rates: Vec<f64> = bids.iter().map(|w| w / price).collect();
    if raw < low {
        let slack = capacity - rates.iter().sum::<f64>();
        let after = |j: usize| entries[j].utility.marginal(rates[j] + entries[j].offset + slack);
        let best = (0..entries.len())
            .max_by(|&a, &b| after(a).total_cmp(&after(b)))
            .expect("entries are not empty");
        rates[best] += slack;
    }
    let rates = entries.iter().map(|e| e.user).zip(rates).collect();
    (price, rates)
}

/// The price a carrier would charge if it were the primary carrier of every user
/// it covers: [`dual_ascent`] with zero offsets.
pub fn offered_price(
    users: &[(UserId, UtilityFunction)],
    capacity: f64,
    params: &SolverParams,
) -> Result<DualAscentResult, SolverError> {
    let entries: Vec<BidEntry> = users
        .iter()
        .map(|&(user, utility)| BidEntry::new(user, utility, 0.0))
        .collect();
    dual_ascent(&entries, capacity, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log15() -> UtilityFunction {
        UtilityFunction::Logarithmic { k: 15.0, r_max: 100.0 }
    }

    fn entry(id: u32, u: UtilityFunction, c: f64) -> BidEntry {
        BidEntry::new(UserId(id), u, c)
    }

    #[test]
    fn clamp_examples() {
        let first = fluctuation_clamp(10.0, 0.0, 1, 5.0, 10.0);
        assert!((first - 5.0 * (-0.1f64).exp()).abs() < 1e-15);
        assert!((first - 4.524).abs() < 1e-3);
        assert_eq!(fluctuation_clamp(3.05, 3.0, 1, 5.0, 10.0), 3.05);
        let down = fluctuation_clamp(2.0, 10.0, 30, 5.0, 10.0);
        assert!((down - (10.0 - 5.0 * (-3.0f64).exp())).abs() < 1e-15);
        assert!((down - 9.751).abs() < 1e-3);
    }

    #[test]
    fn single_log_user_takes_capacity() {
        let r = dual_ascent(&[entry(1, log15(), 0.0)], 10.0, &SolverParams::default()).unwrap();
        assert!(r.converged);
        assert!((r.rates[&UserId(1)] - 10.0).abs() < 1e-9);
        let want = 15.0 / (151.0 * 151f64.ln());
        assert!((r.shadow_price - want).abs() / want < 1e-9);
        assert!((r.shadow_price - 0.019800).abs() < 1e-6);
    }

    #[test]
    fn identical_users_split_evenly() {
        let es = [entry(1, log15(), 0.0), entry(2, log15(), 0.0)];
        let r = dual_ascent(&es, 20.0, &SolverParams::default()).unwrap();
        assert!(r.converged);
        assert!((r.rates[&UserId(1)] - 10.0).abs() < 1e-6);
        assert!((r.rates[&UserId(2)] - 10.0).abs() < 1e-6);
        assert!((r.shadow_price - 0.019800).abs() < 1e-5);
    }

    #[test]
    fn single_sigmoid_scarce_capacity() {
        let u = UtilityFunction::Sigmoidal { a: 5.0, b: 10.0 };
        let r = dual_ascent(&[entry(1, u, 0.0)], 5.0, &SolverParams::default()).unwrap();
        assert!((r.rates[&UserId(1)] - 5.0).abs() < 1e-9);
        assert!((r.shadow_price - 5.0).abs() / 5.0 < 1e-3);
    }

    #[test]
    fn offset_user_gets_less() {
        let es = [entry(1, log15(), 10.0), entry(2, log15(), 0.0)];
        let r = dual_ascent(&es, 10.0, &SolverParams::default()).unwrap();
        assert!(r.converged);
        let (a, b) = (r.rates[&UserId(1)], r.rates[&UserId(2)]);
        assert!(a < b, "{a} vs {b}");
        // Equal log-marginals at r + c => r_2 = r_1 + 10 => r_1 = 0 for R = 10.
        assert!(a < 0.05 && (a + b - 10.0).abs() < 1e-9, "{a} {b}");
    }

    #[test]
    fn bracket_contains_single_user_price() {
        let es = [entry(1, log15(), 0.0)];
        let (lo, hi) = price_bracket(&es, 10.0, 1e-9);
        assert_eq!(lo, hi);
        assert!((lo - log15().marginal(10.0)).abs() < 1e-18);
    }

    #[test]
    fn trace_indices_start_at_one_and_increase() {
        let s = crate::model::Scenario::section5();
        let users: Vec<_> = s
            .covered_users(crate::model::CarrierId(1))
            .iter()
            .map(|&u| (u, s.user(u).unwrap().utility))
            .collect();
        let r = offered_price(&users, 100.0, &SolverParams::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.trace.steps.len(), r.iterations);
        for (i, step) in r.trace.steps.iter().enumerate() {
            assert_eq!(step.iteration, i + 1);
            assert_eq!(step.bids.len(), users.len());
        }
        let again = offered_price(&users, 100.0, &SolverParams::default()).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn non_convergence_is_flagged_not_raised() {
        let s = crate::model::Scenario::section5();
        let users: Vec<_> = s
            .covered_users(crate::model::CarrierId(1))
            .iter()
            .map(|&u| (u, s.user(u).unwrap().utility))
            .collect();
        let params = SolverParams {
            max_outer_iters: 2,
            ..SolverParams::default()
        };
        let r = offered_price(&users, 100.0, &params).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
        assert!((r.total_rate() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn input_errors() {
        let p = SolverParams::default();
        assert!(matches!(dual_ascent(&[], 1.0, &p), Err(SolverError::NoEntries)));
        assert!(matches!(
            dual_ascent(&[entry(1, log15(), 0.0)], 0.0, &p),
            Err(SolverError::Capacity(_))
        ));
        assert!(matches!(
            dual_ascent(&[entry(1, log15(), 0.0), entry(1, log15(), 0.0)], 1.0, &p),
            Err(SolverError::DuplicateUser(UserId(1)))
        ));
        assert!(matches!(
            dual_ascent(&[entry(1, log15(), -1.0)], 1.0, &p),
            Err(SolverError::Utility { .. })
        ));
        let bad = SolverParams { l1: -1.0, ..p };
        assert!(matches!(
            dual_ascent(&[entry(1, log15(), 0.0)], 1.0, &bad),
            Err(SolverError::Params(_))
        ));
    }
}
