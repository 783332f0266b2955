//! Normalized application utilities and the marginal solves built on them.
//!
//! Two families are supported:
//!
//! * **Sigmoidal** (real-time traffic), steepness `a` and inflection rate `b`:
//!
//!   ```text
//!   U(r) = c * (1 / (1 + e^{-a(r-b)}) - d),   c = 1 + e^{-ab},   d = e^{-ab} / (1 + e^{-ab})
//!   ```
//!
//!   which simplifies to `U(r) = (1 - e^{-ar}) / (1 + e^{-a(r-b)})`. The simplified
//!   form is what gets evaluated: it never forms `e^{ab}` and keeps full relative
//!   precision near `r = 0`.
//!
//! * **Logarithmic** (delay-tolerant traffic), slope `k` and full-utilization rate
//!   `r_max`:
//!
//!   ```text
//!   U(r) = ln(1 + k r) / ln(1 + k r_max)
//!   ```
//!
//! Both satisfy `U(0) = 0`, are strictly increasing and have a strictly decreasing
//! log-marginal `U'(r) / U(r)`. The eNodeB price loop only ever needs the
//! log-marginal and its inverse, so those are the hot paths here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest rate handed to the log-marginal; `log U` is `-inf` at zero.
pub const RATE_FLOOR: f64 = 1e-9;

/// Absolute bisection tolerance on rate.
pub const RATE_TOL: f64 = 1e-9;

pub const MAX_BISECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("sigmoidal steepness `a` must be finite and > 0, got {0}")]
    Steepness(f64),
    #[error("sigmoidal inflection rate `b` must be finite and > 0, got {0}")]
    Inflection(f64),
    #[error("logarithmic slope `k` must be finite and > 0, got {0}")]
    Slope(f64),
    #[error("logarithmic `r_max` must be finite and > 0, got {0}")]
    FullRate(f64),
    #[error("log-marginal is only defined for rate > 0, got {0}")]
    RateDomain(f64),
    #[error("price must be finite and > 0, got {0}")]
    Price(f64),
    #[error("rate cap must be finite and > 0, got {0}")]
    RateCap(f64),
    #[error("rate offset must be finite and >= 0, got {0}")]
    Offset(f64),
}

/// Bracket floor, tolerance and iteration cap of the inverse-marginal bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub floor: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for Bisection {
    fn default() -> Self {
        Self {
            floor: RATE_FLOOR,
            tol: RATE_TOL,
            max_iters: MAX_BISECTION_ITERS,
        }
    }
}

/// An application utility. Construct through [`UtilityFunction::sigmoidal`] or
/// [`UtilityFunction::logarithmic`] to get parameter validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum UtilityFunction {
    Sigmoidal { a: f64, b: f64 },
    Logarithmic { k: f64, r_max: f64 },
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// `1 / (1 + e^{-x})` without overflow.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let t = x.exp();
        t / (1.0 + t)
    }
}

/// `ln(1 - e^{x})` for `x < 0`.
fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(1 + e^{x})` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl UtilityFunction {
    pub fn sigmoidal(a: f64, b: f64) -> Result<Self, UtilityError> {
        let u = Self::Sigmoidal { a, b };
        u.validate()?;
        Ok(u)
    }

    pub fn logarithmic(k: f64, r_max: f64) -> Result<Self, UtilityError> {
        let u = Self::Logarithmic { k, r_max };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<(), UtilityError> {
        match *self {
            Self::Sigmoidal { a, b } => {
                if !positive(a) {
                    return Err(UtilityError::Steepness(a));
                }
                if !positive(b) {
                    return Err(UtilityError::Inflection(b));
                }
            }
            Self::Logarithmic { k, r_max } => {
                if !positive(k) {
                    return Err(UtilityError::Slope(k));
                }
                if !positive(r_max) {
                    return Err(UtilityError::FullRate(r_max));
                }
            }
        }
        Ok(())
    }

    pub fn is_sigmoidal(&self) -> bool {
        matches!(self, Self::Sigmoidal { .. })
    }

    /// The sigmoid normalizers `(c, d)`; `None` for the logarithmic family.
    pub fn normalizers(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Sigmoidal { a, b } => {
                let e = (-a * b).exp();
                Some((1.0 + e, e / (1.0 + e)))
            }
            Self::Logarithmic { .. } => None,
        }
    }

    /// `r_max` of a logarithmic utility.
    pub fn full_rate(&self) -> Option<f64> {
        match *self {
            Self::Logarithmic { r_max, .. } => Some(r_max),
            Self::Sigmoidal { .. } => None,
        }
    }

    /// `U(r)`. Negative rates evaluate as zero; the logarithmic family is clamped
    /// at 1 beyond `r_max`.
    pub fn evaluate(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Self::Sigmoidal { a, b } => -(-a * r).exp_m1() * logistic(a * (r - b)),
            Self::Logarithmic { k, r_max } => {
                if r >= r_max {
                    1.0
                } else {
                    (k * r).ln_1p() / (k * r_max).ln_1p()
                }
            }
        }
    }

    /// `ln U(r)` of the smooth utility, i.e. without the `r_max` clamp, so that its
    /// derivative is exactly [`log_marginal`](Self::log_marginal) everywhere. This is
    /// the objective the solvers maximize. Returns `-inf` for `r <= 0`.
    pub fn log_utility(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::Sigmoidal { a, b } => log1m_exp(-a * r) - softplus(-a * (r - b)),
            Self::Logarithmic { k, r_max } => (k * r).ln_1p().ln() - (k * r_max).ln_1p().ln(),
        }
    }

    /// `U'(r) / U(r)`, the derivative of `ln U`.
    pub fn log_marginal(&self, r: f64) -> Result<f64, UtilityError> {
        if r.is_nan() || r <= 0.0 {
            return Err(UtilityError::RateDomain(r));
        }
        Ok(self.marginal(r))
    }

    /// Unchecked log-marginal for `r > 0`.
    pub(crate) fn marginal(&self, r: f64) -> f64 {
        match *self {
            // d/dr [ln(1 - e^{-ar}) - ln(1 + e^{-a(r-b)})]
            Self::Sigmoidal { a, b } if r < b => a + (a / (a * r).exp_m1() - a * logistic(a * (r - b))),
            Self::Sigmoidal { a, b } => a / (a * r).exp_m1() + a * logistic(-a * (r - b)),
            Self::Logarithmic { k, .. } => k / ((1.0 + k * r) * (k * r).ln_1p()),
        }
    }

    /// `marginal(r) - price` without rounding the marginal first. Below the
    /// inflection point a sigmoid's log-marginal is `a` plus two tiny terms that
    /// nearly cancel, so it is kept as `(a - price) + (tiny - tiny)`.
    fn excess(&self, r: f64, price: f64) -> f64 {
        match *self {
            Self::Sigmoidal { a, b } if r < b => {
                (a / (a * r).exp_m1() - a * logistic(a * (r - b))) + (a - price)
            }
            _ => self.marginal(r) - price,
        }
    }

    /// The rate where the log-marginal equals `price`, searched on
    /// `[RATE_FLOOR, r_cap]`. Saturates at `r_cap` when the price is too low to bind
    /// inside the cap and at the floor when it is too high.
    pub fn inverse_log_marginal(&self, price: f64, r_cap: f64) -> Result<f64, UtilityError> {
        self.inverse_log_marginal_with(price, r_cap, &Bisection::default())
    }

    pub fn inverse_log_marginal_with(
        &self,
        price: f64,
        r_cap: f64,
        opts: &Bisection,
    ) -> Result<f64, UtilityError> {
        if !positive(price) {
            return Err(UtilityError::Price(price));
        }
        if !positive(r_cap) {
            return Err(UtilityError::RateCap(r_cap));
        }
        let mut lo = opts.floor.min(r_cap);
        let mut hi = r_cap;
        if self.excess(hi, price) >= 0.0 {
            return Ok(hi);
        }
        if self.excess(lo, price) <= 0.0 {
            return Ok(lo);
        }
        for _ in 0..opts.max_iters {
            if hi - lo <= opts.tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.excess(mid, price) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Maximizer over `r >= 0` of `ln U(r + offset) - price * r`.
    pub fn net_benefit_maximizer(
        &self,
        price: f64,
        offset: f64,
        r_cap: f64,
    ) -> Result<f64, UtilityError> {
        self.net_benefit_maximizer_with(price, offset, r_cap, &Bisection::default())
    }

    pub fn net_benefit_maximizer_with(
        &self,
        price: f64,
        offset: f64,
        r_cap: f64,
        opts: &Bisection,
    ) -> Result<f64, UtilityError> {
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(UtilityError::Offset(offset));
        }
        if !positive(r_cap) {
            return Err(UtilityError::RateCap(r_cap));
        }
        let x = self.inverse_log_marginal_with(price, r_cap + offset, opts)?;
        Ok((x - offset).clamp(0.0, r_cap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(a: f64, b: f64) -> UtilityFunction {
        UtilityFunction::sigmoidal(a, b).unwrap()
    }

    fn log(k: f64) -> UtilityFunction {
        UtilityFunction::logarithmic(k, 100.0).unwrap()
    }

    /// The textbook `c (s - d)` form with `c`, `d` built from `e^{ab}`; only safe
    /// for small `ab`.
    fn naive_sigmoid(a: f64, b: f64, r: f64) -> f64 {
        let eab = (a * b).exp();
        let c = (1.0 + eab) / eab;
        let d = 1.0 / (1.0 + eab);
        c * (1.0 / (1.0 + (-a * (r - b)).exp()) - d)
    }

    fn fd_log_marginal(u: &UtilityFunction, r: f64) -> f64 {
        let h = 1e-5 * r;
        (u.log_utility(r + h) - u.log_utility(r - h)) / (2.0 * h)
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(sig(5.0, 10.0).evaluate(0.0), 0.0);
        assert_eq!(log(15.0).evaluate(0.0), 0.0);
        assert_eq!(log(15.0).evaluate(100.0), 1.0);
        assert!((sig(5.0, 10.0).evaluate(10.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_at_inflection_matches_normalized_half() {
        let u = sig(1.0, 3.0);
        let (c, d) = u.normalizers().unwrap();
        assert!((u.evaluate(3.0) - c * (0.5 - d)).abs() < 1e-15);
    }

    #[test]
    fn stable_sigmoid_matches_textbook_form() {
        for &(a, b) in &[(1.0, 3.0), (0.5, 4.0), (2.0, 1.5)] {
            for i in 0..=40 {
                let r = i as f64 * 0.25;
                let want = naive_sigmoid(a, b, r);
                assert!(
                    (sig(a, b).evaluate(r) - want).abs() < 1e-12,
                    "a={a} b={b} r={r}"
                );
            }
        }
    }

    #[test]
    fn sigmoid_marginal_matches_textbook_ratio() {
        // a s (1 - s) / (s - d) evaluated directly; ab small so no cancellation trouble.
        let (a, b) = (1.0, 3.0);
        let u = sig(a, b);
        let (_, d) = u.normalizers().unwrap();
        for i in 1..=40 {
            let r = i as f64 * 0.25;
            let s = 1.0 / (1.0 + (-a * (r - b)).exp());
            let want = a * s * (1.0 - s) / (s - d);
            let got = u.log_marginal(r).unwrap();
            assert!((got - want).abs() <= 1e-10 * want, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn reference_scale_sigmoid_does_not_overflow() {
        let u = sig(5.0, 10.0);
        for &r in &[0.0, 1e-9, 1.0, 10.0, 50.0, 200.0, 1e4] {
            let v = u.evaluate(r);
            assert!(v.is_finite() && (0.0..=1.0).contains(&v), "r={r} -> {v}");
        }
        assert!(u.log_utility(1e-9).is_finite());
        assert!(u.marginal(1e-9).is_finite());
    }

    #[test]
    fn log_marginal_examples() {
        let got = log(15.0).log_marginal(10.0).unwrap();
        let want = 15.0 / (151.0 * 151f64.ln());
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.019800).abs() < 1e-6);
        assert!((got - fd_log_marginal(&log(15.0), 10.0)).abs() < 1e-8);

        let s = sig(5.0, 10.0).log_marginal(5.0).unwrap();
        assert!((s - 5.0).abs() / 5.0 < 1e-6);
        assert!((s - fd_log_marginal(&sig(5.0, 10.0), 5.0)).abs() / 5.0 < 1e-6);
    }

    #[test]
    fn log_marginal_rejects_non_positive_rate() {
        assert_eq!(
            log(3.0).log_marginal(0.0),
            Err(UtilityError::RateDomain(0.0))
        );
        assert!(sig(1.0, 30.0).log_marginal(-1.0).is_err());
        assert!(sig(1.0, 30.0).log_marginal(f64::NAN).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert_eq!(
            UtilityFunction::sigmoidal(0.0, 1.0),
            Err(UtilityError::Steepness(0.0))
        );
        assert_eq!(
            UtilityFunction::sigmoidal(1.0, -2.0),
            Err(UtilityError::Inflection(-2.0))
        );
        assert!(UtilityFunction::logarithmic(-1.0, 100.0).is_err());
        assert!(UtilityFunction::logarithmic(1.0, 0.0).is_err());
        assert!(UtilityFunction::logarithmic(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let u = log(15.0);
        let p = u.log_marginal(10.0).unwrap();
        let r = u.inverse_log_marginal(p, 100.0).unwrap();
        assert!((r - 10.0).abs() < 1e-8);
        // The rounded price from the worked example lands close to 10 as well.
        let r = u.inverse_log_marginal(0.019800, 100.0).unwrap();
        assert!((r - 10.0).abs() < 1e-3, "{r}");

        let cap = 37.0;
        let p = u.log_marginal(cap).unwrap() / 2.0;
        assert_eq!(u.inverse_log_marginal(p, cap).unwrap(), cap);
    }

    /// Brute-force scan for the first grid point where the log-marginal drops to
    /// `p`, independent of the bisection.
    fn scan_root(u: &UtilityFunction, p: f64, cap: f64, n: usize) -> f64 {
        let step = cap / n as f64;
        (1..=n)
            .map(|i| i as f64 * step)
            .find(|&r| u.marginal(r) <= p)
            .unwrap_or(cap)
    }

    #[test]
    fn steep_sigmoid_price_above_steepness_has_interior_root() {
        // The log-marginal of a sigmoid blows up as 1/r near zero, so a price above
        // `a` still binds at a small positive rate: a/(e^{ar}-1) + a = p.
        let u = sig(5.0, 10.0);
        let r = u.inverse_log_marginal(5.5, 100.0).unwrap();
        let scanned = scan_root(&u, 5.5, 100.0, 1_000_000);
        assert!((r - scanned).abs() <= 1e-4, "{r} vs {scanned}");
        assert!((r - 11f64.ln() / 5.0).abs() < 1e-8, "{r}");
        assert!(r > RATE_FLOOR);
    }

    #[test]
    fn inverse_hits_floor_for_huge_price() {
        let u = log(15.0);
        assert_eq!(u.inverse_log_marginal(1e12, 100.0).unwrap(), RATE_FLOOR);
    }

    #[test]
    fn inverse_rejects_bad_price() {
        let u = log(15.0);
        assert!(u.inverse_log_marginal(f64::NAN, 10.0).is_err());
        assert!(u.inverse_log_marginal(f64::INFINITY, 10.0).is_err());
        assert!(u.inverse_log_marginal(0.0, 10.0).is_err());
        assert!(u.inverse_log_marginal(1.0, 0.0).is_err());
    }

    /// Grid maximizer of ln U(r + c) - p r on [0, cap].
    fn grid_argmax(u: &UtilityFunction, p: f64, c: f64, cap: f64, n: usize) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=n {
            let r = cap * i as f64 / n as f64;
            let g = u.log_utility((r + c).max(RATE_FLOOR)) - p * r;
            if g > best.0 {
                best = (g, r);
            }
        }
        best.1
    }

    #[test]
    fn net_benefit_examples() {
        let u = log(15.0);
        let p = 0.019800;
        assert_eq!(
            u.net_benefit_maximizer(p, 0.0, 100.0).unwrap(),
            u.inverse_log_marginal(p, 100.0).unwrap()
        );
        assert_eq!(u.net_benefit_maximizer(p, 20.0, 100.0).unwrap(), 0.0);
        assert_eq!(grid_argmax(&u, p, 20.0, 100.0, 100_000), 0.0);

        let r = u.net_benefit_maximizer(p, 4.0, 100.0).unwrap();
        assert!((r - 6.0).abs() < 1e-3, "{r}");
        assert!((r - grid_argmax(&u, p, 4.0, 100.0, 100_000)).abs() <= 2e-3);
        assert!(u.net_benefit_maximizer(p, -1.0, 100.0).is_err());
    }

    #[test]
    fn net_benefit_matches_grid_for_sigmoids() {
        for &(a, b, p, c) in &[
            (5.0, 10.0, 0.5, 0.0),
            (3.0, 20.0, 0.05, 7.0),
            (1.0, 30.0, 0.9, 12.0),
            (1.0, 30.0, 0.01, 40.0),
        ] {
            let u = sig(a, b);
            let cap = 100.0;
            let r = u.net_benefit_maximizer(p, c, cap).unwrap();
            let g = grid_argmax(&u, p, c, cap, 10_000);
            assert!((r - g).abs() <= cap / 10_000.0 + 1e-9, "{u:?} p={p} c={c}: {r} vs {g}");
        }
    }

    #[test]
    fn serde_shape() {
        let u: UtilityFunction =
            serde_json::from_str(r#"{"type":"logarithmic","k":3,"r_max":100}"#).unwrap();
        assert_eq!(u, log(3.0));
        let s = serde_json::to_string(&sig(5.0, 10.0)).unwrap();
        assert_eq!(s, r#"{"type":"sigmoidal","a":5.0,"b":10.0}"#);
    }
}
