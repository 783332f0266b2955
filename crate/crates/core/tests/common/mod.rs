#![allow(dead_code)]

use ca_alloc::oracle::CentralizedInstance;
use ca_alloc::{BidEntry, UserId, UtilityFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The six utilities of the two-carrier reference scenario.
pub fn section5_utilities() -> Vec<(&'static str, UtilityFunction)> {
    let sig = |a, b| UtilityFunction::Sigmoidal { a, b };
    let log = |k| UtilityFunction::Logarithmic { k, r_max: 100.0 };
    vec![
        ("Sig(5,10)", sig(5.0, 10.0)),
        ("Sig(3,20)", sig(3.0, 20.0)),
        ("Sig(1,30)", sig(1.0, 30.0)),
        ("Log(15)", log(15.0)),
        ("Log(3)", log(3.0)),
        ("Log(0.5)", log(0.5)),
    ]
}

/// Utility drawn from the reference parameter ranges: sigmoidal `a` in [1, 5] and
/// `b` in [10, 30], logarithmic `k` in [0.5, 15] with `r_max = 100`, either family
/// with probability 1/2.
pub fn random_utility(rng: &mut impl Rng) -> UtilityFunction {
    if rng.gen_bool(0.5) {
        UtilityFunction::Sigmoidal {
            a: rng.gen_range(1.0..=5.0),
            b: rng.gen_range(10.0..=30.0),
        }
    } else {
        UtilityFunction::Logarithmic {
            k: rng.gen_range(0.5..=15.0),
            r_max: 100.0,
        }
    }
}

/// 1 to 4 users, capacity in [10, 200], offsets in [0, R/2].
pub fn random_instance(seed: u64) -> CentralizedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.gen_range(1..=4u32);
    let capacity = rng.gen_range(10.0..=200.0);
    let entries = (1..=users)
        .map(|id| {
            let utility = random_utility(&mut rng);
            BidEntry::new(UserId(id), utility, rng.gen_range(0.0..=capacity / 2.0))
        })
        .collect();
    CentralizedInstance::new(entries, capacity)
}

/// 100 log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Central difference of `ln U` at `r` with step `1e-5 r`.
pub fn fd_log_marginal(u: &UtilityFunction, r: f64) -> f64 {
    let h = 1e-5 * r;
    (u.log_utility(r + h) - u.log_utility(r - h)) / (2.0 * h)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}
