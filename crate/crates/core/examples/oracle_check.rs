//! Dual ascent against the centralized solver on random single-carrier instances.
use ca_alloc::{compare, dual_ascent, solve_centralized, BidEntry, CentralizedInstance, SolverParams, UserId, UtilityFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let params = SolverParams::default();
    for i in 0..10 {
        let capacity = rng.gen_range(10.0..200.0);
        let entries: Vec<BidEntry> = (1..=rng.gen_range(1..=4))
            .map(|id| {
                let u = if rng.gen_bool(0.5) {
                    UtilityFunction::Sigmoidal { a: rng.gen_range(1.0..5.0), b: rng.gen_range(10.0..30.0) }
                } else {
                    UtilityFunction::Logarithmic { k: rng.gen_range(0.5..15.0), r_max: 100.0 }
                };
                BidEntry::new(UserId(id), u, rng.gen_range(0.0..capacity / 2.0))
            })
            .collect();
        let inst = CentralizedInstance::new(entries, capacity);
        let alg = dual_ascent(&inst.entries, capacity, &params).unwrap();
        let orc = solve_centralized(&inst, 1e-6).unwrap();
        let cmp = compare(&alg.rates, &orc, 1e-2).unwrap();
        println!(
            "#{i}: {} users, R={capacity:.1}, {} iterations, deviation {:.2e} {}",
            inst.entries.len(),
            alg.iterations,
            cmp.max_deviation,
            if cmp.pass { "ok" } else { "MISMATCH" }
        );
    }
}
