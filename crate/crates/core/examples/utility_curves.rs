//! Utility, log-marginal and demand for the six reference applications.
use ca_alloc::{Scenario, UserId};

fn main() {
    let s = Scenario::section5();
    let rates = [1.0, 5.0, 10.0, 20.0, 30.0, 50.0, 100.0];
    for id in 1..=6 {
        let u = s.user(UserId(id)).unwrap().utility;
        println!("UE{id}: {u:?}");
        println!("  {:>8} {:>12} {:>14} {:>12}", "r", "U(r)", "d ln U / dr", "inverse");
        for r in rates {
            let lm = u.log_marginal(r).unwrap();
            let back = if lm > 0.0 {
                format!("{:.6}", u.inverse_log_marginal(lm, 200.0).unwrap())
            } else {
                "-".to_string()
            };
            println!("  {r:>8.1} {:>12.6} {lm:>14.6e} {back:>12}", u.evaluate(r));
        }
        // Demand at a fixed price, with and without rate already held elsewhere.
        let p = 0.05;
        println!(
            "  demand at p={p}: {:.4} (no offset), {:.4} (offset 10)",
            u.net_benefit_maximizer(p, 0.0, 200.0).unwrap(),
            u.net_benefit_maximizer(p, 10.0, 200.0).unwrap()
        );
    }
}
