//! Offered price of each reference carrier as carrier 1's capacity grows.
use ca_alloc::{offered_price, CarrierId, Scenario, SolverParams, UserId, UtilityFunction};

fn users(s: &Scenario, c: CarrierId) -> Vec<(UserId, UtilityFunction)> {
    s.covered_users(c)
        .iter()
        .map(|&u| (u, s.user(u).unwrap().utility))
        .collect()
}

fn main() {
    let s = Scenario::section5();
    let params = SolverParams::default();
    let p2 = offered_price(&users(&s, CarrierId(2)), 100.0, &params).unwrap();
    println!("carrier 2 at R=100: p={:.6e} ({} iterations)", p2.shadow_price, p2.iterations);
    println!("{:>6} {:>14} {:>6}  cheaper", "R1", "p1", "iters");
    for r1 in (50..=200).step_by(10) {
        let p1 = offered_price(&users(&s, CarrierId(1)), r1 as f64, &params).unwrap();
        let cheaper = if p1.shadow_price < p2.shadow_price { 1 } else { 2 };
        println!("{r1:>6} {:>14.6e} {:>6}  {cheaper}", p1.shadow_price, p1.iterations);
    }
}
