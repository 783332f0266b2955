//! One carrier's price iteration, then the UE flag cascade driven by hand.
use std::collections::BTreeMap;

use ca_alloc::enodeb::{decay_step, price_bracket};
use ca_alloc::ue::UeState;
use ca_alloc::{offered_price, CarrierId, Scenario, SolverParams, UserId};

fn main() {
    let s = Scenario::section5().with_capacity(CarrierId(1), 50.0).unwrap();
    let params = SolverParams::default();
    let users: Vec<_> = s
        .covered_users(CarrierId(1))
        .iter()
        .map(|&u| (u, s.user(u).unwrap().utility))
        .collect();
    let res = offered_price(&users, 50.0, &params).unwrap();
    let entries: Vec<_> = users
        .iter()
        .map(|&(u, utility)| ca_alloc::BidEntry::new(u, utility, 0.0))
        .collect();
    println!("price bracket {:?}", price_bracket(&entries, 50.0, params.rate_floor));
    println!("{:>4} {:>12} {:>8}  rates", "n", "p(n)", "dw(n)");
    for step in res.trace.steps.iter().filter(|t| t.iteration <= 10 || t.iteration % 10 == 0) {
        let rates: Vec<String> = step.rates.iter().map(|r| format!("{r:7.3}")).collect();
        println!(
            "{:>4} {:>12.5e} {:>8.4}  {}",
            step.iteration,
            step.price,
            decay_step(step.iteration, params.l1, params.l2),
            rates.join(" ")
        );
    }
    println!("converged after {} iterations", res.iterations);

    // UE4 is in range of both carriers.
    let prices: BTreeMap<_, _> = [(CarrierId(1), res.shadow_price), (CarrierId(2), 0.0265)].into();
    let mut ue = UeState::new(UserId(4), &prices).unwrap();
    println!("UE4 order {:?}", ue.order());
    while let ca_alloc::ue::Flag::Carrier(c) = ue.next_flag() {
        println!("  flags carrier {c} with offset {:.3}", ue.offset());
        ue.record_rate(c, 5.0, prices[&c]).unwrap();
    }
    println!("  aggregate {:?}", ue.aggregate());
}
