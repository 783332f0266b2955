//! Full two-phase allocation on the reference scenario.
//!
//! `cargo run --example allocate_section5 -- 50` sets carrier 1's capacity.
use ca_alloc::{run, CarrierId, Scenario, SolverParams};

fn main() {
    let r1: f64 = std::env::args().nth(1).map_or(50.0, |a| a.parse().expect("capacity"));
    let scenario = Scenario::section5().with_capacity(CarrierId(1), r1).unwrap();
    let report = run(&scenario, &SolverParams::default()).unwrap();

    for c in scenario.carrier_ids() {
        println!(
            "carrier {c}: R={} offered {:.6e} allocation {:.6e}",
            report.capacities[&c],
            report.offered_price(c).unwrap(),
            report.allocation_price(c).unwrap()
        );
    }
    println!("processing order: {:?}", report.processing_order);
    println!("{:>4} {:>8} {:>10} {:>10} {:>10}", "UE", "primary", "carrier 1", "carrier 2", "total");
    for u in scenario.users() {
        println!(
            "{:>4} {:>8} {:>10.4} {:>10.4} {:>10.4}",
            u.id,
            report.primary(u.id).unwrap(),
            report.rate(CarrierId(1), u.id),
            report.rate(CarrierId(2), u.id),
            report.aggregate(u.id).unwrap()
        );
    }
}
