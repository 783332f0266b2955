//! Offered prices and aggregated rates while carrier 1's capacity runs 50..200.
use ca_alloc::{sweep, CarrierId, Scenario, SolverParams};

fn main() {
    let caps: Vec<f64> = (50..=200).step_by(10).map(f64::from).collect();
    let points = sweep(&Scenario::section5(), CarrierId(1), &caps, &SolverParams::default()).unwrap();
    print!("{:>5} {:>11} {:>11}", "R1", "p1", "p2");
    for u in 1..=9 {
        print!(" {:>7}", format!("UE{u}"));
    }
    println!();
    for (r1, report) in &points {
        print!(
            "{r1:>5} {:>11.4e} {:>11.4e}",
            report.offered_price(CarrierId(1)).unwrap(),
            report.offered_price(CarrierId(2)).unwrap()
        );
        for agg in report.aggregates().values() {
            print!(" {agg:>7.3}");
        }
        println!();
    }
}
