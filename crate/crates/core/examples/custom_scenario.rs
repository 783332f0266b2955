//! Three carriers with overlapping coverage, loaded from JSON.
use ca_alloc::model::parse_scenario;
use ca_alloc::{run, SolverParams};

const SCENARIO: &str = r#"{
  "carriers": [
    {"id": 1, "capacity": 40},
    {"id": 2, "capacity": 120},
    {"id": 3, "capacity": 60}
  ],
  "users": [
    {"id": 1, "utility": {"type": "sigmoidal", "a": 3, "b": 15}, "coverage": [1, 2]},
    {"id": 2, "utility": {"type": "sigmoidal", "a": 1, "b": 25}, "coverage": [2, 3]},
    {"id": 3, "utility": {"type": "logarithmic", "k": 10, "r_max": 100}, "coverage": [1]},
    {"id": 4, "utility": {"type": "logarithmic", "k": 2, "r_max": 100}, "coverage": [1, 2, 3]},
    {"id": 5, "utility": {"type": "logarithmic", "k": 0.5, "r_max": 100}, "coverage": [3]}
  ]
}"#;

fn main() {
    let scenario = parse_scenario(SCENARIO).unwrap();
    let report = run(&scenario, &SolverParams::default()).unwrap();
    for c in &report.processing_order {
        println!(
            "carrier {c}: offered {:.4e}, allocated {:.3} of {}",
            report.offered_price(*c).unwrap(),
            report.carrier_total(*c),
            report.capacities[c]
        );
    }
    for u in scenario.users() {
        let parts: Vec<String> = report.grants[&u.id]
            .iter()
            .map(|g| format!("{}:{:.3}", g.carrier, g.rate))
            .collect();
        println!("user {}: {} = {:.3}", u.id, parts.join(" + "), report.aggregate(u.id).unwrap());
    }
}
