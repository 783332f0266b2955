//! Price-selective resource allocation with carrier aggregation.
//!
//! Every carrier first announces an *offered* shadow price: the price it would
//! settle at if it were the primary carrier of all users in its range. Each user
//! then ranks its in-range carriers by that price, and the carriers allocate in
//! that order. Every carrier sees, for each user, the rate the user already holds
//! from cheaper carriers.
//!
//! | module | role |
//! |---|---|
//! | [`utility`] | sigmoidal and logarithmic utilities, log-marginals, inverse solves |
//! | [`model`] | carriers, users, coverage, solver parameters, scenario JSON |
//! | [`enodeb`] | per-carrier bid/price iteration |
//! | [`ue`] | carrier ordering and offsets on the user side |
//! | [`protocol`] | the two-phase run and capacity sweeps |
//! | [`oracle`] | direct centralized solve used as a reference |
//! | [`cli`] | CSV output and the `ca-alloc` command |
//!
//! ```
//! use ca_alloc::{run, CarrierId, Scenario, SolverParams, UserId};
//!
//! let scenario = Scenario::section5().with_capacity(CarrierId(1), 50.0).unwrap();
//! let report = run(&scenario, &SolverParams::default()).unwrap();
//! assert_eq!(report.processing_order, vec![CarrierId(2), CarrierId(1)]);
//! assert!(report.aggregate(UserId(1)).unwrap() > report.aggregate(UserId(3)).unwrap());
//! ```

pub mod cli;
pub mod enodeb;
pub mod model;
pub mod oracle;
pub mod protocol;
pub mod ue;
pub mod utility;

pub use enodeb::{dual_ascent, offered_price, BidEntry, DualAscentResult, SolverError};
pub use model::{
    parse_scenario, serialize_scenario, CarrierId, CarrierSpec, Scenario, ScenarioError,
    SolverParams, UserId, UserSpec,
};
pub use oracle::{compare, solve_centralized, CentralizedInstance, Comparison, OracleError};
pub use protocol::{run, sweep, AllocationReport, ProtocolError};
pub use utility::{UtilityError, UtilityFunction};
