//! Scenario data model: carriers, users, coverage and solver parameters.
//!
//! Scenarios are usually read from JSON:
//!
//! ```json
//! {
//!   "carriers": [{ "id": 1, "capacity": 100 }],
//!   "users": [
//!     { "id": 1, "utility": { "type": "sigmoidal", "a": 5, "b": 10 }, "coverage": [1] },
//!     { "id": 2, "utility": { "type": "logarithmic", "k": 15, "r_max": 100 }, "coverage": [1] }
//!   ]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::utility::{Bisection, UtilityError, UtilityFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CarrierId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl fmt::Display for CarrierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario has no carriers")]
    NoCarriers,
    #[error("scenario has no users")]
    NoUsers,
    #[error("carriers[{index}].id must be >= 1")]
    ZeroCarrierId { index: usize },
    #[error("users[{index}].id must be >= 1")]
    ZeroUserId { index: usize },
    #[error("duplicate carrier id {0}")]
    DuplicateCarrier(CarrierId),
    #[error("duplicate user id {0}")]
    DuplicateUser(UserId),
    #[error("carrier {carrier}: capacity must be finite and > 0, got {capacity}")]
    Capacity { carrier: CarrierId, capacity: f64 },
    #[error("user {user}: utility: {source}")]
    Utility {
        user: UserId,
        #[source]
        source: UtilityError,
    },
    #[error("user {0}: coverage is empty")]
    EmptyCoverage(UserId),
    #[error("user {user}: coverage references unknown carrier id {carrier}")]
    UnknownCarrier { user: UserId, carrier: CarrierId },
    #[error("user {user}: coverage lists carrier {carrier} more than once")]
    RepeatedCoverage { user: UserId, carrier: CarrierId },
    #[error("carrier {0} covers no users")]
    IdleCarrier(CarrierId),
    #[error("no carrier with id {0}")]
    NoSuchCarrier(CarrierId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierSpec {
    pub id: CarrierId,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub id: UserId,
    pub utility: UtilityFunction,
    /// In-range carriers, in the order given by the document.
    pub coverage: Vec<CarrierId>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    carriers: Vec<CarrierSpec>,
    users: Vec<UserSpec>,
}

/// A validated scenario. The per-carrier coverage sets are derived from the
/// users' in-range lists and kept sorted by user id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    carriers: Vec<CarrierSpec>,
    users: Vec<UserSpec>,
    #[serde(skip)]
    coverage: BTreeMap<CarrierId, Vec<UserId>>,
}

impl Scenario {
    pub fn new(carriers: Vec<CarrierSpec>, users: Vec<UserSpec>) -> Result<Self, ScenarioError> {
        if carriers.is_empty() {
            return Err(ScenarioError::NoCarriers);
        }
        if users.is_empty() {
            return Err(ScenarioError::NoUsers);
        }
        let mut coverage: BTreeMap<CarrierId, Vec<UserId>> = BTreeMap::new();
        for (index, c) in carriers.iter().enumerate() {
            if c.id.0 == 0 {
                return Err(ScenarioError::ZeroCarrierId { index });
            }
            if !(c.capacity.is_finite() && c.capacity > 0.0) {
                return Err(ScenarioError::Capacity {
                    carrier: c.id,
                    capacity: c.capacity,
                });
            }
            if coverage.insert(c.id, Vec::new()).is_some() {
                return Err(ScenarioError::DuplicateCarrier(c.id));
            }
        }
        let mut seen_users = BTreeSet::new();
        for (index, u) in users.iter().enumerate() {
            if u.id.0 == 0 {
                return Err(ScenarioError::ZeroUserId { index });
            }
            if !seen_users.insert(u.id) {
                return Err(ScenarioError::DuplicateUser(u.id));
            }
            u.utility
                .validate()
                .map_err(|source| ScenarioError::Utility { user: u.id, source })?;
            if u.coverage.is_empty() {
                return Err(ScenarioError::EmptyCoverage(u.id));
            }
            let mut in_range = BTreeSet::new();
            for &carrier in &u.coverage {
                if !in_range.insert(carrier) {
                    return Err(ScenarioError::RepeatedCoverage { user: u.id, carrier });
                }
                coverage
                    .get_mut(&carrier)
                    .ok_or(ScenarioError::UnknownCarrier { user: u.id, carrier })?
                    .push(u.id);
            }
        }
        for (carrier, members) in coverage.iter_mut() {
            if members.is_empty() {
                return Err(ScenarioError::IdleCarrier(*carrier));
            }
            members.sort_unstable();
        }
        Ok(Self {
            carriers,
            users,
            coverage,
        })
    }

    pub fn carriers(&self) -> &[CarrierSpec] {
        &self.carriers
    }

    pub fn users(&self) -> &[UserSpec] {
        &self.users
    }

    pub fn carrier(&self, id: CarrierId) -> Option<&CarrierSpec> {
        self.carriers.iter().find(|c| c.id == id)
    }

    pub fn user(&self, id: UserId) -> Option<&UserSpec> {
        self.users.iter().find(|u| u.id == id)
    }

    /// Carrier ids in ascending order.
    pub fn carrier_ids(&self) -> impl Iterator<Item = CarrierId> + '_ {
        self.coverage.keys().copied()
    }

    /// Users under a carrier's coverage, ascending by id.
    pub fn covered_users(&self, carrier: CarrierId) -> &[UserId] {
        self.coverage.get(&carrier).map_or(&[], Vec::as_slice)
    }

    pub fn total_capacity(&self) -> f64 {
        self.carriers.iter().map(|c| c.capacity).sum()
    }

    /// Copy of the scenario with one carrier's capacity replaced.
    pub fn with_capacity(&self, carrier: CarrierId, capacity: f64) -> Result<Self, ScenarioError> {
        let mut carriers = self.carriers.clone();
        let spec = carriers
            .iter_mut()
            .find(|c| c.id == carrier)
            .ok_or(ScenarioError::NoSuchCarrier(carrier))?;
        spec.capacity = capacity;
        Self::new(carriers, self.users.clone())
    }

    /// The two-carrier, nine-user reference setup. Both carriers start at capacity
    /// 100; use [`with_capacity`](Self::with_capacity) to vary carrier 1.
    ///
    /// | users      | coverage | utilities                                  |
    /// |------------|----------|--------------------------------------------|
    /// | UE1..UE3   | {1}      | Sig(5,10), Sig(3,20), Log(15)              |
    /// | UE4..UE6   | {1, 2}   | Log(3), Log(0.5), Sig(1,30)                |
    /// | UE7..UE9   | {2}      | Sig(5,10), Sig(3,20), Log(15)              |
    ///
    /// All logarithmic utilities use `r_max = 100`.
    pub fn section5() -> Self {
        let sig = |a, b| UtilityFunction::Sigmoidal { a, b };
        let log = |k| UtilityFunction::Logarithmic { k, r_max: 100.0 };
        let table = [
            (1, sig(5.0, 10.0), &[1][..]),
            (2, sig(3.0, 20.0), &[1]),
            (3, log(15.0), &[1]),
            (4, log(3.0), &[1, 2]),
            (5, log(0.5), &[1, 2]),
            (6, sig(1.0, 30.0), &[1, 2]),
            (7, sig(5.0, 10.0), &[2]),
            (8, sig(3.0, 20.0), &[2]),
            (9, log(15.0), &[2]),
        ];
        let users = table
            .iter()
            .map(|(id, utility, cov)| UserSpec {
                id: UserId(*id),
                utility: *utility,
                coverage: cov.iter().map(|&c| CarrierId(c)).collect(),
            })
            .collect();
        let carriers = vec![
            CarrierSpec {
                id: CarrierId(1),
                capacity: 100.0,
            },
            CarrierSpec {
                id: CarrierId(2),
                capacity: 100.0,
            },
        ];
        Self::new(carriers, users).expect("built-in preset is valid")
    }
}

pub fn parse_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(document)?;
    Scenario::new(doc.carriers, doc.users)
}

pub fn serialize_scenario(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario is always serializable")
}

/// Upper bound on the rate any single inner solve may return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateCapPolicy {
    /// `max(R, largest r_max among the logarithmic users in the solve)`.
    CapacityOrFullRate,
    Fixed(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("{name} must be finite and > 0, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("max_outer_iters must be >= 1")]
    NoIterations,
    #[error("delta ({delta}) must exceed the rate tolerance ({tol_r})")]
    DeltaBelowRateTol { delta: f64, tol_r: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Convergence threshold on the max-norm change of the bid vector.
    pub delta: f64,
    /// Amplitude of the fluctuation decay `l1 * exp(-n / l2)`.
    pub l1: f64,
    /// Time constant of the fluctuation decay.
    pub l2: f64,
    pub max_outer_iters: usize,
    pub tol_r: f64,
    pub rate_floor: f64,
    pub rate_cap: RateCapPolicy,
    /// How often the decay clock may restart when the loop stalls mid-drift; 0
    /// disables restarts. See
    /// [`crate::enodeb::dual_ascent`].
    pub max_decay_restarts: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            l1: 5.0,
            l2: 10.0,
            max_outer_iters: 10_000,
            tol_r: crate::utility::RATE_TOL,
            rate_floor: crate::utility::RATE_FLOOR,
            rate_cap: RateCapPolicy::CapacityOrFullRate,
            max_decay_restarts: 8,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let named = [
            ("delta", self.delta),
            ("l1", self.l1),
            ("l2", self.l2),
            ("tol_r", self.tol_r),
            ("rate_floor", self.rate_floor),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::NotPositive { name, value });
            }
        }
        if let RateCapPolicy::Fixed(value) = self.rate_cap {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::NotPositive {
                    name: "rate_cap",
                    value,
                });
            }
        }
        if self.max_outer_iters == 0 {
            return Err(ParamsError::NoIterations);
        }
        if self.delta <= self.tol_r {
            return Err(ParamsError::DeltaBelowRateTol {
                delta: self.delta,
                tol_r: self.tol_r,
            });
        }
        Ok(())
    }

    pub fn bisection(&self) -> Bisection {
        Bisection {
            floor: self.rate_floor,
            tol: self.tol_r,
            ..Bisection::default()
        }
    }
}
