//! Two-phase allocation across carriers.
//!
//! 1. **Price discovery.** Every carrier runs [`offered_price`] over all the users
//!    it covers, as if it were their primary carrier.
//! 2. **Sequential allocation.** Each user ranks its in-range carriers by offered
//!    price and flags the cheapest one that has not served it yet. A carrier
//!    allocates once *every* user it covers is flagging it. It runs
//!    [`dual_ascent`] with each user's offset (the rate already granted by
//!    cheaper carriers), and every user then moves its flag to the next carrier.
//!
//! Because all users rank carriers by the same `(price, id)` key, the cheapest
//! pending carrier is always fully flagged and the process finishes after exactly
//! one activation per carrier.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::debug;
use rayon::prelude::*;
use thiserror::Error;

use crate::enodeb::{dual_ascent, offered_price, BidEntry, DualAscentResult, SolverError};
use crate::model::{CarrierId, ParamsError, Scenario, ScenarioError, SolverParams, UserId};
use crate::ue::{Flag, Grant, UeError, UeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Offered,
    Allocation,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Offered => "offered",
            Phase::Allocation => "allocation",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("solver parameters: {0}")]
    Params(#[from] ParamsError),
    #[error("carrier {carrier} ({phase} phase): {source}")]
    Solver {
        carrier: CarrierId,
        phase: Phase,
        #[source]
        source: SolverError,
    },
    #[error("carrier {carrier} ({phase} phase) did not converge within {iterations} iterations")]
    NotConverged {
        carrier: CarrierId,
        phase: Phase,
        iterations: usize,
    },
    #[error("allocation stalled after {activations} activation(s); flags: {flags}")]
    Deadlock { activations: usize, flags: String },
    #[error(transparent)]
    Ue(#[from] UeError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("at capacity {capacity}: {source}")]
    AtCapacity {
        capacity: f64,
        #[source]
        source: Box<ProtocolError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationReport {
    pub capacities: BTreeMap<CarrierId, f64>,
    /// Price-discovery result per carrier.
    pub offered: BTreeMap<CarrierId, DualAscentResult>,
    /// Allocation result per carrier.
    pub allocation: BTreeMap<CarrierId, DualAscentResult>,
    /// Carrier ranking of every user, cheapest first.
    pub orders: BTreeMap<UserId, Vec<CarrierId>>,
    /// Rates granted to every user, in the order received.
    pub grants: BTreeMap<UserId, Vec<Grant>>,
    /// Carriers in activation order.
    pub processing_order: Vec<CarrierId>,
}

impl AllocationReport {
    pub fn offered_price(&self, carrier: CarrierId) -> Option<f64> {
        self.offered.get(&carrier).map(|r| r.shadow_price)
    }

    pub fn allocation_price(&self, carrier: CarrierId) -> Option<f64> {
        self.allocation.get(&carrier).map(|r| r.shadow_price)
    }

    /// Rate from `carrier` to `user`; zero when the user is out of range.
    pub fn rate(&self, carrier: CarrierId, user: UserId) -> f64 {
        self.grant(carrier, user).map_or(0.0, |g| g.rate)
    }

    pub fn grant(&self, carrier: CarrierId, user: UserId) -> Option<&Grant> {
        self.grants.get(&user)?.iter().find(|g| g.carrier == carrier)
    }

    pub fn aggregate(&self, user: UserId) -> Option<f64> {
        self.grants.get(&user).map(|gs| gs.iter().fold(0.0, |acc, g| acc + g.rate))
    }

    pub fn aggregates(&self) -> BTreeMap<UserId, f64> {
        self.grants
            .keys()
            .map(|&u| (u, self.aggregate(u).unwrap_or(0.0)))
            .collect()
    }

    pub fn primary(&self, user: UserId) -> Option<CarrierId> {
        self.orders.get(&user).and_then(|o| o.first().copied())
    }

    pub fn activations(&self) -> usize {
        self.processing_order.len()
    }

    /// Total rate handed out by one carrier.
    pub fn carrier_total(&self, carrier: CarrierId) -> f64 {
        self.allocation
            .get(&carrier)
            .map_or(0.0, DualAscentResult::total_rate)
    }

    /// Worst iteration count over both phases and all carriers.
    pub fn max_iterations(&self) -> usize {
        self.offered
            .values()
            .chain(self.allocation.values())
            .map(|r| r.iterations)
            .max()
            .unwrap_or(0)
    }
}

fn checked(
    carrier: CarrierId,
    phase: Phase,
    result: Result<DualAscentResult, SolverError>,
) -> Result<DualAscentResult, ProtocolError> {
    let result = result.map_err(|source| ProtocolError::Solver {
        carrier,
        phase,
        source,
    })?;
    if !result.converged {
        return Err(ProtocolError::NotConverged {
            carrier,
            phase,
            iterations: result.iterations,
        });
    }
    Ok(result)
}

fn describe_flags(ues: &[UeState]) -> String {
    ues.iter()
        .map(|ue| match ue.next_flag() {
            Flag::Carrier(c) => format!("user {} -> carrier {}", ue.user(), c),
            Flag::Done => format!("user {} -> done", ue.user()),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn run(scenario: &Scenario, params: &SolverParams) -> Result<AllocationReport, ProtocolError> {
    params.validate()?;
    let carriers: Vec<CarrierId> = scenario.carrier_ids().collect();
    let capacities: BTreeMap<CarrierId, f64> = scenario
        .carriers()
        .iter()
        .map(|c| (c.id, c.capacity))
        .collect();

    // Phase 1: independent per carrier.
    let offered: BTreeMap<CarrierId, DualAscentResult> = carriers
        .par_iter()
        .map(|&carrier| {
            let users: Vec<_> = scenario
                .covered_users(carrier)
                .iter()
                .map(|&u| (u, scenario.user(u).expect("coverage is consistent").utility))
                .collect();
            let result = offered_price(&users, capacities[&carrier], params);
            checked(carrier, Phase::Offered, result).map(|r| (carrier, r))
        })
        .collect::<Result<_, _>>()?;
    for (c, r) in &offered {
        debug!("carrier {c}: offered price {:.6e} after {} iterations", r.shadow_price, r.iterations);
    }

    let mut ues = scenario
        .users()
        .iter()
        .map(|u| {
            let prices = u
                .coverage
                .iter()
                .map(|c| (*c, offered[c].shadow_price))
                .collect();
            UeState::new(u.id, &prices)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ues.sort_by_key(UeState::user);
    let index: BTreeMap<UserId, usize> = ues.iter().enumerate().map(|(i, ue)| (ue.user(), i)).collect();

    // Phase 2: one activation at a time, cheapest ready carrier first. The
    // cheapest pending carrier is always ready, so this visits carriers in
    // offered-price order.
    let mut pending: BTreeSet<CarrierId> = carriers.iter().copied().collect();
    let mut allocation = BTreeMap::new();
    let mut processing_order = Vec::with_capacity(carriers.len());
    while !pending.is_empty() {
        let ready = pending
            .iter()
            .copied()
            .filter(|&c| {
                scenario
                    .covered_users(c)
                    .iter()
                    .all(|u| ues[index[u]].next_flag() == Flag::Carrier(c))
            })
            .min_by(|a, b| {
                offered[a]
                    .shadow_price
                    .total_cmp(&offered[b].shadow_price)
                    .then(a.cmp(b))
            });
        let Some(carrier) = ready else {
            return Err(ProtocolError::Deadlock {
                activations: processing_order.len(),
                flags: describe_flags(&ues),
            });
        };
        let entries: Vec<BidEntry> = scenario
            .covered_users(carrier)
            .iter()
            .map(|&u| {
                let utility = scenario.user(u).expect("coverage is consistent").utility;
                BidEntry::new(u, utility, ues[index[&u]].offset())
            })
            .collect();
        let result = dual_ascent(&entries, capacities[&carrier], params);
        let result = checked(carrier, Phase::Allocation, result)?;
        debug!(
            "activation {}: carrier {carrier} allocated at price {:.6e} after {} iterations",
            processing_order.len() + 1,
            result.shadow_price,
            result.iterations
        );
        for (&u, &rate) in &result.rates {
            ues[index[&u]].record_rate(carrier, rate, result.shadow_price)?;
        }
        pending.remove(&carrier);
        processing_order.push(carrier);
        allocation.insert(carrier, result);
    }
    if let Some(ue) = ues.iter().find(|ue| !ue.is_done()) {
        return Err(ProtocolError::Deadlock {
            activations: processing_order.len(),
            flags: describe_flags(std::slice::from_ref(ue)),
        });
    }

    Ok(AllocationReport {
        capacities,
        offered,
        allocation,
        orders: ues.iter().map(|ue| (ue.user(), ue.order().to_vec())).collect(),
        grants: ues.iter().map(|ue| (ue.user(), ue.grants().to_vec())).collect(),
        processing_order,
    })
}

/// [`run`] once per capacity value of `carrier`, keeping each point's outcome.
pub fn sweep_each(
    scenario: &Scenario,
    carrier: CarrierId,
    capacities: &[f64],
    params: &SolverParams,
) -> Vec<(f64, Result<AllocationReport, ProtocolError>)> {
    capacities
        .par_iter()
        .map(|&capacity| {
            let outcome = scenario
                .with_capacity(carrier, capacity)
                .map_err(ProtocolError::from)
                .and_then(|s| run(&s, params))
                .map_err(|e| ProtocolError::AtCapacity {
                    capacity,
                    source: Box::new(e),
                });
            (capacity, outcome)
        })
        .collect()
}

/// Like [`sweep_each`] but fails on the first point that fails.
pub fn sweep(
    scenario: &Scenario,
    carrier: CarrierId,
    capacities: &[f64],
    params: &SolverParams,
) -> Result<Vec<(f64, AllocationReport)>, ProtocolError> {
    sweep_each(scenario, carrier, capacities, params)
        .into_iter()
        .map(|(c, r)| r.map(|r| (c, r)))
        .collect()
}
