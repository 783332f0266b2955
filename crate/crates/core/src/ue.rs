//! UE-side bookkeeping: carrier ordering, flags and rate offsets.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{CarrierId, UserId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UeError {
    #[error("no in-range carriers to order")]
    NoCarriers,
    #[error("carrier {carrier}: offered price must be finite, got {price}")]
    BadPrice { carrier: CarrierId, price: f64 },
    #[error("user {user}: got a rate from carrier {got} while flagging {expected:?}")]
    OutOfOrder {
        user: UserId,
        expected: Option<CarrierId>,
        got: CarrierId,
    },
    #[error("user {user}: rate from carrier {carrier} must be finite and >= 0, got {rate}")]
    BadRate {
        user: UserId,
        carrier: CarrierId,
        rate: f64,
    },
}

/// Carrier ids by ascending offered price; ties go to the smaller id.
pub fn order_carriers(prices: &BTreeMap<CarrierId, f64>) -> Result<Vec<CarrierId>, UeError> {
    if prices.is_empty() {
        return Err(UeError::NoCarriers);
    }
    if let Some((&carrier, &price)) = prices.iter().find(|(_, p)| !p.is_finite()) {
        return Err(UeError::BadPrice { carrier, price });
    }
    let mut ids: Vec<CarrierId> = prices.keys().copied().collect();
    // Keys come out of the map ascending, so a stable sort keeps the id tie-break.
    ids.sort_by(|a, b| prices[a].total_cmp(&prices[b]));
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    /// The carrier this UE currently assigns 1 to; every other in-range carrier
    /// gets 0.
    Carrier(CarrierId),
    Done,
}

/// A rate received from one carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grant {
    pub carrier: CarrierId,
    pub rate: f64,
    /// Allocation shadow price of the granting carrier.
    pub price: f64,
    /// Offset the UE reported when the carrier allocated.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeState {
    user: UserId,
    order: Vec<CarrierId>,
    grants: Vec<Grant>,
}

impl UeState {
    pub fn new(user: UserId, prices: &BTreeMap<CarrierId, f64>) -> Result<Self, UeError> {
        Ok(Self {
            user,
            order: order_carriers(prices)?,
            grants: Vec::new(),
        })
    }

    pub fn user(&self) -> UserId {
        self.user
    }

    /// In-range carriers, cheapest first. The first one is the primary carrier.
    pub fn order(&self) -> &[CarrierId] {
        &self.order
    }

    pub fn primary(&self) -> CarrierId {
        self.order[0]
    }

    /// 1-based position of the next carrier to flag; `K + 1` once done.
    pub fn cursor(&self) -> usize {
        self.grants.len() + 1
    }

    pub fn next_flag(&self) -> Flag {
        self.order
            .get(self.grants.len())
            .map_or(Flag::Done, |&c| Flag::Carrier(c))
    }

    pub fn is_done(&self) -> bool {
        self.next_flag() == Flag::Done
    }

    /// Rate already held from cheaper carriers; what the flagged carrier sees as
    /// this user's offset.
    pub fn offset(&self) -> f64 {
        self.grants.iter().fold(0.0, |acc, g| acc + g.rate)
    }

    pub fn grants(&self) -> &[Grant] {
        &self.grants
    }

    pub fn rate_from(&self, carrier: CarrierId) -> Option<f64> {
        self.grants
            .iter()
            .find(|g| g.carrier == carrier)
            .map(|g| g.rate)
    }

    /// Take the rate granted by the currently flagged carrier and move on.
    pub fn record_rate(&mut self, carrier: CarrierId, rate: f64, price: f64) -> Result<(), UeError> {
        let expected = match self.next_flag() {
            Flag::Carrier(c) => c,
            Flag::Done => {
                return Err(UeError::OutOfOrder {
                    user: self.user,
                    expected: None,
                    got: carrier,
                })
            }
        };
        if carrier != expected {
            return Err(UeError::OutOfOrder {
                user: self.user,
                expected: Some(expected),
                got: carrier,
            });
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(UeError::BadRate {
                user: self.user,
                carrier,
                rate,
            });
        }
        let offset = self.offset();
        self.grants.push(Grant {
            carrier,
            rate,
            price,
            offset,
        });
        Ok(())
    }

    /// Sum of all granted rates, available once every in-range carrier allocated.
    pub fn aggregate(&self) -> Option<f64> {
        self.is_done().then(|| self.offset())
    }
}
