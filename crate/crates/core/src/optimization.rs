//! Probabilistic bid discounting: the streaming reach probability p_t, the
//! optimal-bid rule, and the online dual update that paces the budget.
//!
//! p_t is the probability that the current request comes from a targeted
//! user who is still under the frequency cap. The bid scales with p_t, so
//! hard frequency capping falls out as the degenerate case where groups
//! have one member and p_t is binary.

use serde::Serialize;

use crate::binomial::BinomialTable;
use crate::error::{Error, Result};
use crate::population::{PopulationModel, PropertyVector};

/// Maps the target marginal cost per win onto a bid. Second-price auctions
/// make this the identity: paying the second price means the marginal cost
/// per marginal win at bid b is exactly b.
pub trait BidInverse {
    fn bid_for_marginal_cost(&self, cost: f64) -> f64;
}

/// Optimal bid for a request valued at `reach_probability` under dual
/// variable `lambda`, clamped into the allowed bid range.
pub fn optimal_bid<A: BidInverse + ?Sized>(
    reach_probability: f64,
    lambda: f64,
    auction: &A,
    bid_floor: f64,
    bid_cap: f64,
) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let raw = auction.bid_for_marginal_cost(reach_probability / lambda);
    Ok(raw.clamp(bid_floor, bid_cap))
}

/// Streaming state behind p_t: per-user exposure trials plus the shared
/// pmf table. Queries are read-only; only wins mutate the state.
///
/// A request from group j is valued at
/// `(1/k) * sum over targeted members of F(cap - 1; trials_i, 1/k)`,
/// costing O(k cap). On a partition all members of a group share one trial
/// count and the query collapses to O(cap).
#[derive(Debug, Clone)]
pub struct ReachProbabilityState {
    cap: usize,
    table: BinomialTable,
    exposure: Exposure,
}

#[derive(Debug, Clone)]
enum Exposure {
    PerUser(Vec<u64>),
    PerGroup(Vec<u64>),
}

impl ReachProbabilityState {
    pub fn new(model: &PopulationModel, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::InvalidCap);
        }
        let table = BinomialTable::for_group_size(model.group_size(), cap)?;
        let exposure = if model.is_partition() {
            Exposure::PerGroup(vec![0; model.num_groups()])
        } else {
            Exposure::PerUser(vec![0; model.num_users()])
        };
        Ok(Self {
            cap,
            table,
            exposure,
        })
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Probability that the next request from `group` comes from a targeted
    /// user still under the cap, given wins recorded so far.
    pub fn reach_probability(&self, model: &PopulationModel, group: usize) -> Result<f64> {
        model.check_group(group)?;
        let targeted = model.targeted_in(group);
        if targeted.is_empty() {
            return Ok(0.0);
        }
        let k = model.group_size() as f64;
        let x = self.cap - 1;
        let p = match &self.exposure {
            Exposure::PerGroup(wins) => {
                targeted.len() as f64 / k * self.table.cdf(x, wins[group])?
            }
            Exposure::PerUser(trials) => {
                let mut sum = 0.0;
                for &i in targeted {
                    sum += self.table.cdf(x, trials[i])?;
                }
                sum / k
            }
        };
        Ok(p.clamp(0.0, 1.0))
    }

    /// Fold a won request from `group` into the exposure counts.
    pub fn record_win(&mut self, model: &PopulationModel, group: usize) -> Result<()> {
        model.check_group(group)?;
        match &mut self.exposure {
            Exposure::PerGroup(wins) => {
                wins[group] += 1;
                self.table.ensure_rows(wins[group])?;
            }
            Exposure::PerUser(trials) => {
                for &i in model.targeted_in(group) {
                    trials[i] += 1;
                    self.table.ensure_rows(trials[i])?;
                }
            }
        }
        Ok(())
    }

    /// Exposure trials accumulated for `user`.
    pub fn exposure_trials(&self, model: &PopulationModel, user: usize) -> u64 {
        match &self.exposure {
            Exposure::PerUser(trials) => trials[user],
            Exposure::PerGroup(wins) => model.groups_of(user).iter().map(|&j| wins[j]).sum(),
        }
    }

}

/// p_t for one group under its visit-probability vector: active members
/// both generate the request and absorb past wins, so each member
/// contributes `q_i * F(cap - 1; wins, q_i)`.
pub fn reach_probability_nonuniform(
    prop: &PropertyVector,
    wins: u64,
    cap: usize,
) -> Result<f64> {
    if cap == 0 {
        return Err(Error::InvalidCap);
    }
    let x = (cap - 1) as u64;
    let mut p = 0.0;
    for &q in prop.probs() {
        p += q * crate::binomial::binom_cdf(x, wins, q)?;
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Budget-paced bidder: dual variable, spend ledger, and bid bounds.
///
/// The dual variable moves by `-eps * (1 - spend_t / (B/T))` after every
/// request, so sustained underspending lowers lambda (raising bids) and
/// overspending raises it. Bidding stops once the next payment would not
/// fit in the remaining budget.
#[derive(Debug, Clone)]
pub struct BidderState {
    lambda: f64,
    budget: f64,
    spent: f64,
    learning_rate: f64,
    bid_floor: f64,
    bid_cap: f64,
    per_request_budget: f64,
    exhausted: bool,
}

/// Keeps `p / lambda` finite; the bid cap already bounds the effect.
const LAMBDA_FLOOR: f64 = 1e-6;

impl BidderState {
    pub fn new(
        budget: f64,
        total_requests: u64,
        learning_rate: f64,
        initial_lambda: f64,
        bid_floor: f64,
        bid_cap: f64,
    ) -> Result<Self> {
        if !budget.is_finite() || budget <= 0.0 {
            return Err(Error::Domain(format!("budget must be positive, got {budget}")));
        }
        if total_requests == 0 {
            return Err(Error::Domain("total requests must be at least 1".into()));
        }
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(Error::Domain(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !initial_lambda.is_finite() || initial_lambda <= 0.0 {
            return Err(Error::Domain(format!(
                "initial lambda must be positive, got {initial_lambda}"
            )));
        }
        if !(bid_floor > 0.0 && bid_floor <= bid_cap) {
            return Err(Error::Domain(format!(
                "bid bounds must satisfy 0 < floor <= cap, got [{bid_floor}, {bid_cap}]"
            )));
        }
        Ok(Self {
            lambda: initial_lambda,
            budget,
            spent: 0.0,
            learning_rate,
            bid_floor,
            bid_cap,
            per_request_budget: budget / total_requests as f64,
            exhausted: false,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn remaining(&self) -> f64 {
        self.budget - self.spent
    }

    pub fn is_active(&self) -> bool {
        !self.exhausted
    }

    /// Bid for a request valued at `reach_probability`.
    pub fn bid<A: BidInverse + ?Sized>(&self, reach_probability: f64, auction: &A) -> Result<f64> {
        optimal_bid(
            reach_probability,
            self.lambda,
            auction,
            self.bid_floor,
            self.bid_cap,
        )
    }

    /// Settle a won auction. Returns false (and stops all future bidding)
    /// when the payment does not fit in the remaining budget.
    pub fn try_pay(&mut self, price: f64) -> bool {
        if self.exhausted || self.spent + price > self.budget {
            self.exhausted = true;
            return false;
        }
        self.spent += price;
        true
    }

    /// Online dual step from this request's spend.
    pub fn dual_update(&mut self, spend: f64) {
        let ratio = spend / self.per_request_budget;
        self.lambda = (self.lambda - self.learning_rate * (1.0 - ratio)).max(LAMBDA_FLOOR);
    }
}

/// One request of a simulated campaign, as exported to trace files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: usize,
    pub group: usize,
    pub p_t: f64,
    pub lambda: f64,
    pub bid: f64,
    pub won: bool,
    pub price_paid: f64,
    pub cumulative_spend: f64,
    pub cumulative_expected_reach: f64,
}
