//! Second-price auction environment with log-normal competing prices, plus
//! request-stream generation and ground-truth scoring.
//!
//! Streams expose only the group index of each request; the user who
//! actually generated it is kept alongside purely so simulations can score
//! realized reach.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::optimization::BidInverse;
use crate::population::{PopulationModel, PropertyVector};

/// Second-price auction against a log-normal competing price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondPriceAuction {
    /// Location of the log competing price.
    pub log_mean: f64,
    /// Variance of the log competing price.
    pub log_var: f64,
}

/// Outcome of a single auction. `paid` is the competing price on a win and
/// zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionOutcome {
    pub won: bool,
    pub price: f64,
    pub paid: f64,
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

impl SecondPriceAuction {
    pub fn new(log_mean: f64, log_var: f64) -> Result<Self> {
        if !log_var.is_finite() || log_var < 0.0 || !log_mean.is_finite() {
            return Err(Error::Domain(format!(
                "log-normal parameters must be finite with non-negative variance, got mu={log_mean} sigma2={log_var}"
            )));
        }
        Ok(Self { log_mean, log_var })
    }

    /// Draw one competing price.
    pub fn sample_price(&self, rng: &mut impl Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.log_mean + self.log_var.sqrt() * z).exp()
    }

    /// Run one auction at `bid`. Ties lose.
    pub fn run_auction(&self, bid: f64, rng: &mut impl Rng) -> AuctionOutcome {
        let price = self.sample_price(rng);
        let won = bid > price;
        AuctionOutcome {
            won,
            price,
            paid: if won { price } else { 0.0 },
        }
    }

    /// Mean of the competing price, `exp(mu + sigma^2 / 2)`.
    pub fn mean_price(&self) -> f64 {
        (self.log_mean + self.log_var / 2.0).exp()
    }

    /// Win probability at `bid`: the log-normal cdf.
    pub fn win_probability(&self, bid: f64) -> f64 {
        if bid <= 0.0 {
            return 0.0;
        }
        if self.log_var == 0.0 {
            return if bid > self.log_mean.exp() { 1.0 } else { 0.0 };
        }
        normal_cdf((bid.ln() - self.log_mean) / self.log_var.sqrt())
    }

    /// Expected payment at `bid`: `E[price; price < bid]`.
    pub fn expected_payment(&self, bid: f64) -> f64 {
        if bid <= 0.0 {
            return 0.0;
        }
        if self.log_var == 0.0 {
            let price = self.log_mean.exp();
            return if bid > price { price } else { 0.0 };
        }
        let sigma = self.log_var.sqrt();
        self.mean_price() * normal_cdf((bid.ln() - self.log_mean - self.log_var) / sigma)
    }
}

impl BidInverse for SecondPriceAuction {
    /// Truthful identity: at bid b the marginal cost per marginal win is b.
    fn bid_for_marginal_cost(&self, cost: f64) -> f64 {
        cost
    }
}

/// How requests are generated from the population.
#[derive(Debug, Clone)]
pub enum Arrival<'a> {
    /// Hidden user drawn uniformly from targeted users (one of their groups
    /// uniformly when groups overlap).
    Uniform,
    /// Group drawn uniformly among groups with a targeted member, then the
    /// hidden member drawn from that group's visit probabilities. Requires
    /// non-overlapping groups.
    PropertyVectors(&'a [PropertyVector]),
}

/// A sequence of ad requests. Downstream consumers see only `groups`; the
/// generating users stay here for ground-truth scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestStream {
    groups: Vec<usize>,
    hidden: Vec<usize>,
    seed: u64,
}

impl RequestStream {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Group index of request `t`.
    pub fn group(&self, t: usize) -> usize {
        self.groups[t]
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    /// The user who actually generated request `t`. Simulation scoring
    /// only; an anonymous bidder never sees this.
    pub fn ground_truth_user(&self, t: usize) -> usize {
        self.hidden[t]
    }

    /// Deterministic stream from a pre-drawn user sequence on a partition,
    /// where each user maps to exactly one group.
    pub fn from_user_sequence(model: &PopulationModel, users: Vec<usize>) -> Result<Self> {
        if !model.is_partition() {
            return Err(Error::OverlappingGroups);
        }
        let groups = users
            .iter()
            .map(|&u| {
                model
                    .groups_of(u)
                    .first()
                    .copied()
                    .ok_or_else(|| Error::Config(format!("user {u} belongs to no group")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            groups,
            hidden: users,
            seed: 0,
        })
    }
}

/// Generate `total_requests` requests. Deterministic for a fixed seed.
pub fn generate_stream(
    model: &PopulationModel,
    total_requests: usize,
    arrival: Arrival<'_>,
    rng_seed: u64,
) -> Result<RequestStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut groups = Vec::with_capacity(total_requests);
    let mut hidden = Vec::with_capacity(total_requests);

    match arrival {
        Arrival::Uniform => {
            let pool: Vec<usize> = model
                .targeted_users()
                .filter(|&i| !model.groups_of(i).is_empty())
                .collect();
            if pool.is_empty() {
                return Err(Error::Config(
                    "cannot generate requests: no targeted user belongs to a group".into(),
                ));
            }
            for _ in 0..total_requests {
                let user = pool[rng.random_range(0..pool.len())];
                let gs = model.groups_of(user);
                let j = if gs.len() == 1 {
                    gs[0]
                } else {
                    gs[rng.random_range(0..gs.len())]
                };
                groups.push(j);
                hidden.push(user);
            }
        }
        Arrival::PropertyVectors(vectors) => {
            if !model.is_partition() {
                return Err(Error::OverlappingGroups);
            }
            if vectors.len() != model.num_groups() {
                return Err(Error::Config(format!(
                    "{} property vectors for {} groups",
                    vectors.len(),
                    model.num_groups()
                )));
            }
            let qualifying: Vec<usize> = (0..model.num_groups())
                .filter(|&j| !model.targeted_in(j).is_empty())
                .collect();
            if qualifying.is_empty() {
                return Err(Error::Config(
                    "cannot generate requests: no group contains a targeted user".into(),
                ));
            }
            for &j in &qualifying {
                if vectors[j].len() != model.group_size() {
                    return Err(Error::PropertyVector(format!(
                        "vector for group {j} has {} entries, group size is {}",
                        vectors[j].len(),
                        model.group_size()
                    )));
                }
            }
            for _ in 0..total_requests {
                let j = qualifying[rng.random_range(0..qualifying.len())];
                let members = model.members(j);
                let slot = sample_categorical(vectors[j].probs(), &mut rng);
                groups.push(j);
                hidden.push(members[slot]);
            }
        }
    }

    Ok(RequestStream {
        groups,
        hidden,
        seed: rng_seed,
    })
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &q) in probs.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Realized reach from the hidden request users: impressions counted at
/// most `cap` times per targeted user.
pub fn true_reach(
    model: &PopulationModel,
    stream: &RequestStream,
    wins: &[bool],
    cap: usize,
) -> Result<u64> {
    if cap == 0 {
        return Err(Error::InvalidCap);
    }
    if wins.len() != stream.len() {
        return Err(Error::Config(format!(
            "win flags cover {} requests, stream has {}",
            wins.len(),
            stream.len()
        )));
    }
    let mut tally = vec![0u64; model.num_users()];
    for (t, &won) in wins.iter().enumerate() {
        if won {
            tally[stream.ground_truth_user(t)] += 1;
        }
    }
    let c = cap as u64;
    Ok(model.targeted_users().map(|i| tally[i].min(c)).sum())
}
