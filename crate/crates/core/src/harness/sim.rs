//! The request-by-request campaign loop and the pluggable reach valuers
//! used by the comparison studies.

use crate::auction::{RequestStream, SecondPriceAuction};
use crate::error::Result;
use crate::measurement::{
    expected_reach_nonuniform, expected_unique_reach, unique_reach_variance, ImpressionCounts,
    ReachEstimator,
};
use crate::optimization::{BidderState, ReachProbabilityState, TraceRecord};
use crate::population::{PopulationModel, PropertyVector};

/// Computes the per-request value p_t, folds wins into its own state, and
/// reports the reach the strategy believes it achieved.
pub trait ReachValuer {
    fn reach_probability(&mut self, t: usize, group: usize) -> Result<f64>;
    fn record_win(&mut self, t: usize, group: usize) -> Result<()>;
    fn measured_reach(&self) -> f64;
}

/// Group-level measurement and discounting assuming uniform visits.
pub struct UniformValuer<'a> {
    model: &'a PopulationModel,
    prob: ReachProbabilityState,
    estimator: ReachEstimator,
    cap: usize,
}

impl<'a> UniformValuer<'a> {
    pub fn new(model: &'a PopulationModel, cap: usize) -> Result<Self> {
        Ok(Self {
            model,
            prob: ReachProbabilityState::new(model, cap)?,
            estimator: ReachEstimator::new(model, cap)?,
            cap,
        })
    }
}

impl ReachValuer for UniformValuer<'_> {
    fn reach_probability(&mut self, _t: usize, group: usize) -> Result<f64> {
        self.prob.reach_probability(self.model, group)
    }

    fn record_win(&mut self, _t: usize, group: usize) -> Result<()> {
        self.prob.record_win(self.model, group)?;
        self.estimator.stream_win(self.model, group)?;
        Ok(())
    }

    fn measured_reach(&self) -> f64 {
        self.estimator.reach_at(self.cap).unwrap_or(0.0)
    }
}

/// Measurement and discounting from per-group visit-probability vectors.
pub struct NonuniformValuer<'a> {
    vectors: &'a [PropertyVector],
    cap: usize,
    wins: Vec<u64>,
    group_reach: Vec<f64>,
    total_reach: f64,
}

impl<'a> NonuniformValuer<'a> {
    pub fn new(model: &PopulationModel, vectors: &'a [PropertyVector], cap: usize) -> Result<Self> {
        if !model.is_partition() {
            return Err(crate::error::Error::OverlappingGroups);
        }
        Ok(Self {
            vectors,
            cap,
            wins: vec![0; model.num_groups()],
            group_reach: vec![0.0; model.num_groups()],
            total_reach: 0.0,
        })
    }
}

impl ReachValuer for NonuniformValuer<'_> {
    fn reach_probability(&mut self, _t: usize, group: usize) -> Result<f64> {
        crate::optimization::reach_probability_nonuniform(
            &self.vectors[group],
            self.wins[group],
            self.cap,
        )
    }

    fn record_win(&mut self, _t: usize, group: usize) -> Result<()> {
        self.wins[group] += 1;
        let updated = expected_reach_nonuniform(&self.vectors[group], self.wins[group], self.cap)?;
        self.total_reach += updated - self.group_reach[group];
        self.group_reach[group] = updated;
        Ok(())
    }

    fn measured_reach(&self) -> f64 {
        self.total_reach
    }
}

/// Every won impression counts; no discounting.
#[derive(Default)]
pub struct ImpressionCountValuer {
    wins: u64,
}

impl ReachValuer for ImpressionCountValuer {
    fn reach_probability(&mut self, _t: usize, _group: usize) -> Result<f64> {
        Ok(1.0)
    }

    fn record_win(&mut self, _t: usize, _group: usize) -> Result<()> {
        self.wins += 1;
        Ok(())
    }

    fn measured_reach(&self) -> f64 {
        self.wins as f64
    }
}

/// Distinct served groups count; a served group is worth nothing more.
pub struct DistinctGroupValuer {
    served: Vec<bool>,
    count: u64,
}

impl DistinctGroupValuer {
    pub fn new(model: &PopulationModel) -> Self {
        Self {
            served: vec![false; model.num_groups()],
            count: 0,
        }
    }
}

impl ReachValuer for DistinctGroupValuer {
    fn reach_probability(&mut self, _t: usize, group: usize) -> Result<f64> {
        Ok(if self.served[group] { 0.0 } else { 1.0 })
    }

    fn record_win(&mut self, _t: usize, group: usize) -> Result<()> {
        if !self.served[group] {
            self.served[group] = true;
            self.count += 1;
        }
        Ok(())
    }

    fn measured_reach(&self) -> f64 {
        self.count as f64
    }
}

/// Baseline with no privacy: sees the true request user and enforces the
/// cap exactly, so p is binary and measured reach is realized reach.
pub struct ExactCapValuer<'a> {
    model: &'a PopulationModel,
    stream: &'a RequestStream,
    cap: u64,
    tally: Vec<u64>,
    reach: u64,
}

impl<'a> ExactCapValuer<'a> {
    pub fn new(model: &'a PopulationModel, stream: &'a RequestStream, cap: usize) -> Self {
        Self {
            model,
            stream,
            cap: cap as u64,
            tally: vec![0; model.num_users()],
            reach: 0,
        }
    }
}

impl ReachValuer for ExactCapValuer<'_> {
    fn reach_probability(&mut self, t: usize, _group: usize) -> Result<f64> {
        let user = self.stream.ground_truth_user(t);
        let fresh = self.model.is_targeted(user) && self.tally[user] < self.cap;
        Ok(if fresh { 1.0 } else { 0.0 })
    }

    fn record_win(&mut self, t: usize, _group: usize) -> Result<()> {
        let user = self.stream.ground_truth_user(t);
        if self.model.is_targeted(user) && self.tally[user] < self.cap {
            self.reach += 1;
        }
        self.tally[user] += 1;
        Ok(())
    }

    fn measured_reach(&self) -> f64 {
        self.reach as f64
    }
}

#[derive(Debug, Clone)]
pub struct CampaignParams {
    pub cap: usize,
    pub budget: f64,
    pub learning_rate: f64,
    pub initial_lambda: f64,
    pub bid_floor: f64,
    pub bid_cap: f64,
    pub collect_trace: bool,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub wins: Vec<bool>,
    pub spend: f64,
    pub measured_reach: f64,
    pub trace: Option<Vec<TraceRecord>>,
}

/// Drive one campaign over a pre-drawn price sequence. Requests are
/// processed strictly in order; the dual variable moves after every
/// request while the bidder is solvent.
pub fn run_campaign(
    stream: &RequestStream,
    prices: &[f64],
    valuer: &mut dyn ReachValuer,
    auction: &SecondPriceAuction,
    params: &CampaignParams,
) -> Result<CampaignResult> {
    assert_eq!(prices.len(), stream.len(), "one price per request");
    let mut bidder = BidderState::new(
        params.budget,
        stream.len().max(1) as u64,
        params.learning_rate,
        params.initial_lambda,
        params.bid_floor,
        params.bid_cap,
    )?;
    let mut wins = vec![false; stream.len()];
    let mut trace = params.collect_trace.then(Vec::new);

    for t in 0..stream.len() {
        let group = stream.group(t);
        let p = valuer.reach_probability(t, group)?;
        let mut bid = 0.0;
        let mut paid = 0.0;
        if bidder.is_active() {
            bid = bidder.bid(p, auction)?;
            if bid > prices[t] && bidder.try_pay(prices[t]) {
                wins[t] = true;
                paid = prices[t];
                valuer.record_win(t, group)?;
            }
            if bidder.is_active() {
                bidder.dual_update(paid);
            }
        }
        if let Some(rows) = trace.as_mut() {
            rows.push(TraceRecord {
                t: t + 1,
                group,
                p_t: p,
                lambda: bidder.lambda(),
                bid,
                won: wins[t],
                price_paid: paid,
                cumulative_spend: bidder.spent(),
                cumulative_expected_reach: valuer.measured_reach(),
            });
        }
    }

    Ok(CampaignResult {
        wins,
        spend: bidder.spent(),
        measured_reach: valuer.measured_reach(),
        trace,
    })
}


/// Per-trial observations reduced into a `RunRecord` by the runners.
#[derive(Debug, Clone, Copy)]
pub struct TrialOutcome {
    pub true_reach: f64,
    pub spend: f64,
    pub roas: f64,
    pub measured_reach: f64,
    pub relative_error: Option<f64>,
    pub within_two_sigma: Option<bool>,
    pub overestimated: Option<bool>,
}

impl TrialOutcome {
    pub fn from_campaign(
        model: &PopulationModel,
        stream: &RequestStream,
        result: &CampaignResult,
        cap: usize,
    ) -> Result<Self> {
        let true_reach = crate::auction::true_reach(model, stream, &result.wins, cap)? as f64;
        let roas = if result.spend > 0.0 {
            true_reach / result.spend
        } else {
            0.0
        };
        let relative_error = (true_reach > 0.0)
            .then(|| (result.measured_reach - true_reach).abs() / true_reach);

        // Realized-vs-expected consistency check, available for unique
        // reach where the variance has a closed form.
        let within_two_sigma = if cap == 1 {
            let winning: Vec<usize> = result
                .wins
                .iter()
                .enumerate()
                .filter(|(_, w)| **w)
                .map(|(t, _)| stream.group(t))
                .collect();
            let counts = ImpressionCounts::from_wins(model.num_groups(), &winning)?;
            let expected = expected_unique_reach(model, &counts)?;
            let sigma = unique_reach_variance(model, &counts)?.max(0.0).sqrt();
            Some((true_reach - expected).abs() <= 2.0 * sigma + 1e-9)
        } else {
            None
        };

        Ok(Self {
            true_reach,
            spend: result.spend,
            roas,
            measured_reach: result.measured_reach,
            relative_error,
            within_two_sigma,
            overestimated: None,
        })
    }
}
