//! Single-scenario runners: measurement-only reach curves and one fully
//! traced campaign.

use serde::Serialize;

use crate::auction::{generate_stream, true_reach, Arrival};
use crate::error::{Error, Result};
use crate::measurement::{
    reach_bounds, unique_reach_variance, ImpressionCounts, ReachCurvePoint, ReachEstimator,
};
use crate::optimization::TraceRecord;
use crate::population::PropertyVector;
use crate::rng::{derive_seed, domain, stream_rng};

use super::config::{ArrivalSpec, ExperimentConfig};
use super::sim::{
    run_campaign, CampaignParams, NonuniformValuer, ReachValuer, TrialOutcome, UniformValuer,
};

fn build_arrival<'a>(
    cfg: &ExperimentConfig,
    vectors: &'a Option<Vec<PropertyVector>>,
) -> Result<Arrival<'a>> {
    match cfg.stream.arrival {
        ArrivalSpec::Uniform => Ok(Arrival::Uniform),
        ArrivalSpec::Property => {
            let vs = vectors.as_ref().ok_or_else(|| {
                Error::Config(
                    "arrival = \"property\" needs population.property_vectors".into(),
                )
            })?;
            Ok(Arrival::PropertyVectors(vs))
        }
    }
}

/// Stream every request as a win and export the reach curve over time:
/// one row per emitted step and cap value, with the unique-reach standard
/// deviation and (on partitions) the deterministic bounds.
pub fn run_measure(cfg: &ExperimentConfig) -> Result<Vec<ReachCurvePoint>> {
    let model = cfg.build_population(derive_seed(cfg.seed, domain::POPULATION, 0))?;
    let vectors = cfg.build_property_vectors(&model)?;
    let stream = generate_stream(
        &model,
        cfg.stream.requests,
        build_arrival(cfg, &vectors)?,
        derive_seed(cfg.seed, domain::STREAM, 0),
    )?;

    let cap = cfg.campaign.cap;
    let mut estimator = ReachEstimator::new(&model, cap)?;
    let mut counts = ImpressionCounts::new(model.num_groups());
    let mut rows = Vec::new();
    for t in 0..stream.len() {
        let j = stream.group(t);
        estimator.stream_win(&model, j)?;
        counts.record_win(j)?;
        let step = t + 1;
        if step % cfg.stream.emit_every != 0 && step != stream.len() {
            continue;
        }
        let sigma = unique_reach_variance(&model, &counts)?.max(0.0).sqrt();
        for m in 1..=cap {
            let bounds = reach_bounds(&model, &counts, m).ok();
            rows.push(ReachCurvePoint {
                t: step,
                cap: m,
                expected_reach: estimator.reach_at(m)?,
                sigma: (m == 1).then_some(sigma),
                lower_bound: bounds.map(|b| b.0),
                upper_bound: bounds.map(|b| b.1),
            });
        }
    }
    Ok(rows)
}

/// End-of-campaign summary for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub scenario: String,
    pub requests: usize,
    pub wins: u64,
    pub budget: f64,
    pub spend: f64,
    pub measured_reach: f64,
    pub true_reach: f64,
    pub roas: f64,
    pub relative_error: Option<f64>,
    pub within_two_sigma: Option<bool>,
}

/// Run one bid->auction->measure campaign with a full per-request trace.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<(Vec<TraceRecord>, SimulationSummary)> {
    let model = cfg.build_population(derive_seed(cfg.seed, domain::POPULATION, 0))?;
    let vectors = cfg.build_property_vectors(&model)?;
    let stream = generate_stream(
        &model,
        cfg.stream.requests,
        build_arrival(cfg, &vectors)?,
        derive_seed(cfg.seed, domain::STREAM, 0),
    )?;
    let auction = cfg.auction.build()?;
    let mut price_rng = stream_rng(cfg.seed, domain::PRICES, 0);
    let prices = cfg.auction.draw_prices(stream.len(), &mut price_rng)?;

    let cap = cfg.campaign.cap;
    let params = CampaignParams {
        cap,
        budget: cfg
            .campaign
            .budget
            .resolve(model.num_targeted(), cap, auction.mean_price())?,
        learning_rate: cfg.campaign.learning_rate,
        initial_lambda: cfg.campaign.initial_lambda,
        bid_floor: cfg.campaign.bid_floor,
        bid_cap: cfg.campaign.bid_cap,
        collect_trace: true,
    };

    // Discount with the visit-probability model whenever the stream is
    // generated from one; otherwise assume uniform visits.
    let mut valuer: Box<dyn ReachValuer> = match (&cfg.stream.arrival, &vectors) {
        (ArrivalSpec::Property, Some(vs)) => Box::new(NonuniformValuer::new(&model, vs, cap)?),
        _ => Box::new(UniformValuer::new(&model, cap)?),
    };
    let result = run_campaign(&stream, &prices, valuer.as_mut(), &auction, &params)?;
    let outcome = TrialOutcome::from_campaign(&model, &stream, &result, cap)?;
    let reach = true_reach(&model, &stream, &result.wins, cap)?;

    let summary = SimulationSummary {
        scenario: cfg.scenario.clone(),
        requests: stream.len(),
        wins: result.wins.iter().filter(|w| **w).count() as u64,
        budget: params.budget,
        spend: result.spend,
        measured_reach: result.measured_reach,
        true_reach: reach as f64,
        roas: outcome.roas,
        relative_error: outcome.relative_error,
        within_two_sigma: outcome.within_two_sigma,
    };
    Ok((result.trace.unwrap_or_default(), summary))
}
