//! Targeting-coverage sweep: a fixed number of targeted users spread over
//! more and more groups. Requests arrive from whole groups (uniform visit
//! probabilities), so low coverage means most wins land outside the target
//! set.

use rayon::prelude::*;

use crate::auction::{generate_stream, Arrival};
use crate::error::{Error, Result};
use crate::population::{Placement, PopulationModel, PropertyVector, TargetSpec};
use crate::rng::{derive_seed, domain, stream_rng};

use super::config::{self, ExperimentConfig, SweepSpec, TargetedSpec};
use super::sim::{run_campaign, CampaignParams, TrialOutcome, UniformValuer};
use super::{aggregate_outcomes, normalize_relative_roas, RunRecord};

pub fn run_coverage(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let levels = match &cfg.sweep {
        Some(SweepSpec::CoverageGroups { coverage_groups }) if !coverage_groups.is_empty() => {
            coverage_groups.clone()
        }
        _ => {
            return Err(Error::Config(
                "coverage needs a sweep of the form {\"coverage_groups\": [...]}".into(),
            ))
        }
    };
    if cfg.population.overlap {
        return Err(Error::Config(
            "coverage placement is defined for partitions; set overlap = false".into(),
        ));
    }
    let count = match &cfg.population.targeted {
        TargetedSpec::Placed { count, .. } => *count,
        _ => {
            return Err(Error::Config(
                "coverage sweeps place a fixed targeted count; \
                 set targeted = {\"count\": ..., \"placement\": ...}"
                    .into(),
            ))
        }
    };

    let num_users = cfg.population.num_users;
    let group_size = cfg.population.group_size;
    let auction = cfg.auction.build()?;
    let cap = cfg.campaign.cap;
    let requests = cfg.stream.requests;
    let trials = cfg.resolved_trials(config::DEFAULT_ROAS_TRIALS);
    let params = CampaignParams {
        cap,
        budget: cfg.campaign.budget.resolve(count, cap, auction.mean_price())?,
        learning_rate: cfg.campaign.learning_rate,
        initial_lambda: cfg.campaign.initial_lambda,
        bid_floor: cfg.campaign.bid_floor,
        bid_cap: cfg.campaign.bid_cap,
        collect_trace: false,
    };

    let mut records = Vec::with_capacity(levels.len());
    for (level_idx, &groups_used) in levels.iter().enumerate() {
        let salt = (level_idx as u64) << 32;
        let outcomes: Vec<TrialOutcome> = (0..trials)
            .into_par_iter()
            .map(|trial| -> Result<TrialOutcome> {
                let model = PopulationModel::build_partition_with(
                    num_users,
                    group_size,
                    &TargetSpec::Placed {
                        count,
                        placement: Placement::Grouped(groups_used),
                    },
                    derive_seed(cfg.seed, domain::POPULATION, salt | trial),
                )?;
                // Whole groups generate traffic; the hidden visitor is any
                // member, so untargeted members can soak up wins.
                let vectors = vec![PropertyVector::uniform(group_size)?; model.num_groups()];
                let stream = generate_stream(
                    &model,
                    requests,
                    Arrival::PropertyVectors(&vectors),
                    derive_seed(cfg.seed, domain::STREAM, salt | trial),
                )?;
                let mut price_rng = stream_rng(cfg.seed, domain::PRICES, trial);
                let prices = cfg.auction.draw_prices(requests, &mut price_rng)?;
                let mut valuer = UniformValuer::new(&model, cap)?;
                let result = run_campaign(&stream, &prices, &mut valuer, &auction, &params)?;
                TrialOutcome::from_campaign(&model, &stream, &result, cap)
            })
            .collect::<Result<Vec<_>>>()?;

        // Coverage is a deterministic function of the placement.
        let coverage = count as f64 / (groups_used as f64 * group_size as f64);
        records.push(aggregate_outcomes(
            "coverage",
            format!("coverage={coverage:.4}"),
            coverage,
            &outcomes,
        ));
    }

    // Baseline: the densest placement in the sweep.
    let baseline = records
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.value.partial_cmp(&b.value).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    normalize_relative_roas(&mut records, baseline);
    Ok(records)
}
