//! Privacy-vs-efficiency sweep: the same campaign run at increasing group
//! sizes, reporting ROAS relative to fully personalized delivery (k = 1).

use rayon::prelude::*;

use crate::auction::RequestStream;
use crate::error::{Error, Result};
use crate::population::PopulationModel;
use crate::rng::{domain, stream_rng};
use rand::seq::SliceRandom;
use rand::Rng;

use super::config::{self, ExperimentConfig, SweepSpec, TargetedSpec};
use super::sim::{run_campaign, CampaignParams, TrialOutcome, UniformValuer};
use super::{aggregate_outcomes, normalize_relative_roas, RunRecord};

pub fn run_k_sweep(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let ks = match &cfg.sweep {
        Some(SweepSpec::KValues { k_values }) if !k_values.is_empty() => k_values.clone(),
        _ => {
            return Err(Error::Config(
                "sweep-k needs a sweep of the form {\"k_values\": [...]}".into(),
            ))
        }
    };
    if cfg.population.overlap {
        return Err(Error::Config(
            "the group-size sweep regroups a fixed user set; set overlap = false".into(),
        ));
    }
    let num_users = cfg.population.num_users;
    for &k in &ks {
        if k == 0 || !num_users.is_multiple_of(k) {
            return Err(Error::Config(format!(
                "sweep value k={k} does not divide num_users {num_users}"
            )));
        }
    }
    let targeted: Vec<usize> = match &cfg.population.targeted {
        TargetedSpec::Keyword(_) => (0..num_users).collect(),
        TargetedSpec::List(ids) => ids.clone(),
        TargetedSpec::Placed { .. } => {
            return Err(Error::Config(
                "placed targeting is group-relative and cannot be held fixed across k; \
                 use \"all\" or an explicit list"
                    .into(),
            ))
        }
    };
    if targeted.is_empty() {
        return Err(Error::Config("no targeted users".into()));
    }

    let auction = cfg.auction.build()?;
    let cap = cfg.campaign.cap;
    let requests = cfg.stream.requests;
    let trials = cfg.resolved_trials(config::DEFAULT_ROAS_TRIALS);
    let params = CampaignParams {
        cap,
        budget: cfg
            .campaign
            .budget
            .resolve(targeted.len(), cap, auction.mean_price())?,
        learning_rate: cfg.campaign.learning_rate,
        initial_lambda: cfg.campaign.initial_lambda,
        bid_floor: cfg.campaign.bid_floor,
        bid_cap: cfg.campaign.bid_cap,
        collect_trace: false,
    };

    // One user permutation, request stream, and price sequence per trial,
    // shared by every arm: arms differ only in how users are grouped.
    let per_trial: Vec<Vec<TrialOutcome>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<TrialOutcome>> {
            let mut perm: Vec<usize> = (0..num_users).collect();
            perm.shuffle(&mut stream_rng(cfg.seed, domain::PERMUTATION, trial));

            let mut user_rng = stream_rng(cfg.seed, domain::STREAM, trial);
            let users: Vec<usize> = (0..requests)
                .map(|_| targeted[user_rng.random_range(0..targeted.len())])
                .collect();

            let mut price_rng = stream_rng(cfg.seed, domain::PRICES, trial);
            let prices = cfg.auction.draw_prices(requests, &mut price_rng)?;

            ks.iter()
                .map(|&k| {
                    let groups: Vec<Vec<usize>> =
                        perm.chunks(k).map(<[usize]>::to_vec).collect();
                    let model = PopulationModel::new(num_users, groups, targeted.clone())?;
                    let stream = RequestStream::from_user_sequence(&model, users.clone())?;
                    let mut valuer = UniformValuer::new(&model, cap)?;
                    let result = run_campaign(&stream, &prices, &mut valuer, &auction, &params)?;
                    TrialOutcome::from_campaign(&model, &stream, &result, cap)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<RunRecord> = ks
        .iter()
        .enumerate()
        .map(|(arm, &k)| {
            let outcomes: Vec<TrialOutcome> =
                per_trial.iter().map(|trial| trial[arm]).collect();
            aggregate_outcomes("k", format!("k={k}"), k as f64, &outcomes)
        })
        .collect();

    let baseline = ks.iter().position(|&k| k == 1).unwrap_or(0);
    normalize_relative_roas(&mut records, baseline);
    Ok(records)
}
