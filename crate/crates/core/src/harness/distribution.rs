//! Monte Carlo reach-distribution studies: the full distribution at one
//! operating point, its evolution with impression volume, and measurement
//! variance across group sizes.
//!
//! Impressions are allocated to groups round-robin so the analytic
//! expectation is a pure function of the sweep point; randomness enters
//! only through the sampled member assignments.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{expected_reach, mc_reach_distribution, ImpressionCounts};
use crate::rng::{derive_seed, domain};

use super::config::{self, ExperimentConfig, SweepSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionPoint {
    pub label: String,
    pub k: usize,
    pub cap: usize,
    pub impressions: u64,
    pub trials: u64,
    pub analytic_reach: f64,
    pub mc_mean: f64,
    pub mc_variance: f64,
    pub mc_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub label: String,
    pub reach: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionOutput {
    pub points: Vec<DistributionPoint>,
    pub histogram: Vec<HistogramRow>,
}

/// Spread `total` impressions over `num_groups` groups as evenly as
/// possible (first groups take the remainder).
pub fn round_robin_counts(num_groups: usize, total: u64) -> ImpressionCounts {
    let base = total / num_groups as u64;
    let extra = (total % num_groups as u64) as usize;
    ImpressionCounts::from_counts(
        (0..num_groups)
            .map(|j| base + (j < extra) as u64)
            .collect(),
    )
}

pub fn run_distribution(cfg: &ExperimentConfig) -> Result<DistributionOutput> {
    let base_k = cfg.population.group_size;
    let base_impressions = cfg.stream.requests as u64;
    let points: Vec<(String, usize, u64)> = match &cfg.sweep {
        None => vec![(format!("n={base_impressions}"), base_k, base_impressions)],
        Some(SweepSpec::Impressions { impressions }) if !impressions.is_empty() => impressions
            .iter()
            .map(|&n| (format!("n={n}"), base_k, n))
            .collect(),
        Some(SweepSpec::KValues { k_values }) if !k_values.is_empty() => k_values
            .iter()
            .map(|&k| (format!("k={k}"), k, base_impressions))
            .collect(),
        _ => {
            return Err(Error::Config(
                "mc accepts no sweep, {\"impressions\": [...]}, or {\"k_values\": [...]}".into(),
            ))
        }
    };
    if cfg.population.overlap {
        return Err(Error::Config(
            "distribution studies regroup a fixed user set; set overlap = false".into(),
        ));
    }
    let trials = cfg.resolved_trials(config::DEFAULT_DISTRIBUTION_TRIALS);
    let cap = cfg.campaign.cap;

    let mut out = DistributionOutput {
        points: Vec::with_capacity(points.len()),
        histogram: Vec::new(),
    };
    for (idx, (label, k, impressions)) in points.into_iter().enumerate() {
        if k == 0 || !cfg.population.num_users.is_multiple_of(k) {
            return Err(Error::Config(format!(
                "sweep value k={k} does not divide num_users {}",
                cfg.population.num_users
            )));
        }
        let mut point_cfg = cfg.clone();
        point_cfg.population.group_size = k;
        point_cfg.population.num_groups = None;
        let model =
            point_cfg.build_population(derive_seed(cfg.seed, domain::POPULATION, idx as u64))?;
        let counts = round_robin_counts(model.num_groups(), impressions);

        let analytic = expected_reach(&model, &counts, cap)?;
        let dist = mc_reach_distribution(
            &model,
            &counts,
            cap,
            trials,
            derive_seed(cfg.seed, domain::MC_TRIAL, idx as u64),
        )?;

        for (&reach, &count) in &dist.histogram {
            out.histogram.push(HistogramRow {
                label: label.clone(),
                reach,
                count,
            });
        }
        out.points.push(DistributionPoint {
            label,
            k,
            cap,
            impressions,
            trials,
            analytic_reach: analytic,
            mc_mean: dist.mean,
            mc_variance: dist.variance,
            mc_std_error: dist.std_error(),
        });
    }
    Ok(out)
}
