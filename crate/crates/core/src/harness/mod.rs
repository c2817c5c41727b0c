//! Declarative experiment runner: reproducible studies over the simulator
//! with CSV/JSON reporting.
//!
//! Every runner consumes an [`ExperimentConfig`] and fans the master seed
//! out into per-trial RNG streams, so a config plus seed pins the output
//! byte for byte.

pub mod config;
pub mod stats;

mod approaches;
mod coverage;
mod distribution;
mod k_sweep;
mod report;
mod sim;
mod single;

pub use approaches::run_approaches;
pub use config::{load_config, save_config, Approach, ExperimentConfig, SweepSpec};
pub use coverage::run_coverage;
pub use distribution::{run_distribution, DistributionOutput, DistributionPoint, HistogramRow};
pub use k_sweep::run_k_sweep;
pub use report::{emit_records, write_csv, write_json, write_jsonl, OutputFormat};
pub use sim::{
    run_campaign, CampaignParams, CampaignResult, DistinctGroupValuer, ExactCapValuer,
    ImpressionCountValuer, NonuniformValuer, ReachValuer, UniformValuer,
};
pub use single::{run_measure, run_simulate, SimulationSummary};

use serde::{Deserialize, Serialize};
use sim::TrialOutcome;

/// Aggregates for one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Sweep axis name ("k", "coverage", "approach", "impressions").
    pub sweep: String,
    /// Human-readable point label ("k=6", "D", ...).
    pub label: String,
    /// Numeric sweep coordinate.
    pub value: f64,
    pub trials: u64,
    pub mean_reach: f64,
    pub var_reach: f64,
    pub mean_spend: f64,
    pub var_spend: f64,
    pub mean_roas: f64,
    pub var_roas: f64,
    /// Mean ROAS normalized by the baseline point of the sweep.
    pub relative_roas: f64,
    pub mean_measured_reach: f64,
    pub mean_relative_error: f64,
    /// Fraction of trials where realized reach fell within two standard
    /// deviations of the reported expectation (unique reach only).
    pub within_two_sigma: Option<f64>,
    /// Fraction of trials where measured reach was at least realized reach.
    pub overestimate_fraction: Option<f64>,
}

fn aggregate_outcomes(
    sweep: &str,
    label: String,
    value: f64,
    outcomes: &[TrialOutcome],
) -> RunRecord {
    let reach: Vec<f64> = outcomes.iter().map(|o| o.true_reach).collect();
    let spend: Vec<f64> = outcomes.iter().map(|o| o.spend).collect();
    let roas: Vec<f64> = outcomes.iter().map(|o| o.roas).collect();
    let measured: Vec<f64> = outcomes.iter().map(|o| o.measured_reach).collect();
    let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.relative_error).collect();
    let sigma_hits: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.within_two_sigma.map(|b| b as u8 as f64))
        .collect();
    let over: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.overestimated.map(|b| b as u8 as f64))
        .collect();

    RunRecord {
        sweep: sweep.to_string(),
        label,
        value,
        trials: outcomes.len() as u64,
        mean_reach: stats::mean(&reach),
        var_reach: stats::population_variance(&reach),
        mean_spend: stats::mean(&spend),
        var_spend: stats::population_variance(&spend),
        mean_roas: stats::mean(&roas),
        var_roas: stats::population_variance(&roas),
        relative_roas: f64::NAN,
        mean_measured_reach: stats::mean(&measured),
        mean_relative_error: stats::mean(&errors),
        within_two_sigma: (!sigma_hits.is_empty()).then(|| stats::mean(&sigma_hits)),
        overestimate_fraction: (!over.is_empty()).then(|| stats::mean(&over)),
    }
}

/// Normalize every record's ROAS by the record at `baseline` index.
fn normalize_relative_roas(records: &mut [RunRecord], baseline: usize) {
    let base = records[baseline].mean_roas;
    for r in records.iter_mut() {
        r.relative_roas = if base > 0.0 { r.mean_roas / base } else { f64::NAN };
    }
}
