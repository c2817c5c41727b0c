//! Declarative experiment configuration: versioned JSON in, validated
//! scenario objects out. Unknown fields are refused so config typos fail
//! loudly instead of silently running the wrong study.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auction::SecondPriceAuction;
use crate::error::{Error, Result};
use crate::population::{Placement, PopulationModel, PropertyVector, TargetSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Trials per sweep point when the config leaves `trials` unset.
pub const DEFAULT_ROAS_TRIALS: u64 = 200;
/// Trials for reach-distribution studies when `trials` is unset.
pub const DEFAULT_DISTRIBUTION_TRIALS: u64 = 10_000;

/// Default budget: fraction of the cost of serving every targeted user
/// `cap` times at the mean competing price. Chosen so the budget binds for
/// every group size, including fully personalized delivery.
pub const DEFAULT_BUDGET_FRACTION: f64 = 0.55;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: String,
    pub population: PopulationSpec,
    #[serde(default)]
    pub stream: StreamSpec,
    #[serde(default)]
    pub campaign: CampaignSpec,
    #[serde(default)]
    pub auction: AuctionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub num_users: usize,
    pub group_size: usize,
    /// Required for overlapping models, derived for partitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_groups: Option<usize>,
    #[serde(default)]
    pub overlap: bool,
    #[serde(default = "default_targeted")]
    pub targeted: TargetedSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property_vectors: Option<PropertyVectorsSpec>,
}

fn default_targeted() -> TargetedSpec {
    TargetedSpec::Keyword(TargetKeyword::All)
}

/// `"all"`, an explicit index list, or a placed count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetedSpec {
    Keyword(TargetKeyword),
    List(Vec<usize>),
    Placed { count: usize, placement: Placement },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKeyword {
    All,
}

impl TargetedSpec {
    pub fn to_target_spec(&self) -> TargetSpec {
        match self {
            TargetedSpec::Keyword(TargetKeyword::All) => TargetSpec::all(),
            TargetedSpec::List(ids) => TargetSpec::List(ids.clone()),
            TargetedSpec::Placed { count, placement } => TargetSpec::Placed {
                count: *count,
                placement: *placement,
            },
        }
    }

    /// Number of targeted users this form selects.
    pub fn count(&self, num_users: usize) -> usize {
        match self {
            TargetedSpec::Keyword(TargetKeyword::All) => num_users,
            TargetedSpec::List(ids) => ids.len(),
            TargetedSpec::Placed { count, .. } => *count,
        }
    }
}

/// `"uniform"`, a geometric-decay generator (single ratio, or a range
/// spread evenly across groups so group skews differ), or explicit
/// per-group arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropertyVectorsSpec {
    Keyword(PropertyKeyword),
    Geometric { geometric_ratio: f64 },
    GeometricRange { geometric_ratio_range: [f64; 2] },
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKeyword {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    #[serde(default = "default_requests")]
    pub requests: usize,
    #[serde(default)]
    pub arrival: ArrivalSpec,
    /// Emit a reach-curve row every this many requests.
    #[serde(default = "default_emit_every")]
    pub emit_every: usize,
}

fn default_requests() -> usize {
    2000
}

fn default_emit_every() -> usize {
    1
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            requests: default_requests(),
            arrival: ArrivalSpec::default(),
            emit_every: default_emit_every(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalSpec {
    #[default]
    Uniform,
    /// Per-group visit-probability vectors.
    Property,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_initial_lambda")]
    pub initial_lambda: f64,
    #[serde(default = "default_bid_floor")]
    pub bid_floor: f64,
    #[serde(default = "default_bid_cap")]
    pub bid_cap: f64,
}

fn default_cap() -> usize {
    1
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_initial_lambda() -> f64 {
    10.0
}

fn default_bid_floor() -> f64 {
    0.1
}

fn default_bid_cap() -> f64 {
    10.0
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            cap: default_cap(),
            budget: BudgetSpec::default(),
            learning_rate: default_learning_rate(),
            initial_lambda: default_initial_lambda(),
            bid_floor: default_bid_floor(),
            bid_cap: default_bid_cap(),
        }
    }
}

/// Absolute amount, or a fraction of `cap * targeted users * mean price`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Amount(f64),
    CapCostFraction { fraction_of_cap_cost: f64 },
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec::CapCostFraction {
            fraction_of_cap_cost: DEFAULT_BUDGET_FRACTION,
        }
    }
}

impl BudgetSpec {
    pub fn resolve(&self, targeted_users: usize, cap: usize, mean_price: f64) -> Result<f64> {
        let budget = match self {
            BudgetSpec::Amount(b) => *b,
            BudgetSpec::CapCostFraction {
                fraction_of_cap_cost,
            } => fraction_of_cap_cost * cap as f64 * targeted_users as f64 * mean_price,
        };
        if !budget.is_finite() || budget <= 0.0 {
            return Err(Error::Config(format!(
                "resolved budget must be positive, got {budget}"
            )));
        }
        Ok(budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionSpec {
    #[serde(default)]
    pub log_mean: f64,
    #[serde(default = "default_log_var")]
    pub log_var: f64,
    /// Optional piecewise price regimes; requests before the first
    /// segment's `from` use the base parameters. Stationary by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<AuctionSegment>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionSegment {
    /// First request index (0-based) the segment applies to.
    pub from: usize,
    pub log_mean: f64,
    pub log_var: f64,
}

fn default_log_var() -> f64 {
    0.5
}

impl Default for AuctionSpec {
    fn default() -> Self {
        Self {
            log_mean: 0.0,
            log_var: default_log_var(),
            segments: None,
        }
    }
}

impl AuctionSpec {
    /// The base (stationary) auction; also validates the segments.
    pub fn build(&self) -> Result<SecondPriceAuction> {
        if let Some(segments) = &self.segments {
            if segments.is_empty() {
                return Err(Error::Config("auction.segments must not be empty".into()));
            }
            if !segments.windows(2).all(|w| w[0].from < w[1].from) {
                return Err(Error::Config(
                    "auction.segments must have strictly increasing `from` indices".into(),
                ));
            }
            for s in segments {
                SecondPriceAuction::new(s.log_mean, s.log_var)?;
            }
        }
        SecondPriceAuction::new(self.log_mean, self.log_var)
    }

    /// Draw one competing price per request, respecting segment regimes.
    pub fn draw_prices(&self, requests: usize, rng: &mut impl rand::Rng) -> Result<Vec<f64>> {
        let base = self.build()?;
        let Some(segments) = &self.segments else {
            return Ok((0..requests).map(|_| base.sample_price(rng)).collect());
        };
        let mut prices = Vec::with_capacity(requests);
        let mut current = base;
        let mut next = 0usize;
        for t in 0..requests {
            while next < segments.len() && segments[next].from <= t {
                current = SecondPriceAuction::new(segments[next].log_mean, segments[next].log_var)?;
                next += 1;
            }
            prices.push(current.sample_price(rng));
        }
        Ok(prices)
    }
}

/// One sweep axis per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepSpec {
    KValues { k_values: Vec<usize> },
    Impressions { impressions: Vec<u64> },
    CoverageGroups { coverage_groups: Vec<usize> },
    Approaches { approaches: Vec<Approach> },
}

/// The four anonymous measurement/bidding strategies compared side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    /// Every won impression counts as reach; no bid discounting.
    #[serde(rename = "A")]
    UniqueImpressions,
    /// Distinct served groups count as reach; a served group is worthless.
    #[serde(rename = "B")]
    UniqueGroups,
    /// Expected reach and reach probability assuming uniform visits.
    #[serde(rename = "C")]
    UniformReach,
    /// Expected reach and reach probability from visit-probability vectors.
    #[serde(rename = "D")]
    NonuniformReach,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::UniqueImpressions,
        Approach::UniqueGroups,
        Approach::UniformReach,
        Approach::NonuniformReach,
    ];
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Approach::UniqueImpressions => "A",
            Approach::UniqueGroups => "B",
            Approach::UniformReach => "C",
            Approach::NonuniformReach => "D",
        };
        f.write_str(s)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {}, this build understands {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let p = &self.population;
        if p.num_users == 0 || p.group_size == 0 {
            return Err(Error::Config(
                "population needs num_users >= 1 and group_size >= 1".into(),
            ));
        }
        if p.overlap {
            if p.num_groups.is_none() {
                return Err(Error::Config(
                    "overlapping populations require num_groups".into(),
                ));
            }
        } else if !p.num_users.is_multiple_of(p.group_size) {
            return Err(Error::Config(format!(
                "group_size {} does not divide num_users {}",
                p.group_size, p.num_users
            )));
        }
        if let Some(n) = p.num_groups {
            if !p.overlap && n != p.num_users / p.group_size {
                return Err(Error::Config(format!(
                    "num_groups {} inconsistent with a partition of {} users into groups of {}",
                    n, p.num_users, p.group_size
                )));
            }
        }
        if let Some(0) = self.trials {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.stream.requests == 0 {
            return Err(Error::Config("stream.requests must be at least 1".into()));
        }
        if self.stream.emit_every == 0 {
            return Err(Error::Config("stream.emit_every must be at least 1".into()));
        }
        if self.campaign.cap == 0 {
            return Err(Error::Config("campaign.cap must be at least 1".into()));
        }
        self.auction.build()?;
        Ok(())
    }

    pub fn resolved_trials(&self, default: u64) -> u64 {
        self.trials.unwrap_or(default)
    }

    /// Build the configured population with an explicit seed (callers fan
    /// the master seed out per trial).
    pub fn build_population(&self, seed: u64) -> Result<PopulationModel> {
        let p = &self.population;
        if p.overlap {
            let num_groups = p
                .num_groups
                .ok_or_else(|| Error::Config("overlapping populations require num_groups".into()))?;
            // Overlapping builder targets everyone; narrow afterwards if asked.
            match &p.targeted {
                TargetedSpec::Keyword(TargetKeyword::All) => {
                    PopulationModel::build_overlapping(p.num_users, p.group_size, num_groups, seed)
                }
                TargetedSpec::List(ids) => {
                    let base = PopulationModel::build_overlapping(
                        p.num_users,
                        p.group_size,
                        num_groups,
                        seed,
                    )?;
                    let groups = (0..base.num_groups())
                        .map(|j| base.members(j).to_vec())
                        .collect();
                    PopulationModel::new(p.num_users, groups, ids.clone())
                }
                TargetedSpec::Placed { .. } => Err(Error::Config(
                    "placed targeting is only defined for partitions".into(),
                )),
            }
        } else {
            PopulationModel::build_partition_with(
                p.num_users,
                p.group_size,
                &p.targeted.to_target_spec(),
                seed,
            )
        }
    }

    /// Property vectors for every group, when configured.
    pub fn build_property_vectors(
        &self,
        model: &PopulationModel,
    ) -> Result<Option<Vec<PropertyVector>>> {
        let Some(spec) = &self.population.property_vectors else {
            return Ok(None);
        };
        let k = model.group_size();
        let m = model.num_groups();
        let vectors = match spec {
            PropertyVectorsSpec::Keyword(PropertyKeyword::Uniform) => {
                vec![PropertyVector::uniform(k)?; m]
            }
            PropertyVectorsSpec::Geometric { geometric_ratio } => {
                vec![PropertyVector::geometric(k, *geometric_ratio)?; m]
            }
            PropertyVectorsSpec::GeometricRange {
                geometric_ratio_range: [lo, hi],
            } => {
                if lo > hi {
                    return Err(Error::Config(format!(
                        "geometric_ratio_range is inverted: [{lo}, {hi}]"
                    )));
                }
                (0..m)
                    .map(|j| {
                        let f = if m > 1 { j as f64 / (m - 1) as f64 } else { 0.0 };
                        PropertyVector::geometric(k, lo + f * (hi - lo))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            PropertyVectorsSpec::Explicit(rows) => {
                if rows.len() != m {
                    return Err(Error::Config(format!(
                        "{} property vectors for {} groups",
                        rows.len(),
                        m
                    )));
                }
                rows.iter()
                    .cloned()
                    .map(PropertyVector::new)
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Some(vectors))
    }
}

/// Parse and validate a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Write a config back out as pretty JSON.
pub fn save_config(cfg: &ExperimentConfig, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    fs::write(path.as_ref(), text)?;
    Ok(())
}
