//! Reach estimators: batch and streaming expectations, variance and
//! concentration bounds, over-exposure, deterministic bounds, non-uniform
//! variants, and Monte Carlo reach distributions.
//!
//! Group impressions are the only observable. A win attributed to group `j`
//! lands on each of its `k` members with probability `1/k`, so the exposure
//! count of user `i` is binomial in the total impressions of the groups
//! containing `i`.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::binomial::{binom_cdf, binom_pmf, BinomialTable};
use crate::error::{Error, Result};
use crate::population::{PopulationModel, PropertyVector};

/// Wins per group over an observation window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpressionCounts {
    wins: Vec<u64>,
    window: Option<(usize, usize)>,
}

impl ImpressionCounts {
    pub fn new(num_groups: usize) -> Self {
        Self {
            wins: vec![0; num_groups],
            window: None,
        }
    }

    pub fn from_counts(wins: Vec<u64>) -> Self {
        Self { wins, window: None }
    }

    /// Tally a sequence of winning group indices.
    pub fn from_wins(num_groups: usize, wins: &[usize]) -> Result<Self> {
        let mut counts = Self::new(num_groups);
        for &j in wins {
            counts.record_win(j)?;
        }
        Ok(counts)
    }

    pub fn record_win(&mut self, group: usize) -> Result<()> {
        match self.wins.get_mut(group) {
            Some(n) => {
                *n += 1;
                Ok(())
            }
            None => Err(Error::UnknownGroup(group)),
        }
    }

    /// Tag the counts with the request-index range they were taken from.
    pub fn with_window(mut self, start: usize, end: usize) -> Self {
        self.window = Some((start, end));
        self
    }

    pub fn window(&self) -> Option<(usize, usize)> {
        self.window
    }

    pub fn count(&self, group: usize) -> u64 {
        self.wins[group]
    }

    pub fn counts(&self) -> &[u64] {
        &self.wins
    }

    pub fn num_groups(&self) -> usize {
        self.wins.len()
    }

    pub fn total(&self) -> u64 {
        self.wins.iter().sum()
    }
}

fn validate_counts(model: &PopulationModel, counts: &ImpressionCounts) -> Result<()> {
    if counts.num_groups() != model.num_groups() {
        return Err(Error::Config(format!(
            "impression counts cover {} groups, model has {}",
            counts.num_groups(),
            model.num_groups()
        )));
    }
    Ok(())
}

/// Exposure trials of `user`: total impressions over the groups containing
/// the user.
pub fn exposure_trials(model: &PopulationModel, counts: &ImpressionCounts, user: usize) -> u64 {
    model.groups_of(user).iter().map(|&j| counts.count(j)).sum()
}

/// `base^n` without the i32 cast pitfalls for large counts.
fn pow_u(base: f64, n: u64) -> f64 {
    if n <= i32::MAX as u64 {
        base.powi(n as i32)
    } else {
        base.powf(n as f64)
    }
}

/// E[min(X, cap)] for X ~ Binomial(n, p).
fn expected_min_capped(n: u64, p: f64, cap: usize) -> Result<f64> {
    let mut sum = 0.0;
    for l in 1..=cap {
        sum += l as f64 * binom_pmf(l as u64, n, p)?;
    }
    Ok(sum + cap as f64 * (1.0 - binom_cdf(cap as u64, n, p)?))
}

/// Same expectation through the complementary sum
/// `cap - sum_{l<cap} (cap - l) f(l; n, p)`; the streaming estimator
/// accumulates exactly this form.
fn expected_min_capped_shortfall(n: u64, p: f64, cap: usize) -> Result<f64> {
    let mut shortfall = 0.0;
    for l in 0..cap {
        shortfall += (cap - l) as f64 * binom_pmf(l as u64, n, p)?;
    }
    Ok(cap as f64 - shortfall)
}

fn per_user_sum(
    model: &PopulationModel,
    counts: &ImpressionCounts,
    mut term: impl FnMut(u64) -> Result<f64>,
) -> Result<f64> {
    // Accumulate in ascending user order so results are reproducible.
    let mut memo: HashMap<u64, f64> = HashMap::new();
    let mut total = 0.0;
    for i in model.targeted_users() {
        let n = exposure_trials(model, counts, i);
        let v = match memo.get(&n) {
            Some(v) => *v,
            None => {
                let v = term(n)?;
                memo.insert(n, v);
                v
            }
        };
        total += v;
    }
    Ok(total)
}

/// Expected reach under frequency cap `cap`: expected impressions counted
/// at most `cap` times per targeted user.
pub fn expected_reach(
    model: &PopulationModel,
    counts: &ImpressionCounts,
    cap: usize,
) -> Result<f64> {
    if cap == 0 {
        return Err(Error::InvalidCap);
    }
    validate_counts(model, counts)?;
    let p = 1.0 / model.group_size() as f64;
    per_user_sum(model, counts, |n| expected_min_capped(n, p, cap))
}

/// Algebraically identical route to [`expected_reach`] via the
/// complementary form; kept public so the two can be cross-checked.
pub fn expected_reach_shortfall_form(
    model: &PopulationModel,
    counts: &ImpressionCounts,
    cap: usize,
) -> Result<f64> {
    if cap == 0 {
        return Err(Error::InvalidCap);
    }
    validate_counts(model, counts)?;
    let p = 1.0 / model.group_size() as f64;
    per_user_sum(model, counts, |n| expected_min_capped_shortfall(n, p, cap))
}

/// Expected number of distinct targeted users reached at least once.
pub fn expected_unique_reach(model: &PopulationModel, counts: &ImpressionCounts) -> Result<f64> {
    validate_counts(model, counts)?;
    let q = 1.0 - 1.0 / model.group_size() as f64;
    per_user_sum(model, counts, |n| Ok(1.0 - pow_u(q, n)))
}

/// Streaming reach estimator.
///
/// Keeps one exposure counter per targeted user plus a shared pmf table and
/// updates the reach accumulators `R[1..=cap]` per win in O(k c^2). For
/// non-overlapping groups all members of a group share one exposure count,
/// so the counter and the update collapse to the group level and a win
/// costs O(c^2).
#[derive(Debug, Clone)]
pub struct ReachEstimator {
    cap: usize,
    table: BinomialTable,
    exposure: Exposure,
    reach: Vec<f64>,
    wins: u64,
}

#[derive(Debug, Clone)]
enum Exposure {
    PerUser(Vec<u64>),
    PerGroup(Vec<u64>),
}

impl ReachEstimator {
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
            reach: vec![0.0; cap],
            wins: 0,
        })
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn wins(&self) -> u64 {
        self.wins
    }

    /// Fold one more win for `group` into the accumulators and return the
    /// updated reach curve `R[1..=cap]`.
    pub fn stream_win(&mut self, model: &PopulationModel, group: usize) -> Result<&[f64]> {
        model.check_group(group)?;
        match &mut self.exposure {
            Exposure::PerGroup(wins) => {
                wins[group] += 1;
                let n = wins[group];
                self.table.ensure_rows(n)?;
                let weight = model.targeted_in(group).len() as f64;
                if weight > 0.0 {
                    apply_reach_delta(&mut self.reach, &self.table, n, weight)?;
                }
            }
            Exposure::PerUser(trials) => {
                for &i in model.targeted_in(group) {
                    trials[i] += 1;
                    let n = trials[i];
                    self.table.ensure_rows(n)?;
                    apply_reach_delta(&mut self.reach, &self.table, n, 1.0)?;
                }
            }
        }
        self.wins += 1;
        Ok(&self.reach)
    }

    /// Reach curve `R[1..=cap]`, indexed by `m - 1`.
    pub fn reaches(&self) -> &[f64] {
        &self.reach
    }

    pub fn reach_at(&self, cap: usize) -> Result<f64> {
        if cap == 0 || cap > self.cap {
            return Err(Error::InvalidCap);
        }
        Ok(self.reach[cap - 1])
    }

    /// Exposure trials accumulated for `user`.
    pub fn exposure_trials(&self, model: &PopulationModel, user: usize) -> u64 {
        match &self.exposure {
            Exposure::PerUser(trials) => trials[user],
            Exposure::PerGroup(wins) => model.groups_of(user).iter().map(|&j| wins[j]).sum(),
        }
    }
}

/// One exposure trial moved a unit from n-1 to n trials; shift every
/// accumulator by `(m - l) * (f(l; n-1) - f(l; n))` for l < m.
fn apply_reach_delta(reach: &mut [f64], table: &BinomialTable, n: u64, weight: f64) -> Result<()> {
    let cap = reach.len();
    let cur = table.row(n)?;
    let prev = table.row(n - 1)?;
    for l in 0..cap {
        let diff = prev[l] - cur[l];
        if diff != 0.0 {
            let wdiff = weight * diff;
            for m in (l + 1)..=cap {
                reach[m - 1] += (m - l) as f64 * wdiff;
            }
        }
    }
    Ok(())
}

/// Variance of unique reach (cap = 1): per-user Bernoulli variances plus
/// pairwise covariances for users that share at least one group.
pub fn unique_reach_variance(model: &PopulationModel, counts: &ImpressionCounts) -> Result<f64> {
    validate_counts(model, counts)?;
    let k = model.group_size() as f64;
    let q = 1.0 - 1.0 / k;
    let mut sigma2 = 0.0;
    for i in model.targeted_users() {
        let miss = pow_u(q, exposure_trials(model, counts, i));
        sigma2 += (1.0 - miss) * miss;
    }

    let mut seen: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    for j in 0..model.num_groups() {
        let us = model.targeted_in(j);
        for (a, &i) in us.iter().enumerate() {
            for &i2 in &us[a + 1..] {
                if seen.insert((i, i2)) {
                    sigma2 += 2.0 * pair_covariance(model, counts, i, i2);
                }
            }
        }
    }
    Ok(sigma2)
}

/// Covariance of the reached indicators of two users. Zero when their
/// groups are disjoint.
pub fn pair_covariance(
    model: &PopulationModel,
    counts: &ImpressionCounts,
    user_a: usize,
    user_b: usize,
) -> f64 {
    let k = model.group_size() as f64;
    let q = 1.0 - 1.0 / k;
    let (mut shared, mut only_a, mut only_b) = (0u64, 0u64, 0u64);
    let (ga, gb) = (model.groups_of(user_a), model.groups_of(user_b));
    let (mut x, mut y) = (0, 0);
    while x < ga.len() && y < gb.len() {
        match ga[x].cmp(&gb[y]) {
            std::cmp::Ordering::Equal => {
                shared += counts.count(ga[x]);
                x += 1;
                y += 1;
            }
            std::cmp::Ordering::Less => {
                only_a += counts.count(ga[x]);
                x += 1;
            }
            std::cmp::Ordering::Greater => {
                only_b += counts.count(gb[y]);
                y += 1;
            }
        }
    }
    only_a += ga[x..].iter().map(|&j| counts.count(j)).sum::<u64>();
    only_b += gb[y..].iter().map(|&j| counts.count(j)).sum::<u64>();

    let both_missed = pow_u(1.0 - 2.0 / k, shared);
    (both_missed - pow_u(q, 2 * shared)) * pow_u(q, only_a + only_b)
}

/// A two-sided tail bound: deviations of at least `epsilon * sigma` happen
/// with probability at most `1 / epsilon^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevBound {
    /// Deviation threshold `epsilon * sigma`.
    pub deviation: f64,
    /// Tail probability bound, capped at 1.
    pub probability: f64,
}

pub fn chebyshev_bound(sigma2: f64, epsilon: f64) -> Result<ChebyshevBound> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::Domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !sigma2.is_finite() || sigma2 < 0.0 {
        return Err(Error::Domain(format!(
            "variance must be non-negative, got {sigma2}"
        )));
    }
    Ok(ChebyshevBound {
        deviation: epsilon * sigma2.sqrt(),
        probability: (1.0 / (epsilon * epsilon)).min(1.0),
    })
}

/// Expected count of targeted users served strictly more than `cap` times.
pub fn expected_overexposed(
    model: &PopulationModel,
    counts: &ImpressionCounts,
    cap: usize,
) -> Result<f64> {
    if cap == 0 {
        return Err(Error::InvalidCap);
    }
    validate_counts(model, counts)?;
    let p = 1.0 / model.group_size() as f64;
    per_user_sum(model, counts, |n| Ok(1.0 - binom_cdf(cap as u64, n, p)?))
}

/// Deterministic reach bounds for non-overlapping groups.
///
/// The lower bound sends every win of a group to a single member; a group
/// with any untargeted member can therefore contribute zero. The upper
/// bound serves targeted members round-robin.
pub fn reach_bounds(
    model: &PopulationModel,
    counts: &ImpressionCounts,
    cap: usize,
) -> Result<(u64, u64)> {
    if cap == 0 {
        return Err(Error::InvalidCap);
    }
    validate_counts(model, counts)?;
    if !model.is_partition() {
        return Err(Error::OverlappingGroups);
    }
    let c = cap as u64;
    let (mut lower, mut upper) = (0u64, 0u64);
    for j in 0..model.num_groups() {
        let n = counts.count(j);
        let t = model.targeted_in(j).len() as u64;
        upper += n.min(c * t);
        if t == model.group_size() as u64 {
            lower += n.min(c);
        }
    }
    Ok((lower, upper))
}

/// Expected reach from one group under `cap` when members visit with the
/// probabilities of `prop` instead of uniformly.
pub fn expected_reach_nonuniform(prop: &PropertyVector, wins: u64, cap: usize) -> Result<f64> {
    if cap == 0 {
        return Err(Error::InvalidCap);
    }
    let mut total = 0.0;
    for &q in prop.probs() {
        total += expected_min_capped(wins, q, cap)?;
    }
    Ok(total)
}

/// Expected distinct members of one group reached at least once under the
/// group's visit probabilities.
pub fn expected_unique_reach_nonuniform(prop: &PropertyVector, wins: u64) -> f64 {
    prop.len() as f64 - prop.probs().iter().map(|&q| pow_u(1.0 - q, wins)).sum::<f64>()
}

/// Campaign-level non-uniform reach: per-group expectations summed over
/// fully targeted groups. Requires non-overlapping groups.
pub fn expected_reach_nonuniform_total(
    model: &PopulationModel,
    vectors: &[PropertyVector],
    counts: &ImpressionCounts,
    cap: usize,
) -> Result<f64> {
    if !model.is_partition() {
        return Err(Error::OverlappingGroups);
    }
    validate_counts(model, counts)?;
    if vectors.len() != model.num_groups() {
        return Err(Error::Config(format!(
            "{} property vectors for {} groups",
            vectors.len(),
            model.num_groups()
        )));
    }
    let mut total = 0.0;
    for (j, vector) in vectors.iter().enumerate() {
        let t = model.targeted_in(j).len();
        if t == 0 {
            continue;
        }
        if t != model.group_size() {
            return Err(Error::Config(format!(
                "group {j} is partially targeted; property vectors describe whole groups"
            )));
        }
        if vector.len() != model.group_size() {
            return Err(Error::PropertyVector(format!(
                "vector for group {j} has {} entries, group size is {}",
                vector.len(),
                model.group_size()
            )));
        }
        total += expected_reach_nonuniform(vector, counts.count(j), cap)?;
    }
    Ok(total)
}

/// Empirical reach distribution from Monte Carlo assignment of group wins
/// to uniformly random members.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachDistribution {
    pub mean: f64,
    /// Population variance of the sampled reach values.
    pub variance: f64,
    pub histogram: BTreeMap<u64, u64>,
    pub trials: u64,
}

impl ReachDistribution {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Standard error of the sampled mean.
    pub fn std_error(&self) -> f64 {
        (self.variance / self.trials as f64).sqrt()
    }
}

pub fn mc_reach_distribution(
    model: &PopulationModel,
    counts: &ImpressionCounts,
    cap: usize,
    trials: u64,
    rng_seed: u64,
) -> Result<ReachDistribution> {
    if cap == 0 {
        return Err(Error::InvalidCap);
    }
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    validate_counts(model, counts)?;

    let values: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = crate::rng::stream_rng(rng_seed, crate::rng::domain::MC_TRIAL, t);
            sample_reach_once(model, counts, cap, &mut rng)
        })
        .collect();

    let mut histogram = BTreeMap::new();
    let mut sum = 0.0;
    for &v in &values {
        *histogram.entry(v).or_insert(0u64) += 1;
        sum += v as f64;
    }
    let mean = sum / trials as f64;
    let variance = values
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / trials as f64;

    Ok(ReachDistribution {
        mean,
        variance,
        histogram,
        trials,
    })
}

fn sample_reach_once(
    model: &PopulationModel,
    counts: &ImpressionCounts,
    cap: usize,
    rng: &mut impl Rng,
) -> u64 {
    let mut tally = vec![0u64; model.num_users()];
    let k = model.group_size();
    for j in 0..model.num_groups() {
        let members = model.members(j);
        for _ in 0..counts.count(j) {
            tally[members[rng.random_range(0..k)]] += 1;
        }
    }
    let c = cap as u64;
    model.targeted_users().map(|i| tally[i].min(c)).sum()
}

/// One row of the reach-curve export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachCurvePoint {
    pub t: usize,
    pub cap: usize,
    pub expected_reach: f64,
    pub sigma: Option<f64>,
    pub lower_bound: Option<u64>,
    pub upper_bound: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn single_group_model(k: usize, targeted: usize) -> PopulationModel {
        PopulationModel::new(k, vec![(0..k).collect()], (0..targeted).collect()).unwrap()
    }

    #[test]
    fn deterministic_when_groups_are_singletons() {
        // k = 1, each user its own group.
        let m = PopulationModel::new(3, vec![vec![0], vec![1], vec![2]], vec![0, 1, 2]).unwrap();
        let counts = ImpressionCounts::from_counts(vec![5, 2, 0]);
        for cap in 1..=4usize {
            let want = [5u64, 2, 0]
                .iter()
                .map(|&n| n.min(cap as u64) as f64)
                .sum::<f64>();
            assert_abs_diff_eq!(
                expected_reach(&m, &counts, cap).unwrap(),
                want,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn uncapped_limit_is_mean_exposure() {
        let m = PopulationModel::build_partition(12, 3, 1.0, 1).unwrap();
        let counts = ImpressionCounts::from_counts(vec![4, 0, 2, 1]);
        let total = counts.total() as usize;
        let per_user: f64 = m
            .targeted_users()
            .map(|i| exposure_trials(&m, &counts, i) as f64 / 3.0)
            .sum();
        assert_abs_diff_eq!(
            expected_reach(&m, &counts, total).unwrap(),
            per_user,
            epsilon = 1e-9
        );
    }

    #[test]
    fn pair_in_shared_group_reaches_one() {
        let m = single_group_model(2, 2);
        let counts = ImpressionCounts::from_counts(vec![1]);
        assert_abs_diff_eq!(expected_reach(&m, &counts, 1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unique_reach_examples() {
        let m = single_group_model(2, 1);
        let counts = ImpressionCounts::from_counts(vec![1]);
        assert_abs_diff_eq!(
            expected_unique_reach(&m, &counts).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        let zero = ImpressionCounts::from_counts(vec![0]);
        assert_eq!(expected_unique_reach(&m, &zero).unwrap(), 0.0);
    }

    #[test]
    fn unique_reach_equals_cap_one() {
        let m = PopulationModel::build_overlapping(9, 3, 5, 4).unwrap();
        let counts = ImpressionCounts::from_counts(vec![2, 0, 3, 1, 4]);
        let a = expected_unique_reach(&m, &counts).unwrap();
        let b = expected_reach(&m, &counts, 1).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn rejects_cap_zero() {
        let m = single_group_model(2, 2);
        let counts = ImpressionCounts::new(1);
        assert!(matches!(
            expected_reach(&m, &counts, 0),
            Err(Error::InvalidCap)
        ));
    }

    #[test]
    fn streaming_first_win_unique_reach() {
        let m = single_group_model(2, 2);
        let mut est = ReachEstimator::new(&m, 1).unwrap();
        let reach = est.stream_win(&m, 0).unwrap();
        assert_abs_diff_eq!(reach[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn streaming_degenerate_group_size_one() {
        let m = PopulationModel::new(1, vec![vec![0]], vec![0]).unwrap();
        let mut est = ReachEstimator::new(&m, 3).unwrap();
        for n in 1..=5u64 {
            est.stream_win(&m, 0).unwrap();
            for cap in 1..=3usize {
                assert_abs_diff_eq!(
                    est.reach_at(cap).unwrap(),
                    n.min(cap as u64) as f64,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn streaming_rejects_unknown_group() {
        let m = single_group_model(2, 2);
        let mut est = ReachEstimator::new(&m, 1).unwrap();
        assert!(matches!(
            est.stream_win(&m, 3),
            Err(Error::UnknownGroup(3))
        ));
    }

    #[test]
    fn streaming_matches_batch_partition_and_overlap() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for overlap in [false, true] {
            let model = if overlap {
                PopulationModel::build_overlapping(12, 4, 6, 77).unwrap()
            } else {
                PopulationModel::build_partition(12, 4, 0.75, 77).unwrap()
            };
            let cap = 3;
            let mut est = ReachEstimator::new(&model, cap).unwrap();
            let mut counts = ImpressionCounts::new(model.num_groups());
            for _ in 0..200 {
                let j = rng.random_range(0..model.num_groups());
                est.stream_win(&model, j).unwrap();
                counts.record_win(j).unwrap();
            }
            for m in 1..=cap {
                let batch = expected_reach(&model, &counts, m).unwrap();
                assert_abs_diff_eq!(est.reach_at(m).unwrap(), batch, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn streaming_replay_of_a_full_campaign() {
        // 120 users in 20 groups of 6, cap 3, 250 wins spread round-robin.
        let m = PopulationModel::build_partition(120, 6, 1.0, 42).unwrap();
        let mut est = ReachEstimator::new(&m, 3).unwrap();
        let mut counts = ImpressionCounts::new(20);
        for t in 0..250usize {
            est.stream_win(&m, t % 20).unwrap();
            counts.record_win(t % 20).unwrap();
        }
        for cap in 1..=3usize {
            let batch = expected_reach(&m, &counts, cap).unwrap();
            assert_abs_diff_eq!(est.reach_at(cap).unwrap(), batch, epsilon = 1e-9);
        }
    }

    #[test]
    fn windowed_counts_answer_range_queries() {
        let m = PopulationModel::build_partition(12, 3, 1.0, 2).unwrap();
        let wins: Vec<usize> = (0..40).map(|t| (t * 7) % 4).collect();
        // Whole-campaign counts versus a mid-campaign window.
        let all = ImpressionCounts::from_wins(4, &wins).unwrap();
        let window = ImpressionCounts::from_wins(4, &wins[10..30])
            .unwrap()
            .with_window(10, 30);
        assert_eq!(window.window(), Some((10, 30)));
        assert_eq!(window.total(), 20);
        let whole = expected_reach(&m, &all, 2).unwrap();
        let ranged = expected_reach(&m, &window, 2).unwrap();
        assert!(ranged < whole);
    }

    #[test]
    fn covariance_disjoint_groups_is_zero() {
        let m = PopulationModel::new(4, vec![vec![0, 1], vec![2, 3]], vec![0, 1, 2, 3]).unwrap();
        let counts = ImpressionCounts::from_counts(vec![3, 2]);
        assert_eq!(pair_covariance(&m, &counts, 0, 2), 0.0);
    }

    #[test]
    fn covariance_shared_group_single_win() {
        let m = single_group_model(2, 2);
        let counts = ImpressionCounts::from_counts(vec![1]);
        assert_abs_diff_eq!(pair_covariance(&m, &counts, 0, 1), -0.25, epsilon = 1e-12);
        // Exactly one of the two users is reached, so the sum has zero
        // variance: 2 * 0.25 (per-user) + 2 * (-0.25) = 0.
        assert_abs_diff_eq!(
            unique_reach_variance(&m, &counts).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn variance_single_user_formula() {
        let m = single_group_model(3, 1);
        let counts = ImpressionCounts::from_counts(vec![4]);
        let miss = (2.0f64 / 3.0).powi(4);
        assert_abs_diff_eq!(
            unique_reach_variance(&m, &counts).unwrap(),
            (1.0 - miss) * miss,
            epsilon = 1e-12
        );
    }

    #[test]
    fn chebyshev_examples() {
        let b = chebyshev_bound(4.0, 2.0).unwrap();
        assert_eq!(b.probability, 0.25);
        assert_abs_diff_eq!(b.deviation, 4.0, epsilon = 1e-15);
        assert_eq!(chebyshev_bound(1.0, 1.0).unwrap().probability, 1.0);
        assert_eq!(chebyshev_bound(1.0, 10.0).unwrap().probability, 0.01);
        assert!(chebyshev_bound(1.0, 0.0).is_err());
        assert!(chebyshev_bound(-1.0, 1.0).is_err());
    }

    #[test]
    fn overexposure_examples() {
        // k = 1, one user, n = cap + 1: over-exposure is certain.
        let m = PopulationModel::new(1, vec![vec![0]], vec![0]).unwrap();
        let counts = ImpressionCounts::from_counts(vec![3]);
        assert_abs_diff_eq!(
            expected_overexposed(&m, &counts, 2).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            expected_overexposed(&m, &counts, 3).unwrap(),
            0.0,
            epsilon = 1e-12
        );

        // Two users sharing one group of two, three wins, cap 1:
        // 2 - 2 F(1; 3, 1/2) = 1.
        let m2 = single_group_model(2, 2);
        let counts2 = ImpressionCounts::from_counts(vec![3]);
        assert_abs_diff_eq!(
            expected_overexposed(&m2, &counts2, 1).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bounds_examples() {
        let m = single_group_model(3, 3);
        let counts = ImpressionCounts::from_counts(vec![5]);
        assert_eq!(reach_bounds(&m, &counts, 1).unwrap(), (1, 3));
        let zero = ImpressionCounts::from_counts(vec![0]);
        assert_eq!(reach_bounds(&m, &zero, 2).unwrap(), (0, 0));
    }

    #[test]
    fn bounds_coincide_when_every_count_fits_under_the_cap() {
        let m = PopulationModel::build_partition(12, 3, 1.0, 6).unwrap();
        let counts = ImpressionCounts::from_counts(vec![2, 1, 0, 2]);
        assert_eq!(reach_bounds(&m, &counts, 2).unwrap(), (5, 5));
    }

    #[test]
    fn bounds_partially_targeted_group_can_reach_nobody() {
        let m = single_group_model(3, 2);
        let counts = ImpressionCounts::from_counts(vec![5]);
        let (lower, upper) = reach_bounds(&m, &counts, 1).unwrap();
        assert_eq!((lower, upper), (0, 2));
        let e = expected_reach(&m, &counts, 1).unwrap();
        assert!(lower as f64 <= e && e <= upper as f64);
    }

    #[test]
    fn bounds_reject_overlap() {
        let m = PopulationModel::build_overlapping(6, 3, 4, 3).unwrap();
        let counts = ImpressionCounts::new(4);
        assert!(matches!(
            reach_bounds(&m, &counts, 1),
            Err(Error::OverlappingGroups)
        ));
    }

    #[test]
    fn nonuniform_uniform_vector_reduces_to_uniform_case() {
        let m = single_group_model(4, 4);
        let counts = ImpressionCounts::from_counts(vec![7]);
        let uniform = PropertyVector::uniform(4).unwrap();
        for cap in 1..=3usize {
            let a = expected_reach_nonuniform(&uniform, 7, cap).unwrap();
            let b = expected_reach(&m, &counts, cap).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn nonuniform_single_active_user() {
        let v = PropertyVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(
            expected_reach_nonuniform(&v, 5, 1).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected_unique_reach_nonuniform(&v, 9), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nonuniform_two_member_example() {
        let v = PropertyVector::new(vec![0.2, 0.8]).unwrap();
        assert_abs_diff_eq!(
            expected_reach_nonuniform(&v, 2, 1).unwrap(),
            1.32,
            epsilon = 1e-12
        );
    }

    #[test]
    fn nonuniform_unique_examples() {
        let v = PropertyVector::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(expected_unique_reach_nonuniform(&v, 3), 1.75, epsilon = 1e-12);
        assert_eq!(expected_unique_reach_nonuniform(&v, 0), 0.0);
    }

    #[test]
    fn nonuniform_total_rejects_overlap() {
        let m = PopulationModel::build_overlapping(6, 3, 4, 3).unwrap();
        let vs = vec![PropertyVector::uniform(3).unwrap(); 4];
        let counts = ImpressionCounts::new(4);
        assert!(matches!(
            expected_reach_nonuniform_total(&m, &vs, &counts, 1),
            Err(Error::OverlappingGroups)
        ));
    }

    #[test]
    fn mc_zero_variance_when_deterministic() {
        let m = PopulationModel::new(2, vec![vec![0], vec![1]], vec![0, 1]).unwrap();
        let counts = ImpressionCounts::from_counts(vec![4, 1]);
        let d = mc_reach_distribution(&m, &counts, 2, 500, 3).unwrap();
        assert_eq!(d.variance, 0.0);
        assert_abs_diff_eq!(d.mean, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn mc_variance_matches_analytic_unique_reach_variance() {
        let m = PopulationModel::build_partition(12, 3, 1.0, 7).unwrap();
        let counts = ImpressionCounts::from_counts(vec![4, 2, 5, 1]);
        let analytic = unique_reach_variance(&m, &counts).unwrap();
        let d = mc_reach_distribution(&m, &counts, 1, 100_000, 17).unwrap();
        assert!(
            (d.variance - analytic).abs() <= 0.05 * analytic,
            "mc variance {} vs analytic {analytic}",
            d.variance
        );
    }

    #[test]
    fn mc_deterministic_per_seed() {
        let m = PopulationModel::build_partition(12, 3, 1.0, 5).unwrap();
        let counts = ImpressionCounts::from_counts(vec![3, 1, 4, 1]);
        let a = mc_reach_distribution(&m, &counts, 2, 400, 9).unwrap();
        let b = mc_reach_distribution(&m, &counts, 2, 400, 9).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        /// Streaming equals batch after any win sequence, on partitions and
        /// overlapping topologies alike.
        #[test]
        fn streaming_equals_batch(
            k in 1usize..5,
            num_groups in 1usize..6,
            overlap in proptest::bool::ANY,
            cap in 1usize..4,
            wins in proptest::collection::vec(0usize..6, 0..60),
            seed in 0u64..1000,
        ) {
            let model = if overlap {
                PopulationModel::build_overlapping(k * 3, k, num_groups, seed).unwrap()
            } else {
                PopulationModel::build_partition(k * num_groups, k, 0.8, seed).unwrap()
            };
            let mut est = ReachEstimator::new(&model, cap).unwrap();
            let mut counts = ImpressionCounts::new(model.num_groups());
            for w in wins {
                let j = w % model.num_groups();
                est.stream_win(&model, j).unwrap();
                counts.record_win(j).unwrap();
            }
            for m in 1..=cap {
                let batch = expected_reach(&model, &counts, m).unwrap();
                prop_assert!((est.reach_at(m).unwrap() - batch).abs() <= 1e-9);
            }
            // Wider caps never count fewer impressions.
            prop_assert!(est.reaches().windows(2).all(|w| w[0] <= w[1] + 1e-12));
        }

        /// The two closed forms agree, and reach is monotone in the counts,
        /// monotone in the cap, and bounded by total group impressions.
        #[test]
        fn closed_form_identities(
            k in 1usize..6,
            num_groups in 1usize..6,
            cap in 1usize..5,
            counts in proptest::collection::vec(0u64..30, 1..6),
            seed in 0u64..1000,
        ) {
            let num_groups = counts.len().max(num_groups).min(counts.len());
            let model = PopulationModel::build_partition(k * num_groups, k, 1.0, seed).unwrap();
            let counts = ImpressionCounts::from_counts(counts[..num_groups].to_vec());

            let direct = expected_reach(&model, &counts, cap).unwrap();
            let shortfall = expected_reach_shortfall_form(&model, &counts, cap).unwrap();
            prop_assert!((direct - shortfall).abs() <= 1e-12 * direct.max(1.0));

            prop_assert!(direct <= counts.total() as f64 + 1e-9);
            let wider = expected_reach(&model, &counts, cap + 1).unwrap();
            prop_assert!(wider + 1e-12 >= direct);

            let mut bumped = ImpressionCounts::from_counts(counts.counts().to_vec());
            bumped.record_win(0).unwrap();
            let bigger = expected_reach(&model, &bumped, cap).unwrap();
            prop_assert!(bigger + 1e-12 >= direct);
        }
    }
}
