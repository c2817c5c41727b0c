//! Users, anonymous groups, targeting, and the derived membership indices.
//!
//! A `PopulationModel` is immutable once built and is shared freely across
//! parallel simulation workers. Groups all have the same size `k`; a user
//! may belong to several groups only when the model is built as overlapping.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How targeted users are chosen when building a population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    /// Explicit user indices.
    List(Vec<usize>),
    /// A number of users placed into groups by the given rule.
    Placed { count: usize, placement: Placement },
    /// Fraction of the population, sampled uniformly.
    Fraction(f64),
}

impl TargetSpec {
    pub fn all() -> Self {
        TargetSpec::Fraction(1.0)
    }
}

/// Placement rule for targeted users across the groups of a partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Fill as few groups as possible.
    Concentrated,
    /// Round-robin, one user per group before wrapping.
    Spread,
    /// Uniform sample over all users.
    Random,
    /// Distribute evenly over exactly this many groups.
    Grouped(usize),
}

#[derive(Debug, Clone)]
pub struct PopulationModel {
    num_users: usize,
    group_size: usize,
    groups: Vec<Vec<usize>>,
    targeted: Vec<bool>,
    num_targeted: usize,
    /// G_i: groups containing user i.
    groups_of_user: Vec<Vec<usize>>,
    /// U_j: targeted members of group j.
    targeted_in_group: Vec<Vec<usize>>,
    partition: bool,
}

impl PopulationModel {
    /// Build from explicit groups. Every group must have the same size and
    /// hold distinct, in-range user indices.
    pub fn new(num_users: usize, groups: Vec<Vec<usize>>, targeted: Vec<usize>) -> Result<Self> {
        if num_users == 0 {
            return Err(Error::Config("population must contain users".into()));
        }
        if groups.is_empty() {
            return Err(Error::Config("population must contain groups".into()));
        }
        let group_size = groups[0].len();
        if group_size == 0 {
            return Err(Error::Config("groups must not be empty".into()));
        }
        let mut sorted_groups = Vec::with_capacity(groups.len());
        for (j, g) in groups.into_iter().enumerate() {
            if g.len() != group_size {
                return Err(Error::Config(format!(
                    "group {j} has {} members, expected {group_size} (all groups share one size)",
                    g.len()
                )));
            }
            let mut g = g;
            g.sort_unstable();
            if g.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("group {j} repeats a user")));
            }
            if *g.last().unwrap() >= num_users {
                return Err(Error::Config(format!(
                    "group {j} references user {} outside 0..{num_users}",
                    g.last().unwrap()
                )));
            }
            sorted_groups.push(g);
        }

        let mut targeted_flags = vec![false; num_users];
        for i in targeted {
            if i >= num_users {
                return Err(Error::Config(format!(
                    "targeted user {i} outside 0..{num_users}"
                )));
            }
            targeted_flags[i] = true;
        }
        let num_targeted = targeted_flags.iter().filter(|t| **t).count();

        let mut groups_of_user = vec![Vec::new(); num_users];
        let mut targeted_in_group = vec![Vec::new(); sorted_groups.len()];
        for (j, g) in sorted_groups.iter().enumerate() {
            for &i in g {
                groups_of_user[i].push(j);
                if targeted_flags[i] {
                    targeted_in_group[j].push(i);
                }
            }
        }
        let partition = groups_of_user.iter().all(|gs| gs.len() <= 1);

        Ok(Self {
            num_users,
            group_size,
            groups: sorted_groups,
            targeted: targeted_flags,
            num_targeted,
            groups_of_user,
            targeted_in_group,
            partition,
        })
    }

    /// Non-overlapping groups covering every user, with a targeted fraction
    /// sampled uniformly. Deterministic for a fixed seed.
    pub fn build_partition(
        num_users: usize,
        group_size: usize,
        targeted_fraction: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        Self::build_partition_with(
            num_users,
            group_size,
            &TargetSpec::Fraction(targeted_fraction),
            rng_seed,
        )
    }

    /// Partition builder with full control over target selection.
    pub fn build_partition_with(
        num_users: usize,
        group_size: usize,
        target: &TargetSpec,
        rng_seed: u64,
    ) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::Config("group size must be at least 1".into()));
        }
        if num_users == 0 || !num_users.is_multiple_of(group_size) {
            return Err(Error::Config(format!(
                "group size {group_size} does not divide population {num_users}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut order: Vec<usize> = (0..num_users).collect();
        order.shuffle(&mut rng);
        let groups: Vec<Vec<usize>> = order.chunks(group_size).map(|c| c.to_vec()).collect();
        let targeted = resolve_targets(&groups, num_users, group_size, target, &mut rng)?;
        Self::new(num_users, groups, targeted)
    }

    /// Groups sampled independently; a user may appear in several groups
    /// and some users may appear in none. All users are targeted.
    pub fn build_overlapping(
        num_users: usize,
        group_size: usize,
        num_groups: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        if group_size == 0 || num_groups == 0 {
            return Err(Error::Config(
                "group size and group count must be at least 1".into(),
            ));
        }
        if group_size > num_users {
            return Err(Error::Config(format!(
                "group size {group_size} exceeds population {num_users}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let groups: Vec<Vec<usize>> = (0..num_groups)
            .map(|_| {
                rand::seq::index::sample(&mut rng, num_users, group_size)
                    .into_iter()
                    .collect()
            })
            .collect();
        Self::new(num_users, groups, (0..num_users).collect())
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_targeted(&self) -> usize {
        self.num_targeted
    }

    pub fn is_partition(&self) -> bool {
        self.partition
    }

    pub fn is_targeted(&self, user: usize) -> bool {
        self.targeted[user]
    }

    /// Members of group `j`, sorted.
    pub fn members(&self, group: usize) -> &[usize] {
        &self.groups[group]
    }

    /// U_j: targeted members of group `j`, sorted.
    pub fn targeted_in(&self, group: usize) -> &[usize] {
        &self.targeted_in_group[group]
    }

    /// G_i: groups containing user `i`, sorted.
    pub fn groups_of(&self, user: usize) -> &[usize] {
        &self.groups_of_user[user]
    }

    /// Targeted user indices in ascending order.
    pub fn targeted_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.targeted
            .iter()
            .enumerate()
            .filter(|(_, t)| **t)
            .map(|(i, _)| i)
    }

    pub fn check_group(&self, group: usize) -> Result<()> {
        if group >= self.groups.len() {
            return Err(Error::UnknownGroup(group));
        }
        Ok(())
    }

    /// Mean fraction of targeted members over groups that contain at least
    /// one targeted user.
    pub fn coverage(&self) -> Result<f64> {
        let mut sum = 0.0;
        let mut qualifying = 0usize;
        for us in &self.targeted_in_group {
            if !us.is_empty() {
                sum += us.len() as f64 / self.group_size as f64;
                qualifying += 1;
            }
        }
        if qualifying == 0 {
            return Err(Error::NoTargetedUsers);
        }
        Ok(sum / qualifying as f64)
    }
}

fn resolve_targets(
    groups: &[Vec<usize>],
    num_users: usize,
    group_size: usize,
    target: &TargetSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    match target {
        TargetSpec::List(ids) => Ok(ids.clone()),
        TargetSpec::Fraction(f) => {
            if !(0.0..=1.0).contains(f) {
                return Err(Error::Config(format!(
                    "targeted fraction must lie in [0, 1], got {f}"
                )));
            }
            let count = (f * num_users as f64).round() as usize;
            if count == num_users {
                return Ok((0..num_users).collect());
            }
            Ok(rand::seq::index::sample(rng, num_users, count)
                .into_iter()
                .collect())
        }
        TargetSpec::Placed { count, placement } => {
            if *count > num_users {
                return Err(Error::Config(format!(
                    "cannot target {count} of {num_users} users"
                )));
            }
            place_targets(groups, group_size, *count, *placement, rng)
        }
    }
}

fn place_targets(
    groups: &[Vec<usize>],
    group_size: usize,
    count: usize,
    placement: Placement,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let num_groups = groups.len();
    match placement {
        Placement::Random => {
            let num_users = num_groups * group_size;
            Ok(rand::seq::index::sample(rng, num_users, count)
                .into_iter()
                .collect())
        }
        Placement::Concentrated => {
            let needed = count.div_ceil(group_size);
            pick_from_groups(groups, count, needed)
        }
        Placement::Spread => {
            let used = count.min(num_groups);
            pick_from_groups(groups, count, used)
        }
        Placement::Grouped(g) => {
            if g == 0 || g > num_groups {
                return Err(Error::Config(format!(
                    "placement asks for {g} groups, model has {num_groups}"
                )));
            }
            if count > g * group_size {
                return Err(Error::Config(format!(
                    "{count} targeted users do not fit into {g} groups of {group_size}"
                )));
            }
            pick_from_groups(groups, count, g)
        }
    }
}

/// Take `count` users from the first `use_groups` groups, round-robin so
/// the split is as even as possible.
fn pick_from_groups(groups: &[Vec<usize>], count: usize, use_groups: usize) -> Result<Vec<usize>> {
    let group_size = groups.first().map_or(0, Vec::len);
    if count > use_groups * group_size {
        return Err(Error::Config(format!(
            "{count} targeted users do not fit into {use_groups} groups"
        )));
    }
    let mut picked = Vec::with_capacity(count);
    let mut depth = 0usize;
    while picked.len() < count {
        for g in groups.iter().take(use_groups) {
            if picked.len() == count {
                break;
            }
            picked.push(g[depth]);
        }
        depth += 1;
    }
    Ok(picked)
}

/// Sorted within-group visit probabilities, summing to one.
///
/// Inputs are normalized, but only when they already sum to one within
/// 1e-9; larger discrepancies are rejected as configuration mistakes.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyVector {
    probs: Vec<f64>,
}

impl PropertyVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::PropertyVector("vector is empty".into()));
        }
        if probs.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(Error::PropertyVector(
                "entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::PropertyVector(format!(
                "entries sum to {sum}, expected 1 within 1e-9"
            )));
        }
        let mut probs: Vec<f64> = probs.iter().map(|q| q / sum).collect();
        probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { probs })
    }

    /// Equal visit probabilities `1/k`.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::PropertyVector("vector is empty".into()));
        }
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    /// Normalized geometric decay `ratio^i`; smaller ratios give more
    /// skewed groups.
    pub fn geometric(k: usize, ratio: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::PropertyVector("vector is empty".into()));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::PropertyVector(format!(
                "geometric ratio must lie in (0, 1], got {ratio}"
            )));
        }
        let raw: Vec<f64> = (0..k).map(|i| ratio.powi(i as i32)).collect();
        let sum: f64 = raw.iter().sum();
        let mut probs: Vec<f64> = raw.into_iter().map(|w| w / sum).collect();
        probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}
