//! Brute-force oracles shared by the integration suites. Everything here
//! enumerates or samples directly from definitions and never calls the
//! estimator code paths it is used to check.

use std::collections::HashMap;

use anonreach::population::PopulationModel;

/// Exact statistics of a win sequence, computed by enumerating every
/// possible assignment of wins to group members (`k^wins` outcomes, each
/// with probability `k^-wins`).
pub struct EnumOracle {
    /// E[reach] for caps `1..=max_cap`.
    pub reach_mean: Vec<f64>,
    /// Variance of unique reach (cap 1).
    pub unique_variance: f64,
    /// Covariance of the reached indicators per targeted pair (i < j).
    pub pair_cov: HashMap<(usize, usize), f64>,
    /// E[# users served more than cap] for caps `1..=max_cap`.
    pub overexposed: Vec<f64>,
}

pub fn enumerate_assignments(
    model: &PopulationModel,
    wins: &[usize],
    max_cap: usize,
) -> EnumOracle {
    let k = model.group_size();
    let combos = (k as u64).pow(wins.len() as u32);
    let weight = 1.0 / combos as f64;
    let targeted: Vec<usize> = model.targeted_users().collect();

    let mut reach_mean = vec![0.0; max_cap];
    let mut overexposed = vec![0.0; max_cap];
    let mut unique_mean = 0.0;
    let mut unique_sq_mean = 0.0;
    let mut hit_mean: HashMap<usize, f64> = HashMap::new();
    let mut pair_hit_mean: HashMap<(usize, usize), f64> = HashMap::new();

    let mut counts = vec![0u32; model.num_users()];
    for combo in 0..combos {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut digits = combo;
        for &group in wins {
            let member = model.members(group)[(digits % k as u64) as usize];
            digits /= k as u64;
            counts[member] += 1;
        }

        for (m, slot) in reach_mean.iter_mut().enumerate() {
            let cap = (m + 1) as u32;
            *slot += weight
                * targeted
                    .iter()
                    .map(|&i| counts[i].min(cap) as f64)
                    .sum::<f64>();
        }
        for (m, slot) in overexposed.iter_mut().enumerate() {
            let cap = (m + 1) as u32;
            *slot += weight * targeted.iter().filter(|&&i| counts[i] > cap).count() as f64;
        }

        let unique = targeted.iter().filter(|&&i| counts[i] >= 1).count() as f64;
        unique_mean += weight * unique;
        unique_sq_mean += weight * unique * unique;
        for (a, &i) in targeted.iter().enumerate() {
            if counts[i] >= 1 {
                *hit_mean.entry(i).or_insert(0.0) += weight;
                for &j in &targeted[a + 1..] {
                    if counts[j] >= 1 {
                        *pair_hit_mean.entry((i, j)).or_insert(0.0) += weight;
                    }
                }
            }
        }
    }

    let mut pair_cov = HashMap::new();
    for (a, &i) in targeted.iter().enumerate() {
        for &j in &targeted[a + 1..] {
            let ei = hit_mean.get(&i).copied().unwrap_or(0.0);
            let ej = hit_mean.get(&j).copied().unwrap_or(0.0);
            let eij = pair_hit_mean.get(&(i, j)).copied().unwrap_or(0.0);
            pair_cov.insert((i, j), eij - ei * ej);
        }
    }

    EnumOracle {
        reach_mean,
        unique_variance: unique_sq_mean - unique_mean * unique_mean,
        pair_cov,
        overexposed,
    }
}

/// Exact probability, before each win in the sequence, that the next
/// request from that win's group comes from a targeted user still under
/// `cap`. Averages over every assignment of the preceding wins.
pub fn enumerate_reach_probabilities(
    model: &PopulationModel,
    wins: &[usize],
    cap: u32,
) -> Vec<f64> {
    let k = model.group_size();
    let mut out = Vec::with_capacity(wins.len());
    let mut counts = vec![0u32; model.num_users()];
    for (t, &group) in wins.iter().enumerate() {
        let combos = (k as u64).pow(t as u32);
        let weight = 1.0 / combos as f64;
        let mut p = 0.0;
        for combo in 0..combos {
            counts.iter_mut().for_each(|c| *c = 0);
            let mut digits = combo;
            for &g in &wins[..t] {
                let member = model.members(g)[(digits % k as u64) as usize];
                digits /= k as u64;
                counts[member] += 1;
            }
            let under = model
                .targeted_in(group)
                .iter()
                .filter(|&&i| counts[i] < cap)
                .count() as f64;
            p += weight * under / k as f64;
        }
        out.push(p);
    }
    out
}
