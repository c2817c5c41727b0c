//! Binomial pmf/cdf on an extended domain, plus the incremental row table
//! that backs the streaming estimators.
//!
//! Both streaming algorithms evaluate `f(l; n, p)` for every `l <= c` while
//! `n` grows one trial at a time, so rows are derived from the previous row
//! in O(c) with
//!
//! ```text
//! f(l; n, p) = f(l; n-1, p) * n / (n - l) * (1 - p),   n > l,
//! ```
//!
//! seeded on the diagonal by `f(l; l, p) = p^l`. The domain is extended so
//! that `f(x; n, p) = 0` and `F(x; n, p) = 1` whenever `x > n`.

use crate::error::{Error, Result};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidProbability(p));
    }
    Ok(())
}

/// Probability of exactly `x` successes in `n` independent trials with
/// success probability `p`. Exactly zero for `x > n`.
///
/// Evaluated in log space so it stays finite for trial counts up to 10^6.
pub fn binom_pmf(x: u64, n: u64, p: f64) -> Result<f64> {
    check_probability(p)?;
    if x > n {
        return Ok(0.0);
    }
    if p == 0.0 {
        return Ok(if x == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if x == n { 1.0 } else { 0.0 });
    }
    let (xf, nf) = (x as f64, n as f64);
    let ln_choose = ln_gamma(nf + 1.0) - ln_gamma(xf + 1.0) - ln_gamma(nf - xf + 1.0);
    Ok((ln_choose + xf * p.ln() + (nf - xf) * (-p).ln_1p()).exp())
}

/// Probability of at most `x` successes in `n` trials. Exactly one for
/// `x >= n`.
pub fn binom_cdf(x: u64, n: u64, p: f64) -> Result<f64> {
    check_probability(p)?;
    if x >= n {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(1.0);
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    // P(X <= x) = I_{1-p}(n - x, x + 1), the regularized incomplete beta.
    Ok(beta_reg((n - x) as f64, (x + 1) as f64, 1.0 - p))
}

/// Cached pmf rows `[f(0; n, p), ..., f(cap; n, p)]` for every trial count
/// seen so far. Rows are retained for range queries, so memory grows with
/// the largest `n`.
///
/// Extension is single-writer; a built table can be read concurrently.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    success_prob: f64,
    cap: usize,
    rows: Vec<Vec<f64>>,
}

impl BinomialTable {
    /// New table for success probability `p` in (0, 1] and frequency cap
    /// `cap >= 1`. Row `n = 0` is present from the start.
    pub fn new(success_prob: f64, cap: usize) -> Result<Self> {
        if !(success_prob > 0.0 && success_prob <= 1.0) || !success_prob.is_finite() {
            return Err(Error::InvalidProbability(success_prob));
        }
        if cap == 0 {
            return Err(Error::InvalidCap);
        }
        let mut row0 = vec![0.0; cap + 1];
        row0[0] = 1.0;
        Ok(Self {
            success_prob,
            cap,
            rows: vec![row0],
        })
    }

    /// Table at `p = 1/k` for groups of size `k`.
    pub fn for_group_size(k: usize, cap: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("group size must be at least 1".into()));
        }
        Self::new(1.0 / k as f64, cap)
    }

    pub fn success_prob(&self) -> f64 {
        self.success_prob
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Largest trial count with a built row.
    pub fn max_trials(&self) -> u64 {
        (self.rows.len() - 1) as u64
    }

    /// Add the row for `new_n`. The row for `new_n - 1` must already exist;
    /// re-adding an existing row is a no-op. Runs in O(cap).
    pub fn extend_table(&mut self, new_n: u64) -> Result<()> {
        let last = self.max_trials();
        if new_n <= last {
            return Ok(());
        }
        if new_n != last + 1 {
            return Err(Error::TableGap {
                missing: new_n - 1,
                last,
            });
        }
        let n = new_n;
        let q = 1.0 - self.success_prob;
        let prev = &self.rows[self.rows.len() - 1];
        let mut row = vec![0.0; self.cap + 1];
        for (l, slot) in row.iter_mut().enumerate() {
            let lu = l as u64;
            if lu < n {
                *slot = prev[l] * n as f64 / (n - lu) as f64 * q;
            } else if lu == n {
                // Diagonal seed: all n trials succeed.
                *slot = self.success_prob.powi(l as i32);
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Build all rows up to and including `n`.
    pub fn ensure_rows(&mut self, n: u64) -> Result<()> {
        while self.max_trials() < n {
            let next = self.max_trials() + 1;
            self.extend_table(next)?;
        }
        Ok(())
    }

    /// Row `[f(0; n, p), ..., f(cap; n, p)]`.
    pub fn row(&self, n: u64) -> Result<&[f64]> {
        self.rows
            .get(n as usize)
            .map(Vec::as_slice)
            .ok_or(Error::TableGap {
                missing: n,
                last: self.max_trials(),
            })
    }

    /// Cached `f(l; n, p)`; zero for `l > n` by the extended domain.
    pub fn pmf(&self, l: usize, n: u64) -> Result<f64> {
        if l > self.cap {
            return Err(Error::Domain(format!(
                "pmf index {l} exceeds table cap {}",
                self.cap
            )));
        }
        Ok(self.row(n)?[l])
    }

    /// `F(x; n, p)` from cached rows, for `x <= cap`. Uses the extended
    /// domain (`exactly 1` once `x >= n`) so fresh users always report a
    /// full cdf.
    pub fn cdf(&self, x: usize, n: u64) -> Result<f64> {
        if x > self.cap {
            return Err(Error::Domain(format!(
                "cdf index {x} exceeds table cap {}",
                self.cap
            )));
        }
        if x as u64 >= n {
            return Ok(1.0);
        }
        let row = self.row(n)?;
        Ok(row[..=x].iter().sum())
    }
}
