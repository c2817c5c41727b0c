//! Python bindings for the core reach-measurement and bidding types.
//!
//! Build with `cargo build -p anonreach-py --release`, copy
//! `libanonreach_py.so` next to your script as `anonreach_py.so`, then
//! `import anonreach_py`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use anonreach::auction as au;
use anonreach::binomial;
use anonreach::measurement as me;
use anonreach::optimization as opt;
use anonreach::population as pop;

fn err(e: anonreach::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "PopulationModel", skip_from_py_object)]
#[derive(Clone)]
struct PyPopulationModel {
    inner: pop::PopulationModel,
}

#[pymethods]
impl PyPopulationModel {
    #[new]
    fn new(num_users: usize, groups: Vec<Vec<usize>>, targeted: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: pop::PopulationModel::new(num_users, groups, targeted).map_err(err)?,
        })
    }

    /// Non-overlapping groups covering every user.
    #[staticmethod]
    fn build_partition(
        num_users: usize,
        group_size: usize,
        targeted_fraction: f64,
        seed: u64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: pop::PopulationModel::build_partition(
                num_users,
                group_size,
                targeted_fraction,
                seed,
            )
            .map_err(err)?,
        })
    }

    /// Independently sampled groups; users may repeat across groups.
    #[staticmethod]
    fn build_overlapping(
        num_users: usize,
        group_size: usize,
        num_groups: usize,
        seed: u64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: pop::PopulationModel::build_overlapping(num_users, group_size, num_groups, seed)
                .map_err(err)?,
        })
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn group_size(&self) -> usize {
        self.inner.group_size()
    }

    #[getter]
    fn num_groups(&self) -> usize {
        self.inner.num_groups()
    }

    #[getter]
    fn num_targeted(&self) -> usize {
        self.inner.num_targeted()
    }

    #[getter]
    fn is_partition(&self) -> bool {
        self.inner.is_partition()
    }

    fn coverage(&self) -> PyResult<f64> {
        self.inner.coverage().map_err(err)
    }

    fn members(&self, group: usize) -> PyResult<Vec<usize>> {
        self.inner.check_group(group).map_err(err)?;
        Ok(self.inner.members(group).to_vec())
    }

    fn targeted_in(&self, group: usize) -> PyResult<Vec<usize>> {
        self.inner.check_group(group).map_err(err)?;
        Ok(self.inner.targeted_in(group).to_vec())
    }

    fn groups_of(&self, user: usize) -> Vec<usize> {
        self.inner.groups_of(user).to_vec()
    }
}

#[pyclass(name = "PropertyVector", skip_from_py_object)]
#[derive(Clone)]
struct PyPropertyVector {
    inner: pop::PropertyVector,
}

#[pymethods]
impl PyPropertyVector {
    #[new]
    fn new(probs: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: pop::PropertyVector::new(probs).map_err(err)?,
        })
    }

    #[staticmethod]
    fn uniform(k: usize) -> PyResult<Self> {
        Ok(Self {
            inner: pop::PropertyVector::uniform(k).map_err(err)?,
        })
    }

    #[staticmethod]
    fn geometric(k: usize, ratio: f64) -> PyResult<Self> {
        Ok(Self {
            inner: pop::PropertyVector::geometric(k, ratio).map_err(err)?,
        })
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }
}

#[pyclass(name = "ImpressionCounts", skip_from_py_object)]
#[derive(Clone)]
struct PyImpressionCounts {
    inner: me::ImpressionCounts,
}

#[pymethods]
impl PyImpressionCounts {
    #[new]
    fn new(num_groups: usize) -> Self {
        Self {
            inner: me::ImpressionCounts::new(num_groups),
        }
    }

    #[staticmethod]
    fn from_counts(counts: Vec<u64>) -> Self {
        Self {
            inner: me::ImpressionCounts::from_counts(counts),
        }
    }

    fn record_win(&mut self, group: usize) -> PyResult<()> {
        self.inner.record_win(group).map_err(err)
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts().to_vec()
    }

    #[getter]
    fn total(&self) -> u64 {
        self.inner.total()
    }
}

/// Streaming reach estimator bound to one population model.
#[pyclass(name = "ReachEstimator")]
struct PyReachEstimator {
    model: pop::PopulationModel,
    inner: me::ReachEstimator,
}

#[pymethods]
impl PyReachEstimator {
    #[new]
    fn new(model: &PyPopulationModel, cap: usize) -> PyResult<Self> {
        Ok(Self {
            inner: me::ReachEstimator::new(&model.inner, cap).map_err(err)?,
            model: model.inner.clone(),
        })
    }

    /// Fold one win and return the updated reach curve R[1..=cap].
    fn stream_win(&mut self, group: usize) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .stream_win(&self.model, group)
            .map_err(err)?
            .to_vec())
    }

    fn reach_at(&self, cap: usize) -> PyResult<f64> {
        self.inner.reach_at(cap).map_err(err)
    }

    #[getter]
    fn reaches(&self) -> Vec<f64> {
        self.inner.reaches().to_vec()
    }

    fn exposure_trials(&self, user: usize) -> u64 {
        self.inner.exposure_trials(&self.model, user)
    }
}

/// Streaming reach-probability state bound to one population model.
#[pyclass(name = "ReachProbability")]
struct PyReachProbability {
    model: pop::PopulationModel,
    inner: opt::ReachProbabilityState,
}

#[pymethods]
impl PyReachProbability {
    #[new]
    fn new(model: &PyPopulationModel, cap: usize) -> PyResult<Self> {
        Ok(Self {
            inner: opt::ReachProbabilityState::new(&model.inner, cap).map_err(err)?,
            model: model.inner.clone(),
        })
    }

    fn reach_probability(&self, group: usize) -> PyResult<f64> {
        self.inner.reach_probability(&self.model, group).map_err(err)
    }

    fn record_win(&mut self, group: usize) -> PyResult<()> {
        self.inner.record_win(&self.model, group).map_err(err)
    }
}

struct SecondPriceIdentity;

impl opt::BidInverse for SecondPriceIdentity {
    fn bid_for_marginal_cost(&self, cost: f64) -> f64 {
        cost
    }
}

#[pyclass(name = "BidderState")]
struct PyBidderState {
    inner: opt::BidderState,
}

#[pymethods]
impl PyBidderState {
    #[new]
    fn new(
        budget: f64,
        total_requests: u64,
        learning_rate: f64,
        initial_lambda: f64,
        bid_floor: f64,
        bid_cap: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: opt::BidderState::new(
                budget,
                total_requests,
                learning_rate,
                initial_lambda,
                bid_floor,
                bid_cap,
            )
            .map_err(err)?,
        })
    }

    /// Second-price bid for a request valued at `reach_probability`.
    fn bid(&self, reach_probability: f64) -> PyResult<f64> {
        self.inner
            .bid(reach_probability, &SecondPriceIdentity)
            .map_err(err)
    }

    fn try_pay(&mut self, price: f64) -> bool {
        self.inner.try_pay(price)
    }

    fn dual_update(&mut self, spend: f64) {
        self.inner.dual_update(spend)
    }

    #[getter]
    fn lambda_value(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn spent(&self) -> f64 {
        self.inner.spent()
    }

    #[getter]
    fn remaining(&self) -> f64 {
        self.inner.remaining()
    }

    #[getter]
    fn is_active(&self) -> bool {
        self.inner.is_active()
    }
}

/// Deterministic random source for auction draws.
#[pyclass(name = "RandomSource")]
struct PyRandomSource {
    rng: rand_chacha::ChaCha8Rng,
}

#[pymethods]
impl PyRandomSource {
    #[new]
    fn new(seed: u64) -> Self {
        use rand_chacha::rand_core::SeedableRng;
        Self {
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[pyclass(name = "SecondPriceAuction")]
struct PySecondPriceAuction {
    inner: au::SecondPriceAuction,
}

#[pymethods]
impl PySecondPriceAuction {
    #[new]
    fn new(log_mean: f64, log_var: f64) -> PyResult<Self> {
        Ok(Self {
            inner: au::SecondPriceAuction::new(log_mean, log_var).map_err(err)?,
        })
    }

    fn sample_price(&self, rng: &mut PyRandomSource) -> f64 {
        self.inner.sample_price(&mut rng.rng)
    }

    /// Returns (won, price, paid). Ties lose.
    fn run_auction(&self, bid: f64, rng: &mut PyRandomSource) -> (bool, f64, f64) {
        let out = self.inner.run_auction(bid, &mut rng.rng);
        (out.won, out.price, out.paid)
    }

    #[getter]
    fn mean_price(&self) -> f64 {
        self.inner.mean_price()
    }

    fn win_probability(&self, bid: f64) -> f64 {
        self.inner.win_probability(bid)
    }

    fn expected_payment(&self, bid: f64) -> f64 {
        self.inner.expected_payment(bid)
    }
}

/// Request stream exposing group ids, with hidden users kept for scoring.
#[pyclass(name = "RequestStream")]
struct PyRequestStream {
    inner: au::RequestStream,
}

#[pymethods]
impl PyRequestStream {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn group(&self, t: usize) -> usize {
        self.inner.group(t)
    }

    #[getter]
    fn groups(&self) -> Vec<usize> {
        self.inner.groups().to_vec()
    }

    /// Ground-truth user of request `t`; scoring only.
    fn ground_truth_user(&self, t: usize) -> usize {
        self.inner.ground_truth_user(t)
    }
}

/// Summary of a Monte Carlo reach distribution.
#[pyclass(name = "ReachDistribution")]
struct PyReachDistribution {
    #[pyo3(get)]
    mean: f64,
    #[pyo3(get)]
    variance: f64,
    #[pyo3(get)]
    trials: u64,
    #[pyo3(get)]
    histogram: Vec<(u64, u64)>,
}

#[pyfunction]
fn binom_pmf(x: u64, n: u64, p: f64) -> PyResult<f64> {
    binomial::binom_pmf(x, n, p).map_err(err)
}

#[pyfunction]
fn binom_cdf(x: u64, n: u64, p: f64) -> PyResult<f64> {
    binomial::binom_cdf(x, n, p).map_err(err)
}

#[pyfunction]
fn expected_reach(
    model: &PyPopulationModel,
    counts: &PyImpressionCounts,
    cap: usize,
) -> PyResult<f64> {
    me::expected_reach(&model.inner, &counts.inner, cap).map_err(err)
}

#[pyfunction]
fn expected_unique_reach(model: &PyPopulationModel, counts: &PyImpressionCounts) -> PyResult<f64> {
    me::expected_unique_reach(&model.inner, &counts.inner).map_err(err)
}

#[pyfunction]
fn unique_reach_variance(model: &PyPopulationModel, counts: &PyImpressionCounts) -> PyResult<f64> {
    me::unique_reach_variance(&model.inner, &counts.inner).map_err(err)
}

/// Returns (deviation, probability): deviations of at least
/// `epsilon * sigma` happen with probability at most `1 / epsilon^2`.
#[pyfunction]
fn chebyshev_bound(sigma2: f64, epsilon: f64) -> PyResult<(f64, f64)> {
    let b = me::chebyshev_bound(sigma2, epsilon).map_err(err)?;
    Ok((b.deviation, b.probability))
}

#[pyfunction]
fn expected_overexposed(
    model: &PyPopulationModel,
    counts: &PyImpressionCounts,
    cap: usize,
) -> PyResult<f64> {
    me::expected_overexposed(&model.inner, &counts.inner, cap).map_err(err)
}

/// Deterministic (lower, upper) reach bounds for non-overlapping groups.
#[pyfunction]
fn reach_bounds(
    model: &PyPopulationModel,
    counts: &PyImpressionCounts,
    cap: usize,
) -> PyResult<(u64, u64)> {
    me::reach_bounds(&model.inner, &counts.inner, cap).map_err(err)
}

#[pyfunction]
fn expected_reach_nonuniform(prop: &PyPropertyVector, wins: u64, cap: usize) -> PyResult<f64> {
    me::expected_reach_nonuniform(&prop.inner, wins, cap).map_err(err)
}

#[pyfunction]
fn expected_unique_reach_nonuniform(prop: &PyPropertyVector, wins: u64) -> f64 {
    me::expected_unique_reach_nonuniform(&prop.inner, wins)
}

#[pyfunction]
fn reach_probability_nonuniform(prop: &PyPropertyVector, wins: u64, cap: usize) -> PyResult<f64> {
    opt::reach_probability_nonuniform(&prop.inner, wins, cap).map_err(err)
}

/// Second-price optimal bid `clamp(p / lambda, floor, cap)`.
#[pyfunction]
fn optimal_bid(
    reach_probability: f64,
    lambda: f64,
    bid_floor: f64,
    bid_cap: f64,
) -> PyResult<f64> {
    opt::optimal_bid(
        reach_probability,
        lambda,
        &SecondPriceIdentity,
        bid_floor,
        bid_cap,
    )
    .map_err(err)
}

#[pyfunction]
fn mc_reach_distribution(
    model: &PyPopulationModel,
    counts: &PyImpressionCounts,
    cap: usize,
    trials: u64,
    seed: u64,
) -> PyResult<PyReachDistribution> {
    let d = me::mc_reach_distribution(&model.inner, &counts.inner, cap, trials, seed).map_err(err)?;
    Ok(PyReachDistribution {
        mean: d.mean,
        variance: d.variance,
        trials: d.trials,
        histogram: d.histogram.into_iter().collect(),
    })
}

/// Generate a request stream: uniform targeted arrivals, or per-group
/// visit-probability vectors when `property_vectors` is given.
#[pyfunction]
#[pyo3(signature = (model, requests, seed, property_vectors = None))]
fn generate_stream(
    model: &PyPopulationModel,
    requests: usize,
    seed: u64,
    property_vectors: Option<Vec<Vec<f64>>>,
) -> PyResult<PyRequestStream> {
    let inner = match property_vectors {
        None => {
            au::generate_stream(&model.inner, requests, au::Arrival::Uniform, seed).map_err(err)?
        }
        Some(raw) => {
            let vectors = raw
                .into_iter()
                .map(pop::PropertyVector::new)
                .collect::<anonreach::Result<Vec<_>>>()
                .map_err(err)?;
            au::generate_stream(
                &model.inner,
                requests,
                au::Arrival::PropertyVectors(&vectors),
                seed,
            )
            .map_err(err)?
        }
    };
    Ok(PyRequestStream { inner })
}

/// Realized reach of the winning requests, scored from hidden users.
#[pyfunction]
fn true_reach(
    model: &PyPopulationModel,
    stream: &PyRequestStream,
    wins: Vec<bool>,
    cap: usize,
) -> PyResult<u64> {
    au::true_reach(&model.inner, &stream.inner, &wins, cap).map_err(err)
}

#[pymodule]
fn anonreach_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPopulationModel>()?;
    m.add_class::<PyPropertyVector>()?;
    m.add_class::<PyImpressionCounts>()?;
    m.add_class::<PyReachEstimator>()?;
    m.add_class::<PyReachProbability>()?;
    m.add_class::<PyBidderState>()?;
    m.add_class::<PyRandomSource>()?;
    m.add_class::<PySecondPriceAuction>()?;
    m.add_class::<PyRequestStream>()?;
    m.add_class::<PyReachDistribution>()?;
    m.add_function(wrap_pyfunction!(binom_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(binom_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(expected_reach, m)?)?;
    m.add_function(wrap_pyfunction!(expected_unique_reach, m)?)?;
    m.add_function(wrap_pyfunction!(unique_reach_variance, m)?)?;
    m.add_function(wrap_pyfunction!(chebyshev_bound, m)?)?;
    m.add_function(wrap_pyfunction!(expected_overexposed, m)?)?;
    m.add_function(wrap_pyfunction!(reach_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(expected_reach_nonuniform, m)?)?;
    m.add_function(wrap_pyfunction!(expected_unique_reach_nonuniform, m)?)?;
    m.add_function(wrap_pyfunction!(reach_probability_nonuniform, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_bid, m)?)?;
    m.add_function(wrap_pyfunction!(mc_reach_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(generate_stream, m)?)?;
    m.add_function(wrap_pyfunction!(true_reach, m)?)?;
    Ok(())
}
