//! Monte Carlo estimation of the logical failure rate, plus an exact
//! enumeration oracle for small lattices.
//!
//! A trial samples an error `E`, decodes its syndrome to a correction `E'`
//! and reports failure when `E + E'` lies in a non-trivial homology class.

use rayon::prelude::*;

use crate::decoder::{decode, DecoderConfig};
use crate::error::{Error, Result};
use crate::lattice::{ErrorChain, ToricLattice};
use crate::noise::{enumerate_chains_from, sample_error, NoiseModel, RandomStream};

/// Trials per unit of parallel work. Seeding is per trial, so the block size
/// never changes results.
pub const BLOCK_SIZE: u64 = 1 << 14;

/// Parameters of one Monte Carlo cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub size: usize,
    pub p: f64,
    pub trials: u64,
    pub tau: f64,
    pub master_seed: u64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.parts().map(|_| ())
    }

    fn parts(&self) -> Result<(ToricLattice, NoiseModel, DecoderConfig)> {
        let lattice = ToricLattice::new(self.size)?;
        let noise = NoiseModel::new(self.p)?;
        let decoder = DecoderConfig::new(self.tau)?;
        decoder.validate_for(&lattice)?;
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trial count N must be >= 1".into()));
        }
        Ok((lattice, noise, decoder))
    }
}

/// `N`, `N_f`, `P_fail = N_f / N` and `σ = sqrt(P_fail (1 - P_fail) / N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureEstimate {
    pub trials: u64,
    pub failures: u64,
    pub p_fail: f64,
    pub sigma: f64,
}

impl FailureEstimate {
    pub fn new(trials: u64, failures: u64) -> Self {
        assert!(trials > 0 && failures <= trials);
        let n = trials as f64;
        let p_fail = failures as f64 / n;
        FailureEstimate {
            trials,
            failures,
            p_fail,
            sigma: (p_fail * (1.0 - p_fail) / n).sqrt(),
        }
    }
}

/// True when decoding `error` leaves a homologically non-trivial cycle.
pub fn decoding_fails(lattice: &ToricLattice, decoder: &DecoderConfig, error: &ErrorChain) -> bool {
    let syndrome = lattice.syndrome(error);
    if syndrome.is_empty() {
        // E itself is a cycle; the decoder does nothing.
        return !lattice.crossing_parity(error).is_trivial();
    }
    let mut total = decode(&syndrome, lattice, decoder);
    debug_assert_eq!(lattice.syndrome(&total), syndrome);
    total.add_assign(error);
    !lattice.crossing_parity(&total).is_trivial()
}

/// One trial with the error drawn from stream `(master_seed, trial_index)`.
pub fn run_trial(config: &TrialConfig, trial_index: u64) -> Result<bool> {
    let (lattice, noise, decoder) = config.parts()?;
    Ok(trial(&lattice, &noise, &decoder, config.master_seed, trial_index))
}

fn trial(lattice: &ToricLattice, noise: &NoiseModel, decoder: &DecoderConfig, seed: u64, index: u64) -> bool {
    let error = sample_error(lattice, noise, RandomStream::new(seed, index));
    decoding_fails(lattice, decoder, &error)
}

fn count_failures(lattice: &ToricLattice, noise: &NoiseModel, decoder: &DecoderConfig, seed: u64, trials: u64) -> u64 {
    let blocks = trials.div_ceil(BLOCK_SIZE);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_SIZE;
            let end = (start + BLOCK_SIZE).min(trials);
            (start..end)
                .filter(|&i| trial(lattice, noise, decoder, seed, i))
                .count() as u64
        })
        .sum()
}

/// Runs trials `0..N` on the ambient rayon pool.
pub fn run_batch(config: &TrialConfig) -> Result<FailureEstimate> {
    let (lattice, noise, decoder) = config.parts()?;
    let failures = count_failures(&lattice, &noise, &decoder, config.master_seed, config.trials);
    Ok(FailureEstimate::new(config.trials, failures))
}

/// Runs a batch on a dedicated pool of `workers` threads.
pub fn run_batch_with_workers(config: &TrialConfig, workers: usize) -> Result<FailureEstimate> {
    let pool = thread_pool(workers)?;
    pool.install(|| run_batch(config))
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))
}

/// Exact or weight-truncated failure probability from full enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactFailure {
    pub size: usize,
    pub p: f64,
    pub tau: f64,
    /// Highest enumerated error weight.
    pub max_weight: usize,
    /// `failing_by_weight[w]` counts failing chains of weight `w`.
    pub failing_by_weight: Vec<u64>,
    /// `Σ_w failing(w) p^w (1 - p)^(2L² - w)`.
    pub p_fail: f64,
    /// Probability mass of weights above `max_weight`, an upper bound on
    /// what truncation leaves out.
    pub truncation_bound: f64,
}

/// Counts failing chains in every weight shell `0..=max_weight`.
///
/// Shells are sharded by their lowest edge across the ambient rayon pool.
pub fn failure_counts(size: usize, tau: f64, max_weight: Option<usize>) -> Result<Vec<u64>> {
    let lattice = ToricLattice::new(size)?;
    let decoder = DecoderConfig::new(tau)?;
    decoder.validate_for(&lattice)?;
    let n = lattice.num_edges();
    let max_weight = match max_weight {
        None if size == 3 => n,
        None => return Err(Error::EnumerationTooLarge(size)),
        Some(_) if size > 7 => {
            return Err(Error::InvalidParameter(format!(
                "truncated enumeration supports L <= 7, got L = {size}"
            )))
        }
        Some(w) if w > n => return Err(Error::WeightOutOfRange { weight: w, max: n }),
        Some(w) => w,
    };
    let mut counts = Vec::with_capacity(max_weight + 1);
    for w in 0..=max_weight {
        let count: u64 = (0..n.max(1))
            .into_par_iter()
            .map(|first| {
                enumerate_chains_from(&lattice, w, first)
                    .expect("weight checked above")
                    .filter(|e| decoding_fails(&lattice, &decoder, e))
                    .count() as u64
            })
            .sum();
        counts.push(count);
    }
    Ok(counts)
}

/// `P(|E| > w)` for `|E| ~ Binomial(n, p)`, summed in log space.
pub fn binomial_upper_tail(n: usize, p: f64, w: usize) -> f64 {
    if w >= n {
        return 0.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut ln_binom = ln_choose(n, w + 1);
    let mut total = 0.0;
    for k in (w + 1)..=n {
        total += (ln_binom + k as f64 * lp + (n - k) as f64 * lq).exp();
        ln_binom += ((n - k) as f64).ln() - ((k + 1) as f64).ln();
    }
    total.min(1.0)
}

pub(crate) fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Weights failing counts by `p^w (1 - p)^(n - w)`.
pub fn failure_probability_from_counts(size: usize, p: f64, counts: &[u64]) -> f64 {
    let n = 2 * size * size;
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(w, &c)| c as f64 * p.powi(w as i32) * (1.0 - p).powi((n - w) as i32))
        .sum()
}

/// Exact `P_fail` by enumerating every error up to `max_weight`.
///
/// `max_weight = None` requests the full `2^(2L²)` enumeration, which is
/// only accepted for `L = 3`. Truncated runs give a lower bound whose gap is
/// at most [`ExactFailure::truncation_bound`].
pub fn exact_failure_probability(size: usize, p: f64, tau: f64, max_weight: Option<usize>) -> Result<ExactFailure> {
    NoiseModel::new(p)?;
    let counts = failure_counts(size, tau, max_weight)?;
    Ok(exact_from_counts(size, p, tau, counts))
}

pub fn exact_from_counts(size: usize, p: f64, tau: f64, counts: Vec<u64>) -> ExactFailure {
    let n = 2 * size * size;
    let max_weight = counts.len() - 1;
    ExactFailure {
        size,
        p,
        tau,
        max_weight,
        p_fail: failure_probability_from_counts(size, p, &counts),
        truncation_bound: binomial_upper_tail(n, p, max_weight),
        failing_by_weight: counts,
    }
}

/// Default weight cap for truncated oracles: `⌈L/2⌉ + 2`.
pub fn default_max_weight(size: usize) -> usize {
    size.div_ceil(2) + 2
}
