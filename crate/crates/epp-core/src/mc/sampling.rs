//! The error test's classical sampling bound and its Monte-Carlo
//! verification.
//!
//! The bound caps the false-acceptance probability of the test: the
//! chance that a population of N pairs holds more than delta*N parity-1
//! pairs while a random k-pair sample shows at most (delta - eps0)*k of
//! them. The analytic expression is exp(-eps0^2 * N / (4 * (delta -
//! delta^2))); the verifier estimates the same tail by literally sampling
//! k pairs without replacement from a worst-case planted population.
//!
//! The bound carries N, not k, in the exponent, so for samples much
//! smaller than N/3 the true hypergeometric tail can exceed it; grid
//! points for verification should keep k near N/3 (see the acceptance
//! suite).

use super::McError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Parameters of one sampling-bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingBoundQuery {
    pub n: u64,
    pub k: u64,
    pub delta: f64,
    pub eps0: f64,
}

impl SamplingBoundQuery {
    pub fn validate(&self) -> Result<(), McError> {
        if !(self.eps0 > 0.0 && self.eps0 < self.delta && self.delta < 1.0) {
            return Err(McError::InvalidQuery(format!(
                "need 0 < eps0 < delta < 1, got eps0={}, delta={}",
                self.eps0, self.delta
            )));
        }
        if self.k == 0 || 3 * self.k >= self.n {
            return Err(McError::InvalidQuery(format!(
                "need 0 < 3k < N, got k={}, N={}",
                self.k, self.n
            )));
        }
        Ok(())
    }
}

/// exp(-eps0^2 * N / (4 * (delta - delta^2))).
pub fn sampling_bound(query: &SamplingBoundQuery) -> Result<f64, McError> {
    query.validate()?;
    let exponent =
        -0.25 * query.eps0 * query.eps0 * query.n as f64 / (query.delta - query.delta * query.delta);
    Ok(exponent.exp())
}

/// Result of a Monte-Carlo check of the bound at one parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct SamplingReport {
    pub claim: String,
    pub n: u64,
    pub k: u64,
    pub delta: f64,
    pub eps0: f64,
    /// Planted parity-1 count, the minimal population exceeding delta*N.
    pub bad_count: u64,
    /// Acceptance threshold floor((delta - eps0) * k) on sampled ones.
    pub threshold: u64,
    pub trials: u64,
    pub empirical: f64,
    pub bound: f64,
    pub sigma_mc: f64,
    /// empirical <= bound + 3 sigma_mc.
    pub pass: bool,
}

/// Minimal bad-pair count strictly exceeding delta * N.
pub fn worst_case_bad_count(n: u64, delta: f64) -> u64 {
    (delta * n as f64).floor() as u64 + 1
}

/// Estimates the false-acceptance tail by simulation with an explicitly
/// planted bad count, and compares it against the analytic bound with a
/// one-sided 3-sigma Monte-Carlo allowance.
pub fn verify_sampling_bound_with(
    query: &SamplingBoundQuery,
    bad_count: u64,
    trials: u64,
    seed: u64,
) -> Result<SamplingReport, McError> {
    let bound = sampling_bound(query)?;
    if bad_count > query.n {
        return Err(McError::InvalidQuery(format!(
            "bad count {bad_count} exceeds population {}",
            query.n
        )));
    }
    if trials == 0 || bound < 10.0 / trials as f64 {
        return Err(McError::ResolutionInfeasible(format!(
            "bound {bound:.3e} below the Monte-Carlo resolution of {trials} trials"
        )));
    }
    let n = query.n as usize;
    let k = query.k as usize;
    let threshold = ((query.delta - query.eps0) * query.k as f64).floor() as u64;

    // Population array: 1 marks a parity-1 pair. Re-shuffling the prefix
    // each trial keeps the array a permutation of the same population, so
    // every trial draws a uniform k-subset.
    let mut population = vec![0u8; n];
    for slot in population.iter_mut().take(bad_count as usize) {
        *slot = 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut ones = 0u64;
        for i in 0..k {
            let j = rng.random_range(i..n);
            population.swap(i, j);
            ones += population[i] as u64;
        }
        if ones <= threshold {
            hits += 1;
        }
    }
    let empirical = hits as f64 / trials as f64;
    let sigma_mc = (empirical * (1.0 - empirical) / trials as f64).sqrt();
    Ok(SamplingReport {
        claim: format!(
            "false-acceptance tail at N={}, k={}, delta={}, eps0={}",
            query.n, query.k, query.delta, query.eps0
        ),
        n: query.n,
        k: query.k,
        delta: query.delta,
        eps0: query.eps0,
        bad_count,
        threshold,
        trials,
        empirical,
        bound,
        sigma_mc,
        pass: empirical <= bound + 3.0 * sigma_mc,
    })
}

/// [`verify_sampling_bound_with`] at the worst-case population, the
/// minimal bad count exceeding delta * N.
pub fn verify_sampling_bound(
    query: &SamplingBoundQuery,
    trials: u64,
    seed: u64,
) -> Result<SamplingReport, McError> {
    verify_sampling_bound_with(query, worst_case_bad_count(query.n, query.delta), trials, seed)
}

/// Desk-scale grid on which the bound provably holds with resolvable
/// tails: k sits just under the N/3 cap, where the sample is large enough
/// relative to N for the N-exponent bound to dominate the true
/// hypergeometric tail.
pub const DESK_GRID: [SamplingBoundQuery; 6] = [
    SamplingBoundQuery { n: 450, k: 149, delta: 0.2, eps0: 0.1 },
    SamplingBoundQuery { n: 300, k: 99, delta: 0.25, eps0: 0.12 },
    SamplingBoundQuery { n: 240, k: 79, delta: 0.3, eps0: 0.15 },
    SamplingBoundQuery { n: 360, k: 119, delta: 0.25, eps0: 0.13 },
    SamplingBoundQuery { n: 600, k: 199, delta: 0.15, eps0: 0.08 },
    SamplingBoundQuery { n: 210, k: 69, delta: 0.3, eps0: 0.16 },
];
