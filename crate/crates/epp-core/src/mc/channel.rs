//! Source models for the raw pairs Alice distributes to Bob.
//!
//! Genuinely cross-pair-entangled sources cannot be represented at the
//! Bell-label level; adversarial inputs are modeled as arbitrary
//! classically correlated label arrangements (worst-case clustering,
//! blockwise correlations), while the entangled-input claims are verified
//! exactly at small scale by the dense oracle and the condition checker.

use super::ensemble::PairEnsemble;
use super::McError;
use crate::bell::BellLabel;
use crate::rates::RateVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelModel {
    /// Independent identically distributed Bell-diagonal pairs.
    IidBellDiagonal { rates: RateVector },
    /// Deterministic cycle of per-block rate vectors, `block_len` pairs
    /// per block.
    BlockCorrelated { block_rates: Vec<RateVector>, block_len: u64 },
    /// Fixed budget of bad pairs planted as one contiguous run at a
    /// seed-derived offset: the worst classical arrangement against
    /// blockwise processing.
    AdversarialPermutation { bad_x: u64, bad_y: u64, bad_z: u64 },
}

impl ChannelModel {
    pub fn validate(&self, n: u64) -> Result<(), McError> {
        match self {
            ChannelModel::IidBellDiagonal { rates } => rates
                .validate()
                .map_err(|e| McError::InvalidChannel(e.to_string())),
            ChannelModel::BlockCorrelated { block_rates, block_len } => {
                if block_rates.is_empty() || *block_len == 0 {
                    return Err(McError::InvalidChannel(
                        "block-correlated channel needs at least one block of positive length"
                            .into(),
                    ));
                }
                for rates in block_rates {
                    rates.validate().map_err(|e| McError::InvalidChannel(e.to_string()))?;
                }
                Ok(())
            }
            ChannelModel::AdversarialPermutation { bad_x, bad_y, bad_z } => {
                let budget = bad_x
                    .checked_add(*bad_y)
                    .and_then(|s| s.checked_add(*bad_z))
                    .ok_or_else(|| McError::InvalidChannel("bad-pair budget overflows".into()))?;
                if budget > n {
                    return Err(McError::InvalidChannel(format!(
                        "bad-pair budget {budget} exceeds ensemble size {n}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn sample_label_byte<R: Rng>(rates: &RateVector, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    let mut acc = rates.identity;
    if u < acc {
        return BellLabel::PHI_PLUS.to_byte();
    }
    acc += rates.pauli_x;
    if u < acc {
        return BellLabel::PSI_PLUS.to_byte();
    }
    acc += rates.pauli_y;
    if u < acc {
        return BellLabel::PSI_MINUS.to_byte();
    }
    BellLabel::PHI_MINUS.to_byte()
}

/// Draws an ensemble of `n` labels from the channel model,
/// deterministically in `seed`.
pub fn distribute(n: u64, channel: &ChannelModel, seed: u64) -> Result<PairEnsemble, McError> {
    channel.validate(n)?;
    let n_usize = usize::try_from(n).map_err(|_| McError::InvalidChannel("n too large".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = match channel {
        ChannelModel::IidBellDiagonal { rates } => {
            (0..n_usize).map(|_| sample_label_byte(rates, &mut rng)).collect()
        }
        ChannelModel::BlockCorrelated { block_rates, block_len } => (0..n_usize)
            .map(|i| {
                let block = (i as u64 / block_len) as usize % block_rates.len();
                sample_label_byte(&block_rates[block], &mut rng)
            })
            .collect(),
        ChannelModel::AdversarialPermutation { bad_x, bad_y, bad_z } => {
            let mut labels = Vec::with_capacity(n_usize);
            labels.extend(std::iter::repeat_n(BellLabel::PSI_PLUS.to_byte(), *bad_x as usize));
            labels.extend(std::iter::repeat_n(BellLabel::PSI_MINUS.to_byte(), *bad_y as usize));
            labels.extend(std::iter::repeat_n(BellLabel::PHI_MINUS.to_byte(), *bad_z as usize));
            labels.resize(n_usize, BellLabel::PHI_PLUS.to_byte());
            if n_usize > 0 {
                let offset = rng.random_range(0..n_usize);
                labels.rotate_right(offset);
            }
            labels
        }
    };
    Ok(PairEnsemble::from_bytes(labels))
}
