//! Byte-packed ensemble of Bell-labeled pairs with a liveness bitset.
//!
//! Labels use the one-byte wire encoding of [`BellLabel`]; dead pairs keep
//! their last label but never re-enter grouping or sampling. The total
//! pair count is fixed at construction.

use crate::bell::BellLabel;
use crate::rates::RateVector;

#[derive(Debug, Clone)]
pub struct PairEnsemble {
    labels: Vec<u8>,
    alive: Vec<u64>,
    alive_count: usize,
}

impl PairEnsemble {
    pub fn from_labels(labels: impl IntoIterator<Item = BellLabel>) -> Self {
        let bytes: Vec<u8> = labels.into_iter().map(BellLabel::to_byte).collect();
        PairEnsemble::from_bytes(bytes)
    }

    pub(crate) fn from_bytes(labels: Vec<u8>) -> Self {
        debug_assert!(labels.iter().all(|&b| b < 4));
        let words = labels.len().div_ceil(64);
        let mut alive = vec![u64::MAX; words];
        if let Some(last) = alive.last_mut() {
            let used = labels.len() % 64;
            if used != 0 {
                *last = (1u64 << used) - 1;
            }
        }
        if labels.is_empty() {
            alive.clear();
        }
        PairEnsemble { alive_count: labels.len(), labels, alive }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.alive_count
    }

    pub fn dead_count(&self) -> usize {
        self.len() - self.alive_count
    }

    pub fn is_alive(&self, index: usize) -> bool {
        self.alive[index / 64] >> (index % 64) & 1 == 1
    }

    /// Removes a pair from circulation. Idempotent; there is no
    /// resurrection.
    pub fn kill(&mut self, index: usize) {
        let word = &mut self.alive[index / 64];
        let bit = 1u64 << (index % 64);
        if *word & bit != 0 {
            *word &= !bit;
            self.alive_count -= 1;
        }
    }

    pub fn label(&self, index: usize) -> BellLabel {
        BellLabel::from_byte(self.labels[index]).expect("stored labels are valid")
    }

    pub fn label_byte(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn set_label_byte(&mut self, index: usize, byte: u8) {
        debug_assert!(byte < 4);
        self.labels[index] = byte;
    }

    /// Indices of alive pairs in ascending order.
    pub fn alive_indices(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.alive_count);
        for (w, &word) in self.alive.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                out.push((w * 64 + b) as u32);
                bits &= bits - 1;
            }
        }
        out
    }

    /// Label histogram over the alive pairs, indexed by byte encoding.
    pub fn alive_label_counts(&self) -> [u64; 4] {
        let mut counts = [0u64; 4];
        for (w, &word) in self.alive.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                counts[self.labels[w * 64 + b] as usize] += 1;
                bits &= bits - 1;
            }
        }
        counts
    }

    /// Empirical rate vector of the alive pairs; `None` when none remain.
    pub fn empirical_rates(&self) -> Option<RateVector> {
        if self.alive_count == 0 {
            return None;
        }
        let counts = self.alive_label_counts();
        let total = self.alive_count as f64;
        Some(RateVector {
            identity: counts[BellLabel::PHI_PLUS.index()] as f64 / total,
            pauli_x: counts[BellLabel::PSI_PLUS.index()] as f64 / total,
            pauli_y: counts[BellLabel::PSI_MINUS.index()] as f64 / total,
            pauli_z: counts[BellLabel::PHI_MINUS.index()] as f64 / total,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn liveness_bookkeeping() {
        let mut ens = PairEnsemble::from_labels(vec![BellLabel::PHI_PLUS; 130]);
        assert_eq!(ens.len(), 130);
        assert_eq!(ens.alive_count(), 130);
        ens.kill(0);
        ens.kill(64);
        ens.kill(129);
        ens.kill(129); // idempotent
        assert_eq!(ens.alive_count(), 127);
        assert_eq!(ens.dead_count(), 3);
        assert!(!ens.is_alive(0) && !ens.is_alive(64) && !ens.is_alive(129));
        let indices = ens.alive_indices();
        assert_eq!(indices.len(), 127);
        assert!(!indices.contains(&0) && !indices.contains(&64) && !indices.contains(&129));
    }

    #[test]
    fn counts_and_rates_track_alive_only() {
        let mut ens = PairEnsemble::from_labels(vec![
            BellLabel::PHI_PLUS,
            BellLabel::PSI_PLUS,
            BellLabel::PSI_MINUS,
            BellLabel::PHI_MINUS,
        ]);
        assert_eq!(ens.alive_label_counts(), [1, 1, 1, 1]);
        ens.kill(1);
        let rates = ens.empirical_rates().unwrap();
        assert_eq!(rates.pauli_x, 0.0);
        assert!((rates.identity - 1.0 / 3.0).abs() < 1e-15);
        ens.kill(0);
        ens.kill(2);
        ens.kill(3);
        assert!(ens.empirical_rates().is_none());
    }
}
