//! Analytic iteration of the Bell-diagonal rate recursion under two-pair
//! bit-flip and phase-flip error rejection, with yield accounting.
//!
//! A rate vector tracks the fractions of the four Bell states in an
//! ensemble of pairs. One rejection sub-step groups pairs in twos, checks
//! the group parity in the Z (bit-flip) or X (phase-flip) basis, keeps the
//! control pair of passing groups, and discards everything else. The
//! surviving fraction of a sub-step is D/2 where D is the group pass
//! probability.

use crate::bell::BellLabel;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

/// Tolerance for the sum-to-one invariant of a rate vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("rate component {0} outside [0, 1]")]
    ComponentOutOfRange(f64),
    #[error("rates must sum to 1 within {NORMALIZATION_TOL:e}, got {0}")]
    NotNormalized(f64),
    #[error("schedule is empty")]
    EmptySchedule,
    #[error("target infidelity {0} outside (0, 1)")]
    TargetOutOfRange(f64),
}

/// Normalized distribution over the four Bell states, indexed by the Pauli
/// error that turns the perfect pair into each state: identity -> |phi+>,
/// X -> |psi+>, Y -> |psi->, Z -> |phi->.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct RateVector {
    pub identity: f64,
    pub pauli_x: f64,
    pub pauli_y: f64,
    pub pauli_z: f64,
}

impl RateVector {
    pub const PERFECT: RateVector =
        RateVector { identity: 1.0, pauli_x: 0.0, pauli_y: 0.0, pauli_z: 0.0 };

    pub const FULLY_MIXED: RateVector =
        RateVector { identity: 0.25, pauli_x: 0.25, pauli_y: 0.25, pauli_z: 0.25 };

    pub fn new(identity: f64, pauli_x: f64, pauli_y: f64, pauli_z: f64) -> Result<Self, RateError> {
        let v = RateVector { identity, pauli_x, pauli_y, pauli_z };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), RateError> {
        for q in self.as_array() {
            if !q.is_finite() || !(0.0..=1.0).contains(&q) {
                return Err(RateError::ComponentOutOfRange(q));
            }
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(RateError::NotNormalized(sum));
        }
        Ok(())
    }

    /// Order (q_I, q_x, q_y, q_z).
    pub fn as_array(&self) -> [f64; 4] {
        [self.identity, self.pauli_x, self.pauli_y, self.pauli_z]
    }

    pub fn rate_of(&self, label: BellLabel) -> f64 {
        match (label.phase, label.flip) {
            (false, false) => self.identity,
            (false, true) => self.pauli_x,
            (true, true) => self.pauli_y,
            (true, false) => self.pauli_z,
        }
    }

    /// 1 - q_I, the total bad-pair rate.
    pub fn infidelity(&self) -> f64 {
        1.0 - self.identity
    }

    pub fn swap_xz(self) -> Self {
        RateVector {
            identity: self.identity,
            pauli_x: self.pauli_z,
            pauli_y: self.pauli_y,
            pauli_z: self.pauli_x,
        }
    }

    fn sum(&self) -> f64 {
        self.identity + self.pauli_x + self.pauli_y + self.pauli_z
    }

    fn renormalized(self) -> Self {
        let s = self.sum();
        RateVector {
            identity: self.identity / s,
            pauli_x: self.pauli_x / s,
            pauli_y: self.pauli_y / s,
            pauli_z: self.pauli_z / s,
        }
    }
}

impl TryFrom<[f64; 4]> for RateVector {
    type Error = RateError;
    fn try_from(q: [f64; 4]) -> Result<Self, RateError> {
        RateVector::new(q[0], q[1], q[2], q[3])
    }
}

impl From<RateVector> for [f64; 4] {
    fn from(v: RateVector) -> [f64; 4] {
        v.as_array()
    }
}

/// The two rejection sub-steps: a bit-flip round checks Z parity, a
/// phase-flip round checks X parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundKind {
    BitFlip,
    PhaseFlip,
}

impl RoundKind {
    pub fn flipped(self) -> Self {
        match self {
            RoundKind::BitFlip => RoundKind::PhaseFlip,
            RoundKind::PhaseFlip => RoundKind::BitFlip,
        }
    }
}

/// State of the recursion after one sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundReport {
    pub round_index: usize,
    pub kind: RoundKind,
    pub rates: RateVector,
    /// Fraction of this sub-step's input pairs that survive it.
    pub survival_fraction: f64,
    /// Product of all survival fractions so far.
    pub cumulative_fraction: f64,
    pub infidelity: f64,
}

/// One bit-flip rejection round. Returns the post-round rates and the
/// surviving fraction D/2, with D = (q_I+q_z)^2 + (q_x+q_y)^2 the group
/// pass probability.
pub fn bitflip_round(rates: RateVector) -> Result<(RateVector, f64), RateError> {
    rates.validate()?;
    let [qi, qx, qy, qz] = rates.as_array();
    let d = (qi + qz) * (qi + qz) + (qx + qy) * (qx + qy);
    // q_I + q_z and q_x + q_y sum to 1, so D >= 1/2 for any valid input.
    assert!(d > 0.0, "degenerate pass probability for normalized rates");
    let out = RateVector {
        identity: (qi * qi + qz * qz) / d,
        pauli_x: (qx * qx + qy * qy) / d,
        pauli_y: 2.0 * qx * qy / d,
        pauli_z: 2.0 * qi * qz / d,
    };
    let drift = (out.sum() - 1.0).abs();
    assert!(drift < NORMALIZATION_TOL, "round drift {drift:e} exceeds tolerance");
    Ok((out.renormalized(), d / 2.0))
}

/// One phase-flip rejection round: the bit-flip map conjugated by the
/// x/z swap. Survival is D'/2 with D' = (q_I+q_x)^2 + (q_z+q_y)^2.
pub fn phaseflip_round(rates: RateVector) -> Result<(RateVector, f64), RateError> {
    let (swapped, survival) = bitflip_round(rates.swap_xz())?;
    Ok((swapped.swap_xz(), survival))
}

pub fn round(kind: RoundKind, rates: RateVector) -> Result<(RateVector, f64), RateError> {
    match kind {
        RoundKind::BitFlip => bitflip_round(rates),
        RoundKind::PhaseFlip => phaseflip_round(rates),
    }
}

/// Folds the sub-step maps over `schedule`, reporting rates, per-step
/// survival, and the cumulative surviving fraction after each sub-step.
pub fn iterate(initial: RateVector, schedule: &[RoundKind]) -> Result<Vec<RoundReport>, RateError> {
    if schedule.is_empty() {
        return Err(RateError::EmptySchedule);
    }
    initial.validate()?;
    let mut rates = initial;
    let mut cumulative = 1.0;
    let mut reports = Vec::with_capacity(schedule.len());
    for (idx, &kind) in schedule.iter().enumerate() {
        let (next, survival) = round(kind, rates)?;
        rates = next;
        cumulative *= survival;
        reports.push(RoundReport {
            round_index: idx + 1,
            kind,
            rates,
            survival_fraction: survival,
            cumulative_fraction: cumulative,
            infidelity: rates.infidelity(),
        });
    }
    Ok(reports)
}

/// The canonical alternating schedule of `len` sub-steps starting with
/// `first`.
pub fn alternating_schedule(first: RoundKind, len: usize) -> Vec<RoundKind> {
    let mut kind = first;
    (0..len)
        .map(|_| {
            let k = kind;
            kind = kind.flipped();
            k
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleSearch {
    Found(Vec<RoundKind>),
    NotReached,
}

/// Shortest alternating schedule whose final infidelity is at or below
/// `target_infidelity`, trying both starting sub-steps and preferring the
/// bit-flip-first alternation on ties. `max_rounds` caps the schedule
/// length in sub-steps; exhausting it yields `NotReached`.
pub fn find_schedule(
    initial: RateVector,
    target_infidelity: f64,
    max_rounds: usize,
) -> Result<ScheduleSearch, RateError> {
    if !(target_infidelity > 0.0 && target_infidelity < 1.0) {
        return Err(RateError::TargetOutOfRange(target_infidelity));
    }
    initial.validate()?;
    if initial.infidelity() <= target_infidelity {
        return Ok(ScheduleSearch::Found(Vec::new()));
    }
    let mut best: Option<Vec<RoundKind>> = None;
    for first in [RoundKind::BitFlip, RoundKind::PhaseFlip] {
        let mut rates = initial;
        let mut kind = first;
        for len in 1..=max_rounds {
            let (next, _) = round(kind, rates)?;
            rates = next;
            kind = kind.flipped();
            if rates.infidelity() <= target_infidelity {
                let candidate = alternating_schedule(first, len);
                // Strict comparison keeps the bit-flip-first tie-break.
                if best.as_ref().is_none_or(|b| candidate.len() < b.len()) {
                    best = Some(candidate);
                }
                break;
            }
        }
    }
    Ok(match best {
        Some(schedule) => ScheduleSearch::Found(schedule),
        None => ScheduleSearch::NotReached,
    })
}

/// Writes reports as plot-ready CSV. The first line is a `#` comment
/// carrying the schema version; readers should treat `#` as a comment
/// prefix.
pub fn write_round_reports_csv<W: Write>(mut w: W, reports: &[RoundReport]) -> io::Result<()> {
    writeln!(w, "# schema: epp.rounds.v1")?;
    writeln!(w, "round,q_I,q_x,q_y,q_z,survival,cumulative,infidelity")?;
    for r in reports {
        let [qi, qx, qy, qz] = r.rates.as_array();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.round_index, qi, qx, qy, qz, r.survival_fraction, r.cumulative_fraction, r.infidelity
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{bicnot, parity, CnotBasis, Parity};
    use proptest::prelude::*;

    const TOL: f64 = 1e-14;

    fn assert_rates_eq(got: RateVector, want: [f64; 4], tol: f64) {
        let g = got.as_array();
        for i in 0..4 {
            assert!(
                (g[i] - want[i]).abs() <= tol,
                "component {i}: got {:?}, want {:?}",
                g,
                want
            );
        }
    }

    /// Independent oracle: enumerate the 16 ordered label pairs of a
    /// group, push them through the label-level bi-CNOT, and condition on
    /// the destination parity. Shares no arithmetic with the closed-form
    /// recursion.
    fn enumerated_round(rates: RateVector, basis: CnotBasis) -> (RateVector, f64) {
        let mut kept = [0.0f64; 4];
        let mut pass = 0.0f64;
        for c in BellLabel::ALL {
            for d in BellLabel::ALL {
                let weight = rates.rate_of(c) * rates.rate_of(d);
                let (c2, d2) = bicnot(basis, c, d);
                if parity(d2, basis.measurement_basis()) == Parity::ZERO {
                    pass += weight;
                    kept[c2.index()] += weight;
                }
            }
        }
        let out = RateVector {
            identity: kept[BellLabel::PHI_PLUS.index()] / pass,
            pauli_x: kept[BellLabel::PSI_PLUS.index()] / pass,
            pauli_y: kept[BellLabel::PSI_MINUS.index()] / pass,
            pauli_z: kept[BellLabel::PHI_MINUS.index()] / pass,
        };
        (out, pass / 2.0)
    }

    #[test]
    fn bitflip_on_perfect_rates() {
        let (out, survival) = bitflip_round(RateVector::PERFECT).unwrap();
        assert_rates_eq(out, [1.0, 0.0, 0.0, 0.0], 0.0);
        assert_eq!(survival, 0.5);
    }

    #[test]
    fn bitflip_worked_example() {
        // D = 0.68; post rates (50/68, 2/68, 2/68, 14/68).
        let q = RateVector::new(0.7, 0.1, 0.1, 0.1).unwrap();
        let (out, survival) = bitflip_round(q).unwrap();
        assert_rates_eq(out, [50.0 / 68.0, 2.0 / 68.0, 2.0 / 68.0, 14.0 / 68.0], TOL);
        assert!((survival - 0.34).abs() <= TOL);
    }

    #[test]
    fn bitflip_on_pure_phase_error() {
        // Two phi- pairs always pass the Z check and the control becomes phi+.
        let q = RateVector::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let (out, survival) = bitflip_round(q).unwrap();
        assert_rates_eq(out, [1.0, 0.0, 0.0, 0.0], 0.0);
        assert_eq!(survival, 0.5);
    }

    #[test]
    fn phaseflip_worked_example() {
        let q = RateVector::new(0.7, 0.1, 0.1, 0.1).unwrap();
        let (out, survival) = phaseflip_round(q).unwrap();
        assert_rates_eq(out, [50.0 / 68.0, 14.0 / 68.0, 2.0 / 68.0, 2.0 / 68.0], TOL);
        assert!((survival - 0.34).abs() <= TOL);
    }

    #[test]
    fn phaseflip_on_pure_bit_error() {
        // All-psi+ input: X parity of psi+ is 0, every group passes, and
        // the kept control is phi+.
        let q = RateVector::new(0.0, 1.0, 0.0, 0.0).unwrap();
        let (out, survival) = phaseflip_round(q).unwrap();
        assert_rates_eq(out, [1.0, 0.0, 0.0, 0.0], 0.0);
        assert_eq!(survival, 0.5);
        let (oracle, oracle_survival) = enumerated_round(q, CnotBasis::X);
        assert_rates_eq(out, oracle.as_array(), TOL);
        assert!((survival - oracle_survival).abs() <= TOL);
    }

    #[test]
    fn phaseflip_survival_matches_direct_formula() {
        for q in [
            RateVector::new(0.7, 0.1, 0.1, 0.1).unwrap(),
            RateVector::new(0.5, 0.3, 0.1, 0.1).unwrap(),
            RateVector::new(0.85, 0.05, 0.05, 0.05).unwrap(),
        ] {
            let (_, survival) = phaseflip_round(q).unwrap();
            let d = (q.identity + q.pauli_x).powi(2) + (q.pauli_z + q.pauli_y).powi(2);
            assert!((survival - d / 2.0).abs() <= TOL);
        }
    }

    #[test]
    fn rounds_match_enumeration_oracle() {
        let grid = [
            RateVector::new(0.7, 0.1, 0.1, 0.1).unwrap(),
            RateVector::new(0.85, 0.05, 0.05, 0.05).unwrap(),
            RateVector::new(0.6, 0.2, 0.1, 0.1).unwrap(),
            RateVector::new(0.4, 0.3, 0.2, 0.1).unwrap(),
            RateVector::FULLY_MIXED,
        ];
        for q in grid {
            let (bit, bit_s) = bitflip_round(q).unwrap();
            let (oracle, oracle_s) = enumerated_round(q, CnotBasis::Z);
            assert_rates_eq(bit, oracle.as_array(), 1e-12);
            assert!((bit_s - oracle_s).abs() <= 1e-12);

            let (phase, phase_s) = phaseflip_round(q).unwrap();
            let (oracle, oracle_s) = enumerated_round(q, CnotBasis::X);
            assert_rates_eq(phase, oracle.as_array(), 1e-12);
            assert!((phase_s - oracle_s).abs() <= 1e-12);
        }
    }

    #[test]
    fn fixed_points() {
        for q in [RateVector::PERFECT, RateVector::FULLY_MIXED] {
            let (b, _) = bitflip_round(q).unwrap();
            let (p, _) = phaseflip_round(q).unwrap();
            assert_rates_eq(b, q.as_array(), TOL);
            assert_rates_eq(p, q.as_array(), TOL);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RateVector::new(0.5, 0.5, 0.5, -0.5).is_err());
        assert!(RateVector::new(0.5, 0.1, 0.1, 0.1).is_err());
        let bad = RateVector { identity: 0.9, pauli_x: 0.2, pauli_y: 0.0, pauli_z: 0.0 };
        assert!(bitflip_round(bad).is_err());
    }

    #[test]
    fn iterate_composes_rounds() {
        let q = RateVector::new(0.7, 0.1, 0.1, 0.1).unwrap();
        let reports = iterate(q, &[RoundKind::BitFlip]).unwrap();
        let (direct, survival) = bitflip_round(q).unwrap();
        assert_eq!(reports.len(), 1);
        assert_rates_eq(reports[0].rates, direct.as_array(), 0.0);
        assert_eq!(reports[0].survival_fraction, survival);
        assert_eq!(reports[0].cumulative_fraction, survival);
    }

    #[test]
    fn iterate_perfect_full_round() {
        let reports = iterate(RateVector::PERFECT, &[RoundKind::BitFlip, RoundKind::PhaseFlip]).unwrap();
        assert_eq!(reports.last().unwrap().infidelity, 0.0);
        assert_eq!(reports.last().unwrap().cumulative_fraction, 0.25);
    }

    #[test]
    fn iterate_rejects_empty_schedule() {
        assert_eq!(iterate(RateVector::PERFECT, &[]), Err(RateError::EmptySchedule));
    }

    #[test]
    fn alternating_infidelity_shrinks_superexponentially() {
        // With small symmetric error t0, each full round roughly squares
        // the infidelity; check three decades of decrease per round.
        let q = RateVector::new(0.85, 0.05, 0.05, 0.05).unwrap();
        let schedule = alternating_schedule(RoundKind::BitFlip, 8);
        let reports = iterate(q, &schedule).unwrap();
        let infid: Vec<f64> = reports.iter().skip(1).step_by(2).map(|r| r.infidelity).collect();
        for g in 1..infid.len() {
            assert!(infid[g] < infid[g - 1] * 0.1, "round {g}: {infid:?}");
        }
    }

    #[test]
    fn find_schedule_trivial_and_fixed_point() {
        assert_eq!(
            find_schedule(RateVector::PERFECT, 1e-6, 32).unwrap(),
            ScheduleSearch::Found(Vec::new())
        );
        assert_eq!(
            find_schedule(RateVector::FULLY_MIXED, 0.01, 64).unwrap(),
            ScheduleSearch::NotReached
        );
    }

    #[test]
    fn find_schedule_pinned_length() {
        // Regression value from the first run: eight alternating
        // sub-steps reach 1e-9 from (0.85, 0.05, 0.05, 0.05).
        let q = RateVector::new(0.85, 0.05, 0.05, 0.05).unwrap();
        match find_schedule(q, 1e-9, 32).unwrap() {
            ScheduleSearch::Found(schedule) => {
                assert_eq!(schedule.len(), 8);
                assert_eq!(schedule[0], RoundKind::BitFlip);
                let final_infid = iterate(q, &schedule).unwrap().last().unwrap().infidelity;
                assert!(final_infid <= 1e-9);
            }
            ScheduleSearch::NotReached => panic!("schedule not found"),
        }
    }

    #[test]
    fn find_schedule_rejects_bad_target() {
        assert!(find_schedule(RateVector::PERFECT, 0.0, 8).is_err());
        assert!(find_schedule(RateVector::PERFECT, 1.0, 8).is_err());
    }

    #[test]
    fn csv_layout() {
        let reports = iterate(RateVector::new(0.85, 0.05, 0.05, 0.05).unwrap(), &[RoundKind::BitFlip]).unwrap();
        let mut buf = Vec::new();
        write_round_reports_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# schema: epp.rounds.v1");
        assert_eq!(
            lines.next().unwrap(),
            "round,q_I,q_x,q_y,q_z,survival,cumulative,infidelity"
        );
        assert_eq!(lines.count(), 1);
    }

    proptest! {
        #[test]
        fn rounds_preserve_normalization(
            a in 1e-3..1.0f64, b in 1e-3..1.0f64, c in 1e-3..1.0f64, d in 1e-3..1.0f64,
        ) {
            let s = a + b + c + d;
            let q = RateVector::new(a / s, b / s, c / s, d / s).unwrap();
            let (bit, sb) = bitflip_round(q).unwrap();
            let (phase, sp) = phaseflip_round(q).unwrap();
            prop_assert!(bit.validate().is_ok());
            prop_assert!(phase.validate().is_ok());
            prop_assert!(sb > 0.0 && sb <= 0.5 + NORMALIZATION_TOL);
            prop_assert!(sp > 0.0 && sp <= 0.5 + NORMALIZATION_TOL);
        }

        #[test]
        fn composition_symmetry(
            a in 1e-3..1.0f64, b in 1e-3..1.0f64, c in 1e-3..1.0f64, d in 1e-3..1.0f64,
        ) {
            let s = a + b + c + d;
            let q = RateVector::new(a / s, b / s, c / s, d / s).unwrap();
            let (phase, sp) = phaseflip_round(q).unwrap();
            let (inner, si) = bitflip_round(q.swap_xz()).unwrap();
            prop_assert_eq!(phase, inner.swap_xz());
            prop_assert_eq!(sp, si);
        }

        #[test]
        fn bitflip_reduces_bit_error_rate(
            a in 1e-3..1.0f64, b in 1e-3..1.0f64, c in 1e-3..1.0f64, d in 1e-3..1.0f64,
        ) {
            let s = a + b + c + d;
            let q = RateVector::new(a / s, b / s, c / s, d / s).unwrap();
            let bad = q.pauli_x + q.pauli_y;
            prop_assume!(bad > 1e-9 && bad < 0.5 - 1e-9);
            let (bit, _) = bitflip_round(q).unwrap();
            prop_assert!(bit.pauli_x + bit.pauli_y < bad);
            // Dual statement for the phase-flip round.
            let dual = q.pauli_z + q.pauli_y;
            prop_assume!(dual > 1e-9 && dual < 0.5 - 1e-9);
            let (phase, _) = phaseflip_round(q).unwrap();
            prop_assert!(phase.pauli_z + phase.pauli_y < dual);
        }
    }
}
