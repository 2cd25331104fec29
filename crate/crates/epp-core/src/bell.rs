//! Bell-state labels and their exact combinatorics: parity tables for
//! collective measurements, outcome statistics of local measurements, and
//! the Bell-basis permutations induced by two-sided CNOT operations.
//!
//! Label convention, fixed once and used identically everywhere:
//!
//! ```text
//! (phase, flip) = (0,0)  |phi+> = (|00> + |11>)/sqrt(2)
//!                 (1,0)  |phi-> = (|00> - |11>)/sqrt(2)
//!                 (0,1)  |psi+> = (|01> + |10>)/sqrt(2)
//!                 (1,1)  |psi-> = (|01> - |10>)/sqrt(2)
//! ```
//!
//! Equivalently: `flip` marks a bit-flip (X) error on the pair and `phase`
//! a phase-flip (Z) error, relative to the perfect pair |phi+>.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Single-qubit measurement basis shared by both parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn letter(self) -> char {
        match self {
            Basis::X => 'X',
            Basis::Y => 'Y',
            Basis::Z => 'Z',
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Basis in which a two-sided CNOT collects parity information onto the
/// destination pair. Only the Z and X variants appear in the protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CnotBasis {
    Z,
    X,
}

impl CnotBasis {
    /// The collective measurement basis that reads the parity this
    /// bi-CNOT accumulates on its destination pair.
    pub fn measurement_basis(self) -> Basis {
        match self {
            CnotBasis::Z => Basis::Z,
            CnotBasis::X => Basis::X,
        }
    }

    pub fn letter(self) -> char {
        match self {
            CnotBasis::Z => 'Z',
            CnotBasis::X => 'X',
        }
    }
}

impl fmt::Display for CnotBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Outcome of a collective two-qubit parity measurement: 0 when the two
/// sides agree under the fixed convention, 1 when they differ.
///
/// The perfect pair |phi+> has parity 0 in every basis; each other Bell
/// state shows parity 1 in at least one basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Parity(pub bool);

impl Parity {
    pub const ZERO: Parity = Parity(false);
    pub const ONE: Parity = Parity(true);

    pub fn bit(self) -> u8 {
        self.0 as u8
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bit())
    }
}

/// Two-bit label of a Bell state: `phase` distinguishes the +/- sign,
/// `flip` distinguishes phi (correlated) from psi (anti-correlated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BellLabel {
    pub phase: bool,
    pub flip: bool,
}

impl BellLabel {
    pub const PHI_PLUS: BellLabel = BellLabel { phase: false, flip: false };
    pub const PHI_MINUS: BellLabel = BellLabel { phase: true, flip: false };
    pub const PSI_PLUS: BellLabel = BellLabel { phase: false, flip: true };
    pub const PSI_MINUS: BellLabel = BellLabel { phase: true, flip: true };

    /// All four labels in byte-encoding order.
    pub const ALL: [BellLabel; 4] = [
        BellLabel::PHI_PLUS,
        BellLabel::PSI_PLUS,
        BellLabel::PHI_MINUS,
        BellLabel::PSI_MINUS,
    ];

    /// Wire encoding: bit 0 = flip, bit 1 = phase.
    pub fn to_byte(self) -> u8 {
        (self.phase as u8) << 1 | self.flip as u8
    }

    pub fn from_byte(byte: u8) -> Option<BellLabel> {
        if byte < 4 {
            Some(BellLabel { phase: byte & 2 != 0, flip: byte & 1 != 0 })
        } else {
            None
        }
    }

    /// Index into tables, equal to the byte encoding.
    pub fn index(self) -> usize {
        self.to_byte() as usize
    }

    pub fn is_perfect(self) -> bool {
        self == BellLabel::PHI_PLUS
    }

    pub fn name(self) -> &'static str {
        match (self.phase, self.flip) {
            (false, false) => "phi+",
            (true, false) => "phi-",
            (false, true) => "psi+",
            (true, true) => "psi-",
        }
    }
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Deterministic parity of a collective measurement on a Bell state:
/// ZZ reads the flip bit, XX the phase bit, YY their XOR.
///
/// The YY entry uses the fixed detector convention in which one party's
/// raw Y outcome is relabeled, so that |phi+> has parity 0 in all three
/// bases; see [`raw_outcome_xor`] for the pre-convention statistics.
pub fn parity(label: BellLabel, basis: Basis) -> Parity {
    match basis {
        Basis::Z => Parity(label.flip),
        Basis::X => Parity(label.phase),
        Basis::Y => Parity(label.phase ^ label.flip),
    }
}

/// XOR of the two parties' raw outcome bits when both measure the given
/// basis. Differs from [`parity`] only in the Y basis, where the raw
/// outcomes of |phi+> are anti-correlated and the convention flips one
/// side's bit.
pub fn raw_outcome_xor(label: BellLabel, basis: Basis) -> bool {
    parity(label, basis).0 ^ matches!(basis, Basis::Y)
}

/// Parity announced by the two parties after exchanging raw outcome bits
/// `a` and `b`: plain XOR in Z and X, convention-flipped XOR in Y.
pub fn announced_parity(a: bool, b: bool, basis: Basis) -> Parity {
    Parity(a ^ b ^ matches!(basis, Basis::Y))
}

/// Joint raw-outcome support of measuring both halves of a Bell pair in
/// the same basis: exactly two outcome pairs, each with probability 1/2,
/// so each party's marginal is a uniform bit.
pub fn local_outcome_support(label: BellLabel, basis: Basis) -> [(bool, bool); 2] {
    let xor = raw_outcome_xor(label, basis);
    [(false, xor), (true, !xor)]
}

/// Z-basis two-sided CNOT on a (control, destination) pair of Bell labels.
///
/// The destination accumulates the control's flip bit, so a subsequent ZZ
/// measurement of the destination reads the joint Z parity; the control
/// absorbs the destination's phase bit. Argument order is (control,
/// destination) in every signature of this module.
pub fn bicnot_z(control: BellLabel, destination: BellLabel) -> (BellLabel, BellLabel) {
    (
        BellLabel { phase: control.phase ^ destination.phase, flip: control.flip },
        BellLabel { phase: destination.phase, flip: destination.flip ^ control.flip },
    )
}

/// X-basis two-sided CNOT, the Hadamard conjugate of [`bicnot_z`]: the
/// destination accumulates the control's phase bit (read by XX), the
/// control absorbs the destination's flip bit.
pub fn bicnot_x(control: BellLabel, destination: BellLabel) -> (BellLabel, BellLabel) {
    (
        BellLabel { phase: control.phase, flip: control.flip ^ destination.flip },
        BellLabel { phase: control.phase ^ destination.phase, flip: destination.flip },
    )
}

/// Dispatch on the bi-CNOT basis.
pub fn bicnot(basis: CnotBasis, control: BellLabel, destination: BellLabel) -> (BellLabel, BellLabel) {
    match basis {
        CnotBasis::Z => bicnot_z(control, destination),
        CnotBasis::X => bicnot_x(control, destination),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_encoding_round_trips() {
        for label in BellLabel::ALL {
            assert_eq!(BellLabel::from_byte(label.to_byte()), Some(label));
        }
        assert_eq!(BellLabel::from_byte(0), Some(BellLabel::PHI_PLUS));
        assert_eq!(BellLabel::from_byte(1), Some(BellLabel::PSI_PLUS));
        assert_eq!(BellLabel::from_byte(2), Some(BellLabel::PHI_MINUS));
        assert_eq!(BellLabel::from_byte(3), Some(BellLabel::PSI_MINUS));
        assert_eq!(BellLabel::from_byte(4), None);
    }

    #[test]
    fn parity_of_perfect_pair_is_zero_in_every_basis() {
        for basis in Basis::ALL {
            assert_eq!(parity(BellLabel::PHI_PLUS, basis), Parity::ZERO);
        }
    }

    #[test]
    fn every_bad_pair_has_a_detecting_basis() {
        for label in BellLabel::ALL {
            if label.is_perfect() {
                continue;
            }
            assert!(
                Basis::ALL.iter().any(|&w| parity(label, w) == Parity::ONE),
                "{label} undetectable"
            );
        }
    }

    #[test]
    fn parity_table() {
        // ZZ reads flip, XX reads phase, YY reads their xor.
        assert_eq!(parity(BellLabel::PSI_PLUS, Basis::Z), Parity::ONE);
        assert_eq!(parity(BellLabel::PSI_MINUS, Basis::Z), Parity::ONE);
        assert_eq!(parity(BellLabel::PHI_MINUS, Basis::Z), Parity::ZERO);
        assert_eq!(parity(BellLabel::PHI_MINUS, Basis::X), Parity::ONE);
        assert_eq!(parity(BellLabel::PSI_MINUS, Basis::X), Parity::ONE);
        assert_eq!(parity(BellLabel::PSI_PLUS, Basis::X), Parity::ZERO);
        assert_eq!(parity(BellLabel::PSI_MINUS, Basis::Y), Parity::ZERO);
        assert_eq!(parity(BellLabel::PSI_PLUS, Basis::Y), Parity::ONE);
        assert_eq!(parity(BellLabel::PHI_MINUS, Basis::Y), Parity::ONE);
    }

    #[test]
    fn bicnot_z_matches_published_permutation() {
        // (phi-, phi-) -> (phi+, phi-)
        let (c, d) = bicnot_z(BellLabel::PHI_MINUS, BellLabel::PHI_MINUS);
        assert_eq!((c, d), (BellLabel::PHI_PLUS, BellLabel::PHI_MINUS));
        // identity on the all-zero labels
        let (c, d) = bicnot_z(BellLabel::PHI_PLUS, BellLabel::PHI_PLUS);
        assert_eq!((c, d), (BellLabel::PHI_PLUS, BellLabel::PHI_PLUS));
        // (psi+, psi-) -> (psi-, phi-)
        let (c, d) = bicnot_z(BellLabel::PSI_PLUS, BellLabel::PSI_MINUS);
        assert_eq!((c, d), (BellLabel::PSI_MINUS, BellLabel::PHI_MINUS));
    }

    #[test]
    fn bicnot_x_examples() {
        let (c, d) = bicnot_x(BellLabel::PHI_PLUS, BellLabel::PHI_PLUS);
        assert_eq!((c, d), (BellLabel::PHI_PLUS, BellLabel::PHI_PLUS));
        // (phi-, phi-) -> (phi-, phi+)
        let (c, d) = bicnot_x(BellLabel::PHI_MINUS, BellLabel::PHI_MINUS);
        assert_eq!((c, d), (BellLabel::PHI_MINUS, BellLabel::PHI_PLUS));
        // (psi+, phi+) fixed
        let (c, d) = bicnot_x(BellLabel::PSI_PLUS, BellLabel::PHI_PLUS);
        assert_eq!((c, d), (BellLabel::PSI_PLUS, BellLabel::PHI_PLUS));
    }

    #[test]
    fn bicnots_are_involutive_permutations() {
        for op in [bicnot_z, bicnot_x] {
            let mut seen = std::collections::HashSet::new();
            for c in BellLabel::ALL {
                for d in BellLabel::ALL {
                    let out = op(c, d);
                    assert!(seen.insert(out), "not injective at ({c}, {d})");
                    assert_eq!(op(out.0, out.1), (c, d), "not an involution at ({c}, {d})");
                }
            }
            assert_eq!(seen.len(), 16);
        }
    }

    #[test]
    fn parity_transport() {
        // The post-bicnot destination carries the joint parity of the
        // group in the bi-CNOT's own basis.
        for c in BellLabel::ALL {
            for d in BellLabel::ALL {
                let (_, dz) = bicnot_z(c, d);
                assert_eq!(
                    parity(dz, Basis::Z).0,
                    parity(c, Basis::Z).0 ^ parity(d, Basis::Z).0
                );
                let (_, dx) = bicnot_x(c, d);
                assert_eq!(
                    parity(dx, Basis::X).0,
                    parity(c, Basis::X).0 ^ parity(d, Basis::X).0
                );
            }
        }
    }

    #[test]
    fn local_outcome_supports() {
        assert_eq!(
            local_outcome_support(BellLabel::PHI_PLUS, Basis::Z),
            [(false, false), (true, true)]
        );
        assert_eq!(
            local_outcome_support(BellLabel::PSI_PLUS, Basis::Z),
            [(false, true), (true, false)]
        );
        assert_eq!(
            local_outcome_support(BellLabel::PHI_MINUS, Basis::X),
            [(false, true), (true, false)]
        );
        // Raw Y outcomes of phi+ are anti-correlated; the announced parity
        // is still 0 under the convention.
        assert_eq!(
            local_outcome_support(BellLabel::PHI_PLUS, Basis::Y),
            [(false, true), (true, false)]
        );
    }

    #[test]
    fn announced_parity_matches_table_on_supports() {
        for label in BellLabel::ALL {
            for basis in Basis::ALL {
                for (a, b) in local_outcome_support(label, basis) {
                    assert_eq!(announced_parity(a, b, basis), parity(label, basis));
                }
            }
        }
    }
}
