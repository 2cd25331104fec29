//! Typed representation of purification protocol scripts.
//!
//! The step vocabulary is the union of the operations the three reference
//! protocols use: distribution, dark (unread) Bell measurement, error-test
//! sampling, two-sided CNOTs, collective and local measurements, and the
//! classical keep/discard rules, plus bounded repetition.

use crate::bell::{Basis, CnotBasis, Parity};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

/// Which pairs a measurement step acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRole {
    /// The destination pairs of the current two-pair grouping.
    Destination,
    /// The pairs most recently sampled into a test trash can.
    Test,
    /// Unmeasured pairs already in the trash can of the step's basis.
    Trash,
    /// All pairs still alive (the final-key measurement).
    Remaining,
}

impl TargetRole {
    pub fn keyword(self) -> &'static str {
        match self {
            TargetRole::Destination => "destination",
            TargetRole::Test => "test",
            TargetRole::Trash => "trash",
            TargetRole::Remaining => "remaining",
        }
    }
}

/// How a bi-CNOT step forms its two-pair groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingPolicy {
    /// Uniformly random perfect matching of the alive pairs.
    #[default]
    Random,
    /// Consecutive alive pairs in index order; deterministic.
    Adjacent,
}

/// A collective (two-qubit, one-outcome-bit) measurement of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum CollectiveKind {
    /// Parity measurement in a Pauli basis; commutes with the dark Bell
    /// measurement.
    Parity(Basis),
    /// Rank-1 projective measurement distinguishing |00>; its projectors
    /// are Bell-off-diagonal, so it does not commute with the dark Bell
    /// measurement. Exists for negative checker fixtures.
    Proj00,
}

impl fmt::Display for CollectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollectiveKind::Parity(b) => write!(f, "{b}"),
            CollectiveKind::Proj00 => write!(f, "PROJ00"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Alice,
    Bob,
}

impl Side {
    pub fn keyword(self) -> &'static str {
        match self {
            Side::Alice => "ALICE",
            Side::Bob => "BOB",
        }
    }
}

/// Classical rule deciding whether the control pair of a group is kept
/// after its destination pair has been measured and announced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KeepRule {
    /// Keep when the announced parity equals the given value. Depends on
    /// the two raw bits only through their (convention-adjusted) XOR.
    Parity(Parity),
    /// Keep when one party's raw outcome bit equals the given value. Not
    /// a function of the parity; breaks the local-to-collective
    /// measurement replacement.
    LocalBit { side: Side, value: bool },
}

/// Integer-valued expression: a literal or a named parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CountExpr {
    Literal(u64),
    Param(String),
}

impl fmt::Display for CountExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountExpr::Literal(n) => write!(f, "{n}"),
            CountExpr::Param(name) => write!(f, "{name}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(u64),
    Real(f64),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(n) => write!(f, "{n}"),
            ParamValue::Real(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ProtocolStep {
    /// Share `count` raw pairs over the channel.
    Distribute(CountExpr),
    /// Bell measurement of every pair with unread outcome.
    DarkBellMeasure,
    /// Bell measurement with announced outcome; outside the allowed
    /// operation vocabulary, parsed so the checker can reject it.
    BellMeasureRead,
    /// Randomly sample `count` alive pairs into the test trash can of
    /// `basis`. Selection only; the measurement is a separate step.
    TestSample { basis: Basis, count: CountExpr },
    /// Group alive pairs in twos and apply the two-sided CNOT.
    BiCnot { basis: CnotBasis, grouping: GroupingPolicy },
    /// Collective measurement of the targeted pairs.
    MeasureCollective { kind: CollectiveKind, target: TargetRole },
    /// Local measurement of the targeted pairs on both sides, results
    /// announced (except for the final-key measurement).
    MeasureLocal { basis: Basis, target: TargetRole },
    /// Keep or discard each group's control pair by the announced data.
    KeepIf(KeepRule),
    /// Unconditionally discard the current groups' control pairs.
    Discard,
    /// Repeat a block `count` times.
    Repeat { count: CountExpr, body: Vec<ProtocolStep> },
}

/// A parsed protocol script.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolSpec {
    pub name: String,
    pub params: BTreeMap<String, ParamValue>,
    pub steps: Vec<ProtocolStep>,
}

impl ProtocolSpec {
    /// Steps in execution order with hierarchical paths ("4" or "6.2").
    pub fn walk(&self) -> Vec<(String, &ProtocolStep)> {
        fn recurse<'a>(steps: &'a [ProtocolStep], prefix: &str, out: &mut Vec<(String, &'a ProtocolStep)>) {
            for (i, step) in steps.iter().enumerate() {
                let path = if prefix.is_empty() {
                    format!("{}", i + 1)
                } else {
                    format!("{prefix}.{}", i + 1)
                };
                out.push((path.clone(), step));
                if let ProtocolStep::Repeat { body, .. } = step {
                    recurse(body, &path, out);
                }
            }
        }
        let mut out = Vec::new();
        recurse(&self.steps, "", &mut out);
        out
    }
}

fn push_step(out: &mut String, step: &ProtocolStep, depth: usize) {
    let indent = "  ".repeat(depth);
    match step {
        ProtocolStep::Distribute(count) => out.push_str(&format!("{indent}DISTRIBUTE {count}\n")),
        ProtocolStep::DarkBellMeasure => out.push_str(&format!("{indent}DARKBELL\n")),
        ProtocolStep::BellMeasureRead => out.push_str(&format!("{indent}MEASURE BELL READ\n")),
        ProtocolStep::TestSample { basis, count } => {
            out.push_str(&format!("{indent}TEST {basis} {count}\n"))
        }
        ProtocolStep::BiCnot { basis, grouping } => {
            let policy = match grouping {
                GroupingPolicy::Random => "",
                GroupingPolicy::Adjacent => " ADJACENT",
            };
            out.push_str(&format!("{indent}BICNOT {basis}{policy}\n"));
        }
        ProtocolStep::MeasureCollective { kind, target } => out.push_str(&format!(
            "{indent}MEASURE COLLECTIVE {kind} ON {}\n",
            target.keyword()
        )),
        ProtocolStep::MeasureLocal { basis, target } => out.push_str(&format!(
            "{indent}MEASURE LOCAL {basis} ON {}\n",
            target.keyword()
        )),
        ProtocolStep::KeepIf(rule) => match rule {
            KeepRule::Parity(p) => out.push_str(&format!("{indent}KEEPIF {p}\n")),
            KeepRule::LocalBit { side, value } => out.push_str(&format!(
                "{indent}KEEPIF {} {}\n",
                side.keyword(),
                *value as u8
            )),
        },
        ProtocolStep::Discard => out.push_str(&format!("{indent}DISCARD\n")),
        ProtocolStep::Repeat { count, body } => {
            out.push_str(&format!("{indent}REPEAT {count} {{\n"));
            for inner in body {
                push_step(out, inner, depth + 1);
            }
            out.push_str(&format!("{indent}}}\n"));
        }
    }
}

/// Canonical text form; parsing it back yields a structurally equal spec.
pub fn pretty_print(spec: &ProtocolSpec) -> String {
    let mut out = String::new();
    if !spec.name.is_empty() {
        out.push_str(&format!("PROTOCOL {}\n", spec.name));
    }
    for (name, value) in &spec.params {
        out.push_str(&format!("PARAM {name} = {value}\n"));
    }
    for step in &spec.steps {
        push_step(&mut out, step, 0);
    }
    out
}
