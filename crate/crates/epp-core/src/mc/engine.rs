//! Two-party Monte-Carlo execution of protocol scripts over Bell-labeled
//! ensembles.
//!
//! The engine simulates Alice and Bob as message-passing parties: every
//! measurement produces per-side raw outcome bits, announcements are
//! explicit messages, and every keep/discard/abort decision is computed
//! from announced data alone, never from engine-internal labels. The full
//! message log is hashed into the trial report, and
//! [`replay_decisions`] recomputes all decisions from the script plus the
//! transcript, which the test suite compares against the engine's own.
//!
//! Labels are the pointer states of the dark Bell measurement, so a
//! `DARKBELL` step is a no-op here; collective measurements have no
//! two-party realization and are rejected as unsupported before execution.

use super::channel::{distribute, ChannelModel};
use super::ensemble::PairEnsemble;
use super::McError;
use crate::bell::{announced_parity, bicnot, raw_outcome_xor, Basis, BellLabel, CnotBasis, Parity};
use crate::protocol::{
    CountExpr, GroupingPolicy, KeepRule, ParamValue, ProtocolSpec, ProtocolStep, Side, TargetRole,
};
use crate::rates::RateVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Packed bit vector for announcements and keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitBuf {
    bytes: Vec<u8>,
    len: usize,
}

impl BitBuf {
    pub fn with_capacity(bits: usize) -> Self {
        BitBuf { bytes: Vec::with_capacity(bits.div_ceil(8)), len: 0 }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 1 << (self.len % 8);
        }
        self.len += 1;
    }

    pub fn get(&self, index: usize) -> bool {
        debug_assert!(index < self.len);
        self.bytes[index / 8] >> (index % 8) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &BitBuf) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.bytes.iter().zip(&other.bytes).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sender {
    Alice,
    Bob,
}

/// One classical announcement: a packed bit payload tagged with its
/// sender and originating step.
#[derive(Debug, Clone)]
pub struct Message {
    pub sender: Sender,
    pub step: String,
    pub bits: BitBuf,
}

/// A decision both parties reach from announced data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Decision {
    TestVerdict { step: String, basis: char, observed_rate: f64, abort: bool },
    KeepMask { step: String, groups: usize, kept: Vec<bool> },
}

/// Parameter overrides applied on top of a script's `PARAM` declarations,
/// keyed by the conventional names N, k, delta, eps0, rounds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<u64>,
    pub k: Option<u64>,
    pub delta: Option<f64>,
    pub eps0: Option<f64>,
    pub rounds: Option<u64>,
}

/// One simulation run request, JSON-serializable. Unknown keys are
/// rejected. Absent numeric fields fall back to the script's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub protocol_file: String,
    pub channel: ChannelModel,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u64>,
    pub seed: u64,
    pub trials: u64,
}

impl SimConfig {
    pub fn overrides(&self) -> Overrides {
        Overrides { n: self.n, k: self.k, delta: self.delta, eps0: self.eps0, rounds: self.rounds }
    }
}

/// Statistics of one rejection sub-step.
#[derive(Debug, Clone, Serialize)]
pub struct RoundStat {
    pub step: String,
    pub basis: char,
    pub input_alive: u64,
    pub groups: u64,
    pub kept_controls: u64,
    pub survival_fraction: f64,
    pub post_rates: Option<RateVector>,
}

/// Outcome of one protocol run.
#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub schema: String,
    pub protocol: String,
    pub seed: u64,
    pub accepted: bool,
    pub aborted_at: Option<String>,
    pub observed_test_error_rates: BTreeMap<String, f64>,
    pub threshold_mode: String,
    pub final_pair_count: u64,
    pub final_empirical_rates: Option<RateVector>,
    pub rounds: Vec<RoundStat>,
    /// Alice's key bits, hex-packed LSB-first, when the script measured a
    /// final key and the run was accepted with pairs remaining.
    pub key: Option<String>,
    pub key_length: u64,
    pub key_disagreement_rate: Option<f64>,
    pub transcript_digest: String,
}

/// Message log plus the engine's decision sequence, for transcript-replay
/// testing.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub messages: Vec<Message>,
    pub decisions: Vec<Decision>,
}

/// Mixes a trial index into a base seed (splitmix64 finalizer), so
/// parallel trials draw independent, reproducible streams.
pub fn derive_trial_seed(base: u64, trial: u64) -> u64 {
    let mut z = base ^ trial.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------
// Decision functions: pure in the announced data.
// ---------------------------------------------------------------------

fn observed_one_rate(a: &BitBuf, b: &BitBuf, basis: Basis) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let ones = (0..a.len())
        .filter(|&i| announced_parity(a.get(i), b.get(i), basis) == Parity::ONE)
        .count();
    ones as f64 / a.len() as f64
}

fn decide_test(step: &str, a: &BitBuf, b: &BitBuf, basis: Basis, threshold: f64) -> Decision {
    let observed_rate = observed_one_rate(a, b, basis);
    Decision::TestVerdict {
        step: step.to_string(),
        basis: basis.letter(),
        observed_rate,
        abort: observed_rate > threshold,
    }
}

fn keeps(rule: KeepRule, a: bool, b: bool, basis: Basis) -> bool {
    match rule {
        KeepRule::Parity(p) => announced_parity(a, b, basis) == p,
        KeepRule::LocalBit { side: Side::Alice, value } => a == value,
        KeepRule::LocalBit { side: Side::Bob, value } => b == value,
    }
}

fn decide_keep(step: &str, a: &BitBuf, b: &BitBuf, basis: Basis, rule: KeepRule) -> Decision {
    let kept = (0..a.len()).map(|i| keeps(rule, a.get(i), b.get(i), basis)).collect();
    Decision::KeepMask { step: step.to_string(), groups: a.len(), kept }
}

// ---------------------------------------------------------------------
// Script expansion: repeats unrolled, counts resolved.
// ---------------------------------------------------------------------

#[derive(Debug, Clone)]
enum ExecStep {
    Distribute(u64),
    DarkBell,
    TestSample { basis: Basis, count: u64 },
    BiCnot { basis: CnotBasis, grouping: GroupingPolicy },
    MeasureLocal { basis: Basis, target: TargetRole },
    KeepIf(KeepRule),
    Discard,
}

fn merged_params(spec: &ProtocolSpec, overrides: &Overrides) -> BTreeMap<String, ParamValue> {
    let mut params = spec.params.clone();
    if let Some(n) = overrides.n {
        params.insert("N".into(), ParamValue::Int(n));
    }
    if let Some(k) = overrides.k {
        params.insert("k".into(), ParamValue::Int(k));
    }
    if let Some(delta) = overrides.delta {
        params.insert("delta".into(), ParamValue::Real(delta));
    }
    if let Some(eps0) = overrides.eps0 {
        params.insert("eps0".into(), ParamValue::Real(eps0));
    }
    if let Some(rounds) = overrides.rounds {
        params.insert("rounds".into(), ParamValue::Int(rounds));
    }
    params
}

fn resolve_count(expr: &CountExpr, params: &BTreeMap<String, ParamValue>) -> Result<u64, McError> {
    match expr {
        CountExpr::Literal(n) => Ok(*n),
        CountExpr::Param(name) => match params.get(name) {
            Some(ParamValue::Int(n)) => Ok(*n),
            Some(ParamValue::Real(_)) => Err(McError::MalformedScript(format!(
                "parameter `{name}` must be an integer where a count is required"
            ))),
            None => Err(McError::MissingParam(name.clone())),
        },
    }
}

fn resolve_real(
    name: &str,
    params: &BTreeMap<String, ParamValue>,
) -> Result<Option<f64>, McError> {
    match params.get(name) {
        Some(ParamValue::Real(x)) => Ok(Some(*x)),
        Some(ParamValue::Int(n)) => Ok(Some(*n as f64)),
        None => Ok(None),
    }
}

/// Rejects scripts containing steps with no two-party label-level
/// realization, naming each offending step.
fn scan_unsupported(spec: &ProtocolSpec) -> Result<(), McError> {
    let mut offending = Vec::new();
    for (path, step) in spec.walk() {
        match step {
            ProtocolStep::MeasureCollective { kind, .. } => {
                offending.push(format!("step {path}: collective measurement {kind}"));
            }
            ProtocolStep::BellMeasureRead => {
                offending.push(format!("step {path}: read Bell measurement"));
            }
            _ => {}
        }
    }
    if offending.is_empty() {
        Ok(())
    } else {
        Err(McError::UnsupportedSteps(offending))
    }
}

fn expand(
    spec: &ProtocolSpec,
    params: &BTreeMap<String, ParamValue>,
) -> Result<Vec<(String, ExecStep)>, McError> {
    fn recurse(
        steps: &[ProtocolStep],
        prefix: &str,
        params: &BTreeMap<String, ParamValue>,
        out: &mut Vec<(String, ExecStep)>,
    ) -> Result<(), McError> {
        for (i, step) in steps.iter().enumerate() {
            let path = if prefix.is_empty() {
                format!("{}", i + 1)
            } else {
                format!("{prefix}.{}", i + 1)
            };
            match step {
                ProtocolStep::Distribute(count) => {
                    out.push((path, ExecStep::Distribute(resolve_count(count, params)?)));
                }
                ProtocolStep::DarkBellMeasure => out.push((path, ExecStep::DarkBell)),
                ProtocolStep::TestSample { basis, count } => out.push((
                    path,
                    ExecStep::TestSample { basis: *basis, count: resolve_count(count, params)? },
                )),
                ProtocolStep::BiCnot { basis, grouping } => {
                    out.push((path, ExecStep::BiCnot { basis: *basis, grouping: *grouping }));
                }
                ProtocolStep::MeasureLocal { basis, target } => {
                    out.push((path, ExecStep::MeasureLocal { basis: *basis, target: *target }));
                }
                ProtocolStep::KeepIf(rule) => out.push((path, ExecStep::KeepIf(*rule))),
                ProtocolStep::Discard => out.push((path, ExecStep::Discard)),
                ProtocolStep::Repeat { count, body } => {
                    let reps = resolve_count(count, params)?;
                    for rep in 0..reps {
                        recurse(body, &format!("{path}#{rep}"), params, out)?;
                    }
                }
                ProtocolStep::MeasureCollective { .. } | ProtocolStep::BellMeasureRead => {
                    unreachable!("rejected by the unsupported-step scan")
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    recurse(&spec.steps, "", params, &mut out)?;
    Ok(out)
}

// ---------------------------------------------------------------------
// Execution.
// ---------------------------------------------------------------------

struct GroupState {
    basis: CnotBasis,
    pairs: Vec<(u32, u32)>,
    input_alive: u64,
    /// Filled by the destination measurement: (step, basis, alice, bob).
    announced: Option<(String, Basis, BitBuf, BitBuf)>,
}

struct Exec<'a> {
    spec: &'a ProtocolSpec,
    seed: u64,
    stream: u64,
    ens: Option<PairEnsemble>,
    channel: &'a ChannelModel,
    groups: Option<GroupState>,
    /// Unmeasured pairs per trash can, indexed by basis (X, Y, Z).
    trash: [Vec<u32>; 3],
    delta: Option<f64>,
    eps0: Option<f64>,
    messages: Vec<Message>,
    decisions: Vec<Decision>,
    rounds: Vec<RoundStat>,
    observed: BTreeMap<String, f64>,
    aborted: Option<String>,
    keys: Option<(BitBuf, BitBuf)>,
}

fn trash_slot(basis: Basis) -> usize {
    match basis {
        Basis::X => 0,
        Basis::Y => 1,
        Basis::Z => 2,
    }
}

impl<'a> Exec<'a> {
    fn step_rng(&mut self) -> ChaCha8Rng {
        self.stream += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    fn ens(&mut self) -> Result<&mut PairEnsemble, McError> {
        self.ens.as_mut().ok_or_else(|| {
            McError::MalformedScript("pairs used before a DISTRIBUTE step".into())
        })
    }

    fn threshold(&self) -> Result<f64, McError> {
        let delta = self.delta.ok_or_else(|| McError::MissingParam("delta".into()))?;
        Ok(match self.eps0 {
            Some(eps0) => delta - eps0,
            None => delta,
        })
    }

    fn announce(&mut self, step: &str, alice: BitBuf, bob: BitBuf) {
        self.messages.push(Message { sender: Sender::Alice, step: step.to_string(), bits: alice });
        self.messages.push(Message { sender: Sender::Bob, step: step.to_string(), bits: bob });
    }

    /// Samples both parties' raw outcome bits for measuring each listed
    /// pair in `basis`.
    fn sample_outcomes(
        &mut self,
        indices: &[u32],
        basis: Basis,
        rng: &mut ChaCha8Rng,
    ) -> Result<(BitBuf, BitBuf), McError> {
        let ens = self.ens()?;
        let xor_table: [bool; 4] =
            std::array::from_fn(|i| raw_outcome_xor(BellLabel::from_byte(i as u8).unwrap(), basis));
        let mut alice = BitBuf::with_capacity(indices.len());
        let mut bob = BitBuf::with_capacity(indices.len());
        for &i in indices {
            let a: bool = rng.random();
            alice.push(a);
            bob.push(a ^ xor_table[ens.label_byte(i as usize) as usize]);
        }
        Ok((alice, bob))
    }

    fn run_step(&mut self, path: &str, step: &ExecStep) -> Result<(), McError> {
        match step {
            ExecStep::Distribute(n) => {
                if self.ens.is_some() {
                    return Err(McError::MalformedScript(format!(
                        "step {path}: pairs distributed twice"
                    )));
                }
                let mut rng = self.step_rng();
                let dist_seed: u64 = rng.random();
                self.ens = Some(distribute(*n, self.channel, dist_seed)?);
            }
            ExecStep::DarkBell => {
                // Labels already are the dark-measurement pointer states.
                self.ens()?;
            }
            ExecStep::TestSample { basis, count } => {
                let mut rng = self.step_rng();
                let ens = self.ens()?;
                let k = usize::try_from(*count).unwrap_or(usize::MAX);
                let mut alive = ens.alive_indices();
                if alive.len() < k {
                    return Err(McError::InsufficientPairs {
                        needed: k as u64,
                        alive: alive.len() as u64,
                    });
                }
                // Partial Fisher-Yates: the first k entries are a uniform
                // sample without replacement.
                for i in 0..k {
                    let j = rng.random_range(i..alive.len());
                    alive.swap(i, j);
                }
                let slot = trash_slot(*basis);
                for &idx in &alive[..k] {
                    self.ens.as_mut().unwrap().kill(idx as usize);
                    self.trash[slot].push(idx);
                }
            }
            ExecStep::BiCnot { basis, grouping } => {
                let mut rng = self.step_rng();
                let mut table = [0u8; 16];
                for c in BellLabel::ALL {
                    for d in BellLabel::ALL {
                        let (c2, d2) = bicnot(*basis, c, d);
                        table[(c.to_byte() << 2 | d.to_byte()) as usize] =
                            c2.to_byte() << 2 | d2.to_byte();
                    }
                }
                let ens = self.ens()?;
                let input_alive = ens.alive_count() as u64;
                let mut alive = ens.alive_indices();
                if *grouping == GroupingPolicy::Random {
                    alive.shuffle(&mut rng);
                }
                let mut pairs = Vec::with_capacity(alive.len() / 2);
                for chunk in alive.chunks_exact(2) {
                    let (ci, di) = (chunk[0], chunk[1]);
                    let packed = table
                        [(ens.label_byte(ci as usize) << 2 | ens.label_byte(di as usize)) as usize];
                    ens.set_label_byte(ci as usize, packed >> 2);
                    ens.set_label_byte(di as usize, packed & 3);
                    pairs.push((ci, di));
                }
                // An odd pair stays alive and carries over ungrouped.
                self.groups = Some(GroupState { basis: *basis, pairs, input_alive, announced: None });
            }
            ExecStep::MeasureLocal { basis, target } => match target {
                TargetRole::Destination => {
                    let mut rng = self.step_rng();
                    let group = self.groups.as_mut().ok_or_else(|| {
                        McError::MalformedScript(format!(
                            "step {path}: destination measurement without a bi-CNOT grouping"
                        ))
                    })?;
                    if group.announced.is_some() {
                        return Err(McError::MalformedScript(format!(
                            "step {path}: destination pairs measured twice"
                        )));
                    }
                    let dests: Vec<u32> = group.pairs.iter().map(|&(_, d)| d).collect();
                    let (alice, bob) = self.sample_outcomes(&dests, *basis, &mut rng)?;
                    // Destinations land in the trash can already measured;
                    // only liveness needs tracking.
                    for &d in &dests {
                        self.ens.as_mut().unwrap().kill(d as usize);
                    }
                    self.announce(path, alice.clone(), bob.clone());
                    self.groups.as_mut().unwrap().announced =
                        Some((path.to_string(), *basis, alice, bob));
                }
                TargetRole::Test | TargetRole::Trash => {
                    let mut rng = self.step_rng();
                    let slot = trash_slot(*basis);
                    let indices = std::mem::take(&mut self.trash[slot]);
                    let (alice, bob) = self.sample_outcomes(&indices, *basis, &mut rng)?;
                    self.announce(path, alice.clone(), bob.clone());
                    if *target == TargetRole::Test {
                        let threshold = self.threshold()?;
                        let decision = decide_test(path, &alice, &bob, *basis, threshold);
                        if let Decision::TestVerdict { observed_rate, abort, .. } = decision {
                            self.observed.insert(basis.letter().to_string(), observed_rate);
                            if abort {
                                self.aborted = Some(path.to_string());
                            }
                        }
                        self.decisions.push(decision);
                    }
                }
                TargetRole::Remaining => {
                    let mut rng = self.step_rng();
                    if self.keys.is_some() {
                        return Err(McError::MalformedScript(format!(
                            "step {path}: final key measured twice"
                        )));
                    }
                    let indices = self.ens()?.alive_indices();
                    // Key bits stay local to each party: no announcement.
                    let outcomes = self.sample_outcomes(&indices, *basis, &mut rng)?;
                    self.keys = Some(outcomes);
                }
            },
            ExecStep::KeepIf(rule) => {
                let group = self.groups.take().ok_or_else(|| {
                    McError::MalformedScript(format!("step {path}: KEEPIF without a grouping"))
                })?;
                let (_, basis, alice, bob) = group.announced.ok_or_else(|| {
                    McError::MalformedScript(format!(
                        "step {path}: KEEPIF before the destination measurement"
                    ))
                })?;
                let decision = decide_keep(path, &alice, &bob, basis, *rule);
                let kept = match &decision {
                    Decision::KeepMask { kept, .. } => kept.clone(),
                    _ => unreachable!(),
                };
                let ens = self.ens.as_mut().unwrap();
                let mut kept_controls = 0u64;
                for (&(c, _), keep) in group.pairs.iter().zip(&kept) {
                    if *keep {
                        kept_controls += 1;
                    } else {
                        ens.kill(c as usize);
                    }
                }
                self.decisions.push(decision);
                let survivors = ens.alive_count() as u64;
                self.rounds.push(RoundStat {
                    step: path.to_string(),
                    basis: group.basis.letter(),
                    input_alive: group.input_alive,
                    groups: group.pairs.len() as u64,
                    kept_controls,
                    survival_fraction: if group.input_alive == 0 {
                        0.0
                    } else {
                        survivors as f64 / group.input_alive as f64
                    },
                    post_rates: ens.empirical_rates(),
                });
            }
            ExecStep::Discard => {
                let group = self.groups.take().ok_or_else(|| {
                    McError::MalformedScript(format!("step {path}: DISCARD without a grouping"))
                })?;
                let ens = self.ens.as_mut().unwrap();
                for &(c, d) in &group.pairs {
                    ens.kill(c as usize);
                    ens.kill(d as usize);
                }
                self.decisions.push(Decision::KeepMask {
                    step: path.to_string(),
                    groups: group.pairs.len(),
                    kept: vec![false; group.pairs.len()],
                });
            }
        }
        Ok(())
    }
}

fn transcript_digest(messages: &[Message]) -> String {
    let mut hasher = Sha256::new();
    for m in messages {
        hasher.update([match m.sender {
            Sender::Alice => 0u8,
            Sender::Bob => 1u8,
        }]);
        hasher.update((m.step.len() as u32).to_le_bytes());
        hasher.update(m.step.as_bytes());
        hasher.update((m.bits.len() as u64).to_le_bytes());
        hasher.update(m.bits.bytes());
    }
    hex::encode(hasher.finalize())
}

/// Runs a protocol script against a channel model, returning the trial
/// report plus the message/decision trace.
pub fn run_protocol_traced(
    spec: &ProtocolSpec,
    channel: &ChannelModel,
    overrides: &Overrides,
    seed: u64,
) -> Result<(TrialReport, RunTrace), McError> {
    scan_unsupported(spec)?;
    let params = merged_params(spec, overrides);
    let steps = expand(spec, &params)?;

    let mut exec = Exec {
        spec,
        seed,
        stream: 0,
        ens: None,
        channel,
        groups: None,
        trash: [Vec::new(), Vec::new(), Vec::new()],
        delta: resolve_real("delta", &params)?,
        eps0: resolve_real("eps0", &params)?,
        messages: Vec::new(),
        decisions: Vec::new(),
        rounds: Vec::new(),
        observed: BTreeMap::new(),
        aborted: None,
        keys: None,
    };

    for (path, step) in &steps {
        exec.run_step(path, step)?;
        if exec.aborted.is_some() {
            break;
        }
    }

    let final_pair_count = exec.ens.as_ref().map_or(0, |e| e.alive_count() as u64);
    let final_empirical_rates = exec.ens.as_ref().and_then(|e| e.empirical_rates());
    let accepted = exec.aborted.is_none();
    let (key, key_length, key_disagreement_rate) = match (&exec.keys, accepted) {
        (Some((alice, bob)), true) if !alice.is_empty() => (
            Some(alice.to_hex()),
            alice.len() as u64,
            Some(alice.hamming(bob) as f64 / alice.len() as f64),
        ),
        _ => (None, 0, None),
    };

    let report = TrialReport {
        schema: "epp.trial.v1".into(),
        protocol: exec.spec.name.clone(),
        seed,
        accepted,
        aborted_at: exec.aborted.clone(),
        observed_test_error_rates: exec.observed.clone(),
        threshold_mode: if exec.eps0.is_some() { "delta_minus_eps0" } else { "delta" }.into(),
        final_pair_count,
        final_empirical_rates,
        rounds: exec.rounds.clone(),
        key,
        key_length,
        key_disagreement_rate,
        transcript_digest: transcript_digest(&exec.messages),
    };
    Ok((report, RunTrace { messages: exec.messages, decisions: exec.decisions }))
}

pub fn run_protocol(
    spec: &ProtocolSpec,
    channel: &ChannelModel,
    overrides: &Overrides,
    seed: u64,
) -> Result<TrialReport, McError> {
    run_protocol_traced(spec, channel, overrides, seed).map(|(report, _)| report)
}

/// Recomputes every run decision from the script and the announcement
/// transcript alone. The engine's decisions must match: each party's
/// choices are functions of its announcements and the peer's messages,
/// with no access to the underlying labels.
pub fn replay_decisions(
    spec: &ProtocolSpec,
    overrides: &Overrides,
    messages: &[Message],
) -> Result<Vec<Decision>, McError> {
    let params = merged_params(spec, overrides);
    let steps = expand(spec, &params)?;
    let delta = resolve_real("delta", &params)?;
    let eps0 = resolve_real("eps0", &params)?;
    let threshold = match (delta, eps0) {
        (Some(d), Some(e)) => Some(d - e),
        (Some(d), None) => Some(d),
        _ => None,
    };

    let mut cursor = 0usize;
    let mut decisions = Vec::new();
    let mut pending: Option<(Basis, BitBuf, BitBuf)> = None;
    let next_pair = |cursor: &mut usize| -> Result<(BitBuf, BitBuf), McError> {
        let a = messages
            .get(*cursor)
            .ok_or_else(|| McError::MalformedScript("transcript shorter than script".into()))?;
        let b = messages
            .get(*cursor + 1)
            .ok_or_else(|| McError::MalformedScript("transcript shorter than script".into()))?;
        *cursor += 2;
        debug_assert_eq!(a.sender, Sender::Alice);
        debug_assert_eq!(b.sender, Sender::Bob);
        Ok((a.bits.clone(), b.bits.clone()))
    };

    for (path, step) in &steps {
        match step {
            ExecStep::MeasureLocal { basis, target } => match target {
                TargetRole::Destination => {
                    let (a, b) = next_pair(&mut cursor)?;
                    pending = Some((*basis, a, b));
                }
                TargetRole::Test => {
                    let (a, b) = next_pair(&mut cursor)?;
                    let threshold =
                        threshold.ok_or_else(|| McError::MissingParam("delta".into()))?;
                    let decision = decide_test(path, &a, &b, *basis, threshold);
                    let abort = matches!(decision, Decision::TestVerdict { abort: true, .. });
                    decisions.push(decision);
                    if abort {
                        return Ok(decisions);
                    }
                }
                TargetRole::Trash => {
                    let _ = next_pair(&mut cursor)?;
                }
                TargetRole::Remaining => {}
            },
            ExecStep::KeepIf(rule) => {
                let (basis, a, b) = pending.take().ok_or_else(|| {
                    McError::MalformedScript(format!("step {path}: KEEPIF without announcement"))
                })?;
                decisions.push(decide_keep(path, &a, &b, basis, *rule));
            }
            ExecStep::Discard => {
                // Unconditional: group size is known to both parties from
                // the preceding announcement, if any.
                if let Some((_, a, _)) = pending.take() {
                    decisions.push(Decision::KeepMask {
                        step: path.clone(),
                        groups: a.len(),
                        kept: vec![false; a.len()],
                    });
                } else {
                    // Matches the engine's record for unannounced groups;
                    // the group count is not recoverable from messages, so
                    // replay of bare DISCARD is limited to announced ones.
                    decisions.push(Decision::KeepMask { step: path.clone(), groups: 0, kept: vec![] });
                }
            }
            _ => {}
        }
    }
    Ok(decisions)
}

// ---------------------------------------------------------------------
// Standalone operations.
// ---------------------------------------------------------------------

/// Verdict of the three-basis error test.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorTestOutcome {
    pub accepted: bool,
    pub observed: BTreeMap<String, f64>,
    pub tested_per_basis: u64,
}

/// Samples 3k alive pairs, splits them into X/Y/Z groups of k, measures
/// each group locally in its basis, and aborts when any basis's observed
/// parity-1 rate exceeds the threshold (delta, or delta - eps0 when eps0
/// is given). Tested pairs die either way.
pub fn run_error_test(
    ens: &mut PairEnsemble,
    k: u64,
    delta: f64,
    eps0: Option<f64>,
    seed: u64,
) -> Result<ErrorTestOutcome, McError> {
    let k = usize::try_from(k).map_err(|_| McError::MissingParam("k".into()))?;
    let needed = 3 * k;
    let mut alive = ens.alive_indices();
    if alive.len() < needed {
        return Err(McError::InsufficientPairs { needed: needed as u64, alive: alive.len() as u64 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..needed {
        let j = rng.random_range(i..alive.len());
        alive.swap(i, j);
    }
    let threshold = delta - eps0.unwrap_or(0.0);
    let mut observed = BTreeMap::new();
    let mut accepted = true;
    for (group, basis) in [Basis::X, Basis::Y, Basis::Z].iter().enumerate() {
        let indices = &alive[group * k..(group + 1) * k];
        let mut ones = 0usize;
        for &i in indices {
            let a: bool = rng.random();
            let b = a ^ raw_outcome_xor(ens.label(i as usize), *basis);
            if announced_parity(a, b, *basis) == Parity::ONE {
                ones += 1;
            }
            ens.kill(i as usize);
        }
        let rate = if k == 0 { 0.0 } else { ones as f64 / k as f64 };
        observed.insert(basis.letter().to_string(), rate);
        if rate > threshold {
            accepted = false;
        }
    }
    Ok(ErrorTestOutcome { accepted, observed, tested_per_basis: k as u64 })
}

/// Statistics of one standalone rejection round.
#[derive(Debug, Clone, Serialize)]
pub struct RoundOutcome {
    pub input_alive: u64,
    pub groups: u64,
    pub kept_controls: u64,
    pub survivors: u64,
    pub survival_fraction: f64,
    pub post_rates: Option<RateVector>,
}

/// One canonical rejection sub-step: random perfect matching, bi-CNOT in
/// `basis`, local measurement of each destination, keep the control on
/// announced parity 0, discard both otherwise. The odd pair out stays
/// alive.
pub fn rejection_round(ens: &mut PairEnsemble, basis: CnotBasis, seed: u64) -> RoundOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_alive = ens.alive_count() as u64;
    let mut alive = ens.alive_indices();
    alive.shuffle(&mut rng);

    let w = basis.measurement_basis();
    let mut table = [0u8; 16];
    for c in BellLabel::ALL {
        for d in BellLabel::ALL {
            let (c2, d2) = bicnot(basis, c, d);
            table[(c.to_byte() << 2 | d.to_byte()) as usize] = c2.to_byte() << 2 | d2.to_byte();
        }
    }
    let xor_table: [bool; 4] =
        std::array::from_fn(|i| raw_outcome_xor(BellLabel::from_byte(i as u8).unwrap(), w));

    let mut groups = 0u64;
    let mut kept_controls = 0u64;
    for chunk in alive.chunks_exact(2) {
        groups += 1;
        let (ci, di) = (chunk[0] as usize, chunk[1] as usize);
        let packed = table[(ens.label_byte(ci) << 2 | ens.label_byte(di)) as usize];
        ens.set_label_byte(ci, packed >> 2);
        ens.set_label_byte(di, packed & 3);
        let a: bool = rng.random();
        let b = a ^ xor_table[ens.label_byte(di) as usize];
        ens.kill(di);
        if announced_parity(a, b, w) == Parity::ZERO {
            kept_controls += 1;
        } else {
            ens.kill(ci);
        }
    }
    let survivors = ens.alive_count() as u64;
    RoundOutcome {
        input_alive,
        groups,
        kept_controls,
        survivors,
        survival_fraction: if input_alive == 0 {
            0.0
        } else {
            survivors as f64 / input_alive as f64
        },
        post_rates: ens.empirical_rates(),
    }
}
