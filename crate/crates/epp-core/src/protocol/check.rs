//! Static and numeric checks of the three unconditional-purification
//! criteria on a parsed protocol script.
//!
//! A protocol whose fidelity conclusion is established for product-form
//! raw pairs keeps the same conclusion for arbitrary (possibly
//! cross-pair-entangled) raw pairs when:
//!
//! 1. its quantum operations are no more than bi-CNOTs and local
//!    single-qubit measurements in the X/Y/Z bases on each side;
//! 2. replacing any local measurement by the collective parity
//!    measurement of the same basis leaves the fidelity outcome
//!    unchanged; and
//! 3. every collective measurement in the replaced protocol commutes with
//!    the dark Bell measurement.
//!
//! Condition 1 is syntactic. Conditions 2 and 3 are semantic and are
//! checked numerically on seeded random dense two-pair states: one pair
//! plays the measured (destination/test) role, the other the kept role,
//! which is exactly the granularity at which the protocols act. Per-step
//! sub-seeds make the verdict deterministic for a given (spec, trials,
//! seed) triple.

use super::ast::*;
use crate::bell::{announced_parity, Basis, Parity};
use crate::oracle::{DenseState, CHANNEL_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Step reference plus what disqualifies or fails it.
#[derive(Debug, Clone, Serialize)]
pub struct StepFinding {
    pub path: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Condition1Report {
    pub pass: bool,
    pub offending: Vec<StepFinding>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NumericReport {
    pub pass: bool,
    pub max_deviation: f64,
    pub checked_steps: usize,
    pub failing: Vec<StepFinding>,
    /// Steps with no Pauli-basis counterpart, outside this condition's
    /// quantified set (e.g. PROJ00 for condition 2).
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremVerdict {
    pub schema: String,
    pub protocol: String,
    pub trials: usize,
    pub seed: u64,
    pub condition1: Condition1Report,
    pub condition2: NumericReport,
    pub condition3: NumericReport,
    pub overall: bool,
}

/// Pass iff every quantum operation is a bi-CNOT, a local X/Y/Z
/// measurement, pair distribution, test sampling, or classical
/// keep/discard bookkeeping. Collective measurements, dark Bell
/// measurements, and read Bell measurements are cited by step path.
pub fn check_condition1(spec: &ProtocolSpec) -> Condition1Report {
    let mut offending = Vec::new();
    for (path, step) in spec.walk() {
        match step {
            ProtocolStep::DarkBellMeasure => offending.push(StepFinding {
                path,
                detail: "dark Bell measurement is a collective operation".into(),
            }),
            ProtocolStep::BellMeasureRead => offending.push(StepFinding {
                path,
                detail: "read Bell measurement is a collective operation".into(),
            }),
            ProtocolStep::MeasureCollective { kind, .. } => offending.push(StepFinding {
                path,
                detail: format!("collective measurement {kind}"),
            }),
            ProtocolStep::Distribute(_)
            | ProtocolStep::TestSample { .. }
            | ProtocolStep::BiCnot { .. }
            | ProtocolStep::MeasureLocal { .. }
            | ProtocolStep::KeepIf(_)
            | ProtocolStep::Discard
            | ProtocolStep::Repeat { .. } => {}
        }
    }
    Condition1Report { pass: offending.is_empty(), offending }
}

/// The decision rule a destination measurement feeds: the next keep or
/// discard step in the same block, or unconditional retention.
#[derive(Debug, Clone, Copy, PartialEq)]
enum EffectiveRule {
    Keep(KeepRule),
    DiscardAll,
    KeepAll,
}

fn rule_after(steps: &[ProtocolStep], measure_index: usize) -> EffectiveRule {
    for step in &steps[measure_index + 1..] {
        match step {
            ProtocolStep::KeepIf(rule) => return EffectiveRule::Keep(*rule),
            ProtocolStep::Discard => return EffectiveRule::DiscardAll,
            // The next quantum step closes the group's decision window.
            ProtocolStep::BiCnot { .. }
            | ProtocolStep::MeasureLocal { .. }
            | ProtocolStep::MeasureCollective { .. }
            | ProtocolStep::DarkBellMeasure
            | ProtocolStep::BellMeasureRead
            | ProtocolStep::Repeat { .. } => return EffectiveRule::KeepAll,
            ProtocolStep::Distribute(_) | ProtocolStep::TestSample { .. } => {}
        }
    }
    EffectiveRule::KeepAll
}

fn rule_keeps_raw(rule: EffectiveRule, a: bool, b: bool, w: Basis) -> bool {
    match rule {
        EffectiveRule::KeepAll => true,
        EffectiveRule::DiscardAll => false,
        EffectiveRule::Keep(KeepRule::Parity(p)) => announced_parity(a, b, w) == p,
        EffectiveRule::Keep(KeepRule::LocalBit { side, value }) => match side {
            Side::Alice => a == value,
            Side::Bob => b == value,
        },
    }
}

/// Under the collective replacement only the parity is announced; the
/// rule is evaluated on the canonical outcome pair consistent with it.
fn rule_keeps_parity(rule: EffectiveRule, parity: Parity, w: Basis) -> bool {
    let canonical_b = parity.0 ^ matches!(w, Basis::Y);
    rule_keeps_raw(rule, false, canonical_b, w)
}

/// A measurement step with a Pauli basis, its role, and its decision rule.
struct MeasurementSite {
    path: String,
    basis: Basis,
    rule: EffectiveRule,
}

fn measurement_sites(spec: &ProtocolSpec) -> (Vec<MeasurementSite>, Vec<String>) {
    let mut sites = Vec::new();
    let mut skipped = Vec::new();
    fn recurse(
        steps: &[ProtocolStep],
        prefix: &str,
        sites: &mut Vec<MeasurementSite>,
        skipped: &mut Vec<String>,
    ) {
        for (i, step) in steps.iter().enumerate() {
            let path = if prefix.is_empty() {
                format!("{}", i + 1)
            } else {
                format!("{prefix}.{}", i + 1)
            };
            match step {
                ProtocolStep::MeasureLocal { basis, target }
                | ProtocolStep::MeasureCollective { kind: CollectiveKind::Parity(basis), target } => {
                    let rule = if *target == TargetRole::Destination {
                        rule_after(steps, i)
                    } else {
                        EffectiveRule::KeepAll
                    };
                    sites.push(MeasurementSite { path, basis: *basis, rule });
                }
                ProtocolStep::MeasureCollective { kind: CollectiveKind::Proj00, .. } => {
                    skipped.push(path);
                }
                ProtocolStep::BellMeasureRead => skipped.push(path),
                ProtocolStep::Repeat { body, .. } => recurse(body, &path, sites, skipped),
                _ => {}
            }
        }
    }
    recurse(&spec.steps, "", &mut sites, &mut skipped);
    (sites, skipped)
}

fn site_rng(seed: u64, space: u64, site_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(space | site_index as u64);
    rng
}

fn random_group_state(rng: &mut ChaCha8Rng, trial: usize) -> DenseState {
    if trial % 2 == 0 {
        DenseState::random_pure(2, rng)
    } else {
        DenseState::random_mixed(2, rng)
    }
}

/// For each measurement-bearing step, compares the outcome-averaged
/// kept-pair fidelity of the local measurement (rule on raw bits) against
/// the collective parity measurement (rule on announced parity) over
/// random two-pair states. A step whose rule reads more than the parity
/// shows a deviation.
pub fn check_condition2(spec: &ProtocolSpec, trials: usize, seed: u64) -> NumericReport {
    let (sites, skipped) = measurement_sites(spec);
    let mut max_deviation = 0.0f64;
    let mut failing = Vec::new();

    for (idx, site) in sites.iter().enumerate() {
        let mut rng = site_rng(seed, 0x2_0000, idx);
        let mut site_dev = 0.0f64;
        for trial in 0..trials {
            let rho = random_group_state(&mut rng, trial);

            let mut kept_local = 0.0;
            for ((a, b), prob, post) in rho.measure_local(1, site.basis).unwrap() {
                if prob > 0.0 && rule_keeps_raw(site.rule, a, b, site.basis) {
                    kept_local += prob * post.partial_trace(&[0]).unwrap().fidelity();
                }
            }

            let mut kept_collective = 0.0;
            for (parity, prob, post) in rho.measure_collective(1, site.basis).unwrap() {
                if prob > 0.0 && rule_keeps_parity(site.rule, parity, site.basis) {
                    kept_collective += prob * post.partial_trace(&[0]).unwrap().fidelity();
                }
            }

            site_dev = site_dev.max((kept_local - kept_collective).abs());
        }
        max_deviation = max_deviation.max(site_dev);
        if site_dev >= CHANNEL_TOL {
            failing.push(StepFinding {
                path: site.path.clone(),
                detail: format!(
                    "local/collective replacement shifts kept fidelity by {site_dev:.3e}"
                ),
            });
        }
    }

    NumericReport {
        pass: failing.is_empty(),
        max_deviation,
        checked_steps: sites.len(),
        failing,
        skipped,
    }
}

/// The collective measurements the replaced protocol contains: one parity
/// measurement per Pauli-basis measurement step, plus any explicit
/// non-parity collective measurements.
pub fn check_condition3(spec: &ProtocolSpec, trials: usize, seed: u64) -> NumericReport {
    enum Site {
        Parity(String, Basis),
        Proj00(String),
    }
    let mut sites = Vec::new();
    let mut skipped = Vec::new();
    for (path, step) in spec.walk() {
        match step {
            ProtocolStep::MeasureLocal { basis, .. }
            | ProtocolStep::MeasureCollective { kind: CollectiveKind::Parity(basis), .. } => {
                sites.push(Site::Parity(path, *basis));
            }
            ProtocolStep::MeasureCollective { kind: CollectiveKind::Proj00, .. } => {
                sites.push(Site::Proj00(path));
            }
            ProtocolStep::BellMeasureRead => skipped.push(path),
            _ => {}
        }
    }

    let mut max_deviation = 0.0f64;
    let mut failing = Vec::new();
    let mut checked = 0usize;

    for (idx, site) in sites.iter().enumerate() {
        let (path, measure): (&str, Box<dyn Fn(&DenseState) -> Vec<(f64, DenseState)>>) = match site
        {
            Site::Parity(path, basis) => {
                let w = *basis;
                (path, Box::new(move |s: &DenseState| {
                    s.measure_collective(1, w)
                        .unwrap()
                        .into_iter()
                        .map(|(_, p, post)| (p, post))
                        .collect()
                }))
            }
            Site::Proj00(path) => (
                path,
                Box::new(|s: &DenseState| s.measure_proj00(1).unwrap().to_vec()),
            ),
        };
        checked += 1;
        let mut rng = site_rng(seed, 0x3_0000, idx);
        let mut site_dev = 0.0f64;
        for trial in 0..trials {
            let rho = random_group_state(&mut rng, trial);
            let dark = rho.dark_bell_measure();
            let before = measure(&dark);
            let after = measure(&rho);
            for ((p1, post1), (p2, post2)) in before.iter().zip(after.iter()) {
                site_dev = site_dev.max((p1 - p2).abs());
                if *p1 > 1e-9 && *p2 > 1e-9 {
                    site_dev = site_dev.max(post1.max_entry_distance(&post2.dark_bell_measure()));
                }
            }
        }
        max_deviation = max_deviation.max(site_dev);
        if site_dev >= CHANNEL_TOL {
            failing.push(StepFinding {
                path: path.to_string(),
                detail: format!(
                    "collective measurement and dark Bell measurement differ by {site_dev:.3e} \
                     across orderings"
                ),
            });
        }
    }

    NumericReport { pass: failing.is_empty(), max_deviation, checked_steps: checked, failing, skipped }
}

/// Runs all three condition checks; the overall verdict passes iff each
/// condition does. Deterministic for a fixed (spec, trials, seed).
pub fn check(spec: &ProtocolSpec, trials: usize, seed: u64) -> TheoremVerdict {
    let condition1 = check_condition1(spec);
    let condition2 = check_condition2(spec, trials, seed);
    let condition3 = check_condition3(spec, trials, seed);
    let overall = condition1.pass && condition2.pass && condition3.pass;
    TheoremVerdict {
        schema: "epp.verdict.v1".into(),
        protocol: spec.name.clone(),
        trials,
        seed,
        condition1,
        condition2,
        condition3,
        overall,
    }
}
