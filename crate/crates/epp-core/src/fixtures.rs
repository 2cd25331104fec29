//! Bundled protocol scripts: the three reference protocols, a three-pair
//! phase-correction variant, and one negative fixture per checker
//! condition.

pub const PROTOCOL1: &str = include_str!("../fixtures/protocol1.epp");
pub const PROTOCOL2: &str = include_str!("../fixtures/protocol2.epp");
pub const PROTOCOL3: &str = include_str!("../fixtures/protocol3.epp");
pub const PHASE_CORRECT_3PAIR: &str = include_str!("../fixtures/phase_correct_3pair.epp");
pub const FAIL_CONDITION1: &str = include_str!("../fixtures/fail_condition1.epp");
pub const FAIL_CONDITION2: &str = include_str!("../fixtures/fail_condition2.epp");
pub const FAIL_CONDITION3: &str = include_str!("../fixtures/fail_condition3.epp");

/// (file name, source) for every bundled script.
pub fn all() -> [(&'static str, &'static str); 7] {
    [
        ("protocol1.epp", PROTOCOL1),
        ("protocol2.epp", PROTOCOL2),
        ("protocol3.epp", PROTOCOL3),
        ("phase_correct_3pair.epp", PHASE_CORRECT_3PAIR),
        ("fail_condition1.epp", FAIL_CONDITION1),
        ("fail_condition2.epp", FAIL_CONDITION2),
        ("fail_condition3.epp", FAIL_CONDITION3),
    ]
}
