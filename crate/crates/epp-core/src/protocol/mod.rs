//! Protocol-script DSL: typed AST, line-oriented parser, and the
//! unconditional-purification condition checker.

mod ast;
mod check;
mod parse;

pub use ast::{
    pretty_print, CollectiveKind, CountExpr, GroupingPolicy, KeepRule, ParamValue, ProtocolSpec,
    ProtocolStep, Side, TargetRole,
};
pub use check::{
    check, check_condition1, check_condition2, check_condition3, Condition1Report, NumericReport,
    StepFinding, TheoremVerdict,
};
pub use parse::{parse, ParseError};
