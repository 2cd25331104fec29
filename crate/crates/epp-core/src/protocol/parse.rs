//! Line-oriented parser for protocol scripts.
//!
//! Grammar (one statement per line, `#` starts a comment):
//!
//! ```text
//! PROTOCOL <ident>
//! PARAM <ident> = <number>
//! DISTRIBUTE <count>
//! DARKBELL
//! MEASURE BELL READ
//! TEST <X|Y|Z> <count>
//! REPEAT <count> {
//!   ...
//! }
//! BICNOT <Z|X> [RANDOM|ADJACENT]
//! MEASURE <LOCAL|COLLECTIVE> <X|Y|Z|PROJ00> ON <destination|test|trash|remaining>
//! KEEPIF <0|1>
//! KEEPIF <ALICE|BOB> <0|1>
//! DISCARD
//! ```
//!
//! `<count>` is a non-negative integer literal or the name of a previously
//! declared parameter. `PROJ00` is valid only for collective measurements.

use super::ast::*;
use crate::bell::{Basis, CnotBasis, Parity};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, col: usize, message: impl fmt::Display) -> Self {
        ParseError { line, col, message: message.to_string() }
    }
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    col: usize,
}

fn tokenize(line_no: usize, line: &str) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token { text: &code[s..i], line: line_no, col: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token { text: &code[s..], line: line_no, col: s + 1 });
    }
    tokens
}

struct LineParser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    line: usize,
}

impl<'a> LineParser<'a> {
    fn next(&mut self, expected: &str) -> Result<Token<'a>, ParseError> {
        match self.tokens.get(self.pos) {
            Some(tok) => {
                self.pos += 1;
                Ok(*tok)
            }
            None => {
                let col = self.tokens.last().map(|t| t.col + t.text.len()).unwrap_or(1);
                Err(ParseError::new(self.line, col, format!("expected {expected}")))
            }
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.tokens.get(self.pos) {
            Some(tok) => Err(ParseError::new(
                tok.line,
                tok.col,
                format!("unexpected trailing token `{}`", tok.text),
            )),
            None => Ok(()),
        }
    }
}

fn parse_basis(tok: Token<'_>) -> Result<Basis, ParseError> {
    match tok.text {
        "X" => Ok(Basis::X),
        "Y" => Ok(Basis::Y),
        "Z" => Ok(Basis::Z),
        other => Err(ParseError::new(
            tok.line,
            tok.col,
            format!("expected basis X, Y or Z, got `{other}`"),
        )),
    }
}

fn parse_count(
    tok: Token<'_>,
    params: &BTreeMap<String, ParamValue>,
) -> Result<CountExpr, ParseError> {
    if tok.text.chars().all(|c| c.is_ascii_digit()) {
        let value: u64 = tok.text.parse().map_err(|_| {
            ParseError::new(tok.line, tok.col, format!("integer `{}` out of range", tok.text))
        })?;
        return Ok(CountExpr::Literal(value));
    }
    if is_ident(tok.text) {
        if !params.contains_key(tok.text) {
            return Err(ParseError::new(
                tok.line,
                tok.col,
                format!("unbound parameter `{}`", tok.text),
            ));
        }
        return Ok(CountExpr::Param(tok.text.to_string()));
    }
    Err(ParseError::new(
        tok.line,
        tok.col,
        format!("expected count (integer or parameter name), got `{}`", tok.text),
    ))
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_bit(tok: Token<'_>) -> Result<bool, ParseError> {
    match tok.text {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(ParseError::new(tok.line, tok.col, format!("expected 0 or 1, got `{other}`"))),
    }
}

fn parse_role(tok: Token<'_>) -> Result<TargetRole, ParseError> {
    match tok.text {
        "destination" => Ok(TargetRole::Destination),
        "test" => Ok(TargetRole::Test),
        "trash" => Ok(TargetRole::Trash),
        "remaining" => Ok(TargetRole::Remaining),
        other => Err(ParseError::new(
            tok.line,
            tok.col,
            format!("expected destination, test, trash or remaining, got `{other}`"),
        )),
    }
}

/// Parses a protocol script, returning the typed AST or the first
/// diagnostic. The spec's name defaults to "protocol" unless the script
/// carries a `PROTOCOL <name>` line.
pub fn parse(source: &str) -> Result<ProtocolSpec, ParseError> {
    let mut name = String::from("protocol");
    let mut params: BTreeMap<String, ParamValue> = BTreeMap::new();
    // Stack of open blocks; the bottom entry is the top-level step list.
    let mut blocks: Vec<(Option<(CountExpr, usize, usize)>, Vec<ProtocolStep>)> =
        vec![(None, Vec::new())];

    for (idx, raw_line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let tokens = tokenize(line_no, raw_line);
        if tokens.is_empty() {
            continue;
        }
        let mut lp = LineParser { tokens, pos: 0, line: line_no };
        let head = lp.next("statement")?;
        match head.text {
            "PROTOCOL" => {
                let tok = lp.next("protocol name")?;
                if !is_ident(tok.text) {
                    return Err(ParseError::new(tok.line, tok.col, "expected identifier"));
                }
                name = tok.text.to_string();
                lp.finish()?;
            }
            "PARAM" => {
                let ident = lp.next("parameter name")?;
                if !is_ident(ident.text) {
                    return Err(ParseError::new(ident.line, ident.col, "expected identifier"));
                }
                let eq = lp.next("`=`")?;
                if eq.text != "=" {
                    return Err(ParseError::new(eq.line, eq.col, "expected `=`"));
                }
                let value_tok = lp.next("number")?;
                let value = if value_tok.text.chars().all(|c| c.is_ascii_digit()) {
                    value_tok.text.parse::<u64>().map(ParamValue::Int).map_err(|_| {
                        ParseError::new(value_tok.line, value_tok.col, "integer out of range")
                    })?
                } else {
                    value_tok
                        .text
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .map(ParamValue::Real)
                        .ok_or_else(|| {
                            ParseError::new(value_tok.line, value_tok.col, "expected number")
                        })?
                };
                params.insert(ident.text.to_string(), value);
                lp.finish()?;
            }
            "DISTRIBUTE" => {
                let count = parse_count(lp.next("count")?, &params)?;
                lp.finish()?;
                blocks.last_mut().unwrap().1.push(ProtocolStep::Distribute(count));
            }
            "DARKBELL" => {
                lp.finish()?;
                blocks.last_mut().unwrap().1.push(ProtocolStep::DarkBellMeasure);
            }
            "TEST" => {
                let basis = parse_basis(lp.next("basis")?)?;
                let count = parse_count(lp.next("count")?, &params)?;
                lp.finish()?;
                blocks.last_mut().unwrap().1.push(ProtocolStep::TestSample { basis, count });
            }
            "REPEAT" => {
                let count = parse_count(lp.next("count")?, &params)?;
                let brace = lp.next("`{`")?;
                if brace.text != "{" {
                    return Err(ParseError::new(brace.line, brace.col, "expected `{`"));
                }
                lp.finish()?;
                blocks.push((Some((count, head.line, head.col)), Vec::new()));
            }
            "}" => {
                lp.finish()?;
                if blocks.len() == 1 {
                    return Err(ParseError::new(head.line, head.col, "unmatched `}`"));
                }
                let (header, body) = blocks.pop().unwrap();
                let (count, _, _) = header.unwrap();
                blocks.last_mut().unwrap().1.push(ProtocolStep::Repeat { count, body });
            }
            "BICNOT" => {
                let basis_tok = lp.next("basis Z or X")?;
                let basis = match basis_tok.text {
                    "Z" => CnotBasis::Z,
                    "X" => CnotBasis::X,
                    other => {
                        return Err(ParseError::new(
                            basis_tok.line,
                            basis_tok.col,
                            format!("expected Z or X, got `{other}`"),
                        ))
                    }
                };
                let grouping = match lp.tokens.get(lp.pos).map(|t| t.text) {
                    Some("ADJACENT") => {
                        lp.pos += 1;
                        GroupingPolicy::Adjacent
                    }
                    Some("RANDOM") => {
                        lp.pos += 1;
                        GroupingPolicy::Random
                    }
                    _ => GroupingPolicy::Random,
                };
                lp.finish()?;
                blocks.last_mut().unwrap().1.push(ProtocolStep::BiCnot { basis, grouping });
            }
            "MEASURE" => {
                let mode = lp.next("LOCAL, COLLECTIVE or BELL")?;
                match mode.text {
                    "BELL" => {
                        let read = lp.next("READ")?;
                        if read.text != "READ" {
                            return Err(ParseError::new(read.line, read.col, "expected READ"));
                        }
                        lp.finish()?;
                        blocks.last_mut().unwrap().1.push(ProtocolStep::BellMeasureRead);
                    }
                    "LOCAL" => {
                        let basis = parse_basis(lp.next("basis")?)?;
                        let on = lp.next("ON")?;
                        if on.text != "ON" {
                            return Err(ParseError::new(on.line, on.col, "expected ON"));
                        }
                        let target = parse_role(lp.next("target role")?)?;
                        lp.finish()?;
                        blocks
                            .last_mut()
                            .unwrap()
                            .1
                            .push(ProtocolStep::MeasureLocal { basis, target });
                    }
                    "COLLECTIVE" => {
                        let kind_tok = lp.next("basis or PROJ00")?;
                        let kind = if kind_tok.text == "PROJ00" {
                            CollectiveKind::Proj00
                        } else {
                            CollectiveKind::Parity(parse_basis(kind_tok)?)
                        };
                        let on = lp.next("ON")?;
                        if on.text != "ON" {
                            return Err(ParseError::new(on.line, on.col, "expected ON"));
                        }
                        let target = parse_role(lp.next("target role")?)?;
                        lp.finish()?;
                        blocks
                            .last_mut()
                            .unwrap()
                            .1
                            .push(ProtocolStep::MeasureCollective { kind, target });
                    }
                    other => {
                        return Err(ParseError::new(
                            mode.line,
                            mode.col,
                            format!("expected LOCAL, COLLECTIVE or BELL, got `{other}`"),
                        ))
                    }
                }
            }
            "KEEPIF" => {
                let tok = lp.next("parity bit or party")?;
                let rule = match tok.text {
                    "ALICE" | "BOB" => {
                        let side = if tok.text == "ALICE" { Side::Alice } else { Side::Bob };
                        let value = parse_bit(lp.next("bit")?)?;
                        KeepRule::LocalBit { side, value }
                    }
                    _ => KeepRule::Parity(Parity(parse_bit(tok)?)),
                };
                lp.finish()?;
                blocks.last_mut().unwrap().1.push(ProtocolStep::KeepIf(rule));
            }
            "DISCARD" => {
                lp.finish()?;
                blocks.last_mut().unwrap().1.push(ProtocolStep::Discard);
            }
            other => {
                return Err(ParseError::new(
                    head.line,
                    head.col,
                    format!(
                        "unknown step kind `{other}` (expected PROTOCOL, PARAM, DISTRIBUTE, \
                         DARKBELL, TEST, REPEAT, BICNOT, MEASURE, KEEPIF or DISCARD)"
                    ),
                ))
            }
        }
    }

    if blocks.len() > 1 {
        let (_, line, col) = blocks.last().unwrap().0.clone().unwrap();
        return Err(ParseError::new(line, col, "unclosed REPEAT block"));
    }
    let steps = blocks.pop().unwrap().1;
    if steps.is_empty() {
        return Err(ParseError::new(1, 1, "no steps"));
    }
    Ok(ProtocolSpec { name, params, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_script() {
        let spec = parse("DISTRIBUTE 100\nDARKBELL\n").unwrap();
        assert_eq!(spec.name, "protocol");
        assert_eq!(spec.steps.len(), 2);
    }

    #[test]
    fn empty_file_is_an_error() {
        let err = parse("").unwrap_err();
        assert!(err.message.contains("no steps"));
        let err = parse("# only a comment\n\n").unwrap_err();
        assert!(err.message.contains("no steps"));
    }

    #[test]
    fn read_bell_measurement_parses() {
        let spec = parse("MEASURE BELL READ\n").unwrap();
        assert_eq!(spec.steps, vec![ProtocolStep::BellMeasureRead]);
    }

    #[test]
    fn unknown_keyword_reports_position() {
        let err = parse("DISTRIBUTE 10\n  FROBNICATE 3\n").unwrap_err();
        assert_eq!((err.line, err.col), (2, 3));
        assert!(err.message.contains("FROBNICATE"));
    }

    #[test]
    fn unbound_parameter_is_an_error() {
        let err = parse("DISTRIBUTE N\n").unwrap_err();
        assert!(err.message.contains("unbound parameter `N`"), "{err}");
        assert!(parse("PARAM N = 10\nDISTRIBUTE N\n").is_ok());
    }

    #[test]
    fn repeat_blocks_nest_and_must_close() {
        let spec = parse(
            "PARAM g = 2\nDISTRIBUTE 10\nREPEAT g {\n  BICNOT Z\n  REPEAT 2 {\n    DISCARD\n  }\n}\n",
        )
        .unwrap();
        match &spec.steps[1] {
            ProtocolStep::Repeat { body, .. } => {
                assert_eq!(body.len(), 2);
                assert!(matches!(body[1], ProtocolStep::Repeat { .. }));
            }
            other => panic!("expected repeat, got {other:?}"),
        }
        assert!(parse("REPEAT 2 {\nBICNOT Z\n").unwrap_err().message.contains("unclosed"));
        assert!(parse("}\n").unwrap_err().message.contains("unmatched"));
    }

    #[test]
    fn keep_rules() {
        let spec = parse("KEEPIF 0\nKEEPIF 1\nKEEPIF ALICE 1\nKEEPIF BOB 0\n").unwrap();
        assert_eq!(
            spec.steps,
            vec![
                ProtocolStep::KeepIf(KeepRule::Parity(Parity::ZERO)),
                ProtocolStep::KeepIf(KeepRule::Parity(Parity::ONE)),
                ProtocolStep::KeepIf(KeepRule::LocalBit { side: Side::Alice, value: true }),
                ProtocolStep::KeepIf(KeepRule::LocalBit { side: Side::Bob, value: false }),
            ]
        );
    }

    #[test]
    fn measurement_statements() {
        let spec = parse(
            "MEASURE LOCAL Z ON destination\nMEASURE COLLECTIVE X ON test\n\
             MEASURE COLLECTIVE PROJ00 ON destination\nMEASURE LOCAL Y ON remaining\n",
        )
        .unwrap();
        assert_eq!(spec.steps.len(), 4);
        assert!(matches!(
            spec.steps[2],
            ProtocolStep::MeasureCollective { kind: CollectiveKind::Proj00, .. }
        ));
        // PROJ00 is not a local measurement.
        assert!(parse("MEASURE LOCAL PROJ00 ON test\n").is_err());
    }

    #[test]
    fn trailing_tokens_are_rejected() {
        assert!(parse("DARKBELL NOW\n").is_err());
        assert!(parse("BICNOT Z ADJACENT EXTRA\n").is_err());
    }

    #[test]
    fn grouping_policies() {
        let spec = parse("BICNOT Z\nBICNOT X ADJACENT\nBICNOT Z RANDOM\n").unwrap();
        assert_eq!(
            spec.steps,
            vec![
                ProtocolStep::BiCnot { basis: CnotBasis::Z, grouping: GroupingPolicy::Random },
                ProtocolStep::BiCnot { basis: CnotBasis::X, grouping: GroupingPolicy::Adjacent },
                ProtocolStep::BiCnot { basis: CnotBasis::Z, grouping: GroupingPolicy::Random },
            ]
        );
    }

    #[test]
    fn pretty_print_round_trips_fixtures() {
        let source = "PROTOCOL demo\nPARAM N = 64\nPARAM delta = 0.125\nDISTRIBUTE N\n\
                      TEST X 4\nMEASURE LOCAL X ON test\nREPEAT 2 {\n  BICNOT Z ADJACENT\n\
                      MEASURE LOCAL Z ON destination\n  KEEPIF 0\n}\nMEASURE LOCAL Z ON remaining\n";
        let spec = parse(source).unwrap();
        let printed = super::super::ast::pretty_print(&spec);
        let reparsed = parse(&printed).unwrap();
        assert_eq!(spec, reparsed);
    }
}
