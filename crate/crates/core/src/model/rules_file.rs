//! `.rules` files: a header line with flags and predicates, then one rule
//! per line. Wildcards are `null`.

use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use super::rules::{ActionSelector, Pattern, RewriteRule, RuleModel};
use crate::protocol::codec::{
    as_object, as_u64, check_keys, decode_action, encode_action, object, parse_line, schema, to_line, ProtocolError,
};

#[derive(Debug, Error)]
pub enum RulesFileError {
    #[error("reading rules file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Line { line: usize, source: ProtocolError },
    #[error("empty rules file")]
    Empty,
    #[error(transparent)]
    Invalid(#[from] super::rules::RuleModelError),
}

fn encode_pattern(p: &Pattern) -> Value {
    object([
        ("size", p.size().into()),
        ("anchor", Value::Array(vec![p.anchor().0.into(), p.anchor().1.into()])),
        (
            "cells",
            Value::Array(p.cells().iter().map(|c| c.map_or(Value::Null, Value::from)).collect()),
        ),
    ])
}

fn decode_pattern(v: &Value) -> Result<Pattern, ProtocolError> {
    let m = as_object(v, "pattern")?;
    check_keys(m, &["size", "anchor", "cells"], &[])?;
    let size = as_u64(&m["size"], "size")? as usize;
    let anchor = match m["anchor"].as_array().map(Vec::as_slice) {
        Some([x, y]) => (as_u64(x, "anchor")? as usize, as_u64(y, "anchor")? as usize),
        _ => return Err(schema("anchor must be [x, y]")),
    };
    let cells = m["cells"]
        .as_array()
        .ok_or_else(|| schema("cells must be an array"))?
        .iter()
        .map(|c| match c {
            Value::Null => Ok(None),
            other => {
                let n = as_u64(other, "cell")?;
                u8::try_from(n).map(Some).map_err(|_| schema("cell out of range"))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Pattern::new(size, anchor, cells).map_err(|e| schema(e.to_string()))
}

fn encode_patterns(ps: &[Pattern]) -> Value {
    Value::Array(ps.iter().map(encode_pattern).collect())
}

fn decode_patterns(v: &Value) -> Result<Vec<Pattern>, ProtocolError> {
    v.as_array()
        .ok_or_else(|| schema("predicate must be an array of patterns"))?
        .iter()
        .map(decode_pattern)
        .collect()
}

pub fn format_rules(model: &RuleModel) -> String {
    let header = object([
        ("default_dynamics", model.default_dynamics().into()),
        ("goal", encode_patterns(model.goal())),
        ("hazard", encode_patterns(model.hazard())),
    ]);
    let mut out = to_line(&header);
    for r in model.rules() {
        let action = match r.selector {
            ActionSelector::Only(a) => encode_action(a),
            ActionSelector::Any => "any".into(),
        };
        out.push_str(&to_line(&object([
            ("priority", r.priority.into()),
            ("action", action),
            ("pattern", encode_pattern(&r.pattern)),
            ("write", r.write.into()),
        ])));
    }
    out
}

pub fn parse_rules(text: &str) -> Result<RuleModel, RulesFileError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(RulesFileError::Empty)?;
    let at = |line: usize| move |source| RulesFileError::Line { line: line + 1, source };
    let head = parse_line(header).map_err(at(hline))?;
    check_keys(&head, &["default_dynamics", "goal", "hazard"], &[]).map_err(at(hline))?;
    let default_dynamics = head["default_dynamics"]
        .as_bool()
        .ok_or_else(|| schema("default_dynamics must be a boolean"))
        .map_err(at(hline))?;
    let goal = decode_patterns(&head["goal"]).map_err(at(hline))?;
    let hazard = decode_patterns(&head["hazard"]).map_err(at(hline))?;
    let mut rules = Vec::new();
    for (i, line) in lines {
        let rule = (|| {
            let m = parse_line(line)?;
            check_keys(&m, &["priority", "action", "pattern", "write"], &[])?;
            let priority = m["priority"].as_i64().ok_or_else(|| schema("priority must be an integer"))?;
            let selector = match &m["action"] {
                Value::String(s) if s == "any" => ActionSelector::Any,
                other => ActionSelector::Only(decode_action(other)?),
            };
            let write = u8::try_from(as_u64(&m["write"], "write")?).map_err(|_| schema("write out of range"))?;
            Ok(RewriteRule {
                selector,
                pattern: decode_pattern(&m["pattern"])?,
                write,
                priority,
            })
        })()
        .map_err(at(i))?;
        rules.push(rule);
    }
    Ok(RuleModel::new(rules, default_dynamics, goal, hazard)?)
}

pub fn save_rules(model: &RuleModel, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, format_rules(model))
}

pub fn load_rules(path: &Path) -> Result<RuleModel, RulesFileError> {
    parse_rules(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ActionId;
    use crate::palette::*;

    #[test]
    fn round_trip_with_wildcards_and_any() {
        let rules = vec![
            RewriteRule::new(
                ActionId::RIGHT,
                Pattern::centered(3, &[((0, 0), AGENT), ((1, 0), FLOOR)]).unwrap(),
                FLOOR,
                -3,
            ),
            RewriteRule {
                selector: ActionSelector::Any,
                pattern: Pattern::single(HAZARD),
                write: HAZARD,
                priority: 5,
            },
        ];
        let m = RuleModel::new(rules, false, vec![Pattern::single(AGENT_ON_GOAL)], vec![]).unwrap();
        let text = format_rules(&m);
        assert!(text.lines().next().unwrap().starts_with("{\"default_dynamics\":false,"));
        assert_eq!(parse_rules(&text).unwrap(), m);
    }

    #[test]
    fn reports_corrupt_lines() {
        let text = "{\"default_dynamics\":true,\"goal\":[],\"hazard\":[]}\n{\"priority\":1}\n";
        assert!(matches!(parse_rules(text), Err(RulesFileError::Line { line: 2, .. })));
        assert!(matches!(parse_rules(""), Err(RulesFileError::Empty)));
    }
}
