//! Canonical one-line object encoding shared by the wire, trace files and
//! artifacts. Keys are always written in a fixed order and all numbers are
//! integers, so encodings are byte-reproducible.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::env::{ActionId, Frame, GameStatus};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown op {0:?}")]
    UnknownOp(String),
    #[error("schema violation: {0}")]
    Schema(String),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Malformed(_) => "MalformedMessage",
            ProtocolError::UnknownOp(_) => "UnknownOp",
            ProtocolError::Schema(_) => "SchemaViolation",
        }
    }
}

pub(crate) fn schema(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Schema(msg.into())
}

/// Parses one line into a JSON object, rejecting embedded newlines.
pub fn parse_line(line: &str) -> Result<Map<String, Value>, ProtocolError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.contains('\n') {
        return Err(ProtocolError::Malformed("embedded newline".into()));
    }
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ProtocolError::Malformed("not an object".into())),
        Err(e) => Err(ProtocolError::Malformed(e.to_string())),
    }
}

/// Serializes a value as a single newline-terminated line.
pub fn to_line(value: &Value) -> String {
    let mut s = serde_json::to_string(value).expect("values always serialize");
    s.push('\n');
    s
}

/// Checks that `map` has exactly the `required` keys plus any subset of
/// `optional`.
pub(crate) fn check_keys(map: &Map<String, Value>, required: &[&str], optional: &[&str]) -> Result<(), ProtocolError> {
    for key in map.keys() {
        if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            return Err(schema(format!("unexpected field {key:?}")));
        }
    }
    for key in required {
        if !map.contains_key(*key) {
            return Err(schema(format!("missing field {key:?}")));
        }
    }
    Ok(())
}

pub(crate) fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>, ProtocolError> {
    v.as_object().ok_or_else(|| schema(format!("{what} must be an object")))
}

pub(crate) fn as_u64(v: &Value, what: &str) -> Result<u64, ProtocolError> {
    v.as_u64().ok_or_else(|| schema(format!("{what} must be a non-negative integer")))
}

pub(crate) fn as_str<'a>(v: &'a Value, what: &str) -> Result<&'a str, ProtocolError> {
    v.as_str().ok_or_else(|| schema(format!("{what} must be a string")))
}

pub(crate) fn field<'a>(map: &'a Map<String, Value>, key: &str) -> &'a Value {
    &map[key]
}

pub fn encode_frame(frame: &Frame) -> Value {
    let mut m = Map::new();
    m.insert("width".into(), frame.width().into());
    m.insert("height".into(), frame.height().into());
    m.insert("level".into(), frame.level().into());
    m.insert(
        "cells".into(),
        Value::Array(frame.cells().iter().map(|&c| Value::from(c)).collect()),
    );
    Value::Object(m)
}

pub fn decode_frame(v: &Value) -> Result<Frame, ProtocolError> {
    let m = as_object(v, "frame")?;
    check_keys(m, &["width", "height", "level", "cells"], &[])?;
    let width = as_u64(&m["width"], "width")? as usize;
    let height = as_u64(&m["height"], "height")? as usize;
    let level = as_u64(&m["level"], "level")? as usize;
    let cells = m["cells"]
        .as_array()
        .ok_or_else(|| schema("cells must be an array"))?
        .iter()
        .map(|c| {
            let n = as_u64(c, "cell")?;
            u8::try_from(n).map_err(|_| schema(format!("symbol {n} out of range")))
        })
        .collect::<Result<Vec<u8>, _>>()?;
    Frame::new(width, height, level, cells).map_err(|e| schema(e.to_string()))
}

pub fn encode_action(action: ActionId) -> Value {
    let mut m = Map::new();
    match action {
        ActionId::Simple(k) => {
            m.insert("kind".into(), "simple".into());
            m.insert("k".into(), k.into());
        }
        ActionId::Point { x, y } => {
            m.insert("kind".into(), "point".into());
            m.insert("x".into(), x.into());
            m.insert("y".into(), y.into());
        }
        ActionId::Reset => {
            m.insert("kind".into(), "reset".into());
        }
    }
    Value::Object(m)
}

pub fn decode_action(v: &Value) -> Result<ActionId, ProtocolError> {
    let m = as_object(v, "action")?;
    let kind = as_str(m.get("kind").ok_or_else(|| schema("action needs kind"))?, "kind")?;
    let small = |key: &str| -> Result<u8, ProtocolError> {
        let n = as_u64(&m[key], key)?;
        u8::try_from(n).map_err(|_| schema(format!("{key} out of range")))
    };
    match kind {
        "simple" => {
            check_keys(m, &["kind", "k"], &[])?;
            let k = small("k")?;
            if !(1..=6).contains(&k) {
                return Err(schema("k must be in 1..=6"));
            }
            Ok(ActionId::Simple(k))
        }
        "point" => {
            check_keys(m, &["kind", "x", "y"], &[])?;
            Ok(ActionId::Point {
                x: small("x")?,
                y: small("y")?,
            })
        }
        "reset" => {
            check_keys(m, &["kind"], &[])?;
            Ok(ActionId::Reset)
        }
        other => Err(schema(format!("unknown action kind {other:?}"))),
    }
}

pub fn encode_status(status: GameStatus) -> Value {
    status.as_str().into()
}

pub fn decode_status(v: &Value) -> Result<GameStatus, ProtocolError> {
    let s = as_str(v, "status")?;
    GameStatus::parse(s).ok_or_else(|| schema(format!("unknown status {s:?}")))
}

/// Builds an object from key/value pairs in the given order.
pub fn object<I, K>(pairs: I) -> Value
where
    I: IntoIterator<Item = (K, Value)>,
    K: Into<String>,
{
    Value::Object(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
}
