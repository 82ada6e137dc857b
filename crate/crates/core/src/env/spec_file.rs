//! Game specification files: a header object line followed by one frame
//! object line per level, in the shared canonical encoding.

use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use super::{GameSpec, GameSpecError};
use crate::protocol::codec::{
    as_str, as_u64, check_keys, decode_action, decode_frame, encode_action, encode_frame, object, parse_line, to_line,
    ProtocolError,
};

#[derive(Debug, Error)]
pub enum SpecFileError {
    #[error("reading spec file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Line { line: usize, source: ProtocolError },
    #[error("empty spec file")]
    Empty,
    #[error(transparent)]
    Invalid(#[from] GameSpecError),
}

pub fn parse_spec(text: &str) -> Result<GameSpec, SpecFileError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(SpecFileError::Empty)?;
    let at = |line: usize| move |source| SpecFileError::Line { line: line + 1, source };
    let head = parse_line(header).map_err(at(0))?;
    check_keys(&head, &["game_id", "legal"], &["baselines"]).map_err(at(0))?;
    let game_id = as_str(&head["game_id"], "game_id").map_err(at(0))?.to_string();
    let legal = head["legal"]
        .as_array()
        .ok_or_else(|| ProtocolError::Schema("legal must be an array".into()))
        .and_then(|a| a.iter().map(decode_action).collect::<Result<Vec<_>, _>>())
        .map_err(at(0))?;
    let baselines = match head.get("baselines") {
        None => None,
        Some(v) => Some(
            v.as_array()
                .ok_or_else(|| ProtocolError::Schema("baselines must be an array".into()))
                .and_then(|a| a.iter().map(|n| as_u64(n, "baseline").map(|n| n as u32)).collect())
                .map_err(at(0))?,
        ),
    };
    let mut frames = Vec::new();
    for (i, line) in lines {
        let map = parse_line(line).map_err(at(i))?;
        frames.push(decode_frame(&Value::Object(map)).map_err(at(i))?);
    }
    Ok(GameSpec::new(game_id, frames, legal, baselines)?)
}

pub fn load_spec(path: &Path) -> Result<GameSpec, SpecFileError> {
    parse_spec(&std::fs::read_to_string(path)?)
}

/// Writes a spec with explicit baselines.
pub fn format_spec(spec: &GameSpec) -> String {
    let header = object([
        ("game_id", spec.id().into()),
        (
            "legal",
            Value::Array(spec.legal().iter().map(|&a| encode_action(a)).collect()),
        ),
        ("baselines", spec.baselines().into()),
    ]);
    let mut out = to_line(&header);
    for level in spec.levels() {
        out.push_str(&to_line(&encode_frame(&level.initial)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::games;

    #[test]
    fn builtin_specs_round_trip() {
        for spec in [games::corridor(), games::keydoor(), games::pushblock()] {
            assert_eq!(parse_spec(&format_spec(&spec)).unwrap(), spec);
        }
    }

    #[test]
    fn baselines_default_to_shortest() {
        let text = "{\"game_id\":\"tiny\",\"legal\":[{\"kind\":\"simple\",\"k\":4}]}\n{\"width\":3,\"height\":1,\"level\":0,\"cells\":[2,0,3]}\n";
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.baselines(), vec![2]);
    }

    #[test]
    fn reports_bad_line_numbers() {
        let text = "{\"game_id\":\"tiny\",\"legal\":[]}\n{\"width\":3}\n";
        match parse_spec(text) {
            Err(SpecFileError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_spec(""), Err(SpecFileError::Empty)));
    }
}
