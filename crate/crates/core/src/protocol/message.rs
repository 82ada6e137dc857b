use serde_json::Value;

use super::codec::*;
use crate::env::{ActionId, Counters, Frame, GameStatus};

/// Client requests: game-session ops and the `wm_*` world-model ops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    NewSession { game_id: String },
    Step { session_id: String, action: ActionId },
    LegalActions { session_id: String },
    Close { session_id: String },
    WmReconstruct { frame: Frame },
    WmPredict { state: Frame, action: ActionId },
    WmRender { state: Frame },
    WmSize,
}

impl Request {
    pub fn op(&self) -> &'static str {
        match self {
            Request::NewSession { .. } => "new_session",
            Request::Step { .. } => "step",
            Request::LegalActions { .. } => "legal_actions",
            Request::Close { .. } => "close",
            Request::WmReconstruct { .. } => "wm_reconstruct",
            Request::WmPredict { .. } => "wm_predict",
            Request::WmRender { .. } => "wm_render",
            Request::WmSize => "wm_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WirePrediction {
    Next { state: Frame, status: GameStatus },
    Unknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: String,
    pub text: String,
}

/// Server responses. `ok` is implied by the absence of `error`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Response {
    pub session_id: Option<String>,
    pub frame: Option<Frame>,
    pub settled: Option<Frame>,
    pub state: Option<Frame>,
    pub status: Option<GameStatus>,
    pub counters: Option<Counters>,
    pub actions: Option<Vec<ActionId>>,
    pub prediction: Option<WirePrediction>,
    pub ascii: Option<String>,
    pub size: Option<u64>,
    pub error: Option<WireError>,
}

impl Response {
    pub fn error(code: &str, text: impl Into<String>) -> Self {
        Response {
            error: Some(WireError {
                code: code.to_string(),
                text: text.into(),
            }),
            ..Default::default()
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Request(Request),
    Response(Response),
}

impl From<Request> for Message {
    fn from(r: Request) -> Self {
        Message::Request(r)
    }
}

impl From<Response> for Message {
    fn from(r: Response) -> Self {
        Message::Response(r)
    }
}

pub fn encode_request(req: &Request) -> String {
    let mut pairs: Vec<(&str, Value)> = vec![("op", req.op().into())];
    match req {
        Request::NewSession { game_id } => pairs.push(("game_id", game_id.as_str().into())),
        Request::Step { session_id, action } => {
            pairs.push(("session_id", session_id.as_str().into()));
            pairs.push(("action", encode_action(*action)));
        }
        Request::LegalActions { session_id } | Request::Close { session_id } => {
            pairs.push(("session_id", session_id.as_str().into()))
        }
        Request::WmReconstruct { frame } => pairs.push(("frame", encode_frame(frame))),
        Request::WmPredict { state, action } => {
            pairs.push(("state", encode_frame(state)));
            pairs.push(("action", encode_action(*action)));
        }
        Request::WmRender { state } => pairs.push(("state", encode_frame(state))),
        Request::WmSize => {}
    }
    to_line(&object(pairs))
}

fn encode_prediction(p: &WirePrediction) -> Value {
    match p {
        WirePrediction::Next { state, status } => object([
            ("kind", "next".into()),
            ("state", encode_frame(state)),
            ("status", encode_status(*status)),
        ]),
        WirePrediction::Unknown { reason } => object([("kind", "unknown".into()), ("reason", reason.as_str().into())]),
    }
}

fn response_value(resp: &Response) -> Value {
    let mut pairs: Vec<(&str, Value)> = vec![("ok", resp.is_ok().into())];
    if let Some(err) = &resp.error {
        pairs.push((
            "error",
            object([("code", err.code.as_str().into()), ("text", err.text.as_str().into())]),
        ));
        return object(pairs);
    }
    if let Some(s) = &resp.session_id {
        pairs.push(("session_id", s.as_str().into()));
    }
    if let Some(f) = &resp.frame {
        pairs.push(("frame", encode_frame(f)));
    }
    if let Some(f) = &resp.settled {
        pairs.push(("settled", encode_frame(f)));
    }
    if let Some(f) = &resp.state {
        pairs.push(("state", encode_frame(f)));
    }
    if let Some(s) = resp.status {
        pairs.push(("status", encode_status(s)));
    }
    if let Some(c) = &resp.counters {
        pairs.push((
            "counters",
            object([
                ("total_actions", c.total_actions.into()),
                ("level_actions", c.level_actions.clone().into()),
            ]),
        ));
    }
    if let Some(a) = &resp.actions {
        pairs.push(("actions", Value::Array(a.iter().map(|&x| encode_action(x)).collect())));
    }
    if let Some(p) = &resp.prediction {
        pairs.push(("prediction", encode_prediction(p)));
    }
    if let Some(a) = &resp.ascii {
        pairs.push(("ascii", a.as_str().into()));
    }
    if let Some(n) = resp.size {
        pairs.push(("size", n.into()));
    }
    object(pairs)
}

pub fn encode_response(resp: &Response) -> String {
    to_line(&response_value(resp))
}

pub fn encode_message(msg: &Message) -> String {
    match msg {
        Message::Request(r) => encode_request(r),
        Message::Response(r) => encode_response(r),
    }
}

fn decode_request_map(m: &serde_json::Map<String, Value>) -> Result<Request, ProtocolError> {
    let op = match m.get("op") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return Err(schema("op must be a string")),
        None => return Err(schema("missing op")),
    };
    let sid = |m: &serde_json::Map<String, Value>| as_str(field(m, "session_id"), "session_id").map(str::to_string);
    Ok(match op {
        "new_session" => {
            check_keys(m, &["op", "game_id"], &[])?;
            Request::NewSession {
                game_id: as_str(field(m, "game_id"), "game_id")?.to_string(),
            }
        }
        "step" => {
            check_keys(m, &["op", "session_id", "action"], &[])?;
            Request::Step {
                session_id: sid(m)?,
                action: decode_action(field(m, "action"))?,
            }
        }
        "legal_actions" => {
            check_keys(m, &["op", "session_id"], &[])?;
            Request::LegalActions { session_id: sid(m)? }
        }
        "close" => {
            check_keys(m, &["op", "session_id"], &[])?;
            Request::Close { session_id: sid(m)? }
        }
        "wm_reconstruct" => {
            check_keys(m, &["op", "frame"], &[])?;
            Request::WmReconstruct {
                frame: decode_frame(field(m, "frame"))?,
            }
        }
        "wm_predict" => {
            check_keys(m, &["op", "state", "action"], &[])?;
            Request::WmPredict {
                state: decode_frame(field(m, "state"))?,
                action: decode_action(field(m, "action"))?,
            }
        }
        "wm_render" => {
            check_keys(m, &["op", "state"], &[])?;
            Request::WmRender {
                state: decode_frame(field(m, "state"))?,
            }
        }
        "wm_size" => {
            check_keys(m, &["op"], &[])?;
            Request::WmSize
        }
        other => return Err(ProtocolError::UnknownOp(other.to_string())),
    })
}

pub fn decode_request(line: &str) -> Result<Request, ProtocolError> {
    decode_request_map(&parse_line(line)?)
}

fn decode_prediction(v: &Value) -> Result<WirePrediction, ProtocolError> {
    let m = as_object(v, "prediction")?;
    match m.get("kind").and_then(Value::as_str) {
        Some("next") => {
            check_keys(m, &["kind", "state", "status"], &[])?;
            Ok(WirePrediction::Next {
                state: decode_frame(&m["state"])?,
                status: decode_status(&m["status"])?,
            })
        }
        Some("unknown") => {
            check_keys(m, &["kind", "reason"], &[])?;
            Ok(WirePrediction::Unknown {
                reason: as_str(&m["reason"], "reason")?.to_string(),
            })
        }
        _ => Err(schema("prediction kind must be next or unknown")),
    }
}

const RESPONSE_FIELDS: [&str; 11] = [
    "session_id",
    "frame",
    "settled",
    "state",
    "status",
    "counters",
    "actions",
    "prediction",
    "ascii",
    "size",
    "error",
];

fn decode_response_map(m: &serde_json::Map<String, Value>) -> Result<Response, ProtocolError> {
    let ok = m
        .get("ok")
        .ok_or_else(|| schema("missing ok"))?
        .as_bool()
        .ok_or_else(|| schema("ok must be a boolean"))?;
    if !ok {
        check_keys(m, &["ok", "error"], &[])?;
        let e = as_object(&m["error"], "error")?;
        check_keys(e, &["code", "text"], &[])?;
        return Ok(Response::error(as_str(&e["code"], "code")?, as_str(&e["text"], "text")?));
    }
    check_keys(m, &["ok"], &RESPONSE_FIELDS[..10])?;
    let mut resp = Response::default();
    if let Some(v) = m.get("session_id") {
        resp.session_id = Some(as_str(v, "session_id")?.to_string());
    }
    if let Some(v) = m.get("frame") {
        resp.frame = Some(decode_frame(v)?);
    }
    if let Some(v) = m.get("settled") {
        resp.settled = Some(decode_frame(v)?);
    }
    if let Some(v) = m.get("state") {
        resp.state = Some(decode_frame(v)?);
    }
    if let Some(v) = m.get("status") {
        resp.status = Some(decode_status(v)?);
    }
    if let Some(v) = m.get("counters") {
        let c = as_object(v, "counters")?;
        check_keys(c, &["total_actions", "level_actions"], &[])?;
        let level_actions = c["level_actions"]
            .as_array()
            .ok_or_else(|| schema("level_actions must be an array"))?
            .iter()
            .map(|n| as_u64(n, "level action count"))
            .collect::<Result<_, _>>()?;
        resp.counters = Some(Counters {
            total_actions: as_u64(&c["total_actions"], "total_actions")?,
            level_actions,
        });
    }
    if let Some(v) = m.get("actions") {
        let arr = v.as_array().ok_or_else(|| schema("actions must be an array"))?;
        resp.actions = Some(arr.iter().map(decode_action).collect::<Result<_, _>>()?);
    }
    if let Some(v) = m.get("prediction") {
        resp.prediction = Some(decode_prediction(v)?);
    }
    if let Some(v) = m.get("ascii") {
        resp.ascii = Some(as_str(v, "ascii")?.to_string());
    }
    if let Some(v) = m.get("size") {
        resp.size = Some(as_u64(v, "size")?);
    }
    Ok(resp)
}

pub fn decode_response(line: &str) -> Result<Response, ProtocolError> {
    decode_response_map(&parse_line(line)?)
}

/// Decodes either direction, dispatching on the presence of `op` or `ok`.
pub fn decode_message(line: &str) -> Result<Message, ProtocolError> {
    let m = parse_line(line)?;
    if m.contains_key("op") {
        decode_request_map(&m).map(Message::Request)
    } else if m.contains_key("ok") {
        decode_response_map(&m).map(Message::Response)
    } else {
        Err(schema("message has neither op nor ok"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_request_encoding() {
        let req = Request::Step {
            session_id: "s1".into(),
            action: ActionId::Simple(2),
        };
        assert_eq!(
            encode_request(&req),
            "{\"op\":\"step\",\"session_id\":\"s1\",\"action\":{\"kind\":\"simple\",\"k\":2}}\n"
        );
        let reset = Request::Step {
            session_id: "s1".into(),
            action: ActionId::Reset,
        };
        assert_eq!(
            encode_request(&reset),
            "{\"op\":\"step\",\"session_id\":\"s1\",\"action\":{\"kind\":\"reset\"}}\n"
        );
    }

    #[test]
    fn error_response_encoding() {
        let r = Response::error("UnknownGame", "...");
        assert_eq!(
            encode_response(&r),
            "{\"ok\":false,\"error\":{\"code\":\"UnknownGame\",\"text\":\"...\"}}\n"
        );
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            decode_request("{\"op\":\"jump\"}"),
            Err(ProtocolError::UnknownOp("jump".into()))
        );
        assert!(matches!(
            decode_request("{\"op\":\"step\",\"session_id\":\"s1\",\"act"),
            Err(ProtocolError::Malformed(_))
        ));
        assert!(matches!(
            decode_request("{\"op\":\"new_session\",\"game_id\":\"a\",\"extra\":1}"),
            Err(ProtocolError::Schema(_))
        ));
        assert!(matches!(decode_request("{\"op\":\"close\"}"), Err(ProtocolError::Schema(_))));
        assert!(matches!(
            decode_response("{\"ok\":false,\"frame\":{},\"error\":{\"code\":\"x\",\"text\":\"y\"}}"),
            Err(ProtocolError::Schema(_))
        ));
        assert!(matches!(decode_response("{\"ok\":false}"), Err(ProtocolError::Schema(_))));
        assert!(matches!(decode_message("{\"x\":1}"), Err(ProtocolError::Schema(_))));
    }
}
