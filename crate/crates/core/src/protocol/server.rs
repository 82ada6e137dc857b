use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use super::codec::ProtocolError;
use super::message::{decode_request, encode_response, Request, Response};
use crate::env::{EnvSession, GameRegistry};

/// Sessions owned by one connection.
#[derive(Debug, Default)]
pub struct SessionTable {
    next_id: u64,
    sessions: HashMap<String, EnvSession>,
}

impl SessionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    fn get(&mut self, id: &str) -> Result<&mut EnvSession, Response> {
        self.sessions
            .get_mut(id)
            .ok_or_else(|| Response::error("UnknownSession", format!("no session {id:?} on this connection")))
    }
}

/// Applies one request to a connection's sessions.
pub fn handle_request(registry: &GameRegistry, table: &mut SessionTable, req: Request) -> Response {
    let result = match req {
        Request::NewSession { game_id } => match registry.new_session(&game_id) {
            Ok((session, frame)) => {
                table.next_id += 1;
                let id = format!("s{}", table.next_id);
                let resp = Response {
                    session_id: Some(id.clone()),
                    frame: Some(frame),
                    status: Some(crate::env::GameStatus::Running),
                    counters: Some(session.counters()),
                    ..Default::default()
                };
                table.sessions.insert(id, session);
                Ok(resp)
            }
            Err(e) => Err(Response::error(e.code(), e.to_string())),
        },
        Request::Step { session_id, action } => table.get(&session_id).and_then(|session| {
            let step = session.step(action).map_err(|e| Response::error(e.code(), e.to_string()))?;
            let settled = step.advanced().then(|| step.settled.clone());
            Ok(Response {
                session_id: Some(session_id.clone()),
                frame: Some(step.frame),
                settled,
                status: Some(step.status),
                counters: Some(session.counters()),
                ..Default::default()
            })
        }),
        Request::LegalActions { session_id } => table.get(&session_id).map(|session| Response {
            session_id: Some(session_id.clone()),
            actions: Some(session.legal_actions()),
            ..Default::default()
        }),
        Request::Close { session_id } => match table.sessions.remove(&session_id) {
            Some(_) => Ok(Response {
                session_id: Some(session_id),
                ..Default::default()
            }),
            None => Err(Response::error("UnknownSession", format!("no session {session_id:?} on this connection"))),
        },
        other => Err(Response::error(
            "UnknownOp",
            format!("op {:?} is not served by the game server", other.op()),
        )),
    };
    result.unwrap_or_else(|e| e)
}

/// Answers one line; undecodable lines get an error response.
pub fn handle_line(registry: &GameRegistry, table: &mut SessionTable, line: &str) -> Response {
    match decode_request(line) {
        Ok(req) => handle_request(registry, table, req),
        Err(e) => protocol_error_response(&e),
    }
}

pub(crate) fn protocol_error_response(e: &ProtocolError) -> Response {
    Response::error(e.code(), e.to_string())
}

/// Serves one connection until EOF, processing requests in arrival order.
pub fn serve_connection<R: BufRead, W: Write>(registry: &GameRegistry, reader: R, mut writer: W) -> io::Result<()> {
    let mut table = SessionTable::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_line(registry, &mut table, &line);
        writer.write_all(encode_response(&resp).as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection. A failing
/// connection loses only its own sessions.
pub fn serve(listener: TcpListener, registry: Arc<GameRegistry>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let registry = registry.clone();
        thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(_) => return,
            };
            let _ = serve_connection(&registry, reader, BufWriter::new(stream));
        });
    }
    Ok(())
}

/// Binds an ephemeral local port and serves it on a background thread.
pub fn spawn_local(registry: Arc<GameRegistry>) -> io::Result<std::net::SocketAddr> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    thread::spawn(move || serve(listener, registry));
    Ok(addr)
}
