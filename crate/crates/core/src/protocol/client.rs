use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

use super::message::{decode_response, encode_request, Request, Response};
use crate::env::{ActionId, Environment, EnvironmentError, Frame, Observation, StepResult};

/// A line-oriented connection to a protocol server.
pub struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
}

impl Connection {
    pub fn new(reader: impl BufRead + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        Connection {
            reader: Box::new(reader),
            writer: Box::new(writer),
        }
    }

    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Connection::new(reader, stream))
    }

    /// Sends one request and reads one response line. Errors here mean the
    /// connection is unusable.
    pub fn call(&mut self, req: &Request) -> Result<Response, EnvironmentError> {
        let transport = |e: io::Error| EnvironmentError::Transport(e.to_string());
        self.writer.write_all(encode_request(req).as_bytes()).map_err(transport)?;
        self.writer.flush().map_err(transport)?;
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).map_err(transport)?;
        if n == 0 {
            return Err(EnvironmentError::Transport("connection closed".into()));
        }
        decode_response(&line).map_err(|e| EnvironmentError::Transport(e.to_string()))
    }

    /// Like [`call`](Self::call) but turns error responses into
    /// [`EnvironmentError::Rejected`].
    pub fn call_ok(&mut self, req: &Request) -> Result<Response, EnvironmentError> {
        let resp = self.call(req)?;
        match resp.error {
            Some(e) => Err(EnvironmentError::Rejected {
                code: e.code,
                text: e.text,
            }),
            None => Ok(resp),
        }
    }
}

fn missing(what: &str) -> EnvironmentError {
    EnvironmentError::Transport(format!("response lacks {what}"))
}

/// A game session living on a remote server.
pub struct RemoteSession {
    conn: Connection,
    session_id: String,
    game_id: String,
}

impl RemoteSession {
    pub fn open(mut conn: Connection, game_id: &str) -> Result<(Self, Frame), EnvironmentError> {
        let resp = conn.call_ok(&Request::NewSession {
            game_id: game_id.to_string(),
        })?;
        let session_id = resp.session_id.ok_or_else(|| missing("session_id"))?;
        let frame = resp.frame.ok_or_else(|| missing("frame"))?;
        Ok((
            RemoteSession {
                conn,
                session_id,
                game_id: game_id.to_string(),
            },
            frame,
        ))
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn close(mut self) -> Result<Connection, EnvironmentError> {
        self.conn.call_ok(&Request::Close {
            session_id: self.session_id.clone(),
        })?;
        Ok(self.conn)
    }
}

impl Environment for RemoteSession {
    fn game_id(&self) -> &str {
        &self.game_id
    }

    fn step(&mut self, action: ActionId) -> Result<Observation, EnvironmentError> {
        let resp = self.conn.call_ok(&Request::Step {
            session_id: self.session_id.clone(),
            action,
        })?;
        let frame = resp.frame.ok_or_else(|| missing("frame"))?;
        let settled = resp.settled.unwrap_or_else(|| frame.clone());
        Ok(Observation {
            step: StepResult {
                frame,
                settled,
                status: resp.status.ok_or_else(|| missing("status"))?,
            },
            counters: resp.counters.ok_or_else(|| missing("counters"))?,
        })
    }

    fn legal_actions(&mut self) -> Result<Vec<ActionId>, EnvironmentError> {
        let resp = self.conn.call_ok(&Request::LegalActions {
            session_id: self.session_id.clone(),
        })?;
        resp.actions.ok_or_else(|| missing("actions"))
    }
}
