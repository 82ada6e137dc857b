//! World models living in a child process, spoken to over stdio with the
//! `wm_*` protocol ops, plus the matching server loop.

use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::{ModelError, ModelState, Prediction, WorldModel};
use crate::env::{ActionId, Frame};
use crate::protocol::{decode_request, decode_response, encode_request, encode_response, ProtocolError, Request, Response, WirePrediction};

pub const DEFAULT_CALL_TIMEOUT: Duration = Duration::from_secs(10);

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<io::Result<String>>,
    broken: bool,
}

/// Handle to an external model process. One call in flight at a time.
pub struct ExternalModel {
    pipe: Mutex<Pipe>,
    timeout: Duration,
}

impl ExternalModel {
    /// Spawns `command[0]` with the remaining arguments in `working_dir`.
    pub fn spawn(command: &[String], working_dir: &Path, timeout: Duration) -> Result<Self, ModelError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ModelError::SpawnFailure("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .current_dir(working_dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::SpawnFailure(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalModel {
            pipe: Mutex::new(Pipe {
                child,
                stdin,
                lines: rx,
                broken: false,
            }),
            timeout,
        })
    }

    /// Sends one request line and waits for one response line.
    pub fn call(&self, req: &Request) -> Result<Response, ModelError> {
        let mut pipe = self.pipe.lock().unwrap_or_else(|p| p.into_inner());
        if pipe.broken {
            return Err(ModelError::ProtocolViolation("model process is no longer usable".into()));
        }
        let violation = |e: String| ModelError::ProtocolViolation(e);
        let sent = pipe
            .stdin
            .write_all(encode_request(req).as_bytes())
            .and_then(|_| pipe.stdin.flush());
        if let Err(e) = sent {
            pipe.broken = true;
            return Err(violation(format!("write failed: {e}")));
        }
        let line = match pipe.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                pipe.broken = true;
                return Err(violation(format!("read failed: {e}")));
            }
            Err(RecvTimeoutError::Timeout) => {
                pipe.broken = true;
                let _ = pipe.child.kill();
                return Err(ModelError::CallTimeout);
            }
            Err(RecvTimeoutError::Disconnected) => {
                pipe.broken = true;
                return Err(violation("model process exited".into()));
            }
        };
        let resp = decode_response(&line).map_err(|e| {
            pipe.broken = true;
            violation(e.to_string())
        })?;
        if let Some(e) = &resp.error {
            return Err(violation(format!("{}: {}", e.code, e.text)));
        }
        Ok(resp)
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        let pipe = self.pipe.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = pipe.child.kill();
        let _ = pipe.child.wait();
    }
}

fn lacks(what: &str) -> ModelError {
    ModelError::ProtocolViolation(format!("response lacks {what}"))
}

impl WorldModel for ExternalModel {
    fn reconstruct(&self, frame: &Frame) -> Result<ModelState, ModelError> {
        let resp = self.call(&Request::WmReconstruct { frame: frame.clone() })?;
        resp.state.map(|s| ModelState::from_frame(&s)).ok_or_else(|| lacks("state"))
    }

    fn predict(&self, state: &ModelState, action: ActionId) -> Result<Prediction, ModelError> {
        let resp = self.call(&Request::WmPredict {
            state: state.grid().clone(),
            action,
        })?;
        Ok(match resp.prediction.ok_or_else(|| lacks("prediction"))? {
            WirePrediction::Next { state, status } => Prediction::Next {
                state: ModelState::from_frame(&state),
                status,
            },
            WirePrediction::Unknown { reason } => Prediction::Unknown { reason },
        })
    }

    fn render(&self, state: &ModelState) -> Result<String, ModelError> {
        let resp = self.call(&Request::WmRender {
            state: state.grid().clone(),
        })?;
        resp.ascii.ok_or_else(|| lacks("ascii"))
    }

    fn description_length(&self) -> Result<u64, ModelError> {
        self.call(&Request::WmSize)?.size.ok_or_else(|| lacks("size"))
    }
}

/// Answers one `wm_*` request with an in-process model.
pub fn model_response<M: WorldModel + ?Sized>(model: &M, req: Request) -> Response {
    let result = match req {
        Request::WmReconstruct { frame } => model.reconstruct(&frame).map(|s| Response {
            state: Some(s.into_grid()),
            ..Default::default()
        }),
        Request::WmPredict { state, action } => model.predict(&ModelState::from_frame(&state), action).map(|p| {
            let prediction = match p {
                Prediction::Next { state, status } => WirePrediction::Next {
                    state: state.into_grid(),
                    status,
                },
                Prediction::Unknown { reason } => WirePrediction::Unknown { reason },
            };
            Response {
                prediction: Some(prediction),
                ..Default::default()
            }
        }),
        Request::WmRender { state } => model.render(&ModelState::from_frame(&state)).map(|ascii| Response {
            ascii: Some(ascii),
            ..Default::default()
        }),
        Request::WmSize => model.description_length().map(|n| Response {
            size: Some(n),
            ..Default::default()
        }),
        other => {
            return Response::error(
                "UnknownOp",
                format!("op {:?} is not served by a model process", other.op()),
            )
        }
    };
    result.unwrap_or_else(|e| Response::error("ModelError", e.to_string()))
}

/// Serves `wm_*` requests until EOF. Undecodable lines are answered with
/// an error; a syntactically malformed line ends the loop with an error.
pub fn serve_model<M, R, W>(model: &M, reader: R, mut writer: W) -> Result<(), ProtocolError>
where
    M: WorldModel + ?Sized,
    R: BufRead,
    W: Write,
{
    let io_err = |e: io::Error| ProtocolError::Malformed(format!("io: {e}"));
    for line in reader.lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match decode_request(&line) {
            Ok(req) => model_response(model, req),
            Err(e @ ProtocolError::Malformed(_)) => return Err(e),
            Err(e) => Response::error(e.code(), e.to_string()),
        };
        writer.write_all(encode_response(&resp).as_bytes()).map_err(io_err)?;
        writer.flush().map_err(io_err)?;
    }
    Ok(())
}
