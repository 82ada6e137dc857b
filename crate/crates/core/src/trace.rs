//! Append-only transition traces, one run directory per playthrough.
//!
//! ```text
//! <run>/manifest
//! <run>/trace_level_<L>.jsonl
//! <run>/artifacts/mismatch_<n>
//! ```

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{ActionId, Frame, GameStatus};
use crate::protocol::codec::{
    as_str, as_u64, check_keys, decode_action, decode_frame, decode_status, encode_action, encode_frame, encode_status,
    object, parse_line, to_line, ProtocolError,
};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("record {got:?} out of order; expected step {expected}")]
    OutOfOrder { expected: u32, got: Locator },
    #[error("{file}:{line}: corrupt record: {reason}")]
    CorruptRecord { file: String, line: usize, reason: String },
    #[error("frames do not chain at {0:?}")]
    ChainViolation(Locator),
    #[error("run directory {0} is not fresh")]
    NotFresh(PathBuf),
    #[error("run directory has no valid manifest: {0}")]
    BadManifest(String),
}

/// Where a record sits in a playthrough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Locator {
    pub level: usize,
    pub attempt: u32,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransitionRecord {
    pub game_id: String,
    pub level: usize,
    pub attempt: u32,
    /// 0-based within the attempt.
    pub step: u32,
    pub before: Frame,
    pub action: ActionId,
    /// The settled frame in the record's own level.
    pub after: Frame,
    pub status: GameStatus,
}

impl TransitionRecord {
    pub fn locator(&self) -> Locator {
        Locator {
            level: self.level,
            attempt: self.attempt,
            step: self.step,
        }
    }

    pub fn to_value(&self) -> Value {
        object([
            ("game_id", self.game_id.as_str().into()),
            ("level", self.level.into()),
            ("attempt", self.attempt.into()),
            ("step", self.step.into()),
            ("before", encode_frame(&self.before)),
            ("action", encode_action(self.action)),
            ("after", encode_frame(&self.after)),
            ("status", encode_status(self.status)),
        ])
    }

    pub fn encode(&self) -> String {
        to_line(&self.to_value())
    }

    pub fn decode(line: &str) -> Result<Self, ProtocolError> {
        let m = parse_line(line)?;
        check_keys(&m, &["game_id", "level", "attempt", "step", "before", "action", "after", "status"], &[])?;
        let small = |k: &str| -> Result<u32, ProtocolError> {
            u32::try_from(as_u64(&m[k], k)?).map_err(|_| ProtocolError::Schema(format!("{k} too large")))
        };
        Ok(TransitionRecord {
            game_id: as_str(&m["game_id"], "game_id")?.to_string(),
            level: as_u64(&m["level"], "level")? as usize,
            attempt: small("attempt")?,
            step: small("step")?,
            before: decode_frame(&m["before"])?,
            action: decode_action(&m["action"])?,
            after: decode_frame(&m["after"])?,
            status: decode_status(&m["status"])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub game_id: String,
    /// Seconds since the Unix epoch.
    pub start_time: u64,
    pub config_digest: String,
}

impl Manifest {
    /// A manifest stamped with the current time and the SHA-256 of
    /// `config`.
    pub fn new(game_id: &str, config: &str) -> Self {
        let start_time = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Manifest {
            game_id: game_id.to_string(),
            start_time,
            config_digest: digest_hex(config.as_bytes()),
        }
    }

    fn encode(&self) -> String {
        to_line(&object([
            ("game_id", self.game_id.as_str().into()),
            ("start_time", self.start_time.into()),
            ("config_digest", self.config_digest.as_str().into()),
        ]))
    }

    fn decode(line: &str) -> Result<Self, ProtocolError> {
        let m = parse_line(line)?;
        check_keys(&m, &["game_id", "start_time", "config_digest"], &[])?;
        Ok(Manifest {
            game_id: as_str(&m["game_id"], "game_id")?.to_string(),
            start_time: as_u64(&m["start_time"], "start_time")?,
            config_digest: as_str(&m["config_digest"], "config_digest")?.to_string(),
        })
    }
}

fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A playthrough's directory. Single writer; readers may load at any time.
#[derive(Debug)]
pub struct RunDirectory {
    root: PathBuf,
    manifest: Manifest,
    next_step: HashMap<(usize, u32), u32>,
    artifacts: usize,
}

pub fn trace_file_name(level: usize) -> String {
    format!("trace_level_{level}.jsonl")
}

impl RunDirectory {
    /// Creates a fresh run directory. Fails if `root` exists and is not
    /// empty.
    pub fn create(root: impl Into<PathBuf>, manifest: Manifest) -> Result<Self, TraceError> {
        let root = root.into();
        if root.exists() && fs::read_dir(&root)?.next().is_some() {
            return Err(TraceError::NotFresh(root));
        }
        fs::create_dir_all(root.join("artifacts"))?;
        fs::write(root.join("manifest"), manifest.encode())?;
        Ok(RunDirectory {
            root,
            manifest,
            next_step: HashMap::new(),
            artifacts: 0,
        })
    }

    /// Opens an existing run directory for reading (and further appends).
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, TraceError> {
        let root = root.into();
        let text = fs::read_to_string(root.join("manifest")).map_err(|e| TraceError::BadManifest(e.to_string()))?;
        let manifest = Manifest::decode(text.trim_end()).map_err(|e| TraceError::BadManifest(e.to_string()))?;
        let mut run = RunDirectory {
            root,
            manifest,
            next_step: HashMap::new(),
            artifacts: 0,
        };
        for rec in run.load(None)? {
            run.next_step.insert((rec.level, rec.attempt), rec.step + 1);
        }
        run.artifacts = run.artifact_paths()?.len();
        Ok(run)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    /// Appends one record; it must be the next step of its attempt.
    pub fn append(&mut self, rec: &TransitionRecord) -> Result<(), TraceError> {
        let key = (rec.level, rec.attempt);
        let expected = self.next_step.get(&key).copied().unwrap_or(0);
        if rec.step != expected {
            return Err(TraceError::OutOfOrder {
                expected,
                got: rec.locator(),
            });
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join(trace_file_name(rec.level)))?;
        file.write_all(rec.encode().as_bytes())?;
        self.next_step.insert(key, expected + 1);
        Ok(())
    }

    /// The next step index for an attempt.
    pub fn next_step(&self, level: usize, attempt: u32) -> u32 {
        self.next_step.get(&(level, attempt)).copied().unwrap_or(0)
    }

    fn trace_levels(&self) -> Result<Vec<usize>, TraceError> {
        let mut levels = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(n) = name
                .strip_prefix("trace_level_")
                .and_then(|s| s.strip_suffix(".jsonl"))
                .and_then(|s| s.parse::<usize>().ok())
            {
                levels.push(n);
            }
        }
        levels.sort_unstable();
        Ok(levels)
    }

    /// Records in append order, optionally for one level. Checks that steps
    /// and frames chain within every attempt.
    pub fn load(&self, level: Option<usize>) -> Result<Vec<TransitionRecord>, TraceError> {
        let levels = match level {
            Some(l) => vec![l],
            None => self.trace_levels()?,
        };
        let mut out = Vec::new();
        for l in levels {
            let name = trace_file_name(l);
            let path = self.root.join(&name);
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            for (i, line) in text.lines().enumerate() {
                let rec = TransitionRecord::decode(line).map_err(|e| TraceError::CorruptRecord {
                    file: name.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                if rec.level != l {
                    return Err(TraceError::CorruptRecord {
                        file: name.clone(),
                        line: i + 1,
                        reason: format!("record for level {} in level {l} file", rec.level),
                    });
                }
                out.push(rec);
            }
        }
        check_chain(&out)?;
        Ok(out)
    }

    /// Writes `artifacts/mismatch_<n>` and returns its path.
    pub fn write_artifact(&mut self, content: &str) -> Result<PathBuf, TraceError> {
        let path = self.artifacts_dir().join(format!("mismatch_{}", self.artifacts));
        fs::create_dir_all(self.artifacts_dir())?;
        fs::write(&path, content)?;
        self.artifacts += 1;
        Ok(path)
    }

    pub fn artifact_count(&self) -> usize {
        self.artifacts
    }

    pub fn artifact_paths(&self) -> Result<Vec<PathBuf>, TraceError> {
        let dir = self.artifacts_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<(usize, PathBuf)> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let n = e.file_name().to_string_lossy().strip_prefix("mismatch_")?.parse().ok()?;
                Some((n, e.path()))
            })
            .collect();
        paths.sort();
        Ok(paths.into_iter().map(|(_, p)| p).collect())
    }
}

/// Verifies step and frame chaining within each attempt, reporting the
/// first violation.
pub fn check_chain(records: &[TransitionRecord]) -> Result<(), TraceError> {
    let mut last: HashMap<(usize, u32), &TransitionRecord> = HashMap::new();
    for rec in records {
        let key = (rec.level, rec.attempt);
        match last.get(&key) {
            None if rec.step != 0 => return Err(TraceError::ChainViolation(rec.locator())),
            Some(prev) if prev.step + 1 != rec.step || prev.after != rec.before => {
                return Err(TraceError::ChainViolation(rec.locator()))
            }
            _ => {}
        }
        last.insert(key, rec);
    }
    Ok(())
}
