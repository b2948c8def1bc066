//! Perspective scorers served by another process over a line protocol.
//!
//! For each pair the client writes
//! `SCORE <kind> <pair_id> <query> <sentence>` with both texts
//! percent-encoded, and the server answers `<pair_id> <score>` (or
//! `ERR <pair_id> <message>`), in any order. The server may be a child
//! process speaking on stdin/stdout or a TCP peer.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};

use semir_core::scorers::{PerspectiveScorer, ScorePair, ScorerKind};
use semir_core::ScoreError;

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    next_id: u64,
}

impl Connection {
    fn new(reader: impl Read + Send + 'static, writer: Box<dyn Write + Send>, child: Option<Child>) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self { writer, lines: rx, child, next_id: 0 }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

pub struct ExternalScorer {
    id: String,
    kind: ScorerKind,
    timeout: Duration,
    conn: Mutex<Connection>,
}

impl ExternalScorer {
    /// Runs `command` through `sh -c` and talks to its stdin/stdout.
    pub fn spawn(command: &str, kind: ScorerKind, id: impl Into<String>, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Config(format!("cannot start scorer command {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::from_parts(Connection::new(stdout, Box::new(stdin), Some(child)), kind, id, timeout))
    }

    pub fn connect(addr: &str, kind: ScorerKind, id: impl Into<String>, timeout: Duration) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| Error::Config(format!("cannot connect to scorer at {addr}: {e}")))?;
        let reader = stream.try_clone().map_err(|e| Error::Config(format!("scorer socket {addr}: {e}")))?;
        Ok(Self::from_parts(Connection::new(reader, Box::new(stream), None), kind, id, timeout))
    }

    fn from_parts(conn: Connection, kind: ScorerKind, id: impl Into<String>, timeout: Duration) -> Self {
        Self { id: id.into(), kind, timeout, conn: Mutex::new(conn) }
    }
}

fn encode(text: &str) -> String {
    utf8_percent_encode(text, NON_ALPHANUMERIC).to_string()
}

impl PerspectiveScorer for ExternalScorer {
    fn scorer_id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> ScorerKind {
        self.kind
    }

    fn raw_score(&self, pair: &ScorePair<'_>) -> Result<f64, ScoreError> {
        Ok(self.score_batch(std::slice::from_ref(pair))?[0])
    }

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<f64>, ScoreError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let base = conn.next_id;
        conn.next_id += pairs.len() as u64;

        let mut request = String::new();
        for (i, p) in pairs.iter().enumerate() {
            request.push_str(&format!("SCORE {} {} {} {}\n", self.kind, base + i as u64, encode(p.query), encode(p.sentence)));
        }
        let transport = |e: std::io::Error| ScoreError::Transport(e.to_string());
        conn.writer.write_all(request.as_bytes()).map_err(transport)?;
        conn.writer.flush().map_err(transport)?;

        let mut out: Vec<Option<f64>> = vec![None; pairs.len()];
        let mut remaining = pairs.len();
        let deadline = Instant::now() + self.timeout;
        let millis = self.timeout.as_millis() as u64;
        while remaining > 0 {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match conn.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(ScoreError::Transport(e.to_string())),
                Err(RecvTimeoutError::Timeout) => return Err(ScoreError::Timeout { millis }),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ScoreError::Transport("scorer closed the connection".into()));
                }
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (is_err, id_field) = match fields.as_slice() {
                ["ERR", id, ..] => (true, *id),
                [id, _] => (false, *id),
                _ => return Err(ScoreError::Protocol { index: pairs.len() - remaining, message: format!("malformed line {line:?}") }),
            };
            let id: u64 = id_field
                .parse()
                .map_err(|_| ScoreError::Protocol { index: pairs.len() - remaining, message: format!("bad pair id in {line:?}") })?;
            if id < base {
                log::warn!("{}: ignoring late answer for pair {id}", self.id);
                continue;
            }
            let index = (id - base) as usize;
            if index >= pairs.len() {
                return Err(ScoreError::Protocol { index, message: format!("unknown pair id {id}") });
            }
            if is_err {
                return Err(ScoreError::Protocol { index, message: fields[2..].join(" ") });
            }
            if out[index].is_some() {
                return Err(ScoreError::Protocol { index, message: format!("duplicate answer for pair {id}") });
            }
            let value: f64 =
                fields[1].parse().map_err(|_| ScoreError::Protocol { index, message: format!("bad score {:?}", fields[1]) })?;
            out[index] = Some(value);
            remaining -= 1;
        }
        Ok(out.into_iter().map(|v| v.unwrap_or_default()).collect())
    }
}
