//! Client side of the script runner protocol.
//!
//! The runner is an external program. For each job it reads one JSON object
//! on stdin, executes the script in a scratch directory, and writes one JSON
//! object on stdout. Its exit code is 0 whenever the exchange itself
//! completed, whatever happened to the script.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_MEMORY_MB: u64 = 512;
/// Extra time the runner gets on top of the script timeout before the client gives up on it.
pub const RUNNER_GRACE: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub script: String,
    pub db_file: String,
    pub db_alias: String,
    pub timeout_s: f64,
    pub memory_mb: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SandboxStatus {
    Ok,
    Timeout,
    KilledMemory,
    ScriptError,
    MissingOutputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub status: SandboxStatus,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_txt_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandboxJob {
    pub script: String,
    pub db_file: PathBuf,
    /// File name the script expects; defaults to the database's own name.
    pub db_alias: Option<String>,
    pub timeout: Duration,
    pub memory_limit_mb: u64,
}

impl SandboxJob {
    pub fn new(script: impl Into<String>, db_file: impl Into<PathBuf>) -> Self {
        Self {
            script: script.into(),
            db_file: db_file.into(),
            db_alias: None,
            timeout: DEFAULT_TIMEOUT,
            memory_limit_mb: DEFAULT_MEMORY_MB,
        }
    }

    fn alias(&self) -> String {
        self.db_alias.clone().unwrap_or_else(|| {
            self.db_file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }

    pub fn to_wire(&self) -> WireRequest {
        WireRequest {
            script: self.script.clone(),
            db_file: self.db_file.to_string_lossy().into_owned(),
            db_alias: self.alias(),
            timeout_s: self.timeout.as_secs_f64(),
            memory_mb: self.memory_limit_mb,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandboxResult {
    pub status: SandboxStatus,
    pub stdout: String,
    pub stderr: String,
    pub data_txt: Option<Vec<u8>>,
    pub figure: Option<Vec<u8>>,
    pub wall_time: Duration,
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("cannot start runner {program}: {reason}")]
    Spawn { program: String, reason: String },
    #[error("runner broke protocol: {0}")]
    Protocol(String),
    #[error("runner gave no answer within {0:?}")]
    RunnerHung(Duration),
}

fn decode(field: &str, b64: Option<String>) -> Result<Option<Vec<u8>>, SandboxError> {
    b64.map(|s| {
        base64::engine::general_purpose::STANDARD
            .decode(s.trim())
            .map_err(|e| SandboxError::Protocol(format!("{field}: {e}")))
    })
    .transpose()
}

impl TryFrom<WireResponse> for SandboxResult {
    type Error = SandboxError;

    fn try_from(w: WireResponse) -> Result<Self, SandboxError> {
        let data_txt = decode("data_txt_b64", w.data_txt_b64)?;
        let figure = decode("figure_b64", w.figure_b64)?;
        if w.status == SandboxStatus::Ok && (data_txt.is_none() || figure.is_none()) {
            return Err(SandboxError::Protocol("status ok without both outputs".into()));
        }
        if !w.wall_time_s.is_finite() || w.wall_time_s < 0.0 {
            return Err(SandboxError::Protocol(format!("bad wall_time_s {}", w.wall_time_s)));
        }
        Ok(Self {
            status: w.status,
            stdout: w.stdout,
            stderr: w.stderr,
            data_txt,
            figure,
            wall_time: Duration::from_secs_f64(w.wall_time_s),
        })
    }
}

/// Spawns one runner process per job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SandboxClient {
    program: String,
    args: Vec<String>,
    grace: Duration,
}

impl SandboxClient {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            grace: RUNNER_GRACE,
        }
    }

    /// Build from a command line such as `python3 -m sandbox_runner`.
    pub fn from_command_line(cmd: &str) -> Option<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(Self {
            program,
            args: parts.collect(),
            grace: RUNNER_GRACE,
        })
    }

    pub fn with_args(mut self, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.args = args.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    pub fn run_script(&self, job: &SandboxJob) -> Result<SandboxResult, SandboxError> {
        if !Path::new(&job.db_file).is_file() {
            return Err(SandboxError::Protocol(format!("{} is not a file", job.db_file.display())));
        }
        let payload = serde_json::to_vec(&job.to_wire()).expect("wire request serializes");
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SandboxError::Spawn {
                program: self.program.clone(),
                reason: e.to_string(),
            })?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(&payload);
            let _ = stdin.write_all(b"\n");
        });
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let deadline = job.timeout + self.grace;
        let started = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if started.elapsed() > deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(SandboxError::RunnerHung(deadline));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(SandboxError::Protocol(e.to_string())),
            }
        };
        let _ = writer.join();
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(SandboxError::Protocol(format!(
                "runner exited with {status}: {}",
                String::from_utf8_lossy(&err).trim()
            )));
        }
        let wire: WireResponse = serde_json::from_slice(&out)
            .map_err(|e| SandboxError::Protocol(format!("bad response JSON: {e}")))?;
        wire.try_into()
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn b64(s: &[u8]) -> String {
        base64::engine::general_purpose::STANDARD.encode(s)
    }

    struct Fake {
        dir: tempfile::TempDir,
        db: PathBuf,
    }

    impl Fake {
        fn new() -> Self {
            let dir = tempfile::tempdir().unwrap();
            let db = dir.path().join("aircraft.sqlite");
            std::fs::write(&db, b"not inspected by the fake").unwrap();
            Self { dir, db }
        }

        /// A runner that saves its request and prints `reply`.
        fn runner(&self, reply: &str) -> SandboxClient {
            let req = self.dir.path().join("request.json");
            let reply_file = self.dir.path().join("reply.json");
            std::fs::write(&reply_file, reply).unwrap();
            let script = format!("cat > '{}'; cat '{}'", req.display(), reply_file.display());
            SandboxClient::new("sh").with_args(["-c".to_string(), script])
        }

        fn request(&self) -> WireRequest {
            serde_json::from_str(&std::fs::read_to_string(self.dir.path().join("request.json")).unwrap()).unwrap()
        }
    }

    #[test]
    fn ok_response_decodes_outputs() {
        let f = Fake::new();
        let reply = format!(
            r#"{{"status":"ok","stdout":"hi","stderr":"","wall_time_s":0.25,"data_txt_b64":"{}","figure_b64":"{}"}}"#,
            b64(b"a\tb\n1\t2\n"),
            b64(b"%PDF-1.4")
        );
        let res = f.runner(&reply).run_script(&SandboxJob::new("print(1)", &f.db)).unwrap();
        assert_eq!(res.status, SandboxStatus::Ok);
        assert_eq!(res.data_txt.as_deref(), Some(&b"a\tb\n1\t2\n"[..]));
        assert_eq!(res.figure.as_deref(), Some(&b"%PDF-1.4"[..]));
        assert_eq!(res.wall_time, Duration::from_millis(250));
        let sent = f.request();
        assert_eq!(sent.script, "print(1)");
        assert_eq!(sent.db_alias, "aircraft.sqlite");
        assert_eq!(sent.timeout_s, 60.0);
        assert_eq!(sent.memory_mb, 512);
    }

    #[test]
    fn non_ok_statuses_pass_through() {
        let f = Fake::new();
        for (wire, want) in [
            ("timeout", SandboxStatus::Timeout),
            ("killed_memory", SandboxStatus::KilledMemory),
            ("script_error", SandboxStatus::ScriptError),
            ("missing_outputs", SandboxStatus::MissingOutputs),
        ] {
            let reply = format!(r#"{{"status":"{wire}","stdout":"","stderr":"boom","wall_time_s":1.0}}"#);
            let res = f.runner(&reply).run_script(&SandboxJob::new("x", &f.db)).unwrap();
            assert_eq!(res.status, want);
            assert_eq!(res.stderr, "boom");
            assert!(res.data_txt.is_none());
        }
    }

    #[test]
    fn protocol_violations() {
        let f = Fake::new();
        let job = SandboxJob::new("x", &f.db);
        assert!(matches!(
            f.runner(r#"{"status":"ok","wall_time_s":1.0}"#).run_script(&job),
            Err(SandboxError::Protocol(_))
        ));
        assert!(matches!(f.runner("not json").run_script(&job), Err(SandboxError::Protocol(_))));
        let failing = SandboxClient::new("sh").with_args(["-c", "cat >/dev/null; echo bad >&2; exit 3"]);
        assert!(matches!(failing.run_script(&job), Err(SandboxError::Protocol(m)) if m.contains("bad")));
        let missing = SandboxClient::new("/nonexistent/runner");
        assert!(matches!(missing.run_script(&job), Err(SandboxError::Spawn { .. })));
    }

    #[test]
    fn hung_runner_is_killed() {
        let f = Fake::new();
        let mut job = SandboxJob::new("x", &f.db);
        job.timeout = Duration::from_millis(100);
        let client = SandboxClient::new("sh")
            .with_args(["-c", "sleep 30"])
            .with_grace(Duration::from_millis(100));
        let t = Instant::now();
        assert!(matches!(client.run_script(&job), Err(SandboxError::RunnerHung(_))));
        assert!(t.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn command_line_split() {
        let c = SandboxClient::from_command_line("python3 -m sandbox_runner").unwrap();
        assert_eq!(c.program, "python3");
        assert_eq!(c.args, ["-m", "sandbox_runner"]);
        assert!(SandboxClient::from_command_line("  ").is_none());
    }
}
