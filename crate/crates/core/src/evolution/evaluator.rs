//! Evaluator protocol: one JSON request in, one JSON response out.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{attr, parse_config};
use crate::feasibility::{CostModel, SyntheticCost};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    DryRun,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub mode: EvalMode,
    pub config_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    pub seed: u64,
    pub input_shape: Vec<usize>,
}

impl EvalRequest {
    pub fn dry_run(config_text: impl Into<String>, input_shape: &[usize], seed: u64) -> Self {
        Self {
            mode: EvalMode::DryRun,
            config_text: config_text.into(),
            dataset: None,
            epochs: None,
            seed,
            input_shape: input_shape.to_vec(),
        }
    }

    /// Train mode needs a dataset and an epoch count.
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.mode == EvalMode::Train && (self.dataset.is_none() || self.epochs.is_none()) {
            return Err(EvalError::Protocol("train requests need dataset and epochs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub params: u64,
    #[serde(default)]
    pub flops: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<f64>,
}

impl EvalResponse {
    pub fn failure(error: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(error.into()),
            params: 0,
            flops: 0,
            metric: None,
        }
    }

    /// Checks the response invariants for a request of `mode`.
    pub fn validate(&self, mode: EvalMode) -> Result<(), EvalError> {
        if !self.ok && self.error.as_deref().is_none_or(str::is_empty) {
            return Err(EvalError::Protocol("failed response without an error message".into()));
        }
        if self.ok && mode == EvalMode::Train && !self.metric.is_some_and(f64::is_finite) {
            return Err(EvalError::Protocol("train response without a finite metric".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("evaluator unavailable: {0}")]
    Unavailable(String),
    #[error("evaluator protocol error: {0}")]
    Protocol(String),
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, req: &EvalRequest) -> Result<EvalResponse, EvalError>;
}

/// In-process fitness: occurrences of one module type minus a size penalty.
#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    pub designated: String,
    pub weight: f64,
    pub max_params: u64,
    pub cost: SyntheticCost,
}

impl SyntheticEvaluator {
    pub fn new(designated: impl Into<String>, weight: f64, max_params: u64) -> Self {
        Self {
            designated: designated.into(),
            weight,
            max_params: max_params.max(1),
            cost: SyntheticCost,
        }
    }

    pub fn fitness(&self, count: usize, params: u64) -> f64 {
        count as f64 - self.weight * params as f64 / self.max_params as f64
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, req: &EvalRequest) -> Result<EvalResponse, EvalError> {
        req.validate()?;
        let tree = match parse_config(&req.config_text) {
            Ok(t) => t,
            Err(e) => return Ok(EvalResponse::failure(e.to_string())),
        };
        let m = self.cost.measure(&tree);
        let metric = (req.mode == EvalMode::Train).then(|| {
            let count = attr(&tree).iter().filter(|(_, t)| *t == self.designated).count();
            self.fitness(count, m.params)
        });
        Ok(EvalResponse {
            ok: true,
            error: None,
            params: m.params,
            flops: m.flops,
            metric,
        })
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Worker {
    fn spawn(program: &str, args: &[String]) -> Result<Self, EvalError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::Unavailable(format!("{program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }

    fn call(&mut self, line: &str) -> Result<String, EvalError> {
        let io = |e: std::io::Error| EvalError::Unavailable(e.to_string());
        self.stdin.write_all(line.as_bytes()).map_err(io)?;
        self.stdin.write_all(b"\n").map_err(io)?;
        self.stdin.flush().map_err(io)?;
        let mut out = String::new();
        if self.stdout.read_line(&mut out).map_err(io)? == 0 {
            return Err(EvalError::Unavailable("worker closed its output".into()));
        }
        Ok(out)
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A pool of long-lived worker processes speaking JSON lines on stdio.
/// Each request is served by one idle worker; a worker that dies is
/// restarted once for the failing request.
pub struct ProcessEvaluator {
    program: String,
    args: Vec<String>,
    idle: Mutex<Vec<Worker>>,
    ready: Condvar,
}

impl ProcessEvaluator {
    pub fn spawn(command: &str, workers: usize) -> Result<Self, EvalError> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| EvalError::Unavailable("empty evaluator command".into()))?;
        let args: Vec<String> = parts.collect();
        let pool = (0..workers.max(1))
            .map(|_| Worker::spawn(&program, &args))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            program,
            args,
            idle: Mutex::new(pool),
            ready: Condvar::new(),
        })
    }

    fn take(&self) -> Worker {
        let mut idle = self.idle.lock().expect("pool lock");
        loop {
            if let Some(w) = idle.pop() {
                return w;
            }
            idle = self.ready.wait(idle).expect("pool lock");
        }
    }

    fn give(&self, w: Worker) {
        self.idle.lock().expect("pool lock").push(w);
        self.ready.notify_one();
    }
}

impl Evaluator for ProcessEvaluator {
    fn evaluate(&self, req: &EvalRequest) -> Result<EvalResponse, EvalError> {
        req.validate()?;
        let line = serde_json::to_string(req).expect("request serializes");
        let mut worker = self.take();
        let reply = match worker.call(&line) {
            Ok(r) => r,
            Err(first) => {
                log::warn!("evaluator worker failed ({first}); restarting");
                match Worker::spawn(&self.program, &self.args) {
                    Ok(fresh) => {
                        worker = fresh;
                        match worker.call(&line) {
                            Ok(r) => r,
                            Err(e) => {
                                self.give(worker);
                                return Err(e);
                            }
                        }
                    }
                    Err(e) => {
                        self.give(worker);
                        return Err(e);
                    }
                }
            }
        };
        self.give(worker);
        let resp: EvalResponse =
            serde_json::from_str(reply.trim()).map_err(|e| EvalError::Protocol(format!("{e}: {}", reply.trim())))?;
        resp.validate(req.mode)?;
        Ok(resp)
    }
}

/// Posts each request to `<base>/eval`.
pub struct HttpEvaluator {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpEvaluator {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, EvalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EvalError::Unavailable(e.to_string()))?;
        Ok(Self {
            url: format!("{}/eval", base_url.trim_end_matches('/')),
            client,
        })
    }
}

impl Evaluator for HttpEvaluator {
    fn evaluate(&self, req: &EvalRequest) -> Result<EvalResponse, EvalError> {
        req.validate()?;
        let resp = self
            .client
            .post(&self.url)
            .json(req)
            .send()
            .map_err(|e| EvalError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EvalError::Unavailable(format!("HTTP {}", resp.status())));
        }
        let resp: EvalResponse = resp.json().map_err(|e| EvalError::Protocol(e.to_string()))?;
        resp.validate(req.mode)?;
        Ok(resp)
    }
}
