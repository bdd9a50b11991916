//! The search loop: archive of evaluated architectures, history of
//! transformations, parallel trials and persistence.

mod evaluator;
mod report;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ArchTree;
use crate::decision::{sample_decision, BanditState, DecisionError, Operation, PromptCategory, DEFAULT_EPSILON};
use crate::feasibility::{assess, check_const, check_static, Budget, Measured, Probe};
use crate::miner::ModuleDb;
use crate::prompt::{render_history, HistoryLine, LlmEndpoint, TemplateRegistry};
use crate::transform::{apply, RepeatSource, TransformError, TrialContext, Transformation};

pub use evaluator::{
    EvalError, EvalMode, EvalRequest, EvalResponse, Evaluator, HttpEvaluator, ProcessEvaluator, SyntheticEvaluator,
};
pub use report::{load_checkpoint, save_checkpoint, textualize, write_outputs, ArmStats, RunReport};

/// Decision draws per trial before giving up on a base.
const RESAMPLE_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    EvaluatorUnavailable(EvalError),
    #[error("seed architecture is not feasible: {0}")]
    SeedInfeasible(String),
    #[error("attempt cap of {cap} reached after {evaluated} evaluated architectures")]
    BudgetExhaustedByFailures { cap: usize, evaluated: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

mod tree_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::config::{parse_config, ArchTree};

    pub fn serialize<S: Serializer>(t: &ArchTree, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_text())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ArchTree, D::Error> {
        let text = String::deserialize(d)?;
        parse_config(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchEntry {
    pub id: usize,
    #[serde(with = "tree_text")]
    pub tree: ArchTree,
    pub metric: f64,
    pub parent_id: Option<usize>,
    pub transformation_id: Option<usize>,
    pub measured: Option<Measured>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub id: usize,
    pub transformation: Transformation,
    pub base_id: usize,
    pub child_id: usize,
    pub delta: f64,
    pub sign: bool,
    pub summary: String,
}

/// One line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub attempt: usize,
    pub worker: usize,
    pub base_id: Option<usize>,
    pub op: Option<Operation>,
    pub cat: Option<PromptCategory>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Evaluated architectures to add beyond the seeds.
    pub budget: usize,
    pub workers: usize,
    pub top_k: usize,
    pub epsilon: f64,
    pub constraints: Budget,
    pub seed: u64,
    pub attempt_cap: usize,
    pub dataset: String,
    pub epochs: u32,
    pub input_shape: Vec<usize>,
}

/// Top-K width by search budget.
pub fn default_top_k(budget: usize) -> usize {
    if budget >= 500 {
        25
    } else {
        5
    }
}

impl RunConfig {
    pub fn new(budget: usize, constraints: Budget, seed: u64) -> Self {
        assert!(budget >= 1, "budget must be at least 1");
        Self {
            budget,
            workers: 4,
            top_k: default_top_k(budget),
            epsilon: DEFAULT_EPSILON,
            constraints,
            seed,
            attempt_cap: budget * 5,
            dataset: "cifar10".into(),
            epochs: 1,
            input_shape: vec![3, 32, 32],
        }
    }

    fn check(&self) {
        assert!(self.budget >= 1 && self.workers >= 1 && self.top_k >= 1, "invalid run config");
    }

    fn train_request(&self, tree: &ArchTree, seed: u64) -> EvalRequest {
        EvalRequest {
            mode: EvalMode::Train,
            config_text: tree.to_text(),
            dataset: Some(self.dataset.clone()),
            epochs: Some(self.epochs),
            seed,
            input_shape: self.input_shape.clone(),
        }
    }
}

/// Everything a checkpoint carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config: RunConfig,
    pub archs: Vec<ArchEntry>,
    pub history: Vec<HistoryEntry>,
    pub bandit: BanditState,
    pub log: Vec<TrialRecord>,
    pub attempts: usize,
    pub seeds: usize,
    /// One generator per worker, advanced across batches.
    pub rngs: Vec<ChaCha8Rng>,
}

impl RunState {
    pub fn evaluated(&self) -> usize {
        self.archs.len() - self.seeds
    }

    pub fn best(&self) -> &ArchEntry {
        &self.archs[ranked(&self.archs)[0]]
    }

    /// Ids from `id` back to its seed.
    pub fn lineage(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.archs[cur].parent_id {
            out.push(p);
            cur = p;
        }
        out
    }

    fn history_block(&self) -> String {
        let lines: Vec<HistoryLine> = self
            .history
            .iter()
            .map(|h| HistoryLine {
                summary: h.summary.clone(),
                improved: h.sign,
            })
            .collect();
        render_history(&lines)
    }

    /// Improving history entries on the lineage of `base_id`.
    fn repeat_sources(&self, base_id: usize) -> Vec<RepeatSource> {
        let mut out = Vec::new();
        for id in self.lineage(base_id) {
            let Some(tid) = self.archs[id].transformation_id else { continue };
            let h = &self.history[tid];
            if h.sign {
                out.push(RepeatSource {
                    parent: self.archs[h.base_id].tree.clone(),
                    parent_metric: self.archs[h.base_id].metric,
                    child_metric: self.archs[h.child_id].metric,
                    transformation: h.transformation.clone(),
                });
            }
        }
        out
    }
}

/// Indices ordered by metric, best first; ties keep insertion order.
fn ranked(archs: &[ArchEntry]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..archs.len()).collect();
    idx.sort_by(|&a, &b| archs[b].metric.total_cmp(&archs[a].metric).then(a.cmp(&b)));
    idx
}

/// Uniform over the best `min(k, len)` entries.
pub fn sample_base<'a, R: Rng + ?Sized>(archs: &'a [ArchEntry], k: usize, rng: &mut R) -> &'a ArchEntry {
    assert!(!archs.is_empty(), "empty architecture database");
    let top = ranked(archs);
    let n = k.max(1).min(top.len());
    &archs[top[rng.gen_range(0..n)]]
}

/// The generator owned by one worker for the whole run.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(10_007).wrapping_add(worker as u64))
}

/// Services shared by every trial of a run.
pub struct Environment<'a> {
    pub db: &'a ModuleDb,
    pub registry: &'a TemplateRegistry,
    pub llm: &'a dyn LlmEndpoint,
    pub evaluator: &'a dyn Evaluator,
}

impl Environment<'_> {
    fn probe<'b>(&'b self, cfg: &'b RunConfig, seed: u64) -> Probe<'b> {
        Probe::DryRun {
            evaluator: self.evaluator,
            input_shape: &cfg.input_shape,
            seed,
        }
    }

    fn train(&self, cfg: &RunConfig, tree: &ArchTree, seed: u64) -> Result<Result<f64, String>, EvalError> {
        let resp = match self.evaluator.evaluate(&cfg.train_request(tree, seed)) {
            Ok(r) => r,
            Err(e @ EvalError::Unavailable(_)) => return Err(e),
            Err(e) => return Ok(Err(e.to_string())),
        };
        if !resp.ok {
            return Ok(Err(resp.error.unwrap_or_else(|| "evaluation failed".into())));
        }
        match resp.metric {
            Some(m) if m.is_finite() => Ok(Ok(m)),
            _ => Ok(Err("evaluator returned no finite metric".into())),
        }
    }
}

/// Evaluates the seeds and opens a fresh run.
pub fn init_run(cfg: RunConfig, seeds: &[ArchTree], env: &Environment<'_>) -> Result<RunState, SearchError> {
    cfg.check();
    assert!(!seeds.is_empty(), "at least one seed architecture");
    let mut archs = Vec::new();
    for (i, tree) in seeds.iter().enumerate() {
        let probe = env.probe(&cfg, cfg.seed);
        let exec = check_static(tree, env.db);
        if !exec.ok {
            return Err(SearchError::SeedInfeasible(exec.reason.unwrap_or_default()));
        }
        let constraint = check_const(tree, cfg.constraints, probe).map_err(SearchError::EvaluatorUnavailable)?;
        if !constraint.ok {
            return Err(SearchError::SeedInfeasible(constraint.reason.unwrap_or_default()));
        }
        let metric = env
            .train(&cfg, tree, cfg.seed)
            .map_err(SearchError::EvaluatorUnavailable)?
            .map_err(SearchError::SeedInfeasible)?;
        archs.push(ArchEntry {
            id: i,
            tree: tree.clone(),
            metric,
            parent_id: None,
            transformation_id: None,
            measured: constraint.measured,
        });
    }
    Ok(RunState {
        bandit: BanditState::new(cfg.epsilon),
        seeds: archs.len(),
        archs,
        history: Vec::new(),
        log: Vec::new(),
        attempts: 0,
        rngs: (0..cfg.workers).map(|w| worker_rng(cfg.seed, w)).collect(),
        config: cfg,
    })
}

enum TrialOutcome {
    Evaluated {
        base_id: usize,
        tree: ArchTree,
        transformation: Transformation,
        metric: f64,
        measured: Option<Measured>,
    },
    Failed {
        base_id: Option<usize>,
        op: Option<Operation>,
        cat: Option<PromptCategory>,
        reason: String,
    },
}

fn run_trial(
    state: &RunState,
    env: &Environment<'_>,
    attempt: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrialOutcome, EvalError> {
    let cfg = &state.config;
    let base = sample_base(&state.archs, cfg.top_k, rng);
    let mut ctx = TrialContext::new(env.db, env.registry, env.llm);
    ctx.history_block = state.history_block();
    let sources = state.repeat_sources(base.id);
    let failed = |op, cat, reason: String| TrialOutcome::Failed {
        base_id: Some(base.id),
        op,
        cat,
        reason,
    };
    let mut last = String::from("no decision drawn");
    for _ in 0..RESAMPLE_CAP {
        let decision = match sample_decision(&state.bandit, env.registry, &base.tree, env.db, rng) {
            Ok(d) => d,
            Err(e @ DecisionError::NoCandidates(_)) => {
                last = e.to_string();
                continue;
            }
            Err(e) => return Ok(failed(None, None, e.to_string())),
        };
        let (op, cat) = (Some(decision.op), Some(decision.cat));
        let outcome = match apply(&base.tree, &decision, &ctx, &sources, rng) {
            Ok(o) => o,
            Err(e @ TransformError::NoRepeatableHistory) => {
                last = e.to_string();
                continue;
            }
            Err(TransformError::Decision(e @ DecisionError::NoCandidates(_))) => {
                last = e.to_string();
                continue;
            }
            Err(e) => return Ok(failed(op, cat, e.to_string())),
        };
        let t = outcome.transformation;
        let probe = env.probe(cfg, cfg.seed ^ attempt as u64);
        let report = assess(&base.tree, &outcome.tree, &t, env.db, cfg.constraints, probe)?;
        if !report.overall() {
            return Ok(failed(op, cat, report.first_failure().unwrap_or_default()));
        }
        return Ok(match env.train(cfg, &outcome.tree, cfg.seed ^ attempt as u64)? {
            Ok(metric) => TrialOutcome::Evaluated {
                base_id: base.id,
                tree: outcome.tree,
                transformation: t,
                metric,
                measured: report.constraint.measured,
            },
            Err(reason) => failed(op, cat, reason),
        });
    }
    Ok(failed(None, None, last))
}

fn commit(state: &mut RunState, attempt: usize, worker: usize, outcome: TrialOutcome) {
    let record = match outcome {
        TrialOutcome::Evaluated {
            base_id,
            tree,
            transformation,
            metric,
            measured,
        } => {
            let child_id = state.archs.len();
            let hid = state.history.len();
            let delta = metric - state.archs[base_id].metric;
            let sign = delta > 0.0;
            let (op, cat) = (transformation.op, transformation.cat);
            state.bandit.update(op, cat, sign);
            let summary = transformation.summary.clone();
            state.archs.push(ArchEntry {
                id: child_id,
                tree,
                metric,
                parent_id: Some(base_id),
                transformation_id: Some(hid),
                measured,
            });
            state.history.push(HistoryEntry {
                id: hid,
                transformation,
                base_id,
                child_id,
                delta,
                sign,
                summary: summary.clone(),
            });
            TrialRecord {
                attempt,
                worker,
                base_id: Some(base_id),
                op: Some(op),
                cat: Some(cat),
                ok: true,
                reason: None,
                child_id: Some(child_id),
                metric: Some(metric),
                delta: Some(delta),
                summary: Some(summary),
            }
        }
        TrialOutcome::Failed {
            base_id,
            op,
            cat,
            reason,
        } => TrialRecord {
            attempt,
            worker,
            base_id,
            op,
            cat,
            ok: false,
            reason: Some(reason),
            child_id: None,
            metric: None,
            delta: None,
            summary: None,
        },
    };
    log::info!(
        "attempt {attempt}: {}",
        if record.ok { record.summary.as_deref().unwrap_or("") } else { record.reason.as_deref().unwrap_or("") }
    );
    state.log.push(record);
    state.attempts = attempt + 1;
}

/// Runs batches of `workers` concurrent trials against a shared snapshot
/// until the budget is met, committing results in worker order. Stops early
/// at a batch boundary once `pause_at` architectures have been evaluated.
pub fn run_search(
    state: &mut RunState,
    env: &Environment<'_>,
    pause_at: Option<usize>,
) -> Result<(), SearchError> {
    let cfg = state.config.clone();
    cfg.check();
    while state.evaluated() < cfg.budget {
        if pause_at.is_some_and(|p| state.evaluated() >= p) {
            return Ok(());
        }
        if state.attempts >= cfg.attempt_cap {
            return Err(SearchError::BudgetExhaustedByFailures {
                cap: cfg.attempt_cap,
                evaluated: state.evaluated(),
            });
        }
        let first = state.attempts;
        let width = cfg.workers.min(cfg.attempt_cap - first);
        let mut rngs = std::mem::take(&mut state.rngs);
        let snapshot: &RunState = state;
        let results: Vec<Result<TrialOutcome, EvalError>> = std::thread::scope(|s| {
            let handles: Vec<_> = rngs
                .iter_mut()
                .take(width)
                .enumerate()
                .map(|(w, rng)| s.spawn(move || run_trial(snapshot, env, first + w, rng)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("trial thread panicked")).collect()
        });
        state.rngs = rngs;
        for (w, r) in results.into_iter().enumerate() {
            if state.evaluated() >= cfg.budget {
                break;
            }
            let outcome = r.map_err(SearchError::EvaluatorUnavailable)?;
            commit(state, first + w, w, outcome);
        }
    }
    Ok(())
}

/// Convenience wrapper: seeds, full run, report.
pub fn search(cfg: RunConfig, seeds: &[ArchTree], env: &Environment<'_>) -> Result<(RunState, RunReport), SearchError> {
    let mut state = init_run(cfg, seeds, env)?;
    run_search(&mut state, env, None)?;
    let report = RunReport::from_state(&state);
    Ok((state, report))
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> SearchError {
    SearchError::Io {
        path: path.display().to_string(),
        source,
    }
}
