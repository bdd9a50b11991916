use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, HistoryEntry, RunState, SearchError};
use crate::decision::{Operation, PromptCategory};
use crate::prompt::{render_history_entry, HistoryLine};

/// One history entry as shown to the LLM.
pub fn textualize(entry: &HistoryEntry) -> String {
    render_history_entry(&HistoryLine {
        summary: entry.summary.clone(),
        improved: entry.sign,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub op: Operation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cat: Option<PromptCategory>,
    pub alpha: u64,
    pub beta: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub evaluated: usize,
    pub attempts: usize,
    pub acceptance_rate: f64,
    pub seed_metric: f64,
    pub best_id: usize,
    pub best_metric: f64,
    /// Best entry first, back to its seed.
    pub lineage: Vec<usize>,
    pub lineage_summaries: Vec<String>,
    pub arms: Vec<ArmStats>,
}

impl RunReport {
    pub fn from_state(state: &RunState) -> Self {
        let best = state.best();
        let lineage = state.lineage(best.id);
        let lineage_summaries = lineage
            .iter()
            .filter_map(|id| state.archs[*id].transformation_id)
            .map(|t| state.history[t].summary.clone())
            .collect();
        let mut arms = Vec::new();
        for (op, arm) in &state.bandit.op_arms {
            arms.push(ArmStats {
                op: *op,
                cat: None,
                alpha: arm.alpha,
                beta: arm.beta,
                mean: arm.mean(),
            });
            for (cat, arm) in state.bandit.cat_arms.get(op).into_iter().flatten() {
                arms.push(ArmStats {
                    op: *op,
                    cat: Some(*cat),
                    alpha: arm.alpha,
                    beta: arm.beta,
                    mean: arm.mean(),
                });
            }
        }
        let seed_metric = state.archs[..state.seeds]
            .iter()
            .map(|a| a.metric)
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            evaluated: state.evaluated(),
            attempts: state.attempts,
            acceptance_rate: if state.attempts == 0 {
                0.0
            } else {
                state.evaluated() as f64 / state.attempts as f64
            },
            seed_metric,
            best_id: best.id,
            best_metric: best.metric,
            lineage,
            lineage_summaries,
            arms,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "evaluated:   {} ({} attempts, {:.1}% accepted)", self.evaluated, self.attempts, self.acceptance_rate * 100.0);
        let _ = writeln!(s, "seed metric: {:.4}", self.seed_metric);
        let _ = writeln!(s, "best metric: {:.4} (architecture {})", self.best_metric, self.best_id);
        let _ = writeln!(s, "lineage:     {:?}", self.lineage);
        for line in self.lineage_summaries.iter().rev() {
            let _ = writeln!(s, "  - {line}");
        }
        let _ = writeln!(s, "arms:");
        for a in &self.arms {
            let name = match a.cat {
                Some(c) => format!("  {}/{}", a.op, c),
                None => a.op.to_string(),
            };
            let _ = writeln!(s, "  {name:<32} alpha={:<4} beta={:<4} mean={:.3}", a.alpha, a.beta, a.mean);
        }
        s
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SearchError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn save_checkpoint(state: &RunState, path: &Path) -> Result<(), SearchError> {
    let json = serde_json::to_vec_pretty(state).expect("run state serializes");
    write_atomic(path, &json)
}

pub fn load_checkpoint(path: &Path) -> Result<RunState, SearchError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let state: RunState =
        serde_json::from_slice(&bytes).map_err(|e| SearchError::CorruptCheckpoint(e.to_string()))?;
    validate(&state).map_err(SearchError::CorruptCheckpoint)?;
    Ok(state)
}

fn validate(state: &RunState) -> Result<(), String> {
    if state.seeds == 0 || state.seeds > state.archs.len() {
        return Err("seed count out of range".into());
    }
    for (i, a) in state.archs.iter().enumerate() {
        if a.id != i || !a.metric.is_finite() {
            return Err(format!("architecture {i} is malformed"));
        }
        match (a.parent_id, a.transformation_id) {
            (None, None) if i < state.seeds => {}
            (Some(p), Some(t)) if i >= state.seeds && p < i => {
                let h = state.history.get(t).ok_or(format!("architecture {i} has no history entry"))?;
                if h.child_id != i || h.base_id != p {
                    return Err(format!("history entry {t} does not link {p} to {i}"));
                }
            }
            _ => return Err(format!("architecture {i} has inconsistent links")),
        }
    }
    if state.history.len() != state.archs.len() - state.seeds {
        return Err("history and architecture counts disagree".into());
    }
    if state.rngs.len() != state.config.workers {
        return Err("one generator per worker expected".into());
    }
    if state.log.len() != state.attempts {
        return Err("trial log and attempt counter disagree".into());
    }
    Ok(())
}

/// Writes the checkpoint, trial log, best config and reports into `dir`.
pub fn write_outputs(state: &RunState, dir: &Path) -> Result<RunReport, SearchError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    save_checkpoint(state, &dir.join("checkpoint.json"))?;
    let log_path = dir.join("trials.jsonl");
    let mut log = Vec::new();
    for r in &state.log {
        serde_json::to_writer(&mut log, r).expect("record serializes");
        log.push(b'\n');
    }
    write_atomic(&log_path, &log)?;
    let report = RunReport::from_state(state);
    write_atomic(&dir.join("best.cfg"), state.best().tree.to_text().as_bytes())?;
    write_atomic(
        &dir.join("report.json"),
        &serde_json::to_vec_pretty(&report).expect("report serializes"),
    )?;
    let mut summary = report.to_text();
    summary.push_str("\nhistory:\n");
    for h in &state.history {
        summary.push_str(&textualize(h));
    }
    let path = dir.join("summary.txt");
    let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    f.write_all(summary.as_bytes()).map_err(|e| io_err(&path, e))?;
    Ok(report)
}
