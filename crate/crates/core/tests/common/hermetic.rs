//! A fully in-process search environment and run-log invariant checks.

use treenas::config::ArchTree;
use treenas::evolution::*;
use treenas::feasibility::{check_exec, check_intend, check_static, Budget, CostModel, Probe, SyntheticCost};
use treenas::miner::ModuleDb;
use treenas::prompt::{LlmEndpoint, SyntheticLlm, TemplateRegistry};

pub const DESIGNATED: &str = "BottleneckAttn";
pub const MAX_PARAMS: u64 = 10_000_000;
pub const MAX_FLOPS: u64 = 1_000_000_000;

pub struct Hermetic {
    pub db: ModuleDb,
    pub registry: TemplateRegistry,
    pub llm: Box<dyn LlmEndpoint>,
    pub evaluator: Box<dyn Evaluator>,
}

impl Hermetic {
    pub fn new(llm_seed: u64) -> Self {
        Self {
            db: super::zoo_db(),
            registry: TemplateRegistry::standard(),
            llm: Box::new(SyntheticLlm::new(llm_seed)),
            evaluator: Box::new(SyntheticEvaluator::new(DESIGNATED, 1.0, MAX_PARAMS)),
        }
    }

    pub fn env(&self) -> Environment<'_> {
        Environment {
            db: &self.db,
            registry: &self.registry,
            llm: self.llm.as_ref(),
            evaluator: self.evaluator.as_ref(),
        }
    }
}

pub fn budget() -> Budget {
    Budget::new(MAX_PARAMS, MAX_FLOPS)
}

pub fn config(budget_n: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(budget_n, budget(), seed);
    cfg.workers = 4;
    cfg.top_k = 5;
    cfg.epsilon = 0.5;
    cfg
}

pub fn seed_tree() -> ArchTree {
    super::reference_config("cifar10")
}

/// Every violated run-log invariant, as readable messages.
pub fn violations(state: &RunState, db: &ModuleDb) -> Vec<String> {
    let mut out = Vec::new();
    for a in &state.archs[state.seeds..] {
        let Some(tid) = a.transformation_id else {
            out.push(format!("architecture {} has no history entry", a.id));
            continue;
        };
        let h = &state.history[tid];
        let Some(p) = a.parent_id else {
            out.push(format!("architecture {} has no parent", a.id));
            continue;
        };
        if h.child_id != a.id || h.base_id != p {
            out.push(format!("history {tid} does not map {p} to {}", a.id));
        }
        if !check_intend(&state.archs[p].tree, &a.tree, &h.transformation).ok {
            out.push(format!("architecture {} fails the intent check", a.id));
        }
        if !check_static(&a.tree, db).ok || !check_exec(&a.tree, db, Probe::Static(&SyntheticCost)).ok {
            out.push(format!("architecture {} is not executable", a.id));
        }
        if !state.config.constraints.admits(SyntheticCost.measure(&a.tree)) {
            out.push(format!("architecture {} exceeds the constraints", a.id));
        }
        if (h.delta - (a.metric - state.archs[p].metric)).abs() > 1e-12 {
            out.push(format!("history {tid} has a wrong delta"));
        }
    }
    for h in &state.history {
        if h.sign != (h.delta > 0.0) {
            out.push(format!("history {} has sign {} for delta {}", h.id, h.sign, h.delta));
        }
    }
    if state.bandit.total_updates() != state.evaluated() as u64 {
        out.push(format!(
            "{} bandit updates for {} evaluated trials",
            state.bandit.total_updates(),
            state.evaluated()
        ));
    }
    let ok_records = state.log.iter().filter(|r| r.ok).count();
    if ok_records != state.evaluated() {
        out.push(format!("{ok_records} successful records for {} evaluated", state.evaluated()));
    }
    out
}

/// Trial records in a canonical order for comparing runs.
pub fn sorted_records(state: &RunState) -> Vec<String> {
    let mut v: Vec<String> = state.log.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    v.sort();
    v
}
