use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{Operation, PromptCategory};
use crate::prompt::{PromptError, PromptTemplate, TemplateRegistry};

/// Beta posterior counts for one Bernoulli arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaArm {
    pub alpha: u64,
    pub beta: u64,
}

impl Default for BetaArm {
    fn default() -> Self {
        Self { alpha: 1, beta: 1 }
    }
}

impl BetaArm {
    pub fn new(alpha: u64, beta: u64) -> Self {
        assert!(alpha >= 1 && beta >= 1, "Beta counts start at 1");
        Self { alpha, beta }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Beta::new(self.alpha as f64, self.beta as f64)
            .expect("positive shape parameters")
            .sample(rng)
    }

    pub fn record(&mut self, reward: bool) {
        if reward {
            self.alpha += 1;
        } else {
            self.beta += 1;
        }
    }

    pub fn updates(&self) -> u64 {
        self.alpha + self.beta - 2
    }

    pub fn mean(&self) -> f64 {
        self.alpha as f64 / (self.alpha + self.beta) as f64
    }
}

/// ε-greedy Thompson choice over `arms`; ties go to the earliest arm.
pub fn thompson_pick<K: Copy, R: Rng + ?Sized>(arms: &[(K, BetaArm)], epsilon: f64, rng: &mut R) -> K {
    assert!(!arms.is_empty(), "no arms to sample");
    if rng.gen_bool(epsilon) {
        return arms.choose(rng).expect("non-empty").0;
    }
    let mut best = 0;
    let mut best_theta = f64::NEG_INFINITY;
    for (i, (_, arm)) in arms.iter().enumerate() {
        let theta = arm.draw(rng);
        if theta > best_theta {
            best = i;
            best_theta = theta;
        }
    }
    arms[best].0
}

pub const DEFAULT_EPSILON: f64 = 0.5;

/// Two-level bandit over operations and (operation, category) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub epsilon: f64,
    pub op_arms: BTreeMap<Operation, BetaArm>,
    pub cat_arms: BTreeMap<Operation, BTreeMap<PromptCategory, BetaArm>>,
}

impl Default for BanditState {
    fn default() -> Self {
        Self::new(DEFAULT_EPSILON)
    }
}

impl BanditState {
    pub fn new(epsilon: f64) -> Self {
        Self::with_operations(epsilon, &Operation::ALL)
    }

    /// A bandit restricted to `ops`.
    pub fn with_operations(epsilon: f64, ops: &[Operation]) -> Self {
        assert!((0.0..=1.0).contains(&epsilon), "epsilon must be a probability");
        assert!(!ops.is_empty(), "at least one operation");
        let op_arms = ops.iter().map(|o| (*o, BetaArm::default())).collect();
        let cat_arms = ops
            .iter()
            .map(|o| {
                let cats = categories_of(*o).iter().map(|c| (*c, BetaArm::default())).collect();
                (*o, cats)
            })
            .collect();
        Self {
            epsilon,
            op_arms,
            cat_arms,
        }
    }

    pub fn operations(&self) -> Vec<Operation> {
        self.op_arms.keys().copied().collect()
    }

    pub fn op_arm(&self, op: Operation) -> Option<BetaArm> {
        self.op_arms.get(&op).copied()
    }

    pub fn cat_arm(&self, op: Operation, cat: PromptCategory) -> Option<BetaArm> {
        self.cat_arms.get(&op)?.get(&cat).copied()
    }

    /// Adds one observation to the operation arm and the category arm.
    pub fn update(&mut self, op: Operation, cat: PromptCategory, reward: bool) {
        self.op_arms.get_mut(&op).expect("operation is enabled").record(reward);
        self.cat_arms
            .get_mut(&op)
            .and_then(|m| m.get_mut(&cat))
            .expect("category belongs to operation")
            .record(reward);
    }

    pub fn total_updates(&self) -> u64 {
        self.op_arms.values().map(BetaArm::updates).sum()
    }
}

/// Categories available to `op`. Repeating has a single degenerate one.
pub fn categories_of(op: Operation) -> &'static [PromptCategory] {
    match op {
        Operation::RepeatPrevious => &[PromptCategory::RelyLLM],
        _ => &PromptCategory::ALL,
    }
}

pub fn sample_operation<R: Rng + ?Sized>(state: &BanditState, rng: &mut R) -> Operation {
    let arms: Vec<_> = state.op_arms.iter().map(|(o, a)| (*o, *a)).collect();
    thompson_pick(&arms, state.epsilon, rng)
}

pub fn sample_category<R: Rng + ?Sized>(state: &BanditState, op: Operation, rng: &mut R) -> PromptCategory {
    let cats = categories_of(op);
    if cats.len() == 1 {
        return cats[0];
    }
    let arms: Vec<_> = cats
        .iter()
        .map(|c| (*c, state.cat_arm(op, *c).unwrap_or_default()))
        .collect();
    thompson_pick(&arms, state.epsilon, rng)
}

pub fn sample_template<'a, R: Rng + ?Sized>(
    op: Operation,
    cat: PromptCategory,
    registry: &'a TemplateRegistry,
    rng: &mut R,
) -> Result<&'a PromptTemplate, PromptError> {
    Ok(registry.family(op, cat)?.choose(rng).expect("families are non-empty"))
}
