//! Coarse-to-fine planning: operation, prompt category, template, then
//! rule-sampled placeholders, with a two-level Thompson bandit on top.

mod bandit;
mod ops;
mod plan;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ArchTree, ConfigError};
use crate::miner::{MinerError, ModuleDb};
use crate::prompt::{PromptError, TemplateId, TemplateRegistry};

pub use bandit::{
    categories_of, sample_category, sample_operation, sample_template, thompson_pick, BanditState, BetaArm,
    DEFAULT_EPSILON,
};
pub use ops::{Operation, PromptCategory};
pub use plan::{
    defaults_dict, fill_placeholders, list_modules, merge_starts, primitives, render_list, render_slot, render_slots,
    resolvable_modules, PlaceholderAssignment, Provenance, Slot, ADDRESS_SAMPLE, CUSTOM_SAMPLE, MERGE_SIZES,
    MODULE_SAMPLE, PRIMITIVE_SAMPLE,
};

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("no candidates: {0}")]
    NoCandidates(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// One fully sampled (operation, category, template, placeholders) draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub op: Operation,
    pub cat: PromptCategory,
    pub template: TemplateId,
    pub skips_llm: bool,
    pub assignment: PlaceholderAssignment,
}

/// Draws the whole stack once, ancestrally.
pub fn sample_decision<R: Rng + ?Sized>(
    state: &BanditState,
    registry: &TemplateRegistry,
    tree: &ArchTree,
    db: &ModuleDb,
    rng: &mut R,
) -> Result<Decision, DecisionError> {
    let op = sample_operation(state, rng);
    decide_for(op, state, registry, tree, db, rng)
}

/// The stack below a fixed operation.
pub fn decide_for<R: Rng + ?Sized>(
    op: Operation,
    state: &BanditState,
    registry: &TemplateRegistry,
    tree: &ArchTree,
    db: &ModuleDb,
    rng: &mut R,
) -> Result<Decision, DecisionError> {
    let cat = sample_category(state, op, rng);
    let template = sample_template(op, cat, registry, rng)?;
    let assignment = fill_placeholders(template, tree, db, rng)?;
    Ok(Decision {
        op,
        cat,
        template: template.id,
        skips_llm: template.skips_llm,
        assignment,
    })
}
