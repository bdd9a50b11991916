//! Neural architecture search over hierarchical config trees.
//!
//! Architectures are OpenMMLab-style `model = dict(...)` configs. Reusable
//! modules are mined statically from Python sources into a [`miner::ModuleDb`];
//! the search loop in [`evolution`] evolves trees through the transformation
//! operations in [`transform`], planned coarse-to-fine by [`decision`] and
//! gated by the checks in [`feasibility`]. The LLM is only consulted through
//! the prompts and parsers in [`prompt`].

pub mod config;
pub mod decision;
pub mod evolution;
pub mod feasibility;
pub mod miner;
pub mod prompt;
pub mod transform;
