//! Prompt assembly, reply parsing and LLM endpoints.

mod llm;
mod reply;
mod synthetic;
mod templates;
mod transcript;

use thiserror::Error;

use crate::config::ConfigError;
use crate::decision::{Operation, PromptCategory};

pub use llm::{
    complete, complete_retrying, HttpLlm, LlmEndpoint, LlmError, RecordingLlm, ScriptedLlm, WithDeadline, TOKEN_ENV,
};
pub use reply::{
    clean_choice, code_blocks, last_code_block, parse_config_block, parse_structured, ParsedConfig, StructuredReply,
    FENCE,
};
pub use synthetic::{SyntheticLlm, CORRECTION_PREFIX};
pub use templates::{
    fill, placeholders, repeat_restrictions, vocabulary, PromptTemplate, TemplateId, TemplateRegistry, INSERT_TURN2,
    REMOVE_TURN2, REPEAT_BODY, REPEAT_INTRODUCTIONS, SUMMARY_REQUEST, SWAP_TURN2, SYSTEM_PROMPT, TURN1,
};
pub use transcript::{
    assemble_turn1, code_block, digest_messages, render_history, render_history_entry, unresolved, ChatMessage,
    ChatTranscript, HistoryLine, Role, EMPTY_HISTORY, HISTORY_WINDOW,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("unresolved placeholder `{{{0}}}`")]
    UnresolvedPlaceholder(String),
    #[error("reply is missing {missing:?}")]
    MalformedReply { missing: Vec<String> },
    #[error("reply has no fenced code block")]
    NoCodeBlock,
    #[error(transparent)]
    Syntax(#[from] ConfigError),
    #[error("no templates for {op}/{cat}")]
    UnknownTemplate { op: Operation, cat: PromptCategory },
}
