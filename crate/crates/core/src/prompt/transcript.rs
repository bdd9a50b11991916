use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::templates::{fill, placeholder_spans, vocabulary, SYSTEM_PROMPT, TURN1};
use super::PromptError;

/// Turn-1 history shows at most this many of the latest entries.
pub const HISTORY_WINDOW: usize = 20;

pub const EMPTY_HISTORY: &str = "(no previous experiments)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// A conversation that always opens with the fixed system prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTranscript {
    messages: Vec<ChatMessage>,
}

impl Default for ChatTranscript {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatTranscript {
    pub fn new() -> Self {
        Self {
            messages: vec![ChatMessage {
                role: Role::System,
                content: SYSTEM_PROMPT.to_string(),
            }],
        }
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn push_user(&mut self, text: impl Into<String>) {
        self.messages.push(ChatMessage {
            role: Role::User,
            content: text.into(),
        });
    }

    pub fn push_assistant(&mut self, text: impl Into<String>) {
        self.messages.push(ChatMessage {
            role: Role::Assistant,
            content: text.into(),
        });
    }

    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn first_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn digest(&self) -> String {
        digest_messages(&self.messages)
    }
}

/// Hex SHA-256 over the role/content pairs.
pub fn digest_messages(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(serde_json::to_string(&m.role).expect("role serializes"));
        h.update([0u8]);
        h.update(m.content.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Wraps source text in a python fence.
pub fn code_block(text: &str) -> String {
    format!("```python\n{}\n```", text.trim_end())
}

/// One past change as shown to the LLM.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryLine {
    pub summary: String,
    pub improved: bool,
}

pub fn render_history_entry(line: &HistoryLine) -> String {
    let verdict = if line.improved { "Improved" } else { "Deteriorated" };
    format!("------\nChanges: {}\nPerformance: {verdict}\n", line.summary)
}

/// The latest [`HISTORY_WINDOW`] entries, oldest first.
pub fn render_history(lines: &[HistoryLine]) -> String {
    if lines.is_empty() {
        return EMPTY_HISTORY.to_string();
    }
    let start = lines.len().saturating_sub(HISTORY_WINDOW);
    let mut out: String = lines[start..].iter().map(render_history_entry).collect();
    out.push_str("------");
    out
}

/// Placeholder names from the template vocabulary left in `text`.
pub fn unresolved(text: &str) -> Vec<String> {
    let vocab = vocabulary();
    placeholder_spans(text)
        .into_iter()
        .filter(|(_, _, n)| vocab.contains(*n) || matches!(*n, "A" | "Location"))
        .map(|(_, _, n)| n.to_string())
        .collect()
}

pub fn assemble_turn1(
    base_text: &str,
    history_block: &str,
    template_filled: &str,
) -> Result<ChatTranscript, PromptError> {
    if let Some(name) = unresolved(template_filled).into_iter().next() {
        return Err(PromptError::UnresolvedPlaceholder(name));
    }
    let mut values = BTreeMap::new();
    values.insert("pre_cfg".to_string(), format!("\n{}", code_block(base_text)));
    values.insert("HISTORY".to_string(), history_block.to_string());
    values.insert("OPERATION_PROMPT".to_string(), template_filled.to_string());
    let mut t = ChatTranscript::new();
    t.push_user(fill(TURN1, &values)?);
    Ok(t)
}
