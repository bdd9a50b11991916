use std::collections::BTreeMap;

use super::PromptError;
use crate::config::{parse_config, parse_expr, ArchTree, ConfigValue};

pub const FENCE: &str = "##########";

/// Labelled answers from the last `##########` block of a reply.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredReply {
    pub fields: BTreeMap<String, String>,
    pub config_block: Option<String>,
}

impl StructuredReply {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }
}

fn is_fence(line: &str) -> bool {
    let t = line.trim();
    t.len() >= FENCE.len() && t.bytes().all(|b| b == b'#')
}

/// Strips list bullets and emphasis that chat models like to add.
fn strip_decoration(line: &str) -> &str {
    let mut s = line.trim();
    for prefix in ["- ", "* "] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.trim_start();
        }
    }
    s.trim_start_matches("**").trim_start()
}

pub fn parse_structured(reply: &str, expected_keys: &[&str]) -> Result<StructuredReply, PromptError> {
    let lines: Vec<&str> = reply.lines().collect();
    let fences: Vec<usize> = (0..lines.len()).filter(|&i| is_fence(lines[i])).collect();
    let missing_all = || PromptError::MalformedReply {
        missing: expected_keys.iter().map(|k| k.to_string()).collect(),
    };
    if fences.len() < 2 {
        return Err(missing_all());
    }
    let (open, close) = (fences[fences.len() - 2], fences[fences.len() - 1]);
    let block = &lines[open + 1..close];

    let mut fields = BTreeMap::new();
    let mut missing = Vec::new();
    for key in expected_keys {
        let found = block.iter().find_map(|l| {
            let s = strip_decoration(l);
            let rest = s.strip_prefix(key)?;
            let rest = rest.trim_start_matches("**");
            let rest = rest.strip_prefix(':')?;
            Some(rest.trim_start_matches("**").trim().to_string())
        });
        match found {
            Some(v) => {
                fields.insert(key.to_string(), v);
            }
            None => missing.push(key.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(PromptError::MalformedReply { missing });
    }
    let config_block = last_code_block(&block.join("\n"));
    Ok(StructuredReply { fields, config_block })
}

/// Removes quoting a model may wrap around a chosen name or address.
pub fn clean_choice(value: &str) -> &str {
    let mut s = value.trim().trim_end_matches('.');
    loop {
        let t = s
            .trim()
            .trim_matches('`')
            .trim_matches('\'')
            .trim_matches('"')
            .trim_matches('*')
            .trim();
        if t == s {
            return s;
        }
        s = t;
    }
}

/// Contents of every complete fenced code block, in order.
pub fn code_blocks(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(body), true) => {
                out.push(body.join("\n"));
                current = None;
            }
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    out
}

pub fn last_code_block(text: &str) -> Option<String> {
    code_blocks(text).pop()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedConfig {
    Tree(ArchTree),
    Sub(ConfigValue),
}

impl ParsedConfig {
    pub fn into_tree(self) -> Option<ArchTree> {
        match self {
            ParsedConfig::Tree(t) => Some(t),
            ParsedConfig::Sub(_) => None,
        }
    }

    pub fn into_value(self) -> ConfigValue {
        match self {
            ParsedConfig::Tree(t) => ConfigValue::Node(t.into_root()),
            ParsedConfig::Sub(v) => v,
        }
    }
}

fn assigns_model(code: &str) -> bool {
    code.lines().any(|l| {
        l.trim_start()
            .strip_prefix("model")
            .is_some_and(|r| r.trim_start().starts_with('='))
    })
}

/// Parses the last fenced block as a full config or a bare `dict(...)`.
pub fn parse_config_block(reply: &str) -> Result<ParsedConfig, PromptError> {
    let code = last_code_block(reply).ok_or(PromptError::NoCodeBlock)?;
    if assigns_model(&code) {
        return Ok(ParsedConfig::Tree(parse_config(&code)?));
    }
    Ok(ParsedConfig::Sub(parse_expr(code.trim())?))
}
