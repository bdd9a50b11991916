//! A deterministic rule-based stand-in for a chat model, used for hermetic
//! runs. It answers every prompt family this crate produces with a valid
//! reply drawn from the offered choices.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::llm::{LlmEndpoint, LlmError};
use super::reply::{code_blocks, last_code_block};
use super::templates::{placeholder_spans, REPEAT_INTRODUCTIONS, SUMMARY_REQUEST};
use super::transcript::{code_block, digest_messages, ChatMessage, Role};
use crate::config::{
    attr, delete_list, get_subtree, parse_config, parse_expr, render_config, render_inline, render_value,
    replace, ArchNode, ArchTree, ConfigValue, NodeAddress,
};
use crate::miner::TODO_MARKER;

/// Corrective follow-ups start with this text.
pub const CORRECTION_PREFIX: &str = "Your previous answer could not be used";

pub struct SyntheticLlm {
    seed: u64,
}

impl SyntheticLlm {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng(&self, messages: &[ChatMessage]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(digest_messages(messages).as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl LlmEndpoint for SyntheticLlm {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let mut rng = self.rng(messages);
        let users: Vec<&str> = messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect();
        let prompt = users
            .iter()
            .rev()
            .find(|u| !u.starts_with(CORRECTION_PREFIX))
            .copied()
            .unwrap_or_default();
        let first = users.first().copied().unwrap_or_default();
        let last_reply = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str());
        let reply = if prompt.contains(SUMMARY_REQUEST) {
            Some(summarize(first, last_reply))
        } else if prompt.contains("Now, I want to ask how to replace")
            || prompt.contains("Now, I want to ask how to insert")
        {
            fill_defaults(prompt, &mut rng)
        } else if prompt.contains("Now, I want to ask how to remove the module at ") {
            remove_turn2(first, prompt)
        } else if prompt.contains("New Module Configuration:") {
            create(prompt, &mut rng)
        } else if prompt.contains("Where to be Removed: YYY") {
            choose(prompt, &mut rng, &[("Where to be Removed", "YYY can be chosen from ")])
        } else if prompt.contains("Where to be Used: ZZZ") {
            choose(
                prompt,
                &mut rng,
                &[
                    ("New Module Name to Use", "YYY can be chosen from "),
                    ("Where to be Used", "Select ZZZ from "),
                ],
            )
        } else if prompt.contains("Where to be Inserted: ZZZ") {
            choose(
                prompt,
                &mut rng,
                &[
                    ("New Module Name to Use", "YYY can be chosen from "),
                    ("Where to be Inserted", "ZZZ can be chosen from "),
                ],
            )
        } else if prompt.contains("New Module Name to Use: YYY") {
            choose(prompt, &mut rng, &[("New Module Name to Use", "YYY can be chosen from ")])
        } else if prompt.contains("Please provide a fully modified model config.") {
            pre_cfg(prompt).and_then(|t| tweak(&t, &mut rng))
        } else if prompt.contains("Please provide the improved complete config.") {
            repeat_source(prompt).and_then(|t| tweak(&t, &mut rng))
        } else {
            None
        };
        Ok(reply.unwrap_or_else(|| "I am not sure how to help with that.".to_string()))
    }
}

/// The list text that follows `marker`, split at top-level commas.
fn list_after(text: &str, marker: &str) -> Option<Vec<String>> {
    let start = text.rfind(marker)? + marker.len();
    let rest = text[start..].strip_prefix('[')?;
    let mut depth = 0usize;
    let mut items = Vec::new();
    let mut cur = String::new();
    for c in rest.chars() {
        match c {
            '[' => {
                depth += 1;
                cur.push(c);
            }
            ']' if depth == 0 => {
                if !cur.trim().is_empty() {
                    items.push(cur.trim().to_string());
                }
                return Some(items);
            }
            ']' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => {
                items.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    None
}

fn choose(prompt: &str, rng: &mut ChaCha8Rng, keys: &[(&str, &str)]) -> Option<String> {
    let mut out = String::from("##########\nKnowledge from Previous Experiments: nothing specific\n");
    for (key, marker) in keys {
        let options = list_after(prompt, marker)?;
        let pick = options.choose(rng)?;
        out.push_str(&format!("{key}: {pick}\n"));
    }
    out.push_str("##########");
    Some(out)
}

fn block_after(text: &str, marker: &str) -> Option<String> {
    let start = text.find(marker)? + marker.len();
    code_blocks(&text[start..]).into_iter().next()
}

fn pre_cfg(prompt: &str) -> Option<ArchTree> {
    parse_config(&block_after(prompt, "Please improve the config:")?).ok()
}

fn int_hint(old: Option<&ArchNode>, keys: &[&str]) -> Option<i64> {
    let old = old?;
    keys.iter().find_map(|k| old.get(k).and_then(ConfigValue::as_int))
}

const WIDTH_KEYS: [&str; 9] = [
    "out_channels",
    "in_channels",
    "channels",
    "dim",
    "embed_dim",
    "num_features",
    "planes",
    "out_features",
    "in_features",
];

fn guess(key: &str, old: Option<&ArchNode>, rng: &mut ChaCha8Rng) -> ConfigValue {
    let k = key.to_ascii_lowercase();
    let width = int_hint(old, &WIDTH_KEYS).unwrap_or(64);
    let v = if ["channel", "dim", "feature", "planes", "width", "hidden"].iter().any(|p| k.contains(p)) {
        width
    } else if k.contains("kernel") {
        *[1, 3].choose(rng).expect("non-empty")
    } else if k.contains("stride") {
        int_hint(old, &["stride"]).unwrap_or(1)
    } else if k.contains("head") {
        [4, 2, 1].into_iter().find(|h| width % h == 0).unwrap_or(1)
    } else if k.contains("ratio") || k.contains("expan") {
        *[2, 4].choose(rng).expect("non-empty")
    } else {
        1
    };
    ConfigValue::Int(v)
}

fn fill_defaults(prompt: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    let defaults = parse_expr(&last_code_block(prompt)?).ok()?;
    let old = block_after(prompt, "the used parameters of __init__ function are")
        .and_then(|b| parse_expr(&b).ok());
    let old = old.as_ref().and_then(ConfigValue::as_node);
    let mut out = defaults.as_node()?.clone();
    let keys: Vec<String> = out.keys().map(str::to_string).collect();
    for key in keys {
        let copied = old.and_then(|o| o.get(&key)).filter(|_| key != "type").cloned();
        let todo = out.get(&key).is_some_and(|v| v.as_str() == Some(TODO_MARKER));
        if let Some(v) = copied {
            out.insert(key, v);
        } else if todo {
            let v = guess(&key, old, rng);
            out.insert(key, v);
        }
    }
    Some(code_block(&render_value(&ConfigValue::Node(out))))
}

fn remove_turn2(first: &str, prompt: &str) -> Option<String> {
    let marker = "remove the module at ";
    let start = prompt.find(marker)? + marker.len();
    let end = prompt[start..].find(". I want you")? + start;
    let addr: NodeAddress = prompt[start..end].trim().parse().ok()?;
    let out = delete_list(&pre_cfg(first)?, &addr).ok()?;
    Some(code_block(&render_config(&out)))
}

fn special(type_name: &str, entries: Vec<(&str, ConfigValue)>) -> ConfigValue {
    let mut n = ArchNode::module(type_name);
    for (k, v) in entries {
        n.insert(k, v);
    }
    ConfigValue::Node(n)
}

fn identity() -> ConfigValue {
    special("Identity", vec![])
}

fn sequential(items: Vec<ConfigValue>) -> ConfigValue {
    special("SequentialWithConfig", vec![("module_cfgs", ConfigValue::List(items))])
}

fn parallel(branch: ConfigValue, merge: &str) -> ConfigValue {
    special(
        "ParallelWithConfig",
        vec![
            ("module_cfg1", branch),
            ("module_cfg2", identity()),
            ("merge_operation", ConfigValue::Str(merge.into())),
        ],
    )
}

fn create(prompt: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    let used = parse_expr(&block_after(prompt, "with the following parameters:")?).ok()?;
    let origs: Vec<ConfigValue> = match used {
        ConfigValue::List(items) => items,
        v => vec![v],
    };
    let wrap = |origs: &[ConfigValue]| match origs {
        [one] => one.clone(),
        many => sequential(many.to_vec()),
    };
    let required = prompt
        .find("please use the ")
        .and_then(|i| {
            let rest = &prompt[i + "please use the ".len()..];
            let end = rest.find(" at least")?;
            rest[..end].split(" and ").nth(1).map(str::trim)
        })
        .map(str::to_string);
    let merge = *["add", "mul"].choose(rng).expect("non-empty");
    let composite = match required.as_deref() {
        Some("SequentialWithConfig") => sequential(origs),
        Some("NAS_Backbone") => special("NAS_Backbone", vec![("layer_cfgs", ConfigValue::List(origs))]),
        Some("MyReshape") => {
            let mut items = origs;
            items.push(special(
                "MyReshape",
                vec![("shape", ConfigValue::List(vec![ConfigValue::Int(-1)]))],
            ));
            sequential(items)
        }
        Some(_) => parallel(wrap(&origs), merge),
        None if origs.len() > 1 || rng.gen_bool(0.5) => sequential(origs),
        None => parallel(wrap(&origs), merge),
    };
    Some(format!(
        "##########\nKnowledge from Previous Experiments: nothing specific\nInput and Output Shape of the Previous Module(s): unchanged\nNew Module Configuration:\n{}\n##########",
        code_block(&render_value(&composite))
    ))
}

/// Numeric and boolean leaves of module nodes, excluding `type`.
fn tunable_leaves(tree: &ArchTree) -> Vec<NodeAddress> {
    let mut out = Vec::new();
    for (addr, _) in attr(tree) {
        let Ok(ConfigValue::Node(n)) = get_subtree(tree, &addr) else {
            continue;
        };
        for (k, v) in n.entries() {
            if matches!(v, ConfigValue::Int(_) | ConfigValue::Float(_) | ConfigValue::Bool(_)) {
                out.push(addr.key(k.clone()));
            }
        }
    }
    out
}

fn nudge(v: &ConfigValue, rng: &mut ChaCha8Rng) -> ConfigValue {
    match v {
        ConfigValue::Int(i) if *i >= 2 => ConfigValue::Int(if rng.gen_bool(0.5) { i - 1 } else { i + 1 }),
        ConfigValue::Int(i) if *i >= 0 => ConfigValue::Int(i + 1),
        ConfigValue::Int(i) => ConfigValue::Int(i - 1),
        ConfigValue::Float(f) if *f == 0.0 => ConfigValue::Float(0.1),
        ConfigValue::Float(f) => {
            let scale = if rng.gen_bool(0.5) { 0.9 } else { 1.1 };
            ConfigValue::Float((f * scale * 1e6).round() / 1e6)
        }
        ConfigValue::Bool(b) => ConfigValue::Bool(!b),
        other => other.clone(),
    }
}

fn tweak(tree: &ArchTree, rng: &mut ChaCha8Rng) -> Option<String> {
    let leaves = tunable_leaves(tree);
    let n = rng.gen_range(1..=2).min(leaves.len());
    let mut out = tree.clone();
    for addr in leaves.choose_multiple(rng, n) {
        let old = get_subtree(&out, addr).ok()?;
        out = replace(&out, addr, nudge(&old, rng)).ok()?;
    }
    if n == 0 {
        return None;
    }
    Some(code_block(&render_config(&out)))
}

/// The newer config of a repeat prompt, located through its introduction.
fn repeat_source(prompt: &str) -> Option<ArchTree> {
    let head = &prompt[..prompt.find("I think the change,")?];
    for intro in REPEAT_INTRODUCTIONS {
        let spans = placeholder_spans(intro);
        let mut pos = 0;
        let mut last = 0;
        let mut matched = true;
        for (s, e, _) in &spans {
            let frag = intro[last..*s].trim();
            if !frag.is_empty() {
                match head[pos..].find(frag) {
                    Some(i) => pos += i + frag.len(),
                    None => {
                        matched = false;
                        break;
                    }
                }
            }
            last = *e;
        }
        let tail = intro[last..].trim();
        if !matched || (!tail.is_empty() && !head[pos..].contains(tail)) {
            continue;
        }
        let cfgs: Vec<&str> = spans
            .iter()
            .map(|(_, _, n)| *n)
            .filter(|n| *n == "pre_cfg" || *n == "pre_pre_cfg")
            .collect();
        let blocks = code_blocks(head);
        if blocks.len() != cfgs.len() {
            continue;
        }
        let i = cfgs.iter().position(|n| *n == "pre_cfg")?;
        return parse_config(&blocks[i]).ok();
    }
    None
}

fn leaf_changes(a: &ArchTree, b: &ArchTree) -> Vec<String> {
    tunable_leaves(a)
        .into_iter()
        .filter_map(|addr| {
            let old = get_subtree(a, &addr).ok()?;
            let new = get_subtree(b, &addr).ok()?;
            (old != new).then(|| format!("{addr} from {} to {}", render_inline(&old), render_inline(&new)))
        })
        .collect()
}

fn summarize(first: &str, last_reply: Option<&str>) -> String {
    let produced = last_reply.and_then(last_code_block);
    let base = if first.contains("Please provide the improved complete config.") {
        repeat_source(first)
    } else {
        pre_cfg(first)
    };
    if let (Some(base), Some(code)) = (base, produced.as_deref()) {
        if let Ok(tree) = parse_config(code) {
            let changes = leaf_changes(&base, &tree);
            if !changes.is_empty() {
                return format!("Changed {}.", changes.join(", "));
            }
        }
        if let Ok(ConfigValue::Node(n)) = parse_expr(code) {
            if let Ok(t) = ArchTree::new(n) {
                let inner: Vec<String> = attr(&t).into_iter().map(|(_, t)| t).collect();
                return format!("Created a composite module from {}.", inner.join(", "));
            }
        }
    }
    "Modified the model config.".to_string()
}
