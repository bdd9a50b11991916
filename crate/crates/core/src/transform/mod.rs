//! Executes a sampled decision as a concrete tree edit, talking to the LLM
//! where the decision leaves choices open.

mod record;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::config::{
    attr_list, containing_list_len, delete_list, get_subtree, insert_list, replace, ArchNode, ArchTree,
    ConfigError, ConfigValue, NodeAddress,
};
use crate::decision::{
    render_list, render_slots, Decision, DecisionError, Operation, PromptCategory, Provenance, Slot,
};
use crate::feasibility::check_intend;
use crate::miner::{MinerError, ModuleDb, TODO_MARKER};
use crate::prompt::{
    assemble_turn1, clean_choice, code_block, complete_retrying, fill, parse_config_block, parse_structured,
    repeat_restrictions, ChatTranscript, LlmEndpoint, LlmError, ParsedConfig, PromptError, TemplateId,
    TemplateRegistry, CORRECTION_PREFIX, INSERT_TURN2, REMOVE_TURN2, REPEAT_BODY, REPEAT_INTRODUCTIONS,
    SUMMARY_REQUEST, SWAP_TURN2,
};

pub use record::{subtree_digest, Choices, Edit, Transformation};

pub const MAX_RETRIES: usize = 2;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("trial infeasible: {0}")]
    Infeasible(String),
    #[error("no improving history entry to repeat")]
    NoRepeatableHistory,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Miner(#[from] MinerError),
}

/// Shared inputs for executing one trial.
pub struct TrialContext<'a> {
    pub db: &'a ModuleDb,
    pub registry: &'a TemplateRegistry,
    pub llm: &'a dyn LlmEndpoint,
    /// Rendered history for Turn 1.
    pub history_block: String,
    /// Corrective follow-ups after an unusable reply.
    pub max_retries: usize,
    /// Extra attempts after a timeout or transport failure.
    pub transport_retries: usize,
}

impl<'a> TrialContext<'a> {
    pub fn new(db: &'a ModuleDb, registry: &'a TemplateRegistry, llm: &'a dyn LlmEndpoint) -> Self {
        Self {
            db,
            registry,
            llm,
            history_block: crate::prompt::render_history(&[]),
            max_retries: MAX_RETRIES,
            transport_retries: MAX_RETRIES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub tree: ArchTree,
    pub transformation: Transformation,
    pub transcript: ChatTranscript,
}

/// An improving history entry offered to the repeat operation.
#[derive(Debug, Clone)]
pub struct RepeatSource {
    pub parent: ArchTree,
    pub parent_metric: f64,
    pub child_metric: f64,
    pub transformation: Transformation,
}

/// Sends the transcript, retrying with a corrective message while `parse`
/// rejects the reply.
fn ask<T>(
    transcript: &mut ChatTranscript,
    ctx: &TrialContext<'_>,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<T, TransformError> {
    let mut attempt = 0;
    loop {
        let reply = complete_retrying(transcript, ctx.llm, ctx.transport_retries)?;
        match parse(&reply) {
            Ok(v) => return Ok(v),
            Err(reason) if attempt < ctx.max_retries => {
                log::debug!("rejecting reply: {reason}");
                attempt += 1;
                transcript.push_user(format!(
                    "{CORRECTION_PREFIX}: {reason}. Please answer again in the requested format."
                ));
            }
            Err(reason) => return Err(TransformError::Infeasible(reason)),
        }
    }
}

fn turn1(tree: &ArchTree, decision: &Decision, ctx: &TrialContext<'_>) -> Result<ChatTranscript, TransformError> {
    let template = ctx.registry.get(decision.template)?;
    let values = render_slots(&decision.assignment.slots, tree, ctx.db)?;
    let filled = template.fill(&values)?;
    Ok(assemble_turn1(&tree.to_text(), &ctx.history_block, &filled)?)
}

/// Appends `text` as the next user turn, opening the conversation with the
/// config and history when nothing was asked yet.
fn follow_up(
    transcript: Option<ChatTranscript>,
    tree: &ArchTree,
    ctx: &TrialContext<'_>,
    text: String,
) -> Result<ChatTranscript, TransformError> {
    Ok(match transcript {
        Some(mut t) => {
            t.push_user(text);
            t
        }
        None => assemble_turn1(&tree.to_text(), &ctx.history_block, &text)?,
    })
}

fn slots(pairs: Vec<(&str, Slot)>) -> BTreeMap<String, Slot> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn type_at(tree: &ArchTree, a: &NodeAddress) -> Result<String, TransformError> {
    get_subtree(tree, a)?
        .module_type()
        .map(str::to_string)
        .ok_or_else(|| TransformError::Infeasible(format!("{a} is not a module")))
}

fn parse_address(raw: &str, allowed: &[NodeAddress]) -> Result<NodeAddress, String> {
    let choice = clean_choice(raw);
    let a: NodeAddress = choice.parse().map_err(|_| format!("`{choice}` is not an address"))?;
    if !allowed.contains(&a) {
        return Err(format!("`{a}` is not one of {}", render_list(allowed)));
    }
    Ok(a)
}

fn parse_module(raw: &str, allowed: &[String]) -> Result<String, String> {
    let choice = clean_choice(raw);
    if !allowed.iter().any(|m| m == choice) {
        return Err(format!("`{choice}` is not one of {}", render_list(allowed)));
    }
    Ok(choice.to_string())
}

/// Builds the new module node from a Turn-2 parameter dict.
fn module_from_params(reply: &str, module: &str, db: &ModuleDb) -> Result<ConfigValue, String> {
    let parsed = parse_config_block(reply).map_err(|e| e.to_string())?;
    let ParsedConfig::Sub(ConfigValue::Node(given)) = parsed else {
        return Err("expected a parameter dict".into());
    };
    if let Some(t) = given.module_type() {
        if t != module {
            return Err(format!("the dict names type `{t}` instead of `{module}`"));
        }
    }
    let rec = db.get(module).ok_or_else(|| format!("unknown module `{module}`"))?;
    if let Some(extra) = given.keys().find(|k| *k != "type" && !rec.has_param(k)) {
        return Err(format!("`{extra}` is not a parameter of `{module}`"));
    }
    let mut node = ArchNode::module(module);
    for p in &rec.params {
        let v = given.get(&p.name).cloned().unwrap_or_else(|| p.default.to_value());
        if v.contains_str(TODO_MARKER) {
            return Err(format!("`{}` is still {TODO_MARKER}", p.name));
        }
        node.insert(p.name.clone(), v);
    }
    Ok(ConfigValue::Node(node))
}

fn full_config(reply: &str) -> Result<ArchTree, String> {
    match parse_config_block(reply).map_err(|e| e.to_string())? {
        ParsedConfig::Tree(t) => Ok(t),
        ParsedConfig::Sub(_) => Err("expected the complete `model = dict(...)` config".into()),
    }
}

fn record(decision: &Decision, choices: Choices, edits: Vec<Edit>, summary: String) -> Transformation {
    Transformation {
        op: decision.op,
        cat: decision.cat,
        template: decision.template,
        assignment: decision.assignment.clone(),
        choices,
        edits,
        transcript_digest: String::new(),
        summary,
        repeated_op: None,
    }
}

fn finish(tree: ArchTree, mut t: Transformation, transcript: ChatTranscript) -> Outcome {
    t.transcript_digest = transcript.digest();
    Outcome {
        tree,
        transformation: t,
        transcript,
    }
}

fn describe(transcript: &mut ChatTranscript, ctx: &TrialContext<'_>, fallback: String) -> String {
    transcript.push_user(SUMMARY_REQUEST);
    match complete_retrying(transcript, ctx.llm, ctx.transport_retries) {
        Ok(reply) => reply
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .map(str::to_string)
            .unwrap_or(fallback),
        Err(e) => {
            log::warn!("summary request failed: {e}");
            fallback
        }
    }
}

fn arity_matches(db: &ModuleDb, a: &str, b: &str) -> bool {
    matches!((db.get(a), db.get(b)), (Some(x), Some(y)) if x.arity() == y.arity())
}

/// Runs `decision` against `tree`. Repeat decisions draw from `sources`.
pub fn apply<R: Rng + ?Sized>(
    tree: &ArchTree,
    decision: &Decision,
    ctx: &TrialContext<'_>,
    sources: &[RepeatSource],
    rng: &mut R,
) -> Result<Outcome, TransformError> {
    match decision.op {
        Operation::SwapModule | Operation::InsertModule => apply_module_edit(tree, decision, ctx),
        Operation::DeleteModule => apply_remove(tree, decision, ctx),
        Operation::CreateModule => apply_create(tree, decision, ctx),
        Operation::ChangeHyperparameter => apply_change_hparam(tree, decision, ctx),
        Operation::RepeatPrevious => apply_repeat(tree, sources, ctx, rng),
    }
}

pub fn apply_swap(tree: &ArchTree, decision: &Decision, ctx: &TrialContext<'_>) -> Result<Outcome, TransformError> {
    debug_assert_eq!(decision.op, Operation::SwapModule);
    apply_module_edit(tree, decision, ctx)
}

pub fn apply_insert(tree: &ArchTree, decision: &Decision, ctx: &TrialContext<'_>) -> Result<Outcome, TransformError> {
    debug_assert_eq!(decision.op, Operation::InsertModule);
    apply_module_edit(tree, decision, ctx)
}

fn apply_module_edit(tree: &ArchTree, decision: &Decision, ctx: &TrialContext<'_>) -> Result<Outcome, TransformError> {
    let swap = decision.op == Operation::SwapModule;
    let asg = &decision.assignment;
    let where_key = if swap { "Where to be Used" } else { "Where to be Inserted" };
    let (transcript, a_d, module, choices) = if decision.skips_llm {
        let (Some(a), Some(m)) = (asg.address.clone(), asg.module.clone()) else {
            return Err(TransformError::Infeasible("no rule-sampled module".into()));
        };
        let choices = Choices {
            address: Some(Provenance::Rule),
            module: Some(Provenance::Rule),
        };
        (None, a, m, choices)
    } else {
        let mut transcript = turn1(tree, decision, ctx)?;
        let fixed = asg.address.clone();
        let keys: Vec<&str> = if fixed.is_some() {
            vec!["New Module Name to Use"]
        } else {
            vec!["New Module Name to Use", where_key]
        };
        let (a, m) = ask(&mut transcript, ctx, |reply| {
            let s = parse_structured(reply, &keys).map_err(|e| e.to_string())?;
            let m = parse_module(s.get("New Module Name to Use").unwrap_or_default(), &asg.candidate_modules)?;
            let a = match &fixed {
                Some(a) => a.clone(),
                None => parse_address(s.get(where_key).unwrap_or_default(), &asg.candidate_addresses)?,
            };
            let old = type_at(tree, &a).map_err(|e| e.to_string())?;
            if !arity_matches(ctx.db, &old, &m) {
                return Err(format!("`{m}` does not match the inputs and outputs of `{old}` at {a}"));
            }
            Ok((a, m))
        })?;
        let choices = Choices {
            address: Some(if fixed.is_some() { Provenance::Rule } else { Provenance::Llm }),
            module: Some(Provenance::Llm),
        };
        (Some(transcript), a, m, choices)
    };
    if !swap && containing_list_len(tree, &a_d).is_none() {
        return Err(ConfigError::NotAListPosition(a_d.to_string()).into());
    }
    ctx.db.require(&module)?;
    let old = type_at(tree, &a_d)?;
    let values = render_slots(
        &slots(vec![
            ("original_module_name", Slot::Module(old.clone())),
            ("original_module_code", Slot::Modules(vec![old.clone()])),
            ("used_parameters", Slot::Address(a_d.clone())),
            ("decided_module_name", Slot::Module(module.clone())),
            ("decided_module_code", Slot::Modules(vec![module.clone()])),
            ("decided_module_default_param", Slot::Module(module.clone())),
        ]),
        tree,
        ctx.db,
    )?;
    let text = fill(if swap { SWAP_TURN2 } else { INSERT_TURN2 }, &values)?;
    let mut transcript = follow_up(transcript, tree, ctx, text)?;
    let node = ask(&mut transcript, ctx, |reply| module_from_params(reply, &module, ctx.db))?;
    let digest = subtree_digest(&node);
    let (result, edit, summary) = if swap {
        let result = replace(tree, &a_d, node)?;
        let summary = format!("Change {old} at {a_d} into {module}");
        let edit = Edit::Replace {
            address: a_d,
            old_module: Some(old),
            new_module: module,
            digest,
        };
        (result, edit, summary)
    } else {
        let result = insert_list(tree, &a_d, node)?;
        let at = a_d.with_index(a_d.list_index().expect("list position") + 1).expect("list position");
        let summary = format!("Insert {module} at {at}");
        let edit = Edit::Insert {
            after: a_d,
            new_module: module,
            digest,
        };
        (result, edit, summary)
    };
    let t = record(decision, choices, vec![edit], summary);
    Ok(finish(result, t, transcript))
}

fn surrounding(tree: &ArchTree, a: &NodeAddress) -> Vec<(NodeAddress, String)> {
    let i = a.list_index().unwrap_or(0);
    let mut out = Vec::new();
    for j in [i.checked_sub(1), Some(i + 1)].into_iter().flatten() {
        if let Some(s) = a.with_index(j) {
            if let Ok(t) = type_at(tree, &s) {
                out.push((s, t));
            }
        }
    }
    out
}

pub fn apply_remove(tree: &ArchTree, decision: &Decision, ctx: &TrialContext<'_>) -> Result<Outcome, TransformError> {
    let asg = &decision.assignment;
    let (transcript, a_d, by) = if decision.skips_llm {
        let a = asg
            .address
            .clone()
            .ok_or_else(|| TransformError::Infeasible("no rule-sampled address".into()))?;
        (None, a, Provenance::Rule)
    } else {
        let mut transcript = turn1(tree, decision, ctx)?;
        let key = "Where to be Removed";
        let a = ask(&mut transcript, ctx, |reply| {
            let s = parse_structured(reply, &[key]).map_err(|e| e.to_string())?;
            parse_address(s.get(key).unwrap_or_default(), &asg.candidate_addresses)
        })?;
        (Some(transcript), a, Provenance::Llm)
    };
    let old = type_at(tree, &a_d)?;
    let around = surrounding(tree, &a_d);
    let known = |names: Vec<String>| -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for n in names {
            if ctx.db.contains(&n) && !out.contains(&n) {
                out.push(n);
            }
        }
        out
    };
    let values = render_slots(
        &slots(vec![
            ("decided_module_attribute", Slot::Address(a_d.clone())),
            (
                "surrounding_module_attributes",
                Slot::Addresses(around.iter().map(|(a, _)| a.clone()).collect()),
            ),
            ("decided_module_code", Slot::Modules(known(vec![old.clone()]))),
            (
                "surrounding_modules_code",
                Slot::Modules(known(around.iter().map(|(_, t)| t.clone()).collect())),
            ),
        ]),
        tree,
        ctx.db,
    )?;
    let text = fill(REMOVE_TURN2, &values)?;
    let mut transcript = follow_up(transcript, tree, ctx, text)?;
    let edit = Edit::Delete {
        address: a_d.clone(),
        old_module: Some(old.clone()),
    };
    let choices = Choices {
        address: Some(by),
        module: None,
    };
    let t = record(decision, choices, vec![edit], format!("Remove {old} at {a_d}"));
    let result = ask(&mut transcript, ctx, |reply| {
        let result = full_config(reply)?;
        let v = check_intend(tree, &result, &t);
        if v.ok {
            Ok(result)
        } else {
            Err(v.reason.unwrap_or_default())
        }
    })?;
    Ok(finish(result, t, transcript))
}

fn module_types(v: &ConfigValue) -> Vec<String> {
    let mut out = Vec::new();
    if let Ok(t) = ArchTree::new(v.as_node().cloned().unwrap_or_default()) {
        out = crate::config::attr(&t).into_iter().map(|(_, t)| t).collect();
    }
    out
}

pub fn apply_create(tree: &ArchTree, decision: &Decision, ctx: &TrialContext<'_>) -> Result<Outcome, TransformError> {
    let asg = &decision.assignment;
    let a_d = asg
        .address
        .clone()
        .ok_or_else(|| TransformError::Infeasible("no target address".into()))?;
    let old = type_at(tree, &a_d)?;
    let mut transcript = turn1(tree, decision, ctx)?;
    let mut followers: Vec<NodeAddress> = asg.merged.iter().skip(1).cloned().collect();
    followers.sort_by_key(|a| std::cmp::Reverse(a.list_index()));
    let edits_for = |sub: &ConfigValue| {
        let mut edits = vec![Edit::Replace {
            address: a_d.clone(),
            old_module: Some(old.clone()),
            new_module: sub.module_type().unwrap_or_default().to_string(),
            digest: subtree_digest(sub),
        }];
        for f in &followers {
            edits.push(Edit::Delete {
                address: f.clone(),
                old_module: type_at(tree, f).ok(),
            });
        }
        edits
    };
    let choices = Choices {
        address: Some(Provenance::Rule),
        module: Some(Provenance::Llm),
    };
    let (result, t) = ask(&mut transcript, ctx, |reply| {
        let sub = match parse_config_block(reply).map_err(|e| e.to_string())? {
            ParsedConfig::Sub(v @ ConfigValue::Node(_)) if v.module_type().is_some() => v,
            _ => return Err("expected a single `dict(type=...)` module configuration".into()),
        };
        let present = module_types(&sub);
        if let Some(missing) = asg.required_types.iter().find(|r| !present.contains(r)) {
            return Err(format!("the module must use `{missing}`"));
        }
        let mut frame = tree.clone();
        for f in &followers {
            frame = delete_list(&frame, f).map_err(|e| e.to_string())?;
        }
        let result = replace(&frame, &a_d, sub.clone()).map_err(|e| e.to_string())?;
        let t = record(decision, choices, edits_for(&sub), String::new());
        let v = check_intend(tree, &result, &t);
        if !v.ok {
            return Err(v.reason.unwrap_or_default());
        }
        Ok((result, t))
    })?;
    let new_type = t.new_module().unwrap_or_default().to_string();
    let mut t = t;
    t.summary = describe(&mut transcript, ctx, format!("Create {new_type} at {a_d}"));
    Ok(finish(result, t, transcript))
}

/// Addresses of leaves whose values differ, or of the container whose
/// shape differs.
pub fn leaf_diff(a: &ArchTree, b: &ArchTree) -> Vec<NodeAddress> {
    fn walk(x: &ConfigValue, y: &ConfigValue, at: NodeAddress, out: &mut Vec<NodeAddress>) {
        match (x, y) {
            (ConfigValue::Node(m), ConfigValue::Node(n)) => {
                let same_keys = m.keys().eq(n.keys());
                if !same_keys {
                    out.push(at);
                    return;
                }
                for ((k, v), (_, w)) in m.entries().iter().zip(n.entries()) {
                    walk(v, w, at.key(k.clone()), out);
                }
            }
            (ConfigValue::List(p), ConfigValue::List(q)) | (ConfigValue::Tuple(p), ConfigValue::Tuple(q))
                if p.len() == q.len() =>
            {
                for (i, (v, w)) in p.iter().zip(q).enumerate() {
                    walk(v, w, at.index(i), out);
                }
            }
            _ if x != y => out.push(at),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(
        &ConfigValue::Node(a.root().clone()),
        &ConfigValue::Node(b.root().clone()),
        NodeAddress::root(),
        &mut out,
    );
    out
}

pub fn apply_change_hparam(
    tree: &ArchTree,
    decision: &Decision,
    ctx: &TrialContext<'_>,
) -> Result<Outcome, TransformError> {
    let mut transcript = turn1(tree, decision, ctx)?;
    let choices = Choices::default();
    let probe = record(decision, choices, vec![Edit::Rewrite { digest: String::new() }], String::new());
    let result = ask(&mut transcript, ctx, |reply| {
        let result = full_config(reply)?;
        let v = check_intend(tree, &result, &probe);
        if v.ok {
            Ok(result)
        } else {
            Err(v.reason.unwrap_or_default())
        }
    })?;
    let edits = leaf_diff(tree, &result)
        .into_iter()
        .map(|address| Edit::SetLeaf { address })
        .collect();
    let summary = describe(&mut transcript, ctx, "Changed hyperparameters".to_string());
    let t = record(decision, choices, edits, summary);
    Ok(finish(result, t, transcript))
}

fn percent(x: f64) -> String {
    format!("{x:.2}")
}

pub fn apply_repeat<R: Rng + ?Sized>(
    tree: &ArchTree,
    sources: &[RepeatSource],
    ctx: &TrialContext<'_>,
    rng: &mut R,
) -> Result<Outcome, TransformError> {
    let src = sources.choose(rng).ok_or(TransformError::NoRepeatableHistory)?;
    let prev = &src.transformation;
    let intro = *REPEAT_INTRODUCTIONS.choose(rng).expect("non-empty");
    let restriction = *repeat_restrictions(prev.op).choose(rng).expect("non-empty");
    let body = REPEAT_BODY
        .replace("{INTRODUCTION}", intro)
        .replace("{RESTRICTION}", restriction);

    let location = prev.location().cloned().unwrap_or_else(NodeAddress::root);
    let random_location = attr_list(tree)
        .choose(rng)
        .map(|(a, _)| a.clone())
        .unwrap_or_else(NodeAddress::root);
    let mut relevant: Vec<String> = Vec::new();
    for m in [prev.new_module(), prev.old_module()].into_iter().flatten() {
        if ctx.db.contains(m) && !relevant.iter().any(|r| r == m) {
            relevant.push(m.to_string());
        }
    }
    let mut values = render_slots(
        &slots(vec![("relevant_source_code", Slot::Modules(relevant))]),
        tree,
        ctx.db,
    )?;
    let cfg = |t: &ArchTree| format!("\n{}\n", code_block(&t.to_text()));
    for (k, v) in [
        ("pre_pre_cfg", cfg(&src.parent)),
        ("pre_cfg", cfg(tree)),
        ("pre_transform", prev.summary.clone()),
        ("pre_pre_acc", percent(src.parent_metric)),
        ("pre_acc", percent(src.child_metric)),
        ("module_new", prev.new_module().unwrap_or("the new module").to_string()),
        ("module_pre", prev.old_module().unwrap_or("the removed module").to_string()),
        ("location", location.to_string()),
        ("random_location", random_location.to_string()),
    ] {
        values.insert(k.to_string(), v);
    }
    let values: BTreeMap<String, String> = values;
    let text = fill(&body, &values)?;
    let mut transcript = ChatTranscript::new();
    transcript.push_user(text);
    let decision = Decision {
        op: Operation::RepeatPrevious,
        cat: PromptCategory::RelyLLM,
        template: TemplateId {
            op: Operation::RepeatPrevious,
            cat: PromptCategory::RelyLLM,
            index: 0,
        },
        skips_llm: false,
        assignment: Default::default(),
    };
    let mut t = record(&decision, Choices::default(), vec![], String::new());
    t.repeated_op = Some(prev.op);
    let result = ask(&mut transcript, ctx, |reply| {
        let result = full_config(reply)?;
        let mut probe = t.clone();
        probe.edits = vec![Edit::Rewrite { digest: String::new() }];
        let v = check_intend(tree, &result, &probe);
        if v.ok {
            Ok(result)
        } else {
            Err(v.reason.unwrap_or_default())
        }
    })?;
    t.edits = vec![Edit::Rewrite {
        digest: subtree_digest(&ConfigValue::Node(result.root().clone())),
    }];
    t.summary = describe(&mut transcript, ctx, format!("Repeated: {}", prev.summary));
    Ok(finish(result, t, transcript))
}
