//! Executability, budget and intent checks for a transformed tree.

use serde::{Deserialize, Serialize};

use crate::config::{
    attr, delete_list, get_subtree, parse_config, render_config, replace, ArchNode, ArchTree, ConfigValue,
    NodeAddress,
};
use crate::decision::Operation;
use crate::evolution::{EvalError, EvalRequest, EvalResponse, Evaluator};
use crate::miner::{ModuleDb, TODO_MARKER};
use crate::transform::{Edit, Transformation};

pub const MERGE_OPERATIONS: [&str; 3] = ["add", "mul", "concat"];
const PARAM_CAP: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_params: u64,
    pub max_flops: u64,
}

impl Budget {
    pub fn new(max_params: u64, max_flops: u64) -> Self {
        assert!(max_params > 0 && max_flops > 0, "budgets are positive");
        Self { max_params, max_flops }
    }

    pub fn admits(&self, m: Measured) -> bool {
        m.params <= self.max_params && m.flops <= self.max_flops
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measured {
    pub params: u64,
    pub flops: u64,
}

pub trait CostModel: Send + Sync {
    fn measure(&self, tree: &ArchTree) -> Measured;
}

/// Every module node costs one plus its integer parameters, each clamped to
/// `0..=1_000_000`; FLOPs are a hundred per parameter.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticCost;

fn node_cost(node: &ArchNode) -> u64 {
    let own: u64 = if node.is_module() {
        1 + node
            .entries()
            .iter()
            .filter_map(|(_, v)| match v {
                ConfigValue::Int(i) => Some((*i).clamp(0, PARAM_CAP) as u64),
                _ => None,
            })
            .sum::<u64>()
    } else {
        0
    };
    own + node.entries().iter().map(|(_, v)| value_cost(v)).sum::<u64>()
}

fn value_cost(v: &ConfigValue) -> u64 {
    match v {
        ConfigValue::Node(n) => node_cost(n),
        ConfigValue::List(items) | ConfigValue::Tuple(items) => items.iter().map(value_cost).sum(),
        _ => 0,
    }
}

impl CostModel for SyntheticCost {
    fn measure(&self, tree: &ArchTree) -> Measured {
        let params = node_cost(tree.root());
        Measured {
            params,
            flops: params * 100,
        }
    }
}

/// Where executability and cost numbers come from.
#[derive(Clone, Copy)]
pub enum Probe<'a> {
    Static(&'a dyn CostModel),
    DryRun {
        evaluator: &'a dyn Evaluator,
        input_shape: &'a [usize],
        seed: u64,
    },
}

impl Probe<'_> {
    fn dry_run(&self, tree: &ArchTree) -> Option<Result<EvalResponse, EvalError>> {
        match self {
            Probe::Static(_) => None,
            Probe::DryRun {
                evaluator,
                input_shape,
                seed,
            } => Some(evaluator.evaluate(&EvalRequest::dry_run(tree.to_text(), input_shape, *seed))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Verdict {
    pub fn pass() -> Self {
        Self { ok: true, reason: None }
    }

    pub fn fail(reason: impl Into<String>) -> Self {
        Self {
            ok: false,
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstVerdict {
    pub ok: bool,
    pub measured: Option<Measured>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub exec: Verdict,
    pub constraint: ConstVerdict,
    pub intend: Verdict,
}

impl FeasibilityReport {
    pub fn overall(&self) -> bool {
        self.exec.ok && self.constraint.ok && self.intend.ok
    }

    pub fn first_failure(&self) -> Option<String> {
        [&self.exec.reason, &self.constraint.reason, &self.intend.reason]
            .into_iter()
            .flatten()
            .next()
            .cloned()
    }
}

fn check_node(node: &ArchNode, at: &NodeAddress, db: &ModuleDb) -> Result<(), String> {
    if let Some(t) = node.module_type() {
        let rec = db.get(t).ok_or_else(|| format!("unknown module `{t}` at {at}"))?;
        for k in node.keys().filter(|k| *k != "type") {
            if !rec.has_param(k) {
                return Err(format!("`{t}` at {at} has no parameter `{k}`"));
            }
        }
        match t {
            "ParallelWithConfig" => {
                for branch in ["module_cfg1", "module_cfg2"] {
                    if node.get(branch).and_then(ConfigValue::module_type).is_none() {
                        return Err(format!("ParallelWithConfig at {at} lacks module `{branch}`"));
                    }
                }
                if let Some(op) = node.get("merge_operation") {
                    if !op.as_str().is_some_and(|s| MERGE_OPERATIONS.contains(&s)) {
                        return Err(format!("unsupported merge_operation at {at}"));
                    }
                }
            }
            "SequentialWithConfig" | "NAS_Backbone" => {
                let key = if t == "NAS_Backbone" { "layer_cfgs" } else { "module_cfgs" };
                let ok = node
                    .get(key)
                    .and_then(ConfigValue::items)
                    .is_some_and(|items| items.iter().all(|i| i.module_type().is_some()));
                if !ok {
                    return Err(format!("`{t}` at {at} needs `{key}` as a list of modules"));
                }
            }
            _ => {}
        }
    }
    for (k, v) in node.entries() {
        check_value(v, &at.key(k.clone()), db)?;
    }
    Ok(())
}

fn check_value(v: &ConfigValue, at: &NodeAddress, db: &ModuleDb) -> Result<(), String> {
    match v {
        ConfigValue::Node(n) => check_node(n, at, db),
        ConfigValue::List(items) | ConfigValue::Tuple(items) => items
            .iter()
            .enumerate()
            .try_for_each(|(i, x)| check_value(x, &at.index(i), db)),
        ConfigValue::Str(s) if s == TODO_MARKER => Err(format!("unresolved {TODO_MARKER} at {at}")),
        _ => Ok(()),
    }
}

/// The static part of the executability check.
pub fn check_static(tree: &ArchTree, db: &ModuleDb) -> Verdict {
    match parse_config(&render_config(tree)) {
        Ok(back) if back == *tree => {}
        Ok(_) => return Verdict::fail("config does not survive a render/parse round trip"),
        Err(e) => return Verdict::fail(format!("rendered config does not parse: {e}")),
    }
    match check_node(tree.root(), &NodeAddress::root(), db) {
        Ok(()) => Verdict::pass(),
        Err(reason) => Verdict::fail(reason),
    }
}

fn dry_run_verdict(resp: &Result<EvalResponse, EvalError>) -> Verdict {
    match resp {
        Ok(r) if r.ok => Verdict::pass(),
        Ok(r) => Verdict::fail(format!(
            "dry run failed: {}",
            r.error.as_deref().unwrap_or("unknown error")
        )),
        Err(e) => Verdict::fail(e.to_string()),
    }
}

pub fn check_exec(tree: &ArchTree, db: &ModuleDb, probe: Probe<'_>) -> Verdict {
    let v = check_static(tree, db);
    if !v.ok {
        return v;
    }
    probe.dry_run(tree).map(|r| dry_run_verdict(&r)).unwrap_or(v)
}

fn const_from(m: Measured, budget: Budget) -> ConstVerdict {
    let ok = budget.admits(m);
    ConstVerdict {
        ok,
        measured: Some(m),
        reason: (!ok).then(|| {
            format!(
                "over budget: {} params / {} flops (limits {} / {})",
                m.params, m.flops, budget.max_params, budget.max_flops
            )
        }),
    }
}

pub fn check_const(tree: &ArchTree, budget: Budget, probe: Probe<'_>) -> Result<ConstVerdict, EvalError> {
    match probe {
        Probe::Static(cost) => Ok(const_from(cost.measure(tree), budget)),
        _ => {
            let resp = probe.dry_run(tree).expect("dry-run probe")?;
            Ok(measured_from(&resp, budget))
        }
    }
}

fn measured_from(resp: &EvalResponse, budget: Budget) -> ConstVerdict {
    if !resp.ok {
        return ConstVerdict {
            ok: false,
            measured: None,
            reason: Some("not measurable: dry run failed".into()),
        };
    }
    const_from(
        Measured {
            params: resp.params,
            flops: resp.flops,
        },
        budget,
    )
}

fn types(tree: &ArchTree) -> Vec<(NodeAddress, String)> {
    attr(tree)
}

fn module_types_in(v: &ConfigValue) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(v: &ConfigValue, out: &mut Vec<String>) {
        match v {
            ConfigValue::Node(n) => {
                if let Some(t) = n.module_type() {
                    out.push(t.to_string());
                }
                n.entries().iter().for_each(|(_, x)| walk(x, out));
            }
            ConfigValue::List(items) | ConfigValue::Tuple(items) => items.iter().for_each(|x| walk(x, out)),
            _ => {}
        }
    }
    walk(v, &mut out);
    out
}

fn intend(base: &ArchTree, result: &ArchTree, t: &Transformation) -> Result<(), String> {
    if result == base {
        return Err("result is identical to the base".into());
    }
    let needs_edit = !matches!(t.op, Operation::ChangeHyperparameter | Operation::RepeatPrevious);
    let first = match t.edits.first() {
        Some(e) => e,
        None if needs_edit => return Err("transformation has no edits".into()),
        None => &Edit::Rewrite { digest: String::new() },
    };
    match (t.op, first) {
        (Operation::SwapModule, Edit::Replace { address, new_module, .. }) => {
            let sub = get_subtree(result, address).map_err(|e| e.to_string())?;
            if sub.module_type() != Some(new_module.as_str()) {
                return Err(format!("{address} is not a `{new_module}`"));
            }
            let expected = replace(base, address, sub).map_err(|e| e.to_string())?;
            if expected != *result {
                return Err("tree changed outside the swapped module".into());
            }
        }
        (Operation::InsertModule, Edit::Insert { after, new_module, .. }) => {
            let i = after.list_index().ok_or("insert anchor is not a list position")?;
            let new_at = after.with_index(i + 1).expect("list position");
            let sub = get_subtree(result, &new_at).map_err(|e| e.to_string())?;
            if sub.module_type() != Some(new_module.as_str()) {
                return Err(format!("{new_at} is not a `{new_module}`"));
            }
            let back = delete_list(result, &new_at).map_err(|e| e.to_string())?;
            if back != *base {
                return Err("tree changed outside the inserted module".into());
            }
        }
        (Operation::DeleteModule, Edit::Delete { address, .. }) => {
            let expected = delete_list(base, address).map_err(|e| e.to_string())?;
            if types(&expected) != types(result) {
                return Err(format!("module structure does not match removing {address}"));
            }
        }
        (Operation::ChangeHyperparameter, _) => {
            if types(base) != types(result) {
                return Err("module types or positions changed".into());
            }
        }
        (Operation::CreateModule, Edit::Replace { address, .. }) => {
            let new = get_subtree(result, address).map_err(|e| e.to_string())?;
            if new.module_type().is_none() {
                return Err(format!("{address} is not a module"));
            }
            if get_subtree(base, address).ok().as_ref() == Some(&new) {
                return Err(format!("{address} is unchanged"));
            }
            let present = module_types_in(&new);
            if let Some(missing) = t.assignment.required_types.iter().find(|r| !present.contains(r)) {
                return Err(format!("created module does not use `{missing}`"));
            }
            let mut frame = base.clone();
            let mut followers: Vec<&NodeAddress> = t.assignment.merged.iter().skip(1).collect();
            followers.sort_by_key(|a| std::cmp::Reverse(a.list_index()));
            for a in followers {
                frame = delete_list(&frame, a).map_err(|e| e.to_string())?;
            }
            let expected = replace(&frame, address, new).map_err(|e| e.to_string())?;
            if expected != *result {
                return Err("tree changed outside the created module".into());
            }
        }
        (Operation::RepeatPrevious, _) => {
            if parse_config(&render_config(result)).ok().as_ref() != Some(result) {
                return Err("result does not round-trip".into());
            }
        }
        (op, e) => return Err(format!("edit {e:?} does not fit {op}")),
    }
    Ok(())
}

pub fn check_intend(base: &ArchTree, result: &ArchTree, t: &Transformation) -> Verdict {
    match intend(base, result, t) {
        Ok(()) => Verdict::pass(),
        Err(reason) => Verdict::fail(reason),
    }
}

/// All three checks, sharing one dry run when an evaluator is configured.
pub fn assess(
    base: &ArchTree,
    result: &ArchTree,
    t: &Transformation,
    db: &ModuleDb,
    budget: Budget,
    probe: Probe<'_>,
) -> Result<FeasibilityReport, EvalError> {
    let intend = check_intend(base, result, t);
    let exec = check_static(result, db);
    if !exec.ok {
        return Ok(FeasibilityReport {
            exec,
            constraint: ConstVerdict {
                ok: false,
                measured: None,
                reason: None,
            },
            intend,
        });
    }
    let (exec, constraint) = match probe {
        Probe::Static(cost) => (exec, const_from(cost.measure(result), budget)),
        _ => {
            let resp = probe.dry_run(result).expect("dry-run probe");
            if let Err(e @ EvalError::Unavailable(_)) = &resp {
                return Err(e.clone());
            }
            let exec = dry_run_verdict(&resp);
            let constraint = match &resp {
                Ok(r) => measured_from(r, budget),
                Err(e) => ConstVerdict {
                    ok: false,
                    measured: None,
                    reason: Some(e.to_string()),
                },
            };
            (exec, constraint)
        }
    };
    Ok(FeasibilityReport {
        exec,
        constraint,
        intend,
    })
}
