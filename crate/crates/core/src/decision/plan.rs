use std::collections::{BTreeMap, HashMap};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DecisionError, Operation, PromptCategory};
use crate::config::{
    attr, containing_list_len, get_subtree, render_inline, render_value, ArchNode, ArchTree, ConfigValue,
    NodeAddress,
};
use crate::miner::ModuleDb;
use crate::prompt::{code_block, PromptTemplate};

pub const ADDRESS_SAMPLE: usize = 5;
pub const MODULE_SAMPLE: usize = 8;
pub const CUSTOM_SAMPLE: usize = 4;
pub const PRIMITIVE_SAMPLE: usize = 8;
pub const MERGE_SIZES: [usize; 2] = [2, 3];

/// The value bound to one placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Address(NodeAddress),
    Addresses(Vec<NodeAddress>),
    Module(String),
    Modules(Vec<String>),
    Literal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Rule,
    Llm,
}

/// Rule-sampled bindings for one template, plus the structured choices the
/// transformation needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlaceholderAssignment {
    pub slots: BTreeMap<String, Slot>,
    /// Target address when already fixed by rule.
    pub address: Option<NodeAddress>,
    /// New module when already fixed by rule.
    pub module: Option<String>,
    pub candidate_addresses: Vec<NodeAddress>,
    pub candidate_modules: Vec<String>,
    /// Consecutive list elements replaced by a created module.
    pub merged: Vec<NodeAddress>,
    /// Types a created module must contain.
    pub required_types: Vec<String>,
}

impl PlaceholderAssignment {
    pub fn covers(&self, template: &PromptTemplate) -> bool {
        template.required_placeholders.iter().all(|n| self.slots.contains_key(n))
    }

    fn set(&mut self, name: &str, slot: Slot) {
        self.slots.insert(name.to_string(), slot);
    }
}

fn sample_sorted<T: Clone, R: Rng + ?Sized>(items: &[T], k: usize, rng: &mut R) -> Vec<T> {
    let mut idx = index::sample(rng, items.len(), k.min(items.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

fn dedup(names: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

/// Module addresses other than the root whose types the database knows.
pub fn resolvable_modules(tree: &ArchTree, db: &ModuleDb) -> Vec<(NodeAddress, String)> {
    attr(tree)
        .into_iter()
        .filter(|(a, t)| !a.is_root() && db.contains(t))
        .collect()
}

/// Resolvable modules that sit directly inside a list.
pub fn list_modules(tree: &ArchTree, db: &ModuleDb) -> Vec<(NodeAddress, String)> {
    resolvable_modules(tree, db)
        .into_iter()
        .filter(|(a, _)| containing_list_len(tree, a).is_some())
        .collect()
}

/// Modules with at least one arity-compatible replacement.
fn with_compatible(
    modules: Vec<(NodeAddress, String)>,
    db: &ModuleDb,
) -> Result<Vec<(NodeAddress, String)>, DecisionError> {
    let mut cache: HashMap<String, bool> = HashMap::new();
    let mut out = Vec::new();
    for (a, t) in modules {
        let ok = match cache.get(&t) {
            Some(ok) => *ok,
            None => {
                let ok = !db.retrieve_compatible(&[t.as_str()])?.is_empty();
                cache.insert(t.clone(), ok);
                ok
            }
        };
        if ok {
            out.push((a, t));
        }
    }
    Ok(out)
}

fn no_candidates(what: &str) -> DecisionError {
    DecisionError::NoCandidates(what.to_string())
}

pub fn primitives(db: &ModuleDb) -> Vec<String> {
    db.records()
        .iter()
        .filter(|r| r.origin.starts_with("torch."))
        .map(|r| r.name.clone())
        .collect()
}

pub fn fill_placeholders<R: Rng + ?Sized>(
    template: &PromptTemplate,
    tree: &ArchTree,
    db: &ModuleDb,
    rng: &mut R,
) -> Result<PlaceholderAssignment, DecisionError> {
    let mut asg = PlaceholderAssignment::default();
    let minimum = template.id.cat == PromptCategory::MinimumLLM;
    match template.id.op {
        Operation::ChangeHyperparameter | Operation::RepeatPrevious => {}
        op @ (Operation::SwapModule | Operation::InsertModule) => {
            let pool = if op == Operation::SwapModule {
                resolvable_modules(tree, db)
            } else {
                list_modules(tree, db)
            };
            let pool = with_compatible(pool, db)?;
            if pool.is_empty() {
                return Err(no_candidates("no replaceable module"));
            }
            if minimum {
                let (a_d, m_d) = pool.choose(rng).expect("non-empty").clone();
                let compatible = db.retrieve_compatible(&[m_d.as_str()])?;
                asg.address = Some(a_d.clone());
                if template.skips_llm {
                    asg.module = compatible.choose(rng).cloned();
                    asg.candidate_modules = compatible;
                } else {
                    let cands = sample_sorted(&compatible, MODULE_SAMPLE, rng);
                    asg.set("decided_module_attribute", Slot::Address(a_d.clone()));
                    asg.set("candidate_module_codes", Slot::Modules(cands.clone()));
                    asg.set("candidate_module_names", Slot::Modules(cands.clone()));
                    asg.candidate_modules = cands;
                }
                asg.candidate_addresses = vec![a_d];
            } else {
                let sampled = if template.requires("sampled_module_attributes") {
                    sample_sorted(&pool, ADDRESS_SAMPLE, rng)
                } else {
                    pool
                };
                let types: Vec<&str> = sampled.iter().map(|(_, t)| t.as_str()).collect();
                let compatible = db.retrieve_compatible(&types)?;
                if compatible.is_empty() {
                    return Err(no_candidates("no compatible module"));
                }
                let cands = sample_sorted(&compatible, MODULE_SAMPLE, rng);
                let addrs: Vec<NodeAddress> = sampled.into_iter().map(|(a, _)| a).collect();
                for name in ["sampled_module_attributes", "all_module_attributes"] {
                    if template.requires(name) {
                        asg.set(name, Slot::Addresses(addrs.clone()));
                    }
                }
                asg.set("candidate_module_codes", Slot::Modules(cands.clone()));
                asg.set("candidate_module_names", Slot::Modules(cands.clone()));
                asg.candidate_addresses = addrs;
                asg.candidate_modules = cands;
            }
        }
        Operation::DeleteModule => {
            let pool = list_modules(tree, db);
            if pool.is_empty() {
                return Err(no_candidates("no list element to remove"));
            }
            if template.skips_llm {
                let (a_d, _) = pool.choose(rng).expect("non-empty").clone();
                asg.address = Some(a_d.clone());
                asg.candidate_addresses = vec![a_d];
            } else {
                let sampled = sample_sorted(&pool, ADDRESS_SAMPLE, rng);
                let types = dedup(sampled.iter().map(|(_, t)| t.clone()));
                let addrs: Vec<NodeAddress> = sampled.into_iter().map(|(a, _)| a).collect();
                asg.set("sampled_module_attributes", Slot::Addresses(addrs.clone()));
                asg.set("candidate_module_codes", Slot::Modules(types));
                asg.candidate_addresses = addrs;
            }
        }
        Operation::CreateModule => fill_create(template, tree, db, rng, &mut asg)?,
    }
    debug_assert!(
        template.id.op == Operation::RepeatPrevious || asg.covers(template),
        "{} not covered",
        template.id
    );
    Ok(asg)
}

/// Start positions of `n` consecutive resolvable module list elements.
pub fn merge_starts(tree: &ArchTree, db: &ModuleDb, n: usize) -> Vec<(NodeAddress, Vec<(NodeAddress, String)>)> {
    let listed = list_modules(tree, db);
    let types: HashMap<&NodeAddress, &String> = listed.iter().map(|(a, t)| (a, t)).collect();
    let mut out = Vec::new();
    for (a, _) in &listed {
        let start = a.list_index().expect("list element");
        let run: Option<Vec<(NodeAddress, String)>> = (start..start + n)
            .map(|i| {
                let addr = a.with_index(i)?;
                let t = types.get(&addr)?;
                Some((addr, (*t).clone()))
            })
            .collect();
        if let Some(run) = run {
            out.push((a.clone(), run));
        }
    }
    out
}

fn fill_create<R: Rng + ?Sized>(
    template: &PromptTemplate,
    tree: &ArchTree,
    db: &ModuleDb,
    rng: &mut R,
    asg: &mut PlaceholderAssignment,
) -> Result<(), DecisionError> {
    let members: Vec<(NodeAddress, String)> = if template.merges() {
        let n = *MERGE_SIZES.choose(rng).expect("non-empty");
        let starts = merge_starts(tree, db, n);
        let (a_d, run) = starts
            .choose(rng)
            .ok_or_else(|| no_candidates("no consecutive modules to merge"))?
            .clone();
        let addrs: Vec<NodeAddress> = run.iter().map(|(a, _)| a.clone()).collect();
        asg.set("num", Slot::Literal(n.to_string()));
        asg.set("decided_sequential_attributes", Slot::Addresses(addrs.clone()));
        asg.set("used_parameters", Slot::Addresses(addrs.clone()));
        asg.address = Some(a_d);
        asg.merged = addrs;
        run
    } else {
        let pool = resolvable_modules(tree, db);
        let (a_d, m_d) = pool
            .choose(rng)
            .ok_or_else(|| no_candidates("no module to replace"))?
            .clone();
        asg.set("decided_module_attribute", Slot::Address(a_d.clone()));
        asg.set("used_parameters", Slot::Address(a_d.clone()));
        asg.address = Some(a_d.clone());
        asg.merged = vec![a_d.clone()];
        vec![(a_d, m_d)]
    };
    let originals = dedup(members.iter().map(|(_, t)| t.clone()));
    asg.set("original_module_code", Slot::Modules(originals.clone()));

    let prims = primitives(db);
    let prims = if template.id.cat == PromptCategory::RelyLLM {
        prims
    } else {
        sample_sorted(&prims, PRIMITIVE_SAMPLE, rng)
    };
    asg.set("pytorch_modules_dict", Slot::Modules(prims));
    let specials: Vec<String> = db.specials().iter().map(|r| r.name.clone()).collect();
    asg.set("special_modules_code", Slot::Modules(specials.clone()));

    if template.requires("custom_modules_code") {
        let custom: Vec<String> = db
            .records()
            .iter()
            .filter(|r| !r.origin.starts_with("torch.") && !originals.contains(&r.name))
            .map(|r| r.name.clone())
            .collect();
        let custom = sample_sorted(&custom, CUSTOM_SAMPLE, rng);
        asg.candidate_modules = custom.clone();
        asg.set("custom_modules_code", Slot::Modules(custom));
    }
    if template.requires("random_special_module_name") {
        let m_d = members[0].1.clone();
        let special = specials.choose(rng).expect("specials exist").clone();
        asg.set("original_module_name", Slot::Module(m_d.clone()));
        asg.set("random_special_module_name", Slot::Module(special.clone()));
        asg.required_types = vec![m_d, special];
    }
    asg.candidate_addresses = members.into_iter().map(|(a, _)| a).collect();
    Ok(())
}

/// `[a, b, c]` without quotes.
pub fn render_list<T: ToString>(items: &[T]) -> String {
    let parts: Vec<String> = items.iter().map(T::to_string).collect();
    format!("[{}]", parts.join(", "))
}

/// Default `__init__` parameters of `name` as a `dict(...)` call.
pub fn defaults_dict(db: &ModuleDb, name: &str) -> Result<ConfigValue, DecisionError> {
    let mut node = ArchNode::new();
    for p in db.get_default(name)? {
        node.insert(p.name.clone(), p.default.to_value());
    }
    Ok(ConfigValue::Node(node))
}

fn modules_code(db: &ModuleDb, names: &[String]) -> Result<String, DecisionError> {
    if names.is_empty() {
        return Ok("(none)".to_string());
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Ok(code_block(&db.get_code(&refs)?))
}

fn subtrees(tree: &ArchTree, addrs: &[NodeAddress]) -> Result<ConfigValue, DecisionError> {
    let items = addrs
        .iter()
        .map(|a| get_subtree(tree, a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConfigValue::List(items))
}

/// Text for one bound placeholder.
pub fn render_slot(name: &str, slot: &Slot, tree: &ArchTree, db: &ModuleDb) -> Result<String, DecisionError> {
    Ok(match (name, slot) {
        ("pytorch_modules_dict", Slot::Modules(names)) => {
            let mut lines = Vec::new();
            for n in names {
                let mut node = ArchNode::module(n.clone());
                for p in db.get_default(n)? {
                    node.insert(p.name.clone(), p.default.to_value());
                }
                lines.push(render_inline(&ConfigValue::Node(node)));
            }
            format!("\n{}", code_block(&lines.join("\n")))
        }
        ("used_parameters", Slot::Address(a)) => {
            format!("\n{}", code_block(&render_value(&get_subtree(tree, a)?)))
        }
        ("used_parameters", Slot::Addresses(a)) => format!("\n{}", code_block(&render_value(&subtrees(tree, a)?))),
        ("decided_module_default_param", Slot::Module(m)) => {
            format!("\n{}", code_block(&render_inline(&defaults_dict(db, m)?)))
        }
        (n, Slot::Modules(names)) if n.ends_with("_code") || n.ends_with("_codes") => {
            let code = modules_code(db, names)?;
            if matches!(n, "original_module_code" | "special_modules_code" | "custom_modules_code") {
                format!("\n{code}")
            } else {
                code
            }
        }
        (n, Slot::Module(m)) if n.ends_with("_code") => modules_code(db, std::slice::from_ref(m))?,
        (_, Slot::Address(a)) => a.to_string(),
        (_, Slot::Addresses(a)) => render_list(a),
        (_, Slot::Module(m)) => m.clone(),
        (_, Slot::Modules(m)) => render_list(m),
        (_, Slot::Literal(s)) => s.clone(),
    })
}

pub fn render_slots(
    slots: &BTreeMap<String, Slot>,
    tree: &ArchTree,
    db: &ModuleDb,
) -> Result<BTreeMap<String, String>, DecisionError> {
    slots
        .iter()
        .map(|(n, s)| Ok((n.clone(), render_slot(n, s, tree, db)?)))
        .collect()
}
