mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treenas::config::{attr, attr_list, get_subtree, parse_config, ArchTree, NodeAddress};
use treenas::decision::*;
use treenas::feasibility::{check_exec, check_intend, check_static, Probe, SyntheticCost};
use treenas::miner::ModuleDb;
use treenas::prompt::*;
use treenas::transform::*;

fn addr(s: &str) -> NodeAddress {
    s.parse().unwrap()
}

fn layer(i: usize) -> NodeAddress {
    addr(&format!("model.backbone.layer_cfgs[{i}]"))
}

fn structured(pairs: &[(&str, &str)]) -> String {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    format!("Here is my answer.\n{FENCE}\n{}\n{FENCE}\n", body.join("\n"))
}

fn fenced(text: &str) -> String {
    format!("Sure.\n```python\n{text}\n```\n")
}

/// A decision for the first template of (op, cat) matching `pred`, with
/// placeholders drawn by rule and then adjusted by `edit`.
fn decision(
    op: Operation,
    cat: PromptCategory,
    tree: &ArchTree,
    db: &ModuleDb,
    pred: impl Fn(&PromptTemplate) -> bool,
    edit: impl FnOnce(&mut PlaceholderAssignment),
) -> Decision {
    let reg = TemplateRegistry::standard();
    let t = reg.family(op, cat).unwrap().iter().find(|t| pred(t)).expect("template");
    let mut assignment = fill_placeholders(t, tree, db, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    edit(&mut assignment);
    Decision {
        op,
        cat,
        template: t.id,
        skips_llm: t.skips_llm,
        assignment,
    }
}

fn run(tree: &ArchTree, d: &Decision, db: &ModuleDb, llm: &dyn LlmEndpoint) -> Result<Outcome, TransformError> {
    let reg = TemplateRegistry::standard();
    let ctx = TrialContext::new(db, &reg, llm);
    apply(tree, d, &ctx, &[], &mut ChaCha8Rng::seed_from_u64(0))
}

const MBCONV: &str = "dict(type='MBConvBlock', in_channels=16, out_channels=16, drop_path=0.1, act_cfg=dict(type='GELU'), expand_ratio=4)";

fn free_swap(tree: &ArchTree, db: &ModuleDb, op: Operation) -> Decision {
    decision(op, PromptCategory::RelyLLM, tree, db, |t| !t.skips_llm, |a| {
        a.address = None;
        a.candidate_addresses = vec![layer(1), layer(3), layer(4)];
        a.candidate_modules = vec!["MBConvBlock".into(), "FFN".into()];
    })
}

#[test]
fn scripted_swap_places_the_chosen_module() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let before = tree.to_text();
    let d = free_swap(&tree, &db, Operation::SwapModule);
    let llm = ScriptedLlm::new()
        .then(structured(&[("New Module Name to Use", "MBConvBlock"), ("Where to be Used", "model.backbone.layer_cfgs[3]")]))
        .then(fenced(MBCONV));
    let out = run(&tree, &d, &db, &llm).unwrap();
    assert_eq!(llm.remaining(), 0);
    assert_eq!(tree.to_text(), before);
    assert_eq!(get_subtree(&out.tree, &layer(3)).unwrap().module_type(), Some("MBConvBlock"));
    assert_eq!(attr_list(&out.tree).len(), attr_list(&tree).len());
    let t = &out.transformation;
    assert_eq!(t.summary, "Change BasicBlock at model.backbone.layer_cfgs[3] into MBConvBlock");
    assert_eq!(t.choices.address, Some(Provenance::Llm));
    assert_eq!(t.choices.module, Some(Provenance::Llm));
    assert!(check_intend(&tree, &out.tree, t).ok);
    assert!(check_static(&out.tree, &db).ok);
    assert_eq!(parse_config(&out.tree.to_text()).unwrap(), out.tree);
    // Keys follow the parameter order of the module record.
    let node = get_subtree(&out.tree, &layer(3)).unwrap();
    let keys: Vec<&str> = node.as_node().unwrap().keys().collect();
    assert_eq!(keys, ["type", "in_channels", "out_channels", "expand_ratio", "drop_path", "act_cfg"]);
}

#[test]
fn scripted_insert_grows_the_list() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = free_swap(&tree, &db, Operation::InsertModule);
    let llm = ScriptedLlm::new()
        .then(structured(&[("New Module Name to Use", "MBConvBlock"), ("Where to be Inserted", "model.backbone.layer_cfgs[3]")]))
        .then(fenced(MBCONV));
    let out = run(&tree, &d, &db, &llm).unwrap();
    let n = attr_list(&tree).len();
    assert_eq!(attr_list(&out.tree).len(), n + 1);
    assert_eq!(get_subtree(&out.tree, &layer(4)).unwrap().module_type(), Some("MBConvBlock"));
    assert_eq!(get_subtree(&out.tree, &layer(3)).unwrap(), get_subtree(&tree, &layer(3)).unwrap());
    assert_eq!(out.transformation.summary, "Insert MBConvBlock at model.backbone.layer_cfgs[4]");
    assert!(check_intend(&tree, &out.tree, &out.transformation).ok);
}

#[test]
fn insert_after_first_of_two() {
    let db = zoo_db();
    let tree = parse_config(
        "model = dict(type='SequentialWithConfig', module_cfgs=[dict(type='GELU'), dict(type='SiLU')])",
    )
    .unwrap();
    let d = decision(Operation::InsertModule, PromptCategory::MinimumLLM, &tree, &db, |t| t.skips_llm, |a| {
        a.address = Some(addr("model.module_cfgs[0]"));
        a.module = Some("ReLU".into());
    });
    let llm = ScriptedLlm::new().then(fenced("dict(type='ReLU', inplace=True)"));
    let out = run(&tree, &d, &db, &llm).unwrap();
    let types: Vec<String> = attr_list(&out.tree).into_iter().map(|(_, t)| t).collect();
    assert_eq!(types, ["GELU", "ReLU", "SiLU"]);
    assert_eq!(out.transformation.choices.module, Some(Provenance::Rule));
}

#[test]
fn incompatible_choice_is_rejected_then_corrected() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = free_swap(&tree, &db, Operation::SwapModule);
    let llm = ScriptedLlm::new()
        .then(structured(&[("New Module Name to Use", "Conv2d"), ("Where to be Used", "model.backbone.layer_cfgs[3]")]))
        .then(structured(&[("New Module Name to Use", "FFN"), ("Where to be Used", "model.backbone.layer_cfgs[9]")]))
        .then(structured(&[("New Module Name to Use", "MBConvBlock"), ("Where to be Used", "model.backbone.layer_cfgs[4]")]))
        .then(fenced(MBCONV));
    let out = run(&tree, &d, &db, &llm).unwrap();
    assert_eq!(get_subtree(&out.tree, &layer(4)).unwrap().module_type(), Some("MBConvBlock"));
    let corrections = out
        .transcript
        .messages()
        .iter()
        .filter(|m| m.role == Role::User && m.content.starts_with(CORRECTION_PREFIX))
        .count();
    assert_eq!(corrections, 2);
}

#[test]
fn persistent_malformed_replies_are_infeasible() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = free_swap(&tree, &db, Operation::SwapModule);
    let llm = ScriptedLlm::new().then("no idea").then("still none").then("really none").then("unused");
    let err = run(&tree, &d, &db, &llm).unwrap_err();
    assert!(matches!(err, TransformError::Infeasible(_)), "{err}");
    assert_eq!(llm.remaining(), 1, "one initial ask plus {MAX_RETRIES} retries");
}

#[test]
fn unresolved_parameters_are_infeasible() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = free_swap(&tree, &db, Operation::SwapModule);
    let choice = structured(&[("New Module Name to Use", "MBConvBlock"), ("Where to be Used", "model.backbone.layer_cfgs[3]")]);
    let todo = fenced("dict(type='MBConvBlock', in_channels=16, out_channels=16, expand_ratio=4, drop_path=0.1)");
    let llm = ScriptedLlm::new().then(choice).then(todo.clone()).then(todo.clone()).then(todo);
    let err = run(&tree, &d, &db, &llm).unwrap_err();
    assert!(matches!(err, TransformError::Infeasible(ref r) if r.contains("<TODO>")), "{err}");
}

#[test]
fn unknown_parameters_are_rejected() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = free_swap(&tree, &db, Operation::SwapModule);
    let choice = structured(&[("New Module Name to Use", "MBConvBlock"), ("Where to be Used", "model.backbone.layer_cfgs[3]")]);
    let bad = fenced(&format!("{}, width=3)", MBCONV.strip_suffix(')').unwrap()));
    let llm = ScriptedLlm::new().then(choice).then(bad.clone()).then(bad.clone()).then(bad);
    assert!(matches!(run(&tree, &d, &db, &llm), Err(TransformError::Infeasible(_))));
}

#[test]
fn skip_swap_still_asks_for_parameters() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = decision(Operation::SwapModule, PromptCategory::MinimumLLM, &tree, &db, |t| t.skips_llm, |a| {
        a.address = Some(layer(3));
        a.module = Some("MBConvBlock".into());
    });
    let llm = ScriptedLlm::new().then(fenced(MBCONV));
    let out = run(&tree, &d, &db, &llm).unwrap();
    assert_eq!(get_subtree(&out.tree, &layer(3)).unwrap().module_type(), Some("MBConvBlock"));
    assert_eq!(out.transformation.choices.address, Some(Provenance::Rule));
    let users: Vec<&ChatMessage> = out.transcript.messages().iter().filter(|m| m.role == Role::User).collect();
    assert_eq!(users.len(), 1);
    assert!(users[0].content.contains("Now, I want to ask how to replace"));
    assert!(users[0].content.contains(&tree.to_text()));
}

fn remove_decision(tree: &ArchTree, db: &ModuleDb) -> Decision {
    decision(Operation::DeleteModule, PromptCategory::RelyLLM, tree, db, |t| !t.skips_llm, |a| {
        a.address = None;
        a.candidate_addresses = vec![layer(2), layer(4)];
    })
}

#[test]
fn scripted_removal_drops_one_module() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let expected = treenas::config::delete_list(&tree, &layer(4)).unwrap();
    let d = remove_decision(&tree, &db);
    let llm = ScriptedLlm::new()
        .then(structured(&[("Where to be Removed", "model.backbone.layer_cfgs[4]")]))
        .then(fenced(&expected.to_text()));
    let out = run(&tree, &d, &db, &llm).unwrap();
    assert_eq!(attr(&out.tree).len(), attr(&tree).len() - 3);
    assert_eq!(attr_list(&out.tree).len(), attr_list(&tree).len() - 1);
    assert_eq!(out.transformation.summary, "Remove BasicBlock at model.backbone.layer_cfgs[4]");
    let turn2 = out.transcript.messages().iter().rev().find(|m| m.role == Role::User).unwrap();
    assert!(turn2.content.contains("model.backbone.layer_cfgs[3]"));
    assert!(turn2.content.contains("model.backbone.layer_cfgs[5]"));
}

#[test]
fn removal_reply_keeping_the_module_fails_intent() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = remove_decision(&tree, &db);
    let same = fenced(&tree.to_text());
    let llm = ScriptedLlm::new()
        .then(structured(&[("Where to be Removed", "model.backbone.layer_cfgs[2]")]))
        .then(same.clone())
        .then(same.clone())
        .then(same);
    assert!(matches!(run(&tree, &d, &db, &llm), Err(TransformError::Infeasible(_))));
}

#[test]
fn removing_the_only_element_leaves_an_empty_list() {
    let db = zoo_db();
    let tree = parse_config("model = dict(type='SequentialWithConfig', module_cfgs=[dict(type='GELU')])").unwrap();
    let d = decision(Operation::DeleteModule, PromptCategory::MinimumLLM, &tree, &db, |t| t.skips_llm, |a| {
        a.address = Some(addr("model.module_cfgs[0]"));
    });
    let llm = ScriptedLlm::new().then(fenced("model = dict(type='SequentialWithConfig', module_cfgs=[])"));
    let out = run(&tree, &d, &db, &llm).unwrap();
    assert!(attr_list(&out.tree).is_empty());
    assert_eq!(parse_config(&out.tree.to_text()).unwrap(), out.tree);
}

fn merge_decision(tree: &ArchTree, db: &ModuleDb, start: usize, n: usize, required: Vec<String>) -> Decision {
    decision(Operation::CreateModule, PromptCategory::RelyLLM, tree, db, |t| t.merges(), |a| {
        a.merged = (start..start + n).map(layer).collect();
        a.address = Some(layer(start));
        a.required_types = required;
    })
}

const COMPOSITE: &str = "dict(type='SequentialWithConfig', module_cfgs=[dict(type='GELU', approximate='none'), dict(type='SiLU', inplace=False)])";

#[test]
fn merge_two_replaces_a_pair() {
    let db = zoo_db();
    let tree = parse_config(
        "model = dict(type='SequentialWithConfig', module_cfgs=[\
         dict(type='GELU'), dict(type='SiLU'), dict(type='ReLU'), dict(type='Identity'), dict(type='Sigmoid'), dict(type='GELU')])",
    )
    .unwrap();
    let d = decision(Operation::CreateModule, PromptCategory::RelyLLM, &tree, &db, |t| t.merges(), |a| {
        a.merged = vec![addr("model.module_cfgs[3]"), addr("model.module_cfgs[4]")];
        a.address = Some(addr("model.module_cfgs[3]"));
        a.required_types.clear();
    });
    let llm = ScriptedLlm::new().then(fenced(COMPOSITE)).then("Merged two modules into a sequence.");
    let out = run(&tree, &d, &db, &llm).unwrap();
    let list = get_subtree(&out.tree, &addr("model.module_cfgs")).unwrap();
    assert_eq!(list.items().unwrap().len(), 5);
    assert_eq!(list.items().unwrap()[3].module_type(), Some("SequentialWithConfig"));
    assert_eq!(list.items().unwrap()[4].module_type(), Some("GELU"));
    // Six list elements minus two merged plus the composite's two children and itself.
    assert_eq!(attr_list(&out.tree).len(), 6 - 2 + 3);
    assert_eq!(out.transformation.summary, "Merged two modules into a sequence.");
    assert!(check_intend(&tree, &out.tree, &out.transformation).ok);
}

#[test]
fn missing_required_special_is_infeasible() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = merge_decision(&tree, &db, 3, 2, vec!["BasicBlock".into(), "ParallelWithConfig".into()]);
    let reply = fenced("dict(type='SequentialWithConfig', module_cfgs=[dict(type='BasicBlock', in_channels=16, out_channels=16)])");
    let llm = ScriptedLlm::new().then(reply.clone()).then(reply.clone()).then(reply);
    let err = run(&tree, &d, &db, &llm).unwrap_err();
    assert!(matches!(err, TransformError::Infeasible(ref r) if r.contains("ParallelWithConfig")), "{err}");
}

#[test]
fn replace_one_with_a_sequence() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let d = decision(Operation::CreateModule, PromptCategory::InverseLLM, &tree, &db, |t| !t.merges(), |a| {
        a.address = Some(layer(2));
        a.merged = vec![layer(2)];
        a.required_types.clear();
    });
    let llm = ScriptedLlm::new().then(fenced(COMPOSITE)).then("");
    let out = run(&tree, &d, &db, &llm).unwrap();
    assert_eq!(get_subtree(&out.tree, &layer(2)).unwrap().module_type(), Some("SequentialWithConfig"));
    assert!(check_static(&out.tree, &db).ok);
    assert_eq!(out.transformation.summary, "Create SequentialWithConfig at model.backbone.layer_cfgs[2]");
}

fn hparam_decision(tree: &ArchTree, db: &ModuleDb) -> Decision {
    decision(Operation::ChangeHyperparameter, PromptCategory::RelyLLM, tree, db, |_| true, |_| {})
}

#[test]
fn hparam_change_records_changed_leaves() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let changed = tree.to_text().replace("drop_path_rate=0.15", "drop_path_rate=0.05");
    let llm = ScriptedLlm::new().then(fenced(&changed)).then("Lowered the drop path rate of early blocks.");
    let out = run(&tree, &hparam_decision(&tree, &db), &db, &llm).unwrap();
    let touched: Vec<NodeAddress> = (3..=6).map(|i| layer(i).key("drop_path_rate")).collect();
    let edited: Vec<NodeAddress> = out
        .transformation
        .edits
        .iter()
        .map(|e| match e {
            Edit::SetLeaf { address } => address.clone(),
            other => panic!("{other:?}"),
        })
        .collect();
    assert_eq!(edited, touched);
    assert_eq!(leaf_diff(&tree, &out.tree), touched);
    assert_eq!(out.transformation.summary, "Lowered the drop path rate of early blocks.");
}

#[test]
fn hparam_change_of_a_type_or_nothing_fails() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let retyped = fenced(&tree.to_text().replacen("type='SwishMe'", "type='HardSwishMe'", 1));
    let llm = ScriptedLlm::new().then(retyped.clone()).then(retyped.clone()).then(retyped);
    assert!(matches!(run(&tree, &hparam_decision(&tree, &db), &db, &llm), Err(TransformError::Infeasible(_))));
    let same = fenced(&tree.to_text());
    let llm = ScriptedLlm::new().then(same.clone()).then(same.clone()).then(same);
    assert!(matches!(run(&tree, &hparam_decision(&tree, &db), &db, &llm), Err(TransformError::Infeasible(_))));
}

fn swap_source(db: &ModuleDb) -> RepeatSource {
    let parent = reference_config("cifar10");
    let d = decision(Operation::SwapModule, PromptCategory::MinimumLLM, &parent, db, |t| t.skips_llm, |a| {
        a.address = Some(layer(3));
        a.module = Some("MBConvBlock".into());
    });
    let out = run(&parent, &d, db, &ScriptedLlm::new().then(fenced(MBCONV))).unwrap();
    RepeatSource {
        parent,
        parent_metric: 71.5,
        child_metric: 72.25,
        transformation: out.transformation,
    }
}

fn repeat(tree: &ArchTree, db: &ModuleDb, sources: &[RepeatSource], llm: &dyn LlmEndpoint, seed: u64) -> Result<Outcome, TransformError> {
    let reg = TemplateRegistry::standard();
    let ctx = TrialContext::new(db, &reg, llm);
    apply_repeat(tree, sources, &ctx, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn repeat_needs_history() {
    let db = zoo_db();
    let tree = reference_config("cifar10");
    let err = repeat(&tree, &db, &[], &ScriptedLlm::new(), 0).unwrap_err();
    assert!(matches!(err, TransformError::NoRepeatableHistory));
}

#[test]
fn repeat_of_a_swap_uses_a_swap_restriction() {
    let db = zoo_db();
    let src = swap_source(&db);
    let tree = src.parent.clone();
    let base = replace_at(&tree, 3, MBCONV);
    let improved = replace_at(&base, 4, MBCONV);
    let restrictions = repeat_restrictions(Operation::SwapModule);
    assert_eq!(restrictions.len(), 4);
    let mut seen = std::collections::BTreeSet::new();
    let mut with_accuracy = 0;
    for seed in 0..40 {
        let llm = ScriptedLlm::new().then(fenced(&improved.to_text())).then("Swapped another block.");
        let out = repeat(&base, &db, std::slice::from_ref(&src), &llm, seed).unwrap();
        let prompt = out.transcript.first_user().unwrap();
        let hits: Vec<usize> = (0..4)
            .filter(|&i| {
                let r = restrictions[i]
                    .replace("{module_new}", "MBConvBlock")
                    .replace("{module_pre}", "BasicBlock")
                    .replace("{location}", "model.backbone.layer_cfgs[3]");
                prompt.contains(r.split("{random_location}").next().unwrap())
            })
            .collect();
        assert_eq!(hits.len(), 1, "{prompt}");
        seen.insert(hits[0]);
        if prompt.contains("72.25") {
            assert!(prompt.contains("71.50"));
            with_accuracy += 1;
        }
        assert!(unresolved(prompt).is_empty());
        assert_eq!(out.transformation.repeated_op, Some(Operation::SwapModule));
        assert_eq!(out.transformation.op, Operation::RepeatPrevious);
        assert!(check_intend(&base, &out.tree, &out.transformation).ok);
    }
    assert_eq!(seen.len(), 4);
    assert!(with_accuracy > 0);
}

#[test]
fn repeat_reply_equal_to_base_fails() {
    let db = zoo_db();
    let src = swap_source(&db);
    let base = replace_at(&src.parent, 3, MBCONV);
    let same = fenced(&base.to_text());
    let llm = ScriptedLlm::new().then(same.clone()).then(same.clone()).then(same);
    assert!(matches!(repeat(&base, &db, &[src], &llm, 0), Err(TransformError::Infeasible(_))));
}

fn replace_at(tree: &ArchTree, i: usize, module: &str) -> ArchTree {
    treenas::config::replace(tree, &layer(i), treenas::config::parse_expr(module).unwrap()).unwrap()
}

/// Wraps the synthetic model and sometimes damages its replies.
struct Faulty {
    inner: SyntheticLlm,
    calls: AtomicUsize,
    every: usize,
}

impl LlmEndpoint for Faulty {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let n = self.calls.fetch_add(1, Ordering::Relaxed);
        let reply = self.inner.complete(messages)?;
        if self.every == 0 || !n.is_multiple_of(self.every) {
            return Ok(reply);
        }
        Ok(match (n / self.every) % 4 {
            0 => "I am not sure.".to_string(),
            1 => reply.replace("type='", "type='Unknown"),
            2 => reply.replace(FENCE, ""),
            _ => reply.replace("```", ""),
        })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_loop_successes_pass_intent(seed in any::<u64>(), which in 0usize..3, every in 0usize..4) {
        let db = zoo_db();
        let reg = TemplateRegistry::standard();
        let llm = Faulty { inner: SyntheticLlm::new(seed), calls: AtomicUsize::new(0), every };
        let mut ctx = TrialContext::new(&db, &reg, &llm);
        ctx.history_block = EMPTY_HISTORY.to_string();
        let state = BanditState::new(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tree = reference_config(CONFIG_FIXTURES[which]);
        let mut sources: Vec<RepeatSource> = Vec::new();
        for step in 0..4 {
            let d = match sample_decision(&state, &reg, &tree, &db, &mut rng) {
                Ok(d) => d,
                Err(DecisionError::NoCandidates(_)) => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let before = tree.to_text();
            match apply(&tree, &d, &ctx, &sources, &mut rng) {
                Ok(out) => {
                    prop_assert_eq!(tree.to_text(), before.clone());
                    let v = check_intend(&tree, &out.tree, &out.transformation);
                    prop_assert!(v.ok, "{:?} {:?}", d.op, v.reason);
                    prop_assert_eq!(&parse_config(&out.tree.to_text()).unwrap(), &out.tree);
                    if every == 0 {
                        let v = check_exec(&out.tree, &db, Probe::Static(&SyntheticCost));
                        prop_assert!(v.ok, "{:?} {:?}", d.op, v.reason);
                    }
                    prop_assert_eq!(out.transformation.transcript_digest.clone(), out.transcript.digest());
                    sources.push(RepeatSource {
                        parent: tree.clone(),
                        parent_metric: step as f64,
                        child_metric: step as f64 + 1.0,
                        transformation: out.transformation,
                    });
                    tree = out.tree;
                }
                Err(TransformError::Infeasible(_) | TransformError::NoRepeatableHistory) => {}
                Err(e) => prop_assert!(every > 0, "{:?}: {}", d.op, e),
            }
        }
    }

    #[test]
    fn transcripts_are_reproducible(seed in any::<u64>()) {
        let db = zoo_db();
        let reg = TemplateRegistry::standard();
        let tree = reference_config("cifar100");
        let go = || {
            let llm = SyntheticLlm::new(seed);
            let ctx = TrialContext::new(&db, &reg, &llm);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = loop {
                if let Ok(d) = sample_decision(&BanditState::new(1.0), &reg, &tree, &db, &mut rng) {
                    break d;
                }
            };
            apply(&tree, &d, &ctx, &[], &mut rng).map(|o| (o.transcript, o.tree.to_text())).map_err(|e| e.to_string())
        };
        prop_assert_eq!(go(), go());
    }
}
