//! Crafted (base, result, transformation) triples with their expected verdicts.

use treenas::config::{attr, get_subtree, insert_list, delete_list, replace, ArchNode, ArchTree, ConfigValue, NodeAddress};
use treenas::decision::{categories_of, Operation, PlaceholderAssignment};
use treenas::prompt::TemplateId;
use treenas::transform::{Edit, Transformation};

pub struct IntentCase {
    pub name: &'static str,
    pub base: ArchTree,
    pub result: ArchTree,
    pub t: Transformation,
    pub expect: bool,
}

pub fn tx(op: Operation, edits: Vec<Edit>) -> Transformation {
    let cat = categories_of(op)[0];
    Transformation {
        op,
        cat,
        template: TemplateId { op, cat, index: 0 },
        assignment: PlaceholderAssignment::default(),
        choices: Default::default(),
        edits,
        transcript_digest: String::new(),
        summary: String::new(),
        repeated_op: None,
    }
}

pub fn layer(i: usize) -> NodeAddress {
    format!("model.backbone.layer_cfgs[{i}]").parse().unwrap()
}

fn type_at(t: &ArchTree, a: &NodeAddress) -> String {
    get_subtree(t, a).unwrap().module_type().unwrap().to_string()
}

fn node(v: ArchNode) -> ConfigValue {
    ConfigValue::Node(v)
}

fn replace_edit(a: &NodeAddress, new: &str) -> Edit {
    Edit::Replace {
        address: a.clone(),
        old_module: None,
        new_module: new.into(),
        digest: String::new(),
    }
}

fn delete_edit(a: &NodeAddress) -> Edit {
    Edit::Delete {
        address: a.clone(),
        old_module: None,
    }
}

fn first_int_leaf(t: &ArchTree, under: &NodeAddress) -> (NodeAddress, i64) {
    let n = get_subtree(t, under).unwrap();
    let node = n.as_node().unwrap();
    node.entries()
        .iter()
        .find_map(|(k, v)| v.as_int().map(|i| (under.key(k.clone()), i)))
        .expect("layer has an integer parameter")
}

/// Bumps the first integer parameter of the module at `a`.
fn bump(t: &ArchTree, a: &NodeAddress) -> ArchTree {
    let (leaf, v) = first_int_leaf(t, a);
    replace(t, &leaf, ConfigValue::Int(v + 1)).unwrap()
}

pub fn intent_cases(base: &ArchTree) -> Vec<IntentCase> {
    let b = base.clone();
    let (l2, l3, l5) = (layer(2), layer(3), layer(5));
    let new_mod = node(ArchNode::module("Identity"));
    let swapped = replace(&b, &l2, new_mod.clone()).unwrap();
    let inserted = insert_list(&b, &l2, new_mod.clone()).unwrap();
    let deleted = delete_list(&b, &l3).unwrap();
    // A layer whose type differs from layer 3, so deleting it is distinguishable.
    let other = (4..40)
        .map(layer)
        .find(|a| get_subtree(&b, a).is_ok() && type_at(&b, a) != type_at(&b, &l3))
        .expect("a layer of another type");
    let hparam = bump(&b, &layer(0));
    let hparam_and_type = replace(&hparam, &l5, new_mod.clone()).unwrap();
    let l2_sub = get_subtree(&b, &l2).unwrap();
    let l3_sub = get_subtree(&b, &l3).unwrap();
    let parallel = ArchNode::module("ParallelWithConfig")
        .with("module_cfg1", l2_sub.clone())
        .with("module_cfg2", ArchNode::module("Identity"))
        .with("merge_operation", "add");
    let created = replace(&b, &l2, node(parallel)).unwrap();
    let seq = ArchNode::module("SequentialWithConfig").with("module_cfgs", ConfigValue::List(vec![l2_sub.clone(), l3_sub]));
    let merged = replace(&delete_list(&b, &l3).unwrap(), &l2, node(seq)).unwrap();
    let l2_type = type_at(&b, &l2);

    let mut create = tx(Operation::CreateModule, vec![replace_edit(&l2, "ParallelWithConfig")]);
    create.assignment.required_types = vec![l2_type.clone(), "ParallelWithConfig".into()];
    let mut merge = tx(Operation::CreateModule, vec![replace_edit(&l2, "SequentialWithConfig"), delete_edit(&l3)]);
    merge.assignment.merged = vec![l2.clone(), l3.clone()];
    let mut missing = create.clone();
    missing.assignment.required_types = vec!["BottleneckAttn".into()];

    let case = |name, result: &ArchTree, t, expect| IntentCase {
        name,
        base: b.clone(),
        result: result.clone(),
        t,
        expect,
    };
    vec![
        case("swap_valid", &swapped, tx(Operation::SwapModule, vec![replace_edit(&l2, "Identity")]), true),
        case("swap_identity_result", &b, tx(Operation::SwapModule, vec![replace_edit(&l2, "Identity")]), false),
        case("swap_with_stray_change", &bump(&swapped, &layer(0)), tx(Operation::SwapModule, vec![replace_edit(&l2, "Identity")]), false),
        case(
            "insert_valid",
            &inserted,
            tx(Operation::InsertModule, vec![Edit::Insert { after: l2.clone(), new_module: "Identity".into(), digest: String::new() }]),
            true,
        ),
        case(
            "insert_wrong_position",
            &insert_list(&b, &layer(4), new_mod.clone()).unwrap(),
            tx(Operation::InsertModule, vec![Edit::Insert { after: l2.clone(), new_module: "Identity".into(), digest: String::new() }]),
            false,
        ),
        case(
            "insert_wrong_type",
            &insert_list(&b, &l2, node(ArchNode::module("ReLU"))).unwrap(),
            tx(Operation::InsertModule, vec![Edit::Insert { after: l2.clone(), new_module: "Identity".into(), digest: String::new() }]),
            false,
        ),
        case("delete_valid", &deleted, tx(Operation::DeleteModule, vec![delete_edit(&l3)]), true),
        case("delete_other_position", &delete_list(&b, &other).unwrap(), tx(Operation::DeleteModule, vec![delete_edit(&l3)]), false),
        case("delete_nothing_removed", &bump(&b, &l3), tx(Operation::DeleteModule, vec![delete_edit(&l3)]), false),
        case("hparam_valid", &hparam, tx(Operation::ChangeHyperparameter, vec![]), true),
        case("hparam_type_changed", &hparam_and_type, tx(Operation::ChangeHyperparameter, vec![]), false),
        case("hparam_identity_result", &b, tx(Operation::ChangeHyperparameter, vec![]), false),
        case("create_parallel_valid", &created, create.clone(), true),
        case("create_merge_valid", &merged, merge, true),
        case("create_missing_required_type", &created, missing, false),
        case("create_unchanged_target", &hparam, create, false),
        case("repeat_valid", &swapped, tx(Operation::RepeatPrevious, vec![Edit::Rewrite { digest: String::new() }]), true),
        case("repeat_identity_result", &b, tx(Operation::RepeatPrevious, vec![Edit::Rewrite { digest: String::new() }]), false),
    ]
}

/// All (address, type) pairs, for quick structural comparisons.
pub fn type_pairs(t: &ArchTree) -> Vec<(NodeAddress, String)> {
    attr(t)
}
