//! Structural queries and persistent edits over an [`ArchTree`].
//!
//! Every edit clones the tree; inputs are never mutated.

use super::address::{NodeAddress, Segment};
use super::value::{ArchNode, ArchTree, ConfigValue};
use super::ConfigError;

/// Every module node with its address, depth-first in document order,
/// including the root.
pub fn attr(tree: &ArchTree) -> Vec<(NodeAddress, String)> {
    let mut out = Vec::new();
    let root = NodeAddress::root();
    if let Some(t) = tree.root().module_type() {
        out.push((root.clone(), t.to_string()));
    }
    walk_node(tree.root(), &root, &mut out);
    out
}

fn walk_node(node: &ArchNode, at: &NodeAddress, out: &mut Vec<(NodeAddress, String)>) {
    for (k, v) in node.entries() {
        walk_value(v, &at.key(k.clone()), out);
    }
}

fn walk_value(value: &ConfigValue, at: &NodeAddress, out: &mut Vec<(NodeAddress, String)>) {
    match value {
        ConfigValue::Node(n) => {
            if let Some(t) = n.module_type() {
                out.push((at.clone(), t.to_string()));
            }
            walk_node(n, at, out);
        }
        ConfigValue::List(items) | ConfigValue::Tuple(items) => {
            for (i, item) in items.iter().enumerate() {
                walk_value(item, &at.index(i), out);
            }
        }
        _ => {}
    }
}

/// The module attributes that sit directly at list positions.
pub fn attr_list(tree: &ArchTree) -> Vec<(NodeAddress, String)> {
    attr(tree)
        .into_iter()
        .filter(|(a, _)| a.list_index().is_some())
        .collect()
}

fn bad(addr: &NodeAddress) -> ConfigError {
    ConfigError::BadAddress(addr.to_string())
}

fn lookup<'a>(tree: &'a ArchTree, addr: &NodeAddress) -> Result<&'a ConfigValue, ConfigError> {
    let mut cur: Option<&ConfigValue> = None;
    for seg in &addr.segments()[1..] {
        let next = match (cur, seg) {
            (None, Segment::Key(k)) => tree.root().get(k),
            (None, Segment::Index(_)) => None,
            (Some(ConfigValue::Node(n)), Segment::Key(k)) => n.get(k),
            (Some(v), Segment::Index(i)) => v.items().and_then(|items| items.get(*i)),
            _ => None,
        };
        cur = Some(next.ok_or_else(|| bad(addr))?);
    }
    cur.ok_or_else(|| bad(addr))
}

fn lookup_mut<'a>(
    root: &'a mut ArchNode,
    segments: &[Segment],
    addr: &NodeAddress,
) -> Result<&'a mut ConfigValue, ConfigError> {
    let (first, rest) = segments.split_first().ok_or_else(|| bad(addr))?;
    let mut cur = match first {
        Segment::Key(k) => root.get_mut(k).ok_or_else(|| bad(addr))?,
        Segment::Index(_) => return Err(bad(addr)),
    };
    for seg in rest {
        cur = match (cur, seg) {
            (ConfigValue::Node(n), Segment::Key(k)) => n.get_mut(k).ok_or_else(|| bad(addr))?,
            (ConfigValue::List(v), Segment::Index(i)) | (ConfigValue::Tuple(v), Segment::Index(i)) => {
                v.get_mut(*i).ok_or_else(|| bad(addr))?
            }
            _ => return Err(bad(addr)),
        };
    }
    Ok(cur)
}

/// The value at `addr`. The root address yields the whole root node.
pub fn get_subtree(tree: &ArchTree, addr: &NodeAddress) -> Result<ConfigValue, ConfigError> {
    if addr.is_root() {
        return Ok(ConfigValue::Node(tree.root().clone()));
    }
    lookup(tree, addr).cloned()
}

/// A copy of `tree` with the value at `addr` replaced by `sub`.
pub fn replace(tree: &ArchTree, addr: &NodeAddress, sub: ConfigValue) -> Result<ArchTree, ConfigError> {
    if addr.is_root() {
        return match sub {
            ConfigValue::Node(n) => ArchTree::new(n),
            _ => Err(ConfigError::RootNotModule),
        };
    }
    let mut out = tree.clone();
    let slot = lookup_mut(out.root_mut(), &addr.segments()[1..], addr)?;
    *slot = sub;
    Ok(out)
}

fn list_slot<'a>(
    tree: &'a mut ArchTree,
    addr: &NodeAddress,
) -> Result<(&'a mut Vec<ConfigValue>, usize), ConfigError> {
    let index = addr
        .list_index()
        .ok_or_else(|| ConfigError::NotAListPosition(addr.to_string()))?;
    let parent = addr.parent().ok_or_else(|| bad(addr))?;
    if parent.is_root() {
        return Err(ConfigError::NotAListPosition(addr.to_string()));
    }
    match lookup_mut(tree.root_mut(), &parent.segments()[1..], addr)? {
        ConfigValue::List(v) => Ok((v, index)),
        _ => Err(ConfigError::NotAListPosition(addr.to_string())),
    }
}

/// Removes the list element at `addr`; later siblings shift down by one.
pub fn delete_list(tree: &ArchTree, addr: &NodeAddress) -> Result<ArchTree, ConfigError> {
    let mut out = tree.clone();
    let (list, i) = list_slot(&mut out, addr)?;
    if i >= list.len() {
        return Err(bad(addr));
    }
    list.remove(i);
    Ok(out)
}

/// Inserts `sub` immediately after the list element at `addr`.
pub fn insert_list(tree: &ArchTree, addr: &NodeAddress, sub: ConfigValue) -> Result<ArchTree, ConfigError> {
    let mut out = tree.clone();
    let (list, i) = list_slot(&mut out, addr)?;
    if i >= list.len() {
        return Err(bad(addr));
    }
    list.insert(i + 1, sub);
    Ok(out)
}

/// Length of the list that contains `addr`.
pub fn containing_list_len(tree: &ArchTree, addr: &NodeAddress) -> Option<usize> {
    addr.list_index()?;
    let parent = addr.parent()?;
    if parent.is_root() {
        return None;
    }
    match lookup(tree, &parent).ok()? {
        ConfigValue::List(v) => Some(v.len()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn tree() -> ArchTree {
        parse_config(
            "model = dict(type='M', backbone=dict(type='B', layers=[dict(type='A', c=1), dict(type='C')]), opts=dict(x=1))",
        )
        .unwrap()
    }

    fn addr(s: &str) -> NodeAddress {
        s.parse().unwrap()
    }

    #[test]
    fn attr_in_document_order() {
        let got: Vec<String> = attr(&tree())
            .into_iter()
            .map(|(a, t)| format!("{a}={t}"))
            .collect();
        assert_eq!(
            got,
            [
                "model=M",
                "model.backbone=B",
                "model.backbone.layers[0]=A",
                "model.backbone.layers[1]=C"
            ]
        );
        assert_eq!(attr_list(&tree()).len(), 2);
        let single = parse_config("model = dict(type='ImageClassifier')").unwrap();
        assert_eq!(attr(&single), vec![(NodeAddress::root(), "ImageClassifier".to_string())]);
        assert!(attr_list(&single).is_empty());
    }

    #[test]
    fn subtree_lookup() {
        let t = tree();
        assert_eq!(get_subtree(&t, &NodeAddress::root()).unwrap(), ConfigValue::Node(t.root().clone()));
        assert_eq!(
            get_subtree(&t, &addr("model.backbone.layers[0].c")).unwrap(),
            ConfigValue::Int(1)
        );
        for bad in ["model.backbone.layers[2]", "model.nope", "model.opts[0]", "model.backbone.layers.x"] {
            assert!(matches!(get_subtree(&t, &addr(bad)), Err(ConfigError::BadAddress(_))), "{bad}");
        }
    }

    #[test]
    fn replace_is_persistent() {
        let t = tree();
        let a = addr("model.backbone.layers[1]");
        let new = ConfigValue::Node(ArchNode::module("D"));
        let out = replace(&t, &a, new.clone()).unwrap();
        assert_eq!(get_subtree(&out, &a).unwrap(), new);
        assert_eq!(get_subtree(&t, &a).unwrap().module_type(), Some("C"));
        let same = replace(&t, &a, get_subtree(&t, &a).unwrap()).unwrap();
        assert_eq!(same, t);
        let swapped = replace(&t, &NodeAddress::root(), ConfigValue::Node(ArchNode::module("Z"))).unwrap();
        assert_eq!(swapped.root().module_type(), Some("Z"));
        assert!(replace(&t, &NodeAddress::root(), ConfigValue::Int(1)).is_err());
    }

    #[test]
    fn list_edits() {
        let t = tree();
        let a0 = addr("model.backbone.layers[0]");
        let ins = insert_list(&t, &a0, ConfigValue::Node(ArchNode::module("N"))).unwrap();
        assert_eq!(containing_list_len(&ins, &a0), Some(3));
        assert_eq!(get_subtree(&ins, &addr("model.backbone.layers[1]")).unwrap().module_type(), Some("N"));
        assert_eq!(get_subtree(&ins, &addr("model.backbone.layers[2]")).unwrap().module_type(), Some("C"));
        let back = delete_list(&ins, &addr("model.backbone.layers[1]")).unwrap();
        assert_eq!(back, t);
        let del = delete_list(&t, &a0).unwrap();
        assert_eq!(containing_list_len(&del, &a0), Some(1));
        assert!(matches!(
            delete_list(&t, &addr("model.backbone")),
            Err(ConfigError::NotAListPosition(_))
        ));
        assert!(matches!(
            insert_list(&t, &addr("model.backbone.layers[5]"), ConfigValue::None),
            Err(ConfigError::BadAddress(_))
        ));
    }

    #[test]
    fn delete_last_element_leaves_empty_list() {
        let t = parse_config("model = dict(type='M', layers=[dict(type='A')])").unwrap();
        let out = delete_list(&t, &addr("model.layers[0]")).unwrap();
        assert_eq!(out.root().get("layers"), Some(&ConfigValue::List(vec![])));
        assert_eq!(parse_config(&out.to_text()).unwrap(), out);
    }
}
