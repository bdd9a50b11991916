use std::fmt;

/// A value in the deploy-flow tree.
///
/// Dict-calls become [`ArchNode`]s. A node carrying a string `type` entry is a
/// module node; any other dict is an ordinary value whose children are still
/// walked when enumerating modules.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    None,
    Str(String),
    Tuple(Vec<ConfigValue>),
    List(Vec<ConfigValue>),
    Node(ArchNode),
}

impl ConfigValue {
    pub fn as_node(&self) -> Option<&ArchNode> {
        match self {
            ConfigValue::Node(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_node_mut(&mut self) -> Option<&mut ArchNode> {
        match self {
            ConfigValue::Node(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ConfigValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            ConfigValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Elements of a list or tuple.
    pub fn items(&self) -> Option<&[ConfigValue]> {
        match self {
            ConfigValue::List(v) | ConfigValue::Tuple(v) => Some(v),
            _ => None,
        }
    }

    /// Module name when this value is a module node.
    pub fn module_type(&self) -> Option<&str> {
        self.as_node().and_then(ArchNode::module_type)
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(
            self,
            ConfigValue::Node(_) | ConfigValue::List(_) | ConfigValue::Tuple(_)
        )
    }

    /// True if any string anywhere below (or at) this value equals `needle`.
    pub fn contains_str(&self, needle: &str) -> bool {
        match self {
            ConfigValue::Str(s) => s == needle,
            ConfigValue::List(v) | ConfigValue::Tuple(v) => v.iter().any(|x| x.contains_str(needle)),
            ConfigValue::Node(n) => n.entries().iter().any(|(_, x)| x.contains_str(needle)),
            _ => false,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ConfigValue::Int(_) => "int",
            ConfigValue::Float(_) => "float",
            ConfigValue::Bool(_) => "bool",
            ConfigValue::None => "None",
            ConfigValue::Str(_) => "str",
            ConfigValue::Tuple(_) => "tuple",
            ConfigValue::List(_) => "list",
            ConfigValue::Node(_) => "dict",
        }
    }
}

impl From<ArchNode> for ConfigValue {
    fn from(n: ArchNode) -> Self {
        ConfigValue::Node(n)
    }
}

impl From<i64> for ConfigValue {
    fn from(i: i64) -> Self {
        ConfigValue::Int(i)
    }
}

impl From<&str> for ConfigValue {
    fn from(s: &str) -> Self {
        ConfigValue::Str(s.to_string())
    }
}

impl fmt::Display for ConfigValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::render::render_inline(self))
    }
}

/// An ordered `key=value` mapping (a `dict(...)` call).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArchNode {
    entries: Vec<(String, ConfigValue)>,
}

impl ArchNode {
    pub fn new() -> Self {
        Self::default()
    }

    /// A module node with only its `type` entry.
    pub fn module(type_name: impl Into<String>) -> Self {
        let mut n = Self::new();
        n.insert("type", ConfigValue::Str(type_name.into()));
        n
    }

    /// Builder-style insert.
    pub fn with(mut self, key: impl Into<String>, value: impl Into<ConfigValue>) -> Self {
        self.insert(key, value.into());
        self
    }

    pub fn entries(&self) -> &[(String, ConfigValue)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&ConfigValue> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut ConfigValue> {
        self.entries
            .iter_mut()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.entries.iter().any(|(k, _)| k == key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Sets `key`, keeping its position if it already exists. Returns the old value.
    pub fn insert(&mut self, key: impl Into<String>, value: ConfigValue) -> Option<ConfigValue> {
        let key = key.into();
        if let Some(slot) = self.get_mut(&key) {
            return Some(std::mem::replace(slot, value));
        }
        self.entries.push((key, value));
        None
    }

    pub fn remove(&mut self, key: &str) -> Option<ConfigValue> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(pos).1)
    }

    /// The `type` string if this is a module node.
    pub fn module_type(&self) -> Option<&str> {
        match self.get("type") {
            Some(ConfigValue::Str(s)) if !s.is_empty() => Some(s),
            _ => None,
        }
    }

    pub fn is_module(&self) -> bool {
        self.module_type().is_some()
    }
}

/// A whole architecture: the module node bound to the top-level name `model`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchTree {
    root: ArchNode,
}

impl ArchTree {
    /// Fails if `root` is not a module node.
    pub fn new(root: ArchNode) -> Result<Self, super::ConfigError> {
        if !root.is_module() {
            return Err(super::ConfigError::RootNotModule);
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &ArchNode {
        &self.root
    }

    pub fn into_root(self) -> ArchNode {
        self.root
    }

    pub(crate) fn root_mut(&mut self) -> &mut ArchNode {
        &mut self.root
    }

    /// Canonical config text.
    pub fn to_text(&self) -> String {
        super::render::render_config(self)
    }
}
