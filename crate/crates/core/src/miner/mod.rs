//! Static module mining and the module database.

mod db;
mod extract;

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::config::{parse_expr, render_inline, ConfigValue};

pub use db::{build_db, mine_paths, origin_for_path, ModuleDb, DB_VERSION};
pub use extract::{mine_source, mine_with_context, MineContext, DEFAULT_BASE_NAMES};

pub const TODO_MARKER: &str = "<TODO>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleRecord {
    pub name: String,
    pub origin: String,
    pub params: Vec<Param>,
    pub in_arity: usize,
    pub out_arity: usize,
    pub source: String,
}

impl ModuleRecord {
    pub fn arity(&self) -> (usize, usize) {
        (self.in_arity, self.out_arity)
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub default: ParamDefault,
}

/// A constructor default: a literal, or the TODO marker when the source
/// default was missing or not a literal.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamDefault {
    Todo,
    Value(ConfigValue),
}

impl ParamDefault {
    /// The value placed into a config tree; TODO becomes the marker string.
    pub fn to_value(&self) -> ConfigValue {
        match self {
            ParamDefault::Todo => ConfigValue::Str(TODO_MARKER.to_string()),
            ParamDefault::Value(v) => v.clone(),
        }
    }
}

// Serialized as a string: the marker itself, or the literal in config syntax.
impl Serialize for ParamDefault {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ParamDefault::Todo => serializer.serialize_str(TODO_MARKER),
            ParamDefault::Value(v) => serializer.serialize_str(&render_inline(v)),
        }
    }
}

impl<'de> Deserialize<'de> for ParamDefault {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == TODO_MARKER {
            return Ok(ParamDefault::Todo);
        }
        parse_expr(&s)
            .map(ParamDefault::Value)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("{origin}:{line}:{col}: {message}")]
    Parse {
        origin: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("module database: {0}")]
    Format(String),
}
