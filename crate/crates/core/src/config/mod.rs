//! The deploy-flow architecture tree: values, addresses, the config-text
//! grammar, and the structural tools built on top of them.

mod address;
mod edit;
mod parse;
mod render;
mod value;

use thiserror::Error;

pub use address::{NodeAddress, Segment};
pub use edit::{attr, attr_list, containing_list_len, delete_list, get_subtree, insert_list, replace};
pub use parse::{parse_config, parse_expr, parse_expr_prefix};
pub use render::{python_float_repr, render_config, render_inline, render_value};
pub use value::{ArchNode, ArchTree, ConfigValue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("duplicate key at {0}")]
    DuplicateKey(String),
    #[error("no `model` assignment found")]
    MissingModel,
    #[error("the model root must be a dict with a string `type`")]
    RootNotModule,
    #[error("no node at address {0}")]
    BadAddress(String),
    #[error("{0} is not a position inside a list")]
    NotAListPosition(String),
}
