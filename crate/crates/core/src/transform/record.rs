use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{render_value, ConfigValue, NodeAddress};
use crate::decision::{Operation, PlaceholderAssignment, PromptCategory, Provenance};
use crate::prompt::TemplateId;

/// Short content digest of a sub-tree.
pub fn subtree_digest(value: &ConfigValue) -> String {
    let h = Sha256::digest(render_value(value).as_bytes());
    hex::encode(&h[..8])
}

/// One structural change made by a transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Edit {
    Replace {
        address: NodeAddress,
        old_module: Option<String>,
        new_module: String,
        digest: String,
    },
    Insert {
        after: NodeAddress,
        new_module: String,
        digest: String,
    },
    Delete {
        address: NodeAddress,
        old_module: Option<String>,
    },
    SetLeaf {
        address: NodeAddress,
    },
    Rewrite {
        digest: String,
    },
}

/// Who fixed the target address and the new module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Choices {
    pub address: Option<Provenance>,
    pub module: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformation {
    pub op: Operation,
    pub cat: PromptCategory,
    pub template: TemplateId,
    pub assignment: PlaceholderAssignment,
    pub choices: Choices,
    pub edits: Vec<Edit>,
    pub transcript_digest: String,
    pub summary: String,
    /// Operation of the history entry being repeated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeated_op: Option<Operation>,
}

impl Transformation {
    /// First edited address, if the change is localized.
    pub fn location(&self) -> Option<&NodeAddress> {
        self.edits.iter().find_map(|e| match e {
            Edit::Replace { address, .. } | Edit::Delete { address, .. } | Edit::SetLeaf { address } => Some(address),
            Edit::Insert { after, .. } => Some(after),
            Edit::Rewrite { .. } => None,
        })
    }

    pub fn new_module(&self) -> Option<&str> {
        self.edits.iter().find_map(|e| match e {
            Edit::Replace { new_module, .. } | Edit::Insert { new_module, .. } => Some(new_module.as_str()),
            _ => None,
        })
    }

    pub fn old_module(&self) -> Option<&str> {
        self.edits.iter().find_map(|e| match e {
            Edit::Replace { old_module, .. } | Edit::Delete { old_module, .. } => old_module.as_deref(),
            _ => None,
        })
    }
}
