use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The tree transformation operations, in the fixed order used for
/// tie-breaking and uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operation {
    ChangeHyperparameter,
    SwapModule,
    InsertModule,
    DeleteModule,
    CreateModule,
    RepeatPrevious,
}

impl Operation {
    pub const ALL: [Operation; 6] = [
        Operation::ChangeHyperparameter,
        Operation::SwapModule,
        Operation::InsertModule,
        Operation::DeleteModule,
        Operation::CreateModule,
        Operation::RepeatPrevious,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|o| *o == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            Operation::ChangeHyperparameter => "change_hyperparameter",
            Operation::SwapModule => "swap_module",
            Operation::InsertModule => "insert_module",
            Operation::DeleteModule => "delete_module",
            Operation::CreateModule => "create_module",
            Operation::RepeatPrevious => "repeat_previous",
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown operation `{s}`"))
    }
}

/// How much of the decision is left to the LLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptCategory {
    RelyLLM,
    InverseLLM,
    MinimumLLM,
}

impl PromptCategory {
    pub const ALL: [PromptCategory; 3] = [
        PromptCategory::RelyLLM,
        PromptCategory::InverseLLM,
        PromptCategory::MinimumLLM,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).expect("listed")
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptCategory::RelyLLM => "rely",
            PromptCategory::InverseLLM => "inverse",
            PromptCategory::MinimumLLM => "minimum",
        }
    }
}

impl fmt::Display for PromptCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
