//! The prompt template registry and placeholder filling.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::decision::{Operation, PromptCategory};

/// Identifies one template inside its (operation, category) family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateId {
    pub op: Operation,
    pub cat: PromptCategory,
    pub index: usize,
}

impl std::fmt::Display for TemplateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.op, self.cat, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    pub skips_llm: bool,
}

impl PromptTemplate {
    fn new(op: Operation, cat: PromptCategory, index: usize, body: String) -> Self {
        let required_placeholders = placeholders(&body);
        Self {
            id: TemplateId { op, cat, index },
            body,
            required_placeholders,
            skips_llm: false,
        }
    }

    fn skip(op: Operation, cat: PromptCategory, index: usize) -> Self {
        Self {
            id: TemplateId { op, cat, index },
            body: String::new(),
            required_placeholders: BTreeSet::new(),
            skips_llm: true,
        }
    }

    pub fn requires(&self, name: &str) -> bool {
        self.required_placeholders.contains(name)
    }

    /// Address candidates are a 5-element sample rather than every address.
    pub fn restricted(&self) -> bool {
        match self.id.op {
            Operation::CreateModule => !self.requires("custom_modules_code"),
            _ => self.requires("sampled_module_attributes") || self.skips_llm,
        }
    }

    /// Create templates that merge consecutive list elements.
    pub fn merges(&self) -> bool {
        self.requires("decided_sequential_attributes")
    }

    pub fn fill(&self, values: &BTreeMap<String, String>) -> Result<String, PromptError> {
        fill(&self.body, values)
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Every `{name}` occurrence in `text`, in order, with byte spans.
pub(crate) fn placeholder_spans(text: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(open) = text[from..].find('{').map(|i| i + from) {
        let Some(close) = text[open + 1..].find(['}', '{']).map(|i| i + open + 1) else {
            break;
        };
        if text.as_bytes()[close] == b'{' {
            from = close;
            continue;
        }
        let name = &text[open + 1..close];
        if is_ident(name) {
            out.push((open, close + 1, name));
        }
        from = close + 1;
    }
    out
}

pub fn placeholders(text: &str) -> BTreeSet<String> {
    placeholder_spans(text)
        .into_iter()
        .map(|(_, _, n)| n.to_string())
        .collect()
}

/// Substitutes every `{name}` in one pass; substituted text is not rescanned.
pub fn fill(template: &str, values: &BTreeMap<String, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for (start, end, name) in placeholder_spans(template) {
        let value = values
            .get(name)
            .ok_or_else(|| PromptError::UnresolvedPlaceholder(name.to_string()))?;
        out.push_str(&template[last..start]);
        out.push_str(value);
        last = end;
    }
    out.push_str(&template[last..]);
    Ok(out)
}

pub const SYSTEM_PROMPT: &str = "You are a helpful assistant to create a Python-based config file of the MMPretrain. Your mission is to create an innovative model architecture which outperforms previous works. Take account the information you will be provided and create a great model config. Don't talk about dataloader, augmentation, optimizer, and learning rate. You just need to create the model config. You are not allowed to use pretrained weight.";

pub const TURN1: &str = "Please improve the config: {pre_cfg}

Below is a summary of previous experiments. Analyze what could improve performance and consider what to do next.

------
# Previous experiments
{HISTORY}

Tips for utilizing previous experiments:
- Reverting to previous modules/hyperparameters is not interesting because we already know the performance of the previous model. Do not do that!
- Changing the same positions repeatedly is inefficient. Extract the essence and apply it to other positions.
- We want an innovative model, so trying new things that have never been done is important.
------

{OPERATION_PROMPT}
";

pub const SUMMARY_REQUEST: &str = "Please describe the transformation in short one sentence.";

const HPARAM_RELY: [&str; 4] = [
    "changing a few hyperparameters in the config",
    "changing some important hyperparameters in the config",
    "changing hyperparameters that are likely to affect model performance",
    "modifying hyperparameters which you think weird in the config",
];

const HPARAM_INVERSE: [&str; 3] = [
    "changing hyperparameters that have not been changed until now",
    "changing hyperparameters to values not tried before",
    "changing hyperparameters to unexpected values",
];

const HPARAM_MINIMUM: [&str; 14] = [
    "slightly increasing the channel width of some layers",
    "slightly decreasing the channel width of some layers",
    "slightly increasing the channel width of the initial layers",
    "slightly decreasing the channel width of the initial layers",
    "slightly increasing the channel width of the middle layers",
    "slightly decreasing the channel width of the middle layers",
    "slightly increasing the channel width of the final layers",
    "slightly decreasing the channel width of the final layers",
    "changing some boolean hyperparameters in the config",
    "changing some float hyperparameters in the config",
    "changing some integer hyperparameters in the config",
    "changing some string hyperparameters in the config",
    "changing the receptive field of some layers",
    "changing the stride of some layers",
];

const HPARAM_BODY: &str = "This time, please improve the model's performance by {GUIDANCE}. Change only hyperparameters. Do not add additional hyperparameters. Just change the values of existing hyperparameters. Also, do not change the architecture or modules. In other words, do not change the value of each \"type\". Please provide a fully modified model config.";

const SWAP_RELY_GUIDANCE: [&str; 2] = [
    "Positions with Some Issues",
    "Positions Previously Not Changed Much",
];

const SWAP_RELY_ATTRIBUTES: [&str; 2] = ["{all_module_attributes}", "{sampled_module_attributes}"];

const SWAP_RELY: &str = "This time, let's try to improve the model's performance by using one of the following modules:
{candidate_module_codes}
Analyze the source codes, especially how they work and what the input and output tensor shapes are, to replace previous modules. Then, which module should be used and where should it be replaced in the original config?
I will ask later about the appropriate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
{GUIDANCE} (More Improvement Needed Positions): XXX
Pros and Cons of the New Candidate Modules: XXX
Input and Output Shape Compatibility of the New Candidate Modules against Previous Modules: XXX
New Module Name to Use: YYY
Where to be Used: ZZZ
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.
Select ZZZ from {CANDIDATE_ATTRIBUTES}.";

const SWAP_INVERSE: [&str; 2] = [
    "This time, let's try to improve the model's performance by using one of the following modules:
{candidate_module_codes},
but I want to try an unexpected module this time.
Analyze the source codes, especially how they work and what the input and output tensor shapes are, to replace previous modules.
Then, which module should be used and where should it be replaced in the original config? I will ask later about the appropriate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Positions Previously Not Changed Much (More Improvement Needed Positions): XXX
New Candidate Modules which seems Nobody will Tried (This time, I want to try novel changes): XXX
Input and Output Shape Compatibility of the New Candidate Modules against Previous Modules: XXX
New Module Name to Use: YYY
Where to be Used: ZZZ
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.
Select ZZZ from {sampled_module_attributes}.",
    "This time, let's try to improve the model's performance by using one of the following modules:
{candidate_module_codes}
Analyze the source codes, especially how they work and what the input and output tensor shapes are, to replace previous modules.
Then, which module should be used and where should it be replaced in the original config?
I will ask later about the appropriate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Positions where Nobody will tried (This time, I want to try novel changes): XXX
Pros and Cons of the New Candidate Modules: XXX
Input and Output Shape Compatibility of the New Candidate Modules against Previous Modules: XXX
New Module Name to Use: YYY
Where to be Used: ZZZ
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.
Select ZZZ from {sampled_module_attributes}.",
];

const SWAP_MINIMUM: &str = "This time, let's try to improve the model's performance by replacing the module in {decided_module_attribute} with one of the following modules:
{candidate_module_codes}
Analyze the source codes, especially about how they work and what are the input and output tensor shapes to replace with the previous module.
Then, answer which module should be used.
I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Pros and Cons of the New Candidate Modules: XXX
Input and Output Shape Compatibility of the New Candidate Modules against Previous Modules: XXX
New Module Name to Use: YYY
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.";

pub const SWAP_TURN2: &str = "Now, I want to ask how to replace. The original module, {original_module_name}, is
{original_module_code},
and the used parameters of __init__ function are
{used_parameters}.
The new module, {decided_module_name}, is
{decided_module_code},
and the default parameters of __init__ function are
{decided_module_default_param}.
To replace the original module with the new module, modifications to the default parameters are needed to ensure the input and output tensor shapes match those of the original module.
If there is a \"<TODO>\" in the default parameters, it must be replaced with an appropriate parameter. Moreover, further modification of the default parameters might be desired to improve the performance. However, adding new parameters (keys of the dict) are not allowed.
Considering above, please modify the default parameters of
{decided_module_default_param}.
Note that you need to modify the values of the dict and don't need to modify the keys of the dict.";

const INSERT_RELY: [&str; 2] = [
    "This time, let's try to improve the model's performance by inserting an additional module after on of the following positions: {sampled_module_attributes}. We can use one of the following modules:
{candidate_module_codes}
Analyze the source codes, especially about how they work and what are the input and output tensor shapes. Then, answer which module should be used and where it should be inserted. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Positions Previously Not Inserted Much (More Improvement Might be Possible): XXX
Pros and Cons of the Candidate Modules: XXX
Analysis of the Candidate Inserting Positions: XXX
Input and Output Shape Compatibility of the Candidate Modules to Insert: XXX
New Module Name to Use: YYY
Where to be Inserted: ZZZ
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.
ZZZ can be chosen from {sampled_module_attributes}.",
    "This time, let's try to improve the model's performance by inserting an additional module after on of the following positions: {sampled_module_attributes}. We can use one of the following modules:
{candidate_module_codes}
Analyze the source codes, especially about how they work and what are the input and output tensor shapes. Then, answer which module should be used and where it should be inserted. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Pros and Cons of the Candidate Modules: XXX
Positions Previously Not Inserted Much (More Improvement Might be Possible): XXX
Analysis about Where Lacks the Expressiveness: XXX
Input and Output Shape Compatibility of the Candidate Modules to Insert: XXX
New Module Name to Use: YYY
Where to be Inserted: ZZZ
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.
ZZZ can be chosen from {sampled_module_attributes}.",
];

const INSERT_INVERSE: [&str; 2] = [
    "This time, let's try to improve the model's performance by inserting an additional module after on of the following positions: {sampled_module_attributes}. We can use one of the following modules:
{candidate_module_codes},
but I want to try an unexpected module this time.
Analyze the source codes, especially about how they work and what are the input and output tensor shapes. Then, answer which module should be used and where it should be inserted. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Positions Previously Not Inserted Much (More Improvement Might be Possible): XXX
New Candidate Modules which Seems Nobody will Tried (This time, I want to try novel changes): XXX
Analysis of the Candidate Inserting Positions: XXX
Input and Output Shape Compatibility of the Candidate Modules to Insert: XXX
New Module Name to Use: YYY
Where to be Inserted: ZZZ
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.
ZZZ can be chosen from {sampled_module_attributes}.",
    "This time, let's try to improve the model's performance by inserting an additional module after on of the following positions: {sampled_module_attributes}, especially focusing on novel changes. We can use one of the following modules:
{candidate_module_codes}
Analyze the source codes, especially about how they work and what are the input and output tensor shapes. Then, answer which module should be used and where it should be inserted. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Pros and Cons of the Candidate Modules: XXX
Positions where Nobody will Insert (This time, I want to try novel changes): XXX
Input and Output Shape Compatibility of the Candidate Modules to Insert: XXX
New Module Name to Use: YYY
Where to be Inserted: ZZZ
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.
ZZZ can be chosen from {sampled_module_attributes}.",
];

const INSERT_MINIMUM: &str = "This time, let's try to improve the model's performance by inserting an additional module after {decided_module_attribute}. We can use one of the following modules:
{candidate_module_codes}
Analyze the source codes, especially about how they work and what are the input and output tensor shapes to insert after {decided_module_attribute}. Then, answer which module should be used. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Pros and Cons of the Candidate Modules: XXX
Input and Output Shape Compatibility of the Candidate Modules to Insert After {decided_module_attribute}: XXX
New Module Name to Use: YYY
##########
Fill XXX based on your analysis.
YYY can be chosen from {candidate_module_names}.";

pub const INSERT_TURN2: &str = "Now, I want to ask how to insert it. The previous module, {original_module_name}, is
{original_module_code},
and the used parameters of __init__ function are
{used_parameters}.
The new module, {decided_module_name}, is
{decided_module_code},
and the default parameters of __init__ function are
{decided_module_default_param}.
To insert it, modifications to the default parameters are needed to ensure both the input and output tensor shapes of the inserting module match the the output tensor shapes of the previous module.
If there is a \"<TODO>\" in the default parameters, it must be replaced with an appropriate parameter. Moreover, further modification of the default parameters might be desired to improve the performance. However, adding new parameters (keys of the dict) are not allowed.
Considering above, please modify the default parameters of
{decided_module_default_param}.
Note that you need to modify the values of the dict and don't need to modify the keys of the dict.";

const REMOVE_RELY: [&str; 2] = [
    "This time, let's try to improve the model's performance by removing a module from {sampled_module_attributes}. The source codes of the modules are as follows:
{candidate_module_codes}
Analyze the source codes. Then, answer which module should be removed. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Positions Previously Not Removed Much (More Improvement Might be Possible): XXX
Positions Where You Think Weird: XXX
Where to be Removed: YYY
##########
Fill XXX based on your analysis.
YYY can be chosen from {sampled_module_attributes}.",
    "This time, let's try to improve the model's efficiency by removing a module from {sampled_module_attributes}. The source codes of the modules are as follows:
{candidate_module_codes}
Analyze the source codes. Then, answer which module should be removed. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Positions Previously Not Removed Much (More Improvement Might be Possible): XXX
Where to be Removed: YYY
##########
Fill XXX based on your analysis.
YYY can be chosen from {sampled_module_attributes}.",
];

const REMOVE_INVERSE: [&str; 2] = [
    "This time, let's try to improve the model's performance by removing a module from {sampled_module_attributes}, especially focusing on unexpected positions. The source codes of the modules are as follows:
{candidate_module_codes}
Analyze the source codes. Then, answer which module should be removed. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Positions where Nobody will Remove (This time, I want to try novel changes): XXX
Where to be Removed: YYY
##########
Fill XXX based on your analysis.
YYY can be chosen from {sampled_module_attributes}.",
    "This time, let's try to improve the model's efficiency by removing a module from {sampled_module_attributes}, especially focusing on novel changes. The source codes of the modules are as follows:
{candidate_module_codes}
Analyze the source codes. Then, answer which module should be removed. I'll ask later about the adequate hyperparameters, so please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Positions where You think Important (This time, I want to try novel changes): XXX
Where to be Removed: YYY
##########
Fill XXX based on your analysis.
YYY can be chosen from {sampled_module_attributes}.",
];

pub const REMOVE_TURN2: &str = "Now, I want to ask how to remove the module at {decided_module_attribute}. I want you to create a config without this module. You might need to modify hyperparameters for surrounding modules at {surrounding_module_attributes} to make the model work well without the removed module.
First, refer to the following source codes of relevant modules:
{decided_module_code}
{surrounding_modules_code}
Then, please provide the complete model config after removing the module at {decided_module_attribute} and modifying hyperparameters of surrounding modules as needed.";

const CREATE_HOW_AND_WHERE: [&str; 2] = [
    "replacing {decided_module_attribute} with",
    "merging {num} modules at {decided_sequential_attributes} into",
];

const CREATE_CUSTOM_MODULES: [&str; 2] = [
    "Original module:{original_module_code}",
    "Original modules and Custom modules:{original_module_code}\n{custom_modules_code}",
];

const CREATE_HEAD: &str = "This time, let's try to improve the model's performance by {HOW_AND_WHERE} a new module created by combining some of the following modules:
PyTorch modules (I only show the __init__ parameters since you know well):{pytorch_modules_dict}
{CUSTOM_MODULES}
Special modules which flexibly combine these modules with config dictionaries:{special_modules_code}
For example, you can create a module like as follows:
```python
dict(type='ParallelWithConfig',
    module_cfg1=dict(
        type='SequentialWithConfig',
        module_cfgs=[
            dict(type='Conv2d', in_channels=32, out_channels=64,
                kernel_size=1, stride=1, padding=0, dilation=1, groups=1,
                bias=True, padding_mode='zeros', device=None, dtype=None),
            dict(type='GELU', approximate='tanh'),
            dict(type='Conv2d', in_channels=64, out_channels=32,
                kernel_size=3, stride=1, padding=0, dilation=1, groups=1,
                bias=True, padding_mode='zeros', device=None, dtype=None),
            dict(type='Sigmoid')
        ]
    ),
    module_cfg2=dict(type='Identity'),
    merge_operation='mul',
)
```
Note that we have to make the input and output tensor shapes compatible with the previous module(s) with the following parameters:{used_parameters}
";

const CREATE_RELY_TAIL: &str = "Please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Input and Output Shape of the Previous Module(s): XXX
New Module Configuration:
```python
XXX
```
##########
Fill XXX based on your analysis.";

const CREATE_INVERSE_TAIL: &str = "I expect you to create a novel module configuration that nobody has tried before, so please try to combine the modules in a unique way.
Please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Input and Output Shape of the Previous Module: XXX
New Module Configuration:
```python
XXX
```
##########
Fill XXX based on your analysis.";

const CREATE_MINIMUM_TAIL: &str = "This time, please use the {original_module_name} and {random_special_module_name} at least.
Creating a module which previously not tried is important.
Please answer in the following format.
##########
Knowledge from Previous Experiments: XXX
Input and Output Shape of the Previous Module: XXX
New Module Configuration:
```python
XXX
```
##########
Fill XXX based on your analysis.";

pub const REPEAT_INTRODUCTIONS: [&str; 7] = [
    "From the previous config: {pre_pre_cfg} we created a following config: {pre_cfg} by \"{pre_transform}\". Then, the accuracy was improved from {pre_pre_acc}% to {pre_acc}%.",
    "The previous config was {pre_pre_cfg}. By \"{pre_transform}\", we successfully achieved better accuracy with the following config: {pre_cfg}.",
    "The previous config was {pre_pre_cfg}. From this config, performance is improved by \"{pre_transform}\". The config is {pre_cfg}.",
    "The previous config (Accuracy: {pre_pre_acc}%) was {pre_pre_cfg}. From this config, we improved the accuracy to {pre_acc}% by \"{pre_transform}\". The improved config is {pre_cfg}.",
    "The config: {pre_cfg} is created from the previous config: {pre_pre_cfg} by \"{pre_transform}\", resulting in an accuracy improvement from {pre_pre_acc}% to {pre_acc}%.",
    "By \"{pre_transform}\", we successfully created a better config: {pre_cfg}.",
    "The config: {pre_cfg} is created by \"{pre_transform}\".",
];

const REPEAT_HPARAM: [&str; 9] = [
    "extracting the essence and refining it",
    "extracting the essence and improving the new config furthermore",
    "making the same change but with a slightly larger magnitude",
    "slightly increasing the strength of the change",
    "slightly increasing the strength of the change in the same positions",
    "applying the same or similar changes to other hyperparameters in the same modules",
    "applying the same or similar changes to other hyperparameters in the surrounding modules",
    "applying the same or similar changes to other hyperparameters in the far away modules",
    "applying the same or similar changes to other hyperparameters in one different module",
];

const REPEAT_SWAP: [&str; 4] = [
    "extracting the essence and improving the new config furthermore",
    "replacing one or two other positions into {module_new}",
    "replacing a module around {location} into {module_new}",
    "replacing a module in the far away positions from {location} into {module_new}",
];

const REPEAT_INSERT: [&str; 5] = [
    "extracting the essence and improving the new config furthermore",
    "inserting one more {module_new} before the {location}",
    "inserting one more {module_new} after the {location}",
    "inserting one more {module_new} in a far away position from {location}",
    "inserting one more {module_new} at {random_location}",
];

const REPEAT_REMOVE: [&str; 6] = [
    "extracting the essence and improving the new config furthermore",
    "removing a module at {location} from the new config",
    "removing a module at {location} from the new config",
    "removing a module working similar to {module_pre}",
    "removing a similar module to {module_pre} around {location}",
    "removing a similar module to {module_pre} far away from {location}",
];

const REPEAT_OTHER: [&str; 3] = [
    "extracting the essence and improving the new config furthermore",
    "doing something similar to the new config",
    "making a further change in the same direction to the new config",
];

pub const REPEAT_BODY: &str = "{INTRODUCTION}
I think the change, \"{pre_transform}\", is a good idea. So, this time, I want you to further improve the performance by {RESTRICTION}.
You can refer the source code of relevant modules below: {relevant_source_code}
Please provide the improved complete config.";

/// Restriction variants for repeating a change made by `previous`.
pub fn repeat_restrictions(previous: Operation) -> &'static [&'static str] {
    match previous {
        Operation::ChangeHyperparameter => &REPEAT_HPARAM,
        Operation::SwapModule => &REPEAT_SWAP,
        Operation::InsertModule => &REPEAT_INSERT,
        Operation::DeleteModule => &REPEAT_REMOVE,
        Operation::CreateModule | Operation::RepeatPrevious => &REPEAT_OTHER,
    }
}

fn sub(text: &str, name: &str, value: &str) -> String {
    text.replace(&format!("{{{name}}}"), value)
}

/// Every template family, keyed by (operation, category).
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    families: BTreeMap<(Operation, PromptCategory), Vec<PromptTemplate>>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl TemplateRegistry {
    pub fn standard() -> Self {
        use Operation::*;
        use PromptCategory::*;
        let mut families: BTreeMap<(Operation, PromptCategory), Vec<PromptTemplate>> = BTreeMap::new();
        let mut add = |op, cat, bodies: Vec<String>| {
            let list = bodies
                .into_iter()
                .enumerate()
                .map(|(i, b)| PromptTemplate::new(op, cat, i, b))
                .collect();
            families.insert((op, cat), list);
        };

        for (cat, guidance) in [
            (RelyLLM, &HPARAM_RELY[..]),
            (InverseLLM, &HPARAM_INVERSE[..]),
            (MinimumLLM, &HPARAM_MINIMUM[..]),
        ] {
            add(
                ChangeHyperparameter,
                cat,
                guidance.iter().map(|g| sub(HPARAM_BODY, "GUIDANCE", g)).collect(),
            );
        }

        let swap_rely = SWAP_RELY_GUIDANCE
            .iter()
            .flat_map(|g| {
                SWAP_RELY_ATTRIBUTES
                    .iter()
                    .map(move |a| sub(&sub(SWAP_RELY, "GUIDANCE", g), "CANDIDATE_ATTRIBUTES", a))
            })
            .collect();
        add(SwapModule, RelyLLM, swap_rely);
        add(SwapModule, InverseLLM, SWAP_INVERSE.iter().map(|s| s.to_string()).collect());
        add(SwapModule, MinimumLLM, vec![SWAP_MINIMUM.to_string()]);

        add(InsertModule, RelyLLM, INSERT_RELY.iter().map(|s| s.to_string()).collect());
        add(InsertModule, InverseLLM, INSERT_INVERSE.iter().map(|s| s.to_string()).collect());
        add(InsertModule, MinimumLLM, vec![INSERT_MINIMUM.to_string()]);

        add(DeleteModule, RelyLLM, REMOVE_RELY.iter().map(|s| s.to_string()).collect());
        add(DeleteModule, InverseLLM, REMOVE_INVERSE.iter().map(|s| s.to_string()).collect());
        add(DeleteModule, MinimumLLM, vec![]);

        for (cat, tail) in [
            (RelyLLM, CREATE_RELY_TAIL),
            (InverseLLM, CREATE_INVERSE_TAIL),
            (MinimumLLM, CREATE_MINIMUM_TAIL),
        ] {
            let bodies = CREATE_HOW_AND_WHERE
                .iter()
                .flat_map(|hw| {
                    CREATE_CUSTOM_MODULES.iter().map(move |cm| {
                        let head = sub(&sub(CREATE_HEAD, "HOW_AND_WHERE", hw), "CUSTOM_MODULES", cm);
                        format!("{head}{tail}")
                    })
                })
                .collect();
            add(CreateModule, cat, bodies);
        }

        add(RepeatPrevious, RelyLLM, vec![REPEAT_BODY.to_string()]);

        for op in [SwapModule, InsertModule, DeleteModule] {
            let fam = families.get_mut(&(op, MinimumLLM)).expect("added above");
            let i = fam.len();
            fam.push(PromptTemplate::skip(op, MinimumLLM, i));
        }
        Self { families }
    }

    pub fn family(&self, op: Operation, cat: PromptCategory) -> Result<&[PromptTemplate], PromptError> {
        self.families
            .get(&(op, cat))
            .map(Vec::as_slice)
            .filter(|f| !f.is_empty())
            .ok_or(PromptError::UnknownTemplate { op, cat })
    }

    pub fn get(&self, id: TemplateId) -> Result<&PromptTemplate, PromptError> {
        self.family(id.op, id.cat)?
            .get(id.index)
            .ok_or(PromptError::UnknownTemplate { op: id.op, cat: id.cat })
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.families.values().flatten()
    }
}

/// Every placeholder name a filled template may legitimately contain.
pub fn vocabulary() -> &'static BTreeSet<String> {
    static VOCAB: std::sync::OnceLock<BTreeSet<String>> = std::sync::OnceLock::new();
    VOCAB.get_or_init(build_vocabulary)
}

fn build_vocabulary() -> BTreeSet<String> {
    let mut names: BTreeSet<String> = TemplateRegistry::standard()
        .iter()
        .flat_map(|t| t.required_placeholders.iter().cloned())
        .collect();
    for text in [TURN1, SWAP_TURN2, INSERT_TURN2, REMOVE_TURN2]
        .into_iter()
        .chain(REPEAT_INTRODUCTIONS)
        .chain(Operation::ALL.iter().flat_map(|o| repeat_restrictions(*o).iter().copied()))
    {
        names.extend(placeholders(text));
    }
    names
}
