use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::extract::{mine_with_context, MineContext};
use super::{MinerError, ModuleRecord, Param};

pub const DB_VERSION: u32 = 1;

const SPECIALS_SOURCE: &str = include_str!("specials.py");
const SPECIALS_ORIGIN: &str = "nas_special_modules";

fn specials() -> &'static [ModuleRecord] {
    static SPECIALS: OnceLock<Vec<ModuleRecord>> = OnceLock::new();
    SPECIALS.get_or_init(|| {
        mine_with_context(SPECIALS_SOURCE, SPECIALS_ORIGIN, &MineContext::default())
            .expect("embedded special modules parse")
    })
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Record(usize),
    Special(usize),
}

/// Name-indexed module records plus the builtin combinator modules.
#[derive(Debug, Clone)]
pub struct ModuleDb {
    records: Vec<ModuleRecord>,
    index: HashMap<String, Slot>,
}

#[derive(Serialize, Deserialize)]
struct DbFile {
    records: Vec<ModuleRecord>,
    version: u32,
}

/// Resolves name collisions by `_k` suffixes in input order and adds the
/// builtin specials. Specials keep their bare names.
pub fn build_db(records: Vec<ModuleRecord>) -> ModuleDb {
    let mut taken: HashSet<String> = specials().iter().map(|s| s.name.clone()).collect();
    let mut out = Vec::with_capacity(records.len());
    for mut r in records {
        if taken.contains(&r.name) {
            let mut k = 2;
            while taken.contains(&format!("{}_{k}", r.name)) {
                k += 1;
            }
            r.name = format!("{}_{k}", r.name);
        }
        taken.insert(r.name.clone());
        out.push(r);
    }
    ModuleDb::from_unique(out)
}

impl ModuleDb {
    fn from_unique(records: Vec<ModuleRecord>) -> Self {
        let mut index = HashMap::new();
        for (i, s) in specials().iter().enumerate() {
            index.insert(s.name.clone(), Slot::Special(i));
        }
        for (i, r) in records.iter().enumerate() {
            index.insert(r.name.clone(), Slot::Record(i));
        }
        Self { records, index }
    }

    pub fn records(&self) -> &[ModuleRecord] {
        &self.records
    }

    pub fn specials(&self) -> &'static [ModuleRecord] {
        specials()
    }

    pub fn is_special(&self, name: &str) -> bool {
        matches!(self.index.get(name), Some(Slot::Special(_)))
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ModuleRecord> {
        match self.index.get(name)? {
            Slot::Record(i) => self.records.get(*i),
            Slot::Special(i) => specials().get(*i),
        }
    }

    pub fn require(&self, name: &str) -> Result<&ModuleRecord, MinerError> {
        self.get(name)
            .ok_or_else(|| MinerError::UnknownModule(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Every resolvable name, records first, in database order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records
            .iter()
            .chain(specials().iter())
            .map(|r| r.name.as_str())
    }

    /// Source snippets of `names` in request order, separated by a blank line.
    pub fn get_code(&self, names: &[&str]) -> Result<String, MinerError> {
        let parts = names
            .iter()
            .map(|n| self.require(n).map(|r| r.source.as_str()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(parts.join("\n\n"))
    }

    pub fn get_default(&self, name: &str) -> Result<&[Param], MinerError> {
        self.require(name).map(|r| r.params.as_slice())
    }

    /// Records sharing a forward arity with some seed, seeds excluded,
    /// sorted by name.
    pub fn retrieve_compatible(&self, seeds: &[&str]) -> Result<Vec<String>, MinerError> {
        let mut arities = HashSet::new();
        for s in seeds {
            arities.insert(self.require(s)?.arity());
        }
        let seeds: HashSet<&str> = seeds.iter().copied().collect();
        let found: BTreeSet<&str> = self
            .records
            .iter()
            .filter(|r| !seeds.contains(r.name.as_str()) && arities.contains(&r.arity()))
            .map(|r| r.name.as_str())
            .collect();
        Ok(found.into_iter().map(str::to_string).collect())
    }

    pub fn to_json(&self) -> String {
        let file = DbFile {
            records: self.records.clone(),
            version: DB_VERSION,
        };
        serde_json::to_string_pretty(&file).expect("records serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, MinerError> {
        let file: DbFile =
            serde_json::from_str(text).map_err(|e| MinerError::Format(e.to_string()))?;
        if file.version != DB_VERSION {
            return Err(MinerError::Format(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let mut seen: HashSet<&str> = specials().iter().map(|s| s.name.as_str()).collect();
        for r in &file.records {
            if !seen.insert(&r.name) {
                return Err(MinerError::Format(format!("duplicate name `{}`", r.name)));
            }
            if r.out_arity == 0 {
                return Err(MinerError::Format(format!("`{}` has no outputs", r.name)));
            }
        }
        Ok(Self::from_unique(file.records))
    }

    pub fn save(&self, path: &Path) -> Result<(), MinerError> {
        std::fs::write(path, self.to_json()).map_err(|source| MinerError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, MinerError> {
        let text = std::fs::read_to_string(path).map_err(|source| MinerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

impl PartialEq for ModuleDb {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

/// Dotted origin prefix for `file` relative to the parent of `root`, e.g.
/// `mmcv/cnn/bricks/conv_module.py` under root `mmcv` gives
/// `mmcv.cnn.bricks.conv_module`. Package `__init__.py` files map to the
/// package itself.
pub fn origin_for_path(root: &Path, file: &Path) -> String {
    let base = if root.is_file() {
        root.parent().unwrap_or(Path::new(""))
    } else {
        root.parent().unwrap_or(root)
    };
    let rel = file.strip_prefix(base).unwrap_or(file).with_extension("");
    let mut parts: Vec<String> = rel
        .components()
        .filter_map(|c| match c {
            std::path::Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect();
    if parts.len() > 1 && parts.last().map(String::as_str) == Some("__init__") {
        parts.pop();
    }
    parts.join(".")
}

/// Mines every `.py` file under `paths` (files or directories), in argument
/// order and sorted within each directory. Files that fail to parse are
/// reported in the second element and skipped.
pub fn mine_paths(
    paths: &[PathBuf],
    ctx: &MineContext,
) -> Result<(Vec<ModuleRecord>, Vec<MinerError>), MinerError> {
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for root in paths {
        if root.is_file() {
            files.push((root.clone(), origin_for_path(root, root)));
            continue;
        }
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| MinerError::Io {
                path: root.clone(),
                source: e.into(),
            })?;
            let p = entry.path();
            if entry.file_type().is_file() && p.extension().is_some_and(|e| e == "py") {
                files.push((p.to_path_buf(), origin_for_path(root, p)));
            }
        }
    }
    let mined: Vec<Result<Vec<ModuleRecord>, MinerError>> = files
        .par_iter()
        .map(|(path, origin)| {
            let text = std::fs::read_to_string(path).map_err(|source| MinerError::Io {
                path: path.clone(),
                source,
            })?;
            mine_with_context(&text, origin, ctx)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in mined {
        match r {
            Ok(mut rs) => records.append(&mut rs),
            Err(e @ MinerError::Parse { .. }) => {
                log::warn!("skipping {e}");
                failures.push(e);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((records, failures))
}
