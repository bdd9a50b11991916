//! Syntactic extraction of module classes from Python source.

use std::collections::{HashMap, HashSet};

use rustpython_parser::ast::{self, Constant, Expr, Ranged, Stmt, UnaryOp};
use rustpython_parser::{parse, Mode};

use super::{MinerError, ModuleRecord, Param, ParamDefault};
use crate::config::ConfigValue;

pub const DEFAULT_BASE_NAMES: [&str; 4] = ["Module", "nn.Module", "torch.nn.Module", "BaseModule"];

/// What the miner knows beyond the file being mined.
#[derive(Debug, Clone)]
pub struct MineContext {
    /// Dotted base-class spellings that mark a class as a module.
    pub base_names: HashSet<String>,
    /// Module classes defined elsewhere, usable as bases by name.
    pub known: HashMap<String, ModuleRecord>,
}

impl Default for MineContext {
    fn default() -> Self {
        Self::with_base_names(DEFAULT_BASE_NAMES.iter().map(|s| s.to_string()))
    }
}

impl MineContext {
    pub fn with_base_names(names: impl IntoIterator<Item = String>) -> Self {
        Self {
            base_names: names.into_iter().collect(),
            known: HashMap::new(),
        }
    }

    pub fn with_known(mut self, records: impl IntoIterator<Item = ModuleRecord>) -> Self {
        for r in records {
            self.known.insert(r.name.clone(), r);
        }
        self
    }
}

/// Mines every top-level module class of `source` with the default base set.
pub fn mine_source(source: &str, origin_prefix: &str) -> Result<Vec<ModuleRecord>, MinerError> {
    mine_with_context(source, origin_prefix, &MineContext::default())
}

pub fn mine_with_context(
    source: &str,
    origin_prefix: &str,
    ctx: &MineContext,
) -> Result<Vec<ModuleRecord>, MinerError> {
    let module = parse(source, Mode::Module, origin_prefix).map_err(|e| {
        let (line, col) = line_col(source, u32::from(e.offset) as usize);
        MinerError::Parse {
            origin: origin_prefix.to_string(),
            line,
            col,
            message: e.error.to_string(),
        }
    })?;
    let body = match module {
        ast::Mod::Module(m) => m.body,
        _ => unreachable!("parsed in module mode"),
    };

    let classes: Vec<&ast::StmtClassDef> = body
        .iter()
        .filter_map(|s| match s {
            Stmt::ClassDef(c) => Some(c),
            _ => None,
        })
        .collect();
    // Later definitions shadow earlier ones, as at runtime.
    let by_name: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), i))
        .collect();

    // Module status per definition, propagated through in-file bases until
    // stable.
    let mut is_module = vec![false; classes.len()];
    loop {
        let mut changed = false;
        for (i, c) in classes.iter().enumerate() {
            if is_module[i] {
                continue;
            }
            let hit = c.bases.iter().filter_map(dotted).any(|b| match by_name.get(b.as_str()) {
                Some(&j) => is_module[j],
                None => ctx.base_names.contains(&b) || ctx.known.contains_key(&b),
            });
            if hit {
                is_module[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let miner = ClassMiner { classes: &classes, by_name: &by_name, is_module: &is_module, ctx };
    Ok(classes
        .iter()
        .enumerate()
        .filter(|(i, _)| is_module[*i])
        .map(|(_, c)| ModuleRecord {
            name: c.name.to_string(),
            origin: format!("{origin_prefix}.{}", c.name),
            params: miner.params(c, 0),
            in_arity: miner.in_arity(c, 0),
            out_arity: miner.out_arity(c, 0),
            source: source[c.range()].to_string(),
        })
        .collect())
}

struct ClassMiner<'a> {
    classes: &'a [&'a ast::StmtClassDef],
    by_name: &'a HashMap<&'a str, usize>,
    is_module: &'a [bool],
    ctx: &'a MineContext,
}

enum Parent<'a> {
    InFile(&'a ast::StmtClassDef),
    Known(&'a ModuleRecord),
}

const MAX_CHAIN: usize = 64;

impl<'a> ClassMiner<'a> {
    /// The first base that is itself a module class, in file or in context.
    fn parent(&self, class: &ast::StmtClassDef) -> Option<Parent<'a>> {
        for b in class.bases.iter().filter_map(dotted) {
            match self.by_name.get(b.as_str()) {
                Some(&j) if self.is_module[j] => return Some(Parent::InFile(self.classes[j])),
                Some(_) => {}
                None => {
                    if let Some(r) = self.ctx.known.get(&b) {
                        return Some(Parent::Known(r));
                    }
                }
            }
        }
        None
    }

    fn params(&self, class: &ast::StmtClassDef, depth: usize) -> Vec<Param> {
        if let Some(init) = method(class, "__init__") {
            return init_params(init);
        }
        match (depth < MAX_CHAIN).then(|| self.parent(class)).flatten() {
            Some(Parent::InFile(c)) => self.params(c, depth + 1),
            Some(Parent::Known(r)) => r.params.clone(),
            None => Vec::new(),
        }
    }

    fn in_arity(&self, class: &ast::StmtClassDef, depth: usize) -> usize {
        if let Some(fwd) = method(class, "forward") {
            return forward_in_arity(fwd);
        }
        match (depth < MAX_CHAIN).then(|| self.parent(class)).flatten() {
            Some(Parent::InFile(c)) => self.in_arity(c, depth + 1),
            Some(Parent::Known(r)) => r.in_arity,
            None => 1,
        }
    }

    fn out_arity(&self, class: &ast::StmtClassDef, depth: usize) -> usize {
        if let Some(body) = method_body(class, "forward") {
            return forward_out_arity(body, &class.name);
        }
        match (depth < MAX_CHAIN).then(|| self.parent(class)).flatten() {
            Some(Parent::InFile(c)) => self.out_arity(c, depth + 1),
            Some(Parent::Known(r)) => r.out_arity,
            None => 1,
        }
    }
}

fn dotted(e: &Expr) -> Option<String> {
    match e {
        Expr::Name(n) => Some(n.id.to_string()),
        Expr::Attribute(a) => dotted(&a.value).map(|v| format!("{v}.{}", a.attr)),
        _ => None,
    }
}

fn method<'b>(class: &'b ast::StmtClassDef, name: &str) -> Option<&'b ast::Arguments> {
    class.body.iter().rev().find_map(|s| match s {
        Stmt::FunctionDef(f) if f.name.as_str() == name => Some(&*f.args),
        Stmt::AsyncFunctionDef(f) if f.name.as_str() == name => Some(&*f.args),
        _ => None,
    })
}

fn method_body<'b>(class: &'b ast::StmtClassDef, name: &str) -> Option<&'b [Stmt]> {
    class.body.iter().rev().find_map(|s| match s {
        Stmt::FunctionDef(f) if f.name.as_str() == name => Some(f.body.as_slice()),
        Stmt::AsyncFunctionDef(f) if f.name.as_str() == name => Some(f.body.as_slice()),
        _ => None,
    })
}

fn positional(args: &ast::Arguments) -> impl Iterator<Item = &ast::ArgWithDefault> {
    args.posonlyargs.iter().chain(args.args.iter()).skip(1)
}

fn init_params(args: &ast::Arguments) -> Vec<Param> {
    positional(args)
        .chain(args.kwonlyargs.iter())
        .map(|a| Param {
            name: a.def.arg.to_string(),
            default: a
                .default
                .as_deref()
                .and_then(literal)
                .map_or(ParamDefault::Todo, ParamDefault::Value),
        })
        .collect()
}

fn is_none(e: Option<&Expr>) -> bool {
    matches!(e, Some(Expr::Constant(c)) if matches!(c.value, Constant::None))
}

/// Declared inputs after the receiver; parameters past the first that
/// default to `None` are optional and not counted.
fn forward_in_arity(args: &ast::Arguments) -> usize {
    positional(args)
        .chain(args.kwonlyargs.iter())
        .enumerate()
        .filter(|(i, a)| *i == 0 || !is_none(a.default.as_deref()))
        .count()
}

/// Items in the lexically last `return` of `forward`, ignoring nested
/// functions and classes.
fn forward_out_arity(body: &[Stmt], class: &str) -> usize {
    let mut last: Option<&ast::StmtReturn> = None;
    collect_last_return(body, &mut last);
    let n = match last {
        None => return 1,
        Some(r) => match r.value.as_deref() {
            None => 0,
            Some(Expr::Tuple(t)) => t.elts.len(),
            Some(_) => 1,
        },
    };
    if n == 0 {
        log::warn!("{class}.forward returns nothing; assuming one output");
        return 1;
    }
    n
}

fn collect_last_return<'b>(body: &'b [Stmt], last: &mut Option<&'b ast::StmtReturn>) {
    for stmt in body {
        match stmt {
            Stmt::Return(r) => {
                if last.is_none_or(|l| l.range.start() <= r.range.start()) {
                    *last = Some(r);
                }
            }
            Stmt::If(s) => {
                collect_last_return(&s.body, last);
                collect_last_return(&s.orelse, last);
            }
            Stmt::For(s) => {
                collect_last_return(&s.body, last);
                collect_last_return(&s.orelse, last);
            }
            Stmt::AsyncFor(s) => {
                collect_last_return(&s.body, last);
                collect_last_return(&s.orelse, last);
            }
            Stmt::While(s) => {
                collect_last_return(&s.body, last);
                collect_last_return(&s.orelse, last);
            }
            Stmt::With(s) => collect_last_return(&s.body, last),
            Stmt::AsyncWith(s) => collect_last_return(&s.body, last),
            Stmt::Try(s) => {
                collect_last_return(&s.body, last);
                for ast::ExceptHandler::ExceptHandler(h) in &s.handlers {
                    collect_last_return(&h.body, last);
                }
                collect_last_return(&s.orelse, last);
                collect_last_return(&s.finalbody, last);
            }
            Stmt::TryStar(s) => {
                collect_last_return(&s.body, last);
                for ast::ExceptHandler::ExceptHandler(h) in &s.handlers {
                    collect_last_return(&h.body, last);
                }
                collect_last_return(&s.orelse, last);
                collect_last_return(&s.finalbody, last);
            }
            Stmt::Match(s) => {
                for case in &s.cases {
                    collect_last_return(&case.body, last);
                }
            }
            _ => {}
        }
    }
}

/// Converts a literal default to a config value; anything else is `None`.
pub(crate) fn literal(e: &Expr) -> Option<ConfigValue> {
    match e {
        Expr::Constant(c) => constant(&c.value),
        Expr::UnaryOp(u) if matches!(u.op, UnaryOp::USub | UnaryOp::UAdd) => {
            let neg = matches!(u.op, UnaryOp::USub);
            match literal(&u.operand)? {
                ConfigValue::Int(i) if neg => i.checked_neg().map(ConfigValue::Int),
                ConfigValue::Float(f) if neg => Some(ConfigValue::Float(-f)),
                v @ (ConfigValue::Int(_) | ConfigValue::Float(_)) => Some(v),
                _ => None,
            }
        }
        Expr::Tuple(t) => t.elts.iter().map(literal).collect::<Option<_>>().map(ConfigValue::Tuple),
        Expr::List(l) => l.elts.iter().map(literal).collect::<Option<_>>().map(ConfigValue::List),
        _ => None,
    }
}

fn constant(c: &Constant) -> Option<ConfigValue> {
    match c {
        Constant::None => Some(ConfigValue::None),
        Constant::Bool(b) => Some(ConfigValue::Bool(*b)),
        Constant::Str(s) => Some(ConfigValue::Str(s.clone())),
        Constant::Int(i) => i.to_string().parse().ok().map(ConfigValue::Int),
        Constant::Float(f) if f.is_finite() => Some(ConfigValue::Float(*f)),
        Constant::Tuple(items) => items.iter().map(constant).collect::<Option<_>>().map(ConfigValue::Tuple),
        _ => None,
    }
}

pub(crate) fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(source.len());
    let before = &source[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}
