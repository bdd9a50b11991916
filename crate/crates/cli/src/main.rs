use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use treenas::config::{attr, parse_config, ArchTree};
use treenas::evolution::{
    init_run, load_checkpoint, run_search, write_outputs, Environment, Evaluator, HttpEvaluator, ProcessEvaluator,
    RunConfig, RunReport, SyntheticEvaluator,
};
use treenas::feasibility::Budget;
use treenas::miner::{build_db, mine_paths, MineContext, ModuleDb, ParamDefault};
use treenas::prompt::{HttpLlm, LlmEndpoint, ScriptedLlm, SyntheticLlm, TemplateRegistry, TOKEN_ENV};

#[derive(Parser)]
#[command(name = "treenas", version, about = "LLM-guided tree-transformation architecture search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine module classes from Python sources into a database file.
    Mine {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Extra dotted base-class names that mark a module class.
        #[arg(long = "base-names", num_args = 1..)]
        base_names: Vec<String>,
    },
    /// Run an evolutionary search from a base config.
    Search(Box<SearchArgs>),
    /// Print a config in canonical form.
    Render { cfg: PathBuf },
    /// Parse a config, check the round trip and list its modules.
    Parse { cfg: PathBuf },
    /// Summarize a module database.
    Inspect {
        #[arg(long)]
        db: PathBuf,
        /// Show one record in full.
        #[arg(long)]
        module: Option<String>,
    },
    /// Print the report of a finished or paused run.
    Report { rundir: PathBuf },
}

#[derive(clap::Args)]
struct SearchArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    base: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    budget: usize,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Defaults to 5, or 25 for budgets of 500 and more.
    #[arg(long = "top-k")]
    top_k: Option<usize>,
    #[arg(long, default_value_t = treenas::decision::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long = "max-params")]
    max_params: u64,
    #[arg(long = "max-flops")]
    max_flops: u64,
    /// Chat-completions URL, `mock:<replay.json>` or `synthetic[:seed]`.
    #[arg(long)]
    llm: String,
    #[arg(long, default_value = "gpt-4o-mini")]
    model: String,
    #[arg(long = "llm-timeout", default_value_t = 120)]
    llm_timeout: u64,
    /// Worker command line, `http://…` base URL, or `synthetic`.
    #[arg(long)]
    evaluator: String,
    #[arg(long = "eval-timeout", default_value_t = 3600)]
    eval_timeout: u64,
    /// Module type rewarded by the synthetic evaluator.
    #[arg(long, default_value = "BottleneckAttn")]
    designated: String,
    #[arg(long, default_value = "cifar10")]
    dataset: String,
    #[arg(long, default_value_t = 1)]
    epochs: u32,
    #[arg(long = "input-shape", value_delimiter = ',', default_value = "3,32,32")]
    input_shape: Vec<usize>,
    #[arg(long = "attempt-cap")]
    attempt_cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Continue from `<out>/checkpoint.json`.
    #[arg(long)]
    resume: bool,
    /// Evaluated architectures between checkpoints.
    #[arg(long = "checkpoint-every", default_value_t = 10)]
    checkpoint_every: usize,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mine { paths, out, base_names } => mine(&paths, &out, base_names),
        Command::Search(args) => search(*args),
        Command::Render { cfg } => {
            print!("{}", read_config(&cfg)?.to_text());
            Ok(())
        }
        Command::Parse { cfg } => parse(&cfg),
        Command::Inspect { db, module } => inspect(&db, module.as_deref()),
        Command::Report { rundir } => {
            let state = load_checkpoint(&rundir.join("checkpoint.json"))?;
            print!("{}", RunReport::from_state(&state).to_text());
            Ok(())
        }
    }
}

fn read_config(path: &Path) -> Result<ArchTree> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing {}", path.display()))
}

fn mine(paths: &[PathBuf], out: &Path, base_names: Vec<String>) -> Result<()> {
    let mut ctx = MineContext::default();
    ctx.base_names.extend(base_names);
    let (records, failures) = mine_paths(paths, &ctx)?;
    for f in &failures {
        log::warn!("skipped: {f}");
    }
    let db = build_db(records);
    db.save(out)?;
    println!(
        "{} modules ({} mined, {} files skipped) -> {}",
        db.len(),
        db.len() - db.specials().len(),
        failures.len(),
        out.display()
    );
    Ok(())
}

fn parse(path: &Path) -> Result<()> {
    let tree = read_config(path)?;
    let again = parse_config(&tree.to_text()).context("canonical text does not parse")?;
    if again != tree {
        bail!("render/parse round trip changed the tree");
    }
    for (addr, ty) in attr(&tree) {
        println!("{addr}\t{ty}");
    }
    Ok(())
}

fn inspect(path: &Path, module: Option<&str>) -> Result<()> {
    let db = ModuleDb::load(path)?;
    if let Some(name) = module {
        let rec = db.require(name)?;
        println!("{} ({}), arity {:?}", rec.name, rec.origin, rec.arity());
        for p in &rec.params {
            let d = match &p.default {
                ParamDefault::Todo => treenas::miner::TODO_MARKER.to_string(),
                ParamDefault::Value(v) => treenas::config::render_inline(v),
            };
            println!("  {} = {d}", p.name);
        }
        println!("{}", rec.source);
        return Ok(());
    }
    let records = db.records();
    let mut by_root: BTreeMap<&str, usize> = BTreeMap::new();
    let mut by_arity: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let (mut params, mut todo) = (0, 0);
    for r in records {
        *by_root.entry(r.origin.split('.').next().unwrap_or("")).or_default() += 1;
        *by_arity.entry(r.arity()).or_default() += 1;
        params += r.params.len();
        todo += r.params.iter().filter(|p| p.default == ParamDefault::Todo).count();
    }
    println!("{} modules, {} builtin specials", records.len(), db.specials().len());
    for (root, n) in by_root {
        println!("  {root:<24} {n}");
    }
    println!("arity (in, out):");
    for (a, n) in by_arity {
        println!("  {a:?} {n}");
    }
    println!("{params} parameters, {todo} without a literal default");
    Ok(())
}

fn llm_endpoint(spec: &str, args: &SearchArgs) -> Result<Box<dyn LlmEndpoint>> {
    if let Some(path) = spec.strip_prefix("mock:") {
        return Ok(Box::new(ScriptedLlm::load(Path::new(path))?));
    }
    if let Some(rest) = spec.strip_prefix("synthetic") {
        let seed = match rest.strip_prefix(':') {
            Some(s) => s.parse().context("synthetic LLM seed")?,
            None if rest.is_empty() => args.seed,
            None => bail!("unknown LLM `{spec}`"),
        };
        return Ok(Box::new(SyntheticLlm::new(seed)));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        if std::env::var(TOKEN_ENV).is_err() {
            log::info!("{TOKEN_ENV} is not set; sending requests without a token");
        }
        let llm = HttpLlm::new(spec, args.model.clone(), Duration::from_secs(args.llm_timeout))?;
        return Ok(Box::new(llm));
    }
    bail!("unknown LLM `{spec}`: expected a URL, mock:<file> or synthetic")
}

fn evaluator(spec: &str, args: &SearchArgs) -> Result<Box<dyn Evaluator>> {
    if spec == "synthetic" {
        return Ok(Box::new(SyntheticEvaluator::new(args.designated.clone(), 1.0, args.max_params)));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Box::new(HttpEvaluator::new(spec, Duration::from_secs(args.eval_timeout))?));
    }
    Ok(Box::new(ProcessEvaluator::spawn(spec, args.workers)?))
}

fn search(args: SearchArgs) -> Result<()> {
    let db = ModuleDb::load(&args.db)?;
    let registry = TemplateRegistry::standard();
    let llm = llm_endpoint(&args.llm, &args)?;
    let evaluator = evaluator(&args.evaluator, &args)?;
    let env = Environment {
        db: &db,
        registry: &registry,
        llm: llm.as_ref(),
        evaluator: evaluator.as_ref(),
    };
    let checkpoint = args.out.join("checkpoint.json");
    let mut state = if args.resume {
        let state = load_checkpoint(&checkpoint)?;
        if state.config.budget != args.budget {
            log::warn!("resuming with the checkpoint budget of {}", state.config.budget);
        }
        state
    } else {
        if args.budget == 0 || args.workers == 0 {
            bail!("budget and workers must be positive");
        }
        if !(0.0..=1.0).contains(&args.epsilon) {
            bail!("epsilon must lie in [0, 1]");
        }
        let mut cfg = RunConfig::new(args.budget, Budget::new(args.max_params, args.max_flops), args.seed);
        cfg.workers = args.workers;
        cfg.epsilon = args.epsilon;
        cfg.top_k = args.top_k.unwrap_or(cfg.top_k).max(1);
        cfg.attempt_cap = args.attempt_cap.unwrap_or(cfg.attempt_cap);
        cfg.dataset = args.dataset.clone();
        cfg.epochs = args.epochs;
        cfg.input_shape = args.input_shape.clone();
        let seeds = args.base.iter().map(|p| read_config(p)).collect::<Result<Vec<_>>>()?;
        init_run(cfg, &seeds, &env)?
    };
    let step = args.checkpoint_every.max(1);
    loop {
        let pause = state.evaluated() + step;
        let result = run_search(&mut state, &env, Some(pause));
        write_outputs(&state, &args.out)?;
        result?;
        if state.evaluated() >= state.config.budget {
            break;
        }
        log::info!("checkpoint at {} evaluated", state.evaluated());
    }
    let report = write_outputs(&state, &args.out)?;
    print!("{}", report.to_text());
    Ok(())
}
