//! Command-line front end: `gen`, `opt`, `baseline`, `compare`, `eval`.
//!
//! Exit status is 0 on success, 2 for usage or input errors, 3 when the
//! instance cannot meet its rate (or has no usable acyclic subgraph), and 4
//! for internal failures. `CODEMIN_SEED` supplies the seed when `--seed` is
//! absent.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::baselines::{self, Method};
use crate::chromosome::{Chromosome, Fitness, Layout, Representation};
use crate::distsim::{write_trace, DistOptions, DistributedNetwork, Scheduler};
use crate::error::{Error, Result};
use crate::evaluate::{chromosome_seed, DecompositionEvaluator, EvaluatorKind, DEFAULT_FIELD_BITS, DEFAULT_TRIALS};
use crate::ga::{evolve, GaParams, RunStats, STREAM_EVAL};
use crate::seed::derive;
use crate::stats::Summary;
use crate::topology::{generate_random_instance, MulticastInstance};

#[derive(Debug, Parser)]
#[command(name = "codemin", version, about = "Minimize network coding resources for multicast")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random acyclic instance whose sinks all reach the rate.
    Gen(GenArgs),
    /// Optimize one instance, centrally or with the distributed protocol.
    Opt(OptArgs),
    /// Run a greedy baseline over a batch of seeds.
    Baseline(BaselineArgs),
    /// Compare block-wise GA, bit-wise GA and both baselines.
    Compare(CompareArgs),
    /// Evaluate a single chromosome.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Central,
    Dist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Decomposition,
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReprArg {
    Block,
    Bit,
}

impl From<ReprArg> for Representation {
    fn from(r: ReprArg) -> Self {
        match r {
            ReprArg::Block => Representation::BlockWise,
            ReprArg::Bit => Representation::BitWise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethodArg {
    Minimal1,
    Minimal2,
    Both,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub links: usize,
    #[arg(long)]
    pub sinks: usize,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub rate: u32,
    #[arg(long, env = "CODEMIN_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output file; the document goes to stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// GA settings shared by `opt` and `compare`. Unset flags fall back to the
/// config file, then to the defaults of the chosen representation.
#[derive(Debug, Args, Default)]
pub struct GaArgs {
    /// JSON document with any subset of the GA parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pop: Option<usize>,
    #[arg(long)]
    pub gens: Option<usize>,
    #[arg(long)]
    pub tournament: Option<usize>,
    #[arg(long)]
    pub crossover: Option<f64>,
    #[arg(long)]
    pub mutation: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Field GF(2^m) used by random codes.
    #[arg(long)]
    pub field_bits: Option<u32>,
    /// Random codes tried per chromosome by the algebraic evaluator.
    #[arg(long)]
    pub trials: Option<u32>,
}

#[derive(Debug, Args)]
pub struct OptArgs {
    pub topology: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Central)]
    pub mode: Mode,
    #[arg(long, value_enum)]
    pub repr: Option<ReprArg>,
    #[command(flatten)]
    pub ga: GaArgs,
    #[arg(long, env = "CODEMIN_SEED")]
    pub seed: Option<u64>,
    /// Per-generation CSV trace.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON summary file (also printed to stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Line-delimited JSON log: protocol messages in `dist` mode, generation records otherwise.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Worker threads for the distributed simulator (sequential when omitted).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Drop links on cycles (keeping the rate) before algebraic or distributed runs.
    #[arg(long)]
    pub acyclic_prune: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    pub topology: PathBuf,
    #[arg(long, value_enum, default_value_t = BaselineMethodArg::Both)]
    pub method: BaselineMethodArg,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Seed of the first trial; trial i uses seed + i.
    #[arg(long, env = "CODEMIN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub topology: PathBuf,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Seed of the first trial; trial i uses seed + i.
    #[arg(long, env = "CODEMIN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub pop: Option<usize>,
    #[arg(long)]
    pub gens: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Worker threads for independent trials.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Per-trial CSV (trial, seed, method, coding_links).
    #[arg(long)]
    pub detail: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub topology: PathBuf,
    /// Chromosome as `<fingerprint>:<hex>`.
    #[arg(long, conflicts_with = "all_ones", required_unless_present = "all_ones")]
    pub chromosome: Option<String>,
    #[arg(long)]
    pub all_ones: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::Decomposition)]
    pub method: MethodArg,
    #[arg(long)]
    pub field_bits: Option<u32>,
    #[arg(long)]
    pub trials: Option<u32>,
    #[arg(long, env = "CODEMIN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub acyclic_prune: bool,
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Cyclic(_)) {
                eprintln!("hint: pass --acyclic-prune to drop cycle links first");
            }
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Opt(a) => cmd_opt(a, out),
        Command::Baseline(a) => cmd_baseline(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Eval(a) => cmd_eval(a, out),
    }
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fitness_value(f: Fitness) -> Value {
    serde_json::to_value(f).expect("fitness serializes")
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> Result<()> {
    let g = generate_random_instance(a.nodes, a.links, a.sinks, a.rate, a.seed)?;
    let line = format!(
        "nodes={} links={} sinks={} rate={} min_sink_flow={} seed={}\n",
        g.node_count(),
        g.link_count(),
        g.sinks().len(),
        g.rate(),
        g.min_sink_flow(),
        a.seed
    );
    match &a.output {
        Some(p) => {
            fs::write(p, g.to_json())?;
            out.write_all(line.as_bytes())?;
        }
        None => {
            out.write_all(g.to_json().as_bytes())?;
            eprint!("{line}");
        }
    }
    Ok(())
}

/// GA parameters from defaults, an optional config document and flag overrides.
pub fn resolve_params(ga: &GaArgs, repr: Option<Representation>, seed: Option<u64>) -> Result<GaParams> {
    let doc = match &ga.config {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str::<Value>(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?
        }
        None => json!({}),
    };
    let Value::Object(fields) = doc else {
        return Err(Error::InvalidParameter("config must be a JSON object".into()));
    };
    let repr = match repr {
        Some(r) => r,
        None => match fields.get("representation") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::InvalidParameter(format!("representation: {e}")))?,
            None => Representation::BlockWise,
        },
    };
    let mut merged = serde_json::to_value(GaParams::for_representation(repr)).expect("params serialize");
    for (k, v) in fields {
        merged[k.as_str()] = v;
    }
    merged["representation"] = serde_json::to_value(repr).expect("repr serializes");
    let mut p: GaParams =
        serde_json::from_value(merged).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;

    if let Some(v) = ga.pop {
        p.population_size = v;
        // keep the default tournament usable on small populations
        if ga.tournament.is_none() && p.tournament_size > v {
            p.tournament_size = v;
        }
    }
    if let Some(v) = ga.gens {
        p.generations = v;
    }
    if let Some(v) = ga.tournament {
        p.tournament_size = v;
    }
    if let Some(v) = ga.crossover {
        p.crossover_probability = v;
    }
    if let Some(v) = ga.mutation {
        p.mutation_rate = v;
    }
    let (cur_bits, cur_trials) = match p.evaluator {
        EvaluatorKind::Algebraic { field_bits, trials } => (field_bits, trials),
        EvaluatorKind::Decomposition => (DEFAULT_FIELD_BITS, DEFAULT_TRIALS),
    };
    let algebraic = EvaluatorKind::Algebraic {
        field_bits: ga.field_bits.unwrap_or(cur_bits),
        trials: ga.trials.unwrap_or(cur_trials),
    };
    p.evaluator = match ga.method {
        Some(MethodArg::Decomposition) => EvaluatorKind::Decomposition,
        Some(MethodArg::Algebraic) => algebraic,
        None if matches!(p.evaluator, EvaluatorKind::Algebraic { .. }) => algebraic,
        None => EvaluatorKind::Decomposition,
    };
    if let Some(s) = seed {
        p.seed = s;
    }
    p.validate()?;
    Ok(p)
}

fn instance_summary(g: &MulticastInstance, layout: &Layout) -> Value {
    json!({
        "nodes": g.node_count(),
        "links": g.link_count(),
        "sinks": g.sinks().len(),
        "rate": g.rate(),
        "blocks": layout.block_count(),
        "bits": layout.bit_count(),
        "fingerprint": format!("{:08x}", layout.fingerprint()),
    })
}

fn run_summary(stats: &RunStats, layout: &Layout) -> Value {
    json!({
        "best_before_sweep": fitness_value(stats.best_before_sweep),
        "best": fitness_value(stats.best),
        "best_chromosome_before_sweep": stats.best_chromosome_before_sweep.to_hex(layout),
        "best_chromosome": stats.best_chromosome.to_hex(layout),
        "evaluations": stats.evaluations,
        "generations": stats.history.len(),
    })
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

pub fn cmd_opt(a: OptArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = MulticastInstance::load(&a.topology)?;
    let mut params = resolve_params(&a.ga, a.repr.map(Into::into), a.seed)?;
    let needs_acyclic = a.mode == Mode::Dist || matches!(params.evaluator, EvaluatorKind::Algebraic { .. });
    let g = if a.acyclic_prune && needs_acyclic { loaded.make_acyclic_subgraph()? } else { loaded.clone() };
    if needs_acyclic {
        g.require_acyclic()?;
    }
    let mut summary = json!({
        "command": "opt",
        "mode": match a.mode { Mode::Central => "central", Mode::Dist => "dist" },
        "seed": params.seed,
        "acyclic_prune": a.acyclic_prune,
        "pruned_links": loaded.link_count() - g.link_count(),
    });
    let (stats, layout) = match a.mode {
        Mode::Central => {
            let stats = evolve(&g, &params)?;
            let layout = Layout::of(&g);
            if let Some(p) = &a.trace {
                let mut text = String::new();
                for r in &stats.history {
                    writeln!(text, "{}", serde_json::to_string(r).expect("record serializes")).unwrap();
                }
                fs::write(p, text)?;
            }
            merge(&mut summary, json!({ "instance": instance_summary(&g, &layout) }));
            (stats, layout)
        }
        Mode::Dist => {
            if let EvaluatorKind::Decomposition = params.evaluator {
                params.evaluator = EvaluatorKind::Algebraic {
                    field_bits: a.ga.field_bits.unwrap_or(DEFAULT_FIELD_BITS),
                    trials: 1,
                };
            }
            let net = DistributedNetwork::new(&g)?;
            let options = DistOptions {
                scheduler: match a.threads {
                    Some(t) => Scheduler::Parallel { threads: t },
                    None => Scheduler::Sequential,
                },
                trace: a.trace.is_some(),
                ..DistOptions::default()
            };
            let run = net.run(&params, &options)?;
            if let Some(p) = &a.trace {
                let mut buf = Vec::new();
                write_trace(&run.trace, &mut buf)?;
                fs::write(p, buf)?;
            }
            let messages: u64 = run.counters.iter().map(|c| c.messages_sent).sum();
            merge(
                &mut summary,
                json!({
                    "instance": instance_summary(net.instance(), net.layout()),
                    "distributed": {
                        "steps": run.steps,
                        "messages": messages,
                        "best_generation": run.best_at.map(|b| b.0),
                        "best_index": run.best_at.map(|b| b.1),
                    },
                }),
            );
            (run.stats, net.layout().clone())
        }
    };
    merge(&mut summary, json!({ "params": params }));
    merge(&mut summary, run_summary(&stats, &layout));
    eprintln!("elapsed {:.3}s", stats.wall_time.as_secs_f64());
    if let Some(p) = &a.csv {
        fs::write(p, stats.to_csv())?;
    }
    let text = pretty(&summary);
    if let Some(p) = &a.json {
        fs::write(p, &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn trial_seeds(base: u64, trials: u64) -> Vec<u64> {
    (0..trials).map(|i| base.wrapping_add(i)).collect()
}

fn summary_row(name: &str, values: &[u32]) -> String {
    let s = Summary::of(values).expect("at least one trial");
    format!("{name},{},{:.4},{:.4}", s.best, s.avg, s.std)
}

pub fn cmd_baseline(a: BaselineArgs, out: &mut dyn Write) -> Result<()> {
    let g = MulticastInstance::load(&a.topology)?;
    let methods: Vec<Method> = match a.method {
        BaselineMethodArg::Minimal1 => vec![Method::Minimal1],
        BaselineMethodArg::Minimal2 => vec![Method::Minimal2],
        BaselineMethodArg::Both => Method::ALL.to_vec(),
    };
    let seeds = trial_seeds(a.seed, a.trials);
    let mut rows = String::from("seed,method,coding_links\n");
    let mut table = String::from("method,best,avg,std\n");
    for m in methods {
        let batch = baselines::run_batch(&g, m, &seeds)?;
        for r in &batch {
            writeln!(rows, "{},{},{}", r.seed, r.method, r.coding_links).unwrap();
        }
        let values: Vec<u32> = batch.iter().map(|r| r.coding_links).collect();
        writeln!(table, "{}", summary_row(m.name(), &values)).unwrap();
    }
    emit(a.output.as_deref(), &format!("{rows}\n{table}"), out)
}

pub fn cmd_compare(a: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let g = MulticastInstance::load(&a.topology)?;
    g.require_rate_achievable()?;
    let seeds = trial_seeds(a.seed, a.trials);
    let ga_args = GaArgs { pop: a.pop, gens: a.gens, method: a.method, ..GaArgs::default() };
    let block = resolve_params(&ga_args, Some(Representation::BlockWise), None)?;
    let bit = resolve_params(&ga_args, Some(Representation::BitWise), None)?;
    let work = || -> Result<Vec<(&'static str, Vec<u32>)>> {
        let mut results = Vec::new();
        for (name, base) in [("block", &block), ("bit", &bit)] {
            let values = seeds
                .par_iter()
                .map(|&seed| {
                    let stats = evolve(&g, &GaParams { seed, ..base.clone() })?;
                    stats.best.finite().ok_or_else(|| Error::Infeasible("GA returned no feasible code".into()))
                })
                .collect::<Result<Vec<u32>>>()?;
            results.push((name, values));
        }
        for m in Method::ALL {
            let values = baselines::run_batch(&g, m, &seeds)?.iter().map(|r| r.coding_links).collect();
            results.push((m.name(), values));
        }
        Ok(results)
    };
    let results = match a.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("--jobs: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut table = String::from("method,best,avg,std,base_seed,trials\n");
    let mut detail = String::from("trial,seed,method,coding_links\n");
    for (name, values) in &results {
        writeln!(table, "{},{},{}", summary_row(name, values), a.seed, a.trials).unwrap();
        for (i, (v, seed)) in values.iter().zip(&seeds).enumerate() {
            writeln!(detail, "{i},{seed},{name},{v}").unwrap();
        }
    }
    if let Some(p) = &a.detail {
        fs::write(p, detail)?;
    }
    emit(a.output.as_deref(), &table, out)
}

pub fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = MulticastInstance::load(&a.topology)?;
    let g = if a.acyclic_prune { loaded.make_acyclic_subgraph()? } else { loaded };
    let layout = Layout::of(&g);
    let c = match &a.chromosome {
        Some(hex) => Chromosome::from_hex(&layout, hex)?,
        None => Chromosome::all_ones(&layout),
    };
    let kind = match a.method {
        MethodArg::Decomposition => EvaluatorKind::Decomposition,
        MethodArg::Algebraic => EvaluatorKind::Algebraic {
            field_bits: a.field_bits.unwrap_or(DEFAULT_FIELD_BITS),
            trials: a.trials.unwrap_or(DEFAULT_TRIALS),
        },
    };
    let evaluator = kind.build(&g)?;
    let fitness = evaluator.evaluate(&c, chromosome_seed(derive(a.seed, &[STREAM_EVAL]), &c))?;
    let dec = DecompositionEvaluator::new(&g);
    let (mut net, _) = dec.decomposed().reduced_network(c.bits());
    let base = dec.decomposed().base();
    let sink_flows: Vec<Value> = base
        .sinks()
        .iter()
        .map(|&t| {
            net.reset();
            json!({ "sink": base.node_name(t), "max_flow": net.max_flow(base.source(), t, None) })
        })
        .collect();
    let summary = json!({
        "command": "eval",
        "method": match a.method { MethodArg::Decomposition => "decomposition", MethodArg::Algebraic => "algebraic" },
        "seed": a.seed,
        "instance": instance_summary(&g, &layout),
        "chromosome": c.to_hex(&layout),
        "fitness": fitness_value(fitness),
        "feasible": fitness.is_feasible(),
        "coding_links": c.count_coding_links(&layout),
        "block_wise": c.is_block_wise(&layout),
        "sink_flows": sink_flows,
    });
    out.write_all(pretty(&summary).as_bytes())?;
    Ok(())
}
