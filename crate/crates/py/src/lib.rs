//! Python bindings: instances, chromosomes, evaluation, the GA, the greedy
//! baselines and the distributed simulator.

use codemin::baselines::{self, Method};
use codemin::chromosome::Layout;
use codemin::distsim::{DistOptions, DistributedNetwork, Scheduler};
use codemin::evaluate::{chromosome_seed, DecompositionEvaluator, EvaluatorKind, DEFAULT_FIELD_BITS, DEFAULT_TRIALS};
use codemin::ga::{self, GaParams, RunStats, STREAM_EVAL};
use codemin::seed::derive;
use codemin::topology::generate_random_instance;
use codemin::{Chromosome, Error, Fitness, MulticastInstance, Representation};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(codemin, InfeasibleError, PyException, "The instance cannot carry the requested rate.");

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        3 => InfeasibleError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn fitness(f: Fitness) -> Option<u32> {
    f.finite()
}

fn parse_repr(text: &str) -> PyResult<Representation> {
    match text {
        "block" => Ok(Representation::BlockWise),
        "bit" => Ok(Representation::BitWise),
        other => Err(PyValueError::new_err(format!("unknown representation '{other}'"))),
    }
}

fn parse_method(text: &str, field_bits: u32, trials: u32) -> PyResult<EvaluatorKind> {
    match text {
        "decomposition" => Ok(EvaluatorKind::Decomposition),
        "algebraic" => Ok(EvaluatorKind::Algebraic { field_bits, trials }),
        other => Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    }
}

/// A multicast instance: unit-capacity links, one source, sinks and a rate.
#[pyclass(name = "Instance", module = "codemin", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyInstance {
    inner: MulticastInstance,
    layout: Layout,
}

impl PyInstance {
    fn wrap(inner: MulticastInstance) -> Self {
        let layout = Layout::of(&inner);
        PyInstance { inner, layout }
    }

    fn chromosome(&self, hex: &str) -> PyResult<Chromosome> {
        Chromosome::from_hex(&self.layout, hex).map_err(to_py)
    }
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        MulticastInstance::from_json(text).map(Self::wrap).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        MulticastInstance::load(path).map(Self::wrap).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (nodes, links, sinks, rate, seed = 0))]
    fn generate(nodes: usize, links: usize, sinks: usize, rate: u32, seed: u64) -> PyResult<Self> {
        generate_random_instance(nodes, links, sinks, rate, seed).map(Self::wrap).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn link_count(&self) -> usize {
        self.inner.link_count()
    }

    #[getter]
    fn rate(&self) -> u32 {
        self.inner.rate()
    }

    #[getter]
    fn source(&self) -> String {
        self.inner.node_name(self.inner.source()).to_string()
    }

    #[getter]
    fn sinks(&self) -> Vec<String> {
        self.inner.sinks().iter().map(|&t| self.inner.node_name(t).to_string()).collect()
    }

    /// Max-flow from the source to each sink.
    fn sink_flows(&self) -> Vec<u32> {
        self.inner.sink_flows()
    }

    fn is_acyclic(&self) -> bool {
        self.inner.is_acyclic()
    }

    fn acyclic_subgraph(&self) -> PyResult<Self> {
        self.inner.make_acyclic_subgraph().map(Self::wrap).map_err(to_py)
    }

    #[getter]
    fn bit_count(&self) -> usize {
        self.layout.bit_count()
    }

    #[getter]
    fn block_count(&self) -> usize {
        self.layout.block_count()
    }

    /// Block sizes (incoming links of the merging node) in chromosome order.
    fn block_sizes(&self) -> Vec<usize> {
        self.layout.blocks().iter().map(|b| b.len()).collect()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        format!("{:08x}", self.layout.fingerprint())
    }

    /// Largest coding-link count a link-minimal acyclic solution can need.
    fn coding_link_bound(&self) -> u64 {
        ga::coding_link_bound(&self.inner)
    }

    fn all_ones(&self) -> String {
        Chromosome::all_ones(&self.layout).to_hex(&self.layout)
    }

    /// Chromosome string for a list of bits.
    fn encode(&self, bits: Vec<bool>) -> PyResult<String> {
        let c = Chromosome::from_bits(bits);
        c.check_layout(&self.layout).map_err(to_py)?;
        Ok(c.to_hex(&self.layout))
    }

    fn decode(&self, chromosome: &str) -> PyResult<Vec<bool>> {
        Ok(self.chromosome(chromosome)?.bits().to_vec())
    }

    fn coding_links(&self, chromosome: &str) -> PyResult<u32> {
        Ok(self.chromosome(chromosome)?.count_coding_links(&self.layout))
    }

    /// Fitness of a chromosome: its coding-link count, or None when infeasible.
    #[pyo3(signature = (chromosome, method = "decomposition", field_bits = DEFAULT_FIELD_BITS, trials = DEFAULT_TRIALS, seed = 0))]
    fn evaluate(&self, chromosome: &str, method: &str, field_bits: u32, trials: u32, seed: u64) -> PyResult<Option<u32>> {
        let c = self.chromosome(chromosome)?;
        let ev = parse_method(method, field_bits, trials)?.build(&self.inner).map_err(to_py)?;
        let f = ev.evaluate(&c, chromosome_seed(derive(seed, &[STREAM_EVAL]), &c)).map_err(to_py)?;
        Ok(fitness(f))
    }

    /// Clears bits one at a time while the chromosome stays feasible.
    fn greedy_sweep(&self, chromosome: &str) -> PyResult<String> {
        let c = self.chromosome(chromosome)?;
        let swept = ga::greedy_sweep(&c, &DecompositionEvaluator::new(&self.inner)).map_err(to_py)?;
        Ok(swept.to_hex(&self.layout))
    }

    /// Coding-link counts from a greedy baseline, one per seed.
    fn baseline(&self, method: &str, seeds: Vec<u64>) -> PyResult<Vec<u32>> {
        let m: Method = method.parse().map_err(|_| PyValueError::new_err(format!("unknown baseline '{method}'")))?;
        let rows = baselines::run_batch(&self.inner, m, &seeds).map_err(to_py)?;
        Ok(rows.iter().map(|r| r.coding_links).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(nodes={}, links={}, sinks={}, rate={})",
            self.inner.node_count(),
            self.inner.link_count(),
            self.inner.sinks().len(),
            self.inner.rate()
        )
    }
}

type HistoryRow = (usize, Option<u32>, Option<u32>, Option<f64>, usize);

/// Outcome of one optimization run.
#[pyclass(name = "RunResult", module = "codemin", frozen, get_all)]
pub struct PyRunResult {
    best: Option<u32>,
    best_before_sweep: Option<u32>,
    best_chromosome: String,
    best_chromosome_before_sweep: String,
    evaluations: u64,
    /// `(generation, best, best_so_far, mean, feasible)` per generation.
    history: Vec<HistoryRow>,
    csv: String,
}

impl PyRunResult {
    fn from_stats(stats: &RunStats, layout: &Layout) -> Self {
        PyRunResult {
            best: fitness(stats.best),
            best_before_sweep: fitness(stats.best_before_sweep),
            best_chromosome: stats.best_chromosome.to_hex(layout),
            best_chromosome_before_sweep: stats.best_chromosome_before_sweep.to_hex(layout),
            evaluations: stats.evaluations,
            history: stats
                .history
                .iter()
                .map(|r| (r.generation, fitness(r.best), fitness(r.best_so_far), r.mean, r.feasible))
                .collect(),
            csv: stats.to_csv(),
        }
    }
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!("RunResult(best={:?}, generations={})", self.best, self.history.len())
    }
}

/// Runs the genetic algorithm. Unset parameters take the defaults of the
/// chosen representation. `mode="dist"` runs the message-passing protocol.
#[pyfunction]
#[pyo3(signature = (
    instance, *, representation = "block", population = None, generations = None, tournament = None,
    crossover = None, mutation = None, method = "decomposition", field_bits = DEFAULT_FIELD_BITS,
    trials = DEFAULT_TRIALS, seed = 0, mode = "central", threads = None,
))]
#[allow(clippy::too_many_arguments)]
fn optimize(
    py: Python<'_>,
    instance: &PyInstance,
    representation: &str,
    population: Option<usize>,
    generations: Option<usize>,
    tournament: Option<usize>,
    crossover: Option<f64>,
    mutation: Option<f64>,
    method: &str,
    field_bits: u32,
    trials: u32,
    seed: u64,
    mode: &str,
    threads: Option<usize>,
) -> PyResult<PyRunResult> {
    let defaults = GaParams::for_representation(parse_repr(representation)?);
    let population_size = population.unwrap_or(defaults.population_size);
    let params = GaParams {
        population_size,
        generations: generations.unwrap_or(defaults.generations),
        tournament_size: tournament.unwrap_or(defaults.tournament_size.min(population_size)),
        crossover_probability: crossover.unwrap_or(defaults.crossover_probability),
        mutation_rate: mutation.unwrap_or(defaults.mutation_rate),
        evaluator: parse_method(method, field_bits, trials)?,
        seed,
        ..defaults
    };
    let g = &instance.inner;
    match mode {
        "central" => {
            let stats = py.detach(|| ga::evolve(g, &params)).map_err(to_py)?;
            Ok(PyRunResult::from_stats(&stats, &instance.layout))
        }
        "dist" => {
            let options = DistOptions {
                scheduler: threads.map_or(Scheduler::Sequential, |t| Scheduler::Parallel { threads: t }),
                ..DistOptions::default()
            };
            let (stats, layout) = py
                .detach(|| {
                    let net = DistributedNetwork::new(g)?;
                    let run = net.run(&params, &options)?;
                    Ok::<_, Error>((run.stats, net.layout().clone()))
                })
                .map_err(to_py)?;
            Ok(PyRunResult::from_stats(&stats, &layout))
        }
        other => Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
    }
}

#[pymodule]
#[pyo3(name = "codemin")]
fn codemin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
