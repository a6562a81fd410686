//! Message-passing simulation of the distributed optimization protocol.
//!
//! Every node of the instance runs its own state machine and talks to its
//! neighbours only through per-link FIFO channels: pilot packets flow along
//! link direction, fitness packets flow against it. A node fires when a full
//! burst is waiting (one message on every incoming link for the forward
//! direction, or one on every outgoing link for the backward direction).
//! Merging nodes hold their slice of every chromosome and apply selection,
//! crossover and mutation locally, driven by the coordination vector the
//! source piggybacks on its pilots.
//!
//! The simulation advances in logical time steps. All nodes that are ready in
//! a step fire together, either one after another or on a thread pool, and
//! their messages are enqueued in node order, so the outcome does not depend
//! on the scheduler.

mod message;
mod node;

use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use message::{fitness_component_bits, CoordinationVector, FitnessPacket, ForwardMessage, PilotPacket};
pub use node::{apply_local_genetic_ops, Emission, Inbox, NodeCounters, NodeState, ProtocolContext, Role, Shard, SinkPolicy};

use crate::chromosome::{Chromosome, Fitness, Layout};
use crate::error::{Error, Result};
use crate::evaluate::{DecompositionEvaluator, Evaluator, EvaluatorKind, DEFAULT_FIELD_BITS};
use crate::field::GaloisField;
use crate::ga::{greedy_sweep, GaParams, RunStats};
use crate::topology::{LinkId, MulticastInstance, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    #[default]
    Sequential,
    Parallel {
        threads: usize,
    },
}

#[derive(Debug, Clone, Default)]
pub struct DistOptions {
    pub scheduler: Scheduler,
    pub trace: bool,
    pub sink_policy: SinkPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub time: u64,
    pub node: String,
    pub node_id: NodeId,
    pub link: LinkId,
    pub direction: &'static str,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation: Option<usize>,
    pub bits: u64,
}

/// Writes events as line-delimited JSON.
pub fn write_trace<W: Write>(events: &[TraceEvent], mut w: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DistributedRun {
    pub stats: RunStats,
    /// Fitness of every chromosome, per generation, as aggregated at the source.
    pub fitness_history: Vec<Vec<Fitness>>,
    /// Coordination vectors sent after each generation but the last.
    pub coordination_history: Vec<CoordinationVector>,
    /// (generation, index) of the best chromosome before the sweep.
    pub best_at: Option<(usize, usize)>,
    pub counters: Vec<NodeCounters>,
    pub steps: u64,
    pub trace: Vec<TraceEvent>,
}

/// The instance as the protocol sees it: restricted to nodes on some
/// source-to-sink path, with forwarding sinks given virtual sinks.
#[derive(Debug, Clone)]
pub struct DistributedNetwork {
    instance: MulticastInstance,
    graph: MulticastInstance,
    layout: Layout,
    roles: Vec<Role>,
    /// Bit range of each merging node within a chromosome.
    node_bits: Vec<Option<std::ops::Range<usize>>>,
}

impl DistributedNetwork {
    pub fn new(g: &MulticastInstance) -> Result<Self> {
        let instance = g.restrict_to_multicast_paths();
        instance.require_acyclic()?;
        instance.require_rate_achievable()?;
        let graph = instance.with_virtual_sinks();
        let layout = Layout::of(&instance);
        let mut node_bits: Vec<Option<std::ops::Range<usize>>> = vec![None; graph.node_count()];
        for b in layout.blocks() {
            let r = node_bits[b.node].get_or_insert(b.offset..b.offset);
            r.end = b.offset + b.len();
        }
        let roles = (0..graph.node_count())
            .map(|v| {
                if v == graph.source() {
                    Role::Source
                } else if graph.is_sink(v) {
                    Role::Sink
                } else if node_bits[v].is_some() {
                    Role::Merging
                } else {
                    Role::Relay
                }
            })
            .collect();
        Ok(Self { instance, graph, layout, roles, node_bits })
    }

    /// The restricted instance; chromosomes refer to its layout.
    pub fn instance(&self) -> &MulticastInstance {
        &self.instance
    }

    /// The restricted instance after virtual-sink augmentation.
    pub fn graph(&self) -> &MulticastInstance {
        &self.graph
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn role(&self, v: NodeId) -> Role {
        self.roles[v]
    }

    fn context(&self, params: &GaParams, options: &DistOptions) -> Result<ProtocolContext> {
        let field_bits = match params.evaluator {
            EvaluatorKind::Algebraic { field_bits, .. } => field_bits,
            EvaluatorKind::Decomposition => DEFAULT_FIELD_BITS,
        };
        Ok(ProtocolContext {
            params: params.clone(),
            field: GaloisField::new(field_bits)?,
            rate: self.graph.rate() as usize,
            sink_policy: options.sink_policy,
        })
    }

    fn nodes(&self, ctx: &ProtocolContext) -> Vec<NodeState> {
        (0..self.graph.node_count())
            .map(|v| {
                NodeState::new(
                    v,
                    self.roles[v],
                    self.graph.in_links(v).to_vec(),
                    self.graph.out_links(v).to_vec(),
                    ctx,
                )
            })
            .collect()
    }

    /// Runs the protocol for `params.generations` generations, then sweeps
    /// the best chromosome with the centralized greedy sweep.
    pub fn run(&self, params: &GaParams, options: &DistOptions) -> Result<DistributedRun> {
        self.run_inner(params, options, None)
    }

    /// One forward and backward round over a given population. Returns the
    /// fitness of every chromosome as computed at the source.
    pub fn evaluate_population(
        &self,
        population: &[Chromosome],
        seed: u64,
        options: &DistOptions,
    ) -> Result<DistributedRun> {
        let params = GaParams {
            population_size: population.len(),
            generations: 1,
            tournament_size: 1,
            seed,
            ..GaParams::default()
        };
        self.run_inner(&params, options, Some(population))
    }

    fn run_inner(
        &self,
        params: &GaParams,
        options: &DistOptions,
        population: Option<&[Chromosome]>,
    ) -> Result<DistributedRun> {
        params.validate()?;
        let started = Instant::now();
        let ctx = self.context(params, options)?;
        let mut nodes = self.nodes(&ctx);
        if let Some(population) = population {
            for c in population {
                c.check_layout(&self.layout)?;
            }
            for (v, node) in nodes.iter_mut().enumerate() {
                if let Some(range) = &self.node_bits[v] {
                    let mut shard = Shard::new(population.len(), node.in_links().len(), node.out_links().len());
                    for (i, c) in population.iter().enumerate() {
                        shard.column_mut(i).copy_from_slice(&c.bits()[range.clone()]);
                    }
                    node.set_shard(shard);
                }
            }
        }

        let (steps, mut trace) = simulate(&mut nodes, &self.graph, &ctx, options)?;
        trace.sort_by_key(|e| (e.time, e.node_id, e.link));

        let source = nodes[self.graph.source()].source_state().expect("source state").clone();
        let counters = nodes.iter().map(|n| n.counters).collect();
        let best_before = source.best_so_far;
        let before = self.collect_archive(&nodes, source.best_at.is_some())?;
        let (best, best_chromosome) = match (&before, options.sink_policy) {
            (Some(c), SinkPolicy::RankCheck) if population.is_none() => {
                let exact = DecompositionEvaluator::new(&self.instance);
                let swept = greedy_sweep(c, &exact)?;
                (exact.evaluate(&swept, 0)?, swept)
            }
            (Some(c), _) => (best_before, c.clone()),
            (None, _) => (Fitness::Infeasible, Chromosome::all_ones(&self.layout)),
        };
        if population.is_none() && before.is_none() {
            return Err(Error::Infeasible("no chromosome passed the sink rank tests in any generation".into()));
        }
        let stats = RunStats {
            history: source.history,
            best_before_sweep: best_before,
            best_chromosome_before_sweep: before.unwrap_or_else(|| best_chromosome.clone()),
            best,
            best_chromosome,
            evaluations: (params.population_size * params.generations) as u64,
            wall_time: started.elapsed(),
        };
        Ok(DistributedRun {
            stats,
            fitness_history: source.fitness_history,
            coordination_history: source.coordination_history.iter().map(|cv| (**cv).clone()).collect(),
            best_at: source.best_at,
            counters,
            steps,
            trace: if options.trace { trace } else { Vec::new() },
        })
    }

    /// Rebuilds the best chromosome from the merging nodes' archived columns.
    fn collect_archive(&self, nodes: &[NodeState], expected: bool) -> Result<Option<Chromosome>> {
        if !expected {
            return Ok(None);
        }
        let mut bits = vec![false; self.layout.bit_count()];
        for (v, range) in self.node_bits.iter().enumerate() {
            if let Some(range) = range {
                let column = nodes[v]
                    .archive()
                    .ok_or_else(|| Error::Protocol(format!("merging node {v} archived nothing")))?;
                bits[range.clone()].copy_from_slice(column);
            }
        }
        Ok(Some(Chromosome::from_bits(bits)))
    }
}

/// Runs the distributed protocol on `g` with default options.
pub fn run_distributed(g: &MulticastInstance, params: &GaParams) -> Result<RunStats> {
    Ok(DistributedNetwork::new(g)?.run(params, &DistOptions::default())?.stats)
}

struct Channels {
    forward: Vec<VecDeque<ForwardMessage>>,
    backward: Vec<VecDeque<FitnessPacket>>,
}

impl Channels {
    fn take_burst(&mut self, node: &NodeState) -> Option<Inbox> {
        let ins = node.in_links();
        if !ins.is_empty() && ins.iter().all(|&l| !self.forward[l].is_empty()) {
            return Some(Inbox::Forward(ins.iter().map(|&l| self.forward[l].pop_front().unwrap()).collect()));
        }
        let outs = node.out_links();
        if !outs.is_empty() && outs.iter().all(|&l| !self.backward[l].is_empty()) {
            return Some(Inbox::Backward(outs.iter().map(|&l| self.backward[l].pop_front().unwrap()).collect()));
        }
        None
    }

    fn is_empty(&self) -> bool {
        self.forward.iter().all(VecDeque::is_empty) && self.backward.iter().all(VecDeque::is_empty)
    }
}

fn simulate(
    nodes: &mut [NodeState],
    graph: &MulticastInstance,
    ctx: &ProtocolContext,
    options: &DistOptions,
) -> Result<(u64, Vec<TraceEvent>)> {
    let mut channels = Channels {
        forward: vec![VecDeque::new(); graph.link_count()],
        backward: vec![VecDeque::new(); graph.link_count()],
    };
    let component_bits = fitness_component_bits(graph.link_count()) as u64;
    let mut trace = Vec::new();
    let mut deliver = |time: u64, v: NodeId, out: Emission, channels: &mut Channels| {
        if options.trace {
            for (l, m) in &out.forward {
                trace.push(TraceEvent {
                    time,
                    node: graph.node_name(v).to_string(),
                    node_id: v,
                    link: *l,
                    direction: "forward",
                    kind: m.kind(),
                    generation: m.generation(),
                    bits: forward_bits(m, ctx),
                });
            }
            for (l, p) in &out.backward {
                trace.push(TraceEvent {
                    time,
                    node: graph.node_name(v).to_string(),
                    node_id: v,
                    link: *l,
                    direction: "backward",
                    kind: "fitness",
                    generation: Some(p.generation),
                    bits: p.components.len() as u64 * component_bits,
                });
            }
        }
        for (l, m) in out.forward {
            channels.forward[l].push_back(m);
        }
        for (l, p) in out.backward {
            channels.backward[l].push_back(p);
        }
    };

    let source = graph.source();
    let opening = nodes[source].start(ctx);
    deliver(0, source, opening, &mut channels);

    let pool = match options.scheduler {
        Scheduler::Sequential => None,
        Scheduler::Parallel { threads } => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| Error::Protocol(format!("cannot start worker pool: {e}")))?,
        ),
    };
    let mut time = 1u64;
    loop {
        let inboxes: Vec<Option<Inbox>> = nodes.iter().map(|n| channels.take_burst(n)).collect();
        if inboxes.iter().all(Option::is_none) {
            break;
        }
        let fire = |(node, inbox): (&mut NodeState, Option<Inbox>)| inbox.map(|ib| node.handle(ib, ctx)).transpose();
        let emissions: Vec<Result<Option<Emission>>> = match &pool {
            None => nodes.iter_mut().zip(inboxes).map(fire).collect(),
            Some(pool) => pool.install(|| nodes.par_iter_mut().zip(inboxes.into_par_iter()).map(fire).collect()),
        };
        for (v, emission) in emissions.into_iter().enumerate() {
            if let Some(out) = emission? {
                deliver(time, v, out, &mut channels);
            }
        }
        time += 1;
    }
    if !channels.is_empty() {
        return Err(Error::Protocol("undelivered messages left when the network went quiet".into()));
    }
    Ok((time, trace))
}

fn forward_bits(m: &ForwardMessage, ctx: &ProtocolContext) -> u64 {
    let n = ctx.params.population_size as u64;
    let index_bits = (usize::BITS - ctx.params.population_size.leading_zeros()) as u64;
    match m {
        ForwardMessage::Optimize { .. } => 64,
        ForwardMessage::Transmit { .. } => index_bits + 1,
        ForwardMessage::Pilot(p) => {
            let pilots = p.vectors.len() as u64 * ctx.field.bits() as u64;
            let cv = p.coordination.as_ref().map_or(0, |cv| {
                cv.selected.len() as u64 * index_bits + cv.crossover.len() as u64 + index_bits + 1
            });
            debug_assert_eq!(p.vectors.len() as u64, n * ctx.rate as u64);
            pilots + cv
        }
    }
}
