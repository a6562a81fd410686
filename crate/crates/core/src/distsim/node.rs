use std::sync::Arc;

use rand::Rng as _;
use serde::Serialize;

use super::message::{CoordinationVector, FitnessPacket, ForwardMessage, PilotPacket};
use crate::chromosome::{allowed_block_strings, Fitness, Representation};
use crate::error::{Error, Result};
use crate::field::{rank_of_rows, FieldElement, GaloisField};
use crate::ga::{mutate_block, plan_generation, GaParams, GenerationRecord};
use crate::seed::{derived_rng, Rng};
use crate::topology::{LinkId, NodeId};

pub(crate) const STREAM_NODE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    /// Single input, copied to every output.
    Relay,
    /// Two or more inputs and at least one output: holds a population shard.
    Merging,
    Sink,
}

/// How sinks judge the pilot vectors they receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkPolicy {
    /// Full rank R required.
    #[default]
    RankCheck,
    /// Every chromosome passes; isolates the coding-link totals.
    AlwaysPass,
}

/// Settings shared by every node for one run.
#[derive(Debug, Clone)]
pub struct ProtocolContext {
    pub params: GaParams,
    pub field: GaloisField,
    pub rate: usize,
    pub sink_policy: SinkPolicy,
}

impl ProtocolContext {
    fn node_rng(&self, node: NodeId, generation: usize) -> Rng {
        derived_rng(self.params.seed, &[STREAM_NODE, node as u64, generation as u64])
    }

    fn population(&self) -> usize {
        self.params.population_size
    }
}

/// Per-node work counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NodeCounters {
    /// Field multiply-accumulate terms of the random linear combinations.
    pub coding_terms: u64,
    /// Field elements copied by relays.
    pub copied_elements: u64,
    /// Rank tests performed by sinks.
    pub rank_tests: u64,
    pub messages_received: u64,
    pub messages_sent: u64,
}

/// The coding vectors of one merging node for all N chromosomes: for each
/// chromosome, one block of `d_in` bits per outgoing link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    population: usize,
    d_in: usize,
    d_out: usize,
    bits: Vec<bool>,
}

impl Shard {
    pub fn new(population: usize, d_in: usize, d_out: usize) -> Self {
        Self { population, d_in, d_out, bits: vec![false; population * d_in * d_out] }
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn column_len(&self) -> usize {
        self.d_in * self.d_out
    }

    /// All blocks of chromosome `i`, in outgoing-link order.
    pub fn column(&self, i: usize) -> &[bool] {
        &self.bits[i * self.column_len()..(i + 1) * self.column_len()]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [bool] {
        let len = self.column_len();
        &mut self.bits[i * len..(i + 1) * len]
    }

    pub fn block(&self, i: usize, j: usize) -> &[bool] {
        &self.column(i)[j * self.d_in..(j + 1) * self.d_in]
    }

    /// Chromosome 0 is all-one; the others are sampled like the centralized
    /// initial population.
    pub fn initialize(&mut self, repr: Representation, rng: &mut Rng) {
        self.column_mut(0).fill(true);
        for i in 1..self.population {
            let d_in = self.d_in;
            for block in self.column_mut(i).chunks_mut(d_in) {
                match repr {
                    Representation::BitWise => block.iter_mut().for_each(|b| *b = rng.gen_bool(0.5)),
                    Representation::BlockWise => {
                        let idx = rng.gen_range(0..allowed_block_strings(block.len()));
                        crate::chromosome::write_allowed_block(block, idx);
                    }
                }
            }
        }
    }

    /// Number of blocks of chromosome `i` with two or more active bits.
    pub fn coding_links(&self, i: usize) -> u32 {
        (0..self.d_out).filter(|&j| self.block(i, j).iter().filter(|&&b| b).count() >= 2).count() as u32
    }
}

/// Selection by index, block (or bit) crossover of flagged pairs, then mutation.
pub fn apply_local_genetic_ops(
    shard: &mut Shard,
    cv: &CoordinationVector,
    params: &GaParams,
    rng: &mut Rng,
) -> Result<()> {
    let n = shard.population;
    if cv.selected.len() != n || cv.crossover.len() != n / 2 {
        return Err(Error::Protocol(format!(
            "coordination vector sized for {} chromosomes, shard holds {n}",
            cv.selected.len()
        )));
    }
    if let Some(&bad) = cv.selected.iter().find(|&&i| i >= n) {
        return Err(Error::Protocol(format!("selected index {bad} out of range 0..{n}")));
    }
    let mut next = Shard::new(n, shard.d_in, shard.d_out);
    for (slot, &i) in cv.selected.iter().enumerate() {
        next.column_mut(slot).copy_from_slice(shard.column(i));
    }
    let len = next.column_len();
    let d_in = next.d_in;
    for (p, &flag) in cv.crossover.iter().enumerate() {
        if !flag {
            continue;
        }
        let (left, right) = next.bits.split_at_mut((2 * p + 1) * len);
        let a = &mut left[2 * p * len..];
        let b = &mut right[..len];
        match params.representation {
            Representation::BitWise => {
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    if rng.gen_bool(0.5) {
                        std::mem::swap(x, y);
                    }
                }
            }
            Representation::BlockWise => {
                for (x, y) in a.chunks_mut(d_in).zip(b.chunks_mut(d_in)) {
                    if rng.gen_bool(0.5) {
                        x.swap_with_slice(y);
                    }
                }
            }
        }
    }
    if params.mutation_rate > 0.0 {
        for block in next.bits.chunks_mut(d_in) {
            match params.representation {
                Representation::BitWise => {
                    for b in block {
                        if rng.gen_bool(params.mutation_rate) {
                            *b = !*b;
                        }
                    }
                }
                Representation::BlockWise => {
                    if rng.gen_bool(params.mutation_rate) {
                        mutate_block(block, rng);
                    }
                }
            }
        }
    }
    *shard = next;
    Ok(())
}

/// Bookkeeping held only by the source.
#[derive(Debug, Clone)]
pub struct SourceState {
    select_rng: Rng,
    pub best_so_far: Fitness,
    /// (generation, index) of the best chromosome so far.
    pub best_at: Option<(usize, usize)>,
    pub history: Vec<GenerationRecord>,
    pub fitness_history: Vec<Vec<Fitness>>,
    pub coordination_history: Vec<Arc<CoordinationVector>>,
}

/// What a node sends after handling a burst.
#[derive(Debug, Default)]
pub struct Emission {
    pub forward: Vec<(LinkId, ForwardMessage)>,
    pub backward: Vec<(LinkId, FitnessPacket)>,
}

/// A complete burst of input messages.
#[derive(Debug)]
pub enum Inbox {
    /// One message per incoming link, in incoming-link order.
    Forward(Vec<ForwardMessage>),
    /// One packet per outgoing link, in outgoing-link order.
    Backward(Vec<FitnessPacket>),
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    in_links: Vec<LinkId>,
    out_links: Vec<LinkId>,
    shard: Option<Shard>,
    archive: Option<Vec<bool>>,
    source: Option<SourceState>,
    pub counters: NodeCounters,
}

impl NodeState {
    pub fn new(id: NodeId, role: Role, in_links: Vec<LinkId>, out_links: Vec<LinkId>, ctx: &ProtocolContext) -> Self {
        let source = (role == Role::Source).then(|| SourceState {
            select_rng: derived_rng(ctx.params.seed, &[crate::ga::STREAM_SELECT]),
            best_so_far: Fitness::Infeasible,
            best_at: None,
            history: Vec::new(),
            fitness_history: Vec::new(),
            coordination_history: Vec::new(),
        });
        Self { id, role, in_links, out_links, shard: None, archive: None, source, counters: NodeCounters::default() }
    }

    pub fn in_links(&self) -> &[LinkId] {
        &self.in_links
    }

    pub fn out_links(&self) -> &[LinkId] {
        &self.out_links
    }

    pub fn shard(&self) -> Option<&Shard> {
        self.shard.as_ref()
    }

    /// Installs a given shard instead of a random one.
    pub fn set_shard(&mut self, shard: Shard) {
        self.shard = Some(shard);
    }

    pub fn archive(&self) -> Option<&[bool]> {
        self.archive.as_deref()
    }

    pub fn source_state(&self) -> Option<&SourceState> {
        self.source.as_ref()
    }

    /// The source's opening burst: the optimize signal followed by the first pilots.
    pub fn start(&mut self, ctx: &ProtocolContext) -> Emission {
        let mut out = Emission::default();
        for &l in &self.out_links {
            out.forward.push((l, ForwardMessage::Optimize { rate: ctx.rate as u32, population: ctx.population() }));
        }
        out.forward.extend(self.source_pilots(1, None, ctx));
        self.counters.messages_sent += out.forward.len() as u64;
        out
    }

    pub fn handle(&mut self, inbox: Inbox, ctx: &ProtocolContext) -> Result<Emission> {
        let out = match inbox {
            Inbox::Forward(msgs) => {
                self.counters.messages_received += msgs.len() as u64;
                self.forward_round(msgs, ctx)?
            }
            Inbox::Backward(packets) => {
                self.counters.messages_received += packets.len() as u64;
                self.backward_round(packets, ctx)?
            }
        };
        self.counters.messages_sent += (out.forward.len() + out.backward.len()) as u64;
        Ok(out)
    }

    fn source_pilots(
        &mut self,
        generation: usize,
        coordination: Option<Arc<CoordinationVector>>,
        ctx: &ProtocolContext,
    ) -> Vec<(LinkId, ForwardMessage)> {
        let mut rng = ctx.node_rng(self.id, generation);
        let len = ctx.population() * ctx.rate;
        self.out_links
            .iter()
            .map(|&l| {
                let vectors = (0..len).map(|_| ctx.field.random_element(&mut rng, false)).collect();
                (l, ForwardMessage::Pilot(PilotPacket { generation, vectors, coordination: coordination.clone() }))
            })
            .collect()
    }

    /// Handles one burst of forward messages (one per incoming link).
    pub fn forward_round(&mut self, inputs: Vec<ForwardMessage>, ctx: &ProtocolContext) -> Result<Emission> {
        if inputs.len() != self.in_links.len() || inputs.is_empty() {
            return Err(Error::Protocol(format!(
                "node {} expected {} forward messages, got {}",
                self.id,
                self.in_links.len(),
                inputs.len()
            )));
        }
        let kind = inputs[0].kind();
        let generation = inputs[0].generation();
        if inputs.iter().any(|m| m.kind() != kind || m.generation() != generation) {
            return Err(Error::Protocol(format!("node {} received a mixed burst", self.id)));
        }
        let mut out = Emission::default();
        match &inputs[0] {
            ForwardMessage::Optimize { .. } => {
                if self.role == Role::Merging && self.shard.is_none() {
                    let mut shard = Shard::new(ctx.population(), self.in_links.len(), self.out_links.len());
                    shard.initialize(ctx.params.representation, &mut ctx.node_rng(self.id, 0));
                    self.shard = Some(shard);
                }
                self.broadcast(&inputs[0], &mut out);
            }
            ForwardMessage::Transmit { archive } => {
                if let Some(i) = *archive {
                    self.archive_column(i)?;
                }
                self.broadcast(&inputs[0], &mut out);
            }
            ForwardMessage::Pilot(first) => {
                let generation = first.generation;
                let coordination = first.coordination.clone();
                let pilots: Vec<PilotPacket> = inputs
                    .into_iter()
                    .map(|m| match m {
                        ForwardMessage::Pilot(p) => p,
                        _ => unreachable!("burst kinds checked above"),
                    })
                    .collect();
                self.check_pilots(&pilots, ctx)?;
                match self.role {
                    Role::Source => return Err(Error::Protocol("source received pilot vectors".into())),
                    Role::Relay => {
                        for &l in &self.out_links {
                            self.counters.copied_elements += pilots[0].vectors.len() as u64;
                            out.forward.push((l, ForwardMessage::Pilot(pilots[0].clone())));
                        }
                    }
                    Role::Merging => {
                        let mut rng = ctx.node_rng(self.id, generation);
                        if let Some(cv) = &coordination {
                            if let Some(i) = cv.archive {
                                self.archive_column(i)?;
                            }
                            let shard = self.shard.as_mut().ok_or_else(|| missing_shard(self.id))?;
                            apply_local_genetic_ops(shard, cv, &ctx.params, &mut rng)?;
                        }
                        let outputs = self.combine(&pilots, ctx, &mut rng)?;
                        for (&l, vectors) in self.out_links.iter().zip(outputs) {
                            let packet = PilotPacket { generation, vectors, coordination: coordination.clone() };
                            out.forward.push((l, ForwardMessage::Pilot(packet)));
                        }
                    }
                    Role::Sink => {
                        let components = self.rank_test(&pilots, ctx);
                        let packet = FitnessPacket { generation, components };
                        out.backward = self.split_upstream(packet, ctx);
                    }
                }
            }
        }
        Ok(out)
    }

    fn check_pilots(&self, pilots: &[PilotPacket], ctx: &ProtocolContext) -> Result<()> {
        let expected = ctx.population() * ctx.rate;
        match pilots.iter().find(|p| p.vectors.len() != expected) {
            Some(p) => Err(Error::Protocol(format!(
                "node {} received {} pilot elements, expected {expected}",
                self.id,
                p.vectors.len()
            ))),
            None => Ok(()),
        }
    }

    fn broadcast(&self, msg: &ForwardMessage, out: &mut Emission) {
        for &l in &self.out_links {
            out.forward.push((l, msg.clone()));
        }
    }

    fn archive_column(&mut self, i: usize) -> Result<()> {
        if let Some(shard) = &self.shard {
            if i >= shard.population {
                return Err(Error::Protocol(format!("archive index {i} out of range")));
            }
            self.archive = Some(shard.column(i).to_vec());
        }
        Ok(())
    }

    /// Output pilot vector for chromosome i on outgoing link j: the sum over
    /// incoming links k of a_ijk * c * x_ik with a fresh uniform c per term.
    /// Blocks with no active bit therefore send the zero vector.
    fn combine(&mut self, pilots: &[PilotPacket], ctx: &ProtocolContext, rng: &mut Rng) -> Result<Vec<Vec<FieldElement>>> {
        let shard = self.shard.as_ref().ok_or_else(|| missing_shard(self.id))?;
        let (n, r) = (ctx.population(), ctx.rate);
        let field = &ctx.field;
        let mut outputs = vec![vec![0 as FieldElement; n * r]; self.out_links.len()];
        for i in 0..n {
            for (j, output) in outputs.iter_mut().enumerate() {
                let acc = &mut output[i * r..(i + 1) * r];
                for (k, pilot) in pilots.iter().enumerate() {
                    let c = field.random_element(rng, false);
                    let coeff = if shard.block(i, j)[k] { c } else { 0 };
                    for (a, &x) in acc.iter_mut().zip(&pilot.vectors[i * r..(i + 1) * r]) {
                        *a ^= field.mul(coeff, x);
                    }
                }
            }
        }
        self.counters.coding_terms += (n * self.out_links.len() * pilots.len() * r) as u64;
        Ok(outputs)
    }

    fn rank_test(&mut self, pilots: &[PilotPacket], ctx: &ProtocolContext) -> Vec<Fitness> {
        let (n, r) = (ctx.population(), ctx.rate);
        (0..n)
            .map(|i| {
                if ctx.sink_policy == SinkPolicy::AlwaysPass {
                    return Fitness::Finite(0);
                }
                self.counters.rank_tests += 1;
                let rows: Vec<FieldElement> =
                    pilots.iter().flat_map(|p| p.vectors[i * r..(i + 1) * r].iter().copied()).collect();
                if rank_of_rows(&ctx.field, rows, pilots.len(), r) >= r {
                    Fitness::Finite(0)
                } else {
                    Fitness::Infeasible
                }
            })
            .collect()
    }

    /// Full vector on the lowest-id incoming link, zero vectors on the others.
    fn split_upstream(&self, packet: FitnessPacket, ctx: &ProtocolContext) -> Vec<(LinkId, FitnessPacket)> {
        let parent = *self.in_links.iter().min().expect("non-source node has an incoming link");
        let zeros = FitnessPacket::zeros(packet.generation, ctx.population());
        let mut full = Some(packet);
        self.in_links
            .iter()
            .map(|&l| (l, if l == parent { full.take().expect("single parent") } else { zeros.clone() }))
            .collect()
    }

    /// Handles one burst of fitness packets (one per outgoing link).
    pub fn backward_round(&mut self, inputs: Vec<FitnessPacket>, ctx: &ProtocolContext) -> Result<Emission> {
        if inputs.len() != self.out_links.len() || inputs.is_empty() {
            return Err(Error::Protocol(format!(
                "node {} expected {} fitness packets, got {}",
                self.id,
                self.out_links.len(),
                inputs.len()
            )));
        }
        let n = ctx.population();
        let generation = inputs[0].generation;
        if inputs.iter().any(|p| p.generation != generation || p.components.len() != n) {
            return Err(Error::Protocol(format!("node {} received inconsistent fitness packets", self.id)));
        }
        let mut total: Vec<Fitness> = match &self.shard {
            Some(shard) => (0..n).map(|i| Fitness::Finite(shard.coding_links(i))).collect(),
            None => vec![Fitness::Finite(0); n],
        };
        for p in &inputs {
            for (t, &c) in total.iter_mut().zip(&p.components) {
                *t = *t + c;
            }
        }
        if self.role == Role::Source {
            return self.source_aggregate_and_coordinate(generation, total, ctx);
        }
        let packet = FitnessPacket { generation, components: total };
        Ok(Emission { forward: Vec::new(), backward: self.split_upstream(packet, ctx) })
    }

    /// Records the generation and emits either the next generation's pilots
    /// with a coordination vector or, after the last generation, the transmit signal.
    pub fn source_aggregate_and_coordinate(
        &mut self,
        generation: usize,
        fitness: Vec<Fitness>,
        ctx: &ProtocolContext,
    ) -> Result<Emission> {
        let state = self.source.as_mut().ok_or_else(|| Error::Protocol("aggregation at a non-source node".into()))?;
        let archive = match fitness.iter().enumerate().min_by_key(|&(i, f)| (*f, i)) {
            Some((i, &f)) if f < state.best_so_far => {
                state.best_so_far = f;
                state.best_at = Some((generation, i));
                Some(i)
            }
            _ => None,
        };
        state.history.push(GenerationRecord::from_fitness(generation, &fitness, state.best_so_far));
        let mut out = Emission::default();
        if generation >= ctx.params.generations {
            state.fitness_history.push(fitness);
            self.broadcast(&ForwardMessage::Transmit { archive }, &mut out);
        } else {
            let plan = plan_generation(&fitness, &ctx.params, &mut state.select_rng);
            state.fitness_history.push(fitness);
            let cv = Arc::new(CoordinationVector { selected: plan.selected, crossover: plan.crossover, archive });
            state.coordination_history.push(cv.clone());
            out.forward = self.source_pilots(generation + 1, Some(cv), ctx);
        }
        Ok(out)
    }
}

fn missing_shard(node: NodeId) -> Error {
    Error::Protocol(format!("merging node {node} has no population shard"))
}
