//! Fitness evaluation: number of coding links when the chromosome still lets
//! every sink receive the target rate, `Infeasible` otherwise.
//!
//! Two evaluators are provided. [`DecompositionEvaluator`] runs max-flow on
//! the decomposed graph; it is exact and accepts cyclic graphs.
//! [`AlgebraicEvaluator`] builds random linear codes over GF(2^m) on an
//! acyclic graph and checks the rank of what each sink receives; it may
//! declare a feasible chromosome infeasible, never the reverse.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chromosome::{Chromosome, Fitness, Layout};
use crate::error::{Error, Result};
use crate::field::{rank_of_rows, FieldElement, GaloisField};
use crate::seed::{derive_from_bytes, derived_rng};
use crate::topology::{DecomposedGraph, LinkId, MulticastInstance, NodeId};

pub const DEFAULT_FIELD_BITS: u32 = 16;
pub const DEFAULT_TRIALS: u32 = 2;

pub trait Evaluator: Send + Sync {
    fn layout(&self) -> &Layout;

    /// Evaluates one chromosome. Randomized evaluators draw only from `seed`.
    fn evaluate(&self, c: &Chromosome, seed: u64) -> Result<Fitness>;

    fn is_deterministic(&self) -> bool;
}

/// Which evaluator to use, as chosen in run configurations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvaluatorKind {
    #[default]
    Decomposition,
    Algebraic { field_bits: u32, trials: u32 },
}

impl EvaluatorKind {
    pub fn algebraic_default() -> Self {
        EvaluatorKind::Algebraic { field_bits: DEFAULT_FIELD_BITS, trials: DEFAULT_TRIALS }
    }

    pub fn build(self, g: &MulticastInstance) -> Result<Box<dyn Evaluator>> {
        Ok(match self {
            EvaluatorKind::Decomposition => Box::new(DecompositionEvaluator::new(g)),
            EvaluatorKind::Algebraic { field_bits, trials } => Box::new(AlgebraicEvaluator::new(g, field_bits, trials)?),
        })
    }
}

pub struct DecompositionEvaluator {
    decomposed: DecomposedGraph,
    layout: Layout,
}

impl DecompositionEvaluator {
    pub fn new(g: &MulticastInstance) -> Self {
        let decomposed = DecomposedGraph::new(g);
        let layout = Layout::of(g);
        debug_assert_eq!(decomposed.bit_count(), layout.bit_count());
        Self { decomposed, layout }
    }

    pub fn decomposed(&self) -> &DecomposedGraph {
        &self.decomposed
    }

    pub fn feasible(&self, c: &Chromosome) -> bool {
        self.decomposed.feasible(c.bits())
    }
}

/// Fitness of `c` by max-flow on the decomposed graph.
pub fn evaluate_decomposition(dg: &DecomposedGraph, c: &Chromosome) -> Fitness {
    let (mut net, coding) = dg.reduced_network(c.bits());
    let g = dg.base();
    let rate = g.rate();
    let ok = g.sinks().iter().all(|&t| {
        net.reset();
        net.max_flow(g.source(), t, Some(rate)) >= rate
    });
    if ok {
        Fitness::Finite(coding)
    } else {
        Fitness::Infeasible
    }
}

impl Evaluator for DecompositionEvaluator {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn evaluate(&self, c: &Chromosome, _seed: u64) -> Result<Fitness> {
        c.check_layout(&self.layout)?;
        Ok(evaluate_decomposition(&self.decomposed, c))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

pub struct AlgebraicEvaluator {
    graph: MulticastInstance,
    layout: Layout,
    order: Vec<NodeId>,
    field: GaloisField,
    trials: u32,
    nonzero_coefficients: bool,
    block_of_link: Vec<Option<usize>>,
}

impl AlgebraicEvaluator {
    pub fn new(g: &MulticastInstance, field_bits: u32, trials: u32) -> Result<Self> {
        if trials < 1 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        let field = GaloisField::new(field_bits)?;
        let graph = g.with_virtual_sinks();
        let order = graph.require_acyclic()?;
        let layout = Layout::of(g);
        let mut block_of_link = vec![None; graph.link_count()];
        for (b, block) in layout.blocks().iter().enumerate() {
            block_of_link[block.out_link] = Some(b);
        }
        Ok(Self { graph, layout, order, field, trials, nonzero_coefficients: false, block_of_link })
    }

    /// Draw local coefficients from the nonzero elements only. This departs
    /// from uniform sampling over the whole field and tightens the error.
    pub fn with_nonzero_coefficients(mut self, nonzero: bool) -> Self {
        self.nonzero_coefficients = nonzero;
        self
    }

    pub fn field(&self) -> &GaloisField {
        &self.field
    }

    /// Runs one random code and reports, per sink, whether it can decode.
    pub fn trial(&self, c: &Chromosome, seed: u64) -> Vec<bool> {
        let r = self.graph.rate() as usize;
        let mut symbols = vec![0 as FieldElement; self.graph.link_count() * r];
        self.propagate(c, seed, &mut symbols);
        self.graph
            .sinks()
            .iter()
            .map(|&t| self.sink_rank(t, &symbols) >= r)
            .collect()
    }

    fn propagate(&self, c: &Chromosome, seed: u64, symbols: &mut [FieldElement]) {
        let g = &self.graph;
        let r = g.rate() as usize;
        let mut rng = derived_rng(seed, &[]);
        let slot = |l: LinkId| l * r..(l + 1) * r;
        for &v in &self.order {
            let outs = g.out_links(v);
            if outs.is_empty() {
                continue;
            }
            if v == g.source() {
                for &l in outs {
                    for x in &mut symbols[slot(l)] {
                        *x = self.field.random_element(&mut rng, false);
                    }
                }
                continue;
            }
            let ins = g.in_links(v);
            match self.block_of_link[outs[0]] {
                Some(_) => {
                    for &l in outs {
                        let block = &self.layout.blocks()[self.block_of_link[l].expect("coding node link")];
                        let mut acc = vec![0; r];
                        for (&in_link, &active) in ins.iter().zip(c.block(block)) {
                            if active {
                                let coeff = self.field.random_element(&mut rng, self.nonzero_coefficients);
                                self.field.axpy(&mut acc, coeff, &symbols[slot(in_link)]);
                            }
                        }
                        symbols[slot(l)].copy_from_slice(&acc);
                    }
                }
                None => {
                    // single input (or none): forward unchanged
                    let input: Vec<FieldElement> = match ins.first() {
                        Some(&i) => symbols[slot(i)].to_vec(),
                        None => vec![0; r],
                    };
                    for &l in outs {
                        symbols[slot(l)].copy_from_slice(&input);
                    }
                }
            }
        }
    }

    fn sink_rank(&self, t: NodeId, symbols: &[FieldElement]) -> usize {
        let r = self.graph.rate() as usize;
        let ins = self.graph.in_links(t);
        let mut m = Vec::with_capacity(ins.len() * r);
        for &l in ins {
            m.extend_from_slice(&symbols[l * r..(l + 1) * r]);
        }
        rank_of_rows(&self.field, m, ins.len(), r)
    }
}

/// Fitness of `c` by random linear coding. A sink passes when some trial
/// gives it full rank; the chromosome is feasible when every sink passes.
pub fn evaluate_algebraic(ev: &AlgebraicEvaluator, c: &Chromosome, seed: u64) -> Result<Fitness> {
    c.check_layout(&ev.layout)?;
    let mut passed = vec![false; ev.graph.sinks().len()];
    for trial in 0..ev.trials {
        for (p, ok) in passed.iter_mut().zip(ev.trial(c, derive_from_bytes(seed, &trial.to_le_bytes()))) {
            *p |= ok;
        }
        if passed.iter().all(|&p| p) {
            return Ok(Fitness::Finite(c.count_coding_links(&ev.layout)));
        }
    }
    Ok(Fitness::Infeasible)
}

impl Evaluator for AlgebraicEvaluator {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn evaluate(&self, c: &Chromosome, seed: u64) -> Result<Fitness> {
        evaluate_algebraic(self, c, seed)
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Seed used for one chromosome: a function of the run seed and the
/// chromosome's contents, so results do not depend on evaluation order.
pub fn chromosome_seed(base_seed: u64, c: &Chromosome) -> u64 {
    let packed: Vec<u8> = c
        .bits()
        .chunks(8)
        .map(|ch| ch.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i)))
        .collect();
    derive_from_bytes(base_seed ^ c.len() as u64, &packed)
}

/// Evaluates a population element-wise (possibly in parallel), preserving order.
pub fn evaluate_population(
    evaluator: &dyn Evaluator,
    population: &[Chromosome],
    base_seed: u64,
) -> Result<Vec<Fitness>> {
    let results: Vec<Result<Fitness>> = population
        .par_iter()
        .map(|c| evaluator.evaluate(c, chromosome_seed(base_seed, c)))
        .collect();
    results.into_iter().collect()
}
