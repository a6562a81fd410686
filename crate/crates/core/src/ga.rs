//! Centralized genetic algorithm: initialization with the all-one chromosome,
//! tournament selection, uniform crossover and mutation (bit-wise or
//! block-wise), generational replacement, and a final greedy sweep.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chromosome::{
    allowed_block_index, allowed_block_strings, sample_chromosome, write_allowed_block, Chromosome, Fitness, Layout,
    Representation,
};
use crate::error::{Error, Result};
use crate::evaluate::{DecompositionEvaluator, Evaluator, EvaluatorKind};
use crate::seed::{derive, derived_rng};
use crate::topology::MulticastInstance;

// stream tags for derived generators
pub const STREAM_INIT: u64 = 1;
pub const STREAM_SELECT: u64 = 2;
pub const STREAM_VARY: u64 = 3;
pub const STREAM_EVAL: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_probability: f64,
    pub mutation_rate: f64,
    pub representation: Representation,
    pub evaluator: EvaluatorKind,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self::for_representation(Representation::BlockWise)
    }
}

impl GaParams {
    /// Population 150, 1000 generations, crossover 0.8; tournament 100 and
    /// mutation 0.012 block-wise, tournament 10 and mutation 0.006 bit-wise.
    pub fn for_representation(representation: Representation) -> Self {
        let (tournament_size, mutation_rate) = match representation {
            Representation::BlockWise => (100, 0.012),
            Representation::BitWise => (10, 0.006),
        };
        Self {
            population_size: 150,
            generations: 1000,
            tournament_size,
            crossover_probability: 0.8,
            mutation_rate,
            representation,
            evaluator: EvaluatorKind::Decomposition,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.population_size < 2 {
            return bad(format!("population size {} < 2", self.population_size));
        }
        if self.generations < 1 {
            return bad("generations must be at least 1".into());
        }
        if !(1..=self.population_size).contains(&self.tournament_size) {
            return bad(format!("tournament size {} outside 1..={}", self.tournament_size, self.population_size));
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return bad(format!("crossover probability {} outside [0, 1]", self.crossover_probability));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad(format!("mutation rate {} outside [0, 1]", self.mutation_rate));
        }
        Ok(())
    }
}

/// Initial population: the all-one chromosome at index 0 followed by N-1
/// random chromosomes.
pub fn init_population<R: Rng + ?Sized>(layout: &Layout, params: &GaParams, rng: &mut R) -> Vec<Chromosome> {
    std::iter::once(Chromosome::all_ones(layout))
        .chain((1..params.population_size).map(|_| sample_chromosome(layout, params.representation, rng)))
        .collect()
}

/// Indices of `n` tournament winners. Each tournament draws `size` entrants
/// uniformly with replacement; the lowest fitness wins, ties going to the
/// lowest population index.
pub fn tournament_indices<R: Rng + ?Sized>(fitness: &[Fitness], n: usize, size: usize, rng: &mut R) -> Vec<usize> {
    (0..n)
        .map(|_| {
            (0..size)
                .map(|_| rng.gen_range(0..fitness.len()))
                .min_by_key(|&i| (fitness[i], i))
                .expect("tournament size >= 1")
        })
        .collect()
}

pub fn tournament_select<R: Rng + ?Sized>(
    population: &[Chromosome],
    fitness: &[Fitness],
    tournament_size: usize,
    rng: &mut R,
) -> Vec<Chromosome> {
    assert_eq!(population.len(), fitness.len());
    tournament_indices(fitness, population.len(), tournament_size, rng)
        .into_iter()
        .map(|i| population[i].clone())
        .collect()
}

/// Selection and pairing decisions for one generation. Winners are paired in
/// order: (0, 1), (2, 3), ...; `crossover[p]` says whether pair `p` is crossed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub selected: Vec<usize>,
    pub crossover: Vec<bool>,
}

pub fn plan_generation<R: Rng + ?Sized>(fitness: &[Fitness], params: &GaParams, rng: &mut R) -> SelectionPlan {
    let selected = tournament_indices(fitness, fitness.len(), params.tournament_size, rng);
    let crossover = (0..fitness.len() / 2).map(|_| rng.gen_bool(params.crossover_probability)).collect();
    SelectionPlan { selected, crossover }
}

/// Uniform crossover of a pair in place: every bit (bit-wise) or every whole
/// block (block-wise) is swapped independently with probability 1/2.
pub fn crossover_pair<R: Rng + ?Sized>(
    a: &mut Chromosome,
    b: &mut Chromosome,
    layout: &Layout,
    repr: Representation,
    rng: &mut R,
) {
    match repr {
        Representation::BitWise => {
            for (x, y) in a.bits_mut().iter_mut().zip(b.bits_mut().iter_mut()) {
                if rng.gen_bool(0.5) {
                    std::mem::swap(x, y);
                }
            }
        }
        Representation::BlockWise => {
            for block in layout.blocks() {
                if rng.gen_bool(0.5) {
                    a.bits_mut()[block.range()].swap_with_slice(&mut b.bits_mut()[block.range()]);
                }
            }
        }
    }
}

/// Crosses the pair with probability `p_c`; otherwise returns copies.
pub fn crossover<R: Rng + ?Sized>(
    a: &Chromosome,
    b: &Chromosome,
    layout: &Layout,
    repr: Representation,
    p_c: f64,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let (mut x, mut y) = (a.clone(), b.clone());
    if rng.gen_bool(p_c) {
        crossover_pair(&mut x, &mut y, layout, repr, rng);
    }
    (x, y)
}

/// Replaces a block by a uniformly chosen allowed string other than its current one.
pub fn mutate_block<R: Rng + ?Sized>(block: &mut [bool], rng: &mut R) {
    let choices = allowed_block_strings(block.len());
    let idx = match allowed_block_index(block) {
        Some(current) => {
            let pick = rng.gen_range(0..choices - 1);
            if pick >= current {
                pick + 1
            } else {
                pick
            }
        }
        None => rng.gen_range(0..choices),
    };
    write_allowed_block(block, idx);
}

/// Bit-wise: each bit flips with probability `rate`. Block-wise: each block,
/// with probability `rate`, becomes another allowed string.
pub fn mutate<R: Rng + ?Sized>(c: &mut Chromosome, layout: &Layout, repr: Representation, rate: f64, rng: &mut R) {
    if rate == 0.0 {
        return;
    }
    match repr {
        Representation::BitWise => {
            for bit in c.bits_mut() {
                if rng.gen_bool(rate) {
                    *bit = !*bit;
                }
            }
        }
        Representation::BlockWise => {
            for block in layout.blocks() {
                if rng.gen_bool(rate) {
                    mutate_block(&mut c.bits_mut()[block.range()], rng);
                }
            }
        }
    }
}

/// Builds the next population from `plan`: selection, crossover of flagged
/// pairs, then mutation of every chromosome.
pub fn apply_plan<R: Rng + ?Sized>(
    population: &[Chromosome],
    plan: &SelectionPlan,
    layout: &Layout,
    params: &GaParams,
    rng: &mut R,
) -> Vec<Chromosome> {
    let mut next: Vec<Chromosome> = plan.selected.iter().map(|&i| population[i].clone()).collect();
    for (p, &flag) in plan.crossover.iter().enumerate() {
        if flag {
            let (left, right) = next.split_at_mut(2 * p + 1);
            crossover_pair(&mut left[2 * p], &mut right[0], layout, params.representation, rng);
        }
    }
    for c in &mut next {
        mutate(c, layout, params.representation, params.mutation_rate, rng);
    }
    next
}

/// Repeatedly scans the set bits in ascending order, clearing each one whose
/// removal keeps the chromosome feasible, until a full pass changes nothing.
pub fn greedy_sweep(c: &Chromosome, evaluator: &DecompositionEvaluator) -> Result<Chromosome> {
    c.check_layout(evaluator.layout())?;
    if !evaluator.feasible(c) {
        return Err(Error::Infeasible("greedy sweep needs a feasible chromosome".into()));
    }
    let order: Vec<usize> = (0..c.len()).collect();
    let mut current = c.clone();
    loop {
        let before = current.count_ones();
        current = greedy_remove(&current, evaluator, &order);
        if current.count_ones() == before {
            return Ok(current);
        }
    }
}

/// One pass over `order`, clearing every set bit whose removal keeps feasibility.
pub fn greedy_remove(c: &Chromosome, evaluator: &DecompositionEvaluator, order: &[usize]) -> Chromosome {
    let mut current = c.clone();
    for &i in order {
        if current.bits()[i] {
            current.bits_mut()[i] = false;
            if !evaluator.feasible(&current) {
                current.bits_mut()[i] = true;
            }
        }
    }
    current
}

/// Upper bound R^3 d^2 on coding links after a greedy sweep of an acyclic instance.
pub fn coding_link_bound(g: &MulticastInstance) -> u64 {
    let r = g.rate() as u64;
    let d = g.sinks().len() as u64;
    r.pow(3) * d * d
}

/// Bound `(2B + 1) R^3 d^2` for a cyclic instance, where `B` is the number of
/// links whose removal eliminates every cycle.
pub fn cyclic_coding_link_bound(g: &MulticastInstance, cycle_breaking_links: u64) -> u64 {
    (2 * cycle_breaking_links + 1) * coding_link_bound(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best: Fitness,
    pub best_so_far: Fitness,
    /// Mean over the feasible chromosomes of the generation.
    pub mean: Option<f64>,
    pub feasible: usize,
}

impl GenerationRecord {
    pub fn from_fitness(generation: usize, fitness: &[Fitness], best_so_far: Fitness) -> Self {
        let finite: Vec<u32> = fitness.iter().filter_map(|f| f.finite()).collect();
        let mean = (!finite.is_empty()).then(|| finite.iter().map(|&v| v as f64).sum::<f64>() / finite.len() as f64);
        Self {
            generation,
            best: fitness.iter().copied().min().unwrap_or(Fitness::Infeasible),
            best_so_far,
            mean,
            feasible: finite.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub history: Vec<GenerationRecord>,
    pub best_before_sweep: Fitness,
    pub best_chromosome_before_sweep: Chromosome,
    pub best: Fitness,
    pub best_chromosome: Chromosome,
    pub evaluations: u64,
    pub wall_time: Duration,
}

impl RunStats {
    pub const CSV_HEADER: &'static str = "generation,best,best_so_far,mean,feasible";

    /// Per-generation trace; infeasible values print as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.history {
            let mean = r.mean.map_or_else(|| "inf".to_string(), |m| format!("{m:.4}"));
            writeln!(out, "{},{},{},{},{}", r.generation, r.best, r.best_so_far, mean, r.feasible).unwrap();
        }
        out
    }
}

/// Tracks the best chromosome seen so far; strictly better replaces, ties keep the earlier one.
#[derive(Debug, Clone)]
pub(crate) struct BestSoFar {
    pub fitness: Fitness,
    pub chromosome: Option<Chromosome>,
}

impl BestSoFar {
    pub fn new() -> Self {
        Self { fitness: Fitness::Infeasible, chromosome: None }
    }

    /// Returns the index of the generation's best when it improves the record.
    pub fn offer(&mut self, population: &[Chromosome], fitness: &[Fitness]) -> Option<usize> {
        let (idx, &f) = fitness.iter().enumerate().min_by_key(|&(i, f)| (*f, i))?;
        if f < self.fitness {
            self.fitness = f;
            self.chromosome = Some(population[idx].clone());
            Some(idx)
        } else {
            None
        }
    }
}

/// Runs the genetic algorithm on `g` and greedily sweeps the best chromosome.
pub fn evolve(g: &MulticastInstance, params: &GaParams) -> Result<RunStats> {
    params.validate()?;
    g.require_rate_achievable()?;
    let started = Instant::now();
    let evaluator = params.evaluator.build(g)?;
    let layout = evaluator.layout().clone();
    let mut init_rng = derived_rng(params.seed, &[STREAM_INIT]);
    let mut select_rng = derived_rng(params.seed, &[STREAM_SELECT]);
    let mut vary_rng = derived_rng(params.seed, &[STREAM_VARY]);
    let eval_seed = derive(params.seed, &[STREAM_EVAL]);

    let mut cache: HashMap<Chromosome, Fitness> = HashMap::new();
    let mut evaluations = 0u64;
    let mut population = init_population(&layout, params, &mut init_rng);
    let mut best = BestSoFar::new();
    let mut history = Vec::with_capacity(params.generations);

    for generation in 1..=params.generations {
        let fitness = evaluate_cached(evaluator.as_ref(), &population, eval_seed, &mut cache, &mut evaluations)?;
        if generation == 1 && !fitness[0].is_feasible() {
            return Err(Error::RateUnachievable { rate: g.rate(), min_flow: g.min_sink_flow() });
        }
        best.offer(&population, &fitness);
        history.push(GenerationRecord::from_fitness(generation, &fitness, best.fitness));
        if generation == params.generations {
            break;
        }
        let plan = plan_generation(&fitness, params, &mut select_rng);
        population = apply_plan(&population, &plan, &layout, params, &mut vary_rng);
    }

    let before = best.chromosome.expect("all-one chromosome is feasible");
    let exact = DecompositionEvaluator::new(g);
    let swept = greedy_sweep(&before, &exact)?;
    let swept_fitness = exact.evaluate(&swept, 0)?;
    Ok(RunStats {
        history,
        best_before_sweep: best.fitness,
        best_chromosome_before_sweep: before,
        best: swept_fitness,
        best_chromosome: swept,
        evaluations,
        wall_time: started.elapsed(),
    })
}

fn evaluate_cached(
    evaluator: &dyn Evaluator,
    population: &[Chromosome],
    eval_seed: u64,
    cache: &mut HashMap<Chromosome, Fitness>,
    evaluations: &mut u64,
) -> Result<Vec<Fitness>> {
    let mut missing: Vec<Chromosome> = population.iter().filter(|c| !cache.contains_key(*c)).cloned().collect();
    missing.sort();
    missing.dedup();
    let fresh = crate::evaluate::evaluate_population(evaluator, &missing, eval_seed)?;
    *evaluations += missing.len() as u64;
    for (c, f) in missing.into_iter().zip(fresh) {
        cache.insert(c, f);
    }
    Ok(population.iter().map(|c| cache[c]).collect())
}
