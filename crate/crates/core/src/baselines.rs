//! Randomized greedy reference algorithms.
//!
//! `minimal1` first prunes whole links in random order while every sink keeps
//! max-flow at least R, then removes inter-aux links of the surviving
//! subgraph's decomposition in random order. `minimal2` skips the subgraph
//! stage and removes inter-aux links of the full decomposition.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chromosome::Chromosome;
use crate::error::{Error, Result};
use crate::evaluate::{DecompositionEvaluator, Evaluator};
use crate::ga::greedy_remove;
use crate::seed::{rng_from, Rng};
use crate::topology::{FlowNetwork, MulticastInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Minimal1,
    Minimal2,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Minimal1, Method::Minimal2];

    pub fn name(self) -> &'static str {
        match self {
            Method::Minimal1 => "minimal1",
            Method::Minimal2 => "minimal2",
        }
    }

    pub fn run(self, g: &MulticastInstance, rng: &mut Rng) -> Result<BaselineOutcome> {
        match self {
            Method::Minimal1 => minimal1_outcome(g, rng),
            Method::Minimal2 => minimal2_outcome(g, rng),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimal1" => Ok(Method::Minimal1),
            "minimal2" => Ok(Method::Minimal2),
            _ => Err(Error::InvalidParameter(format!("unknown baseline method {s:?}"))),
        }
    }
}

/// Result of a baseline run: the (sub)graph the code lives on, the chromosome
/// over that graph's layout, and its coding-link count.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub instance: MulticastInstance,
    pub chromosome: Chromosome,
    pub coding_links: u32,
}

pub fn minimal1(g: &MulticastInstance, rng: &mut Rng) -> Result<u32> {
    minimal1_outcome(g, rng).map(|o| o.coding_links)
}

pub fn minimal2(g: &MulticastInstance, rng: &mut Rng) -> Result<u32> {
    minimal2_outcome(g, rng).map(|o| o.coding_links)
}

pub fn minimal1_outcome(g: &MulticastInstance, rng: &mut Rng) -> Result<BaselineOutcome> {
    g.require_rate_achievable()?;
    let mut order: Vec<usize> = (0..g.link_count()).collect();
    order.shuffle(rng);
    let mut kept = vec![true; g.link_count()];
    for l in order {
        kept[l] = false;
        if !rate_achievable_with(g, &kept) {
            kept[l] = true;
        }
    }
    let sub = g.with_links_filtered(|l| kept[l]);
    remove_inter_aux(sub, rng)
}

pub fn minimal2_outcome(g: &MulticastInstance, rng: &mut Rng) -> Result<BaselineOutcome> {
    g.require_rate_achievable()?;
    remove_inter_aux(g.clone(), rng)
}

fn rate_achievable_with(g: &MulticastInstance, kept: &[bool]) -> bool {
    let pairs = g.links().iter().zip(kept).filter(|(_, &k)| k).map(|(l, _)| (l.tail, l.head));
    let mut net = FlowNetwork::from_pairs(g.node_count(), pairs);
    g.sinks().iter().all(|&t| {
        net.reset();
        net.max_flow(g.source(), t, Some(g.rate())) >= g.rate()
    })
}

fn remove_inter_aux(instance: MulticastInstance, rng: &mut Rng) -> Result<BaselineOutcome> {
    let ev = DecompositionEvaluator::new(&instance);
    let mut order: Vec<usize> = (0..ev.layout().bit_count()).collect();
    order.shuffle(rng);
    let chromosome = greedy_remove(&Chromosome::all_ones(ev.layout()), &ev, &order);
    let coding_links = ev
        .evaluate(&chromosome, 0)?
        .finite()
        .ok_or_else(|| Error::Infeasible("baseline produced an infeasible code".into()))?;
    Ok(BaselineOutcome { instance, chromosome, coding_links })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub seed: u64,
    pub method: Method,
    pub coding_links: u32,
}

/// Runs `method` once per seed, in parallel; rows come back in seed order.
pub fn run_batch(g: &MulticastInstance, method: Method, seeds: &[u64]) -> Result<Vec<BaselineRow>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let coding_links = method.run(g, &mut rng_from(seed))?.coding_links;
            Ok(BaselineRow { seed, method, coding_links })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ga::coding_link_bound;
    use crate::topology::fixtures::*;
    use crate::topology::generate_random_instance;

    #[test]
    fn butterfly_needs_one_coding_link() {
        for seed in 0..30 {
            for method in Method::ALL {
                assert_eq!(method.run(&butterfly(), &mut rng_from(seed)).unwrap().coding_links, 1, "{method}");
            }
        }
    }

    /// Inclusion-minimal link subsets of `g` that still achieve the rate.
    fn minimal_feasible_subsets(g: &MulticastInstance) -> Vec<Vec<usize>> {
        let m = g.link_count();
        let feasible: Vec<bool> =
            (0u32..1 << m).map(|s| g.with_links_filtered(|l| s & (1 << l) != 0).rate_achievable()).collect();
        (0u32..1 << m)
            .filter(|&s| feasible[s as usize] && (0..m).all(|l| s & (1 << l) == 0 || !feasible[(s & !(1 << l)) as usize]))
            .map(|s| (0..m).filter(|l| s & (1 << l) != 0).collect())
            .collect()
    }

    #[test]
    fn minimal1_on_doubled_butterfly_always_codes() {
        // every minimal subgraph keeps exactly one of the parallel z-w links, i.e. is butterfly B
        let subsets = minimal_feasible_subsets(&butterfly_prime());
        assert_eq!(subsets.len(), 2);
        for s in &subsets {
            assert_eq!(s.len(), 9);
            let sub = butterfly_prime().with_links_filtered(|l| s.contains(&l));
            assert_eq!(sub.to_json(), butterfly().to_json());
        }
        for seed in 0..30 {
            assert_eq!(minimal1(&butterfly_prime(), &mut rng_from(seed)).unwrap(), 1);
        }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..n {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn minimal2_on_doubled_butterfly_matches_order_enumeration() {
        let g = butterfly_prime();
        let ev = DecompositionEvaluator::new(&g);
        let all = Chromosome::all_ones(ev.layout());
        let mut reachable = std::collections::BTreeSet::new();
        for order in permutations(all.len()) {
            let c = greedy_remove(&all, &ev, &order);
            reachable.insert(c.count_coding_links(ev.layout()));
        }
        assert_eq!(reachable.into_iter().collect::<Vec<_>>(), vec![0, 1]);
        let results: Vec<u32> = (0..30).map(|seed| minimal2(&g, &mut rng_from(seed)).unwrap()).collect();
        assert!(results.iter().all(|&r| r <= 1));
        assert!(results.contains(&0));
    }

    #[test]
    fn outcomes_are_feasible_and_bounded() {
        for seed in 0..12 {
            let g = generate_random_instance(18, 38, 3, 2, seed).unwrap();
            for method in Method::ALL {
                let out = method.run(&g, &mut rng_from(seed)).unwrap();
                let ev = DecompositionEvaluator::new(&out.instance);
                assert!(ev.feasible(&out.chromosome));
                assert!(out.instance.rate_achievable());
                assert!(out.coding_links as u64 <= coding_link_bound(&g));
            }
        }
    }

    #[test]
    fn minimal1_subgraph_is_link_minimal() {
        let g = generate_random_instance(15, 30, 2, 2, 4).unwrap();
        let out = minimal1_outcome(&g, &mut rng_from(1)).unwrap();
        let sub = &out.instance;
        for l in 0..sub.link_count() {
            assert!(!sub.with_links_filtered(|x| x != l).rate_achievable(), "link {l} was removable");
        }
    }

    #[test]
    fn infeasible_input_is_rejected() {
        let g = MulticastInstance::from_names(&["s", "t"], &[("s", "t")], "s", &["t"], 2).unwrap();
        for method in Method::ALL {
            assert!(matches!(method.run(&g, &mut rng_from(0)), Err(Error::RateUnachievable { .. })));
        }
    }

    #[test]
    fn batch_is_seed_ordered_and_reproducible() {
        let g = generate_random_instance(20, 40, 3, 2, 9).unwrap();
        let seeds: Vec<u64> = (100..110).collect();
        let a = run_batch(&g, Method::Minimal1, &seeds).unwrap();
        assert_eq!(a, run_batch(&g, Method::Minimal1, &seeds).unwrap());
        assert_eq!(a.iter().map(|r| r.seed).collect::<Vec<_>>(), seeds);
        assert_eq!("minimal2".parse::<Method>().unwrap(), Method::Minimal2);
        assert!("minimal3".parse::<Method>().is_err());
    }
}
