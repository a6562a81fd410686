//! Seeded generator of layered acyclic multicast instances.
//!
//! Nodes `n0..n{N-1}` are laid out in index order and every link points from a
//! lower to a higher index, so the result is acyclic by construction. For each
//! sink in turn, short random paths are spliced between a node the source can
//! still reach in the residual network and a node that can still reach the
//! sink, until the sink's max-flow meets the rate. Paths prefer late starting
//! points so later sinks reuse earlier structure (which is what creates
//! merging nodes). The remaining link budget is spent on isolated nodes and
//! random forward links.

use rand::seq::index::sample;
use rand::Rng as _;

use super::{FlowNetwork, Link, MulticastInstance};
use crate::error::{Error, Result};
use crate::seed::{derived_rng, Rng};

const MAX_ATTEMPTS: u64 = 300;

pub fn generate_random_instance(
    n_nodes: usize,
    n_links: usize,
    n_sinks: usize,
    rate: u32,
    seed: u64,
) -> Result<MulticastInstance> {
    if rate < 1 {
        return Err(Error::Generation("rate must be at least 1".into()));
    }
    if n_nodes < 2 || n_sinks < 1 || n_sinks > n_nodes - 1 {
        return Err(Error::Generation(format!(
            "need at least 2 nodes and 1..=nodes-1 sinks (got {n_nodes} nodes, {n_sinks} sinks)"
        )));
    }
    if n_links < rate as usize {
        return Err(Error::Generation(format!(
            "{n_links} links cannot carry rate {rate}: every sink cut would be below the rate"
        )));
    }
    let mut closest = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = derived_rng(seed, &[attempt]);
        let max_hops = match attempt {
            0..=99 => 2,
            100..=199 => 1,
            _ => 0,
        };
        match try_build(n_nodes, n_links, n_sinks, rate, max_hops, &mut rng) {
            Ok(g) => return Ok(g),
            Err(needed) => closest = if closest == 0 { needed } else { closest.min(needed) },
        }
    }
    Err(Error::Generation(format!(
        "no feasible instance after {MAX_ATTEMPTS} attempts; the sparsest construction needed {closest} links \
         but only {n_links} are allowed"
    )))
}

/// Returns the instance, or the number of links the construction needed when
/// it exceeded the budget.
fn try_build(
    n: usize,
    budget: usize,
    n_sinks: usize,
    rate: u32,
    max_hops: usize,
    rng: &mut Rng,
) -> std::result::Result<MulticastInstance, usize> {
    let lo = if n - n.div_ceil(3) >= n_sinks { n.div_ceil(3).max(1) } else { 1 };
    let mut sinks: Vec<usize> = sample(rng, n - lo, n_sinks).into_iter().map(|i| i + lo).collect();
    sinks.sort_unstable();

    let mut links: Vec<Link> = Vec::new();
    for &t in &sinks {
        loop {
            let mut net = FlowNetwork::new(n, &links);
            if net.max_flow(0, t, Some(rate)) >= rate {
                break;
            }
            let reach = net.residual_reachable_from(0);
            let coreach = net.residual_reaching(t);
            let starts: Vec<usize> = (0..t).filter(|&v| reach[v]).collect();
            let u = starts[rng.gen_range(0..starts.len())].max(starts[rng.gen_range(0..starts.len())]);
            let ends: Vec<usize> = (u + 1..=t).filter(|&v| coreach[v]).collect();
            let v = ends[rng.gen_range(0..ends.len().min(3))];
            let hops = rng.gen_range(0..=max_hops).min(v - u - 1);
            let mut path = vec![u];
            if hops > 0 {
                let mut mid: Vec<usize> = sample(rng, v - u - 1, hops).into_iter().map(|i| u + 1 + i).collect();
                mid.sort_unstable();
                path.extend(mid);
            }
            path.push(v);
            links.extend(path.windows(2).map(|w| Link { tail: w[0], head: w[1] }));
            if links.len() > budget {
                return Err(links.len());
            }
        }
    }

    let mut degree = vec![0usize; n];
    for l in &links {
        degree[l.tail] += 1;
        degree[l.head] += 1;
    }
    for x in 1..n {
        if links.len() >= budget {
            break;
        }
        if degree[x] == 0 {
            let tail = rng.gen_range(0..x);
            links.push(Link { tail, head: x });
            degree[tail] += 1;
            degree[x] += 1;
        }
    }
    while links.len() < budget {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            links.push(Link { tail: a.min(b), head: a.max(b) });
        }
    }
    links.sort_unstable_by_key(|l| (l.tail, l.head));

    let names = (0..n).map(|i| format!("n{i}")).collect();
    let g = MulticastInstance::new(names, links, 0, sinks, rate).expect("generated instance is valid");
    debug_assert!(g.rate_achievable());
    Ok(g)
}
