//! Directed multigraph model of a single-source multicast session.
//!
//! Links are unit capacity; a connection of capacity `c` is modelled as `c`
//! parallel links with distinct ids. Node names are opaque strings in files
//! and dense indices in memory.

mod decompose;
mod flow;
mod generate;
mod io;

pub use decompose::{DecomposedGraph, InterAuxLink};
pub use flow::FlowNetwork;
pub use generate::generate_random_instance;
pub use io::{parse_topology, TopologyDocument, TopologyLink};

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type LinkId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Link {
    pub tail: NodeId,
    pub head: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticastInstance {
    node_names: Vec<String>,
    links: Vec<Link>,
    source: NodeId,
    sinks: Vec<NodeId>,
    rate: u32,
    in_links: Vec<Vec<LinkId>>,
    out_links: Vec<Vec<LinkId>>,
}

/// Result of a topological sort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologicalOrder {
    Acyclic(Vec<NodeId>),
    /// Nodes of one directed cycle, in traversal order.
    Cyclic(Vec<NodeId>),
}

impl MulticastInstance {
    /// Builds and validates an instance. Link ids are the positions in `links`.
    pub fn new(
        node_names: Vec<String>,
        links: Vec<Link>,
        source: NodeId,
        sinks: Vec<NodeId>,
        rate: u32,
    ) -> Result<Self> {
        let n = node_names.len();
        let invalid = |location: String, message: String| Error::InvalidTopology { location, message };

        let mut seen = std::collections::HashSet::new();
        for (i, name) in node_names.iter().enumerate() {
            if !seen.insert(name.as_str()) {
                return Err(invalid(format!("nodes[{i}]"), format!("duplicate node '{name}'")));
            }
        }
        for (id, link) in links.iter().enumerate() {
            if link.tail >= n || link.head >= n {
                return Err(invalid(format!("links[{id}]"), "endpoint is not a declared node".into()));
            }
            if link.tail == link.head {
                return Err(invalid(
                    format!("links[{id}]"),
                    format!("self-loop on '{}'", node_names[link.tail]),
                ));
            }
        }
        if source >= n {
            return Err(invalid("source".into(), "not a declared node".into()));
        }
        if sinks.is_empty() {
            return Err(invalid("sinks".into(), "sink set is empty".into()));
        }
        let mut sink_seen = vec![false; n];
        for (i, &t) in sinks.iter().enumerate() {
            if t >= n {
                return Err(invalid(format!("sinks[{i}]"), "not a declared node".into()));
            }
            if t == source {
                return Err(invalid(format!("sinks[{i}]"), "source cannot be a sink".into()));
            }
            if std::mem::replace(&mut sink_seen[t], true) {
                return Err(invalid(format!("sinks[{i}]"), format!("duplicate sink '{}'", node_names[t])));
            }
        }
        if rate < 1 {
            return Err(invalid("rate".into(), "rate must be at least 1".into()));
        }

        let mut in_links = vec![Vec::new(); n];
        let mut out_links = vec![Vec::new(); n];
        for (id, link) in links.iter().enumerate() {
            out_links[link.tail].push(id);
            in_links[link.head].push(id);
        }
        Ok(Self { node_names, links, source, sinks, rate, in_links, out_links })
    }

    /// Convenience constructor from node names; mostly used by tests and tools.
    pub fn from_names(
        nodes: &[&str],
        links: &[(&str, &str)],
        source: &str,
        sinks: &[&str],
        rate: u32,
    ) -> Result<Self> {
        let names: Vec<String> = nodes.iter().map(|s| s.to_string()).collect();
        let lookup = |name: &str, location: String| {
            names.iter().position(|n| n == name).ok_or_else(|| Error::InvalidTopology {
                location,
                message: format!("undeclared node '{name}'"),
            })
        };
        let mut parsed = Vec::with_capacity(links.len());
        for (i, (a, b)) in links.iter().enumerate() {
            parsed.push(Link {
                tail: lookup(a, format!("links[{i}].from"))?,
                head: lookup(b, format!("links[{i}].to"))?,
            });
        }
        let source = lookup(source, "source".into())?;
        let sinks = sinks
            .iter()
            .enumerate()
            .map(|(i, t)| lookup(t, format!("sinks[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(names, parsed, source, sinks, rate)
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> Link {
        self.links[id]
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.node_names[node]
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_names.iter().position(|n| n == name)
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn sinks(&self) -> &[NodeId] {
        &self.sinks
    }

    pub fn is_sink(&self, node: NodeId) -> bool {
        self.sinks.contains(&node)
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    /// Incoming link ids of `node`, ascending.
    pub fn in_links(&self, node: NodeId) -> &[LinkId] {
        &self.in_links[node]
    }

    /// Outgoing link ids of `node`, ascending.
    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node]
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.in_links[node].len()
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.out_links[node].len()
    }

    /// Nodes with two or more incoming links (parallel links count separately).
    pub fn merging_nodes(&self) -> Vec<NodeId> {
        (0..self.node_count()).filter(|&v| self.in_degree(v) >= 2).collect()
    }

    /// Nodes whose outgoing links carry coding decisions: merging nodes that
    /// are neither the source nor a sink and have at least one outgoing link.
    pub(crate) fn coding_candidates(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count()).filter(move |&v| {
            v != self.source && self.in_degree(v) >= 2 && self.out_degree(v) >= 1 && !self.is_sink(v)
        })
    }

    pub fn topological_order(&self) -> TopologicalOrder {
        let n = self.node_count();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.in_degree(v)).collect();
        let mut queue: VecDeque<NodeId> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &l in &self.out_links[v] {
                let h = self.links[l].head;
                indeg[h] -= 1;
                if indeg[h] == 0 {
                    queue.push_back(h);
                }
            }
        }
        if order.len() == n {
            return TopologicalOrder::Acyclic(order);
        }
        // Every unsorted node still has an unsorted predecessor; walking
        // predecessors must revisit a node.
        let mut start = (0..n).find(|&v| indeg[v] > 0).expect("unsorted node exists");
        let mut visited_at = vec![usize::MAX; n];
        let mut walk = Vec::new();
        loop {
            if visited_at[start] != usize::MAX {
                let mut cycle = walk[visited_at[start]..].to_vec();
                cycle.reverse();
                return TopologicalOrder::Cyclic(cycle);
            }
            visited_at[start] = walk.len();
            walk.push(start);
            start = self.in_links[start]
                .iter()
                .map(|&l| self.links[l].tail)
                .find(|&u| indeg[u] > 0)
                .expect("unsorted node has an unsorted predecessor");
        }
    }

    pub fn is_acyclic(&self) -> bool {
        matches!(self.topological_order(), TopologicalOrder::Acyclic(_))
    }

    /// Returns an error naming one cycle when the graph is cyclic.
    pub fn require_acyclic(&self) -> Result<Vec<NodeId>> {
        match self.topological_order() {
            TopologicalOrder::Acyclic(order) => Ok(order),
            TopologicalOrder::Cyclic(cycle) => Err(Error::Cyclic(
                cycle.into_iter().map(|v| self.node_names[v].clone()).collect(),
            )),
        }
    }

    /// Value of a maximum integral `s`-`t` flow with unit link capacities.
    pub fn max_flow(&self, s: NodeId, t: NodeId) -> u32 {
        max_flow(self.node_count(), &self.links, s, t)
    }

    /// Max-flow from the source to each sink, in sink order.
    pub fn sink_flows(&self) -> Vec<u32> {
        let mut net = FlowNetwork::new(self.node_count(), &self.links);
        self.sinks
            .iter()
            .map(|&t| {
                net.reset();
                net.max_flow(self.source, t, None)
            })
            .collect()
    }

    pub fn min_sink_flow(&self) -> u32 {
        self.sink_flows().into_iter().min().unwrap_or(0)
    }

    /// True when every sink can receive `rate` units with coding allowed everywhere.
    pub fn rate_achievable(&self) -> bool {
        let mut net = FlowNetwork::new(self.node_count(), &self.links);
        self.sinks.iter().all(|&t| {
            net.reset();
            net.max_flow(self.source, t, Some(self.rate)) >= self.rate
        })
    }

    pub fn require_rate_achievable(&self) -> Result<()> {
        if self.rate_achievable() {
            Ok(())
        } else {
            Err(Error::RateUnachievable { rate: self.rate, min_flow: self.min_sink_flow() })
        }
    }

    /// Copy of this instance keeping only the links for which `keep` is true.
    /// Link ids are renumbered densely, preserving relative order.
    pub fn with_links_filtered(&self, mut keep: impl FnMut(LinkId) -> bool) -> MulticastInstance {
        let links = (0..self.link_count()).filter(|&l| keep(l)).map(|l| self.links[l]).collect();
        MulticastInstance::new(
            self.node_names.clone(),
            links,
            self.source,
            self.sinks.clone(),
            self.rate,
        )
        .expect("subgraph of a valid instance is valid")
    }

    /// Replaces every sink that has outgoing links by a virtual sink fed from
    /// it through `rate` parallel links. Returns `self` unchanged when no sink
    /// forwards traffic.
    pub fn with_virtual_sinks(&self) -> MulticastInstance {
        if self.sinks.iter().all(|&t| self.out_degree(t) == 0) {
            return self.clone();
        }
        let mut names = self.node_names.clone();
        let mut links = self.links.clone();
        let mut sinks = Vec::with_capacity(self.sinks.len());
        for &t in &self.sinks {
            if self.out_degree(t) == 0 {
                sinks.push(t);
                continue;
            }
            let mut name = format!("{}#virtual", self.node_names[t]);
            while names.contains(&name) {
                name.push('#');
            }
            names.push(name);
            let virtual_sink = names.len() - 1;
            for _ in 0..self.rate {
                links.push(Link { tail: t, head: virtual_sink });
            }
            sinks.push(virtual_sink);
        }
        MulticastInstance::new(names, links, self.source, sinks, self.rate)
            .expect("virtual sink augmentation preserves validity")
    }

    /// Restricts the instance to nodes that lie on some source-to-sink path.
    /// Node and link ids are renumbered; relative order is preserved.
    pub fn restrict_to_multicast_paths(&self) -> MulticastInstance {
        let n = self.node_count();
        let forward = self.reachable(self.source, true);
        let mut backward = vec![false; n];
        for &t in &self.sinks {
            for (v, hit) in self.reachable(t, false).into_iter().enumerate() {
                backward[v] |= hit;
            }
        }
        let keep: Vec<bool> = (0..n).map(|v| forward[v] && backward[v]).collect();
        let mut remap = vec![usize::MAX; n];
        let mut names = Vec::new();
        for v in 0..n {
            if keep[v] {
                remap[v] = names.len();
                names.push(self.node_names[v].clone());
            }
        }
        let links = self
            .links
            .iter()
            .filter(|l| keep[l.tail] && keep[l.head])
            .map(|l| Link { tail: remap[l.tail], head: remap[l.head] })
            .collect();
        // Sinks unreachable from the source are kept (isolated) so that the
        // instance stays well-formed and reports the infeasibility.
        let mut sinks = Vec::new();
        for &t in &self.sinks {
            if !keep[t] {
                remap[t] = names.len();
                names.push(self.node_names[t].clone());
            }
            sinks.push(remap[t]);
        }
        if !keep[self.source] {
            remap[self.source] = names.len();
            names.push(self.node_names[self.source].clone());
        }
        MulticastInstance::new(names, links, remap[self.source], sinks, self.rate)
            .expect("restriction of a valid instance is valid")
    }

    fn reachable(&self, from: NodeId, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        seen[from] = true;
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            let adj = if forward { &self.out_links[v] } else { &self.in_links[v] };
            for &l in adj {
                let w = if forward { self.links[l].head } else { self.links[l].tail };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Greedily removes links, in ascending link-id order, that lie on a
    /// directed cycle and whose removal keeps every sink max-flow at or above
    /// the rate. Fails when cycles remain after the pass.
    pub fn make_acyclic_subgraph(&self) -> Result<MulticastInstance> {
        self.require_rate_achievable()?;
        let mut removed = vec![false; self.link_count()];
        if self.is_acyclic() {
            return Ok(self.clone());
        }
        for l in 0..self.link_count() {
            if !self.on_cycle(l, &removed) {
                continue;
            }
            removed[l] = true;
            if !self.with_links_filtered(|id| !removed[id]).rate_achievable() {
                removed[l] = false;
            }
        }
        let result = self.with_links_filtered(|id| !removed[id]);
        match result.topological_order() {
            TopologicalOrder::Acyclic(_) => Ok(result),
            TopologicalOrder::Cyclic(cycle) => Err(Error::NoAcyclicSubgraph(format!(
                "cycle {:?} cannot be broken without dropping below rate {}",
                cycle.iter().map(|&v| result.node_name(v)).collect::<Vec<_>>(),
                self.rate
            ))),
        }
    }

    /// Whether link `l` lies on a directed cycle of the graph without `removed` links.
    fn on_cycle(&self, l: LinkId, removed: &[bool]) -> bool {
        let Link { tail, head } = self.links[l];
        let mut seen = vec![false; self.node_count()];
        seen[head] = true;
        let mut stack = vec![head];
        while let Some(v) = stack.pop() {
            if v == tail {
                return true;
            }
            for &e in &self.out_links[v] {
                if removed[e] {
                    continue;
                }
                let w = self.links[e].head;
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    }
}

/// Maximum integral `s`-`t` flow in a unit-capacity multigraph.
pub fn max_flow(node_count: usize, links: &[Link], s: NodeId, t: NodeId) -> u32 {
    FlowNetwork::new(node_count, links).max_flow(s, t, None)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn names(g: &MulticastInstance, nodes: &[NodeId]) -> Vec<String> {
        nodes.iter().map(|&v| g.node_name(v).to_string()).collect()
    }

    #[test]
    fn butterfly_merging_nodes() {
        let g = butterfly();
        assert_eq!(names(&g, &g.merging_nodes()), vec!["z", "t1", "t2"]);
    }

    #[test]
    fn path_has_no_merging_nodes() {
        let g = MulticastInstance::from_names(&["s", "a", "t"], &[("s", "a"), ("a", "t")], "s", &["t"], 1)
            .unwrap();
        assert!(g.merging_nodes().is_empty());
    }

    #[test]
    fn parallel_links_make_a_merging_node() {
        let g = MulticastInstance::from_names(&["s", "t"], &[("s", "t"), ("s", "t")], "s", &["t"], 2)
            .unwrap();
        assert_eq!(names(&g, &g.merging_nodes()), vec!["t"]);
        assert_eq!(g.max_flow(0, 1), 2);
    }

    #[test]
    fn butterfly_topological_order_starts_at_source() {
        let g = butterfly();
        let TopologicalOrder::Acyclic(order) = g.topological_order() else { panic!("cyclic") };
        assert_eq!(order[0], g.source());
        let pos: Vec<usize> = (0..g.node_count()).map(|v| order.iter().position(|&x| x == v).unwrap()).collect();
        for l in g.links() {
            assert!(pos[l.tail] < pos[l.head]);
        }
    }

    #[test]
    fn three_cycle_is_reported() {
        let g = MulticastInstance::from_names(
            &["s", "a", "b", "c"],
            &[("s", "a"), ("a", "b"), ("b", "c"), ("c", "a")],
            "s",
            &["c"],
            1,
        )
        .unwrap();
        let TopologicalOrder::Cyclic(cycle) = g.topological_order() else { panic!("acyclic") };
        let mut got = names(&g, &cycle);
        got.sort();
        assert_eq!(got, vec!["a", "b", "c"]);
        // consecutive nodes are joined by links
        for i in 0..cycle.len() {
            let (u, v) = (cycle[i], cycle[(i + 1) % cycle.len()]);
            assert!(g.links().iter().any(|l| l.tail == u && l.head == v));
        }
    }

    #[test]
    fn linkless_graph_orders_all_nodes() {
        let g = MulticastInstance::from_names(&["s", "t", "x"], &[], "s", &["t"], 1).unwrap();
        let TopologicalOrder::Acyclic(order) = g.topological_order() else { panic!() };
        assert_eq!(order.len(), 3);
    }

    #[test]
    fn butterfly_flows() {
        let g = butterfly();
        assert_eq!(g.sink_flows(), vec![2, 2]);
        assert!(g.rate_achievable());
        let unreachable = MulticastInstance::from_names(&["s", "t"], &[("t", "s")], "s", &["t"], 1).unwrap();
        assert_eq!(unreachable.max_flow(0, 1), 0);
    }

    #[test]
    fn validation_errors() {
        assert!(MulticastInstance::from_names(&["s", "t"], &[("s", "t")], "s", &["t"], 0).is_err());
        assert!(MulticastInstance::from_names(&["s", "t"], &[("s", "x")], "s", &["t"], 1).is_err());
        assert!(MulticastInstance::from_names(&["s", "t"], &[("s", "s")], "s", &["t"], 1).is_err());
        assert!(MulticastInstance::from_names(&["s", "t"], &[], "s", &[], 1).is_err());
        assert!(MulticastInstance::from_names(&["s", "t"], &[], "s", &["s"], 1).is_err());
    }

    #[test]
    fn acyclic_input_is_unchanged() {
        let g = butterfly();
        assert_eq!(g.make_acyclic_subgraph().unwrap(), g);
    }

    #[test]
    fn back_link_is_pruned() {
        let mut links: Vec<(&str, &str)> = vec![
            ("s", "a"),
            ("s", "b"),
            ("a", "z"),
            ("b", "z"),
            ("z", "w"),
            ("a", "t1"),
            ("b", "t2"),
            ("w", "t1"),
            ("w", "t2"),
        ];
        links.push(("w", "z"));
        let g = MulticastInstance::from_names(&["s", "a", "b", "z", "w", "t1", "t2"], &links, "s", &["t1", "t2"], 2)
            .unwrap();
        assert!(!g.is_acyclic());
        let h = g.make_acyclic_subgraph().unwrap();
        assert!(h.is_acyclic());
        assert_eq!(h.link_count(), 9);
        assert!(!h.links().iter().any(|l| h.node_name(l.tail) == "w" && h.node_name(l.head) == "z"));
        assert_eq!(h.sink_flows(), vec![2, 2]);
    }

    #[test]
    fn needed_two_cycle_cannot_be_pruned() {
        // t1 needs a->b and t2 needs b->a to reach rate 2.
        let g = MulticastInstance::from_names(
            &["s", "a", "b", "t1", "t2"],
            &[
                ("s", "a"),
                ("s", "b"),
                ("a", "b"),
                ("b", "a"),
                ("b", "t1"),
                ("b", "t1"),
                ("a", "t2"),
                ("a", "t2"),
            ],
            "s",
            &["t1", "t2"],
            2,
        )
        .unwrap();
        assert_eq!(g.sink_flows(), vec![2, 2]);
        assert!(matches!(g.make_acyclic_subgraph(), Err(Error::NoAcyclicSubgraph(_))));
    }

    #[test]
    fn virtual_sinks_only_for_forwarding_sinks() {
        let g = butterfly();
        assert_eq!(g.with_virtual_sinks(), g);
        let h = MulticastInstance::from_names(
            &["s", "t1", "t2"],
            &[("s", "t1"), ("t1", "t2"), ("s", "t2")],
            "s",
            &["t1", "t2"],
            1,
        )
        .unwrap();
        let v = h.with_virtual_sinks();
        assert_eq!(v.node_count(), 4);
        assert_eq!(v.node_name(v.sinks()[0]), "t1#virtual");
        assert_eq!(v.sinks()[1], 2);
        assert_eq!(v.link_count(), 4);
    }

    #[test]
    fn restriction_drops_dead_ends() {
        let g = MulticastInstance::from_names(
            &["s", "a", "x", "y", "t"],
            &[("s", "a"), ("a", "t"), ("a", "x"), ("y", "a")],
            "s",
            &["t"],
            1,
        )
        .unwrap();
        let r = g.restrict_to_multicast_paths();
        assert_eq!(r.node_names(), &["s", "a", "t"]);
        assert_eq!(r.link_count(), 2);
    }
}
