//! Dinic's algorithm specialised to unit-capacity multigraphs.
//!
//! On unit-capacity networks the blocking-flow phases number O(min(E^1/2, V^2/3)),
//! which keeps a single max-flow well inside O(E^2 V^1/2).

use std::collections::VecDeque;

use super::{Link, NodeId};

/// Residual network over a fixed link set. Reusable across several
/// source/sink pairs via [`FlowNetwork::reset`].
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    node_count: usize,
    // arcs 2k (forward) and 2k+1 (reverse) belong to link k
    arc_head: Vec<u32>,
    residual: Vec<u8>,
    adj_start: Vec<usize>,
    adj: Vec<u32>,
    level: Vec<i32>,
    cursor: Vec<usize>,
    queue: VecDeque<usize>,
}

impl FlowNetwork {
    pub fn new(node_count: usize, links: &[Link]) -> Self {
        Self::from_pairs(node_count, links.iter().map(|l| (l.tail, l.head)))
    }

    pub fn from_pairs(node_count: usize, links: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        let mut arc_head = Vec::new();
        let mut arc_tail = Vec::new();
        for (tail, head) in links {
            arc_head.push(head as u32);
            arc_tail.push(tail);
            arc_head.push(tail as u32);
            arc_tail.push(head);
        }
        let arcs = arc_head.len();
        let mut degree = vec![0usize; node_count + 1];
        for &t in &arc_tail {
            degree[t + 1] += 1;
        }
        for v in 0..node_count {
            degree[v + 1] += degree[v];
        }
        let adj_start = degree.clone();
        let mut fill = degree;
        let mut adj = vec![0u32; arcs];
        for (a, &t) in arc_tail.iter().enumerate() {
            adj[fill[t]] = a as u32;
            fill[t] += 1;
        }
        let residual = (0..arcs).map(|a| if a % 2 == 0 { 1 } else { 0 }).collect();
        Self {
            node_count,
            arc_head,
            residual,
            adj_start,
            adj,
            level: vec![-1; node_count],
            cursor: vec![0; node_count],
            queue: VecDeque::with_capacity(node_count),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Clears all flow.
    pub fn reset(&mut self) {
        for (a, r) in self.residual.iter_mut().enumerate() {
            *r = if a % 2 == 0 { 1 } else { 0 };
        }
    }

    /// Augments from `s` to `t` until no augmenting path remains or the flow
    /// reaches `limit`. Returns the flow added by this call.
    pub fn max_flow(&mut self, s: NodeId, t: NodeId, limit: Option<u32>) -> u32 {
        if s == t {
            return 0;
        }
        let limit = limit.unwrap_or(u32::MAX);
        let mut flow = 0;
        while flow < limit && self.build_levels(s, t) {
            self.cursor.copy_from_slice(&self.adj_start[..self.node_count]);
            while flow < limit && self.augment(s, t) {
                flow += 1;
            }
        }
        flow
    }

    fn build_levels(&mut self, s: NodeId, t: NodeId) -> bool {
        self.level.fill(-1);
        self.level[s] = 0;
        self.queue.clear();
        self.queue.push_back(s);
        while let Some(v) = self.queue.pop_front() {
            for &a in &self.adj[self.adj_start[v]..self.adj_start[v + 1]] {
                let a = a as usize;
                let w = self.arc_head[a] as usize;
                if self.residual[a] > 0 && self.level[w] < 0 {
                    self.level[w] = self.level[v] + 1;
                    if w == t {
                        return true;
                    }
                    self.queue.push_back(w);
                }
            }
        }
        self.level[t] >= 0
    }

    /// Finds one unit augmenting path in the level graph (iterative DFS with
    /// per-node cursors so dead arcs are skipped for the rest of the phase).
    fn augment(&mut self, s: NodeId, t: NodeId) -> bool {
        let mut path: Vec<usize> = Vec::new();
        let mut v = s;
        loop {
            if v == t {
                for &a in &path {
                    self.residual[a] -= 1;
                    self.residual[a ^ 1] += 1;
                }
                return true;
            }
            let end = self.adj_start[v + 1];
            let mut advanced = false;
            while self.cursor[v] < end {
                let a = self.adj[self.cursor[v]] as usize;
                let w = self.arc_head[a] as usize;
                if self.residual[a] > 0 && self.level[w] == self.level[v] + 1 {
                    path.push(a);
                    v = w;
                    advanced = true;
                    break;
                }
                self.cursor[v] += 1;
            }
            if !advanced {
                // dead end: retreat and retire the arc that led here
                self.level[v] = -1;
                match path.pop() {
                    None => return false,
                    Some(a) => {
                        v = self.arc_head[a ^ 1] as usize;
                        self.cursor[v] += 1;
                    }
                }
            }
        }
    }

    /// Nodes reachable from `s` in the current residual network.
    pub fn residual_reachable_from(&self, s: NodeId) -> Vec<bool> {
        self.residual_search(s, true)
    }

    /// Nodes that can reach `t` in the current residual network.
    pub fn residual_reaching(&self, t: NodeId) -> Vec<bool> {
        self.residual_search(t, false)
    }

    fn residual_search(&self, start: NodeId, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.node_count];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &a in &self.adj[self.adj_start[v]..self.adj_start[v + 1]] {
                let a = a as usize;
                let w = self.arc_head[a] as usize;
                // backward search walks arcs w->v, i.e. the partner of a
                let usable = if forward { self.residual[a] > 0 } else { self.residual[a ^ 1] > 0 };
                if usable && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum link cut by enumerating every node set that contains `s` but not `t`.
    fn min_cut_oracle(n: usize, links: &[Link], s: usize, t: usize) -> u32 {
        let mut best = u32::MAX;
        for mask in 0u32..(1 << n) {
            if mask & (1 << s) == 0 || mask & (1 << t) != 0 {
                continue;
            }
            let cut = links
                .iter()
                .filter(|l| mask & (1 << l.tail) != 0 && mask & (1 << l.head) == 0)
                .count() as u32;
            best = best.min(cut);
        }
        best
    }

    /// Largest number of link-disjoint s-t paths by exhaustive search over path choices.
    fn path_packing_oracle(n: usize, links: &[Link], s: usize, t: usize) -> u32 {
        fn simple_paths(n: usize, links: &[Link], used: &[bool], s: usize, t: usize) -> Vec<Vec<usize>> {
            let mut out = Vec::new();
            let mut path = Vec::new();
            let mut visited = vec![false; n];
            fn dfs(
                v: usize,
                t: usize,
                links: &[Link],
                used: &[bool],
                visited: &mut Vec<bool>,
                path: &mut Vec<usize>,
                out: &mut Vec<Vec<usize>>,
            ) {
                if v == t {
                    out.push(path.clone());
                    return;
                }
                visited[v] = true;
                for (id, l) in links.iter().enumerate() {
                    if !used[id] && l.tail == v && !visited[l.head] {
                        path.push(id);
                        dfs(l.head, t, links, used, visited, path, out);
                        path.pop();
                    }
                }
                visited[v] = false;
            }
            dfs(s, t, links, used, &mut visited, &mut path, &mut out);
            out
        }
        fn go(n: usize, links: &[Link], used: &mut Vec<bool>, s: usize, t: usize) -> u32 {
            let mut best = 0;
            for p in simple_paths(n, links, used, s, t) {
                for &id in &p {
                    used[id] = true;
                }
                best = best.max(1 + go(n, links, used, s, t));
                for &id in &p {
                    used[id] = false;
                }
            }
            best
        }
        let mut used = vec![false; links.len()];
        go(n, links, &mut used, s, t)
    }

    fn graph_strategy(max_nodes: usize, max_links: usize) -> impl Strategy<Value = (usize, Vec<Link>)> {
        (2..=max_nodes).prop_flat_map(move |n| {
            let link = (0..n, 0..n).prop_filter_map("no self-loops", |(a, b)| {
                (a != b).then_some(Link { tail: a, head: b })
            });
            (Just(n), proptest::collection::vec(link, 0..=max_links))
        })
    }

    proptest! {
        #[test]
        fn max_flow_equals_min_cut((n, links) in graph_strategy(8, 20)) {
            let mut net = FlowNetwork::new(n, &links);
            for t in 1..n {
                net.reset();
                prop_assert_eq!(net.max_flow(0, t, None), min_cut_oracle(n, &links, 0, t));
            }
        }

        #[test]
        fn max_flow_equals_path_packing((n, links) in graph_strategy(6, 10)) {
            let t = n - 1;
            prop_assert_eq!(super::super::max_flow(n, &links, 0, t), path_packing_oracle(n, &links, 0, t));
        }

        #[test]
        fn limit_caps_flow((n, links) in graph_strategy(8, 20), limit in 0u32..4) {
            let full = super::super::max_flow(n, &links, 0, n - 1);
            let mut net = FlowNetwork::new(n, &links);
            prop_assert_eq!(net.max_flow(0, n - 1, Some(limit)), full.min(limit));
        }
    }

    #[test]
    fn residual_sets_after_saturation() {
        // s -> a -> t with a single link; after one unit nothing is reachable past s
        let links = [Link { tail: 0, head: 1 }, Link { tail: 1, head: 2 }];
        let mut net = FlowNetwork::new(3, &links);
        assert_eq!(net.max_flow(0, 2, None), 1);
        assert_eq!(net.residual_reachable_from(0), vec![true, false, false]);
        assert_eq!(net.residual_reaching(2), vec![false, false, true]);
    }
}
