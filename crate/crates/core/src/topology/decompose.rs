//! Expansion of merging nodes into incoming/outgoing auxiliary nodes.
//!
//! A merging node `v` with `d_in` incoming and `d_out` outgoing links becomes
//! `d_in` incoming auxiliary nodes `u_i` (one per incoming link) and `d_out`
//! outgoing auxiliary nodes `w_j` (each owning exactly one outgoing link),
//! joined by the `d_in * d_out` inter-aux links `(u_i, w_j)`. Each inter-aux
//! link corresponds to one chromosome bit.

use super::{FlowNetwork, Link, LinkId, MulticastInstance, NodeId};

/// One inserted `(u_i, w_j)` link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterAuxLink {
    /// Merging node of the (virtual-sink augmented) input graph.
    pub node: NodeId,
    /// Position of the incoming link among the node's incoming links.
    pub in_index: usize,
    /// Position of the outgoing link among the node's outgoing links.
    pub out_index: usize,
    pub in_link: LinkId,
    pub out_link: LinkId,
    /// Endpoints in the decomposed graph.
    pub from_aux: NodeId,
    pub to_aux: NodeId,
}

#[derive(Debug, Clone)]
struct BlockInfo {
    out_aux: NodeId,
    out_link: LinkId,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct DecomposedGraph {
    base: MulticastInstance,
    graph: MulticastInstance,
    inter_aux: Vec<InterAuxLink>,
    blocks: Vec<BlockInfo>,
    /// For each base link: the block it leaves from, if its tail was decomposed.
    block_of_out_link: Vec<Option<usize>>,
    /// For each base link: the incoming auxiliary node it now enters, if any.
    in_aux_of_link: Vec<Option<NodeId>>,
}

impl DecomposedGraph {
    /// Decomposes every merging node that is not a sink. Sinks that forward
    /// traffic are first given a virtual sink (see
    /// [`MulticastInstance::with_virtual_sinks`]) and are decomposed as well.
    pub fn new(g: &MulticastInstance) -> Self {
        let base = g.with_virtual_sinks();
        let n = base.node_count();
        let mut names = base.node_names().to_vec();
        let mut in_aux_of_link = vec![None; base.link_count()];
        let mut out_aux_of_link = vec![None; base.link_count()];
        let mut block_of_out_link = vec![None; base.link_count()];
        let mut inter_aux = Vec::new();
        let mut blocks = Vec::new();

        for v in base.coding_candidates().collect::<Vec<_>>() {
            let name = base.node_name(v).to_string();
            let in_aux: Vec<NodeId> = base
                .in_links(v)
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    names.push(format!("{name}#in{i}"));
                    in_aux_of_link[l] = Some(names.len() - 1);
                    names.len() - 1
                })
                .collect();
            for (j, &out_link) in base.out_links(v).iter().enumerate() {
                names.push(format!("{name}#out{j}"));
                let out_aux = names.len() - 1;
                out_aux_of_link[out_link] = Some(out_aux);
                block_of_out_link[out_link] = Some(blocks.len());
                blocks.push(BlockInfo { out_aux, out_link, offset: inter_aux.len(), len: in_aux.len() });
                for (i, &in_link) in base.in_links(v).iter().enumerate() {
                    inter_aux.push(InterAuxLink {
                        node: v,
                        in_index: i,
                        out_index: j,
                        in_link,
                        out_link,
                        from_aux: in_aux[i],
                        to_aux: out_aux,
                    });
                }
            }
        }
        debug_assert!(names.len() >= n);

        let mut links: Vec<Link> = base
            .links()
            .iter()
            .enumerate()
            .map(|(l, link)| Link {
                tail: out_aux_of_link[l].unwrap_or(link.tail),
                head: in_aux_of_link[l].unwrap_or(link.head),
            })
            .collect();
        links.extend(inter_aux.iter().map(|x| Link { tail: x.from_aux, head: x.to_aux }));
        let graph = MulticastInstance::new(names, links, base.source(), base.sinks().to_vec(), base.rate())
            .expect("decomposition of a valid instance is valid");

        Self { base, graph, inter_aux, blocks, block_of_out_link, in_aux_of_link }
    }

    /// The input graph after virtual-sink augmentation.
    pub fn base(&self) -> &MulticastInstance {
        &self.base
    }

    /// The decomposed multigraph. Links `0..base().link_count()` are the
    /// original links (re-attached to auxiliary nodes); link
    /// `base().link_count() + b` is the inter-aux link for chromosome bit `b`.
    pub fn graph(&self) -> &MulticastInstance {
        &self.graph
    }

    /// Inter-aux links in chromosome bit order.
    pub fn inter_aux_links(&self) -> &[InterAuxLink] {
        &self.inter_aux
    }

    /// Number of inter-aux links, i.e. chromosome length.
    pub fn bit_count(&self) -> usize {
        self.inter_aux.len()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Outgoing auxiliary node owning block `b`.
    pub fn block_out_aux(&self, b: usize) -> NodeId {
        self.blocks[b].out_aux
    }

    /// Builds the flow network for a chromosome: inter-aux links with a zero
    /// bit are dropped, outgoing auxiliary nodes left with one input are
    /// contracted into that input, and those left with none are removed along
    /// with their outgoing link. Returns the network and the number of
    /// outgoing auxiliary nodes that keep two or more inputs.
    pub fn reduced_network(&self, bits: &[bool]) -> (FlowNetwork, u32) {
        assert_eq!(bits.len(), self.bit_count(), "chromosome length mismatch");
        let mut pairs = Vec::with_capacity(self.graph.link_count());
        let mut coding = 0;
        // source of each block after contraction: None = no input, Some(node)
        let block_tail: Vec<Option<NodeId>> = self
            .blocks
            .iter()
            .map(|b| {
                let active: Vec<usize> = (b.offset..b.offset + b.len).filter(|&i| bits[i]).collect();
                match active.len() {
                    0 => None,
                    1 => Some(self.inter_aux[active[0]].from_aux),
                    _ => {
                        coding += 1;
                        for &i in &active {
                            pairs.push((self.inter_aux[i].from_aux, b.out_aux));
                        }
                        Some(b.out_aux)
                    }
                }
            })
            .collect();
        for (l, link) in self.base.links().iter().enumerate() {
            let tail = match self.block_of_out_link[l] {
                Some(b) => match block_tail[b] {
                    Some(t) => t,
                    None => continue,
                },
                None => link.tail,
            };
            let head = self.in_aux_of_link[l].unwrap_or(link.head);
            pairs.push((tail, head));
        }
        (FlowNetwork::from_pairs(self.graph.node_count(), pairs), coding)
    }

    /// Whether every sink receives at least the rate under the given chromosome.
    pub fn feasible(&self, bits: &[bool]) -> bool {
        let (mut net, _) = self.reduced_network(bits);
        let rate = self.base.rate();
        self.base.sinks().iter().all(|&t| {
            net.reset();
            net.max_flow(self.base.source(), t, Some(rate)) >= rate
        })
    }

    #[doc(hidden)]
    pub fn block_out_link(&self, b: usize) -> LinkId {
        self.blocks[b].out_link
    }
}
