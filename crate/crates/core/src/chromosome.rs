//! Block-structured binary chromosomes.
//!
//! Bit `(i, j)` of a merging node says whether incoming link `i` contributes
//! to outgoing link `j`. The bits for one outgoing link form a block; a block
//! with two or more active bits makes that outgoing link a coding link.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::topology::{LinkId, MulticastInstance, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    /// Every block may take any of its 2^k strings.
    #[serde(rename = "bit")]
    BitWise,
    /// Blocks are restricted to all-zero, the k unit strings and all-one.
    #[serde(rename = "block")]
    BlockWise,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::BitWise => "bit",
            Representation::BlockWise => "block",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub node: NodeId,
    pub out_link: LinkId,
    /// Incoming links of `node`, in bit order.
    pub in_links: Vec<LinkId>,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.in_links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_links.is_empty()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Block structure of the chromosomes for one instance. Node and link ids
/// refer to the instance after virtual-sink augmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
    bit_count: usize,
    fingerprint: u32,
}

pub fn layout_of(g: &MulticastInstance) -> Layout {
    Layout::of(g)
}

impl Layout {
    /// One block per (merging node, outgoing link), sorted by node id then
    /// outgoing link id; bits within a block follow incoming link id.
    pub fn of(g: &MulticastInstance) -> Layout {
        let g = g.with_virtual_sinks();
        let mut blocks = Vec::new();
        let mut offset = 0;
        for v in g.coding_candidates() {
            for &out_link in g.out_links(v) {
                let in_links = g.in_links(v).to_vec();
                let len = in_links.len();
                blocks.push(Block { node: v, out_link, in_links, offset });
                offset += len;
            }
        }
        let mut hasher = Sha256::new();
        for b in &blocks {
            hasher.update(format!("{}:{}:{:?};", b.node, b.out_link, b.in_links).as_bytes());
        }
        let digest = hasher.finalize();
        let fingerprint = u32::from_be_bytes([digest[0], digest[1], digest[2], digest[3]]);
        Layout { blocks, bit_count: offset, fingerprint }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Total chromosome length m.
    pub fn bit_count(&self) -> usize {
        self.bit_count
    }

    /// Number of blocks w.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn fingerprint(&self) -> u32 {
        self.fingerprint
    }

    pub fn search_space_size(&self, repr: Representation) -> Option<u128> {
        match repr {
            Representation::BitWise => 1u128.checked_shl(self.bit_count as u32).filter(|_| self.bit_count < 128),
            Representation::BlockWise => self
                .blocks
                .iter()
                .try_fold(1u128, |acc, b| acc.checked_mul(b.len() as u128 + 2)),
        }
    }

    pub fn search_space_log2(&self, repr: Representation) -> f64 {
        match repr {
            Representation::BitWise => self.bit_count as f64,
            Representation::BlockWise => self.blocks.iter().map(|b| ((b.len() + 2) as f64).log2()).sum(),
        }
    }
}

/// Number of allowed block-wise strings for a block of length `k`.
pub fn allowed_block_strings(k: usize) -> usize {
    k + 2
}

/// Writes allowed string `index` (0 = all-zero, 1..=k = unit vectors, k+1 = all-one).
pub fn write_allowed_block(block: &mut [bool], index: usize) {
    let k = block.len();
    debug_assert!(index < k + 2);
    for (i, bit) in block.iter_mut().enumerate() {
        *bit = index == k + 1 || index == i + 1;
    }
}

/// Index of `block` among the allowed block-wise strings, if it is one.
pub fn allowed_block_index(block: &[bool]) -> Option<usize> {
    let ones = block.iter().filter(|&&b| b).count();
    match ones {
        0 => Some(0),
        1 => block.iter().position(|&b| b).map(|i| i + 1),
        n if n == block.len() => Some(block.len() + 1),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chromosome {
    bits: Vec<bool>,
}

impl Chromosome {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn all_ones(layout: &Layout) -> Self {
        Self { bits: vec![true; layout.bit_count()] }
    }

    pub fn zeros(layout: &Layout) -> Self {
        Self { bits: vec![false; layout.bit_count()] }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn block<'a>(&'a self, b: &Block) -> &'a [bool] {
        &self.bits[b.range()]
    }

    /// Number of blocks with at least two active bits.
    pub fn count_coding_links(&self, layout: &Layout) -> u32 {
        layout
            .blocks()
            .iter()
            .filter(|b| self.block(b).iter().filter(|&&x| x).count() >= 2)
            .count() as u32
    }

    pub fn matches(&self, layout: &Layout) -> bool {
        self.bits.len() == layout.bit_count()
    }

    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        if self.matches(layout) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(format!(
                "chromosome has {} bits, layout expects {}",
                self.bits.len(),
                layout.bit_count()
            )))
        }
    }

    /// True when every block is one of the allowed block-wise strings.
    pub fn is_block_wise(&self, layout: &Layout) -> bool {
        layout.blocks().iter().all(|b| allowed_block_index(self.block(b)).is_some())
    }

    /// Packed bits (MSB first) as hex, prefixed by the layout fingerprint.
    pub fn to_hex(&self, layout: &Layout) -> String {
        let mut out = format!("{:08x}:", layout.fingerprint());
        for chunk in self.bits.chunks(8) {
            let byte = chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)));
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn from_hex(layout: &Layout, text: &str) -> Result<Self> {
        let (prefix, body) = text
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::LayoutMismatch("expected '<fingerprint>:<hex>'".into()))?;
        let fingerprint = u32::from_str_radix(prefix, 16)
            .map_err(|_| Error::LayoutMismatch(format!("bad fingerprint '{prefix}'")))?;
        if fingerprint != layout.fingerprint() {
            return Err(Error::LayoutMismatch(format!(
                "chromosome was made for layout {fingerprint:08x}, not {:08x}",
                layout.fingerprint()
            )));
        }
        let m = layout.bit_count();
        if body.len() != m.div_ceil(8) * 2 {
            return Err(Error::LayoutMismatch(format!("expected {} hex digits", m.div_ceil(8) * 2)));
        }
        let mut bits = Vec::with_capacity(m);
        for i in 0..body.len() / 2 {
            let byte = u8::from_str_radix(&body[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::LayoutMismatch(format!("bad hex '{}'", &body[2 * i..2 * i + 2])))?;
            for k in 0..8 {
                if bits.len() < m {
                    bits.push(byte & (1 << (7 - k)) != 0);
                } else if byte & (1 << (7 - k)) != 0 {
                    return Err(Error::LayoutMismatch("nonzero padding bits".into()));
                }
            }
        }
        Ok(Self { bits })
    }
}

/// Random chromosome: each block uniform over its allowed strings
/// (block-wise) or each bit uniform (bit-wise).
pub fn sample_chromosome<R: Rng + ?Sized>(layout: &Layout, repr: Representation, rng: &mut R) -> Chromosome {
    let mut c = Chromosome::zeros(layout);
    match repr {
        Representation::BitWise => c.bits.iter_mut().for_each(|b| *b = rng.gen()),
        Representation::BlockWise => {
            for b in layout.blocks() {
                let idx = rng.gen_range(0..allowed_block_strings(b.len()));
                write_allowed_block(&mut c.bits[b.range()], idx);
            }
        }
    }
    c
}

pub fn search_space_size(layout: &Layout, repr: Representation) -> Option<u128> {
    layout.search_space_size(repr)
}

/// Fitness of a chromosome: its coding-link count when feasible.
/// `Infeasible` orders above every finite count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fitness {
    Finite(u32),
    Infeasible,
}

impl Fitness {
    pub fn is_feasible(self) -> bool {
        matches!(self, Fitness::Finite(_))
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Fitness::Finite(v) => Some(v),
            Fitness::Infeasible => None,
        }
    }

    pub fn compare(self, other: Fitness) -> Ordering {
        self.cmp(&other)
    }

    pub fn parse(text: &str) -> Option<Fitness> {
        match text {
            "inf" => Some(Fitness::Infeasible),
            t => t.parse().ok().map(Fitness::Finite),
        }
    }
}

impl Add for Fitness {
    type Output = Fitness;

    fn add(self, rhs: Fitness) -> Fitness {
        match (self, rhs) {
            (Fitness::Finite(a), Fitness::Finite(b)) => Fitness::Finite(a + b),
            _ => Fitness::Infeasible,
        }
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fitness::Finite(v) => write!(f, "{v}"),
            Fitness::Infeasible => f.write_str("inf"),
        }
    }
}

/// Serialized as the count, or the string `"inf"`.
impl Serialize for Fitness {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Fitness::Finite(v) => s.serialize_u32(*v),
            Fitness::Infeasible => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Fitness {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u32),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(v) => Ok(Fitness::Finite(v)),
            Repr::Text(t) => Fitness::parse(&t).ok_or_else(|| serde::de::Error::custom(format!("bad fitness {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use crate::topology::fixtures::*;
    use proptest::prelude::*;

    fn single_block(k: usize) -> Layout {
        Layout {
            blocks: vec![Block { node: 0, out_link: 0, in_links: (0..k).collect(), offset: 0 }],
            bit_count: k,
            fingerprint: 0,
        }
    }

    #[test]
    fn butterfly_layouts() {
        let l = layout_of(&butterfly());
        assert_eq!((l.block_count(), l.bit_count()), (1, 2));
        assert_eq!(l.blocks()[0].len(), 2);

        let l = layout_of(&butterfly_prime());
        assert_eq!((l.block_count(), l.bit_count()), (4, 8));
        assert!(l.blocks().iter().all(|b| b.len() == 2));
    }

    #[test]
    fn no_merging_nodes_gives_empty_layout() {
        let g = MulticastInstance::from_names(&["s", "t"], &[("s", "t")], "s", &["t"], 1).unwrap();
        let l = layout_of(&g);
        assert_eq!((l.block_count(), l.bit_count()), (0, 0));
    }

    #[test]
    fn coding_link_counts() {
        let l = layout_of(&butterfly());
        assert_eq!(Chromosome::from_bits(vec![true, true]).count_coding_links(&l), 1);
        assert_eq!(Chromosome::from_bits(vec![true, false]).count_coding_links(&l), 0);
        let lp = layout_of(&butterfly_prime());
        assert_eq!(Chromosome::all_ones(&lp).count_coding_links(&lp), 4);
        let sparse = Chromosome::from_bits(vec![true, false, false, true, false, true, true, false]);
        assert_eq!(sparse.count_coding_links(&lp), 0);
    }

    #[test]
    fn search_space_sizes() {
        let l = layout_of(&butterfly());
        assert_eq!(l.search_space_size(Representation::BlockWise), Some(4));
        assert_eq!(l.search_space_size(Representation::BitWise), Some(4));
        let l3 = single_block(3);
        assert_eq!(l3.search_space_size(Representation::BlockWise), Some(5));
        assert_eq!(l3.search_space_size(Representation::BitWise), Some(8));
        let lp = layout_of(&butterfly_prime());
        assert_eq!(lp.search_space_size(Representation::BlockWise), Some(256));
        assert_eq!(lp.search_space_size(Representation::BitWise), Some(256));
    }

    #[test]
    fn block_wise_samples_are_allowed_strings() {
        let l = single_block(2);
        let mut rng = rng_from(3);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let c = sample_chromosome(&l, Representation::BlockWise, &mut rng);
            assert!(c.is_block_wise(&l));
            seen.insert(c.bits().to_vec());
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn bit_wise_samples_reach_every_string() {
        let l = single_block(3);
        let mut rng = rng_from(4);
        let seen: std::collections::HashSet<_> =
            (0..500).map(|_| sample_chromosome(&l, Representation::BitWise, &mut rng).bits().to_vec()).collect();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn block_wise_sampling_is_uniform() {
        // k = 3: five allowed strings, chi-square with 4 dof over 1e5 draws
        let l = single_block(3);
        let mut rng = rng_from(8);
        let draws = 100_000;
        let mut counts = [0f64; 5];
        for _ in 0..draws {
            let c = sample_chromosome(&l, Representation::BlockWise, &mut rng);
            counts[allowed_block_index(c.bits()).unwrap()] += 1.0;
        }
        let e = draws as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        assert!(chi2 < 4.0 + 5.0 * 8f64.sqrt(), "chi2 {chi2}");
    }

    #[test]
    fn allowed_string_indexing() {
        let mut block = [false; 4];
        for idx in 0..6 {
            write_allowed_block(&mut block, idx);
            assert_eq!(allowed_block_index(&block), Some(idx));
        }
        assert_eq!(allowed_block_index(&[true, true, false]), None);
    }

    #[test]
    fn fitness_order_and_sum() {
        assert!(Fitness::Finite(u32::MAX) < Fitness::Infeasible);
        assert!(Fitness::Finite(0) < Fitness::Finite(1));
        assert_eq!(Fitness::Finite(2) + Fitness::Finite(3), Fitness::Finite(5));
        assert_eq!(Fitness::Finite(2) + Fitness::Infeasible, Fitness::Infeasible);
        assert_eq!(Fitness::parse(&Fitness::Infeasible.to_string()), Some(Fitness::Infeasible));
    }

    #[test]
    fn fitness_json_form() {
        assert_eq!(serde_json::to_string(&[Fitness::Finite(3), Fitness::Infeasible]).unwrap(), r#"[3,"inf"]"#);
        let back: Vec<Fitness> = serde_json::from_str(r#"[0,"inf"]"#).unwrap();
        assert_eq!(back, vec![Fitness::Finite(0), Fitness::Infeasible]);
        assert!(serde_json::from_str::<Fitness>(r#""many""#).is_err());
    }

    #[test]
    fn hex_rejects_foreign_layout() {
        let l = layout_of(&butterfly());
        let lp = layout_of(&butterfly_prime());
        let hex = Chromosome::all_ones(&l).to_hex(&l);
        assert!(matches!(Chromosome::from_hex(&lp, &hex), Err(Error::LayoutMismatch(_))));
    }

    proptest! {
        #[test]
        fn hex_roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..40)) {
            let layout = Layout { blocks: vec![], bit_count: bits.len(), fingerprint: 0xdead_beef };
            let c = Chromosome::from_bits(bits);
            prop_assert_eq!(Chromosome::from_hex(&layout, &c.to_hex(&layout)).unwrap(), c);
        }
    }
}
