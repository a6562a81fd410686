use std::sync::Arc;

use serde::Serialize;

use crate::chromosome::Fitness;
use crate::field::FieldElement;

/// Directives computed at the source after each generation: which current
/// chromosomes survive selection (paired in order), which pairs cross, and
/// which index, if any, became the new best so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoordinationVector {
    pub selected: Vec<usize>,
    pub crossover: Vec<bool>,
    pub archive: Option<usize>,
}

/// N pilot vectors of length R, flattened chromosome-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPacket {
    pub generation: usize,
    pub vectors: Vec<FieldElement>,
    pub coordination: Option<Arc<CoordinationVector>>,
}

/// One fitness component per chromosome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitnessPacket {
    pub generation: usize,
    pub components: Vec<Fitness>,
}

impl FitnessPacket {
    pub fn zeros(generation: usize, population: usize) -> Self {
        Self { generation, components: vec![Fitness::Finite(0); population] }
    }
}

/// Messages travelling along link direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardMessage {
    Optimize { rate: u32, population: usize },
    Pilot(PilotPacket),
    Transmit { archive: Option<usize> },
}

impl ForwardMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ForwardMessage::Optimize { .. } => "optimize",
            ForwardMessage::Pilot(_) => "pilot",
            ForwardMessage::Transmit { .. } => "transmit",
        }
    }

    pub fn generation(&self) -> Option<usize> {
        match self {
            ForwardMessage::Pilot(p) => Some(p.generation),
            _ => None,
        }
    }
}

/// Width in bits of one fitness component: values 0..=|E| plus infinity.
pub fn fitness_component_bits(link_count: usize) -> u32 {
    (link_count as f64 + 2.0).log2().ceil() as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_width() {
        assert_eq!(fitness_component_bits(0), 1);
        assert_eq!(fitness_component_bits(2), 2);
        assert_eq!(fitness_component_bits(6), 3);
        assert_eq!(fitness_component_bits(7), 4);
        assert_eq!(fitness_component_bits(87), 7);
    }
}
