//! Projective self-repairing codes.
//!
//! An object of `dim` fragments is encoded over the `node_count` elements of
//! a spread of GF(2)^dim, each node storing `alpha` XOR combinations of the
//! fragments. Any failed node can be regenerated from two live nodes, and
//! the object is decodable from most `k`-node subsets.
//!
//! - [`gf2`]: GF(2^m) tables and GF(2) linear algebra.
//! - [`spread`]: parameters and the coset layout.
//! - [`codec`]: encoding, decoding, systematic retrieval, piece files.
//! - [`repair`]: repair partners, pair repair, minimal-download plans.
//! - [`resilience`]: retrievability tables, availability curves, bandwidth comparison.
//! - [`sim`]: a deterministic storage cluster simulator.

use std::fmt;

pub mod codec;
pub mod gf2;
pub mod repair;
pub mod resilience;
pub mod sim;
pub mod spread;

pub use codec::{decode, encode, systematic_map, CodecError, NodePieces, ObjectData, Piece};
pub use gf2::{rank, solve_xor, BitVector, GfContext, GfError, PolyTable};
pub use repair::{RepairError, RepairPlan};
pub use resilience::{AvailabilityCurve, RhoTable};
pub use spread::{CodeParams, LayoutError, SpreadLayout, SpreadReport};

/// A 1-based storage node name, `N_1 ..= N_n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn new(id: u32) -> Option<Self> {
        (id >= 1).then_some(NodeId(id))
    }

    pub fn from_index(index: usize) -> Self {
        NodeId(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// 0-based position in layout tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N_{}", self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N_{}", self.0)
    }
}

impl std::str::FromStr for NodeId {
    type Err = String;

    /// Accepts `12`, `N12`, or `N_12`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let t = t.strip_prefix('N').map(|r| r.strip_prefix('_').unwrap_or(r)).unwrap_or(t);
        t.parse::<u32>().ok().and_then(NodeId::new).ok_or_else(|| format!("invalid node id {s:?}"))
    }
}
