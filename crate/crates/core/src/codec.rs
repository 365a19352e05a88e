//! Encoding an object into per-node pieces and recovering it.
//!
//! An object is `dim` equal-length fragments. A piece pairs a coefficient
//! vector with the XOR of the fragments its set bits select, so every byte
//! position is an independent GF(2) codeword and no field multiplication is
//! needed on the data path.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gf2::{solve_xor, BitVector, GfError};
use crate::spread::SpreadLayout;
use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("object has {found} fragments, layout expects {expected}")]
    DimensionMismatch { expected: u32, found: u32 },
    #[error("fragment lengths differ ({0} vs {1})")]
    FragmentLengthMismatch(usize, usize),
    #[error("fragments must be at least one byte long")]
    EmptyFragments,
    #[error("no pieces to decode")]
    NoPieces,
    #[error("pieces span rank {rank}, need {needed}")]
    Unrecoverable { rank: u32, needed: u32 },
    #[error("pieces are mutually inconsistent")]
    InconsistentPieces,
    #[error("fragment e_{} is not in any node's span", .0 + 1)]
    NotCovered(usize),
    #[error("nodes unavailable for fragments {}", fmt_fragments(.fragments))]
    NodeUnavailable { fragments: Vec<usize> },
    #[error("piece file: {0}")]
    PieceFormat(String),
    #[error(transparent)]
    Gf(#[from] GfError),
}

fn fmt_fragments(f: &[usize]) -> String {
    f.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
}

/// The object as `dim` fragments of equal length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectData {
    fragments: Vec<Vec<u8>>,
}

impl ObjectData {
    pub fn new(fragments: Vec<Vec<u8>>) -> Result<Self, CodecError> {
        let len = fragments.first().map_or(0, Vec::len);
        if let Some(f) = fragments.iter().find(|f| f.len() != len) {
            return Err(CodecError::FragmentLengthMismatch(len, f.len()));
        }
        Ok(ObjectData { fragments })
    }

    /// Splits `bytes` into `dim` fragments, zero-padding the tail. At least
    /// one byte per fragment is used even for an empty input.
    pub fn from_bytes(bytes: &[u8], dim: u32) -> Self {
        let len = bytes.len().div_ceil(dim as usize).max(1);
        let fragments = (0..dim as usize)
            .map(|i| {
                let mut f = vec![0u8; len];
                let start = (i * len).min(bytes.len());
                let end = ((i + 1) * len).min(bytes.len());
                f[..end - start].copy_from_slice(&bytes[start..end]);
                f
            })
            .collect();
        ObjectData { fragments }
    }

    /// Concatenates fragments and truncates to the original `size`.
    pub fn to_bytes(&self, size: usize) -> Vec<u8> {
        let mut out = self.fragments.concat();
        out.truncate(size);
        out
    }

    pub fn dim(&self) -> u32 {
        self.fragments.len() as u32
    }

    pub fn fragment_len(&self) -> usize {
        self.fragments.first().map_or(0, Vec::len)
    }

    pub fn fragments(&self) -> &[Vec<u8>] {
        &self.fragments
    }

    pub fn into_fragments(self) -> Vec<Vec<u8>> {
        self.fragments
    }
}

/// One stored unit: a coefficient vector and the XOR of the fragments it selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub coeff: BitVector,
    pub payload: Vec<u8>,
}

/// The `alpha` pieces held by one node, in basis order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePieces {
    pub node: NodeId,
    pub pieces: Vec<Piece>,
}

pub(crate) fn xor_into(dst: &mut [u8], src: &[u8]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// Payload for `coeff`: XOR of the selected fragments.
pub fn combine(coeff: BitVector, fragments: &[Vec<u8>]) -> Vec<u8> {
    let mut out = vec![0u8; fragments.first().map_or(0, Vec::len)];
    for (i, f) in fragments.iter().enumerate() {
        if coeff.bit(i as u32) {
            xor_into(&mut out, f);
        }
    }
    out
}

pub fn encode(layout: &SpreadLayout, object: &ObjectData) -> Result<Vec<NodePieces>, CodecError> {
    let dim = layout.params().dim;
    if object.dim() != dim {
        return Err(CodecError::DimensionMismatch { expected: dim, found: object.dim() });
    }
    if object.fragment_len() == 0 {
        return Err(CodecError::EmptyFragments);
    }
    Ok(layout
        .node_ids()
        .map(|node| NodePieces {
            node,
            pieces: layout
                .basis(node)
                .iter()
                .map(|&coeff| Piece { coeff, payload: combine(coeff, &object.fragments) })
                .collect(),
        })
        .collect())
}

/// Solves for the fragments from any collection of pieces whose
/// coefficients have full rank `dim`.
pub fn decode(pieces: &[Piece], dim: u32) -> Result<ObjectData, CodecError> {
    let first = pieces.first().ok_or(CodecError::NoPieces)?;
    let len = first.payload.len();
    for p in pieces {
        if p.coeff.width() != dim {
            return Err(CodecError::DimensionMismatch { expected: dim, found: p.coeff.width() });
        }
        if p.payload.len() != len {
            return Err(CodecError::FragmentLengthMismatch(len, p.payload.len()));
        }
    }
    let mut rows: Vec<(u32, Vec<u8>)> = pieces.iter().map(|p| (p.coeff.bits(), p.payload.clone())).collect();
    let mut pivots = 0usize;
    for col in 0..dim {
        let bit = 1u32 << col;
        let Some(found) = (pivots..rows.len()).find(|&r| rows[r].0 & bit != 0) else {
            continue;
        };
        rows.swap(pivots, found);
        let (head, tail) = rows.split_at_mut(pivots);
        let ((pc, pp), tail) = tail.split_first_mut().expect("pivot row");
        for (c, p) in head.iter_mut().chain(tail.iter_mut()) {
            if *c & bit != 0 {
                *c ^= *pc;
                xor_into(p, pp);
            }
        }
        pivots += 1;
    }
    if pivots < dim as usize {
        return Err(CodecError::Unrecoverable { rank: pivots as u32, needed: dim });
    }
    if rows[pivots..].iter().any(|(_, p)| p.iter().any(|&b| b != 0)) {
        return Err(CodecError::InconsistentPieces);
    }
    rows.truncate(pivots);
    Ok(ObjectData { fragments: rows.into_iter().map(|(_, p)| p).collect() })
}

/// Where to read fragment `fragment` (0-based) without solving a system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SystematicSource {
    /// A stored piece whose coefficient is exactly the unit vector.
    Direct { fragment: usize, node: NodeId, piece: usize },
    /// The unit vector is in the node's span but not a basis vector; XOR these pieces.
    RequiresCombination { fragment: usize, node: NodeId, pieces: Vec<usize> },
}

impl SystematicSource {
    pub fn fragment(&self) -> usize {
        match self {
            SystematicSource::Direct { fragment, .. } | SystematicSource::RequiresCombination { fragment, .. } => *fragment,
        }
    }

    pub fn node(&self) -> NodeId {
        match self {
            SystematicSource::Direct { node, .. } | SystematicSource::RequiresCombination { node, .. } => *node,
        }
    }

    pub fn pieces(&self) -> Vec<usize> {
        match self {
            SystematicSource::Direct { piece, .. } => vec![*piece],
            SystematicSource::RequiresCombination { pieces, .. } => pieces.clone(),
        }
    }
}

impl fmt::Display for SystematicSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystematicSource::Direct { fragment, node, piece } => {
                write!(f, "e_{} <- piece[{}.{}]", fragment + 1, node.get(), piece + 1)
            }
            SystematicSource::RequiresCombination { fragment, node, pieces } => {
                let terms: Vec<_> = pieces.iter().map(|p| format!("piece[{}.{}]", node.get(), p + 1)).collect();
                write!(f, "e_{} <- {}", fragment + 1, terms.join(" ^ "))
            }
        }
    }
}

/// For each unit vector `e_i`, the node covering it and how to read it.
pub fn systematic_map(layout: &SpreadLayout) -> Result<Vec<SystematicSource>, CodecError> {
    let dim = layout.params().dim;
    let mut out = Vec::with_capacity(dim as usize);
    for i in 0..dim {
        let unit = BitVector::unit(dim, i);
        let fragment = i as usize;
        let mut found = None;
        for node in layout.node_ids() {
            let basis = layout.basis(node);
            if let Some(piece) = basis.iter().position(|&v| v == unit) {
                found = Some(SystematicSource::Direct { fragment, node, piece });
                break;
            }
            if let Some(Some(pieces)) = solve_xor(&[unit], basis)?.pop() {
                found = Some(SystematicSource::RequiresCombination { fragment, node, pieces });
                break;
            }
        }
        out.push(found.ok_or(CodecError::NotCovered(fragment))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystematicRetrieval {
    pub object: ObjectData,
    pub pieces_fetched: usize,
    pub nodes_contacted: Vec<NodeId>,
}

/// Reassembles the object from the unit-vector pieces. `fetch(node, piece)`
/// returns the payload or `None` if the node is unreachable.
pub fn retrieve_systematic<F>(layout: &SpreadLayout, mut fetch: F) -> Result<SystematicRetrieval, CodecError>
where
    F: FnMut(NodeId, usize) -> Option<Vec<u8>>,
{
    let map = systematic_map(layout)?;
    let mut fragments = Vec::with_capacity(map.len());
    let mut missing = Vec::new();
    let mut pieces_fetched = 0;
    let mut nodes_contacted: Vec<NodeId> = Vec::new();
    for src in &map {
        let node = src.node();
        if !nodes_contacted.contains(&node) {
            nodes_contacted.push(node);
        }
        let mut acc: Option<Vec<u8>> = None;
        for p in src.pieces() {
            pieces_fetched += 1;
            match (fetch(node, p), acc.as_mut()) {
                (None, _) => {
                    acc = None;
                    break;
                }
                (Some(payload), None) => acc = Some(payload),
                (Some(payload), Some(a)) => {
                    if a.len() != payload.len() {
                        return Err(CodecError::FragmentLengthMismatch(a.len(), payload.len()));
                    }
                    xor_into(a, &payload);
                }
            }
        }
        match acc {
            Some(f) => fragments.push(f),
            None => missing.push(src.fragment()),
        }
    }
    if !missing.is_empty() {
        return Err(CodecError::NodeUnavailable { fragments: missing });
    }
    Ok(SystematicRetrieval { object: ObjectData::new(fragments)?, pieces_fetched, nodes_contacted })
}

/// SHA-256 of the original object bytes, hex encoded. Used only to tell
/// pieces of different objects apart.
pub fn object_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// On-disk piece: `piece v=<bits> len=<L> object=<digest> size=<bytes>\n` then the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PieceFile {
    pub piece: Piece,
    pub object: String,
    /// Original object length before padding.
    pub size: u64,
}

impl PieceFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "piece v={} len={} object={} size={}\n",
            self.piece.coeff,
            self.piece.payload.len(),
            self.object,
            self.size
        )
        .into_bytes();
        out.extend_from_slice(&self.piece.payload);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, CodecError> {
        let bad = |m: &str| CodecError::PieceFormat(m.to_string());
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("piece") {
            return Err(bad("header must start with `piece`"));
        }
        let (mut coeff, mut len, mut object, mut size) = (None, None, None, None);
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| bad("malformed header field"))?;
            match k {
                "v" => coeff = Some(v.parse::<BitVector>()?),
                "len" => len = Some(v.parse::<usize>().map_err(|_| bad("bad len"))?),
                "object" => object = Some(v.to_string()),
                "size" => size = Some(v.parse::<u64>().map_err(|_| bad("bad size"))?),
                _ => return Err(bad("unknown header field")),
            }
        }
        let coeff = coeff.ok_or_else(|| bad("missing v"))?;
        let len = len.ok_or_else(|| bad("missing len"))?;
        let payload = bytes[nl + 1..].to_vec();
        if payload.len() != len {
            return Err(bad("payload length does not match len"));
        }
        Ok(PieceFile {
            piece: Piece { coeff, payload },
            object: object.ok_or_else(|| bad("missing object"))?,
            size: size.unwrap_or((len * coeff.width() as usize) as u64),
        })
    }
}
