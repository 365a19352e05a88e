//! Code parameters and the subfield-coset spread that assigns each node a
//! GF(2) basis.
//!
//! With `k = dim / alpha`, the nonzero elements of GF(2^dim) split into
//! `node_count = (2^dim - 1) / (2^alpha - 1)` cosets of the multiplicative
//! group of the subfield GF(2^alpha). Node `N_l` holds the coset
//! `ν^(l-1) · GF(2^alpha)^*`, described by the basis `ν^(l-1) · ω^j` for
//! `j < alpha`, where `ω = ν^node_count` generates the subfield.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::gf2::{BitVector, Echelon, GfContext, GfError, PolyTable, MAX_DEGREE};
use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("pieces per node {alpha} does not divide object dimension {dim}")]
    DivisibilityViolation { dim: u32, alpha: u32 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("layout file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Gf(#[from] GfError),
}

/// Parameters of a spread code: an object of `dim` fragments stored as
/// `alpha` pieces on each of `node_count` nodes, decodable from `k` nodes in
/// general position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeParams {
    pub dim: u32,
    pub alpha: u32,
    pub node_count: usize,
    /// `dim / alpha`; also the number of subfield blocks in the geometric series for `node_count`.
    pub k: u32,
    /// Primitive polynomial of GF(2^dim).
    pub poly: u32,
}

impl CodeParams {
    /// Parameters under the bundled default polynomial for `dim`.
    pub fn derive(dim: u32, alpha: u32) -> Result<Self, LayoutError> {
        Self::derive_with_table(dim, alpha, &PolyTable::bundled())
    }

    pub fn derive_with_table(dim: u32, alpha: u32, table: &PolyTable) -> Result<Self, LayoutError> {
        Self::check(dim, alpha)?;
        Self::derive_with_poly(dim, alpha, table.get(dim)?)
    }

    pub fn derive_with_poly(dim: u32, alpha: u32, poly: u32) -> Result<Self, LayoutError> {
        Self::check(dim, alpha)?;
        let k = dim / alpha;
        let node_count = (0..k).map(|i| 1usize << (alpha * i)).sum();
        Ok(CodeParams { dim, alpha, node_count, k, poly })
    }

    fn check(dim: u32, alpha: u32) -> Result<(), LayoutError> {
        if !(2..=MAX_DEGREE).contains(&dim) {
            return Err(LayoutError::InvalidParams(format!("object dimension {dim} outside 2..={MAX_DEGREE}")));
        }
        if alpha == 0 {
            return Err(LayoutError::InvalidParams("pieces per node must be at least 1".into()));
        }
        if !dim.is_multiple_of(alpha) {
            return Err(LayoutError::DivisibilityViolation { dim, alpha });
        }
        Ok(())
    }

    /// Projective dimension of each spread element, `alpha - 1`.
    pub fn t(&self) -> u32 {
        self.alpha - 1
    }

    /// Nonzero points per node, `2^alpha - 1`.
    pub fn points_per_node(&self) -> usize {
        (1usize << self.alpha) - 1
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count).map(NodeId::from_index)
    }
}

impl fmt::Display for CodeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "B={} alpha={} b={} n={} k={} t={} poly={:#x}",
            self.dim,
            self.alpha,
            self.k,
            self.node_count,
            self.k,
            self.t(),
            self.poly
        )
    }
}

/// Generator of the subfield GF(2^alpha) inside `ctx`: `ν^((2^m-1)/(2^alpha-1))`.
pub fn subfield_generator(ctx: &GfContext, alpha: u32) -> Result<BitVector, LayoutError> {
    let m = ctx.degree();
    if alpha == 0 || !m.is_multiple_of(alpha) {
        return Err(LayoutError::DivisibilityViolation { dim: m, alpha });
    }
    let cofactor = ctx.order() / ((1u32 << alpha) - 1);
    Ok(ctx.exp(cofactor as u64))
}

/// Per-node GF(2) bases of a spread code.
#[derive(Debug, Clone)]
pub struct SpreadLayout {
    params: CodeParams,
    ctx: Arc<GfContext>,
    bases: Vec<Vec<BitVector>>,
}

impl SpreadLayout {
    /// The canonical coset layout: node `l` gets `ν^(l-1) ω^j`, `j = 0..alpha`.
    pub fn build(params: CodeParams) -> Result<Self, LayoutError> {
        let ctx = GfContext::new(params.dim, params.poly)?;
        let omega = subfield_generator(&ctx, params.alpha)?;
        let omega_log = ctx.log(omega)? as u64;
        let bases = (0..params.node_count as u64)
            .map(|l| (0..params.alpha as u64).map(|j| ctx.exp(l + j * omega_log)).collect())
            .collect();
        Ok(SpreadLayout { params, ctx: Arc::new(ctx), bases })
    }

    /// Convenience for `build(CodeParams::derive(dim, alpha)?)`.
    pub fn canonical(dim: u32, alpha: u32) -> Result<Self, LayoutError> {
        Self::build(CodeParams::derive(dim, alpha)?)
    }

    /// Wraps arbitrary bases. Shapes are checked (one entry per node, `alpha`
    /// vectors of width `dim` each); the spread property is not, see [`Self::verify`].
    pub fn from_parts(params: CodeParams, bases: Vec<Vec<BitVector>>) -> Result<Self, LayoutError> {
        let ctx = GfContext::new(params.dim, params.poly)?;
        if bases.len() != params.node_count {
            return Err(LayoutError::InvalidParams(format!(
                "expected {} nodes, got {}",
                params.node_count,
                bases.len()
            )));
        }
        for (i, basis) in bases.iter().enumerate() {
            if basis.len() != params.alpha as usize {
                return Err(LayoutError::InvalidParams(format!(
                    "{} has {} basis vectors, expected {}",
                    NodeId::from_index(i),
                    basis.len(),
                    params.alpha
                )));
            }
            if let Some(v) = basis.iter().find(|v| v.width() != params.dim) {
                return Err(GfError::WidthMismatch(params.dim, v.width()).into());
            }
        }
        Ok(SpreadLayout { params, ctx: Arc::new(ctx), bases })
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn ctx(&self) -> &GfContext {
        &self.ctx
    }

    pub fn node_count(&self) -> usize {
        self.params.node_count
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        self.params.node_ids()
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        node.index() < self.node_count()
    }

    pub fn basis(&self, node: NodeId) -> &[BitVector] {
        &self.bases[node.index()]
    }

    pub fn bases(&self) -> &[Vec<BitVector>] {
        &self.bases
    }

    /// Nonzero points in the span of a node's basis, in subset order.
    pub fn span_points(&self, node: NodeId) -> Vec<u32> {
        span_points(self.basis(node))
    }

    pub fn echelon_of(&self, nodes: &[NodeId]) -> Echelon {
        let mut ech = Echelon::new();
        for &n in nodes {
            for v in self.basis(n) {
                ech.insert(v.bits());
            }
        }
        ech
    }

    /// Checks the partition, per-node rank, and coset structure; lists every violation.
    pub fn verify(&self) -> SpreadReport {
        let p = &self.params;
        let mut violations = Vec::new();
        let total_points = (1usize << p.dim) - 1;
        let mut owner: Vec<Option<NodeId>> = vec![None; total_points + 1];
        let omega_exp = p.node_count as u32;
        for node in self.node_ids() {
            let basis = self.basis(node);
            let mut ech = Echelon::new();
            basis.iter().for_each(|v| {
                ech.insert(v.bits());
            });
            if ech.rank() < p.alpha {
                violations.push(Violation::RankDeficient { node, rank: ech.rank() });
            }
            let points: BTreeSet<u32> = span_points(basis).into_iter().filter(|&x| x != 0).collect();
            for &pt in &points {
                match owner[pt as usize] {
                    Some(first) => violations.push(Violation::PointCoveredTwice {
                        point: self.ctx.element(pt),
                        nodes: (first, node),
                    }),
                    None => owner[pt as usize] = Some(node),
                }
            }
            let in_coset = points.len() == p.points_per_node()
                && points.iter().all(|&pt| {
                    let e = self.ctx.log_raw(pt).expect("nonzero point");
                    e % omega_exp == node.index() as u32
                });
            if !in_coset {
                violations.push(Violation::NotCoset { node });
            }
        }
        for (pt, o) in owner.iter().enumerate().skip(1) {
            if o.is_none() {
                violations.push(Violation::PointUncovered { point: self.ctx.element(pt as u32) });
            }
        }
        SpreadReport { violations }
    }

    /// Layout file text: a `psrc` header then one `N<l>:` line per node.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = format!("psrc B={} alpha={} n={} poly={:#x}\n", p.dim, p.alpha, p.node_count, p.poly);
        for node in self.node_ids() {
            out.push_str(&format!("N{}:", node.get()));
            for v in self.basis(node) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, LayoutError> {
        let err = |line: usize, msg: String| LayoutError::Parse { line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| err(1, "empty layout file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("psrc") {
            return Err(err(hline + 1, "header must start with `psrc`".into()));
        }
        let (mut dim, mut alpha, mut n, mut poly) = (None, None, None, None);
        for f in fields {
            let (key, value) = f.split_once('=').ok_or_else(|| err(hline + 1, format!("bad field {f:?}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| err(hline + 1, format!("bad value {v:?}")));
            match key {
                "B" => dim = Some(num(value)? as u32),
                "alpha" => alpha = Some(num(value)? as u32),
                "n" => n = Some(num(value)? as usize),
                "poly" => {
                    let hex = value.trim_start_matches("0x");
                    poly = Some(u32::from_str_radix(hex, 16).map_err(|_| err(hline + 1, format!("bad poly {value:?}")))?);
                }
                _ => return Err(err(hline + 1, format!("unknown field {key:?}"))),
            }
        }
        let missing = |k: &str| err(hline + 1, format!("missing {k}"));
        let params = CodeParams::derive_with_poly(
            dim.ok_or_else(|| missing("B"))?,
            alpha.ok_or_else(|| missing("alpha"))?,
            poly.ok_or_else(|| missing("poly"))?,
        )?;
        let n = n.ok_or_else(|| missing("n"))?;
        if n != params.node_count {
            return Err(err(hline + 1, format!("n={n} but parameters give {}", params.node_count)));
        }
        let mut bases: Vec<Option<Vec<BitVector>>> = vec![None; n];
        for (i, line) in lines {
            let (name, rest) = line.split_once(':').ok_or_else(|| err(i + 1, "expected `N<l>:`".into()))?;
            let id: u32 = name
                .trim()
                .strip_prefix('N')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(i + 1, format!("bad node name {name:?}")))?;
            let node = NodeId::new(id).filter(|n| n.index() < params.node_count);
            let node = node.ok_or_else(|| err(i + 1, format!("node {id} out of range")))?;
            if bases[node.index()].is_some() {
                return Err(err(i + 1, format!("{node} listed twice")));
            }
            let vecs = rest
                .split_whitespace()
                .map(|s| s.parse::<BitVector>().map_err(|e| err(i + 1, e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            bases[node.index()] = Some(vecs);
        }
        let bases = bases
            .into_iter()
            .enumerate()
            .map(|(i, b)| b.ok_or_else(|| err(0, format!("{} missing", NodeId::from_index(i)))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(params, bases)
    }
}

/// All XOR combinations of `basis`, including 0 at position 0.
pub(crate) fn span_points(basis: &[BitVector]) -> Vec<u32> {
    let mut points = vec![0u32];
    for v in basis {
        let len = points.len();
        for i in 0..len {
            points.push(points[i] ^ v.bits());
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    RankDeficient { node: NodeId, rank: u32 },
    PointCoveredTwice { point: BitVector, nodes: (NodeId, NodeId) },
    PointUncovered { point: BitVector },
    NotCoset { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RankDeficient { node, rank } => write!(f, "{node}: node rank < α (rank {rank})"),
            Violation::PointCoveredTwice { point, nodes } => {
                write!(f, "point covered twice: {point} in {} and {}", nodes.0, nodes.1)
            }
            Violation::PointUncovered { point } => write!(f, "point not covered: {point}"),
            Violation::NotCoset { node } => write!(f, "{node}: span is not its subfield coset"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpreadReport {
    pub violations: Vec<Violation>,
}

impl SpreadReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for SpreadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}
