//! Repair planning: which live nodes can regenerate a failed node, and the
//! XOR recipes that rebuild its pieces.
//!
//! Two nodes `N_i`, `N_j` repair `N_l` when the span of their pieces contains
//! every basis vector of `N_l`. For any live `N_i` such a partner exists: the
//! node holding `ν^(i-1) + ν^(l-1)`. With two pieces per node the partners
//! of a given `N_i` are exactly three, found in closed form from discrete
//! logarithms.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::codec::{xor_into, NodePieces, Piece};
use crate::gf2::{solve_xor, BitVector, Echelon, GfError};
use crate::spread::SpreadLayout;
use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepairError {
    #[error("invalid node {0}")]
    InvalidNode(NodeId),
    #[error("closed-form partners need two pieces per node, layout has {0}")]
    AlphaUnsupported(u32),
    #[error("{pair:?} cannot repair {failed}")]
    PairInsufficient { failed: NodeId, pair: (NodeId, NodeId) },
    #[error("live nodes cannot repair {failed} within degree {degree}")]
    InsufficientLiveNodes { failed: NodeId, degree: usize },
    #[error("repair degree must be at least 2, got {0}")]
    InvalidDegree(usize),
    #[error("no live repair pair for {0}")]
    Infeasible(NodeId),
    #[error("no failed nodes given")]
    NothingToRepair,
    #[error("downloaded payload count {got} does not match plan ({expected})")]
    PayloadCount { expected: usize, got: usize },
    #[error(transparent)]
    Gf(#[from] GfError),
}

/// Which nodes are currently up, indexed by node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveSet(Vec<bool>);

impl LiveSet {
    pub fn all(node_count: usize) -> Self {
        LiveSet(vec![true; node_count])
    }

    pub fn without(node_count: usize, dead: &[NodeId]) -> Self {
        let mut s = Self::all(node_count);
        for &d in dead {
            s.set(d, false);
        }
        s
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        LiveSet(flags)
    }

    pub fn is_live(&self, node: NodeId) -> bool {
        self.0.get(node.index()).copied().unwrap_or(false)
    }

    pub fn set(&mut self, node: NodeId, live: bool) {
        if let Some(f) = self.0.get_mut(node.index()) {
            *f = live;
        }
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&f| f).count()
    }

    pub fn node_count(&self) -> usize {
        self.0.len()
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| NodeId::from_index(i))
    }
}

fn check_node(layout: &SpreadLayout, node: NodeId) -> Result<(), RepairError> {
    if layout.contains_node(node) {
        Ok(())
    } else {
        Err(RepairError::InvalidNode(node))
    }
}

/// Whether the pieces of `sources` span every basis vector of `failed`.
pub fn covers(layout: &SpreadLayout, sources: &[NodeId], failed: NodeId) -> bool {
    let ech = layout.echelon_of(sources);
    layout.basis(failed).iter().all(|v| ech.contains(v.bits()))
}

/// Every `N_j` that repairs `failed` together with `first`, ascending.
pub fn pair_partner(layout: &SpreadLayout, failed: NodeId, first: NodeId) -> Result<Vec<NodeId>, RepairError> {
    check_node(layout, failed)?;
    check_node(layout, first)?;
    if failed == first {
        return Err(RepairError::InvalidNode(first));
    }
    Ok(layout
        .node_ids()
        .filter(|&j| j != failed && j != first && covers(layout, &[first, j], failed))
        .collect())
}

/// The three partners of `first` for repairing `failed` when each node
/// stores two pieces: the cosets of `ν^i + ν^l`, `ν^i + ν^l ω`, and
/// `ν^l + ν^i ω`, in that order.
pub fn three_partners_alpha2(layout: &SpreadLayout, failed: NodeId, first: NodeId) -> Result<[NodeId; 3], RepairError> {
    let p = layout.params();
    if p.alpha != 2 {
        return Err(RepairError::AlphaUnsupported(p.alpha));
    }
    check_node(layout, failed)?;
    check_node(layout, first)?;
    if failed == first {
        return Err(RepairError::InvalidNode(first));
    }
    let ctx = layout.ctx();
    let n = p.node_count as u64;
    let nu_l = ctx.exp(failed.index() as u64);
    let nu_i = ctx.exp(first.index() as u64);
    let omega = ctx.exp(n);
    let coset = |v: BitVector| -> Result<NodeId, RepairError> {
        Ok(NodeId::from_index((ctx.log(v)? as u64 % n) as usize))
    };
    Ok([
        coset(ctx.add(nu_i, nu_l)?)?,
        coset(ctx.add(nu_i, ctx.mul(nu_l, omega)?)?)?,
        coset(ctx.add(nu_l, ctx.mul(nu_i, omega)?)?)?,
    ])
}

/// All unordered pairs of other nodes that repair `failed`.
pub fn repair_pairs(layout: &SpreadLayout, failed: NodeId) -> Result<Vec<(NodeId, NodeId)>, RepairError> {
    repair_pairs_live(layout, failed, &LiveSet::all(layout.node_count()))
}

/// Repair pairs drawn from `live`, ordered lexicographically.
pub fn repair_pairs_live(layout: &SpreadLayout, failed: NodeId, live: &LiveSet) -> Result<Vec<(NodeId, NodeId)>, RepairError> {
    check_node(layout, failed)?;
    let candidates: Vec<NodeId> = live.live_nodes().filter(|&x| x != failed && layout.contains_node(x)).collect();
    let mut pairs = Vec::new();
    for (a, &i) in candidates.iter().enumerate() {
        for &j in &candidates[a + 1..] {
            if covers(layout, &[i, j], failed) {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// A stored piece, by node and 0-based position in its basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PieceRef {
    pub node: NodeId,
    pub piece: usize,
}

impl fmt::Display for PieceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "piece[{}.{}]", self.node.get(), self.piece + 1)
    }
}

/// Downloads and XOR recipes that regenerate one failed node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairPlan {
    pub failed: NodeId,
    pub downloads: Vec<PieceRef>,
    /// Coefficient of each download, parallel to `downloads`.
    pub download_coeffs: Vec<BitVector>,
    /// Basis vectors of the failed node, in order.
    pub lost: Vec<BitVector>,
    /// For each lost vector, indices into `downloads` whose XOR rebuilds it.
    pub recipes: Vec<Vec<usize>>,
    /// False when the minimal-download search fell back to a heuristic.
    pub optimal: bool,
}

impl RepairPlan {
    /// Builds recipes for downloading exactly `downloads`; `None` if they
    /// do not span the failed node.
    pub fn from_downloads(layout: &SpreadLayout, failed: NodeId, downloads: Vec<PieceRef>) -> Result<Option<Self>, RepairError> {
        check_node(layout, failed)?;
        for d in &downloads {
            check_node(layout, d.node)?;
            if d.node == failed || d.piece >= layout.basis(d.node).len() {
                return Err(RepairError::InvalidNode(d.node));
            }
        }
        let coeffs: Vec<BitVector> = downloads.iter().map(|d| layout.basis(d.node)[d.piece]).collect();
        let lost = layout.basis(failed).to_vec();
        let Some(recipes) = solve_xor(&lost, &coeffs)?.into_iter().collect::<Option<Vec<_>>>() else {
            return Ok(None);
        };
        Ok(Some(RepairPlan { failed, downloads, download_coeffs: coeffs, lost, recipes, optimal: true }))
    }

    pub fn download_units(&self) -> usize {
        self.downloads.len()
    }

    /// Source nodes with the piece indices fetched from each, ascending.
    pub fn sources(&self) -> Vec<(NodeId, Vec<usize>)> {
        let mut map: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for d in &self.downloads {
            map.entry(d.node).or_default().push(d.piece);
        }
        map.into_iter().collect()
    }

    /// Number of distinct nodes contacted.
    pub fn degree(&self) -> usize {
        self.sources().len()
    }

    /// Applies the recipes to downloaded payloads (parallel to `downloads`).
    pub fn reconstruct(&self, payloads: &[Vec<u8>]) -> Result<Vec<Piece>, RepairError> {
        if payloads.len() != self.downloads.len() {
            return Err(RepairError::PayloadCount { expected: self.downloads.len(), got: payloads.len() });
        }
        let len = payloads.first().map_or(0, Vec::len);
        Ok(self
            .lost
            .iter()
            .zip(&self.recipes)
            .map(|(&coeff, recipe)| {
                let mut payload = vec![0u8; len];
                for &r in recipe {
                    xor_into(&mut payload, &payloads[r]);
                }
                Piece { coeff, payload }
            })
            .collect())
    }

    /// Fetches from `store` (indexed by node) and rebuilds the failed node.
    pub fn execute(&self, store: &[NodePieces]) -> Result<NodePieces, RepairError> {
        let payloads: Vec<Vec<u8>> =
            self.downloads.iter().map(|d| store[d.node.index()].pieces[d.piece].payload.clone()).collect();
        Ok(NodePieces { node: self.failed, pieces: self.reconstruct(&payloads)? })
    }
}

impl fmt::Display for RepairPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (lost, recipe) in self.lost.iter().zip(&self.recipes) {
            let terms: Vec<String> = recipe.iter().map(|&r| self.downloads[r].to_string()).collect();
            writeln!(f, "lost={lost} = {}", terms.join(" ^ "))?;
        }
        write!(f, "download_units={}", self.download_units())?;
        if !self.optimal {
            write!(f, " optimal=unknown")?;
        }
        writeln!(f)
    }
}

/// Downloads every piece of both nodes of `pair`.
pub fn plan_pair_repair(layout: &SpreadLayout, failed: NodeId, pair: (NodeId, NodeId)) -> Result<RepairPlan, RepairError> {
    let (a, b) = if pair.0 <= pair.1 { pair } else { (pair.1, pair.0) };
    for n in [failed, a, b] {
        check_node(layout, n)?;
    }
    if a == b || a == failed || b == failed {
        return Err(RepairError::PairInsufficient { failed, pair });
    }
    let downloads = [a, b]
        .iter()
        .flat_map(|&node| (0..layout.basis(node).len()).map(move |piece| PieceRef { node, piece }))
        .collect();
    RepairPlan::from_downloads(layout, failed, downloads)?.ok_or(RepairError::PairInsufficient { failed, pair })
}

/// Cap on subsets visited by the exact minimal-download search.
pub const MIN_DOWNLOAD_BUDGET: usize = 1 << 18;

/// A plan using at most `degree` live source nodes that downloads as few
/// pieces as possible. Exact for small layouts; past
/// [`MIN_DOWNLOAD_BUDGET`] visited subsets a greedy plan is returned with
/// `optimal = false`.
pub fn plan_min_download(layout: &SpreadLayout, failed: NodeId, degree: usize, live: &LiveSet) -> Result<RepairPlan, RepairError> {
    check_node(layout, failed)?;
    if degree < 2 {
        return Err(RepairError::InvalidDegree(degree));
    }
    let pool: Vec<PieceRef> = live
        .live_nodes()
        .filter(|&n| n != failed && layout.contains_node(n))
        .flat_map(|node| (0..layout.basis(node).len()).map(move |piece| PieceRef { node, piece }))
        .filter(|r| !layout.basis(r.node)[r.piece].is_zero())
        .collect();
    let coeffs: Vec<u32> = pool.iter().map(|r| layout.basis(r.node)[r.piece].bits()).collect();
    let targets: Vec<u32> = layout.basis(failed).iter().map(|v| v.bits()).collect();
    let insufficient = RepairError::InsufficientLiveNodes { failed, degree };

    let mut whole = Echelon::new();
    coeffs.iter().for_each(|&c| {
        whole.insert(c);
    });
    if !targets.iter().all(|&t| whole.contains(t)) {
        return Err(insufficient);
    }

    let alpha = layout.params().alpha as usize;
    let max_size = (degree * alpha).min(pool.len());
    let mut search = ExactSearch { pool: &pool, coeffs: &coeffs, targets: &targets, degree, visited: 0 };
    for size in 1..=max_size {
        let mut chosen = Vec::with_capacity(size);
        match search.dfs(0, size, &Echelon::new(), &mut chosen) {
            Some(Found::Yes) => {
                let downloads = chosen.iter().map(|&i| pool[i]).collect();
                let plan = RepairPlan::from_downloads(layout, failed, downloads)?;
                return plan.ok_or(insufficient);
            }
            Some(Found::No) => {}
            None => {
                let mut plan = greedy_plan(layout, failed, degree, &pool, &coeffs, &targets).ok_or(insufficient)?;
                plan.optimal = false;
                return Ok(plan);
            }
        }
    }
    Err(insufficient)
}

enum Found {
    Yes,
    No,
}

struct ExactSearch<'a> {
    pool: &'a [PieceRef],
    coeffs: &'a [u32],
    targets: &'a [u32],
    degree: usize,
    visited: usize,
}

impl ExactSearch<'_> {
    /// Lexicographic DFS over independent piece subsets of exactly `size`.
    /// `None` when the budget runs out.
    fn dfs(&mut self, start: usize, size: usize, ech: &Echelon, chosen: &mut Vec<usize>) -> Option<Found> {
        if chosen.len() == size {
            return Some(if self.targets.iter().all(|&t| ech.contains(t)) { Found::Yes } else { Found::No });
        }
        let remaining = size - chosen.len();
        for i in start..=self.pool.len().saturating_sub(remaining) {
            self.visited += 1;
            if self.visited > MIN_DOWNLOAD_BUDGET {
                return None;
            }
            if self.node_count_with(chosen, i) > self.degree {
                continue;
            }
            let mut next = ech.clone();
            if !next.insert(self.coeffs[i]) {
                continue;
            }
            chosen.push(i);
            match self.dfs(i + 1, size, &next, chosen)? {
                Found::Yes => return Some(Found::Yes),
                Found::No => {
                    chosen.pop();
                }
            }
        }
        Some(Found::No)
    }

    fn node_count_with(&self, chosen: &[usize], extra: usize) -> usize {
        let mut nodes: Vec<NodeId> = chosen.iter().chain(std::iter::once(&extra)).map(|&i| self.pool[i].node).collect();
        nodes.sort();
        nodes.dedup();
        nodes.len()
    }
}

/// Heuristic: start from the first live repair pair (or grow a piece set
/// greedily when none exists), then drop pieces that are not needed.
fn greedy_plan(
    layout: &SpreadLayout,
    failed: NodeId,
    degree: usize,
    pool: &[PieceRef],
    coeffs: &[u32],
    targets: &[u32],
) -> Option<RepairPlan> {
    let spans = |set: &[usize]| {
        let mut e = Echelon::new();
        set.iter().for_each(|&i| {
            e.insert(coeffs[i]);
        });
        targets.iter().all(|&t| e.contains(t))
    };
    let nodes_of = |set: &[usize]| {
        let mut v: Vec<NodeId> = set.iter().map(|&i| pool[i].node).collect();
        v.sort();
        v.dedup();
        v
    };

    let mut live = LiveSet::from_flags(vec![false; layout.node_count()]);
    pool.iter().for_each(|r| live.set(r.node, true));
    let mut chosen: Vec<usize> = match repair_pairs_live(layout, failed, &live).ok()?.first() {
        Some(&(a, b)) => (0..pool.len()).filter(|&i| pool[i].node == a || pool[i].node == b).collect(),
        None => {
            let mut chosen = Vec::new();
            let mut ech = Echelon::new();
            let mut target_ech = Echelon::new();
            targets.iter().for_each(|&t| {
                target_ech.insert(t);
            });
            while !spans(&chosen) {
                // pick the piece that most increases the covered part of the target space
                let best = (0..pool.len())
                    .filter(|i| !chosen.contains(i))
                    .filter(|&i| {
                        let mut with = chosen.clone();
                        with.push(i);
                        nodes_of(&with).len() <= degree
                    })
                    .filter(|&i| !ech.contains(coeffs[i]))
                    .max_by_key(|&i| {
                        let covered = targets.iter().filter(|&&t| {
                            let mut e = ech.clone();
                            e.insert(coeffs[i]);
                            e.contains(t)
                        });
                        (covered.count(), std::cmp::Reverse(i))
                    })?;
                ech.insert(coeffs[best]);
                chosen.push(best);
            }
            chosen
        }
    };
    if nodes_of(&chosen).len() > degree {
        return None;
    }
    for pos in (0..chosen.len()).rev() {
        let mut without = chosen.clone();
        without.remove(pos);
        if spans(&without) {
            chosen = without;
        }
    }
    let downloads = chosen.iter().map(|&i| pool[i]).collect();
    RepairPlan::from_downloads(layout, failed, downloads).ok().flatten()
}

/// Repair pair per failed node and how many repairs each live node serves.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub pairs: BTreeMap<NodeId, (NodeId, NodeId)>,
    /// Failed nodes with no live repair pair.
    pub unassigned: Vec<NodeId>,
    pub load: BTreeMap<NodeId, usize>,
}

impl Assignment {
    pub fn is_complete(&self) -> bool {
        self.unassigned.is_empty()
    }
}

/// Assigns each failed node a live repair pair, least-loaded first. Live
/// nodes may serve several repairs. Nodes without any live pair are left in
/// `unassigned`.
pub fn assign_repairs(layout: &SpreadLayout, failed: &[NodeId], live: &LiveSet) -> Result<Assignment, RepairError> {
    if failed.is_empty() {
        return Err(RepairError::NothingToRepair);
    }
    let mut failed = failed.to_vec();
    failed.sort();
    failed.dedup();
    for &f in &failed {
        check_node(layout, f)?;
        if live.is_live(f) {
            return Err(RepairError::InvalidNode(f));
        }
    }
    let mut out = Assignment::default();
    for &f in &failed {
        let pairs = repair_pairs_live(layout, f, live)?;
        let load = |n: NodeId, out: &Assignment| out.load.get(&n).copied().unwrap_or(0);
        let best = pairs.into_iter().min_by_key(|&(a, b)| {
            let (la, lb) = (load(a, &out), load(b, &out));
            (la.max(lb), la + lb, a, b)
        });
        match best {
            Some((a, b)) => {
                out.pairs.insert(f, (a, b));
                *out.load.entry(a).or_default() += 1;
                *out.load.entry(b).or_default() += 1;
            }
            None => out.unassigned.push(f),
        }
    }
    Ok(out)
}

/// Like [`assign_repairs`] but fails on the first node without a live pair.
pub fn simultaneous_assignment(layout: &SpreadLayout, failed: &[NodeId], live: &LiveSet) -> Result<Assignment, RepairError> {
    let a = assign_repairs(layout, failed, live)?;
    match a.unassigned.first() {
        Some(&n) => Err(RepairError::Infeasible(n)),
        None => Ok(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, ObjectData};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn n(id: u32) -> NodeId {
        NodeId::new(id).unwrap()
    }

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    /// Span containment by enumerating every subset XOR of the sources.
    fn covers_oracle(layout: &SpreadLayout, sources: &[NodeId], failed: NodeId) -> bool {
        let vecs: Vec<u32> = sources.iter().flat_map(|&s| layout.basis(s).iter().map(|v| v.bits())).collect();
        let span: std::collections::HashSet<u32> = (0u32..1 << vecs.len())
            .map(|m| vecs.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).fold(0, |a, (_, v)| a ^ v))
            .collect();
        layout.basis(failed).iter().all(|v| span.contains(&v.bits()))
    }

    #[test]
    fn partners_of_n4_for_n1() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        assert_eq!(three_partners_alpha2(&layout, n(1), n(4)).unwrap(), [n(12), n(10), n(5)]);
        assert_eq!(pair_partner(&layout, n(1), n(4)).unwrap(), vec![n(5), n(10), n(12)]);
        // 1 + ν^3 has log 32, coset 11
        let ctx = layout.ctx();
        let v = ctx.add(ctx.one(), ctx.exp(3)).unwrap();
        assert_eq!(ctx.log(v).unwrap() % 21, 11);
    }

    #[test]
    fn partner_errors() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        assert_eq!(pair_partner(&layout, n(3), n(3)).unwrap_err(), RepairError::InvalidNode(n(3)));
        assert_eq!(pair_partner(&layout, n(22), n(3)).unwrap_err(), RepairError::InvalidNode(n(22)));
        let l63 = SpreadLayout::canonical(6, 3).unwrap();
        assert_eq!(three_partners_alpha2(&l63, n(1), n(2)).unwrap_err(), RepairError::AlphaUnsupported(3));
    }

    #[test]
    fn k2_layout_every_other_node_is_a_partner() {
        let layout = SpreadLayout::canonical(4, 2).unwrap();
        for l in layout.node_ids() {
            for i in layout.node_ids().filter(|&i| i != l) {
                let expect: Vec<NodeId> = layout.node_ids().filter(|&j| j != l && j != i).collect();
                assert_eq!(pair_partner(&layout, l, i).unwrap(), expect);
            }
            assert_eq!(repair_pairs(&layout, l).unwrap().len(), 6);
        }
    }

    #[test]
    fn closed_form_matches_exhaustive_for_every_pair() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        for l in layout.node_ids() {
            for i in layout.node_ids().filter(|&i| i != l) {
                let mut closed = three_partners_alpha2(&layout, l, i).unwrap().to_vec();
                closed.sort();
                closed.dedup();
                assert_eq!(closed.len(), 3);
                assert!(!closed.contains(&l) && !closed.contains(&i));
                let oracle: Vec<NodeId> =
                    layout.node_ids().filter(|&j| j != l && j != i && covers_oracle(&layout, &[i, j], l)).collect();
                assert_eq!(pair_partner(&layout, l, i).unwrap(), oracle);
                assert_eq!(closed, oracle);
            }
        }
    }

    #[test]
    fn thirty_pairs_per_node() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        for l in layout.node_ids() {
            let pairs = repair_pairs(&layout, l).unwrap();
            assert_eq!(pairs.len(), 30);
            for &(i, j) in &pairs {
                let rows: Vec<BitVector> = layout.basis(i).iter().chain(layout.basis(j)).copied().collect();
                assert!(crate::gf2::rank(&rows).unwrap() > 2);
            }
        }
    }

    #[test]
    fn partner_exists_for_every_supported_layout() {
        for (dim, alpha) in [(4, 2), (6, 2), (6, 3), (8, 4)] {
            let layout = SpreadLayout::canonical(dim, alpha).unwrap();
            for l in layout.node_ids() {
                for i in layout.node_ids().filter(|&i| i != l) {
                    assert!(!pair_partner(&layout, l, i).unwrap().is_empty(), "({dim},{alpha}) {l} {i}");
                }
            }
        }
    }

    #[test]
    fn pair_plan_example() {
        let layout = SpreadLayout::canonical(4, 2).unwrap();
        let plan = plan_pair_repair(&layout, n(1), (n(4), n(3))).unwrap();
        assert_eq!(plan.download_units(), 4);
        assert_eq!(plan.lost, vec![bv("1000"), bv("0110")]);
        // downloads: v5, v6 from N_3 then v7, v8 from N_4
        assert_eq!(plan.recipes, vec![vec![0, 3], vec![1, 2, 3]]);
        assert_eq!(
            plan.to_string(),
            "lost=1000 = piece[3.1] ^ piece[4.2]\nlost=0110 = piece[3.2] ^ piece[4.1] ^ piece[4.2]\ndownload_units=4\n"
        );
        assert_eq!(plan.sources(), vec![(n(3), vec![0, 1]), (n(4), vec![0, 1])]);
    }

    #[test]
    fn pair_plan_rejects_non_pair() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let bad = layout.node_ids().find(|&j| j != n(1) && j != n(4) && !pair_partner(&layout, n(1), n(4)).unwrap().contains(&j));
        let bad = bad.unwrap();
        assert_eq!(
            plan_pair_repair(&layout, n(1), (n(4), bad)).unwrap_err(),
            RepairError::PairInsufficient { failed: n(1), pair: (n(4), bad) }
        );
    }

    #[test]
    fn pair_plans_restore_payloads() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let obj = ObjectData::new((0..6).map(|_| (0..17).map(|_| rng.gen()).collect()).collect()).unwrap();
        let store = encode(&layout, &obj).unwrap();
        for l in [n(1), n(9), n(21)] {
            for pair in repair_pairs(&layout, l).unwrap() {
                let plan = plan_pair_repair(&layout, l, pair).unwrap();
                assert_eq!(plan.execute(&store).unwrap(), store[l.index()]);
            }
        }
    }

    #[test]
    fn min_download_three_units_at_degree_three() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let live = LiveSet::all(21);
        let d3 = plan_min_download(&layout, n(1), 3, &live).unwrap();
        assert_eq!(d3.download_units(), 3);
        assert_eq!(d3.degree(), 3);
        assert!(d3.optimal);
        let d2 = plan_min_download(&layout, n(1), 2, &live).unwrap();
        assert_eq!(d2.download_units(), 4);
        assert_eq!(d2.degree(), 2);

        let example = vec![
            PieceRef { node: n(2), piece: 0 },
            PieceRef { node: n(7), piece: 0 },
            PieceRef { node: n(9), piece: 1 },
        ];
        assert_eq!(
            example.iter().map(|r| layout.basis(r.node)[r.piece]).collect::<Vec<_>>(),
            vec![bv("010000"), bv("110000"), bv("000111")]
        );
        let plan = RepairPlan::from_downloads(&layout, n(1), example).unwrap().unwrap();
        assert_eq!(plan.download_units(), 3);
        assert_eq!(plan.recipes[1], vec![1, 2]);
    }

    #[test]
    fn min_download_is_minimal_against_subset_oracle() {
        // every 2-piece and every 3-piece subset, with no pruning
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let pool: Vec<(NodeId, u32)> = layout
            .node_ids()
            .filter(|&x| x != n(1))
            .flat_map(|x| layout.basis(x).iter().map(move |v| (x, v.bits())))
            .collect();
        let lost: Vec<u32> = layout.basis(n(1)).iter().map(|v| v.bits()).collect();
        let spans = |set: &[u32]| {
            let pts: Vec<u32> = (0u32..1 << set.len())
                .map(|m| set.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).fold(0, |a, (_, v)| a ^ v))
                .collect();
            lost.iter().all(|t| pts.contains(t))
        };
        let mut best_by_degree = [usize::MAX; 4];
        for a in 0..pool.len() {
            for b in a + 1..pool.len() {
                if spans(&[pool[a].1, pool[b].1]) {
                    best_by_degree[2] = 2;
                }
                for c in b + 1..pool.len() {
                    if spans(&[pool[a].1, pool[b].1, pool[c].1]) {
                        let mut nodes = vec![pool[a].0, pool[b].0, pool[c].0];
                        nodes.sort();
                        nodes.dedup();
                        for best in &mut best_by_degree[nodes.len()..=3] {
                            *best = (*best).min(3);
                        }
                    }
                }
            }
        }
        assert_eq!(best_by_degree[2], usize::MAX);
        assert_eq!(best_by_degree[3], 3);
        let live = LiveSet::all(21);
        assert_eq!(plan_min_download(&layout, n(1), 3, &live).unwrap().download_units(), best_by_degree[3]);
        // no 3-piece plan from two nodes, so degree 2 needs 4
        assert_eq!(plan_min_download(&layout, n(1), 2, &live).unwrap().download_units(), 4);
    }

    #[test]
    fn min_download_non_increasing_in_degree() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let mut ids: Vec<NodeId> = layout.node_ids().collect();
            ids.shuffle(&mut rng);
            let dead = &ids[..6];
            let live = LiveSet::without(21, dead);
            let failed = dead[0];
            let mut prev = usize::MAX;
            for d in 2..=6 {
                let units = plan_min_download(&layout, failed, d, &live).map(|p| p.download_units()).unwrap_or(usize::MAX);
                assert!(units <= prev);
                prev = units;
            }
        }
    }

    #[test]
    fn min_download_errors() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let live = LiveSet::all(21);
        assert_eq!(plan_min_download(&layout, n(1), 1, &live).unwrap_err(), RepairError::InvalidDegree(1));
        let only = LiveSet::without(21, &layout.node_ids().filter(|&x| x != n(2)).collect::<Vec<_>>());
        assert!(matches!(
            plan_min_download(&layout, n(1), 3, &only),
            Err(RepairError::InsufficientLiveNodes { .. })
        ));
    }

    #[test]
    fn min_download_large_layout_falls_back() {
        let layout = SpreadLayout::canonical(8, 2).unwrap();
        let live = LiveSet::all(85);
        let plan = plan_min_download(&layout, n(1), 4, &live).unwrap();
        let store = encode(&layout, &ObjectData::new(vec![vec![7, 1]; 8]).unwrap()).unwrap();
        assert_eq!(plan.execute(&store).unwrap(), store[0]);
        assert!(plan.degree() <= 4);
    }

    #[test]
    fn assignment_single_failure() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let live = LiveSet::without(21, &[n(1)]);
        let a = simultaneous_assignment(&layout, &[n(1)], &live).unwrap();
        let pair = a.pairs[&n(1)];
        assert!(repair_pairs(&layout, n(1)).unwrap().contains(&pair));
    }

    #[test]
    fn assignment_infeasible_with_one_live_node() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let failed: Vec<NodeId> = (2..=21).map(n).collect();
        let live = LiveSet::without(21, &failed);
        assert_eq!(simultaneous_assignment(&layout, &failed, &live).unwrap_err(), RepairError::Infeasible(n(2)));
        assert_eq!(assign_repairs(&layout, &[], &live).unwrap_err(), RepairError::NothingToRepair);
        assert_eq!(assign_repairs(&layout, &[n(1)], &live).unwrap_err(), RepairError::InvalidNode(n(1)));
    }

    #[test]
    fn assignment_balances_load() {
        let layout = SpreadLayout::canonical(6, 2).unwrap();
        let failed = [n(1), n(2), n(3), n(4)];
        let live = LiveSet::without(21, &failed);
        let a = simultaneous_assignment(&layout, &failed, &live).unwrap();
        assert_eq!(a.pairs.len(), 4);
        assert!(a.load.values().all(|&l| l == 1));
        for (&f, &(x, y)) in &a.pairs {
            assert!(live.is_live(x) && live.is_live(y));
            assert!(covers(&layout, &[x, y], f));
        }
    }
}
