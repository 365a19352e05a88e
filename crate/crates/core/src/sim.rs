//! Deterministic, logical-time storage cluster.
//!
//! Each epoch first applies the failure model, then repairs every dead node
//! from the nodes that were live after the failures (a node regenerated in
//! an epoch does not serve as a source in that same epoch). Repairs that
//! find no plan are counted as failed and retried in the next epoch.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{decode, encode, retrieve_systematic, CodecError, NodePieces, ObjectData, Piece};
use crate::repair::{assign_repairs, plan_min_download, plan_pair_repair, LiveSet, RepairError, RepairPlan};
use crate::spread::{CodeParams, LayoutError, SpreadLayout};
use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("scenario line {line}: {msg}")]
    Scenario { line: usize, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Repair(#[from] RepairError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureModel {
    /// Each live node independently fails in each epoch with probability `1 - p_node`.
    Iid { p_node: f64 },
    /// Nodes to kill, keyed by epoch (epochs count from 1).
    Scripted(BTreeMap<u64, Vec<NodeId>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairPolicy {
    /// Pair repair of every dead node, load-balanced over live nodes.
    EagerPair,
    /// Minimal-download repair contacting at most `degree` nodes.
    MinDownload { degree: usize },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub dim: u32,
    pub alpha: u32,
    pub poly: Option<u32>,
    /// Object size in bytes, split into `dim` zero-padded fragments.
    pub object_len: usize,
    pub failure: FailureModel,
    pub policy: RepairPolicy,
    pub epochs: u64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(dim: u32, alpha: u32, seed: u64) -> Self {
        ScenarioConfig {
            dim,
            alpha,
            poly: None,
            object_len: 64,
            failure: FailureModel::Scripted(BTreeMap::new()),
            policy: RepairPolicy::EagerPair,
            epochs: 0,
            seed,
        }
    }

    pub fn params(&self) -> Result<CodeParams, SimError> {
        Ok(match self.poly {
            Some(poly) => CodeParams::derive_with_poly(self.dim, self.alpha, poly)?,
            None => CodeParams::derive(self.dim, self.alpha)?,
        })
    }

    fn validate(&self) -> Result<(), SimError> {
        if let FailureModel::Iid { p_node } = self.failure {
            if !(0.0..=1.0).contains(&p_node) {
                return Err(SimError::Invalid(format!("p_node {p_node} outside [0,1]")));
            }
        }
        if self.object_len == 0 {
            return Err(SimError::Invalid("object_len must be at least 1".into()));
        }
        if let RepairPolicy::MinDownload { degree } = self.policy {
            if degree < 2 {
                return Err(SimError::Invalid(format!("repair degree {degree} below 2")));
            }
        }
        Ok(())
    }
}

impl FromStr for ScenarioConfig {
    type Err = SimError;

    /// `key=value` lines: `B`, `alpha`, `seed` (required), `poly`,
    /// `object_len`, `epochs`, `policy` (`eager` | `min-download` | `none`),
    /// `degree`, `p_node`, and repeatable `kill=<epoch>:<node>,<node>`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let (mut dim, mut alpha, mut seed) = (None, None, None);
        let mut cfg = ScenarioConfig::new(0, 0, 0);
        let mut policy = "eager".to_string();
        let mut degree = None;
        let mut p_node = None;
        let mut kills: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| SimError::Scenario { line: i + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| v.parse::<u64>().map_err(|_| err(format!("bad integer {v:?}")));
            match key {
                "B" => dim = Some(int(value)? as u32),
                "alpha" => alpha = Some(int(value)? as u32),
                "seed" => seed = Some(int(value)?),
                "poly" => {
                    let hex = value.trim_start_matches("0x");
                    cfg.poly = Some(u32::from_str_radix(hex, 16).map_err(|_| err(format!("bad poly {value:?}")))?);
                }
                "object_len" => cfg.object_len = int(value)? as usize,
                "epochs" => cfg.epochs = int(value)?,
                "policy" => policy = value.to_string(),
                "degree" => degree = Some(int(value)? as usize),
                "p_node" => p_node = Some(value.parse::<f64>().map_err(|_| err(format!("bad probability {value:?}")))?),
                "kill" => {
                    let (epoch, nodes) = value.split_once(':').ok_or_else(|| err("kill needs epoch:nodes".into()))?;
                    let epoch = int(epoch.trim())?;
                    let entry = kills.entry(epoch).or_default();
                    for n in nodes.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        entry.push(n.parse::<NodeId>().map_err(err)?);
                    }
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        let missing = |k: &str| SimError::Invalid(format!("missing {k}"));
        cfg.dim = dim.ok_or_else(|| missing("B"))?;
        cfg.alpha = alpha.ok_or_else(|| missing("alpha"))?;
        cfg.seed = seed.ok_or_else(|| missing("seed"))?;
        cfg.policy = match policy.as_str() {
            "eager" | "eager-pair" => RepairPolicy::EagerPair,
            "min-download" => RepairPolicy::MinDownload { degree: degree.ok_or_else(|| missing("degree"))? },
            "none" => RepairPolicy::None,
            other => return Err(SimError::Invalid(format!("unknown policy {other:?}"))),
        };
        cfg.failure = match (p_node, kills.is_empty()) {
            (Some(_), false) => return Err(SimError::Invalid("p_node and kill are mutually exclusive".into())),
            (Some(p_node), true) => FailureModel::Iid { p_node },
            (None, _) => FailureModel::Scripted(kills),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub alive: bool,
    pub data: Option<NodePieces>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub pieces_transferred: u64,
    pub repairs_ok: u64,
    pub repairs_failed: u64,
    pub retrieval_attempts: u64,
    pub retrieval_successes: u64,
    /// Repaired nodes whose pieces differ from the originals.
    pub conservation_violations: u64,
    /// Successful repairs by number of nodes contacted.
    pub repair_degrees: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Live nodes after the failure phase, before repair.
    pub live: usize,
    pub transfers: u64,
    pub repairs_ok: u64,
    pub repairs_failed: u64,
    /// Whether the object was decodable from the nodes live before repair.
    pub decodable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalStrategy {
    /// `k` uniformly chosen live nodes.
    RandomK,
    /// The nodes holding unit-vector pieces.
    Systematic,
    /// Every live node.
    AllLive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalOutcome {
    pub success: bool,
    pub nodes_contacted: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    layout: SpreadLayout,
    config: ScenarioConfig,
    object: ObjectData,
    reference: Vec<NodePieces>,
    nodes: Vec<NodeState>,
    epoch: u64,
    rng: ChaCha8Rng,
    metrics: Metrics,
    history: Vec<EpochRecord>,
}

/// Encodes a seeded random object and places it on all-live nodes.
pub fn sim_init(config: ScenarioConfig) -> Result<ClusterState, SimError> {
    config.validate()?;
    let layout = SpreadLayout::build(config.params()?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut bytes = vec![0u8; config.object_len];
    rng.fill_bytes(&mut bytes);
    let object = ObjectData::from_bytes(&bytes, layout.params().dim);
    let reference = encode(&layout, &object)?;
    let nodes = reference.iter().map(|np| NodeState { alive: true, data: Some(np.clone()) }).collect();
    Ok(ClusterState {
        layout,
        config,
        object,
        reference,
        nodes,
        epoch: 0,
        rng,
        metrics: Metrics::default(),
        history: Vec::new(),
    })
}

impl ClusterState {
    pub fn layout(&self) -> &SpreadLayout {
        &self.layout
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn object(&self) -> &ObjectData {
        &self.object
    }

    pub fn live_set(&self) -> LiveSet {
        LiveSet::from_flags(self.nodes.iter().map(|n| n.alive).collect())
    }

    pub fn kill(&mut self, node: NodeId) {
        if let Some(n) = self.nodes.get_mut(node.index()) {
            n.alive = false;
            n.data = None;
        }
    }

    /// Brings every node back with its original pieces.
    pub fn restore_all(&mut self) {
        for (n, np) in self.nodes.iter_mut().zip(&self.reference) {
            n.alive = true;
            n.data = Some(np.clone());
        }
    }

    /// Kills each live node independently with probability `1 - p_node`.
    pub fn apply_iid_failures(&mut self, p_node: f64) {
        for i in 0..self.nodes.len() {
            let fail = self.rng.gen::<f64>() >= p_node;
            if self.nodes[i].alive && fail {
                self.kill(NodeId::from_index(i));
            }
        }
    }

    fn live_pieces(&self, nodes: impl IntoIterator<Item = NodeId>) -> Vec<Piece> {
        nodes
            .into_iter()
            .filter_map(|n| self.nodes[n.index()].data.as_ref())
            .flat_map(|np| np.pieces.iter().cloned())
            .collect()
    }

    fn decodes_to_original(&self, pieces: &[Piece]) -> bool {
        decode(pieces, self.layout.params().dim).is_ok_and(|o| o == self.object)
    }

    pub fn is_decodable(&self) -> bool {
        self.decodes_to_original(&self.live_pieces(self.live_set().live_nodes().collect::<Vec<_>>()))
    }

    /// Runs one epoch: failures, then repairs against the post-failure live set.
    pub fn step(&mut self) -> EpochRecord {
        self.epoch += 1;
        match self.config.failure.clone() {
            FailureModel::Iid { p_node } => self.apply_iid_failures(p_node),
            FailureModel::Scripted(script) => {
                for &n in script.get(&self.epoch).into_iter().flatten() {
                    self.kill(n);
                }
            }
        }
        let live = self.live_set();
        let decodable = self.is_decodable();
        let dead: Vec<NodeId> = self.layout.node_ids().filter(|&n| !live.is_live(n)).collect();

        let mut plans: Vec<(NodeId, Option<RepairPlan>)> = Vec::new();
        if !dead.is_empty() {
            match self.config.policy {
                RepairPolicy::None => {}
                RepairPolicy::EagerPair => {
                    let assignment = assign_repairs(&self.layout, &dead, &live).expect("dead nodes are not live");
                    for &f in &dead {
                        let plan = assignment.pairs.get(&f).and_then(|&pair| plan_pair_repair(&self.layout, f, pair).ok());
                        plans.push((f, plan));
                    }
                }
                RepairPolicy::MinDownload { degree } => {
                    for &f in &dead {
                        plans.push((f, plan_min_download(&self.layout, f, degree, &live).ok()));
                    }
                }
            }
        }

        let (mut transfers, mut ok, mut failed) = (0u64, 0u64, 0u64);
        let mut restored = Vec::new();
        for (f, plan) in plans {
            let Some(plan) = plan else {
                failed += 1;
                continue;
            };
            let payloads: Option<Vec<Vec<u8>>> = plan
                .downloads
                .iter()
                .map(|d| self.nodes[d.node.index()].data.as_ref().map(|np| np.pieces[d.piece].payload.clone()))
                .collect();
            let Some(payloads) = payloads else {
                failed += 1;
                continue;
            };
            let pieces = plan.reconstruct(&payloads).expect("payload count matches plan");
            transfers += plan.download_units() as u64;
            ok += 1;
            *self.metrics.repair_degrees.entry(plan.degree()).or_default() += 1;
            let np = NodePieces { node: f, pieces };
            if np != self.reference[f.index()] {
                self.metrics.conservation_violations += 1;
            }
            restored.push(np);
        }
        for np in restored {
            let i = np.node.index();
            self.nodes[i] = NodeState { alive: true, data: Some(np) };
        }

        self.metrics.pieces_transferred += transfers;
        self.metrics.repairs_ok += ok;
        self.metrics.repairs_failed += failed;
        let record = EpochRecord {
            epoch: self.epoch,
            live: live.count(),
            transfers,
            repairs_ok: ok,
            repairs_failed: failed,
            decodable,
        };
        self.history.push(record);
        record
    }

    /// Runs the configured number of epochs.
    pub fn run(&mut self) {
        for _ in 0..self.config.epochs {
            self.step();
        }
    }

    /// Attempts to rebuild the object and checks it byte for byte.
    pub fn retrieve(&mut self, strategy: RetrievalStrategy) -> RetrievalOutcome {
        let live: Vec<NodeId> = self.live_set().live_nodes().collect();
        let outcome = match strategy {
            RetrievalStrategy::AllLive => {
                let success = self.decodes_to_original(&self.live_pieces(live.iter().copied()));
                RetrievalOutcome { success, nodes_contacted: live }
            }
            RetrievalStrategy::RandomK => {
                let k = self.layout.params().k as usize;
                let mut chosen: Vec<NodeId> = live.choose_multiple(&mut self.rng, k.min(live.len())).copied().collect();
                chosen.sort();
                let success = chosen.len() == k && self.decodes_to_original(&self.live_pieces(chosen.iter().copied()));
                RetrievalOutcome { success, nodes_contacted: chosen }
            }
            RetrievalStrategy::Systematic => {
                let nodes = &self.nodes;
                let got = retrieve_systematic(&self.layout, |node, p| {
                    nodes[node.index()].data.as_ref().map(|np| np.pieces[p].payload.clone())
                });
                match got {
                    Ok(r) => RetrievalOutcome { success: r.object == self.object, nodes_contacted: r.nodes_contacted },
                    Err(_) => {
                        let mut contacted: Vec<NodeId> = crate::codec::systematic_map(&self.layout)
                            .map(|m| m.iter().map(|s| s.node()).collect())
                            .unwrap_or_default();
                        contacted.dedup();
                        RetrievalOutcome { success: false, nodes_contacted: contacted }
                    }
                }
            }
        };
        self.metrics.retrieval_attempts += 1;
        if outcome.success {
            self.metrics.retrieval_successes += 1;
        }
        outcome
    }

    /// Per-epoch CSV: `epoch,live,transfers,repairs_ok,repairs_failed,decodable`.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("epoch,live,transfers,repairs_ok,repairs_failed,decodable\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.live, r.transfers, r.repairs_ok, r.repairs_failed, r.decodable as u8
            );
        }
        out
    }

    /// Human-readable totals.
    pub fn summary(&self) -> String {
        let m = &self.metrics;
        let p = self.layout.params();
        let mut out = String::new();
        let _ = writeln!(out, "code: {p}");
        let _ = writeln!(out, "epochs: {}", self.epoch);
        let _ = writeln!(out, "pieces_transferred: {}", m.pieces_transferred);
        let _ = writeln!(out, "repairs_ok: {} repairs_failed: {}", m.repairs_ok, m.repairs_failed);
        let degrees: Vec<String> = m.repair_degrees.iter().map(|(d, c)| format!("d={d}:{c}")).collect();
        let _ = writeln!(out, "repair_degrees: {}", if degrees.is_empty() { "-".into() } else { degrees.join(" ") });
        let _ = writeln!(out, "conservation_violations: {}", m.conservation_violations);
        let _ = writeln!(out, "retrievals: {}/{}", m.retrieval_successes, m.retrieval_attempts);
        let durable = self.history.iter().all(|r| r.decodable);
        let _ = writeln!(out, "durable: {durable} decodable_now: {}", self.is_decodable());
        out
    }
}

/// Fraction of trials in which the object is decodable from the nodes that
/// survive i.i.d. failures at availability `p_node`, with no repair.
pub fn monte_carlo_availability(dim: u32, alpha: u32, p_node: f64, trials: u64, seed: u64) -> Result<(u64, u64), SimError> {
    let mut cfg = ScenarioConfig::new(dim, alpha, seed);
    cfg.object_len = dim as usize;
    cfg.policy = RepairPolicy::None;
    let mut state = sim_init(cfg)?;
    let mut ok = 0;
    for _ in 0..trials {
        state.restore_all();
        state.apply_iid_failures(p_node);
        if state.retrieve(RetrievalStrategy::AllLive).success {
            ok += 1;
        }
    }
    Ok((ok, trials))
}
