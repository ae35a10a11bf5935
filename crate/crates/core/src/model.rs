//! Markov chains, Markov decision processes, strategies and target sets.
//!
//! Every model stores its transitions per source vertex, sorted by
//! destination, so that `(src, dst)` lookups are a binary search.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

pub type VertexId = usize;

/// Absolute tolerance on row sums of strict models.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: VertexId,
    pub dst: VertexId,
    pub weight: f64,
    pub reward: f64,
}

impl Edge {
    pub fn new(src: VertexId, dst: VertexId, weight: f64, reward: f64) -> Self {
        Edge { src, dst, weight, reward }
    }
}

/// One outgoing transition of a vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub dst: VertexId,
    pub weight: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("vertex {vertex} is out of range (model has {n} vertices)")]
    VertexOutOfRange { vertex: VertexId, n: usize },
    #[error("duplicate edge ({src}, {dst})")]
    DuplicateEdge { src: VertexId, dst: VertexId },
    #[error("target set is empty")]
    EmptyTargets,
    #[error("player-1 vertex {0} has no strategy choice")]
    MissingChoice(VertexId),
    #[error("strategy chooses ({0}, {1}), which is not an edge")]
    InvalidChoice(VertexId, VertexId),
    #[error("owner list has {owners} entries but the model has {n} vertices")]
    OwnerCount { owners: usize, n: usize },
}

/// A broken model invariant, reported as data.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { vertex: VertexId, sum: f64 },
    WeightOutOfRange { src: VertexId, dst: VertexId, weight: f64 },
    NonFinite { src: VertexId, dst: VertexId },
    NoOutgoingEdge { vertex: VertexId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { vertex, sum } => {
                write!(f, "vertex {vertex}: outgoing weights sum to {sum}, expected 1")
            }
            Violation::WeightOutOfRange { src, dst, weight } => {
                write!(f, "edge ({src}, {dst}): weight {weight} is outside [0, 1]")
            }
            Violation::NonFinite { src, dst } => {
                write!(f, "edge ({src}, {dst}): weight or reward is not finite")
            }
            Violation::NoOutgoingEdge { vertex } => {
                write!(f, "vertex {vertex}: no outgoing edge")
            }
        }
    }
}

fn build_rows(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Vec<Vec<Transition>>, ModelError> {
    let mut rows: Vec<Vec<Transition>> = vec![Vec::new(); n];
    for e in edges {
        for v in [e.src, e.dst] {
            if v >= n {
                return Err(ModelError::VertexOutOfRange { vertex: v, n });
            }
        }
        rows[e.src].push(Transition { dst: e.dst, weight: e.weight, reward: e.reward });
    }
    for (src, row) in rows.iter_mut().enumerate() {
        row.sort_by_key(|t| t.dst);
        if let Some(w) = row.windows(2).find(|w| w[0].dst == w[1].dst) {
            return Err(ModelError::DuplicateEdge { src, dst: w[0].dst });
        }
    }
    Ok(rows)
}

fn find(row: &[Transition], dst: VertexId) -> Option<&Transition> {
    row.binary_search_by_key(&dst, |t| t.dst).ok().map(|i| &row[i])
}

/// A Markov chain with edge rewards.
///
/// In strict mode every row is a probability distribution. Non-strict chains
/// carry arbitrary real weights and are read as linear systems rather than as
/// random walks.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    rows: Vec<Vec<Transition>>,
    strict: bool,
}

impl MarkovChain {
    /// Builds a strict chain. Parallel edges are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self, ModelError> {
        Ok(MarkovChain { rows: build_rows(n, edges)?, strict: true })
    }

    /// Builds a chain whose weights may be arbitrary reals.
    pub fn generalized(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self, ModelError> {
        Ok(MarkovChain { rows: build_rows(n, edges)?, strict: false })
    }

    pub fn vertex_count(&self) -> usize {
        self.rows.len()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn row(&self, u: VertexId) -> &[Transition] {
        &self.rows[u]
    }

    pub fn transition(&self, src: VertexId, dst: VertexId) -> Option<&Transition> {
        find(&self.rows[src], dst)
    }

    pub fn weight(&self, src: VertexId, dst: VertexId) -> f64 {
        self.transition(src, dst).map_or(0.0, |t| t.weight)
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.rows.iter().enumerate().flat_map(|(src, row)| {
            row.iter().map(move |t| Edge::new(src, t.dst, t.weight, t.reward))
        })
    }

    /// Undirected skeleton pairs `(src, dst)` of every stored edge.
    pub fn skeleton(&self) -> Vec<(VertexId, VertexId)> {
        self.edges().map(|e| (e.src, e.dst)).collect()
    }
}

/// Checks the chain invariants. With `strict` set, rows must be distributions.
pub fn validate_mc(mc: &MarkovChain, strict: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    for (u, row) in mc.rows.iter().enumerate() {
        check_row(u, row, strict, &mut out);
    }
    out
}

fn check_row(u: VertexId, row: &[Transition], strict: bool, out: &mut Vec<Violation>) {
    let mut sum = 0.0;
    for t in row {
        if !t.weight.is_finite() || !t.reward.is_finite() {
            out.push(Violation::NonFinite { src: u, dst: t.dst });
            continue;
        }
        if strict && !(0.0..=1.0).contains(&t.weight) {
            out.push(Violation::WeightOutOfRange { src: u, dst: t.dst, weight: t.weight });
        }
        sum += t.weight;
    }
    if strict && (sum - 1.0).abs() > PROB_TOLERANCE {
        out.push(Violation::RowSum { vertex: u, sum });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Owner {
    Player1,
    Probabilistic,
}

/// An MDP: player-1 vertices pick a successor, probabilistic vertices follow
/// their distribution. Weights on player-1 rows are ignored and stored as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovDecisionProcess {
    owner: Vec<Owner>,
    rows: Vec<Vec<Transition>>,
}

impl MarkovDecisionProcess {
    pub fn new(owner: Vec<Owner>, edges: impl IntoIterator<Item = Edge>) -> Result<Self, ModelError> {
        let n = owner.len();
        let mut rows = build_rows(n, edges)?;
        for (u, row) in rows.iter_mut().enumerate() {
            if owner[u] == Owner::Player1 {
                row.iter_mut().for_each(|t| t.weight = 0.0);
            }
        }
        Ok(MarkovDecisionProcess { owner, rows })
    }

    /// Views a chain as an MDP without player-1 vertices.
    pub fn from_chain(mc: &MarkovChain) -> Self {
        MarkovDecisionProcess {
            owner: vec![Owner::Probabilistic; mc.vertex_count()],
            rows: mc.rows.clone(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.rows.len()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn owner(&self, u: VertexId) -> Owner {
        self.owner[u]
    }

    pub fn owners(&self) -> &[Owner] {
        &self.owner
    }

    pub fn row(&self, u: VertexId) -> &[Transition] {
        &self.rows[u]
    }

    pub fn transition(&self, src: VertexId, dst: VertexId) -> Option<&Transition> {
        find(&self.rows[src], dst)
    }

    pub fn player1_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.owner.len()).filter(|&u| self.owner[u] == Owner::Player1)
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.rows.iter().enumerate().flat_map(|(src, row)| {
            row.iter().map(move |t| Edge::new(src, t.dst, t.weight, t.reward))
        })
    }

    pub fn skeleton(&self) -> Vec<(VertexId, VertexId)> {
        self.edges().map(|e| (e.src, e.dst)).collect()
    }
}

pub fn validate_mdp(mdp: &MarkovDecisionProcess) -> Vec<Violation> {
    let mut out = Vec::new();
    for (u, row) in mdp.rows.iter().enumerate() {
        if row.is_empty() {
            out.push(Violation::NoOutgoingEdge { vertex: u });
            continue;
        }
        match mdp.owner[u] {
            Owner::Probabilistic => check_row(u, row, true, &mut out),
            Owner::Player1 => {
                for t in row.iter().filter(|t| !t.reward.is_finite()) {
                    out.push(Violation::NonFinite { src: u, dst: t.dst });
                }
            }
        }
    }
    out
}

/// A pure memoryless strategy: one chosen successor per player-1 vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    choice: Vec<Option<VertexId>>,
}

impl Strategy {
    pub fn empty(n: usize) -> Self {
        Strategy { choice: vec![None; n] }
    }

    /// Every player-1 vertex picks its smallest-id successor.
    pub fn first_successor(mdp: &MarkovDecisionProcess) -> Self {
        let mut s = Strategy::empty(mdp.vertex_count());
        for v in mdp.player1_vertices() {
            s.choice[v] = mdp.row(v).first().map(|t| t.dst);
        }
        s
    }

    pub fn get(&self, v: VertexId) -> Option<VertexId> {
        self.choice.get(v).copied().flatten()
    }

    pub fn set(&mut self, v: VertexId, to: VertexId) {
        self.choice[v] = Some(to);
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.choice.iter().enumerate().filter_map(|(v, c)| c.map(|c| (v, c)))
    }
}

/// The MC obtained by fixing `sigma` on every player-1 vertex.
pub fn induce_mc(mdp: &MarkovDecisionProcess, sigma: &Strategy) -> Result<MarkovChain, ModelError> {
    let mut rows = Vec::with_capacity(mdp.vertex_count());
    for (v, row) in mdp.rows.iter().enumerate() {
        match mdp.owner[v] {
            Owner::Probabilistic => rows.push(row.clone()),
            Owner::Player1 => {
                let to = sigma.get(v).ok_or(ModelError::MissingChoice(v))?;
                let t = find(row, to).ok_or(ModelError::InvalidChoice(v, to))?;
                rows.push(vec![Transition { dst: to, weight: 1.0, reward: t.reward }]);
            }
        }
    }
    Ok(MarkovChain { rows, strict: true })
}

/// A nonempty set of target vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSet {
    targets: BTreeSet<VertexId>,
}

impl TargetSet {
    pub fn new(ids: impl IntoIterator<Item = VertexId>, n: usize) -> Result<Self, ModelError> {
        let targets: BTreeSet<_> = ids.into_iter().collect();
        if targets.is_empty() {
            return Err(ModelError::EmptyTargets);
        }
        if let Some(&v) = targets.iter().find(|&&v| v >= n) {
            return Err(ModelError::VertexOutOfRange { vertex: v, n });
        }
        Ok(TargetSet { targets })
    }

    pub fn single(t: VertexId) -> Self {
        TargetSet { targets: BTreeSet::from([t]) }
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.targets.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn first(&self) -> VertexId {
        *self.targets.iter().next().expect("target set is nonempty")
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.targets.iter().copied()
    }
}

/// Marks every vertex with a path to some target, following only the
/// `(src, dst)` pairs yielded by `edges`.
pub fn backward_reachable(
    n: usize,
    edges: impl IntoIterator<Item = (VertexId, VertexId)>,
    targets: impl IntoIterator<Item = VertexId>,
) -> Vec<bool> {
    let mut preds: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    for (s, d) in edges {
        preds[d].push(s);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for t in targets {
        if !seen[t] {
            seen[t] = true;
            queue.push_back(t);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &p in &preds[v] {
            if !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    seen
}

/// The chain restricted to the vertices that can reach the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Coreachable {
    pub chain: MarkovChain,
    pub targets: TargetSet,
    /// Vertices without a path to a target, in original ids. Their hitting
    /// probability is 0.
    pub removed: Vec<VertexId>,
    /// `kept[new_id]` is the original id of a surviving vertex.
    pub kept: Vec<VertexId>,
}

/// Drops every vertex that cannot reach `targets` along nonzero-weight edges.
pub fn remove_non_coreachable(mc: &MarkovChain, targets: &TargetSet) -> Result<Coreachable, ModelError> {
    let n = mc.vertex_count();
    if targets.is_empty() {
        return Err(ModelError::EmptyTargets);
    }
    if let Some(v) = targets.iter().find(|&v| v >= n) {
        return Err(ModelError::VertexOutOfRange { vertex: v, n });
    }
    let live = backward_reachable(
        n,
        mc.edges().filter(|e| e.weight != 0.0).map(|e| (e.src, e.dst)),
        targets.iter(),
    );
    let mut new_id = vec![usize::MAX; n];
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for v in 0..n {
        if live[v] {
            new_id[v] = kept.len();
            kept.push(v);
        } else {
            removed.push(v);
        }
    }
    let rows = kept
        .iter()
        .map(|&v| {
            mc.rows[v]
                .iter()
                .filter(|t| live[t.dst])
                .map(|t| Transition { dst: new_id[t.dst], ..*t })
                .collect()
        })
        .collect();
    let strict = mc.strict && removed.is_empty();
    Ok(Coreachable {
        chain: MarkovChain { rows, strict },
        targets: TargetSet { targets: targets.iter().map(|t| new_id[t]).collect() },
        removed,
        kept,
    })
}
