//! Tree decompositions: validation, heuristic construction, and the
//! leaf-first elimination schedule used by every treewidth-based solver.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::model::VertexId;

pub type BagId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    bags: Vec<Vec<VertexId>>,
    tree_edges: Vec<(BagId, BagId)>,
    root: BagId,
}

impl TreeDecomposition {
    /// Bags are sorted and deduplicated. The root defaults to bag 0.
    pub fn new(bags: Vec<Vec<VertexId>>, tree_edges: Vec<(BagId, BagId)>) -> Self {
        let bags = bags
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b.dedup();
                b
            })
            .collect();
        TreeDecomposition { bags, tree_edges, root: 0 }
    }

    pub fn with_root(mut self, root: BagId) -> Self {
        self.root = root;
        self
    }

    pub fn root(&self) -> BagId {
        self.root
    }

    pub fn bag_count(&self) -> usize {
        self.bags.len()
    }

    pub fn bag(&self, b: BagId) -> &[VertexId] {
        &self.bags[b]
    }

    pub fn bags(&self) -> &[Vec<VertexId>] {
        &self.bags
    }

    pub fn tree_edges(&self) -> &[(BagId, BagId)] {
        &self.tree_edges
    }

    pub fn contains(&self, b: BagId, v: VertexId) -> bool {
        self.bags[b].binary_search(&v).is_ok()
    }

    /// Largest bag size minus one (0 for a decomposition of empty bags).
    pub fn width(&self) -> usize {
        self.bags.iter().map(Vec::len).max().unwrap_or(0).saturating_sub(1)
    }

    /// Relabels vertices; vertices mapped to `None` disappear from every bag.
    /// Removing a vertex from all bags keeps a decomposition valid for the
    /// induced subgraph.
    pub fn map_vertices(&self, mut f: impl FnMut(VertexId) -> Option<VertexId>) -> Self {
        let bags = self
            .bags
            .iter()
            .map(|b| {
                let mut nb: Vec<_> = b.iter().filter_map(|&v| f(v)).collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect();
        TreeDecomposition { bags, tree_edges: self.tree_edges.clone(), root: self.root }
    }

    /// First bag containing every vertex of `pinned`, preferring the current root.
    pub fn bag_containing_all(&self, pinned: &[VertexId]) -> Option<BagId> {
        let holds = |b: BagId| pinned.iter().all(|&v| self.contains(b, v));
        if self.root < self.bags.len() && holds(self.root) {
            return Some(self.root);
        }
        (0..self.bags.len()).find(|&b| holds(b))
    }

    /// Parent of every bag when the tree is hung from `root`; `None` for the
    /// root and for bags not reachable from it.
    pub fn parents(&self, root: BagId) -> Vec<Option<BagId>> {
        let nb = self.bags.len();
        let mut adj = vec![Vec::new(); nb];
        for &(a, b) in &self.tree_edges {
            if a < nb && b < nb {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut parent = vec![None; nb];
        let mut seen = vec![false; nb];
        if root >= nb {
            return parent;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(b) = queue.pop_front() {
            for &c in &adj[b] {
                if !seen[c] {
                    seen[c] = true;
                    parent[c] = Some(b);
                    queue.push_back(c);
                }
            }
        }
        parent
    }
}

/// Adds `v` to every bag. Width grows by at most one.
pub fn add_to_all_bags(td: &TreeDecomposition, v: VertexId) -> TreeDecomposition {
    let bags = td
        .bags
        .iter()
        .map(|b| {
            let mut nb = b.clone();
            if let Err(i) = nb.binary_search(&v) {
                nb.insert(i, v);
            }
            nb
        })
        .collect();
    TreeDecomposition { bags, tree_edges: td.tree_edges.clone(), root: td.root }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TdViolation {
    VertexUncovered(VertexId),
    VertexOutOfRange { bag: BagId, vertex: VertexId },
    EdgeUncovered(VertexId, VertexId),
    NotConnected(VertexId),
    TreeEdgeOutOfRange(BagId, BagId),
    TreeEdgeCount { bags: usize, edges: usize },
    NotATree,
    RootOutOfRange(BagId),
}

impl fmt::Display for TdViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TdViolation::VertexUncovered(v) => write!(f, "vertex {v} is in no bag"),
            TdViolation::VertexOutOfRange { bag, vertex } => {
                write!(f, "bag {bag} holds vertex {vertex}, which is not in the graph")
            }
            TdViolation::EdgeUncovered(u, v) => write!(f, "edge ({u}, {v}) is in no bag"),
            TdViolation::NotConnected(v) => {
                write!(f, "bags containing vertex {v} do not form a connected subtree")
            }
            TdViolation::TreeEdgeOutOfRange(a, b) => write!(f, "tree edge ({a}, {b}) names a missing bag"),
            TdViolation::TreeEdgeCount { bags, edges } => {
                write!(f, "{bags} bags need {} tree edges, found {edges}", bags.saturating_sub(1))
            }
            TdViolation::NotATree => write!(f, "tree edges do not form a tree"),
            TdViolation::RootOutOfRange(r) => write!(f, "root bag {r} does not exist"),
        }
    }
}

/// Checks the four decomposition properties against a graph with `n`
/// vertices and the given (directed or undirected) edges.
pub fn validate_td(n: usize, edges: &[(VertexId, VertexId)], td: &TreeDecomposition) -> Vec<TdViolation> {
    let mut out = Vec::new();
    let nb = td.bags.len();

    let mut tree_ok = true;
    for &(a, b) in &td.tree_edges {
        if a >= nb || b >= nb {
            out.push(TdViolation::TreeEdgeOutOfRange(a, b));
            tree_ok = false;
        }
    }
    if nb > 0 && td.tree_edges.len() != nb - 1 {
        out.push(TdViolation::TreeEdgeCount { bags: nb, edges: td.tree_edges.len() });
        tree_ok = false;
    }
    if tree_ok && nb > 0 && td.parents(0).iter().skip(1).any(Option::is_none) {
        out.push(TdViolation::NotATree);
        tree_ok = false;
    }
    if nb > 0 && td.root >= nb {
        out.push(TdViolation::RootOutOfRange(td.root));
    }

    let mut bags_of: Vec<Vec<BagId>> = vec![Vec::new(); n];
    for (b, bag) in td.bags.iter().enumerate() {
        for &v in bag {
            if v >= n {
                out.push(TdViolation::VertexOutOfRange { bag: b, vertex: v });
            } else {
                bags_of[v].push(b);
            }
        }
    }
    for (v, bs) in bags_of.iter().enumerate() {
        if bs.is_empty() {
            out.push(TdViolation::VertexUncovered(v));
        }
    }

    let mut seen_edges = BTreeSet::new();
    for &(u, v) in edges {
        if u == v || u >= n || v >= n {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if !seen_edges.insert(key) {
            continue;
        }
        let (small, other) = if bags_of[u].len() <= bags_of[v].len() { (u, v) } else { (v, u) };
        if !bags_of[small].iter().any(|&b| td.contains(b, other)) {
            out.push(TdViolation::EdgeUncovered(key.0, key.1));
        }
    }

    if tree_ok {
        // In a tree, the bags holding v are connected iff they span exactly
        // (count - 1) tree edges.
        let mut shared = vec![0usize; n];
        for &(a, b) in &td.tree_edges {
            let (ba, bb) = (&td.bags[a], &td.bags[b]);
            let (mut i, mut j) = (0, 0);
            while i < ba.len() && j < bb.len() {
                match ba[i].cmp(&bb[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        if ba[i] < n {
                            shared[ba[i]] += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        for v in 0..n {
            if !bags_of[v].is_empty() && bags_of[v].len() != shared[v] + 1 {
                out.push(TdViolation::NotConnected(v));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heuristic {
    MinDegree,
    MinFill,
}

/// Builds a decomposition from a greedy elimination ordering. Each vertex
/// contributes the bag `{v} ∪ N(v)` at its elimination time. Components are
/// decomposed separately and their roots chained together.
pub fn heuristic_decompose(n: usize, edges: &[(VertexId, VertexId)], heuristic: Heuristic) -> TreeDecomposition {
    let mut adj: Vec<BTreeSet<VertexId>> = vec![BTreeSet::new(); n];
    for &(u, v) in edges {
        if u != v {
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    let fill_of = |adj: &[BTreeSet<VertexId>], v: VertexId| -> usize {
        let nbrs: Vec<_> = adj[v].iter().copied().collect();
        let mut missing = 0;
        for i in 0..nbrs.len() {
            for &b in &nbrs[i + 1..] {
                if !adj[nbrs[i]].contains(&b) {
                    missing += 1;
                }
            }
        }
        missing
    };
    let score = |adj: &[BTreeSet<VertexId>], v: VertexId| -> (usize, usize) {
        match heuristic {
            Heuristic::MinDegree => (adj[v].len(), 0),
            Heuristic::MinFill => (fill_of(adj, v), adj[v].len()),
        }
    };

    let mut key: Vec<(usize, usize)> = (0..n).map(|v| score(&adj, v)).collect();
    let mut queue: BTreeSet<((usize, usize), VertexId)> = (0..n).map(|v| (key[v], v)).collect();
    let mut position = vec![usize::MAX; n];
    let mut bags = Vec::with_capacity(n);
    let mut order = Vec::with_capacity(n);

    while let Some((_, v)) = queue.pop_first() {
        position[v] = order.len();
        order.push(v);
        let nbrs: Vec<_> = adj[v].iter().copied().collect();
        let mut bag = nbrs.clone();
        bag.push(v);
        bags.push(bag);
        for &a in &nbrs {
            adj[a].remove(&v);
        }
        for i in 0..nbrs.len() {
            for &b in &nbrs[i + 1..] {
                adj[nbrs[i]].insert(b);
                adj[b].insert(nbrs[i]);
            }
        }
        adj[v].clear();

        let mut touched: BTreeSet<VertexId> = nbrs.iter().copied().collect();
        if heuristic == Heuristic::MinFill {
            for &a in &nbrs {
                touched.extend(adj[a].iter().copied());
            }
        }
        for w in touched {
            if position[w] != usize::MAX {
                continue;
            }
            let k = score(&adj, w);
            if k != key[w] {
                queue.remove(&(key[w], w));
                key[w] = k;
                queue.insert((k, w));
            }
        }
    }

    // The bag of v hangs below the bag of its earliest-eliminated neighbour.
    let mut tree_edges = Vec::with_capacity(n.saturating_sub(1));
    let mut roots = Vec::new();
    for (i, bag) in bags.iter().enumerate() {
        let next = bag
            .iter()
            .filter(|&&w| w != order[i])
            .map(|&w| position[w])
            .min();
        match next {
            Some(p) => tree_edges.push((i, p)),
            None => roots.push(i),
        }
    }
    let root = roots.last().copied().unwrap_or(0);
    for w in roots.windows(2) {
        tree_edges.push((w[0], w[1]));
    }
    TreeDecomposition::new(bags, tree_edges).with_root(root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Drop a leaf bag whose vertices all live in its parent.
    RemoveBag(BagId),
    /// Eliminate a vertex that, at this point, appears only in `bag`.
    EliminateVertex { vertex: VertexId, bag: BagId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationSchedule {
    pub root: BagId,
    pub steps: Vec<Step>,
}

impl EliminationSchedule {
    pub fn eliminated(&self) -> impl Iterator<Item = (VertexId, BagId)> + '_ {
        self.steps.iter().filter_map(|s| match *s {
            Step::EliminateVertex { vertex, bag } => Some((vertex, bag)),
            Step::RemoveBag(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("root bag {0} does not exist")]
    RootOutOfRange(BagId),
    #[error("pinned vertex {vertex} is not in root bag {root}")]
    PinnedNotInRoot { vertex: VertexId, root: BagId },
}

/// Leaf-first elimination order. The smallest-id leaf is taken first; inside
/// a bag, vertices go in ascending id. Vertices of the root bag that are not
/// pinned are eliminated last.
pub fn schedule(td: &TreeDecomposition, pinned: &[VertexId]) -> Result<EliminationSchedule, ScheduleError> {
    let nb = td.bags.len();
    let root = td.root;
    if nb == 0 {
        return Ok(EliminationSchedule { root, steps: Vec::new() });
    }
    if root >= nb {
        return Err(ScheduleError::RootOutOfRange(root));
    }
    if let Some(&vertex) = pinned.iter().find(|&&v| !td.contains(root, v)) {
        return Err(ScheduleError::PinnedNotInRoot { vertex, root });
    }

    let parent = td.parents(root);
    let mut children = vec![0usize; nb];
    for p in parent.iter().flatten() {
        children[*p] += 1;
    }
    let max_vertex = td.bags.iter().flatten().max().map_or(0, |&v| v + 1);
    let mut is_pinned = vec![false; max_vertex];
    for &v in pinned {
        if v < max_vertex {
            is_pinned[v] = true;
        }
    }
    let mut eliminated = vec![false; max_vertex];
    let mut in_parent = vec![false; max_vertex];
    let mut leaves: BTreeSet<BagId> =
        (0..nb).filter(|&b| b != root && children[b] == 0 && parent[b].is_some()).collect();
    let mut steps = Vec::new();

    while let Some(l) = leaves.pop_first() {
        let p = parent[l].expect("non-root leaf has a parent");
        for &v in &td.bags[p] {
            in_parent[v] = true;
        }
        for &u in &td.bags[l] {
            if !in_parent[u] && !is_pinned[u] && !eliminated[u] {
                eliminated[u] = true;
                steps.push(Step::EliminateVertex { vertex: u, bag: l });
            }
        }
        for &v in &td.bags[p] {
            in_parent[v] = false;
        }
        steps.push(Step::RemoveBag(l));
        children[p] -= 1;
        if p != root && children[p] == 0 {
            leaves.insert(p);
        }
    }
    for &u in &td.bags[root] {
        if !is_pinned[u] && !eliminated[u] {
            eliminated[u] = true;
            steps.push(Step::EliminateVertex { vertex: u, bag: root });
        }
    }
    Ok(EliminationSchedule { root, steps })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayViolation {
    /// The vertex still appears in another live bag.
    NotOnlyBag { vertex: VertexId, bag: BagId },
    /// A current neighbour of the eliminated vertex lies outside its bag.
    NeighborOutsideBag { vertex: VertexId, bag: BagId, neighbor: VertexId },
    NotLeaf(BagId),
    NotSubsetOfParent(BagId),
    EliminatedTwice(VertexId),
    NotEliminated(VertexId),
}

/// Replays a schedule against an evolving undirected graph. Elimination adds
/// a clique on the eliminated vertex's neighbourhood, exactly the fill the
/// solvers create. Returns every step that breaks the leaf-removal or
/// neighbourhood-bound property.
pub fn replay_schedule(
    n: usize,
    edges: &[(VertexId, VertexId)],
    td: &TreeDecomposition,
    sched: &EliminationSchedule,
    pinned: &[VertexId],
) -> Vec<ReplayViolation> {
    let mut out = Vec::new();
    let mut adj: Vec<BTreeSet<VertexId>> = vec![BTreeSet::new(); n];
    for &(u, v) in edges {
        if u != v {
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    let mut bags: Vec<BTreeSet<VertexId>> = td.bags.iter().map(|b| b.iter().copied().collect()).collect();
    let mut bags_of: Vec<BTreeSet<BagId>> = vec![BTreeSet::new(); n];
    for (b, bag) in td.bags.iter().enumerate() {
        for &v in bag {
            bags_of[v].insert(b);
        }
    }
    let parent = td.parents(sched.root);
    let mut live_children = vec![0usize; td.bags.len()];
    for p in parent.iter().flatten() {
        live_children[*p] += 1;
    }
    let mut done = vec![false; n];

    for step in &sched.steps {
        match *step {
            Step::EliminateVertex { vertex: u, bag: l } => {
                if done[u] {
                    out.push(ReplayViolation::EliminatedTwice(u));
                    continue;
                }
                done[u] = true;
                if bags_of[u].len() != 1 || !bags_of[u].contains(&l) {
                    out.push(ReplayViolation::NotOnlyBag { vertex: u, bag: l });
                }
                let nbrs: Vec<_> = adj[u].iter().copied().collect();
                for &w in &nbrs {
                    if !bags[l].contains(&w) {
                        out.push(ReplayViolation::NeighborOutsideBag { vertex: u, bag: l, neighbor: w });
                    }
                    adj[w].remove(&u);
                }
                for i in 0..nbrs.len() {
                    for &b in &nbrs[i + 1..] {
                        adj[nbrs[i]].insert(b);
                        adj[b].insert(nbrs[i]);
                    }
                }
                adj[u].clear();
                for b in std::mem::take(&mut bags_of[u]) {
                    bags[b].remove(&u);
                }
            }
            Step::RemoveBag(l) => {
                if live_children[l] != 0 {
                    out.push(ReplayViolation::NotLeaf(l));
                }
                match parent[l] {
                    Some(p) => {
                        if !bags[l].is_subset(&bags[p]) {
                            out.push(ReplayViolation::NotSubsetOfParent(l));
                        }
                        live_children[p] -= 1;
                    }
                    None => out.push(ReplayViolation::NotLeaf(l)),
                }
                for v in std::mem::take(&mut bags[l]) {
                    bags_of[v].remove(&l);
                }
            }
        }
    }
    let mut is_pinned = vec![false; n];
    pinned.iter().for_each(|&p| is_pinned[p] = true);
    for v in 0..n {
        if !done[v] && !is_pinned[v] {
            out.push(ReplayViolation::NotEliminated(v));
        }
    }
    out
}
