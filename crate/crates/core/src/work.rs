//! Mutable weighted digraph used while eliminating vertices.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Edge, MarkovChain, VertexId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub weight: f64,
    pub reward: f64,
}

/// Rows keyed by destination plus a predecessor index, so both directions
/// of a vertex's neighbourhood are available in O(deg log deg).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkGraph {
    out: Vec<BTreeMap<VertexId, Arc>>,
    inc: Vec<BTreeSet<VertexId>>,
}

impl WorkGraph {
    pub fn new(n: usize) -> Self {
        WorkGraph { out: vec![BTreeMap::new(); n], inc: vec![BTreeSet::new(); n] }
    }

    pub fn from_chain(mc: &MarkovChain) -> Self {
        let mut g = WorkGraph::new(mc.vertex_count());
        for e in mc.edges() {
            g.set(e.src, e.dst, e.weight, e.reward);
        }
        g
    }

    pub fn vertex_count(&self) -> usize {
        self.out.len()
    }

    pub fn add_vertex(&mut self) -> VertexId {
        self.out.push(BTreeMap::new());
        self.inc.push(BTreeSet::new());
        self.out.len() - 1
    }

    pub fn set(&mut self, src: VertexId, dst: VertexId, weight: f64, reward: f64) {
        self.out[src].insert(dst, Arc { weight, reward });
        self.inc[dst].insert(src);
    }

    pub fn get(&self, src: VertexId, dst: VertexId) -> Option<Arc> {
        self.out[src].get(&dst).copied()
    }

    pub fn remove(&mut self, src: VertexId, dst: VertexId) -> Option<Arc> {
        let a = self.out[src].remove(&dst);
        if a.is_some() {
            self.inc[dst].remove(&src);
        }
        a
    }

    pub fn row(&self, u: VertexId) -> &BTreeMap<VertexId, Arc> {
        &self.out[u]
    }

    pub fn row_mut(&mut self, u: VertexId) -> &mut BTreeMap<VertexId, Arc> {
        &mut self.out[u]
    }

    /// Predecessors other than `u` itself, ascending.
    pub fn preds(&self, u: VertexId) -> Vec<VertexId> {
        self.inc[u].iter().copied().filter(|&p| p != u).collect()
    }

    /// Drops every outgoing edge of `u`.
    pub fn clear_row(&mut self, u: VertexId) {
        for (&d, _) in std::mem::take(&mut self.out[u]).iter() {
            self.inc[d].remove(&u);
        }
    }

    /// Union of predecessors and successors, without `u`.
    pub fn neighbors(&self, u: VertexId) -> BTreeSet<VertexId> {
        let mut s: BTreeSet<_> = self.out[u].keys().copied().collect();
        s.extend(self.inc[u].iter().copied());
        s.remove(&u);
        s
    }

    /// Detaches `u`: removes all incident edges and returns its row.
    pub fn detach(&mut self, u: VertexId) -> BTreeMap<VertexId, Arc> {
        for p in std::mem::take(&mut self.inc[u]) {
            if p != u {
                self.out[p].remove(&u);
            }
        }
        let row = std::mem::take(&mut self.out[u]);
        for &d in row.keys() {
            self.inc[d].remove(&u);
        }
        row
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().map(move |(&d, a)| Edge::new(s, d, a.weight, a.reward)))
            .collect()
    }
}
