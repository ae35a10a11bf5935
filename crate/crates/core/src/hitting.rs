//! Hitting probabilities by vertex elimination, either guided by a tree
//! decomposition or in plain id order.

use std::time::Instant;

use crate::error::SolveError;
use crate::model::{remove_non_coreachable, validate_mc, Edge, MarkovChain, TargetSet, VertexId};
use crate::stats::SolverStats;
use crate::td::{add_to_all_bags, schedule, validate_td, BagId, TreeDecomposition};
use crate::work::WorkGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct HitResult {
    pub prob: Vec<f64>,
    /// Vertices that cannot reach a target, hence probability 0.
    pub removed_zero: Vec<VertexId>,
}

/// What one elimination left behind for back-substitution.
#[derive(Debug, Clone, PartialEq)]
pub struct HitStep {
    pub vertex: VertexId,
    /// The vertex loops forever with probability 1; its value is 0.
    pub absorbing: bool,
    /// Outgoing weights after the self-loop was spread over the other edges.
    pub row: Vec<(VertexId, f64)>,
    pub updates: u64,
}

/// Replaces a multi-vertex target set by one fresh absorbing vertex that
/// every old target moves to with probability 1. A single target is
/// returned unchanged.
pub fn merge_targets(
    mc: &MarkovChain,
    targets: &TargetSet,
    td: Option<&TreeDecomposition>,
) -> (MarkovChain, VertexId, Option<TreeDecomposition>) {
    if targets.len() == 1 {
        return (mc.clone(), targets.first(), td.cloned());
    }
    let n = mc.vertex_count();
    let hat = n;
    let edges: Vec<Edge> = mc
        .edges()
        .filter(|e| !targets.contains(e.src))
        .chain(targets.iter().map(|t| Edge::new(t, hat, 1.0, 0.0)))
        .chain(std::iter::once(Edge::new(hat, hat, 1.0, 0.0)))
        .collect();
    let chain = if mc.is_strict() {
        MarkovChain::new(n + 1, edges)
    } else {
        MarkovChain::generalized(n + 1, edges)
    }
    .expect("merged chain is well formed");
    (chain, hat, td.map(|td| add_to_all_bags(td, hat)))
}

/// Eliminates `u`: spreads its self-loop over its other edges, then routes
/// every predecessor's weight on `u` through `u`'s successors.
///
/// `loss[v]` is the part of `v`'s row that leads to value-0 vertices no
/// longer in the graph. `1 − loop` is taken as the rest of the row plus that
/// loss, which stays accurate when the loop weight is close to 1.
pub fn eliminate_vertex_hit(g: &mut WorkGraph, loss: &mut [f64], u: VertexId) -> HitStep {
    g.remove(u, u);
    let escape = g.row(u).values().map(|a| a.weight).sum::<f64>() + loss[u];
    if escape == 0.0 {
        g.detach(u);
        return HitStep { vertex: u, absorbing: true, row: Vec::new(), updates: 0 };
    }
    let mut updates = 0;
    if escape != 1.0 {
        let f = 1.0 / escape;
        for a in g.row_mut(u).values_mut() {
            a.weight *= f;
            updates += 1;
        }
        loss[u] *= f;
    }
    let row: Vec<(VertexId, f64)> = g.row(u).iter().map(|(&d, a)| (d, a.weight)).collect();
    for p in g.preds(u) {
        let a = g.remove(p, u).expect("predecessor edge").weight;
        loss[p] += a * loss[u];
        for &(s, b) in &row {
            let w = g.get(p, s).map_or(0.0, |e| e.weight) + a * b;
            g.set(p, s, w, 0.0);
            updates += 1;
        }
    }
    g.detach(u);
    HitStep { vertex: u, absorbing: false, row, updates }
}

/// Hitting probabilities guided by `td`, which must decompose the chain's
/// undirected skeleton.
pub fn solve_hitting_td(
    mc: &MarkovChain,
    targets: &TargetSet,
    td: &TreeDecomposition,
) -> Result<(HitResult, SolverStats), SolveError> {
    hitting(mc, targets, Some(td), None)
}

/// Hitting probabilities by eliminating vertices in ascending id order.
pub fn solve_hitting_simple(mc: &MarkovChain, targets: &TargetSet) -> Result<(HitResult, SolverStats), SolveError> {
    hitting(mc, targets, None, None)
}

/// Shared driver. With `loss` given, `mc` may be substochastic: each row
/// plus `loss[v]` sums to 1, and the lost mass counts as never hitting.
pub(crate) fn hitting(
    mc: &MarkovChain,
    targets: &TargetSet,
    td: Option<&TreeDecomposition>,
    loss: Option<&[f64]>,
) -> Result<(HitResult, SolverStats), SolveError> {
    let start = Instant::now();
    let n = mc.vertex_count();
    if targets.is_empty() {
        return Err(crate::model::ModelError::EmptyTargets.into());
    }
    if let Some(v) = targets.iter().find(|&v| v >= n) {
        return Err(crate::model::ModelError::VertexOutOfRange { vertex: v, n }.into());
    }
    if loss.is_none() {
        let v = validate_mc(mc, true);
        if !v.is_empty() {
            return Err(SolveError::InvalidModel(v));
        }
    }
    if let Some(td) = td {
        let v = validate_td(n, &mc.skeleton(), td);
        if !v.is_empty() {
            return Err(SolveError::InvalidDecomposition(v));
        }
    }

    let core = remove_non_coreachable(mc, targets)?;
    let td_core = td.map(|td| {
        let mut new_id = vec![None; n];
        for (i, &v) in core.kept.iter().enumerate() {
            new_id[v] = Some(i);
        }
        td.map_vertices(|v| new_id[v])
    });
    let mut live = vec![false; n];
    core.kept.iter().for_each(|&v| live[v] = true);
    let mut lost: Vec<f64> = core
        .kept
        .iter()
        .map(|&v| {
            let dropped: f64 = mc.row(v).iter().filter(|t| !live[t.dst]).map(|t| t.weight).sum();
            dropped + loss.map_or(0.0, |l| l[v])
        })
        .collect();
    core.targets.iter().for_each(|t| lost[t] = 0.0);
    let (chain, t, td_m) = merge_targets(&core.chain, &core.targets, td_core.as_ref());
    let kn = chain.vertex_count();
    lost.resize(kn, 0.0);

    let order: Vec<(VertexId, Option<BagId>)> = match &td_m {
        Some(td) => {
            let root = td.bag_containing_all(&[t]).expect("target is covered");
            let sched = schedule(&td.clone().with_root(root), &[t])?;
            sched.eliminated().map(|(v, b)| (v, Some(b))).collect()
        }
        None => (0..kn).filter(|&v| v != t).map(|v| (v, None)).collect(),
    };
    if order.len() + 1 != kn {
        return Err(SolveError::Other(format!(
            "schedule eliminates {} of {} vertices",
            order.len(),
            kn - 1
        )));
    }

    let mut g = WorkGraph::from_chain(&chain);
    g.clear_row(t);
    let mut stats = SolverStats::default();
    let mut steps = Vec::with_capacity(order.len());
    for (u, bag) in order {
        let nb = g.neighbors(u);
        stats.max_neighborhood = stats.max_neighborhood.max(nb.len());
        if let (Some(b), Some(td)) = (bag, &td_m) {
            if nb.iter().any(|&w| !td.contains(b, w)) {
                stats.lemma_violations += 1;
            }
        }
        let step = eliminate_vertex_hit(&mut g, &mut lost, u);
        stats.work += step.updates;
        stats.eliminated += 1;
        steps.push(step);
    }

    let mut values = vec![0.0; kn];
    values[t] = 1.0;
    for step in steps.iter().rev() {
        if !step.absorbing {
            values[step.vertex] = step.row.iter().map(|&(s, w)| w * values[s]).sum();
        }
    }
    let mut prob = vec![0.0; n];
    for (i, &v) in core.kept.iter().enumerate() {
        prob[v] = values[i];
    }
    for v in targets.iter() {
        prob[v] = 1.0;
    }
    stats.wall_time = start.elapsed();
    Ok((HitResult { prob, removed_zero: core.removed }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::td::{heuristic_decompose, Heuristic};

    fn chain(n: usize, edges: &[(usize, usize, f64)]) -> MarkovChain {
        MarkovChain::new(n, edges.iter().map(|&(s, d, w)| Edge::new(s, d, w, 0.0))).unwrap()
    }

    fn both(mc: &MarkovChain, t: &TargetSet) -> Vec<f64> {
        let td = heuristic_decompose(mc.vertex_count(), &mc.skeleton(), Heuristic::MinFill);
        let (a, _) = solve_hitting_td(mc, t, &td).unwrap();
        let (b, _) = solve_hitting_simple(mc, t).unwrap();
        for (x, y) in a.prob.iter().zip(&b.prob) {
            assert!((x - y).abs() < 1e-12);
        }
        a.prob
    }

    #[test]
    fn lone_target() {
        let mc = chain(1, &[(0, 0, 1.0)]);
        assert_eq!(both(&mc, &TargetSet::single(0)), vec![1.0]);
    }

    #[test]
    fn half_to_trap() {
        let mc = chain(3, &[(0, 1, 0.5), (0, 2, 0.5), (1, 1, 1.0), (2, 2, 1.0)]);
        let t = TargetSet::single(1);
        assert_eq!(both(&mc, &t), vec![0.5, 1.0, 0.0]);
        let (r, _) = solve_hitting_simple(&mc, &t).unwrap();
        assert_eq!(r.removed_zero, vec![2]);
    }

    #[test]
    fn self_loop_is_spread() {
        let mut g = WorkGraph::new(3);
        g.set(0, 0, 0.5, 0.0);
        g.set(0, 1, 0.25, 0.0);
        g.set(0, 2, 0.25, 0.0);
        let s = eliminate_vertex_hit(&mut g, &mut [0.0; 3], 0);
        assert_eq!(s.row, vec![(1, 0.5), (2, 0.5)]);
    }

    #[test]
    fn parallel_paths_merge() {
        // p -> u (0.4), u -> s (0.5), existing p -> s (0.3)
        let mut g = WorkGraph::new(3);
        g.set(0, 1, 0.4, 0.0);
        g.set(0, 2, 0.3, 0.0);
        g.set(1, 2, 0.5, 0.0);
        g.set(1, 1, 0.5, 0.0);
        eliminate_vertex_hit(&mut g, &mut [0.0; 3], 1);
        assert!((g.get(0, 2).unwrap().weight - (0.4 * 1.0 + 0.3)).abs() < 1e-15);
        assert!(g.get(0, 1).is_none());
    }

    #[test]
    fn absorbing_and_nearly_absorbing() {
        let mut g = WorkGraph::new(2);
        g.set(0, 0, 1.0, 0.0);
        g.set(1, 0, 1.0, 0.0);
        assert!(eliminate_vertex_hit(&mut g, &mut [0.0; 2], 0).absorbing);
        assert!(g.row(1).is_empty());

        // 1 - (1 - 1e-14) would lose most digits; the row sum does not.
        let mut g = WorkGraph::new(3);
        g.set(0, 0, 1.0 - 1e-14, 0.0);
        g.set(0, 1, 3e-15, 0.0);
        let mut loss = [7e-15, 0.0, 0.0];
        let s = eliminate_vertex_hit(&mut g, &mut loss, 0);
        assert!((s.row[0].1 - 0.3).abs() < 1e-15);
        assert!((loss[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn loss_flows_to_predecessors() {
        // 0 -> 1 (1.0); 1 -> 2 (0.25), rest lost
        let mut g = WorkGraph::new(3);
        g.set(0, 1, 1.0, 0.0);
        g.set(1, 2, 0.25, 0.0);
        let mut loss = [0.0, 0.75, 0.0];
        eliminate_vertex_hit(&mut g, &mut loss, 1);
        assert_eq!(g.get(0, 2).unwrap().weight, 0.25);
        assert_eq!(loss[0], 0.75);
    }

    #[test]
    fn two_targets_match_merged_target() {
        let mc = chain(
            4,
            &[(0, 1, 0.3), (0, 2, 0.3), (0, 3, 0.4), (1, 0, 0.5), (1, 3, 0.5), (2, 2, 1.0), (3, 3, 1.0)],
        );
        let t = TargetSet::new([2, 3], 4).unwrap();
        let p = both(&mc, &t);
        // x0 = 0.3 x1 + 0.7, x1 = 0.5 x0 + 0.5  =>  x0 = 1
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);

        let (merged, hat, _) = merge_targets(&mc, &t, None);
        assert_eq!(hat, 4);
        assert_eq!(merged.vertex_count(), 5);
        assert!(crate::model::validate_mc(&merged, true).is_empty());
    }

    #[test]
    fn single_target_merge_is_identity() {
        let mc = chain(2, &[(0, 1, 1.0), (1, 1, 1.0)]);
        let (m, t, td) = merge_targets(&mc, &TargetSet::single(1), None);
        assert_eq!((m, t, td), (mc, 1, None));
    }
}
