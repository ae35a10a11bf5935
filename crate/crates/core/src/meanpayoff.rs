//! Expected mean payoff on Markov chains: bottom SCCs, their limiting
//! distributions, and one generalized hitting solve for everything else.

use std::time::Instant;

use crate::error::SolveError;
use crate::hitting::hitting;
use crate::linsys::{build_primal, solve_pinned_homogeneous, Equation, LinearSystem};
use crate::model::{validate_mc, Edge, MarkovChain, TargetSet, VertexId};
use crate::stats::SolverStats;
use crate::td::{add_to_all_bags, heuristic_decompose, validate_td, Heuristic, TreeDecomposition};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccDecomposition {
    /// Component id of every vertex. Ids follow Tarjan's completion order.
    pub component: Vec<usize>,
    pub bottom: Vec<bool>,
    /// Smallest vertex of every component.
    pub representative: Vec<VertexId>,
}

impl SccDecomposition {
    pub fn count(&self) -> usize {
        self.bottom.len()
    }

    pub fn members(&self, c: usize) -> Vec<VertexId> {
        (0..self.component.len()).filter(|&v| self.component[v] == c).collect()
    }

    /// Bottom components ordered by representative.
    pub fn bottom_components(&self) -> Vec<usize> {
        let mut b: Vec<usize> = (0..self.count()).filter(|&c| self.bottom[c]).collect();
        b.sort_by_key(|&c| self.representative[c]);
        b
    }
}

/// Tarjan's algorithm over the edges of nonzero weight, without recursion.
pub fn scc_decompose(mc: &MarkovChain) -> SccDecomposition {
    let n = mc.vertex_count();
    const NONE: usize = usize::MAX;
    let mut index = vec![NONE; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut component = vec![NONE; n];
    let mut stack = Vec::new();
    let mut calls: Vec<(VertexId, usize)> = Vec::new();
    let mut counter = 0;
    let mut comps = 0;

    for s in 0..n {
        if index[s] != NONE {
            continue;
        }
        index[s] = counter;
        low[s] = counter;
        counter += 1;
        stack.push(s);
        on_stack[s] = true;
        calls.push((s, 0));
        while let Some(&mut (v, ref mut pos)) = calls.last_mut() {
            let row = mc.row(v);
            if *pos < row.len() {
                let t = row[*pos];
                *pos += 1;
                if t.weight == 0.0 {
                    continue;
                }
                let w = t.dst;
                if index[w] == NONE {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    calls.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            calls.pop();
            if let Some(&(p, _)) = calls.last() {
                low[p] = low[p].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    component[w] = comps;
                    if w == v {
                        break;
                    }
                }
                comps += 1;
            }
        }
    }

    let mut bottom = vec![true; comps];
    let mut representative = vec![usize::MAX; comps];
    for u in 0..n {
        let c = component[u];
        representative[c] = representative[c].min(u);
        if mc.row(u).iter().any(|t| t.weight != 0.0 && component[t.dst] != c) {
            bottom[c] = false;
        }
    }
    SccDecomposition { component, bottom, representative }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitingDistribution {
    pub vertex_weight: Vec<f64>,
    /// `(u, v, δ_lim(u)·δ(u)(v))` for every edge of the component.
    pub edge_weight: Vec<(VertexId, VertexId, f64)>,
}

/// Stationary distribution of an ergodic chain: solves the homogeneous
/// balance equations with the first vertex pinned to 1, then normalizes.
///
/// The balance equation of `u` mentions all predecessors of `u`, so the
/// primal graph can be denser than the chain's skeleton. `td` is used when
/// it also decomposes the primal graph; otherwise a min-fill decomposition
/// of the primal graph is built.
pub fn limiting_distribution(
    sub: &MarkovChain,
    td: &TreeDecomposition,
) -> Result<(LimitingDistribution, SolverStats), SolveError> {
    let n = sub.vertex_count();
    let mut terms: Vec<Vec<(usize, f64)>> = (0..n).map(|u| vec![(u, 1.0)]).collect();
    for e in sub.edges().filter(|e| e.weight != 0.0) {
        terms[e.dst].push((e.src, -e.weight));
    }
    let mut sys = LinearSystem::new(n);
    for t in terms {
        sys.push(Equation::new(t, 0.0))?;
    }
    let primal = build_primal(&sys);
    let heuristic;
    let td = if validate_td(n, &primal.edges, td).is_empty() {
        td
    } else {
        heuristic = heuristic_decompose(n, &primal.edges, Heuristic::MinFill);
        &heuristic
    };
    let (mut x, stats) = solve_pinned_homogeneous(&sys, &primal, td, 0)?;
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    let edge_weight = sub.edges().map(|e| (e.src, e.dst, x[e.src] * e.weight)).collect();
    Ok((LimitingDistribution { vertex_weight: x, edge_weight }, stats))
}

/// Splits `td` into one decomposition per component listed in `comp_of`
/// (vertices mapped to `None` are dropped). Each new bag hangs below the
/// nearest ancestor bag that meets the same component; roots of a
/// component's forest are chained. Vertices are renumbered by `local`.
pub fn restrict_to_components(
    td: &TreeDecomposition,
    comp_of: &[Option<usize>],
    local: &[usize],
    count: usize,
) -> Vec<TreeDecomposition> {
    let nb = td.bag_count();
    let mut bags: Vec<Vec<Vec<VertexId>>> = vec![Vec::new(); count];
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); count];
    let mut roots: Vec<Vec<usize>> = vec![Vec::new(); count];
    let mut open: Vec<Vec<usize>> = vec![Vec::new(); count];
    if nb == 0 {
        return vec![TreeDecomposition::new(Vec::new(), Vec::new()); count];
    }
    let mut adj = vec![Vec::new(); nb];
    for &(a, b) in td.tree_edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    // (bag, parent, next child index, components opened here)
    let mut dfs: Vec<(usize, usize, usize, Vec<usize>)> = Vec::new();
    let mut visited = vec![false; nb];
    let enter = |b: usize, bags: &mut Vec<Vec<Vec<VertexId>>>, edges: &mut Vec<Vec<(usize, usize)>>,
                 roots: &mut Vec<Vec<usize>>, open: &mut Vec<Vec<usize>>| {
        let mut here: Vec<(usize, VertexId)> =
            td.bag(b).iter().filter_map(|&v| comp_of[v].map(|c| (c, local[v]))).collect();
        here.sort_unstable();
        let mut opened = Vec::new();
        for chunk in here.chunk_by(|a, b| a.0 == b.0) {
            let c = chunk[0].0;
            let id = bags[c].len();
            bags[c].push(chunk.iter().map(|e| e.1).collect());
            match open[c].last() {
                Some(&p) => edges[c].push((p, id)),
                None => roots[c].push(id),
            }
            open[c].push(id);
            opened.push(c);
        }
        opened
    };
    let root = td.root().min(nb - 1);
    visited[root] = true;
    let opened = enter(root, &mut bags, &mut edges, &mut roots, &mut open);
    dfs.push((root, usize::MAX, 0, opened));
    while let Some(top) = dfs.last_mut() {
        let (b, parent) = (top.0, top.1);
        if top.2 < adj[b].len() {
            let c = adj[b][top.2];
            top.2 += 1;
            if c != parent && !visited[c] {
                visited[c] = true;
                let opened = enter(c, &mut bags, &mut edges, &mut roots, &mut open);
                dfs.push((c, b, 0, opened));
            }
            continue;
        }
        let (_, _, _, opened) = dfs.pop().expect("dfs frame");
        for c in opened {
            open[c].pop();
        }
    }
    (0..count)
        .map(|c| {
            let mut e = std::mem::take(&mut edges[c]);
            for w in roots[c].windows(2) {
                e.push((w[0], w[1]));
            }
            TreeDecomposition::new(std::mem::take(&mut bags[c]), e)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanPayoffResult {
    pub value: Vec<f64>,
    /// Mean payoff of every bottom component, by component id (0 elsewhere).
    pub component_value: Vec<f64>,
    pub scc: SccDecomposition,
}

/// `Σ_i HitPr(u, b_i)·weight[C_i]` for every vertex `u`, where `b_i` is the
/// representative of bottom component `C_i`. Positive and negative parts
/// are solved separately as hitting problems on stochastic chains: each
/// representative moves to a fresh target with probability `|weight|/max`
/// and is lost otherwise. Negating `weight` negates the result exactly.
pub fn weighted_absorption(
    mc: &MarkovChain,
    td: Option<&TreeDecomposition>,
    scc: &SccDecomposition,
    weight: &[f64],
) -> Result<(Vec<f64>, SolverStats), SolveError> {
    let n = mc.vertex_count();
    let bottoms = scc.bottom_components();
    let scale = bottoms.iter().map(|&c| weight[c].abs()).fold(0.0, f64::max);
    let mut stats = SolverStats::default();
    let mut part = |sign: f64| -> Result<Vec<f64>, SolveError> {
        if !bottoms.iter().any(|&c| weight[c] * sign > 0.0) {
            return Ok(vec![0.0; n]);
        }
        let alpha: Vec<f64> = (0..scc.count()).map(|c| (weight[c] * sign).max(0.0) / scale).collect();
        let (p, s) = absorption(mc, td, scc, &alpha)?;
        stats.absorb(&s);
        Ok(p)
    };
    let pos = part(1.0)?;
    let neg = part(-1.0)?;
    let v = (0..n)
        .map(|u| {
            let c = scc.component[u];
            if scc.bottom[c] {
                weight[c]
            } else {
                scale * pos[u] - scale * neg[u]
            }
        })
        .collect();
    Ok((v, stats))
}

/// `Σ_i HitPr(u, b_i)·alpha[C_i]` for `alpha` in [0, 1].
fn absorption(
    mc: &MarkovChain,
    td: Option<&TreeDecomposition>,
    scc: &SccDecomposition,
    alpha: &[f64],
) -> Result<(Vec<f64>, SolverStats), SolveError> {
    let n = mc.vertex_count();
    let hat = n;
    let is_rep = |u: VertexId| {
        let c = scc.component[u];
        scc.bottom[c] && scc.representative[c] == u
    };
    let mut loss = vec![0.0; n + 1];
    let mut to_hat = Vec::new();
    for u in (0..n).filter(|&u| is_rep(u)) {
        let a = alpha[scc.component[u]];
        loss[u] = 1.0 - a;
        if a != 0.0 {
            to_hat.push(Edge::new(u, hat, a, 0.0));
        }
    }
    let edges: Vec<Edge> = mc
        .edges()
        .filter(|e| !is_rep(e.src))
        .chain(to_hat)
        .chain(std::iter::once(Edge::new(hat, hat, 1.0, 0.0)))
        .collect();
    let chain = MarkovChain::generalized(n + 1, edges)?;
    let td = td.map(|td| add_to_all_bags(td, hat));
    let (res, stats) = hitting(&chain, &TargetSet::single(hat), td.as_ref(), Some(&loss))?;
    let mut p = res.prob;
    p.truncate(n);
    Ok((p, stats))
}

pub fn solve_mean_payoff(
    mc: &MarkovChain,
    td: &TreeDecomposition,
) -> Result<(MeanPayoffResult, SolverStats), SolveError> {
    let start = Instant::now();
    let n = mc.vertex_count();
    let v = validate_mc(mc, true);
    if !v.is_empty() {
        return Err(SolveError::InvalidModel(v));
    }
    let v = validate_td(n, &mc.skeleton(), td);
    if !v.is_empty() {
        return Err(SolveError::InvalidDecomposition(v));
    }
    let scc = scc_decompose(mc);
    let bottoms = scc.bottom_components();
    let mut slot = vec![None; scc.count()];
    for (i, &c) in bottoms.iter().enumerate() {
        slot[c] = Some(i);
    }
    let mut local = vec![0; n];
    let mut members: Vec<Vec<VertexId>> = vec![Vec::new(); bottoms.len()];
    let mut comp_of = vec![None; n];
    for u in 0..n {
        if let Some(i) = slot[scc.component[u]] {
            local[u] = members[i].len();
            members[i].push(u);
            comp_of[u] = Some(i);
        }
    }
    let tds = restrict_to_components(td, &comp_of, &local, bottoms.len());

    let mut stats = SolverStats::default();
    let mut component_value = vec![0.0; scc.count()];
    for (i, &c) in bottoms.iter().enumerate() {
        let sub_edges: Vec<Edge> = members[i]
            .iter()
            .flat_map(|&u| mc.row(u).iter().map(move |t| (u, t)))
            .filter(|(_, t)| comp_of[t.dst] == Some(i))
            .map(|(u, t)| Edge::new(local[u], local[t.dst], t.weight, t.reward))
            .collect();
        let sub = MarkovChain::generalized(members[i].len(), sub_edges)?;
        let (ld, s) = limiting_distribution(&sub, &tds[i])?;
        stats.absorb(&s);
        component_value[c] = ld
            .edge_weight
            .iter()
            .map(|&(u, v, w)| w * sub.transition(u, v).map_or(0.0, |t| t.reward))
            .sum();
    }
    let (value, s) = weighted_absorption(mc, Some(td), &scc, &component_value)?;
    stats.absorb(&s);
    stats.wall_time = start.elapsed();
    Ok((MeanPayoffResult { value, component_value, scc }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::td::{heuristic_decompose, Heuristic};

    fn mp(mc: &MarkovChain) -> Vec<f64> {
        let td = heuristic_decompose(mc.vertex_count(), &mc.skeleton(), Heuristic::MinFill);
        solve_mean_payoff(mc, &td).unwrap().0.value
    }

    #[test]
    fn dag_sinks_are_bottom() {
        let mc = MarkovChain::new(
            3,
            [Edge::new(0, 1, 0.5, 0.0), Edge::new(0, 2, 0.5, 0.0), Edge::new(1, 1, 1.0, 0.0), Edge::new(2, 2, 1.0, 0.0)],
        )
        .unwrap();
        let s = scc_decompose(&mc);
        assert_eq!(s.count(), 3);
        assert!(!s.bottom[s.component[0]]);
        assert!(s.bottom[s.component[1]] && s.bottom[s.component[2]]);
        assert_eq!(s.bottom_components().iter().map(|&c| s.representative[c]).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn cycle_is_one_component() {
        let mc = MarkovChain::new(3, (0..3).map(|i| Edge::new(i, (i + 1) % 3, 1.0, 0.0))).unwrap();
        let s = scc_decompose(&mc);
        assert_eq!(s.count(), 1);
        assert!(s.bottom[0]);
        assert_eq!(s.representative, vec![0]);
    }

    #[test]
    fn small_closed_forms() {
        let single = MarkovChain::new(1, [Edge::new(0, 0, 1.0, 5.0)]).unwrap();
        assert_eq!(mp(&single), vec![5.0]);

        let two = MarkovChain::new(2, [Edge::new(0, 1, 1.0, 2.0), Edge::new(1, 0, 1.0, 4.0)]).unwrap();
        for v in mp(&two) {
            assert!((v - 3.0).abs() < 1e-12);
        }

        let fork = MarkovChain::new(
            3,
            [Edge::new(0, 1, 0.5, 0.0), Edge::new(0, 2, 0.5, 0.0), Edge::new(1, 1, 1.0, 10.0), Edge::new(2, 2, 1.0, 2.0)],
        )
        .unwrap();
        let v = mp(&fork);
        assert!((v[0] - 6.0).abs() < 1e-12);
        assert_eq!(&v[1..], &[10.0, 2.0]);
    }

    #[test]
    fn symmetric_two_cycle_distribution() {
        let mc = MarkovChain::new(2, [Edge::new(0, 1, 1.0, 0.0), Edge::new(1, 0, 1.0, 0.0)]).unwrap();
        let td = heuristic_decompose(2, &mc.skeleton(), Heuristic::MinDegree);
        let (ld, _) = limiting_distribution(&mc, &td).unwrap();
        assert!((ld.vertex_weight[0] - 0.5).abs() < 1e-15);
        assert!((ld.vertex_weight[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn restriction_validates() {
        // two disjoint 3-cycles joined by a transient vertex 6
        let mut e = Vec::new();
        for base in [0, 3] {
            for i in 0..3 {
                e.push(Edge::new(base + i, base + (i + 1) % 3, 1.0, 0.0));
            }
        }
        e.push(Edge::new(6, 0, 0.5, 0.0));
        e.push(Edge::new(6, 3, 0.5, 0.0));
        let mc = MarkovChain::new(7, e).unwrap();
        let td = heuristic_decompose(7, &mc.skeleton(), Heuristic::MinDegree);
        let comp_of: Vec<Option<usize>> = (0..7).map(|v| if v < 6 { Some(v / 3) } else { None }).collect();
        let local: Vec<usize> = (0..7).map(|v| v % 3).collect();
        let tds = restrict_to_components(&td, &comp_of, &local, 2);
        let cyc = [(0, 1), (1, 2), (2, 0)];
        for t in &tds {
            assert!(validate_td(3, &cyc, t).is_empty());
        }
    }
}
