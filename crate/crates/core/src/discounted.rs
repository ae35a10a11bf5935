//! Expected discounted sums by vertex elimination.
//!
//! A fresh vertex `1̂` with a self-loop of weight 1 and reward `1 - λ` has
//! value exactly 1. Constants that appear while eliminating (rewards on edges
//! into the eliminated vertex, resolved self-loops, cancelled parallel edges)
//! are carried by edges into `1̂` with reward 0: an edge of weight `c / λ`
//! contributes `c / λ · (0 + λ · 1) = c`.

use std::time::Instant;

use crate::error::SolveError;
use crate::model::{validate_mc, Edge, MarkovChain, VertexId};
use crate::stats::SolverStats;
use crate::td::{add_to_all_bags, schedule, validate_td, BagId, TreeDecomposition};
use crate::work::WorkGraph;

/// Smallest accepted discount factor; elimination divides by λ.
pub const MIN_LAMBDA: f64 = 1e-6;
/// Parallel edges whose weights cancel below this are rerouted through `1̂`.
pub const CANCEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedSpec {
    lambda: f64,
}

impl DiscountedSpec {
    pub fn new(lambda: f64) -> Result<Self, SolveError> {
        if !(MIN_LAMBDA..1.0).contains(&lambda) {
            return Err(SolveError::Lambda(lambda));
        }
        Ok(DiscountedSpec { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedResult {
    /// One value per vertex of the input chain.
    pub value: Vec<f64>,
    /// Value assigned to the gadget vertex; always exactly 1.
    pub gadget_value: f64,
}

/// Appends `1̂` (self-loop weight 1, reward `1 - λ`) and puts it in every bag.
pub fn add_one_hat(
    mc: &MarkovChain,
    spec: DiscountedSpec,
    td: &TreeDecomposition,
) -> (MarkovChain, VertexId, TreeDecomposition) {
    let hat = mc.vertex_count();
    (with_one_hat(mc, spec), hat, add_to_all_bags(td, hat))
}

fn with_one_hat(mc: &MarkovChain, spec: DiscountedSpec) -> MarkovChain {
    let hat = mc.vertex_count();
    let edges = mc.edges().chain(std::iter::once(Edge::new(hat, hat, 1.0, 1.0 - spec.lambda)));
    if mc.is_strict() {
        MarkovChain::new(hat + 1, edges)
    } else {
        MarkovChain::generalized(hat + 1, edges)
    }
    .expect("gadget vertex is fresh")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Merged {
    Edge { weight: f64, reward: f64 },
    /// The weights cancel; only the reward mass `δ₁r₁ + δ₂r₂` remains.
    Cancelled { mass: f64 },
}

/// Combines two parallel edges into one with the same contribution to the
/// source's equation.
pub fn merge_parallel_edges(e1: (f64, f64), e2: (f64, f64)) -> Merged {
    let (d1, r1) = e1;
    let (d2, r2) = e2;
    let weight = d1 + d2;
    let mass = d1 * r1 + d2 * r2;
    if weight.abs() < CANCEL_TOL {
        return Merged::Cancelled { mass };
    }
    if d2 == 0.0 {
        return Merged::Edge { weight: d1, reward: r1 };
    }
    if d1 == 0.0 {
        return Merged::Edge { weight: d2, reward: r2 };
    }
    Merged::Edge { weight, reward: mass / weight }
}

/// Adds `(src, dst)` with the given weight and reward, merging with an
/// existing edge. Returns the number of edge updates.
fn add_edge(g: &mut WorkGraph, src: VertexId, dst: VertexId, w: f64, r: f64, lambda: f64, hat: VertexId) -> u64 {
    if w == 0.0 {
        return 0;
    }
    let Some(old) = g.get(src, dst) else {
        g.set(src, dst, w, r);
        return 1;
    };
    match merge_parallel_edges((old.weight, old.reward), (w, r)) {
        Merged::Edge { weight, reward } => {
            g.set(src, dst, weight, reward);
            1
        }
        Merged::Cancelled { mass } => {
            g.remove(src, dst);
            if dst == hat {
                // y(1̂) = 1 is known, so the whole contribution is constant.
                let c = mass + (old.weight + w) * lambda;
                if c != 0.0 {
                    g.set(src, hat, c / lambda, 0.0);
                }
                1
            } else {
                1 + add_edge(g, src, hat, mass / lambda, 0.0, lambda, hat)
            }
        }
    }
}

/// Rewrites `u`'s equation so that `y_u` no longer appears on its right-hand
/// side. Returns the number of edge updates.
pub fn resolve_self_loop_disc(
    g: &mut WorkGraph,
    u: VertexId,
    spec: DiscountedSpec,
    hat: VertexId,
) -> Result<u64, SolveError> {
    let lambda = spec.lambda;
    let Some(l) = g.get(u, u) else { return Ok(0) };
    if l.weight == 0.0 {
        g.remove(u, u);
        return Ok(0);
    }
    let denom = 1.0 - lambda * l.weight;
    if denom.abs() < CANCEL_TOL {
        return Err(SolveError::Divergent(u));
    }
    g.remove(u, u);
    let f = 1.0 / denom;
    let mut updates = 0;
    for a in g.row_mut(u).values_mut() {
        a.weight *= f;
        updates += 1;
    }
    let c = f * l.weight * l.reward;
    updates += add_edge(g, u, hat, c / lambda, 0.0, lambda, hat);
    Ok(updates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscStep {
    pub vertex: VertexId,
    /// `(dst, weight, reward)` of the vertex's final equation.
    pub row: Vec<(VertexId, f64, f64)>,
    pub updates: u64,
}

/// Eliminates `u ≠ 1̂`, resolving its self-loop first.
pub fn eliminate_vertex_disc(
    g: &mut WorkGraph,
    u: VertexId,
    spec: DiscountedSpec,
    hat: VertexId,
) -> Result<DiscStep, SolveError> {
    let lambda = spec.lambda;
    let mut updates = resolve_self_loop_disc(g, u, spec, hat)?;
    let row: Vec<_> = g.row(u).iter().map(|(&d, a)| (d, a.weight, a.reward)).collect();
    for p in g.preds(u) {
        let a = g.remove(p, u).expect("predecessor edge");
        updates += add_edge(g, p, hat, a.weight * a.reward / lambda, 0.0, lambda, hat);
        for &(d, w, r) in &row {
            updates += add_edge(g, p, d, a.weight * w * lambda, r, lambda, hat);
        }
    }
    g.detach(u);
    Ok(DiscStep { vertex: u, row, updates })
}

pub fn solve_discounted_td(
    mc: &MarkovChain,
    spec: DiscountedSpec,
    td: &TreeDecomposition,
) -> Result<(DiscountedResult, SolverStats), SolveError> {
    discounted(mc, spec, Some(td))
}

/// Same equations, eliminating vertices in ascending id order.
pub fn solve_discounted_simple(
    mc: &MarkovChain,
    spec: DiscountedSpec,
) -> Result<(DiscountedResult, SolverStats), SolveError> {
    discounted(mc, spec, None)
}

fn discounted(
    mc: &MarkovChain,
    spec: DiscountedSpec,
    td: Option<&TreeDecomposition>,
) -> Result<(DiscountedResult, SolverStats), SolveError> {
    let start = Instant::now();
    let n = mc.vertex_count();
    let v = validate_mc(mc, true);
    if !v.is_empty() {
        return Err(SolveError::InvalidModel(v));
    }
    let hat = n;
    let chain = with_one_hat(mc, spec);
    let td = match td {
        Some(td) => {
            let v = validate_td(n, &mc.skeleton(), td);
            if !v.is_empty() {
                return Err(SolveError::InvalidDecomposition(v));
            }
            Some(add_to_all_bags(td, hat))
        }
        None => None,
    };
    let order: Vec<(VertexId, Option<BagId>)> = match &td {
        Some(td) => schedule(td, &[hat])?.eliminated().map(|(v, b)| (v, Some(b))).collect(),
        None => (0..n).map(|v| (v, None)).collect(),
    };
    if order.len() != n {
        return Err(SolveError::Other(format!("schedule eliminates {} of {n} vertices", order.len())));
    }

    let mut g = WorkGraph::from_chain(&chain);
    let mut stats = SolverStats::default();
    let mut steps = Vec::with_capacity(n);
    for (u, bag) in order {
        let nb = g.neighbors(u);
        stats.max_neighborhood = stats.max_neighborhood.max(nb.len());
        if let (Some(b), Some(td)) = (bag, &td) {
            if nb.iter().any(|&w| !td.contains(b, w)) {
                stats.lemma_violations += 1;
            }
        }
        let step = eliminate_vertex_disc(&mut g, u, spec, hat)?;
        stats.work += step.updates;
        stats.eliminated += 1;
        steps.push(step);
    }

    let lambda = spec.lambda;
    let mut y = vec![0.0; n + 1];
    y[hat] = 1.0;
    for s in steps.iter().rev() {
        y[s.vertex] = s.row.iter().map(|&(d, w, r)| w * (r + lambda * y[d])).sum();
    }
    let gadget_value = y.pop().expect("gadget value");
    stats.wall_time = start.elapsed();
    Ok((DiscountedResult { value: y, gadget_value }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::td::{heuristic_decompose, Heuristic};

    fn spec(l: f64) -> DiscountedSpec {
        DiscountedSpec::new(l).unwrap()
    }

    fn solve(mc: &MarkovChain, l: f64) -> Vec<f64> {
        let td = heuristic_decompose(mc.vertex_count(), &mc.skeleton(), Heuristic::MinDegree);
        let (a, _) = solve_discounted_td(mc, spec(l), &td).unwrap();
        let (b, _) = solve_discounted_simple(mc, spec(l)).unwrap();
        assert_eq!(a.gadget_value, 1.0);
        for (x, y) in a.value.iter().zip(&b.value) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        a.value
    }

    #[test]
    fn lambda_bounds() {
        assert!(DiscountedSpec::new(1e-7).is_err());
        assert!(DiscountedSpec::new(1.0).is_err());
        assert!(DiscountedSpec::new(f64::NAN).is_err());
        assert!(DiscountedSpec::new(0.5).is_ok());
    }

    #[test]
    fn merge_rules() {
        assert_eq!(merge_parallel_edges((0.3, 10.0), (0.2, 0.0)), Merged::Edge { weight: 0.5, reward: 6.0 });
        assert_eq!(merge_parallel_edges((0.7, -3.0), (0.0, 99.0)), Merged::Edge { weight: 0.7, reward: -3.0 });
        assert_eq!(merge_parallel_edges((0.5, 2.0), (-0.5, 4.0)), Merged::Cancelled { mass: -1.0 });
    }

    #[test]
    fn zero_rewards_give_zero() {
        let mc = MarkovChain::new(2, [Edge::new(0, 1, 1.0, 0.0), Edge::new(1, 0, 0.5, 0.0), Edge::new(1, 1, 0.5, 0.0)])
            .unwrap();
        assert_eq!(solve(&mc, 0.9), vec![0.0, 0.0]);
    }

    #[test]
    fn gadget_alone_is_one() {
        let l = 0.3;
        let mc = MarkovChain::new(1, [Edge::new(0, 0, 1.0, 1.0 - l)]).unwrap();
        assert!((solve(&mc, l)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pure_self_loop_is_geometric() {
        let (l, r) = (0.8, 3.0);
        let mc = MarkovChain::new(1, [Edge::new(0, 0, 1.0, r)]).unwrap();
        assert!((solve(&mc, l)[0] - r / (1.0 - l)).abs() < 1e-12);
    }

    #[test]
    fn two_cycle_closed_form() {
        // y_x = 1 + 0.5 y_y, y_y = 0.5 y_x
        let mc = MarkovChain::new(2, [Edge::new(0, 1, 1.0, 1.0), Edge::new(1, 0, 1.0, 0.0)]).unwrap();
        let v = solve(&mc, 0.5);
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((v[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn single_successor_elimination() {
        let s = spec(0.5);
        let mut g = WorkGraph::new(4);
        g.set(0, 1, 0.7, 0.0);
        g.set(1, 2, 1.0, 0.0);
        g.set(3, 3, 1.0, 0.5);
        eliminate_vertex_disc(&mut g, 1, s, 3).unwrap();
        assert_eq!(g.get(0, 2).unwrap().weight, 0.7 * 0.5);
        assert!(g.get(0, 3).is_none());
    }

    #[test]
    fn cancelled_edge_goes_through_gadget() {
        let s = spec(0.5);
        let mut g = WorkGraph::new(3);
        g.set(0, 1, 0.25, 2.0);
        let n = add_edge(&mut g, 0, 1, -0.25, 6.0, s.lambda(), 2);
        assert_eq!(n, 2);
        assert!(g.get(0, 1).is_none());
        // mass 0.5 - 1.5 = -1, weight -1 / 0.5
        assert_eq!(g.get(0, 2).unwrap().weight, -2.0);
    }

    #[test]
    fn divergent_loop_is_rejected() {
        let s = DiscountedSpec { lambda: 1.0 - 1e-13 };
        let mut g = WorkGraph::new(2);
        g.set(0, 0, 1.0, 1.0);
        assert_eq!(resolve_self_loop_disc(&mut g, 0, s, 1).unwrap_err(), SolveError::Divergent(0));
    }
}
