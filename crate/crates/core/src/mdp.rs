//! Strategy iteration and value iteration on MDPs.

use std::time::{Duration, Instant};

use crate::discounted::{solve_discounted_simple, solve_discounted_td, DiscountedSpec};
use crate::error::SolveError;
use crate::hitting::{solve_hitting_simple, solve_hitting_td};
use crate::model::{backward_reachable, induce_mc, validate_mdp, MarkovDecisionProcess, Owner, Strategy, TargetSet};
use crate::stats::SolverStats;
use crate::td::{validate_td, TreeDecomposition};

/// A successor must beat the current choice by more than this to replace it.
pub const IMPROVEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Hitting(TargetSet),
    Discounted(DiscountedSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluator {
    Td,
    Simple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub strategy: Strategy,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub values: Vec<f64>,
    pub strategy: Option<Strategy>,
    /// Strategy evaluations for SI, Bellman sweeps for VI.
    pub kappa: usize,
    pub work: u64,
    pub wall_time: Duration,
    pub converged: bool,
    /// Strategy and values of every SI round (empty for VI).
    pub trace: Vec<Round>,
}

fn check_inputs(mdp: &MarkovDecisionProcess, objective: &Objective) -> Result<(), SolveError> {
    let v = validate_mdp(mdp);
    if !v.is_empty() {
        return Err(SolveError::InvalidModel(v));
    }
    if let Objective::Hitting(t) = objective {
        let n = mdp.vertex_count();
        if let Some(v) = t.iter().find(|&v| v >= n) {
            return Err(crate::model::ModelError::VertexOutOfRange { vertex: v, n }.into());
        }
    }
    Ok(())
}

/// Values of the chain induced by `sigma`.
pub fn evaluate_strategy(
    mdp: &MarkovDecisionProcess,
    sigma: &Strategy,
    objective: &Objective,
    td: Option<&TreeDecomposition>,
) -> Result<(Vec<f64>, SolverStats), SolveError> {
    let mc = induce_mc(mdp, sigma)?;
    match (objective, td) {
        (Objective::Hitting(t), Some(td)) => solve_hitting_td(&mc, t, td).map(|(r, s)| (r.prob, s)),
        (Objective::Hitting(t), None) => solve_hitting_simple(&mc, t).map(|(r, s)| (r.prob, s)),
        (Objective::Discounted(d), Some(td)) => solve_discounted_td(&mc, *d, td).map(|(r, s)| (r.value, s)),
        (Objective::Discounted(d), None) => solve_discounted_simple(&mc, *d).map(|(r, s)| (r.value, s)),
    }
}

fn lookahead(objective: &Objective, reward: f64, next: f64) -> f64 {
    match objective {
        Objective::Hitting(_) => next,
        Objective::Discounted(d) => reward + d.lambda() * next,
    }
}

/// Strategy iteration from the smallest-successor strategy. A choice changes
/// only on improvement above `IMPROVEMENT_TOL`; the new choice is the
/// smallest successor within tolerance of the best.
pub fn strategy_iteration(
    mdp: &MarkovDecisionProcess,
    objective: &Objective,
    td: Option<&TreeDecomposition>,
    evaluator: Evaluator,
) -> Result<SolverReport, SolveError> {
    let start = Instant::now();
    check_inputs(mdp, objective)?;
    let n = mdp.vertex_count();
    let td = match evaluator {
        Evaluator::Td => {
            let td = td.ok_or_else(|| SolveError::Other("the td evaluator needs a tree decomposition".into()))?;
            let v = validate_td(n, &mdp.skeleton(), td);
            if !v.is_empty() {
                return Err(SolveError::InvalidDecomposition(v));
            }
            Some(td)
        }
        Evaluator::Simple => None,
    };
    // Vertices that cannot reach a target under any choice keep value 0.
    let live = match objective {
        Objective::Hitting(t) => backward_reachable(
            n,
            mdp.edges()
                .filter(|e| mdp.owner(e.src) == Owner::Player1 || e.weight != 0.0)
                .map(|e| (e.src, e.dst)),
            t.iter(),
        ),
        Objective::Discounted(_) => vec![true; n],
    };

    let mut sigma = Strategy::first_successor(mdp);
    let mut trace = Vec::new();
    let mut work = 0;
    let guard = 10 * n.max(1);
    loop {
        if trace.len() >= guard {
            return Err(SolveError::NoConvergence(guard));
        }
        let (values, stats) = evaluate_strategy(mdp, &sigma, objective, td)?;
        work += stats.work;
        trace.push(Round { strategy: sigma.clone(), values: values.clone() });

        let mut next = sigma.clone();
        let mut changed = false;
        for v in mdp.player1_vertices().filter(|&v| live[v]) {
            let row = mdp.row(v);
            let cur = sigma.get(v).expect("player-1 choice");
            let q = |to: usize| {
                let t = mdp.transition(v, to).expect("chosen edge");
                lookahead(objective, t.reward, values[to])
            };
            let cur_q = q(cur);
            let best = row.iter().map(|t| q(t.dst)).fold(f64::NEG_INFINITY, f64::max);
            if best > cur_q + IMPROVEMENT_TOL {
                let pick = row.iter().find(|t| q(t.dst) >= best - IMPROVEMENT_TOL).expect("a best successor").dst;
                next.set(v, pick);
                changed = true;
            }
        }
        if !changed {
            return Ok(SolverReport {
                values,
                strategy: Some(sigma),
                kappa: trace.len(),
                work,
                wall_time: start.elapsed(),
                converged: true,
                trace,
            });
        }
        sigma = next;
    }
}

pub const VI_EPSILON: f64 = 1e-10;
pub const VI_MAX_ITERS: usize = 1_000_000;

/// Jacobi-style Bellman updates until the sup-norm change drops below
/// `epsilon` or `max_iters` sweeps were made.
pub fn value_iteration(
    mdp: &MarkovDecisionProcess,
    objective: &Objective,
    epsilon: f64,
    max_iters: usize,
) -> Result<SolverReport, SolveError> {
    let start = Instant::now();
    check_inputs(mdp, objective)?;
    if !(epsilon > 0.0) {
        return Err(SolveError::Other(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = mdp.vertex_count();
    let is_target = |v: usize| matches!(objective, Objective::Hitting(t) if t.contains(v));
    let mut val: Vec<f64> = (0..n).map(|v| if is_target(v) { 1.0 } else { 0.0 }).collect();
    let mut next = val.clone();
    let mut iters = 0;
    let mut converged = false;
    let mut work = 0u64;
    while iters < max_iters {
        iters += 1;
        let mut delta: f64 = 0.0;
        for v in 0..n {
            if is_target(v) {
                continue;
            }
            let row = mdp.row(v);
            let x = match mdp.owner(v) {
                Owner::Player1 => {
                    row.iter().map(|t| lookahead(objective, t.reward, val[t.dst])).fold(f64::NEG_INFINITY, f64::max)
                }
                Owner::Probabilistic => {
                    row.iter().map(|t| t.weight * lookahead(objective, t.reward, val[t.dst])).sum()
                }
            };
            work += row.len() as u64;
            delta = delta.max((x - val[v]).abs());
            next[v] = x;
        }
        std::mem::swap(&mut val, &mut next);
        if delta < epsilon {
            converged = true;
            break;
        }
    }
    let mut sigma = Strategy::empty(n);
    for v in mdp.player1_vertices() {
        let row = mdp.row(v);
        let best = row.iter().map(|t| lookahead(objective, t.reward, val[t.dst])).fold(f64::NEG_INFINITY, f64::max);
        if let Some(t) = row.iter().find(|t| lookahead(objective, t.reward, val[t.dst]) >= best - IMPROVEMENT_TOL) {
            sigma.set(v, t.dst);
        }
    }
    Ok(SolverReport {
        values: val,
        strategy: Some(sigma),
        kappa: iters,
        work,
        wall_time: start.elapsed(),
        converged,
        trace: Vec::new(),
    })
}
