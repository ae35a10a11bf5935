//! Independent reference solvers shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use twmc::model::Edge;
use twmc::work::WorkGraph;
use twmc::{MarkovChain, TargetSet};

/// Dense `A x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot vanishes.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-14 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    Some(x)
}

/// Vertices from which some target is reachable over `succ`.
pub fn coreachable(succ: &[Vec<usize>], is_target: impl Fn(usize) -> bool) -> Vec<bool> {
    let n = succ.len();
    let mut pred = vec![Vec::new(); n];
    for (u, s) in succ.iter().enumerate() {
        for &v in s {
            pred[v].push(u);
        }
    }
    let mut seen: Vec<bool> = (0..n).map(&is_target).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&v| seen[v]).collect();
    while let Some(v) = stack.pop() {
        for &p in &pred[v] {
            if !seen[p] {
                seen[p] = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// Hitting probabilities from rows `(dst, weight)`: targets are 1, vertices
/// that cannot reach a target are 0, the rest solve the linear system.
pub fn hitting_from_rows(rows: &[Vec<(usize, f64)>], alive: &[bool], is_target: impl Fn(usize) -> bool) -> Vec<f64> {
    let n = rows.len();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|u| if alive[u] { rows[u].iter().filter(|e| e.1 != 0.0).map(|e| e.0).collect() } else { Vec::new() })
        .collect();
    let co = coreachable(&succ, &is_target);
    let unknown: Vec<usize> = (0..n).filter(|&u| alive[u] && co[u] && !is_target(u)).collect();
    let mut idx = vec![usize::MAX; n];
    for (i, &u) in unknown.iter().enumerate() {
        idx[u] = i;
    }
    let k = unknown.len();
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (i, &u) in unknown.iter().enumerate() {
        a[i][i] += 1.0;
        for &(d, w) in &rows[u] {
            if is_target(d) {
                b[i] += w;
            } else if idx[d] != usize::MAX {
                a[i][idx[d]] -= w;
            }
        }
    }
    let x = dense_solve(a, b).expect("hitting system is nonsingular");
    let mut out = vec![0.0; n];
    for u in 0..n {
        if is_target(u) {
            out[u] = 1.0;
        } else if idx[u] != usize::MAX {
            out[u] = x[idx[u]];
        }
    }
    out
}

pub fn hitting_oracle(mc: &MarkovChain, targets: &TargetSet) -> Vec<f64> {
    let n = mc.vertex_count();
    let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|u| mc.row(u).iter().map(|t| (t.dst, t.weight)).collect()).collect();
    hitting_from_rows(&rows, &vec![true; n], |v| targets.contains(v))
}

/// Solves `y_u = Σ w (r + λ y_d)` over rows `(dst, weight, reward)`, with
/// `fixed` vertices pinned to given values.
pub fn discounted_from_rows(rows: &[Vec<(usize, f64, f64)>], alive: &[bool], lambda: f64, fixed: &[(usize, f64)]) -> Vec<f64> {
    let n = rows.len();
    let pinned = |u: usize| fixed.iter().find(|f| f.0 == u).map(|f| f.1);
    let unknown: Vec<usize> = (0..n).filter(|&u| alive[u] && pinned(u).is_none()).collect();
    let mut idx = vec![usize::MAX; n];
    for (i, &u) in unknown.iter().enumerate() {
        idx[u] = i;
    }
    let k = unknown.len();
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (i, &u) in unknown.iter().enumerate() {
        a[i][i] += 1.0;
        for &(d, w, r) in &rows[u] {
            b[i] += w * r;
            match pinned(d) {
                Some(y) => b[i] += w * lambda * y,
                None => a[i][idx[d]] -= w * lambda,
            }
        }
    }
    let x = dense_solve(a, b).expect("discounted system is nonsingular");
    let mut out = vec![0.0; n];
    for u in 0..n {
        out[u] = pinned(u).unwrap_or_else(|| if idx[u] == usize::MAX { 0.0 } else { x[idx[u]] });
    }
    out
}

pub fn discounted_oracle(mc: &MarkovChain, lambda: f64) -> Vec<f64> {
    let n = mc.vertex_count();
    let rows: Vec<Vec<(usize, f64, f64)>> =
        (0..n).map(|u| mc.row(u).iter().map(|t| (t.dst, t.weight, t.reward)).collect()).collect();
    discounted_from_rows(&rows, &vec![true; n], lambda, &[])
}

pub fn graph_rows(g: &WorkGraph) -> Vec<Vec<(usize, f64, f64)>> {
    (0..g.vertex_count()).map(|u| g.row(u).iter().map(|(&d, a)| (d, a.weight, a.reward)).collect()).collect()
}

/// Random strict chain: every vertex gets 1..=max_deg distinct successors
/// with positive Dirichlet-like weights and integer rewards.
pub fn random_mc(rng: &mut impl Rng, n: usize, max_deg: usize, rewards: (i64, i64)) -> MarkovChain {
    let mut edges = Vec::new();
    for u in 0..n {
        let deg = rng.gen_range(1..=max_deg.min(n));
        let mut dsts: Vec<usize> = Vec::new();
        while dsts.len() < deg {
            let d = rng.gen_range(0..n);
            if !dsts.contains(&d) {
                dsts.push(d);
            }
        }
        let raw: Vec<f64> = dsts.iter().map(|_| 1.0 - rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        for (d, w) in dsts.into_iter().zip(raw) {
            edges.push(Edge::new(u, d, w / total, rng.gen_range(rewards.0..=rewards.1) as f64));
        }
    }
    MarkovChain::new(n, edges).expect("random chain is well formed")
}

/// Largest absolute entry difference.
pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
