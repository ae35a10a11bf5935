//! Sparse linear systems solved by eliminating unknowns along a tree
//! decomposition of the primal graph, plus a dense Gaussian baseline.

use std::collections::BTreeSet;
use std::time::Instant;

use crate::error::SolveError;
use crate::model::{remove_non_coreachable, MarkovChain, TargetSet};
use crate::stats::SolverStats;
use crate::td::{schedule, validate_td, TreeDecomposition};

pub const DEFAULT_DENSE_LIMIT: usize = 20000;

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    /// Sorted by unknown id, one entry per unknown.
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Equation {
    /// Sums repeated unknowns and drops exact zeros.
    pub fn new(coefs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> Self {
        let mut c: Vec<(usize, f64)> = coefs.into_iter().collect();
        c.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
        for (x, a) in c {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += a,
                _ => merged.push((x, a)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        Equation { coefs: merged, rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(i, a)| a * x[i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearSystem {
    n: usize,
    rows: Vec<Equation>,
}

impl LinearSystem {
    pub fn new(n: usize) -> Self {
        LinearSystem { n, rows: Vec::new() }
    }

    pub fn push(&mut self, eq: Equation) -> Result<(), SolveError> {
        if let Some(&(x, _)) = eq.coefs.iter().find(|e| e.0 >= self.n) {
            return Err(SolveError::Other(format!("unknown {x} out of range ({} unknowns)", self.n)));
        }
        if !eq.rhs.is_finite() || eq.coefs.iter().any(|e| !e.1.is_finite()) {
            return Err(SolveError::Other("equation has a non-finite coefficient".into()));
        }
        self.rows.push(eq);
        Ok(())
    }

    pub fn unknown_count(&self) -> usize {
        self.n
    }

    pub fn equation_count(&self) -> usize {
        self.rows.len()
    }

    pub fn equations(&self) -> &[Equation] {
        &self.rows
    }

    /// Largest absolute residual over all equations.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|e| (e.eval(x) - e.rhs).abs()).fold(0.0, f64::max)
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rows.iter().map(|e| e.rhs.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimalGraph {
    pub n: usize,
    /// Sorted pairs `(x, y)` with `x < y`.
    pub edges: Vec<(usize, usize)>,
}

pub fn build_primal(sys: &LinearSystem) -> PrimalGraph {
    let mut set = BTreeSet::new();
    for eq in &sys.rows {
        let nz: Vec<usize> = eq.coefs.iter().filter(|e| e.1 != 0.0).map(|e| e.0).collect();
        for i in 0..nz.len() {
            for &y in &nz[i + 1..] {
                set.insert((nz[i], y));
            }
        }
    }
    PrimalGraph { n: sys.n, edges: set.into_iter().collect() }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Unique(Vec<f64>),
    Unsatisfiable,
    Underdetermined,
}

impl SolveOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            SolveOutcome::Unique(_) => "unique",
            SolveOutcome::Unsatisfiable => "unsatisfiable",
            SolveOutcome::Underdetermined => "underdetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsOptions {
    /// Coefficients below this fraction of the magnitudes that produced them
    /// are treated as cancelled.
    pub zero_tol: f64,
    /// A row is dependent when orthogonalization shrinks its norm by this.
    pub drop_tol: f64,
    /// An empty row is inconsistent when its rhs exceeds this fraction of
    /// the rhs magnitudes that produced it.
    pub consistency_tol: f64,
    /// Dense pivots at or below this size count as zero; rows are scaled to
    /// a largest coefficient of 1 first and partial pivoting keeps them there.
    pub pivot_tol: f64,
}

impl Default for LsOptions {
    fn default() -> Self {
        LsOptions { zero_tol: 1e-12, drop_tol: 1e-9, consistency_tol: 1e-9, pivot_tol: 1e-14 }
    }
}

/// Equation plus the magnitude of the rhs terms it was built from.
#[derive(Debug, Clone)]
struct Row {
    coefs: Vec<(usize, f64)>,
    rhs: f64,
    rmag: f64,
}

enum Reduced {
    Rows(Vec<usize>, Vec<(Vec<f64>, f64, f64)>),
    Unsatisfiable,
}

/// Modified Gram-Schmidt over the union support of `rows`, carrying the rhs.
/// Dependent rows are dropped, inconsistent ones reported.
fn gs_dense(rows: &[Row], opts: &LsOptions, work: &mut u64) -> Reduced {
    let support: Vec<usize> = rows
        .iter()
        .flat_map(|r| r.coefs.iter().map(|e| e.0))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = support.len();
    let mut basis: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for r in rows {
        let mut v = vec![0.0; k];
        for &(x, a) in &r.coefs {
            v[support.binary_search(&x).expect("in support")] = a;
        }
        let (mut rhs, mut rmag) = (r.rhs, r.rmag);
        let norm0 = norm(&v);
        // Two passes keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for (q, qr, qm) in &basis {
                let alpha: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                if alpha != 0.0 {
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= alpha * b);
                    rhs -= alpha * qr;
                    // |alpha| <= norm0; a tiny alpha may be pure rounding,
                    // so scale by the bound rather than the value.
                    rmag += norm0 * qm;
                    *work += k as u64;
                }
            }
        }
        let nrm = norm(&v);
        if norm0 == 0.0 || nrm <= opts.drop_tol * norm0 {
            if rhs.abs() > opts.consistency_tol * rmag {
                return Reduced::Unsatisfiable;
            }
            continue;
        }
        v.iter_mut().for_each(|a| *a /= nrm);
        basis.push((v, rhs / nrm, rmag / nrm));
    }
    Reduced::Rows(support, basis)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Orthogonalizes a set of equations. The result has at most as many rows
/// as the smaller of the input count and the support size, and the same
/// solution set, unless the rows contradict each other.
pub fn gram_schmidt_reduce(eqs: &[Equation], opts: &LsOptions) -> Option<Vec<Equation>> {
    let rows: Vec<Row> = eqs.iter().map(|e| Row { coefs: e.coefs.clone(), rhs: e.rhs, rmag: e.rhs.abs() }).collect();
    match gs_dense(&rows, opts, &mut 0) {
        Reduced::Unsatisfiable => None,
        Reduced::Rows(support, basis) => Some(
            basis
                .into_iter()
                .map(|(v, rhs, _)| Equation::new(support.iter().copied().zip(v), rhs))
                .collect(),
        ),
    }
}

/// Solves `sys` by eliminating unknowns in the leaf-first order of `td`,
/// which must decompose the primal graph.
pub fn solve_system_td(
    sys: &LinearSystem,
    primal: &PrimalGraph,
    td: &TreeDecomposition,
) -> Result<(SolveOutcome, SolverStats), SolveError> {
    solve_system_td_with(sys, primal, td, &LsOptions::default())
}

pub fn solve_system_td_with(
    sys: &LinearSystem,
    primal: &PrimalGraph,
    td: &TreeDecomposition,
    opts: &LsOptions,
) -> Result<(SolveOutcome, SolverStats), SolveError> {
    let start = Instant::now();
    let n = sys.n;
    let v = validate_td(n, &primal.edges, td);
    if !v.is_empty() {
        return Err(SolveError::InvalidDecomposition(v));
    }
    let order: Vec<(usize, usize)> = schedule(td, &[])?.eliminated().collect();
    if order.len() != n {
        return Err(SolveError::Other(format!("schedule eliminates {} of {n} unknowns", order.len())));
    }

    let mut stats = SolverStats::default();
    let mut rows: Vec<Option<Row>> = Vec::with_capacity(sys.rows.len());
    let mut occ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut unsat = false;
    let mut pending = false;

    let insert = |rows: &mut Vec<Option<Row>>, occ: &mut Vec<BTreeSet<usize>>, unsat: &mut bool, r: Row| {
        if r.coefs.is_empty() {
            if r.rhs.abs() > opts.consistency_tol * r.rmag {
                *unsat = true;
            }
            return;
        }
        let id = rows.len();
        for &(x, _) in &r.coefs {
            occ[x].insert(id);
        }
        rows.push(Some(r));
    };
    for e in &sys.rows {
        let r = Row { coefs: e.coefs.clone(), rhs: e.rhs, rmag: e.rhs.abs() };
        insert(&mut rows, &mut occ, &mut unsat, r);
    }

    // (x, rhs, [(y, coef)]) meaning x = rhs - Σ coef·y
    let mut back: Vec<(usize, f64, Vec<(usize, f64)>)> = Vec::with_capacity(n);
    for (x, bag) in order {
        let ids: Vec<usize> = std::mem::take(&mut occ[x]).into_iter().collect();
        let gathered: Vec<Row> = ids
            .iter()
            .map(|&id| {
                let r = rows[id].take().expect("live row");
                for &(y, _) in &r.coefs {
                    if y != x {
                        occ[y].remove(&id);
                    }
                }
                r
            })
            .collect();
        if gathered.is_empty() {
            pending = true;
            back.push((x, 0.0, Vec::new()));
            continue;
        }
        let support: BTreeSet<usize> = gathered.iter().flat_map(|r| r.coefs.iter().map(|e| e.0)).collect();
        stats.max_neighborhood = stats.max_neighborhood.max(support.len() - 1);
        if support.iter().any(|&y| !td.contains(bag, y)) {
            stats.lemma_violations += 1;
        }

        let (support, mut basis) = match gs_dense(&gathered, opts, &mut stats.work) {
            Reduced::Unsatisfiable => {
                unsat = true;
                back.push((x, 0.0, Vec::new()));
                continue;
            }
            Reduced::Rows(s, b) => (s, b),
        };
        let xi = support.binary_search(&x).expect("x in support");
        let pivot = (0..basis.len()).max_by(|&a, &b| basis[a].0[xi].abs().total_cmp(&basis[b].0[xi].abs()));
        let pivot = match pivot {
            Some(p) if basis[p].0[xi].abs() > opts.zero_tol => p,
            _ => {
                pending = true;
                back.push((x, 0.0, Vec::new()));
                for (mut v, rhs, rmag) in basis {
                    v[xi] = 0.0;
                    let coefs = sparse(&support, &v, opts.zero_tol);
                    insert(&mut rows, &mut occ, &mut unsat, Row { coefs, rhs, rmag });
                }
                continue;
            }
        };
        let (pv, prhs, pmag) = basis.swap_remove(pivot);
        let px = pv[xi];
        for (mut v, mut rhs, mut rmag) in basis {
            let alpha = v[xi] / px;
            let mut coefs = Vec::with_capacity(support.len());
            for j in 0..support.len() {
                if j == xi {
                    continue;
                }
                let term = alpha * pv[j];
                let c = v[j] - term;
                let mag = v[j].abs() + term.abs();
                v[j] = c;
                if c != 0.0 && c.abs() > opts.zero_tol * mag {
                    coefs.push((support[j], c));
                }
            }
            rhs -= alpha * prhs;
            rmag += alpha.abs() * pmag;
            stats.work += support.len() as u64;
            insert(&mut rows, &mut occ, &mut unsat, Row { coefs, rhs, rmag });
        }
        let expr: Vec<(usize, f64)> = support
            .iter()
            .zip(&pv)
            .filter(|&(&y, &c)| y != x && c != 0.0)
            .map(|(&y, &c)| (y, c / px))
            .collect();
        back.push((x, prhs / px, expr));
        stats.eliminated += 1;
    }

    stats.wall_time = start.elapsed();
    if unsat {
        return Ok((SolveOutcome::Unsatisfiable, stats));
    }
    if pending {
        return Ok((SolveOutcome::Underdetermined, stats));
    }
    let mut val = vec![0.0; n];
    for (x, rhs, expr) in back.iter().rev() {
        val[*x] = rhs - expr.iter().map(|&(y, c)| c * val[y]).sum::<f64>();
    }
    stats.wall_time = start.elapsed();
    Ok((SolveOutcome::Unique(val), stats))
}

fn sparse(support: &[usize], v: &[f64], tol: f64) -> Vec<(usize, f64)> {
    support.iter().zip(v).filter(|(_, c)| c.abs() > tol).map(|(&y, &c)| (y, c)).collect()
}

/// Solves `sys ∪ {x_pin = 1}`. Meant for homogeneous systems with a
/// one-dimensional solution space.
pub fn solve_pinned_homogeneous(
    sys: &LinearSystem,
    primal: &PrimalGraph,
    td: &TreeDecomposition,
    pin: usize,
) -> Result<(Vec<f64>, SolverStats), SolveError> {
    let mut aug = sys.clone();
    aug.push(Equation::new([(pin, 1.0)], 1.0))?;
    match solve_system_td(&aug, primal, td)? {
        (SolveOutcome::Unique(x), stats) => Ok((x, stats)),
        _ => Err(SolveError::Nullspace(pin)),
    }
}

pub fn gaussian_dense(sys: &LinearSystem) -> Result<SolveOutcome, SolveError> {
    gaussian_dense_with(sys, DEFAULT_DENSE_LIMIT, &LsOptions::default())
}

pub fn gaussian_dense_with(sys: &LinearSystem, limit: usize, opts: &LsOptions) -> Result<SolveOutcome, SolveError> {
    gaussian_dense_counted(sys, limit, opts).map(|r| r.0)
}

/// Row-equilibrated Gaussian elimination with partial pivoting, followed by
/// iterative refinement with compensated residuals. Also returns the number
/// of row updates times their length.
pub fn gaussian_dense_counted(
    sys: &LinearSystem,
    limit: usize,
    opts: &LsOptions,
) -> Result<(SolveOutcome, u64), SolveError> {
    let n = sys.n;
    if n > limit {
        return Err(SolveError::TooLarge { n, limit });
    }
    let m = sys.rows.len();
    let w = n + 1;
    let mut a = vec![0.0; m * w];
    let mut scale = vec![1.0; m];
    // Bound on the rhs magnitudes summed into each row.
    let mut rmag = vec![0.0; m];
    for (i, e) in sys.rows.iter().enumerate() {
        let big = e.coefs.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
        if big > 0.0 {
            scale[i] = 1.0 / big;
        }
        for &(x, c) in &e.coefs {
            a[i * w + x] = c * scale[i];
        }
        a[i * w + n] = e.rhs * scale[i];
        rmag[i] = (e.rhs * scale[i]).abs();
    }
    let mut order: Vec<usize> = (0..m).collect();
    let mut work = 0u64;
    let mut rank = 0;
    let mut pivots = Vec::with_capacity(n.min(m));
    for col in 0..n {
        if rank == m {
            break;
        }
        let (best, best_abs) = (rank..m)
            .map(|r| (r, a[r * w + col].abs()))
            .fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_abs <= opts.pivot_tol {
            continue;
        }
        if best != rank {
            for j in 0..w {
                a.swap(best * w + j, rank * w + j);
            }
            rmag.swap(best, rank);
            order.swap(best, rank);
        }
        let (head, tail) = a.split_at_mut((rank + 1) * w);
        let prow = &head[rank * w..];
        let p = prow[col];
        for (k, row) in tail.chunks_exact_mut(w).enumerate() {
            let f = row[col] / p;
            if f == 0.0 {
                continue;
            }
            for j in col + 1..w {
                row[j] -= f * prow[j];
            }
            // The multiplier is kept in the eliminated slot for refinement.
            row[col] = f;
            work += (w - col) as u64;
            // Partial pivoting keeps |f| <= 1; using the bound keeps a
            // multiplier that is pure rounding from shrinking the scale.
            rmag[rank + 1 + k] += rmag[rank];
        }
        pivots.push(col);
        rank += 1;
    }
    for r in rank..m {
        if a[r * w + n].abs() > opts.consistency_tol * rmag[r] {
            return Ok((SolveOutcome::Unsatisfiable, work));
        }
    }
    if rank < n {
        return Ok((SolveOutcome::Underdetermined, work));
    }
    let back = |mut r: Vec<f64>| {
        for i in (0..n).rev() {
            let row = &a[i * w..(i + 1) * w];
            let s: f64 = (i + 1..n).map(|j| row[j] * r[j]).sum();
            r[i] = (r[i] - s) / row[i];
        }
        r.truncate(n);
        r
    };
    let mut x = back((0..n).map(|i| a[i * w + n]).collect());
    let mut last = f64::INFINITY;
    for _ in 0..REFINE_STEPS {
        let mut r: Vec<f64> =
            order.iter().map(|&i| residual_dot2(&sys.rows[i], &x) * scale[i]).collect();
        for k in 0..n {
            let rk = r[k];
            if rk != 0.0 {
                for i in k + 1..m {
                    r[i] -= a[i * w + k] * rk;
                }
            }
        }
        work += (m * n) as u64;
        let dx = back(r);
        let size = dx.iter().fold(0.0, |s: f64, d| s.max(d.abs()));
        if !(size < last) {
            break;
        }
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        last = size;
        if size <= f64::EPSILON * x.iter().fold(0.0, |s: f64, v| s.max(v.abs())) {
            break;
        }
    }
    Ok((SolveOutcome::Unique(x), work))
}

const REFINE_STEPS: usize = 4;

/// `rhs - a·x` in doubled working precision.
fn residual_dot2(e: &Equation, x: &[f64]) -> f64 {
    let (mut s, mut c) = (e.rhs, 0.0);
    for &(i, a) in &e.coefs {
        let p = -a * x[i];
        let pe = (-a).mul_add(x[i], -p);
        let t = s + p;
        let z = t - s;
        c += (s - (t - z)) + (p - z) + pe;
        s = t;
    }
    s + c
}

/// The hitting-probability system: `x_t = 1` on targets, `x_u = 0` where no
/// target is reachable, `x_u = Σ δ(u)(v)·x_v` elsewhere.
pub fn hitting_system(mc: &MarkovChain, targets: &TargetSet) -> Result<LinearSystem, SolveError> {
    let n = mc.vertex_count();
    let core = remove_non_coreachable(mc, targets)?;
    let mut dead = vec![false; n];
    core.removed.iter().for_each(|&v| dead[v] = true);
    let mut sys = LinearSystem::new(n);
    for u in 0..n {
        let eq = if targets.contains(u) {
            Equation::new([(u, 1.0)], 1.0)
        } else if dead[u] {
            Equation::new([(u, 1.0)], 0.0)
        } else {
            let terms = mc.row(u).iter().filter(|t| !dead[t.dst]).map(|t| (t.dst, -t.weight));
            Equation::new(std::iter::once((u, 1.0)).chain(terms), 0.0)
        };
        sys.push(eq)?;
    }
    Ok(sys)
}

/// The discounted-sum system `y_u - λ Σ δ(u)(v)·y_v = Σ δ(u)(v)·R(u, v)`.
pub fn discounted_system(mc: &MarkovChain, lambda: f64) -> LinearSystem {
    let n = mc.vertex_count();
    let mut sys = LinearSystem::new(n);
    for u in 0..n {
        let row = mc.row(u);
        let rhs = row.iter().map(|t| t.weight * t.reward).sum();
        let terms = row.iter().map(|t| (t.dst, -lambda * t.weight));
        sys.push(Equation::new(std::iter::once((u, 1.0)).chain(terms), rhs))
            .expect("ids come from the chain");
    }
    sys
}
