//! Seeded generator of low-treewidth benchmark models. Every instance comes
//! with a decomposition built alongside the graph, so its width is known.
//!
//! Randomness comes from ChaCha8 with one stream per purpose (structure,
//! owners, weights, rewards, discount, targets), so changing how one aspect
//! is drawn never shifts the others.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discounted::DiscountedSpec;
use crate::model::{Edge, MarkovChain, MarkovDecisionProcess, Owner, TargetSet, VertexId};
use crate::td::TreeDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    /// Structured programs: sequences, if-else diamonds, loops with breaks.
    CfgLike,
    Path,
    Cycle,
    /// A band of `width_cap` rows, walked column by column.
    GridBand,
}

impl FromStr for GenKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cfg-like" => Ok(GenKind::CfgLike),
            "path" => Ok(GenKind::Path),
            "cycle" => Ok(GenKind::Cycle),
            "grid-band" => Ok(GenKind::GridBand),
            _ => Err(format!("unknown kind {s:?} (expected cfg-like, path, cycle or grid-band)")),
        }
    }
}

impl fmt::Display for GenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenKind::CfgLike => "cfg-like",
            GenKind::Path => "path",
            GenKind::Cycle => "cycle",
            GenKind::GridBand => "grid-band",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub kind: GenKind,
    pub n: usize,
    pub width_cap: usize,
    pub seed: u64,
    pub player_prob: f64,
    pub reward_range: (i64, i64),
}

impl GenConfig {
    pub fn new(kind: GenKind, n: usize, width_cap: usize, seed: u64) -> Self {
        GenConfig { kind, n, width_cap, seed, player_prob: 0.5, reward_range: (-1000, 1000) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub mdp: MarkovDecisionProcess,
    pub td: TreeDecomposition,
    pub targets: TargetSet,
    pub spec: DiscountedSpec,
    pub components: usize,
}

const STREAM_STRUCTURE: u64 = 0;
const STREAM_OWNERS: u64 = 1;
const STREAM_WEIGHTS: u64 = 2;
const STREAM_REWARDS: u64 = 3;
const STREAM_LAMBDA: u64 = 4;
const STREAM_TARGETS: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Directed skeleton plus its decomposition and weak components.
struct Shape {
    succ: Vec<Vec<VertexId>>,
    bags: Vec<Vec<VertexId>>,
    tree: Vec<(usize, usize)>,
    components: Vec<Vec<VertexId>>,
}

pub fn generate(cfg: &GenConfig) -> Generated {
    let n = cfg.n.max(1);
    let cap = cfg.width_cap.max(1);
    let mut rng = stream(cfg.seed, STREAM_STRUCTURE);
    let mut shape = match cfg.kind {
        GenKind::Path => path(n),
        GenKind::Cycle if cap < 2 => path(n),
        GenKind::Cycle => cycle(n),
        GenKind::GridBand => grid_band(n, cap),
        GenKind::CfgLike if cap < 2 => path(n),
        GenKind::CfgLike => cfg_like(n, cap, &mut rng),
    };
    for row in &mut shape.succ {
        row.sort_unstable();
        row.dedup();
    }

    let mut owners_rng = stream(cfg.seed, STREAM_OWNERS);
    let owner: Vec<Owner> = (0..n)
        .map(|_| if owners_rng.gen_bool(cfg.player_prob.clamp(0.0, 1.0)) { Owner::Player1 } else { Owner::Probabilistic })
        .collect();

    let mut wrng = stream(cfg.seed, STREAM_WEIGHTS);
    let mut rrng = stream(cfg.seed, STREAM_REWARDS);
    let (lo, hi) = cfg.reward_range;
    let mut edges = Vec::new();
    for (u, row) in shape.succ.iter().enumerate() {
        let weights = match owner[u] {
            Owner::Player1 => vec![0.0; row.len()],
            Owner::Probabilistic => dirichlet(&mut wrng, row.len()),
        };
        for (&v, w) in row.iter().zip(weights) {
            let r = rrng.gen_range(lo.min(hi)..=hi.max(lo)) as f64;
            edges.push(Edge::new(u, v, w, r));
        }
    }
    let mdp = MarkovDecisionProcess::new(owner, edges).expect("generated edges are in range and unique");

    let lambda = stream(cfg.seed, STREAM_LAMBDA).gen_range(0.01..0.99);
    let mut trng = stream(cfg.seed, STREAM_TARGETS);
    let targets: Vec<VertexId> = shape.components.iter().map(|c| c[trng.gen_range(0..c.len())]).collect();

    Generated {
        mdp,
        td: TreeDecomposition::new(shape.bags, shape.tree),
        targets: TargetSet::new(targets, n).expect("one target per component"),
        spec: DiscountedSpec::new(lambda).expect("lambda in range"),
        components: shape.components.len(),
    }
}

/// Normalized i.i.d. uniforms on (0, 1].
fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Every player-1 row becomes uniform over its successors.
pub fn to_mc(mdp: &MarkovDecisionProcess) -> MarkovChain {
    let edges = (0..mdp.vertex_count()).flat_map(|u| {
        let row = mdp.row(u);
        let uniform = 1.0 / row.len() as f64;
        let p1 = mdp.owner(u) == Owner::Player1;
        row.iter().map(move |t| Edge::new(u, t.dst, if p1 { uniform } else { t.weight }, t.reward))
    });
    MarkovChain::new(mdp.vertex_count(), edges).expect("rows come from a valid MDP")
}

fn single(n: usize) -> Vec<Vec<VertexId>> {
    vec![(0..n).collect()]
}

fn path(n: usize) -> Shape {
    let mut succ = vec![Vec::new(); n];
    if n == 1 {
        succ[0].push(0);
    }
    for i in 0..n.saturating_sub(1) {
        succ[i].push(i + 1);
        succ[i + 1].push(i);
    }
    let (bags, tree) = if n <= 2 {
        (single(n), Vec::new())
    } else {
        ((0..n - 1).map(|i| vec![i, i + 1]).collect(), (1..n - 1).map(|i| (i - 1, i)).collect())
    };
    Shape { succ, bags, tree, components: single(n) }
}

fn cycle(n: usize) -> Shape {
    if n <= 2 {
        return path(n);
    }
    let succ = (0..n).map(|i| vec![(i + 1) % n, (i + n - 1) % n]).collect();
    let bags: Vec<Vec<VertexId>> = (1..n - 1).map(|i| vec![0, i, i + 1]).collect();
    let tree = (1..bags.len()).map(|i| (i - 1, i)).collect();
    Shape { succ, bags, tree, components: single(n) }
}

/// Column-major band with `rows` rows; every edge joins ids at most `rows`
/// apart, so windows of `rows + 1` consecutive ids form a path decomposition.
fn grid_band(n: usize, rows: usize) -> Shape {
    let mut succ = vec![Vec::new(); n];
    for v in 0..n {
        let (col, row) = (v / rows, v % rows);
        if v + rows < n {
            succ[v].push(v + rows);
        }
        if row + 1 < rows && v + 1 < n {
            succ[v].push(v + 1);
        }
        if col > 0 {
            succ[v].push(v - rows);
        }
        if succ[v].is_empty() {
            succ[v].push(v);
        }
    }
    let (bags, tree) = if n <= rows + 1 {
        (single(n), Vec::new())
    } else {
        let bags: Vec<Vec<VertexId>> = (0..n - rows).map(|k| (k..=k + rows).collect()).collect();
        let tree = (1..bags.len()).map(|i| (i - 1, i)).collect();
        (bags, tree)
    };
    Shape { succ, bags, tree, components: single(n) }
}

/// Largest block (in vertices) handed to one compound statement.
const MAX_BLOCK: usize = 40;
const MIN_FUNCTION: usize = 20;
const MAX_FUNCTION: usize = 400;

#[derive(Clone, Copy)]
enum Kind {
    Simple,
    Jump,
    If(usize, usize),
    While(usize),
}

struct Cfg<'a> {
    rng: &'a mut ChaCha8Rng,
    cap: usize,
    succ: Vec<Vec<VertexId>>,
    bags: Vec<Vec<VertexId>>,
    tree: Vec<(usize, usize)>,
}

impl Cfg<'_> {
    fn vertex(&mut self) -> VertexId {
        self.succ.push(Vec::new());
        self.succ.len() - 1
    }

    fn bag(&mut self, mut vs: Vec<VertexId>) -> usize {
        vs.sort_unstable();
        vs.dedup();
        self.bags.push(vs);
        self.bags.len() - 1
    }

    /// Splits `budget` vertices into statements allowed in a context of
    /// `k` jump targets.
    fn plan(&mut self, budget: usize, k: usize, jumps: bool) -> Vec<Kind> {
        let mut left = budget;
        let mut out = Vec::new();
        while left > 0 {
            let mut options = vec![0u8];
            if jumps {
                options.push(1);
            }
            if left >= 3 && k + 2 <= self.cap {
                options.push(2);
                options.push(2);
            }
            if left >= 2 && k + 3 <= self.cap {
                options.push(3);
                options.push(3);
            }
            let s = match options[self.rng.gen_range(0..options.len())] {
                0 => Kind::Simple,
                1 => Kind::Jump,
                2 => {
                    let size = self.rng.gen_range(3..=left.min(MAX_BLOCK).max(3));
                    let a = self.rng.gen_range(1..size - 1);
                    Kind::If(a, size - 1 - a)
                }
                _ => Kind::While(self.rng.gen_range(1..left.min(MAX_BLOCK).max(2))),
            };
            left -= match s {
                Kind::Simple | Kind::Jump => 1,
                Kind::If(a, b) => 1 + a + b,
                Kind::While(b) => 1 + b,
            };
            out.push(s);
        }
        out
    }

    /// Builds a series of statements flowing into `cont`. Returns the entry
    /// vertex and the root bag, which holds `{entry, cont} ∪ ctx`.
    fn series(&mut self, budget: usize, cont: VertexId, ctx: &[VertexId]) -> (VertexId, usize) {
        let plan = self.plan(budget, ctx.len(), !ctx.is_empty());
        let mut next = cont;
        let mut next_bag: Option<usize> = None;
        for kind in plan.into_iter().rev() {
            let s = self.vertex();
            let mut bag = vec![s, next, cont];
            bag.extend_from_slice(ctx);
            let b = self.bag(bag);
            if let Some(nb) = next_bag {
                self.tree.push((b, nb));
            }
            match kind {
                Kind::Simple => self.succ[s].push(next),
                Kind::Jump => {
                    let choices: Vec<VertexId> = ctx.iter().copied().filter(|&k| k != next).collect();
                    self.succ[s].push(next);
                    if !choices.is_empty() {
                        let k = choices[self.rng.gen_range(0..choices.len())];
                        self.succ[s].push(k);
                    }
                }
                Kind::If(a, bb) => {
                    for size in [a, bb] {
                        let (entry, root) = self.series(size, next, ctx);
                        self.succ[s].push(entry);
                        let mut link = vec![s, entry, next];
                        link.extend_from_slice(ctx);
                        let l = self.bag(link);
                        self.tree.push((b, l));
                        self.tree.push((l, root));
                    }
                }
                Kind::While(body) => {
                    let mut inner = ctx.to_vec();
                    inner.push(s);
                    inner.push(next);
                    let (entry, root) = self.series(body, s, &inner);
                    self.succ[s].push(entry);
                    self.succ[s].push(next);
                    self.tree.push((b, root));
                }
            }
            next = s;
            next_bag = Some(b);
        }
        match next_bag {
            Some(b) => (next, b),
            None => {
                let mut bag = vec![cont];
                bag.extend_from_slice(ctx);
                (cont, self.bag(bag))
            }
        }
    }
}

fn cfg_like(n: usize, cap: usize, rng: &mut ChaCha8Rng) -> Shape {
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let s = rng.gen_range(MIN_FUNCTION..=MAX_FUNCTION).min(left);
        sizes.push(s);
        left -= s;
    }
    let mut g = Cfg { rng, cap, succ: Vec::with_capacity(n), bags: Vec::new(), tree: Vec::new() };
    let mut components = Vec::new();
    let mut prev_root: Option<usize> = None;
    for size in sizes {
        let first = g.succ.len();
        let exit = g.vertex();
        g.succ[exit].push(exit);
        let (_, root) = g.series(size - 1, exit, &[]);
        if let Some(p) = prev_root {
            g.tree.push((p, root));
        }
        prev_root = Some(root);
        components.push((first..g.succ.len()).collect());
    }
    Shape { succ: g.succ, bags: g.bags, tree: g.tree, components }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_mc, validate_mdp};
    use crate::td::validate_td;

    fn check(g: &Generated, cap: usize) {
        let n = g.mdp.vertex_count();
        assert!(validate_mdp(&g.mdp).is_empty());
        assert!(validate_td(n, &g.mdp.skeleton(), &g.td).is_empty());
        assert!(g.td.width() <= cap, "width {} > {cap}", g.td.width());
        assert!(g.mdp.edge_count() <= 3 * n);
        assert!(validate_mc(&to_mc(&g.mdp), true).is_empty());
    }

    fn width_bound(kind: GenKind, cap: usize) -> usize {
        match kind {
            GenKind::Path => 1,
            GenKind::Cycle | GenKind::CfgLike if cap < 2 => 1,
            GenKind::Cycle => 2,
            GenKind::GridBand | GenKind::CfgLike => cap,
        }
    }

    #[test]
    fn path_of_five() {
        let g = generate(&GenConfig::new(GenKind::Path, 5, 1, 3));
        assert_eq!(g.mdp.vertex_count(), 5);
        assert_eq!(g.td.width(), 1);
        check(&g, 1);
    }

    #[test]
    fn every_kind_validates() {
        for kind in [GenKind::CfgLike, GenKind::Path, GenKind::Cycle, GenKind::GridBand] {
            for cap in 1..=7 {
                for n in [1, 2, 3, 7, 50, 300] {
                    let g = generate(&GenConfig::new(kind, n, cap, 11 * n as u64 + cap as u64));
                    assert_eq!(g.mdp.vertex_count(), n);
                    check(&g, width_bound(kind, cap));
                }
            }
        }
    }

    #[test]
    fn cfg_uses_the_width() {
        let g = generate(&GenConfig::new(GenKind::CfgLike, 2000, 6, 5));
        check(&g, 6);
        assert!(g.td.width() >= 5);
        assert!(g.components > 1);
    }

    #[test]
    fn deterministic() {
        let c = GenConfig::new(GenKind::CfgLike, 500, 5, 42);
        assert_eq!(generate(&c), generate(&c));
        let d = GenConfig { seed: 43, ..c.clone() };
        assert_ne!(generate(&c), generate(&d));
    }

    #[test]
    fn uniform_player1_rows() {
        let mdp = MarkovDecisionProcess::new(
            vec![Owner::Player1, Owner::Probabilistic, Owner::Probabilistic],
            [Edge::new(0, 1, 0.0, 0.0), Edge::new(0, 2, 0.0, 0.0), Edge::new(1, 1, 1.0, 0.0), Edge::new(2, 2, 1.0, 0.0)],
        )
        .unwrap();
        assert_eq!(to_mc(&mdp).weight(0, 1), 0.5);
        assert_eq!(to_mc(&mdp).weight(0, 2), 0.5);
    }
}
