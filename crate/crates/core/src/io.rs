//! Plain-text formats for chains, MDPs, decompositions and linear systems.
//!
//! Every format is line based with a header line first; `#` starts a
//! comment and blank lines are ignored. Floats are written with Rust's
//! shortest round-trip representation.
//!
//! ```text
//! MC <n> <m>                    MDP <n> <m>
//! E <src> <dst> <prob> [reward] V <id> <1|P>
//! T <id> ...                    E <src> <dst> <prob|-> <reward>
//! L <lambda>                    T <id> ...
//!                               L <lambda>
//! TD <bags> <width>             LS <n> <m>
//! B <bag> <v> ...               EQ <k> <var> <coef> ... <rhs>
//! TE <bag> <bag>
//! ```
//!
//! `T` and `L` lines are optional; `L` records a discount factor.

use std::fmt::Write as _;

use thiserror::Error;

use crate::linsys::{Equation, LinearSystem};
use crate::model::{Edge, MarkovChain, MarkovDecisionProcess, Owner, VertexId};
use crate::td::TreeDecomposition;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

/// Non-empty lines with comments stripped, as (1-based line number, tokens).
fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        let t: Vec<&str> = l.split_whitespace().collect();
        (!t.is_empty()).then_some((i + 1, t))
    })
}

fn int(line: usize, s: &str) -> Result<usize, ParseError> {
    s.parse().or_else(|_| err(line, format!("expected a non-negative integer, got {s:?}")))
}

fn real(line: usize, s: &str) -> Result<f64, ParseError> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => err(line, format!("expected a finite number, got {s:?}")),
    }
}

fn header<'a>(
    it: &mut impl Iterator<Item = (usize, Vec<&'a str>)>,
    tag: &str,
) -> Result<(usize, usize), ParseError> {
    match it.next() {
        Some((l, t)) if t.len() == 3 && t[0] == tag => Ok((int(l, t[1])?, int(l, t[2])?)),
        Some((l, _)) => err(l, format!("expected header `{tag} <a> <b>`")),
        None => err(0, format!("empty input, expected `{tag}` header")),
    }
}

fn vertex(line: usize, s: &str, n: usize) -> Result<VertexId, ParseError> {
    let v = int(line, s)?;
    if v >= n {
        return err(line, format!("vertex {v} out of range (n = {n})"));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McFile {
    pub mc: MarkovChain,
    pub targets: Option<Vec<VertexId>>,
    pub lambda: Option<f64>,
}

pub fn parse_mc(text: &str) -> Result<McFile, ParseError> {
    let mut it = lines(text);
    let (n, m) = header(&mut it, "MC")?;
    let mut edges = Vec::with_capacity(m);
    let mut extra = Extras::default();
    let mut last = 1;
    for (l, t) in it {
        last = l;
        match t[0] {
            "E" if t.len() == 4 || t.len() == 5 => {
                let reward = if t.len() == 5 { real(l, t[4])? } else { 0.0 };
                edges.push(Edge::new(vertex(l, t[1], n)?, vertex(l, t[2], n)?, real(l, t[3])?, reward));
            }
            "E" => return err(l, "expected `E <src> <dst> <prob> [reward]`"),
            _ => extra.line(l, &t, n)?,
        }
    }
    if edges.len() != m {
        return err(last, format!("header declares {m} edges, found {}", edges.len()));
    }
    let mc = MarkovChain::new(n, edges).or_else(|e| err(last, e.to_string()))?;
    Ok(McFile { mc, targets: extra.targets, lambda: extra.lambda })
}

#[derive(Default)]
struct Extras {
    targets: Option<Vec<VertexId>>,
    lambda: Option<f64>,
}

impl Extras {
    fn line(&mut self, l: usize, t: &[&str], n: usize) -> Result<(), ParseError> {
        match t[0] {
            "T" => {
                let ids = t[1..].iter().map(|s| vertex(l, s, n)).collect::<Result<Vec<_>, _>>()?;
                self.targets.get_or_insert_with(Vec::new).extend(ids);
                Ok(())
            }
            "L" if t.len() == 2 => {
                self.lambda = Some(real(l, t[1])?);
                Ok(())
            }
            other => err(l, format!("unexpected line tag {other:?}")),
        }
    }
}

fn write_extras(out: &mut String, targets: Option<&[VertexId]>, lambda: Option<f64>) {
    if let Some(t) = targets {
        out.push('T');
        for v in t {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    if let Some(l) = lambda {
        let _ = writeln!(out, "L {l}");
    }
}

pub fn write_mc(mc: &MarkovChain, targets: Option<&[VertexId]>, lambda: Option<f64>) -> String {
    let mut out = format!("MC {} {}\n", mc.vertex_count(), mc.edge_count());
    for e in mc.edges() {
        let _ = writeln!(out, "E {} {} {} {}", e.src, e.dst, e.weight, e.reward);
    }
    write_extras(&mut out, targets, lambda);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpFile {
    pub mdp: MarkovDecisionProcess,
    pub targets: Option<Vec<VertexId>>,
    pub lambda: Option<f64>,
}

pub fn parse_mdp(text: &str) -> Result<MdpFile, ParseError> {
    let mut it = lines(text);
    let (n, m) = header(&mut it, "MDP")?;
    let mut owner: Vec<Option<Owner>> = vec![None; n];
    let mut raw = Vec::with_capacity(m);
    let mut extra = Extras::default();
    let mut last = 1;
    for (l, t) in it {
        last = l;
        match t[0] {
            "V" if t.len() == 3 => {
                let v = vertex(l, t[1], n)?;
                let o = match t[2] {
                    "1" => Owner::Player1,
                    "P" => Owner::Probabilistic,
                    s => return err(l, format!("owner must be 1 or P, got {s:?}")),
                };
                if owner[v].replace(o).is_some() {
                    return err(l, format!("vertex {v} declared twice"));
                }
            }
            "V" => return err(l, "expected `V <id> <1|P>`"),
            "E" if t.len() == 5 => {
                let prob = if t[3] == "-" { None } else { Some(real(l, t[3])?) };
                raw.push((l, vertex(l, t[1], n)?, vertex(l, t[2], n)?, prob, real(l, t[4])?));
            }
            "E" => return err(l, "expected `E <src> <dst> <prob|-> <reward>`"),
            _ => extra.line(l, &t, n)?,
        }
    }
    let owner: Vec<Owner> = owner
        .into_iter()
        .enumerate()
        .map(|(v, o)| o.map_or_else(|| err(last, format!("vertex {v} has no V line")), Ok))
        .collect::<Result<_, _>>()?;
    if raw.len() != m {
        return err(last, format!("header declares {m} edges, found {}", raw.len()));
    }
    let mut edges = Vec::with_capacity(m);
    for (l, s, d, p, r) in raw {
        let w = match (owner[s], p) {
            (Owner::Player1, None) => 0.0,
            (Owner::Probabilistic, Some(w)) => w,
            (Owner::Player1, Some(_)) => return err(l, format!("player-1 vertex {s} needs `-` as probability")),
            (Owner::Probabilistic, None) => return err(l, format!("probabilistic vertex {s} needs a probability")),
        };
        edges.push(Edge::new(s, d, w, r));
    }
    let mdp = MarkovDecisionProcess::new(owner, edges).or_else(|e| err(last, e.to_string()))?;
    Ok(MdpFile { mdp, targets: extra.targets, lambda: extra.lambda })
}

pub fn write_mdp(mdp: &MarkovDecisionProcess, targets: Option<&[VertexId]>, lambda: Option<f64>) -> String {
    let mut out = format!("MDP {} {}\n", mdp.vertex_count(), mdp.edge_count());
    for (v, o) in mdp.owners().iter().enumerate() {
        let _ = writeln!(out, "V {v} {}", if *o == Owner::Player1 { "1" } else { "P" });
    }
    for e in mdp.edges() {
        if mdp.owner(e.src) == Owner::Player1 {
            let _ = writeln!(out, "E {} {} - {}", e.src, e.dst, e.reward);
        } else {
            let _ = writeln!(out, "E {} {} {} {}", e.src, e.dst, e.weight, e.reward);
        }
    }
    write_extras(&mut out, targets, lambda);
    out
}

/// Parses either format; an MC becomes an MDP without player-1 vertices.
pub fn parse_model(text: &str) -> Result<MdpFile, ParseError> {
    match lines(text).next() {
        Some((_, t)) if t[0] == "MC" => {
            let f = parse_mc(text)?;
            Ok(MdpFile { mdp: MarkovDecisionProcess::from_chain(&f.mc), targets: f.targets, lambda: f.lambda })
        }
        _ => parse_mdp(text),
    }
}

/// Parses a decomposition; bag 0 is the root.
pub fn parse_td(text: &str) -> Result<TreeDecomposition, ParseError> {
    let mut it = lines(text);
    let (count, width) = header(&mut it, "TD")?;
    let mut bags: Vec<Option<Vec<VertexId>>> = vec![None; count];
    let mut tree = Vec::new();
    let mut last = 1;
    for (l, t) in it {
        last = l;
        match t[0] {
            "B" if t.len() >= 2 => {
                let b = int(l, t[1])?;
                if b >= count {
                    return err(l, format!("bag {b} out of range ({count} bags)"));
                }
                let vs = t[2..].iter().map(|s| int(l, s)).collect::<Result<Vec<_>, _>>()?;
                if bags[b].replace(vs).is_some() {
                    return err(l, format!("bag {b} declared twice"));
                }
            }
            "TE" if t.len() == 3 => {
                let (a, b) = (int(l, t[1])?, int(l, t[2])?);
                if a >= count || b >= count {
                    return err(l, format!("tree edge ({a}, {b}) names a missing bag"));
                }
                tree.push((a, b));
            }
            other => return err(l, format!("unexpected line {other:?}")),
        }
    }
    let bags: Vec<Vec<VertexId>> = bags
        .into_iter()
        .enumerate()
        .map(|(b, v)| v.map_or_else(|| err(last, format!("bag {b} missing")), Ok))
        .collect::<Result<_, _>>()?;
    let td = TreeDecomposition::new(bags, tree);
    if count > 0 && td.width() != width {
        return err(1, format!("declared width {width}, computed {}", td.width()));
    }
    Ok(td)
}

/// Writes a decomposition with its root as bag 0 (the root and bag 0 swap
/// ids when they differ).
pub fn write_td(td: &TreeDecomposition) -> String {
    let r = td.root();
    let swap = |b: usize| if b == r { 0 } else if b == 0 { r } else { b };
    let nb = td.bag_count();
    let mut out = format!("TD {nb} {}\n", td.width());
    for new in 0..nb {
        let _ = write!(out, "B {new}");
        for v in td.bag(swap(new)) {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    for &(a, b) in td.tree_edges() {
        let _ = writeln!(out, "TE {} {}", swap(a), swap(b));
    }
    out
}

pub fn parse_ls(text: &str) -> Result<LinearSystem, ParseError> {
    let mut it = lines(text);
    let (n, m) = header(&mut it, "LS")?;
    let mut sys = LinearSystem::new(n);
    let mut last = 1;
    for (l, t) in it {
        last = l;
        if t[0] != "EQ" || t.len() < 3 {
            return err(l, "expected `EQ <k> <var> <coef> ... <rhs>`");
        }
        let k = int(l, t[1])?;
        if t.len() != 3 + 2 * k {
            return err(l, format!("EQ with {k} terms needs {} fields", 3 + 2 * k));
        }
        let mut coefs = Vec::with_capacity(k);
        for i in 0..k {
            let x = int(l, t[2 + 2 * i])?;
            if x >= n {
                return err(l, format!("unknown {x} out of range (n = {n})"));
            }
            coefs.push((x, real(l, t[3 + 2 * i])?));
        }
        let rhs = real(l, t[2 + 2 * k])?;
        sys.push(Equation::new(coefs, rhs)).or_else(|e| err(l, e.to_string()))?;
    }
    if sys.equation_count() != m {
        return err(last, format!("header declares {m} equations, found {}", sys.equation_count()));
    }
    Ok(sys)
}

pub fn write_ls(sys: &LinearSystem) -> String {
    let mut out = format!("LS {} {}\n", sys.unknown_count(), sys.equation_count());
    for e in sys.equations() {
        let _ = write!(out, "EQ {}", e.coefs.len());
        for &(x, c) in &e.coefs {
            let _ = write!(out, " {x} {c}");
        }
        let _ = writeln!(out, " {}", e.rhs);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mc_with_comments_and_defaults() {
        let f = parse_mc("# demo\nMC 2 2\nE 0 1 1\nE 1 1 1.0 -2.5 # loop\n\nT 1\nL 0.5\n").unwrap();
        assert_eq!(f.mc.vertex_count(), 2);
        assert_eq!(f.mc.transition(0, 1).unwrap().reward, 0.0);
        assert_eq!(f.mc.transition(1, 1).unwrap().reward, -2.5);
        assert_eq!(f.targets, Some(vec![1]));
        assert_eq!(f.lambda, Some(0.5));
        let again = parse_mc(&write_mc(&f.mc, Some(&[1]), Some(0.5))).unwrap();
        assert_eq!(again, f);
    }

    #[test]
    fn mc_errors_name_the_line() {
        assert_eq!(parse_mc("MC 2 1\nE 0 5 1\n").unwrap_err().line, 2);
        assert!(parse_mc("MC 2 2\nE 0 1 1\n").is_err());
        assert!(parse_mc("MC 2 1\nE 0 1 nan\n").is_err());
        assert!(parse_mc("MC 2 2\nE 0 1 0.5\nE 0 1 0.5\n").is_err());
        assert!(parse_mc("").is_err());
    }

    #[test]
    fn mdp_dash_rules() {
        let ok = "MDP 2 3\nV 0 1\nV 1 P\nE 0 1 - 4\nE 0 0 - 0\nE 1 1 1 0\n";
        let f = parse_mdp(ok).unwrap();
        assert_eq!(f.mdp.owner(0), Owner::Player1);
        assert_eq!(parse_mdp(&write_mdp(&f.mdp, None, None)).unwrap(), f);
        assert!(parse_mdp("MDP 1 1\nV 0 1\nE 0 0 1 0\n").is_err());
        assert!(parse_mdp("MDP 1 1\nV 0 P\nE 0 0 - 0\n").is_err());
        assert!(parse_mdp("MDP 2 1\nV 0 P\nE 0 0 1 0\n").is_err());
    }

    #[test]
    fn td_width_must_match() {
        let td = parse_td("TD 2 1\nB 0 0 1\nB 1 1 2\nTE 0 1\n").unwrap();
        assert_eq!(td.width(), 1);
        assert!(parse_td("TD 2 2\nB 0 0 1\nB 1 1 2\nTE 0 1\n").is_err());
        assert!(parse_td("TD 2 1\nB 0 0 1\nTE 0 1\n").is_err());
        assert_eq!(parse_td(&write_td(&td)).unwrap(), td);
    }

    #[test]
    fn td_root_written_first() {
        let td = TreeDecomposition::new(vec![vec![0], vec![0, 1], vec![1, 2]], vec![(0, 1), (1, 2)]).with_root(2);
        let back = parse_td(&write_td(&td)).unwrap();
        assert_eq!(back.bag(0), &[1, 2]);
        assert_eq!(back.bag(2), &[0]);
        assert_eq!(back.tree_edges(), &[(2, 1), (1, 0)]);
    }

    #[test]
    fn ls_round_trip() {
        let s = parse_ls("LS 3 2\nEQ 2 0 1 1 -0.5 3\nEQ 0 0\n").unwrap();
        assert_eq!(s.equations()[0].coefs, vec![(0, 1.0), (1, -0.5)]);
        assert_eq!(parse_ls(&write_ls(&s)).unwrap(), s);
        assert!(parse_ls("LS 1 1\nEQ 1 0 1\n").is_err());
        assert!(parse_ls("LS 1 1\nEQ 1 3 1 1\n").is_err());
    }
}
