//! Benchmark instances and single timed solver runs.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::discounted::{solve_discounted_simple, solve_discounted_td, DiscountedSpec};
use crate::error::SolveError;
use crate::gen::to_mc;
use crate::hitting::{solve_hitting_simple, solve_hitting_td};
use crate::io::{parse_model, parse_td};
use crate::linsys::{discounted_system, gaussian_dense_counted, hitting_system, LsOptions, SolveOutcome};
use crate::mdp::{strategy_iteration, value_iteration, Evaluator, Objective, VI_EPSILON, VI_MAX_ITERS};
use crate::meanpayoff::solve_mean_payoff;
use crate::model::{MarkovChain, MarkovDecisionProcess, TargetSet};
use crate::td::TreeDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchObjective {
    Hitting,
    Discounted,
    MeanPayoff,
    MdpHitting,
    MdpDiscounted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchSolver {
    Td,
    Simple,
    Dense,
    SiTd,
    SiSimple,
    Vi,
}

/// An `objective:solver` pair such as `hitting:td` or `mdp-discounted:vi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Method {
    pub objective: BenchObjective,
    pub solver: BenchSolver,
}

impl BenchObjective {
    pub fn name(self) -> &'static str {
        match self {
            BenchObjective::Hitting => "hitting",
            BenchObjective::Discounted => "discounted",
            BenchObjective::MeanPayoff => "meanpayoff",
            BenchObjective::MdpHitting => "mdp-hitting",
            BenchObjective::MdpDiscounted => "mdp-discounted",
        }
    }
}

impl BenchSolver {
    pub fn name(self) -> &'static str {
        match self {
            BenchSolver::Td => "td",
            BenchSolver::Simple => "simple",
            BenchSolver::Dense => "dense",
            BenchSolver::SiTd => "si-td",
            BenchSolver::SiSimple => "si-simple",
            BenchSolver::Vi => "vi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.objective.name(), self.solver.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        use BenchObjective as O;
        use BenchSolver as S;
        let (o, v) = s.split_once(':').ok_or_else(|| format!("method {s:?} is not objective:solver"))?;
        let objective = match o {
            "hitting" => O::Hitting,
            "discounted" => O::Discounted,
            "meanpayoff" => O::MeanPayoff,
            "mdp-hitting" => O::MdpHitting,
            "mdp-discounted" => O::MdpDiscounted,
            _ => return Err(format!("unknown objective {o:?}")),
        };
        let solver = match v {
            "td" => S::Td,
            "simple" => S::Simple,
            "dense" => S::Dense,
            "si-td" => S::SiTd,
            "si-simple" => S::SiSimple,
            "vi" => S::Vi,
            _ => return Err(format!("unknown solver {v:?}")),
        };
        let ok = match objective {
            O::Hitting | O::Discounted => matches!(solver, S::Td | S::Simple | S::Dense),
            O::MeanPayoff => solver == S::Td,
            O::MdpHitting | O::MdpDiscounted => matches!(solver, S::SiTd | S::SiSimple | S::Vi),
        };
        if !ok {
            return Err(format!("solver {v} does not apply to {o}"));
        }
        Ok(Method { objective, solver })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub mdp: MarkovDecisionProcess,
    pub td: TreeDecomposition,
    pub targets: Option<TargetSet>,
    pub lambda: Option<f64>,
}

impl Instance {
    /// Builds an instance from the text of a model file and a TD file.
    pub fn from_texts(name: &str, model: &str, td: &str) -> Result<Self, SolveError> {
        let f = parse_model(model).map_err(|e| SolveError::Other(format!("model: {e}")))?;
        let td = parse_td(td).map_err(|e| SolveError::Other(format!("td: {e}")))?;
        let targets = match f.targets {
            Some(t) => Some(TargetSet::new(t, f.mdp.vertex_count())?),
            None => None,
        };
        Ok(Instance { name: name.to_string(), mdp: f.mdp, td, targets, lambda: f.lambda })
    }

    /// Chain view: player-1 rows become uniform.
    pub fn chain(&self) -> MarkovChain {
        to_mc(&self.mdp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance: String,
    pub n: usize,
    pub m: usize,
    pub width: usize,
    pub method: String,
    pub objective: String,
    pub seconds: f64,
    pub work: u64,
    pub kappa: Option<usize>,
    pub status: String,
}

impl BenchRow {
    pub fn new(inst: &Instance, method: Method) -> Self {
        BenchRow {
            instance: inst.name.clone(),
            n: inst.mdp.vertex_count(),
            m: inst.mdp.edge_count(),
            width: inst.td.width(),
            method: method.solver.name().to_string(),
            objective: method.objective.name().to_string(),
            seconds: 0.0,
            work: 0,
            kappa: None,
            status: String::new(),
        }
    }
}

/// Outcome of a single run. `values` is kept so callers can compare
/// methods; it is not part of the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub seconds: f64,
    pub work: u64,
    pub kappa: Option<usize>,
    pub status: String,
    pub values: Option<Vec<f64>>,
}

fn failed(e: impl ToString) -> Measurement {
    let msg = e.to_string().replace([',', '\n'], ";");
    Measurement { seconds: 0.0, work: 0, kappa: None, status: format!("error: {msg}"), values: None }
}

/// Runs one method on one instance; only the solve itself is timed.
pub fn run_method(inst: &Instance, method: Method, dense_limit: usize) -> Measurement {
    use BenchObjective as O;
    use BenchSolver as S;
    let targets = || inst.targets.clone().ok_or_else(|| SolveError::Other("instance has no targets".into()));
    let spec = || DiscountedSpec::new(inst.lambda.unwrap_or(0.9));
    let run = || -> Result<(u64, Option<usize>, Vec<f64>), SolveError> {
        match (method.objective, method.solver) {
            (O::Hitting | O::Discounted | O::MeanPayoff, _) => {
                let mc = inst.chain();
                let (t, d) = match method.objective {
                    O::Hitting => (Some(targets()?), None),
                    O::Discounted => (None, Some(spec()?)),
                    _ => (None, None),
                };
                let r = match (method.objective, method.solver) {
                    (O::Hitting, S::Td) => solve_hitting_td(&mc, t.as_ref().unwrap(), &inst.td).map(|(r, s)| (s.work, r.prob)),
                    (O::Hitting, S::Simple) => solve_hitting_simple(&mc, t.as_ref().unwrap()).map(|(r, s)| (s.work, r.prob)),
                    (O::Discounted, S::Td) => solve_discounted_td(&mc, d.unwrap(), &inst.td).map(|(r, s)| (s.work, r.value)),
                    (O::Discounted, S::Simple) => solve_discounted_simple(&mc, d.unwrap()).map(|(r, s)| (s.work, r.value)),
                    (O::MeanPayoff, _) => solve_mean_payoff(&mc, &inst.td).map(|(r, s)| (s.work, r.value)),
                    (_, _) => {
                        let sys = match method.objective {
                            O::Hitting => hitting_system(&mc, t.as_ref().unwrap())?,
                            _ => discounted_system(&mc, d.unwrap().lambda()),
                        };
                        match gaussian_dense_counted(&sys, dense_limit, &LsOptions::default())? {
                            (SolveOutcome::Unique(x), w) => Ok((w, x)),
                            (o, _) => Err(SolveError::Other(format!("dense system is {}", o.kind()))),
                        }
                    }
                }?;
                Ok((r.0, None, r.1))
            }
            (O::MdpHitting | O::MdpDiscounted, s) => {
                let obj = match method.objective {
                    O::MdpHitting => Objective::Hitting(targets()?),
                    _ => Objective::Discounted(spec()?),
                };
                let rep = match s {
                    S::SiTd => strategy_iteration(&inst.mdp, &obj, Some(&inst.td), Evaluator::Td)?,
                    S::SiSimple => strategy_iteration(&inst.mdp, &obj, None, Evaluator::Simple)?,
                    _ => value_iteration(&inst.mdp, &obj, VI_EPSILON, VI_MAX_ITERS)?,
                };
                Ok((rep.work, Some(rep.kappa), rep.values))
            }
        }
    };
    let start = Instant::now();
    match run() {
        Ok((work, kappa, values)) => Measurement {
            seconds: start.elapsed().as_secs_f64(),
            work,
            kappa,
            status: "ok".into(),
            values: Some(values),
        },
        Err(e) => failed(e),
    }
}
