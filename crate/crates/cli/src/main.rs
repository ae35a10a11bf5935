use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use twmc::bench::{run_method, BenchRow, Instance, Measurement, Method};
use twmc::discounted::{solve_discounted_simple, solve_discounted_td, DiscountedSpec};
use twmc::gen::{generate, to_mc, GenConfig, GenKind};
use twmc::hitting::{solve_hitting_simple, solve_hitting_td};
use twmc::io::{parse_ls, parse_model, parse_td, write_mdp, write_td, MdpFile};
use twmc::linsys::{
    build_primal, discounted_system, gaussian_dense_with, hitting_system, solve_system_td_with, LsOptions,
    SolveOutcome,
};
use twmc::mdp::{strategy_iteration, value_iteration, Evaluator, Objective, VI_EPSILON, VI_MAX_ITERS};
use twmc::meanpayoff::solve_mean_payoff;
use twmc::model::{validate_mc, validate_mdp, MarkovChain, Owner, TargetSet};
use twmc::td::{heuristic_decompose, validate_td, Heuristic, TreeDecomposition};

const DENSE_LIMIT: usize = 20_000;

#[derive(Parser)]
#[command(name = "twmc", version, about = "Markov chain and MDP solvers driven by tree decompositions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Tree decomposition file; without it the elimination-order solver is used.
    #[arg(long)]
    td: Option<PathBuf>,
    /// Decimals printed per value.
    #[arg(long, default_value_t = 12)]
    precision: usize,
    /// Relative cancellation tolerance of the linear-system solver.
    #[arg(long)]
    zero_tol: Option<f64>,
}

#[derive(Args, Clone)]
struct ChainArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Use dense Gaussian elimination instead of vertex elimination.
    #[arg(long, conflicts_with = "td")]
    dense: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MdpMethod {
    Si,
    Vi,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalArg {
    Td,
    Simple,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    MinDegree,
    MinFill,
}

#[derive(Args, Clone)]
struct MdpArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "si")]
    method: MdpMethod,
    /// Strategy evaluator; defaults to td when --td is given.
    #[arg(long, value_enum)]
    evaluator: Option<EvalArg>,
    /// Writes the final strategy as `<vertex> <successor>` lines.
    #[arg(long)]
    strategy_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Probability of reaching the target set from every vertex.
    Hitting {
        #[command(flatten)]
        args: ChainArgs,
        /// Comma-separated target ids; overrides the file's T line.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<usize>>,
    },
    /// Expected discounted sum of rewards from every vertex.
    Discounted {
        #[command(flatten)]
        args: ChainArgs,
        /// Discount factor; overrides the file's L line.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Expected mean payoff from every vertex.
    Meanpayoff {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Solves a linear system; exit 2 if unsatisfiable, 3 if underdetermined.
    Linsolve {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "td")]
        dense: bool,
    },
    /// Maximal hitting probabilities of an MDP.
    MdpHitting {
        #[command(flatten)]
        args: MdpArgs,
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<usize>>,
    },
    /// Maximal discounted sums of an MDP.
    MdpDiscounted {
        #[command(flatten)]
        args: MdpArgs,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Checks a model file and optionally a decomposition against it.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        td: Option<PathBuf>,
    },
    /// Computes a tree decomposition of a model or linear system.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "min-fill")]
        heuristic: HeuristicArg,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generates a random MDP with a decomposition of bounded width.
    Gen {
        #[arg(long, default_value = "cfg-like")]
        kind: GenKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability that a vertex with two or more successors is player 1.
        #[arg(long, default_value_t = 0.5)]
        player_prob: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        td_out: PathBuf,
    },
    /// Runs solver methods over a directory of instances and writes a CSV.
    Bench {
        /// Directory holding `<name>.mc` or `<name>.mdp` next to `<name>.td`.
        #[arg(long)]
        suite: PathBuf,
        /// Comma-separated `objective:solver` pairs, e.g. hitting:td,hitting:dense.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<Method>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        timeout_secs: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = DENSE_LIMIT)]
        dense_limit: usize,
    },
    /// Runs a single bench measurement; used by `bench` in a child process.
    #[command(hide = true)]
    BenchRun {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        td: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        dense_limit: usize,
    },
}

/// Failure with a specific exit code and no further diagnostics.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => match e.downcast_ref::<Exit>() {
            Some(Exit(code)) => ExitCode::from(*code),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<MdpFile> {
    parse_model(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_td(path: &Path) -> Result<TreeDecomposition> {
    parse_td(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn chain_of(f: &MdpFile) -> MarkovChain {
    to_mc(&f.mdp)
}

fn targets_of(f: &MdpFile, flag: Option<Vec<usize>>) -> Result<TargetSet> {
    let ids = flag.or_else(|| f.targets.clone()).ok_or_else(|| anyhow!("no targets: pass --targets or add a T line"))?;
    Ok(TargetSet::new(ids, f.mdp.vertex_count())?)
}

fn spec_of(f: &MdpFile, flag: Option<f64>) -> Result<DiscountedSpec> {
    let l = flag.or(f.lambda).ok_or_else(|| anyhow!("no discount factor: pass --lambda or add an L line"))?;
    Ok(DiscountedSpec::new(l)?)
}

fn ls_options(c: &Common) -> LsOptions {
    let mut o = LsOptions::default();
    if let Some(z) = c.zero_tol {
        o.zero_tol = z;
    }
    o
}

fn format_values(values: &[f64], precision: usize) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{i} {v:.precision$}\n"));
    }
    s
}

fn unique(outcome: SolveOutcome) -> Result<Vec<f64>> {
    match outcome {
        SolveOutcome::Unique(x) => Ok(x),
        SolveOutcome::Unsatisfiable => {
            eprintln!("system is unsatisfiable");
            Err(Exit(2).into())
        }
        SolveOutcome::Underdetermined => {
            eprintln!("system is underdetermined");
            Err(Exit(3).into())
        }
    }
}

fn run(cmd: Cmd) -> Result<String> {
    match cmd {
        Cmd::Hitting { args, targets } => {
            let f = load_model(&args.input)?;
            let mc = chain_of(&f);
            let t = targets_of(&f, targets)?;
            let values = if args.dense {
                let sys = hitting_system(&mc, &t)?;
                unique(gaussian_dense_with(&sys, DENSE_LIMIT, &ls_options(&args.common))?)?
            } else if let Some(p) = &args.common.td {
                solve_hitting_td(&mc, &t, &load_td(p)?)?.0.prob
            } else {
                solve_hitting_simple(&mc, &t)?.0.prob
            };
            Ok(format_values(&values, args.common.precision))
        }
        Cmd::Discounted { args, lambda } => {
            let f = load_model(&args.input)?;
            let mc = chain_of(&f);
            let spec = spec_of(&f, lambda)?;
            let values = if args.dense {
                let sys = discounted_system(&mc, spec.lambda());
                unique(gaussian_dense_with(&sys, DENSE_LIMIT, &ls_options(&args.common))?)?
            } else if let Some(p) = &args.common.td {
                solve_discounted_td(&mc, spec, &load_td(p)?)?.0.value
            } else {
                solve_discounted_simple(&mc, spec)?.0.value
            };
            Ok(format_values(&values, args.common.precision))
        }
        Cmd::Meanpayoff { input, common } => {
            let f = load_model(&input)?;
            let mc = chain_of(&f);
            let td = match &common.td {
                Some(p) => load_td(p)?,
                None => heuristic_decompose(mc.vertex_count(), &mc.skeleton(), Heuristic::MinFill),
            };
            Ok(format_values(&solve_mean_payoff(&mc, &td)?.0.value, common.precision))
        }
        Cmd::Linsolve { input, common, dense } => {
            let sys = parse_ls(&read(&input)?).with_context(|| format!("parsing {}", input.display()))?;
            let opts = ls_options(&common);
            let outcome = if dense {
                gaussian_dense_with(&sys, DENSE_LIMIT, &opts)?
            } else {
                let primal = build_primal(&sys);
                let td = match &common.td {
                    Some(p) => load_td(p)?,
                    None => heuristic_decompose(primal.n, &primal.edges, Heuristic::MinFill),
                };
                solve_system_td_with(&sys, &primal, &td, &opts)?.0
            };
            Ok(format_values(&unique(outcome)?, common.precision))
        }
        Cmd::MdpHitting { args, targets } => {
            let f = load_model(&args.input)?;
            let obj = Objective::Hitting(targets_of(&f, targets)?);
            solve_mdp(&f, &obj, &args)
        }
        Cmd::MdpDiscounted { args, lambda } => {
            let f = load_model(&args.input)?;
            let obj = Objective::Discounted(spec_of(&f, lambda)?);
            solve_mdp(&f, &obj, &args)
        }
        Cmd::Validate { input, td } => validate(&input, td.as_deref()),
        Cmd::Decompose { input, heuristic, out } => {
            let text = read(&input)?;
            let (n, edges) = if text.split_whitespace().next() == Some("LS") {
                let p = build_primal(&parse_ls(&text)?);
                (p.n, p.edges)
            } else {
                let f = parse_model(&text).with_context(|| format!("parsing {}", input.display()))?;
                (f.mdp.vertex_count(), f.mdp.skeleton())
            };
            let h = match heuristic {
                HeuristicArg::MinDegree => Heuristic::MinDegree,
                HeuristicArg::MinFill => Heuristic::MinFill,
            };
            let td = write_td(&heuristic_decompose(n, &edges, h));
            match out {
                Some(p) => {
                    fs::write(&p, td).with_context(|| format!("writing {}", p.display()))?;
                    Ok(String::new())
                }
                None => Ok(td),
            }
        }
        Cmd::Gen { kind, n, width, seed, player_prob, out, td_out } => {
            if !(0.0..=1.0).contains(&player_prob) {
                bail!("--player-prob must lie in [0, 1]");
            }
            let mut cfg = GenConfig::new(kind, n, width, seed);
            cfg.player_prob = player_prob;
            let g = generate(&cfg);
            let targets: Vec<usize> = g.targets.iter().collect();
            fs::write(&out, write_mdp(&g.mdp, Some(&targets), Some(g.spec.lambda())))
                .with_context(|| format!("writing {}", out.display()))?;
            fs::write(&td_out, write_td(&g.td)).with_context(|| format!("writing {}", td_out.display()))?;
            Ok(String::new())
        }
        Cmd::Bench { suite, methods, out, timeout_secs, jobs, dense_limit } => {
            bench(&suite, &methods, &out, Duration::from_secs(timeout_secs), jobs.max(1), dense_limit)?;
            Ok(String::new())
        }
        Cmd::BenchRun { model, td, method, dense_limit } => {
            let inst = Instance::from_texts("", &read(&model)?, &read(&td)?)?;
            let m = run_method(&inst, method, dense_limit);
            Ok(format!("{},{},{},{}\n", m.seconds, m.work, m.kappa.map_or(String::new(), |k| k.to_string()), m.status))
        }
    }
}

fn solve_mdp(f: &MdpFile, obj: &Objective, args: &MdpArgs) -> Result<String> {
    let td = args.common.td.as_deref().map(load_td).transpose()?;
    let rep = match args.method {
        MdpMethod::Vi => value_iteration(&f.mdp, obj, VI_EPSILON, VI_MAX_ITERS)?,
        MdpMethod::Si => {
            let ev = match args.evaluator {
                Some(EvalArg::Td) => Evaluator::Td,
                Some(EvalArg::Simple) => Evaluator::Simple,
                None if td.is_some() => Evaluator::Td,
                None => Evaluator::Simple,
            };
            strategy_iteration(&f.mdp, obj, td.as_ref(), ev)?
        }
    };
    if !rep.converged {
        eprintln!("warning: value iteration stopped after {} sweeps without converging", rep.kappa);
    }
    if let (Some(p), Some(s)) = (&args.strategy_out, &rep.strategy) {
        let text: String = s.iter().map(|(v, to)| format!("{v} {to}\n")).collect();
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(format_values(&rep.values, args.common.precision))
}

fn validate(input: &Path, td: Option<&Path>) -> Result<String> {
    let f = load_model(input)?;
    let n = f.mdp.vertex_count();
    let has_player = f.mdp.owners().iter().any(|&o| o == Owner::Player1);
    let mut problems: Vec<String> = if has_player {
        validate_mdp(&f.mdp).iter().map(|v| v.to_string()).collect()
    } else {
        validate_mc(&chain_of(&f), true).iter().map(|v| v.to_string()).collect()
    };
    if let Some(p) = td {
        let td = load_td(p)?;
        problems.extend(validate_td(n, &f.mdp.skeleton(), &td).iter().map(|v| v.to_string()));
    }
    if let Some(t) = &f.targets {
        if let Err(e) = TargetSet::new(t.iter().copied(), n) {
            problems.push(e.to_string());
        }
    }
    if problems.is_empty() {
        return Ok("ok\n".into());
    }
    for p in &problems {
        eprintln!("{p}");
    }
    bail!("{} problem(s) found", problems.len())
}

/// Model/TD path pairs in the suite, ordered by instance name.
fn suite_instances(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if !matches!(ext, Some("mc" | "mdp")) {
            continue;
        }
        let name = path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| anyhow!("bad file name"))?.to_string();
        let td = path.with_extension("td");
        if !td.exists() {
            bail!("{} has no matching .td file", path.display());
        }
        found.push((name, path, td));
    }
    found.sort();
    if let Some(w) = found.windows(2).find(|w| w[0].0 == w[1].0) {
        bail!("instance {} has both .mc and .mdp files", w[0].0);
    }
    Ok(found)
}

fn measure_in_child(model: &Path, td: &Path, method: Method, timeout: Duration, dense_limit: usize) -> Result<Measurement> {
    let mut child = Command::new(std::env::current_exe()?)
        .arg("bench-run")
        .arg("--model")
        .arg(model)
        .arg("--td")
        .arg(td)
        .arg("--method")
        .arg(method.to_string())
        .arg("--dense-limit")
        .arg(dense_limit.to_string())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    let start = Instant::now();
    loop {
        if child.try_wait()?.is_some() {
            break;
        }
        if start.elapsed() > timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(Measurement {
                seconds: timeout.as_secs_f64(),
                work: 0,
                kappa: None,
                status: "timeout".into(),
                values: None,
            });
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    let out = child.wait_with_output()?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() {
        let msg = String::from_utf8_lossy(&out.stderr).trim().replace([',', '\n'], ";");
        return Ok(Measurement { seconds: 0.0, work: 0, kappa: None, status: format!("error: {msg}"), values: None });
    }
    let f: Vec<&str> = stdout.trim().splitn(4, ',').collect();
    if f.len() != 4 {
        bail!("malformed child output {stdout:?}");
    }
    Ok(Measurement {
        seconds: f[0].parse()?,
        work: f[1].parse()?,
        kappa: if f[2].is_empty() { None } else { Some(f[2].parse()?) },
        status: f[3].to_string(),
        values: None,
    })
}

fn bench(suite: &Path, methods: &[Method], out: &Path, timeout: Duration, jobs: usize, dense_limit: usize) -> Result<()> {
    let instances = suite_instances(suite)?;
    // Instance metadata is read once in the parent; solving happens in children.
    let mut heads = Vec::with_capacity(instances.len());
    for (name, model, td) in &instances {
        let inst = Instance::from_texts(name, &read(model)?, &read(td)?).with_context(|| format!("instance {name}"))?;
        heads.push(methods.iter().map(|&m| BenchRow::new(&inst, m)).collect::<Vec<_>>());
    }
    let tasks: Vec<(usize, usize)> =
        (0..instances.len()).flat_map(|i| (0..methods.len()).map(move |j| (i, j))).collect();
    let results: Mutex<Vec<Option<Result<Measurement>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(tasks.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(i, j)) = tasks.get(k) else { break };
                let (_, model, td) = &instances[i];
                let r = measure_in_child(model, td, methods[j], timeout, dense_limit);
                results.lock().unwrap()[k] = Some(r);
            });
        }
    });

    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(["instance", "n", "m", "width", "method", "objective", "seconds", "work", "kappa", "status"])?;
    for (k, r) in results.into_inner().unwrap().into_iter().enumerate() {
        let (i, j) = tasks[k];
        let m = r.expect("every task ran")?;
        let mut row = heads[i][j].clone();
        row.seconds = m.seconds;
        row.work = m.work;
        row.kappa = m.kappa;
        row.status = m.status;
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
