mod config;
mod error;
mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pindelay::bounds::{
    lambert_stability_test_with, single_node_tau_pm_with, tau_p_star_for, WeightMode,
};
use pindelay::charroots::{dominant_root, find_roots, QuasiPoly, SearchSpec};
use pindelay::dde::{default_step, simulate_with_stride, HistoryFunction};
use pindelay::graph::{
    check_hypothesis_h, erdos_renyi, first_strongly_connected, has_spanning_tree, laplacian,
    strongly_connected_components,
};
use pindelay::lyapunov::{largest_exponent_with, LyapunovOptions};
use pindelay::spectral::eigendecompose;
use pindelay::{DirectedGraph, Method, PinSet, PinningProblem, Stability};
use serde::Serialize;

use config::Config;
use error::CliError;

const TOOL_VERSION: &str = concat!("pindelay ", env!("CARGO_PKG_VERSION"));

/// Stability analysis and simulation of pinned consensus networks with
/// transmission and pinning delays.
#[derive(Parser)]
#[command(name = "pindelay", version)]
struct Cli {
    /// JSON config file (schema "pindelay-config/1"); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded Erdős–Rényi graph file.
    Generate(GenerateArgs),
    /// Report strongly connected components, spanning tree and the pinning hypothesis.
    Check(ProblemArgs),
    /// Admissible pinning-delay bound or Lambert-branch verdict.
    Bound(BoundArgs),
    /// Integrate the delayed system and write the trajectory as CSV.
    Simulate(SimulateArgs),
    /// Largest Lyapunov exponent from segment-norm growth.
    Lyapunov(LyapunovArgs),
    /// Characteristic roots and the dominant one.
    Roots(RootsArgs),
    /// Evaluate a one- or two-parameter grid and emit CSV plus a gnuplot script.
    Sweep(sweep::SweepArgs),
}

pub(crate) fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

pub(crate) fn nonnegative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be nonnegative"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn node_count(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("{s:?} is not a positive integer")),
    }
}

/// Graph, pins and system parameters shared by the analysis commands.
#[derive(Args, Debug, Clone)]
pub(crate) struct ProblemArgs {
    /// Graph file {"n": .., "edges": [[i, j, w], ..]}; each edge is a link j -> i.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Pinned node indices, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "pin_fraction")]
    pins: Option<Vec<usize>>,
    /// Pin round(f n) nodes chosen with --seed.
    #[arg(long, value_parser = probability)]
    pin_fraction: Option<f64>,
    /// Seed for random pins and initial histories [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Pinning strength [default: 1].
    #[arg(long, value_parser = nonnegative)]
    c: Option<f64>,
    /// Transmission delay [default: 0].
    #[arg(long, value_parser = nonnegative)]
    tau_r: Option<f64>,
    /// Pinning delay [default: 0].
    #[arg(long, value_parser = nonnegative)]
    tau_p: Option<f64>,
    /// Consensus target [default: 0].
    #[arg(long, value_parser = parse_f64, allow_hyphen_values = true)]
    s: Option<f64>,
}

/// A fully resolved analysis setup.
pub(crate) struct Setup {
    pub graph: DirectedGraph,
    pub pins: PinSet,
    pub seed: u64,
    pub c: f64,
    pub tau_r: f64,
    pub tau_p: f64,
    pub s: f64,
}

impl Setup {
    pub fn problem(&self) -> Result<PinningProblem, CliError> {
        Ok(PinningProblem::new(
            laplacian(&self.graph),
            self.pins.clone(),
            self.c,
            self.tau_r,
            self.tau_p,
            self.s,
        )?)
    }
}

fn fraction_pins(n: usize, f: f64, seed: u64) -> Result<PinSet, CliError> {
    let m = ((f * n as f64).round() as usize).min(n);
    Ok(PinSet::random(n, m, seed)?)
}

impl ProblemArgs {
    pub fn resolve(&self, cfg: &Config) -> Result<Setup, CliError> {
        let path = self
            .graph
            .clone()
            .or_else(|| cfg.graph.clone())
            .ok_or_else(|| CliError::Usage("no graph given (--graph or config \"graph\")".into()))?;
        let graph = DirectedGraph::load(&path).map_err(|e| match e {
            pindelay::Error::Io(io) => CliError::Domain(format!("{}: {io}", path.display())),
            other => other.into(),
        })?;
        let n = graph.n();
        let seed = self.seed.or(cfg.seed).unwrap_or(0);
        let pins = match (&self.pins, self.pin_fraction, &cfg.pins, cfg.pin_fraction) {
            (Some(p), _, _, _) => PinSet::new(p.iter().copied(), n)?,
            (None, Some(f), _, _) => fraction_pins(n, f, seed)?,
            (None, None, Some(p), _) => PinSet::new(p.iter().copied(), n)?,
            (None, None, None, Some(f)) => fraction_pins(n, f, seed)?,
            (None, None, None, None) => PinSet::new([], n)?,
        };
        Ok(Setup {
            graph,
            pins,
            seed,
            c: self.c.or(cfg.c).unwrap_or(1.0),
            tau_r: self.tau_r.or(cfg.tau_r).unwrap_or(0.0),
            tau_p: self.tau_p.or(cfg.tau_p).unwrap_or(0.0),
            s: self.s.or(cfg.s).unwrap_or(0.0),
        })
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    tool_version: &'static str,
    seed: u64,
    command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    result: &'a T,
}

fn command_line() -> String {
    let args: Vec<String> = std::env::args_os()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    format!("pindelay {}", args.join(" "))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

/// Write `result` wrapped in the provenance header.
pub(crate) fn emit<T: Serialize>(
    out: Option<&Path>,
    seed: u64,
    label: Option<&str>,
    result: &T,
) -> Result<(), CliError> {
    let env = Envelope {
        tool_version: TOOL_VERSION,
        seed,
        command: command_line(),
        label,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| CliError::Domain(e.to_string()))?;
    text.push('\n');
    write_output(out, &text)
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of nodes.
    #[arg(long, value_parser = node_count)]
    n: usize,
    /// Linking probability of each unordered pair.
    #[arg(long, value_parser = probability)]
    p: f64,
    /// Generator seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Advance the seed until the graph is connected.
    #[arg(long)]
    connected: bool,
    /// Output graph file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct GenerateReport {
    path: String,
    n: usize,
    edges: usize,
    mean_degree: f64,
    connected: bool,
    /// Seed the written graph was drawn with.
    graph_seed: u64,
}

fn cmd_generate(args: &GenerateArgs, cfg: &Config) -> Result<(), CliError> {
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let (graph_seed, graph) = if args.connected {
        first_strongly_connected(seed, 10_000, |s| erdos_renyi(args.n, args.p, s))?
    } else {
        (seed, erdos_renyi(args.n, args.p, seed)?)
    };
    graph.save(&args.out)?;
    let report = GenerateReport {
        path: args.out.display().to_string(),
        n: graph.n(),
        edges: graph.edges().len(),
        mean_degree: graph.mean_degree(),
        connected: pindelay::graph::is_strongly_connected(&graph),
        graph_seed,
    };
    emit(None, seed, None, &report)
}

#[derive(Serialize)]
struct CheckReport {
    n: usize,
    edges: usize,
    mean_degree: f64,
    symmetric: bool,
    strongly_connected: bool,
    components: Vec<Vec<usize>>,
    source_components: Vec<Vec<usize>>,
    spanning_tree: bool,
    pins: Vec<usize>,
    /// Every source component holds a pinned node.
    hypothesis_h: bool,
}

fn cmd_check(args: &ProblemArgs, cfg: &Config) -> Result<(), CliError> {
    let setup = args.resolve(cfg)?;
    let g = &setup.graph;
    let comps = strongly_connected_components(g);
    let report = CheckReport {
        n: g.n(),
        edges: g.edges().len(),
        mean_degree: g.mean_degree(),
        symmetric: g.is_symmetric(),
        strongly_connected: comps.components.len() == 1,
        source_components: comps.sources().cloned().collect(),
        components: comps.components.clone(),
        spanning_tree: has_spanning_tree(g),
        pins: setup.pins.members().to_vec(),
        hypothesis_h: check_hypothesis_h(g, &setup.pins),
    };
    eprintln!(
        "{} components, {} source(s); hypothesis (H) {}",
        report.components.len(),
        report.source_components.len(),
        if report.hypothesis_h { "holds" } else { "fails" }
    );
    emit(None, setup.seed, None, &report)
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundMethod {
    /// Delay-independent bound over all pinned in-degrees.
    TaupStar,
    /// Single pinned node, tau_r = 0.
    TauPm,
    /// Exact verdict for tau_r = tau_p on a degree-normalized graph.
    Lambert,
}

#[derive(Clone, Copy, ValueEnum)]
pub(crate) enum Weights {
    /// Pinned-node projections of the eigenbasis.
    Projected,
    /// Zero-eigenvector weights; node-independent but may overestimate.
    ZeroMode,
}

impl From<Weights> for WeightMode {
    fn from(w: Weights) -> Self {
        match w {
            Weights::Projected => WeightMode::Projected,
            Weights::ZeroMode => WeightMode::ZeroMode,
        }
    }
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum)]
    method: BoundMethod,
    /// Spectral weights for tau-pm and lambert.
    #[arg(long, value_enum, default_value_t = Weights::Projected)]
    weights: Weights,
    /// Common delay tested by lambert [default: --tau-p].
    #[arg(long, value_parser = positive)]
    tau: Option<f64>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) fn single_pin(pins: &PinSet) -> Result<usize, CliError> {
    match pins.members() {
        [q] => Ok(*q),
        m => Err(CliError::Domain(format!(
            "this bound needs exactly one pinned node, got {}",
            m.len()
        ))),
    }
}

fn cmd_bound(args: &BoundArgs, cfg: &Config) -> Result<(), CliError> {
    let setup = args.problem.resolve(cfg)?;
    let sys = laplacian(&setup.graph);
    let c = setup.c;
    let result = match args.method {
        BoundMethod::TaupStar => tau_p_star_for(&sys, &setup.pins, c)?,
        BoundMethod::TauPm => {
            let d = eigendecompose(&sys, single_pin(&setup.pins)?)?;
            single_node_tau_pm_with(&d, c, args.weights.into())?
        }
        BoundMethod::Lambert => {
            let tau = match args.tau {
                Some(t) => t,
                None if setup.tau_p > 0.0 => setup.tau_p,
                None => return Err(CliError::Usage("lambert needs --tau or a positive --tau-p".into())),
            };
            let d = eigendecompose(&sys, single_pin(&setup.pins)?)?;
            lambert_stability_test_with(&sys, &d, c, tau, args.weights.into())?.into_bound_result(tau)
        }
    };
    match &result.diagnostics {
        pindelay::bounds::BoundDiagnostics::LambertVerdict { verdict, .. } => {
            eprintln!("tau = {}: {}", result.value, verdict.stability.as_str())
        }
        _ => eprintln!("bound = {} (c = {c})", result.value),
    }
    emit(args.out.as_deref(), setup.seed, None, &result)
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Final time [default: 50].
    #[arg(long, value_parser = positive)]
    horizon: Option<f64>,
    /// Integration step [default: chosen from the delays].
    #[arg(long, value_parser = positive)]
    step: Option<f64>,
    /// Keep every k-th step.
    #[arg(long, default_value_t = 1, value_parser = node_count)]
    stride: usize,
    /// CSV output [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_simulate(args: &SimulateArgs, cfg: &Config) -> Result<(), CliError> {
    let setup = args.problem.resolve(cfg)?;
    let problem = setup.problem()?;
    let horizon = args.horizon.or(cfg.horizon).unwrap_or(50.0);
    let h = args
        .step
        .or(cfg.step)
        .unwrap_or_else(|| default_step(setup.tau_r, setup.tau_p));
    // initial deviations from the target, constant over the history window
    let history = HistoryFunction::random_constant(problem.n(), setup.seed);
    let mut traj = simulate_with_stride(&problem, &history, horizon, h, args.stride)?;
    for x in &mut traj.samples {
        x.add_scalar_mut(setup.s);
    }
    if traj.diverged {
        eprintln!("warning: trajectory diverged and was cut at t = {}", traj.times().last().unwrap_or(0.0));
    }
    write_output(args.out.as_deref(), &traj.to_csv())
}

#[derive(Args)]
struct LyapunovArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Number of segments of length max(tau_r, tau_p) [default: 400].
    #[arg(long)]
    segments: Option<usize>,
    /// Samples per segment in the segment norm [default: 64].
    #[arg(long)]
    samples: Option<usize>,
    /// Upper bound on the integration step.
    #[arg(long, value_parser = positive)]
    step: Option<f64>,
    /// Include the per-segment log growth factors.
    #[arg(long)]
    logs: bool,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ExponentReport {
    value: f64,
    verdict: Stability,
    method: Method,
    converged: bool,
    segment_length: f64,
    step: f64,
    segments_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_segment_logs: Option<Vec<f64>>,
}

fn cmd_lyapunov(args: &LyapunovArgs, cfg: &Config) -> Result<(), CliError> {
    let setup = args.problem.resolve(cfg)?;
    let problem = setup.problem()?;
    let opts = LyapunovOptions {
        segments: args.segments.or(cfg.segments).unwrap_or(400),
        samples_per_segment: args.samples.or(cfg.samples).unwrap_or(64),
        max_step: args.step.or(cfg.step),
    };
    let history = HistoryFunction::random_constant(problem.n(), setup.seed);
    let est = largest_exponent_with(&problem, &history, &opts)?;
    if !est.converged {
        eprintln!("warning: the last two quarters of segments disagree; raise --segments");
    }
    let report = ExponentReport {
        value: est.value,
        verdict: Stability::from_real_part(est.value),
        method: est.method,
        converged: est.converged,
        segment_length: est.segment_length,
        step: est.step,
        segments_used: est.segments_used,
        note: (est.method == Method::UndelayedAbscissa)
            .then_some("both delays are zero; value is the spectral abscissa of -(L + cD)"),
        per_segment_logs: args.logs.then_some(est.per_segment_logs),
    };
    eprintln!("exponent = {} ({})", report.value, report.method.as_str());
    emit(args.out.as_deref(), setup.seed, None, &report)
}

#[derive(Args)]
struct RootsArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Left edge of the search rectangle.
    #[arg(long, value_parser = parse_f64, allow_hyphen_values = true)]
    sigma_lo: Option<f64>,
    /// Right edge of the search rectangle.
    #[arg(long, value_parser = parse_f64, allow_hyphen_values = true)]
    sigma_hi: Option<f64>,
    /// Height of the search rectangle.
    #[arg(long, value_parser = positive)]
    omega_max: Option<f64>,
    /// Seed grid points per side.
    #[arg(long)]
    grid: Option<usize>,
    /// How many roots to list, rightmost first.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RootOut {
    re: f64,
    im: f64,
    residual: f64,
    multiplicity_hint: usize,
}

#[derive(Serialize)]
struct RootsReport {
    dominant: RootOut,
    verdict: Stability,
    method: Method,
    roots: Vec<RootOut>,
    search: SearchSpec,
}

fn cmd_roots(args: &RootsArgs, cfg: &Config) -> Result<(), CliError> {
    let setup = args.problem.resolve(cfg)?;
    let qp = QuasiPoly::from_problem(&setup.problem()?);
    let mut spec = SearchSpec::default_for(&qp);
    if let Some(v) = args.sigma_lo {
        spec.sigma_lo = v;
    }
    if let Some(v) = args.sigma_hi {
        spec.sigma_hi = v;
    }
    if let Some(v) = args.omega_max {
        spec.omega_max = v;
    }
    if let Some(v) = args.grid {
        spec.grid = v;
    }
    if spec.sigma_lo >= spec.sigma_hi {
        return Err(CliError::Usage(format!(
            "empty search rectangle: sigma_lo {} >= sigma_hi {}",
            spec.sigma_lo, spec.sigma_hi
        )));
    }
    let roots = match find_roots(&qp, &spec) {
        Ok(r) => r,
        // dominant_root widens the rectangle before giving up
        Err(pindelay::Error::NoRootFound) => vec![dominant_root(&qp, &spec)?],
        Err(e) => return Err(e.into()),
    };
    let out = |r: &pindelay::ComplexRoot| RootOut {
        re: r.lambda.re,
        im: r.lambda.im,
        residual: r.residual,
        multiplicity_hint: r.multiplicity_hint,
    };
    let report = RootsReport {
        dominant: out(&roots[0]),
        verdict: Stability::from_real_part(roots[0].lambda.re),
        method: Method::CharacteristicRoots,
        roots: roots.iter().take(args.count).map(out).collect(),
        search: spec,
    };
    eprintln!(
        "dominant root {} + {}i: {}",
        report.dominant.re,
        report.dominant.im,
        report.verdict.as_str()
    );
    emit(args.out.as_deref(), setup.seed, None, &report)
}

/// Honour `PINDELAY_THREADS` before any parallel work starts.
fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PINDELAY_THREADS") else {
        return Ok(());
    };
    let k = v
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| CliError::Usage(format!("PINDELAY_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, &cfg),
        Command::Check(a) => cmd_check(a, &cfg),
        Command::Bound(a) => cmd_bound(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Lyapunov(a) => cmd_lyapunov(a, &cfg),
        Command::Roots(a) => cmd_roots(a, &cfg),
        Command::Sweep(a) => sweep::run(a, &cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("pindelay: {e}");
        std::process::exit(e.exit_code());
    }
}
