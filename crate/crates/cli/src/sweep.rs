//! Parameter grids: one row per cell, evaluated in parallel and written in
//! index order so the output does not depend on the thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use pindelay::bounds::{single_node_tau_pm, tau_p_star_for};
use pindelay::charroots::{dominant_root_default, QuasiPoly};
use pindelay::dde::HistoryFunction;
use pindelay::graph::laplacian;
use pindelay::lyapunov::{largest_exponent_with, LyapunovOptions};
use pindelay::perturbation::{large_c_dominant, mean_field_estimate, reduced_system, small_c_dominant};
use pindelay::spectral::eigendecompose;
use pindelay::{LaplacianSystem, Method, PinningProblem, SpectralDecomp, Stability};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;
use crate::{emit, single_pin, ProblemArgs, Setup};

pub const LABEL: &str = "own-seed analog: graphs and pins come from this tool's seeded generators, \
                         not from any published realization";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    C,
    TauR,
    TauP,
    /// `tau_p = value / c`.
    TauPC,
}

impl Param {
    fn name(self) -> &'static str {
        match self {
            Param::C => "c",
            Param::TauR => "tau_r",
            Param::TauP => "tau_p",
            Param::TauPC => "tau_p_c",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub param: Param,
    pub values: Vec<f64>,
}

/// `NAME=v1,v2,..` or `NAME=lo:hi:count` (evenly spaced, ends included).
pub fn parse_axis(s: &str) -> Result<Axis, String> {
    let (name, spec) = s
        .split_once('=')
        .ok_or_else(|| format!("{s:?}: expected NAME=VALUES"))?;
    let param = match name.trim() {
        "c" => Param::C,
        "tau_r" => Param::TauR,
        "tau_p" => Param::TauP,
        "tau_p_c" => Param::TauPC,
        other => return Err(format!("unknown axis {other:?} (c, tau_r, tau_p, tau_p_c)")),
    };
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(format!("axis {name} has no values"));
    }
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, count] = parts[..] else {
            return Err(format!("{spec:?}: expected lo:hi:count"));
        };
        let lo = crate::parse_f64(lo)?;
        let hi = crate::parse_f64(hi)?;
        let count: usize = count
            .trim()
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| format!("{count:?}: count must be a positive integer"))?;
        if count == 1 {
            vec![lo]
        } else {
            (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect()
        }
    } else {
        spec.split(',').map(crate::parse_f64).collect::<Result<Vec<_>, _>>()?
    };
    if let Some(v) = values.iter().find(|v| **v < 0.0) {
        return Err(format!("axis {name}: value {v} must be nonnegative"));
    }
    Ok(Axis { param, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    /// Pinning-delay bound and its margin over tau_p.
    Bound,
    /// Largest Lyapunov exponent.
    Lyapunov,
    /// Dominant characteristic root.
    Charroots,
    /// First-order small-c estimate and its mean-field form.
    SmallC,
    /// Large-c limit from the unpinned block.
    LargeC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundChoice {
    TaupStar,
    TauPm,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// NAME=VALUES, NAME one of c, tau_r, tau_p, tau_p_c (tau_p = value / c);
    /// VALUES a comma list or lo:hi:count. Give one or two axes.
    #[arg(long = "axis", value_parser = parse_axis, required = true)]
    axes: Vec<Axis>,
    /// Comma-separated subset of bound, lyapunov, charroots, small-c, large-c.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SweepMethod::Bound, SweepMethod::Charroots])]
    methods: Vec<SweepMethod>,
    /// Which bound the bound method reports.
    #[arg(long, value_enum, default_value_t = BoundChoice::TaupStar)]
    bound: BoundChoice,
    /// Lyapunov segments [default: 400].
    #[arg(long)]
    segments: Option<usize>,
    /// Lyapunov samples per segment [default: 64].
    #[arg(long)]
    samples: Option<usize>,
    /// CSV output.
    #[arg(long)]
    out: PathBuf,
    /// gnuplot script [default: the CSV path with extension .gp].
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    coords: [f64; 2],
    c: f64,
    tau_r: f64,
    tau_p: f64,
}

#[derive(Debug, Default)]
struct Outcome {
    bound: Option<f64>,
    lyapunov: Option<(f64, bool, Method)>,
    root: Option<(f64, f64)>,
    small_c: Option<f64>,
    mean_field: Option<f64>,
    large_c: Option<f64>,
    errors: Vec<String>,
}

/// Work shared by every cell.
struct Shared<'a> {
    setup: &'a Setup,
    sys: LaplacianSystem,
    methods: &'a [SweepMethod],
    bound: BoundChoice,
    decomp: Option<Result<SpectralDecomp, String>>,
    /// `(tau_r, reduced root real part)` per distinct `tau_r`.
    large_c: Vec<(f64, Result<f64, String>)>,
    lyapunov: LyapunovOptions,
}

fn cells(axes: &[Axis], setup: &Setup) -> Vec<Cell> {
    let second = axes.get(1).map_or(vec![f64::NAN], |a| a.values.clone());
    let mut out = Vec::with_capacity(axes[0].values.len() * second.len());
    for &u in &axes[0].values {
        for &v in &second {
            let mut cell = Cell {
                coords: [u, v],
                c: setup.c,
                tau_r: setup.tau_r,
                tau_p: setup.tau_p,
            };
            let mut per_c = None;
            for (axis, x) in axes.iter().zip([u, v]) {
                match axis.param {
                    Param::C => cell.c = x,
                    Param::TauR => cell.tau_r = x,
                    Param::TauP => cell.tau_p = x,
                    Param::TauPC => per_c = Some(x),
                }
            }
            if let Some(k) = per_c {
                cell.tau_p = if cell.c > 0.0 { k / cell.c } else { f64::INFINITY };
            }
            out.push(cell);
        }
    }
    out
}

fn record<T>(errors: &mut Vec<String>, what: &str, r: Result<T, pindelay::Error>) -> Option<T> {
    r.map_err(|e| errors.push(format!("{what}: {e}"))).ok()
}

fn evaluate(shared: &Shared, cell: &Cell) -> Outcome {
    let mut out = Outcome::default();
    let setup = shared.setup;
    let problem = PinningProblem::new(
        shared.sys.clone(),
        setup.pins.clone(),
        cell.c,
        cell.tau_r,
        cell.tau_p,
        setup.s,
    );
    let problem = match problem {
        Ok(p) => p,
        Err(e) => {
            out.errors.push(format!("setup: {e}"));
            return out;
        }
    };
    for &m in shared.methods {
        match m {
            SweepMethod::Bound => {
                out.bound = match (shared.bound, &shared.decomp) {
                    (BoundChoice::TaupStar, _) => record(
                        &mut out.errors,
                        "bound",
                        tau_p_star_for(&shared.sys, &setup.pins, cell.c).map(|b| b.value),
                    ),
                    (BoundChoice::TauPm, Some(Ok(d))) => record(
                        &mut out.errors,
                        "bound",
                        single_node_tau_pm(d, cell.c).map(|b| b.value),
                    ),
                    (BoundChoice::TauPm, Some(Err(e))) => {
                        out.errors.push(format!("bound: {e}"));
                        None
                    }
                    (BoundChoice::TauPm, None) => unreachable!("decomposition prepared for tau-pm"),
                };
            }
            SweepMethod::Lyapunov => {
                let hist = HistoryFunction::random_constant(problem.n(), setup.seed);
                out.lyapunov = record(
                    &mut out.errors,
                    "lyapunov",
                    largest_exponent_with(&problem, &hist, &shared.lyapunov)
                        .map(|e| (e.value, e.converged, e.method)),
                );
            }
            SweepMethod::Charroots => {
                out.root = record(
                    &mut out.errors,
                    "charroots",
                    dominant_root_default(&QuasiPoly::from_problem(&problem))
                        .map(|r| (r.lambda.re, r.lambda.im)),
                );
            }
            SweepMethod::SmallC => {
                out.small_c = record(
                    &mut out.errors,
                    "small-c",
                    small_c_dominant(&shared.sys, &setup.pins, cell.tau_r, cell.c)
                        .map(|e| e.dominant_root_estimate.re),
                );
                out.mean_field = Some(mean_field_estimate(
                    setup.pins.fraction(),
                    setup.graph.mean_degree(),
                    cell.tau_r,
                    cell.c,
                ));
            }
            SweepMethod::LargeC => {
                let (_, r) = shared
                    .large_c
                    .iter()
                    .find(|(t, _)| *t == cell.tau_r)
                    .expect("every tau_r prepared");
                match r {
                    Ok(v) => out.large_c = Some(*v),
                    Err(e) => out.errors.push(format!("large-c: {e}")),
                }
            }
        }
    }
    out
}

/// Strongest available verdict: roots, then exponent, then the bound.
fn verdict(shared: &Shared, cell: &Cell, o: &Outcome) -> (Stability, &'static str) {
    if let Some((re, _)) = o.root {
        return (Stability::from_real_part(re), Method::CharacteristicRoots.as_str());
    }
    if let Some((v, _, m)) = o.lyapunov {
        return (Stability::from_real_part(v), m.as_str());
    }
    if let Some(b) = o.bound {
        let (name, applies) = match shared.bound {
            BoundChoice::TaupStar => ("tau_p_star", true),
            BoundChoice::TauPm => ("tau_pm", cell.tau_r == 0.0),
        };
        // the bounds are sufficient conditions only
        let s = if applies && cell.tau_p < b {
            Stability::Stable
        } else {
            Stability::Inconclusive
        };
        return (s, name);
    }
    (Stability::Inconclusive, "none")
}

fn num(v: f64) -> String {
    format!("{v:.10e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn header(axes: &[Axis], methods: &[SweepMethod]) -> Vec<String> {
    let mut h = vec!["index".to_string()];
    h.extend(["c", "tau_r", "tau_p"].map(String::from));
    // the other axes are already among the resolved parameters
    if axes.iter().any(|a| a.param == Param::TauPC) {
        h.push(Param::TauPC.name().to_string());
    }
    for m in methods {
        let cols: &[&str] = match m {
            SweepMethod::Bound => &["bound", "bound_margin"],
            SweepMethod::Lyapunov => &["lyapunov", "lyapunov_converged"],
            SweepMethod::Charroots => &["root_re", "root_im"],
            SweepMethod::SmallC => &["small_c", "mean_field"],
            SweepMethod::LargeC => &["large_c"],
        };
        h.extend(cols.iter().map(|s| s.to_string()));
    }
    h.extend(["verdict", "verdict_method", "status", "error"].map(String::from));
    h
}

fn row(shared: &Shared, axes: &[Axis], index: usize, cell: &Cell, o: &Outcome) -> String {
    let mut r = vec![index.to_string()];
    r.extend([cell.c, cell.tau_r, cell.tau_p].map(num));
    if let Some(k) = axes.iter().position(|a| a.param == Param::TauPC) {
        r.push(num(cell.coords[k]));
    }
    for m in shared.methods {
        match m {
            SweepMethod::Bound => {
                r.push(opt(o.bound));
                r.push(opt(o.bound.map(|b| b - cell.tau_p)));
            }
            SweepMethod::Lyapunov => {
                r.push(opt(o.lyapunov.map(|l| l.0)));
                r.push(o.lyapunov.map(|l| l.1.to_string()).unwrap_or_default());
            }
            SweepMethod::Charroots => {
                r.push(opt(o.root.map(|z| z.0)));
                r.push(opt(o.root.map(|z| z.1)));
            }
            SweepMethod::SmallC => {
                r.push(opt(o.small_c));
                r.push(opt(o.mean_field));
            }
            SweepMethod::LargeC => r.push(opt(o.large_c)),
        }
    }
    let (stability, method) = verdict(shared, cell, o);
    r.push(stability.as_str().to_string());
    r.push(method.to_string());
    if o.errors.is_empty() {
        r.push("ok".into());
        r.push(String::new());
    } else {
        r.push("ERROR".into());
        r.push(o.errors.join(" | ").replace([',', '\n', '\r'], ";"));
    }
    r.join(",")
}

/// gnuplot script for the CSV; writes an SVG next to it when run.
fn gnuplot(axes: &[Axis], columns: &[String], csv: &str, svg: &str) -> String {
    let col = |name: &str| columns.iter().position(|c| c == name).map(|i| i + 1);
    let x = col(axes[0].param.name()).expect("axis column");
    let mut s = String::new();
    let _ = writeln!(s, "# {LABEL}");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal svg size 900,600 dynamic");
    let _ = writeln!(s, "set output '{svg}'");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set xlabel '{}'", axes[0].param.name());
    let mut plots = Vec::new();
    // a single-valued second axis only fixes a parameter
    if let Some(second) = axes.get(1).filter(|a| a.values.len() > 1) {
        let y = col(second.param.name()).expect("axis column");
        let v = col("verdict").expect("verdict column");
        let _ = writeln!(s, "set ylabel '{}'", second.param.name());
        let _ = writeln!(s, "set title 'Stability verdicts (own-seed analog)'");
        for (verdict, colour) in [("stable", "#1f77b4"), ("unstable", "#d62728"), ("inconclusive", "#7f7f7f")] {
            plots.push(format!(
                "'{csv}' skip 1 using {x}:(strcol({v}) eq '{verdict}' ? column({y}) : 1/0) \
                 with points pt 7 ps 0.6 lc rgb '{colour}' title '{verdict}'"
            ));
        }
        // the bound depends on c alone, so it is a curve when c is the first axis
        if let (Some(b), Param::C) = (col("bound"), axes[0].param) {
            plots.push(format!("'{csv}' skip 1 using {x}:{b} with lines dt 2 lc rgb 'black' title 'bound'"));
        }
    } else {
        let _ = writeln!(s, "set ylabel 'real part / bound'");
        let _ = writeln!(s, "set title 'Sweep over {} (own-seed analog)'", axes[0].param.name());
        for name in ["root_re", "lyapunov", "small_c", "mean_field", "large_c", "bound"] {
            if let Some(i) = col(name) {
                plots.push(format!("'{csv}' skip 1 using {x}:{i} with linespoints title '{name}'"));
            }
        }
    }
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

/// Path of `target` as seen from the directory holding `from`.
fn relative_to(target: &Path, from: &Path) -> String {
    match (target.parent(), from.parent(), target.file_name()) {
        (Some(a), Some(b), Some(name)) if a == b => name.to_string_lossy().into_owned(),
        _ => target.display().to_string(),
    }
}

#[derive(Serialize)]
struct SweepReport {
    axes: Vec<Axis>,
    methods: Vec<SweepMethod>,
    bound: BoundChoice,
    pins: Vec<usize>,
    cells: usize,
    error_cells: usize,
    csv: String,
    plot: String,
}

pub fn run(args: &SweepArgs, cfg: &Config) -> Result<(), CliError> {
    if args.axes.len() > 2 {
        return Err(CliError::Usage(format!("at most two axes, got {}", args.axes.len())));
    }
    if args.axes.len() == 2 && args.axes[0].param == args.axes[1].param {
        return Err(CliError::Usage("both axes sweep the same parameter".into()));
    }
    let params: Vec<Param> = args.axes.iter().map(|a| a.param).collect();
    if params.contains(&Param::TauP) && params.contains(&Param::TauPC) {
        return Err(CliError::Usage("tau_p and tau_p_c cannot both be axes".into()));
    }
    let mut methods: Vec<SweepMethod> = Vec::new();
    for &m in &args.methods {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Usage("no methods selected".into()));
    }

    let setup = args.problem.resolve(cfg)?;
    let sys = laplacian(&setup.graph);
    let grid = cells(&args.axes, &setup);

    let decomp = (methods.contains(&SweepMethod::Bound) && args.bound == BoundChoice::TauPm).then(|| {
        single_pin(&setup.pins)
            .map_err(|e| e.to_string())
            .and_then(|q| eigendecompose(&sys, q).map_err(|e| e.to_string()))
    });
    let large_c = if methods.contains(&SweepMethod::LargeC) {
        let mut taus: Vec<f64> = Vec::new();
        for cell in &grid {
            if !taus.contains(&cell.tau_r) {
                taus.push(cell.tau_r);
            }
        }
        let reduced = reduced_system(&sys, &setup.pins).map_err(|e| e.to_string());
        taus.par_iter()
            .map(|&t| {
                let v = reduced.clone().and_then(|r| {
                    large_c_dominant(&r, t)
                        .map(|e| e.dominant_root_estimate.re)
                        .map_err(|e| e.to_string())
                });
                (t, v)
            })
            .collect()
    } else {
        Vec::new()
    };
    let shared = Shared {
        setup: &setup,
        sys,
        methods: &methods,
        bound: args.bound,
        decomp,
        large_c,
        lyapunov: LyapunovOptions {
            segments: args.segments.or(cfg.segments).unwrap_or(400),
            samples_per_segment: args.samples.or(cfg.samples).unwrap_or(64),
            max_step: cfg.step,
        },
    };

    let outcomes: Vec<Outcome> = grid.par_iter().map(|c| evaluate(&shared, c)).collect();

    let columns = header(&args.axes, &methods);
    let mut csv = columns.join(",");
    csv.push('\n');
    for (i, (cell, o)) in grid.iter().zip(&outcomes).enumerate() {
        csv.push_str(&row(&shared, &args.axes, i, cell, o));
        csv.push('\n');
    }
    std::fs::write(&args.out, csv)?;

    let plot = args.plot.clone().unwrap_or_else(|| args.out.with_extension("gp"));
    let svg = plot.with_extension("svg");
    let script = gnuplot(
        &args.axes,
        &columns,
        &relative_to(&args.out, &plot),
        &relative_to(&svg, &plot),
    );
    std::fs::write(&plot, script)?;

    let error_cells = outcomes.iter().filter(|o| !o.errors.is_empty()).count();
    if error_cells > 0 {
        eprintln!("{error_cells} of {} cells reported errors", grid.len());
    }
    let report = SweepReport {
        axes: args.axes.clone(),
        methods,
        bound: args.bound,
        pins: setup.pins.members().to_vec(),
        cells: grid.len(),
        error_cells,
        csv: args.out.display().to_string(),
        plot: plot.display().to_string(),
    };
    emit(None, setup.seed, Some(LABEL), &report)
}
