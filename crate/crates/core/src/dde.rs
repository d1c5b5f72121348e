//! Fixed-step integration of `y' = -K y + A y(t - tau_r) - c D y(t - tau_p)`.
//!
//! Classical RK4 stages; delayed states at off-grid times come from cubic
//! Lagrange interpolation of the stored past. A stencil never mixes the
//! prescribed history with the computed solution, since the derivative is
//! generally discontinuous at `t = 0`; where a piece has fewer than four
//! points the degree drops accordingly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{seeded_rng, uniform01, PinningProblem};

/// Trajectories are cut short once any component exceeds this magnitude.
pub const DIVERGENCE_CAP: f64 = 1e12;

/// Initial function on `[-tau_m, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum HistoryFunction {
    Constant(DVector<f64>),
    /// Values at `-tau_m, -tau_m + step, ..., 0`, oldest first.
    Sampled { step: f64, values: Vec<DVector<f64>> },
}

impl HistoryFunction {
    /// Constant history drawn uniformly from `[-1, 1]^n`.
    pub fn random_constant(n: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        HistoryFunction::Constant(DVector::from_fn(n, |_, _| 2.0 * uniform01(&mut rng) - 1.0))
    }

    pub fn dim(&self) -> usize {
        match self {
            HistoryFunction::Constant(v) => v.len(),
            HistoryFunction::Sampled { values, .. } => values.first().map_or(0, |v| v.len()),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            HistoryFunction::Constant(v) => HistoryFunction::Constant(v * factor),
            HistoryFunction::Sampled { step, values } => HistoryFunction::Sampled {
                step: *step,
                values: values.iter().map(|v| v * factor).collect(),
            },
        }
    }

    pub fn shifted(&self, offset: f64) -> Self {
        match self {
            HistoryFunction::Constant(v) => HistoryFunction::Constant(v.add_scalar(offset)),
            HistoryFunction::Sampled { step, values } => HistoryFunction::Sampled {
                step: *step,
                values: values.iter().map(|v| v.add_scalar(offset)).collect(),
            },
        }
    }
}

/// Uniformly spaced solution samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub t0: f64,
    /// Spacing between stored samples.
    pub h: f64,
    pub samples: Vec<DVector<f64>>,
    pub tau_r: f64,
    pub tau_p: f64,
    /// The run stopped early because a component exceeded [`DIVERGENCE_CAP`].
    pub diverged: bool,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| self.t0 + k as f64 * self.h)
    }

    pub fn last(&self) -> &DVector<f64> {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    /// CSV with header `t,y0,...`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |v| v.len());
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",y{i}");
        }
        out.push('\n');
        for (t, y) in self.times().zip(&self.samples) {
            let _ = write!(out, "{t:.16e}");
            for v in y.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// `min(positive delays, 0.01) / 4`, or `1e-3` without delays.
pub fn default_step(tau_r: f64, tau_p: f64) -> f64 {
    let positive = [tau_r, tau_p].into_iter().filter(|&t| t > 0.0);
    match positive.reduce(f64::min) {
        Some(t) => t.min(0.01) / 4.0,
        None => 1e-3,
    }
}

/// Stepper over a ring buffer holding just enough past to serve both delays.
pub struct Integrator {
    n: usize,
    k: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    pinned: Vec<usize>,
    c: f64,
    tau_r: f64,
    tau_p: f64,
    h: f64,
    /// Grid index of the oldest prescribed history point (`<= 0`).
    first: i64,
    /// Grid index of the current state.
    current: i64,
    cap: usize,
    buf: Vec<f64>,
}

impl Integrator {
    pub fn new(problem: &PinningProblem, history: &HistoryFunction, h: f64) -> Result<Self> {
        let n = problem.n();
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step {h} must be positive")));
        }
        let min_delay = [problem.tau_r, problem.tau_p]
            .into_iter()
            .filter(|&t| t > 0.0)
            .reduce(f64::min);
        if let Some(d) = min_delay {
            if h > d / 4.0 * (1.0 + 1e-12) {
                return Err(Error::StepTooLarge { step: h, delay: d });
            }
        }
        if history.dim() != n {
            return Err(Error::InvalidArgument(format!(
                "history has dimension {}, system has {n}",
                history.dim()
            )));
        }
        let tau_m = problem.max_delay();
        let span = (tau_m / h).ceil() as i64;
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let w = problem.system.a[(i, j)];
                        (w != 0.0).then_some((j, w))
                    })
                    .collect()
            })
            .collect();
        let mut me = Self {
            n,
            k: problem.system.k.iter().copied().collect(),
            rows,
            pinned: problem.pins.members().to_vec(),
            c: problem.c,
            tau_r: problem.tau_r,
            tau_p: problem.tau_p,
            h,
            first: 0,
            current: 0,
            cap: span as usize + 8,
            buf: Vec::new(),
        };
        me.buf = vec![0.0; me.cap * n];
        match history {
            HistoryFunction::Constant(v) => {
                me.first = -(span + 3);
                for j in me.first..=0 {
                    me.slot_mut(j).copy_from_slice(v.as_slice());
                }
            }
            HistoryFunction::Sampled { step, values } => {
                if (step - h).abs() > 1e-9 * h {
                    return Err(Error::InvalidArgument(format!(
                        "sampled history step {step} differs from integration step {h}"
                    )));
                }
                let needed = (tau_m / h).round() as usize + 1;
                if (tau_m / h - (tau_m / h).round()).abs() > 1e-6 || values.len() < needed {
                    return Err(Error::InvalidArgument(format!(
                        "sampled history needs {needed} points at step {h} covering [-{tau_m}, 0], got {}",
                        values.len()
                    )));
                }
                let kept = &values[values.len() - needed..];
                me.first = -(needed as i64 - 1);
                for (off, v) in kept.iter().enumerate() {
                    me.slot_mut(me.first + off as i64).copy_from_slice(v.as_slice());
                }
            }
        }
        Ok(me)
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn time(&self) -> f64 {
        self.current as f64 * self.h
    }

    pub fn index(&self) -> i64 {
        self.current
    }

    pub fn state(&self) -> &[f64] {
        self.slot(self.current)
    }

    /// Stored state at grid index `j`, if still in the buffer.
    pub fn stored(&self, j: i64) -> Option<&[f64]> {
        let oldest = (self.current - self.cap as i64 + 1).max(self.first);
        (j >= oldest && j <= self.current).then(|| self.slot(j))
    }

    fn pos(&self, j: i64) -> usize {
        (j - self.first) as usize % self.cap
    }

    fn slot(&self, j: i64) -> &[f64] {
        let p = self.pos(j) * self.n;
        &self.buf[p..p + self.n]
    }

    fn slot_mut(&mut self, j: i64) -> &mut [f64] {
        let p = self.pos(j) * self.n;
        let n = self.n;
        &mut self.buf[p..p + n]
    }

    /// Multiply the whole stored past by `factor`; valid because the system is linear.
    pub fn rescale(&mut self, factor: f64) {
        for v in &mut self.buf {
            *v *= factor;
        }
    }

    /// Interpolated state at grid position `p` (in units of `h`), written to `out`.
    fn delayed(&self, p: f64, out: &mut [f64]) {
        let (lo, hi) = if p < 0.0 {
            (self.first.max(self.current - self.cap as i64 + 1), 0)
        } else {
            (0, self.current)
        };
        let count = (hi - lo + 1).min(4);
        let mut start = p.floor() as i64 - 1;
        start = start.clamp(lo, hi - count + 1);
        let mut weights = [0.0; 4];
        for a in 0..count {
            let xa = (start + a) as f64;
            let mut w = 1.0;
            for b in 0..count {
                if b != a {
                    let xb = (start + b) as f64;
                    w *= (p - xb) / (xa - xb);
                }
            }
            weights[a as usize] = w;
        }
        out.fill(0.0);
        for a in 0..count {
            let w = weights[a as usize];
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.slot(start + a)) {
                *o += w * v;
            }
        }
    }

    fn rhs(&self, y: &[f64], yr: &[f64], yp: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = -self.k[i] * y[i];
            for &(j, w) in &self.rows[i] {
                acc += w * yr[j];
            }
            out[i] = acc;
        }
        if self.c != 0.0 {
            for &i in &self.pinned {
                out[i] -= self.c * yp[i];
            }
        }
    }

    fn stage(&self, theta: f64, y: &[f64], yr: &mut [f64], yp: &mut [f64], out: &mut [f64]) {
        let base = self.current as f64 + theta;
        if self.tau_r > 0.0 {
            self.delayed(base - self.tau_r / self.h, yr);
        } else {
            yr.copy_from_slice(y);
        }
        if self.tau_p > 0.0 {
            self.delayed(base - self.tau_p / self.h, yp);
        } else {
            yp.copy_from_slice(y);
        }
        self.rhs(y, yr, yp, out);
    }

    /// One RK4 step. Returns the largest magnitude in the new state.
    pub fn step(&mut self) -> f64 {
        let n = self.n;
        let h = self.h;
        let y0: Vec<f64> = self.state().to_vec();
        let mut yr = vec![0.0; n];
        let mut yp = vec![0.0; n];
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];

        self.stage(0.0, &y0, &mut yr, &mut yp, &mut k1);
        for i in 0..n {
            tmp[i] = y0[i] + 0.5 * h * k1[i];
        }
        self.stage(0.5, &tmp, &mut yr, &mut yp, &mut k2);
        for i in 0..n {
            tmp[i] = y0[i] + 0.5 * h * k2[i];
        }
        self.stage(0.5, &tmp, &mut yr, &mut yp, &mut k3);
        for i in 0..n {
            tmp[i] = y0[i] + h * k3[i];
        }
        self.stage(1.0, &tmp, &mut yr, &mut yp, &mut k4);

        self.current += 1;
        let mut big = 0.0f64;
        let next = self.slot_mut(self.current);
        for i in 0..n {
            let v = y0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            next[i] = v;
            big = big.max(v.abs());
        }
        if big.is_nan() {
            f64::INFINITY
        } else {
            big
        }
    }
}

/// Integrate to `horizon`, storing every step.
pub fn simulate(
    problem: &PinningProblem,
    history: &HistoryFunction,
    horizon: f64,
    h: f64,
) -> Result<Trajectory> {
    simulate_with_stride(problem, history, horizon, h, 1)
}

/// Integrate to `horizon`, storing every `stride`-th step.
pub fn simulate_with_stride(
    problem: &PinningProblem,
    history: &HistoryFunction,
    horizon: f64,
    h: f64,
    stride: usize,
) -> Result<Trajectory> {
    if !(horizon >= h) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must be at least one step {h}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let mut integ = Integrator::new(problem, history, h)?;
    let steps = (horizon / h - 1e-9).ceil() as usize;
    let mut samples = vec![DVector::from_column_slice(integ.state())];
    let mut diverged = false;
    for s in 1..=steps {
        let big = integ.step();
        if big > DIVERGENCE_CAP {
            diverged = true;
            break;
        }
        if s % stride == 0 {
            samples.push(DVector::from_column_slice(integ.state()));
        }
    }
    Ok(Trajectory {
        t0: 0.0,
        h: h * stride as f64,
        samples,
        tau_r: problem.tau_r,
        tau_p: problem.tau_p,
        diverged,
    })
}

/// [`simulate`] in the original coordinates `x = y + s 1`.
pub fn simulate_x(
    problem: &PinningProblem,
    x_history: &HistoryFunction,
    horizon: f64,
    h: f64,
) -> Result<Trajectory> {
    let s = problem.s;
    let mut traj = simulate(problem, &x_history.shifted(-s), horizon, h)?;
    for y in &mut traj.samples {
        y.add_scalar_mut(s);
    }
    Ok(traj)
}

/// Least-squares slope of `log max_i |y_i|` over the second half of a
/// trajectory; a rough growth rate for tests and diagnostics.
pub fn fitted_rate(traj: &Trajectory) -> f64 {
    let start = traj.samples.len() / 2;
    let pts: Vec<(f64, f64)> = traj
        .times()
        .zip(&traj.samples)
        .skip(start)
        .map(|(t, y)| (t, y.amax().max(1e-300).ln()))
        .collect();
    let m = pts.len() as f64;
    let tx: f64 = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ly: f64 = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let num: f64 = pts.iter().map(|p| (p.0 - tx) * (p.1 - ly)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - tx).powi(2)).sum();
    num / den
}
