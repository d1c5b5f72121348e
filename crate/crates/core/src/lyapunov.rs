//! Largest Lyapunov exponent from segment-norm growth.
//!
//! Time is cut into segments of length `tau_m = max(tau_r, tau_p)`. Each
//! segment of the solution is represented by equally spaced samples; after
//! every segment the stored past is divided by the segment norm, and the
//! logs of those norms average to `tau_m` times the exponent.

use serde::Serialize;

use crate::dde::{default_step, HistoryFunction, Integrator};
use crate::error::{Error, Result};
use crate::graph::PinningProblem;
use crate::spectral::undelayed_spectral_abscissa;
use crate::verdict::Method;

pub const MIN_SEGMENTS: usize = 50;
pub const MIN_SAMPLES: usize = 16;
/// Fraction of segments discarded before averaging.
pub const BURN_IN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEstimate {
    /// Growth rate, 1/time.
    pub value: f64,
    /// Segments averaged after burn-in.
    pub segments_used: usize,
    /// `log ||phi_k|| - log ||phi_{k-1}||` for every segment, burn-in included.
    pub per_segment_logs: Vec<f64>,
    pub converged: bool,
    /// `SegmentNorms`, or `UndelayedAbscissa` when both delays vanish.
    pub method: Method,
    pub segment_length: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovOptions {
    pub segments: usize,
    pub samples_per_segment: usize,
    /// Upper bound on the integration step; the step actually used divides
    /// the segment evenly. Defaults to [`default_step`].
    pub max_step: Option<f64>,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            segments: 400,
            samples_per_segment: 64,
            max_step: None,
        }
    }
}

/// Estimate with `n_segments` segments of `samples_per_segment` samples each.
pub fn largest_exponent(
    problem: &PinningProblem,
    history: &HistoryFunction,
    n_segments: usize,
    samples_per_segment: usize,
) -> Result<ExponentEstimate> {
    largest_exponent_with(
        problem,
        history,
        &LyapunovOptions {
            segments: n_segments,
            samples_per_segment,
            max_step: None,
        },
    )
}

pub fn largest_exponent_with(
    problem: &PinningProblem,
    history: &HistoryFunction,
    opts: &LyapunovOptions,
) -> Result<ExponentEstimate> {
    if opts.segments < MIN_SEGMENTS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SEGMENTS} segments, got {}",
            opts.segments
        )));
    }
    if opts.samples_per_segment < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples per segment, got {}",
            opts.samples_per_segment
        )));
    }
    let tau_m = problem.max_delay();
    if tau_m == 0.0 {
        let value = undelayed_spectral_abscissa(&problem.system, &problem.pins, problem.c);
        return Ok(ExponentEstimate {
            value,
            segments_used: 0,
            per_segment_logs: Vec::new(),
            converged: true,
            method: Method::UndelayedAbscissa,
            segment_length: 0.0,
            step: 0.0,
        });
    }

    let samples = opts.samples_per_segment;
    let h_max = opts.max_step.unwrap_or_else(|| default_step(problem.tau_r, problem.tau_p));
    let per_sample = (tau_m / (h_max * samples as f64)).ceil().max(1.0) as usize;
    let steps = per_sample * samples;
    let h = tau_m / steps as f64;

    // a sampled history must sit on the step actually used
    let history = match history {
        HistoryFunction::Sampled { step, .. } if (step - h).abs() > 1e-9 * h => {
            return Err(Error::InvalidArgument(format!(
                "sampled history step {step} does not match the segment step {h}"
            )))
        }
        other => other,
    };
    let mut integ = Integrator::new(problem, history, h)?;

    let segment_norm = |integ: &Integrator, end: i64| -> Result<f64> {
        let mut sum = 0.0;
        for m in 0..samples {
            let j = end - (m * per_sample) as i64;
            let v = integ.stored(j).ok_or_else(|| {
                Error::InvalidArgument("history does not cover a full segment".into())
            })?;
            sum += v.iter().map(|x| x * x).sum::<f64>();
        }
        let norm = sum.sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateNorm);
        }
        Ok(norm)
    };

    let first = segment_norm(&integ, 0)?;
    integ.rescale(1.0 / first);

    let mut logs = Vec::with_capacity(opts.segments);
    for _ in 0..opts.segments {
        for _ in 0..steps {
            integ.step();
        }
        let norm = segment_norm(&integ, integ.index())?;
        logs.push(norm.ln());
        integ.rescale(1.0 / norm);
    }

    let burn = (BURN_IN * opts.segments as f64).floor() as usize;
    let used = &logs[burn..];
    let value = used.iter().sum::<f64>() / (used.len() as f64 * tau_m);

    let quarter = opts.segments / 4;
    let rate = |s: &[f64]| s.iter().sum::<f64>() / (s.len() as f64 * tau_m);
    let third = rate(&logs[opts.segments - 2 * quarter..opts.segments - quarter]);
    let fourth = rate(&logs[opts.segments - quarter..]);
    let converged = (third - fourth).abs() <= 0.05 * fourth.abs() + 1e-4;

    Ok(ExponentEstimate {
        value,
        segments_used: used.len(),
        per_segment_logs: logs,
        converged,
        method: Method::SegmentNorms,
        segment_length: tau_m,
        step: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charroots::{dominant_root_default, QuasiPoly};
    use crate::graph::{laplacian, DirectedGraph, LaplacianSystem, PinSet};
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::FRAC_PI_2;

    fn scalar(c: f64, tau_p: f64) -> PinningProblem {
        PinningProblem::new(
            laplacian(&DirectedGraph::empty(1)),
            PinSet::new([0], 1).unwrap(),
            c,
            0.0,
            tau_p,
            0.0,
        )
        .unwrap()
    }

    fn ones(n: usize) -> HistoryFunction {
        HistoryFunction::Constant(DVector::from_element(n, 1.0))
    }

    #[test]
    fn scalar_matches_root() {
        let p = scalar(1.0, 0.2);
        let est = largest_exponent(&p, &ones(1), 400, 64).unwrap();
        let root = dominant_root_default(&QuasiPoly::from_problem(&p)).unwrap();
        assert!((est.value - root.lambda.re).abs() < 1e-2, "{} vs {}", est.value, root.lambda.re);
        assert_eq!(est.method, Method::SegmentNorms);
        assert_eq!(est.segments_used, 320);
        let mean = est.per_segment_logs[80..].iter().sum::<f64>() / (320.0 * 0.2);
        assert!((mean - est.value).abs() < 1e-12);
    }

    #[test]
    fn scalar_boundary_is_neutral() {
        let est = largest_exponent(&scalar(1.0, FRAC_PI_2), &ones(1), 400, 64).unwrap();
        assert!(est.value.abs() < 2e-2, "{}", est.value);
    }

    #[test]
    fn unpinned_consensus_is_neutral() {
        let g = DirectedGraph::from_edges(3, &[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0), (0, 1, 0.4)])
            .unwrap();
        let p = PinningProblem::new(laplacian(&g), PinSet::new([], 3).unwrap(), 0.0, 0.3, 0.0, 0.0)
            .unwrap();
        let est = largest_exponent(&p, &HistoryFunction::random_constant(3, 2), 400, 64).unwrap();
        assert!(est.value.abs() < 2e-2, "{}", est.value);
    }

    #[test]
    fn invariant_under_history_scale() {
        let g = DirectedGraph::complete(3);
        let p = PinningProblem::new(laplacian(&g), PinSet::new([1], 3).unwrap(), 1.5, 0.1, 0.3, 0.0)
            .unwrap();
        let hist = HistoryFunction::random_constant(3, 4);
        let a = largest_exponent(&p, &hist, 100, 16).unwrap();
        let b = largest_exponent(&p, &hist.scaled(1e3), 100, 16).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn sampling_density_does_not_matter() {
        let g = DirectedGraph::complete(3);
        let p = PinningProblem::new(laplacian(&g), PinSet::new([1], 3).unwrap(), 1.5, 0.1, 0.3, 0.0)
            .unwrap();
        let hist = HistoryFunction::random_constant(3, 4);
        let a = largest_exponent(&p, &hist, 400, 32).unwrap();
        let b = largest_exponent(&p, &hist, 400, 64).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.value - b.value).abs() < 0.05 * b.value.abs() + 1e-4);
    }

    #[test]
    fn zero_delay_uses_matrix_abscissa() {
        let p = scalar(2.0, 0.0);
        let est = largest_exponent(&p, &ones(1), 100, 16).unwrap();
        assert_eq!(est.method, Method::UndelayedAbscissa);
        assert_eq!(est.value, -2.0);
    }

    #[test]
    fn rejects_degenerate_input() {
        let p = scalar(1.0, 0.2);
        assert!(matches!(
            largest_exponent(&p, &HistoryFunction::Constant(DVector::zeros(1)), 60, 16),
            Err(Error::DegenerateNorm)
        ));
        assert!(largest_exponent(&p, &ones(1), 10, 16).is_err());
        assert!(largest_exponent(&p, &ones(1), 60, 4).is_err());
    }

    #[test]
    fn reduced_block_matches_characteristic_root() {
        // two unpinned nodes coupled to each other, each also fed by a pinned node
        let k = DVector::from_vec(vec![2.0, 2.0]);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let sys = LaplacianSystem {
            l: DMatrix::from_diagonal(&k) - &a,
            k: k.clone(),
            a: a.clone(),
        };
        let p = PinningProblem::new(sys, PinSet::new([], 2).unwrap(), 0.0, 0.1, 0.0, 0.0).unwrap();
        let est = largest_exponent(&p, &HistoryFunction::random_constant(2, 8), 2000, 16).unwrap();
        let root = dominant_root_default(&QuasiPoly::from_reduced(k, a, 0.1).unwrap()).unwrap();
        assert!((est.value - root.lambda.re).abs() < 1e-3, "{} vs {}", est.value, root.lambda);
    }
}
