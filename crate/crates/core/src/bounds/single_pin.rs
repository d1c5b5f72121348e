//! Admissible pinning delay when a single node is pinned and `tau_r = 0`.
//!
//! For pinned node `q`, purely imaginary roots `j omega` of
//! `1 + c e^{-lambda tau_p} sum_i w_i / (lambda + theta_i) = 0` satisfy
//! `a^2 + b^2 = 1` together with `cos(omega tau_p) = -a`,
//! `sin(omega tau_p) = b`. The bound is the smallest such `tau_p` over all
//! crossing frequencies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::SpectralDecomp;

use super::{BoundDiagnostics, BoundKind, BoundResult};

/// How the per-eigenvalue weights `w_i = xi_i zeta_i` are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w_i = X[q, i] X^{-1}[i, q]`, the exact partial-fraction weights of
    /// `u_q^T (lambda I + L)^{-1} u_q`. Depends on the pinned node.
    #[default]
    Projected,
    /// `w_i = psi^1_i`, the zero-mode left eigenvector paired with the
    /// eigenvalues in sorted order. Independent of the pinned node, but only
    /// exact for vertex-transitive graphs.
    ZeroMode,
}

/// Real eigenvalues with their weights for one pinned node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinSpectrum {
    pub thetas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PinSpectrum {
    pub fn from_decomp(decomp: &SpectralDecomp, mode: WeightMode) -> Result<Self> {
        if decomp.zero_index.is_none() {
            return Err(Error::NotStronglyConnected);
        }
        let (thetas, weights) = match mode {
            WeightMode::Projected => decomp.real_pin_weights()?,
            WeightMode::ZeroMode => decomp.zero_mode_weights()?,
        };
        Ok(Self { thetas, weights })
    }

    pub fn has_negative_weights(&self) -> bool {
        self.weights.iter().any(|&w| w < -1e-12)
    }
}

/// `a(omega) = c sum w_i theta_i / (omega^2 + theta_i^2)` and
/// `b(omega) = c sum w_i omega / (omega^2 + theta_i^2)`, for `omega != 0`.
pub fn a_b_values(omega: f64, c: f64, spec: &PinSpectrum) -> (f64, f64) {
    let w2 = omega * omega;
    let mut a = 0.0;
    let mut b = 0.0;
    for (&t, &w) in spec.thetas.iter().zip(&spec.weights) {
        let d = w2 + t * t;
        a += w * t / d;
        b += w * omega / d;
    }
    (c * a, c * b)
}

/// Smallest `tau > 0` with `cos(omega tau) = -a`, `sin(omega tau) = b`.
fn crossing_delay(omega: f64, a: f64, b: f64) -> f64 {
    let mut angle = b.atan2(-a);
    if angle <= 0.0 {
        angle += 2.0 * std::f64::consts::PI;
    }
    angle / omega
}

pub const OMEGA_MIN: f64 = 1e-8;
const GRID_POINTS: usize = 4096;

/// Single-pin bound with the default (projected) weights.
pub fn single_node_tau_pm(decomp: &SpectralDecomp, c: f64) -> Result<BoundResult> {
    single_node_tau_pm_with(decomp, c, WeightMode::Projected)
}

pub fn single_node_tau_pm_with(
    decomp: &SpectralDecomp,
    c: f64,
    mode: WeightMode,
) -> Result<BoundResult> {
    let spec = PinSpectrum::from_decomp(decomp, mode)?;
    tau_pm_from_spectrum(&spec, c, mode)
}

/// The bound from eigenvalues and weights directly.
///
/// Crossing frequencies are bracketed on a geometric grid over
/// `(OMEGA_MIN, omega_max]`, where
/// `omega_max = c sum|w| (1 + max|theta|) + 1` guarantees `|a| + |b| < 1`
/// beyond it, and bisected to `1e-10` relative width.
pub fn tau_pm_from_spectrum(spec: &PinSpectrum, c: f64, mode: WeightMode) -> Result<BoundResult> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pinning strength {c} must be positive"
        )));
    }
    let g = |omega: f64| {
        let (a, b) = a_b_values(omega, c, spec);
        a * a + b * b - 1.0
    };
    let sum_w: f64 = spec.weights.iter().map(|w| w.abs()).sum();
    let max_theta = spec.thetas.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let omega_max = c * sum_w * (1.0 + max_theta) + 1.0;

    let ratio = (omega_max / OMEGA_MIN).powf(1.0 / (GRID_POINTS - 1) as f64);
    let mut omegas = Vec::new();
    let mut prev_w = OMEGA_MIN;
    let mut prev_g = g(prev_w);
    for i in 1..GRID_POINTS {
        let w = if i == GRID_POINTS - 1 {
            omega_max
        } else {
            OMEGA_MIN * ratio.powi(i as i32)
        };
        let gw = g(w);
        if (prev_g > 0.0) != (gw > 0.0) {
            omegas.push(bisect(&g, prev_w, w, prev_g));
        }
        prev_w = w;
        prev_g = gw;
    }
    if omegas.is_empty() {
        return Err(Error::NoRoot);
    }

    let crossing_taus: Vec<f64> = omegas
        .iter()
        .map(|&w| {
            let (a, b) = a_b_values(w, c, spec);
            crossing_delay(w, a, b)
        })
        .collect();
    let top = *omegas.last().unwrap();
    let (a_top, _) = a_b_values(top, c, spec);
    let max_z_value = (-a_top).clamp(-1.0, 1.0).acos() / top;
    let value = crossing_taus.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(BoundResult {
        value,
        kind: BoundKind::TauPM,
        diagnostics: BoundDiagnostics::TauPM {
            z_set: omegas.iter().map(|w| w * w).collect(),
            crossing_taus,
            max_z_value,
            min_differs: (value - max_z_value).abs() > 1e-9 * max_z_value.abs().max(1e-300),
            negative_weights: spec.has_negative_weights(),
            weight_mode: mode,
        },
    })
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, g_lo: f64) -> f64 {
    let lo_positive = g_lo > 0.0;
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
