//! Admissible pinning-delay bounds.
//!
//! [`tau_p_star`] is delay-independent in `tau_r`: below it the pinned
//! network is stable for every reception delay. [`single_pin`] handles one
//! pinned node with `tau_r = 0`, and [`lambert`] decides stability exactly
//! when both delays coincide on a degree-normalized graph.

pub mod lambert;
pub mod single_pin;

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{LaplacianSystem, PinSet};
use crate::verdict::StabilityVerdict;

pub use lambert::{lambert_stability_test, lambert_stability_test_with, lambert_w, LambertTest};
pub use single_pin::{a_b_values, single_node_tau_pm, single_node_tau_pm_with, PinSpectrum, WeightMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    TauPStar,
    TauPM,
    LambertVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundDiagnostics {
    TauPStar {
        /// Frequency at which `F` first touches zero.
        omega_star: f64,
        /// `min_omega F` evaluated at the returned delay (zero up to rounding).
        f_star: f64,
        /// In-degree whose per-degree bound is smallest.
        binding_degree: f64,
        /// `(degree, bound)` for each distinct pinned in-degree.
        per_degree: Vec<(f64, f64)>,
        /// True when the bound exceeded `TAU_STAR_CAP_FACTOR / c` and was reported as infinite.
        capped: bool,
    },
    TauPM {
        /// Squared crossing frequencies, ascending.
        z_set: Vec<f64>,
        /// Smallest crossing delay for each member of `z_set`.
        crossing_taus: Vec<f64>,
        /// `arccos(-a) / omega` at the largest crossing frequency.
        max_z_value: f64,
        /// The largest crossing frequency does not give the smallest delay.
        min_differs: bool,
        /// Some weight is negative, so the closed form carries no sign guarantee.
        negative_weights: bool,
        weight_mode: WeightMode,
    },
    LambertVerdict {
        verdict: StabilityVerdict,
        s_roots: Vec<num_complex::Complex64>,
        max_branch: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    /// Delay bound, or the tested delay for a Lambert verdict. May be `+inf`.
    pub value: f64,
    pub kind: BoundKind,
    pub diagnostics: BoundDiagnostics,
}

impl LambertTest {
    pub fn into_bound_result(self, tau: f64) -> BoundResult {
        BoundResult {
            value: tau,
            kind: BoundKind::LambertVerdict,
            diagnostics: BoundDiagnostics::LambertVerdict {
                verdict: self.verdict,
                s_roots: self.s_roots,
                max_branch: self.max_branch,
            },
        }
    }
}

/// `F(omega) = c^2 + omega^2 + 2c (l cos(omega tau) - omega sin(omega tau))`.
///
/// `F(omega) = |c + (l + j omega) e^{j omega tau}|^2 - l^2`, and its zeros are
/// where a pinned row's Gershgorin-type estimate can reach the imaginary axis.
pub fn f_value(omega: f64, c: f64, l: f64, tau: f64) -> f64 {
    let (s, co) = (omega * tau).sin_cos();
    c * c + omega * omega + 2.0 * c * (l * co - omega * s)
}

const F_GRID: usize = 4096;

/// Global minimum of [`f_value`] over all real frequencies.
///
/// `F >= omega^2 - 2c|omega| - 2cl + c^2`, so nothing below zero can lie
/// outside `|omega| <= 2c + 2 sqrt(c max(l, 1)) + c l tau + 1`. `F` is even
/// in `omega`, so only the nonnegative half is scanned; each interior grid
/// minimum is refined by golden-section search.
pub fn min_f_over_omega(c: f64, l: f64, tau: f64) -> (f64, f64) {
    let big = 2.0 * c + 2.0 * (c * l.max(1.0)).sqrt() + c * l * tau + 1.0;
    let f = |w: f64| f_value(w, c, l, tau);
    let h = big / (F_GRID - 1) as f64;
    let vals: Vec<f64> = (0..F_GRID).map(|i| f(i as f64 * h)).collect();

    let mut best = (0.0, vals[0]);
    for i in 0..F_GRID {
        let left = if i == 0 { f64::INFINITY } else { vals[i - 1] };
        let right = if i + 1 == F_GRID { f64::INFINITY } else { vals[i + 1] };
        if vals[i] <= left && vals[i] <= right {
            let lo = (i as f64 - 1.0).max(0.0) * h;
            let hi = ((i + 1) as f64 * h).min(big);
            let (w, v) = golden_min(&f, lo, hi, 1e-13 * big.max(1.0));
            let (w, v) = if v <= vals[i] { (w, v) } else { (i as f64 * h, vals[i]) };
            if v < best.1 {
                best = (w, v);
            }
        }
    }
    best
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Bounds above `TAU_STAR_CAP_FACTOR / c` are reported as `+inf`.
pub const TAU_STAR_CAP_FACTOR: f64 = 1e3;

/// First delay at which `F(omega; c, l, tau)` reaches zero for some `omega`,
/// with the frequency where it does.
///
/// Writing `l + j omega = r e^{j phi}`, `F = 0` reads
/// `cos(omega tau + phi) = -(c^2 + omega^2) / (2 c r)`, which is solvable
/// only for `omega^2` in `[c^2 - 2cl, c^2 + 2cl]`. The first zero for a given
/// frequency is `(arccos(-rho) - phi) / omega`; the bound minimizes this over
/// the admissible band.
pub fn degree_bound(c: f64, l: f64) -> (f64, f64) {
    let crossing = |w: f64| {
        let r = l.hypot(w);
        let rho = ((c * c + w * w) / (2.0 * c * r)).min(1.0);
        ((-rho).acos() - w.atan2(l)) / w
    };
    let lo = (c * c - 2.0 * c * l).max(0.0).sqrt();
    let hi = (c * c + 2.0 * c * l).sqrt();
    if hi - lo <= 1e-12 * c {
        let w = 0.5 * (lo + hi);
        return (crossing(w), w);
    }
    // the crossing time blows up as omega -> 0, so start just inside the band
    let lo = lo.max(hi * 1e-9);
    let h = (hi - lo) / (F_GRID - 1) as f64;
    let vals: Vec<f64> = (0..F_GRID).map(|i| crossing(lo + i as f64 * h)).collect();
    let imin = (0..F_GRID)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap();
    let a = lo + (imin as f64 - 1.0).max(0.0) * h;
    let b = (lo + (imin + 1) as f64 * h).min(hi);
    let (w, t) = golden_min(&crossing, a, b, 1e-14 * hi);
    if t <= vals[imin] {
        (t, w)
    } else {
        (vals[imin], lo + imin as f64 * h)
    }
}

/// Delay-independent bound over the pinned in-degrees.
pub fn tau_p_star(c: f64, pinned_degrees: &[f64]) -> Result<BoundResult> {
    if pinned_degrees.is_empty() {
        return Err(Error::EmptyPinSet);
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pinning strength {c} must be positive"
        )));
    }
    if let Some(&l) = pinned_degrees.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!("in-degree {l} must be nonnegative")));
    }
    let mut distinct: Vec<f64> = pinned_degrees.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    let mut per_degree = Vec::with_capacity(distinct.len());
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &l in &distinct {
        let (tau, w) = degree_bound(c, l);
        per_degree.push((l, tau));
        if tau < best.0 {
            best = (tau, w, l);
        }
    }
    let (mut value, omega_star, binding_degree) = best;
    let f_star = f_value(omega_star, c, binding_degree, value);
    let capped = value > TAU_STAR_CAP_FACTOR / c;
    if capped {
        value = f64::INFINITY;
    }
    Ok(BoundResult {
        value,
        kind: BoundKind::TauPStar,
        diagnostics: BoundDiagnostics::TauPStar {
            omega_star,
            f_star,
            binding_degree,
            per_degree,
            capped,
        },
    })
}

/// [`tau_p_star`] with the in-degrees of the pinned nodes read from the system.
pub fn tau_p_star_for(sys: &LaplacianSystem, pins: &PinSet, c: f64) -> Result<BoundResult> {
    let degrees: Vec<f64> = pins.members().iter().map(|&i| sys.k[i]).collect();
    tau_p_star(c, &degrees)
}

/// The scalar benchmark `pi / (2c)`: `y' = -c y(t - tau)` is stable exactly below it.
pub fn scalar_boundary(c: f64) -> f64 {
    PI / (2.0 * c)
}
