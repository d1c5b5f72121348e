//! Complex Lambert W on every branch, and the branch test for networks whose
//! transmission and pinning delays coincide.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::LaplacianSystem;
use crate::spectral::SpectralDecomp;
use crate::verdict::{Method, StabilityVerdict};

use super::single_pin::{PinSpectrum, WeightMode};

const MAX_ITER: usize = 100;
const INV_E: f64 = 1.0 / E;

/// `W_k(z)`: the solution of `w e^w = z` on branch `k`, with the usual
/// branch cuts (`W_0` continuous from above on `(-inf, -1/e)`, the real
/// segment `[-1/e, 0)` belonging to `W_{-1}`).
///
/// The initial guess comes from the branch-point series near `-1/e`, a
/// (2,2) Padé approximant for moderate `z` on the principal branch, and the
/// two-term logarithmic asymptotic elsewhere; Halley iteration finishes.
pub fn lambert_w(k: i64, z: Complex64) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidArgument(format!("W_{k}({z}) of non-finite argument")));
    }
    // signed zero on the imaginary axis would flip the side of the cut
    let z = Complex64::new(z.re, if z.im == 0.0 { 0.0 } else { z.im });
    if z.re == 0.0 && z.im == 0.0 {
        return if k == 0 {
            Ok(Complex64::new(0.0, 0.0))
        } else {
            Err(Error::InvalidArgument(format!("W_{k}(0) is undefined")))
        };
    }

    let near_branch_point = (z + INV_E).norm() < 0.3;
    let mut w = match k {
        0 if near_branch_point => branch_point_series(z, 1.0),
        0 if (-1.0 < z.re && z.re < 1.5)
            && z.im.abs() < 1.0
            && -2.5 * z.im.abs() - 0.2 < z.re =>
        {
            pade0(z)
        }
        -1 if near_branch_point && z.im >= 0.0 => branch_point_series(z, -1.0),
        -1 if z.im == 0.0 && -INV_E < z.re && z.re < 0.0 => {
            let l1 = (-z.re).ln();
            Complex64::new(l1 - (-l1).ln(), 0.0)
        }
        1 if near_branch_point && z.im < 0.0 => branch_point_series(z, -1.0),
        _ => asymptotic(z, k),
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let wew = w * ew;
        let f = wew - z;
        if f.norm() == 0.0 {
            return Ok(w);
        }
        let denom = wew + ew - (w + 2.0) * f / (2.0 * w + 2.0);
        let next = w - f / denom;
        if !(next.re.is_finite() && next.im.is_finite()) {
            break;
        }
        if (next - w).norm() <= 1e-15 * next.norm().max(1e-300) {
            return Ok(next);
        }
        w = next;
    }
    // Halley stalls at the double root w = -1 exactly at the branch point.
    if (w * w.exp() - z).norm() <= 1e-12 * z.norm().max(1.0) {
        return Ok(w);
    }
    Err(Error::NonConvergence {
        what: "Lambert W Halley iteration",
        iterations: MAX_ITER,
    })
}

fn branch_point_series(z: Complex64, sign: f64) -> Complex64 {
    let p = sign * (2.0 * (E * z + 1.0)).sqrt();
    -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)))
}

fn pade0(z: Complex64) -> Complex64 {
    let num = (12.851_063_829_787_234 * z + 12.340_425_531_914_894) * z + 1.0;
    let den = (32.531_914_893_617_02 * z + 14.340_425_531_914_894) * z + 1.0;
    z * num / den
}

fn asymptotic(z: Complex64, k: i64) -> Complex64 {
    let l1 = z.ln() + Complex64::new(0.0, 2.0 * PI * k as f64);
    let l2 = l1.ln();
    l1 - l2 + l2 / l1
}

/// Outcome of the Lambert-branch stability test.
#[derive(Debug, Clone, Serialize)]
pub struct LambertTest {
    pub verdict: StabilityVerdict,
    /// The common degree `l` of the normalized Laplacian.
    pub degree: f64,
    /// Roots `s` of the cleared rational equation.
    pub s_roots: Vec<Complex64>,
    /// `|P(u)|` at each polished root, `u = s e^{-l tau}/tau`.
    pub root_residuals: Vec<f64>,
    /// Largest `|k|` evaluated before every branch fell below the margin.
    pub max_branch: i64,
}

/// Stop expanding branches once `Re W_k(s) < tau l - BRANCH_MARGIN` for all
/// `s`. `Re W_k(s)` decreases in `|k|` (like `-ln(2 pi |k|)`), so every later
/// branch is further left still; a large margin buys nothing but branches.
pub const BRANCH_MARGIN: f64 = 1.0;
const MAX_BRANCH: i64 = 10_000;

/// Stability of a single-pinned, normalized network (`L_ii = l` for all `i`)
/// with `tau_r = tau_p`.
///
/// With `s = tau (lambda + l) e^{tau (lambda + l)}` the characteristic
/// equation becomes the rational equation
/// `1 + c sum_k w_k / (e^{-l tau} s / tau + theta_k - l) = 0`; clearing
/// denominators gives a degree-`n` polynomial. Every characteristic root is
/// then `W_k(s)/tau - l` for some root `s` and branch `k`.
pub fn lambert_stability_test(
    sys: &LaplacianSystem,
    decomp: &SpectralDecomp,
    c: f64,
    tau: f64,
) -> Result<LambertTest> {
    lambert_stability_test_with(sys, decomp, c, tau, WeightMode::Projected)
}

pub fn lambert_stability_test_with(
    sys: &LaplacianSystem,
    decomp: &SpectralDecomp,
    c: f64,
    tau: f64,
    mode: WeightMode,
) -> Result<LambertTest> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("pinning strength {c} must be positive")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("delay {tau} must be positive")));
    }
    let l = sys.common_degree(1e-9).ok_or_else(|| Error::NotNormalized {
        min: sys.k.min(),
        max: sys.k.max(),
    })?;
    let spec = PinSpectrum::from_decomp(decomp, mode)?;

    // P(u) = prod_k (u + beta_k) + c sum_k w_k prod_{j != k} (u + beta_j)
    let betas: Vec<f64> = spec.thetas.iter().map(|t| t - l).collect();
    let n = betas.len();
    let mut poly = vec![1.0];
    for &b in &betas {
        poly = poly_mul_linear(&poly, b);
    }
    for (k, &wk) in spec.weights.iter().enumerate() {
        let mut term = vec![1.0];
        for (j, &b) in betas.iter().enumerate() {
            if j != k {
                term = poly_mul_linear(&term, b);
            }
        }
        for (i, t) in term.iter().enumerate() {
            poly[i] += c * wk * t;
        }
    }
    // poly[i] is the coefficient of u^i; poly[n] == 1

    let mut u_roots = crate::charroots::monic_roots(&poly[..n]);
    let mut residuals = Vec::with_capacity(n);
    for u in u_roots.iter_mut() {
        for _ in 0..8 {
            let (p, dp) = horner(&poly, *u);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            *u -= step;
            if step.norm() <= 1e-15 * u.norm().max(1.0) {
                break;
            }
        }
        residuals.push(horner(&poly, *u).0.norm());
    }

    let scale = tau * (l * tau).exp();
    let s_roots: Vec<Complex64> = u_roots.iter().map(|u| u * scale).collect();

    let threshold = tau * l - BRANCH_MARGIN;
    let mut best = Complex64::new(f64::NEG_INFINITY, 0.0);
    let mut consider = |w: Complex64| {
        let lambda = w / tau - l;
        if lambda.re > best.re || (lambda.re == best.re && lambda.im.abs() > best.im.abs()) {
            best = lambda;
        }
    };
    let mut max_branch = 0;
    for &s in &s_roots {
        consider(lambert_w(0, s)?);
    }
    for k in 1..=MAX_BRANCH {
        max_branch = k;
        let mut all_below = true;
        for &s in &s_roots {
            if s.norm() == 0.0 {
                continue;
            }
            for branch in [k, -k] {
                let w = lambert_w(branch, s)?;
                if w.re >= threshold {
                    all_below = false;
                }
                consider(w);
            }
        }
        if all_below {
            break;
        }
        if k == MAX_BRANCH {
            return Err(Error::NonConvergence {
                what: "Lambert branch expansion",
                iterations: MAX_BRANCH as usize,
            });
        }
    }
    // report the upper half-plane member of a conjugate pair
    let best = Complex64::new(best.re, best.im.abs());

    Ok(LambertTest {
        verdict: StabilityVerdict::from_root(best, Method::LambertBranches),
        degree: l,
        s_roots,
        root_residuals: residuals,
        max_branch,
    })
}

fn poly_mul_linear(p: &[f64], b: f64) -> Vec<f64> {
    // (sum p_i u^i) (u + b)
    let mut out = vec![0.0; p.len() + 1];
    for (i, &pi) in p.iter().enumerate() {
        out[i] += pi * b;
        out[i + 1] += pi;
    }
    out
}

fn horner(p: &[f64], u: Complex64) -> (Complex64, Complex64) {
    let mut val = Complex64::new(0.0, 0.0);
    let mut der = Complex64::new(0.0, 0.0);
    for &coef in p.iter().rev() {
        der = der * u + val;
        val = val * u + coef;
    }
    (val, der)
}
