//! Characteristic roots of the linearized pinned network.
//!
//! Roots of `chi(lambda) = det(lambda I + K - A e^{-lambda tau_r} + c D e^{-lambda tau_p})`
//! are located by Newton's method on `log chi`, seeded from a rectangular
//! grid and from the eigenvalues of the delay-frozen matrices
//! `-K + A e^{-sigma tau_r} - c D e^{-sigma tau_p}` at a few real `sigma`.
//! Oscillatory modes of pinned nodes are seeded from the Lambert-W roots of
//! the isolated pinned row and followed by nonlinear inverse iteration.
//! Only the closed upper half-plane is searched; the coefficients are real,
//! so roots come in conjugate pairs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::PinningProblem;
use crate::spectral::{eigenvalues, spectral_abscissa};
use crate::verdict::{Method, StabilityVerdict};

type CMatrix = DMatrix<Complex64>;

/// The quasipolynomial data: in-degrees `K`, adjacency `A`, pin indicator `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiPoly {
    pub k: DVector<f64>,
    pub a: DMatrix<f64>,
    pub d: DVector<f64>,
    pub c: f64,
    pub tau_r: f64,
    pub tau_p: f64,
}

impl QuasiPoly {
    pub fn new(
        k: DVector<f64>,
        a: DMatrix<f64>,
        d: DVector<f64>,
        c: f64,
        tau_r: f64,
        tau_p: f64,
    ) -> Result<Self> {
        let n = k.len();
        if a.nrows() != n || a.ncols() != n || d.len() != n {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: K has {n} entries, A is {}x{}, D has {}",
                a.nrows(),
                a.ncols(),
                d.len()
            )));
        }
        for (name, v) in [("c", c), ("tau_r", tau_r), ("tau_p", tau_p)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be nonnegative")));
            }
        }
        Ok(Self { k, a, d, c, tau_r, tau_p })
    }

    pub fn from_problem(p: &PinningProblem) -> Self {
        Self {
            k: p.system.k.clone(),
            a: p.system.a.clone(),
            d: p.pins.indicator(),
            c: p.c,
            tau_r: p.tau_r,
            tau_p: p.tau_p,
        }
    }

    /// Unpinned dynamics `y' = -K y + A y(t - tau_r)`.
    pub fn from_reduced(k: DVector<f64>, a: DMatrix<f64>, tau_r: f64) -> Result<Self> {
        let n = k.len();
        Self::new(k, a, DVector::zeros(n), 0.0, tau_r, 0.0)
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }

    fn has_coupling(&self) -> bool {
        self.a.iter().any(|&x| x != 0.0)
    }

    fn has_pinning(&self) -> bool {
        self.c > 0.0 && self.d.iter().any(|&x| x != 0.0)
    }

    /// True when `chi` is an ordinary polynomial.
    pub fn is_delay_free(&self) -> bool {
        (self.tau_r == 0.0 || !self.has_coupling()) && (self.tau_p == 0.0 || !self.has_pinning())
    }

    /// `1 + ||K||_inf + ||A||_inf + c`, the scale used to normalize residuals.
    pub fn scale(&self) -> f64 {
        let k = self.k.amax();
        let a = self.a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        1.0 + k + a + self.c
    }

    /// `M(lambda)`, the matrix whose determinant is `chi`.
    pub fn matrix(&self, lambda: Complex64) -> CMatrix {
        let n = self.n();
        let er = (-lambda * self.tau_r).exp();
        let ep = (-lambda * self.tau_p).exp() * self.c;
        CMatrix::from_fn(n, n, |i, j| {
            let mut m = -er * self.a[(i, j)];
            if i == j {
                m += lambda + self.k[i] + ep * self.d[i];
            }
            m
        })
    }

    /// `M'(lambda) = I + tau_r A e^{-lambda tau_r} - c tau_p D e^{-lambda tau_p}`.
    pub fn matrix_derivative(&self, lambda: Complex64) -> CMatrix {
        let n = self.n();
        let er = (-lambda * self.tau_r).exp() * self.tau_r;
        let ep = (-lambda * self.tau_p).exp() * self.c * self.tau_p;
        CMatrix::from_fn(n, n, |i, j| {
            let mut m = er * self.a[(i, j)];
            if i == j {
                m += Complex64::new(1.0, 0.0) - ep * self.d[i];
            }
            m
        })
    }

    /// Real matrix `-K + A e^{-sigma tau_r} - c D e^{-sigma tau_p}`, whose
    /// eigenvalues are the roots when both delays vanish.
    pub fn frozen_matrix(&self, sigma: f64) -> DMatrix<f64> {
        let n = self.n();
        let er = (-sigma * self.tau_r).exp();
        let ep = (-sigma * self.tau_p).exp() * self.c;
        DMatrix::from_fn(n, n, |i, j| {
            let mut m = er * self.a[(i, j)];
            if i == j {
                m -= self.k[i] + ep * self.d[i];
            }
            m
        })
    }
}

/// `chi(lambda)` by complex LU with partial pivoting.
pub fn chi(qp: &QuasiPoly, lambda: Complex64) -> Complex64 {
    if qp.n() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    qp.matrix(lambda).lu().determinant()
}

/// `chi'(lambda) / chi(lambda) = trace(M^{-1} M')`.
pub fn chi_log_derivative(qp: &QuasiPoly, lambda: Complex64) -> Result<Complex64> {
    Workspace::new(qp.n()).log_derivative(qp, lambda)
}

/// Reusable buffers for [`chi_log_derivative`]; Newton calls it thousands
/// of times on small matrices, where allocation would dominate.
struct Workspace {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    col: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            n,
            lu: vec![Complex64::new(0.0, 0.0); n * n],
            perm: vec![0; n],
            col: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// LU of `M(lambda)` with partial pivoting, `P M = L U`, in place.
    fn factor(&mut self, qp: &QuasiPoly, lambda: Complex64) -> Result<()> {
        let n = self.n;
        let singular = Error::SingularAtPoint { re: lambda.re, im: lambda.im };
        let er = (-lambda * qp.tau_r).exp();
        let ep = (-lambda * qp.tau_p).exp() * qp.c;
        // row-major M
        for i in 0..n {
            for j in 0..n {
                let mut m = -er * qp.a[(i, j)];
                if i == j {
                    m += lambda + qp.k[i] + ep * qp.d[i];
                }
                self.lu[i * n + j] = m;
            }
        }
        for (i, p) in self.perm.iter_mut().enumerate() {
            *p = i;
        }
        for k in 0..n {
            let mut piv = k;
            let mut best = self.lu[k * n + k].norm_sqr();
            for r in k + 1..n {
                let v = self.lu[r * n + k].norm_sqr();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(singular);
            }
            if piv != k {
                for j in 0..n {
                    self.lu.swap(k * n + j, piv * n + j);
                }
                self.perm.swap(k, piv);
            }
            let inv = self.lu[k * n + k].inv();
            for r in k + 1..n {
                let f = self.lu[r * n + k] * inv;
                self.lu[r * n + k] = f;
                if f != Complex64::new(0.0, 0.0) {
                    for j in k + 1..n {
                        let u = self.lu[k * n + j];
                        self.lu[r * n + j] -= f * u;
                    }
                }
            }
        }
        Ok(())
    }

    /// Forward and back substitution on an already permuted right-hand side.
    fn substitute(&self, x: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: Complex64 = row.iter().zip(&x[..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: Complex64 = row.iter().zip(&x[i + 1..]).map(|(u, y)| u * y).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
    }

    /// `M(lambda)^{-1} b` after [`Workspace::factor`].
    fn solve(&mut self, b: &[Complex64]) -> Vec<Complex64> {
        for i in 0..self.n {
            self.col[i] = b[self.perm[i]];
        }
        let mut x = std::mem::take(&mut self.col);
        self.substitute(&mut x);
        let out = x.clone();
        self.col = x;
        out
    }

    fn log_derivative(&mut self, qp: &QuasiPoly, lambda: Complex64) -> Result<Complex64> {
        let n = self.n;
        self.factor(qp, lambda)?;
        // trace(M^{-1} M') with M' = I + tau_r e^{-lambda tau_r} A - c tau_p e^{-lambda tau_p} D
        let er = (-lambda * qp.tau_r).exp();
        let ep = (-lambda * qp.tau_p).exp() * qp.c;
        let da = er * qp.tau_r;
        let dp = ep * qp.tau_p;
        let mut trace = Complex64::new(0.0, 0.0);
        let mut col = std::mem::take(&mut self.col);
        for j in 0..n {
            // column j of M', permuted
            for (i, slot) in col.iter_mut().enumerate() {
                let r = self.perm[i];
                let mut v = da * qp.a[(r, j)];
                if r == j {
                    v += Complex64::new(1.0, 0.0) - dp * qp.d[r];
                }
                *slot = v;
            }
            self.substitute(&mut col);
            trace += col[j];
        }
        self.col = col;
        if !trace.is_finite() {
            return Err(Error::SingularAtPoint { re: lambda.re, im: lambda.im });
        }
        Ok(trace)
    }
}

/// `1 / (||M(lambda)^{-1}||_F (scale + |lambda|))`: within a factor
/// `sqrt(n)` of the smallest singular value of `M`, relative to the size of
/// the problem. Zero when `M` is exactly singular.
pub fn normalized_residual(qp: &QuasiPoly, lambda: Complex64) -> f64 {
    let m = qp.matrix(lambda);
    if m.iter().any(|z| !z.is_finite()) {
        return f64::INFINITY;
    }
    let inv_norm = match m.lu().try_inverse() {
        Some(inv) => inv.norm(),
        None => return 0.0,
    };
    if !inv_norm.is_finite() {
        return 0.0;
    }
    1.0 / (inv_norm * (qp.scale() + lambda.norm()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexRoot {
    pub lambda: Complex64,
    /// See [`normalized_residual`].
    pub residual: f64,
    /// How many Newton runs converged onto this root.
    pub multiplicity_hint: usize,
}

/// Search rectangle `[sigma_lo, sigma_hi] x [0, omega_max]` and seeding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpec {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub omega_max: f64,
    /// Grid points per side; zero keeps only the frozen-delay seeds.
    pub grid: usize,
    /// Reach `grid` by doubling from `grid / 4`, continuing up to `4 grid`
    /// until the dominant root repeats within `1e-8` twice in a row.
    pub refine: bool,
}

/// Residual acceptance threshold for [`ComplexRoot::residual`].
pub const ACCEPT_RESIDUAL: f64 = 1e-8;
/// Roots closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-6;
const NEWTON_MAX: usize = 50;
const MAX_REFINE: usize = 2;
/// Lambert branches per pinned in-degree used as seeds.
const LAMBERT_BRANCHES: i64 = 4;

impl SearchSpec {
    /// Default rectangle.
    ///
    /// Every root satisfies `|lambda + K_i + c d_i e^{-lambda tau_p}| <= K_i e^{-Re lambda tau_r}`
    /// for some row `i`. For `Re lambda >= 0` this gives `Re lambda <= c`,
    /// so `sigma_hi = c + 1`. With `sigma_lo = -(2 max K + c) - 1`, roots in
    /// the strip have `|Im lambda| <= max_i (K_i e^{-sigma_lo tau_r} + K_i + c e^{-sigma_lo tau_p})`;
    /// the grid covers `2(max K + c) + 2 pi / max(tau_r, tau_p, 1)`, and the
    /// frozen-delay seeds reach the rest of the strip.
    pub fn default_for(qp: &QuasiPoly) -> Self {
        let kmax = qp.k.iter().copied().fold(0.0, f64::max);
        let tau = qp.tau_r.max(qp.tau_p).max(1.0);
        let n = qp.n();
        let grid = if n <= 12 {
            60
        } else if n <= 40 {
            16
        } else {
            0
        };
        Self {
            sigma_lo: -(2.0 * kmax + qp.c) - 1.0,
            sigma_hi: qp.c + 1.0,
            omega_max: 2.0 * (kmax + qp.c) + 2.0 * std::f64::consts::PI / tau,
            grid,
            refine: n <= 12,
        }
    }

    /// Seeds for Newton on `log chi`, and seeds with the row they live on
    /// for branch-following inverse iteration.
    fn seeds(&self, qp: &QuasiPoly, grid: usize) -> (Vec<Complex64>, Vec<(Complex64, usize)>) {
        let mut seeds = Vec::new();
        if grid > 0 {
            let g1 = (grid - 1).max(1) as f64;
            for i in 0..grid {
                let re = self.sigma_lo + (self.sigma_hi - self.sigma_lo) * i as f64 / g1;
                for j in 0..grid {
                    seeds.push(Complex64::new(re, self.omega_max * j as f64 / g1));
                }
            }
        }
        let mid = 0.5 * (self.sigma_lo + self.sigma_hi);
        let mut sigmas = vec![self.sigma_hi, 0.0, mid, self.sigma_lo];
        sigmas.dedup();
        for sigma in sigmas {
            // a failed decomposition only costs seeds
            if let Ok(evs) = eigenvalues(&qp.frozen_matrix(sigma)) {
                seeds.extend(evs.iter().map(|ev| Complex64::new(ev.re, ev.im.abs())));
            }
        }
        // oscillatory pinned-node modes, which real sigma never reaches:
        // roots of the isolated row lambda + K_i + c e^{-lambda tau_p} = 0
        // are -K_i + W_k(-c tau_p e^{K_i tau_p}) / tau_p
        let mut branch = Vec::new();
        if qp.has_pinning() && qp.tau_p > 0.0 {
            let mut rows: Vec<usize> = (0..qp.n()).filter(|&i| qp.d[i] != 0.0).collect();
            rows.sort_by(|&i, &j| qp.k[i].total_cmp(&qp.k[j]));
            rows.dedup_by(|i, j| qp.k[*i] == qp.k[*j]);
            for row in rows {
                let ki = qp.k[row];
                let z = Complex64::new(-qp.c * qp.tau_p * (ki * qp.tau_p).exp(), 0.0);
                for k in 0..LAMBERT_BRANCHES {
                    if let Ok(w) = crate::bounds::lambert_w(k, z) {
                        let seed = w / qp.tau_p - ki;
                        let seed = Complex64::new(seed.re, seed.im.abs());
                        if !escaped(seed, self) {
                            branch.push((seed, row));
                        }
                    }
                }
            }
        }
        (seeds, branch)
    }
}

/// The box a root search may wander in before the run is abandoned.
fn escaped(z: Complex64, spec: &SearchSpec) -> bool {
    let width = spec.sigma_hi - spec.sigma_lo;
    let (re_lo, re_hi) = (spec.sigma_lo - 0.5 * width - 1.0, spec.sigma_hi + 1.0);
    !z.is_finite() || z.re < re_lo || z.re > re_hi || z.im.abs() > 1.5 * spec.omega_max + 10.0
}

fn dot(u: &[Complex64], x: &[Complex64]) -> Complex64 {
    u.iter().zip(x).map(|(a, b)| a.conj() * b).sum()
}

/// Nonlinear inverse iteration on `M(lambda) v = 0`. It follows the
/// eigenvector as well as `lambda`, so it stays near its seed where Newton
/// on `log chi` would be pulled around by the other `n - 1` roots.
fn inverse_iteration(qp: &QuasiPoly, seed: Complex64, row: usize, spec: &SearchSpec) -> Option<Complex64> {
    let n = qp.n();
    let max_step = 1.0f64.max(0.25 * (spec.sigma_hi - spec.sigma_lo));
    let mut work = Workspace::new(n);
    let mut lambda = seed;
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    v[row] = Complex64::new(1.0, 0.0);
    let u = v.clone();
    for _ in 0..NEWTON_MAX {
        if work.factor(qp, lambda).is_err() {
            return Some(lambda);
        }
        let deriv = qp.matrix_derivative(lambda);
        let dv: Vec<Complex64> = (0..n).map(|i| (0..n).map(|j| deriv[(i, j)] * v[j]).sum()).collect();
        let x = work.solve(&dv);
        let denom = dot(&u, &x);
        if denom.norm() == 0.0 || !denom.is_finite() {
            return None;
        }
        let mut step = dot(&u, &v) / denom;
        let len = step.norm();
        if len > max_step {
            step *= max_step / len;
        }
        lambda -= step;
        v = x.into_iter().map(|z| z / denom).collect();
        if escaped(lambda, spec) {
            return None;
        }
        if step.norm() <= 1e-13 * (1.0 + lambda.norm()) {
            return Some(lambda);
        }
    }
    None
}

fn newton(qp: &QuasiPoly, seed: Complex64, spec: &SearchSpec) -> Option<Complex64> {
    let max_step = 1.0f64.max(0.25 * (spec.sigma_hi - spec.sigma_lo));
    let mut work = Workspace::new(qp.n());
    let mut z = seed;
    for _ in 0..NEWTON_MAX {
        let ld = match work.log_derivative(qp, z) {
            Ok(v) => v,
            // exactly on a root
            Err(Error::SingularAtPoint { .. }) => return Some(z),
            Err(_) => return None,
        };
        if ld.norm() == 0.0 {
            return None;
        }
        let mut step = ld.inv();
        let len = step.norm();
        if len > max_step {
            step *= max_step / len;
        }
        z -= step;
        // iterates that leave a generous neighbourhood of the rectangle are
        // heading for roots nobody asked about
        if escaped(z, spec) {
            return None;
        }
        if step.norm() <= 1e-13 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    None
}

fn snap(z: Complex64) -> Complex64 {
    let im = if z.im.abs() <= 1e-10 * (1.0 + z.re.abs()) { 0.0 } else { z.im.abs() };
    Complex64::new(z.re, im)
}

/// Sort key: descending real part, then ascending imaginary part.
fn root_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im))
}

fn delay_free_roots(qp: &QuasiPoly) -> Result<Vec<ComplexRoot>> {
    let mut evs: Vec<Complex64> = eigenvalues(&qp.frozen_matrix(0.0))?
        .iter()
        .filter(|z| z.im >= -1e-12)
        .map(|z| snap(*z))
        .collect();
    evs.sort_by(root_order);
    Ok(merge(qp, evs.into_iter().map(|z| (z, 1)).collect()))
}

fn merge(qp: &QuasiPoly, sorted: Vec<(Complex64, usize)>) -> Vec<ComplexRoot> {
    let mut out: Vec<ComplexRoot> = Vec::new();
    for (z, count) in sorted {
        if let Some(existing) = out.iter_mut().find(|r| (r.lambda - z).norm() < DEDUP_TOL) {
            existing.multiplicity_hint += count;
        } else {
            out.push(ComplexRoot {
                lambda: z,
                residual: normalized_residual(qp, z),
                multiplicity_hint: count,
            });
        }
    }
    out
}

fn search_once(qp: &QuasiPoly, spec: &SearchSpec, grid: usize) -> Vec<ComplexRoot> {
    let (seeds, branch) = spec.seeds(qp, grid);
    let mut found: Vec<Option<Complex64>> = seeds.par_iter().map(|&s| newton(qp, s, spec)).collect();
    found.extend(branch.par_iter().map(|&(s, row)| inverse_iteration(qp, s, row, spec)).collect::<Vec<_>>());
    let mut roots: Vec<Complex64> = found.into_iter().flatten().map(snap).collect();
    roots.sort_by(root_order);
    // merge runs converging onto the same root before computing residuals
    let mut grouped: Vec<(Complex64, usize)> = Vec::new();
    for z in roots {
        match grouped.last_mut() {
            Some((last, count)) if (*last - z).norm() < DEDUP_TOL => *count += 1,
            _ => grouped.push((z, 1)),
        }
    }
    let mut merged: Vec<ComplexRoot> = merge(qp, grouped)
        .into_iter()
        .filter(|r| r.residual < ACCEPT_RESIDUAL)
        .collect();
    merged.sort_by(|a, b| root_order(&a.lambda, &b.lambda));
    merged
}

/// All roots located by the search, ordered by decreasing real part.
pub fn find_roots(qp: &QuasiPoly, spec: &SearchSpec) -> Result<Vec<ComplexRoot>> {
    if qp.n() == 0 {
        return Err(Error::NoRootFound);
    }
    if qp.is_delay_free() {
        return delay_free_roots(qp);
    }
    let roots = if spec.refine && spec.grid >= 4 {
        // start coarse and double; stop once the dominant root has repeated
        // within 1e-8 over two consecutive doublings and the requested
        // density is reached
        let mut grid = spec.grid / 4;
        let mut roots = search_once(qp, spec, grid);
        let mut agreements = 0;
        for _ in 0..2 + MAX_REFINE {
            grid *= 2;
            let finer = search_once(qp, spec, grid);
            let same = match (roots.first(), finer.first()) {
                (Some(a), Some(b)) => (a.lambda - b.lambda).norm() < 1e-8,
                _ => false,
            };
            agreements = if same { agreements + 1 } else { 0 };
            roots = finer;
            if agreements >= 2 && grid >= spec.grid {
                break;
            }
        }
        roots
    } else {
        search_once(qp, spec, spec.grid)
    };
    if roots.is_empty() {
        return Err(Error::NoRootFound);
    }
    Ok(roots)
}

/// Root with the largest real part. If nothing converges in the rectangle,
/// its lower edge is pushed left up to three times before giving up.
pub fn dominant_root(qp: &QuasiPoly, spec: &SearchSpec) -> Result<ComplexRoot> {
    let mut spec = spec.clone();
    for _ in 0..4 {
        match find_roots(qp, &spec) {
            Ok(roots) => return Ok(roots.into_iter().next().expect("nonempty")),
            Err(Error::NoRootFound) => {
                let width = spec.sigma_hi - spec.sigma_lo;
                spec.sigma_lo -= width;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoRootFound)
}

/// [`dominant_root`] over the default rectangle.
pub fn dominant_root_default(qp: &QuasiPoly) -> Result<ComplexRoot> {
    dominant_root(qp, &SearchSpec::default_for(qp))
}

pub fn verdict_from_root(root: &ComplexRoot) -> StabilityVerdict {
    StabilityVerdict::from_root(root.lambda, Method::CharacteristicRoots)
}

/// Spectral abscissa of the delay-free system, for reference.
pub fn undelayed_abscissa(qp: &QuasiPoly) -> f64 {
    spectral_abscissa(&qp.frozen_matrix(0.0))
}

/// Roots of the monic polynomial `u^n + sum_{i<n} coeffs[i] u^i`, from the
/// eigenvalues of its balanced companion matrix.
pub fn monic_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len();
    if n == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -coeffs[i];
    }
    balance(&mut m);
    let mut roots: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    roots
}

/// Diagonal similarity scaling by powers of two so that row and column norms
/// are comparable.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut col = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    col += m[(j, i)].abs();
                    row += m[(i, j)].abs();
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let total = col + row;
            let mut f = 1.0;
            let mut g = row / radix;
            while col < g {
                f *= radix;
                col *= radix * radix;
            }
            g = row * radix;
            while col > g {
                f /= radix;
                col /= radix * radix;
            }
            if (col + row) / f < 0.95 * total {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    m[(i, j)] *= inv;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, DirectedGraph, PinSet};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn singleton(c: f64, tau_p: f64) -> QuasiPoly {
        QuasiPoly::new(
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0),
            c,
            0.0,
            tau_p,
        )
        .unwrap()
    }

    fn pair(c: f64, tau_r: f64, tau_p: f64) -> QuasiPoly {
        let sys = laplacian(&DirectedGraph::complete(2));
        let pins = PinSet::new([0], 2).unwrap();
        QuasiPoly::new(sys.k, sys.a, pins.indicator(), c, tau_r, tau_p).unwrap()
    }

    fn cplx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn chi_examples() {
        assert_abs_diff_eq!(chi(&singleton(1.3, 0.7), cplx(0.0, 0.0)).re, 1.3, epsilon = 1e-15);
        let mut qp = pair(0.0, 0.4, 0.0);
        assert!(chi(&qp, cplx(0.0, 0.0)).norm() < 1e-15);
        qp.tau_r = 2.0;
        assert!(chi(&qp, cplx(0.0, 0.0)).norm() < 1e-15);
        let v = chi(&pair(1.0, 0.0, 0.0), cplx(0.0, 0.0));
        assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn log_derivative_scalar_formula() {
        let (c, tau) = (1.5, 0.4);
        let qp = singleton(c, tau);
        for x in [-0.3, 0.2, 1.7] {
            let e = (-x * tau).exp();
            let expected = (1.0 - c * tau * e) / (x + c * e);
            let got = chi_log_derivative(&qp, cplx(x, 0.0)).unwrap();
            assert!((got.re - expected).abs() < 1e-12 && got.im.abs() < 1e-12);
        }
    }

    #[test]
    fn log_derivative_trace_of_resolvent() {
        // c = 0, tau_r = 0: d/dlambda log det(lambda I + L) at 1 = trace((I + L)^{-1})
        let qp = pair(0.0, 0.0, 0.0);
        // eigenvalues of L are 0 and 2
        let expected = 1.0 / 1.0 + 1.0 / 3.0;
        let got = chi_log_derivative(&qp, cplx(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(got.re, expected, epsilon = 1e-14);
    }

    #[test]
    fn log_derivative_matches_finite_difference() {
        let g = DirectedGraph::from_edges(
            4,
            &[(1, 0, 1.0), (2, 1, 0.5), (3, 2, 2.0), (0, 3, 1.2), (2, 0, 0.3)],
        )
        .unwrap();
        let sys = laplacian(&g);
        let pins = PinSet::new([0, 2], 4).unwrap();
        let qp = QuasiPoly::new(sys.k, sys.a, pins.indicator(), 1.3, 0.2, 0.45).unwrap();
        let mut rng = crate::graph::seeded_rng(11);
        for _ in 0..20 {
            let z = cplx(
                4.0 * crate::graph::uniform01(&mut rng) - 2.0,
                6.0 * crate::graph::uniform01(&mut rng) - 3.0,
            );
            let h = 1e-6;
            let fd = (chi(&qp, z + h) - chi(&qp, z - h)) / (2.0 * h) / chi(&qp, z);
            let ld = chi_log_derivative(&qp, z).unwrap();
            assert!((fd - ld).norm() < 1e-5 * ld.norm().max(1e-3), "{z}: {fd} vs {ld}");
        }
    }

    #[test]
    fn scalar_roots() {
        let r = dominant_root_default(&singleton(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(r.lambda.re, -1.0, epsilon = 1e-12);
        assert_eq!(verdict_from_root(&r).stability, crate::verdict::Stability::Stable);

        let r = dominant_root_default(&singleton(1.0, PI / 2.0)).unwrap();
        assert!(r.lambda.re.abs() < 1e-8, "{}", r.lambda);
        assert_abs_diff_eq!(r.lambda.im, 1.0, epsilon = 1e-8);
        assert_eq!(verdict_from_root(&r).stability, crate::verdict::Stability::Inconclusive);

        // principal branch: lambda = W_0(-c tau) / tau
        let (c, tau) = (0.8, 0.6);
        let w = crate::bounds::lambert_w(0, cplx(-c * tau, 0.0)).unwrap() / tau;
        let r = dominant_root_default(&singleton(c, tau)).unwrap();
        assert!((r.lambda - cplx(w.re, w.im.abs())).norm() < 1e-10);
    }

    #[test]
    fn consensus_mode_without_pinning() {
        let qp = pair(0.0, 0.3, 0.0);
        let r = dominant_root_default(&qp).unwrap();
        assert!(r.lambda.norm() < 1e-10, "{}", r.lambda);
        assert_eq!(verdict_from_root(&r).stability, crate::verdict::Stability::Inconclusive);
    }

    #[test]
    fn delay_free_matches_abscissa() {
        let qp = pair(1.0, 0.0, 0.0);
        let r = dominant_root_default(&qp).unwrap();
        assert_abs_diff_eq!(r.lambda.re, undelayed_abscissa(&qp), epsilon = 1e-12);
        // L + D = [[2,-1],[-1,1]] has eigenvalues (3 +- sqrt 5)/2
        assert_abs_diff_eq!(r.lambda.re, -(3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn accepted_roots_are_roots() {
        let g = DirectedGraph::from_edges(3, &[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 0.5), (0, 1, 0.8)])
            .unwrap();
        let sys = laplacian(&g);
        let pins = PinSet::new([1], 3).unwrap();
        let qp = QuasiPoly::new(sys.k, sys.a, pins.indicator(), 2.0, 0.5, 0.3).unwrap();
        let roots = find_roots(&qp, &SearchSpec::default_for(&qp)).unwrap();
        let tol = 1e-8 * qp.scale();
        for r in &roots {
            let z = r.lambda;
            assert!(chi(&qp, z).norm() < tol, "{z}: {}", chi(&qp, z).norm());
            assert!(chi(&qp, z.conj()).norm() < tol);
            // delayed Gershgorin discs
            let inside = (0..3).any(|i| {
                let centre = z + qp.k[i] + qp.c * qp.d[i] * (-z * qp.tau_p).exp();
                let radius: f64 = (0..3).map(|j| qp.a[(i, j)]).sum::<f64>() * (-z.re * qp.tau_r).exp();
                centre.norm() <= radius * (1.0 + 1e-9) + 1e-12
            });
            assert!(inside, "{z} outside every disc");
        }
        // deterministic ordering
        assert!(roots.windows(2).all(|w| w[0].lambda.re >= w[1].lambda.re));
    }

    #[test]
    fn large_network_finds_oscillatory_pinned_mode() {
        // above 40 nodes only frozen-delay and Lambert seeds are used
        let n = 48;
        let edges: Vec<(usize, usize, f64)> =
            (0..n).flat_map(|i| [(i, (i + 1) % n, 1.0), ((i + 1) % n, i, 1.0)]).collect();
        let sys = laplacian(&DirectedGraph::from_edges(n, &edges).unwrap());
        let pins = PinSet::new([0], n).unwrap();
        let qp = QuasiPoly::new(sys.k, sys.a, pins.indicator(), 5.0, 0.0, 2.5).unwrap();
        let spec = SearchSpec::default_for(&qp);
        assert_eq!(spec.grid, 0);
        let found = dominant_root(&qp, &spec).unwrap().lambda;
        let dense = SearchSpec { sigma_lo: -1.0, sigma_hi: 2.0, omega_max: 4.0, grid: 12, refine: false };
        let reference = dominant_root(&qp, &dense).unwrap().lambda;
        assert!(reference.re > 0.0);
        assert!((found - reference).norm() < 1e-8, "{found} vs {reference}");
    }

    #[test]
    fn companion_roots() {
        // (u - 1)(u + 2)(u^2 + 1) = u^4 + u^3 - u^2 + u - 2
        let roots = monic_roots(&[-2.0, 1.0, -1.0, 1.0]);
        let expected = [cplx(-2.0, 0.0), cplx(0.0, -1.0), cplx(0.0, 1.0), cplx(1.0, 0.0)];
        for (r, e) in roots.iter().zip(expected) {
            assert!((r - e).norm() < 1e-12, "{r} vs {e}");
        }
        // badly scaled coefficients
        let roots = monic_roots(&[1e-6 * 1e6, -(1e-6 + 1e6)]);
        assert!((roots[0].re - 1e-6).abs() < 1e-15);
        assert!((roots[1].re - 1e6).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(QuasiPoly::new(
            DVector::zeros(2),
            DMatrix::zeros(3, 3),
            DVector::zeros(2),
            1.0,
            0.0,
            0.0
        )
        .is_err());
        assert!(singleton(1.0, 0.0).tau_p == 0.0);
        assert!(QuasiPoly::new(
            DVector::zeros(1),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            -1.0,
            0.0,
            0.0
        )
        .is_err());
    }
}
