//! Eigendecomposition of the Laplacian with paired left/right eigenvectors.
//!
//! Right eigenvectors are the columns of `X`; left eigenvectors are the rows
//! of `X^{-1}`, so `(zeta^i)^T xi^j = delta_ij` holds by construction, even
//! inside repeated eigenvalues. Clusters of (numerically) equal eigenvalues
//! get their eigenvectors from the null space of `L - theta I`; a cluster
//! whose null space is too small means `L` is defective.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{LaplacianSystem, PinSet};

/// Eigenvector-matrix condition number above which `L` is treated as
/// non-diagonalizable.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Relative tolerance (times `max(1, ||L||)`) for snapping eigenvalues to
/// zero and imaginary parts to zero.
pub const ZERO_TOL: f64 = 1e-9;

/// Relative tolerance for grouping eigenvalues into one cluster.
const CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecomp {
    /// Eigenvalues sorted by real part, then imaginary part.
    pub thetas: Vec<Complex64>,
    /// Column `i` is the right eigenvector for `thetas[i]`.
    pub right: DMatrix<Complex64>,
    /// Row `i` is the left eigenvector for `thetas[i]`; `left * right = I`.
    pub left: DMatrix<Complex64>,
    /// Index of the zero eigenvalue when it is simple.
    pub zero_index: Option<usize>,
    pub zero_multiplicity: usize,
    pub real_spectrum: bool,
    /// `||X|| ||X^{-1}||` in the Frobenius norm.
    pub condition: f64,
    /// Node whose projections `xi = X u_q`-row and `zeta = X^{-1} u_q` are exposed.
    pub pinned_node: usize,
}

impl SpectralDecomp {
    pub fn n(&self) -> usize {
        self.thetas.len()
    }

    pub fn max_imag(&self) -> f64 {
        self.thetas.iter().map(|t| t.im.abs()).fold(0.0, f64::max)
    }

    /// Componentwise products `xi_i zeta_i = X[q, i] X^{-1}[i, q]` for the
    /// pinned node `q`. They sum to one and are exactly the weights in the
    /// partial-fraction expansion
    /// `u_q^T (lambda I + L)^{-1} u_q = sum_i w_i / (lambda + theta_i)`.
    pub fn pin_products(&self) -> Vec<Complex64> {
        let q = self.pinned_node;
        (0..self.n())
            .map(|i| self.right[(q, i)] * self.left[(i, q)])
            .collect()
    }

    /// Real eigenvalues and real pin weights, or `ComplexSpectrum`.
    pub fn real_pin_weights(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.real_spectrum {
            return Err(Error::ComplexSpectrum {
                max_imag: self.max_imag(),
            });
        }
        let thetas = self.thetas.iter().map(|t| t.re).collect();
        let weights = self.pin_products().iter().map(|w| w.re).collect();
        Ok((thetas, weights))
    }

    /// Weights taken from the zero mode alone: `phi^1_i psi^1_i = psi^1_i`,
    /// paired with the eigenvalues in sorted order. This reading makes the
    /// single-pin bound independent of the pinned node, but the resulting
    /// sum is not `u_q^T (lambda I + L)^{-1} u_q` for a general graph.
    pub fn zero_mode_weights(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.zero_index.ok_or(Error::NotStronglyConnected)?;
        if !self.real_spectrum {
            return Err(Error::ComplexSpectrum {
                max_imag: self.max_imag(),
            });
        }
        let thetas = self.thetas.iter().map(|t| t.re).collect();
        let weights = (0..self.n())
            .map(|k| (self.right[(k, z)] * self.left[(z, k)]).re)
            .collect();
        Ok((thetas, weights))
    }

    /// `max_i |L xi^i - theta_i xi^i|` and the same for the left vectors.
    pub fn residuals(&self, l: &DMatrix<f64>) -> (f64, f64) {
        let lc = l.map(|v| Complex64::new(v, 0.0));
        let mut right = 0.0f64;
        let mut left = 0.0f64;
        for i in 0..self.n() {
            let x = self.right.column(i);
            let r = &lc * x - x * self.thetas[i];
            right = right.max(r.camax());
            let z = self.left.row(i);
            let r = z * &lc - z * self.thetas[i];
            left = left.max(r.camax());
        }
        (right, left)
    }

    /// `max |Z X - I|`.
    pub fn biorthonormality_error(&self) -> f64 {
        let n = self.n();
        let p = &self.left * &self.right;
        (p - DMatrix::<Complex64>::identity(n, n)).camax()
    }
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Eigendecomposition of `L` with left eigenvectors paired to right ones.
///
/// Errors with `NonDiagonalizable` when an eigenvalue cluster lacks a full
/// set of eigenvectors or when the eigenvector matrix is ill-conditioned.
pub fn eigendecompose(sys: &LaplacianSystem, pinned_node: usize) -> Result<SpectralDecomp> {
    let l = &sys.l;
    let n = l.nrows();
    if pinned_node >= n {
        return Err(Error::IndexOutOfRange {
            index: pinned_node,
            n,
        });
    }
    let scale = l.norm().max(1.0);

    let (mut thetas, mut right) = if l == &l.transpose() {
        let eig = SymmetricEigen::new(l.clone());
        let thetas: Vec<Complex64> = eig
            .eigenvalues
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        (thetas, to_complex(&eig.eigenvectors))
    } else {
        general_eigenvectors(l, scale)?
    };

    // sort by (Re, Im)
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        thetas[a]
            .re
            .total_cmp(&thetas[b].re)
            .then(thetas[a].im.total_cmp(&thetas[b].im))
    });
    thetas = order.iter().map(|&i| thetas[i]).collect();
    right = DMatrix::from_fn(n, n, |r, c| right[(r, order[c])]);

    let mut zeros = Vec::new();
    for (i, t) in thetas.iter_mut().enumerate() {
        if t.im.abs() < ZERO_TOL * scale {
            t.im = 0.0;
        }
        if t.norm() < ZERO_TOL * scale {
            *t = Complex64::new(0.0, 0.0);
            zeros.push(i);
        }
    }
    let real_spectrum = thetas.iter().all(|t| t.im == 0.0);

    // Normalize: the zero eigenvector is scaled to the all-ones vector,
    // every other column to unit length with its largest entry real.
    for i in 0..n {
        let mut col = right.column_mut(i);
        if zeros.len() == 1 && zeros[0] == i {
            let mean = col.iter().sum::<Complex64>() / n as f64;
            if mean.norm() > 0.0 {
                col /= mean;
            }
        } else {
            let (imax, _) = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap();
            let phase = col[imax] / col[imax].norm();
            let norm = col.norm();
            col /= phase * norm;
        }
        if thetas[i].im == 0.0 {
            for v in col.iter_mut() {
                if v.im.abs() < 1e-13 * v.norm().max(1.0) {
                    v.im = 0.0;
                }
            }
        }
    }

    let left = right.clone().try_inverse().ok_or(Error::NonDiagonalizable {
        condition: f64::INFINITY,
    })?;
    let condition = right.norm() * left.norm();
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::NonDiagonalizable { condition });
    }

    Ok(SpectralDecomp {
        thetas,
        right,
        left,
        zero_index: (zeros.len() == 1).then(|| zeros[0]),
        zero_multiplicity: zeros.len(),
        real_spectrum,
        condition,
        pinned_node,
    })
}

/// Eigenvalues from the real Schur form, eigenvectors from per-cluster
/// null spaces of `L - theta I`.
fn general_eigenvectors(
    l: &DMatrix<f64>,
    scale: f64,
) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = l.nrows();
    let raw: Vec<Complex64> = l.complex_eigenvalues().iter().copied().collect();

    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for t in raw {
        match clusters
            .iter_mut()
            .find(|c| (c[0] - t).norm() < CLUSTER_TOL * scale)
        {
            Some(c) => c.push(t),
            None => clusters.push(vec![t]),
        }
    }

    let mut thetas = Vec::with_capacity(n);
    let mut cols: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    for cluster in clusters {
        let m = cluster.len();
        let mut center = cluster.iter().sum::<Complex64>() / m as f64;
        if center.im.abs() < ZERO_TOL * scale {
            center.im = 0.0;
        }
        let vecs = if center.im == 0.0 {
            let shifted = l - DMatrix::<f64>::identity(n, n) * center.re;
            null_space_real(shifted, m, scale)?
                .into_iter()
                .map(|v| v.map(|x| Complex64::new(x, 0.0)))
                .collect::<Vec<_>>()
        } else {
            let shifted = to_complex(l) - DMatrix::<Complex64>::identity(n, n) * center;
            null_space_complex(shifted, m, scale)?
        };
        for v in vecs {
            thetas.push(center);
            cols.push(v);
        }
    }
    Ok((thetas, DMatrix::from_columns(&cols)))
}

fn null_space_real(m: DMatrix<f64>, dim: usize, scale: f64) -> Result<Vec<DVector<f64>>> {
    let n = m.nrows();
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let worst = svd.singular_values[idx[dim - 1]];
    if worst > CLUSTER_TOL * scale {
        return Err(Error::NonDiagonalizable {
            condition: f64::INFINITY,
        });
    }
    Ok(idx[..dim]
        .iter()
        .map(|&i| v_t.row(i).transpose())
        .collect())
}

fn null_space_complex(
    m: DMatrix<Complex64>,
    dim: usize,
    scale: f64,
) -> Result<Vec<DVector<Complex64>>> {
    let n = m.nrows();
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let worst = svd.singular_values[idx[dim - 1]];
    if worst > CLUSTER_TOL * scale {
        return Err(Error::NonDiagonalizable {
            condition: f64::INFINITY,
        });
    }
    Ok(idx[..dim]
        .iter()
        .map(|&i| v_t.row(i).adjoint())
        .collect())
}

/// Right and left eigenvectors of the zero Laplacian eigenvalue:
/// `phi = 1` and `psi` with `psi^T L = 0`, `sum psi = 1`.
///
/// Solved directly as a linear system (one redundant equation of
/// `L^T psi = 0` replaced by the normalization), independently of
/// [`eigendecompose`].
pub fn zero_eigvec_pair(sys: &LaplacianSystem) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = sys.n();
    let phi = DVector::from_element(n, 1.0);
    if n == 1 {
        return Ok((phi.clone(), phi));
    }
    let mut m = sys.l.transpose();
    m.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let psi = m.lu().solve(&rhs).ok_or(Error::NotStronglyConnected)?;
    let tol = 1e-12 * sys.l.norm().max(1.0);
    if psi.iter().any(|&v| !(v > tol)) {
        return Err(Error::NotStronglyConnected);
    }
    let residual = (sys.l.transpose() * &psi).amax();
    if residual > 1e-9 * sys.l.norm().max(1.0) {
        return Err(Error::NotStronglyConnected);
    }
    Ok((phi, psi))
}

/// `max Re eig(-(L + c D))`: the decay rate of the undelayed pinned system.
pub fn undelayed_spectral_abscissa(sys: &LaplacianSystem, pins: &PinSet, c: f64) -> f64 {
    let m = -(&sys.l + DMatrix::from_diagonal(&(pins.indicator() * c)));
    spectral_abscissa(&m)
}

/// Eigenvalues of a real square matrix via a real Schur form with an
/// iteration cap (the uncapped QR iteration can cycle on badly scaled input).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let cap = 1000 * m.nrows().max(1);
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, cap).ok_or(
        Error::NonConvergence {
            what: "real Schur decomposition",
            iterations: cap,
        },
    )?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the eigenvalues of a real square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    if m == &m.transpose() {
        return SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{erdos_renyi, laplacian, DirectedGraph};
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetric_pair_products() {
        let sys = laplacian(&DirectedGraph::complete(2));
        let d = eigendecompose(&sys, 0).unwrap();
        assert_abs_diff_eq!(d.thetas[0].re, 0.0);
        assert_abs_diff_eq!(d.thetas[1].re, 2.0, epsilon = 1e-12);
        let w = d.pin_products();
        assert_abs_diff_eq!(w[0].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1].re, 0.5, epsilon = 1e-12);
        assert_eq!(d.zero_index, Some(0));
    }

    #[test]
    fn empty_graph_has_no_unique_zero_pair() {
        let sys = laplacian(&DirectedGraph::empty(2));
        let d = eigendecompose(&sys, 0).unwrap();
        assert_eq!(d.zero_multiplicity, 2);
        assert_eq!(d.zero_index, None);
        assert!(d.zero_mode_weights().is_err());
        assert!(zero_eigvec_pair(&sys).is_err());
    }

    #[test]
    fn products_sum_to_one() {
        let mut seed = 0;
        let g = loop {
            let g = erdos_renyi(5, 0.6, seed).unwrap();
            if crate::graph::is_strongly_connected(&g) {
                break g;
            }
            seed += 1;
        };
        let sys = laplacian(&g);
        for q in 0..5 {
            let d = eigendecompose(&sys, q).unwrap();
            let s: Complex64 = d.pin_products().iter().sum();
            assert_abs_diff_eq!(s.re, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(s.im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn defective_matrix_is_rejected() {
        // 0 -> 1 -> 2 chain has L with eigenvalue 1 of algebraic multiplicity 2
        // but a single eigenvector.
        let sys = laplacian(&DirectedGraph::chain(3));
        assert!(matches!(
            eigendecompose(&sys, 0),
            Err(Error::NonDiagonalizable { .. })
        ));
    }

    #[test]
    fn complete_graph_repeated_eigenvalue() {
        let sys = laplacian(&DirectedGraph::complete(4));
        let d = eigendecompose(&sys, 2).unwrap();
        assert!(d.biorthonormality_error() < 1e-10);
        let (r, l) = d.residuals(&sys.l);
        assert!(r < 1e-10 && l < 1e-10);
        assert_abs_diff_eq!(d.thetas[3].re, 4.0, epsilon = 1e-10);
    }

    #[test]
    fn directed_cycle_complex_spectrum() {
        let g = DirectedGraph::from_edges(3, &[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let sys = laplacian(&g);
        let d = eigendecompose(&sys, 0).unwrap();
        assert!(!d.real_spectrum);
        assert!(d.biorthonormality_error() < 1e-10);
        let (r, l) = d.residuals(&sys.l);
        assert!(r < 1e-10 && l < 1e-10, "{r} {l}");
        assert!(matches!(d.real_pin_weights(), Err(Error::ComplexSpectrum { .. })));
    }

    #[test]
    fn zero_pair_examples() {
        let sys = laplacian(&DirectedGraph::ring(5));
        let (phi, psi) = zero_eigvec_pair(&sys).unwrap();
        assert!(phi.iter().all(|&v| v == 1.0));
        for &v in psi.iter() {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-14);
        }

        // weight 2 on link 1 -> 0, weight 1 on link 0 -> 1
        let g = DirectedGraph::from_edges(2, &[(0, 1, 2.0), (1, 0, 1.0)]).unwrap();
        let (_, psi) = zero_eigvec_pair(&laplacian(&g)).unwrap();
        assert_abs_diff_eq!(psi[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(psi[1], 2.0 / 3.0, epsilon = 1e-14);

        let (phi, psi) = zero_eigvec_pair(&laplacian(&DirectedGraph::empty(1))).unwrap();
        assert_eq!((phi[0], psi[0]), (1.0, 1.0));

        assert!(matches!(
            zero_eigvec_pair(&laplacian(&DirectedGraph::chain(3))),
            Err(Error::NotStronglyConnected)
        ));
    }

    #[test]
    fn zero_pair_matches_decomposition() {
        let g = DirectedGraph::from_edges(
            3,
            &[(0, 1, 2.0), (1, 2, 0.5), (2, 0, 1.5), (1, 0, 1.0), (2, 1, 0.7)],
        )
        .unwrap();
        let sys = laplacian(&g);
        let (_, psi) = zero_eigvec_pair(&sys).unwrap();
        let d = eigendecompose(&sys, 1).unwrap();
        let z = d.zero_index.unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(d.left[(z, k)].re, psi[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn undelayed_abscissa_examples() {
        let single = laplacian(&DirectedGraph::empty(1));
        let p = PinSet::new([0], 1).unwrap();
        assert_abs_diff_eq!(undelayed_spectral_abscissa(&single, &p, 1.0), -1.0);

        let k4 = laplacian(&DirectedGraph::complete(4));
        let p = PinSet::new([0], 4).unwrap();
        let v = undelayed_spectral_abscissa(&k4, &p, 1.0);
        assert!(v < 0.0);
        assert_abs_diff_eq!(v, -0.20871215252207986, epsilon = 1e-12);

        assert_abs_diff_eq!(undelayed_spectral_abscissa(&k4, &p, 0.0), 0.0, epsilon = 1e-12);
    }
}
