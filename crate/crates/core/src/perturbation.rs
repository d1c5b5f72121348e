//! Dominant-root estimates for weak and strong pinning.
//!
//! For small `c` the consensus root `0` moves left at the rate
//! `psi^T D phi / (1 + tau_r psi^T K phi)`. For large `c` with `c tau_p`
//! held below `pi/2`, the dominant root tends to that of the unpinned block
//! `y' = -K_2 y + A_22 y(t - tau_r)`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::charroots::{dominant_root, QuasiPoly, SearchSpec};
use crate::error::{Error, Result};
use crate::graph::{LaplacianSystem, PinSet};
use crate::spectral::zero_eigvec_pair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SmallC,
    LargeC,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Ingredients {
    SmallC {
        /// `psi^T D phi`: the psi-weighted pinned mass.
        pinned_mass: f64,
        /// `psi^T K phi`: the psi-weighted mean in-degree.
        weighted_degree: f64,
        /// `psi^T A phi`; equal to `weighted_degree` since `psi^T L = 0`.
        weighted_coupling: f64,
    },
    LargeC {
        /// Dominant root of the unpinned block.
        reduced_root: Complex64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationEstimate {
    pub regime: Regime,
    pub dominant_root_estimate: Complex64,
    pub ingredients: Ingredients,
}

/// First-order estimate `-c psi^T D phi / (1 + tau_r psi^T K phi)`.
pub fn small_c_dominant(
    sys: &LaplacianSystem,
    pins: &PinSet,
    tau_r: f64,
    c: f64,
) -> Result<PerturbationEstimate> {
    if pins.is_empty() {
        return Err(Error::EmptyPinSet);
    }
    if !(c >= 0.0 && tau_r >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "c = {c} and tau_r = {tau_r} must be nonnegative"
        )));
    }
    let (phi, psi) = zero_eigvec_pair(sys)?;
    let pinned_mass: f64 = pins.members().iter().map(|&i| psi[i] * phi[i]).sum();
    let weighted_degree = psi.dot(&sys.k.component_mul(&phi));
    let weighted_coupling = psi.dot(&(&sys.a * &phi));
    let slope = -pinned_mass / (1.0 + tau_r * weighted_degree);
    Ok(PerturbationEstimate {
        regime: Regime::SmallC,
        dominant_root_estimate: Complex64::new(slope * c, 0.0),
        ingredients: Ingredients::SmallC {
            pinned_mass,
            weighted_degree,
            weighted_coupling,
        },
    })
}

/// `-f c / (1 + tau_r d)` for pin fraction `f` and mean degree `d`.
pub fn mean_field_estimate(pin_fraction: f64, mean_degree: f64, tau_r: f64, c: f64) -> f64 {
    -pin_fraction * c / (1.0 + tau_r * mean_degree)
}

/// Unpinned block of the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedSystem {
    /// In-degrees of the unpinned nodes.
    pub k2: DVector<f64>,
    /// Adjacency among the unpinned nodes.
    pub a22: DMatrix<f64>,
    /// `permutation[new] = old`: pinned nodes first, then unpinned, each ascending.
    pub permutation: Vec<usize>,
    /// Number of pinned nodes, i.e. where the unpinned block starts.
    pub pinned: usize,
}

impl ReducedSystem {
    /// Original node index of each row of the unpinned block.
    pub fn unpinned_nodes(&self) -> &[usize] {
        &self.permutation[self.pinned..]
    }
}

pub fn reduced_system(sys: &LaplacianSystem, pins: &PinSet) -> Result<ReducedSystem> {
    if pins.n() != sys.n() {
        return Err(Error::InvalidArgument(format!(
            "pin set is over {} nodes but the graph has {}",
            pins.n(),
            sys.n()
        )));
    }
    let unpinned: Vec<usize> = (0..sys.n()).filter(|&i| !pins.contains(i)).collect();
    if unpinned.is_empty() {
        return Err(Error::AllPinned);
    }
    let m = unpinned.len();
    let k2 = DVector::from_fn(m, |i, _| sys.k[unpinned[i]]);
    let a22 = DMatrix::from_fn(m, m, |i, j| sys.a[(unpinned[i], unpinned[j])]);
    let mut permutation = pins.members().to_vec();
    permutation.extend(&unpinned);
    Ok(ReducedSystem {
        k2,
        a22,
        permutation,
        pinned: pins.m(),
    })
}

/// Dominant root of `det(mu I + K_2 - A_22 e^{-mu tau_r})`.
pub fn large_c_dominant(reduced: &ReducedSystem, tau_r: f64) -> Result<PerturbationEstimate> {
    let qp = QuasiPoly::from_reduced(reduced.k2.clone(), reduced.a22.clone(), tau_r)?;
    let root = dominant_root(&qp, &SearchSpec::default_for(&qp))?;
    Ok(PerturbationEstimate {
        regime: Regime::LargeC,
        dominant_root_estimate: root.lambda,
        ingredients: Ingredients::LargeC {
            reduced_root: root.lambda,
        },
    })
}

/// The pinned modes stay stable in the large-`c` limit only if `c tau_p < pi/2`.
pub fn check_large_c_condition(c: f64, tau_p: f64) -> bool {
    c * tau_p < FRAC_PI_2
}
