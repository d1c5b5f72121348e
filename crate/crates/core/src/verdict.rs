use num_complex::Complex64;
use serde::Serialize;

/// Real parts within this distance of zero are reported as inconclusive.
pub const VERDICT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Inconclusive,
}

impl Stability {
    pub fn from_real_part(re: f64) -> Self {
        if re < -VERDICT_TOL {
            Stability::Stable
        } else if re > VERDICT_TOL {
            Stability::Unstable
        } else {
            Stability::Inconclusive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Inconclusive => "inconclusive",
        }
    }
}

/// Which computation produced a verdict or an exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CharacteristicRoots,
    LambertBranches,
    SegmentNorms,
    UndelayedAbscissa,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::CharacteristicRoots => "characteristic_roots",
            Method::LambertBranches => "lambert_branches",
            Method::SegmentNorms => "segment_norms",
            Method::UndelayedAbscissa => "undelayed_abscissa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub stability: Stability,
    /// Estimate of the dominant characteristic root, when the method yields one.
    pub dominant: Option<Complex64>,
    pub method: Method,
}

impl StabilityVerdict {
    pub fn from_root(root: Complex64, method: Method) -> Self {
        Self {
            stability: Stability::from_real_part(root.re),
            dominant: Some(root),
            method,
        }
    }
}
