//! The single-qubit model: `rho = Diag(1 - l2, l2)` in its eigenbasis, with
//! parameters ordered `(l2, Re rho_12, Im rho_12)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Result, TomoError};
use crate::linalg::{self, CMatrix};
use crate::qstate::{make_rank_r_state, DensityMatrix, ParamChart};

/// Below this `l2` the infidelity is no longer locally quadratic.
pub const PURE_REGIME_THRESHOLD: f64 = 0.01;

/// Switch to the series form of the mean elements when `|1 - 2 l2|` is smaller.
const SERIES_CUTOFF: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    lambda2: f64,
}

impl QubitState {
    pub fn new(lambda2: f64) -> Result<Self> {
        check_lambda2(lambda2)?;
        Ok(Self { lambda2 })
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn determinant(&self) -> f64 {
        self.lambda2 * (1.0 - self.lambda2)
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        make_rank_r_state(&[1.0 - self.lambda2, self.lambda2], &CMatrix::identity(2, 2))
            .expect("valid qubit spectrum")
    }

    /// The rank-2 chart in the computational basis.
    pub fn chart(&self) -> ParamChart {
        ParamChart::new(CMatrix::identity(2, 2), 2).expect("identity is unitary")
    }

    pub fn fisher(&self, theta: f64, phi: f64) -> Result<Matrix3<f64>> {
        qubit_fisher_closed_form(self.lambda2, theta, phi)
    }
}

fn check_lambda2(lambda2: f64) -> Result<()> {
    if lambda2 > 0.0 && lambda2 <= 0.5 {
        Ok(())
    } else {
        Err(TomoError::OutOfDomain(format!("lambda2 = {lambda2} not in (0, 0.5]")))
    }
}

/// Haar-random Bloch angles of a measurement axis: `cos(theta)` uniform on
/// `[-1, 1]`, `phi` uniform on `[0, 2 pi)`.
pub fn haar_bloch_angles<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    let cos_theta: f64 = rng.random_range(-1.0..=1.0);
    (cos_theta.acos(), rng.random_range(0.0..2.0 * PI))
}

/// Fisher matrix of the setting with Bloch angles `(theta, phi)`:
/// `2 / (1 - cos^2(theta) (1 - 2 l2)^2)` times a trigonometric matrix.
pub fn qubit_fisher_closed_form(lambda2: f64, theta: f64, phi: f64) -> Result<Matrix3<f64>> {
    check_lambda2(lambda2)?;
    let x = 1.0 - 2.0 * lambda2;
    let (s, c) = theta.sin_cos();
    let denominator = 1.0 - c * c * x * x;
    if denominator <= 1e-14 {
        return Err(TomoError::DegenerateSetting { denominator });
    }
    let pref = 2.0 / denominator;
    let (sp, cp) = phi.sin_cos();
    let s2t = (2.0 * theta).sin();
    let s2p = (2.0 * phi).sin();
    let dr = -cp * s2t;
    let di = sp * s2t;
    let ri = -s2p * s * s;
    Ok(Matrix3::new(
        2.0 * c * c, dr, di,
        dr, 2.0 * cp * cp * s * s, ri,
        di, ri, 2.0 * sp * sp * s * s,
    ) * pref)
}

/// One of the six distinct entries of the qubit Fisher matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FisherElement {
    Dd,
    Dr,
    Di,
    Ri,
    Rr,
    Ii,
}

impl FisherElement {
    pub const ALL: [FisherElement; 6] =
        [FisherElement::Dd, FisherElement::Dr, FisherElement::Di, FisherElement::Ri, FisherElement::Rr, FisherElement::Ii];

    /// Position in the 3x3 matrix.
    pub fn index(self) -> (usize, usize) {
        match self {
            FisherElement::Dd => (0, 0),
            FisherElement::Dr => (0, 1),
            FisherElement::Di => (0, 2),
            FisherElement::Ri => (1, 2),
            FisherElement::Rr => (1, 1),
            FisherElement::Ii => (2, 2),
        }
    }
}

impl fmt::Display for FisherElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FisherElement::Dd => "dd",
            FisherElement::Dr => "dr",
            FisherElement::Di => "di",
            FisherElement::Ri => "ri",
            FisherElement::Rr => "rr",
            FisherElement::Ii => "ii",
        })
    }
}

impl FromStr for FisherElement {
    type Err = TomoError;

    fn from_str(s: &str) -> Result<Self> {
        FisherElement::ALL
            .into_iter()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| TomoError::Parse(format!("unknown Fisher element `{s}`")))
    }
}

/// Haar-mean of a qubit Fisher element.
pub fn table1_mean(element: FisherElement, lambda2: f64) -> Result<f64> {
    check_lambda2(lambda2)?;
    let x = 1.0 - 2.0 * lambda2;
    let (dd, rr) = if x.abs() < SERIES_CUTOFF {
        // sum_n 4 x^{2n} / (2n + 3) and its rr counterpart, to fourth order.
        let x2 = x * x;
        (4.0 / 3.0 + 4.0 * x2 / 5.0 + 4.0 * x2 * x2 / 7.0, 4.0 / 3.0 + 4.0 * x2 / 15.0 + 4.0 * x2 * x2 / 35.0)
    } else {
        let log_ratio = (2.0 * (1.0 - lambda2)).ln() - (2.0 * lambda2).ln();
        let dd = 2.0 * log_ratio / x.powi(3) - 4.0 / (x * x);
        (dd, log_ratio / x - dd / 2.0)
    };
    Ok(match element {
        FisherElement::Dd => dd,
        FisherElement::Rr | FisherElement::Ii => rr,
        FisherElement::Dr | FisherElement::Di | FisherElement::Ri => 0.0,
    })
}

/// Closed range `[lo, hi]` attained by a qubit Fisher element over all settings.
pub fn table1_range(element: FisherElement, lambda2: f64) -> Result<(f64, f64)> {
    check_lambda2(lambda2)?;
    let det = lambda2 * (1.0 - lambda2);
    Ok(match element {
        FisherElement::Dd => (0.0, 1.0 / det),
        FisherElement::Dr | FisherElement::Di => (-2.0 / det.sqrt(), 2.0 / det.sqrt()),
        FisherElement::Ri => (-2.0, 2.0),
        FisherElement::Rr | FisherElement::Ii => (0.0, 4.0),
    })
}

fn det2(m: &CMatrix) -> f64 {
    (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re
}

/// `F = Tr(rho_hat rho) + 2 sqrt(det rho_hat det rho)`.
pub fn qubit_fidelity(rho_hat: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    for m in [rho_hat, rho] {
        if m.dim() != 2 {
            return Err(TomoError::DimensionMismatch { expected: 2, found: m.dim() });
        }
    }
    let overlap = linalg::trace(&(rho_hat.matrix() * rho.matrix())).re;
    // A rank-one argument has determinant exactly zero; round-off in det2
    // would otherwise surface as sqrt(1e-17).
    let det = |m: &DensityMatrix| if m.rank() < 2 { 0.0 } else { det2(m.matrix()).max(0.0) };
    let dets = det(rho_hat) * det(rho);
    Ok((overlap + 2.0 * dets.sqrt()).clamp(0.0, 1.0))
}

/// `Diag(1 / (2 l2 (1 - l2)), 2, 2)`, the Hessian of the infidelity at
/// `theta = 0`: `1 - F = dtheta^T G dtheta / 2 + O(|dtheta|^3)`.
pub fn infidelity_weight_matrix(lambda2: f64) -> Result<Matrix3<f64>> {
    check_lambda2(lambda2)?;
    if lambda2 < PURE_REGIME_THRESHOLD {
        return Err(TomoError::PureStateRegime { lambda2 });
    }
    Ok(Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0 / (2.0 * lambda2 * (1.0 - lambda2)), 2.0, 2.0)))
}

/// `sqrt(2 / pi) sigma`, the mean absolute value of a centred Gaussian with
/// standard deviation `sigma`.
pub fn expected_pure_infidelity(sigma: f64) -> f64 {
    (2.0 / PI).sqrt() * sigma
}

/// The qubit state displaced by `theta = (l2, Re, Im)` from `Diag(1 - l2, l2)`.
pub fn displaced_state(lambda2: f64, theta: [f64; 3]) -> Result<DensityMatrix> {
    let q = QubitState::new(lambda2)?;
    let m = q.density_matrix().matrix().clone()
        + CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(-theta[0], 0.0),
                Complex64::new(theta[1], theta[2]),
                Complex64::new(theta[1], -theta[2]),
                Complex64::new(theta[0], 0.0),
            ],
        );
    DensityMatrix::from_matrix(m)
}
