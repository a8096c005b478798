//! Settings-count formulas, the matrix Chernoff tail, scalar tail bounds and
//! the whitened eigenvalue extremes that drive them. Logs are natural.

use std::f64::consts::LN_2;

use crate::error::{Result, TomoError};
use crate::fisher::{classical_fisher, design_fisher, weight_matrix, FisherMatrix};
use crate::linalg;
use crate::measurement::MeasurementDesign;
use crate::qstate::{param_count, DensityMatrix, ParamChart};

/// Target of a Fisher concentration statement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationSpec {
    pub epsilon: f64,
    pub delta: f64,
    pub num_params: usize,
    pub rank: usize,
    /// Smallest nonzero eigenvalue of the state.
    pub lambda_min: f64,
}

impl ConcentrationSpec {
    pub fn new(epsilon: f64, delta: f64, num_params: usize, rank: usize, lambda_min: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(TomoError::BadParameters(format!("epsilon = {epsilon} not in (0, 1/2]")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(TomoError::BadParameters(format!("delta = {delta} not in (0, 1)")));
        }
        if num_params == 0 || rank == 0 {
            return Err(TomoError::BadParameters("D and r must be positive".into()));
        }
        if !(lambda_min > 0.0 && lambda_min <= 1.0 / rank as f64 + 1e-12) {
            return Err(TomoError::BadParameters(format!("lambda_min = {lambda_min} not in (0, 1/r]")));
        }
        Ok(Self { epsilon, delta, num_params, rank, lambda_min })
    }

    /// Parameters for a rank-`r` state in dimension `d`.
    pub fn for_state(rank: usize, dim: usize, epsilon: f64, delta: f64, lambda_min: f64) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(TomoError::BadParameters(format!("rank {rank} in dimension {dim}")));
        }
        Self::new(epsilon, delta, param_count(rank, dim), rank, lambda_min)
    }

    /// Lower bound on `lambda_min` of the whitened mean Fisher matrix.
    pub fn mu(&self) -> f64 {
        mean_eigenvalue_floor(self.rank)
    }

    /// Upper bound on the whitened per-setting `lambda_max`.
    pub fn r_max(&self) -> f64 {
        per_setting_cap(self.rank, self.lambda_min)
    }
}

/// `r / (r + 1)` for `r > 1`, `1` for pure states.
pub fn mean_eigenvalue_floor(rank: usize) -> f64 {
    if rank == 1 {
        1.0
    } else {
        rank as f64 / (rank as f64 + 1.0)
    }
}

/// `2 / lambda_min(rho)` for `r > 1`, `2` for pure states.
pub fn per_setting_cap(rank: usize, lambda_min: f64) -> f64 {
    if rank == 1 {
        2.0
    } else {
        2.0 / lambda_min
    }
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// `2D exp(-k eps^2 mu / (2 R ln 2))`, clipped to `[0, 1]`.
pub fn chernoff_tail(k: u64, epsilon: f64, mu: f64, r_max: f64, num_params: usize) -> Result<f64> {
    if mu.is_nan() || mu <= 0.0 || r_max.is_nan() || r_max < mu {
        return Err(TomoError::BadParameters(format!("need 0 < mu <= R, got mu = {mu}, R = {r_max}")));
    }
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(TomoError::BadParameters(format!("epsilon = {epsilon} not in [0, 1/2]")));
    }
    let exponent = -(k as f64) * epsilon * epsilon * mu / (2.0 * r_max * LN_2);
    Ok(clip01(2.0 * num_params as f64 * exponent.exp()))
}

/// `4 ln 2 / eps^2`.
pub fn c1(epsilon: f64) -> f64 {
    4.0 * LN_2 / (epsilon * epsilon)
}

/// Default for the symbolic constants of the MSE and infidelity statements;
/// same form as [`c1`].
pub fn default_constant(epsilon: f64) -> f64 {
    c1(epsilon)
}

fn ceil_count(x: f64) -> Result<u64> {
    if !x.is_finite() || x >= u64::MAX as f64 {
        return Err(TomoError::Unbounded);
    }
    Ok(x.ceil().max(0.0) as u64)
}

/// `k = C1 / lambda_min * (r + 1) / r * ln(2D / delta)`, rounded up.
pub fn theorem1_k(spec: &ConcentrationSpec) -> u64 {
    let r = spec.rank as f64;
    let x = c1(spec.epsilon) / spec.lambda_min * (r + 1.0) / r * (2.0 * spec.num_params as f64 / spec.delta).ln();
    ceil_count(x).expect("finite for validated parameters")
}

/// `2 (1 + eps) (r + 1) / r * D`.
pub fn theorem2_bound(rank: usize, dim: usize, epsilon: f64) -> f64 {
    let r = rank as f64;
    2.0 * (1.0 + epsilon) * (r + 1.0) / r * param_count(rank, dim) as f64
}

/// `k = C2 (r + 1) ln(2D / delta)`, rounded up.
pub fn theorem2_k(rank: usize, dim: usize, c2: f64, delta: f64) -> u64 {
    let dd = param_count(rank, dim) as f64;
    ceil_count(c2 * (rank as f64 + 1.0) * (2.0 * dd / delta).ln()).expect("finite inputs")
}

/// Qubit infidelity: `k = C3 / det(rho) * ln(2D / delta)` with `D = 3`.
pub fn theorem5_k(det_rho: f64, delta: f64, c3: f64) -> Result<u64> {
    if det_rho.is_nan() || det_rho <= 0.0 {
        return Err(TomoError::SingularState { det: det_rho });
    }
    ceil_count(c3 / det_rho * (6.0 / delta).ln())
}

/// Settings needed for Hoeffding deviation `t` of a mean of variables with
/// range width `c`: `(c^2 / (2 t^2)) ln(2 / delta)`, rounded up.
pub fn hoeffding_k(t: f64, c: f64, delta: f64) -> u64 {
    ceil_count(c * c / (2.0 * t * t) * (2.0 / delta).ln()).expect("finite inputs")
}

/// `P(|X| >= tau) <= E|X| / tau`, clipped to `[0, 1]`.
pub fn markov_tail(mean_abs: f64, tau: f64) -> Result<f64> {
    if tau.is_nan() || tau <= 0.0 || mean_abs < 0.0 {
        return Err(TomoError::BadParameters(format!("markov_tail({mean_abs}, {tau})")));
    }
    Ok(clip01(mean_abs / tau))
}

/// Chebyshev for a `k`-sample mean: `Var / (k tau^2)`, clipped to `[0, 1]`.
pub fn chebyshev_tail(variance: f64, k: u64, tau: f64) -> Result<f64> {
    if tau.is_nan() || tau <= 0.0 || variance < 0.0 || k == 0 {
        return Err(TomoError::BadParameters(format!("chebyshev_tail({variance}, {k}, {tau})")));
    }
    Ok(clip01(variance / (k as f64 * tau * tau)))
}

/// Empirical and analytic extremes of the whitened Fisher spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitenedExtremes {
    /// Largest whitened per-setting eigenvalue over the design.
    pub lambda_max_per_setting: f64,
    /// Smallest whitened eigenvalue of the supplied mean.
    pub lambda_min_of_mean: f64,
    /// `2 / lambda_min(rho)` (or 2 for pure states).
    pub cap_lambda_max: f64,
    /// `r / (r + 1)` (or 1), the mean floor at the equal-spectrum state.
    pub floor_lambda_min: f64,
}

impl WhitenedExtremes {
    pub fn ratio(&self) -> f64 {
        self.lambda_max_per_setting / self.lambda_min_of_mean
    }
}

/// Extremes with the design average standing in for the Haar mean.
pub fn whitened_extremes(rho: &DensityMatrix, chart: &ParamChart, design: &MeasurementDesign) -> Result<WhitenedExtremes> {
    let mean = design_fisher(rho, design, chart)?;
    whitened_extremes_with_mean(rho, chart, design, &mean)
}

/// Extremes against a supplied mean, e.g. a Monte-Carlo Haar mean.
pub fn whitened_extremes_with_mean(
    rho: &DensityMatrix,
    chart: &ParamChart,
    design: &MeasurementDesign,
    mean: &FisherMatrix,
) -> Result<WhitenedExtremes> {
    let g = weight_matrix(chart);
    let mut lambda_max = 0.0f64;
    for s in design.settings() {
        let f = classical_fisher(rho, s, chart)?;
        lambda_max = lambda_max.max(linalg::sym_max_eigenvalue(&f.whitened(&g)));
    }
    let local = chart.eigenbasis().adjoint() * rho.matrix() * chart.eigenbasis();
    let lambda_min_rho = (0..chart.rank()).map(|j| local[(j, j)].re).fold(f64::INFINITY, f64::min);
    Ok(WhitenedExtremes {
        lambda_max_per_setting: lambda_max,
        lambda_min_of_mean: linalg::sym_min_eigenvalue(&mean.whitened(&g)),
        cap_lambda_max: per_setting_cap(chart.rank(), lambda_min_rho),
        floor_lambda_min: mean_eigenvalue_floor(chart.rank()),
    })
}
