//! Maximum-likelihood reconstruction from counts, error metrics, and Monte
//! Carlo checks of the asymptotic error laws.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Result, TomoError};
use crate::fisher::{design_fisher, weight_matrix};
use crate::linalg::{self, CMatrix, RMatrix};
use crate::measurement::{probabilities_of, simulate_counts, CountsTable, MeasurementDesign};
use crate::qstate::{DensityMatrix, ParamChart};
use crate::qubit::expected_pure_infidelity;
use crate::rng::{derive_seed, stream_rng};

/// Largest step. Beyond plain `R rho R` (alpha = 1) the iteration overshoots
/// and zig-zags.
const MAX_STEP: f64 = 1.0;
/// Smallest step multiplier before the iterate is declared stationary.
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MleConfig {
    pub max_iterations: usize,
    /// Stop once the per-sample log-likelihood gain of an accepted step
    /// falls below this.
    pub convergence_tol: f64,
    /// Initial step `alpha` in `A = (1 - alpha) I + alpha R`.
    pub dilution: f64,
    pub rank_projection: Option<usize>,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self { max_iterations: 2000, convergence_tol: 1e-10, dilution: 0.5, rank_projection: None }
    }
}

#[derive(Debug, Clone)]
pub struct MleOutcome {
    pub state: DensityMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Per-sample log-likelihood after each accepted step, starting with the
    /// initial state.
    pub log_likelihood: Vec<f64>,
}

impl MleOutcome {
    /// The estimate, or [`TomoError::NoConvergence`] if the iteration budget ran out.
    pub fn into_converged(self) -> Result<DensityMatrix> {
        if self.converged {
            Ok(self.state)
        } else {
            Err(TomoError::NoConvergence { iterations: self.iterations })
        }
    }
}

struct Problem<'a> {
    bases: Vec<&'a CMatrix>,
    freqs: Vec<Vec<f64>>,
    d: usize,
}

impl Problem<'_> {
    fn log_likelihood(&self, rho: &CMatrix) -> Result<f64> {
        let mut sum = linalg::KahanSum::default();
        for (basis, f) in self.bases.iter().zip(&self.freqs) {
            let p = probabilities_of(rho, basis)?;
            for (&fo, &po) in f.iter().zip(&p) {
                if fo > 0.0 {
                    if po <= 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    sum.add(fo * po.ln());
                }
            }
        }
        Ok(sum.value())
    }

    /// `R(rho) = sum_{s,o} f_{o|s} / p_{o|s} P_{o|s}` with `f = N(o|s) / N`.
    fn r_operator(&self, rho: &CMatrix) -> Result<CMatrix> {
        let mut r = CMatrix::zeros(self.d, self.d);
        for (basis, f) in self.bases.iter().zip(&self.freqs) {
            let p = probabilities_of(rho, basis)?;
            let weights = DVector::from_iterator(
                self.d,
                f.iter().zip(&p).map(|(&fo, &po)| Complex64::new(if fo > 0.0 { fo / po.max(1e-300) } else { 0.0 }, 0.0)),
            );
            r += *basis * CMatrix::from_diagonal(&weights) * basis.adjoint();
        }
        Ok(r)
    }
}

fn normalized(m: CMatrix) -> CMatrix {
    let t = linalg::trace(&m).re;
    linalg::hermitize(&(m / Complex64::new(t, 0.0)))
}

/// Keeps the `r` largest eigenvalues (lower index first on ties) and
/// renormalizes.
pub fn project_rank(rho: &CMatrix, r: usize) -> Result<CMatrix> {
    let (vals, vecs) = linalg::eigh_desc(rho);
    if r == 0 || r > vals.len() {
        return Err(TomoError::BadParameters(format!("rank projection to {r} in dimension {}", vals.len())));
    }
    let kept: Vec<f64> = vals[..r].iter().map(|v| v.max(0.0)).collect();
    let total: f64 = kept.iter().sum();
    let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
    for (j, &v) in kept.iter().enumerate() {
        let col = vecs.column(j);
        out += (col * col.adjoint()) * Complex64::new(v / total, 0.0);
    }
    Ok(linalg::hermitize(&out))
}

/// Maximum-likelihood estimate by the diluted `R rho R` iteration
/// `rho <- A rho A / Tr(A rho A)`, `A = (1 - alpha) I + alpha R(rho)`.
///
/// The step starts at `config.dilution`, is halved whenever the likelihood
/// would decrease and doubled (up to 1) while it still improves, so the
/// log-likelihood sequence is monotone.
pub fn mle_estimate(counts: &CountsTable, design: &MeasurementDesign, config: &MleConfig) -> Result<MleOutcome> {
    if counts.num_settings() != design.len() || counts.dim() != design.dim() {
        return Err(TomoError::InconsistentCounts(format!(
            "counts are {}x{}, design is {}x{}",
            counts.dim(),
            counts.num_settings(),
            design.dim(),
            design.len()
        )));
    }
    if !(config.dilution > 0.0 && config.dilution <= 1.0) || config.convergence_tol <= 0.0 || config.max_iterations == 0 {
        return Err(TomoError::BadParameters("invalid MLE configuration".into()));
    }
    let d = design.dim();
    let n = counts.total() as f64;
    let problem = Problem {
        bases: design.settings().iter().map(|s| s.basis()).collect(),
        freqs: (0..counts.num_settings()).map(|s| counts.column(s).iter().map(|&c| c as f64 / n).collect()).collect(),
        d,
    };
    let identity = CMatrix::identity(d, d);
    let mut rho = identity.clone() / Complex64::new(d as f64, 0.0);
    let mut ll = problem.log_likelihood(&rho)?;
    let mut history = vec![ll];
    let mut alpha = config.dilution;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let r = problem.r_operator(&rho)?;
        let step = |alpha: f64| -> Result<(CMatrix, f64)> {
            let a = &identity * Complex64::new(1.0 - alpha, 0.0) + &r * Complex64::new(alpha, 0.0);
            let candidate = normalized(&a * &rho * a.adjoint());
            let value = problem.log_likelihood(&candidate)?;
            Ok((candidate, value))
        };
        // Crude line search: shrink until the likelihood does not drop, then
        // keep doubling while it still improves.
        let mut best = None;
        while alpha >= MIN_STEP {
            let (cand, value) = step(alpha)?;
            if value >= ll {
                best = Some((cand, value));
                break;
            }
            alpha *= 0.5;
        }
        let accepted = best.is_some();
        if let Some((mut cand, mut value)) = best {
            while alpha * 2.0 <= MAX_STEP {
                let (next, next_value) = step(alpha * 2.0)?;
                if next_value <= value {
                    break;
                }
                alpha *= 2.0;
                cand = next;
                value = next_value;
            }
            let gain = value - ll;
            rho = cand;
            ll = value;
            history.push(ll);
            if gain < config.convergence_tol {
                converged = true;
            }
        }
        if !accepted {
            // No ascent direction left along the R-step: stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if let Some(r) = config.rank_projection {
        rho = project_rank(&rho, r)?;
    }
    let state = DensityMatrix::from_matrix(rho)?;
    Ok(MleOutcome { state, iterations, converged, log_likelihood: history })
}

fn check_same_dim(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(TomoError::DimensionMismatch { expected: b.dim(), found: a.dim() });
    }
    Ok(())
}

/// `||rho_hat - rho||_2^2`.
pub fn frobenius_sq(rho_hat: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    check_same_dim(rho_hat, rho)?;
    Ok((rho_hat.matrix() - rho.matrix()).iter().map(|z| z.norm_sqr()).sum())
}

/// Square root supported on the state's `rank` leading eigenvectors, so that
/// round-off in the null space does not leak in as `sqrt(1e-17)`.
fn support_sqrt(rho: &DensityMatrix) -> CMatrix {
    let (vals, vecs) = rho.eigen();
    let mut out = CMatrix::zeros(rho.dim(), rho.dim());
    for (j, &v) in vals.iter().take(rho.rank()).enumerate() {
        let col = vecs.column(j);
        out += (col * col.adjoint()) * Complex64::new(v.max(0.0).sqrt(), 0.0);
    }
    out
}

/// `F = (Tr sqrt(sqrt(rho) rho_hat sqrt(rho)))^2`, evaluated as the squared
/// nuclear norm of `sqrt(rho) sqrt(rho_hat)`.
pub fn fidelity(rho_hat: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    check_same_dim(rho_hat, rho)?;
    let product = support_sqrt(rho) * support_sqrt(rho_hat);
    let nuclear: f64 = product.singular_values().iter().sum();
    Ok((nuclear * nuclear).clamp(0.0, 1.0))
}

pub fn general_infidelity(rho_hat: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    Ok((1.0 - fidelity(rho_hat, rho)?).clamp(0.0, 1.0))
}

/// Entries of `I^{-1}` at least this fraction of the largest count as dominant.
pub const DOMINANT_FRACTION: f64 = 0.5;

/// Empirical covariance of `sqrt(N)(theta_hat - theta)` against `I(rho|S)^{-1}`.
#[derive(Debug, Clone)]
pub struct NormalityReport {
    pub trials: usize,
    pub samples: u64,
    pub empirical_covariance: RMatrix,
    pub fisher_inverse: RMatrix,
    /// Largest relative deviation over entries of `I^{-1}` at least half its
    /// largest entry; smaller entries are dominated by sampling noise.
    pub max_relative_deviation: f64,
    /// `N E||rho_hat - rho||_2^2`.
    pub scaled_frobenius: f64,
    /// `Tr(I^{-1} G)`.
    pub mse_trace: f64,
    pub non_converged: usize,
}

impl NormalityReport {
    pub fn trace_relative_deviation(&self) -> f64 {
        (self.scaled_frobenius / self.mse_trace - 1.0).abs()
    }
}

/// Repeats simulate-then-estimate on a fixed design and compares the spread
/// of the chart coordinates of the estimates with the inverse Fisher matrix.
/// `rho` must be diagonal in `chart`'s basis.
pub fn asymptotic_normality_check(
    rho: &DensityMatrix,
    design: &MeasurementDesign,
    chart: &ParamChart,
    m: u64,
    trials: usize,
    seed: u64,
) -> Result<NormalityReport> {
    if trials < 2 {
        return Err(TomoError::BadParameters("need at least two trials".into()));
    }
    let fisher = design_fisher(rho, design, chart)?;
    let g = weight_matrix(chart);
    let inverse = fisher.inverse()?;
    let mse_trace = fisher.mse_trace(&g)?;
    let local = chart.eigenbasis().adjoint() * rho.matrix() * chart.eigenbasis();
    let spectrum: Vec<f64> = (0..chart.rank()).map(|j| local[(j, j)].re).collect();
    let config = MleConfig { rank_projection: Some(chart.rank()), ..MleConfig::default() };
    let n = m * design.len() as u64;
    let dd = chart.num_params();
    let mut sum = DVector::<f64>::zeros(dd);
    let mut outer = RMatrix::zeros(dd, dd);
    let mut frob = linalg::KahanSum::default();
    let mut non_converged = 0;
    for t in 0..trials {
        let mut rng = stream_rng(derive_seed(seed, &[t as u64]), 0);
        let counts = simulate_counts(rho, design, m, &mut rng)?;
        let out = mle_estimate(&counts, design, &config)?;
        non_converged += usize::from(!out.converged);
        frob.add(frobenius_sq(&out.state, rho)?);
        let theta = chart.coordinates(out.state.matrix(), &spectrum)?;
        let x = DVector::from_column_slice(theta.values()) * (n as f64).sqrt();
        sum += &x;
        outer.ger(1.0, &x, &x, 1.0);
    }
    let tf = trials as f64;
    let mean = &sum / tf;
    let empirical_covariance = (outer - &mean * mean.transpose() * tf) / (tf - 1.0);
    let largest = inverse.abs().max();
    let max_relative_deviation = inverse
        .iter()
        .zip(empirical_covariance.iter())
        .filter(|(want, _)| want.abs() >= DOMINANT_FRACTION * largest)
        .map(|(want, got)| ((got - want) / want).abs())
        .fold(0.0, f64::max);
    Ok(NormalityReport {
        trials,
        samples: n,
        empirical_covariance,
        fisher_inverse: inverse,
        max_relative_deviation,
        scaled_frobenius: n as f64 * frob.value() / tf,
        mse_trace,
        non_converged,
    })
}

/// Mean infidelity of the MLE against the half-normal prediction
/// `sqrt(2 / (pi N)) sqrt((I^{-1})_dd)`.
#[derive(Debug, Clone)]
pub struct PureInfidelityReport {
    pub trials: usize,
    pub samples: u64,
    pub mean_infidelity: f64,
    pub std_error: f64,
    pub predicted: f64,
    /// `(I(rho|S)^{-1})_{00}`, the variance of the diagonal parameter.
    pub diagonal_variance: f64,
}

impl PureInfidelityReport {
    pub fn ratio(&self) -> f64 {
        self.mean_infidelity / self.predicted
    }
}

/// Simulates a nearly pure state on a fixed design and records the mean
/// infidelity of the estimates. `chart` must be the rank-`d` chart at `rho`
/// so that parameter 0 is the smallest eigenvalue direction for qubits.
pub fn pure_infidelity_check(
    rho: &DensityMatrix,
    design: &MeasurementDesign,
    chart: &ParamChart,
    m: u64,
    trials: usize,
    seed: u64,
) -> Result<PureInfidelityReport> {
    if trials < 2 {
        return Err(TomoError::BadParameters("need at least two trials".into()));
    }
    let inverse = design_fisher(rho, design, chart)?.inverse()?;
    let n = m * design.len() as u64;
    let diagonal_variance = inverse[(0, 0)];
    let predicted = expected_pure_infidelity((diagonal_variance / n as f64).sqrt());
    let mut sum = linalg::KahanSum::default();
    let mut sq = linalg::KahanSum::default();
    for t in 0..trials {
        let mut rng = stream_rng(derive_seed(seed, &[t as u64]), 0);
        let counts = simulate_counts(rho, design, m, &mut rng)?;
        let est = mle_estimate(&counts, design, &MleConfig::default())?.state;
        let x = general_infidelity(&est, rho)?;
        sum.add(x);
        sq.add(x * x);
    }
    let tf = trials as f64;
    let mean = sum.value() / tf;
    let var = (sq.value() / tf - mean * mean).max(0.0) * tf / (tf - 1.0);
    Ok(PureInfidelityReport {
        trials,
        samples: n,
        mean_infidelity: mean,
        std_error: (var / tf).sqrt(),
        predicted,
        diagonal_variance,
    })
}
