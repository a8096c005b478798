//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic is
//! testable natively.

use lowrank_tomo::bounds::{default_constant, theorem1_k, theorem2_bound, theorem2_k, ConcentrationSpec};
use lowrank_tomo::experiments::spectrum_with_min;
use lowrank_tomo::fisher::{design_fisher, mean_fisher_mc, weight_matrix};
use lowrank_tomo::measurement::{haar_sample, MeasurementDesign};
use lowrank_tomo::qstate::{make_rank_r_state, param_count, ParamChart};
use lowrank_tomo::qubit::{qubit_fisher_closed_form, table1_mean, FisherElement};
use lowrank_tomo::rng::stream_rng;
use wasm_bindgen::prelude::*;

/// Largest `k` the page will simulate.
pub const MAX_SETTINGS: usize = 20_000;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Row-major 3x3 qubit Fisher matrix followed by the three Haar-mean
/// diagonal entries (dd, rr, ii).
pub fn qubit_fisher_values(lambda2: f64, theta: f64, phi: f64) -> Result<Vec<f64>, String> {
    let f = qubit_fisher_closed_form(lambda2, theta, phi).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|ij| f[ij]).collect();
    for e in [FisherElement::Dd, FisherElement::Rr, FisherElement::Ii] {
        out.push(table1_mean(e, lambda2).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = qubitFisher)]
pub fn qubit_fisher(lambda2: f64, theta: f64, phi: f64) -> Result<Vec<f64>, JsError> {
    qubit_fisher_values(lambda2, theta, phi).map_err(js)
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct DesignSummary {
    eigenvalues: Vec<f64>,
    mean_eigenvalues: Vec<f64>,
    mse_trace: f64,
    optimal_trace: f64,
    bound: f64,
}

#[wasm_bindgen]
impl DesignSummary {
    /// Whitened design Fisher eigenvalues, ascending.
    #[wasm_bindgen(getter)]
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.clone()
    }

    /// Whitened Haar-mean eigenvalues, ascending.
    #[wasm_bindgen(getter, js_name = meanEigenvalues)]
    pub fn mean_eigenvalues(&self) -> Vec<f64> {
        self.mean_eigenvalues.clone()
    }

    /// `Tr(I(rho|S)^{-1} G)`; infinite when the design is singular.
    #[wasm_bindgen(getter, js_name = mseTrace)]
    pub fn mse_trace(&self) -> f64 {
        self.mse_trace
    }

    #[wasm_bindgen(getter, js_name = optimalTrace)]
    pub fn optimal_trace(&self) -> f64 {
        self.optimal_trace
    }

    /// `2 (1 + eps) (r + 1) D / r` at `eps = 0.1`.
    #[wasm_bindgen(getter)]
    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// Draws a rank-`r` state with smallest eigenvalue `lambda_min` and `k`
/// Haar settings, all in the state's eigenbasis (the whitened spectrum is
/// basis independent).
pub fn summarize_design(
    d: usize,
    r: usize,
    lambda_min: f64,
    k: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<DesignSummary, String> {
    if d < 2 || r == 0 || r > d || k == 0 || k > MAX_SETTINGS || mc_samples == 0 {
        return Err(format!("need 1 <= r <= d, d >= 2, 1 <= k <= {MAX_SETTINGS}"));
    }
    let spectrum = spectrum_with_min(r, lambda_min).map_err(|e| e.to_string())?;
    let basis = nalgebra::DMatrix::identity(d, d);
    let rho = make_rank_r_state(&spectrum, &basis).map_err(|e| e.to_string())?;
    let chart = ParamChart::new(basis, r).map_err(|e| e.to_string())?;
    let g = weight_matrix(&chart);
    let mut rng = stream_rng(seed, 0);
    let settings = (0..k).map(|_| haar_sample(d, &mut rng)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let design = MeasurementDesign::new(settings, seed).map_err(|e| e.to_string())?;
    let f = design_fisher(&rho, &design, &chart).map_err(|e| e.to_string())?;
    let mean = mean_fisher_mc(&rho, &chart, mc_samples, &mut stream_rng(seed, 1)).map_err(|e| e.to_string())?;
    Ok(DesignSummary {
        eigenvalues: f.whitened_eigenvalues(&g),
        mean_eigenvalues: mean.whitened_eigenvalues(&g),
        mse_trace: f.mse_trace(&g).unwrap_or(f64::INFINITY),
        optimal_trace: mean.mse_trace(&g).unwrap_or(f64::INFINITY),
        bound: theorem2_bound(r, d, 0.1),
    })
}

#[wasm_bindgen(js_name = designSummary)]
pub fn design_summary(
    d: usize,
    r: usize,
    lambda_min: f64,
    k: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<DesignSummary, JsError> {
    summarize_design(d, r, lambda_min, k, mc_samples, seed).map_err(js)
}

/// `[D, k for (1 +- eps) concentration, k for the MSE bound]`.
pub fn settings_needed_values(r: usize, d: usize, epsilon: f64, delta: f64, lambda_min: f64) -> Result<Vec<f64>, String> {
    if r == 0 || r > d || d < 2 {
        return Err("need 1 <= r <= d and d >= 2".into());
    }
    let spec = ConcentrationSpec::for_state(r, d, epsilon, delta, lambda_min).map_err(|e| e.to_string())?;
    let k1 = theorem1_k(&spec);
    let k2 = theorem2_k(r, d, default_constant(epsilon), delta);
    Ok(vec![param_count(r, d) as f64, k1 as f64, k2 as f64])
}

#[wasm_bindgen(js_name = settingsNeeded)]
pub fn settings_needed(r: usize, d: usize, epsilon: f64, delta: f64, lambda_min: f64) -> Result<Vec<f64>, JsError> {
    settings_needed_values(r, d, epsilon, delta, lambda_min).map_err(js)
}
