//! Experiment runners behind the `lrtomo` binary. Each returns typed rows
//! that serialize to a CSV with a `# experiment= seed= version=` line.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;

use crate::bounds::{default_constant, theorem2_bound, theorem2_k};
use crate::error::{Result, TomoError};
use crate::estimator::{frobenius_sq, general_infidelity, mle_estimate, MleConfig};
use crate::fisher::{design_fisher, mean_fisher_mc, weight_matrix, SINGULAR_TOL};
use crate::linalg;
use crate::measurement::{haar_sample, simulate_counts, MeasurementDesign};
use crate::qstate::{make_rank_r_state, param_count, DensityMatrix, ParamChart};
use crate::qubit::{haar_bloch_angles, qubit_fisher_closed_form, table1_mean, table1_range, FisherElement};
use crate::rng::{derive_seed, stream_rng, TrialRng};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `lambda2` at or below this is simulated as an exactly pure state.
pub const PURE_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    FisherConcentration,
    MseConcentration,
    Scaling,
    BoundCheck,
    Table1Validate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::FisherConcentration,
        ExperimentKind::MseConcentration,
        ExperimentKind::Scaling,
        ExperimentKind::BoundCheck,
        ExperimentKind::Table1Validate,
    ];

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::FisherConcentration => "fisher-concentration",
            ExperimentKind::MseConcentration => "mse-concentration",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::BoundCheck => "bound-check",
            ExperimentKind::Table1Validate => "table1-validate",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = TomoError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| TomoError::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub lambda2_values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub m: u64,
    pub n_states: usize,
    pub n_design_draws: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rank: usize,
    pub dim: usize,
    pub output_path: String,
    /// Samples for Monte-Carlo Haar means.
    pub n_mc_samples: usize,
    /// Divide qubit MSE traces by `G = 2I` to plot `Tr I^{-1}`.
    pub fig2_normalize: bool,
    /// Constant in the MSE-bound settings count; defaults to `4 ln 2 / eps^2`.
    pub c2: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::FisherConcentration,
            seed: 0,
            lambda2_values: vec![0.5, 0.25, 0.05, 0.005],
            k_values: vec![10, 30, 100, 300],
            m: 1000,
            n_states: 40,
            n_design_draws: 100,
            epsilon: 0.1,
            delta: 0.05,
            rank: 2,
            dim: 2,
            output_path: "-".into(),
            n_mc_samples: 100_000,
            fig2_normalize: false,
            c2: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| TomoError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 15] = [
        "experiment",
        "seed",
        "lambda2_values",
        "k_values",
        "m",
        "n_states",
        "n_design_draws",
        "epsilon",
        "delta",
        "rank",
        "dim",
        "output_path",
        "n_mc_samples",
        "fig2_normalize",
        "c2",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "experiment" => self.experiment = v.parse()?,
            "seed" => self.seed = parse_num(key, v)?,
            "lambda2_values" => self.lambda2_values = parse_list(key, v)?,
            "k_values" => self.k_values = parse_list(key, v)?,
            "m" => self.m = parse_num(key, v)?,
            "n_states" => self.n_states = parse_num(key, v)?,
            "n_design_draws" => self.n_design_draws = parse_num(key, v)?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "rank" => self.rank = parse_num(key, v)?,
            "dim" => self.dim = parse_num(key, v)?,
            "output_path" => self.output_path = v.to_string(),
            "n_mc_samples" => self.n_mc_samples = parse_num(key, v)?,
            "fig2_normalize" => self.fig2_normalize = parse_num(key, v)?,
            "c2" => self.c2 = Some(parse_num(key, v)?),
            other => return Err(TomoError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values. `#` starts
    /// a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TomoError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TomoError::Config(msg));
        if self.lambda2_values.is_empty() || self.lambda2_values.iter().any(|&l| !(l > 0.0 && l <= 0.5)) {
            return bad(format!("lambda2_values must be non-empty and in (0, 0.5]: {:?}", self.lambda2_values));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k_values must be non-empty and positive".into());
        }
        if self.m == 0 || self.n_states == 0 || self.n_design_draws == 0 || self.n_mc_samples == 0 {
            return bad("m, n_states, n_design_draws and n_mc_samples must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return bad(format!("epsilon = {} not in (0, 0.5]", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} not in (0, 1)", self.delta));
        }
        if self.dim < 2 || self.rank == 0 || self.rank > self.dim {
            return bad(format!("need 1 <= rank <= dim and dim >= 2, got rank {} dim {}", self.rank, self.dim));
        }
        if self.c2.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("c2 must be positive".into());
        }
        Ok(())
    }

    pub fn c2_value(&self) -> f64 {
        self.c2.unwrap_or_else(|| default_constant(self.epsilon))
    }

    fn rng(&self, path: &[u64]) -> TrialRng {
        let mut tags = vec![self.experiment.tag()];
        tags.extend_from_slice(path);
        stream_rng(derive_seed(self.seed, &tags), 0)
    }
}

/// A row of an experiment's CSV output.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the metadata line, header and rows.
pub fn write_rows<R: CsvRow, W: Write>(out: W, experiment: ExperimentKind, seed: u64, rows: &[R]) -> Result<()> {
    let mut out = out;
    writeln!(out, "# experiment={experiment} seed={seed} version={VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(R::header())?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Spectrum of length `r`, descending, whose smallest entry is `lambda_min`
/// and whose others share the rest equally.
pub fn spectrum_with_min(r: usize, lambda_min: f64) -> Result<Vec<f64>> {
    if r == 1 {
        return Ok(vec![1.0]);
    }
    if !(lambda_min > 0.0 && lambda_min <= 1.0 / r as f64 + 1e-12) {
        return Err(TomoError::BadSpectrum(format!("lambda_min = {lambda_min} for rank {r}")));
    }
    let rest = (1.0 - lambda_min) / (r - 1) as f64;
    let mut v = vec![rest; r];
    v[r - 1] = lambda_min;
    Ok(v)
}

/// A random descending spectrum; with `lambda_min`, the smallest entry is
/// pinned and the others are rescaled to fill the remaining mass.
pub fn random_spectrum<R: Rng + ?Sized>(r: usize, lambda_min: Option<f64>, rng: &mut R) -> Vec<f64> {
    if r == 1 {
        return vec![1.0];
    }
    let mut v: Vec<f64> = (0..r).map(|_| rng.random_range(0.05..1.0)).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    match lambda_min {
        Some(lm) => {
            let head: f64 = v[..r - 1].iter().sum();
            for x in &mut v[..r - 1] {
                *x *= (1.0 - lm) / head;
            }
            v[r - 1] = lm;
        }
        None => {
            let total: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= total);
        }
    }
    let tail: f64 = v[1..].iter().sum();
    v[0] = 1.0 - tail;
    v
}

fn random_state<R: Rng + ?Sized>(spectrum: &[f64], dim: usize, rng: &mut R) -> Result<DensityMatrix> {
    make_rank_r_state(spectrum, haar_sample(dim, rng)?.basis())
}

fn random_design<R: Rng + ?Sized>(dim: usize, k: usize, rng: &mut R) -> Result<MeasurementDesign> {
    let settings = (0..k).map(|_| haar_sample(dim, rng)).collect::<Result<Vec<_>>>()?;
    MeasurementDesign::new(settings, 0)
}

/// Rank and spectrum used for a given `lambda2` under the config: qubits use
/// `(1 - l2, l2)`, larger dimensions pin the smallest eigenvalue to `l2`.
fn spectrum_for(config: &ExperimentConfig, lambda2: f64) -> Result<Vec<f64>> {
    if config.dim == 2 {
        Ok(vec![1.0 - lambda2, lambda2])
    } else {
        spectrum_with_min(config.rank, lambda2.min(1.0 / config.rank as f64))
    }
}

/// Whitened Haar-mean Fisher matrix of a spectrum: analytic for qubits,
/// Monte Carlo otherwise. Unitary invariance makes it basis independent.
fn whitened_mean(config: &ExperimentConfig, spectrum: &[f64], rng: &mut TrialRng) -> Result<linalg::RMatrix> {
    let basis = linalg::CMatrix::identity(config.dim, config.dim);
    let rho = make_rank_r_state(spectrum, &basis)?;
    let chart = ParamChart::new(basis, spectrum.len())?;
    let g = weight_matrix(&chart);
    if config.dim == 2 {
        let l2 = spectrum[1];
        let diag = [FisherElement::Dd, FisherElement::Rr, FisherElement::Ii]
            .map(|e| table1_mean(e, l2.min(0.5)).expect("validated lambda2"));
        let mean = linalg::RMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&diag));
        return Ok(g.inv_sqrt() * mean * g.inv_sqrt());
    }
    Ok(mean_fisher_mc(&rho, &chart, config.n_mc_samples, rng)?.whitened(&g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherConcentrationRow {
    pub lambda2: f64,
    pub k: usize,
    pub trial: usize,
    pub eig_index: usize,
    pub eigenvalue: f64,
    pub mean_eigenvalue: f64,
    pub band_low: f64,
    pub band_high: f64,
}

impl FisherConcentrationRow {
    pub fn in_band(&self) -> bool {
        self.eigenvalue >= self.band_low && self.eigenvalue <= self.band_high
    }
}

impl CsvRow for FisherConcentrationRow {
    fn header() -> &'static [&'static str] {
        &["lambda2", "k", "trial", "eig_index", "eigenvalue", "mean_eigenvalue", "band_low", "band_high"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.lambda2.to_string(),
            self.k.to_string(),
            self.trial.to_string(),
            self.eig_index.to_string(),
            self.eigenvalue.to_string(),
            self.mean_eigenvalue.to_string(),
            self.band_low.to_string(),
            self.band_high.to_string(),
        ]
    }
}

/// Eigenvalues (ascending) of `G^{-1/2} I(rho|S) G^{-1/2}` for random states
/// and designs, against the whitened mean and its `(1 +- eps)` band.
pub fn run_fisher_concentration(config: &ExperimentConfig) -> Result<Vec<FisherConcentrationRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (li, &l2) in config.lambda2_values.iter().enumerate() {
        let spectrum = spectrum_for(config, l2)?;
        let mean = whitened_mean(config, &spectrum, &mut config.rng(&[li as u64, u64::MAX]))?;
        let mean_eigs = linalg::sym_eigvals(&mean);
        for (ki, &k) in config.k_values.iter().enumerate() {
            for trial in 0..config.n_states {
                let mut rng = config.rng(&[li as u64, ki as u64, trial as u64]);
                let rho = random_state(&spectrum, config.dim, &mut rng)?;
                let chart = ParamChart::at(&rho);
                let design = random_design(config.dim, k, &mut rng)?;
                let f = design_fisher(&rho, &design, &chart)?;
                let eigs = f.whitened_eigenvalues(&weight_matrix(&chart));
                for (i, (&e, &m)) in eigs.iter().zip(&mean_eigs).enumerate() {
                    rows.push(FisherConcentrationRow {
                        lambda2: l2,
                        k,
                        trial,
                        eig_index: i,
                        eigenvalue: e,
                        mean_eigenvalue: m,
                        band_low: (1.0 - config.epsilon) * m,
                        band_high: (1.0 + config.epsilon) * m,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseConcentrationRow {
    pub lambda2: f64,
    pub k: usize,
    pub trial: usize,
    /// `ok` or `singular`.
    pub status: &'static str,
    pub mse_trace: Option<f64>,
    pub optimal: f64,
    pub band_low: f64,
    pub band_high: f64,
}

impl MseConcentrationRow {
    pub fn in_band(&self) -> bool {
        self.mse_trace.is_some_and(|t| t >= self.band_low && t <= self.band_high)
    }
}

impl CsvRow for MseConcentrationRow {
    fn header() -> &'static [&'static str] {
        &["lambda2", "k", "trial", "status", "mse_trace", "optimal", "band_low", "band_high"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.lambda2.to_string(),
            self.k.to_string(),
            self.trial.to_string(),
            self.status.to_string(),
            opt(self.mse_trace),
            self.optimal.to_string(),
            self.band_low.to_string(),
            self.band_high.to_string(),
        ]
    }
}

/// `Tr(I(rho|S)^{-1} G)` for random states and designs against the
/// Monte-Carlo optimum `Tr(I_bar^{-1} G)`.
pub fn run_mse_concentration(config: &ExperimentConfig) -> Result<Vec<MseConcentrationRow>> {
    config.validate()?;
    let scale = if config.fig2_normalize && config.dim == 2 { 0.5 } else { 1.0 };
    let mut rows = Vec::new();
    for (li, &l2) in config.lambda2_values.iter().enumerate() {
        let spectrum = spectrum_for(config, l2)?;
        let basis = linalg::CMatrix::identity(config.dim, config.dim);
        let rho_ref = make_rank_r_state(&spectrum, &basis)?;
        let chart_ref = ParamChart::new(basis, spectrum.len())?;
        let mean = mean_fisher_mc(&rho_ref, &chart_ref, config.n_mc_samples, &mut config.rng(&[li as u64, u64::MAX]))?;
        let optimal = scale * mean.mse_trace(&weight_matrix(&chart_ref))?;
        for (ki, &k) in config.k_values.iter().enumerate() {
            for trial in 0..config.n_states {
                let mut rng = config.rng(&[li as u64, ki as u64, trial as u64]);
                let rho = random_state(&spectrum, config.dim, &mut rng)?;
                let chart = ParamChart::at(&rho);
                let design = random_design(config.dim, k, &mut rng)?;
                let f = design_fisher(&rho, &design, &chart)?;
                let trace = match f.mse_trace(&weight_matrix(&chart)) {
                    Ok(t) => Some(scale * t),
                    Err(TomoError::SingularFisher { .. }) => None,
                    Err(e) => return Err(e),
                };
                rows.push(MseConcentrationRow {
                    lambda2: l2,
                    k,
                    trial,
                    status: if trace.is_some() { "ok" } else { "singular" },
                    mse_trace: trace,
                    optimal,
                    band_low: (1.0 - config.epsilon) * optimal,
                    band_high: (1.0 + config.epsilon) * optimal,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub lambda2: f64,
    pub k: usize,
    pub n: u64,
    pub mean_frob_sq: f64,
    pub se_frob: f64,
    pub mean_infid: f64,
    pub se_infid: f64,
}

impl CsvRow for ScalingRow {
    fn header() -> &'static [&'static str] {
        &["lambda2", "k", "N", "mean_frob_sq", "se_frob", "mean_infid", "se_infid"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.lambda2.to_string(),
            self.k.to_string(),
            self.n.to_string(),
            self.mean_frob_sq.to_string(),
            self.se_frob.to_string(),
            self.mean_infid.to_string(),
            self.se_infid.to_string(),
        ]
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean MLE errors against `N = m k` over independent (truth direction,
/// design, data) draws.
pub fn run_scaling(config: &ExperimentConfig) -> Result<Vec<ScalingRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (li, &l2) in config.lambda2_values.iter().enumerate() {
        let spectrum: Vec<f64> = if config.dim == 2 {
            if l2 <= PURE_CUTOFF {
                vec![1.0]
            } else {
                vec![1.0 - l2, l2]
            }
        } else {
            spectrum_for(config, l2)?
        };
        for (ki, &k) in config.k_values.iter().enumerate() {
            let mut frob = Vec::with_capacity(config.n_design_draws);
            let mut infid = Vec::with_capacity(config.n_design_draws);
            for draw in 0..config.n_design_draws {
                let mut rng = config.rng(&[li as u64, ki as u64, draw as u64]);
                let rho = random_state(&spectrum, config.dim, &mut rng)?;
                let design = random_design(config.dim, k, &mut rng)?;
                let counts = simulate_counts(&rho, &design, config.m, &mut rng)?;
                let est = mle_estimate(&counts, &design, &MleConfig::default())?.state;
                frob.push(frobenius_sq(&est, &rho)?);
                infid.push(general_infidelity(&est, &rho)?);
            }
            let (mean_frob_sq, se_frob) = mean_and_se(&frob);
            let (mean_infid, se_infid) = mean_and_se(&infid);
            rows.push(ScalingRow { lambda2: l2, k, n: config.m * k as u64, mean_frob_sq, se_frob, mean_infid, se_infid });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckRow {
    pub trial: usize,
    pub lambda_min: f64,
    pub k: u64,
    pub status: &'static str,
    pub mse_trace: Option<f64>,
    pub bound: f64,
    pub exceeds: bool,
}

impl CsvRow for BoundCheckRow {
    fn header() -> &'static [&'static str] {
        &["trial", "lambda_min", "k", "status", "mse_trace", "bound", "exceeds"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.trial.to_string(),
            self.lambda_min.to_string(),
            self.k.to_string(),
            self.status.to_string(),
            opt(self.mse_trace),
            self.bound.to_string(),
            u8::from(self.exceeds).to_string(),
        ]
    }
}

/// Fraction of rows whose trace exceeds the bound (singular designs count
/// as exceedances).
pub fn exceedance_fraction(rows: &[BoundCheckRow]) -> f64 {
    rows.iter().filter(|r| r.exceeds).count() as f64 / rows.len().max(1) as f64
}

/// Observed `Tr(I(rho|S)^{-1} G)` against `2 (1 + eps) (r + 1) D / r` at
/// `k = ceil(C2 (r + 1) ln(2D / delta))`. Every other trial pins the
/// smallest eigenvalue to `1e-3`; `n_design_draws` sets the trial count.
pub fn run_bound_check(config: &ExperimentConfig) -> Result<Vec<BoundCheckRow>> {
    config.validate()?;
    let (r, d) = (config.rank, config.dim);
    let k = theorem2_k(r, d, config.c2_value(), config.delta);
    let bound = theorem2_bound(r, d, config.epsilon);
    let mut rows = Vec::with_capacity(config.n_design_draws);
    for trial in 0..config.n_design_draws {
        let mut rng = config.rng(&[trial as u64]);
        let pinned = (trial % 2 == 0 && r > 1).then_some(1e-3);
        let spectrum = random_spectrum(r, pinned, &mut rng);
        let rho = random_state(&spectrum, d, &mut rng)?;
        let chart = ParamChart::at(&rho);
        let design = random_design(d, k as usize, &mut rng)?;
        let f = design_fisher(&rho, &design, &chart)?;
        let trace = if f.min_eigenvalue() < SINGULAR_TOL { None } else { f.mse_trace(&weight_matrix(&chart)).ok() };
        rows.push(BoundCheckRow {
            trial,
            lambda_min: *spectrum.last().expect("non-empty spectrum"),
            k,
            status: if trace.is_some() { "ok" } else { "singular" },
            mse_trace: trace,
            bound,
            exceeds: trace.is_none_or(|t| t > bound),
        });
    }
    debug_assert_eq!(param_count(r, d), chart_dim(r, d));
    Ok(rows)
}

fn chart_dim(r: usize, d: usize) -> usize {
    2 * r * d - r * r - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub lambda2: f64,
    pub element: FisherElement,
    pub analytic_mean: f64,
    pub mc_mean: f64,
    pub std_error: f64,
    pub observed_min: f64,
    pub observed_max: f64,
    pub range_low: f64,
    pub range_high: f64,
    pub pass: bool,
}

impl CsvRow for Table1Row {
    fn header() -> &'static [&'static str] {
        &[
            "lambda2",
            "element",
            "analytic_mean",
            "mc_mean",
            "std_error",
            "observed_min",
            "observed_max",
            "range_low",
            "range_high",
            "pass",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.lambda2.to_string(),
            self.element.to_string(),
            self.analytic_mean.to_string(),
            self.mc_mean.to_string(),
            self.std_error.to_string(),
            self.observed_min.to_string(),
            self.observed_max.to_string(),
            self.range_low.to_string(),
            self.range_high.to_string(),
            u8::from(self.pass).to_string(),
        ]
    }
}

/// Monte-Carlo means and extremes of the six qubit Fisher elements over
/// `n_mc_samples` Haar settings per `lambda2`.
pub fn run_table1_validate(config: &ExperimentConfig) -> Result<Vec<Table1Row>> {
    config.validate()?;
    let n = config.n_mc_samples;
    let mut rows = Vec::new();
    for (li, &l2) in config.lambda2_values.iter().enumerate() {
        let mut rng = config.rng(&[li as u64]);
        let mut sum = [linalg::KahanSum::default(); 6];
        let mut sq = [linalg::KahanSum::default(); 6];
        let mut lo = [f64::INFINITY; 6];
        let mut hi = [f64::NEG_INFINITY; 6];
        for _ in 0..n {
            let (t, p) = haar_bloch_angles(&mut rng);
            let f = qubit_fisher_closed_form(l2, t, p)?;
            for (i, e) in FisherElement::ALL.iter().enumerate() {
                let v = f[e.index()];
                sum[i].add(v);
                sq[i].add(v * v);
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        for (i, &e) in FisherElement::ALL.iter().enumerate() {
            let nf = n as f64;
            let mc_mean = sum[i].value() / nf;
            let var = (sq[i].value() / nf - mc_mean * mc_mean).max(0.0) * nf / (nf - 1.0).max(1.0);
            let std_error = (var / nf).sqrt();
            let analytic_mean = table1_mean(e, l2)?;
            let (range_low, range_high) = table1_range(e, l2)?;
            let slack = 1e-9 * range_high.abs().max(1.0);
            let pass = (analytic_mean - mc_mean).abs() <= 3.0 * std_error + 1e-12
                && lo[i] >= range_low - slack
                && hi[i] <= range_high + slack;
            rows.push(Table1Row {
                lambda2: l2,
                element: e,
                analytic_mean,
                mc_mean,
                std_error,
                observed_min: lo[i],
                observed_max: hi[i],
                range_low,
                range_high,
                pass,
            });
        }
    }
    Ok(rows)
}

/// Runs the configured experiment and writes its CSV to `out`.
pub fn run_to_writer<W: Write>(config: &ExperimentConfig, out: W) -> Result<()> {
    let (kind, seed) = (config.experiment, config.seed);
    match kind {
        ExperimentKind::FisherConcentration => write_rows(out, kind, seed, &run_fisher_concentration(config)?),
        ExperimentKind::MseConcentration => write_rows(out, kind, seed, &run_mse_concentration(config)?),
        ExperimentKind::Scaling => write_rows(out, kind, seed, &run_scaling(config)?),
        ExperimentKind::BoundCheck => write_rows(out, kind, seed, &run_bound_check(config)?),
        ExperimentKind::Table1Validate => write_rows(out, kind, seed, &run_table1_validate(config)?),
    }
}
