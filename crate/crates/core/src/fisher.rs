//! Classical and quantum Fisher information in the local rank-r chart.
//!
//! For a setting with vectors `v_o`, the outcome probabilities are linear in
//! the chart coordinates, so `dp_o/dtheta_a = Tr(T_a |v_o><v_o|) = V_o[a]`
//! and the per-setting information is `sum_o V_o V_o^T / p_o` over outcomes
//! with `p_o` above [`P_FLOOR`].

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use itertools::Itertools;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Result, TomoError};
use crate::linalg::{self, CMatrix, RMatrix};
use crate::measurement::{self, haar_sample, parse_meta, MeasurementDesign, MeasurementSetting};
use crate::qstate::{equal_spectrum_state, DensityMatrix, ParamChart, ParamKind};

/// Outcomes with probability at or below this floor are left out of the sum.
pub const P_FLOOR: f64 = 1e-12;

/// Design averages with a smaller minimum eigenvalue are treated as singular.
pub const SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherKind {
    ClassicalSetting,
    ClassicalDesign,
    MeanHaar,
    Quantum,
}

impl fmt::Display for FisherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FisherKind::ClassicalSetting => "classical-per-setting",
            FisherKind::ClassicalDesign => "classical-design-average",
            FisherKind::MeanHaar => "mean-over-Haar",
            FisherKind::Quantum => "quantum",
        })
    }
}

impl FromStr for FisherKind {
    type Err = TomoError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "classical-per-setting" => FisherKind::ClassicalSetting,
            "classical-design-average" => FisherKind::ClassicalDesign,
            "mean-over-Haar" => FisherKind::MeanHaar,
            "quantum" => FisherKind::Quantum,
            other => return Err(TomoError::Parse(format!("unknown Fisher kind `{other}`"))),
        })
    }
}

/// A `D x D` Fisher information matrix tied to a chart.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    kind: FisherKind,
    chart: ParamChart,
    matrix: RMatrix,
    std_errors: Option<RMatrix>,
}

impl FisherMatrix {
    pub fn new(kind: FisherKind, chart: ParamChart, matrix: RMatrix) -> Result<Self> {
        let dd = chart.num_params();
        if matrix.nrows() != dd || matrix.ncols() != dd {
            return Err(TomoError::DimensionMismatch { expected: dd, found: matrix.nrows() });
        }
        Ok(Self { kind, chart, matrix, std_errors: None })
    }

    pub fn kind(&self) -> FisherKind {
        self.kind
    }

    pub fn chart(&self) -> &ParamChart {
        &self.chart
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.matrix
    }

    /// Entrywise Monte-Carlo standard errors, for [`FisherKind::MeanHaar`].
    pub fn std_errors(&self) -> Option<&RMatrix> {
        self.std_errors.as_ref()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::sym_min_eigenvalue(&self.matrix)
    }

    /// `G^{-1/2} I G^{-1/2}`.
    pub fn whitened(&self, g: &WeightMatrix) -> RMatrix {
        &g.inv_sqrt * &self.matrix * &g.inv_sqrt
    }

    /// Eigenvalues of the whitened matrix, ascending.
    pub fn whitened_eigenvalues(&self, g: &WeightMatrix) -> Vec<f64> {
        linalg::sym_eigvals(&self.whitened(g))
    }

    /// `Tr(I^{-1} G)`, the asymptotic `N * E||rho_hat - rho||_2^2`.
    pub fn mse_trace(&self, g: &WeightMatrix) -> Result<f64> {
        let min = self.min_eigenvalue();
        if min < SINGULAR_TOL {
            return Err(TomoError::SingularFisher { min_eigenvalue: min });
        }
        linalg::trace_solve(&self.matrix, &g.matrix).ok_or(TomoError::SingularFisher { min_eigenvalue: min })
    }

    /// `I^{-1}`, only for non-singular (design-averaged) matrices.
    pub fn inverse(&self) -> Result<RMatrix> {
        let min = self.min_eigenvalue();
        if min < SINGULAR_TOL {
            return Err(TomoError::SingularFisher { min_eigenvalue: min });
        }
        let dd = self.matrix.nrows();
        self.matrix
            .clone()
            .cholesky()
            .map(|c| c.solve(&RMatrix::identity(dd, dd)))
            .ok_or(TomoError::SingularFisher { min_eigenvalue: min })
    }

    /// CSV of `row,col,value` preceded by `# kind=<..> D=<int> r=<int> d=<int>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# kind={} D={} r={} d={}",
            self.kind,
            self.chart.num_params(),
            self.chart.rank(),
            self.chart.dim()
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "value"])?;
        for r in 0..self.matrix.nrows() {
            for c in 0..self.matrix.ncols() {
                w.write_record(&[r.to_string(), c.to_string(), self.matrix[(r, c)].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`FisherMatrix::write_csv`]; the metadata
    /// must agree with `chart`.
    pub fn read_csv<R: Read>(mut input: R, chart: &ParamChart) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let (meta, body) = text.split_once('\n').ok_or_else(|| TomoError::Parse("empty Fisher file".into()))?;
        let fields = parse_meta(meta)?;
        let field = |key: &str| {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| TomoError::Parse(format!("missing `{key}` in Fisher metadata")))
        };
        let kind: FisherKind = field("kind")?.parse()?;
        let int = |key: &str| -> Result<usize> { field(key)?.parse().map_err(|e| TomoError::Parse(format!("bad `{key}`: {e}"))) };
        let (dd, r, d) = (int("D")?, int("r")?, int("d")?);
        if dd != chart.num_params() || r != chart.rank() || d != chart.dim() {
            return Err(TomoError::DimensionMismatch { expected: chart.num_params(), found: dd });
        }
        let mut m = RMatrix::zeros(dd, dd);
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            let parse_err = |e: String| TomoError::Parse(e);
            let row: usize = rec.get(0).unwrap_or("").parse().map_err(|e| parse_err(format!("{e}")))?;
            let col: usize = rec.get(1).unwrap_or("").parse().map_err(|e| parse_err(format!("{e}")))?;
            let val: f64 = rec.get(2).unwrap_or("").parse().map_err(|e| parse_err(format!("{e}")))?;
            if row >= dd || col >= dd {
                return Err(TomoError::Parse(format!("entry ({row},{col}) out of range")));
            }
            m[(row, col)] = val;
        }
        Self::new(kind, chart.clone(), m)
    }
}

/// Gram matrix `G_ab = Tr(T_a T_b)` of the chart's tangent directions.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    matrix: RMatrix,
    inv_sqrt: RMatrix,
}

impl WeightMatrix {
    pub fn matrix(&self) -> &RMatrix {
        &self.matrix
    }

    /// `G^{-1/2}`.
    pub fn inv_sqrt(&self) -> &RMatrix {
        &self.inv_sqrt
    }
}

/// Block form: `G^dd_ab = 1 + delta_ab`, `G^rr = G^ii = 2 I`, zero cross blocks.
pub fn weight_matrix(chart: &ParamChart) -> WeightMatrix {
    let params = chart.index_map();
    let dd = params.len();
    let matrix = RMatrix::from_fn(dd, dd, |a, b| match (params[a].kind, params[b].kind) {
        (ParamKind::Diagonal, ParamKind::Diagonal) => 1.0 + f64::from(u8::from(a == b)),
        (ka, kb) if ka == kb && a == b => 2.0,
        _ => 0.0,
    });
    let inv_sqrt = linalg::sym_apply(&matrix, |x| 1.0 / x.sqrt());
    WeightMatrix { matrix, inv_sqrt }
}

/// Vectors `V_o[a] = Tr(T_a |v_o><v_o|)` for every outcome of a setting.
pub fn v_vectors(chart: &ParamChart, s: &MeasurementSetting) -> Result<Vec<DVector<f64>>> {
    if chart.dim() != s.dim() {
        return Err(TomoError::DimensionMismatch { expected: chart.dim(), found: s.dim() });
    }
    let w = chart.eigenbasis().adjoint() * s.basis();
    Ok((0..w.ncols()).map(|o| v_vector(chart, &w, o)).collect())
}

fn v_vector(chart: &ParamChart, w: &CMatrix, o: usize) -> DVector<f64> {
    let params = chart.index_map();
    DVector::from_iterator(
        params.len(),
        params.iter().map(|p| match p.kind {
            ParamKind::Diagonal => w[(p.row, o)].norm_sqr() - w[(0, o)].norm_sqr(),
            ParamKind::Real => 2.0 * (w[(p.row, o)].conj() * w[(p.col, o)]).re,
            ParamKind::Imaginary => -2.0 * (w[(p.row, o)].conj() * w[(p.col, o)]).im,
        }),
    )
}

/// Adds `I(rho|s)` into `acc`.
fn accumulate_fisher(rho: &CMatrix, basis: &CMatrix, chart: &ParamChart, acc: &mut RMatrix) -> Result<()> {
    let probs = measurement::probabilities_of(rho, basis)?;
    let w = chart.eigenbasis().adjoint() * basis;
    for (o, &p) in probs.iter().enumerate() {
        if p > P_FLOOR {
            let v = v_vector(chart, &w, o);
            acc.ger(1.0 / p, &v, &v, 1.0);
        }
    }
    Ok(())
}

fn check_dims(rho: &DensityMatrix, chart: &ParamChart, d: usize) -> Result<()> {
    if rho.dim() != chart.dim() {
        return Err(TomoError::DimensionMismatch { expected: chart.dim(), found: rho.dim() });
    }
    if d != chart.dim() {
        return Err(TomoError::DimensionMismatch { expected: chart.dim(), found: d });
    }
    Ok(())
}

/// Fisher information of a single setting. Rank at most `d - 1`; never
/// invert it on its own.
pub fn classical_fisher(rho: &DensityMatrix, s: &MeasurementSetting, chart: &ParamChart) -> Result<FisherMatrix> {
    check_dims(rho, chart, s.dim())?;
    let dd = chart.num_params();
    let mut acc = RMatrix::zeros(dd, dd);
    accumulate_fisher(rho.matrix(), s.basis(), chart, &mut acc)?;
    FisherMatrix::new(FisherKind::ClassicalSetting, chart.clone(), acc)
}

/// `I(rho|S) = (1/k) sum_s I(rho|s)`.
pub fn design_fisher(rho: &DensityMatrix, design: &MeasurementDesign, chart: &ParamChart) -> Result<FisherMatrix> {
    check_dims(rho, chart, design.dim())?;
    let dd = chart.num_params();
    let mut acc = RMatrix::zeros(dd, dd);
    for s in design.settings() {
        accumulate_fisher(rho.matrix(), s.basis(), chart, &mut acc)?;
    }
    acc /= design.len() as f64;
    FisherMatrix::new(FisherKind::ClassicalDesign, chart.clone(), acc)
}

/// Monte-Carlo estimate of the Haar-mean Fisher information, with entrywise
/// standard errors.
pub fn mean_fisher_mc<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    chart: &ParamChart,
    n_samples: usize,
    rng: &mut R,
) -> Result<FisherMatrix> {
    if n_samples == 0 {
        return Err(TomoError::BadParameters("n_samples must be at least 1".into()));
    }
    check_dims(rho, chart, rho.dim())?;
    let dd = chart.num_params();
    let mut mean = RMatrix::zeros(dd, dd);
    let mut m2 = RMatrix::zeros(dd, dd);
    let mut sample = RMatrix::zeros(dd, dd);
    for i in 0..n_samples {
        let s = haar_sample(chart.dim(), rng)?;
        sample.fill(0.0);
        accumulate_fisher(rho.matrix(), s.basis(), chart, &mut sample)?;
        // Welford update, entrywise.
        let n = (i + 1) as f64;
        for (idx, &x) in sample.iter().enumerate() {
            let delta = x - mean[idx];
            mean[idx] += delta / n;
            m2[idx] += delta * (x - mean[idx]);
        }
    }
    let n = n_samples as f64;
    let se = if n_samples > 1 { m2.map(|v| (v / (n - 1.0) / n).sqrt()) } else { RMatrix::zeros(dd, dd) };
    let mut f = FisherMatrix::new(FisherKind::MeanHaar, chart.clone(), mean)?;
    f.std_errors = Some(se);
    Ok(f)
}

/// The chart-diagonal entries `<v_j|rho|v_j>` for `j < r`.
fn chart_spectrum(rho: &DensityMatrix, chart: &ParamChart) -> Vec<f64> {
    let local = chart.eigenbasis().adjoint() * rho.matrix() * chart.eigenbasis();
    (0..chart.rank()).map(|j| local[(j, j)].re).collect()
}

/// Quantum (SLD) Fisher information at a state diagonal in the chart basis.
pub fn quantum_fisher(rho: &DensityMatrix, chart: &ParamChart) -> Result<FisherMatrix> {
    check_dims(rho, chart, rho.dim())?;
    let lam = chart_spectrum(rho, chart);
    if let Some(&bad) = lam.iter().find(|&&l| l < 1e-12) {
        return Err(TomoError::SingularSpectrum { value: bad });
    }
    let r = chart.rank();
    let params = chart.index_map();
    let dd = params.len();
    let matrix = RMatrix::from_fn(dd, dd, |a, b| {
        let (pa, pb) = (params[a], params[b]);
        match (pa.kind, pb.kind) {
            (ParamKind::Diagonal, ParamKind::Diagonal) if a == b => 1.0 / lam[pa.row] + 1.0 / lam[0],
            (ParamKind::Diagonal, ParamKind::Diagonal) => 1.0 / lam[0],
            (ka, kb) if ka == kb && a == b => {
                if pa.col < r {
                    4.0 / (lam[pa.row] + lam[pa.col])
                } else {
                    4.0 / lam[pa.row]
                }
            }
            _ => 0.0,
        }
    });
    FisherMatrix::new(FisherKind::Quantum, chart.clone(), matrix)
}

/// Result of comparing the permutation-averaged Fisher matrix with the
/// equal-spectrum one at a single setting.
#[derive(Debug, Clone)]
pub struct PermutationReport {
    /// `lambda_min(average - I(rho_0|s))`; non-negative up to round-off.
    pub min_eigenvalue: f64,
    pub average: RMatrix,
    pub equal_spectrum: RMatrix,
}

/// Averages `I(rho'|s)` over all `r!` states obtained by permuting the
/// nonzero eigenvalues of `rho` (eigenvectors fixed), and compares with the
/// equal-spectrum state's information.
pub fn permutation_average_check(
    rho: &DensityMatrix,
    s: &MeasurementSetting,
    chart: &ParamChart,
) -> Result<PermutationReport> {
    check_dims(rho, chart, s.dim())?;
    let r = chart.rank();
    if r > 5 {
        return Err(TomoError::RankTooLarge { rank: r });
    }
    let lam = chart_spectrum(rho, chart);
    let u = chart.eigenbasis();
    let d = chart.dim();
    let dd = chart.num_params();
    let mut average = RMatrix::zeros(dd, dd);
    let mut count = 0usize;
    for perm in (0..r).permutations(r) {
        let mut local = CMatrix::zeros(d, d);
        for (i, &p) in perm.iter().enumerate() {
            local[(i, i)] = Complex64::new(lam[p], 0.0);
        }
        let permuted = linalg::hermitize(&(u * local * u.adjoint()));
        accumulate_fisher(&permuted, s.basis(), chart, &mut average)?;
        count += 1;
    }
    average /= count as f64;
    let rho0 = equal_spectrum_state(chart);
    let mut equal_spectrum = RMatrix::zeros(dd, dd);
    accumulate_fisher(rho0.matrix(), s.basis(), chart, &mut equal_spectrum)?;
    let min_eigenvalue = linalg::sym_min_eigenvalue(&(&average - &equal_spectrum));
    Ok(PermutationReport { min_eigenvalue, average, equal_spectrum })
}

/// `(rho + rho_0) / 2`, with `rho_0` the equal-spectrum state on the support
/// of `rho`.
pub fn tilde_state(rho: &DensityMatrix) -> DensityMatrix {
    let chart = ParamChart::at(rho);
    let rho0 = equal_spectrum_state(&chart);
    let m = linalg::hermitize(&((rho.matrix() + rho0.matrix()) * Complex64::new(0.5, 0.0)));
    DensityMatrix::new(m, rho.rank()).expect("mixture of rank-r states on a common support")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::bloch_setting;
    use crate::qstate::{make_rank_r_state, state_from_params, tangent_matrix, LocalParameters};
    use crate::rng::stream_rng;
    use std::f64::consts::PI;

    fn random_state(r: usize, d: usize, seed: u64) -> DensityMatrix {
        let mut rng = stream_rng(seed, 99);
        let mut lam: Vec<f64> = (0..r).map(|_| 0.1 + rng.random::<f64>()).collect();
        let total: f64 = lam.iter().sum();
        lam.iter_mut().for_each(|l| *l /= total);
        let fix: f64 = 1.0 - lam[1..].iter().sum::<f64>();
        lam[0] = fix;
        make_rank_r_state(&lam, haar_sample(d, &mut rng).unwrap().basis()).unwrap()
    }

    fn qubit(l2: f64) -> (DensityMatrix, ParamChart) {
        let rho = make_rank_r_state(&[1.0 - l2, l2], &CMatrix::identity(2, 2)).unwrap();
        let chart = ParamChart::new(CMatrix::identity(2, 2), 2).unwrap();
        (rho, chart)
    }

    fn assert_close(a: &RMatrix, b: &RMatrix, tol: f64) {
        let diff = (a - b).abs().max();
        assert!(diff <= tol, "max diff {diff:e} > {tol:e}\n{a}\n{b}");
    }

    #[test]
    fn weight_matrix_blocks() {
        let g = weight_matrix(&ParamChart::new(CMatrix::identity(2, 2), 2).unwrap());
        assert_close(g.matrix(), &(RMatrix::identity(3, 3) * 2.0), 0.0);
        let g = weight_matrix(&ParamChart::new(CMatrix::identity(5, 5), 1).unwrap());
        assert_close(g.matrix(), &(RMatrix::identity(8, 8) * 2.0), 0.0);
        let g = weight_matrix(&ParamChart::new(CMatrix::identity(4, 4), 3).unwrap());
        assert_eq!(g.matrix()[(0, 0)], 2.0);
        assert_eq!(g.matrix()[(0, 1)], 1.0);
        assert!(linalg::sym_min_eigenvalue(g.matrix()) >= 1.0 - 1e-12);
    }

    #[test]
    fn weight_matrix_equals_tangent_traces() {
        let mut rng = stream_rng(21, 0);
        for (r, d) in [(2, 4), (1, 3), (3, 4), (2, 2)] {
            let chart = ParamChart::new(haar_sample(d, &mut rng).unwrap().basis().clone(), r).unwrap();
            let g = weight_matrix(&chart);
            let t: Vec<CMatrix> = (0..chart.num_params()).map(|a| tangent_matrix(&chart, a).unwrap()).collect();
            for a in 0..t.len() {
                for b in 0..t.len() {
                    let tr = linalg::trace(&(&t[a] * &t[b])).re;
                    assert!((tr - g.matrix()[(a, b)]).abs() < 1e-12);
                }
            }
            if (r, d) == (2, 4) {
                assert_eq!(chart.num_params(), 11);
            }
        }
    }

    #[test]
    fn qubit_equator_setting() {
        for l2 in [0.1, 0.25, 0.5] {
            let (rho, chart) = qubit(l2);
            let f = classical_fisher(&rho, &bloch_setting(PI / 2.0, 0.0), &chart).unwrap();
            assert_close(f.matrix(), &RMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 4.0, 0.0])), 1e-12);
        }
    }

    #[test]
    fn qubit_pole_setting() {
        let l2 = 0.2;
        let (rho, chart) = qubit(l2);
        let f = classical_fisher(&rho, &bloch_setting(0.0, 0.3), &chart).unwrap();
        let expected = RMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / (l2 * (1.0 - l2)), 0.0, 0.0]));
        assert_close(f.matrix(), &expected, 1e-12);
    }

    #[test]
    fn v_vector_decomposition() {
        let mut rng = stream_rng(22, 0);
        for t in 0..20 {
            let rho = random_state(2, 4, 100 + t);
            let chart = ParamChart::at(&rho);
            let s = haar_sample(4, &mut rng).unwrap();
            let f = classical_fisher(&rho, &s, &chart).unwrap();
            let p = measurement::outcome_probabilities(&rho, &s).unwrap();
            let vs = v_vectors(&chart, &s).unwrap();
            let mut sum = RMatrix::zeros(11, 11);
            for (v, &po) in vs.iter().zip(&p) {
                sum += v * v.transpose() / po;
            }
            assert_close(f.matrix(), &sum, 1e-10);
            // dp/dtheta_a = Tr(T_a P_o)
            for a in 0..chart.num_params() {
                let ta = tangent_matrix(&chart, a).unwrap();
                for o in 0..4 {
                    let pv = linalg::projector(&s.vector(o));
                    assert!((linalg::trace(&(&ta * pv)).re - vs[o][a]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn finite_difference_oracle() {
        let mut rng = stream_rng(23, 0);
        for (r, d) in [(1, 2), (2, 3), (2, 4)] {
            for t in 0..5 {
                let rho = random_state(r, d, 200 + t);
                let (spec, u) = rho.eigen();
                let (chart, spec) = ParamChart::from_spectrum(&spec[..r], &u).unwrap();
                let s = haar_sample(d, &mut rng).unwrap();
                let f = classical_fisher(&rho, &s, &chart).unwrap();
                let dd = chart.num_params();
                let p0 = measurement::outcome_probabilities(&rho, &s).unwrap();
                let h = 1e-6;
                let grads: Vec<Vec<f64>> = (0..dd)
                    .map(|a| {
                        let mut plus = vec![0.0; dd];
                        plus[a] = h;
                        let mut minus = vec![0.0; dd];
                        minus[a] = -h;
                        let pp = measurement::outcome_probabilities(&state_from_params(&chart, &spec, &LocalParameters::new(&chart, plus).unwrap()).unwrap(), &s).unwrap();
                        let pm = measurement::outcome_probabilities(&state_from_params(&chart, &spec, &LocalParameters::new(&chart, minus).unwrap()).unwrap(), &s).unwrap();
                        pp.iter().zip(&pm).map(|(x, y)| (x - y) / (2.0 * h)).collect()
                    })
                    .collect();
                let scale = f.matrix().abs().max();
                for a in 0..dd {
                    for b in 0..dd {
                        let fd: f64 = (0..d).filter(|&o| p0[o] > P_FLOOR).map(|o| grads[a][o] * grads[b][o] / p0[o]).sum();
                        let exact = f.matrix()[(a, b)];
                        assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-3 * scale), "({a},{b}) fd {fd} exact {exact}");
                    }
                }
            }
        }
    }

    #[test]
    fn design_average_properties() {
        let rho = random_state(2, 3, 300);
        let chart = ParamChart::at(&rho);
        let design = MeasurementDesign::haar(3, 6, 5).unwrap();
        let single = MeasurementDesign::new(vec![design.settings()[0].clone()], 0).unwrap();
        let one = design_fisher(&rho, &single, &chart).unwrap();
        let direct = classical_fisher(&rho, &design.settings()[0], &chart).unwrap();
        assert_close(one.matrix(), direct.matrix(), 1e-14);

        let repeated = MeasurementDesign::new(vec![design.settings()[1].clone(); 5], 0).unwrap();
        let rep = design_fisher(&rho, &repeated, &chart).unwrap();
        assert_close(rep.matrix(), classical_fisher(&rho, &design.settings()[1], &chart).unwrap().matrix(), 1e-13);

        let mut reversed: Vec<_> = design.settings().to_vec();
        reversed.reverse();
        let rev = design_fisher(&rho, &MeasurementDesign::new(reversed, 0).unwrap(), &chart).unwrap();
        assert_close(rev.matrix(), design_fisher(&rho, &design, &chart).unwrap().matrix(), 1e-13);
        assert_eq!(rev.kind(), FisherKind::ClassicalDesign);
    }

    #[test]
    fn maximally_mixed_qubit_diagonal_mean() {
        let (rho, chart) = qubit(0.5);
        let design = MeasurementDesign::haar(2, 10_000, 31).unwrap();
        let f = design_fisher(&rho, &design, &chart).unwrap();
        for a in 0..3 {
            assert!((f.matrix()[(a, a)] - 4.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn quantum_fisher_entries() {
        let (rho, chart) = qubit(0.1);
        let f = quantum_fisher(&rho, &chart).unwrap();
        assert!((f.matrix()[(0, 0)] - (10.0 + 10.0 / 9.0)).abs() < 1e-12);
        assert!((f.matrix()[(1, 1)] - 4.0).abs() < 1e-12);
        assert!((f.matrix()[(2, 2)] - 4.0).abs() < 1e-12);

        let pure = make_rank_r_state(&[1.0], &CMatrix::identity(4, 4)).unwrap();
        let chart = ParamChart::new(CMatrix::identity(4, 4), 1).unwrap();
        let f = quantum_fisher(&pure, &chart).unwrap();
        assert_close(f.matrix(), &(RMatrix::identity(6, 6) * 4.0), 1e-12);
        let wmax = linalg::sym_max_eigenvalue(&f.whitened(&weight_matrix(&chart)));
        assert!((wmax - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quantum_fisher_rejects_tiny_eigenvalue() {
        let rho = make_rank_r_state(&[1.0], &CMatrix::identity(2, 2)).unwrap();
        let chart = ParamChart::new(CMatrix::identity(2, 2), 2).unwrap();
        assert!(matches!(quantum_fisher(&rho, &chart), Err(TomoError::SingularSpectrum { .. })));
    }

    #[test]
    fn quantum_dominates_classical() {
        let mut rng = stream_rng(24, 0);
        for t in 0..5 {
            let rho = random_state(2, 4, 400 + t);
            let chart = ParamChart::at(&rho);
            let q = quantum_fisher(&rho, &chart).unwrap();
            for _ in 0..100 {
                let c = classical_fisher(&rho, &haar_sample(4, &mut rng).unwrap(), &chart).unwrap();
                assert!(linalg::sym_min_eigenvalue(&(q.matrix() - c.matrix())) >= -1e-8);
            }
        }
    }

    #[test]
    fn permutation_check_cases() {
        let mut rng = stream_rng(25, 0);
        let pure = make_rank_r_state(&[1.0], haar_sample(3, &mut rng).unwrap().basis()).unwrap();
        let chart = ParamChart::at(&pure);
        let rep = permutation_average_check(&pure, &haar_sample(3, &mut rng).unwrap(), &chart).unwrap();
        assert_close(&rep.average, &rep.equal_spectrum, 1e-12);

        let u = haar_sample(4, &mut rng).unwrap().basis().clone();
        let rho0 = make_rank_r_state(&[0.5, 0.5], &u).unwrap();
        let chart = ParamChart::new(u, 2).unwrap();
        let rep = permutation_average_check(&rho0, &haar_sample(4, &mut rng).unwrap(), &chart).unwrap();
        assert_close(&rep.average, &rep.equal_spectrum, 1e-12);

        let rho = random_state(2, 3, 500);
        let chart = ParamChart::at(&rho);
        for _ in 0..100 {
            let rep = permutation_average_check(&rho, &haar_sample(3, &mut rng).unwrap(), &chart).unwrap();
            assert!(rep.min_eigenvalue >= -1e-8);
        }

        let big = ParamChart::new(CMatrix::identity(6, 6), 6).unwrap();
        assert!(matches!(
            permutation_average_check(&DensityMatrix::maximally_mixed(6), &haar_sample(6, &mut rng).unwrap(), &big),
            Err(TomoError::RankTooLarge { rank: 6 })
        ));
    }

    #[test]
    fn tilde_state_properties() {
        let u = CMatrix::identity(2, 2);
        let rho0 = make_rank_r_state(&[0.5, 0.5], &u).unwrap();
        assert!(linalg::max_abs_diff(tilde_state(&rho0).matrix(), rho0.matrix()) < 1e-15);

        let near = make_rank_r_state(&[0.999, 0.001], &u).unwrap();
        let eig = tilde_state(&near).eigenvalues();
        assert!((eig[0] - 0.7495).abs() < 1e-12 && (eig[1] - 0.2505).abs() < 1e-12);

        let mut rng = stream_rng(26, 0);
        for t in 0..4 {
            let rho = random_state(2, 4, 600 + t);
            let tilde = tilde_state(&rho);
            let eig = tilde.eigenvalues();
            assert!(eig[0] <= 0.75 + 1e-12 && eig[1] >= 0.25 - 1e-12);
            let chart = ParamChart::at(&rho);
            for _ in 0..50 {
                let s = haar_sample(4, &mut rng).unwrap();
                let a = classical_fisher(&rho, &s, &chart).unwrap();
                let b = classical_fisher(&tilde, &s, &chart).unwrap();
                assert!(linalg::sym_min_eigenvalue(&(a.matrix() - b.matrix() * 0.5)) >= -1e-8);
            }
        }
    }

    #[test]
    fn mean_fisher_mc_qubit_offdiagonals_vanish() {
        let (rho, chart) = qubit(0.25);
        let f = mean_fisher_mc(&rho, &chart, 50_000, &mut stream_rng(27, 0)).unwrap();
        let se = f.std_errors().unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert!(f.matrix()[(a, b)].abs() <= 3.0 * se[(a, b)] + 1e-12);
        }
    }

    #[test]
    fn mse_trace_requires_invertible() {
        let (rho, chart) = qubit(0.3);
        let g = weight_matrix(&chart);
        let single = classical_fisher(&rho, &bloch_setting(1.0, 0.2), &chart).unwrap();
        assert!(matches!(single.mse_trace(&g), Err(TomoError::SingularFisher { .. })));
        let design = MeasurementDesign::haar(2, 20, 3).unwrap();
        let f = design_fisher(&rho, &design, &chart).unwrap();
        let inv = f.inverse().unwrap();
        assert!(((inv * g.matrix()).trace() - f.mse_trace(&g).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn fisher_csv_round_trip() {
        let rho = random_state(2, 3, 700);
        let chart = ParamChart::at(&rho);
        let f = design_fisher(&rho, &MeasurementDesign::haar(3, 5, 1).unwrap(), &chart).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("# kind=classical-design-average D=7 r=2 d=3\nrow,col,value\n"));
        let back = FisherMatrix::read_csv(&buf[..], &chart).unwrap();
        assert_eq!(back.matrix(), f.matrix());
        assert_eq!(back.kind(), f.kind());
    }
}
