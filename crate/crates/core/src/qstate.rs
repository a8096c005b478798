//! Density matrices and the rank-r local chart.
//!
//! A rank-r state is written in its own eigenbasis as
//! `Diag(l1, .., lr, 0, .., 0)`. Nearby rank-r states are described to first
//! order by the entries of the first `r` rows: the diagonal entries
//! `(2,2)..(r,r)` (the `(1,1)` entry is fixed by the trace), and the real and
//! imaginary parts of the upper-triangular entries `(j,k)` with `j <= r`.
//! That gives `D = 2rd - r^2 - 1` coordinates.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Result, TomoError};
use crate::linalg::{self, CMatrix, C_ONE};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const RANK_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-10;

/// Number of local coordinates of the rank-`r` manifold in dimension `d`.
pub fn param_count(rank: usize, dim: usize) -> usize {
    2 * rank * dim - rank * rank - 1
}

/// A `d x d` Hermitian, positive semidefinite, unit-trace matrix with a known
/// numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rank: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates every density-matrix invariant, including that exactly
    /// `rank` eigenvalues exceed `1e-10`.
    pub fn new(matrix: CMatrix, rank: usize) -> Result<Self> {
        let numerical = Self::validate(&matrix)?;
        if numerical != rank {
            return Err(TomoError::InvalidState(format!(
                "declared rank {rank} but {numerical} eigenvalues exceed {RANK_TOL:e}"
            )));
        }
        Ok(Self { rank, matrix })
    }

    /// Like [`DensityMatrix::new`] but takes the rank from the spectrum.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let rank = Self::validate(&matrix)?;
        Ok(Self { rank, matrix })
    }

    fn validate(matrix: &CMatrix) -> Result<usize> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(TomoError::InvalidState("matrix must be square and non-empty".into()));
        }
        let herm = linalg::hermiticity_defect(matrix);
        if herm > HERMITIAN_TOL {
            return Err(TomoError::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = linalg::trace(matrix);
        if (tr - C_ONE).norm() > TRACE_TOL {
            return Err(TomoError::InvalidState(format!("trace {tr} differs from 1")));
        }
        let eig = linalg::eigvalsh_desc(matrix);
        let min = *eig.last().unwrap();
        if min < -PSD_TOL {
            return Err(TomoError::NotPositive { min_eigenvalue: min });
        }
        Ok(eig.iter().filter(|&&x| x > RANK_TOL).count())
    }

    /// `I/d`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let matrix = CMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0);
        Self { rank: dim, matrix }
    }

    /// `|psi><psi|` for a (not necessarily normalized) non-zero vector.
    pub fn pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(TomoError::InvalidState("zero state vector".into()));
        }
        let v = psi / Complex64::new(norm, 0.0);
        Self::new(linalg::hermitize(&linalg::projector(&v)), 1)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh_desc(&self.matrix)
    }

    /// Eigen-decomposition with eigenvalues in descending order.
    pub fn eigen(&self) -> (Vec<f64>, CMatrix) {
        linalg::eigh_desc(&self.matrix)
    }

    /// Smallest of the `rank` nonzero eigenvalues.
    pub fn min_nonzero_eigenvalue(&self) -> f64 {
        self.eigenvalues()[self.rank - 1]
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant().re
    }
}

fn check_unitary(u: &CMatrix) -> Result<()> {
    if !u.is_square() {
        return Err(TomoError::DimensionMismatch { expected: u.nrows(), found: u.ncols() });
    }
    let deviation = linalg::unitarity_defect(u);
    if deviation > UNITARY_TOL {
        return Err(TomoError::NonUnitaryBasis { deviation });
    }
    Ok(())
}

fn check_spectrum(eigenvalues: &[f64], dim: usize) -> Result<()> {
    if eigenvalues.is_empty() || eigenvalues.len() > dim {
        return Err(TomoError::BadSpectrum(format!(
            "need between 1 and {dim} eigenvalues, got {}",
            eigenvalues.len()
        )));
    }
    if let Some(&bad) = eigenvalues.iter().find(|&&x| x.is_nan() || x <= RANK_TOL) {
        return Err(TomoError::BadSpectrum(format!("eigenvalue {bad:e} is not positive")));
    }
    let total: f64 = eigenvalues.iter().sum();
    if (total - 1.0).abs() > TRACE_TOL {
        return Err(TomoError::BadSpectrum(format!("eigenvalues sum to {total}, not 1")));
    }
    Ok(())
}

/// `U M U^dag`.
fn rotate(basis: &CMatrix, local: &CMatrix) -> CMatrix {
    linalg::hermitize(&(basis * local * basis.adjoint()))
}

fn padded_diagonal(eigenvalues: &[f64], dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for (i, &l) in eigenvalues.iter().enumerate() {
        m[(i, i)] = Complex64::new(l, 0.0);
    }
    m
}

/// Builds `sum_i l_i |v_i><v_i|` from `r` eigenvalues and the first `r`
/// columns of a unitary.
pub fn make_rank_r_state(eigenvalues: &[f64], eigenbasis: &CMatrix) -> Result<DensityMatrix> {
    check_unitary(eigenbasis)?;
    let dim = eigenbasis.nrows();
    check_spectrum(eigenvalues, dim)?;
    let m = rotate(eigenbasis, &padded_diagonal(eigenvalues, dim));
    DensityMatrix::new(m, eigenvalues.len())
}

/// Kind of a local coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Diagonal,
    Real,
    Imaginary,
}

/// One coordinate of the chart: its kind and the (0-based) matrix entry it
/// addresses in the chart's eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamIndex {
    pub kind: ParamKind,
    pub row: usize,
    pub col: usize,
}

/// Local chart at a rank-`r` reference state.
///
/// Parameter order: diagonal entries `(2,2)..(r,r)`, then real parts of the
/// upper-triangular entries of rows `1..r` in row-major order, then the
/// imaginary parts in the same order. Indices are 0-based in this API.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamChart {
    rank: usize,
    eigenbasis: CMatrix,
    index_map: Vec<ParamIndex>,
}

impl ParamChart {
    /// Chart with the given eigenbasis; the first `rank` columns span the
    /// support of the reference state.
    pub fn new(eigenbasis: CMatrix, rank: usize) -> Result<Self> {
        check_unitary(&eigenbasis)?;
        let dim = eigenbasis.nrows();
        if rank == 0 || rank > dim {
            return Err(TomoError::BadSpectrum(format!("rank {rank} not in 1..={dim}")));
        }
        let mut index_map = Vec::with_capacity(param_count(rank, dim));
        for j in 1..rank {
            index_map.push(ParamIndex { kind: ParamKind::Diagonal, row: j, col: j });
        }
        for kind in [ParamKind::Real, ParamKind::Imaginary] {
            for j in 0..rank {
                for k in (j + 1)..dim {
                    index_map.push(ParamIndex { kind, row: j, col: k });
                }
            }
        }
        debug_assert_eq!(index_map.len(), param_count(rank, dim));
        Ok(Self { rank, eigenbasis, index_map })
    }

    /// Chart at a state, using its eigenbasis with eigenvalues descending.
    pub fn at(rho: &DensityMatrix) -> Self {
        let (_, vecs) = rho.eigen();
        Self::new(vecs, rho.rank()).expect("eigenvectors are unitary")
    }

    /// Chart for `sum_i l_i |v_i><v_i|` with eigenvector columns reordered by
    /// descending eigenvalue (stable, so ties keep input order). Returns the
    /// sorted spectrum alongside.
    pub fn from_spectrum(eigenvalues: &[f64], eigenbasis: &CMatrix) -> Result<(Self, Vec<f64>)> {
        check_unitary(eigenbasis)?;
        check_spectrum(eigenvalues, eigenbasis.nrows())?;
        let dim = eigenbasis.nrows();
        let r = eigenvalues.len();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| eigenvalues[j].total_cmp(&eigenvalues[i]));
        order.extend(r..dim);
        let basis = CMatrix::from_fn(dim, dim, |row, c| eigenbasis[(row, order[c])]);
        let sorted = order[..r].iter().map(|&i| eigenvalues[i]).collect();
        Ok((Self::new(basis, r)?, sorted))
    }

    pub fn dim(&self) -> usize {
        self.eigenbasis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `D = 2rd - r^2 - 1`.
    pub fn num_params(&self) -> usize {
        self.index_map.len()
    }

    pub fn eigenbasis(&self) -> &CMatrix {
        &self.eigenbasis
    }

    pub fn index_map(&self) -> &[ParamIndex] {
        &self.index_map
    }

    pub fn param(&self, a: usize) -> Result<ParamIndex> {
        self.index_map
            .get(a)
            .copied()
            .ok_or(TomoError::IndexOutOfRange { index: a, len: self.index_map.len() })
    }

    /// Derivative of the state along coordinate `a`, in the chart's eigenbasis.
    pub fn local_tangent(&self, a: usize) -> Result<CMatrix> {
        let p = self.param(a)?;
        let d = self.dim();
        let mut t = CMatrix::zeros(d, d);
        match p.kind {
            ParamKind::Diagonal => {
                t[(p.row, p.row)] = C_ONE;
                t[(0, 0)] = -C_ONE;
            }
            ParamKind::Real => {
                t[(p.row, p.col)] = C_ONE;
                t[(p.col, p.row)] = C_ONE;
            }
            ParamKind::Imaginary => {
                t[(p.row, p.col)] = Complex64::new(0.0, 1.0);
                t[(p.col, p.row)] = Complex64::new(0.0, -1.0);
            }
        }
        Ok(t)
    }

    /// Reads the chart coordinates of an arbitrary Hermitian matrix, relative
    /// to the reference spectrum (the displacement from the chart origin).
    pub fn coordinates(&self, matrix: &CMatrix, base_spectrum: &[f64]) -> Result<LocalParameters> {
        if matrix.nrows() != self.dim() {
            return Err(TomoError::DimensionMismatch { expected: self.dim(), found: matrix.nrows() });
        }
        if base_spectrum.len() != self.rank {
            return Err(TomoError::DimensionMismatch { expected: self.rank, found: base_spectrum.len() });
        }
        let local = self.eigenbasis.adjoint() * matrix * &self.eigenbasis;
        let values = self
            .index_map
            .iter()
            .map(|p| match p.kind {
                ParamKind::Diagonal => local[(p.row, p.row)].re - base_spectrum[p.row],
                ParamKind::Real => local[(p.row, p.col)].re,
                ParamKind::Imaginary => local[(p.row, p.col)].im,
            })
            .collect();
        Ok(LocalParameters { values })
    }
}

/// Derivative `d rho / d theta_a`, rotated back to the standard basis.
/// Always traceless and Hermitian.
pub fn tangent_matrix(chart: &ParamChart, a: usize) -> Result<CMatrix> {
    Ok(rotate(&chart.eigenbasis, &chart.local_tangent(a)?))
}

/// A point in chart coordinates (displacement from the chart origin).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalParameters {
    values: Vec<f64>,
}

impl LocalParameters {
    pub fn new(chart: &ParamChart, values: Vec<f64>) -> Result<Self> {
        if values.len() != chart.num_params() {
            return Err(TomoError::DimensionMismatch { expected: chart.num_params(), found: values.len() });
        }
        Ok(Self { values })
    }

    pub fn zeros(chart: &ParamChart) -> Self {
        Self { values: vec![0.0; chart.num_params()] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// First-order chart map `rho(theta) = rho_ref + sum_a theta_a T_a`, where
/// `rho_ref` has spectrum `base_spectrum` (descending) in the chart basis.
pub fn state_from_params(
    chart: &ParamChart,
    base_spectrum: &[f64],
    theta: &LocalParameters,
) -> Result<DensityMatrix> {
    if base_spectrum.len() != chart.rank() {
        return Err(TomoError::DimensionMismatch { expected: chart.rank(), found: base_spectrum.len() });
    }
    if theta.len() != chart.num_params() {
        return Err(TomoError::DimensionMismatch { expected: chart.num_params(), found: theta.len() });
    }
    check_spectrum(base_spectrum, chart.dim())?;
    let mut local = padded_diagonal(base_spectrum, chart.dim());
    for (a, &t) in theta.values.iter().enumerate() {
        if t != 0.0 {
            local += chart.local_tangent(a)? * Complex64::new(t, 0.0);
        }
    }
    let m = rotate(&chart.eigenbasis, &local);
    let min = linalg::eigvalsh_desc(&m).last().copied().unwrap_or(0.0);
    if min < -PSD_TOL {
        return Err(TomoError::NotPositive { min_eigenvalue: min });
    }
    DensityMatrix::new(m, chart.rank())
}

/// The equal-spectrum rank-`r` state `(1/r) sum_{i<r} |v_i><v_i|` on the
/// chart's support.
pub fn equal_spectrum_state(chart: &ParamChart) -> DensityMatrix {
    let r = chart.rank();
    let m = rotate(&chart.eigenbasis, &padded_diagonal(&vec![1.0 / r as f64; r], chart.dim()));
    DensityMatrix { rank: r, matrix: m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C_ZERO;
    use crate::measurement::haar_sample;
    use crate::rng::stream_rng;

    fn std_basis(d: usize) -> CMatrix {
        CMatrix::identity(d, d)
    }

    #[test]
    fn maximally_mixed_qubit() {
        let rho = make_rank_r_state(&[0.5, 0.5], &std_basis(2)).unwrap();
        assert_eq!(rho.matrix(), DensityMatrix::maximally_mixed(2).matrix());
        assert_eq!(rho.rank(), 2);
    }

    #[test]
    fn diagonal_qubit_state() {
        let rho = make_rank_r_state(&[0.9, 0.1], &std_basis(2)).unwrap();
        assert!((rho.matrix()[(0, 0)].re - 0.9).abs() < 1e-15);
        assert!((rho.matrix()[(1, 1)].re - 0.1).abs() < 1e-15);
        assert_eq!(rho.matrix()[(0, 1)], C_ZERO);
    }

    #[test]
    fn rank_three_in_haar_basis() {
        let mut rng = stream_rng(7, 0);
        let u = haar_sample(4, &mut rng).unwrap().basis().clone();
        let third = 1.0 / 3.0;
        let rho = make_rank_r_state(&[third, third, 1.0 - 2.0 * third], &u).unwrap();
        let eig = rho.eigenvalues();
        for e in &eig[..3] {
            assert!((e - third).abs() < 1e-10);
        }
        assert!(eig[3].abs() < 1e-10);
        assert_eq!(rho.rank(), 3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad_u = CMatrix::identity(2, 2) * Complex64::new(1.1, 0.0);
        assert!(matches!(make_rank_r_state(&[0.5, 0.5], &bad_u), Err(TomoError::NonUnitaryBasis { .. })));
        assert!(matches!(make_rank_r_state(&[0.6, 0.6], &std_basis(2)), Err(TomoError::BadSpectrum(_))));
        assert!(matches!(make_rank_r_state(&[1.2, -0.2], &std_basis(2)), Err(TomoError::BadSpectrum(_))));
    }

    #[test]
    fn parameter_count_exhaustive() {
        for d in 1..=8 {
            for r in 1..=d {
                let chart = ParamChart::new(std_basis(d), r).unwrap();
                assert_eq!(chart.num_params(), 2 * r * d - r * r - 1);
                let count = |k| chart.index_map().iter().filter(|p| p.kind == k).count();
                let off = r * d - r * (r + 1) / 2;
                assert_eq!(count(ParamKind::Diagonal), r - 1);
                assert_eq!(count(ParamKind::Real), off);
                assert_eq!(count(ParamKind::Imaginary), off);
                for p in chart.index_map() {
                    match p.kind {
                        ParamKind::Diagonal => assert!(p.row == p.col && p.row >= 1 && p.row < r),
                        _ => assert!(p.row < p.col && p.row < r),
                    }
                }
            }
        }
    }

    #[test]
    fn qubit_tangents() {
        let chart = ParamChart::new(std_basis(2), 2).unwrap();
        let t0 = tangent_matrix(&chart, 0).unwrap();
        assert_eq!(t0[(0, 0)], -C_ONE);
        assert_eq!(t0[(1, 1)], C_ONE);
        let t1 = tangent_matrix(&chart, 1).unwrap();
        assert_eq!(t1[(0, 1)], C_ONE);
        assert_eq!(t1[(1, 0)], C_ONE);
        assert!(matches!(tangent_matrix(&chart, 3), Err(TomoError::IndexOutOfRange { index: 3, len: 3 })));
    }

    #[test]
    fn tangents_traceless_hermitian() {
        let mut rng = stream_rng(11, 0);
        for d in 2..=4 {
            for r in 1..=2.min(d) {
                let u = haar_sample(d, &mut rng).unwrap().basis().clone();
                let chart = ParamChart::new(u, r).unwrap();
                for a in 0..chart.num_params() {
                    let t = tangent_matrix(&chart, a).unwrap();
                    assert!(linalg::trace(&t).norm() < 1e-14);
                    assert!(linalg::hermiticity_defect(&t) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn chart_origin_and_diagonal_step() {
        let chart = ParamChart::new(std_basis(2), 2).unwrap();
        let spec = [0.9, 0.1];
        let origin = state_from_params(&chart, &spec, &LocalParameters::zeros(&chart)).unwrap();
        assert_eq!(origin, make_rank_r_state(&spec, chart.eigenbasis()).unwrap());

        let theta = LocalParameters::new(&chart, vec![0.05, 0.0, 0.0]).unwrap();
        let moved = state_from_params(&chart, &spec, &theta).unwrap();
        assert!((moved.matrix()[(0, 0)].re - 0.85).abs() < 1e-15);
        assert!((moved.matrix()[(1, 1)].re - 0.15).abs() < 1e-15);
    }

    #[test]
    fn chart_origin_exact_in_haar_basis() {
        let mut rng = stream_rng(12, 3);
        let u = haar_sample(4, &mut rng).unwrap().basis().clone();
        let chart = ParamChart::new(u, 2).unwrap();
        let spec = [0.7, 0.3];
        let origin = state_from_params(&chart, &spec, &LocalParameters::zeros(&chart)).unwrap();
        assert_eq!(origin, make_rank_r_state(&spec, chart.eigenbasis()).unwrap());
    }

    #[test]
    fn leaving_the_chart_is_reported() {
        let chart = ParamChart::new(std_basis(2), 1).unwrap();
        let theta = LocalParameters::new(&chart, vec![0.1, 0.0]).unwrap();
        assert!(matches!(state_from_params(&chart, &[1.0], &theta), Err(TomoError::NotPositive { .. })));
    }

    #[test]
    fn round_trip_through_tangent_inner_products() {
        // Recover theta from rho(theta) - rho_ref by solving G theta = <T_b, delta>.
        let mut rng = stream_rng(13, 0);
        let u = haar_sample(4, &mut rng).unwrap().basis().clone();
        let chart = ParamChart::new(u, 2).unwrap();
        let spec = [0.6, 0.4];
        let dcount = chart.num_params();
        // Off-support directions leave the PSD cone at second order, so keep steps small.
        let values: Vec<f64> = (0..dcount).map(|a| 1e-6 * ((a as f64 * 0.7).sin())).collect();
        let theta = LocalParameters::new(&chart, values.clone()).unwrap();
        let rho = state_from_params(&chart, &spec, &theta).unwrap();
        let reference = make_rank_r_state(&spec, chart.eigenbasis()).unwrap();
        let delta = rho.matrix() - reference.matrix();
        let tangents: Vec<CMatrix> = (0..dcount).map(|a| tangent_matrix(&chart, a).unwrap()).collect();
        let gram = nalgebra::DMatrix::from_fn(dcount, dcount, |a, b| linalg::trace(&(&tangents[a] * &tangents[b])).re);
        let rhs = nalgebra::DVector::from_fn(dcount, |b, _| linalg::trace(&(&tangents[b] * &delta)).re);
        let recovered = gram.lu().solve(&rhs).unwrap();
        for a in 0..dcount {
            assert!((recovered[a] - values[a]).abs() < 1e-15);
        }
        let rebuilt = state_from_params(&chart, &spec, &LocalParameters::new(&chart, recovered.iter().copied().collect()).unwrap()).unwrap();
        assert!(linalg::max_abs_diff(rebuilt.matrix(), rho.matrix()) < 1e-12);

        let read = chart.coordinates(rho.matrix(), &spec).unwrap();
        for a in 0..dcount {
            assert!((read.values()[a] - values[a]).abs() < 1e-15);
        }
    }

    #[test]
    fn from_spectrum_sorts_stably() {
        let (chart, sorted) = ParamChart::from_spectrum(&[0.2, 0.5, 0.3], &std_basis(3)).unwrap();
        assert_eq!(sorted, vec![0.5, 0.3, 0.2]);
        assert_eq!(chart.eigenbasis()[(1, 0)], C_ONE);
        let (_, tied) = ParamChart::from_spectrum(&[0.5, 0.5], &std_basis(2)).unwrap();
        assert_eq!(tied, vec![0.5, 0.5]);
    }
}
