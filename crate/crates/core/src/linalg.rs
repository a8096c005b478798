//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest entrywise deviation of `U^dag U` from the identity.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    let gram = u.adjoint() * u;
    max_abs_diff(&gram, &CMatrix::identity(n, n))
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Replace `m` by `(m + m^dag) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Ties keep the order returned by the solver.
pub fn eigh_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn eigvalsh_desc(m: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = hermitize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn sym_eigvals(m: &RMatrix) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn sym_min_eigenvalue(m: &RMatrix) -> f64 {
    sym_eigvals(m).first().copied().unwrap_or(0.0)
}

pub fn sym_max_eigenvalue(m: &RMatrix) -> f64 {
    sym_eigvals(m).last().copied().unwrap_or(0.0)
}

/// `f(M)` for a real symmetric matrix via its spectral decomposition.
pub fn sym_apply(m: &RMatrix, f: impl Fn(f64) -> f64) -> RMatrix {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mapped = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&x| f(x)));
    &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose()
}

/// Square root of a Hermitian positive semidefinite matrix; negative
/// eigenvalues from round-off are clamped to zero.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = hermitize(m).symmetric_eigen();
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()) * Complex64::new(s, 0.0);
    }
    out
}

/// Outer product `|v><v|`.
pub fn projector(v: &DVector<Complex64>) -> CMatrix {
    v * v.adjoint()
}

/// Real part of `<v|m|v>`.
pub fn expectation(m: &CMatrix, v: nalgebra::DVectorView<'_, Complex64>) -> Complex64 {
    let mv = m * v;
    v.iter().zip(mv.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// `Tr(A^{-1} B)` for symmetric positive definite `A`, through a Cholesky
/// solve rather than an explicit inverse.
pub fn trace_solve(a: &RMatrix, b: &RMatrix) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    let x = chol.solve(b);
    Some(x.trace())
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
