//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().expect("empty matrix")
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

/// Smallest eigenvalue that is not numerically zero, i.e. larger than
/// `rel_tol * max(|λ|)`. `None` for the zero matrix.
pub fn smallest_nonzero_eigenvalue(m: &DMatrix<f64>, rel_tol: f64) -> Option<f64> {
    let ev = sym_eigenvalues(m);
    let scale = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    ev.into_iter().find(|v| v.abs() > rel_tol * scale)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a: f64, &s| a.max(s))
}

/// Minimum-norm least-squares solution of `a · X = b` (pseudo-inverse).
/// Singular values below `rel_tol * σ_max` are treated as zero.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "system has {} rows but right-hand side has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    svd.solve(b, rel_tol * smax.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Singular(e.to_string()))
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}
