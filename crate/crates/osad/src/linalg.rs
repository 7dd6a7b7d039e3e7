//! Small dense-linear-algebra helpers shared across the crate.
//!
//! Everything funnels through one singular-value cutoff convention:
//! a direction counts as zero when its singular value is at most
//! `rel_tol * sigma_max`. Pseudoinverses use [`SV_REL_CUTOFF`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative singular-value cutoff for pseudoinverses and null spaces.
pub(crate) const SV_REL_CUTOFF: f64 = 1e-10;

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Largest absolute entry (max-abs norm); 0 for empty matrices.
pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Flip each column so its largest-magnitude entry is positive.
/// First occurrence wins on ties, which makes SVD factors reproducible.
pub(crate) fn fix_column_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut best_val = 0.0_f64;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                best_val = v;
            }
        }
        if best_val < 0.0 {
            col.neg_mut();
        }
    }
}

/// Minimal-norm pseudoinverse with the crate-wide relative cutoff.
pub(crate) fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    pinv_with(m, SV_REL_CUTOFF)
}

pub(crate) fn pinv_with(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested with u");
    let v_t = svd.v_t.as_ref().expect("svd requested with v_t");
    let smax = svd.singular_values.max();
    if !smax.is_finite() {
        return Err(Error::Numerical("non-finite singular values".into()));
    }
    let cutoff = rel_tol * smax;
    // V * Sigma^+ * U^T, dropping directions at or below the cutoff.
    let k = svd.singular_values.len();
    let mut vs = DMatrix::zeros(cols, k);
    for i in 0..k {
        let s = svd.singular_values[i];
        if s > cutoff && s > 0.0 {
            let vi = v_t.row(i).transpose() / s;
            vs.set_column(i, &vi);
        }
    }
    let _ = rows;
    Ok(vs * u.transpose())
}

/// Number of singular values above `rel_tol * sigma_max`.
pub(crate) fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 || !smax.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis (columns) of the left null space `{ w : w^T M = 0 }`.
///
/// nalgebra computes a thin SVD, which omits left singular vectors beyond
/// `min(rows, cols)`; padding M with zero columns to a square matrix makes
/// the full left factor available.
pub(crate) fn left_null_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    let cols = m.ncols();
    let padded = if cols < rows {
        let mut p = DMatrix::zeros(rows, rows);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(true, false);
    let mut u = svd.u.expect("svd requested with u");
    let smax = svd.singular_values.max();
    let cutoff = if smax > 0.0 { rel_tol * smax } else { 0.0 };
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff && s > 0.0)
        .count();
    fix_column_signs(&mut u);
    let null_dim = rows - rank;
    let mut basis = DMatrix::zeros(rows, null_dim);
    for (j, src) in (rank..u.ncols()).take(null_dim).enumerate() {
        basis.set_column(j, &u.column(src));
    }
    basis
}

/// Spectral radius via complex eigenvalues.
pub(crate) fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.norm()))
}
