use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Orthonormal basis of `null(A)` as columns, via SVD of `A` padded to square.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (q, p) = a.shape();
    let mut padded = DMatrix::zeros(p.max(q), p);
    padded.rows_mut(0, q).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let scale = svd.singular_values.max().max(1.0);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol * scale)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(p, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm solution of `A x = b` for full-row-rank `A`.
pub fn min_norm_solution(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let aat = a * a.transpose();
    let chol = aat
        .cholesky()
        .ok_or_else(|| Error::Singular("A A' in minimum-norm solve".into()))?;
    Ok(a.transpose() * chol.solve(b))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().symmetric_eigenvalues()
}

/// Ratio of extreme eigenvalues of a symmetric matrix (infinite if not PD).
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    let lo = ev.min();
    let hi = ev.max();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_is_orthogonal_complement() {
        let a = DMatrix::from_row_slice(2, 4, &[2.0, 0.0, -1.0, 0.0, 0.0, 2.0, 0.0, -1.0]);
        let n = null_space(&a, 1e-12);
        assert_eq!(n.shape(), (4, 2));
        assert!((&a * &n).abs().max() < 1e-12);
        let gram = n.transpose() * &n;
        assert!((gram - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn full_rank_square_has_empty_null_space() {
        let n = null_space(&DMatrix::identity(3, 3), 1e-12);
        assert_eq!(n.ncols(), 0);
    }

    #[test]
    fn min_norm_solution_satisfies_system() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![9.0]);
        let x = min_norm_solution(&a, &b).unwrap();
        assert!((&a * &x - &b).abs().max() < 1e-12);
        assert!((x - DVector::from_vec(vec![1.0, 2.0, 2.0])).abs().max() < 1e-12);
    }
}
