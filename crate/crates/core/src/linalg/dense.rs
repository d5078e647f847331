//! Small dense helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eig(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = h.nrows();
    let hs = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(hs);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Ascending eigenpairs of a symmetric 3x3 matrix; columns are eigenvectors.
pub fn sym_eig3(m: &Matrix3<f64>) -> ([f64; 3], Matrix3<f64>) {
    let hs = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(hs);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    let vecs = Matrix3::from_fn(|r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Ascending solutions of `A x = lambda B x` with `B` positive definite.
/// Eigenvectors are `B`-orthonormal columns.
pub fn generalized_sym_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let bs = (b + b.transpose()) * 0.5;
    let chol = bs
        .cholesky()
        .ok_or_else(|| Error::Solver("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let c = &linv * a * linv.transpose();
    let (vals, y) = sym_eig(c);
    let x = linv.transpose() * y;
    Ok((vals, x))
}

/// `G_ij = <u_i, v_j>`.
pub fn gram(u: &[Vec<f64>], v: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(u.len(), v.len(), |i, j| super::dot(&u[i], &v[j]))
}

/// Columns of `V * coef`.
pub fn combine(v: &[Vec<f64>], coef: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let len = v.first().map_or(0, |x| x.len());
    (0..coef.ncols())
        .map(|j| {
            let mut out = vec![0.0; len];
            for (i, vi) in v.iter().enumerate() {
                let c = coef[(i, j)];
                if c != 0.0 {
                    super::axpy(c, vi, &mut out);
                }
            }
            out
        })
        .collect()
}

/// Dense matrix of a linear operator, built column by column.
pub fn operator_matrix(dim: usize, op: &dyn Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        op(&e, &mut col);
        m.set_column(j, &nalgebra::DVector::from_column_slice(&col));
        e[j] = 0.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_matches_scaled_standard() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 8.0]);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let (v, x) = generalized_sym_eig(&a, &b).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 4.0).abs() < 1e-14);
        let bx = x.transpose() * &b * &x;
        assert!((bx - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
