use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with a canonical ordering:
/// eigenvalues ascending, and each eigenvector's largest-magnitude entry
/// (lowest index on ties) made nonnegative. The canonical form keeps
/// downstream embeddings reproducible across runs.
pub(crate) struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub(crate) fn sorted_symmetric_eigen(matrix: &DMatrix<f64>) -> Result<SortedEigen> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a nonempty square matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("matrix has nonfinite entries".into()));
    }

    let eig = matrix
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("iteration did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });

    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        canonical_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(SortedEigen { values, vectors })
}

/// Flips the vector so its largest-magnitude entry (lowest index on ties)
/// is nonnegative.
pub(crate) fn canonical_sign(col: &mut DVector<f64>) {
    let mut lead = 0usize;
    for i in 1..col.len() {
        if col[i].abs() > col[lead].abs() {
            lead = i;
        }
    }
    if col[lead] < 0.0 {
        col.neg_mut();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_ascending_and_fixes_signs() {
        // diag(3, 1, 2) permuted through an orthogonal change of basis.
        let m = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let eig = sorted_symmetric_eigen(&m).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 2.0).abs() < 1e-12);
        assert!((eig.values[2] - 3.0).abs() < 1e-12);
        // Each eigenvector is a signed unit vector; the convention makes it +e_i.
        for j in 0..3 {
            let col = eig.vectors.column(j);
            let mut lead = 0usize;
            for i in 1..3 {
                if col[i].abs() > col[lead].abs() {
                    lead = i;
                }
            }
            assert!(col[lead] > 0.0);
        }
    }

    #[test]
    fn reconstructs_the_input() {
        let raw = DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, 0.5, 0.0, 1.0, 3.0, 0.2, 0.1, 0.5, 0.2, 2.0, 0.3, 0.0, 0.1, 0.3, 1.0,
            ],
        );
        let eig = sorted_symmetric_eigen(&raw).unwrap();
        let rebuilt =
            &eig.vectors * DMatrix::from_diagonal(&eig.values) * eig.vectors.transpose();
        assert!((rebuilt - &raw).abs().max() < 1e-10);
        // Orthonormal columns.
        let gram = eig.vectors.transpose() * &eig.vectors;
        assert!((gram - DMatrix::identity(4, 4)).abs().max() < 1e-10);
    }

    #[test]
    fn rejects_nonfinite_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(
            sorted_symmetric_eigen(&m),
            Err(Error::EigenFailure(_))
        ));
    }
}
