//! Small dense helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition number below which a symmetric positive definite
/// system is treated as singular.
pub const RCOND_CUTOFF: f64 = 1e-12;

/// Eigenvalues of a symmetric matrix in descending order, with matching
/// eigenvector columns.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 1 {
        return (vec![m[(0, 0)]], DMatrix::from_element(1, 1, 1.0));
    }
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Reciprocal condition number `λ_min / λ_max` of a symmetric matrix, or 0
/// when the largest eigenvalue is not positive.
pub fn sym_rcond(m: &DMatrix<f64>) -> f64 {
    let (values, _) = sym_eigen_desc(m);
    let max = values[0];
    let min = *values.last().unwrap();
    if max <= 0.0 || !max.is_finite() {
        0.0
    } else {
        min / max
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky, refusing
/// anything with reciprocal condition below [`RCOND_CUTOFF`].
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{what} is not square")));
    }
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        // a 1x1 matrix has no relative conditioning; only positivity matters
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::SingularDesign { what, rcond: 0.0 });
        }
        return Ok(DMatrix::from_element(1, 1, 1.0 / v));
    }
    let rcond = sym_rcond(m);
    if !(rcond >= RCOND_CUTOFF) {
        return Err(Error::SingularDesign { what, rcond });
    }
    let chol = symmetrize(m)
        .cholesky()
        .ok_or(Error::SingularDesign { what, rcond })?;
    Ok(chol.inverse())
}

/// Moore-Penrose inverse of a symmetric matrix, dropping eigenvalues at or
/// below `rel_tol * λ_max`.
pub fn sym_pinv(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let (values, vectors) = sym_eigen_desc(m);
    let n = m.nrows();
    let cut = rel_tol * values[0].max(0.0);
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (i, &lam) in values.iter().enumerate() {
        if lam > cut && lam > 0.0 {
            rank += 1;
            let v = vectors.column(i);
            out += (v * v.transpose()) / lam;
        }
    }
    (out, rank)
}

/// Number of eigenvalues above `rel_tol * λ_max`; zero when `λ_max` does
/// not exceed `abs_floor`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64, abs_floor: f64) -> usize {
    let (values, _) = sym_eigen_desc(m);
    let max = values[0];
    if max <= abs_floor {
        return 0;
    }
    values.iter().filter(|&&v| v > rel_tol * max).count()
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Row vectorization: stacks the rows of `m` into one column.
pub fn vec_rows(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.nrows() * m.ncols(),
        (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])),
    )
}

pub fn unvec_rows(v: &DVector<f64>, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, ncols, |i, j| v[i * ncols + j])
}

/// Row-major nested vectors, used for JSON output.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged or empty matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Serde adapter storing a `DMatrix` as row-major nested arrays.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for a list of matrices, each stored row-major.
pub mod serde_matrix_vec {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(super::to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        all.iter()
            .map(|rows| super::from_rows(rows).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Serde adapter storing a `DVector` as a plain array.
pub mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals, vec![5.0, 3.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spd_inverse_rejects_near_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-14]);
        assert!(matches!(
            spd_inverse(&m, "test"),
            Err(Error::SingularDesign { .. })
        ));
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let inv = spd_inverse(&ok, "test").unwrap();
        assert!(((&ok * inv) - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn row_vectorization() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = vec_rows(&m);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(unvec_rows(&v, 2, 3), m);
    }

    #[test]
    fn pinv_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        let (p, rank) = sym_pinv(&m, 1e-10);
        assert_eq!(rank, 1);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
    }
}
