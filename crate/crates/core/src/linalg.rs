//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DpdError, Result};

/// Relative cut-off below which singular values count as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Numerical rank with singular values below `RANK_TOL * s_max` treated as zero.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * smax).count()
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or_else(|| DpdError::Rank(format!("{what} is not positive definite")))?;
    Ok(chol.inverse())
}

pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if rank(m) < m.nrows().min(m.ncols()) {
        return Err(DpdError::Rank(format!("{what} is singular")));
    }
    m.clone().try_inverse().ok_or_else(|| DpdError::Rank(format!("{what} is singular")))
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).clone_owned();
        // fix the sign so the decomposition is reproducible
        let idx = v.iamax();
        if v[idx] < 0.0 {
            v = -v;
        }
        vectors.set_column(col, &v);
    }
    (values, vectors)
}

/// Orthonormal basis of the null space of `l^T`, i.e. of the orthogonal
/// complement of the column space of `l` (p×r, full column rank).
pub fn null_space_of_transpose(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = l.nrows();
    let r = l.ncols();
    if rank(l) != r {
        return Err(DpdError::Rank("restriction matrix L does not have full column rank".into()));
    }
    if r == p {
        return Ok(DMatrix::zeros(p, 0));
    }
    let ltl = l.transpose() * l;
    let proj = DMatrix::identity(p, p) - l * spd_inverse(&ltl, "L^T L")? * l.transpose();
    let (values, vectors) = sorted_eigen(&proj);
    debug_assert!(values[p - r - 1] > 0.5);
    Ok(vectors.columns(0, p - r).clone_owned())
}

/// Symmetric square root of a PSD matrix (negative round-off eigenvalues are clipped).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(m);
    let d = DMatrix::from_diagonal(&values.map(|v| v.max(0.0).sqrt()));
    &vectors * d * vectors.transpose()
}

pub(crate) mod serde_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(raw))
    }
}

pub(crate) mod serde_opt_mat {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Option<Vec<Vec<f64>>> =
            m.as_ref().map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect());
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        Ok(rows.map(|rows| {
            let nr = rows.len();
            let nc = rows.first().map_or(0, Vec::len);
            DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_is_orthogonal_to_l() {
        let l = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, -1.0]);
        let n = null_space_of_transpose(&l).unwrap();
        assert_eq!(n.ncols(), 2);
        assert!((l.transpose() * &n).norm() < 1e-14);
        assert!((n.transpose() * &n - DMatrix::identity(2, 2)).norm() < 1e-13);
    }

    #[test]
    fn rank_detects_collinearity() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(rank(&m), 1);
        assert!(inverse(&(m.transpose() * &m), "m").is_err());
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = psd_sqrt(&m);
        assert!((&s * &s - m).norm() < 1e-13);
    }
}
