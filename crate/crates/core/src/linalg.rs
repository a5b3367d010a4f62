//! Small dense linear-algebra helpers shared by the operators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below `PINV_REL_TOL * σ_max` are treated as zero.
pub const PINV_REL_TOL: f64 = 1e-10;

const SVD_MAX_ITERATIONS: usize = 100_000;

/// Thin SVD restricted to the numerically non-zero singular values.
pub(crate) struct RankRevealed {
    /// Left singular vectors, `rows x rank`.
    pub u: DMatrix<f64>,
    /// Non-zero singular values.
    pub sigma: DVector<f64>,
    /// Right singular vectors, `cols x rank`.
    pub v: DMatrix<f64>,
}

pub(crate) fn rank_revealing_svd(m: &DMatrix<f64>, rel_tol: f64) -> Result<RankRevealed> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(RankRevealed {
            u: DMatrix::zeros(rows, 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(cols, 0),
        });
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or(Error::Numerical {
            max_iterations: SVD_MAX_ITERATIONS,
            rows,
            cols,
        })?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| s_max > 0.0 && svd.singular_values[i] > rel_tol * s_max)
        .collect();
    let r = keep.len();
    let mut ur = DMatrix::zeros(rows, r);
    let mut vr = DMatrix::zeros(cols, r);
    let mut sr = DVector::zeros(r);
    for (k, &i) in keep.iter().enumerate() {
        ur.set_column(k, &u.column(i));
        vr.set_column(k, &v_t.row(i).transpose());
        sr[k] = svd.singular_values[i];
    }
    Ok(RankRevealed {
        u: ur,
        sigma: sr,
        v: vr,
    })
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let rr = rank_revealing_svd(m, rel_tol)?;
    let mut vs = rr.v.clone();
    for (k, s) in rr.sigma.iter().enumerate() {
        vs.column_mut(k).scale_mut(1.0 / s);
    }
    Ok(vs * rr.u.transpose())
}

/// Orthogonal projector onto the null space of `m` (a `cols x cols` matrix).
pub fn null_space_projector(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let cols = m.ncols();
    let rr = rank_revealing_svd(m, rel_tol)?;
    Ok(DMatrix::identity(cols, cols) - &rr.v * rr.v.transpose())
}

#[inline]
pub fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn ensure_finite(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite values")))
    }
}

pub(crate) fn ensure_finite_matrix(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite values")))
    }
}

/// Row-major flattening, the layout used for matrix-valued parameters.
pub fn to_row_major(m: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = m.shape();
    DVector::from_iterator(r * c, (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])))
}

pub fn from_row_major(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = pinv(&m, PINV_REL_TOL).unwrap();
        // Penrose conditions
        let mpm = &m * &p * &m;
        assert!((mpm - &m).norm() < 1e-12);
        let pmp = &p * &m * &p;
        assert!((pmp - &p).norm() < 1e-12);
    }

    #[test]
    fn null_projector_annihilates_rows() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let p = null_space_projector(&m, PINV_REL_TOL).unwrap();
        assert!((&m * &p).norm() < 1e-14);
        assert!((&p * &p - &p).norm() < 1e-14);
    }

    #[test]
    fn empty_matrices() {
        let m = DMatrix::<f64>::zeros(0, 4);
        let p = null_space_projector(&m, PINV_REL_TOL).unwrap();
        assert_eq!(p, DMatrix::identity(4, 4));
        assert_eq!(pinv(&m, PINV_REL_TOL).unwrap().shape(), (4, 0));
    }

    #[test]
    fn row_major_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = to_row_major(&m);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(from_row_major(&v, 2, 3), m);
    }
}
