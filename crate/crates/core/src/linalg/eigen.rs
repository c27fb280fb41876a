use std::cmp::Ordering;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigendecomposition of a general complex matrix with bi-orthonormal
/// left and right eigenvectors, uᴴ_q v_q' = δ_qq'.
///
/// The left eigenvectors are the rows of V⁻¹, so the pairing is exact up to
/// the conditioning of V; the residual fields report how well that holds.
#[derive(Clone, Debug)]
pub struct BiorthogonalEigen {
    /// Sorted by real part, then imaginary part.
    pub values: Vec<Complex64>,
    /// Right eigenvectors as columns, unit 2-norm.
    pub right: Mat<Complex64>,
    /// Left eigenvectors as columns, normalised so uᴴv = 1.
    pub left: Mat<Complex64>,
    /// max_q ‖A v − λ v‖ / ‖v‖
    pub eigen_residual: f64,
    /// max_q ‖uᴴA − λ uᴴ‖ / ‖u‖
    pub left_residual: f64,
    /// max |Uᴴ V − I|
    pub biorthogonality_residual: f64,
    /// max |V Uᴴ − I|
    pub completeness_residual: f64,
}

pub fn eigen_biorthogonal(a: &Mat<Complex64>) -> Result<BiorthogonalEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if n == 0 {
        return Ok(BiorthogonalEigen {
            values: vec![],
            right: Mat::zeros(0, 0),
            left: Mat::zeros(0, 0),
            eigen_residual: 0.0,
            left_residual: 0.0,
            biorthogonality_residual: 0.0,
            completeness_residual: 0.0,
        });
    }
    if a.col_iter().any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }

    let (values, right) = if is_diagonal(a) {
        // exact shortcut: coordinate eigenvectors
        ((0..n).map(|i| a[(i, i)]).collect::<Vec<_>>(), Mat::<Complex64>::identity(n, n))
    } else {
        let evd = a.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let values: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
        let mut v = evd.U().to_owned();
        for q in 0..n {
            let nrm = v.col(q).norm_l2();
            if nrm > 0.0 {
                for r in 0..n {
                    v[(r, q)] /= nrm;
                }
            }
        }
        (values, v)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| cmp_complex(values[p], values[q]));
    let values: Vec<Complex64> = order.iter().map(|&q| values[q]).collect();
    let right = Mat::from_fn(n, n, |r, c| right[(r, order[c])]);

    let vinv = right.partial_piv_lu().inverse();
    if vinv.col_iter().any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(Error::Eigen("eigenvector matrix is singular".into()));
    }
    let left = vinv.adjoint().to_owned();

    let av = a * &right;
    let mut eigen_residual: f64 = 0.0;
    for q in 0..n {
        let mut s = 0.0;
        for r in 0..n {
            s += (av[(r, q)] - values[q] * right[(r, q)]).norm_sqr();
        }
        eigen_residual = eigen_residual.max(s.sqrt() / right.col(q).norm_l2());
    }
    // rows of V⁻¹ A against λ V⁻¹
    let ua = &vinv * a;
    let mut left_residual: f64 = 0.0;
    for q in 0..n {
        let mut s = 0.0;
        let mut un = 0.0;
        for c in 0..n {
            s += (ua[(q, c)] - values[q] * vinv[(q, c)]).norm_sqr();
            un += vinv[(q, c)].norm_sqr();
        }
        left_residual = left_residual.max(s.sqrt() / un.sqrt());
    }
    let biorthogonality_residual = identity_defect(&(&vinv * &right));
    let completeness_residual = identity_defect(&(&right * &vinv));

    Ok(BiorthogonalEigen { values, right, left, eigen_residual, left_residual, biorthogonality_residual, completeness_residual })
}

pub(crate) fn cmp_complex(a: Complex64, b: Complex64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

fn is_diagonal(a: &Mat<Complex64>) -> bool {
    let n = a.nrows();
    (0..n).all(|c| (0..n).all(|r| r == c || a[(r, c)] == Complex64::new(0.0, 0.0)))
}

/// max |M − I|
pub fn identity_defect(m: &Mat<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let target = if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            worst = worst.max((m[(r, c)] - target).norm());
        }
    }
    worst
}
