//! Linear-algebra kernels shared by the propagation and weak-probe paths.

pub mod banded;
pub mod eigen;
pub mod sparse;

pub use banded::{BandedLu, BandedMatrix};
pub use eigen::{eigen_biorthogonal, identity_defect, BiorthogonalEigen};
pub use sparse::CsrMatrix;

use faer::Mat;
use num_complex::Complex64;

pub fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// max |A − Aᴴ|
pub fn hermiticity_defect(m: &Mat<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn trace(m: &Mat<Complex64>) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}
