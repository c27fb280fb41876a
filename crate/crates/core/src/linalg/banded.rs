//! Banded LU with partial pivoting for complex matrices.
//!
//! Storage follows the LAPACK `gbtrf` layout: entry A(r, c) lives in row
//! `kl + ku + r - c` of a `(2 kl + ku + 1) × n` array, which leaves `kl`
//! extra superdiagonals for the fill-in created by row interchanges.

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<Complex64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, ldab, ab: vec![ZERO; ldab * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r + self.kl + self.ku && r <= c + self.kl);
        c * self.ldab + (self.kl + self.ku + r - c)
    }

    fn in_band(&self, r: usize, c: usize) -> bool {
        r < self.n && c < self.n && c <= r + self.ku && r <= c + self.kl
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        if self.in_band(r, c) {
            self.ab[self.idx(r, c)]
        } else {
            ZERO
        }
    }

    /// Panics when (r, c) lies outside the declared band.
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        assert!(self.in_band(r, c), "entry ({r}, {c}) outside band (kl = {}, ku = {})", self.kl, self.ku);
        let k = self.idx(r, c);
        self.ab[k] = v;
    }

    pub fn add(&mut self, r: usize, c: usize, v: Complex64) {
        assert!(self.in_band(r, c), "entry ({r}, {c}) outside band (kl = {}, ku = {})", self.kl, self.ku);
        let k = self.idx(r, c);
        self.ab[k] += v;
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.n];
        for (c, &xc) in x.iter().enumerate() {
            let lo = c.saturating_sub(self.ku);
            let hi = (c + self.kl).min(self.n - 1);
            for r in lo..=hi {
                y[r] += self.ab[self.idx(r, c)] * xc;
            }
        }
        y
    }

    /// Maximum column sum of absolute values.
    pub fn norm_1(&self) -> f64 {
        (0..self.n)
            .map(|c| {
                let lo = c.saturating_sub(self.ku);
                let hi = (c + self.kl).min(self.n - 1);
                (lo..=hi).map(|r| self.ab[self.idx(r, c)].norm()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> faer::Mat<Complex64> {
        faer::Mat::from_fn(self.n, self.n, |r, c| self.get(r, c))
    }

    /// Factorise in place. Fails with `SingularSystem` on an exactly zero pivot.
    pub fn factorize(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let anorm = self.norm_1();
        let mut ipiv = vec![0usize; n];
        for k in 0..n {
            let rmax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.ab[self.idx(k, k)].norm();
            for r in k + 1..=rmax {
                let v = self.ab[self.idx(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            ipiv[k] = p;
            if best == 0.0 {
                return Err(Error::SingularSystem { cond: f64::INFINITY });
            }
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    let a = self.idx(k, c);
                    let b = self.idx(p, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.idx(k, k)];
            for r in k + 1..=rmax {
                let ir = self.idx(r, k);
                let m = self.ab[ir] / pivot;
                self.ab[ir] = m;
                if m == ZERO {
                    continue;
                }
                for c in k + 1..=cmax {
                    let kc = self.ab[self.idx(k, c)];
                    let rc = self.idx(r, c);
                    self.ab[rc] -= m * kc;
                }
            }
        }
        Ok(BandedLu { lu: self, ipiv, anorm })
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu {
    lu: BandedMatrix,
    ipiv: Vec<usize>,
    anorm: f64,
}

impl BandedLu {
    /// Solve A x = b.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let m = &self.lu;
        let n = m.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.ipiv[k]);
            let xk = x[k];
            if xk != ZERO {
                for r in k + 1..=(k + m.kl).min(n - 1) {
                    x[r] -= m.ab[m.idx(r, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..=(k + m.kl + m.ku).min(n - 1) {
                s -= m.ab[m.idx(k, c)] * x[c];
            }
            x[k] = s / m.ab[m.idx(k, k)];
        }
        x
    }

    /// Solve Aᴴ x = b.
    pub fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        let m = &self.lu;
        let n = m.n;
        let w = m.kl + m.ku;
        let mut x = b.to_vec();
        // Uᴴ y = b
        for k in 0..n {
            let mut s = x[k];
            for c in k.saturating_sub(w)..k {
                s -= m.ab[m.idx(c, k)].conj() * x[c];
            }
            x[k] = s / m.ab[m.idx(k, k)].conj();
        }
        // then the elementary transforms in reverse order
        for k in (0..n).rev() {
            let mut s = ZERO;
            for r in k + 1..=(k + m.kl).min(n - 1) {
                s += m.ab[m.idx(r, k)].conj() * x[r];
            }
            x[k] -= s;
            x.swap(k, self.ipiv[k]);
        }
        x
    }

    /// Estimate of the 1-norm condition number (Hager/Higham).
    pub fn condition_estimate(&self) -> f64 {
        let n = self.lu.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        for iter in 0..5 {
            let y = self.solve(&x);
            let ynorm: f64 = y.iter().map(|v| v.norm()).sum();
            if !ynorm.is_finite() {
                return f64::INFINITY;
            }
            if iter > 0 && ynorm <= est {
                break;
            }
            est = ynorm;
            let xi: Vec<Complex64> =
                y.iter().map(|v| if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) }).collect();
            let z = self.solve_adjoint(&xi);
            let (jmax, zmax) =
                z.iter().enumerate().map(|(j, v)| (j, v.norm())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx: f64 = z.iter().zip(&x).map(|(zi, xi)| (zi.conj() * xi).re).sum();
            if iter > 0 && zmax <= ztx {
                break;
            }
            x = vec![ZERO; n];
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        // Higham's alternating-sign probe guards against a poor first direction
        let alt: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
            })
            .collect();
        let y = self.solve(&alt);
        let alt_est = 2.0 * y.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        self.anorm * est.max(alt_est)
    }
}
