//! Small dense complex matrices, used for the explicit-matrix forms of the
//! OFDM and backscatter operators.

use crate::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let data = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "vector length differs from column count");
        (0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Unitary DFT matrix, `F[k][n] = exp(-2πi·kn/N) / √N`.
    pub fn unitary_dft(n: usize) -> DenseMatrix {
        let scale = 1.0 / (n as f64).sqrt();
        DenseMatrix::from_fn(n, n, |k, m| {
            let phase = -2.0 * PI * ((k * m) % n) as f64 / n as f64;
            Complex64::from_polar(scale, phase)
        })
    }

    /// Inverse of [`DenseMatrix::unitary_dft`] (its conjugate transpose).
    pub fn unitary_idft(n: usize) -> DenseMatrix {
        let scale = 1.0 / (n as f64).sqrt();
        DenseMatrix::from_fn(n, n, |m, k| {
            let phase = 2.0 * PI * ((k * m) % n) as f64 / n as f64;
            Complex64::from_polar(scale, phase)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_times_idft_is_identity() {
        let n = 7;
        let p = DenseMatrix::unitary_dft(n).mul(&DenseMatrix::unitary_idft(n));
        for r in 0..n {
            for c in 0..n {
                let expected = if r == c { 1.0 } else { 0.0 };
                assert!((p.get(r, c) - Complex64::new(expected, 0.0)).norm() < 1e-12);
            }
        }
    }
}
