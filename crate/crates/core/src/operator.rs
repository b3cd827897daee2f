//! Dense complex Hermitian matrices over flattened site indices.
//!
//! A single matrix type houses every operator of the model: the Hamiltonian
//! h, the position operator Q1, the velocity v1 = i[h, Q1], the field
//! Hamiltonian h_E, Fermi functions f(h) and covariance matrices R.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hermiticity tolerance, scaled by max(1, largest entry magnitude).
pub const HERMITICITY_TOL: f64 = 1e-12;

/// A dense complex Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    data: Array2<Complex64>,
}

/// Conjugate transpose of a dense complex matrix.
pub fn adjoint(m: &Array2<Complex64>) -> Array2<Complex64> {
    m.t().mapv(|z| z.conj())
}

/// Largest entry magnitude.
pub fn max_abs(m: &Array2<Complex64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

impl HermitianOperator {
    /// Checks squareness and Hermiticity within [`HERMITICITY_TOL`], then
    /// stores the exactly symmetrized matrix (A + A†)/2.
    pub fn new(data: Array2<Complex64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix is not square",
                data.nrows(),
                data.ncols()
            )));
        }
        let scale = max_abs(&data).max(1.0);
        let mut dev = 0.0_f64;
        for i in 0..data.nrows() {
            for j in 0..=i {
                dev = dev.max((data[[i, j]] - data[[j, i]].conj()).norm());
            }
        }
        if dev > HERMITICITY_TOL * scale {
            return Err(Error::Numerical(format!(
                "matrix is not Hermitian: max |A - A^dag| = {dev:.3e} (scale {scale:.3e})"
            )));
        }
        Ok(Self::symmetrized(data))
    }

    /// For matrices Hermitian by algebraic construction: symmetrizes without
    /// the tolerance check.
    pub(crate) fn symmetrized(mut data: Array2<Complex64>) -> Self {
        let n = data.nrows();
        for i in 0..n {
            data[[i, i]] = Complex64::new(data[[i, i]].re, 0.0);
            for j in 0..i {
                let avg = 0.5 * (data[[i, j]] + data[[j, i]].conj());
                data[[i, j]] = avg;
                data[[j, i]] = avg.conj();
            }
        }
        HermitianOperator { data }
    }

    pub fn from_real(m: &Array2<f64>) -> Result<Self> {
        Self::new(m.mapv(|x| Complex64::new(x, 0.0)))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Array2::zeros((d.len(), d.len()));
        for (i, &x) in d.iter().enumerate() {
            m[[i, i]] = Complex64::new(x, 0.0);
        }
        HermitianOperator { data: m }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn zeros(n: usize) -> Self {
        HermitianOperator {
            data: Array2::zeros((n, n)),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_matrix(self) -> Array2<Complex64> {
        self.data
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.data[[i, j]]
    }

    /// self + c * other (c real keeps Hermiticity).
    pub fn add_scaled(&self, other: &HermitianOperator, c: f64) -> Result<HermitianOperator> {
        check_same_dim(self, other)?;
        Ok(HermitianOperator {
            data: &self.data + &other.data.mapv(|z| z * c),
        })
    }

    pub fn scaled(&self, c: f64) -> HermitianOperator {
        HermitianOperator {
            data: self.data.mapv(|z| z * c),
        }
    }

    /// Plain matrix product; generally not Hermitian.
    pub fn product(&self, other: &HermitianOperator) -> Result<Array2<Complex64>> {
        check_same_dim(self, other)?;
        Ok(self.data.dot(&other.data))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    /// True when every off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.data[[i, j]] != Complex64::new(0.0, 0.0) {
                    return false;
                }
            }
        }
        true
    }

    pub fn real_diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[[i, i]].re).collect()
    }
}

pub(crate) fn check_same_dim(a: &HermitianOperator, b: &HermitianOperator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operators have dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_non_square() {
        let m = Array2::<Complex64>::zeros((2, 3));
        assert!(HermitianOperator::new(m).is_err());
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = array![[c(0., 0.), c(1., 0.)], [c(2., 0.), c(0., 0.)]];
        assert!(HermitianOperator::new(m).is_err());
    }

    #[test]
    fn accepts_and_symmetrizes() {
        let eps = 1e-14;
        let m = array![[c(1., 0.), c(0., 1. + eps)], [c(0., -1.), c(2., 0.)]];
        let h = HermitianOperator::new(m).unwrap();
        assert_eq!(h.entry(0, 1), h.entry(1, 0).conj());
    }

    #[test]
    fn diagonal_detection() {
        let d = HermitianOperator::from_diagonal(&[1., 2., 3.]);
        assert!(d.is_diagonal());
        assert_eq!(d.real_diagonal(), vec![1., 2., 3.]);
        let m = array![[c(0., 0.), c(-1., 0.)], [c(-1., 0.), c(0., 0.)]];
        assert!(!HermitianOperator::new(m).unwrap().is_diagonal());
    }

    #[test]
    fn add_scaled_matches_entries() {
        let a = HermitianOperator::from_diagonal(&[1., 2.]);
        let b = HermitianOperator::from_diagonal(&[10., 20.]);
        let s = a.add_scaled(&b, -0.5).unwrap();
        assert_eq!(s.real_diagonal(), vec![-4., -8.]);
    }
}
