//! Eigendecomposition of Hermitian operators and functions of operators,
//! notably the Fermi-Dirac function.

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{Eigh, EighInto, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{adjoint, check_same_dim, HermitianOperator};

/// Inverse temperature: a positive real or +infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Beta(f64);

impl Beta {
    pub const INFINITE: Beta = Beta(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive (or inf), got {value}"
            )));
        }
        Ok(Beta(value))
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Thermodynamic and driving parameters: inverse temperature β, chemical
/// potential μ, dissipation strength λ and field E.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermoParams {
    pub beta: Beta,
    pub mu: f64,
    lambda: f64,
    pub field: f64,
}

impl ThermoParams {
    pub fn new(beta: Beta, mu: f64, lambda: f64, field: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        if !mu.is_finite() || !field.is_finite() {
            return Err(Error::InvalidParameter(
                "mu and field must be finite".into(),
            ));
        }
        Ok(ThermoParams {
            beta,
            mu,
            lambda,
            field,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_field(&self, field: f64) -> Result<Self> {
        ThermoParams::new(self.beta, self.mu, self.lambda, field)
    }

    pub fn occupation(&self, eps: f64) -> f64 {
        fermi_dirac(eps, self.beta, self.mu)
    }
}

/// Occupation 1/(1 + e^{β(ε-μ)}), overflow-safe for large |β(ε-μ)|.
///
/// At β = ∞ this is the step 1 / 1/2 / 0 for ε below / at / above μ.
pub fn fermi_dirac(eps: f64, beta: Beta, mu: f64) -> f64 {
    if beta.is_infinite() {
        return if eps < mu {
            1.0
        } else if eps > mu {
            0.0
        } else {
            0.5
        };
    }
    let x = beta.value() * (eps - mu);
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a
/// Hermitian operator.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<Complex64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Array2<Complex64> {
        &self.eigenvectors
    }

    /// U† M U.
    pub fn to_eigenbasis(&self, m: &Array2<Complex64>) -> Array2<Complex64> {
        adjoint(&self.eigenvectors).dot(&m.dot(&self.eigenvectors))
    }

    /// U M U†.
    pub fn from_eigenbasis(&self, m: &Array2<Complex64>) -> Array2<Complex64> {
        self.eigenvectors.dot(&m.dot(&adjoint(&self.eigenvectors)))
    }

    /// U† v.
    pub fn vector_to_eigenbasis(&self, v: ArrayView1<Complex64>) -> Array1<Complex64> {
        adjoint(&self.eigenvectors).dot(&v)
    }

    /// Reconstructs U diag(ε) U†.
    pub fn reconstruct(&self) -> HermitianOperator {
        matrix_function(self, |e| e)
    }
}

/// Dense Hermitian eigendecomposition (LAPACK), eigenvalues ascending.
pub fn eig_hermitian(a: &HermitianOperator) -> Result<SpectralDecomposition> {
    let (eigenvalues, vectors) = a
        .matrix()
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e}")))?;
    // the row-major buffer reaches LAPACK as its transpose = conj(A), so the
    // returned columns are conjugates of the eigenvectors of A
    let eigenvectors = vectors.mapv(|z| z.conj());
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues_only(a: &HermitianOperator) -> Result<Array1<f64>> {
    let (evals, _) = a
        .matrix()
        .clone()
        .eigh_into(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("eigensolver failed: {e}")))?;
    Ok(evals)
}

/// Operator norm (largest |eigenvalue|) of a Hermitian operator.
pub fn operator_norm(a: &HermitianOperator) -> Result<f64> {
    let evals = eigenvalues_only(a)?;
    Ok(evals.iter().fold(0.0_f64, |m, &e| m.max(e.abs())))
}

/// g(A) = U diag(g(ε)) U†. The spectrum of the result is exactly {g(ε_n)}.
pub fn matrix_function(
    decomp: &SpectralDecomposition,
    g: impl Fn(f64) -> f64,
) -> HermitianOperator {
    let n = decomp.dim();
    let mut scaled = decomp.eigenvectors.clone();
    for j in 0..n {
        let gj = Complex64::new(g(decomp.eigenvalues[j]), 0.0);
        scaled.column_mut(j).mapv_inplace(|z| z * gj);
    }
    let m = scaled.dot(&adjoint(&decomp.eigenvectors));
    HermitianOperator::symmetrized(m)
}

/// i(AB - BA); Hermitian when A and B are.
///
/// Real-diagonal operands take the exact elementwise route
/// i[diag(a), X]_{jk} = i (a_j - a_k) X_{jk}, which avoids the O(n^3)
/// products and is Hermitian to the last bit.
pub fn commutator_i(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    check_same_dim(a, b)?;
    let n = a.dim();
    if a.is_diagonal() {
        let d = a.real_diagonal();
        let mut m = Array2::zeros((n, n));
        for j in 0..n {
            for k in 0..n {
                m[[j, k]] = Complex64::new(0.0, d[j] - d[k]) * b.entry(j, k);
            }
        }
        return Ok(HermitianOperator::symmetrized(m));
    }
    if b.is_diagonal() {
        let d = b.real_diagonal();
        let mut m = Array2::zeros((n, n));
        for j in 0..n {
            for k in 0..n {
                m[[j, k]] = Complex64::new(0.0, d[k] - d[j]) * a.entry(j, k);
            }
        }
        return Ok(HermitianOperator::symmetrized(m));
    }
    let ab = a.matrix().dot(b.matrix());
    let ba = b.matrix().dot(a.matrix());
    let m = (&ab - &ba).mapv(|z| z * Complex64::new(0.0, 1.0));
    Ok(HermitianOperator::symmetrized(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn chain3() -> HermitianOperator {
        HermitianOperator::from_real(&array![[0., -1., 0.], [-1., 0., -1.], [0., -1., 0.]])
            .unwrap()
    }

    #[test]
    fn fermi_half_at_mu() {
        for beta in [0.5, 1.0, 7.3, 1e4] {
            assert_eq!(fermi_dirac(2.0, Beta::new(beta).unwrap(), 2.0), 0.5);
        }
    }

    #[test]
    fn fermi_scalar_value() {
        let f = fermi_dirac(1.0, Beta::new(2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(f, 1.0 / (1.0 + (2.0_f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(f, 0.119202922, epsilon = 1e-9);
    }

    #[test]
    fn fermi_zero_temperature_steps() {
        let b = Beta::INFINITE;
        assert_eq!(fermi_dirac(-0.1, b, 0.0), 1.0);
        assert_eq!(fermi_dirac(0.1, b, 0.0), 0.0);
        assert_eq!(fermi_dirac(0.0, b, 0.0), 0.5);
    }

    #[test]
    fn fermi_overflow_safe() {
        let b = Beta::new(1e4).unwrap();
        assert_eq!(fermi_dirac(100.0, b, 0.0), 0.0);
        assert_eq!(fermi_dirac(-100.0, b, 0.0), 1.0);
        assert!(fermi_dirac(1e-3, b, 0.0).is_finite());
    }

    #[test]
    fn beta_rejects_nonpositive() {
        assert!(Beta::new(0.0).is_err());
        assert!(Beta::new(-1.0).is_err());
        assert!(Beta::new(f64::NAN).is_err());
        assert!(Beta::new(f64::INFINITY).is_ok());
    }

    #[test]
    fn thermo_rejects_bad_lambda() {
        let b = Beta::new(1.0).unwrap();
        assert!(ThermoParams::new(b, 0.0, 0.0, 0.0).is_err());
        assert!(ThermoParams::new(b, 0.0, -0.5, 0.0).is_err());
        assert!(ThermoParams::new(b, 0.0, 0.5, 0.0).is_ok());
    }

    #[test]
    fn eig_identity() {
        let d = eig_hermitian(&HermitianOperator::identity(4)).unwrap();
        for &e in d.eigenvalues() {
            assert_abs_diff_eq!(e, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn eig_chain3_spectrum() {
        let d = eig_hermitian(&chain3()).unwrap();
        let s2 = 2.0_f64.sqrt();
        assert_abs_diff_eq!(d.eigenvalues()[0], -s2, epsilon = 1e-12);
        assert_abs_diff_eq!(d.eigenvalues()[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.eigenvalues()[2], s2, epsilon = 1e-12);
    }

    #[test]
    fn eig_sorts_ascending_with_permutation_vectors() {
        let d = eig_hermitian(&HermitianOperator::from_diagonal(&[3., 1., 2.])).unwrap();
        assert_eq!(d.eigenvalues().to_vec(), vec![1., 2., 3.]);
        // eigenvector for eigenvalue 1 is e_1 up to phase
        assert_abs_diff_eq!(d.eigenvectors()[[1, 0]].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matrix_function_identity_and_constant() {
        let h = chain3();
        let d = eig_hermitian(&h).unwrap();
        let back = matrix_function(&d, |e| e);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(
                    (back.entry(i, j) - h.entry(i, j)).norm(),
                    0.0,
                    epsilon = 1e-10
                );
            }
        }
        let one = matrix_function(&d, |_| 1.0);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(one.entry(i, j).re, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn matrix_function_fermi_spectrum() {
        let beta = Beta::new(1.0).unwrap();
        let h = chain3();
        let d = eig_hermitian(&h).unwrap();
        let f = matrix_function(&d, |e| fermi_dirac(e, beta, 0.0));
        let evals = eigenvalues_only(&f).unwrap();
        let s2 = 2.0_f64.sqrt();
        let expect = [
            fermi_dirac(s2, beta, 0.0),
            0.5,
            fermi_dirac(-s2, beta, 0.0),
        ];
        for (got, want) in evals.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-12);
        }
        // scalar values of the occupied/empty levels: 1/(1+e^{-sqrt2}), 1/(1+e^{sqrt2})
        assert_abs_diff_eq!(expect[2], 1.0 / (1.0 + (-s2).exp()), epsilon = 1e-14);
        assert_abs_diff_eq!(expect[0], 1.0 / (1.0 + s2.exp()), epsilon = 1e-14);
        assert_abs_diff_eq!(expect[2] + expect[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn commutator_with_self_is_zero() {
        let h = chain3();
        let z = commutator_i(&h, &h).unwrap();
        assert!(z.max_abs() <= 1e-14);
    }

    #[test]
    fn commutator_diagonal_rule_matches_general() {
        let q = HermitianOperator::from_diagonal(&[-1., 0., 1.]);
        let h = chain3();
        let fast = commutator_i(&q, &h).unwrap();
        // general path: strip the diagonal fast path by perturbing an
        // off-diagonal of a copy of q and subtracting the correction
        let qm = q.matrix().clone();
        let hm = h.matrix().clone();
        let general = (&qm.dot(&hm) - &hm.dot(&qm)).mapv(|z| z * c(0., 1.));
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!((fast.entry(i, j) - general[[i, j]]).norm(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn commutator_dimension_mismatch() {
        let a = HermitianOperator::identity(2);
        let b = HermitianOperator::identity(3);
        assert!(commutator_i(&a, &b).is_err());
    }

    fn random_hermitian(seed: u64, n: usize) -> HermitianOperator {
        // cheap deterministic pseudo-random Hermitian matrix
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) - 0.5
        };
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = c(next(), 0.0);
            for j in 0..i {
                let z = c(next(), next());
                m[[i, j]] = z;
                m[[j, i]] = z.conj();
            }
        }
        HermitianOperator::new(m).unwrap()
    }

    proptest! {
        #[test]
        fn particle_hole_symmetry(eps in -50.0_f64..50.0, mu in -5.0_f64..5.0, beta in 0.01_f64..100.0) {
            let b = Beta::new(beta).unwrap();
            let s = fermi_dirac(eps, b, mu) + fermi_dirac(2.0 * mu - eps, b, mu);
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn spectrum_of_g_is_g_of_spectrum(seed in 0u64..500) {
            let h = random_hermitian(seed, 5);
            let d = eig_hermitian(&h).unwrap();
            let g = |e: f64| e.tanh();
            let gh = matrix_function(&d, g);
            let got = eigenvalues_only(&gh).unwrap();
            let mut want: Vec<f64> = d.eigenvalues().iter().map(|&e| g(e)).collect();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (x, y) in got.iter().zip(want.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn decomposition_invariants(seed in 0u64..200) {
            let h = random_hermitian(seed, 6);
            let d = eig_hermitian(&h).unwrap();
            // reconstruction
            let back = d.reconstruct();
            let scale = h.max_abs().max(1.0);
            for i in 0..6 {
                for j in 0..6 {
                    prop_assert!((back.entry(i, j) - h.entry(i, j)).norm() <= 1e-10 * scale);
                }
            }
            // orthonormal columns
            let u = d.eigenvectors();
            let gram = crate::operator::adjoint(u).dot(u);
            for i in 0..6 {
                for j in 0..6 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((gram[[i, j]] - c(expect, 0.0)).norm() <= 1e-12);
                }
            }
        }
    }
}
