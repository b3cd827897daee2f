//! Non-equilibrium steady state of the dissipative dynamics: the covariance
//! operator R of the driven quasi-free state, its finite-time evolution and
//! the steady current through a site.
//!
//! Both the infinite-time covariance
//!     R = 2λ ∫_0^∞ e^{-2λs} e^{-is h_E} f(h) e^{is h_E} ds
//! and its finite-time counterpart are evaluated in closed form in the h_E
//! eigenbasis: each oscillatory mode integrates against the damping to a
//! resolvent factor 2λ/(2λ + i(ε_a - ε_b)). No time stepping is involved.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{
    build_field_hamiltonian, build_hamiltonian, build_position, LatticeSpec, PotentialSpec,
};
use crate::operator::HermitianOperator;
use crate::spectral::{
    eig_hermitian, eigenvalues_only, matrix_function, SpectralDecomposition, ThermoParams,
};

/// Tolerance on the operator inequality 0 <= R <= 1.
pub const COVARIANCE_TOL: f64 = 1e-10;

/// Two-point function matrix of a quasi-free state: the expectation of
/// a*_x a_y is entry (y, x) of R. Spectrum confined to [0, 1] within
/// [`COVARIANCE_TOL`], checked on construction.
#[derive(Clone, Debug)]
pub struct CovarianceState {
    matrix: HermitianOperator,
    spectral_bounds: (f64, f64),
}

impl CovarianceState {
    pub fn new(matrix: HermitianOperator) -> Result<Self> {
        let evals = eigenvalues_only(&matrix)?;
        let lo = evals[0];
        let hi = evals[evals.len() - 1];
        if lo < -COVARIANCE_TOL || hi > 1.0 + COVARIANCE_TOL {
            return Err(Error::AssumptionViolated(format!(
                "covariance spectrum [{lo:.3e}, {hi:.6}] leaves [0, 1]"
            )));
        }
        Ok(CovarianceState {
            matrix,
            spectral_bounds: (lo, hi),
        })
    }

    pub fn zero(dim: usize) -> Self {
        CovarianceState {
            matrix: HermitianOperator::zeros(dim),
            spectral_bounds: (0.0, 0.0),
        }
    }

    pub fn matrix(&self) -> &HermitianOperator {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// (lowest, highest) eigenvalue, cached from the construction check.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        self.spectral_bounds
    }

    /// On-site density ω(a*_x a_x) = R_{xx}.
    pub fn density(&self, site: usize) -> f64 {
        self.matrix.entry(site, site).re
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// NESS covariance in the h_E eigenbasis:
/// R~_{ab} = 2λ F~_{ab} / (2λ + i(e_a - e_b)).
pub fn ness_covariance(
    he_decomp: &SpectralDecomposition,
    f_of_h: &HermitianOperator,
    lambda: f64,
) -> Result<CovarianceState> {
    check_lambda(lambda)?;
    if he_decomp.dim() != f_of_h.dim() {
        return Err(Error::DimensionMismatch(format!(
            "h_E decomposition dim {} vs f(h) dim {}",
            he_decomp.dim(),
            f_of_h.dim()
        )));
    }
    let n = he_decomp.dim();
    let eps = he_decomp.eigenvalues();
    let mut ft = he_decomp.to_eigenbasis(f_of_h.matrix());
    for a in 0..n {
        for b in 0..n {
            let z = Complex64::new(2.0 * lambda, eps[a] - eps[b]);
            ft[[a, b]] *= Complex64::new(2.0 * lambda, 0.0) / z;
        }
    }
    let r = he_decomp.from_eigenbasis(&ft);
    CovarianceState::new(HermitianOperator::symmetrized(r))
}

/// Covariance after evolving `r0` for time t under the driven dissipative
/// dynamics: the damped phase-conjugated initial term plus the finite-time
/// resolvent integral,
/// R~(t)_{ab} = e^{-zt} R0~_{ab} + 2λ F~_{ab} (1 - e^{-zt})/z,
/// z = 2λ + i(e_a - e_b).
pub fn evolve_covariance(
    r0: &CovarianceState,
    t: f64,
    he_decomp: &SpectralDecomposition,
    f_of_h: &HermitianOperator,
    lambda: f64,
) -> Result<CovarianceState> {
    check_lambda(lambda)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "evolution time must be nonnegative, got {t}"
        )));
    }
    let n = he_decomp.dim();
    if r0.dim() != n || f_of_h.dim() != n {
        return Err(Error::DimensionMismatch(
            "covariance, f(h) and h_E decomposition must share a dimension".into(),
        ));
    }
    let eps = he_decomp.eigenvalues();
    let r0t = he_decomp.to_eigenbasis(r0.matrix().matrix());
    let ft = he_decomp.to_eigenbasis(f_of_h.matrix());
    let mut out = Array2::<Complex64>::zeros((n, n));
    let two_lambda = Complex64::new(2.0 * lambda, 0.0);
    for a in 0..n {
        for b in 0..n {
            let z = Complex64::new(2.0 * lambda, eps[a] - eps[b]);
            let decay = (-z * t).exp();
            out[[a, b]] = decay * r0t[[a, b]] + two_lambda * ft[[a, b]] * (1.0 - decay) / z;
        }
    }
    let r = he_decomp.from_eigenbasis(&out);
    CovarianceState::new(HermitianOperator::symmetrized(r))
}

/// Which form of the local current observable to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurrentForm {
    /// Average of the bond current flowing x-e -> x and x -> x+e. This is
    /// the form used everywhere in the library.
    BondAverage,
    /// Variant with the duplicated forward term (i/2)(a*_x a_{x+e} -
    /// a*_{x+e} a_x + a*_{x-e} a_x - a*_x a_{x+e}); kept only for
    /// comparison. Not self-adjoint; the real part is returned.
    Unsymmetrized,
}

/// Expectation of the current at `x` in `direction`, in the quasi-free
/// state with covariance R: Im R_{x+e,x} + Im R_{x,x-e}.
pub fn site_current(
    r: &CovarianceState,
    lattice: &LatticeSpec,
    x: &[i64],
    direction: usize,
) -> Result<f64> {
    site_current_variant(r, lattice, x, direction, CurrentForm::BondAverage)
}

pub fn site_current_variant(
    r: &CovarianceState,
    lattice: &LatticeSpec,
    x: &[i64],
    direction: usize,
    form: CurrentForm,
) -> Result<f64> {
    if r.dim() != lattice.site_count() {
        return Err(Error::DimensionMismatch(format!(
            "covariance dim {} vs lattice site count {}",
            r.dim(),
            lattice.site_count()
        )));
    }
    let idx = lattice.site_index(x)?;
    let plus = lattice.shifted_site(x, direction, 1).map_err(|_| {
        Error::OutOfRange(format!("site {x:?} has no +e_{direction} neighbor in the box"))
    })?;
    let minus = lattice.shifted_site(x, direction, -1).map_err(|_| {
        Error::OutOfRange(format!("site {x:?} has no -e_{direction} neighbor in the box"))
    })?;
    let m = r.matrix();
    match form {
        CurrentForm::BondAverage => Ok(m.entry(plus, idx).im + m.entry(idx, minus).im),
        CurrentForm::Unsymmetrized => {
            // (i/2)(R_{x+e,x} - R_{x,x+e} + R_{x,x-e} - R_{x+e,x})
            let val = Complex64::new(0.0, 0.5)
                * (m.entry(plus, idx) - m.entry(idx, plus) + m.entry(idx, minus)
                    - m.entry(plus, idx));
            Ok(val.re)
        }
    }
}

/// Full pipeline: operators, spectra, NESS covariance, current. The field
/// is `params.field`; requires the open box (the position operator is
/// undefined on the torus).
pub fn steady_current(
    lattice: &LatticeSpec,
    potential: &PotentialSpec,
    params: &ThermoParams,
    x: &[i64],
    direction: usize,
) -> Result<f64> {
    let r = steady_state(lattice, potential, params)?;
    site_current(&r, lattice, x, direction)
}

/// NESS covariance for the given lattice problem.
pub fn steady_state(
    lattice: &LatticeSpec,
    potential: &PotentialSpec,
    params: &ThermoParams,
) -> Result<CovarianceState> {
    let h = build_hamiltonian(lattice, potential)?;
    let q1 = build_position(lattice, 1)?;
    let he = build_field_hamiltonian(&h, &q1, params.field)?;
    let h_decomp = eig_hermitian(&h)?;
    let f = matrix_function(&h_decomp, |e| params.occupation(e));
    let he_decomp = eig_hermitian(&he)?;
    ness_covariance(&he_decomp, &f, params.lambda())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use crate::spectral::{operator_norm, Beta};
    use approx::assert_abs_diff_eq;

    fn chain(n: i64) -> LatticeSpec {
        LatticeSpec::new(1, n, Boundary::Open).unwrap()
    }

    fn setup(
        n: i64,
        potential: &PotentialSpec,
        params: &ThermoParams,
    ) -> (SpectralDecomposition, HermitianOperator) {
        let lat = chain(n);
        let h = build_hamiltonian(&lat, potential).unwrap();
        let q = build_position(&lat, 1).unwrap();
        let he = build_field_hamiltonian(&h, &q, params.field).unwrap();
        let f = matrix_function(&eig_hermitian(&h).unwrap(), |e| params.occupation(e));
        (eig_hermitian(&he).unwrap(), f)
    }

    fn test_potential(n: i64) -> PotentialSpec {
        let mut t = std::collections::HashMap::new();
        for x in -n..=n {
            t.insert(vec![x], 0.4 * (1.3 * x as f64).sin());
        }
        PotentialSpec::Table(t)
    }

    #[test]
    fn zero_field_ness_is_equilibrium() {
        let params = ThermoParams::new(Beta::new(2.0).unwrap(), 0.1, 0.7, 0.0).unwrap();
        let (he, f) = setup(4, &test_potential(4), &params);
        let r = ness_covariance(&he, &f, params.lambda()).unwrap();
        let dev = (0..f.dim())
            .flat_map(|i| (0..f.dim()).map(move |j| (i, j)))
            .map(|(i, j)| (r.matrix().entry(i, j) - f.entry(i, j)).norm())
            .fold(0.0f64, f64::max);
        assert!(dev < 1e-12, "dev = {dev:.3e}");
    }

    #[test]
    fn strong_dissipation_pins_equilibrium_monotonically() {
        let base = ThermoParams::new(Beta::new(3.0).unwrap(), 0.0, 1.0, 0.3).unwrap();
        let mut last = f64::INFINITY;
        for lambda in [1.0, 10.0, 100.0, 1000.0] {
            let params = ThermoParams::new(base.beta, base.mu, lambda, base.field).unwrap();
            let (he, f) = setup(4, &PotentialSpec::Zero, &params);
            let r = ness_covariance(&he, &f, lambda).unwrap();
            let diff = r.matrix().add_scaled(&f, -1.0).unwrap();
            let dist = operator_norm(&diff).unwrap();
            assert!(dist < last, "not monotone at lambda = {lambda}");
            last = dist;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let params = ThermoParams::new(Beta::new(2.0).unwrap(), 0.0, 0.5, 0.1).unwrap();
        let (he, f) = setup(2, &PotentialSpec::Zero, &params);
        assert!(ness_covariance(&he, &f, 0.0).is_err());
        assert!(ness_covariance(&he, &f, -1.0).is_err());
    }

    #[test]
    fn evolve_at_zero_time_returns_initial_state() {
        let params = ThermoParams::new(Beta::new(2.0).unwrap(), 0.0, 0.5, 0.2).unwrap();
        let (he, f) = setup(3, &PotentialSpec::Zero, &params);
        let r0 = CovarianceState::zero(f.dim());
        let r = evolve_covariance(&r0, 0.0, &he, &f, params.lambda()).unwrap();
        assert!(r.matrix().max_abs() < 1e-14);
        assert!(evolve_covariance(&r0, -0.1, &he, &f, params.lambda()).is_err());
    }

    #[test]
    fn equilibrium_is_stationary_at_zero_field() {
        let params = ThermoParams::new(Beta::new(1.5).unwrap(), -0.2, 0.4, 0.0).unwrap();
        let (he, f) = setup(4, &test_potential(4), &params);
        let r0 = CovarianceState::new(f.clone()).unwrap();
        for t in [0.3, 1.7, 6.0] {
            let rt = evolve_covariance(&r0, t, &he, &f, params.lambda()).unwrap();
            let dev = rt.matrix().add_scaled(&f, -1.0).unwrap().max_abs();
            assert!(dev < 1e-12, "t = {t}: dev = {dev:.3e}");
        }
    }

    #[test]
    fn evolution_converges_exponentially_to_ness() {
        let params = ThermoParams::new(Beta::new(2.5).unwrap(), 0.1, 0.35, 0.25).unwrap();
        let (he, f) = setup(5, &test_potential(5), &params);
        let ness = ness_covariance(&he, &f, params.lambda()).unwrap();
        let r0 = CovarianceState::zero(f.dim());
        let d0 = operator_norm(&r0.matrix().add_scaled(ness.matrix(), -1.0).unwrap()).unwrap();
        for t in [0.5, 2.0, 8.0] {
            let rt = evolve_covariance(&r0, t, &he, &f, params.lambda()).unwrap();
            let dt = operator_norm(&rt.matrix().add_scaled(ness.matrix(), -1.0).unwrap()).unwrap();
            let bound = (-2.0 * params.lambda() * t).exp() * d0;
            assert!(dt <= bound + 1e-10, "t = {t}: {dt:.3e} vs bound {bound:.3e}");
            // the closed form makes this an equality (unitary conjugation)
            assert_abs_diff_eq!(dt, bound, epsilon = 1e-9);
        }
    }

    #[test]
    fn covariance_equation_of_motion_residual() {
        // dR/dt = -i[h_E, R] - 2λ(R - f(h)) via centered differences
        let params = ThermoParams::new(Beta::new(3.0).unwrap(), 0.2, 0.35, 0.2).unwrap();
        let lat = chain(4);
        let h = build_hamiltonian(&lat, &test_potential(4)).unwrap();
        let q = build_position(&lat, 1).unwrap();
        let he_op = build_field_hamiltonian(&h, &q, params.field).unwrap();
        let f = matrix_function(&eig_hermitian(&h).unwrap(), |e| params.occupation(e));
        let he = eig_hermitian(&he_op).unwrap();
        let r0 = CovarianceState::zero(f.dim());
        let t = 0.8;
        let dt = 1e-5;
        let lam = params.lambda();
        let r = evolve_covariance(&r0, t, &he, &f, lam).unwrap();
        let rp = evolve_covariance(&r0, t + dt, &he, &f, lam).unwrap();
        let rm = evolve_covariance(&r0, t - dt, &he, &f, lam).unwrap();
        let lhs = rp
            .matrix()
            .add_scaled(rm.matrix(), -1.0)
            .unwrap()
            .scaled(1.0 / (2.0 * dt));
        let comm = crate::spectral::commutator_i(&he_op, r.matrix()).unwrap();
        // -i[h_E, R] = -(i[h_E, R])
        let rhs = comm
            .scaled(-1.0)
            .add_scaled(r.matrix(), -2.0 * lam)
            .unwrap()
            .add_scaled(&f, 2.0 * lam)
            .unwrap();
        let residual = lhs.add_scaled(&rhs, -1.0).unwrap();
        let norm = operator_norm(&residual).unwrap();
        assert!(norm < 1e-8, "residual norm {norm:.3e}");
    }

    #[test]
    fn equilibrium_carries_no_current() {
        let lat = chain(5);
        let params = ThermoParams::new(Beta::new(2.0).unwrap(), 0.3, 0.5, 0.0).unwrap();
        let h = build_hamiltonian(&lat, &test_potential(5)).unwrap();
        let f = matrix_function(&eig_hermitian(&h).unwrap(), |e| params.occupation(e));
        let r = CovarianceState::new(f).unwrap();
        for x in -4..=4i64 {
            let j = site_current(&r, &lat, &[x], 1).unwrap();
            assert_abs_diff_eq!(j, 0.0, epsilon = 1e-13);
        }
        // composed at E = 0
        let j = steady_current(&lat, &test_potential(5), &params, &[0], 1).unwrap();
        assert_abs_diff_eq!(j, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn boundary_site_current_is_out_of_range() {
        let lat = chain(3);
        let r = CovarianceState::zero(lat.site_count());
        assert!(matches!(
            site_current(&r, &lat, &[3], 1),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            site_current(&r, &lat, &[-3], 1),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn current_is_odd_in_field_for_symmetric_problem() {
        let lat = chain(12);
        let beta = Beta::new(4.0).unwrap();
        let jp = steady_current(
            &lat,
            &PotentialSpec::Zero,
            &ThermoParams::new(beta, 0.0, 0.4, 0.15).unwrap(),
            &[0],
            1,
        )
        .unwrap();
        let jm = steady_current(
            &lat,
            &PotentialSpec::Zero,
            &ThermoParams::new(beta, 0.0, 0.4, -0.15).unwrap(),
            &[0],
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(jp, -jm, epsilon = 1e-10);
        assert!(jp.abs() > 1e-4, "driven current should not vanish");
    }

    #[test]
    fn overdamped_current_vanishes() {
        let lat = chain(10);
        let beta = Beta::new(4.0).unwrap();
        let j = steady_current(
            &lat,
            &PotentialSpec::Zero,
            &ThermoParams::new(beta, 0.0, 1e5, 0.2).unwrap(),
            &[0],
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(j, 0.0, epsilon = 1e-4);
    }

    #[test]
    fn driven_current_is_positive_along_the_field() {
        let lat = chain(30);
        let params = ThermoParams::new(Beta::new(10.0).unwrap(), 0.0, 0.5, 0.1).unwrap();
        let j = steady_current(&lat, &PotentialSpec::Zero, &params, &[0], 1).unwrap();
        assert!(j > 0.0, "j = {j}");
    }

    #[test]
    fn half_filled_center_density() {
        let lat = chain(40);
        let params = ThermoParams::new(Beta::new(10.0).unwrap(), 0.0, 0.5, 0.1).unwrap();
        let r = steady_state(&lat, &PotentialSpec::Zero, &params).unwrap();
        let center = lat.site_index(&[0]).unwrap();
        assert_abs_diff_eq!(r.density(center), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn unsymmetrized_variant_differs() {
        let lat = chain(20);
        let params = ThermoParams::new(Beta::new(5.0).unwrap(), 0.0, 0.5, 0.2).unwrap();
        let r = steady_state(&lat, &PotentialSpec::Zero, &params).unwrap();
        let j = site_current_variant(&r, &lat, &[0], 1, CurrentForm::BondAverage).unwrap();
        let j_var = site_current_variant(&r, &lat, &[0], 1, CurrentForm::Unsymmetrized).unwrap();
        assert!((j - j_var).abs() > 1e-12);
    }
}
