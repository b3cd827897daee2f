//! Closed-form oracles: the solvable V = 0 lattice model in one dimension
//! and the free continuous model with its Drude-form current.
//!
//! These are independent ground truths for the dense lattice engine: the
//! steady current, the zero-field conductivity and the momentum-space NESS
//! distribution are all scalar quadratures here.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::integrate_with_breakpoints;
use crate::spectral::{fermi_dirac, Beta, ThermoParams};

/// Truncate s-integrals where e^{-2λs} < 1e-14.
const DAMPING_CUTOFF: f64 = 1e-14;
/// Treat β above this like a step when placing quadrature breakpoints.
const SHARP_BETA: f64 = 100.0;

/// One-dimensional dispersion relation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dispersion {
    /// ε(k) = -a cos k on the Brillouin zone (-π, π]. The hopping
    /// convention of the lattice engine corresponds to a = 2; a = 1
    /// reproduces the printed closed forms with unit amplitude.
    Cosine { amplitude: f64 },
    /// ε(k) = k²/2 on the real line (free continuous model).
    Quadratic,
}

impl Dispersion {
    pub fn eval(&self, k: f64) -> f64 {
        match self {
            Dispersion::Cosine { amplitude } => -amplitude * k.cos(),
            Dispersion::Quadratic => 0.5 * k * k,
        }
    }

    pub fn d1(&self, k: f64) -> f64 {
        match self {
            Dispersion::Cosine { amplitude } => amplitude * k.sin(),
            Dispersion::Quadratic => k,
        }
    }

    pub fn d2(&self, k: f64) -> f64 {
        match self {
            Dispersion::Cosine { amplitude } => amplitude * k.cos(),
            Dispersion::Quadratic => 1.0,
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, Dispersion::Cosine { .. })
    }

    /// Points of (-π, π] where ε(k) = μ, for quadrature splitting at low
    /// temperature. Lattice dispersion only.
    fn fermi_points(&self, mu: f64) -> Vec<f64> {
        match self {
            Dispersion::Cosine { amplitude } => {
                let c = -mu / amplitude;
                if c.abs() <= 1.0 {
                    let k = c.acos();
                    vec![-k, k]
                } else {
                    vec![]
                }
            }
            Dispersion::Quadratic => {
                if mu > 0.0 {
                    let k = (2.0 * mu).sqrt();
                    vec![-k, k]
                } else {
                    vec![]
                }
            }
        }
    }
}

fn s_cutoff(lambda: f64) -> f64 {
    -DAMPING_CUTOFF.ln() / (2.0 * lambda)
}

fn is_sharp(beta: Beta) -> bool {
    beta.is_infinite() || beta.value() > SHARP_BETA
}

/// Momentum-space NESS occupation R(k) = 2λ ∫_0^∞ e^{-2λs} f(ε(k + sE)) ds,
/// truncated where the damping factor drops below 1e-14.
pub fn solvable_ness_distribution(k: f64, params: &ThermoParams, dispersion: &Dispersion) -> f64 {
    let lambda = params.lambda();
    let e = params.field;
    if e == 0.0 {
        return params.occupation(dispersion.eval(k));
    }
    let smax = s_cutoff(lambda);
    let integrand =
        |s: f64| 2.0 * lambda * (-2.0 * lambda * s).exp() * params.occupation(dispersion.eval(k + s * e));
    let mut breaks = Vec::new();
    if is_sharp(params.beta) {
        // s-values where ε(k + sE) crosses μ
        for kf in dispersion.fermi_points(params.mu) {
            match dispersion {
                Dispersion::Cosine { .. } => {
                    let period = 2.0 * PI / e.abs();
                    let mut base = (kf - k) / e;
                    base -= (base / period).floor() * period;
                    let mut s = base;
                    while s < smax {
                        if s > 0.0 {
                            breaks.push(s);
                        }
                        s += period;
                    }
                }
                Dispersion::Quadratic => {
                    let s = (kf - k) / e;
                    if s > 0.0 && s < smax {
                        breaks.push(s);
                    }
                }
            }
        }
    }
    integrate_with_breakpoints(&integrand, 0.0, smax, &breaks, 1e-12)
        .clamp(0.0, 1.0)
}

fn band_integral(params: &ThermoParams, dispersion: &Dispersion) -> Result<f64> {
    if !dispersion.is_lattice() {
        return Err(Error::InvalidParameter(
            "solvable lattice formulas need a periodic dispersion".into(),
        ));
    }
    let f = |k: f64| params.occupation(dispersion.eval(k)) * dispersion.d2(k);
    let breaks = if is_sharp(params.beta) {
        dispersion.fermi_points(params.mu)
    } else {
        vec![]
    };
    Ok(integrate_with_breakpoints(&f, -PI, PI, &breaks, 1e-12) / (2.0 * PI))
}

/// Steady current of the solvable model,
/// j = 2λE/(4λ² + E²) · (1/2π) ∫ f(ε(k)) ε''(k) dk.
pub fn solvable_current(params: &ThermoParams, dispersion: &Dispersion) -> Result<f64> {
    let lambda = params.lambda();
    let e = params.field;
    let prefactor = 2.0 * lambda * e / (4.0 * lambda * lambda + e * e);
    Ok(prefactor * band_integral(params, dispersion)?)
}

/// dj/dE at E = 0: σ = (1/2λ) (1/2π) ∫ f(ε(k)) ε''(k) dk.
/// 2λσ is λ-independent; σ diverges as λ ↓ 0.
pub fn solvable_conductivity(params: &ThermoParams, dispersion: &Dispersion) -> Result<f64> {
    Ok(band_integral(params, dispersion)? / (2.0 * params.lambda()))
}

/// Particle density per unit volume of the free continuous model,
/// ρ = ∫_R f(k²/2) dk; at β = ∞ this is 2√(2μ) for μ > 0, else 0.
pub fn continuum_density(beta: Beta, mu: f64) -> f64 {
    if beta.is_infinite() {
        return if mu > 0.0 { 2.0 * (2.0 * mu).sqrt() } else { 0.0 };
    }
    let b = beta.value();
    // integrand decays like e^{-β(k²/2 - μ)}; everything beyond the point
    // where the exponent reaches ~276 (e^-276 ~ 1e-120) is negligible
    let kmax = (2.0 * mu.max(0.0) + 552.0 / b).sqrt();
    let mut breaks = Vec::new();
    if mu > 0.0 && b * mu > SHARP_BETA {
        let kf = (2.0 * mu).sqrt();
        for w in [60.0 / b, 120.0 / b] {
            breaks.push(((2.0 * (mu - w)).max(0.0)).sqrt());
            breaks.push((2.0 * (mu + w)).sqrt());
        }
        breaks.push(kf);
    }
    let f = |k: f64| fermi_dirac(0.5 * k * k, beta, mu);
    2.0 * integrate_with_breakpoints(&f, 0.0, kmax, &breaks, 1e-13)
}

/// Current of the free continuous model, j = E ρ / (2λ) — exactly linear
/// in E, the Drude form with relaxation time (2λ)^{-1}.
pub fn drude_current(params: &ThermoParams) -> f64 {
    params.field * continuum_density(params.beta, params.mu) / (2.0 * params.lambda())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(beta: Beta, mu: f64, lambda: f64, field: f64) -> ThermoParams {
        ThermoParams::new(beta, mu, lambda, field).unwrap()
    }

    fn hopping() -> Dispersion {
        Dispersion::Cosine { amplitude: 2.0 }
    }

    #[test]
    fn current_vanishes_at_zero_field() {
        let p = params(Beta::new(4.0).unwrap(), 0.3, 0.5, 0.0);
        assert_eq!(solvable_current(&p, &hopping()).unwrap(), 0.0);
    }

    #[test]
    fn half_filled_zero_temperature_current() {
        // prefactor (0.1/1.01) times (1/2π)∫_{-π/2}^{π/2} 2 cos k dk = 2/π
        let p = params(Beta::INFINITE, 0.0, 0.5, 0.1);
        let j = solvable_current(&p, &hopping()).unwrap();
        let want = (0.1 / 1.01) * 2.0 / PI;
        assert_abs_diff_eq!(j, want, epsilon = 1e-10);
        assert_abs_diff_eq!(j, 0.063031, epsilon = 1e-6);
    }

    #[test]
    fn current_peaks_at_field_equal_two_lambda() {
        let lambda = 0.3;
        let at = |e: f64| {
            let p = params(Beta::new(6.0).unwrap(), 0.0, lambda, e);
            solvable_current(&p, &hopping()).unwrap()
        };
        let peak = at(2.0 * lambda);
        assert!(peak > at(2.0 * lambda * 0.8));
        assert!(peak > at(2.0 * lambda * 1.25));
    }

    #[test]
    fn lattice_current_saturates_but_drude_is_linear() {
        let lam = 0.4;
        let big = params(Beta::new(5.0).unwrap(), 0.0, lam, 1e4);
        assert!(solvable_current(&big, &hopping()).unwrap().abs() < 1e-3);
        let d1 = drude_current(&params(Beta::INFINITE, 1.0, lam, 1.0));
        let d2 = drude_current(&params(Beta::INFINITE, 1.0, lam, 2.0));
        assert_abs_diff_eq!(d2, 2.0 * d1, epsilon = 1e-12);
    }

    #[test]
    fn conductivity_closed_forms() {
        // 2λσ = 2/π at half filling, β = ∞
        for lambda in [0.1, 0.5, 2.0] {
            let p = params(Beta::INFINITE, 0.0, lambda, 0.0);
            let sigma = solvable_conductivity(&p, &hopping()).unwrap();
            assert_abs_diff_eq!(2.0 * lambda * sigma, 2.0 / PI, epsilon = 1e-10);
        }
        // empty band
        let p = params(Beta::INFINITE, -2.5, 0.5, 0.0);
        assert_abs_diff_eq!(
            solvable_conductivity(&p, &hopping()).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn conductivity_is_small_field_slope() {
        let lam = 0.5;
        let sigma = solvable_conductivity(&params(Beta::new(10.0).unwrap(), 0.4, lam, 0.0), &hopping())
            .unwrap();
        // Richardson: slope error should drop by ~4 when E halves
        let slope = |e: f64| {
            solvable_current(&params(Beta::new(10.0).unwrap(), 0.4, lam, e), &hopping()).unwrap() / e
        };
        let d1 = (slope(1e-2) - sigma).abs();
        let d2 = (slope(5e-3) - sigma).abs();
        assert!(d2 < 0.3 * d1, "d1 = {d1:.3e}, d2 = {d2:.3e}");
        assert_abs_diff_eq!(slope(1e-4), sigma, epsilon = 1e-8 * sigma.abs().max(1.0));
    }

    #[test]
    fn ness_distribution_limits() {
        let disp = hopping();
        let p0 = params(Beta::new(7.0).unwrap(), 0.2, 0.5, 0.0);
        for k in [-2.0, 0.0, 1.3] {
            assert_eq!(
                solvable_ness_distribution(k, &p0, &disp),
                p0.occupation(disp.eval(k))
            );
        }
        // huge dissipation pins the equilibrium value
        let pinned = params(Beta::new(7.0).unwrap(), 0.2, 1e4, 0.3);
        // residual deviation is the physical O(E/λ) drift correction
        for k in [-2.0, 0.4] {
            assert_abs_diff_eq!(
                solvable_ness_distribution(k, &pinned, &disp),
                pinned.occupation(disp.eval(k)),
                epsilon = 1e-4
            );
        }
    }

    #[test]
    fn ness_distribution_matches_riemann_sum() {
        let disp = hopping();
        let p = params(Beta::INFINITE, 0.0, 0.5, 0.1);
        let r = solvable_ness_distribution(0.0, &p, &disp);
        assert!(r > 0.0 && r < 1.0);
        // brute-force fixed-step Riemann oracle
        let smax = (1e14f64).ln() / (2.0 * p.lambda());
        let n = 2_000_000;
        let h = smax / n as f64;
        let k = 0.0;
        let mut sum = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) * h;
            sum += (-2.0 * p.lambda() * s).exp() * p.occupation(disp.eval(k + s * p.field));
        }
        let brute = 2.0 * p.lambda() * sum * h;
        assert_abs_diff_eq!(r, brute, epsilon = 1e-8);
    }

    #[test]
    fn ness_distribution_in_unit_interval_and_normalized() {
        let disp = hopping();
        let p = params(Beta::new(10.0).unwrap(), 0.3, 0.4, 0.25);
        let n = 257;
        let mut mean_r = 0.0;
        let mut mean_f = 0.0;
        for i in 0..n {
            let k = -PI + 2.0 * PI * (i as f64 + 0.5) / n as f64;
            let r = solvable_ness_distribution(k, &p, &disp);
            assert!((-1e-12..=1.0 + 1e-12).contains(&r));
            mean_r += r;
            mean_f += p.occupation(disp.eval(k));
        }
        // the s-shift is measure-preserving on the torus: densities agree
        assert_abs_diff_eq!(mean_r / n as f64, mean_f / n as f64, epsilon = 1e-8);
    }

    #[test]
    fn drude_values() {
        // β = ∞, μ = 1: ρ = 2√2, j = E·2√2/(2λ)
        let p = params(Beta::INFINITE, 1.0, 0.5, 0.01);
        assert_abs_diff_eq!(continuum_density(p.beta, p.mu), 2.0 * 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(drude_current(&p), 0.0282843, epsilon = 1e-7);
        assert_eq!(drude_current(&params(Beta::INFINITE, 1.0, 0.5, 0.0)), 0.0);
        // μ ≤ 0 at zero temperature: empty system
        assert_eq!(drude_current(&params(Beta::INFINITE, -1.0, 0.5, 0.3)), 0.0);
    }

    #[test]
    fn drude_density_converges_in_beta() {
        let want = 2.0 * 2f64.sqrt();
        let got = continuum_density(Beta::new(1e4).unwrap(), 1.0);
        assert_abs_diff_eq!(got, want, epsilon = 1e-3 * want);
        let moderate = continuum_density(Beta::new(2.0).unwrap(), 1.0);
        assert!(moderate.is_finite() && moderate > 0.0);
    }
}
