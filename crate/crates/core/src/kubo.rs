//! Site-resolved zero-field conductivity: the exact resolvent sum
//! σ_x = Re Σ_{n,m} (U†AU)_{nm} (U†v1 η_x)_m U_{xn} / (2λ + i(ε_n - ε_m)),
//! A = i[Q1, f(h)], and its finite-difference cross-check through the NESS
//! current.
//!
//! Each oscillatory mode e^{-is(ε_n - ε_m)} of the damped s-integral yields
//! the resolvent factor; degenerate pairs give 1/(2λ), which is finite, so
//! the formula is continuous across spectral degeneracies.

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, PotentialSpec};
use crate::ness::steady_current;
use crate::operator::HermitianOperator;
use crate::spectral::{commutator_i, SpectralDecomposition, ThermoParams};

/// Conductivity at one site; `a` must be i[Q1, f(h)] and `v1` the velocity,
/// both expressed in the same site basis as the decomposition of h.
pub fn conductivity_site_from_ops(
    h_decomp: &SpectralDecomposition,
    a: &HermitianOperator,
    v1: &HermitianOperator,
    lambda: f64,
    site: usize,
) -> Result<f64> {
    conductivity_sites_from_ops(h_decomp, a, v1, lambda, &[site]).map(|v| v[0])
}

/// Same resolvent sum for several sites; the expensive eigenbasis transform
/// of A is done once.
pub fn conductivity_sites_from_ops(
    h_decomp: &SpectralDecomposition,
    a: &HermitianOperator,
    v1: &HermitianOperator,
    lambda: f64,
    sites: &[usize],
) -> Result<Vec<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let n = h_decomp.dim();
    if a.dim() != n || v1.dim() != n {
        return Err(Error::DimensionMismatch(
            "operators must match the decomposition dimension".into(),
        ));
    }
    for &x in sites {
        if x >= n {
            return Err(Error::OutOfRange(format!("site index {x} >= dim {n}")));
        }
    }
    let eps = h_decomp.eigenvalues();
    let u = h_decomp.eigenvectors();
    let at = h_decomp.to_eigenbasis(a.matrix());
    let mut out = Vec::with_capacity(sites.len());
    for &x in sites {
        let w = h_decomp.vector_to_eigenbasis(v1.matrix().column(x));
        let mut sigma = 0.0;
        for nn in 0..n {
            let uxn = u[[x, nn]];
            for m in 0..n {
                let resolvent = num_complex::Complex64::new(2.0 * lambda, eps[nn] - eps[m]);
                sigma += (uxn * at[[nn, m]] * w[m] / resolvent).re;
            }
        }
        out.push(sigma);
    }
    Ok(out)
}

/// Conductivity at the site with coordinates `x`: builds A = i[Q1, f(h)]
/// and evaluates the resolvent sum.
pub fn conductivity_site(
    h_decomp: &SpectralDecomposition,
    f_of_h: &HermitianOperator,
    q1: &HermitianOperator,
    v1: &HermitianOperator,
    lambda: f64,
    site: usize,
) -> Result<f64> {
    let a = commutator_i(q1, f_of_h)?;
    conductivity_site_from_ops(h_decomp, &a, v1, lambda, site)
}

/// Centered difference (j(dE) - j(-dE)) / (2 dE) of the NESS current,
/// differentiating at E = 0 (any field carried by `params` is ignored).
pub fn conductivity_finite_difference(
    lattice: &LatticeSpec,
    potential: &PotentialSpec,
    params: &ThermoParams,
    x: &[i64],
    direction: usize,
    d_e: f64,
) -> Result<f64> {
    if d_e == 0.0 || !d_e.is_finite() {
        return Err(Error::InvalidParameter(
            "finite-difference step must be nonzero and finite".into(),
        ));
    }
    let jp = steady_current(lattice, potential, &params.with_field(d_e)?, x, direction)?;
    let jm = steady_current(lattice, potential, &params.with_field(-d_e)?, x, direction)?;
    Ok((jp - jm) / (2.0 * d_e))
}

/// Default finite-difference step; balances the O(dE^2) truncation against
/// conditioning of the two NESS solves.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
