//! Adaptive Simpson quadrature for the closed-form oracles.

/// Adaptive Simpson on [a, b] with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates over [a, b] split at the interior `breakpoints` (used where
/// the integrand has known kinks or jumps, e.g. the β = ∞ Fermi step).
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: f64,
) -> f64 {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup();
    let mut points = Vec::with_capacity(cuts.len() + 2);
    points.push(a);
    points.extend(cuts);
    points.push(b);
    let piece_tol = tol / points.len() as f64;
    points
        .windows(2)
        .map(|w| adaptive_simpson(f, w[0], w[1], piece_tol))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrates_polynomial_exactly() {
        let v = adaptive_simpson(&|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 1e-12);
        assert_abs_diff_eq!(v, 0.75 * (16.0 - 1.0) / 3.0 - (4.0 - 1.0) + 3.0, epsilon = 1e-12);
    }

    #[test]
    fn integrates_oscillatory() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-11);
    }

    #[test]
    fn breakpoints_handle_step() {
        let step = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        let v = integrate_with_breakpoints(&step, 0.0, 1.0, &[0.3], 1e-12);
        assert_abs_diff_eq!(v, 0.3, epsilon = 1e-12);
    }
}
