//! Central finite differences over flat parameter vectors. Lives in the
//! library (not just the tests) so the `gradcheck` command can run the whole
//! suite against a build.

/// Step size pinned for all gradient checks.
pub const FD_STEP: f64 = 1e-3;

/// Relative-error threshold every analytic/numeric pair must beat.
pub const FD_TOLERANCE: f64 = 1e-4;

/// Central difference gradient of `f` at `x`. `f` receives a perturbed copy
/// of `x`; evaluation order is fixed, so seeded stochastic objectives must
/// fix their own noise.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Worst per-component relative error, with a floor so that components far
/// below the gradient scale do not dominate through rounding noise.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let floor = (scale * 1e-4).max(1e-8);
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let x = vec![1.0, -2.0, 0.5];
        let g = central_diff(f, &x, FD_STEP);
        let expected = [2.0, -4.0, 1.0];
        assert!(max_rel_error(&expected, &g) < FD_TOLERANCE);
    }

    #[test]
    fn rel_error_flags_mismatches() {
        assert!(max_rel_error(&[1.0, 2.0], &[1.0, 2.1]) > 0.04);
        assert!(max_rel_error(&[0.0, 1.0], &[0.0, 1.0]) == 0.0);
    }
}
