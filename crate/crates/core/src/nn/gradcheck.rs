//! Central finite-difference verification of analytic gradients.

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients against central differences of `f`.
///
/// `f` evaluates the scalar objective at the given parameter vector; it is
/// called with `params` perturbed one coordinate at a time by `±h`. Returns
/// the maximum relative error over all coordinates.
pub fn grad_check<F>(params: &mut [f64], analytic: &[f64], mut f: F, h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let original = params[i];
        params[i] = original + h;
        let up = f(params);
        params[i] = original - h;
        let down = f(params);
        params[i] = original;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

pub const DEFAULT_STEP: f64 = 1e-5;
