//! Gradient verification against central finite differences.

/// Max relative error between an analytic gradient and central differences
/// of `value` at `theta`: `|analytic - central| / max(1e-8, |central|)`,
/// maximized over coordinates.
pub fn finite_diff_check<F>(value: F, analytic: &[f64], theta: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(analytic.len(), theta.len(), "gradient and parameter lengths differ");
    let mut worst = 0.0f64;
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let up = value(&probe);
        probe[i] = theta[i] - eps;
        let down = value(&probe);
        probe[i] = theta[i];
        let central = (up - down) / (2.0 * eps);
        let rel = (analytic[i] - central).abs() / central.abs().max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
