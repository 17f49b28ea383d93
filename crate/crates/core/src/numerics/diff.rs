use super::NumericsError;

/// Default central-difference step relative to the axis range.
pub const DEFAULT_FD_RELATIVE_STEP: f64 = 1e-5;

/// Central difference `(f(x + h e) - f(x - h e)) / 2h` along `axis`.
pub fn fd_partial<F: Fn(&[f64]) -> f64>(f: F, point: &[f64], axis: usize, step: f64) -> f64 {
    let mut x = point.to_vec();
    x[axis] = point[axis] + step;
    let up = f(&x);
    x[axis] = point[axis] - step;
    let down = f(&x);
    (up - down) / (2.0 * step)
}

/// [`fd_partial`] that refuses stencils leaving the closed box `domain`.
pub fn fd_partial_within<F: Fn(&[f64]) -> f64>(
    f: F,
    point: &[f64],
    axis: usize,
    step: f64,
    domain: &[(f64, f64)],
) -> Result<f64, NumericsError> {
    let (lo, hi) = domain[axis];
    if point[axis] - step < lo || point[axis] + step > hi {
        return Err(NumericsError::DomainViolation { axis });
    }
    Ok(fd_partial(f, point, axis, step))
}

/// Scalar central difference.
pub fn fd_derivative<F: Fn(f64) -> f64>(f: F, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}
