use super::NumericsError;

/// Default root tolerance on the valuation scale.
pub const DEFAULT_ROOT_TOL: f64 = 1e-10;

/// Bisection on a bracketing interval.
///
/// Returns the midpoint of a final bracket no wider than `tol` (or an exact
/// zero hit on the way).
/// The midpoint sequence depends only on `lo`, `hi` and the signs of `g`, so
/// tightening `tol` only continues the same nested brackets.
pub fn bisect_root<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64, NumericsError> {
    if !(lo < hi) {
        return Err(NumericsError::InvalidInterval { lo, hi });
    }
    let g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() || g_lo.is_nan() || g_hi.is_nan() {
        return Err(NumericsError::NoBracket { lo, hi, g_lo, g_hi });
    }
    let (mut a, mut b) = (lo, hi);
    let lo_negative = g_lo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm < 0.0) == lo_negative {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= tol {
            return Ok(0.5 * (a + b));
        }
    }
    Ok(0.5 * (a + b))
}
