//! Safeguarded Newton iteration for monotone scalar equations.

use crate::error::{Error, Result};

/// Solves `f(x) = 0` on `[lo, hi]` for an increasing `f` with
/// `f(lo) <= 0 <= f(hi)`. `fdf` returns `(f(x), f'(x))`.
///
/// Newton steps that leave the current bracket are replaced by bisection.
pub fn newton_bracketed<F>(mut fdf: F, mut lo: f64, mut hi: f64, x0: f64, x_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(lo <= hi) {
        return Err(Error::RootFind("empty bracket"));
    }
    let mut x = x0.clamp(lo, hi);
    for _ in 0..200 {
        let (fx, dfx) = fdf(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        // A Newton correction below tolerance means convergence, even when
        // rounding puts it on the bracket edge.
        if dfx > 0.0 && (newton - x).abs() <= x_tol * (1.0 + x.abs()) {
            return Ok(newton.clamp(lo, hi));
        }
        let next = if dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        x = next;
        if step <= x_tol * (1.0 + x.abs()) || hi - lo <= x_tol * (1.0 + x.abs()) {
            return Ok(x);
        }
    }
    Err(Error::RootFind("no convergence in 200 iterations"))
}
