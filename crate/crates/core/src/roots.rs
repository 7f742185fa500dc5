//! One-dimensional root finding and minimization shared by the chart,
//! shadow and ray-casting code.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Bisection on `[lo, hi]` for a sign change of `f`.
///
/// Runs until the midpoint is no longer representable strictly inside the
/// bracket, the midpoint hits an exact zero, or `max_iter` is reached.
/// Returns the endpoint with the smaller `|f|`.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, max_iter: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok((lo, 0.0));
    }
    if f_hi == 0.0 {
        return Ok((hi, 0.0));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Parameter(format!(
            "bisection bracket [{lo}, {hi}] has no sign change ({f_lo:e}, {f_hi:e})"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok((mid, 0.0));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    Ok(if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) })
}

/// Safeguarded Newton iteration inside a sign-change bracket.
///
/// `f` returns `(value, derivative)`. Newton steps that leave the bracket or
/// fail to shrink it fast enough are replaced by bisection steps.
pub fn newton_bracketed<F>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64, max_iter: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (f_lo, _) = f(lo)?;
    let (f_hi, _) = f(hi)?;
    if f_lo == 0.0 {
        return Ok((lo, 0.0));
    }
    if f_hi == 0.0 {
        return Ok((hi, 0.0));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Parameter(format!("newton bracket [{lo}, {hi}] has no sign change")));
    }
    let lo_sign = f_lo.signum();
    let mut x = 0.5 * (lo + hi);
    let mut best = (x, f64::INFINITY);
    let mut last_width = (hi - lo).abs();
    for _ in 0..max_iter {
        let (fx, dfx) = f(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 {
            return Ok((x, 0.0));
        }
        if fx.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let width = (hi - lo).abs();
        if width <= xtol {
            break;
        }
        let newton = x - fx / dfx;
        let inside = dfx != 0.0 && newton.is_finite() && newton > lo.min(hi) && newton < lo.max(hi);
        let step_ok = inside && (newton - x).abs() < 0.5 * last_width;
        let next = if step_ok { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= xtol * 0.25 {
            let (fn_, _) = f(next)?;
            if fn_.abs() < best.1.abs() {
                best = (next, fn_);
            }
            break;
        }
        last_width = width;
        x = next;
    }
    Ok(best)
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
///
/// Returns `(argmin, min)`. Stops early once `f` drops to or below `stop_below`.
pub fn golden_min<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64, stop_below: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc.min(fd) <= stop_below {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimum of a convex function on `[a, b]` using a coarse scan to narrow the
/// search window before golden-section refinement.
pub fn convex_min<F>(mut f: F, a: f64, b: f64, coarse: usize, xtol: f64, stop_below: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let n = coarse.max(2);
    let h = (b - a) / n as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..=n {
        let v = f(a + h * i as f64);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
        if v <= stop_below {
            return (a + h * i as f64, v);
        }
    }
    let lo = a + h * best_i.saturating_sub(1) as f64;
    let hi = (a + h * (best_i + 1) as f64).min(b);
    let (x, v) = golden_min(&mut f, lo, hi, xtol, stop_below);
    if v <= best_v {
        (x, v)
    } else {
        (a + h * best_i as f64, best_v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let (x, fx) = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 200).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-15);
        assert!(fx.abs() < 1e-14);
    }

    #[test]
    fn bisect_rejects_same_sign() {
        assert!(bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 10).is_err());
    }

    #[test]
    fn newton_bracketed_converges_fast() {
        let mut calls = 0;
        let (x, _) = newton_bracketed(
            |x| {
                calls += 1;
                Ok((x.exp() - 3.0, x.exp()))
            },
            0.0,
            5.0,
            1e-15,
            100,
        )
        .unwrap();
        assert!((x - 3f64.ln()).abs() < 1e-14);
        assert!(calls < 40);
    }

    #[test]
    fn golden_section_on_parabola() {
        let (x, v) = golden_min(|x| (x - 0.3) * (x - 0.3) + 1.0, -2.0, 2.0, 1e-10, f64::NEG_INFINITY);
        // The minimizer of a quadratic is only resolved to about sqrt(eps).
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn convex_min_stops_below_threshold() {
        let (x, v) = convex_min(|x| (x - 5.0).abs() - 1.0, 0.0, 10.0, 20, 1e-12, 0.0);
        assert!(v <= 0.0);
        assert!((x - 5.0).abs() <= 1.0);
    }
}
