//! Small numerical kernels: bracketed root finding, finite differences,
//! adaptive Simpson quadrature, Gaussian tails.

use libm::erfc;

use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
pub const ROOT_MAX_ITER: usize = 200;

/// Central-difference step relative to `x`.
pub fn fd_step(x: f64) -> f64 {
    FD_STEP * x.abs().max(1.0)
}

pub fn central_first(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = fd_step(x);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn central_second(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    // Larger step: second differences lose two extra digits to cancellation.
    let h = fd_step(x).sqrt() * 1e-1;
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Root of `g` on `[lo, hi]` where `g(lo)` and `g(hi)` have opposite signs.
///
/// Bisection down to a narrow bracket, then Newton steps (when `dg` is given)
/// that are kept only while they stay inside the bracket.
pub fn bracketed_root(
    g: impl Fn(f64) -> f64,
    dg: Option<&dyn Fn(f64) -> f64>,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
) -> Result<f64> {
    let mut glo = g(lo);
    let ghi = g(hi);
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if !(glo.is_finite() && ghi.is_finite()) || glo.signum() == ghi.signum() {
        return Err(Error::NoConvergence(format!(
            "no sign change on [{lo}, {hi}]: g = ({glo}, {ghi})"
        )));
    }
    let mut iter = 0;
    while hi - lo > 1e-6 * (1.0 + lo.abs().max(hi.abs())) {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
        iter += 1;
        if iter > ROOT_MAX_ITER {
            return Err(Error::NoConvergence("bisection budget exhausted".into()));
        }
    }
    let mut x = 0.5 * (lo + hi);
    if let Some(dg) = dg {
        for _ in 0..50 {
            let gx = g(x);
            if gx == 0.0 {
                return Ok(x);
            }
            if gx.signum() == glo.signum() {
                lo = x;
            } else {
                hi = x;
            }
            let d = dg(x);
            let step = if d != 0.0 && d.is_finite() { gx / d } else { f64::NAN };
            let next = x - step;
            let next = if next.is_finite() && next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= xtol * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        return Ok(x);
    }
    while hi - lo > xtol * (1.0 + x.abs()) {
        x = 0.5 * (lo + hi);
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx.signum() == glo.signum() {
            lo = x;
        } else {
            hi = x;
        }
        iter += 1;
        if iter > 4 * ROOT_MAX_ITER {
            return Err(Error::NoConvergence("bisection budget exhausted".into()));
        }
    }
    Ok(0.5 * (lo + hi))
}

fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
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
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // Pre-split so narrow peaks are not missed by the first estimate.
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    let f = &f as &dyn Fn(f64) -> f64;
    (0..pieces)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_rec(f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Standard normal upper tail `P(N > x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(x: f64) -> f64 {
    normal_sf(-x)
}

/// `P(a < N(mean, sd^2) <= b)` without cancellation in either tail.
pub fn normal_interval(mean: f64, sd: f64, a: f64, b: f64) -> f64 {
    let za = (a - mean) / sd;
    let zb = (b - mean) / sd;
    if za >= 0.0 {
        normal_sf(za) - normal_sf(zb)
    } else if zb <= 0.0 {
        normal_cdf(zb) - normal_cdf(za)
    } else {
        1.0 - normal_cdf(za) - normal_sf(zb)
    }
}

/// `1 - prod(1 - x_i)` computed in log space, stable when all `x_i` are tiny.
pub fn one_minus_prod_complements(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut log_prod = 0.0;
    for x in xs {
        if x >= 1.0 {
            return 1.0;
        }
        log_prod += (-x).ln_1p();
    }
    -log_prod.exp_m1()
}
