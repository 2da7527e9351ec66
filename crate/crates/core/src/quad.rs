//! Double-exponential quadrature rules.
//!
//! All rules refine by halving the step and stop when two successive levels
//! agree to the requested relative tolerance.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

const MAX_LEVELS: usize = 12;

fn converged<T: Scalar>(new: T, old: T, tol: T) -> bool {
    let scale = new.abs().max(T::min_positive_value().sqrt());
    (new - old).abs() <= tol * scale
}

fn effective_tol<T: Scalar>(tol: T) -> T {
    tol.max(lit::<T>(16.0) * T::epsilon())
}

/// Trapezoid rule on `[0, inf)` for an even-extended integrand with doubly
/// exponential decay (the rule is then exponentially convergent in `1/h`).
///
/// Terms are accumulated until they fall below `tol * eps` of the running sum.
pub fn trapezoid_half_line<T, F>(f: F, tol: T) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let tol = effective_tol(tol);
    let tiny = tol * T::epsilon();
    let sum_from = |h: T, start: usize, stride: usize| -> T {
        let mut acc = T::zero();
        let mut k = start;
        loop {
            let tau = h * lit::<T>(k as f64);
            let v = f(tau);
            acc = acc + v;
            if k > 8 && v.abs() <= tiny * acc.abs().max(T::min_positive_value()) {
                break;
            }
            if k > 1 << 20 {
                break;
            }
            k += stride;
        }
        acc
    };
    let mut h = lit::<T>(0.5);
    let half = lit::<T>(0.5);
    // Level 0 includes tau = 0 with weight 1/2.
    let mut raw = half * f(T::zero()) + sum_from(h, 1, 1);
    let mut estimate = h * raw;
    for _ in 0..MAX_LEVELS {
        h = h * half;
        raw = raw + sum_from(h, 1, 2);
        let next = h * raw;
        if converged(next, estimate, tol) {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::Accuracy {
        tol: to_f64(tol),
        residual: f64::NAN,
    })
}

/// Tanh-sinh quadrature on a finite interval `[a, b]`; tolerates integrable
/// endpoint singularities.
pub fn tanh_sinh<T, F>(f: F, a: T, b: T, tol: T) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let tol = effective_tol(tol);
    let half = lit::<T>(0.5);
    let c = half * (a + b);
    let d = half * (b - a);
    let pi_2 = T::FRAC_PI_2();
    let t_max = lit::<T>(3.5);
    // Node pair at +/- t; returns the weighted contribution.
    let pair = |t: T| -> T {
        let u = pi_2 * t.sinh();
        let cosh_u = u.cosh();
        let w = d * pi_2 * t.cosh() / (cosh_u * cosh_u);
        // distance from the nearest endpoint, computed without cancellation
        let e = (-(u + u)).exp();
        let gap = d * (e + e) / (T::one() + e);
        let mut acc = T::zero();
        if gap > T::zero() {
            let xr = b - gap;
            let xl = a + gap;
            if xr < b && xr > a {
                acc = acc + w * f(xr);
            }
            if xl > a && xl < b && t > T::zero() {
                acc = acc + w * f(xl);
            }
        }
        acc
    };
    let mut h = T::one();
    let mut raw = d * pi_2 * f(c);
    let mut k = 1usize;
    loop {
        let t = h * lit::<T>(k as f64);
        if t > t_max {
            break;
        }
        raw = raw + pair(t);
        k += 1;
    }
    let mut estimate = h * raw;
    let mut last_diff = T::infinity();
    for _ in 0..MAX_LEVELS {
        h = h * half;
        let mut k = 1usize;
        loop {
            let t = h * lit::<T>(k as f64);
            if t > t_max {
                break;
            }
            raw = raw + pair(t);
            k += 2;
        }
        let next = h * raw;
        last_diff = (next - estimate).abs();
        if converged(next, estimate, tol) {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::Accuracy {
        tol: to_f64(tol),
        residual: to_f64(last_diff / estimate.abs().max(T::min_positive_value())),
    })
}

/// Exp-sinh quadrature on `[a, inf)` for integrands decaying at infinity;
/// tolerates an integrable singularity at `a`.
pub fn exp_sinh<T, F>(f: F, a: T, tol: T) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let tol = effective_tol(tol);
    let pi_2 = T::FRAC_PI_2();
    let half = lit::<T>(0.5);
    let node = |t: T| -> T {
        let u = pi_2 * t.sinh();
        let x = u.exp();
        let w = pi_2 * t.cosh() * x;
        if !(x > T::zero()) || !x.is_finite() || !w.is_finite() {
            return T::zero();
        }
        let v = f(a + x);
        if v == T::zero() {
            T::zero()
        } else {
            w * v
        }
    };
    let t_lo = lit::<T>(-4.5);
    let t_hi = lit::<T>(4.5);
    let mut h = T::one();
    let mut raw = T::zero();
    let mut k: i64 = (to_f64(t_lo / h)).ceil() as i64;
    while lit::<T>(k as f64) * h <= t_hi {
        raw = raw + node(lit::<T>(k as f64) * h);
        k += 1;
    }
    let mut estimate = h * raw;
    let mut last_diff = T::infinity();
    for _ in 0..MAX_LEVELS {
        h = h * half;
        let mut k: i64 = (to_f64(t_lo / h)).ceil() as i64;
        if k % 2 == 0 {
            k += 1;
        }
        while lit::<T>(k as f64) * h <= t_hi {
            raw = raw + node(lit::<T>(k as f64) * h);
            k += 2;
        }
        let next = h * raw;
        last_diff = (next - estimate).abs();
        if converged(next, estimate, tol) {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::Accuracy {
        tol: to_f64(tol),
        residual: to_f64(last_diff / estimate.abs().max(T::min_positive_value())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_line_gaussian() {
        // int_0^inf e^{-t^2} dt = sqrt(pi)/2
        let v = trapezoid_half_line(|t: f64| (-t * t).exp(), 1e-13).unwrap();
        assert!((v - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-13);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let v = tanh_sinh(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        // int_0^1 ln(1/x) dx = 1
        let v = tanh_sinh(|x: f64| (1.0 / x).ln(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn exp_sinh_tail() {
        // int_1^inf e^{-x} dx = e^{-1}
        let v = exp_sinh(|x: f64| (-x).exp(), 1.0, 1e-12).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12, "{v}");
        // int_0^inf x^{-1/2} e^{-x} dx = sqrt(pi)
        let v = exp_sinh(|x: f64| x.powf(-0.5) * (-x).exp(), 0.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-9, "{v}");
    }
}
