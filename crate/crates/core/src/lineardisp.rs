//! Exact propagator of the linear flow `u_t - K_s u_x = 0`, the stationary
//! phase of its oscillatory integral, and a dispersive-decay harness.
//!
//! In Fourier variables `u_hat(t, k) = exp(i t k m_s(k)) u_hat(0, k)`, so
//! `u(x, t)` is an oscillatory integral with phase
//! `t (x/t xi + xi (1 + xi^2)^{-s/2})`; the stationary point of `xi = 0`
//! sits on the ray `x = -t`, and the wave train travels leftward.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::kernel::{symbol, KernelSpec};
use crate::scalar::{lit, to_f64, Scalar};
use crate::spectral::GridField;
use crate::stats::linear_fit;

/// Boundary between the low- and high-frequency pieces of the phase integral.
pub const LOW_FREQUENCY_CUTOFF: f64 = 1.0 / 512.0;

/// Multiplies the spectrum by `exp(i t k m_s(k))`.
pub fn propagate_linear<T: Scalar>(u0: &GridField<T>, spec: &KernelSpec<T>, t: T) -> GridField<T> {
    let nyquist = u0.grid().n() / 2;
    let grid = u0.grid().clone();
    let out: Vec<Complex<T>> = u0
        .spectrum()
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let k = grid.wavenumber(j);
            let phase = t * k * symbol(spec, k);
            if j == nyquist {
                c * phase.cos()
            } else {
                c * Complex::new(phase.cos(), phase.sin())
            }
        })
        .collect();
    GridField::from_spectrum(&grid, &out).expect("spectrum length matches grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyRegime {
    /// `0 <= xi <= LOW_FREQUENCY_CUTOFF`.
    Low,
    /// `xi > LOW_FREQUENCY_CUTOFF`.
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpec {
    pub s: f64,
    pub x_over_t: f64,
    pub regime: FrequencyRegime,
}

/// `d/dxi [xi (1 + xi^2)^{-s/2}] = (1 + (1 - s) xi^2)(1 + xi^2)^{-s/2 - 1}`.
pub fn group_factor(s: f64, xi: f64) -> f64 {
    let q = 1.0 + xi * xi;
    (1.0 + (1.0 - s) * xi * xi) * q.powf(-s / 2.0 - 1.0)
}

fn group_factor_slope(s: f64, xi: f64) -> f64 {
    // derivative of group_factor
    let q = 1.0 + xi * xi;
    let a = 2.0 * (1.0 - s) * xi * q.powf(-s / 2.0 - 1.0);
    let b = (1.0 + (1.0 - s) * xi * xi) * (-s - 2.0) * xi * q.powf(-s / 2.0 - 2.0);
    a + b
}

/// Phase derivative `x/t + group_factor(s, xi)`.
pub fn phase_derivative(spec: &PhaseSpec, xi: f64) -> f64 {
    spec.x_over_t + group_factor(spec.s, xi)
}

/// Smallest non-negative root of the phase derivative inside the requested
/// regime, or `None` when there is none there.
pub fn stationary_point(spec: &PhaseSpec) -> Option<f64> {
    let f = |xi: f64| phase_derivative(spec, xi);
    let (lo, hi) = match spec.regime {
        FrequencyRegime::Low => (0.0, LOW_FREQUENCY_CUTOFF),
        FrequencyRegime::High => (LOW_FREQUENCY_CUTOFF, 1e8),
    };
    if f(lo) == 0.0 {
        return Some(lo);
    }
    // scan on a grid that is uniform near zero and geometric beyond
    let mut nodes = vec![lo];
    let mut x = lo.max(1e-12);
    while x < hi {
        x = if x < 1e-3 { x + (hi.min(1e-3) - lo) / 64.0 } else { x * 1.05 };
        nodes.push(x.min(hi));
    }
    for w in nodes.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            return Some(a);
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        let mut xi = 0.5 * (a + b);
        let mut fa = fa;
        for _ in 0..200 {
            let fx = f(xi);
            if fx == 0.0 {
                break;
            }
            if fx.signum() == fa.signum() {
                a = xi;
                fa = fx;
            } else {
                b = xi;
            }
            let d = group_factor_slope(spec.s, xi);
            let newton = xi - fx / d;
            xi = if d != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if (b - a) < 1e-16 * b.max(1e-300) || f(xi).abs() < 1e-15 {
                break;
            }
        }
        return Some(xi);
    }
    None
}

/// `sup_x |u| t^{1/3} <(x + t)/t^{1/3}>^{1/4}`.
pub fn weighted_sup<T: Scalar>(u: &GridField<T>, t: f64) -> f64 {
    let c = t.cbrt();
    u.grid()
        .points()
        .into_iter()
        .zip(u.values())
        .map(|(x, &v)| {
            let z = (to_f64(x) + t) / c;
            to_f64(v).abs() * c * (1.0 + z * z).powf(0.125)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub l2_norms: Vec<f64>,
    pub weighted_sups: Vec<f64>,
    /// Stationary point on the ray through the location of the maximum.
    pub xi0_at_peak: Vec<f64>,
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Indices `[start, end]` of the samples used in the fit.
    pub fit_range: (usize, usize),
    /// Log-log slope of the weighted sup over the fit range.
    pub weighted_trend: f64,
}

impl DecayFit {
    pub const CSV_HEADER: [&'static str; 5] = ["t", "sup_u", "l2", "weighted_sup", "xi0_ray_samples"];

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        (0..self.times.len())
            .map(|i| {
                vec![
                    self.times[i],
                    self.sup_norms[i],
                    self.l2_norms[i],
                    self.weighted_sups[i],
                    self.xi0_at_peak[i],
                ]
            })
            .collect()
    }

    /// The weighted sup does not grow over the fit range.
    pub fn weighted_bounded(&self) -> bool {
        self.weighted_trend <= 0.1
    }
}

/// Minimum `r^2` of an accepted decay fit.
pub const DECAY_MIN_R2: f64 = 0.995;

/// Largest spread of the per-octave slopes inside an accepted range.
pub const DECAY_SLOPE_BAND: f64 = 0.05;

/// Largest admissible amplitude within 5 units of the periodic seam,
/// relative to the sup norm.
pub const SEAM_TOLERANCE: f64 = 1e-3;

/// Propagates `u0` exactly to each time in `t_grid` and fits
/// `log sup|u|` against `log t` over the longest dyadic range
/// `[t_max / 2^k, t_max]` with `r^2 >= DECAY_MIN_R2` whose per-octave slopes agree to
/// [`DECAY_SLOPE_BAND`]. Without such a range the last octave is
/// used and `r_squared` tells the caller.
pub fn measure_decay<T: Scalar>(u0: &GridField<T>, spec: &KernelSpec<T>, t_grid: &[f64]) -> Result<DecayFit> {
    if t_grid.len() < 3 {
        return Err(Error::Precondition("need at least three sample times".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid[0] < 1.0 {
        return Err(Error::Precondition("sample times must increase from t >= 1".into()));
    }
    let t_max = *t_grid.last().expect("non-empty");
    let grid = u0.grid();
    let l = to_f64(grid.half_length());
    let required = t_max + 20.0;
    if l < required {
        return Err(Error::DomainTooSmall { required_l: required });
    }
    let s = to_f64(spec.s());
    let mut fit = DecayFit {
        times: t_grid.to_vec(),
        sup_norms: Vec::new(),
        l2_norms: Vec::new(),
        weighted_sups: Vec::new(),
        xi0_at_peak: Vec::new(),
        exponent: f64::NAN,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        fit_range: (0, t_grid.len() - 1),
        weighted_trend: f64::NAN,
    };
    for &t in t_grid {
        let u = propagate_linear(u0, spec, lit(t));
        let sup = to_f64(u.sup_abs());
        let edge = grid
            .points()
            .into_iter()
            .zip(u.values())
            .filter(|(x, _)| to_f64(*x).abs() >= l - 5.0)
            .map(|(_, &v)| to_f64(v).abs())
            .fold(0.0, f64::max);
        if edge > SEAM_TOLERANCE * sup {
            return Err(Error::DomainTooSmall { required_l: required.max(l + 0.5 * t_max) });
        }
        let peak = grid.x(u.values().iter().enumerate().fold(0, |b, (j, v)| {
            if v.abs() > u.values()[b].abs() { j } else { b }
        }));
        let ray = PhaseSpec {
            s,
            x_over_t: to_f64(peak) / t,
            regime: FrequencyRegime::High,
        };
        let low = PhaseSpec { regime: FrequencyRegime::Low, ..ray };
        fit.sup_norms.push(sup);
        fit.l2_norms.push(to_f64(u.inner(&u).sqrt()));
        fit.weighted_sups.push(weighted_sup(&u, t));
        fit.xi0_at_peak
            .push(stationary_point(&low).or_else(|| stationary_point(&ray)).unwrap_or(f64::NAN));
    }
    let logs: Vec<(f64, f64)> = fit
        .times
        .iter()
        .zip(&fit.sup_norms)
        .map(|(t, u)| (t.ln(), u.ln()))
        .collect();
    let last = logs.len() - 1;
    // dyadic ranges [t_max / 2^k, t_max], longest first
    let mut chosen = None;
    let octave_count = (t_max / t_grid[0]).log2().floor() as i32;
    for k in (1..=octave_count).rev() {
        let lo = t_max / 2f64.powi(k);
        let start = t_grid.iter().position(|&t| t >= lo * (1.0 - 1e-12)).unwrap_or(last);
        if last - start < 2 {
            continue;
        }
        let window = &logs[start..];
        let Some(line) = linear_fit(window) else { continue };
        let octaves: Vec<f64> = (1..=k)
            .filter_map(|j| {
                let hi = t_max / 2f64.powi(j - 1);
                let pts: Vec<(f64, f64)> = logs
                    .iter()
                    .zip(t_grid)
                    .filter(|(_, &t)| t >= hi / 2.0 * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12))
                    .map(|(p, _)| *p)
                    .collect();
                linear_fit(&pts).map(|f| f.slope)
            })
            .collect();
        let spread = octaves.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - octaves.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if spread <= DECAY_SLOPE_BAND && line.r_squared >= DECAY_MIN_R2 {
            chosen = Some((start, line));
            break;
        }
    }
    let (start, line) = match chosen {
        Some(c) => c,
        None => {
            let start = t_grid.iter().position(|&t| t >= 0.5 * t_max).unwrap_or(0).min(last - 2);
            (start, linear_fit(&logs[start..]).ok_or_else(|| Error::Verification("degenerate decay fit".into()))?)
        }
    };
    fit.exponent = line.slope;
    fit.intercept = line.intercept;
    fit.r_squared = line.r_squared;
    fit.fit_range = (start, last);
    let weighted: Vec<(f64, f64)> = fit.times[start..]
        .iter()
        .zip(&fit.weighted_sups[start..])
        .map(|(t, w)| (t.ln(), w.ln()))
        .collect();
    fit.weighted_trend = linear_fit(&weighted).map_or(0.0, |f| f.slope);
    Ok(fit)
}

/// Log-spaced times from `t0` to `t1`.
pub fn log_times(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    let (a, b) = (t0.ln(), t1.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1).max(1) as f64).exp())
        .collect()
}
