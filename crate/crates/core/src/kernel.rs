//! Bessel potential kernel `G_s`, its derivative, the Fourier symbol
//! `(1 + xi^2)^{-s/2}`, and the modified Bessel function `K_nu`.
//!
//! The kernel is represented as
//!
//! ```text
//! G_s(x)  =  c(s) |x|^{(s-1)/2} K_{(s-1)/2}(|x|)
//! G_s'(x) = -c(s) sign(x) |x|^{(s-1)/2} K_{(3-s)/2}(|x|)
//! c(s)    =  1 / (2^{(s-1)/2} sqrt(pi) Gamma(s/2))
//! ```
//!
//! The constant `c(s)` is the one that makes `int G_s = 1`, i.e. the symbol
//! equals one at zero frequency. Both kernel formulas share it because
//! `d/dr [r^nu K_nu(r)] = -r^nu K_{nu-1}(r)`.

use std::fmt;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad;
use crate::scalar::{lit, to_f64, Scalar};

/// Below this radius the kernel switches from quadrature to the small-argument
/// series of `K_nu` (only for `s <= 1`, where the kernel is singular).
pub const NEAR_ZERO_SWITCH: f64 = 1e-6;

/// Default relative quadrature tolerance.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// How `G_s` and `G_s'` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMethod {
    /// `e^{-|x|}/2`; only valid for `s = 2`.
    ClosedForm,
    /// Small-argument series below [`NEAR_ZERO_SWITCH`], quadrature above.
    SeriesNearZero,
    /// Quadrature of the integral representation of `K_nu` everywhere.
    Quadrature,
}

impl fmt::Display for KernelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            KernelMethod::ClosedForm => "closed-form",
            KernelMethod::SeriesNearZero => "series",
            KernelMethod::Quadrature => "quadrature",
        };
        f.write_str(name)
    }
}

/// Dispersion order and evaluation strategy for the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    s: T,
    method: KernelMethod,
    quad_tol: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(s: T, method: KernelMethod, quad_tol: T) -> Result<Self> {
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::Domain(format!("dispersion order must be > 0, got {s}")));
        }
        if method == KernelMethod::ClosedForm && s != lit(2.0) {
            return Err(Error::Domain(format!(
                "closed-form kernel requires s = 2, got {s}"
            )));
        }
        if !(quad_tol > T::zero()) {
            return Err(Error::Domain("quadrature tolerance must be positive".into()));
        }
        Ok(Self { s, method, quad_tol })
    }

    /// Picks the closed form for `s = 2` and the series/quadrature hybrid
    /// otherwise, with the default tolerance.
    pub fn with_order(s: T) -> Result<Self> {
        let method = if s == lit(2.0) {
            KernelMethod::ClosedForm
        } else {
            KernelMethod::SeriesNearZero
        };
        Self::new(s, method, lit(DEFAULT_QUAD_TOL))
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn method(&self) -> KernelMethod {
        self.method
    }

    pub fn quad_tol(&self) -> T {
        self.quad_tol
    }

    /// Normalisation constant `c(s)`.
    pub fn normalization(&self) -> T {
        let s = to_f64(self.s);
        lit(1.0 / (2f64.powf((s - 1.0) / 2.0) * std::f64::consts::PI.sqrt() * gamma(s / 2.0)))
    }
}

/// Fourier multiplier `(1 + xi^2)^{-s/2}`.
pub fn symbol<T: Scalar>(spec: &KernelSpec<T>, xi: T) -> T {
    (T::one() + xi * xi).powf(-spec.s / lit(2.0))
}

/// Modified Bessel function of the second kind `K_nu(r)`, `r > 0`.
///
/// Evaluated from `K_nu(r) = int_0^inf cosh(nu t) exp(-r cosh t) dt`, which is
/// the defining integral after the substitution `t -> (r/2) e^t`; the
/// integrand then decays doubly exponentially and the trapezoid rule
/// converges geometrically in the inverse step.
pub fn bessel_k<T: Scalar>(nu: T, r: T, tol: T) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::Domain(format!("K_nu requires r > 0, got {r}")));
    }
    let nu = nu.abs();
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);
    // exp(r) K_nu(r), with cosh(nu t) exp(-r (cosh t - 1)) evaluated in log
    // form so that large nu*t does not overflow before the Gaussian-like
    // cutoff takes over.
    // For large r the integrand's peak at t = 0 has width ~ r^{-1/2}; rescale
    // so the trapezoid step resolves it.
    let w = T::one().min(r.sqrt().recip());
    let scaled = w * quad::trapezoid_half_line(
        |tau: T| {
            let t = w * tau;
            let sh = (t * half).sinh();
            let expo = nu * t - two * r * sh * sh;
            half * expo.exp() * (T::one() + (-(two * nu * t)).exp())
        },
        tol,
    )?;
    Ok(scaled * (-r).exp())
}

/// Small-argument series for `K_nu(r)`; accurate to `O(r^4)` relative for
/// `r` below [`NEAR_ZERO_SWITCH`]. Returns `None` for orders where the
/// reflection formula is ill-conditioned (near a positive integer).
pub fn bessel_k_series<T: Scalar>(nu: T, r: T) -> Option<T> {
    let nu = to_f64(nu.abs());
    let r = to_f64(r);
    if !(r > 0.0) {
        return None;
    }
    let q = r * r / 4.0;
    if nu == 0.0 {
        let euler = 0.577_215_664_901_532_9_f64;
        let log_term = -((r / 2.0).ln() + euler);
        // K_0 = -(ln(r/2) + gamma) I_0(r) + sum (q^k/(k!)^2) H_k
        let i0 = 1.0 + q + q * q / 4.0;
        let tail = q + q * q / 4.0 * 1.5;
        return Some(lit(log_term * i0 + tail));
    }
    let frac = nu - nu.round();
    if nu.round() >= 1.0 && frac.abs() < 0.05 {
        return None;
    }
    let i_series = |mu: f64| -> f64 {
        let mut term = (r / 2.0).powf(mu) / gamma(mu + 1.0);
        let mut acc = term;
        for k in 1..4 {
            let kf = k as f64;
            term *= q / (kf * (kf + mu));
            acc += term;
        }
        acc
    };
    let value = std::f64::consts::FRAC_PI_2 * (i_series(-nu) - i_series(nu))
        / (std::f64::consts::PI * nu).sin();
    Some(lit(value))
}

fn k_nu_for_kernel<T: Scalar>(spec: &KernelSpec<T>, nu: T, r: T) -> Result<T> {
    if spec.method == KernelMethod::SeriesNearZero
        && spec.s <= T::one()
        && r < lit(NEAR_ZERO_SWITCH)
    {
        if let Some(v) = bessel_k_series(nu, r) {
            return Ok(v);
        }
    }
    bessel_k(nu, r, spec.quad_tol)
}

/// Kernel value `G_s(x)`.
pub fn g_s<T: Scalar>(spec: &KernelSpec<T>, x: T) -> Result<T> {
    let r = x.abs();
    let half = lit::<T>(0.5);
    if spec.method == KernelMethod::ClosedForm {
        return Ok(half * (-r).exp());
    }
    let s = spec.s;
    if r == T::zero() {
        if s <= T::one() {
            return Err(Error::Singularity { s: to_f64(s) });
        }
        // G_s(0) = (1/2pi) int (1+xi^2)^{-s/2} d xi
        let sf = to_f64(s);
        let v = gamma((sf - 1.0) / 2.0) / (2.0 * std::f64::consts::PI.sqrt() * gamma(sf / 2.0));
        return Ok(lit(v));
    }
    let nu = (s - T::one()) * half;
    let k = k_nu_for_kernel(spec, nu, r)?;
    Ok(spec.normalization() * r.powf(nu) * k)
}

/// Kernel derivative `G_s'(x)`; odd in `x`, negative for `x > 0`.
pub fn g_s_prime<T: Scalar>(spec: &KernelSpec<T>, x: T) -> Result<T> {
    if x == T::zero() {
        return Err(Error::Singularity { s: to_f64(spec.s) });
    }
    let r = x.abs();
    let half = lit::<T>(0.5);
    let sign = x.signum();
    if spec.method == KernelMethod::ClosedForm {
        return Ok(-sign * half * (-r).exp());
    }
    let s = spec.s;
    let nu = (lit::<T>(3.0) - s) * half;
    let k = k_nu_for_kernel(spec, nu, r)?;
    Ok(-sign * spec.normalization() * r.powf((s - T::one()) * half) * k)
}

/// Which branch of the envelope applies at an abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    /// `|x|^{s-1}` (kernel) or `|x|^{s-2}` (derivative) near the origin.
    NearPower,
    /// `log(1/|x|) + 1` near the origin, `s = 1`.
    NearLog,
    /// Bounded near the origin.
    NearBounded,
    /// `|x|^{(s-2)/2} e^{-|x|}` for `|x| > 1`.
    TailExp,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::NearPower => "near_power",
            Regime::NearLog => "near_log",
            Regime::NearBounded => "near_bounded",
            Regime::TailExp => "tail_exp",
        }
    }

    fn is_near(&self) -> bool {
        !matches!(self, Regime::TailExp)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn tail_envelope<T: Scalar>(s: T, r: T) -> T {
    r.powf((s - lit(2.0)) / lit(2.0)) * (-r).exp()
}

/// Envelope for `G_s` at `x != 0`: the regime and the envelope value
/// (without the constant).
pub fn kernel_envelope<T: Scalar>(s: T, x: T) -> (Regime, T) {
    let r = x.abs();
    if r > T::one() {
        (Regime::TailExp, tail_envelope(s, r))
    } else if s < T::one() {
        (Regime::NearPower, r.powf(s - T::one()))
    } else if s == T::one() {
        (Regime::NearLog, (T::one() / r).ln() + T::one())
    } else {
        (Regime::NearBounded, T::one())
    }
}

/// Envelope for `|G_s'|` at `x != 0`.
pub fn derivative_envelope<T: Scalar>(s: T, x: T) -> (Regime, T) {
    let r = x.abs();
    let two = lit::<T>(2.0);
    if r > T::one() {
        (Regime::TailExp, tail_envelope(s, r))
    } else if s < two {
        (Regime::NearPower, r.powf(s - two))
    } else {
        (Regime::NearBounded, T::one())
    }
}

/// Kernel and derivative values on a sorted set of positive abscissae.
#[derive(Debug, Clone)]
pub struct KernelTable<T> {
    spec: KernelSpec<T>,
    abscissae: Vec<T>,
    values_g: Vec<T>,
    values_gp: Vec<T>,
}

impl<T: Scalar> KernelTable<T> {
    /// Tabulates `G_s` and `G_s'`. Abscissae must be positive and strictly
    /// increasing.
    pub fn tabulate(spec: &KernelSpec<T>, abscissae: Vec<T>) -> Result<Self> {
        if abscissae.iter().any(|&x| !(x > T::zero())) {
            return Err(Error::Domain("table abscissae must be positive".into()));
        }
        if abscissae.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("table abscissae must be strictly increasing".into()));
        }
        let values_g = abscissae
            .iter()
            .map(|&x| g_s(spec, x))
            .collect::<Result<Vec<_>>>()?;
        let values_gp = abscissae
            .iter()
            .map(|&x| g_s_prime(spec, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: *spec,
            abscissae,
            values_g,
            values_gp,
        })
    }

    /// Log-spaced abscissae on `[xmin, 1]` joined to linear spacing on
    /// `(1, xmax]`, `n` points per side.
    pub fn standard(spec: &KernelSpec<T>, xmin: T, xmax: T, n: usize) -> Result<Self> {
        if !(xmin > T::zero() && xmin < T::one() && xmax > T::one()) || n < 2 {
            return Err(Error::Domain(
                "standard table needs 0 < xmin < 1 < xmax and n >= 2".into(),
            ));
        }
        let mut xs = Vec::with_capacity(2 * n);
        let lmin = xmin.ln();
        for i in 0..n {
            let frac = lit::<T>(i as f64 / (n - 1) as f64);
            xs.push((lmin * (T::one() - frac)).exp());
        }
        for i in 1..=n {
            let frac = lit::<T>(i as f64 / n as f64);
            xs.push(T::one() + (xmax - T::one()) * frac);
        }
        Self::tabulate(spec, xs)
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn abscissae(&self) -> &[T] {
        &self.abscissae
    }

    pub fn values_g(&self) -> &[T] {
        &self.values_g
    }

    pub fn values_gp(&self) -> &[T] {
        &self.values_gp
    }
}

/// Empirical envelope constant for one (function, regime) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeBound {
    pub derivative: bool,
    pub regime: Regime,
    /// Smallest `C` with `|value| <= C * envelope` over the table.
    pub constant: f64,
    /// Log-log slope of `|value|/envelope` over the outermost decade, measured
    /// outward (towards 0 for near regimes, towards infinity for the tail).
    /// A bounded ratio has a non-positive or vanishing trend.
    pub trend: f64,
    pub count: usize,
}

/// Outcome of [`verify_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub s: f64,
    pub regimes: Vec<RegimeBound>,
    /// `int_1^inf |G_s'|`.
    pub derivative_tail_integral: f64,
    /// `(eta, int_eta^inf G_s^2)` for the eta sweep; empty when `s < 1`.
    pub square_integrals: Vec<(f64, f64)>,
    /// `int_0^inf G_s^2`, the eta-independent bound; `None` when `s < 1`.
    pub square_bound: Option<f64>,
}

/// Largest admissible outward trend of a regime ratio before the envelope is
/// declared unbounded on the table.
pub const TREND_LIMIT: f64 = 0.1;

/// Relative slack allowed between the eta sweep and the eta-free bound.
pub const ETA_SLACK: f64 = 0.05;

/// The eta sweep `{1, 1/2, 1/4, 1/8}`.
pub const ETA_SWEEP: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

fn outward_trend(points: &[(f64, f64)], near: bool) -> f64 {
    // points: (|x|, ratio) sorted by |x|
    if points.len() < 3 {
        return 0.0;
    }
    let (lo, hi) = if near {
        let x0 = points[0].0;
        (x0, x0 * 10.0)
    } else {
        let x1 = points[points.len() - 1].0;
        (x1 / 2.0, x1)
    };
    let sel: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, _)| *x >= lo && *x <= hi)
        .map(|&(x, ratio)| {
            let outward = if near { -x.ln() } else { x.ln() };
            (outward, ratio.ln())
        })
        .collect();
    if sel.len() < 2 {
        return 0.0;
    }
    crate::stats::linear_fit(&sel).map(|f| f.slope).unwrap_or(0.0)
}

/// Measures the envelope constants of the kernel and its derivative over a
/// table, together with `int_1^inf |G_s'|` and (for `s >= 1`) the eta sweep of
/// `int_eta^inf G_s^2`.
pub fn verify_bounds<T: Scalar>(spec: &KernelSpec<T>, table: &KernelTable<T>) -> Result<BoundReport> {
    let xs = table.abscissae();
    let has_near = xs.first().is_some_and(|&x| x <= T::one());
    let has_tail = xs.last().is_some_and(|&x| x > T::one());
    if !has_near || !has_tail {
        return Err(Error::Precondition(
            "table must cover both |x| <= 1 and |x| > 1".into(),
        ));
    }
    let s = spec.s();
    for (i, (&x, &g)) in xs.iter().zip(table.values_g()).enumerate() {
        if !(g > T::zero()) {
            return Err(Error::Verification(format!(
                "G_s not positive at x = {x} (value {g})"
            )));
        }
        if i > 0 && g > table.values_g()[i - 1] {
            return Err(Error::Verification(format!("G_s increases at x = {x}")));
        }
        if !(table.values_gp()[i] < T::zero()) {
            return Err(Error::Verification(format!(
                "G_s' not negative at x = {x}"
            )));
        }
    }

    // (derivative?, regime, samples of (x, ratio))
    type Bucket = (bool, Regime, Vec<(f64, f64)>);
    let mut buckets: Vec<Bucket> = Vec::new();
    let mut push = |derivative: bool, regime: Regime, x: f64, ratio: f64| {
        if let Some(b) = buckets
            .iter_mut()
            .find(|b| b.0 == derivative && b.1 == regime)
        {
            b.2.push((x, ratio));
        } else {
            buckets.push((derivative, regime, vec![(x, ratio)]));
        }
    };
    for ((&x, &g), &gp) in xs.iter().zip(table.values_g()).zip(table.values_gp()) {
        let (regime, env) = kernel_envelope(s, x);
        let ratio = to_f64(g / env);
        if !ratio.is_finite() {
            return Err(Error::Verification(format!(
                "kernel envelope {regime} violated at x = {x}"
            )));
        }
        push(false, regime, to_f64(x), ratio);
        let (regime, env) = derivative_envelope(s, x);
        let ratio = to_f64(gp.abs() / env);
        if !ratio.is_finite() {
            return Err(Error::Verification(format!(
                "derivative envelope {regime} violated at x = {x}"
            )));
        }
        push(true, regime, to_f64(x), ratio);
    }

    let mut regimes = Vec::new();
    for (derivative, regime, points) in buckets {
        let constant = points.iter().map(|p| p.1).fold(0.0, f64::max);
        let trend = outward_trend(&points, regime.is_near());
        if trend > TREND_LIMIT {
            let x = if regime.is_near() {
                points[0].0
            } else {
                points[points.len() - 1].0
            };
            return Err(Error::Verification(format!(
                "{} envelope {regime} grows outward (trend {trend:.3}) near x = {x}",
                if derivative { "derivative" } else { "kernel" }
            )));
        }
        regimes.push(RegimeBound {
            derivative,
            regime,
            constant,
            trend,
            count: points.len(),
        });
    }

    let tol = spec.quad_tol().max(lit(1e-12));
    let derivative_tail_integral = to_f64(quad::exp_sinh(
        |x: T| g_s_prime(spec, x).map(|v| v.abs()).unwrap_or(T::nan()),
        T::one(),
        tol,
    )?);

    let mut square_integrals = Vec::new();
    let mut square_bound = None;
    if s >= T::one() {
        let g2 = |x: T| g_s(spec, x).map(|v| v * v).unwrap_or(T::nan());
        let tail = quad::exp_sinh(g2, T::one(), tol)?;
        for &eta in ETA_SWEEP.iter() {
            let eta_t = lit::<T>(eta);
            let head = if eta_t < T::one() {
                quad::tanh_sinh(g2, eta_t, T::one(), tol)?
            } else {
                T::zero()
            };
            square_integrals.push((eta, to_f64(head + tail)));
        }
        let head = quad::tanh_sinh(g2, T::zero(), T::one(), tol)?;
        let bound = to_f64(head + tail);
        if !bound.is_finite() {
            return Err(Error::Verification("int_0^inf G_s^2 is not finite".into()));
        }
        if let Some(&(eta, v)) = square_integrals
            .iter()
            .find(|(_, v)| *v > bound * (1.0 + ETA_SLACK))
        {
            return Err(Error::Verification(format!(
                "int_eta^inf G_s^2 = {v} at eta = {eta} exceeds the eta-free bound {bound}"
            )));
        }
        square_bound = Some(bound);
    }

    Ok(BoundReport {
        s: to_f64(s),
        regimes,
        derivative_tail_integral,
        square_integrals,
        square_bound,
    })
}

/// `int_R G_s`, computed by quadrature on `[0, 1]` and `[1, half_width]` plus
/// an exponential tail correction `G_s(L) / (1 - (s-2)/(2L))` beyond.
pub fn mass<T: Scalar>(spec: &KernelSpec<T>, half_width: T) -> Result<T> {
    let tol = spec.quad_tol().max(lit(1e-13));
    let g = |x: T| g_s(spec, x).unwrap_or(T::nan());
    let head = quad::tanh_sinh(g, T::zero(), T::one(), tol)?;
    let body = if half_width > T::one() {
        quad::tanh_sinh(g, T::one(), half_width, tol)?
    } else {
        T::zero()
    };
    let l = half_width.max(T::one());
    let decay = T::one() - (spec.s() - lit(2.0)) / (lit::<T>(2.0) * l);
    let tail = g_s(spec, l)? / decay;
    Ok(lit::<T>(2.0) * (head + body + tail))
}
