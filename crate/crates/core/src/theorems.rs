//! Hypothesis sets of the four wave-breaking theorems, their predicted
//! blow-up windows, and the `u0 = lambda * phi` scaling construction.
//!
//! The theorems carry an unspecified universal constant `C`; it is exposed as
//! `c_univ`. Every condition is stored in the normalised form `lhs > rhs`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Scalar};
use crate::spectral::GridField;

/// Which theorem's hypotheses to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// `p = 1`, `s` in `(2/5, 1)`, `H^3` data.
    QuadraticLowOrder,
    /// `p = 1`, `s >= 1`, `H^2` data.
    QuadraticHighOrder,
    /// `p >= 2`, `s` in `(0, 1)`.
    HigherLowOrder,
    /// `p >= 2`, `s >= 1`.
    HigherHighOrder,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [
        Theorem::QuadraticLowOrder,
        Theorem::QuadraticHighOrder,
        Theorem::HigherLowOrder,
        Theorem::HigherHighOrder,
    ];

    /// Numeric label used on the command line.
    pub fn label(&self) -> &'static str {
        match self {
            Theorem::QuadraticLowOrder => "2.1",
            Theorem::QuadraticHighOrder => "2.2",
            Theorem::HigherLowOrder => "2.3",
            Theorem::HigherHighOrder => "2.4",
        }
    }

    fn quadratic(&self) -> bool {
        matches!(self, Theorem::QuadraticLowOrder | Theorem::QuadraticHighOrder)
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.label() == s.trim())
            .ok_or_else(|| Error::Domain(format!("unknown theorem '{s}' (expected 2.1, 2.2, 2.3 or 2.4)")))
    }
}

#[derive(Debug, Clone)]
pub struct HypothesisInput<T: Scalar> {
    pub u0: GridField<T>,
    pub s: f64,
    pub p: u32,
    pub delta: f64,
    pub c_univ: f64,
    pub c0: f64,
    pub c1: f64,
    /// Local amplitude bounds, required for `p >= 2`.
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl<T: Scalar> HypothesisInput<T> {
    /// `u0 = lambda * phi` with `C0 = 2 lambda ||phi||_inf` and
    /// `C1 = 2 lambda ||phi'||_inf`.
    pub fn scaled(phi: &GridField<T>, lambda: f64, s: f64, p: u32, delta: f64, c_univ: f64) -> Result<Self> {
        let sup = to_f64(phi.sup_abs());
        let slope = to_f64(phi.derivative(1)?.sup_abs());
        Ok(Self {
            u0: phi.scale(T::from_f64(lambda).unwrap_or_else(T::nan)),
            s,
            p,
            delta,
            c_univ,
            c0: 2.0 * lambda * sup,
            c1: 2.0 * lambda * slope,
            a: None,
            b: None,
        })
    }

    pub fn with_amplitude_bounds(mut self, a: f64, b: f64) -> Self {
        self.a = Some(a);
        self.b = Some(b);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl Condition {
    fn new(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            name,
            lhs,
            rhs,
            margin: lhs - rhs,
            pass: lhs > rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub theorem: Theorem,
    pub conditions: Vec<Condition>,
    pub pass: bool,
    pub window: (f64, f64),
    pub inf_slope: f64,
    /// Interval containing `{u0' < 0}` (only for `p >= 2`).
    pub support: Option<(f64, f64)>,
}

impl HypothesisReport {
    fn new(theorem: Theorem, conditions: Vec<Condition>, window: (f64, f64), inf_slope: f64, support: Option<(f64, f64)>) -> Self {
        let pass = conditions.iter().all(|c| c.pass);
        Self {
            theorem,
            conditions,
            pass,
            window,
            inf_slope,
            support,
        }
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.conditions.iter().filter(|c| !c.pass).map(|c| c.name).collect()
    }

    /// Aligned `condition lhs rhs margin pass` table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<22} {:>24} {:>24} {:>24} {:>5}\n",
            "condition", "lhs", "rhs", "margin", "pass"
        );
        for c in &self.conditions {
            out.push_str(&format!(
                "{:<22} {:>24.16e} {:>24.16e} {:>24.16e} {:>5}\n",
                c.name, c.lhs, c.rhs, c.margin, c.pass
            ));
        }
        out
    }

    pub const CSV_HEADER: [&'static str; 5] = ["condition", "lhs", "rhs", "margin", "pass"];

    /// CSV with the header above; `pass` is written as 0 or 1.
    pub fn csv(&self) -> String {
        let num = crate::io::fmt_num;
        let mut out = Self::CSV_HEADER.join(",");
        out.push('\n');
        for c in &self.conditions {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.name,
                num(c.lhs),
                num(c.rhs),
                num(c.margin),
                u8::from(c.pass)
            ));
        }
        out
    }
}

/// Window for `p = 1`: `((1+d)^{-1}, (1-d)^{-2}) / |inf u0'|`.
pub fn window_quadratic(delta: f64, inf_slope: f64) -> (f64, f64) {
    let m = inf_slope.abs();
    (1.0 / ((1.0 + delta) * m), 1.0 / ((1.0 - delta).powi(2) * m))
}

/// Window for `p >= 2`:
/// `(1 / ((p B^{p-1} + d) |m0|), 1 / ((A^{p-1} B^{1-p} - d)(p A^{p-1} - d) |m0|))`.
pub fn window_higher(p: u32, a: f64, b: f64, delta: f64, inf_slope: f64) -> (f64, f64) {
    let m = inf_slope.abs();
    let e = p as i32 - 1;
    let pf = p as f64;
    let lo = 1.0 / ((pf * b.powi(e) + delta) * m);
    let hi = 1.0 / ((a.powi(e) * b.powi(-e) - delta) * (pf * a.powi(e) - delta) * m);
    (lo, hi)
}

struct DataNorms {
    inf_slope: f64,
    sup: f64,
    sup_slope: f64,
    h2: f64,
    h3: f64,
    d1: f64,
    d2: f64,
    d3: f64,
}

fn norms<T: Scalar>(u0: &GridField<T>) -> Result<DataNorms> {
    let d1 = u0.derivative(1)?;
    Ok(DataNorms {
        inf_slope: to_f64(d1.min()),
        sup: to_f64(u0.sup_abs()),
        sup_slope: to_f64(d1.sup_abs()),
        h2: to_f64(u0.sobolev(2)),
        h3: to_f64(u0.sobolev(3)),
        d1: to_f64(d1.l2_spectral()),
        d2: to_f64(u0.derivative(2)?.l2_spectral()),
        d3: to_f64(u0.derivative(3)?.l2_spectral()),
    })
}

fn validate<T: Scalar>(theorem: Theorem, input: &HypothesisInput<T>, n: &DataNorms) -> Result<()> {
    let s = input.s;
    let in_regime = match theorem {
        Theorem::QuadraticLowOrder => s > 0.4 && s < 1.0,
        Theorem::HigherLowOrder => s > 0.0 && s < 1.0,
        Theorem::QuadraticHighOrder | Theorem::HigherHighOrder => s >= 1.0,
    };
    if !in_regime {
        return Err(Error::OutOfRegime(format!("s = {s} is outside the range of theorem {theorem}")));
    }
    if theorem.quadratic() && input.p != 1 {
        return Err(Error::OutOfRegime(format!("theorem {theorem} requires p = 1, got p = {}", input.p)));
    }
    if !theorem.quadratic() && input.p < 2 {
        return Err(Error::OutOfRegime(format!("theorem {theorem} requires p >= 2, got p = {}", input.p)));
    }
    if !(input.delta > 0.0 && input.delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {}", input.delta)));
    }
    if !(input.c_univ > 0.0) {
        return Err(Error::Domain(format!("C_univ must be positive, got {}", input.c_univ)));
    }
    if !(n.inf_slope < 0.0) {
        return Err(Error::Precondition("inf u0' must be negative".into()));
    }
    let slack = 1.0 + 1e-12;
    if !(input.c0 * slack >= 2.0 * n.sup) {
        return Err(Error::Precondition(format!("C0 = {} is below 2 ||u0||_inf = {}", input.c0, 2.0 * n.sup)));
    }
    if !(input.c1 * slack >= 2.0 * n.sup_slope) {
        return Err(Error::Precondition(format!(
            "C1 = {} is below 2 ||u0'||_inf = {}",
            input.c1,
            2.0 * n.sup_slope
        )));
    }
    Ok(())
}

/// Smallest interval of grid points containing `{u0' < -1e-12 ||u0'||_inf}`,
/// and the min/max of `u0` over it.
fn slope_support<T: Scalar>(u0: &GridField<T>) -> Result<((f64, f64), f64, f64)> {
    let d1 = u0.derivative(1)?;
    let floor = -1e-12 * to_f64(d1.sup_abs());
    let neg: Vec<usize> = (0..d1.values().len())
        .filter(|&j| to_f64(d1.values()[j]) < floor)
        .collect();
    let (first, last) = match (neg.first(), neg.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Precondition("u0' has no negative values".into())),
    };
    let n = d1.values().len();
    if first == 0 || last == n - 1 {
        return Err(Error::Precondition(
            "{u0' < 0} reaches the edge of the box; cannot bound it".into(),
        ));
    }
    let vals = &u0.values()[first..=last];
    let lo = vals.iter().map(|&v| to_f64(v)).fold(f64::INFINITY, f64::min);
    let hi = vals.iter().map(|&v| to_f64(v)).fold(f64::NEG_INFINITY, f64::max);
    let grid = u0.grid();
    Ok(((to_f64(grid.x(first)), to_f64(grid.x(last))), lo, hi))
}

pub fn check_quadratic_low_order<T: Scalar>(input: &HypothesisInput<T>) -> Result<HypothesisReport> {
    let th = Theorem::QuadraticLowOrder;
    let n = norms(&input.u0)?;
    validate(th, input, &n)?;
    let (c, d, m) = (input.c_univ, input.delta, -n.inf_slope);
    let (c0, c1) = (input.c0, input.c1);
    let conditions = vec![
        Condition::new(
            "slope_quadratic",
            d * d * m * m,
            c * (n.h3 + c1 + c1.cbrt() * n.d3.powf(2.0 / 3.0)),
        ),
        Condition::new("slope_amplitude_ratio", (1.0 - d).powi(2) * m, c * (1.0 + c1 / c0)),
        Condition::new(
            "slope_cubic",
            (1.0 - d).powi(3) * m,
            c * (1.0 + c1.powf(-2.0 / 3.0) * n.d3.powf(2.0 / 3.0)),
        ),
    ];
    Ok(HypothesisReport::new(th, conditions, window_quadratic(d, n.inf_slope), n.inf_slope, None))
}

pub fn check_quadratic_high_order<T: Scalar>(input: &HypothesisInput<T>) -> Result<HypothesisReport> {
    let th = Theorem::QuadraticHighOrder;
    let n = norms(&input.u0)?;
    validate(th, input, &n)?;
    let (c, d, m) = (input.c_univ, input.delta, -n.inf_slope);
    let (c0, c1) = (input.c0, input.c1);
    let conditions = vec![
        Condition::new("slope_quadratic", d * d * m * m, c * (n.h2 + c1 + n.d2)),
        Condition::new("slope_amplitude_ratio", (1.0 - d).powi(2) * m, c * n.d1 / c0),
        Condition::new("slope_cubic", (1.0 - d).powi(3) * m, c * (1.0 + n.d2 / c1)),
    ];
    Ok(HypothesisReport::new(th, conditions, window_quadratic(d, n.inf_slope), n.inf_slope, None))
}

fn amplitude_bounds<T: Scalar>(input: &HypothesisInput<T>) -> Result<(f64, f64)> {
    match (input.a, input.b) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Ok((a, b)),
        (Some(_), Some(_)) => Err(Error::Domain("A and B must be positive".into())),
        _ => Err(Error::Precondition("A and B are required for p >= 2".into())),
    }
}

/// Conditions shared by both `p >= 2` theorems, given the amplitude offset
/// `offset` (the term added to `A` and subtracted from `B`).
fn higher_tail(p: u32, a: f64, b: f64, d: f64, offset: f64, umin: f64, umax: f64) -> Vec<Condition> {
    let e = p as i32 - 1;
    let pf = p as f64;
    vec![
        Condition::new("amplitude_upper", b - offset, umax),
        Condition::new("amplitude_lower", umin, a + offset),
        Condition::new("ab_ratio", a.powi(2 * e), 8.0 * d * b.powi(2 * e)),
        Condition::new("ab_power", 4.0 * pf * a.powi(2 * e), 7.0 * b.powi(e)),
        Condition::new("ab_gap", b, a + offset),
    ]
}

pub fn check_higher_low_order<T: Scalar>(input: &HypothesisInput<T>) -> Result<HypothesisReport> {
    let th = Theorem::HigherLowOrder;
    let n = norms(&input.u0)?;
    validate(th, input, &n)?;
    let (a, b) = amplitude_bounds(input)?;
    let (support, umin, umax) = slope_support(&input.u0)?;
    let (c, d, m, p) = (input.c_univ, input.delta, -n.inf_slope, input.p);
    let (c0, c1) = (input.c0, input.c1);
    let e = p as i32 - 1;
    let pf = p as f64;
    let ratio = a.powi(e) / (2.0 * b.powi(e));
    let expo = 7.0 * b.powi(e) / (2.0 * pf * a.powi(2 * e));
    let mut conditions = vec![
        Condition::new(
            "slope_quadratic",
            d * d * m * m,
            c * (n.h3 + c1 + ratio.powf(-expo) * n.d3),
        ),
        Condition::new("slope_amplitude_ratio", (1.0 - d).powi(2) * m, c * (1.0 + c1 / c0)),
        Condition::new(
            "slope_cubic",
            (1.0 - d).powi(3) * m,
            c * (1.0 + ratio.powf(-2.0 * expo) * n.d3 / c1),
        ),
    ];
    let offset = c * (c0 + c1) / ((1.0 - d).powi(2) * m);
    conditions.extend(higher_tail(p, a, b, d, offset, umin, umax));
    Ok(HypothesisReport::new(th, conditions, window_higher(p, a, b, d, n.inf_slope), n.inf_slope, Some(support)))
}

pub fn check_higher_high_order<T: Scalar>(input: &HypothesisInput<T>) -> Result<HypothesisReport> {
    let th = Theorem::HigherHighOrder;
    let n = norms(&input.u0)?;
    validate(th, input, &n)?;
    let (a, b) = amplitude_bounds(input)?;
    let (support, umin, umax) = slope_support(&input.u0)?;
    let (c, d, m, p) = (input.c_univ, input.delta, -n.inf_slope, input.p);
    let (c0, c1) = (input.c0, input.c1);
    let e = p as i32 - 1;
    let pf = p as f64;
    let ratio = a.powi(e) / (2.0 * b.powi(e));
    let five = 5.0 * b.powi(e) / (2.0 * pf * a.powi(2 * e));
    let one = b.powi(e) / (2.0 * pf * a.powi(2 * e));
    let mut conditions = vec![
        Condition::new(
            "slope_quadratic",
            d * d * m * m,
            c * (n.h2 + c1 + ratio.powf(-five) * n.d2),
        ),
        Condition::new(
            "slope_amplitude_ratio",
            (1.0 - d).powi(2) * m,
            c * ratio.powf(-one) * n.d1 / c0,
        ),
        Condition::new(
            "slope_cubic",
            (1.0 - d).powi(3) * m,
            c * ratio.powf(-five) * n.d2 / c1,
        ),
    ];
    let offset = c * ratio.powf(-one) * n.d1 / ((1.0 - d).powi(2) * m);
    conditions.extend(higher_tail(p, a, b, d, offset, umin, umax));
    Ok(HypothesisReport::new(th, conditions, window_higher(p, a, b, d, n.inf_slope), n.inf_slope, Some(support)))
}

pub fn check<T: Scalar>(theorem: Theorem, input: &HypothesisInput<T>) -> Result<HypothesisReport> {
    match theorem {
        Theorem::QuadraticLowOrder => check_quadratic_low_order(input),
        Theorem::QuadraticHighOrder => check_quadratic_high_order(input),
        Theorem::HigherLowOrder => check_higher_low_order(input),
        Theorem::HigherHighOrder => check_higher_high_order(input),
    }
}

/// Parameters of the `lambda * phi` search besides `phi` itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRequest {
    pub theorem: Theorem,
    pub s: f64,
    pub p: u32,
    pub delta: f64,
    pub c_univ: f64,
    pub amplitude_bounds: Option<(f64, f64)>,
}

const LAMBDA_MIN: f64 = 1e-8;
const LAMBDA_MAX: f64 = 1e12;

fn passes<T: Scalar>(phi: &GridField<T>, lambda: f64, req: &ScaleRequest) -> Result<bool> {
    let mut input = HypothesisInput::scaled(phi, lambda, req.s, req.p, req.delta, req.c_univ)?;
    if let Some((a, b)) = req.amplitude_bounds {
        input = input.with_amplitude_bounds(a, b);
    }
    match check(req.theorem, &input) {
        Ok(r) => Ok(r.pass),
        // amplitude/support preconditions are data properties, not lambda ones
        Err(e @ (Error::OutOfRegime(_) | Error::Domain(_))) => Err(e),
        Err(Error::Precondition(msg)) if msg.contains("inf u0'") => Err(Error::Precondition(msg)),
        Err(e) => Err(e),
    }
}

/// Smallest `lambda` for which `lambda * phi` satisfies the theorem's
/// hypotheses, by bisection to relative precision `1e-6`. The result passes
/// at `1.01 lambda` and fails at `0.99 lambda`; a pass/fail pattern that is
/// not monotone on a log-spaced scan around it is reported as
/// [`Error::NonMonotone`].
pub fn scale_to_pass<T: Scalar>(phi: &GridField<T>, req: &ScaleRequest) -> Result<f64> {
    if !(to_f64(phi.derivative(1)?.min()) < 0.0) {
        return Err(Error::Precondition("inf phi' must be negative".into()));
    }
    let mut hi = 1.0;
    while !passes(phi, hi, req)? {
        hi *= 2.0;
        if hi > LAMBDA_MAX {
            return Err(Error::Verification(format!(
                "no lambda up to {LAMBDA_MAX:e} satisfies theorem {}",
                req.theorem
            )));
        }
    }
    let mut lo = hi / 2.0;
    while passes(phi, lo, req)? {
        lo /= 2.0;
        if lo < LAMBDA_MIN {
            return Ok(lo);
        }
    }
    while (hi - lo) > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if passes(phi, mid, req)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = hi;
    let mut seen_pass = false;
    for i in 0..=40 {
        let l = lambda * 10f64.powf(-2.0 + 4.0 * i as f64 / 40.0);
        let ok = passes(phi, l, req)?;
        if seen_pass && !ok {
            return Err(Error::NonMonotone { lambda: l });
        }
        seen_pass |= ok;
    }
    if !passes(phi, 1.01 * lambda, req)? || passes(phi, 0.99 * lambda, req)? {
        return Err(Error::NonMonotone { lambda });
    }
    Ok(lambda)
}
