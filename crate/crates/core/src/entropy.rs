//! First-order finite-volume solver for the entropy solution of
//!
//! ```text
//! u_t + (u^2/2)_x = G_s' * u,
//! ```
//!
//! the `p = 1` equation with the derivative moved onto the kernel, plus the
//! Oleinik and `L^1` stability checks. Cells are periodic on `[-L, L)`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::kernel::{g_s, KernelSpec};
use crate::scalar::{from_usize, lit, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flux {
    Rusanov,
    Godunov,
}

impl std::str::FromStr for Flux {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rusanov" => Ok(Flux::Rusanov),
            "godunov" => Ok(Flux::Godunov),
            other => Err(Error::Domain(format!("unknown flux {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FvConfig<T> {
    pub spec: KernelSpec<T>,
    pub cells: usize,
    pub half_length: T,
    pub cfl: T,
    pub t_end: T,
    pub flux: Flux,
    /// Include the nonlocal source; off gives plain Burgers.
    pub source: bool,
    /// Upper bound on the time step independent of the CFL condition.
    pub max_dt: T,
}

impl<T: Scalar> FvConfig<T> {
    pub fn new(spec: KernelSpec<T>, cells: usize, half_length: T, t_end: T) -> Self {
        Self {
            spec,
            cells,
            half_length,
            cfl: lit(0.45),
            t_end,
            flux: Flux::Rusanov,
            source: true,
            max_dt: lit(0.05),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > T::zero() && self.cfl <= lit(0.5)) {
            return Err(Error::Domain(format!("cfl must lie in (0, 0.5], got {}", self.cfl)));
        }
        if self.cells < 4 {
            return Err(Error::Domain(format!("need at least 4 cells, got {}", self.cells)));
        }
        if !(self.half_length > T::zero()) {
            return Err(Error::Domain(format!("half-length must be positive, got {}", self.half_length)));
        }
        if self.source && self.spec.s() <= T::one() {
            return Err(Error::Precondition(format!(
                "G_s' is integrable only for s > 1, got s = {}",
                self.spec.s()
            )));
        }
        if !(self.t_end >= T::zero() && self.max_dt > T::zero()) {
            return Err(Error::Domain("t_end must be >= 0 and max_dt > 0".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> T {
        lit::<T>(2.0) * self.half_length / from_usize(self.cells)
    }

    /// Centre of cell `i`.
    pub fn x(&self, i: usize) -> T {
        -self.half_length + (from_usize::<T>(i) + lit(0.5)) * self.dx()
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.cells).map(|i| self.x(i)).collect()
    }
}

/// Cell averages at time `t` with their one-sided Lipschitz constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FvState<T> {
    pub t: T,
    pub u: Vec<T>,
    pub dx: T,
}

impl<T: Scalar> FvState<T> {
    pub fn new(u: Vec<T>, dx: T) -> Self {
        Self { t: T::zero(), u, dx }
    }

    /// Cell averages of `f` by 4-point Gauss-Legendre quadrature per cell.
    pub fn from_fn(cfg: &FvConfig<T>, f: impl Fn(T) -> T) -> Self {
        let dx = cfg.dx();
        let nodes = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
        let weights = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
        let u = (0..cfg.cells)
            .map(|i| {
                let c = cfg.x(i);
                nodes
                    .iter()
                    .zip(&weights)
                    .fold(T::zero(), |acc, (&z, &w)| acc + lit::<T>(w) * f(c + lit::<T>(0.5 * z) * dx))
                    / lit(2.0)
            })
            .collect();
        Self::new(u, dx)
    }

    pub fn l1(&self) -> T {
        self.u.iter().fold(T::zero(), |a, v| a + v.abs()) * self.dx
    }

    pub fn mass(&self) -> T {
        self.u.iter().fold(T::zero(), |a, &v| a + v) * self.dx
    }

    pub fn linf(&self) -> T {
        self.u.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    /// Periodic total variation.
    pub fn total_variation(&self) -> T {
        let n = self.u.len();
        (0..n).fold(T::zero(), |a, i| a + (self.u[(i + 1) % n] - self.u[i]).abs())
    }

    /// `max_i (u_{i+1} - u_i)/dx` over adjacent cells (no wrap at the seam).
    pub fn one_sided_lip(&self) -> T {
        self.u
            .windows(2)
            .map(|w| (w[1] - w[0]) / self.dx)
            .fold(T::neg_infinity(), T::max)
    }

    /// `max (u_j - u_i)/(x_j - x_i)` over pairs `i < j` with `x_j - x_i <= width`.
    pub fn one_sided_lip_within(&self, width: T) -> T {
        let reach = to_f64(width / self.dx).floor().max(1.0) as usize;
        let n = self.u.len();
        let mut best = T::neg_infinity();
        for i in 0..n {
            for d in 1..=reach.min(n - 1 - i) {
                best = best.max((self.u[i + d] - self.u[i]) / (from_usize::<T>(d) * self.dx));
            }
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|v| v.is_finite())
    }
}

/// Cell-integrated kernel-derivative weights, `w_m = G((m + 1/2) dx) - G((m - 1/2) dx)`,
/// stored circularly (`m` and `m - n` share a slot; `w_{n/2} = 0`).
///
/// For piecewise-constant data `(G' * u)(x_i) = sum_j w_{i-j} u_j` exactly; the
/// weights are antisymmetric, so the source has zero total mass.
pub fn source_weights<T: Scalar>(cfg: &FvConfig<T>) -> Result<Vec<T>> {
    let n = cfg.cells;
    let dx = cfg.dx();
    let half = lit::<T>(0.5);
    let mut w = vec![T::zero(); n];
    for m in 1..n.div_ceil(2) {
        let mf = from_usize::<T>(m);
        let v = g_s(&cfg.spec, (mf + half) * dx)? - g_s(&cfg.spec, (mf - half) * dx)?;
        w[m] = v;
        w[n - m] = -v;
    }
    Ok(w)
}

/// Circular convolution with fixed weights by FFT.
pub struct SourceOperator<T: Scalar> {
    weights_hat: Vec<Complex<T>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> SourceOperator<T> {
    pub fn new(cfg: &FvConfig<T>) -> Result<Self> {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(cfg.cells);
        let inverse = planner.plan_fft_inverse(cfg.cells);
        let mut weights_hat: Vec<Complex<T>> = source_weights(cfg)?.into_iter().map(|v| Complex::new(v, T::zero())).collect();
        forward.process(&mut weights_hat);
        Ok(Self { weights_hat, forward, inverse })
    }

    pub fn apply(&self, u: &[T]) -> Vec<T> {
        let n = u.len();
        let mut buf: Vec<Complex<T>> = u.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward.process(&mut buf);
        for (b, w) in buf.iter_mut().zip(&self.weights_hat) {
            *b = *b * *w;
        }
        self.inverse.process(&mut buf);
        let scale = from_usize::<T>(n).recip();
        buf.into_iter().map(|c| c.re * scale).collect()
    }
}

fn burgers<T: Scalar>(u: T) -> T {
    u * u / lit(2.0)
}

/// Numerical flux for `f(u) = u^2/2` between states `a` (left) and `b` (right).
pub fn numerical_flux<T: Scalar>(flux: Flux, a: T, b: T) -> T {
    match flux {
        Flux::Rusanov => {
            let speed = a.abs().max(b.abs());
            (burgers(a) + burgers(b) - speed * (b - a)) / lit(2.0)
        }
        Flux::Godunov => {
            if a <= b {
                if a > T::zero() {
                    burgers(a)
                } else if b < T::zero() {
                    burgers(b)
                } else {
                    T::zero()
                }
            } else if a + b > T::zero() {
                burgers(a)
            } else {
                burgers(b)
            }
        }
    }
}

/// Largest stable step for the current state.
pub fn stable_dt<T: Scalar>(state: &FvState<T>, cfg: &FvConfig<T>) -> T {
    let speed = state.linf().max(lit(1e-12));
    (cfg.cfl * state.dx / speed).min(cfg.max_dt)
}

/// One forward-Euler step of the conservative update with the explicit source.
pub fn fv_step<T: Scalar>(state: &FvState<T>, cfg: &FvConfig<T>, source: Option<&SourceOperator<T>>, dt: T) -> Result<FvState<T>> {
    let limit = stable_dt(state, cfg);
    if dt > limit * (T::one() + lit(1e-12)) {
        return Err(Error::Cfl { suggested_dt: to_f64(limit) });
    }
    let n = state.u.len();
    let u = &state.u;
    let fluxes: Vec<T> = (0..n).map(|i| numerical_flux(cfg.flux, u[i], u[(i + 1) % n])).collect();
    let s = match (cfg.source, source) {
        (true, Some(op)) => op.apply(u),
        (true, None) => SourceOperator::new(cfg)?.apply(u),
        (false, _) => vec![T::zero(); n],
    };
    let ratio = dt / state.dx;
    let next: Vec<T> = (0..n)
        .map(|i| u[i] - ratio * (fluxes[i] - fluxes[(i + n - 1) % n]) + dt * s[i])
        .collect();
    let out = FvState { t: state.t + dt, u: next, dx: state.dx };
    if !out.is_finite() {
        return Err(Error::NumericalBlowup { t: to_f64(out.t) });
    }
    Ok(out)
}

/// Diagnostics at one sampled time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FvSample {
    pub t: f64,
    pub l1: f64,
    pub linf: f64,
    pub tv: f64,
    pub mass: f64,
    pub oneside_lip: f64,
    pub oneside_lip_unit: f64,
    pub source_sup: f64,
}

impl FvSample {
    pub fn of<T: Scalar>(state: &FvState<T>, source: Option<&SourceOperator<T>>) -> Self {
        let source_sup = source.map_or(0.0, |op| op.apply(&state.u).iter().fold(0.0f64, |a, v| a.max(to_f64(v.abs()))));
        Self {
            t: to_f64(state.t),
            l1: to_f64(state.l1()),
            linf: to_f64(state.linf()),
            tv: to_f64(state.total_variation()),
            mass: to_f64(state.mass()),
            oneside_lip: to_f64(state.one_sided_lip()),
            oneside_lip_unit: to_f64(state.one_sided_lip_within(T::one())),
            source_sup,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FvRun<T> {
    pub state: FvState<T>,
    pub samples: Vec<FvSample>,
    pub steps: usize,
}

/// Runs to `cfg.t_end`, landing exactly on every time in `sample_times`
/// (which must be increasing); `t = 0` is always sampled.
pub fn run<T: Scalar>(u0: &FvState<T>, cfg: &FvConfig<T>, sample_times: &[T]) -> Result<FvRun<T>> {
    cfg.validate()?;
    if u0.u.len() != cfg.cells {
        return Err(Error::Grid(format!("{} cell averages for {} cells", u0.u.len(), cfg.cells)));
    }
    let op = if cfg.source { Some(SourceOperator::new(cfg)?) } else { None };
    let mut state = u0.clone();
    let mut samples = vec![FvSample::of(&state, op.as_ref())];
    let mut pending: Vec<T> = sample_times
        .iter()
        .copied()
        .filter(|&t| t > state.t && t <= cfg.t_end)
        .collect();
    pending.push(cfg.t_end);
    let mut steps = 0;
    for target in pending {
        while state.t < target {
            let dt = stable_dt(&state, cfg).min(target - state.t);
            state = fv_step(&state, cfg, op.as_ref(), dt)?;
            steps += 1;
            if target - state.t < lit::<T>(1e-12) * target.max(T::one()) {
                state.t = target;
            }
        }
        if samples.last().is_none_or(|s| s.t < to_f64(state.t)) {
            samples.push(FvSample::of(&state, op.as_ref()));
        }
    }
    Ok(FvRun { state, samples, steps })
}

/// `1/t + 2 + 2t(1 + 2 e^t ||u0||_1)`.
pub fn oleinik_bound(t: f64, u0_l1: f64) -> f64 {
    1.0 / t + 2.0 + 2.0 * t * (1.0 + 2.0 * t.exp() * u0_l1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OleinikPoint {
    pub t: f64,
    pub oneside_lip: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Compares the adjacent-cell one-sided constant with the Oleinik bound at
/// every sample with `t > 0`.
pub fn oleinik_check(history: &[FvSample], u0_l1: f64) -> Vec<OleinikPoint> {
    history
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| {
            let bound = oleinik_bound(s.t, u0_l1);
            let lip = s.oneside_lip.max(s.oneside_lip_unit);
            OleinikPoint { t: s.t, oneside_lip: lip, bound, margin: bound - lip, pass: lip <= bound }
        })
        .collect()
}

pub const FV_CSV_HEADER: [&str; 7] = ["t", "l1", "linf", "tv", "oneside_lip", "oleinik_bound", "margin"];

/// Rows of `fv.csv`; the bound columns are `inf`/`nan` at `t = 0`.
pub fn fv_csv_rows(history: &[FvSample], u0_l1: f64) -> Vec<Vec<f64>> {
    history
        .iter()
        .map(|s| {
            let lip = s.oneside_lip.max(s.oneside_lip_unit);
            let bound = if s.t > 0.0 { oleinik_bound(s.t, u0_l1) } else { f64::INFINITY };
            vec![s.t, s.l1, s.linf, s.tv, lip, bound, bound - lip]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Report {
    pub initial_distance: f64,
    /// `(t, ||u - v||_1, ||u - v||_1 / (e^t ||u0 - v0||_1))`.
    pub samples: Vec<(f64, f64, f64)>,
    pub slack: f64,
    pub pass: bool,
}

fn l1_distance<T: Scalar>(a: &FvState<T>, b: &FvState<T>) -> f64 {
    to_f64(a.u.iter().zip(&b.u).fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs()) * a.dx)
}

/// Runs both data on the same discretization (concurrently) and checks
/// `||u - v||_1 <= e^t ||u0 - v0||_1` up to the factor `1 + 10 dx`.
pub fn l1_stability<T: Scalar>(u0: &FvState<T>, v0: &FvState<T>, cfg: &FvConfig<T>, t_samples: &[T]) -> Result<L1Report> {
    let sampled = |init: &FvState<T>| -> Result<Vec<FvState<T>>> {
        let mut out = Vec::with_capacity(t_samples.len());
        let mut state = init.clone();
        for &t in t_samples {
            let mut c = *cfg;
            c.t_end = t;
            state = run(&state, &c, &[])?.state;
            out.push(state.clone());
        }
        Ok(out)
    };
    let (us, vs) = std::thread::scope(|scope| {
        let h = scope.spawn(|| sampled(v0));
        let us = sampled(u0);
        (us, h.join().expect("worker thread panicked"))
    });
    let (us, vs) = (us?, vs?);
    let d0 = l1_distance(u0, v0);
    let slack = 1.0 + 10.0 * to_f64(cfg.dx());
    let samples: Vec<(f64, f64, f64)> = us
        .iter()
        .zip(&vs)
        .map(|(a, b)| {
            let t = to_f64(a.t);
            let d = l1_distance(a, b);
            let ratio = if d0 > 0.0 { d / (t.exp() * d0) } else if d == 0.0 { 0.0 } else { f64::INFINITY };
            (t, d, ratio)
        })
        .collect();
    let pass = samples.iter().all(|s| s.2 <= slack);
    Ok(L1Report { initial_distance: d0, samples, slack, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(cells: usize, l: f64, t_end: f64) -> FvConfig<f64> {
        FvConfig::new(KernelSpec::with_order(2.0).unwrap(), cells, l, t_end)
    }

    #[test]
    fn zero_stays_zero() {
        let c = cfg(128, 10.0, 1.0);
        let out = run(&FvState::new(vec![0.0; 128], c.dx()), &c, &[]).unwrap();
        assert!(out.state.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weights_match_kernel_derivative_integrals() {
        // w_m = int over cell m of G'(y) dy, checked by Simpson on the closed form
        let c = cfg(64, 8.0, 1.0);
        let w = source_weights(&c).unwrap();
        let dx = c.dx();
        for m in [1usize, 2, 5, 20] {
            let (a, b) = ((m as f64 - 0.5) * dx, (m as f64 + 0.5) * dx);
            let gp = |y: f64| -0.5 * (-y).exp();
            let k = 200;
            let h = (b - a) / k as f64;
            let simpson: f64 = (0..=k)
                .map(|i| {
                    let f = gp(a + i as f64 * h);
                    let c = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    c * f
                })
                .sum::<f64>()
                * h
                / 3.0;
            assert!((w[m] - simpson).abs() < 1e-12);
            assert_eq!(w[64 - m], -w[m]);
        }
        assert!(w.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn source_matches_direct_sum() {
        let c = cfg(50, 5.0, 1.0);
        let u: Vec<f64> = c.centers().iter().map(|x| (-x * x).exp() * (1.0 + x)).collect();
        let w = source_weights(&c).unwrap();
        let fast = SourceOperator::new(&c).unwrap().apply(&u);
        for i in 0..50 {
            let direct: f64 = (0..50).map(|j| w[(i + 50 - j) % 50] * u[j]).sum();
            assert!((fast[i] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn shock_speed_is_rankine_hugoniot() {
        for flux in [Flux::Rusanov, Flux::Godunov] {
            let mut c = cfg(2000, 10.0, 4.0);
            c.source = false;
            c.flux = flux;
            let u0 = FvState::from_fn(&c, |x| if x < 0.0 { 1.0 } else { 0.0 });
            let out = run(&u0, &c, &[]).unwrap();
            // mass over [-5, 5] locates the shock: 5 + x_s
            let mass: f64 = c.centers().iter().zip(&out.state.u).filter(|(x, _)| x.abs() < 5.0).map(|(_, v)| v * c.dx()).sum();
            let xs = mass - 5.0;
            assert!((xs - 2.0).abs() < 0.02, "{flux:?} {xs}");
        }
    }

    #[test]
    fn rarefaction_fan_has_no_expansion_shock() {
        let t = 3.0;
        let solve = |cells: usize| {
            let mut c = cfg(cells, 10.0, t);
            c.source = false;
            c.flux = Flux::Godunov;
            let u0 = FvState::from_fn(&c, |x| if x.abs() > 8.0 { 0.0 } else if x < 0.0 { -1.0 } else { 1.0 });
            (c, run(&u0, &c, &[]).unwrap().state.u)
        };
        let err = |cells: usize| {
            let (c, u) = solve(cells);
            c.centers()
                .iter()
                .zip(&u)
                .filter(|(x, _)| x.abs() < 4.0)
                .map(|(&x, &v)| (v - (x / t).clamp(-1.0, 1.0)).abs() * c.dx())
                .sum::<f64>()
        };
        // corner smearing of a first-order scheme decays like sqrt(dx)
        let (coarse, fine) = (err(1000), err(4000));
        assert!(fine < 0.03 && coarse / fine > 1.6, "{coarse} {fine}");
        // fan interior has slope 1/t, no jumps
        let (c, u) = solve(4000);
        let jumps = u.windows(2).zip(c.centers()).filter(|(_, x)| x.abs() < 2.5).map(|(w, _)| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(jumps < 5.0 * c.dx() / t);
    }

    #[test]
    fn mass_conserved_with_source() {
        let c = cfg(512, 20.0, 3.0);
        let u0 = FvState::from_fn(&c, |x| 1.5 * (-x * x).exp() * (1.0 - x));
        let out = run(&u0, &c, &[1.0, 2.0]).unwrap();
        let m0 = out.samples[0].mass;
        assert!(out.samples.iter().all(|s| (s.mass - m0).abs() < 1e-13));
    }

    #[test]
    fn cfl_violation_suggests_dt() {
        let c = cfg(100, 5.0, 1.0);
        let u0 = FvState::from_fn(&c, |x| 2.0 * (-x * x).exp());
        let expected = stable_dt(&u0, &c);
        match fv_step(&u0, &c, None, 10.0 * expected).unwrap_err() {
            Error::Cfl { suggested_dt } => assert!((suggested_dt - expected).abs() < 1e-15),
            e => panic!("{e:?}"),
        }
        let mut bad = c;
        bad.cfl = 0.6;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_nonintegrable_kernel() {
        let c = FvConfig::new(KernelSpec::with_order(1.0).unwrap(), 64, 5.0, 1.0);
        assert!(matches!(c.validate(), Err(Error::Precondition(_))));
    }

    #[test]
    fn oleinik_arithmetic() {
        let e = std::f64::consts::E;
        assert!((oleinik_bound(1.0, 0.1) - (5.0 + 0.4 * e)).abs() < 1e-14);
        assert!((oleinik_bound(1.0, 0.1) - 6.087_312_7).abs() < 1e-6);
        assert!(oleinik_bound(1e-9, 1.0) > 1e8);
    }

    #[test]
    fn first_order_convergence() {
        let l = 10.0;
        let f = |x: f64| 0.3 * (-x * x).exp();
        let reference = {
            let c = cfg(8192, l, 0.5);
            run(&FvState::from_fn(&c, f), &c, &[]).unwrap().state.u
        };
        let err = |cells: usize| {
            let c = cfg(cells, l, 0.5);
            let u = run(&FvState::from_fn(&c, f), &c, &[]).unwrap().state.u;
            let r = 8192 / cells;
            u.iter()
                .enumerate()
                .map(|(i, v)| {
                    let avg: f64 = reference[i * r..(i + 1) * r].iter().sum::<f64>() / r as f64;
                    (v - avg).abs() * c.dx()
                })
                .sum::<f64>()
        };
        let ratio = err(256) / err(512);
        assert!((1.6..2.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn oleinik_and_l1_after_shock() {
        let c = cfg(1024, 20.0, 3.0);
        let u0 = FvState::from_fn(&c, |x| -2.0 * x * (-x * x).exp());
        let out = run(&u0, &c, &[0.5, 1.0, 2.0]).unwrap();
        let checks = oleinik_check(&out.samples, u0.l1());
        assert!(checks.iter().all(|p| p.pass && p.oneside_lip.is_finite()));
        assert!(out.samples.last().unwrap().tv < out.samples[0].tv);
        let v0 = FvState::from_fn(&c, |x| -2.0 * x * (-x * x).exp() + 0.01 * (-(x - 1.0) * (x - 1.0)).exp());
        let rep = l1_stability(&u0, &v0, &c, &[0.5, 1.0, 2.0, 3.0]).unwrap();
        assert!(rep.pass, "{rep:?}");
        let same = l1_stability(&u0, &u0, &c, &[1.0]).unwrap();
        assert_eq!(same.samples[0].1, 0.0);
    }
}
