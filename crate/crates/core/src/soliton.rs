//! Solitary waves `u(x - nu t)` by Newton-Krylov iteration.
//!
//! Substituting the ansatz and integrating once (zero constant, decay at
//! infinity) gives
//!
//! ```text
//! (nu + K_s) u = u^{p+1} / (p+1).
//! ```
//!
//! The linear symbol `nu + m_s(xi)` takes values in `(nu, nu + 1]`, so it is
//! sign-definite for `nu > 0` or `nu < -1`. Decaying solutions bifurcate from
//! the long-wave speed `nu = -1` into `nu < -1`; for odd `p` they are
//! depressions, and for even `p` none exist there (pair the equation with
//! `u`: the left side is negative, the right side non-negative).

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::evolve::{self, EvolveConfig};
use crate::kernel::{symbol, KernelSpec};
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::spectral::{Grid, GridField};

#[derive(Debug, Clone)]
pub struct SolitonProblem<T: Scalar> {
    pub spec: KernelSpec<T>,
    pub p: u32,
    pub nu: T,
    pub grid: Grid<T>,
    pub seed_profile: GridField<T>,
    pub iter_tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> SolitonProblem<T> {
    pub fn new(spec: KernelSpec<T>, p: u32, nu: T, seed_profile: GridField<T>) -> Self {
        Self {
            spec,
            p,
            nu,
            grid: seed_profile.grid().clone(),
            seed_profile,
            iter_tol: lit(1e-10),
            max_iter: 50,
        }
    }

    /// Rejects parameters without a decaying branch and degenerate symbols.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Domain("p must be >= 1".into()));
        }
        if self.p.is_multiple_of(2) {
            return Err(Error::Unsupported(format!(
                "p = {} is even: no sign-definite decaying solitary wave",
                self.p
            )));
        }
        if self.nu > T::zero() {
            return Err(Error::Unsupported(format!(
                "nu = {} > 0: solitary waves bifurcate from nu = -1 into nu < -1",
                self.nu
            )));
        }
        if self.seed_profile.grid() != &self.grid {
            return Err(Error::Grid("seed lives on a different grid".into()));
        }
        let values: Vec<T> = self
            .grid
            .wavenumbers()
            .into_iter()
            .map(|k| self.nu + symbol(&self.spec, k))
            .collect();
        let min_abs = values.iter().fold(T::infinity(), |a, v| a.min(v.abs()));
        let changes_sign = values.iter().any(|v| *v >= T::zero());
        if changes_sign || min_abs < lit(1e-12) {
            return Err(Error::SymbolDegenerate { min_abs: to_f64(min_abs) });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolitonProfile<T: Scalar> {
    pub u: GridField<T>,
    pub nu: T,
    pub residual: T,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl<T: Scalar> SolitonProfile<T> {
    pub fn amplitude(&self) -> T {
        self.u.sup_abs()
    }

    pub fn l2(&self) -> T {
        self.u.inner(&self.u).sqrt()
    }

    pub fn sweep_row(&self) -> Vec<f64> {
        vec![
            to_f64(self.nu),
            to_f64(self.amplitude()),
            to_f64(self.l2()),
            to_f64(self.residual),
            self.iterations as f64,
        ]
    }
}

pub const SWEEP_HEADER: [&str; 5] = ["nu", "amplitude", "l2", "residual", "iters"];

fn power<T: Scalar>(u: T, p: u32) -> T {
    u.powi(p as i32)
}

/// Sup norm of `(nu + K_s)u - u^{p+1}/(p+1)` on the grid.
pub fn traveling_residual<T: Scalar>(u: &GridField<T>, nu: T, spec: &KernelSpec<T>, p: u32) -> T {
    let ku = u.apply_multiplier(spec);
    let q = from_usize::<T>(p as usize + 1);
    u.values()
        .iter()
        .zip(ku.values())
        .map(|(&v, &k)| (nu * v + k - power(v, p + 1) / q).abs())
        .fold(T::zero(), T::max)
}

/// Long-wave seed for odd `p` at speed `nu = -(1 + epsilon)`:
/// `u = -A sech^{2/p}(b x)` with `A^p = (p+1)(p+2) eps / 2` and
/// `b = (p/2) sqrt(2 eps / s)`, the solitary wave of
/// `-eps u + (s/2) u'' = u^{p+1}/(p+1)`.
pub fn long_wave_seed<T: Scalar>(s: T, p: u32, epsilon: T, grid: &Grid<T>) -> GridField<T> {
    let pf = from_usize::<T>(p as usize);
    let amp = ((pf + T::one()) * (pf + lit(2.0)) * epsilon / lit(2.0)).powf(pf.recip());
    let b = pf / lit(2.0) * (lit::<T>(2.0) * epsilon / s).sqrt();
    GridField::from_fn(grid, |x| -amp * (b * x).cosh().powf(-lit::<T>(2.0) / pf))
}

/// KdV seed `-3 eps sech^2(sqrt(eps / (2s)) x)` for `p = 1`, `nu = -(1 + eps)`.
pub fn kdv_seed<T: Scalar>(s: T, epsilon: T, grid: &Grid<T>) -> GridField<T> {
    long_wave_seed(s, 1, epsilon, grid)
}

fn symmetrize<T: Scalar>(values: &mut [T]) {
    let n = values.len();
    for j in 1..n / 2 {
        let m = (values[j] + values[n - j]) / lit(2.0);
        values[j] = m;
        values[n - j] = m;
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Restarted GMRES for `A x = b` from `x = 0`.
fn gmres<T: Scalar>(apply: impl Fn(&[T]) -> Vec<T>, b: &[T], rtol: T, restart: usize, max_restarts: usize) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let b_norm = norm(b);
    if b_norm == T::zero() {
        return x;
    }
    for _ in 0..max_restarts {
        let ax = apply(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta <= rtol * b_norm {
            break;
        }
        let mut basis = vec![r.iter().map(|&v| v / beta).collect::<Vec<T>>()];
        let mut h: Vec<Vec<T>> = Vec::new();
        let (mut cs, mut sn): (Vec<T>, Vec<T>) = (Vec::new(), Vec::new());
        let mut g = vec![beta];
        for k in 0..restart {
            let mut w = apply(&basis[k]);
            let mut col = Vec::with_capacity(k + 2);
            for v in &basis {
                let hij = dot(&w, v);
                for (wi, &vi) in w.iter_mut().zip(v) {
                    *wi = *wi - hij * vi;
                }
                col.push(hij);
            }
            let wn = norm(&w);
            col.push(wn);
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let d = col[k].hypot(col[k + 1]);
            let (c, s) = (col[k] / d, col[k + 1] / d);
            cs.push(c);
            sn.push(s);
            col[k] = d;
            col[k + 1] = T::zero();
            g.push(-s * g[k]);
            g[k] = c * g[k];
            h.push(col);
            let done = g[k + 1].abs() <= rtol * b_norm || wn == T::zero();
            if !done {
                basis.push(w.iter().map(|&v| v / wn).collect());
            }
            if done || k + 1 == restart {
                let m = k + 1;
                let mut y = vec![T::zero(); m];
                for i in (0..m).rev() {
                    let mut acc = g[i];
                    for j in i + 1..m {
                        acc = acc - h[j][i] * y[j];
                    }
                    y[i] = acc / h[i][i];
                }
                for (j, yj) in y.iter().enumerate() {
                    for (xi, &vi) in x.iter_mut().zip(&basis[j]) {
                        *xi = *xi + *yj * vi;
                    }
                }
                break;
            }
        }
    }
    x
}

fn residual_field<T: Scalar>(u: &[T], ku: &[T], nu: T, p: u32) -> Vec<T> {
    let q = from_usize::<T>(p as usize + 1);
    u.iter().zip(ku).map(|(&v, &k)| nu * v + k - power(v, p + 1) / q).collect()
}

/// Solves `(nu + K_s)u = u^{p+1}/(p+1)` from `problem.seed_profile`.
///
/// Newton's method on even profiles; each linear system
/// `(nu + K_s - u^p) d = -R` is solved by GMRES preconditioned with the
/// inverse of the linear symbol. Steps are halved until the residual
/// decreases (at most six times). Restricting to even functions removes the
/// translation mode from the kernel of the linearization.
pub fn solve_soliton<T: Scalar>(problem: &SolitonProblem<T>) -> Result<SolitonProfile<T>> {
    problem.validate()?;
    let grid = &problem.grid;
    let p = problem.p;
    let nu = problem.nu;
    let spec = problem.spec;
    let kernel = |v: &[T]| -> Vec<T> {
        let hat = grid.forward(v);
        let out: Vec<Complex<T>> = hat
            .iter()
            .zip(grid.wavenumbers())
            .map(|(&c, k)| c * symbol(&spec, k))
            .collect();
        grid.inverse(&out)
    };
    let precondition = |v: &[T]| -> Vec<T> {
        let hat = grid.forward(v);
        let out: Vec<Complex<T>> = hat
            .iter()
            .zip(grid.wavenumbers())
            .map(|(&c, k)| c / (nu + symbol(&spec, k)))
            .collect();
        grid.inverse(&out)
    };
    let sup = |v: &[T]| v.iter().fold(T::zero(), |a, x| a.max(x.abs()));

    let mut u = problem.seed_profile.values().to_vec();
    symmetrize(&mut u);
    let mut r = residual_field(&u, &kernel(&u), nu, p);
    let mut history = vec![to_f64(sup(&r))];
    let mut rising = 0;
    for iter in 0..=problem.max_iter {
        let res = sup(&r);
        if !res.is_finite() {
            return Err(Error::Divergence { residual: f64::INFINITY, history });
        }
        if res <= problem.iter_tol {
            let field = GridField::from_values(grid, u)?;
            return Ok(SolitonProfile { u: field, nu, residual: res, iterations: iter, history });
        }
        if rising >= 3 {
            return Err(Error::Divergence { residual: to_f64(res), history });
        }
        if iter == problem.max_iter {
            break;
        }
        let up: Vec<T> = u.iter().map(|&v| power(v, p)).collect();
        let jacobian = |d: &[T]| -> Vec<T> {
            let kd = kernel(d);
            let jd: Vec<T> = d.iter().zip(&kd).zip(&up).map(|((&di, &ki), &ui)| nu * di + ki - ui * di).collect();
            precondition(&jd)
        };
        let rhs: Vec<T> = precondition(&r).into_iter().map(|v| -v).collect();
        let mut step = gmres(jacobian, &rhs, lit(1e-13), 80, 20);
        symmetrize(&mut step);
        let mut lambda = T::one();
        let mut trial_u;
        let mut trial_r;
        let mut halvings = 0;
        loop {
            trial_u = u.iter().zip(&step).map(|(&a, &d)| a + lambda * d).collect::<Vec<T>>();
            trial_r = residual_field(&trial_u, &kernel(&trial_u), nu, p);
            if sup(&trial_r) < res || halvings == 6 {
                break;
            }
            lambda = lambda / lit(2.0);
            halvings += 1;
        }
        let new_res = sup(&trial_r);
        rising = if new_res > res { rising + 1 } else { 0 };
        history.push(to_f64(new_res));
        u = trial_u;
        r = trial_r;
    }
    Err(Error::NonConvergence {
        iterations: problem.max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Solves along `nus` in order, seeding each speed with the previous profile
/// and the first with the long-wave seed.
pub fn continuation<T: Scalar>(
    spec: KernelSpec<T>,
    p: u32,
    grid: &Grid<T>,
    nus: &[T],
    iter_tol: T,
    max_iter: usize,
) -> Result<Vec<SolitonProfile<T>>> {
    let mut out: Vec<SolitonProfile<T>> = Vec::with_capacity(nus.len());
    for &nu in nus {
        let seed = match out.last() {
            Some(prev) => prev.u.clone(),
            None => long_wave_seed(spec.s(), p, -T::one() - nu, grid),
        };
        let mut problem = SolitonProblem::new(spec, p, nu, seed);
        problem.iter_tol = iter_tol;
        problem.max_iter = max_iter;
        out.push(solve_soliton(&problem)?);
    }
    Ok(out)
}

/// Evenly spaced speeds from `nu1` to `nu2` inclusive.
pub fn speed_grid(nu1: f64, nu2: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![nu1];
    }
    (0..steps)
        .map(|i| nu1 + (nu2 - nu1) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Whether the amplitude grows as `nu` moves away from `-1`.
pub fn amplitude_monotone<T: Scalar>(profiles: &[SolitonProfile<T>]) -> bool {
    profiles.windows(2).all(|w| {
        let farther = (w[1].nu + T::one()).abs() > (w[0].nu + T::one()).abs();
        farther == (w[1].amplitude() > w[0].amplitude())
    })
}

/// `max_j |u(x_j) - u(-x_j)|` relative to the amplitude.
pub fn evenness_defect<T: Scalar>(u: &GridField<T>) -> T {
    let v = u.values();
    let n = v.len();
    let amp = u.sup_abs().max(T::min_positive_value());
    (1..n / 2).map(|j| (v[j] - v[n - j]).abs()).fold(T::zero(), T::max) / amp
}

/// `|u|` decreases away from the peak until it reaches `floor * amplitude`.
pub fn tails_monotone<T: Scalar>(u: &GridField<T>, floor: T) -> bool {
    let v = u.values();
    let peak = v.iter().enumerate().fold(0, |b, (j, x)| if x.abs() > v[b].abs() { j } else { b });
    let level = floor * v[peak].abs();
    let right = v[peak..].windows(2).take_while(|w| w[0].abs() > level).all(|w| w[1].abs() <= w[0].abs());
    let left = v[..=peak].windows(2).rev().take_while(|w| w[1].abs() > level).all(|w| w[0].abs() <= w[1].abs());
    right && left
}

/// `min_c sup |a(. - c) - b|` over shifts `c`, returning `(c, distance)`.
///
/// The coarse shift aligns the minima on the grid; a golden-section search
/// over one cell on either side refines it with spectral translation.
pub fn best_shift<T: Scalar>(a: &GridField<T>, b: &GridField<T>) -> (T, T) {
    let grid = a.grid();
    let coarse = grid.x(b.argmin()) - grid.x(a.argmin());
    let dist = |c: T| {
        a.translate(c)
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (*x - *y).abs())
            .fold(T::zero(), T::max)
    };
    let phi = lit::<T>(0.5 * (5f64.sqrt() - 1.0));
    let (mut lo, mut hi) = (coarse - grid.dx(), coarse + grid.dx());
    let mut c1 = hi - phi * (hi - lo);
    let mut c2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (dist(c1), dist(c2));
    for _ in 0..60 {
        if f1 < f2 {
            hi = c2;
            c2 = c1;
            f2 = f1;
            c1 = hi - phi * (hi - lo);
            f1 = dist(c1);
        } else {
            lo = c1;
            c1 = c2;
            f1 = f2;
            c2 = lo + phi * (hi - lo);
            f2 = dist(c2);
        }
    }
    let c = (lo + hi) / lit(2.0);
    (c, dist(c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Repropagation<T> {
    pub period: T,
    pub shift: T,
    pub distance: T,
}

/// Evolves the profile with the full equation for one box period `2L/|nu|`
/// and compares with the initial profile up to translation.
pub fn repropagate<T: Scalar>(profile: &SolitonProfile<T>, spec: KernelSpec<T>, p: u32, dt: T) -> Result<Repropagation<T>> {
    let grid = profile.u.grid();
    let period = lit::<T>(2.0) * grid.half_length() / profile.nu.abs();
    let mut cfg = EvolveConfig::new(p, spec);
    cfg.dt0 = dt;
    cfg.t_end = period;
    cfg.energy_diagnostics = false;
    cfg.slope_stop = Some(lit(1e6));
    cfg.sample_every = Some(usize::MAX);
    let out = evolve::run(&profile.u, &cfg)?;
    let (shift, distance) = best_shift(&profile.u, &out.state.u);
    Ok(Repropagation { period, shift, distance })
}
