//! Particle paths and the Lagrangian slope system, integrated in lockstep with
//! the Eulerian solve, plus breaking-time detection.
//!
//! Along `dX/dt = u^p(t, X)` the values `v1 = u(t, X)` and `v2 = u_x(t, X)`
//! obey
//!
//! ```text
//! dv1/dt = K1,    dv2/dt = -p v1^{p-1} v2^2 + K2,
//! K1 = (K_s u_x)(X),    K2 = (K_s u_xx)(X).
//! ```

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::evolve::{
    choose_dt, resolve_slope_stop, EvolveConfig, RhsOperator, RunStatus,
};
use crate::kernel::KernelSpec;
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::spectral::{Channel, GridField, SpectralSampler};
use crate::stats::linear_fit;

/// Seed placement around the steepest point and across the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedLayout<T> {
    /// Seeds on each side of the argmin of `u0'` (total `2 * half_neighbours`).
    pub half_neighbours: usize,
    pub uniform: usize,
    /// Particles farther than `L - trust_margin` from the origin are flagged.
    /// Clamped to `L / 4` on small boxes.
    pub trust_margin: T,
}

impl<T: Scalar> Default for SeedLayout<T> {
    fn default() -> Self {
        Self {
            half_neighbours: 16,
            uniform: 31,
            trust_margin: lit(5.0),
        }
    }
}

impl<T: Scalar> SeedLayout<T> {
    fn trust_radius(&self, half_length: T) -> T {
        half_length - self.trust_margin.min(half_length / lit(4.0))
    }
}

/// Grid-point seeds: the argmin of `u0'`, neighbours spanning four slope
/// widths on each side, and uniformly spread points in the trust region.
///
/// The slope width is `sqrt(|m0| / u0'''(x*))` at the argmin `x*`.
pub fn standard_seeds<T: Scalar>(u0: &GridField<T>, layout: &SeedLayout<T>) -> Result<Vec<T>> {
    let grid = u0.grid();
    let n = grid.n();
    let dx = grid.dx();
    let slope = u0.derivative(1)?;
    let j0 = slope.argmin();
    let m0 = slope.values()[j0];
    let third = u0.derivative(3)?.values()[j0];
    let width = if third > T::zero() && m0 < T::zero() {
        (-m0 / third).sqrt()
    } else {
        T::one()
    };
    let span = lit::<T>(4.0) * width;
    let per = span / from_usize::<T>(layout.half_neighbours.max(1));
    let stride = to_f64(per / dx).round().max(1.0) as usize;
    let mut idx = vec![j0];
    for i in 1..=layout.half_neighbours {
        idx.push((j0 + n - (i * stride) % n) % n);
        idx.push((j0 + i * stride) % n);
    }
    let radius = layout.trust_radius(grid.half_length());
    if layout.uniform > 0 {
        for i in 0..layout.uniform {
            let frac = if layout.uniform == 1 {
                lit(0.5)
            } else {
                from_usize::<T>(i) / from_usize::<T>(layout.uniform - 1)
            };
            let x = -radius + lit::<T>(2.0) * radius * frac;
            let j = to_f64((x + grid.half_length()) / dx).round() as usize;
            idx.push(j.min(n - 1));
        }
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx.into_iter().map(|j| grid.x(j)).collect())
}

/// Particle positions and Lagrangian values for a set of seeds.
#[derive(Debug, Clone)]
pub struct CharacteristicBundle<T> {
    t: T,
    seeds: Vec<T>,
    x: Vec<T>,
    v1: Vec<T>,
    v2: Vec<T>,
    m0: T,
    trust_radius: T,
    exited: Vec<bool>,
}

impl<T: Scalar> CharacteristicBundle<T> {
    /// Starts particles at `seeds` (sorted, distinct) on initial data `u0`.
    /// The seeds must include the grid argmin of `u0'`.
    pub fn new(u0: &GridField<T>, seeds: Vec<T>, layout: &SeedLayout<T>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Precondition("no seeds".into()));
        }
        if seeds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("seeds must be sorted and distinct".into()));
        }
        let sampler = SpectralSampler::new(u0, &[Channel::derivative(0), Channel::derivative(1)]);
        let mut v1 = Vec::with_capacity(seeds.len());
        let mut v2 = Vec::with_capacity(seeds.len());
        let mut buf = [T::zero(); 2];
        for &x in &seeds {
            sampler.sample(x, &mut buf);
            v1.push(buf[0]);
            v2.push(buf[1]);
        }
        let m0 = v2.iter().fold(T::infinity(), |a, &v| a.min(v));
        let grid_min = u0.derivative(1)?.min();
        let tol = lit::<T>(1e-9) * (T::one() + grid_min.abs());
        if (m0 - grid_min).abs() > tol {
            return Err(Error::Precondition(format!(
                "seeds miss the argmin of u0' (seed min {m0}, grid min {grid_min})"
            )));
        }
        let trust_radius = layout.trust_radius(u0.grid().half_length());
        let exited = seeds.iter().map(|x| x.abs() > trust_radius).collect();
        Ok(Self {
            t: T::zero(),
            x: seeds.clone(),
            seeds,
            v1,
            v2,
            m0,
            trust_radius,
            exited,
        })
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn seeds(&self) -> &[T] {
        &self.seeds
    }

    pub fn positions(&self) -> &[T] {
        &self.x
    }

    pub fn v1(&self) -> &[T] {
        &self.v1
    }

    pub fn v2(&self) -> &[T] {
        &self.v2
    }

    pub fn m0(&self) -> T {
        self.m0
    }

    /// Index of the seed carrying the smallest slope.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.v2.iter().enumerate() {
            if v < self.v2[best] {
                best = i;
            }
        }
        best
    }

    /// `m(t) = min v2`.
    pub fn m(&self) -> T {
        self.v2[self.argmin()]
    }

    /// `q(t) = m(0) / m(t)`.
    pub fn q(&self) -> T {
        self.m0 / self.m()
    }

    /// Number of particles outside the trust region.
    pub fn exited(&self) -> usize {
        self.exited.iter().filter(|&&e| e).count()
    }

    /// Whether positions are nondecreasing in the seed label.
    pub fn ordered(&self) -> bool {
        self.x.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Precomputed spectral weights for the dispersive forcing.
struct Forcing<T: Scalar> {
    p: u32,
    weights: Option<Vec<Vec<Complex<T>>>>,
}

impl<T: Scalar> Forcing<T> {
    fn new(u0: &GridField<T>, cfg: &EvolveConfig<T>) -> Self {
        let weights = cfg.dispersion.then(|| {
            vec![
                Channel::smoothed(1, cfg.spec).weights(u0.grid()),
                Channel::smoothed(2, cfg.spec).weights(u0.grid()),
            ]
        });
        Self { p: cfg.p, weights }
    }

    /// `(dX, dv1, dv2)` at the given stage.
    fn rates(&self, field: &GridField<T>, x: &[T], v1: &[T], v2: &[T]) -> [Vec<T>; 3] {
        let n = x.len();
        let mut k1 = vec![T::zero(); n];
        let mut k2 = vec![T::zero(); n];
        if let Some(w) = &self.weights {
            let sampler = SpectralSampler::from_weights(field, w);
            let mut buf = [T::zero(); 2];
            for i in 0..n {
                sampler.sample(x[i], &mut buf);
                k1[i] = buf[0];
                k2[i] = buf[1];
            }
        }
        let p = self.p as i32;
        let pf = lit::<T>(self.p as f64);
        let dx = v1.iter().map(|&v| v.powi(p)).collect();
        let dv2 = (0..n)
            .map(|i| -pf * v1[i].powi(p - 1) * v2[i] * v2[i] + k2[i])
            .collect();
        [dx, k1, dv2]
    }
}

fn combine<T: Scalar>(base: &[T], h: T, k: &[T]) -> Vec<T> {
    base.iter().zip(k).map(|(&b, &k)| b + h * k).collect()
}

/// One RK4 step of the coupled Eulerian/Lagrangian system. Returns the new
/// field and advances the bundle in place.
pub fn advance_bundle<T: Scalar>(
    op: &RhsOperator<T>,
    field: &GridField<T>,
    bundle: &mut CharacteristicBundle<T>,
    dt: T,
    cfg: &EvolveConfig<T>,
) -> Result<GridField<T>> {
    let forcing = Forcing::new(field, cfg);
    advance_with(op, &forcing, field, bundle, dt)
}

fn advance_with<T: Scalar>(
    op: &RhsOperator<T>,
    forcing: &Forcing<T>,
    field: &GridField<T>,
    bundle: &mut CharacteristicBundle<T>,
    dt: T,
) -> Result<GridField<T>> {
    let half = lit::<T>(0.5) * dt;
    let u0 = field.dealias();
    let (x0, a0, b0) = (&bundle.x, &bundle.v1, &bundle.v2);

    let f1 = op.apply(&u0)?;
    let l1 = forcing.rates(&u0, x0, a0, b0);
    let u1 = u0.axpy(half, &f1);
    let (x1, a1, b1) = (combine(x0, half, &l1[0]), combine(a0, half, &l1[1]), combine(b0, half, &l1[2]));

    let f2 = op.apply(&u1)?;
    let l2 = forcing.rates(&u1.dealias(), &x1, &a1, &b1);
    let u2 = u0.axpy(half, &f2);
    let (x2, a2, b2) = (combine(x0, half, &l2[0]), combine(a0, half, &l2[1]), combine(b0, half, &l2[2]));

    let f3 = op.apply(&u2)?;
    let l3 = forcing.rates(&u2.dealias(), &x2, &a2, &b2);
    let u3 = u0.axpy(dt, &f3);
    let (x3, a3, b3) = (combine(x0, dt, &l3[0]), combine(a0, dt, &l3[1]), combine(b0, dt, &l3[2]));

    let f4 = op.apply(&u3)?;
    let l4 = forcing.rates(&u3.dealias(), &x3, &a3, &b3);

    let sixth = dt / lit(6.0);
    let two = lit::<T>(2.0);
    let mix = |a: &T, b: &T, c: &T, d: &T| sixth * (*a + two * (*b + *c) + *d);
    let values = (0..u0.values().len())
        .map(|j| u0.values()[j] + mix(&f1.values()[j], &f2.values()[j], &f3.values()[j], &f4.values()[j]))
        .collect();
    let next = GridField::from_values(field.grid(), values)?;
    if !next.is_finite() {
        return Err(Error::NumericalBlowup { t: to_f64(bundle.t + dt) });
    }
    for (c, target) in [&mut bundle.x, &mut bundle.v1, &mut bundle.v2].into_iter().enumerate() {
        for i in 0..target.len() {
            target[i] = target[i] + mix(&l1[c][i], &l2[c][i], &l3[c][i], &l4[c][i]);
        }
    }
    bundle.t = bundle.t + dt;
    for (e, &x) in bundle.exited.iter_mut().zip(&bundle.x) {
        *e = *e || x.abs() > bundle.trust_radius;
    }
    Ok(next)
}

fn sample_smoothed<T: Scalar>(bundle: &CharacteristicBundle<T>, field: &GridField<T>, spec: &KernelSpec<T>, order: u32) -> Vec<T> {
    let sampler = SpectralSampler::new(field, &[Channel::smoothed(order, *spec)]);
    let mut buf = [T::zero()];
    bundle
        .x
        .iter()
        .map(|&x| {
            sampler.sample(x, &mut buf);
            buf[0]
        })
        .collect()
}

/// `K1 = (K_s u_x)(X)` at every particle.
pub fn k1<T: Scalar>(bundle: &CharacteristicBundle<T>, field: &GridField<T>, spec: &KernelSpec<T>) -> Vec<T> {
    sample_smoothed(bundle, field, spec, 1)
}

/// `K2 = (K_s u_xx)(X)` at every particle.
pub fn k2<T: Scalar>(bundle: &CharacteristicBundle<T>, field: &GridField<T>, spec: &KernelSpec<T>) -> Vec<T> {
    sample_smoothed(bundle, field, spec, 2)
}

/// Threshold factor of `Sigma_delta` for `p = 1`: `1 - delta`.
pub fn sigma_factor_quadratic<T: Scalar>(delta: T) -> T {
    T::one() - delta
}

/// Threshold factor of `Sigma_delta` for `p > 1`: `A^{p-1} B^{1-p} - delta`.
pub fn sigma_factor<T: Scalar>(p: u32, delta: T, a: T, b: T) -> T {
    let e = p as i32 - 1;
    a.powi(e) * b.powi(-e) - delta
}

/// Particles whose slope is at most `factor * m(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet<T> {
    pub t: T,
    pub delta: T,
    pub factor: T,
    /// Seed indices, ascending.
    pub members: Vec<usize>,
}

pub fn sigma_set<T: Scalar>(bundle: &CharacteristicBundle<T>, delta: T, factor: T) -> SigmaSet<T> {
    let threshold = factor * bundle.m();
    SigmaSet {
        t: bundle.t,
        delta,
        factor,
        members: (0..bundle.v2.len())
            .filter(|&i| bundle.v2[i] <= threshold)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaViolation {
    pub t_earlier: f64,
    pub t_later: f64,
    pub seed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub pass: bool,
    pub comparisons: usize,
    pub first_violation: Option<SigmaViolation>,
}

/// Checks `Sigma(t2) ⊆ Sigma(t1)` for consecutive samples. A new member is
/// tolerated when an earlier member's seed lies within `slack` of it.
pub fn sigma_monotonicity<T: Scalar>(history: &[SigmaSet<T>], seeds: &[T], slack: T) -> MonotonicityReport {
    let tolerance = slack * (T::one() + lit::<T>(1e-9));
    for (c, pair) in history.windows(2).enumerate() {
        let (early, late) = (&pair[0], &pair[1]);
        for &i in &late.members {
            if early.members.binary_search(&i).is_ok() {
                continue;
            }
            let near = early
                .members
                .iter()
                .any(|&j| (seeds[j] - seeds[i]).abs() <= tolerance);
            if !near {
                return MonotonicityReport {
                    pass: false,
                    comparisons: c + 1,
                    first_violation: Some(SigmaViolation {
                        t_earlier: to_f64(early.t),
                        t_later: to_f64(late.t),
                        seed: to_f64(seeds[i]),
                    }),
                };
            }
        }
    }
    MonotonicityReport {
        pass: true,
        comparisons: history.len().saturating_sub(1),
        first_violation: None,
    }
}

/// Bounds on `q(t)` for `p = 1` given `m0 = inf u0' < 0`:
/// `(1-d) + m0 (1-d^2) t <= q <= 1/(1-d) + m0 (1-d) t`.
pub fn q_bracket(m0: f64, delta: f64, t: f64) -> (f64, f64) {
    (
        (1.0 - delta) + m0 * (1.0 - delta * delta) * t,
        1.0 / (1.0 - delta) + m0 * (1.0 - delta) * t,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOptions<T> {
    pub delta: T,
    /// `Sigma_delta` threshold factor; see [`sigma_factor_quadratic`] and
    /// [`sigma_factor`].
    pub sigma_factor: T,
    pub layout: SeedLayout<T>,
    /// Steps between samples.
    pub sample_every: usize,
}

impl<T: Scalar> TrackingOptions<T> {
    pub fn quadratic(delta: T) -> Self {
        Self {
            delta,
            sigma_factor: sigma_factor_quadratic(delta),
            layout: SeedLayout::default(),
            sample_every: 1,
        }
    }
}

/// One row of the breaking log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakingSample {
    pub t: f64,
    /// Lagrangian `m(t)`.
    pub m: f64,
    pub q: f64,
    pub min_v2_seed: f64,
    pub k1_at_min: f64,
    pub k2_at_min: f64,
    pub sigma_size: usize,
    /// Eulerian `inf u_x` on the grid.
    pub inf_ux: f64,
    pub sup_u: f64,
    pub sup_ux: f64,
    pub h3: f64,
    /// `max |v1 - u(X)|` and `max |v2 - u_x(X)|` over particles.
    pub v1_mismatch: f64,
    pub v2_mismatch: f64,
    /// `max |K2| / (delta^2 m^2)` over particles.
    pub k2_ratio: f64,
    pub ordered: bool,
    pub exited: usize,
}

impl BreakingSample {
    pub const CSV_HEADER: [&'static str; 7] = [
        "t", "m", "q", "min_v2_seed", "K1_at_min", "K2_at_min", "sigma_size",
    ];

    pub fn csv_row(&self) -> Vec<f64> {
        vec![
            self.t,
            self.m,
            self.q,
            self.min_v2_seed,
            self.k1_at_min,
            self.k2_at_min,
            self.sigma_size as f64,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct BreakingRun<T: Scalar> {
    pub samples: Vec<BreakingSample>,
    pub sigma_history: Vec<SigmaSet<T>>,
    pub bundle: CharacteristicBundle<T>,
    pub field: GridField<T>,
    pub status: RunStatus,
    pub slope_stop: T,
    pub m0: T,
    pub steps: usize,
}

fn take_sample<T: Scalar>(
    field: &GridField<T>,
    bundle: &CharacteristicBundle<T>,
    cfg: &EvolveConfig<T>,
    delta: T,
) -> Result<BreakingSample> {
    let mut channels = vec![Channel::derivative(0), Channel::derivative(1)];
    if cfg.dispersion {
        channels.push(Channel::smoothed(1, cfg.spec));
        channels.push(Channel::smoothed(2, cfg.spec));
    }
    let sampler = SpectralSampler::new(field, &channels);
    let mut buf = vec![T::zero(); channels.len()];
    let (mut e1, mut e2, mut k2_max) = (0f64, 0f64, 0f64);
    let imin = bundle.argmin();
    let (mut k1_min, mut k2_min) = (0.0, 0.0);
    for i in 0..bundle.x.len() {
        sampler.sample(bundle.x[i], &mut buf);
        e1 = e1.max(to_f64((bundle.v1[i] - buf[0]).abs()));
        e2 = e2.max(to_f64((bundle.v2[i] - buf[1]).abs()));
        if cfg.dispersion {
            k2_max = k2_max.max(to_f64(buf[3].abs()));
            if i == imin {
                k1_min = to_f64(buf[2]);
                k2_min = to_f64(buf[3]);
            }
        }
    }
    let m = to_f64(bundle.m());
    let d = to_f64(delta);
    let slope = field.derivative(1)?;
    Ok(BreakingSample {
        t: to_f64(bundle.t),
        m,
        q: to_f64(bundle.q()),
        min_v2_seed: to_f64(bundle.seeds[imin]),
        k1_at_min: k1_min,
        k2_at_min: k2_min,
        sigma_size: 0,
        inf_ux: to_f64(slope.min()),
        sup_u: to_f64(field.sup_abs()),
        sup_ux: to_f64(slope.sup_abs()),
        h3: to_f64(field.sobolev(3)),
        v1_mismatch: e1,
        v2_mismatch: e2,
        k2_ratio: k2_max / (d * d * m * m),
        ordered: bundle.ordered(),
        exited: bundle.exited(),
    })
}

/// Runs the Eulerian solve and the particle bundle together until `t_end`
/// or until the slope threshold is reached, sampling the Lagrangian
/// diagnostics.
pub fn track_breaking<T: Scalar>(
    u0: &GridField<T>,
    cfg: &EvolveConfig<T>,
    opts: &TrackingOptions<T>,
) -> Result<BreakingRun<T>> {
    cfg.validate()?;
    if !(opts.delta > T::zero() && opts.delta < T::one()) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {}", opts.delta)));
    }
    let u0 = u0.dealias();
    let slope_stop = resolve_slope_stop(&u0, cfg)?;
    let seeds = standard_seeds(&u0, &opts.layout)?;
    let mut bundle = CharacteristicBundle::new(&u0, seeds, &opts.layout)?;
    let op = RhsOperator::new(u0.grid(), cfg);
    let forcing = Forcing::new(&u0, cfg);
    let mut field = u0;
    let mut samples = Vec::new();
    let mut sigma_history = Vec::new();
    let every = opts.sample_every.max(1);
    let mut steps = 0usize;

    let mut record = |field: &GridField<T>, bundle: &CharacteristicBundle<T>| -> Result<()> {
        let sigma = sigma_set(bundle, opts.delta, opts.sigma_factor);
        let mut sample = take_sample(field, bundle, cfg, opts.delta)?;
        sample.sigma_size = sigma.members.len();
        samples.push(sample);
        sigma_history.push(sigma);
        Ok(())
    };
    record(&field, &bundle)?;
    let status = loop {
        if bundle.t >= cfg.t_end {
            break RunStatus::Completed;
        }
        let slope = field.derivative(1)?.sup_abs();
        if !(slope < slope_stop) {
            if !slope.is_finite() {
                return Err(Error::NumericalBlowup { t: to_f64(bundle.t) });
            }
            break RunStatus::BreakingImminent;
        }
        let dt = choose_dt(&field, cfg).min(cfg.t_end - bundle.t);
        field = advance_with(&op, &forcing, &field, &mut bundle, dt)?;
        steps += 1;
        if steps.is_multiple_of(every) {
            record(&field, &bundle)?;
        }
    };
    if !steps.is_multiple_of(every) {
        record(&field, &bundle)?;
    }
    let m0 = bundle.m0;
    Ok(BreakingRun {
        samples,
        sigma_history,
        bundle,
        field,
        status,
        slope_stop,
        m0,
        steps,
    })
}

/// Outcome of fitting `m(t) ~ -c/(T - t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakingReport {
    pub t_detect: f64,
    pub t_fit: f64,
    /// `c` in `m ~ -c/(T - t)`.
    pub rate: f64,
    pub fit_quality: f64,
    pub fit_points: usize,
    pub window_lo: f64,
    pub window_hi: f64,
    pub inside_window: bool,
    pub low_confidence: bool,
    /// The fitted time precedes the last observed smooth time.
    pub suspicious: bool,
    pub sup_u_max: f64,
    pub sup_u_bound: f64,
    pub amplitude_bounded: bool,
}

/// Default lower end of the fit window, as a multiple of `|m(0)|`.
pub const FIT_START_FACTOR: f64 = 10.0;

/// Fits `1/m` against `t` over samples with `|m| >= start_factor |m(0)|` and
/// extrapolates to `1/m = 0`. `series` holds `(t, m, sup|u|)`.
pub fn detect_breaking(
    series: &[(f64, f64, f64)],
    window: (f64, f64),
    start_factor: f64,
    sup_u_bound: f64,
) -> Result<BreakingReport> {
    let (first, last) = match (series.first(), series.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Precondition("empty breaking series".into())),
    };
    let m0 = first.1;
    if !(m0 < 0.0) {
        return Err(Error::Precondition(format!("initial slope minimum must be negative, got {m0}")));
    }
    let threshold = start_factor * m0.abs();
    let mut pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|s| s.1.abs() >= threshold && s.1 < 0.0)
        .map(|s| (s.0, 1.0 / s.1))
        .collect();
    if pts.len() < 3 {
        // not enough growth recorded; use the last half of the run
        pts = series[series.len() / 2..]
            .iter()
            .filter(|s| s.1 < 0.0)
            .map(|s| (s.0, 1.0 / s.1))
            .collect();
    }
    let fit = linear_fit(&pts)
        .ok_or_else(|| Error::Verification("breaking fit is degenerate".into()))?;
    let t_fit = fit.root();
    let sup_u_max = series.iter().map(|s| s.2).fold(0.0, f64::max);
    Ok(BreakingReport {
        t_detect: last.0,
        t_fit,
        rate: 1.0 / fit.slope,
        fit_quality: fit.r_squared,
        fit_points: pts.len(),
        window_lo: window.0,
        window_hi: window.1,
        inside_window: t_fit > window.0 && t_fit < window.1,
        low_confidence: fit.r_squared < 0.99,
        suspicious: t_fit < last.0,
        sup_u_max,
        sup_u_bound,
        amplitude_bounded: sup_u_max <= sup_u_bound,
    })
}

impl BreakingReport {
    /// Flat `key = value` rendering.
    pub fn to_kv(&self) -> String {
        let num = crate::io::fmt_num;
        let rows: [(&str, String); 13] = [
            ("t_detect", num(self.t_detect)),
            ("t_fit", num(self.t_fit)),
            ("rate", num(self.rate)),
            ("fit_quality", num(self.fit_quality)),
            ("fit_points", self.fit_points.to_string()),
            ("window_lo", num(self.window_lo)),
            ("window_hi", num(self.window_hi)),
            ("inside_window", self.inside_window.to_string()),
            ("low_confidence", self.low_confidence.to_string()),
            ("suspicious", self.suspicious.to_string()),
            ("sup_u_max", num(self.sup_u_max)),
            ("sup_u_bound", num(self.sup_u_bound)),
            ("amplitude_bounded", self.amplitude_bounded.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

impl<T: Scalar> BreakingRun<T> {
    /// `(t, m, sup|u|)` from the particle bundle.
    pub fn lagrangian_series(&self) -> Vec<(f64, f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.m, s.sup_u)).collect()
    }

    /// `(t, inf u_x, sup|u|)` from the grid.
    pub fn eulerian_series(&self) -> Vec<(f64, f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.inf_ux, s.sup_u)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use std::f64::consts::PI;

    fn cfg(s: f64) -> EvolveConfig<f64> {
        EvolveConfig::new(1, KernelSpec::with_order(s).unwrap())
    }

    #[test]
    fn seeds_include_argmin_and_are_sorted() {
        let g = Grid::<f64>::new(20.0, 1024).unwrap();
        let u0 = GridField::from_fn(&g, |x| 3.0 * (-x * x).exp());
        let seeds = standard_seeds(&u0, &SeedLayout::default()).unwrap();
        assert!(seeds.len() <= 64 && seeds.len() > 50);
        assert!(seeds.windows(2).all(|w| w[0] < w[1]));
        let j = u0.derivative(1).unwrap().argmin();
        assert!(seeds.contains(&g.x(j)));
        assert!(seeds.iter().all(|x| x.abs() <= 15.0 + g.dx()));
    }

    #[test]
    fn bundle_rejects_missing_argmin() {
        let g = Grid::<f64>::new(10.0, 256).unwrap();
        let u0 = GridField::from_fn(&g, |x| (-x * x).exp());
        assert!(CharacteristicBundle::new(&u0, vec![-3.0, 3.0], &SeedLayout::default()).is_err());
        assert!(CharacteristicBundle::new(&u0, vec![1.0, 0.0], &SeedLayout::default()).is_err());
    }

    #[test]
    fn zero_and_constant_fields() {
        let g = Grid::<f64>::new(10.0, 128).unwrap();
        let c = cfg(2.0);
        let op = RhsOperator::new(&g, &c);
        let zero = GridField::zeros(&g);
        let seeds = vec![-1.0, 0.0, 2.5];
        let mut b = CharacteristicBundle::new(&zero, seeds.clone(), &SeedLayout::default()).unwrap();
        for _ in 0..10 {
            advance_bundle(&op, &zero, &mut b, 0.1, &c).unwrap();
        }
        assert_eq!(b.positions(), &seeds[..]);
        assert!(b.v1().iter().chain(b.v2()).all(|&v| v == 0.0));

        let konst = GridField::from_fn(&g, |_| 0.3);
        let mut b = CharacteristicBundle::new(&konst, seeds.clone(), &SeedLayout::default()).unwrap();
        let mut f = konst.clone();
        for _ in 0..10 {
            f = advance_bundle(&op, &f, &mut b, 0.1, &c).unwrap();
        }
        for (x, x0) in b.positions().iter().zip(&seeds) {
            assert!((x - (x0 + 0.3)).abs() < 1e-12);
        }
        assert!(b.v2().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn burgers_riccati_closed_form() {
        let g = Grid::<f64>::new(PI, 512).unwrap();
        let mut c = cfg(2.0);
        c.dispersion = false;
        c.t_end = 0.6;
        c.dt0 = 2e-3;
        let u0 = GridField::from_fn(&g, |x| x.sin());
        let opts = TrackingOptions::quadratic(0.1);
        let run = track_breaking(&u0, &c, &opts).unwrap();
        let t = run.bundle.t();
        for (x0, v2) in run.bundle.seeds().iter().zip(run.bundle.v2()) {
            let d = x0.cos();
            assert!((v2 - d / (1.0 + t * d)).abs() < 1e-9);
        }
        // 1/m is affine in t with slope -1
        let pts: Vec<(f64, f64)> = run.samples.iter().map(|s| (s.t, 1.0 / s.m)).collect();
        let fit = linear_fit(&pts).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-6, "{}", fit.slope);
        let last = run.samples.last().unwrap();
        assert!(last.v2_mismatch < 1e-6 && last.ordered);
    }

    #[test]
    fn burgers_breaking_time_fit() {
        let g = Grid::<f64>::new(PI, 1024).unwrap();
        let mut c = cfg(2.0);
        c.dispersion = false;
        c.t_end = 2.0;
        c.slope_stop = Some(20.0);
        let u0 = GridField::from_fn(&g, |x| x.sin());
        let run = track_breaking(&u0, &c, &TrackingOptions::quadratic(0.1)).unwrap();
        assert_eq!(run.status, RunStatus::BreakingImminent);
        let rep = detect_breaking(&run.lagrangian_series(), (0.9, 1.1), FIT_START_FACTOR, 2.0).unwrap();
        assert!((rep.t_fit - 1.0).abs() < 0.01, "{rep:?}");
        assert!(rep.fit_quality > 0.999 && !rep.suspicious && rep.amplitude_bounded);
        let rep = detect_breaking(&run.eulerian_series(), (0.9, 1.1), FIT_START_FACTOR, 2.0).unwrap();
        assert!((rep.t_fit - 1.0).abs() < 0.01, "{rep:?}");
        assert!(rep.to_kv().contains("inside_window = true\n"));
    }

    #[test]
    fn smoothed_samples_on_a_mode() {
        let l = 6.0;
        let g = Grid::<f64>::new(l, 64).unwrap();
        let k = 2.0 * PI / l;
        let u = GridField::from_fn(&g, |x| (k * x).sin());
        let spec = KernelSpec::with_order(1.5).unwrap();
        let b = CharacteristicBundle::new(&u, vec![-l / 2.0, 0.3, 1.7], &SeedLayout::default());
        // the argmin of u' = k cos(kx) is at x = -L/2
        let b = b.unwrap();
        let m = (1.0 + k * k).powf(-0.75);
        for (x, v) in b.positions().iter().zip(k1(&b, &u, &spec)) {
            assert!((v - m * k * (k * x).cos()).abs() < 1e-13);
        }
        for (x, v) in b.positions().iter().zip(k2(&b, &u, &spec)) {
            assert!((v + m * k * k * (k * x).sin()).abs() < 1e-13);
        }
        assert!(k2(&b, &GridField::zeros(&g), &spec).iter().all(|&v| v == 0.0));
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn smoothed_samples_match_convolution_quadrature() {
        let g = Grid::<f64>::new(30.0, 1024).unwrap();
        let u = GridField::from_fn(&g, |x| (-x * x).exp());
        let j = u.derivative(1).unwrap().argmin();
        let seeds = vec![-0.9, g.x(j), 1.3];
        let b = CharacteristicBundle::new(&u, seeds, &SeedLayout::default()).unwrap();
        let spec = KernelSpec::with_order(2.0).unwrap();
        let k1v = k1(&b, &u, &spec);
        let k2v = k2(&b, &u, &spec);
        let up = |y: f64| -2.0 * y * (-y * y).exp();
        let upp = |y: f64| (4.0 * y * y - 2.0) * (-y * y).exp();
        for (i, &x) in b.positions().iter().enumerate() {
            let conv = |d: &dyn Fn(f64) -> f64| {
                let f = |y: f64| 0.5 * (-y.abs()).exp() * d(x - y);
                simpson(f, -40.0, 0.0, 40_000) + simpson(f, 0.0, 40.0, 40_000)
            };
            assert!((k1v[i] - conv(&up)).abs() < 1e-6);
            assert!((k2v[i] - conv(&upp)).abs() < 1e-6);
        }
    }

    #[test]
    fn even_field_has_no_forcing_at_centre() {
        let g = Grid::<f64>::new(10.0, 256).unwrap();
        let u = GridField::from_fn(&g, |x| (-x * x).exp());
        let j = u.derivative(1).unwrap().argmin();
        let b = CharacteristicBundle::new(&u, vec![0.0, g.x(j)], &SeedLayout::default()).unwrap();
        let spec = KernelSpec::with_order(0.5).unwrap();
        assert!(k1(&b, &u, &spec)[0].abs() < 1e-14);
    }

    #[test]
    fn sigma_nesting_with_slack() {
        let seeds = [0.0f64, 0.1, 0.2, 0.3];
        let mk = |t: f64, members: Vec<usize>| SigmaSet { t, delta: 0.1, factor: 0.9, members };
        let ok = [mk(0.0, vec![0, 1, 2]), mk(0.1, vec![1, 2]), mk(0.2, vec![1, 2])];
        assert!(sigma_monotonicity(&ok, &seeds, 0.1).pass);
        let slack = [mk(0.0, vec![1, 2]), mk(0.1, vec![2, 3])];
        assert!(sigma_monotonicity(&slack, &seeds, 0.1).pass);
        let bad = [mk(0.0, vec![0]), mk(0.1, vec![0]), mk(0.2, vec![3])];
        let rep = sigma_monotonicity(&bad, &seeds, 0.1);
        assert!(!rep.pass);
        assert_eq!(rep.first_violation.unwrap().seed, 0.3);
        assert!(sigma_monotonicity(&ok[..1], &seeds, 0.1).pass);
    }

    #[test]
    fn q_bracket_contains_riccati_ratio() {
        // Without forcing q(t) = 1 + m0 t, which sits inside the bracket.
        let (m0, d) = (-2.0, 0.1);
        for i in 0..40 {
            let t = i as f64 * 0.0125;
            let (lo, hi) = q_bracket(m0, d, t);
            let q = 1.0 + m0 * t;
            assert!(lo <= q && q <= hi);
        }
    }

    #[test]
    fn sigma_factors() {
        assert_eq!(sigma_factor_quadratic(0.1f64), 0.9);
        assert!((sigma_factor(2, 0.01f64, 1.0, 1.05) - (1.0 / 1.05 - 0.01)).abs() < 1e-15);
    }

    #[test]
    fn detect_breaking_requires_negative_slope() {
        assert!(detect_breaking(&[], (0.0, 1.0), 10.0, 1.0).is_err());
        assert!(detect_breaking(&[(0.0, 1.0, 1.0)], (0.0, 1.0), 10.0, 1.0).is_err());
    }
}
