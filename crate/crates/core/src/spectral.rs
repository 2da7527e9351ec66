//! Uniform periodic grids on `[-L, L)`, spectral derivatives, Fourier
//! multipliers, 2/3-rule dealiasing and discrete norms.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::kernel::{symbol, KernelSpec};
use crate::scalar::{from_usize, lit, Scalar};

/// Periodic grid `x_j = -L + j dx`, `dx = 2L/n`, with cached FFT plans.
#[derive(Clone)]
pub struct Grid<T: Scalar> {
    half_length: T,
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("half_length", &self.half_length)
            .field("n", &self.n)
            .finish()
    }
}

impl<T: Scalar> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.half_length == other.half_length
    }
}

impl<T: Scalar> Grid<T> {
    /// `n` must be a power of two, at least 16.
    pub fn new(half_length: T, n: usize) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Grid(format!(
                "n must be a power of two >= 16, got {n}"
            )));
        }
        if !(half_length > T::zero()) || !half_length.is_finite() {
            return Err(Error::Grid(format!(
                "half-length must be positive, got {half_length}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            half_length,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_length(&self) -> T {
        self.half_length
    }

    pub fn dx(&self) -> T {
        lit::<T>(2.0) * self.half_length / from_usize(self.n)
    }

    pub fn x(&self, j: usize) -> T {
        -self.half_length + from_usize::<T>(j) * self.dx()
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Signed mode number of FFT slot `j`: `0..n/2-1, -n/2..-1`.
    pub fn mode(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Fundamental wavenumber `pi / L`.
    pub fn dk(&self) -> T {
        T::PI() / self.half_length
    }

    /// Wavenumber `k_j = pi j / L` of FFT slot `j`.
    pub fn wavenumber(&self, j: usize) -> T {
        lit::<T>(self.mode(j) as f64) * self.dk()
    }

    pub fn wavenumbers(&self) -> Vec<T> {
        (0..self.n).map(|j| self.wavenumber(j)).collect()
    }

    /// Largest retained `|mode|` under the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Unnormalised forward DFT of real samples.
    pub fn forward(&self, values: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse DFT (divided by `n`), keeping the real part.
    pub fn inverse(&self, spectrum: &[Complex<T>]) -> Vec<T> {
        let mut buf = spectrum.to_vec();
        self.inverse.process(&mut buf);
        let scale = T::one() / from_usize(self.n);
        buf.into_iter().map(|c| c.re * scale).collect()
    }
}

/// Real samples on a [`Grid`] with a lazily computed spectrum.
pub struct GridField<T: Scalar> {
    grid: Grid<T>,
    values: Vec<T>,
    spectrum: OnceLock<Vec<Complex<T>>>,
}

impl<T: Scalar> Clone for GridField<T> {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        Self {
            grid: self.grid.clone(),
            values: self.values.clone(),
            spectrum,
        }
    }
}

impl<T: Scalar> fmt::Debug for GridField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridField")
            .field("grid", &self.grid)
            .field("values", &self.values.len())
            .finish()
    }
}

/// Discrete norms of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms<T> {
    pub l1: T,
    pub l2: T,
    pub linf: T,
    pub h1: T,
    pub h2: T,
    pub h3: T,
    /// Minimum of the spectral first derivative over the grid.
    pub inf_slope: T,
}

impl<T: Scalar> GridField<T> {
    pub fn from_values(grid: &Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::Grid(format!(
                "expected {} samples, got {}",
                grid.n(),
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            spectrum: OnceLock::new(),
        })
    }

    pub fn from_fn(grid: &Grid<T>, f: impl Fn(T) -> T) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self {
            grid: grid.clone(),
            values,
            spectrum: OnceLock::new(),
        }
    }

    pub fn zeros(grid: &Grid<T>) -> Self {
        Self::from_fn(grid, |_| T::zero())
    }

    /// Builds a field from spectral coefficients; the imaginary part of the
    /// inverse transform is discarded, and the stored spectrum is recomputed
    /// from the real samples so it is exactly conjugate-symmetric.
    pub fn from_spectrum(grid: &Grid<T>, spectrum: &[Complex<T>]) -> Result<Self> {
        if spectrum.len() != grid.n() {
            return Err(Error::Grid(format!(
                "expected {} coefficients, got {}",
                grid.n(),
                spectrum.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values: grid.inverse(spectrum),
            spectrum: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn spectrum(&self) -> &[Complex<T>] {
        self.spectrum.get_or_init(|| self.grid.forward(&self.values))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn map_spectrum(&self, f: impl Fn(usize, T, Complex<T>) -> Complex<T>) -> Self {
        let grid = &self.grid;
        let out: Vec<Complex<T>> = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(j, &c)| f(j, grid.wavenumber(j), c))
            .collect();
        Self {
            grid: grid.clone(),
            values: grid.inverse(&out),
            spectrum: OnceLock::new(),
        }
    }

    /// Spectral derivative of order 1 to 4. Odd orders drop the Nyquist mode.
    pub fn derivative(&self, order: u32) -> Result<Self> {
        if order == 0 || order > 4 {
            return Err(Error::Unsupported(format!(
                "derivative order {order} (supported: 1..=4)"
            )));
        }
        let nyquist = self.grid.n() / 2;
        Ok(self.map_spectrum(|j, k, c| {
            if order % 2 == 1 && j == nyquist {
                return Complex::new(T::zero(), T::zero());
            }
            c * ik_pow(k, order)
        }))
    }

    /// Applies the Bessel-potential multiplier `(1 + k^2)^{-s/2}`.
    pub fn apply_multiplier(&self, spec: &KernelSpec<T>) -> Self {
        self.map_spectrum(|_, k, c| c * symbol(spec, k))
    }

    /// Applies an arbitrary (conjugate-symmetric) multiplier `m(k)`.
    pub fn apply_symbol(&self, m: impl Fn(T) -> Complex<T>) -> Self {
        self.map_spectrum(|_, k, c| c * m(k))
    }

    /// Zeroes all modes with `|j| > n/3`.
    pub fn dealias(&self) -> Self {
        let cutoff = self.grid.dealias_cutoff();
        let grid = &self.grid;
        self.map_spectrum(|j, _, c| {
            if grid.mode(j).abs() > cutoff {
                Complex::new(T::zero(), T::zero())
            } else {
                c
            }
        })
    }

    /// Pointwise product of the dealiased factors, dealiased again; free of
    /// aliasing for quadratic products.
    pub fn dealiased_product(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Grid("fields live on different grids".into()));
        }
        let a = self.dealias();
        let b = other.dealias();
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(Self::from_values(&self.grid, values)?.dealias())
    }

    /// Translation `f(x - shift)` by spectral phase rotation.
    pub fn translate(&self, shift: T) -> Self {
        let nyquist = self.grid.n() / 2;
        self.map_spectrum(|j, k, c| {
            if j == nyquist {
                c * (k * shift).cos()
            } else {
                let phase = -k * shift;
                c * Complex::new(phase.cos(), phase.sin())
            }
        })
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| v * a).collect(),
            spectrum: OnceLock::new(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: T, other: &Self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| x + a * y)
                .collect(),
            spectrum: OnceLock::new(),
        }
    }

    /// Trapezoid integral `dx * sum f`.
    pub fn integral(&self) -> T {
        self.grid.dx() * self.values.iter().fold(T::zero(), |a, &v| a + v)
    }

    /// Trapezoid inner product `dx * sum f g`.
    pub fn inner(&self, other: &Self) -> T {
        self.grid.dx()
            * self
                .values
                .iter()
                .zip(&other.values)
                .fold(T::zero(), |a, (&x, &y)| a + x * y)
    }

    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a.max(v.abs()))
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |a, &v| a.min(v))
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |a, &v| a.max(v))
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = j;
            }
        }
        best
    }

    /// `L^2` norm from the spectrum (Parseval).
    pub fn l2_spectral(&self) -> T {
        self.sobolev(0)
    }

    /// `H^m` norm with weight `(1 + k^2)^m` on the spectrum.
    pub fn sobolev(&self, m: i32) -> T {
        let grid = &self.grid;
        let acc = self
            .spectrum()
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (j, c)| {
                let k = grid.wavenumber(j);
                acc + (T::one() + k * k).powi(m) * c.norm_sqr()
            });
        (acc * grid.dx() / from_usize(grid.n())).sqrt()
    }

    pub fn norms(&self) -> Norms<T> {
        let dx = self.grid.dx();
        let l1 = dx * self.values.iter().fold(T::zero(), |a, &v| a + v.abs());
        let l2 = (dx * self.values.iter().fold(T::zero(), |a, &v| a + v * v)).sqrt();
        let inf_slope = self
            .derivative(1)
            .map(|d| d.min())
            .unwrap_or_else(|_| T::nan());
        Norms {
            l1,
            l2,
            linf: self.sup_abs(),
            h1: self.sobolev(1),
            h2: self.sobolev(2),
            h3: self.sobolev(3),
            inf_slope,
        }
    }

    /// Evaluates the spectral interpolant's `order`-th derivative at an
    /// arbitrary point.
    pub fn eval_at(&self, x: T, order: u32) -> T {
        let sampler = SpectralSampler::new(self, &[Channel::derivative(order)]);
        let mut out = [T::zero()];
        sampler.sample(x, &mut out);
        out[0]
    }
}

fn ik_pow<T: Scalar>(k: T, order: u32) -> Complex<T> {
    let mut z = Complex::new(T::one(), T::zero());
    let ik = Complex::new(T::zero(), k);
    for _ in 0..order {
        z = z * ik;
    }
    z
}

/// One quantity sampled by a [`SpectralSampler`]: `d^order/dx^order`,
/// optionally followed by the Bessel-potential multiplier.
#[derive(Debug, Clone, Copy)]
pub struct Channel<T> {
    pub order: u32,
    pub kernel: Option<KernelSpec<T>>,
}

impl<T: Scalar> Channel<T> {
    pub fn derivative(order: u32) -> Self {
        Self {
            order,
            kernel: None,
        }
    }

    pub fn smoothed(order: u32, kernel: KernelSpec<T>) -> Self {
        Self {
            order,
            kernel: Some(kernel),
        }
    }

    /// Per-mode weights `(i k_j)^order m_s(k_j)` for `j = 0..n/2`.
    pub fn weights(&self, grid: &Grid<T>) -> Vec<Complex<T>> {
        (0..grid.n() / 2)
            .map(|j| {
                let k = grid.wavenumber(j);
                let w = ik_pow(k, self.order);
                match &self.kernel {
                    Some(kernel) => w * symbol(kernel, k),
                    None => w,
                }
            })
            .collect()
    }
}

/// Direct evaluation of the trigonometric interpolant (and derivatives or
/// multiplier images of it) at off-grid points. Exact for band-limited fields.
///
/// Modes whose coefficients are below round-off relative to the largest
/// coefficient of every channel are skipped, as is the Nyquist mode.
pub struct SpectralSampler<T: Scalar> {
    half_length: T,
    dk: T,
    n: usize,
    // coefficients per channel for modes 0..=last (non-negative modes only)
    coeffs: Vec<Vec<Complex<T>>>,
    last: usize,
}

impl<T: Scalar> SpectralSampler<T> {
    pub fn new(field: &GridField<T>, channels: &[Channel<T>]) -> Self {
        let weights: Vec<Vec<Complex<T>>> = channels.iter().map(|c| c.weights(field.grid())).collect();
        Self::from_weights(field, &weights)
    }

    /// Like [`SpectralSampler::new`] with per-channel weights precomputed by
    /// [`Channel::weights`]; avoids re-evaluating the symbol in tight loops.
    pub fn from_weights(field: &GridField<T>, weights: &[Vec<Complex<T>>]) -> Self {
        let grid = field.grid();
        let n = grid.n();
        let spec = field.spectrum();
        let mut coeffs = Vec::with_capacity(weights.len());
        let mut last = 0usize;
        for w in weights {
            let row: Vec<Complex<T>> = w.iter().zip(spec).map(|(&w, &c)| w * c).collect();
            let cmax = row.iter().fold(T::zero(), |a, c| a.max(c.norm()));
            let floor = cmax * T::epsilon() * lit(1e-3);
            if let Some(j) = row.iter().rposition(|c| c.norm() > floor) {
                last = last.max(j);
            }
            coeffs.push(row);
        }
        for row in coeffs.iter_mut() {
            row.truncate(last + 1);
        }
        Self {
            half_length: grid.half_length(),
            dk: grid.dk(),
            n,
            coeffs,
            last,
        }
    }

    /// Number of non-negative modes summed per point.
    pub fn bandwidth(&self) -> usize {
        self.last + 1
    }

    /// Writes the value of every channel at `x` into `out`.
    pub fn sample(&self, x: T, out: &mut [T]) {
        let theta = (x + self.half_length) * self.dk;
        let step = Complex::new(theta.cos(), theta.sin());
        let mut acc = vec![Complex::new(T::zero(), T::zero()); self.coeffs.len()];
        let mut phase = Complex::new(T::one(), T::zero());
        for j in 0..=self.last {
            if j > 0 {
                if j % 128 == 0 {
                    let a = theta * lit(j as f64);
                    phase = Complex::new(a.cos(), a.sin());
                } else {
                    phase = phase * step;
                }
            }
            let w = if j == 0 { T::one() } else { lit(2.0) };
            for (a, row) in acc.iter_mut().zip(&self.coeffs) {
                *a = *a + row[j] * phase * w;
            }
        }
        let scale = T::one() / from_usize(self.n);
        for (o, a) in out.iter_mut().zip(acc) {
            *o = a.re * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use std::f64::consts::PI;

    fn grid(l: f64, n: usize) -> Grid<f64> {
        Grid::new(l, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::<f64>::new(1.0, 8).is_err());
        assert!(Grid::<f64>::new(1.0, 48).is_err());
        assert!(Grid::<f64>::new(0.0, 64).is_err());
        let g = grid(2.0, 16);
        assert_eq!(g.mode(7), 7);
        assert_eq!(g.mode(8), -8);
        assert_eq!(g.mode(15), -1);
        assert!((g.wavenumber(1) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip() {
        let g = grid(5.0, 128);
        let f = GridField::from_fn(&g, |x| (-x * x).exp() + 0.1 * x.sin());
        let back = GridField::from_spectrum(&g, f.spectrum()).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_fourier_mode() {
        let l = 3.0;
        let g = grid(l, 64);
        let f = GridField::from_fn(&g, |x| (PI * x / l).sin());
        let d = f.derivative(1).unwrap();
        for (x, v) in g.points().into_iter().zip(d.values()) {
            assert!((v - PI / l * (PI * x / l).cos()).abs() < 1e-13);
        }
        let c = GridField::from_fn(&g, |_| 2.5);
        for order in 1..=4 {
            assert!(c.derivative(order).unwrap().sup_abs() < 1e-13);
        }
        assert!(matches!(f.derivative(5), Err(Error::Unsupported(_))));
        assert!(matches!(f.derivative(0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gaussian_third_derivative() {
        // d^3/dx^3 e^{-x^2} = (12x - 8x^3) e^{-x^2}
        let g = grid(20.0, 512);
        let f = GridField::from_fn(&g, |x| (-x * x).exp());
        let d3 = f.derivative(3).unwrap();
        let err = g
            .points()
            .into_iter()
            .zip(d3.values())
            .map(|(x, v)| (v - (12.0 * x - 8.0 * x * x * x) * (-x * x).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn multiplier_on_mode_and_tiny_order() {
        let l = 4.0;
        let g = grid(l, 64);
        let k = 3.0 * PI / l;
        let f = GridField::from_fn(&g, |x| (k * x).cos());
        let s2 = KernelSpec::with_order(2.0).unwrap();
        let m = f.apply_multiplier(&s2);
        for (a, b) in m.values().iter().zip(f.values()) {
            assert!((a - b / (1.0 + k * k)).abs() < 1e-14);
        }
        let tiny = KernelSpec::with_order(1e-300).unwrap();
        let id = f.apply_multiplier(&tiny);
        for (a, b) in id.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn norms_of_sine_on_two_pi_box() {
        let g = grid(PI, 256);
        let f = GridField::from_fn(&g, |x| x.sin());
        let n = f.norms();
        assert!((n.l2 - PI.sqrt()).abs() < 1e-13);
        assert!((n.linf - 1.0).abs() < 1e-3);
        assert!((n.inf_slope + 1.0).abs() < 1e-12);
        let z = GridField::zeros(&g).norms();
        assert_eq!((z.l1, z.l2, z.linf, z.h3), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn gaussian_inf_slope() {
        let g = grid(10.0, 4096);
        let lambda = 3.0;
        let f = GridField::from_fn(&g, |x| lambda * (-x * x).exp());
        let expect = -lambda * 2f64.sqrt() * (-0.5f64).exp();
        assert!((f.norms().inf_slope - expect).abs() < 1e-5);
        assert!((expect / lambda + 0.857_763_884_960_706_8).abs() < 1e-12);
    }

    #[test]
    fn dealias_rules() {
        let g = grid(PI, 96 / 3 * 2);
        let n = g.n();
        let top = GridField::from_fn(&g, |x| ((n / 2 - 1) as f64 * x).cos());
        assert!(top.dealias().sup_abs() < 1e-13);
        let low = GridField::from_fn(&g, |x| (3.0 * x).sin() + (x * (n / 3) as f64).cos());
        let d = low.dealias();
        for (a, b) in d.values().iter().zip(low.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dealiased_product_is_exact_convolution() {
        // Coefficients of the product of two trigonometric polynomials by direct
        // convolution of their coefficient sequences.
        let g = grid(PI, 64);
        let cut = g.dealias_cutoff();
        let a_modes = [(1i64, 0.7), (cut, 0.3), (cut - 4, -0.2)];
        let b_modes = [(2i64, 1.1), (cut - 1, 0.4)];
        let eval = |modes: &[(i64, f64)], x: f64| modes.iter().map(|(m, c)| c * (*m as f64 * x).cos()).sum::<f64>();
        let a = GridField::from_fn(&g, |x| eval(&a_modes, x));
        let b = GridField::from_fn(&g, |x| eval(&b_modes, x));
        let p = a.dealiased_product(&b).unwrap();
        // cos(m x) cos(q x) = (cos((m+q)x) + cos((m-q)x))/2; keep |mode| <= cut
        let exact = |x: f64| {
            let mut acc = 0.0;
            for (m, c) in a_modes.iter() {
                for (q, d) in b_modes.iter() {
                    for mode in [m + q, m - q] {
                        if mode.abs() <= cut {
                            acc += 0.5 * c * d * (mode as f64 * x).cos();
                        }
                    }
                }
            }
            acc
        };
        for (x, v) in g.points().into_iter().zip(p.values()) {
            assert!((v - exact(x)).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn off_grid_evaluation() {
        let g = grid(8.0, 256);
        let f = GridField::from_fn(&g, |x| (-x * x).exp());
        for &x in &[0.123, -1.7, 2.49] {
            assert!((f.eval_at(x, 0) - (-x * x).exp()).abs() < 1e-12);
            assert!((f.eval_at(x, 1) + 2.0 * x * (-x * x).exp()).abs() < 1e-11);
        }
    }

    #[test]
    fn translation_moves_profile() {
        let g = grid(10.0, 256);
        let f = GridField::from_fn(&g, |x| (-x * x).exp());
        let t = f.translate(1.3);
        for (x, v) in g.points().into_iter().zip(t.values()) {
            assert!((v - (-(x - 1.3) * (x - 1.3)).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_grid() {
        let g = Grid::<f32>::new(std::f32::consts::PI, 64).unwrap();
        let f = GridField::from_fn(&g, |x| x.sin());
        let d = f.derivative(1).unwrap();
        for (x, v) in g.points().into_iter().zip(d.values()) {
            assert!((v - x.cos()).abs() < 1e-5);
        }
    }
}
