use fwlab::entropy::{self, numerical_flux, source_weights, Flux, FvConfig, FvState};
use fwlab::kernel::{bessel_k, g_s, g_s_prime, KernelSpec};
use fwlab::lineardisp::propagate_linear;
use fwlab::spectral::{Grid, GridField};
use fwlab::theorems::{window_higher, window_quadratic};
use fwlab::{evolve, io};
use proptest::prelude::*;

fn smooth_field(g: &Grid<f64>, c: &[f64]) -> GridField<f64> {
    GridField::from_fn(g, |x| {
        c.iter()
            .enumerate()
            .map(|(k, a)| a * (-(x - k as f64 + 1.5).powi(2) * (1.0 + 0.3 * k as f64)).exp())
            .sum()
    })
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_even_and_derivative_odd(s in 0.3f64..4.0, x in 0.01f64..20.0) {
        let spec = KernelSpec::with_order(s).unwrap();
        prop_assert_eq!(g_s(&spec, x).unwrap(), g_s(&spec, -x).unwrap());
        prop_assert_eq!(g_s_prime(&spec, x).unwrap(), -g_s_prime(&spec, -x).unwrap());
    }

    #[test]
    fn bessel_parity_in_order(nu in 0.0f64..4.0, r in 0.05f64..50.0) {
        let a = bessel_k(nu, r, 1e-12).unwrap();
        let b = bessel_k(-nu, r, 1e-12).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn parseval(c in coeffs()) {
        let g = Grid::<f64>::new(12.0, 256).unwrap();
        let f = smooth_field(&g, &c);
        let direct = f.inner(&f);
        let spectral = f.l2_spectral().powi(2);
        prop_assert!((direct - spectral).abs() <= 1e-10 * direct.max(1e-300));
    }

    #[test]
    fn multiplier_commutes_with_derivative_and_contracts(c in coeffs(), s in 0.1f64..4.0) {
        let g = Grid::<f64>::new(12.0, 256).unwrap();
        let f = smooth_field(&g, &c);
        let spec = KernelSpec::with_order(s).unwrap();
        let a = f.derivative(1).unwrap().apply_multiplier(&spec);
        let b = f.apply_multiplier(&spec).derivative(1).unwrap();
        let scale = f.sup_abs().max(1.0);
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
        let m = f.apply_multiplier(&spec);
        prop_assert!(m.inner(&m) <= f.inner(&f) * (1.0 + 1e-14));
    }

    #[test]
    fn linear_flow_is_a_unitary_group(c in coeffs(), s in 0.2f64..3.0, t1 in -5.0f64..5.0, t2 in -5.0f64..5.0) {
        let g = Grid::<f64>::new(20.0, 256).unwrap();
        let f = smooth_field(&g, &c);
        let spec = KernelSpec::with_order(s).unwrap();
        let composed = propagate_linear(&propagate_linear(&f, &spec, t1), &spec, t2);
        let direct = propagate_linear(&f, &spec, t1 + t2);
        let back = propagate_linear(&direct, &spec, -(t1 + t2));
        let scale = f.sup_abs().max(1e-3);
        for j in 0..g.n() {
            prop_assert!((composed.values()[j] - direct.values()[j]).abs() <= 1e-12 * scale);
            prop_assert!((back.values()[j] - f.values()[j]).abs() <= 1e-12 * scale);
        }
        prop_assert!((direct.inner(&direct) - f.inner(&f)).abs() <= 1e-12 * f.inner(&f).max(1e-300));
    }

    #[test]
    fn quadratic_window_ordered(delta in 0.001f64..0.999, m0 in -100.0f64..-1e-3) {
        let (lo, hi) = window_quadratic(delta, m0);
        prop_assert!(lo < hi);
    }

    #[test]
    fn higher_window_ordered(p in 2u32..6, a in 0.5f64..2.0, spread in 1.0f64..1.2, frac in 0.01f64..0.99, m0 in -50.0f64..-1e-2) {
        let b = a * spread;
        let e = p as i32 - 1;
        let delta = frac * (a.powi(e) * b.powi(-e)).min(p as f64 * a.powi(e));
        let (lo, hi) = window_higher(p, a, b, delta, m0);
        prop_assert!(lo > 0.0 && lo < hi);
    }

    #[test]
    fn snapshot_round_trip(c in coeffs(), t in -1e3f64..1e3) {
        let g = Grid::<f64>::new(7.5, 64).unwrap();
        let f = smooth_field(&g, &c);
        let mut buf = Vec::new();
        io::write_snapshot(&mut buf, &f, t).unwrap();
        let (back, tb) = io::read_snapshot::<f64, _>(buf.as_slice()).unwrap();
        prop_assert_eq!(tb, t);
        prop_assert_eq!(back.values(), f.values());
        prop_assert_eq!(back.grid(), f.grid());
    }

    #[test]
    fn fv_source_weights_antisymmetric(s in 1.05f64..4.0, cells in 8usize..200, l in 2.0f64..40.0) {
        let cfg = FvConfig::new(KernelSpec::with_order(s).unwrap(), cells, l, 1.0);
        let w = source_weights(&cfg).unwrap();
        prop_assert_eq!(w[0], 0.0);
        for m in 1..cells {
            prop_assert_eq!(w[m], -w[cells - m]);
        }
    }

    #[test]
    fn fluxes_are_consistent_and_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0, h in 0.0f64..0.5) {
        for flux in [Flux::Rusanov, Flux::Godunov] {
            prop_assert!((numerical_flux(flux, a, a) - a * a / 2.0).abs() < 1e-15);
            // nondecreasing in the left state, nonincreasing in the right
            prop_assert!(numerical_flux(flux, a + h, b) >= numerical_flux(flux, a, b) - 1e-14);
            prop_assert!(numerical_flux(flux, a, b + h) <= numerical_flux(flux, a, b) + 1e-14);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn spectral_run_conserves_mass_and_l2(c in coeffs(), s in 0.3f64..3.0, p in 1u32..3) {
        let g = Grid::<f64>::new(15.0, 256).unwrap();
        let u0 = smooth_field(&g, &c).scale(0.3);
        let mut cfg = evolve::EvolveConfig::new(p, KernelSpec::with_order(s).unwrap());
        cfg.t_end = 0.5;
        cfg.dt0 = 1e-3;
        cfg.energy_diagnostics = false;
        let out = evolve::run(&u0, &cfg).unwrap();
        let u = &out.state.u;
        let u0d = u0.dealias();
        prop_assert!((u.integral() - u0d.integral()).abs() <= 1e-8 * (1.0 + u0d.integral().abs()));
        let (a, b) = (u.inner(u), u0d.inner(&u0d));
        prop_assert!((a - b).abs() <= 1e-8 * b);
    }

    #[test]
    fn source_free_fv_is_l1_contractive(c in coeffs(), d in coeffs()) {
        let mut cfg = FvConfig::new(KernelSpec::with_order(2.0).unwrap(), 400, 10.0, 2.0);
        cfg.source = false;
        let f = |k: &[f64]| {
            let k = k.to_vec();
            move |x: f64| k.iter().enumerate().map(|(i, a)| a * (-(x - i as f64 + 1.5).powi(2)).exp()).sum::<f64>()
        };
        let u0 = FvState::from_fn(&cfg, f(&c));
        let v0 = FvState::from_fn(&cfg, f(&d));
        let rep = entropy::l1_stability(&u0, &v0, &cfg, &[0.5, 1.0, 2.0]).unwrap();
        // without the source the scheme is an L1 contraction, stronger than e^t
        for &(t, dist, _) in &rep.samples {
            prop_assert!(dist <= rep.initial_distance * (1.0 + 1e-12), "t={} {} > {}", t, dist, rep.initial_distance);
        }
    }
}
