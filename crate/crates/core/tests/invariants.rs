use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use rindler_core::dynamics::{self, DetectorState};
use rindler_core::formfactor::{strip_width, FormFactor, ProfileSpec};
use rindler_core::kinematics::{boost, from_rindler, to_rindler, ModelParameters, SpacetimePoint};
use rindler_core::rates::{self, classify_scan};
use rindler_core::resonances::{resonances_perturbative, LevelShiftData};

fn reference_ff() -> &'static FormFactor {
    use std::sync::OnceLock;
    static FF: OnceLock<FormFactor> = OnceLock::new();
    FF.get_or_init(FormFactor::reference)
}

fn wedge_point() -> impl Strategy<Value = SpacetimePoint> {
    (0.05f64..5.0, -3.0f64..3.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(u, tau, y, z)| SpacetimePoint {
        x0: u * tau.sinh(),
        x1: u * tau.cosh(),
        xperp: vec![y, z],
    })
}

fn state() -> impl Strategy<Value = DetectorState> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..(2.0 * PI)).prop_map(|(p, r, phi)| {
        let cmax = (p * (1.0 - p)).sqrt();
        DetectorState::from_parts(p, Complex64::from_polar(r * cmax, phi)).unwrap()
    })
}

proptest! {
    #[test]
    fn rindler_round_trip(p in wedge_point()) {
        let r = to_rindler(&p).unwrap();
        let q = from_rindler(&r).unwrap();
        let scale = p.x1.abs().max(1.0);
        prop_assert!((q.x0 - p.x0).abs() <= 1e-12 * scale);
        prop_assert!((q.x1 - p.x1).abs() <= 1e-12 * scale);
    }

    #[test]
    fn boosts_compose_and_shift_rindler_time(p in wedge_point(), t1 in -1.5f64..1.5, t2 in -1.5f64..1.5) {
        let a = boost(&boost(&p, t1), t2);
        let b = boost(&p, t1 + t2);
        let scale = p.x1.abs().max(1.0) * 20.0;
        prop_assert!((a.x0 - b.x0).abs() <= 1e-12 * scale && (a.x1 - b.x1).abs() <= 1e-12 * scale);
        let (r0, r1) = (to_rindler(&p).unwrap(), to_rindler(&boost(&p, t1)).unwrap());
        prop_assert!((r1.tau - r0.tau - t1).abs() <= 1e-10);
        prop_assert!((r1.u - r0.u).abs() <= 1e-10 * r0.u.max(1.0));
    }

    #[test]
    fn h_hat_reflection(y in -60.0f64..60.0) {
        let ff = reference_ff();
        let (p, m) = (ff.h_hat(y), ff.h_hat(-y));
        prop_assert!((p - m.conj()).norm() <= 1e-14 * p.norm().max(1e-3));
    }

    #[test]
    fn g_depends_on_transverse_direction_only_through_modulus(kappa in -4.0f64..4.0, k in 0.0f64..6.0, phi in 0.0f64..(2.0 * PI)) {
        let ff = reference_ff();
        let g0 = ff.g_eval(kappa, &[k, 0.0]).unwrap();
        let g1 = ff.g_eval(kappa, &[k * phi.cos(), k * phi.sin()]).unwrap();
        prop_assert!((g0 - g1).norm() <= 1e-10 * g0.norm().max(1e-12));
    }

    #[test]
    fn level_shift_closed_form_invariants(xi in 1e-3f64..1e3, e in 0.0f64..4.0, a in 0.2f64..5.0) {
        let ls = LevelShiftData::from_xi(e, a, xi);
        let m = ls.lambda0_matrix();
        let norm = m.norm();
        let v = m * nalgebra::Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(ls.q, 0.0));
        prop_assert!(v.norm() <= 1e-12 * norm);
        prop_assert!((m.trace() - Complex64::new(0.0, ls.eta)).norm() <= 1e-12 * ls.eta);
        let ev = ls.lambda0_eigenvalues();
        prop_assert!(ev[0].norm() <= 1e-12 * ls.eta);
        prop_assert!((ev[1] - Complex64::new(0.0, ls.eta)).norm() <= 1e-12 * ls.eta);
        prop_assert!((ls.lambda_plus_e.im - ls.eta).abs() <= 1e-12 * ls.eta);
        prop_assert!(ls.eta >= ls.xi && ls.eta <= 2.0 * ls.xi);
    }

    #[test]
    fn perturbative_resonances_match_generator(xi in 0.1f64..50.0, lambda in 0.0f64..0.2) {
        let ls = LevelShiftData::from_xi(1.0, 1.0, xi);
        let set = resonances_perturbative(lambda, &ls, None);
        let params = ModelParameters::reference().with_lambda(lambda);
        let r = dynamics::davies_rates_from_xi(1.0, xi, &params);
        // generator eigenvalues are −i × resonances
        let i = Complex64::i();
        prop_assert!((-i * set.eps0 + r.population_gap()).norm() <= 1e-12 * (1.0 + r.population_gap()));
        prop_assert!((-i * set.eps_plus - Complex64::new(-r.dephasing, -1.0)).norm() <= 1e-12);
        prop_assert!((-i * set.eps_minus - Complex64::new(-r.dephasing, 1.0)).norm() <= 1e-12);
    }

    #[test]
    fn trajectories_stay_physical_and_relax(rho0 in state(), xi in 0.5f64..30.0, lambda in 0.01f64..0.2) {
        let params = ModelParameters::reference().with_lambda(lambda);
        let r = dynamics::davies_rates_from_xi(1.0, xi, &params);
        let tau = 1.0 / r.population_gap();
        let sigma: Vec<f64> = (0..40).map(|i| i as f64 * 0.5 * tau).collect();
        let t = dynamics::evolve(&rho0, &sigma, &r, 1.0).unwrap();
        for s in &t.states {
            prop_assert!((s.rho.trace() - Complex64::new(1.0, 0.0)).norm() <= 1e-12);
            prop_assert!(s.min_eigenvalue() >= -1e-12);
            prop_assert!(DetectorState::new(s.rho).is_ok());
        }
        let d = t.distances_to_gibbs();
        prop_assert!(d.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15));
        prop_assert!(*d.last().unwrap() <= 1e-8 * d[0].max(1e-300) + 1e-15);
    }

    #[test]
    fn raising_threshold_never_adds_passes(vals in prop::collection::vec(0.0f64..10.0, 2..30), t1 in 1e-6f64..0.5, t2 in 1e-6f64..0.5) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let grid: Vec<f64> = (0..vals.len()).map(|i| i as f64 * 0.1).collect();
        let raw = |v: &[f64]| v.iter().map(|&x| Ok((x, 0.0))).collect::<Vec<_>>();
        let a = classify_scan(&grid, raw(&vals), 1.0, 0.05, lo);
        let b = classify_scan(&grid, raw(&vals), 1.0, 0.05, hi);
        for (x, y) in a.results.iter().zip(&b.results) {
            prop_assert!(!(y.fgr_satisfied && !x.fgr_satisfied));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn xi_nonnegative(e in 0.0f64..5.0) {
        let x = rates::xi(e, reference_ff()).unwrap();
        prop_assert!(x >= 0.0);
    }

    #[test]
    fn xi_is_quadratic_in_amplitude(c in 0.1f64..5.0) {
        let p = ModelParameters::reference();
        let mut spec = ProfileSpec::reference();
        spec.amplitude = c;
        let ff = FormFactor::new(&spec, &p).unwrap();
        let x = rates::xi(1.0, &ff).unwrap();
        let x1 = rates::xi(1.0, reference_ff()).unwrap();
        prop_assert!((x / (c * c * x1) - 1.0).abs() <= 1e-7);
    }
}

#[test]
fn strip_widths() {
    let mk = |m: f64, d: u32| strip_width(&ModelParameters::new(1.0, 1.0, m, d, 0.05).unwrap()).theta0;
    assert_eq!(mk(1.0, 3), f64::INFINITY);
    assert_eq!(mk(0.0, 3), 1.0);
    assert_eq!(mk(0.0, 2), 0.5);
}

#[test]
fn massive_form_factor_decays_faster_than_any_exponential() {
    let ff = reference_ff();
    for theta in [0.5, 1.0, 2.0] {
        let w: Vec<f64> = [4.0, 6.0, 8.0]
            .iter()
            .map(|&k| ff.g_eval(k, &[0.5, 0.0]).unwrap().norm() * (2.0 * theta * k).exp())
            .collect();
        let peak = w.iter().copied().fold(0.0, f64::max);
        assert!(w[2] < w[0] && w[2] < 1e-2 * peak, "theta {theta}: {w:?}");
    }
}

#[test]
fn ground_state_relaxes_by_one_e_fold_in_tau_relax() {
    let ff = reference_ff();
    let r = dynamics::davies_rates(1.0, ff).unwrap();
    let eta = rates::eta(1.0, ff).unwrap();
    let tau = rates::tau_relax_from_eta(ff.params.lambda, eta);
    let t = dynamics::evolve(&DetectorState::ground(), &[0.0, tau], &r, 1.0).unwrap();
    let d = t.distances_to_gibbs();
    assert!((d[1] - (-1f64).exp() * d[0]).abs() <= 1e-10 * d[0]);
}

#[test]
fn fitted_rate_halves_with_eta() {
    let params = ModelParameters::reference();
    let s0 = DetectorState::from_parts(0.9, Complex64::new(0.1, -0.2)).unwrap();
    let rate = |xi: f64| {
        let r = dynamics::davies_rates_from_xi(1.0, xi, &params);
        let sigma: Vec<f64> = (0..50).map(|i| i as f64 * 2.0).collect();
        dynamics::fit_decay_rate(&dynamics::evolve(&s0, &sigma, &r, 1.0).unwrap()).rate
    };
    assert!((rate(10.0) / rate(20.0) - 0.5).abs() < 1e-9);
}
