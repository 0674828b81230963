use dampwave::blowup::{fit_lifespan, geometric_ladder, theory_slope, LifespanRecord};
use dampwave::duhamel::propagate_homogeneous;
use dampwave::energetics::{default_mu, record_energies, verify_monotone_e0};
use dampwave::grid::Grid;
use dampwave::harness::{load_config_str, ExperimentConfig, ExperimentKind};
use dampwave::io::fmt_f64;
use dampwave::potential::{solve_phi, PotentialParams};
use dampwave::wavesolver::{
    make_initial_data, run, sample_levels, Nonlinearity, Perturbation, Profile, Sampling, SolverConfig, WaveState,
};
use proptest::prelude::*;

fn cheap() -> ProptestConfig {
    ProptestConfig::with_cases(24)
}

fn last_state(u0: &dampwave::Field64, u1: &dampwave::Field64, c: &SolverConfig<f64>) -> WaveState<f64> {
    run(u0, u1, c, &Sampling::Endpoints).unwrap().last().unwrap()
}

proptest! {
    #[test]
    fn potential_is_even_positive_and_bounded(mu0 in 0.01f64..4.0, x in 0.0f64..1e3) {
        let v = PotentialParams::new(mu0).unwrap();
        prop_assert_eq!(v.eval(x), v.eval(-x));
        prop_assert!(v.eval(x) > 0.0 && v.eval(x) <= mu0);
        prop_assert!(v.eval(x + 0.5) <= v.eval(x));
    }

    #[test]
    fn float_format_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn grid_covers_request(l in 0.5f64..50.0, k in 2u32..7) {
        let dx = 0.5f64.powi(k as i32);
        let g = Grid::<f64>::covering(l, dx).unwrap();
        prop_assert!(g.half_width() >= l);
        prop_assert!((g.dx() - dx).abs() < 1e-12 * dx);
        prop_assert_eq!(g.nx() % 2, 1);
        prop_assert_eq!(g.x(g.center()), 0.0);
    }

    #[test]
    fn source_terms_vanish_at_rest(p in 1.01f64..8.0, ux in -10.0f64..10.0, v in -10.0f64..10.0) {
        for n in [Nonlinearity::AbsP { p }, Nonlinearity::SignedP { p }, Nonlinearity::Mixed { p, q: p }] {
            prop_assert_eq!(n.evaluator::<f64>().eval(0.0, ux), 0.0);
        }
        let s = Nonlinearity::SignedP { p }.evaluator::<f64>();
        prop_assert_eq!(s.eval(-v, 0.0), -s.eval(v, 0.0));
        let abs = Nonlinearity::AbsP { p }.evaluator::<f64>();
        prop_assert!(abs.eval(v, 0.0) >= 0.0);
    }

    #[test]
    fn sample_levels_are_sorted_and_bracketed(
        every in 1usize..50,
        last in 1usize..500,
        ts in prop::collection::vec(-1.0f64..60.0, 0..8),
    ) {
        for s in [Sampling::Endpoints, Sampling::Every(every), Sampling::Times(ts.clone())] {
            let l = sample_levels(&s, 0.1, last);
            prop_assert_eq!(l[0], 0);
            prop_assert!(l.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(*l.last().unwrap() <= last);
            if !matches!(s, Sampling::Times(_)) {
                prop_assert_eq!(*l.last().unwrap(), last);
            }
        }
    }

    #[test]
    fn ladders_are_geometric(eps_max in 0.01f64..10.0, ratio in 1.01f64..3.0, n in 1usize..12) {
        let l = geometric_ladder(eps_max, ratio, n);
        prop_assert_eq!(l.len(), n);
        prop_assert_eq!(l[0], eps_max);
        for w in l.windows(2) {
            prop_assert!((w[0] / w[1] - ratio).abs() < 1e-12 * ratio);
        }
    }

    #[test]
    fn exact_power_laws_are_recovered(mu0 in 0.1f64..0.9, p in 1.2f64..2.5, c in -2.0f64..2.0) {
        let slope = theory_slope(p, mu0).unwrap();
        let records: Vec<LifespanRecord> = geometric_ladder(1.0, 2f64.sqrt(), 6)
            .into_iter()
            .map(|eps| LifespanRecord {
                eps,
                p,
                mu0,
                r0: 1.0,
                nonlinearity: Nonlinearity::AbsP { p },
                t_num: Some((c + slope * eps.ln()).exp()),
                refinement_level: 0,
                threshold_used: 1e8,
                sign_integral: 1.0,
                converged: true,
                levels: vec![],
            })
            .collect();
        let fit = fit_lifespan(&records, p, mu0).unwrap();
        prop_assert!(fit.rel_error < 1e-9);
        prop_assert!((fit.intercept - c).abs() < 1e-9);
    }

    #[test]
    fn perturbation_is_seeded_and_keeps_support(seed in any::<u64>(), amp in 0.0f64..0.5) {
        let g = Grid::<f64>::covering(3.0, 1.0 / 32.0).unwrap();
        let (u0, _) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g).unwrap();
        let pert = Perturbation { seed, amplitude: amp };
        let (mut a, mut b) = (u0.clone(), u0.clone());
        pert.apply(&mut a, 1.0);
        pert.apply(&mut b, 1.0);
        prop_assert_eq!(a.samples(), b.samples());
        for (i, (&x, &y)) in a.samples().iter().zip(u0.samples()).enumerate() {
            prop_assert_eq!(x == 0.0, y == 0.0, "node {}", i);
        }
    }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn phi_is_even_positive_and_solves_its_ode(mu0 in 0.0f64..3.0, x in 0.0f64..10.0) {
        let t = solve_phi(&PotentialParams::new(mu0).unwrap(), 12.0, 1e-3).unwrap();
        prop_assert!(t.is_positive_nondecreasing());
        prop_assert_eq!(t.phi(x), t.phi(-x));
        prop_assert!(t.phi(x).unwrap() >= 1.0);
        prop_assert!(t.ode_residual() < 1e-6);
    }

    #[test]
    fn solutions_respect_the_light_cone(
        mu0 in 0.0f64..2.0,
        r0 in 0.5f64..2.0,
        eps in 0.0f64..2.0,
        p in 2.0f64..4.0,
        velocity in any::<bool>(),
    ) {
        let c = SolverConfig::new(mu0, Nonlinearity::AbsP { p }, r0, 4.0);
        let g = c.grid_for(1.0 / 16.0).unwrap();
        let profile = if velocity { Profile::VelocityBump } else { Profile::Bump };
        let (u0, u1) = make_initial_data(&profile, r0, eps, &g).unwrap();
        for s in run(&u0, &u1, &c, &Sampling::Every(4)).unwrap() {
            prop_assert!(s.support_radius(1e-12) <= r0 + s.t() + 2.0 * g.dx());
        }
    }

    #[test]
    fn linear_propagation_is_linear(mu0 in 0.0f64..2.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let c = SolverConfig::linear(mu0, 1.0, 3.0);
        let g = c.grid_for(1.0 / 16.0).unwrap();
        let (f, _) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g).unwrap();
        let (_, h) = make_initial_data(&Profile::DoubleBump, 1.0, 1.0, &g).unwrap();
        let s1 = last_state(&f, &g.zeros(), &c);
        let s2 = last_state(&g.zeros(), &h, &c);
        let s = last_state(&f.scaled(a), &h.scaled(b), &c);
        let expect = s1.u().combine(a, s2.u(), b).unwrap();
        let err = s.u().combine(1.0, &expect, -1.0).unwrap().max_abs();
        prop_assert!(err <= 1e-10 * (1.0 + a.abs() + b.abs()), "{}", err);
    }

    #[test]
    fn homogeneous_propagator_depends_only_on_elapsed_time_for_free_waves(s0 in 0.0f64..3.0) {
        let c = SolverConfig::linear(0.0, 1.0, 8.0);
        let g = c.grid_for(1.0 / 16.0).unwrap();
        let (f, h) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g).unwrap();
        let s0 = (s0 * 16.0).round() / 16.0;
        let a = propagate_homogeneous(&f, &h, 0.0, 2.0, &c).unwrap();
        let b = propagate_homogeneous(&f, &h, s0, s0 + 2.0, &c).unwrap();
        prop_assert!((b.t() - s0 - 2.0).abs() < 1e-12);
        let err = a.u().combine(1.0, b.u(), -1.0).unwrap().max_abs();
        prop_assert!(err < 1e-13, "{}", err);
    }

    #[test]
    fn energy_never_increases(mu0 in 0.05f64..3.0, r0 in 0.5f64..2.0, eps in 0.1f64..10.0) {
        let c = SolverConfig::linear(mu0, r0, 20.0);
        let g = c.grid_for(1.0 / 16.0).unwrap();
        let (u0, u1) = make_initial_data(&Profile::Bump, r0, eps, &g).unwrap();
        let a = dampwave::energetics::default_a(mu0, r0);
        let (series, _) = record_energies(&u0, &u1, &c, &Sampling::Every(4), a, default_mu(mu0)).unwrap();
        let check = verify_monotone_e0(&series).unwrap();
        prop_assert!(check.monotone, "{:?}", check);
    }

    #[test]
    fn configs_round_trip_through_toml(
        mu0 in 0.05f64..3.0,
        p in 1.5f64..4.0,
        t_end in 10.0f64..900.0,
        cfl in 0.1f64..1.0,
        seed in proptest::option::of(any::<u32>()),
        kind in prop::sample::select(vec![
            ExperimentKind::LinearDecay,
            ExperimentKind::PhiChecks,
            ExperimentKind::LifespanSweep,
            ExperimentKind::Picard,
            ExperimentKind::Dissipation,
            ExperimentKind::Simulate,
        ]),
    ) {
        let mut c = ExperimentConfig::new(kind);
        c.mu0 = Some(mu0);
        c.p = Some(p);
        c.t_end = Some(t_end);
        c.cfl = cfl;
        c.seed = seed.map(u64::from);
        let table: toml::Table = toml::from_str(&c.to_toml()).unwrap();
        let parsed: ExperimentConfig = table.try_into().unwrap();
        prop_assert_eq!(&parsed, &c);
        if let Ok(filled) = c.clone().validated() {
            prop_assert_eq!(load_config_str(&filled.to_toml()).unwrap(), filled);
        }
    }
}
