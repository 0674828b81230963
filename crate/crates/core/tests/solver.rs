use dampwave::grid::Grid;
use dampwave::wavesolver::{
    make_initial_data, run, support_radius, Nonlinearity, Profile, Sampling, Scheme, SolverConfig, WaveState,
};
use dampwave::{Field64, Solver64};

fn final_state(u0: &Field64, u1: &Field64, c: &Solver64) -> WaveState<f64> {
    let (states, report) = run(u0, u1, c, &Sampling::Endpoints).unwrap().collect_all();
    assert!(report.termination.is_completed());
    states.into_iter().last().unwrap()
}

fn l2_diff(a: &WaveState<f64>, b: &WaveState<f64>) -> f64 {
    a.u().combine(1.0, b.u(), -1.0).unwrap().l2_norm()
}

#[test]
fn free_wave_splits_into_two_halves() {
    let c = SolverConfig::linear(0.0, 1.0, 2.0);
    let g = c.grid_for(1.0 / 64.0).unwrap();
    let (u0, u1) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g).unwrap();
    let s = final_state(&u0, &u1, &c);
    let peak = u0.max_abs();
    let center = s.u().samples()[g.center()].abs();
    assert!(center <= 1e-3 * peak, "center {center}");
    let right = (g.center()..g.nx()).map(|i| s.u().samples()[i]).fold(0.0, f64::max);
    let at_two = s.u().samples()[g.center() + 128];
    assert!((right - 0.5).abs() < 1e-12, "{right}");
    assert!((at_two - 0.5).abs() < 1e-12);
}

#[test]
fn leapfrog_converges_to_oracle_at_second_order() {
    let mut errs = Vec::new();
    for k in 4..=6 {
        let dx = 0.5f64.powi(k);
        let c = SolverConfig::linear(1.0, 1.0, 1.0);
        let g = c.grid_for(dx).unwrap();
        let (u0, u1) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g).unwrap();
        let lf = final_state(&u0, &u1, &c);
        let rk = final_state(&u0, &u1, &c.with_scheme(Scheme::OracleRk));
        assert!((lf.t() - 1.0).abs() < 1e-12 && (rk.t() - 1.0).abs() < 1e-12);
        errs.push(l2_diff(&lf, &rk));
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "order {order}, errors {errs:?}");
    }
}

#[test]
fn nonlinear_leapfrog_tracks_oracle() {
    let c = SolverConfig::new(0.5, Nonlinearity::AbsP { p: 2.0 }, 1.0, 2.0);
    let g = c.grid_for(1.0 / 32.0).unwrap();
    let (u0, u1) = make_initial_data(&Profile::VelocityBump, 1.0, 0.5, &g).unwrap();
    let lf = final_state(&u0, &u1, &c);
    let rk = final_state(&u0, &u1, &c.with_scheme(Scheme::OracleRk));
    let rel = l2_diff(&lf, &rk) / rk.u().l2_norm();
    assert!(rel < 1e-3, "{rel}");
}

#[test]
fn support_stays_in_the_cone() {
    let c = SolverConfig::linear(1.0, 1.0, 10.0);
    let g = c.grid_for(1.0 / 16.0).unwrap();
    let (u0, u1) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g).unwrap();
    assert!(support_radius(&WaveState::new(u0.clone(), u1.clone(), 0.0).unwrap(), 1e-12) <= 1.0);
    for s in run(&u0, &u1, &c, &Sampling::Every(8)).unwrap() {
        assert!(s.support_radius(1e-8) <= 1.0 + s.t() + 2.0 * g.dx(), "t = {}", s.t());
    }
}

#[test]
fn zero_data_stays_zero() {
    let c = SolverConfig::new(1.0, Nonlinearity::SignedP { p: 3.0 }, 1.0, 5.0);
    let g = c.grid_for(0.125).unwrap();
    for s in run(&g.zeros(), &g.zeros(), &c, &Sampling::Every(1)).unwrap() {
        assert_eq!(s.u().max_abs(), 0.0);
        assert_eq!(s.v().max_abs(), 0.0);
    }
}

#[test]
fn linear_problem_never_blows_up() {
    let c = SolverConfig::linear(0.5, 1.0, 50.0);
    let g = c.grid_for(0.125).unwrap();
    let (u0, u1) = make_initial_data(&Profile::DoubleBump, 1.0, 1e4, &g).unwrap();
    let report = run(&u0, &u1, &c, &Sampling::Endpoints).unwrap().finish();
    assert!(report.termination.is_completed());
}

#[test]
fn blowup_time_decreases_with_eps() {
    let c = SolverConfig::new(0.5, Nonlinearity::AbsP { p: 2.0 }, 1.0, 200.0);
    let g = c.grid_for(1.0 / 16.0).unwrap();
    let time = |eps: f64| {
        let (u0, u1) = make_initial_data(&Profile::Bump, 1.0, eps, &g).unwrap();
        run(&u0, &u1, &c, &Sampling::Endpoints)
            .unwrap()
            .finish()
            .termination
            .blowup_time()
            .unwrap()
    };
    let ts: Vec<f64> = [4.0, 2.0, 1.0].iter().map(|&e| time(e)).collect();
    assert!(ts[0] < ts[1] && ts[1] < ts[2], "{ts:?}");
}

#[test]
fn small_supercritical_data_is_global() {
    let c = SolverConfig::new(0.5, Nonlinearity::AbsP { p: 6.0 }, 1.0, 500.0);
    let g = c.grid_for(0.125).unwrap();
    let (u0, u1) = make_initial_data(&Profile::VelocityBump, 1.0, 1e-3, &g).unwrap();
    let report = run(&u0, &u1, &c, &Sampling::Endpoints).unwrap().finish();
    assert!(report.termination.is_completed());
    assert!(report.peak_abs_v < 1e-2);
}

#[test]
fn f32_matches_f64() {
    let c64 = SolverConfig::linear(1.0, 1.0, 3.0);
    let g64 = c64.grid_for(1.0 / 16.0).unwrap();
    let (a, b) = make_initial_data(&Profile::Bump, 1.0, 1.0, &g64).unwrap();
    let s64 = final_state(&a, &b, &c64);

    let c32 = SolverConfig::<f32>::linear(1.0, 1.0, 3.0);
    let g32 = Grid::<f32>::covering(c32.required_half_width(1.0 / 16.0), 1.0 / 16.0).unwrap();
    let (a, b) = make_initial_data(&Profile::Bump, 1.0f32, 1.0, &g32).unwrap();
    let mut t = run(&a, &b, &c32, &Sampling::Endpoints).unwrap();
    let s32 = t.by_ref().last().unwrap();
    assert_eq!(g32.nx(), g64.nx());
    let worst = s32
        .u()
        .samples()
        .iter()
        .zip(s64.u().samples())
        .map(|(&x, &y)| (x as f64 - y).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn sample_times_are_nearest_levels() {
    let c = SolverConfig::linear(0.5, 1.0, 2.0);
    let g = c.grid_for(0.1).unwrap();
    let times: Vec<f64> = run(&g.zeros(), &g.zeros(), &c, &Sampling::Times(vec![0.53, 1.26]))
        .unwrap()
        .map(|s| s.t())
        .collect();
    assert_eq!(times.len(), 3);
    assert!(
        (times[1] - 0.5).abs() < 1e-12 && (times[2] - 1.3).abs() < 1e-12,
        "{times:?}"
    );
}
