//! Reference values from an independent high-order integrator (DOP853 at rtol 3e-14 with
//! adaptive quadrature), and closed forms.

use approx::assert_relative_eq;
use dampwave::blowup::theory_slope;
use dampwave::energetics::{decay_alpha, default_a, default_mu, threshold_t0, threshold_t1};
use dampwave::grid::{Field, Grid};
use dampwave::potential::{check_phi_growth, check_sign_condition, psi_mass, solve_phi, PotentialParams};
use dampwave::wavesolver::double_bump;

fn table(mu0: f64, r_max: f64) -> dampwave::PhiTable64 {
    solve_phi(&PotentialParams::new(mu0).unwrap(), r_max, 1e-4).unwrap()
}

#[test]
fn phi_at_one() {
    let t = table(1.0, 2.0);
    assert_relative_eq!(t.phi(1.0).unwrap(), 2.12934258108587, max_relative = 1e-12);
    let t0 = table(0.0, 2.0);
    assert_relative_eq!(t0.phi(1.0).unwrap(), 1.0f64.cosh(), max_relative = 1e-13);
}

#[test]
fn growth_envelope_values() {
    let cases = [
        (0.25, 1.01383096689, 0.565039767198),
        (0.5, 1.02643275415, 0.621504598007),
        (1.0, 1.04789846621, 0.706210838632),
        (2.0, 1.07576072699, 0.76270965265),
    ];
    for (mu0, ratio, rho50) in cases {
        let g = check_phi_growth(&table(mu0, 50.0)).unwrap();
        let (a, b) = (g.rho_at(50.0).unwrap(), g.rho_at(10.0).unwrap());
        assert_relative_eq!(a / b, ratio, max_relative = 1e-9);
        assert_relative_eq!(a, rho50, max_relative = 1e-9);
        assert_eq!(g.sup, 1.0);
        assert_eq!(g.r_at_sup, 0.0);
    }
}

#[test]
fn psi_mass_values() {
    let cases = [
        (0.5, 4.97238170122514, 3.390298098, 3.287944496),
        (1.0, 8.46494707972065, 3.862986569, 3.658469464),
    ];
    for (mu0, m5, max_ratio, ratio10) in cases {
        let t = table(mu0, 102.0);
        assert_relative_eq!(psi_mass(&t, 5.0, 1.0).unwrap(), m5, max_relative = 1e-8);
        let ratio = |s: f64| psi_mass(&t, s, 1.0).unwrap() / (1.0 + s).powf(mu0 / 2.0);
        assert_relative_eq!(ratio(10.0), ratio10, max_relative = 1e-8);
        let worst = (0..=1000).map(|k| ratio(k as f64 * 0.1)).fold(0.0, f64::max);
        assert_relative_eq!(worst, max_ratio, max_relative = 1e-8);
        assert_relative_eq!(ratio(100.0), max_ratio, max_relative = 1e-8);
    }
}

#[test]
fn sign_integral_of_smooth_bump() {
    let g = Grid::<f64>::covering(1.5, 1e-3).unwrap();
    let u0 = g.sample(|x| {
        if x.abs() < 1.0 {
            std::f64::consts::E * (-1.0 / (1.0 - x * x)).exp()
        } else {
            0.0
        }
    });
    let t = table(1.0, 2.0);
    let s = check_sign_condition(&u0, &g.zeros(), &t).unwrap();
    assert_relative_eq!(s, 2.70830619565223, max_relative = 1e-5);
}

#[test]
fn double_bump_is_positive_against_phi() {
    let g = Grid::<f64>::covering(1.5, 1e-4).unwrap();
    let u1: Field<f64> = g.sample(|x| double_bump(x, 1.0));
    let t = table(1.0, 2.0);
    let s = check_sign_condition(&g.zeros(), &u1, &t).unwrap();
    assert_relative_eq!(s, 0.236296050949056, max_relative = 1e-7);
    let flat = dampwave::scalar::trapezoid(u1.samples(), g.dx());
    assert!(flat.abs() < 1e-12);
}

#[test]
fn formula_substitutions() {
    assert_relative_eq!(theory_slope(2.0, 0.5).unwrap(), -4.0 / 3.0);
    assert_relative_eq!(theory_slope(2.0, 1.0).unwrap(), -2.0);
    assert_relative_eq!(theory_slope(3.0, 0.5).unwrap(), -4.0);
    assert_eq!(default_a(0.5, 1.0), 2.0);
    assert_eq!(default_a(2.0, 1.0), 1.25);
    assert_relative_eq!(default_mu(0.5), 0.495);
    assert_eq!(decay_alpha(2.0, default_mu(2.0)), 1.0);
    assert_relative_eq!(decay_alpha(0.5, 0.495), 0.495);
    assert_relative_eq!(threshold_t0(1.0, 0.5, 1.0), 1.0);
    assert_relative_eq!(threshold_t1(2.0, 1.0), 1.0);
}
