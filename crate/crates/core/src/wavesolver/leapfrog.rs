use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Scalar;

use super::{Scheme, SolverConfig, SourceTerm, WaveState};

/// Three-level scheme
/// `(u+ - 2u + u-)/dt^2 - D2 u + V (u+ - u-)/(2dt) = f`,
/// solved pointwise for `u+`.
///
/// `f` is first evaluated with the backward velocity `(u - u-)/dt`; with the corrector on
/// it is re-evaluated once with the centred velocity `(u+ - u-)/(2dt)` of that prediction.
///
/// Nodes outside the numerical domain of dependence of the data are exactly zero and are
/// skipped: the step producing level `n + 1` only touches nodes within `n + 1` cells of
/// the initial support.
#[derive(Debug, Clone)]
pub struct Leapfrog<T> {
    grid: Grid<T>,
    dt: T,
    one_minus_a: Vec<T>,
    inv_one_plus_a: Vec<T>,
    v_damp: Vec<T>,
    source: SourceTerm<T>,
    corrector: bool,
    prev: Vec<T>,
    curr: Vec<T>,
    next: Vec<T>,
    u1: Vec<T>,
    /// Inclusive index range of the nonzero initial data.
    support: Option<(usize, usize)>,
    level: usize,
    max_v: T,
}

impl<T: Scalar> Leapfrog<T> {
    pub fn new(u0: &Field<T>, u1: &Field<T>, config: &SolverConfig<T>) -> Result<Self> {
        let grid = *u0.grid();
        if !grid.same_as(u1.grid()) {
            return Err(Error::GridMismatch("u0 and u1 are sampled on different grids".into()));
        }
        if config.scheme != Scheme::Leapfrog {
            return Err(Error::param(
                "scheme",
                "leapfrog stepper requested for a different scheme",
            ));
        }
        config.validate(&grid)?;
        let params = config.potential()?;
        let dt = config.dt(&grid);
        let n = grid.nx();
        let v_damp = params.sample(&grid.nodes());
        let a: Vec<T> = v_damp.iter().map(|&v| v * dt * T::lit(0.5)).collect();
        let source = config.nonlinearity.evaluator::<T>();

        let nz = |i: &usize| u0.samples()[*i] != T::zero() || u1.samples()[*i] != T::zero();
        let support = (0..n).find(nz).map(|lo| (lo, (0..n).rev().find(nz).unwrap_or(lo)));

        let mut s = Leapfrog {
            grid,
            dt,
            one_minus_a: a.iter().map(|&a| T::one() - a).collect(),
            inv_one_plus_a: a.iter().map(|&a| T::one() / (T::one() + a)).collect(),
            v_damp,
            source,
            corrector: config.corrector && !config.nonlinearity.is_linear(),
            prev: vec![T::zero(); n],
            curr: u0.samples().to_vec(),
            next: vec![T::zero(); n],
            u1: u1.samples().to_vec(),
            support,
            level: 0,
            max_v: u1.max_abs(),
        };
        s.bootstrap();
        Ok(s)
    }

    fn window(&self, reach: usize) -> Option<(usize, usize)> {
        let n = self.grid.nx();
        let (lo, hi) = self.support?;
        let lo = lo.saturating_sub(reach).max(1);
        let hi = (hi + reach).min(n - 2);
        (lo <= hi).then_some((lo, hi))
    }

    /// `u^1 = u^0 + dt u1 + dt^2/2 (D2 u^0 - V u1 + f(u1, D0 u^0))`.
    fn bootstrap(&mut self) {
        let Some((lo, hi)) = self.window(1) else {
            return;
        };
        let dx = self.grid.dx();
        let (inv_dx2, inv_2dx) = (T::one() / (dx * dx), T::one() / (T::lit(2.0) * dx));
        let half_dt2 = T::lit(0.5) * self.dt * self.dt;
        let u = &self.curr;
        for i in lo..=hi {
            let d2 = (u[i + 1] - T::lit(2.0) * u[i] + u[i - 1]) * inv_dx2;
            let ux = (u[i + 1] - u[i - 1]) * inv_2dx;
            let w = self.u1[i];
            self.next[i] = u[i] + self.dt * w + half_dt2 * (d2 - self.v_damp[i] * w + self.source.eval(w, ux));
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn t(&self) -> T {
        T::from_usize_lossy(self.level) * self.dt
    }

    /// `max |u_t|` at the current level.
    pub fn max_abs_v(&self) -> T {
        self.max_v
    }

    /// `u_t` at the current level: the initial velocity at level 0, the centred
    /// difference afterwards.
    pub fn velocity(&self) -> Vec<T> {
        if self.level == 0 {
            return self.u1.clone();
        }
        let inv = T::one() / (T::lit(2.0) * self.dt);
        self.next.iter().zip(&self.prev).map(|(&a, &b)| (a - b) * inv).collect()
    }

    pub fn state(&self) -> WaveState<T> {
        let u = Field::from_samples(self.grid, self.curr.clone()).expect("buffer length matches grid");
        let v = Field::from_samples(self.grid, self.velocity()).expect("buffer length matches grid");
        WaveState::new(u, v, self.t()).expect("fields share the grid")
    }

    /// Moves to the next level and returns `max |u_t|` there.
    pub fn advance(&mut self) -> Result<T> {
        std::mem::swap(&mut self.prev, &mut self.curr);
        std::mem::swap(&mut self.curr, &mut self.next);
        self.level += 1;
        // next now holds level - 2, which lies inside the new window
        let Some((lo, hi)) = self.window(self.level + 1) else {
            self.max_v = T::zero();
            return Ok(T::zero());
        };
        let dx = self.grid.dx();
        let dt = self.dt;
        let (inv_dx2, inv_2dx) = (T::one() / (dx * dx), T::one() / (T::lit(2.0) * dx));
        let (inv_dt, inv_2dt) = (T::one() / dt, T::one() / (T::lit(2.0) * dt));
        let dt2 = dt * dt;
        let two = T::lit(2.0);
        let grad = self.source.uses_gradient();
        let linear = self.source.kind().is_linear();
        let (u, um) = (&self.curr, &self.prev);
        let mut max_v = T::zero();
        for i in lo..=hi {
            let d2 = (u[i + 1] - two * u[i] + u[i - 1]) * inv_dx2;
            let base = two * u[i] - self.one_minus_a[i] * um[i] + dt2 * d2;
            let mut up = base * self.inv_one_plus_a[i];
            if !linear {
                let ux = if grad {
                    (u[i + 1] - u[i - 1]) * inv_2dx
                } else {
                    T::zero()
                };
                let vb = (u[i] - um[i]) * inv_dt;
                up = (base + dt2 * self.source.eval(vb, ux)) * self.inv_one_plus_a[i];
                if self.corrector {
                    let vc = (up - um[i]) * inv_2dt;
                    up = (base + dt2 * self.source.eval(vc, ux)) * self.inv_one_plus_a[i];
                }
            }
            self.next[i] = up;
            let v = ((up - um[i]) * inv_2dt).abs();
            if !(v <= max_v) {
                max_v = v;
            }
        }
        self.max_v = max_v;
        if !max_v.is_finite() {
            return Err(Error::NonFinite { t: self.t().as_f64() });
        }
        Ok(max_v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavesolver::{make_initial_data, Nonlinearity, Profile};

    #[test]
    fn zero_data_stays_zero() {
        let c = SolverConfig::new(1.0, Nonlinearity::AbsP { p: 2.0 }, 1.0, 3.0);
        let g = c.grid_for(0.1).unwrap();
        let mut s = Leapfrog::new(&g.zeros(), &g.zeros(), &c).unwrap();
        for _ in 0..30 {
            assert_eq!(s.advance().unwrap(), 0.0);
        }
        let st = s.state();
        assert_eq!(st.u().max_abs(), 0.0);
        assert_eq!(st.v().max_abs(), 0.0);
    }

    #[test]
    fn window_matches_full_update() {
        // the windowed update must agree bitwise with a full-grid reference
        let c = SolverConfig::new(0.7, Nonlinearity::SignedP { p: 2.0 }, 1.0, 4.0).with_cfl(0.8);
        let g = c.grid_for(0.05).unwrap();
        let (u0, u1) = make_initial_data(&Profile::Bump, 1.0, 0.5, &g).unwrap();
        let mut s = Leapfrog::new(&u0, &u1, &c).unwrap();
        let mut full = s.clone();
        full.support = Some((0, g.nx() - 1));
        for _ in 0..c.steps(&g) {
            s.advance().unwrap();
            full.advance().unwrap();
            assert_eq!(s.curr, full.curr);
            assert_eq!(s.next, full.next);
        }
    }

    #[test]
    fn rejects_wrong_scheme_and_grids() {
        let c = SolverConfig::linear(1.0, 1.0, 1.0).with_scheme(Scheme::OracleRk);
        let g = c.grid_for(0.1).unwrap();
        assert!(Leapfrog::new(&g.zeros(), &g.zeros(), &c).is_err());
        let c = SolverConfig::linear(1.0, 1.0, 1.0);
        let h = c.grid_for(0.05).unwrap();
        assert!(matches!(
            Leapfrog::new(&g.zeros(), &h.zeros(), &c),
            Err(Error::GridMismatch(_))
        ));
    }
}
