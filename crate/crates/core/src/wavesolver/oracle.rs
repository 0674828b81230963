use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Scalar;

use super::{SolverConfig, SourceTerm, WaveState, ORACLE_SUBSTEPS};

/// Reference integrator: `u' = v`, `v' = D2 u - V v + f(v, D0 u)` with classical RK4 at
/// `dt / 20`, Dirichlet nodes held at zero.
#[derive(Debug, Clone)]
pub struct OracleRk<T> {
    grid: Grid<T>,
    dt: T,
    h: T,
    v_damp: Vec<T>,
    source: SourceTerm<T>,
    u: Vec<T>,
    v: Vec<T>,
    level: usize,
    k: [(Vec<T>, Vec<T>); 4],
    stage: (Vec<T>, Vec<T>),
}

impl<T: Scalar> OracleRk<T> {
    pub fn new(u0: &Field<T>, u1: &Field<T>, config: &SolverConfig<T>) -> Result<Self> {
        let grid = *u0.grid();
        if !grid.same_as(u1.grid()) {
            return Err(Error::GridMismatch("u0 and u1 are sampled on different grids".into()));
        }
        config.validate(&grid)?;
        let params = config.potential()?;
        let dt = config.dt(&grid);
        let n = grid.nx();
        let z = || (vec![T::zero(); n], vec![T::zero(); n]);
        let mut u = u0.samples().to_vec();
        let mut v = u1.samples().to_vec();
        for w in [&mut u, &mut v] {
            w[0] = T::zero();
            w[n - 1] = T::zero();
        }
        Ok(OracleRk {
            grid,
            dt,
            h: dt / T::from_usize_lossy(ORACLE_SUBSTEPS),
            v_damp: params.sample(&grid.nodes()),
            source: config.nonlinearity.evaluator(),
            u,
            v,
            level: 0,
            k: [z(), z(), z(), z()],
            stage: z(),
        })
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

    pub fn max_abs_v(&self) -> T {
        crate::grid::max_abs(&self.v)
    }

    pub fn state(&self) -> WaveState<T> {
        let u = Field::from_samples(self.grid, self.u.clone()).expect("buffer length matches grid");
        let v = Field::from_samples(self.grid, self.v.clone()).expect("buffer length matches grid");
        WaveState::new(u, v, self.t()).expect("fields share the grid")
    }

    fn rhs(&self, u: &[T], v: &[T], du: &mut [T], dv: &mut [T]) {
        let n = u.len();
        let dx = self.grid.dx();
        let (inv_dx2, inv_2dx) = (T::one() / (dx * dx), T::one() / (T::lit(2.0) * dx));
        du[0] = T::zero();
        dv[0] = T::zero();
        du[n - 1] = T::zero();
        dv[n - 1] = T::zero();
        for i in 1..n - 1 {
            let d2 = (u[i + 1] - T::lit(2.0) * u[i] + u[i - 1]) * inv_dx2;
            let ux = (u[i + 1] - u[i - 1]) * inv_2dx;
            du[i] = v[i];
            dv[i] = d2 - self.v_damp[i] * v[i] + self.source.eval(v[i], ux);
        }
    }

    fn substep(&mut self) {
        let h = self.h;
        let half = T::lit(0.5) * h;
        let n = self.u.len();
        let mut k = std::mem::take(&mut self.k);
        let mut stage = std::mem::take(&mut self.stage);
        for s in 0..4 {
            if s == 0 {
                self.rhs(&self.u, &self.v, &mut k[0].0, &mut k[0].1);
                continue;
            }
            let w = if s == 3 { h } else { half };
            for i in 0..n {
                stage.0[i] = self.u[i] + w * k[s - 1].0[i];
                stage.1[i] = self.v[i] + w * k[s - 1].1[i];
            }
            let (du, dv) = &mut k[s];
            self.rhs(&stage.0, &stage.1, du, dv);
        }
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..n {
            self.u[i] += sixth * (k[0].0[i] + two * (k[1].0[i] + k[2].0[i]) + k[3].0[i]);
            self.v[i] += sixth * (k[0].1[i] + two * (k[1].1[i] + k[2].1[i]) + k[3].1[i]);
        }
        self.k = k;
        self.stage = stage;
    }

    pub fn advance(&mut self) -> Result<T> {
        for _ in 0..ORACLE_SUBSTEPS {
            self.substep();
        }
        self.level += 1;
        let m = self.max_abs_v();
        if !m.is_finite() {
            return Err(Error::NonFinite { t: self.t().as_f64() });
        }
        Ok(m)
    }
}
