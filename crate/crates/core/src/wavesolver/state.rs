use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::grid::{central_diff, second_diff, Field, Grid};
use crate::io::CsvWriter;
use crate::potential::PotentialParams;
use crate::scalar::Scalar;

use super::Nonlinearity;

/// `(u, u_t)` on one grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState<T> {
    u: Field<T>,
    v: Field<T>,
    t: T,
}

impl<T: Scalar> WaveState<T> {
    pub fn new(u: Field<T>, v: Field<T>, t: T) -> Result<Self> {
        if !u.grid().same_as(v.grid()) {
            return Err(Error::GridMismatch("u and v are sampled on different grids".into()));
        }
        if !(t >= T::zero()) {
            return Err(Error::param("t", format!("time must be >= 0, got {t}")));
        }
        Ok(WaveState { u, v, t })
    }

    pub fn zero(grid: Grid<T>, t: T) -> Self {
        WaveState {
            u: grid.zeros(),
            v: grid.zeros(),
            t,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        self.u.grid()
    }

    pub fn u(&self) -> &Field<T> {
        &self.u
    }

    pub fn v(&self) -> &Field<T> {
        &self.v
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn into_fields(self) -> (Field<T>, Field<T>) {
        (self.u, self.v)
    }

    pub fn ux(&self) -> Vec<T> {
        central_diff(self.u.samples(), self.grid().dx())
    }

    /// `u_tt = u_xx - V u_t + f(u_t, u_x)` from the equation itself.
    pub fn acceleration(&self, params: &PotentialParams<T>, nonlinearity: &Nonlinearity) -> Vec<T> {
        let grid = self.grid();
        let d2 = second_diff(self.u.samples(), grid.dx());
        let ux = self.ux();
        let f = nonlinearity.evaluator::<T>();
        let v = self.v.samples();
        (0..grid.nx())
            .map(|i| {
                if i == 0 || i + 1 == grid.nx() {
                    return T::zero();
                }
                d2[i] - params.eval(grid.x(i)) * v[i] + f.eval(v[i], ux[i])
            })
            .collect()
    }

    /// Largest `|x_i|` where `|u|` or `|v|` exceeds `tol`; 0 if there is none.
    pub fn support_radius(&self, tol: T) -> T {
        support_radius(self, tol)
    }

    /// CSV with columns `x, u, v`.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<W> {
        let mut w = CsvWriter::new(out, &["x", "u", "v"])?;
        let grid = self.grid();
        for i in 0..grid.nx() {
            w.row_f64(&[
                grid.x(i).as_f64(),
                self.u.samples()[i].as_f64(),
                self.v.samples()[i].as_f64(),
            ])?;
        }
        w.finish()
    }
}

pub fn support_radius<T: Scalar>(state: &WaveState<T>, tol: T) -> T {
    let grid = state.grid();
    let (u, v) = (state.u.samples(), state.v.samples());
    let hit = |i: usize| u[i].abs() > tol || v[i].abs() > tol || u[i].is_nan() || v[i].is_nan();
    let c = grid.center();
    let right = (c..grid.nx()).rev().find(|&i| hit(i)).map(|i| grid.x(i).abs());
    let left = (0..=c).find(|&i| hit(i)).map(|i| grid.x(i).abs());
    match (left, right) {
        (Some(a), Some(b)) => a.max(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => T::zero(),
    }
}
