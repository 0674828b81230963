use serde::{Deserialize, Serialize};

use super::Nonlinearity;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potential::PotentialParams;
use crate::scalar::Scalar;

pub const DEFAULT_CFL: f64 = 1.0;
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e8;
/// Substeps per leapfrog step used by the reference integrator.
pub const ORACLE_SUBSTEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Three-level scheme with midpoint-averaged damping.
    #[default]
    Leapfrog,
    /// Method of lines with classical RK4 at `dt / 20`.
    OracleRk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub cfl: T,
    pub scheme: Scheme,
    pub t_end: T,
    pub blowup_threshold: T,
    pub mu0: T,
    pub nonlinearity: Nonlinearity,
    /// Data are supported in `(-r0, r0)`.
    pub r0: T,
    /// Re-evaluate `f` with the centred velocity of the predicted level.
    pub corrector: bool,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(mu0: T, nonlinearity: Nonlinearity, r0: T, t_end: T) -> Self {
        SolverConfig {
            cfl: T::lit(DEFAULT_CFL),
            scheme: Scheme::Leapfrog,
            t_end,
            blowup_threshold: T::lit(DEFAULT_BLOWUP_THRESHOLD),
            mu0,
            nonlinearity,
            r0,
            corrector: true,
        }
    }

    pub fn linear(mu0: T, r0: T, t_end: T) -> Self {
        Self::new(mu0, Nonlinearity::None, r0, t_end)
    }

    pub fn with_cfl(mut self, cfl: T) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_threshold(mut self, threshold: T) -> Self {
        self.blowup_threshold = threshold;
        self
    }

    pub fn with_corrector(mut self, on: bool) -> Self {
        self.corrector = on;
        self
    }

    pub fn potential(&self) -> Result<PotentialParams<T>> {
        PotentialParams::new(self.mu0)
    }

    pub fn dt(&self, grid: &Grid<T>) -> T {
        self.cfl * grid.dx()
    }

    /// Number of steps reaching `t_end` (rounded to the nearest step).
    pub fn steps(&self, grid: &Grid<T>) -> usize {
        (self.t_end / self.dt(grid)).round().to_usize().unwrap_or(0)
    }

    /// Smallest half-width satisfying `L >= r0 + t_end + 4 dx`.
    pub fn required_half_width(&self, dx: T) -> T {
        self.r0 + self.t_end + T::lit(4.0) * dx
    }

    pub fn validate(&self, grid: &Grid<T>) -> Result<()> {
        if !(self.cfl > T::zero() && self.cfl <= T::one()) {
            return Err(Error::Cfl { cfl: self.cfl.as_f64() });
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return Err(Error::param(
                "t_end",
                format!("must be finite and >= 0, got {}", self.t_end),
            ));
        }
        if !(self.blowup_threshold > T::zero()) {
            return Err(Error::param("blowup_threshold", "must be positive"));
        }
        if !(self.r0 > T::zero()) {
            return Err(Error::param(
                "R0",
                format!("support radius must be positive, got {}", self.r0),
            ));
        }
        self.potential()?;
        self.nonlinearity.validate()?;
        let required = self.required_half_width(grid.dx());
        // one part in 1e9 absorbs rounding in grids built from the same numbers
        if grid.half_width() < required * (T::one() - T::lit(1e-9)) {
            return Err(Error::Containment {
                required: required.as_f64(),
                half_width: grid.half_width().as_f64(),
            });
        }
        Ok(())
    }

    /// Smallest grid with spacing `dx` satisfying containment.
    pub fn grid_for(&self, dx: T) -> Result<Grid<T>> {
        Grid::covering(self.required_half_width(dx), dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment_is_enforced() {
        let c = SolverConfig::linear(1.0, 1.0, 10.0);
        let ok = c.grid_for(0.125).unwrap();
        assert!(c.validate(&ok).is_ok());
        let small = Grid::new(11.0, 177).unwrap();
        assert!(matches!(c.validate(&small), Err(Error::Containment { .. })));
    }

    #[test]
    fn cfl_range() {
        let g = Grid::new(20.0, 321).unwrap();
        let c = SolverConfig::linear(1.0, 1.0, 1.0);
        assert!(c.with_cfl(1.0).validate(&g).is_ok());
        assert!(matches!(c.with_cfl(1.01).validate(&g), Err(Error::Cfl { .. })));
        assert!(matches!(c.with_cfl(0.0).validate(&g), Err(Error::Cfl { .. })));
    }

    #[test]
    fn steps_round_to_nearest() {
        let g = Grid::covering(20.0, 0.1).unwrap();
        let c = SolverConfig::linear(1.0, 1.0, 1.0).with_cfl(0.9);
        assert_eq!(c.steps(&g), 11);
    }
}
