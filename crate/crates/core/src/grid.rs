//! Uniform grids on `[-L, L]` and sampled fields.

use crate::error::{Error, Result};
use crate::scalar::{trapezoid, Scalar};

/// Uniform grid `x_i = -L + i dx`, `i = 0..nx`, with `nx` odd so that `x = 0` is a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    half_width: T,
    nx: usize,
    dx: T,
}

impl<T: Scalar> Grid<T> {
    pub fn new(half_width: T, nx: usize) -> Result<Self> {
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(Error::param(
                "L",
                format!("half-width must be positive, got {half_width}"),
            ));
        }
        if nx < 3 || nx.is_multiple_of(2) {
            return Err(Error::param("nx", format!("node count must be odd and >= 3, got {nx}")));
        }
        let dx = T::lit(2.0) * half_width / T::from_usize_lossy(nx - 1);
        Ok(Grid { half_width, nx, dx })
    }

    /// Grid on `[-L, L]` whose spacing is `target_dx` rounded so that `L / dx` is an integer.
    pub fn with_spacing(half_width: T, target_dx: T) -> Result<Self> {
        if !(target_dx > T::zero()) {
            return Err(Error::param("dx", format!("spacing must be positive, got {target_dx}")));
        }
        let cells_per_side = (half_width / target_dx).ceil().to_usize().unwrap_or(0).max(1);
        Grid::new(half_width, 2 * cells_per_side + 1)
    }

    /// Grid with exact spacing `dx`; `L` is enlarged to the next multiple of `dx`.
    pub fn covering(min_half_width: T, dx: T) -> Result<Self> {
        if !(dx > T::zero()) {
            return Err(Error::param("dx", format!("spacing must be positive, got {dx}")));
        }
        let cells = (min_half_width / dx).ceil().to_usize().unwrap_or(0).max(1);
        let grid = Grid::new(dx * T::from_usize_lossy(cells), 2 * cells + 1)?;
        Ok(Grid { dx, ..grid })
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn center(&self) -> usize {
        (self.nx - 1) / 2
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        // measured from the center node so that the grid is exactly symmetric
        T::from_f64(i as f64 - self.center() as f64).unwrap() * self.dx
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn sample(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field {
            grid: *self,
            samples: (0..self.nx).map(|i| f(self.x(i))).collect(),
        }
    }

    pub fn zeros(&self) -> Field<T> {
        Field {
            grid: *self,
            samples: vec![T::zero(); self.nx],
        }
    }

    pub(crate) fn same_as(&self, other: &Grid<T>) -> bool {
        self.nx == other.nx && self.dx == other.dx
    }
}

/// A function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid<T>,
    samples: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn from_samples(grid: Grid<T>, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.nx() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} nodes",
                samples.len(),
                grid.nx()
            )));
        }
        Ok(Field { grid, samples })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [T] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn scaled(&self, a: T) -> Field<T> {
        Field {
            grid: self.grid,
            samples: self.samples.iter().map(|&s| a * s).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: T, other: &Field<T>, b: T) -> Result<Field<T>> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Ok(Field {
            grid: self.grid,
            samples,
        })
    }

    pub fn l2_norm(&self) -> T {
        l2_norm(&self.samples, self.grid.dx)
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.samples)
    }
}

pub(crate) fn l2_norm<T: Scalar>(samples: &[T], dx: T) -> T {
    let sq: Vec<T> = samples.iter().map(|&s| s * s).collect();
    trapezoid(&sq, dx).sqrt()
}

pub(crate) fn max_abs<T: Scalar>(samples: &[T]) -> T {
    samples.iter().fold(T::zero(), |m, &s| {
        let a = s.abs();
        if a > m || a.is_nan() {
            a
        } else {
            m
        }
    })
}

/// Central first difference at interior nodes, zero at the two boundary nodes.
pub fn central_diff<T: Scalar>(u: &[T], dx: T) -> Vec<T> {
    let n = u.len();
    let mut d = vec![T::zero(); n];
    let inv = T::one() / (T::lit(2.0) * dx);
    for i in 1..n.saturating_sub(1) {
        d[i] = (u[i + 1] - u[i - 1]) * inv;
    }
    d
}

/// Standard three-point second difference at interior nodes, zero at the boundary nodes.
pub fn second_diff<T: Scalar>(u: &[T], dx: T) -> Vec<T> {
    let n = u.len();
    let mut d = vec![T::zero(); n];
    let inv = T::one() / (dx * dx);
    for i in 1..n.saturating_sub(1) {
        d[i] = (u[i + 1] - T::lit(2.0) * u[i] + u[i - 1]) * inv;
    }
    d
}
