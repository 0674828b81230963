use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Scalar;

/// Shape of the initial data before scaling by `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `u0 = B`, `u1 = 0` with `B(x) = cos^4(pi x / (2 R0))` on `|x| < R0`.
    Bump,
    /// `u0 = 0`, `u1 = B`.
    VelocityBump,
    /// `u0 = 0`, `u1 = D` where `D` is two bumps of radius `R0/3` at `+-2R0/3` minus
    /// twice the same bump at the origin: zero mean, positive against `phi`.
    DoubleBump,
    /// Caller samples on the target grid; must vanish outside `(-R0, R0)`.
    Custom { u0: Vec<f64>, u1: Vec<f64> },
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Bump => "bump",
            Profile::VelocityBump => "velocity_bump",
            Profile::DoubleBump => "double_bump",
            Profile::Custom { .. } => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "bump" => Ok(Profile::Bump),
            "velocity_bump" => Ok(Profile::VelocityBump),
            "double_bump" => Ok(Profile::DoubleBump),
            other => Err(Error::param(
                "profile",
                format!("unknown profile `{other}` (bump, velocity_bump, double_bump)"),
            )),
        }
    }
}

/// `cos^4(pi x / (2r))` on `|x| < r`, zero elsewhere; `C^3` across `|x| = r`.
#[inline]
pub fn bump<T: Scalar>(x: T, r: T) -> T {
    if x.abs() >= r {
        return T::zero();
    }
    let c = (T::PI() * x / (T::lit(2.0) * r)).cos();
    let c2 = c * c;
    c2 * c2
}

pub fn double_bump<T: Scalar>(x: T, r0: T) -> T {
    let r = r0 / T::lit(3.0);
    let off = T::lit(2.0) * r;
    bump(x - off, r) + bump(x + off, r) - T::lit(2.0) * bump(x, r)
}

/// Smooth multiplicative modulation `1 + amplitude * sum_k c_k cos(k pi x / (2 R0))`,
/// `k = 1..4`, with `c_k` uniform in `[-1, 1]` from a ChaCha stream. Preserves the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub seed: u64,
    pub amplitude: f64,
}

impl Perturbation {
    fn coefficients(&self) -> [f64; 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        std::array::from_fn(|_| rng.gen_range(-1.0..=1.0))
    }

    pub fn apply<T: Scalar>(&self, field: &mut Field<T>, r0: T) {
        let c = self.coefficients();
        let grid = *field.grid();
        let amp = T::lit(self.amplitude);
        for (i, s) in field.samples_mut().iter_mut().enumerate() {
            if *s == T::zero() {
                continue;
            }
            let arg = T::PI() * grid.x(i) / (T::lit(2.0) * r0);
            let m: T = c
                .iter()
                .enumerate()
                .map(|(k, &ck)| T::lit(ck) * (T::from_usize_lossy(k + 1) * arg).cos())
                .sum();
            *s *= T::one() + amp * m;
        }
    }
}

/// Samples `(eps u0, eps u1)` on `grid`.
pub fn make_initial_data<T: Scalar>(profile: &Profile, r0: T, eps: T, grid: &Grid<T>) -> Result<(Field<T>, Field<T>)> {
    if !(r0 > T::zero()) || r0 >= grid.half_width() {
        return Err(Error::param(
            "R0",
            format!(
                "support radius must lie in (0, L) with L = {}, got {r0}",
                grid.half_width()
            ),
        ));
    }
    if !(eps >= T::zero()) || !eps.is_finite() {
        return Err(Error::param(
            "eps",
            format!("amplitude must be finite and >= 0, got {eps}"),
        ));
    }
    let zero = grid.zeros();
    let (u0, u1) = match profile {
        Profile::Bump => (grid.sample(|x| eps * bump(x, r0)), zero),
        Profile::VelocityBump => (zero, grid.sample(|x| eps * bump(x, r0))),
        Profile::DoubleBump => (zero, grid.sample(|x| eps * double_bump(x, r0))),
        Profile::Custom { u0, u1 } => {
            let lift = |s: &[f64]| -> Result<Field<T>> {
                let samples: Vec<T> = s.iter().map(|&v| eps * T::lit(v)).collect();
                let f = Field::from_samples(*grid, samples)?;
                let outside = f
                    .samples()
                    .iter()
                    .enumerate()
                    .any(|(i, &v)| v != T::zero() && grid.x(i).abs() >= r0);
                if outside {
                    return Err(Error::DataSupport { radius: r0.as_f64() });
                }
                Ok(f)
            };
            (lift(u0)?, lift(u1)?)
        }
    };
    Ok((u0, u1))
}
