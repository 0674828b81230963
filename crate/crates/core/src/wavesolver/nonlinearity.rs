use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Source term `f(v, u_x)` with `v = u_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    None,
    /// `|v|^p`
    AbsP { p: f64 },
    /// `|v|^{p-1} v`, zero at `v = 0`
    SignedP { p: f64 },
    /// `|u_x|^q`
    SpaceQ { q: f64 },
    /// `|v|^p |u_x|^q`
    Mixed { p: f64, q: f64 },
}

fn check_exponent(name: &'static str, e: f64) -> Result<()> {
    if e > 1.0 && e.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("exponent must be finite and > 1, got {e}")))
    }
}

/// `|x|^e`, through `powi` when `e` is a small integer.
#[inline]
fn abs_pow<T: Scalar>(x: T, e: T, int_e: Option<i32>) -> T {
    match int_e {
        Some(n) => x.abs().powi(n),
        None => x.abs().powf(e),
    }
}

fn as_int(e: f64) -> Option<i32> {
    (e.fract() == 0.0 && e.abs() <= 64.0).then_some(e as i32)
}

impl Nonlinearity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Nonlinearity::None => Ok(()),
            Nonlinearity::AbsP { p } | Nonlinearity::SignedP { p } => check_exponent("p", p),
            Nonlinearity::SpaceQ { q } => check_exponent("q", q),
            Nonlinearity::Mixed { p, q } => {
                check_exponent("p", p)?;
                check_exponent("q", q)
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Nonlinearity::None)
    }

    /// Power `p` of the time-derivative factor, if present.
    pub fn p(&self) -> Option<f64> {
        match *self {
            Nonlinearity::AbsP { p } | Nonlinearity::SignedP { p } | Nonlinearity::Mixed { p, .. } => Some(p),
            _ => None,
        }
    }

    pub fn q(&self) -> Option<f64> {
        match *self {
            Nonlinearity::SpaceQ { q } | Nonlinearity::Mixed { q, .. } => Some(q),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::None => "none",
            Nonlinearity::AbsP { .. } => "abs_p",
            Nonlinearity::SignedP { .. } => "signed_p",
            Nonlinearity::SpaceQ { .. } => "space_q",
            Nonlinearity::Mixed { .. } => "mixed",
        }
    }

    /// Builds a kind from its name and the exponents that apply to it.
    pub fn from_parts(name: &str, p: Option<f64>, q: Option<f64>) -> Result<Self> {
        let need = |e: Option<f64>, n: &'static str| e.ok_or_else(|| Error::param(n, format!("required by `{name}`")));
        let k = match name {
            "none" => Nonlinearity::None,
            "abs_p" => Nonlinearity::AbsP { p: need(p, "p")? },
            "signed_p" => Nonlinearity::SignedP { p: need(p, "p")? },
            "space_q" => Nonlinearity::SpaceQ { q: need(q, "q")? },
            "mixed" => Nonlinearity::Mixed {
                p: need(p, "p")?,
                q: need(q, "q")?,
            },
            other => {
                return Err(Error::param(
                    "nonlinearity",
                    format!("unknown kind `{other}` (none, abs_p, signed_p, space_q, mixed)"),
                ))
            }
        };
        k.validate()?;
        Ok(k)
    }

    /// Evaluator with exponents converted once to the scalar type.
    pub fn evaluator<T: Scalar>(&self) -> SourceTerm<T> {
        let (p, q) = (self.p().unwrap_or(1.0), self.q().unwrap_or(1.0));
        SourceTerm {
            kind: *self,
            p: T::lit(p),
            q: T::lit(q),
            pi: as_int(p),
            qi: as_int(q),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Nonlinearity::None => write!(f, "none"),
            Nonlinearity::AbsP { p } => write!(f, "|u_t|^{p}"),
            Nonlinearity::SignedP { p } => write!(f, "|u_t|^{}u_t", p - 1.0),
            Nonlinearity::SpaceQ { q } => write!(f, "|u_x|^{q}"),
            Nonlinearity::Mixed { p, q } => write!(f, "|u_t|^{p}|u_x|^{q}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SourceTerm<T> {
    kind: Nonlinearity,
    p: T,
    q: T,
    pi: Option<i32>,
    qi: Option<i32>,
}

impl<T: Scalar> SourceTerm<T> {
    pub fn kind(&self) -> Nonlinearity {
        self.kind
    }

    #[inline]
    pub fn eval(&self, v: T, ux: T) -> T {
        match self.kind {
            Nonlinearity::None => T::zero(),
            Nonlinearity::AbsP { .. } => abs_pow(v, self.p, self.pi),
            Nonlinearity::SignedP { .. } => {
                if v == T::zero() {
                    T::zero()
                } else {
                    abs_pow(v, self.p, self.pi) * v.signum()
                }
            }
            Nonlinearity::SpaceQ { .. } => abs_pow(ux, self.q, self.qi),
            Nonlinearity::Mixed { .. } => abs_pow(v, self.p, self.pi) * abs_pow(ux, self.q, self.qi),
        }
    }

    /// Whether `f` reads `u_x`.
    pub fn uses_gradient(&self) -> bool {
        matches!(self.kind, Nonlinearity::SpaceQ { .. } | Nonlinearity::Mixed { .. })
    }
}
