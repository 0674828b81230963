//! The damping coefficient `V(x) = mu0 (1 + x^2)^{-1/2}` and the even positive solution
//! `phi` of `phi'' = (1 + V) phi`, `phi(0) = 1`, `phi'(0) = 0`, which together with
//! `e^{-t}` forms the test function used by the blow-up argument.
//!
//! `phi` grows like `(1 + r)^{mu0/2} e^r`, so [`PhiTable`] keeps `ln phi` and the
//! logarithmic derivative `phi'/phi` at every node and switches its integrator to those
//! variables before the linear values approach the largest finite scalar.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::grid::{second_diff, Field};
use crate::io::CsvWriter;
use crate::scalar::{trapezoid, Scalar};

/// Largest table step accepted by [`solve_phi`].
pub const MAX_PHI_STEP: f64 = 1e-3;
/// Default table step.
pub const DEFAULT_PHI_STEP: f64 = 1e-4;
/// Minimum table reach for [`check_phi_growth`].
pub const GROWTH_CHECK_MIN_RANGE: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams<T> {
    mu0: T,
}

impl<T: Scalar> PotentialParams<T> {
    /// `mu0 = 0` is accepted as the undamped limit.
    pub fn new(mu0: T) -> Result<Self> {
        if !(mu0 >= T::zero()) || !mu0.is_finite() {
            return Err(Error::param(
                "mu0",
                format!("damping strength must be finite and >= 0, got {mu0}"),
            ));
        }
        Ok(PotentialParams { mu0 })
    }

    pub fn mu0(&self) -> T {
        self.mu0
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        eval_potential(x, self)
    }

    pub fn sample(&self, nodes: &[T]) -> Vec<T> {
        nodes.iter().map(|&x| self.eval(x)).collect()
    }
}

/// `mu0 / sqrt(1 + x^2)`, evaluated as `mu0 / (|x| sqrt(1 + x^-2))` for large `|x|`
/// so that `x^2` never overflows.
#[inline]
pub fn eval_potential<T: Scalar>(x: T, params: &PotentialParams<T>) -> T {
    let a = x.abs();
    if a > T::one() {
        let inv = T::one() / a;
        params.mu0 * inv / (T::one() + inv * inv).sqrt()
    } else {
        params.mu0 / (T::one() + a * a).sqrt()
    }
}

/// Tabulated `phi` on `r = k dr`, `k = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTable<T> {
    mu0: T,
    dr: T,
    r_max: T,
    /// `phi` and `phi'` for nodes below the log-space switch.
    values: Vec<T>,
    derivs: Vec<T>,
    /// `ln phi` and `phi'/phi` for every node.
    log_values: Vec<T>,
    log_derivs: Vec<T>,
}

/// Validated entry point: `0 < dr <= 1e-3`, `r_max > 0`.
pub fn solve_phi<T: Scalar>(params: &PotentialParams<T>, r_max: T, dr: T) -> Result<PhiTable<T>> {
    if !(dr > T::zero()) || dr > T::lit(MAX_PHI_STEP) {
        return Err(Error::param(
            "dr",
            format!("step must lie in (0, {MAX_PHI_STEP}], got {dr}"),
        ));
    }
    integrate_phi(params, r_max, dr)
}

/// Classical RK4 on `(phi, phi')`, switching to RK4 on `(ln phi, phi'/phi)` once `phi`
/// exceeds the overflow guard. No upper bound on `dr`; used directly by convergence studies.
pub(crate) fn integrate_phi<T: Scalar>(params: &PotentialParams<T>, r_max: T, dr: T) -> Result<PhiTable<T>> {
    if !(r_max > T::zero()) || !r_max.is_finite() {
        return Err(Error::param("r_max", format!("must be positive, got {r_max}")));
    }
    if !(dr > T::zero()) {
        return Err(Error::param("dr", format!("must be positive, got {dr}")));
    }
    let steps = (r_max / dr - T::lit(1e-9)).ceil().to_usize().unwrap_or(0).max(1);
    let n = steps + 1;
    let guard = T::max_value() * T::lit(1e-18);
    let coef = |r: T| T::one() + params.eval(r);
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);

    let mut values = Vec::with_capacity(n);
    let mut derivs = Vec::with_capacity(n);
    let mut log_values = Vec::with_capacity(n);
    let mut log_derivs = Vec::with_capacity(n);

    let (mut phi, mut dphi) = (T::one(), T::zero());
    values.push(phi);
    derivs.push(dphi);
    log_values.push(T::zero());
    log_derivs.push(T::zero());

    let mut k = 0;
    while k < steps && phi <= guard {
        let r = T::from_usize_lossy(k) * dr;
        let rm = r + half * dr;
        let rn = r + dr;
        let (k1a, k1b) = (dphi, coef(r) * phi);
        let (k2a, k2b) = (dphi + half * dr * k1b, coef(rm) * (phi + half * dr * k1a));
        let (k3a, k3b) = (dphi + half * dr * k2b, coef(rm) * (phi + half * dr * k2a));
        let (k4a, k4b) = (dphi + dr * k3b, coef(rn) * (phi + dr * k3a));
        phi += dr * sixth * (k1a + T::lit(2.0) * (k2a + k3a) + k4a);
        dphi += dr * sixth * (k1b + T::lit(2.0) * (k2b + k3b) + k4b);
        if !phi.is_finite() || !dphi.is_finite() {
            return Err(Error::param("r_max", "phi overflowed before the log-space switch"));
        }
        values.push(phi);
        derivs.push(dphi);
        log_values.push(phi.ln());
        log_derivs.push(dphi / phi);
        k += 1;
    }

    // log space: l' = y, y' = (1 + V) - y^2
    let (mut l, mut y) = (*log_values.last().unwrap(), *log_derivs.last().unwrap());
    while k < steps {
        let r = T::from_usize_lossy(k) * dr;
        let rm = r + half * dr;
        let rn = r + dr;
        let k1a = y;
        let k1b = coef(r) - y * y;
        let y2 = y + half * dr * k1b;
        let k2a = y2;
        let k2b = coef(rm) - y2 * y2;
        let y3 = y + half * dr * k2b;
        let k3a = y3;
        let k3b = coef(rm) - y3 * y3;
        let y4 = y + dr * k3b;
        let k4a = y4;
        let k4b = coef(rn) - y4 * y4;
        l += dr * sixth * (k1a + T::lit(2.0) * (k2a + k3a) + k4a);
        y += dr * sixth * (k1b + T::lit(2.0) * (k2b + k3b) + k4b);
        if !l.is_finite() || !y.is_finite() {
            return Err(Error::param(
                "r_max",
                "log-space phi integration produced non-finite values",
            ));
        }
        log_values.push(l);
        log_derivs.push(y);
        k += 1;
    }

    Ok(PhiTable {
        mu0: params.mu0(),
        dr,
        r_max: T::from_usize_lossy(steps) * dr,
        values,
        derivs,
        log_values,
        log_derivs,
    })
}

impl<T: Scalar> PhiTable<T> {
    pub fn mu0(&self) -> T {
        self.mu0
    }

    pub fn dr(&self) -> T {
        self.dr
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    /// Index of the first node stored only in log space, if the switch happened.
    pub fn log_switch_index(&self) -> Option<usize> {
        (self.values.len() < self.log_values.len()).then_some(self.values.len())
    }

    pub fn r(&self, k: usize) -> T {
        T::from_usize_lossy(k) * self.dr
    }

    /// `phi(r_k)`; `+inf` past the log switch when the value is not representable.
    pub fn phi_node(&self, k: usize) -> T {
        self.values.get(k).copied().unwrap_or_else(|| self.log_values[k].exp())
    }

    pub fn dphi_node(&self, k: usize) -> T {
        self.derivs
            .get(k)
            .copied()
            .unwrap_or_else(|| self.log_values[k].exp() * self.log_derivs[k])
    }

    pub fn log_phi_node(&self, k: usize) -> T {
        self.log_values[k]
    }

    /// `ln phi(x)` by cubic Hermite interpolation of `(ln phi, phi'/phi)`; `None` beyond the table.
    pub fn log_phi(&self, x: T) -> Option<T> {
        let r = x.abs();
        if r > self.r_max {
            return None;
        }
        let s = r / self.dr;
        let k = s.floor().to_usize().unwrap_or(0).min(self.len() - 2);
        let tau = s - T::from_usize_lossy(k);
        let (l0, l1) = (self.log_values[k], self.log_values[k + 1]);
        let (m0, m1) = (self.log_derivs[k] * self.dr, self.log_derivs[k + 1] * self.dr);
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + tau;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        Some(h00 * l0 + h10 * m0 + h01 * l1 + h11 * m1)
    }

    /// `phi(x)` for any real `x` within the table reach, using `phi(-x) = phi(x)`.
    pub fn phi(&self, x: T) -> Option<T> {
        self.log_phi(x).map(T::exp)
    }

    /// `true` when `phi >= 1` and nondecreasing at every node.
    pub fn is_positive_nondecreasing(&self) -> bool {
        self.log_values.first().is_some_and(|&l| l == T::zero()) && self.log_values.windows(2).all(|w| w[1] >= w[0])
    }

    /// Largest scaled defect of `phi'' = (1 + V) phi` over interior nodes.
    ///
    /// `phi''` is the central difference of the tabulated derivative, which equals the mean
    /// of `phi''` over `[r_{k-1}, r_{k+1}]`; it is matched against the Simpson mean of
    /// `(1 + V) phi` over the same cell. Scale is `max(1, phi(r_k))`. Past the log switch
    /// the same defect is computed on the Riccati form `y' = (1 + V) - y^2`, `y = phi'/phi`.
    pub fn ode_residual(&self) -> T {
        let params = PotentialParams { mu0: self.mu0 };
        let coef = |k: usize| T::one() + params.eval(self.r(k));
        let two_dr = T::lit(2.0) * self.dr;
        let sixth = T::one() / T::lit(6.0);
        let four = T::lit(4.0);
        let mut worst = T::zero();
        for k in 1..self.len().saturating_sub(1) {
            let res = if k + 1 < self.values.len() {
                let lhs = (self.derivs[k + 1] - self.derivs[k - 1]) / two_dr;
                let g = |j: usize| coef(j) * self.values[j];
                let rhs = sixth * (g(k - 1) + four * g(k) + g(k + 1));
                (lhs - rhs).abs() / self.values[k].max(T::one())
            } else {
                let y = &self.log_derivs;
                let lhs = (y[k + 1] - y[k - 1]) / two_dr;
                let g = |j: usize| coef(j) - y[j] * y[j];
                let rhs = sixth * (g(k - 1) + four * g(k) + g(k + 1));
                (lhs - rhs).abs()
            };
            if res > worst || res.is_nan() {
                worst = res;
            }
        }
        worst
    }

    /// CSV with columns `r, phi, dphi, log_phi`, one row every `stride` nodes.
    pub fn write_csv<W: Write>(&self, out: W, stride: usize) -> io::Result<W> {
        let mut w = CsvWriter::new(out, &["r", "phi", "dphi", "log_phi"])?;
        let stride = stride.max(1);
        let last = self.len() - 1;
        for k in (0..self.len())
            .step_by(stride)
            .chain((!last.is_multiple_of(stride)).then_some(last))
        {
            w.row_f64(&[
                self.r(k).as_f64(),
                self.phi_node(k).as_f64(),
                self.dphi_node(k).as_f64(),
                self.log_values[k].as_f64(),
            ])?;
        }
        w.finish()
    }
}

/// `rho(r) = phi(r) e^{-r} (1 + r)^{-mu0/2}` on every table node.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport<T> {
    pub r: Vec<T>,
    pub rho: Vec<T>,
    pub sup: T,
    pub r_at_sup: T,
}

impl<T: Scalar> GrowthReport<T> {
    /// `rho` at the node nearest `r`.
    pub fn rho_at(&self, r: T) -> Option<T> {
        let dr = self.r.get(1).copied()? - self.r[0];
        let k = (r / dr).round().to_usize()?;
        self.rho.get(k).copied()
    }

    /// Supremum of `rho` restricted to `r <= r_hi`.
    pub fn sup_up_to(&self, r_hi: T) -> T {
        self.r
            .iter()
            .zip(&self.rho)
            .take_while(|(&r, _)| r <= r_hi)
            .fold(T::zero(), |m, (_, &v)| m.max(v))
    }
}

pub fn check_phi_growth<T: Scalar>(table: &PhiTable<T>) -> Result<GrowthReport<T>> {
    if table.r_max() < T::lit(GROWTH_CHECK_MIN_RANGE) {
        return Err(Error::TableTooShort {
            r_max: table.r_max().as_f64(),
            required: GROWTH_CHECK_MIN_RANGE,
        });
    }
    let half_mu = table.mu0() * T::lit(0.5);
    let mut r = Vec::with_capacity(table.len());
    let mut rho = Vec::with_capacity(table.len());
    let (mut sup, mut r_at_sup) = (T::neg_infinity(), T::zero());
    for k in 0..table.len() {
        let rk = table.r(k);
        let v = (table.log_phi_node(k) - rk - half_mu * rk.ln_1p()).exp();
        if v > sup {
            sup = v;
            r_at_sup = rk;
        }
        r.push(rk);
        rho.push(v);
    }
    Ok(GrowthReport { r, rho, sup, r_at_sup })
}

/// `e^{-t} \int_{|x| <= R0 + t} phi dx = 2 e^{-t} \int_0^{R0+t} phi dr`.
///
/// Composite trapezoid on the table nodes below `R0 + t` plus one partial panel whose far
/// end is linearly interpolated. Summed relative to the largest node value so the result
/// stays finite past the log switch.
pub fn psi_mass<T: Scalar>(table: &PhiTable<T>, t: T, r0: T) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(Error::param("t", format!("must be >= 0, got {t}")));
    }
    if !(r0 > T::zero()) {
        return Err(Error::param("R0", format!("must be positive, got {r0}")));
    }
    let reach = r0 + t;
    if reach > table.r_max() {
        return Err(Error::TableCoverage {
            r_max: table.r_max().as_f64(),
            needed: reach.as_f64(),
        });
    }
    let dr = table.dr();
    let k = (reach / dr).floor().to_usize().unwrap_or(0).min(table.len() - 1);
    let scale = table.log_phi_node(k);
    let rel: Vec<T> = (0..=k).map(|j| (table.log_phi_node(j) - scale).exp()).collect();
    let mut integral = trapezoid(&rel, dr);
    let rest = reach - table.r(k);
    if rest > T::zero() && k + 1 < table.len() {
        let next = (table.log_phi_node(k + 1) - scale).exp();
        let end = rel[k] + (next - rel[k]) * (rest / dr);
        integral += T::lit(0.5) * rest * (rel[k] + end);
    }
    Ok(T::lit(2.0) * (scale - t).exp() * integral)
}

/// `\int (u0'' + u1) phi dx` by trapezoid, `u0''` from interior central differences.
///
/// The table must reach the support of the integrand (the data support widened by one
/// node for the stencil); samples outside it contribute zero.
pub fn check_sign_condition<T: Scalar>(u0: &Field<T>, u1: &Field<T>, table: &PhiTable<T>) -> Result<T> {
    let grid = *u0.grid();
    if !grid.same_as(u1.grid()) {
        return Err(Error::GridMismatch("u0 and u1 are sampled on different grids".into()));
    }
    let dx = grid.dx();
    let d2 = second_diff(u0.samples(), dx);
    let integrand_rows: Vec<(usize, T)> = d2
        .iter()
        .zip(u1.samples())
        .enumerate()
        .map(|(i, (&a, &b))| (i, a + b))
        .filter(|&(_, v)| v != T::zero())
        .collect();
    let mut samples = vec![T::zero(); grid.nx()];
    for (i, v) in integrand_rows {
        let x = grid.x(i);
        let phi = table.phi(x).ok_or(Error::TableCoverage {
            r_max: table.r_max().as_f64(),
            needed: x.abs().as_f64(),
        })?;
        samples[i] = v * phi;
    }
    Ok(trapezoid(&samples, dx))
}
