//! Exact-recursion solvers for the scalar equation `y' = -alpha y + f` and
//! the system `x' = A x + F`, plus numerical checks of the identities that
//! link solutions to moving averages of the forcing.
//!
//! Each step uses the variation-of-constants formula over one grid panel,
//! so the only discretisation error is that of the panel quadrature.

pub mod linalg;
mod system;

use serde::{Deserialize, Serialize};

pub use linalg::{growth_envelope, matrix_exponential, matrix_norm, spectral_data, vector_norm, EnvelopeCheck, Norm, SpectralData};
pub use system::{
    derivative_trajectory, forcing_trajectory, resolvent_integral, solve_system, verify_cross_representations,
    SystemSpec, MAX_DIMENSION,
};

use crate::error::{Error, Result};
use crate::forcing::Decomposition;
use crate::funcspec::ScalarFunction;
use crate::quadrature::{integrate, QuadError, Tolerance};

/// Uniform grid `t_k = t_start + k h`, `k = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t_start: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(t_start: f64, h: f64, n: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("grid step must be positive, got {}", h)));
        }
        if n < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        if !t_start.is_finite() {
            return Err(Error::invalid("grid start must be finite"));
        }
        Ok(Grid { t_start, h, n })
    }

    /// Grid from `t_start` to (approximately) `t_end` with step `h`.
    pub fn spanning(t_start: f64, t_end: f64, h: f64) -> Result<Self> {
        if !(t_end > t_start) {
            return Err(Error::invalid("grid end must exceed its start"));
        }
        let steps = ((t_end - t_start) / h).round();
        if steps > 1e8 {
            return Err(Error::invalid(format!("grid with {} steps exceeds the budget", steps)));
        }
        Grid::new(t_start, h, steps as usize + 1)
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.n - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.t(k))
    }

    /// Index offset corresponding to a lag `theta`, if it is a whole number of steps.
    pub fn lag_steps(&self, theta: f64) -> Option<usize> {
        let m = theta / self.h;
        let r = m.round();
        if r >= 0.0 && (m - r).abs() <= 1e-9 * r.max(1.0) {
            Some(r as usize)
        } else {
            None
        }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n
            && (self.t_start - other.t_start).abs() <= 1e-12 * self.h
            && (self.h - other.h).abs() <= 1e-12 * self.h
    }
}

/// Samples of a (possibly vector-valued) function on a grid, stored
/// row-major: `values[k * dim + i]` is component `i` at `t_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: Grid,
    pub dim: usize,
    pub values: Vec<f64>,
    pub label: String,
}

impl Trajectory {
    pub fn scalar(grid: Grid, values: Vec<f64>, label: impl Into<String>) -> Self {
        assert_eq!(values.len(), grid.n);
        Trajectory {
            grid,
            dim: 1,
            values,
            label: label.into(),
        }
    }

    pub fn vector(grid: Grid, dim: usize, values: Vec<f64>, label: impl Into<String>) -> Self {
        assert_eq!(values.len(), grid.n * dim);
        Trajectory {
            grid,
            dim,
            values,
            label: label.into(),
        }
    }

    #[inline]
    pub fn state(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        self.values[k * self.dim]
    }

    pub fn len(&self) -> usize {
        self.grid.n
    }

    pub fn is_empty(&self) -> bool {
        self.grid.n == 0
    }

    pub fn norms(&self, norm: Norm) -> Vec<f64> {
        (0..self.grid.n).map(|k| vector_norm(self.state(k), norm)).collect()
    }

    pub fn component(&self, i: usize) -> Trajectory {
        let values = (0..self.grid.n).map(|k| self.values[k * self.dim + i]).collect();
        Trajectory::scalar(self.grid, values, format!("{}[{}]", self.label, i))
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.grid.n - 1)
    }
}

/// Outcome of a numerical identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub max_residual: f64,
    /// Time where the largest residual occurred.
    pub at_t: f64,
    pub tol: f64,
    pub pass: bool,
    pub checked: usize,
}

impl ResidualReport {
    pub(crate) fn new(name: &str, tol: f64) -> Self {
        ResidualReport {
            name: name.to_string(),
            max_residual: 0.0,
            at_t: f64::NAN,
            tol,
            pass: true,
            checked: 0,
        }
    }

    pub(crate) fn record(&mut self, t: f64, residual: f64) {
        let r = residual.abs();
        self.checked += 1;
        if !(r <= self.max_residual) {
            self.max_residual = r;
            self.at_t = t;
        }
        self.pass = self.max_residual <= self.tol;
    }

    pub fn merge(&mut self, other: &ResidualReport) {
        if !(other.max_residual <= self.max_residual) {
            self.max_residual = other.max_residual;
            self.at_t = other.at_t;
        }
        self.checked += other.checked;
        self.pass = self.max_residual <= self.tol;
    }
}

pub(crate) fn tolerance(quad_tol: f64) -> Tolerance {
    Tolerance::abs(quad_tol)
}

/// Converts a quadrature failure on `f` into an error naming the offending node.
pub(crate) fn quad_error(f: &ScalarFunction, e: QuadError) -> Error {
    if let QuadError::NonFinite { at } = e {
        if let Err(err) = f.eval(at) {
            return err;
        }
    }
    e.into()
}

/// `int_a^b exp(rate (b - s)) g(s) ds`.
pub fn exp_kernel_integral<G: Fn(f64) -> f64>(g: G, rate: f64, a: f64, b: f64, quad_tol: f64) -> Result<f64> {
    if b < a {
        return Err(Error::invalid("kernel integral needs a <= b"));
    }
    // Panels of unit decay length keep the kernel peak resolved.
    let scale = if rate < 0.0 { (1.0 / -rate).min(1.0) } else { 1.0 };
    let panels = ((b - a) / scale).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == panels { b } else { lo + width };
        let q = integrate(|s| (rate * (b - s)).exp() * g(s), lo, hi, tolerance(quad_tol / panels as f64))?;
        total += q.value;
    }
    Ok(total)
}

fn solve_linear(f: &ScalarFunction, rate: f64, y0: f64, grid: &Grid, quad_tol: f64, label: &str) -> Result<Trajectory> {
    if !y0.is_finite() {
        return Err(Error::invalid("initial value must be finite"));
    }
    let decay = (rate * grid.h).exp();
    let mut values = Vec::with_capacity(grid.n);
    values.push(y0);
    let tol = tolerance(quad_tol);
    let zero = f.is_zero();
    let mut y = y0;
    for k in 0..grid.n - 1 {
        let a = grid.t(k);
        let b = grid.t(k + 1);
        let panel = if zero {
            0.0
        } else {
            integrate(|s| (rate * (b - s)).exp() * f.value(s), a, b, tol)
                .map_err(|e| quad_error(f, e))?
                .value
        };
        y = decay * y + panel;
        if !y.is_finite() {
            return Err(Error::Overflow(format!("solution overflows at t = {}", b)));
        }
        values.push(y);
    }
    Ok(Trajectory::scalar(*grid, values, label))
}

/// Solves `y' = -alpha y + f`, `y(t_start) = y0` on `grid`.
pub fn solve_scalar(f: &ScalarFunction, alpha: f64, y0: f64, grid: &Grid, quad_tol: f64) -> Result<Trajectory> {
    if !alpha.is_finite() {
        return Err(Error::invalid("alpha must be finite"));
    }
    solve_linear(f, -alpha, y0, grid, quad_tol, "y")
}

/// Solves `u' = alpha u + g`, `u(t_start) = u0`; the growing-kernel companion
/// of [`solve_scalar`].
pub fn solve_scalar_general_rate(g: &ScalarFunction, alpha: f64, u0: f64, grid: &Grid, quad_tol: f64) -> Result<Trajectory> {
    if !alpha.is_finite() {
        return Err(Error::invalid("alpha must be finite"));
    }
    solve_linear(g, alpha, u0, grid, quad_tol, "u")
}

/// Checks `int_{t-theta}^t f = y(t) - y(t-theta) + int_{t-theta}^t y` on every
/// grid point with `t - theta` on the grid. `y` must solve the unit-rate
/// equation `y' = -y + f`.
///
/// The left side is a plain quadrature of `f`. On the right, the integral of
/// `y` over each panel is evaluated exactly from the panel's initial value:
/// `int y = y_k (1 - e^{-h}) + int (1 - e^{-(t_{k+1} - s)}) f(s) ds`.
pub fn verify_ave_identity(y: &Trajectory, f: &ScalarFunction, theta: f64, tol: f64, quad_tol: f64) -> Result<ResidualReport> {
    let grid = y.grid;
    if y.dim != 1 {
        return Err(Error::invalid("identity check needs a scalar trajectory"));
    }
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    let m = grid
        .lag_steps(theta)
        .ok_or_else(|| Error::invalid(format!("theta = {} is not a multiple of h = {}", theta, grid.h)))?;
    if m >= grid.n {
        return Err(Error::invalid("theta exceeds the trajectory span"));
    }
    let qt = tolerance(quad_tol);
    let one_minus = 1.0 - (-grid.h).exp();
    let mut p = vec![0.0; grid.n];
    let mut yint = vec![0.0; grid.n];
    for k in 0..grid.n - 1 {
        let a = grid.t(k);
        let b = grid.t(k + 1);
        let pf = integrate(|s| f.value(s), a, b, qt).map_err(|e| quad_error(f, e))?.value;
        let py = integrate(|s| -(-(b - s)).exp_m1() * f.value(s), a, b, qt)
            .map_err(|e| quad_error(f, e))?
            .value;
        p[k + 1] = p[k] + pf;
        yint[k + 1] = yint[k] + y.at(k) * one_minus + py;
    }
    let mut report = ResidualReport::new("moving-average identity", tol);
    for k in m..grid.n {
        let lhs = p[k] - p[k - m];
        let rhs = y.at(k) - y.at(k - m) + yint[k] - yint[k - m];
        report.record(grid.t(k), lhs - rhs);
    }
    Ok(report)
}

/// Checks the representation
/// `y(t) = (1/D) int_0^t e^{-(t-s)} f_D(s) ds + I(t) - int_0^t e^{-(t-s)} I(s) ds`
/// for the unit-rate solution with `y(t_start) = 0`, where `f_D` and `I` come
/// from `decomposition`.
pub fn verify_representation(y: &Trajectory, decomposition: &Decomposition, tol: f64, quad_tol: f64) -> Result<ResidualReport> {
    let grid = y.grid;
    if !grid.same_as(&decomposition.integral.grid) {
        return Err(Error::GridMismatch("solution and decomposition grids differ".into()));
    }
    if y.at(0) != 0.0 {
        return Err(Error::invalid("representation check needs y(t_start) = 0"));
    }
    let delta = decomposition.delta;
    let qt = tolerance(quad_tol);
    let decay = (-grid.h).exp();
    let mut conv_window = 0.0;
    let mut conv_i = 0.0;
    let mut report = ResidualReport::new("decomposition representation", tol);
    report.record(grid.t(0), y.at(0) - decomposition.integral.at(0));
    for k in 0..grid.n - 1 {
        let a = grid.t(k);
        let b = grid.t(k + 1);
        let pw = integrate(|s| (-(b - s)).exp() * decomposition.window_at(s), a, b, qt)?.value;
        let pi = integrate(|s| (-(b - s)).exp() * decomposition.integral_at(s), a, b, qt)?.value;
        conv_window = decay * conv_window + pw;
        conv_i = decay * conv_i + pi;
        let rhs = conv_window / delta + decomposition.integral.at(k + 1) - conv_i;
        report.record(b, y.at(k + 1) - rhs);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspec::parse_expr;

    fn f(s: &str) -> ScalarFunction {
        ScalarFunction::new(parse_expr(s).unwrap(), s)
    }

    #[test]
    fn scalar_examples() {
        let g = Grid::spanning(0.0, 1.0, 0.01).unwrap();
        let y = solve_scalar(&f("0"), 1.0, 1.0, &g, 1e-9).unwrap();
        assert!((y.last()[0] - 0.36787944).abs() < 1e-8);
        let y = solve_scalar(&f("1"), 1.0, 0.0, &g, 1e-9).unwrap();
        assert!((y.last()[0] - 0.63212056).abs() < 1e-8);
        let y = solve_scalar(&f("exp(-2*t)"), 1.0, 0.0, &g, 1e-9).unwrap();
        assert!((y.last()[0] - 0.23254416).abs() < 1e-8);
    }

    #[test]
    fn growing_kernel_examples() {
        let g = Grid::spanning(0.0, 1.0, 0.01).unwrap();
        let u = solve_scalar_general_rate(&f("1"), 1.0, 0.0, &g, 1e-9).unwrap();
        assert!((u.last()[0] - 1.71828183).abs() < 1e-8);
        let g2 = Grid::spanning(0.0, 2.0, 0.01).unwrap();
        let u = solve_scalar_general_rate(&f("exp(t)"), 1.0, 0.0, &g2, 1e-9).unwrap();
        assert!((u.last()[0] - 14.7781122).abs() < 1e-6);
    }

    #[test]
    fn incommensurate_lag_is_rejected() {
        let g = Grid::spanning(0.0, 5.0, 0.01).unwrap();
        let y = solve_scalar(&f("sin(t)"), 1.0, 0.0, &g, 1e-9).unwrap();
        assert!(verify_ave_identity(&y, &f("sin(t)"), 0.105, 1e-6, 1e-9).is_err());
        assert!(verify_ave_identity(&y, &f("sin(t)"), 0.1, 1e-6, 1e-9).unwrap().pass);
    }

    #[test]
    fn domain_error_propagates() {
        let g = Grid::spanning(0.0, 5.0, 0.1).unwrap();
        match solve_scalar(&f("log(t-2)"), 1.0, 0.0, &g, 1e-9) {
            Err(Error::Domain { node, .. }) => assert_eq!(node, "log(t-2)"),
            other => panic!("{:?}", other),
        }
    }
}
