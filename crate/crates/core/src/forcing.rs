//! Moving averages `f_theta(t) = int_{max(t-theta, 0)}^t f`, the field of
//! moving averages over a theta grid, and the decomposition
//! `f = delta + f_D / D` with `I = int_0^t delta`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspec::{FunctionExpr, Func, ScalarFunction};
use crate::numfmt::fmt_f64;
use crate::quadrature::{gauss_lobatto_rule, gl15_panel, integrate, simpson_weights, Tolerance};
use crate::solver::{quad_error, tolerance, Grid, ResidualReport, Trajectory};

/// `int_{max(t - theta, start)}^t f`, by adaptive quadrature.
pub fn moving_average(f: &ScalarFunction, theta: f64, t: f64, quad_tol: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::invalid("theta must be non-negative"));
    }
    let lo = (t - theta).max(f.domain_start);
    if t <= lo {
        return Ok(0.0);
    }
    Ok(integrate(|s| f.value(s), lo, t, tolerance(quad_tol))
        .map_err(|e| quad_error(f, e))?
        .value)
}

/// Rounding noise of `f` on `[a, b]`, sampled and padded by a safety factor.
/// Cancellation inside the expression (such as `exp(t)*(1+sin(t))` near a
/// zero of the bracket) can make it far larger than `|f|` itself.
fn cell_noise(f: &ScalarFunction, a: f64, b: f64) -> f64 {
    const SAMPLES: usize = 16;
    let m = (0..=SAMPLES)
        .map(|i| f.noise(a + (b - a) * i as f64 / SAMPLES as f64))
        .fold(0.0, f64::max);
    if m.is_finite() {
        16.0 * m
    } else {
        0.0
    }
}

/// Cached primitive `P(s) = int_start^s f` (and optionally the first moment
/// `M(s) = int_start^s (u - start) f(u) du`) on a fine uniform lattice.
/// Off-lattice values add one local quadrature to the nearest node below.
#[derive(Debug, Clone)]
pub struct Primitive {
    f: ScalarFunction,
    origin: f64,
    cell: f64,
    prefix: Vec<f64>,
    moment: Option<Vec<f64>>,
    /// Whether a single 15-point panel resolves `f` on the cell.
    simple: Vec<bool>,
    tol: Tolerance,
}

impl Primitive {
    pub fn build(f: &ScalarFunction, t_end: f64, cell: f64, with_moment: bool, quad_tol: f64) -> Result<Self> {
        if !(cell > 0.0) {
            return Err(Error::invalid("primitive cell width must be positive"));
        }
        let origin = f.domain_start;
        let cells = (((t_end - origin) / cell).ceil().max(1.0)) as usize + 1;
        let tol = tolerance(quad_tol);
        let per_cell = Tolerance {
            abs: quad_tol / cells as f64,
            ..tol
        };
        let results: Vec<Result<(f64, f64, bool)>> = (0..cells)
            .into_par_iter()
            .map(|j| {
                let a = origin + j as f64 * cell;
                let b = a + cell;
                let noise = cell_noise(f, a, b);
                let tol = Tolerance { noise, ..per_cell };
                let q = integrate(|s| f.value(s), a, b, tol).map_err(|e| quad_error(f, e))?;
                let m = if with_moment {
                    let tol = Tolerance {
                        noise: noise * (b - origin).abs().max(1.0),
                        ..per_cell
                    };
                    integrate(|s| (s - origin) * f.value(s), a, b, tol)
                        .map_err(|e| quad_error(f, e))?
                        .value
                } else {
                    0.0
                };
                Ok((q.value, m, q.panels <= 1))
            })
            .collect();
        let mut prefix = Vec::with_capacity(cells + 1);
        let mut moment = Vec::with_capacity(cells + 1);
        let mut simple = Vec::with_capacity(cells);
        let (mut p, mut pc, mut m, mut mc) = (0.0, 0.0, 0.0, 0.0);
        prefix.push(0.0);
        moment.push(0.0);
        for r in results {
            let (dp, dm, s) = r?;
            neumaier(&mut p, &mut pc, dp);
            neumaier(&mut m, &mut mc, dm);
            prefix.push(p + pc);
            moment.push(m + mc);
            simple.push(s);
        }
        Ok(Primitive {
            f: f.clone(),
            origin,
            cell,
            prefix,
            moment: with_moment.then_some(moment),
            simple,
            tol,
        })
    }

    fn local(&self, s: f64, weight_moment: bool) -> f64 {
        if s <= self.origin {
            return 0.0;
        }
        let cells = self.simple.len();
        let j = (((s - self.origin) / self.cell).floor() as usize).min(cells);
        let node = self.origin + j as f64 * self.cell;
        let base = if weight_moment {
            self.moment.as_ref().expect("primitive built without moment")[j]
        } else {
            self.prefix[j]
        };
        if s == node {
            return base;
        }
        let origin = self.origin;
        let mut g = |u: f64| {
            let v = self.f.value(u);
            if weight_moment {
                (u - origin) * v
            } else {
                v
            }
        };
        let part = if j < cells && self.simple[j] {
            gl15_panel(&mut g, node, s).0
        } else {
            integrate(g, node, s, self.tol).map(|q| q.value).unwrap_or(f64::NAN)
        };
        base + part
    }

    /// `int_start^s f`.
    pub fn prefix(&self, s: f64) -> f64 {
        self.local(s, false)
    }

    /// `int_start^s (u - start) f(u) du`; requires `with_moment`.
    pub fn moment(&self, s: f64) -> f64 {
        self.local(s, true)
    }

    /// `f_theta(t) = P(t) - P(max(t - theta, start))`.
    pub fn window(&self, t: f64, theta: f64) -> f64 {
        let lo = (t - theta).max(self.origin);
        if t <= lo {
            return 0.0;
        }
        self.prefix(t) - self.prefix(lo)
    }

    /// `int_start^s P`, via integration by parts: `(s - start) P(s) - M(s)`.
    pub fn double(&self, s: f64) -> f64 {
        if s <= self.origin {
            return 0.0;
        }
        (s - self.origin) * self.prefix(s) - self.moment(s)
    }

    pub fn function(&self) -> &ScalarFunction {
        &self.f
    }
}

fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaLayout {
    /// Equally spaced nodes; theta integrals use composite Simpson.
    Uniform,
    /// Gauss–Lobatto nodes; theta integrals use the Lobatto weights.
    Lobatto,
}

pub fn theta_grid_uniform(delta: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| delta * j as f64 / (count - 1) as f64)
        .collect()
}

pub fn theta_grid_lobatto(delta: f64, count: usize) -> Vec<f64> {
    let r = gauss_lobatto_rule(count);
    let mut v: Vec<f64> = r.nodes.iter().map(|x| 0.5 * delta * (x + 1.0)).collect();
    v[0] = 0.0;
    v[count - 1] = delta;
    v
}

/// `values[j][k] = f_{theta_j}(t_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingAverageField {
    pub theta_grid: Vec<f64>,
    pub t_grid: Grid,
    pub values: Vec<Vec<f64>>,
    pub layout: ThetaLayout,
}

impl MovingAverageField {
    pub fn delta(&self) -> f64 {
        *self.theta_grid.last().unwrap()
    }

    /// Quadrature weights over `[0, Delta]` matching the layout.
    pub fn theta_weights(&self) -> Result<Vec<f64>> {
        let n = self.theta_grid.len();
        match self.layout {
            ThetaLayout::Uniform => simpson_weights(n, self.delta() / (n - 1) as f64),
            ThetaLayout::Lobatto => {
                let r = gauss_lobatto_rule(n);
                Ok(r.weights.iter().map(|w| 0.5 * self.delta() * w).collect())
            }
        }
    }

    /// CSV with a `t` column followed by one column per theta.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for th in &self.theta_grid {
            write!(w, ",theta={}", fmt_f64(*th))?;
        }
        writeln!(w)?;
        for k in 0..self.t_grid.n {
            write!(w, "{}", fmt_f64(self.t_grid.t(k)))?;
            for row in &self.values {
                write!(w, ",{}", fmt_f64(row[k]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn validate_theta_grid(theta_grid: &[f64]) -> Result<ThetaLayout> {
    if theta_grid.len() < 2 {
        return Err(Error::invalid("theta grid needs at least two nodes"));
    }
    if theta_grid[0] != 0.0 {
        return Err(Error::invalid("theta grid must start at 0"));
    }
    if theta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("theta grid must be strictly increasing"));
    }
    let n = theta_grid.len();
    let delta = theta_grid[n - 1];
    let uniform = theta_grid
        .iter()
        .enumerate()
        .all(|(j, th)| (th - delta * j as f64 / (n - 1) as f64).abs() <= 1e-12 * delta);
    if uniform {
        return Ok(ThetaLayout::Uniform);
    }
    let lob = theta_grid_lobatto(delta, n);
    if lob.iter().zip(theta_grid).all(|(a, b)| (a - b).abs() <= 1e-12 * delta) {
        return Ok(ThetaLayout::Lobatto);
    }
    Err(Error::invalid("theta grid must be uniform or Gauss-Lobatto"))
}

/// Refinement of the cached primitive relative to the t-grid step.
pub const PRIMITIVE_REFINEMENT: f64 = 8.0;

/// Field of moving averages from a cached primitive.
pub fn moving_average_field(f: &ScalarFunction, theta_grid: &[f64], t_grid: &Grid, quad_tol: f64) -> Result<MovingAverageField> {
    let prim = Primitive::build(f, t_grid.t_end(), t_grid.h / PRIMITIVE_REFINEMENT, false, quad_tol)?;
    field_from_primitive(&prim, theta_grid, t_grid)
}

pub fn field_from_primitive(prim: &Primitive, theta_grid: &[f64], t_grid: &Grid) -> Result<MovingAverageField> {
    let layout = validate_theta_grid(theta_grid)?;
    let prefix: Vec<f64> = (0..t_grid.n).into_par_iter().map(|k| prim.prefix(t_grid.t(k))).collect();
    let values: Vec<Vec<f64>> = theta_grid
        .par_iter()
        .map(|&theta| {
            (0..t_grid.n)
                .map(|k| {
                    let t = t_grid.t(k);
                    if theta == 0.0 {
                        return 0.0;
                    }
                    let lo = (t - theta).max(prim.origin);
                    if t <= lo {
                        0.0
                    } else {
                        prefix[k] - prim.prefix(lo)
                    }
                })
                .collect()
        })
        .collect();
    for (j, row) in values.iter().enumerate() {
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            let t = t_grid.t(k);
            prim.f.eval(t)?;
            return Err(Error::Domain {
                node: format!("moving average theta = {}", theta_grid[j]),
                t,
            });
        }
    }
    Ok(MovingAverageField {
        theta_grid: theta_grid.to_vec(),
        t_grid: *t_grid,
        values,
        layout,
    })
}

/// `delta = f - f_D / D` and `I(t) = int_start^t delta` on a grid, with
/// pointwise access for off-grid evaluation.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub delta: f64,
    pub delta_values: Trajectory,
    pub integral: Trajectory,
    primitive: Arc<Primitive>,
}

impl Decomposition {
    /// `f_D(s)`.
    pub fn window_at(&self, s: f64) -> f64 {
        self.primitive.window(s, self.delta)
    }

    /// `delta(s) = f(s) - f_D(s) / D`.
    pub fn delta_at(&self, s: f64) -> f64 {
        self.primitive.f.value(s) - self.window_at(s) / self.delta
    }

    /// `I(s) = P(s) - (1/D) int_start^s f_D`, where the last integral is
    /// `Q(s) - Q(max(s - D, start))` with `Q` the double primitive.
    pub fn integral_at(&self, s: f64) -> f64 {
        let p = &self.primitive;
        let lag = (s - self.delta).max(p.origin);
        p.prefix(s) - (p.double(s) - p.double(lag)) / self.delta
    }

    pub fn primitive(&self) -> &Primitive {
        &self.primitive
    }
}

pub fn decompose(f: &ScalarFunction, delta: f64, grid: &Grid, quad_tol: f64) -> Result<Decomposition> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("Delta must be positive"));
    }
    let prim = Arc::new(Primitive::build(f, grid.t_end(), grid.h / PRIMITIVE_REFINEMENT, true, quad_tol)?);
    let mut dec = Decomposition {
        delta,
        delta_values: Trajectory::scalar(*grid, vec![0.0; grid.n], "delta"),
        integral: Trajectory::scalar(*grid, vec![0.0; grid.n], "I"),
        primitive: prim,
    };
    let (dv, iv): (Vec<f64>, Vec<f64>) = (0..grid.n)
        .into_par_iter()
        .map(|k| {
            let t = grid.t(k);
            (dec.delta_at(t), dec.integral_at(t))
        })
        .unzip();
    if let Some(k) = dv.iter().chain(iv.iter()).position(|v| !v.is_finite()) {
        let t = grid.t(k % grid.n);
        f.eval(t)?;
        return Err(Error::Domain {
            node: "decomposition".into(),
            t,
        });
    }
    dec.delta_values.values = dv;
    dec.integral.values = iv;
    Ok(dec)
}

/// Checks `I(t) = (1/D) int_0^D f_theta(t) dtheta` for `t >= D`, integrating
/// the field rows over theta, and `I(t) = f_D(t) - (1/D) int_0^t f_D` for
/// `t < D`, integrating `f_D` directly.
pub fn verify_decomposition_identity(dec: &Decomposition, field: &MovingAverageField, tol: f64, quad_tol: f64) -> Result<ResidualReport> {
    let grid = dec.integral.grid;
    if !grid.same_as(&field.t_grid) {
        return Err(Error::GridMismatch("field and decomposition grids differ".into()));
    }
    if field.theta_grid.len() < 33 {
        return Err(Error::invalid("decomposition check needs at least 33 theta nodes"));
    }
    let delta = dec.delta;
    if (field.delta() - delta).abs() > 1e-12 * delta {
        return Err(Error::invalid(format!(
            "field spans [0, {}] but Delta = {}",
            field.delta(),
            delta
        )));
    }
    let w = field.theta_weights()?;
    let origin = dec.primitive.origin;
    let mut report = ResidualReport::new("decomposition identity", tol);
    let mut running = 0.0;
    let mut prev_t = grid.t(0);
    for k in 0..grid.n {
        let t = grid.t(k);
        if t - origin >= delta {
            let avg: f64 = field.values.iter().zip(&w).map(|(row, wj)| wj * row[k]).sum::<f64>() / delta;
            report.record(t, dec.integral.at(k) - avg);
        } else {
            if t > prev_t {
                running += integrate(|s| dec.window_at(s), prev_t.max(origin), t, tolerance(quad_tol))?.value;
            }
            prev_t = t;
            let f_d = field.values.last().unwrap()[k];
            report.record(t, dec.integral.at(k) - (f_d - running / delta));
        }
    }
    Ok(report)
}

/// `f = beta'(t) sin(beta(t))` for a strictly increasing `beta`, whose moving
/// averages are `cos(beta(t - theta)) - cos(beta(t))`.
#[derive(Debug, Clone)]
pub struct OscillatoryForcing {
    pub beta: FunctionExpr,
    pub forcing: ScalarFunction,
}

impl OscillatoryForcing {
    pub fn exact_window(&self, t: f64, theta: f64) -> f64 {
        let lo = (t - theta).max(self.forcing.domain_start);
        (self.beta.value(lo)).cos() - (self.beta.value(t)).cos()
    }
}

/// Builds the oscillatory forcing for `beta`, checking on `[0, range_end]`
/// that `beta` is strictly increasing.
pub fn oscillatory_forcing(beta: &FunctionExpr, range_end: f64) -> Result<OscillatoryForcing> {
    if !(range_end > 0.0) {
        return Err(Error::invalid("range must be positive"));
    }
    let db = beta.differentiate();
    let samples = 4096;
    let mut prev = beta.eval(0.0)?;
    for j in 1..=samples {
        let t = range_end * j as f64 / samples as f64;
        let v = beta.eval(t)?;
        let d = db.eval(t)?;
        if !(v > prev) || d < 0.0 {
            return Err(Error::invalid(format!("beta is not strictly increasing near t = {}", t)));
        }
        prev = v;
    }
    let expr = FunctionExpr::Mul(Box::new(db), Box::new(FunctionExpr::call(Func::Sin, beta.clone())));
    let label = format!("oscillatory[{}]", beta);
    Ok(OscillatoryForcing {
        beta: beta.clone(),
        forcing: ScalarFunction::new(expr, label),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspec::parse_expr;

    fn f(s: &str) -> ScalarFunction {
        ScalarFunction::new(parse_expr(s).unwrap(), s)
    }

    #[test]
    fn chirp_window_example() {
        let v = moving_average(&f("2*t*sin(t^2)"), 1.0, 2.0, 1e-12).unwrap();
        assert!((v - (1f64.cos() - 4f64.cos())).abs() < 1e-11);
        assert!((v - 1.1939459).abs() < 1e-7);
    }

    #[test]
    fn truncated_window_near_origin() {
        let v = moving_average(&f("1"), 2.0, 0.5, 1e-12).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_decomposition() {
        let g = Grid::spanning(0.0, 3.0, 0.01).unwrap();
        let c = 2.5;
        let dec = decompose(&f("2.5"), 1.0, &g, 1e-12).unwrap();
        for k in 0..=100 {
            let t = g.t(k);
            assert!((dec.delta_values.at(k) - c * (1.0 - t)).abs() < 1e-10, "t = {}", t);
        }
        assert!((dec.integral.at(100) - c / 2.0).abs() < 1e-10);
        assert!((dec.integral.at(250) - c / 2.0).abs() < 1e-10);
    }

    #[test]
    fn oscillatory_linear_phase() {
        let osc = oscillatory_forcing(&parse_expr("t").unwrap(), 10.0).unwrap();
        let q = moving_average(&osc.forcing, 0.3, 7.0, 1e-13).unwrap();
        assert!((osc.exact_window(7.0, 0.3) - ((6.7f64).cos() - 7f64.cos())).abs() < 1e-15);
        assert!((q - osc.exact_window(7.0, 0.3)).abs() < 1e-12);
        assert!(oscillatory_forcing(&parse_expr("sin(t)").unwrap(), 10.0).is_err());
    }

    #[test]
    fn field_rows_and_csv() {
        let g = Grid::spanning(0.0, 10.0, 0.05).unwrap();
        let thetas = theta_grid_uniform(1.0, 5);
        let field = moving_average_field(&f("sin(t)"), &thetas, &g, 1e-10).unwrap();
        assert!(field.values[0].iter().all(|v| *v == 0.0));
        let direct = moving_average(&f("sin(t)"), 0.75, g.t(150), 1e-12).unwrap();
        assert!((field.values[3][150] - direct).abs() < 1e-10);
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), g.n + 1);
        assert!(text.starts_with("t,theta="));
    }
}
