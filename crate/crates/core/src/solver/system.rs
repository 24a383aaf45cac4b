use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::linalg::{mat_vec, matrix_exponential, matrix_norm, Norm};
use super::{quad_error, tolerance, Grid, ResidualReport, Trajectory};
use crate::error::{Error, Result};
use crate::funcspec::ScalarFunction;
use crate::quadrature::{integrate, integrate_vec, QuadError};
use crate::weights::WeightFunction;

pub const MAX_DIMENSION: usize = 50;

/// `x' = A x + F(t)`, `x(t_start) = zeta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub a: DMatrix<f64>,
    pub forcing: Vec<ScalarFunction>,
    pub zeta: DVector<f64>,
}

impl SystemSpec {
    pub fn new(a: DMatrix<f64>, forcing: Vec<ScalarFunction>, zeta: DVector<f64>) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d {
            return Err(Error::invalid("A must be a non-empty square matrix"));
        }
        if d > MAX_DIMENSION {
            return Err(Error::invalid(format!(
                "dimension {} exceeds the supported maximum of {}",
                d, MAX_DIMENSION
            )));
        }
        if forcing.len() != d || zeta.len() != d {
            return Err(Error::invalid(format!(
                "A is {}x{} but F has {} and zeta has {} components",
                d,
                d,
                forcing.len(),
                zeta.len()
            )));
        }
        if a.iter().chain(zeta.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("A and zeta must be finite"));
        }
        Ok(SystemSpec { a, forcing, zeta })
    }

    /// The scalar equation `y' = -alpha y + f` as a one-dimensional system.
    pub fn scalar(alpha: f64, f: ScalarFunction, y0: f64) -> Result<Self> {
        SystemSpec::new(
            DMatrix::from_element(1, 1, -alpha),
            vec![f],
            DVector::from_element(1, y0),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn forcing_at(&self, s: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.forcing) {
            *o = f.value(s);
        }
    }

    fn forcing_is_zero(&self) -> bool {
        self.forcing.iter().all(|f| f.is_zero())
    }

    fn map_quad(&self, e: QuadError) -> Error {
        if let QuadError::NonFinite { at } = e {
            for f in &self.forcing {
                if let Err(err) = f.eval(at) {
                    return err;
                }
            }
        }
        e.into()
    }
}

/// Memoised `exp(A tau)`; panel-local offsets repeat from panel to panel,
/// so most lookups hit.
struct PhiCache<'a> {
    a: &'a DMatrix<f64>,
    map: RefCell<HashMap<u64, DMatrix<f64>>>,
}

impl<'a> PhiCache<'a> {
    fn new(a: &'a DMatrix<f64>) -> Self {
        PhiCache {
            a,
            map: RefCell::new(HashMap::new()),
        }
    }

    /// `exp(A tau) v`.
    fn apply(&self, tau: f64, v: &[f64], out: &mut [f64]) -> Result<()> {
        let key = tau.to_bits();
        let mut map = self.map.borrow_mut();
        if !map.contains_key(&key) {
            if map.len() > 200_000 {
                map.clear();
            }
            map.insert(key, matrix_exponential(self.a, tau)?);
        }
        let m = &map[&key];
        out.copy_from_slice(&mat_vec(m, v));
        Ok(())
    }
}

/// Integrates `int_0^h Phi(h - tau) G(tau) dtau` where `g(tau, out)` writes `G`.
fn propagated_panel<G: FnMut(f64, &mut [f64]) -> Result<()>>(
    cache: &PhiCache<'_>,
    h: f64,
    dim: usize,
    mut g: G,
    quad_tol: f64,
) -> Result<Vec<f64>> {
    let mut failure: Option<Error> = None;
    let mut buf = vec![0.0; dim];
    let r = integrate_vec(
        |tau, out| {
            if failure.is_some() {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            if let Err(e) = g(tau, &mut buf).and_then(|_| cache.apply(h - tau, &buf, out)) {
                failure = Some(e);
                out.iter_mut().for_each(|o| *o = 0.0);
            }
        },
        dim,
        0.0,
        h,
        tolerance(quad_tol),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(r?)
}

/// Solves `x' = A x + F` by the recursion
/// `x_{k+1} = Phi(h) x_k + int_0^h Phi(h - tau) F(t_k + tau) dtau`.
pub fn solve_system(spec: &SystemSpec, grid: &Grid, quad_tol: f64) -> Result<Trajectory> {
    let d = spec.dim();
    let phi_h = matrix_exponential(&spec.a, grid.h)?;
    let cache = PhiCache::new(&spec.a);
    let zero = spec.forcing_is_zero();
    let mut values = Vec::with_capacity(grid.n * d);
    values.extend(spec.zeta.iter());
    let mut x: Vec<f64> = spec.zeta.iter().cloned().collect();
    for k in 0..grid.n - 1 {
        let tk = grid.t(k);
        let mut next = mat_vec(&phi_h, &x);
        if !zero {
            let panel = propagated_panel(
                &cache,
                grid.h,
                d,
                |tau, out| {
                    spec.forcing_at(tk + tau, out);
                    if out.iter().any(|v| !v.is_finite()) {
                        return Err(spec.map_quad(QuadError::NonFinite { at: tk + tau }));
                    }
                    Ok(())
                },
                quad_tol,
            )?;
            for (n, p) in next.iter_mut().zip(panel) {
                *n += p;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow(format!("solution overflows at t = {}", grid.t(k + 1))));
        }
        values.extend(next.iter());
        x = next;
    }
    Ok(Trajectory::vector(*grid, d, values, "x"))
}

/// `F(t_k)` sampled on the grid.
pub fn forcing_trajectory(spec: &SystemSpec, grid: &Grid) -> Result<Trajectory> {
    let d = spec.dim();
    let mut values = Vec::with_capacity(grid.n * d);
    for t in grid.times() {
        for f in &spec.forcing {
            values.push(f.eval(t)?);
        }
    }
    Ok(Trajectory::vector(*grid, d, values, "F"))
}

/// `x'(t_k) = A x(t_k) + F(t_k)`.
pub fn derivative_trajectory(x: &Trajectory, spec: &SystemSpec) -> Result<Trajectory> {
    let d = spec.dim();
    if x.dim != d {
        return Err(Error::invalid("trajectory dimension does not match the system"));
    }
    let mut values = Vec::with_capacity(x.values.len());
    for k in 0..x.grid.n {
        let t = x.grid.t(k);
        let ax = mat_vec(&spec.a, x.state(k));
        for (i, f) in spec.forcing.iter().enumerate() {
            values.push(ax[i] + f.eval(t)?);
        }
    }
    Ok(Trajectory::vector(x.grid, d, values, "x'"))
}

/// Checks both cross representations between the system solution `x` and
/// the componentwise unit-rate solutions `y_i' = -y_i + F_i`, `y(t_start) = 0`:
///
/// `x(t) = y(t) + Phi(t) zeta + int_0^t Phi(t-s) (I + A) y(s) ds` and
/// `y(t) = x(t) - e^{-t} zeta - int_0^t e^{-(t-s)} (I + A) x(s) ds`.
///
/// Values of `y` and `x` inside a panel are reconstructed from the panel's
/// left endpoint with the same variation-of-constants formula.
pub fn verify_cross_representations(
    x: &Trajectory,
    y: &Trajectory,
    spec: &SystemSpec,
    tol: f64,
    quad_tol: f64,
) -> Result<(ResidualReport, ResidualReport)> {
    let d = spec.dim();
    let grid = x.grid;
    if !grid.same_as(&y.grid) || x.dim != d || y.dim != d {
        return Err(Error::GridMismatch("x and y must share grid and dimension".into()));
    }
    let ipa = &spec.a + DMatrix::<f64>::identity(d, d);
    let cache = PhiCache::new(&spec.a);
    let qt = tolerance(quad_tol);
    let h = grid.h;
    let decay = (-h).exp();

    let mut conv_y = vec![0.0; d];
    let mut conv_x = vec![0.0; d];
    let mut rep_x = ResidualReport::new("x from y", tol);
    let mut rep_y = ResidualReport::new("y from x", tol);

    let check = |k: usize, conv_y: &[f64], conv_x: &[f64], rep_x: &mut ResidualReport, rep_y: &mut ResidualReport| -> Result<()> {
        let t = grid.t(k);
        let phi_t = matrix_exponential(&spec.a, t - grid.t_start)?;
        let phi_zeta = mat_vec(&phi_t, spec.zeta.as_slice());
        let e = (-(t - grid.t_start)).exp();
        let mut rx: f64 = 0.0;
        let mut ry: f64 = 0.0;
        for i in 0..d {
            let xi = y.state(k)[i] + phi_zeta[i] + conv_y[i];
            rx = rx.max((x.state(k)[i] - xi).abs());
            let yi = x.state(k)[i] - e * spec.zeta[i] - conv_x[i];
            ry = ry.max((y.state(k)[i] - yi).abs());
        }
        rep_x.record(t, rx);
        rep_y.record(t, ry);
        Ok(())
    };
    check(0, &conv_y, &conv_x, &mut rep_x, &mut rep_y)?;

    let phi_h = matrix_exponential(&spec.a, h)?;
    for k in 0..grid.n - 1 {
        let tk = grid.t(k);
        let yk = y.state(k).to_vec();
        let xk = x.state(k).to_vec();

        // y inside the panel, then propagate (I + A) y through Phi.
        let y_at = |tau: f64, out: &mut [f64]| -> Result<()> {
            let e = (-tau).exp();
            for i in 0..d {
                let fi = &spec.forcing[i];
                let q = if fi.is_zero() || tau == 0.0 {
                    0.0
                } else {
                    integrate(|u| (-(tau - u)).exp() * fi.value(tk + u), 0.0, tau, qt)
                        .map_err(|e| quad_error(fi, e))?
                        .value
                };
                out[i] = e * yk[i] + q;
            }
            Ok(())
        };
        let py = propagated_panel(
            &cache,
            h,
            d,
            |tau, out| {
                let mut tmp = vec![0.0; d];
                y_at(tau, &mut tmp)?;
                out.copy_from_slice(&mat_vec(&ipa, &tmp));
                Ok(())
            },
            quad_tol,
        )?;
        let mut next_y = mat_vec(&phi_h, &conv_y);
        for (n, p) in next_y.iter_mut().zip(&py) {
            *n += p;
        }
        conv_y = next_y;

        // x inside the panel, then the scalar kernel against (I + A) x.
        let mut failure: Option<Error> = None;
        let px = integrate_vec(
            |tau, out| {
                if failure.is_some() {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let res = (|| -> Result<Vec<f64>> {
                    let mut xs = vec![0.0; d];
                    cache.apply(tau, &xk, &mut xs)?;
                    if tau > 0.0 && !spec.forcing_is_zero() {
                        let inner = propagated_panel(
                            &cache,
                            tau,
                            d,
                            |u, o| {
                                spec.forcing_at(tk + u, o);
                                Ok(())
                            },
                            quad_tol,
                        )?;
                        for (a, b) in xs.iter_mut().zip(inner) {
                            *a += b;
                        }
                    }
                    Ok(mat_vec(&ipa, &xs))
                })();
                match res {
                    Ok(v) => {
                        let w = (-(h - tau)).exp();
                        for (o, vi) in out.iter_mut().zip(v) {
                            *o = w * vi;
                        }
                    }
                    Err(e) => {
                        failure = Some(e);
                        out.iter_mut().for_each(|o| *o = 0.0);
                    }
                }
            },
            d,
            0.0,
            h,
            qt,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let px = px.map_err(|e| spec.map_quad(e))?;
        for i in 0..d {
            conv_x[i] = decay * conv_x[i] + px[i];
        }
        check(k + 1, &conv_y, &conv_x, &mut rep_x, &mut rep_y)?;
    }
    Ok((rep_x, rep_y))
}

/// `M(t) = int_0^t |Phi(t - s)| gamma(s) / gamma(t) ds` on the grid.
pub fn resolvent_integral(a: &DMatrix<f64>, gamma: &WeightFunction, grid: &Grid, norm: Norm, quad_tol: f64) -> Result<Trajectory> {
    let t0 = grid.t_start;
    let mut failure: Option<Error> = None;
    let mut values = Vec::with_capacity(grid.n);
    for t in grid.times() {
        let lt = gamma.log_value(t);
        let span = t - t0;
        if span <= 0.0 {
            values.push(0.0);
            continue;
        }
        // Substitute u = t - s; unit panels keep decaying kernels resolved.
        let panels = span.ceil().max(1.0) as usize;
        let width = span / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = p as f64 * width;
            let hi = if p + 1 == panels { span } else { lo + width };
            let q = integrate(
                |u| {
                    if failure.is_some() {
                        return 0.0;
                    }
                    match matrix_exponential(a, u) {
                        Ok(phi) => matrix_norm(&phi, norm) * (gamma.log_value(t - u) - lt).exp(),
                        Err(e) => {
                            failure = Some(e);
                            0.0
                        }
                    }
                },
                lo,
                hi,
                tolerance(quad_tol / panels as f64),
            );
            if let Some(e) = failure.take() {
                return Err(e);
            }
            total += q?.value;
        }
        values.push(total);
    }
    Ok(Trajectory::scalar(*grid, values, "M"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspec::parse_expr;
    use crate::solver::solve_scalar;

    fn f(s: &str) -> ScalarFunction {
        ScalarFunction::new(parse_expr(s).unwrap(), s)
    }

    #[test]
    fn dimension_cap() {
        let a = DMatrix::<f64>::zeros(51, 51);
        let err = SystemSpec::new(a, vec![ScalarFunction::zero(); 51], DVector::zeros(51));
        assert!(err.is_err());
    }

    #[test]
    fn diagonal_system_matches_scalar_runs() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let spec = SystemSpec::new(a, vec![f("1"), f("sin(t)")], DVector::from_row_slice(&[1.0, 0.0])).unwrap();
        let g = Grid::spanning(0.0, 5.0, 0.01).unwrap();
        let x = solve_system(&spec, &g, 1e-9).unwrap();
        let y1 = solve_scalar(&f("1"), 1.0, 1.0, &g, 1e-9).unwrap();
        let y2 = solve_scalar(&f("sin(t)"), 2.0, 0.0, &g, 1e-9).unwrap();
        for k in 0..g.n {
            assert!((x.state(k)[0] - y1.at(k)).abs() < 1e-8);
            assert!((x.state(k)[1] - y2.at(k)).abs() < 1e-8);
        }
    }

    #[test]
    fn resolvent_scalar_examples() {
        let g = Grid::spanning(0.0, 5.0, 0.5).unwrap();
        let one = WeightFunction::parse("1").unwrap();
        let m = resolvent_integral(&DMatrix::from_element(1, 1, -1.0), &one, &g, Norm::Spectral, 1e-10).unwrap();
        let m2 = resolvent_integral(&DMatrix::from_element(1, 1, 1.0), &one, &g, Norm::Spectral, 1e-10).unwrap();
        for k in 0..g.n {
            let t = g.t(k);
            assert!((m.at(k) - (1.0 - (-t).exp())).abs() < 1e-9);
            assert!((m2.at(k) - (t.exp() - 1.0)).abs() < 1e-8 * t.exp());
        }
    }
}
