//! Gauss–Legendre and Gauss–Lobatto rules and an adaptive integrator.
//!
//! The adaptive integrator compares a 15-point Gauss–Legendre panel with the
//! sum over its two halves and bisects until the difference is below the
//! local share of the tolerance.

use std::sync::OnceLock;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    /// Relative to the integral of `|f|` over the same interval.
    pub rel: f64,
    /// Rounding noise of the integrand per unit length; panels whose error
    /// estimate is below `noise * width` are accepted.
    pub noise: f64,
}

impl Tolerance {
    pub fn abs(abs: f64) -> Self {
        Tolerance { abs, rel: 1e-13, noise: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub abs_value: f64,
    /// Number of bisection steps taken; 1 means the first split already agreed.
    pub panels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuadError {
    NonFinite { at: f64 },
    NoConvergence { a: f64, b: f64, estimate: f64 },
}

impl From<QuadError> for Error {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::NonFinite { at } => Error::Domain {
                node: "integrand".into(),
                t: at,
            },
            QuadError::NoConvergence { a, b, estimate } => Error::Quadrature { a, b, estimate },
        }
    }
}

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    // Returns (P_n(x), P_{n-1}(x)).
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

pub fn gauss_legendre_rule(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, pm1) = legendre(n, x);
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, pm1) = legendre(n, x);
        dp = if p.is_finite() { nf * (x * p - pm1) / (x * x - 1.0) } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Gauss–Lobatto rule with `n >= 2` nodes, endpoints included.
pub fn gauss_lobatto_rule(n: usize) -> Rule {
    assert!(n >= 2);
    let big_n = n - 1;
    let mut x: Vec<f64> = (0..n)
        .map(|i| (std::f64::consts::PI * i as f64 / big_n as f64).cos())
        .collect();
    let mut pn = vec![0.0; n];
    for _ in 0..200 {
        let mut max_dx: f64 = 0.0;
        for (i, xi) in x.iter_mut().enumerate() {
            let (p, pm1) = legendre(big_n, *xi);
            pn[i] = p;
            if i == 0 || i == big_n {
                continue;
            }
            let dx = (*xi * p - pm1) / (n as f64 * p);
            *xi -= dx;
            max_dx = max_dx.max(dx.abs());
        }
        if max_dx < 1e-16 {
            break;
        }
    }
    for (i, xi) in x.iter().enumerate() {
        pn[i] = legendre(big_n, *xi).0;
    }
    let weights: Vec<f64> = pn
        .iter()
        .map(|p| 2.0 / (big_n as f64 * n as f64 * p * p))
        .collect();
    // ascending order
    let mut pairs: Vec<(f64, f64)> = x.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

pub fn gl15() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_rule(15))
}

/// Single 15-point panel; returns (integral, integral of |f|).
#[inline]
pub fn gl15_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let rule = gl15();
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut s = 0.0;
    let mut sa = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(c + r * x);
        s += w * v;
        sa += w * v.abs();
    }
    (s * r, sa * r.abs())
}

const MAX_PANELS: usize = 1 << 17;

/// Relative accuracy demanded of the whole-interval mass `int |f|`, spread
/// over panels by length. Near sign changes the local mass vanishes while
/// evaluation noise does not; this floor keeps bisection from chasing it.
const NOISE_REL: f64 = 1e-11;

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Quad, QuadError> {
    if a == b {
        return Ok(Quad {
            value: 0.0,
            error: 0.0,
            abs_value: 0.0,
            panels: 0,
        });
    }
    let width = (b - a).abs();
    let whole = gl15_panel(&mut f, a, b);
    let whole_abs = whole.1;
    let mut stack = vec![(a, b, whole)];
    let mut total = 0.0;
    let mut comp = 0.0;
    let mut total_abs = 0.0;
    let mut total_err = 0.0;
    let mut panels = 0usize;
    while let Some((lo, hi, whole)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gl15_panel(&mut f, lo, mid);
        let right = gl15_panel(&mut f, mid, hi);
        let halves = left.0 + right.0;
        let halves_abs = left.1 + right.1;
        if !halves.is_finite() {
            return Err(QuadError::NonFinite {
                at: locate_non_finite(&mut f, lo, hi),
            });
        }
        let err = (halves - whole.0).abs();
        let share = (hi - lo).abs() / width;
        let local = (tol.abs * share).max(tol.rel * halves_abs).max(NOISE_REL * whole_abs * share)
            .max(tol.noise * (hi - lo).abs());
        panels += 1;
        if err <= local || unresolvable(lo, hi) {
            // Neumaier summation keeps long panel sums accurate.
            let t = total + halves;
            if total.abs() >= halves.abs() {
                comp += (total - t) + halves;
            } else {
                comp += (halves - t) + total;
            }
            total = t;
            total_abs += halves_abs;
            total_err += err;
        } else if panels > MAX_PANELS {
            return Err(QuadError::NoConvergence { a: lo, b: hi, estimate: err });
        } else {
            stack.push((mid, hi, right));
            stack.push((lo, mid, left));
        }
    }
    Ok(Quad {
        value: total + comp,
        error: total_err,
        abs_value: total_abs,
        panels,
    })
}

/// Panels this narrow have their nodes rounded onto a handful of floats, so
/// further bisection cannot reduce the estimate.
#[inline]
fn unresolvable(lo: f64, hi: f64) -> bool {
    (hi - lo).abs() <= 1e3 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
}

fn locate_non_finite<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> f64 {
    let rule = gl15();
    let c = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    for x in &rule.nodes {
        for s in [c + 0.5 * r * (x - 1.0), c + 0.5 * r * (x + 1.0), c + r * x] {
            if !f(s).is_finite() {
                return s;
            }
        }
    }
    c
}

/// Adaptive integral of a vector-valued integrand. `f(s, out)` writes the
/// integrand into `out`; the error test uses the max norm.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    dim: usize,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Vec<f64>, QuadError> {
    let mut total = vec![0.0; dim];
    if a == b {
        return Ok(total);
    }
    let width = (b - a).abs();
    let mut buf = vec![0.0; dim];
    let panel = |f: &mut F, lo: f64, hi: f64, buf: &mut [f64]| -> (Vec<f64>, f64) {
        let rule = gl15();
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo);
        let mut s = vec![0.0; dim];
        let mut sa = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            f(c + r * x, buf);
            for (acc, v) in s.iter_mut().zip(buf.iter()) {
                *acc += w * v;
                sa += w * v.abs();
            }
        }
        s.iter_mut().for_each(|v| *v *= r);
        (s, sa * r.abs())
    };
    let whole = panel(&mut f, a, b, &mut buf);
    let whole_abs = whole.1;
    let mut stack = vec![(a, b, whole.0)];
    let mut panels = 0usize;
    while let Some((lo, hi, whole)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, la) = panel(&mut f, lo, mid, &mut buf);
        let (right, ra) = panel(&mut f, mid, hi, &mut buf);
        let mut err: f64 = 0.0;
        let mut finite = true;
        for i in 0..dim {
            let h = left[i] + right[i];
            finite &= h.is_finite();
            err = err.max((h - whole[i]).abs());
        }
        if !finite {
            return Err(QuadError::NonFinite { at: mid });
        }
        let share = (hi - lo).abs() / width;
        let local = (tol.abs * share).max(tol.rel * (la + ra)).max(NOISE_REL * whole_abs * share)
            .max(tol.noise * (hi - lo).abs());
        panels += 1;
        if err <= local || unresolvable(lo, hi) {
            for i in 0..dim {
                total[i] += left[i] + right[i];
            }
        } else if panels > MAX_PANELS {
            return Err(QuadError::NoConvergence { a: lo, b: hi, estimate: err });
        } else {
            stack.push((mid, hi, right));
            stack.push((lo, mid, left));
        }
    }
    Ok(total)
}

/// Composite Simpson weights for `n` equally spaced nodes (`n` odd) with spacing `h`.
pub fn simpson_weights(n: usize, h: f64) -> Result<Vec<f64>> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::invalid(format!(
            "composite Simpson needs an odd node count >= 3, got {}",
            n
        )));
    }
    Ok((0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect())
}
