//! Weight functions and the numerical checks used to place them in a class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcspec::{parse_expr, FunctionExpr, ScalarFunction};
use crate::quadrature::{integrate, Tolerance};
use crate::solver::{exp_kernel_integral, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightClass {
    NonDecreasing,
    Subexponential,
    /// `gamma'/gamma -> beta` with `beta > 0` (possibly infinite).
    ExponentialRate(f64),
    Unverified,
}

#[derive(Debug, Clone)]
enum Kind {
    Expr {
        f: ScalarFunction,
        log_form: FunctionExpr,
        log_derivative: FunctionExpr,
    },
    Smoothed {
        base: Box<WeightFunction>,
        delta: f64,
        quad_tol: f64,
    },
}

/// A positive weight `gamma`. Ratios against the weight are taken in log
/// space, so weights far beyond the `f64` range (such as `exp(t)` at
/// `t = 1e4`) can still be compared.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    kind: Kind,
    pub class: WeightClass,
    pub label: String,
}

impl WeightFunction {
    pub fn new(f: ScalarFunction, class: WeightClass) -> Self {
        let log_form = f.expr.log_form();
        let log_derivative = log_form.differentiate();
        let label = f.label.clone();
        WeightFunction {
            kind: Kind::Expr {
                f,
                log_form,
                log_derivative,
            },
            class,
            label,
        }
    }

    /// Parses an expression as an unverified weight.
    pub fn parse(text: &str) -> Result<Self> {
        Ok(WeightFunction::new(
            ScalarFunction::new(parse_expr(text)?, text.trim()),
            WeightClass::Unverified,
        ))
    }

    pub fn with_class(mut self, class: WeightClass) -> Self {
        self.class = class;
        self
    }

    pub fn is_constant_one(&self) -> bool {
        matches!(&self.kind, Kind::Expr { f, .. } if f.expr.as_const() == Some(1.0))
    }

    pub fn expr(&self) -> Option<&FunctionExpr> {
        match &self.kind {
            Kind::Expr { f, .. } => Some(&f.expr),
            Kind::Smoothed { .. } => None,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Expr { f, .. } => f.expr.value(t),
            Kind::Smoothed { base, delta, quad_tol } => integrate(|s| base.value(s), t, t + delta, Tolerance::abs(*quad_tol))
                .map(|q| q.value / delta)
                .unwrap_or(f64::NAN),
        }
    }

    /// `gamma(t)`, failing if it is not positive.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let v = match &self.kind {
            Kind::Expr { f, .. } => f.expr.eval(t)?,
            Kind::Smoothed { .. } => self.value(t),
        };
        if !(v > 0.0) {
            return Err(Error::NonPositiveWeight { t, value: v });
        }
        Ok(v)
    }

    pub fn log_value(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Expr { log_form, .. } => log_form.value(t),
            Kind::Smoothed { .. } => self.value(t).ln(),
        }
    }

    /// `gamma'(t) / gamma(t)`.
    pub fn log_derivative(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Expr { log_derivative, .. } => log_derivative.value(t),
            Kind::Smoothed { base, delta, .. } => {
                // d/dt (1/d) int_t^{t+d} g = (g(t+d) - g(t)) / d
                let num = (base.value(t + delta) - base.value(t)) / delta;
                num / self.value(t)
            }
        }
    }

    /// `|v| / gamma(t)` computed through `log gamma`.
    #[inline]
    pub fn ratio(&self, v: f64, t: f64) -> f64 {
        if v == 0.0 {
            0.0
        } else {
            (v.abs().ln() - self.log_value(t)).exp()
        }
    }

    /// Fails with the first grid time where the weight is not positive.
    pub fn check_positive(&self, grid: &Grid) -> Result<()> {
        for t in grid.times() {
            let v = self.value(t);
            if !(v > 0.0) {
                return Err(Error::NonPositiveWeight { t, value: v });
            }
        }
        Ok(())
    }

    /// Whether `log gamma` is non-decreasing along the grid.
    pub fn is_nondecreasing_on(&self, grid: &Grid) -> bool {
        let mut prev = f64::NEG_INFINITY;
        for t in grid.times() {
            let l = self.log_value(t);
            if l.is_nan() || l < prev - 1e-12 * prev.abs().max(1.0) {
                return false;
            }
            prev = l;
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckVerdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubexpReport {
    pub verdict: CheckVerdict,
    /// `(T, max_theta |gamma(T - theta)/gamma(T) - 1|)` per horizon.
    pub deviations: Vec<(f64, f64)>,
    /// `(T, theta, gamma(T - theta)/gamma(T))`.
    pub ratios: Vec<(f64, f64, f64)>,
}

pub const DEFAULT_THETAS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
pub const DEFAULT_HORIZONS: [f64; 3] = [1e2, 1e3, 1e4];

/// Tests `gamma(t - theta)/gamma(t) -> 1` at increasing horizons.
///
/// Passes when the deviation at the largest horizon is below `tol` and does
/// not increase from horizon to horizon; fails when it settles (changes by
/// less than ten percent) above `2 tol`.
pub fn verify_subexponential(gamma: &WeightFunction, thetas: &[f64], horizons: &[f64], tol: f64) -> Result<SubexpReport> {
    if thetas.is_empty() || horizons.is_empty() {
        return Err(Error::invalid("need at least one theta and one horizon"));
    }
    if thetas.iter().any(|&th| !(th > 0.0)) {
        return Err(Error::invalid("theta values must be positive"));
    }
    let mut deviations = Vec::new();
    let mut ratios = Vec::new();
    for &big_t in horizons {
        let mut dev: f64 = 0.0;
        for &theta in thetas {
            let s = big_t - theta;
            for t in [s, big_t] {
                let v = gamma.value(t);
                if !(v > 0.0) {
                    return Err(Error::NonPositiveWeight { t, value: v });
                }
            }
            let r = (gamma.log_value(s) - gamma.log_value(big_t)).exp();
            ratios.push((big_t, theta, r));
            dev = dev.max((r - 1.0).abs());
        }
        deviations.push((big_t, dev));
    }
    let last = deviations.last().unwrap().1;
    let non_increasing = deviations.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-15);
    let verdict = if last < tol && non_increasing {
        CheckVerdict::Pass
    } else if last > 2.0 * tol && settled(&deviations) {
        CheckVerdict::Fail
    } else {
        CheckVerdict::Inconclusive
    };
    Ok(SubexpReport {
        verdict,
        deviations,
        ratios,
    })
}

fn settled(dev: &[(f64, f64)]) -> bool {
    match dev {
        [.., a, b] => (b.1 - a.1).abs() <= 0.1 * a.1.abs().max(b.1.abs()),
        _ => true,
    }
}

/// `gamma_delta(t) = (1/delta) int_t^{t+delta} gamma`.
pub fn smooth_delta(gamma: &WeightFunction, delta: f64, quad_tol: f64) -> Result<WeightFunction> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta must be positive"));
    }
    Ok(WeightFunction {
        kind: Kind::Smoothed {
            base: Box::new(gamma.clone()),
            delta,
            quad_tol,
        },
        class: gamma.class,
        label: format!("smooth[{}]({})", delta, gamma.label),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transforms {
    /// `int_0^t gamma`.
    pub gamma1: f64,
    /// `int_t^inf gamma`, when the tail converges.
    pub gamma2: Option<f64>,
    /// Tail values at `H`, `2H`, `4H`.
    pub tail_samples: Vec<f64>,
}

/// `Gamma_1(t)` and, when it converges, `Gamma_2(t)`. The tail counts as
/// convergent when two successive doublings of the horizon change the
/// integral by less than `1e-8` relative.
pub fn integral_transforms(gamma: &WeightFunction, t: f64, tail_horizon: f64, quad_tol: f64) -> Result<Transforms> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t must be non-negative"));
    }
    if !(tail_horizon > t) {
        return Err(Error::invalid("tail horizon must exceed t"));
    }
    let tol = Tolerance {
        abs: quad_tol,
        rel: 1e-13,
        noise: 0.0,
    };
    let g = |s: f64| gamma.value(s);
    let gamma1 = integrate(g, 0.0, t, tol)?.value;
    let mut tail_samples = Vec::new();
    let mut acc = integrate(g, t, tail_horizon, tol)?.value;
    tail_samples.push(acc);
    let mut h = tail_horizon;
    for _ in 0..2 {
        acc += integrate(g, h, 2.0 * h, tol)?.value;
        tail_samples.push(acc);
        h *= 2.0;
    }
    let close = |a: f64, b: f64| a.is_finite() && b.is_finite() && (b - a).abs() < 1e-8 * b.abs().max(f64::MIN_POSITIVE);
    let converged = close(tail_samples[0], tail_samples[1]) && close(tail_samples[1], tail_samples[2]);
    Ok(Transforms {
        gamma1,
        gamma2: converged.then(|| tail_samples[2]),
        tail_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Rate {
    Finite(f64),
    Infinite,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: Rate,
    /// `(T, gamma'(T)/gamma(T))`.
    pub samples: Vec<(f64, f64)>,
}

const RATE_CAP: f64 = 1e3;

/// Estimates `beta = lim gamma'/gamma` from samples at the given horizons.
pub fn log_derivative_rate(gamma: &WeightFunction, horizons: &[f64], tol: f64) -> Result<RateEstimate> {
    if horizons.len() < 2 {
        return Err(Error::invalid("need at least two horizons"));
    }
    let samples: Vec<(f64, f64)> = horizons.iter().map(|&t| (t, gamma.log_derivative(t))).collect();
    let vals: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let last = *vals.last().unwrap();
    let prev = vals[vals.len() - 2];
    let increasing = vals.windows(2).all(|w| w[1] > w[0]);
    let rate = if (last.is_infinite() && last > 0.0) || (increasing && last > RATE_CAP) {
        Rate::Infinite
    } else if !last.is_finite() {
        Rate::Inconclusive
    } else if last.abs() < tol || (last - prev).abs() <= tol * last.abs().max(1.0) {
        Rate::Finite(last)
    } else {
        Rate::Inconclusive
    };
    Ok(RateEstimate { rate, samples })
}

/// `int_0^t e^{-alpha (t-s)} gamma(s) ds / (gamma(t) / alpha)`, using the
/// solver's exponential-kernel quadrature.
pub fn conv_exp_ratio(gamma: &WeightFunction, alpha: f64, t: f64, quad_tol: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    let g = gamma.eval(t)?;
    let conv = exp_kernel_integral(|s| gamma.value(s), -alpha, 0.0, t, quad_tol)?;
    Ok(conv * alpha / g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> WeightFunction {
        WeightFunction::parse(s).unwrap()
    }

    #[test]
    fn subexponential_examples() {
        let r = verify_subexponential(&w("(1+t)^2"), &DEFAULT_THETAS, &DEFAULT_HORIZONS, 1e-2).unwrap();
        assert_eq!(r.verdict, CheckVerdict::Pass);
        let r = verify_subexponential(&w("exp(t)"), &DEFAULT_THETAS, &DEFAULT_HORIZONS, 1e-2).unwrap();
        assert_eq!(r.verdict, CheckVerdict::Fail);
        match verify_subexponential(&w("t-5"), &DEFAULT_THETAS, &[3.0, 100.0], 1e-2) {
            Err(Error::NonPositiveWeight { t, .. }) => assert!(t <= 5.0),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn smoothing_examples() {
        let g = smooth_delta(&w("t+1"), 2.0, 1e-12).unwrap();
        for t in [0.0, 1.5, 10.0] {
            assert!((g.value(t) - (t + 2.0)).abs() < 1e-12);
        }
        let g = smooth_delta(&w("(1+t)^2"), 1.0, 1e-10).unwrap();
        let r = g.value(1e3) / 1001f64.powi(2);
        assert!((1.0..=1.01).contains(&r));
    }

    #[test]
    fn transform_examples() {
        let tr = integral_transforms(&w("exp(-t)"), 0.0, 60.0, 1e-12).unwrap();
        assert!((tr.gamma2.unwrap() - 1.0).abs() < 1e-9);
        assert!((tr.gamma1).abs() < 1e-15);
        let tr = integral_transforms(&w("1"), 5.0, 60.0, 1e-12).unwrap();
        assert!(tr.gamma2.is_none());
        assert!((tr.gamma1 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rate_examples() {
        let hs = [1e2, 1e3, 1e4];
        match log_derivative_rate(&w("(1+t)^2"), &hs, 1e-2).unwrap().rate {
            Rate::Finite(b) => assert!(b.abs() < 1e-3),
            r => panic!("{:?}", r),
        }
        match log_derivative_rate(&w("exp(3*t)"), &hs, 1e-2).unwrap().rate {
            Rate::Finite(b) => assert!((b - 3.0).abs() < 1e-12),
            r => panic!("{:?}", r),
        }
        let r = log_derivative_rate(&w("exp(exp(t))"), &[5.0, 10.0, 20.0], 1e-2).unwrap();
        assert_eq!(r.rate, Rate::Infinite);
    }

    #[test]
    fn convolution_ratio_examples() {
        let r = conv_exp_ratio(&w("1"), 1.0, 20.0, 1e-12).unwrap();
        assert!((r - (1.0 - (-20f64).exp())).abs() < 1e-12);
        for alpha in [1.0, 2.0] {
            let r = conv_exp_ratio(&w("(1+t)^2"), alpha, 200.0, 1e-9).unwrap();
            assert!((r - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn huge_weights_use_log_space() {
        let g = w("exp(t)");
        assert!((g.ratio(1.0, 1e4) - 0.0).abs() < 1e-300);
        let r = (g.log_value(1e4 - 2.0) - g.log_value(1e4)).exp();
        assert!((r - (-2f64).exp()).abs() < 1e-12);
    }
}
