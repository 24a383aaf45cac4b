//! Finite-horizon classification of ratios such as `|y(t)|/gamma(t)` and the
//! condition/behaviour checks built on it.
//!
//! Every asymptotic statement is replaced by a window test: the tail of the
//! horizon is split into dyadic windows and the maxima of the ratio over
//! those windows are compared. Verdicts always allow `Inconclusive`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::forcing::{field_from_primitive, theta_grid_uniform, MovingAverageField, Primitive, PRIMITIVE_REFINEMENT};
use crate::funcspec::ScalarFunction;
use crate::quadrature::{integrate, Tolerance};
use crate::solver::{
    derivative_trajectory, resolvent_integral, solve_scalar, solve_system, spectral_data, vector_norm, Grid, Norm,
    SpectralData, SystemSpec, Trajectory,
};
use crate::weights::{log_derivative_rate, verify_subexponential, CheckVerdict, Rate, WeightClass, WeightFunction, SubexpReport,
    DEFAULT_HORIZONS, DEFAULT_THETAS};

/// Thresholds of the window test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowPolicy {
    /// Number of dyadic tail windows (at least 2).
    pub windows: usize,
    pub eps_zero: f64,
    pub tau: f64,
    pub rho_inf: f64,
    pub cap: f64,
    /// Window maxima at or below this are treated as exact zeros.
    pub noise_floor: f64,
    /// Minimum `log2` change per window for the trend rules.
    pub trend_slope: f64,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            windows: 3,
            eps_zero: 1e-3,
            tau: 1.5,
            rho_inf: 2.0,
            cap: 1e6,
            noise_floor: 1e-9,
            trend_slope: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimsupVerdict {
    Zero,
    PositiveFinite,
    Infinite,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMax {
    pub t_lo: f64,
    pub t_hi: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimsupEstimate {
    /// Oldest window first.
    pub windows: Vec<WindowMax>,
    /// Maximum over the newest window.
    pub final_estimate: f64,
    pub verdict: LimsupVerdict,
    /// Which rule produced the verdict.
    pub rule: String,
    pub policy: WindowPolicy,
}

/// Dyadic windows `(t0 + L/2^(j+1), t0 + L/2^j]`, oldest first.
pub fn tail_windows(grid: &Grid, count: usize) -> Vec<(f64, f64)> {
    let t0 = grid.t_start;
    let len = grid.t_end() - t0;
    (0..count.max(2))
        .rev()
        .map(|j| {
            let hi = t0 + len / 2f64.powi(j as i32);
            (t0 + len / 2f64.powi(j as i32 + 1), hi)
        })
        .collect()
}

fn window_maxima(grid: &Grid, ratios: &[f64], policy: &WindowPolicy) -> Vec<WindowMax> {
    tail_windows(grid, policy.windows)
        .into_iter()
        .map(|(lo, hi)| {
            let start = (((lo - grid.t_start) / grid.h).floor().max(0.0) as usize).min(grid.n - 1);
            let max = (start..grid.n)
                .filter(|&k| {
                    let t = grid.t(k);
                    t > lo && t <= hi + 1e-9 * grid.h
                })
                .map(|k| ratios[k])
                .fold(0.0, f64::max);
            WindowMax { t_lo: lo, t_hi: hi, max }
        })
        .collect()
}

/// Applies the window rules to a sampled ratio series.
pub fn limsup_series(grid: &Grid, ratios: &[f64], policy: &WindowPolicy) -> LimsupEstimate {
    assert_eq!(ratios.len(), grid.n);
    let windows = window_maxima(grid, ratios, policy);
    let maxima: Vec<f64> = windows.iter().map(|w| w.max).collect();
    let (verdict, rule) = classify_maxima(&maxima, policy);
    LimsupEstimate {
        final_estimate: *maxima.last().unwrap(),
        windows,
        verdict,
        rule: rule.to_string(),
        policy: *policy,
    }
}

fn classify_maxima(m: &[f64], p: &WindowPolicy) -> (LimsupVerdict, &'static str) {
    use LimsupVerdict::*;
    let last = m[m.len() - 1];
    let prev = m[m.len() - 2];
    if last.is_nan() || m.iter().any(|v| v.is_nan()) {
        return (Inconclusive, "non-finite ratio");
    }
    if last <= p.noise_floor {
        return (Zero, "below noise floor");
    }
    if last <= p.eps_zero && last <= 0.5 * prev {
        return (Zero, "small and halving");
    }
    if last >= p.cap {
        return (Infinite, "above cap");
    }
    if last > p.eps_zero && last >= p.rho_inf * prev {
        return (Infinite, "growth factor");
    }
    let slopes: Vec<f64> = m
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                (w[1] / w[0]).log2()
            } else {
                f64::INFINITY
            }
        })
        .collect();
    if slopes.iter().all(|s| *s <= -p.trend_slope) {
        return (Zero, "decreasing trend");
    }
    if last > p.eps_zero && slopes.iter().all(|s| *s >= p.trend_slope) {
        return (Infinite, "increasing trend");
    }
    if last > p.eps_zero && last <= p.tau * prev && prev <= p.tau * last {
        return (PositiveFinite, "stable maxima");
    }
    (Inconclusive, "no rule applies")
}

/// `|v_k| / gamma(t_k)` through the weight's log form.
pub fn ratio_series(grid: &Grid, values: &[f64], gamma: &WeightFunction) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| gamma.ratio(*v, grid.t(k)))
        .collect()
}

/// Limsup estimate of `|x(t)| / gamma(t)`, using `norm` for vector states.
pub fn limsup_ratio(x: &Trajectory, gamma: &WeightFunction, policy: &WindowPolicy, norm: Norm) -> LimsupEstimate {
    let norms = if x.dim == 1 { x.values.clone() } else { x.norms(norm) };
    limsup_series(&x.grid, &ratio_series(&x.grid, &norms, gamma), policy)
}

/// Outcome of one side of a theorem clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Holds,
    Fails,
    Inconclusive,
    Inapplicable,
}

impl Truth {
    fn and(self, other: Truth) -> Truth {
        use Truth::*;
        match (self, other) {
            (Inapplicable, _) | (_, Inapplicable) => Inapplicable,
            (Fails, _) | (_, Fails) => Fails,
            (Holds, Holds) => Holds,
            _ => Inconclusive,
        }
    }

    fn from_bool(b: bool) -> Truth {
        if b {
            Truth::Holds
        } else {
            Truth::Fails
        }
    }

    pub fn is_definite(self) -> bool {
        matches!(self, Truth::Holds | Truth::Fails)
    }
}

/// `x = O(gamma)` from a limsup verdict.
fn is_bigo(v: LimsupVerdict) -> Truth {
    match v {
        LimsupVerdict::Zero | LimsupVerdict::PositiveFinite => Truth::Holds,
        LimsupVerdict::Infinite => Truth::Fails,
        LimsupVerdict::Inconclusive => Truth::Inconclusive,
    }
}

/// `x = o(gamma)`.
fn is_littleo(v: LimsupVerdict) -> Truth {
    match v {
        LimsupVerdict::Zero => Truth::Holds,
        LimsupVerdict::PositiveFinite | LimsupVerdict::Infinite => Truth::Fails,
        LimsupVerdict::Inconclusive => Truth::Inconclusive,
    }
}

/// `limsup |x| / gamma` in `(0, inf)`.
fn is_exact(v: LimsupVerdict) -> Truth {
    match v {
        LimsupVerdict::PositiveFinite => Truth::Holds,
        LimsupVerdict::Zero | LimsupVerdict::Infinite => Truth::Fails,
        LimsupVerdict::Inconclusive => Truth::Inconclusive,
    }
}

/// Settings shared by the condition-side checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckOptions {
    pub theta_count: usize,
    pub quad_tol: f64,
    pub policy: WindowPolicy,
    pub norm: Norm,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            theta_count: 64,
            quad_tol: 1e-9,
            policy: WindowPolicy::default(),
            norm: Norm::Spectral,
        }
    }
}

/// Moving-average fields of each forcing component on a uniform theta grid.
#[derive(Debug, Clone)]
pub struct ForcingField {
    pub components: Vec<MovingAverageField>,
}

impl ForcingField {
    pub fn build(forcing: &[ScalarFunction], delta: f64, grid: &Grid, opts: &CheckOptions) -> Result<Self> {
        if opts.theta_count < 2 {
            return Err(Error::invalid("theta_count must be at least 2"));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("Delta must be positive"));
        }
        let thetas = theta_grid_uniform(delta, opts.theta_count);
        let components = forcing
            .iter()
            .map(|f| {
                let prim = Primitive::build(f, grid.t_end(), grid.h / PRIMITIVE_REFINEMENT, false, opts.quad_tol)?;
                field_from_primitive(&prim, &thetas, grid)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ForcingField { components })
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.components[0].theta_grid
    }

    pub fn grid(&self) -> &Grid {
        &self.components[0].t_grid
    }

    /// Rows of `|F_theta(t)| / gamma(t)` with the vector norm across components.
    pub fn ratios(&self, gamma: &WeightFunction, norm: Norm) -> RatioField {
        let grid = *self.grid();
        let d = self.components.len();
        let rows = (0..self.theta_grid().len())
            .into_par_iter()
            .map(|j| {
                let mut buf = vec![0.0; d];
                (0..grid.n)
                    .map(|k| {
                        for (i, c) in self.components.iter().enumerate() {
                            buf[i] = c.values[j][k];
                        }
                        let v = if d == 1 { buf[0] } else { vector_norm(&buf, norm) };
                        gamma.ratio(v, grid.t(k))
                    })
                    .collect()
            })
            .collect();
        RatioField {
            theta_grid: self.theta_grid().to_vec(),
            grid,
            rows,
        }
    }

    /// Same as `ratios` for a single component.
    pub fn component_ratios(&self, i: usize, gamma: &WeightFunction) -> RatioField {
        ForcingField {
            components: vec![self.components[i].clone()],
        }
        .ratios(gamma, Norm::Spectral)
    }
}

/// `rows[j][k] = |f_{theta_j}(t_k)| / gamma(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioField {
    pub theta_grid: Vec<f64>,
    pub grid: Grid,
    pub rows: Vec<Vec<f64>>,
}

impl RatioField {
    /// `max_theta` of the ratio at each time.
    pub fn sup_series(&self) -> Vec<f64> {
        (0..self.grid.n)
            .map(|k| self.rows.iter().map(|r| r[k]).fold(0.0, f64::max))
            .collect()
    }
}

/// Whether the weight is in a class the single-equation theorems cover.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eligibility {
    pub declared: WeightClass,
    pub nondecreasing_on_grid: bool,
    pub subexponential: Option<SubexpReport>,
    pub eligible: bool,
    pub reason: String,
}

pub fn weight_eligibility(gamma: &WeightFunction, grid: &Grid) -> Eligibility {
    let nondecreasing = gamma.is_nondecreasing_on(grid);
    let subexp = || verify_subexponential(gamma, &DEFAULT_THETAS, &DEFAULT_HORIZONS, 1e-2).ok();
    let (subexponential, eligible, reason) = match gamma.class {
        WeightClass::NonDecreasing | WeightClass::ExponentialRate(_) => (
            None,
            nondecreasing,
            if nondecreasing {
                "non-decreasing on the grid"
            } else {
                "declared non-decreasing but decreases on the grid"
            },
        ),
        WeightClass::Subexponential => {
            let r = subexp();
            let pass = r.as_ref().map(|r| r.verdict == CheckVerdict::Pass).unwrap_or(false);
            (
                r,
                pass,
                if pass {
                    "subexponential by the horizon-trend heuristic on gamma(T - theta)/gamma(T)"
                } else {
                    "declared subexponential but the check did not pass"
                },
            )
        }
        WeightClass::Unverified => {
            if nondecreasing {
                (None, true, "non-decreasing on the grid")
            } else {
                let r = subexp();
                let pass = r.as_ref().map(|r| r.verdict == CheckVerdict::Pass).unwrap_or(false);
                (
                    r,
                    pass,
                    if pass {
                        "subexponential by the horizon-trend heuristic on gamma(T - theta)/gamma(T)"
                    } else {
                        "neither non-decreasing nor verified subexponential"
                    },
                )
            }
        }
    };
    Eligibility {
        declared: gamma.class,
        nondecreasing_on_grid: nondecreasing,
        subexponential,
        eligible,
        reason: reason.to_string(),
    }
}

/// Uniform bound `|f_theta(t)| <= K gamma(t)` over the theta grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BigOCheck {
    /// Largest ratio over the whole field.
    pub k_hat: f64,
    /// Running maximum of the ratio up to the second newest and newest window ends.
    pub running_max_prev: f64,
    pub running_max_last: f64,
    /// Window test on `sup_theta |f_theta| / gamma`.
    pub sup_estimate: LimsupEstimate,
    pub eligible: bool,
    pub verdict: Truth,
    pub reason: String,
}

/// Running-max stability: `R_K <= tau R_{K-1}` holds, `R_K > rho R_{K-1}` fails.
fn running_max_test(grid: &Grid, series: &[f64], policy: &WindowPolicy) -> (f64, f64, Truth) {
    let windows = tail_windows(grid, policy.windows);
    let split = windows[windows.len() - 2].1;
    let mut prev: f64 = 0.0;
    let mut last: f64 = 0.0;
    for (k, v) in series.iter().enumerate() {
        if grid.t(k) <= split + 1e-9 * grid.h {
            prev = prev.max(*v);
        }
        last = last.max(*v);
    }
    let truth = if last.is_nan() {
        Truth::Inconclusive
    } else if last <= policy.tau * prev || last <= policy.noise_floor {
        Truth::Holds
    } else if last > policy.rho_inf * prev {
        Truth::Fails
    } else {
        Truth::Inconclusive
    };
    (prev, last, truth)
}

pub fn bigo_from_ratios(rf: &RatioField, eligibility: &Eligibility, policy: &WindowPolicy) -> BigOCheck {
    let sup = rf.sup_series();
    let (prev, last, stable) = running_max_test(&rf.grid, &sup, policy);
    let sup_estimate = limsup_series(&rf.grid, &sup, policy);
    let numeric = match (stable, sup_estimate.verdict) {
        (_, LimsupVerdict::Infinite) | (Truth::Fails, _) => Truth::Fails,
        (Truth::Holds, LimsupVerdict::Zero | LimsupVerdict::PositiveFinite) => Truth::Holds,
        _ => Truth::Inconclusive,
    };
    let (verdict, reason) = if eligibility.eligible {
        (numeric, format!("running max {} -> {}; sup verdict {:?}", prev, last, sup_estimate.verdict))
    } else {
        (Truth::Inconclusive, format!("weight not eligible: {}", eligibility.reason))
    };
    BigOCheck {
        k_hat: last,
        running_max_prev: prev,
        running_max_last: last,
        sup_estimate,
        eligible: eligibility.eligible,
        verdict,
        reason,
    }
}

pub fn check_bigo(f: &ScalarFunction, gamma: &WeightFunction, delta: f64, grid: &Grid, opts: &CheckOptions) -> Result<BigOCheck> {
    let rf = ForcingField::build(std::slice::from_ref(f), delta, grid, opts)?.ratios(gamma, opts.norm);
    Ok(bigo_from_ratios(&rf, &weight_eligibility(gamma, grid), &opts.policy))
}

/// Per-row window estimates `L(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaProfile {
    pub theta_grid: Vec<f64>,
    pub l_hat: Vec<f64>,
    pub verdicts: Vec<LimsupVerdict>,
    /// `|last - previous|` window maxima per row; the row's noise scale.
    pub noise: Vec<f64>,
    /// `Delta * #{j > 0 : Zero} / (count - 1)`.
    pub zero_set_measure_estimate: f64,
    /// Length covered by adjacent pairs of Zero rows (including theta = 0).
    /// Isolated zero rows contribute nothing.
    pub zero_interval_measure: f64,
    /// Positive thetas whose row is Zero.
    pub zero_thetas: Vec<f64>,
}

impl ThetaProfile {
    pub fn from_ratios(rf: &RatioField, policy: &WindowPolicy) -> ThetaProfile {
        let est: Vec<LimsupEstimate> = rf.rows.par_iter().map(|r| limsup_series(&rf.grid, r, policy)).collect();
        let n = rf.theta_grid.len();
        let delta = rf.theta_grid[n - 1];
        let mut verdicts: Vec<LimsupVerdict> = est.iter().map(|e| e.verdict).collect();
        // f_0 is identically zero.
        verdicts[0] = LimsupVerdict::Zero;
        let l_hat: Vec<f64> = est
            .iter()
            .enumerate()
            .map(|(j, e)| if j == 0 { 0.0 } else { e.final_estimate })
            .collect();
        let noise = est
            .iter()
            .map(|e| {
                let w = &e.windows;
                (w[w.len() - 1].max - w[w.len() - 2].max).abs()
            })
            .collect();
        let zero_thetas: Vec<f64> = (1..n)
            .filter(|&j| verdicts[j] == LimsupVerdict::Zero)
            .map(|j| rf.theta_grid[j])
            .collect();
        let zero_interval_measure = (1..n)
            .filter(|&j| verdicts[j] == LimsupVerdict::Zero && verdicts[j - 1] == LimsupVerdict::Zero)
            .map(|j| rf.theta_grid[j] - rf.theta_grid[j - 1])
            .sum();
        ThetaProfile {
            zero_set_measure_estimate: delta * zero_thetas.len() as f64 / (n - 1) as f64,
            zero_interval_measure,
            theta_grid: rf.theta_grid.clone(),
            l_hat,
            verdicts,
            noise,
            zero_thetas,
        }
    }

    pub fn delta(&self) -> f64 {
        *self.theta_grid.last().unwrap()
    }

    /// Counts `(j1, j2, j1 + j2)` triples with
    /// `L(theta_{j1+j2}) > L(theta_j1) + L(theta_j2) + 5 noise`; returns
    /// `(violations, triples checked)`. Needs a uniform theta grid.
    pub fn subadditivity_violations(&self, noise_floor: f64) -> (usize, usize) {
        let n = self.theta_grid.len();
        let mut violations = 0;
        let mut checked = 0;
        for j1 in 1..n {
            for j2 in j1..n - j1 {
                let j3 = j1 + j2;
                let slack = 5.0 * self.noise[j1].max(self.noise[j2]).max(self.noise[j3]).max(noise_floor);
                checked += 1;
                if self.l_hat[j3] > self.l_hat[j1] + self.l_hat[j2] + slack {
                    violations += 1;
                }
            }
        }
        (violations, checked)
    }

    fn any_positive(&self) -> bool {
        self.verdicts.iter().skip(1).any(|v| *v == LimsupVerdict::PositiveFinite)
    }
}

pub fn theta_profile(f: &ScalarFunction, gamma: &WeightFunction, delta: f64, grid: &Grid, opts: &CheckOptions) -> Result<ThetaProfile> {
    if opts.theta_count < 16 {
        return Err(Error::invalid("theta profile needs at least 16 rows"));
    }
    let rf = ForcingField::build(std::slice::from_ref(f), delta, grid, opts)?.ratios(gamma, opts.norm);
    Ok(ThetaProfile::from_ratios(&rf, &opts.policy))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LittleOCheck {
    pub verdict: Truth,
    pub zero_rows: usize,
    pub positive_rows: usize,
    pub infinite_rows: usize,
    pub inconclusive_rows: usize,
    pub reason: String,
}

pub fn littleo_from_profile(profile: &ThetaProfile, eligibility: &Eligibility) -> LittleOCheck {
    let count = |v: LimsupVerdict| profile.verdicts.iter().skip(1).filter(|x| **x == v).count();
    let zero = count(LimsupVerdict::Zero);
    let pos = count(LimsupVerdict::PositiveFinite);
    let inf = count(LimsupVerdict::Infinite);
    let inc = count(LimsupVerdict::Inconclusive);
    let (verdict, reason) = if !eligibility.eligible {
        (Truth::Inconclusive, format!("weight not eligible: {}", eligibility.reason))
    } else if pos + inf > 0 {
        (Truth::Fails, format!("{} rows do not vanish", pos + inf))
    } else if inc > 0 {
        (Truth::Inconclusive, format!("{} rows inconclusive", inc))
    } else {
        (Truth::Holds, "every row vanishes".to_string())
    };
    LittleOCheck {
        verdict,
        zero_rows: zero,
        positive_rows: pos,
        infinite_rows: inf,
        inconclusive_rows: inc,
        reason,
    }
}

pub fn check_littleo(f: &ScalarFunction, gamma: &WeightFunction, delta: f64, grid: &Grid, opts: &CheckOptions) -> Result<LittleOCheck> {
    let rf = ForcingField::build(std::slice::from_ref(f), delta, grid, opts)?.ratios(gamma, opts.norm);
    let profile = ThetaProfile::from_ratios(&rf, &opts.policy);
    Ok(littleo_from_profile(&profile, &weight_eligibility(gamma, grid)))
}

/// Clauses of the exact-order characterisation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactOrderCheck {
    pub bigo: BigOCheck,
    pub profile: ThetaProfile,
    /// Uniform bound plus some row with a positive limsup.
    pub clause_a: Truth,
    /// Uniform bound plus a null zero set.
    pub clause_c: Truth,
    /// Uniform bound plus no zero row at all; set for exponential-rate weights.
    pub clause_c_prime: Option<Truth>,
    pub subadditivity_violations: usize,
    pub triples_checked: usize,
}

/// Whether `gamma'/gamma` settles at a positive (or infinite) value.
fn exponential_rate_verified(gamma: &WeightFunction, grid: &Grid) -> bool {
    let t = grid.t_end();
    let hs = [grid.t_start + (t - grid.t_start) / 4.0, grid.t_start + (t - grid.t_start) / 2.0, t];
    match log_derivative_rate(gamma, &hs, 1e-2) {
        Ok(r) => match r.rate {
            Rate::Finite(b) => b > 1e-2,
            Rate::Infinite => true,
            Rate::Inconclusive => false,
        },
        Err(_) => false,
    }
}

pub fn exact_order_from_ratios(rf: &RatioField, gamma: &WeightFunction, policy: &WindowPolicy) -> ExactOrderCheck {
    let eligibility = weight_eligibility(gamma, &rf.grid);
    let bigo = bigo_from_ratios(rf, &eligibility, policy);
    let profile = ThetaProfile::from_ratios(rf, policy);
    let row_positive = if profile.any_positive() {
        Truth::Holds
    } else if profile.verdicts.iter().skip(1).all(|v| *v == LimsupVerdict::Zero) {
        Truth::Fails
    } else {
        Truth::Inconclusive
    };
    let clause_a = bigo.verdict.and(row_positive);
    let n = profile.theta_grid.len();
    let null_zero_set = Truth::from_bool(profile.zero_interval_measure <= profile.delta() / n as f64);
    let clause_c = bigo.verdict.and(null_zero_set).and(row_positive);
    let clause_c_prime = matches!(gamma.class, WeightClass::ExponentialRate(_)).then(|| {
        if !exponential_rate_verified(gamma, &rf.grid) {
            Truth::Inapplicable
        } else {
            bigo.verdict.and(Truth::from_bool(profile.zero_thetas.is_empty()))
        }
    });
    let (subadditivity_violations, triples_checked) = profile.subadditivity_violations(policy.noise_floor);
    ExactOrderCheck {
        bigo,
        profile,
        clause_a,
        clause_c,
        clause_c_prime,
        subadditivity_violations,
        triples_checked,
    }
}

pub fn check_exact_order(f: &ScalarFunction, gamma: &WeightFunction, delta: f64, grid: &Grid, opts: &CheckOptions) -> Result<ExactOrderCheck> {
    let rf = ForcingField::build(std::slice::from_ref(f), delta, grid, opts)?.ratios(gamma, opts.norm);
    Ok(exact_order_from_ratios(&rf, gamma, &opts.policy))
}

/// Least-squares fit `log |v(t)| ~ log C - rate t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpFit {
    pub rate: f64,
    pub log_c: f64,
    pub r2: f64,
    /// Decrease of the fitted log-magnitude across the fit window.
    pub log_drop: f64,
    pub samples: usize,
    /// Every sample was below `1e-30`.
    pub trivial: bool,
    pub verdict: Truth,
}

const TINY: f64 = 1e-30;
const MIN_LOG_DROP: f64 = 3.0;

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Fits exponential decay to `(t, v)` samples.
pub fn fit_exponential_decay(samples: &[(f64, f64)]) -> ExpFit {
    let kept: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, v)| v.abs() > TINY)
        .map(|(t, v)| (*t, v.abs().ln()))
        .collect();
    if kept.len() < 3 {
        let trivial = kept.is_empty();
        return ExpFit {
            rate: f64::NAN,
            log_c: f64::NAN,
            r2: f64::NAN,
            log_drop: f64::NAN,
            samples: kept.len(),
            trivial,
            verdict: if trivial { Truth::Holds } else { Truth::Inconclusive },
        };
    }
    let xs: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.1).collect();
    let (slope, icpt, r2) = ols(&xs, &ys);
    let span = xs[xs.len() - 1] - xs[0];
    let rate = -slope;
    let log_drop = rate * span;
    ExpFit {
        rate,
        log_c: icpt,
        r2,
        log_drop,
        samples: kept.len(),
        trivial: false,
        verdict: Truth::from_bool(rate > 0.0 && r2 >= 0.9 && log_drop >= MIN_LOG_DROP),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpStabilityCheck {
    /// `int_0^{2T} f`.
    pub limit: f64,
    /// `int_T^{2T} f`, used to judge whether the limit exists.
    pub tail_increment: f64,
    pub limit_converged: bool,
    /// Fit of `F(t) = L - int_0^t f` on `[T/2, T]`.
    pub side_a: ExpFit,
    /// Fit of `|x(t)|` on `[T/2, T]`.
    pub side_b: ExpFit,
}

const FIT_SAMPLES: usize = 200;

fn fit_window(grid: &Grid) -> Vec<usize> {
    let t0 = grid.t_start;
    let mid = t0 + 0.5 * (grid.t_end() - t0);
    let ks: Vec<usize> = (0..grid.n).filter(|&k| grid.t(k) >= mid).collect();
    let stride = (ks.len() / FIT_SAMPLES).max(1);
    ks.into_iter().step_by(stride).collect()
}

/// Checks exponential decay of the tail integral of `f` against exponential
/// decay of the solution of `x' = -alpha x + f`.
pub fn check_exponential_stability(f: &ScalarFunction, alpha: f64, x0: f64, grid: &Grid, quad_tol: f64) -> Result<ExpStabilityCheck> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("exponential stability needs alpha > 0"));
    }
    let x = solve_scalar(f, alpha, x0, grid, quad_tol)?;
    exp_stability_with_solution(f, &x, quad_tol)
}

fn exp_stability_with_solution(f: &ScalarFunction, x: &Trajectory, quad_tol: f64) -> Result<ExpStabilityCheck> {
    let grid = x.grid;
    let t0 = grid.t_start;
    let big_t = grid.t_end();
    let far = t0 + 2.0 * (big_t - t0);
    // Relative accuracy: F(t) can be far below quad_tol.
    let rel = Tolerance { abs: 0.0, rel: 1e-12, noise: 0.0 };
    let q = |a: f64, b: f64| -> Result<f64> {
        integrate(|s| f.value(s), a, b, rel)
            .map(|q| q.value)
            .map_err(|e| crate::solver::quad_error(f, e))
    };
    let limit = q(t0, far)?;
    let tail_increment = q(big_t, far)?;
    let limit_converged = tail_increment.abs() <= 1e-6 * limit.abs().max(1.0) && tail_increment.abs() <= quad_tol.max(1e-6);
    let idx = fit_window(&grid);
    let side_a = if limit_converged {
        let samples = idx
            .iter()
            .map(|&k| Ok((grid.t(k), q(grid.t(k), far)?)))
            .collect::<Result<Vec<_>>>()?;
        fit_exponential_decay(&samples)
    } else {
        ExpFit {
            rate: f64::NAN,
            log_c: f64::NAN,
            r2: f64::NAN,
            log_drop: f64::NAN,
            samples: 0,
            trivial: false,
            verdict: Truth::Fails,
        }
    };
    let samples: Vec<(f64, f64)> = idx.iter().map(|&k| (grid.t(k), x.at(k))).collect();
    let side_b = fit_exponential_decay(&samples);
    Ok(ExpStabilityCheck {
        limit,
        tail_increment,
        limit_converged,
        side_a,
        side_b,
    })
}

/// Growth rate of `log |x(t)|` on the tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiapunovEstimate {
    /// Least-squares slope of `log |x|` over the newest window.
    pub estimate: f64,
    /// `max (1/t) log |x(t)|` over each window, oldest first.
    pub window_maxima: Vec<WindowMax>,
    /// `(1/T) log |x(T)|`.
    pub end_value: f64,
    /// Difference of the last two window maxima.
    pub trend: f64,
    pub defined: bool,
}

pub fn estimate_liapunov(x: &Trajectory, policy: &WindowPolicy, norm: Norm) -> LiapunovEstimate {
    let grid = x.grid;
    let norms = x.norms(norm);
    let windows = tail_windows(&grid, policy.windows);
    let in_window = |k: usize, (lo, hi): (f64, f64)| {
        let t = grid.t(k);
        t > lo && t <= hi + 1e-9 * grid.h
    };
    let mut defined = true;
    let window_maxima: Vec<WindowMax> = windows
        .iter()
        .map(|&w| {
            let mut m = f64::NEG_INFINITY;
            for k in (0..grid.n).filter(|&k| in_window(k, w)) {
                let t = grid.t(k);
                if norms[k] > 0.0 && t > 0.0 {
                    m = m.max(norms[k].ln() / t);
                } else {
                    defined = false;
                }
            }
            WindowMax { t_lo: w.0, t_hi: w.1, max: m }
        })
        .collect();
    let last = windows[windows.len() - 1];
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..grid.n)
        .filter(|&k| in_window(k, last) && norms[k] > 0.0)
        .map(|k| (grid.t(k), norms[k].ln()))
        .unzip();
    let estimate = if defined && xs.len() >= 2 { ols(&xs, &ys).0 } else { f64::NAN };
    let n = window_maxima.len();
    LiapunovEstimate {
        estimate,
        end_value: norms[grid.n - 1].ln() / grid.t_end(),
        trend: window_maxima[n - 1].max - window_maxima[n - 2].max,
        window_maxima,
        defined: defined && estimate.is_finite(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeEpsilon {
    pub eps: f64,
    /// `C_i(eps)` per component.
    pub c_hat: Vec<f64>,
    pub verdict: Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeCheck {
    pub alpha: f64,
    pub per_eps: Vec<LeEpsilon>,
    pub verdict: Truth,
}

fn exp_weight(rate: f64) -> WeightFunction {
    let f = ScalarFunction::parse(&format!("exp({}*t)", crate::numfmt::fmt_f64(rate))).expect("exponential weight parses");
    WeightFunction::new(f, WeightClass::ExponentialRate(rate))
}

pub fn le_from_field(field: &ForcingField, alpha: f64, eps_list: &[f64], policy: &WindowPolicy) -> LeCheck {
    let per_eps: Vec<LeEpsilon> = eps_list
        .iter()
        .map(|&eps| {
            let w = exp_weight(alpha + eps);
            let mut verdict = Truth::Holds;
            let mut c_hat = Vec::new();
            for i in 0..field.components.len() {
                let rf = field.component_ratios(i, &w);
                let sup = rf.sup_series();
                let (_, last, t) = running_max_test(&rf.grid, &sup, policy);
                c_hat.push(last);
                verdict = verdict.and(t);
            }
            LeEpsilon { eps, c_hat, verdict }
        })
        .collect();
    let verdict = per_eps.iter().fold(Truth::Holds, |acc, e| acc.and(e.verdict));
    LeCheck { alpha, per_eps, verdict }
}

/// `|F_{i,theta}(t)| <= C_i(eps) e^{(alpha + eps) t}` for each listed `eps`.
pub fn check_le_preservation(
    forcing: &[ScalarFunction],
    alpha: f64,
    delta: f64,
    eps_list: &[f64],
    grid: &Grid,
    opts: &CheckOptions,
) -> Result<LeCheck> {
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("epsilons must be positive and non-empty"));
    }
    let field = ForcingField::build(forcing, delta, grid, opts)?;
    Ok(le_from_field(&field, alpha, eps_list, &opts.policy))
}

/// Limsup verdicts of `x`, `x'` and `F` against `gamma` and optionally `Gamma`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub x_gamma: LimsupEstimate,
    pub dx_gamma: LimsupEstimate,
    pub f_gamma: LimsupEstimate,
    pub dx_big: Option<LimsupEstimate>,
    pub f_big: Option<LimsupEstimate>,
    pub x_big: Option<LimsupEstimate>,
    /// `gamma / Gamma`.
    pub gamma_over_big: Option<LimsupEstimate>,
    /// Clause pairs `(name, condition, behaviour)`.
    pub clauses: Vec<(String, Truth, Truth)>,
}

pub fn check_derivative_bounds(
    x: &Trajectory,
    dx: &Trajectory,
    forcing: &Trajectory,
    gamma: &WeightFunction,
    big: Option<&WeightFunction>,
    field: Option<&ForcingField>,
    opts: &CheckOptions,
) -> DerivativeCheck {
    let p = &opts.policy;
    let x_gamma = limsup_ratio(x, gamma, p, opts.norm);
    let dx_gamma = limsup_ratio(dx, gamma, p, opts.norm);
    let f_gamma = limsup_ratio(forcing, gamma, p, opts.norm);
    let mut clauses = Vec::new();
    let (mut dx_big, mut f_big, mut x_big, mut gamma_over_big) = (None, None, None, None);
    match big {
        None => {
            clauses.push((
                "i".to_string(),
                is_bigo(f_gamma.verdict),
                is_bigo(x_gamma.verdict).and(is_bigo(dx_gamma.verdict)),
            ));
            clauses.push((
                "ii".to_string(),
                is_littleo(f_gamma.verdict),
                is_littleo(x_gamma.verdict).and(is_littleo(dx_gamma.verdict)),
            ));
        }
        Some(g_big) => {
            let grid = x.grid;
            let g_vals: Vec<f64> = grid.times().map(|t| gamma.value(t)).collect();
            let gob = limsup_series(&grid, &ratio_series(&grid, &g_vals, g_big), p);
            let dominated = gob.verdict == LimsupVerdict::Zero;
            let fb = limsup_ratio(forcing, g_big, p, opts.norm);
            let db = limsup_ratio(dx, g_big, p, opts.norm);
            let xb = limsup_ratio(x, g_big, p, opts.norm);
            let cond = if !dominated {
                Truth::Inapplicable
            } else {
                let windowed = match field {
                    Some(ff) => {
                        let rf = ff.ratios(gamma, opts.norm);
                        let elig = weight_eligibility(gamma, &grid);
                        let bigo = bigo_from_ratios(&rf, &elig, p);
                        let prof = ThetaProfile::from_ratios(&rf, p);
                        let pos = if prof.any_positive() { Truth::Holds } else { Truth::Fails };
                        bigo.verdict.and(pos)
                    }
                    None => Truth::Inconclusive,
                };
                windowed.and(is_exact(fb.verdict))
            };
            let behaviour = if dominated {
                is_exact(x_gamma.verdict).and(is_exact(db.verdict))
            } else {
                Truth::Inapplicable
            };
            clauses.push(("i".to_string(), cond, behaviour));
            gamma_over_big = Some(gob);
            dx_big = Some(db);
            f_big = Some(fb);
            x_big = Some(xb);
        }
    }
    DerivativeCheck {
        x_gamma,
        dx_gamma,
        f_gamma,
        dx_big,
        f_big,
        x_big,
        gamma_over_big,
        clauses,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnstableCheck {
    pub spectral_abscissa: f64,
    pub dominant_multiplicity: usize,
    pub beta: Rate,
    pub applicable: bool,
    pub bigo: Option<BigOCheck>,
    pub positive_row: Truth,
    pub condition: Truth,
    pub behaviour: LimsupEstimate,
    pub simulation: Truth,
}

pub fn check_unstable_dominant(
    spec: &SystemSpec,
    gamma: &WeightFunction,
    delta: f64,
    grid: &Grid,
    opts: &CheckOptions,
) -> Result<UnstableCheck> {
    let sd = spectral_data(&spec.a)?;
    let field = ForcingField::build(&spec.forcing, delta, grid, opts)?;
    let x = solve_system(spec, grid, opts.quad_tol)?;
    Ok(unstable_from_parts(&sd, &field, &x, gamma, opts))
}

fn unstable_from_parts(sd: &SpectralData, field: &ForcingField, x: &Trajectory, gamma: &WeightFunction, opts: &CheckOptions) -> UnstableCheck {
    let grid = x.grid;
    let t = grid.t_end();
    let hs = [grid.t_start + (t - grid.t_start) / 4.0, grid.t_start + (t - grid.t_start) / 2.0, t];
    let beta = log_derivative_rate(gamma, &hs, 1e-2).map(|r| r.rate).unwrap_or(Rate::Inconclusive);
    let applicable = sd.abscissa >= -1e-12
        && match beta {
            Rate::Finite(b) => b > sd.abscissa + 1e-9,
            Rate::Infinite => true,
            Rate::Inconclusive => false,
        };
    let behaviour = limsup_ratio(x, gamma, &opts.policy, opts.norm);
    let (bigo, positive_row, condition, simulation) = if applicable {
        let rf = field.ratios(gamma, opts.norm);
        // The weight class requirement of the scalar theorems does not apply here.
        let elig = Eligibility {
            declared: gamma.class,
            nondecreasing_on_grid: gamma.is_nondecreasing_on(&grid),
            subexponential: None,
            eligible: true,
            reason: "log-derivative rate exceeds the spectral abscissa".into(),
        };
        let b = bigo_from_ratios(&rf, &elig, &opts.policy);
        let prof = ThetaProfile::from_ratios(&rf, &opts.policy);
        let pos = if prof.any_positive() {
            Truth::Holds
        } else if prof.verdicts.iter().skip(1).all(|v| *v == LimsupVerdict::Zero) {
            Truth::Fails
        } else {
            Truth::Inconclusive
        };
        let cond = b.verdict.and(pos);
        (Some(b), pos, cond, is_exact(behaviour.verdict))
    } else {
        (None, Truth::Inapplicable, Truth::Inapplicable, Truth::Inapplicable)
    };
    UnstableCheck {
        spectral_abscissa: sd.abscissa,
        dominant_multiplicity: sd.dominant_multiplicity,
        beta,
        applicable,
        bigo,
        positive_row,
        condition,
        behaviour,
        simulation,
    }
}

/// Characterisations the cross-check knows how to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremId {
    /// Windowed bound on `f_theta` iff `y = O(gamma)`, non-decreasing `gamma`.
    BigoMonotone,
    /// Same with a subexponential weight.
    BigoSubexponential,
    /// Bounded `f_theta` iff bounded `y`.
    Bounded,
    /// `f_theta = o(gamma)` iff `y = o(gamma)`, subexponential `gamma`.
    LittleoSubexponential,
    LittleoMonotone,
    /// Exact order `gamma` of `y`.
    ExactOrder,
    /// Exact order with an exponentially growing weight: no zero rows at all.
    ExactOrderExponential,
    /// Bounded and not vanishing.
    BoundedNotZero,
    MultiBigo,
    MultiLittleo,
    MultiExactOrder,
    DerivativeBounds,
    /// Liapunov exponent preserved under windowed exponential bounds.
    Liapunov,
    UnstableDominant,
    ExpStability,
    /// Stable spectrum iff the weighted resolvent integral stays bounded.
    Perron,
}

impl TheoremId {
    pub fn name(&self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }

    pub fn is_multidimensional(&self) -> bool {
        use TheoremId::*;
        matches!(
            self,
            MultiBigo | MultiLittleo | MultiExactOrder | DerivativeBounds | Liapunov | UnstableDominant | Perron
        )
    }
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub theorem: TheoremId,
    /// Scalar equations are stored as `1 x 1` systems with `A = -alpha`.
    pub system: SystemSpec,
    pub weight: WeightFunction,
    pub aux_weight: Option<WeightFunction>,
    pub grid: Grid,
    pub delta: f64,
    pub epsilons: Vec<f64>,
    /// Allowed excess of the Liapunov estimate over the spectral abscissa.
    pub le_tol: f64,
    pub opts: CheckOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Condition,
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clause {
    pub side: Side,
    pub verdict: Truth,
    pub evidence: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Agree,
    Disagree,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub scenario: String,
    pub theorem: TheoremId,
    pub clauses: BTreeMap<String, Clause>,
    /// Pairs of clause names the theorem declares equivalent.
    pub equivalences: Vec<(String, String)>,
    pub consistency: Consistency,
    pub notes: Vec<String>,
}

impl ClassificationReport {
    fn new(s: &Scenario) -> Self {
        ClassificationReport {
            scenario: s.id.clone(),
            theorem: s.theorem,
            clauses: BTreeMap::new(),
            equivalences: Vec::new(),
            consistency: Consistency::Inconclusive,
            notes: Vec::new(),
        }
    }

    fn clause<T: Serialize>(&mut self, name: &str, side: Side, verdict: Truth, evidence: &T) {
        let evidence = serde_json::to_value(evidence).unwrap_or(Value::Null);
        self.clauses.insert(name.to_string(), Clause { side, verdict, evidence });
    }

    fn equivalent(&mut self, a: &str, b: &str) {
        self.equivalences.push((a.to_string(), b.to_string()));
    }

    fn finish(mut self) -> Self {
        let mut any_disagree = false;
        let mut all_agree = !self.equivalences.is_empty();
        for (a, b) in &self.equivalences {
            let va = self.clauses[a].verdict;
            let vb = self.clauses[b].verdict;
            match (va, vb) {
                (Truth::Holds, Truth::Holds) | (Truth::Fails, Truth::Fails) => {}
                (Truth::Holds, Truth::Fails) | (Truth::Fails, Truth::Holds) => {
                    any_disagree = true;
                    all_agree = false;
                }
                _ => all_agree = false,
            }
        }
        self.consistency = if any_disagree {
            Consistency::Disagree
        } else if all_agree {
            Consistency::Agree
        } else {
            Consistency::Inconclusive
        };
        self
    }
}

/// Everything computed for a scenario, for reports and plot data.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ClassificationReport,
    pub solution: Trajectory,
    pub field: Option<ForcingField>,
    pub profile: Option<ThetaProfile>,
    /// `|x(t)| / gamma(t)`.
    pub weighted: Vec<f64>,
    pub solution_estimate: LimsupEstimate,
}

pub fn cross_check(s: &Scenario) -> Result<ClassificationReport> {
    evaluate(s).map(|r| r.report)
}

fn stable_note(sd: &SpectralData) -> Option<String> {
    (sd.abscissa >= 0.0).then(|| format!("spectral abscissa {} is not negative; theorem does not apply", sd.abscissa))
}

/// Runs condition-side and simulation-side checks for the scenario's theorem.
pub fn evaluate(s: &Scenario) -> Result<ScenarioRun> {
    use TheoremId::*;
    let opts = &s.opts;
    let p = &opts.policy;
    let grid = &s.grid;
    s.weight.check_positive(grid)?;
    if let Some(w) = &s.aux_weight {
        w.check_positive(grid)?;
    }
    let (x, field) = rayon::join(
        || solve_system(&s.system, grid, opts.quad_tol),
        || ForcingField::build(&s.system.forcing, s.delta, grid, opts),
    );
    let x = x?;
    let field = field?;
    let gamma = &s.weight;
    let solution_estimate = limsup_ratio(&x, gamma, p, opts.norm);
    let weighted = {
        let norms = if x.dim == 1 { x.values.clone() } else { x.norms(opts.norm) };
        ratio_series(grid, &norms, gamma)
    };
    let mut rep = ClassificationReport::new(s);
    let mut profile = None;
    let scalar = s.system.dim() == 1;
    if !s.theorem.is_multidimensional() && !scalar {
        return Err(Error::invalid(format!("theorem {} needs a scalar equation", s.theorem.name())));
    }
    match s.theorem {
        BigoMonotone | BigoSubexponential | Bounded => {
            let rf = field.ratios(gamma, opts.norm);
            let mut elig = weight_eligibility(gamma, grid);
            if s.theorem == Bounded {
                if !gamma.is_constant_one() {
                    return Err(Error::invalid("the bounded theorem uses the weight 1"));
                }
            } else if s.theorem == BigoMonotone && !elig.nondecreasing_on_grid {
                elig.eligible = false;
                elig.reason = "weight decreases on the grid".into();
            } else if s.theorem == BigoSubexponential
                && elig.subexponential.as_ref().map(|r| r.verdict) != Some(CheckVerdict::Pass)
            {
                let r = verify_subexponential(gamma, &DEFAULT_THETAS, &DEFAULT_HORIZONS, 1e-2)?;
                elig.eligible = r.verdict == CheckVerdict::Pass;
                elig.reason = format!("subexponential check: {:?}", r.verdict);
                elig.subexponential = Some(r);
            }
            let bigo = bigo_from_ratios(&rf, &elig, p);
            rep.clause("A", Side::Condition, bigo.verdict, &json!({"bigo": bigo, "weight": elig}));
            rep.clause("C", Side::Simulation, is_bigo(solution_estimate.verdict), &solution_estimate);
            rep.equivalent("A", "C");
        }
        LittleoSubexponential | LittleoMonotone => {
            let rf = field.ratios(gamma, opts.norm);
            let mut elig = weight_eligibility(gamma, grid);
            if s.theorem == LittleoMonotone && !elig.nondecreasing_on_grid {
                elig.eligible = false;
                elig.reason = "weight decreases on the grid".into();
            }
            if s.theorem == LittleoSubexponential && elig.subexponential.as_ref().map(|r| r.verdict) != Some(CheckVerdict::Pass) {
                let r = verify_subexponential(gamma, &DEFAULT_THETAS, &DEFAULT_HORIZONS, 1e-2)?;
                elig.eligible = r.verdict == CheckVerdict::Pass;
                elig.reason = format!("subexponential check: {:?}", r.verdict);
                elig.subexponential = Some(r);
            }
            let prof = ThetaProfile::from_ratios(&rf, p);
            let lo = littleo_from_profile(&prof, &elig);
            rep.clause("A", Side::Condition, lo.verdict, &json!({"littleo": lo, "weight": elig}));
            rep.clause("C", Side::Simulation, is_littleo(solution_estimate.verdict), &solution_estimate);
            rep.equivalent("A", "C");
            profile = Some(prof);
        }
        ExactOrder | ExactOrderExponential => {
            let rf = field.ratios(gamma, opts.norm);
            let eo = exact_order_from_ratios(&rf, gamma, p);
            let sim = is_exact(solution_estimate.verdict);
            let evidence = json!({
                "k_hat": eo.bigo.k_hat,
                "bigo": eo.bigo.verdict,
                "zero_set_measure_estimate": eo.profile.zero_set_measure_estimate,
                "zero_interval_measure": eo.profile.zero_interval_measure,
                "zero_thetas": eo.profile.zero_thetas,
                "subadditivity_violations": eo.subadditivity_violations,
                "triples_checked": eo.triples_checked,
            });
            rep.clause("A", Side::Condition, eo.clause_a, &evidence);
            rep.clause("D", Side::Simulation, sim, &solution_estimate);
            rep.equivalent("A", "D");
            if s.theorem == ExactOrder {
                rep.clause("C", Side::Condition, eo.clause_c, &evidence);
                rep.equivalent("C", "D");
            } else {
                let c = eo.clause_c_prime.unwrap_or(Truth::Inapplicable);
                if eo.clause_c_prime.is_none() {
                    rep.notes.push("weight is not declared exponential-rate".into());
                }
                rep.clause("C'", Side::Condition, c, &evidence);
                rep.equivalent("C'", "D");
            }
            if eo.subadditivity_violations > 0 {
                rep.notes.push(format!("{} subadditivity violations", eo.subadditivity_violations));
            }
            profile = Some(eo.profile);
        }
        BoundedNotZero => {
            if !gamma.is_constant_one() {
                return Err(Error::invalid("the bounded-not-zero theorem uses the weight 1"));
            }
            let rf = field.ratios(gamma, opts.norm);
            let eo = exact_order_from_ratios(&rf, gamma, p);
            rep.clause(
                "A",
                Side::Condition,
                eo.clause_a,
                &json!({"k_hat": eo.bigo.k_hat, "bigo": eo.bigo.verdict, "zero_thetas": eo.profile.zero_thetas}),
            );
            rep.clause("B", Side::Simulation, is_exact(solution_estimate.verdict), &solution_estimate);
            rep.equivalent("A", "B");
            profile = Some(eo.profile);
        }
        MultiBigo | MultiLittleo | MultiExactOrder => {
            let sd = spectral_data(&s.system.a)?;
            let stable = sd.abscissa < 0.0;
            if let Some(n) = stable_note(&sd) {
                rep.notes.push(n);
            }
            let rf = field.ratios(gamma, opts.norm);
            let elig = weight_eligibility(gamma, grid);
            let unit = SystemSpec::new(-DMatrix::identity(s.system.dim(), s.system.dim()), s.system.forcing.clone(), nalgebra::DVector::zeros(s.system.dim()))?;
            let y = solve_system(&unit, grid, opts.quad_tol)?;
            let y_est = limsup_ratio(&y, gamma, p, opts.norm);
            let gate = |t: Truth| if stable { t } else { Truth::Inapplicable };
            let (cond, ev, judge): (Truth, Value, fn(LimsupVerdict) -> Truth) = match s.theorem {
                MultiBigo => {
                    let b = bigo_from_ratios(&rf, &elig, p);
                    (b.verdict, json!({"bigo": b, "spectral": sd}), is_bigo)
                }
                MultiLittleo => {
                    let prof = ThetaProfile::from_ratios(&rf, p);
                    let lo = littleo_from_profile(&prof, &elig);
                    profile = Some(prof);
                    (lo.verdict, json!({"littleo": lo, "spectral": sd}), is_littleo)
                }
                _ => {
                    let b = bigo_from_ratios(&rf, &elig, p);
                    let mut pos = Truth::Fails;
                    let mut inconclusive = false;
                    for i in 0..field.components.len() {
                        let pr = ThetaProfile::from_ratios(&field.component_ratios(i, gamma), p);
                        if pr.any_positive() {
                            pos = Truth::Holds;
                        } else if !pr.verdicts.iter().skip(1).all(|v| *v == LimsupVerdict::Zero) {
                            inconclusive = true;
                        }
                    }
                    if pos == Truth::Fails && inconclusive {
                        pos = Truth::Inconclusive;
                    }
                    (b.verdict.and(pos), json!({"bigo": b, "positive_component_row": pos, "spectral": sd}), is_exact)
                }
            };
            rep.clause("A", Side::Condition, gate(cond), &ev);
            rep.clause("B", Side::Simulation, gate(judge(y_est.verdict)), &y_est);
            rep.clause("C", Side::Simulation, gate(judge(solution_estimate.verdict)), &solution_estimate);
            rep.equivalent("A", "B");
            rep.equivalent("A", "C");
        }
        DerivativeBounds => {
            let sd = spectral_data(&s.system.a)?;
            if let Some(n) = stable_note(&sd) {
                rep.notes.push(n);
            }
            let dx = derivative_trajectory(&x, &s.system)?;
            let ft = crate::solver::forcing_trajectory(&s.system, grid)?;
            let dc = check_derivative_bounds(&x, &dx, &ft, gamma, s.aux_weight.as_ref(), Some(&field), opts);
            let gate = |t: Truth| if sd.abscissa < 0.0 { t } else { Truth::Inapplicable };
            let ev = json!({
                "x_gamma": dc.x_gamma, "dx_gamma": dc.dx_gamma, "f_gamma": dc.f_gamma,
                "dx_aux": dc.dx_big, "f_aux": dc.f_big, "x_aux": dc.x_big, "gamma_over_aux": dc.gamma_over_big,
            });
            for (name, cond, beh) in &dc.clauses {
                let a = format!("{}.A", name);
                let b = format!("{}.B", name);
                rep.clause(&a, Side::Condition, gate(*cond), &ev);
                rep.clause(&b, Side::Simulation, gate(*beh), &ev);
                rep.equivalent(&a, &b);
            }
            if let Some(xb) = &dc.x_big {
                if is_exact(solution_estimate.verdict) == Truth::Holds && xb.verdict != LimsupVerdict::Zero {
                    rep.notes.push("x is of exact order gamma but not observed o(Gamma)".into());
                }
            }
        }
        Liapunov => {
            let sd = spectral_data(&s.system.a)?;
            let le = le_from_field(&field, sd.abscissa, &s.epsilons, p);
            let est = estimate_liapunov(&x, p, opts.norm);
            let sim = if !est.defined {
                Truth::Inconclusive
            } else {
                Truth::from_bool(est.estimate <= sd.abscissa + s.le_tol)
            };
            rep.clause("A", Side::Condition, le.verdict, &json!({"le": le, "spectral": sd}));
            rep.clause("B", Side::Simulation, sim, &json!({"estimate": est, "tolerance": s.le_tol}));
            rep.equivalent("A", "B");
        }
        UnstableDominant => {
            let sd = spectral_data(&s.system.a)?;
            let uc = unstable_from_parts(&sd, &field, &x, gamma, opts);
            if !uc.applicable {
                rep.notes.push("weight rate does not exceed the spectral abscissa, or the abscissa is negative".into());
            }
            rep.clause("A", Side::Condition, uc.condition, &uc);
            rep.clause("B", Side::Simulation, uc.simulation, &uc.behaviour);
            rep.equivalent("A", "B");
        }
        ExpStability => {
            let alpha = -s.system.a[(0, 0)];
            if !(alpha > 0.0) {
                return Err(Error::invalid("exponential stability needs alpha > 0"));
            }
            let es = exp_stability_with_solution(&s.system.forcing[0], &x, opts.quad_tol)?;
            for (fit, what) in [(&es.side_a, "F"), (&es.side_b, "x")] {
                if fit.trivial {
                    rep.notes.push(format!("{} is below 1e-30 on the whole fit window; holds trivially", what));
                }
            }
            rep.clause("A", Side::Condition, es.side_a.verdict, &es);
            rep.clause("B", Side::Simulation, es.side_b.verdict, &es.side_b);
            rep.equivalent("A", "B");
        }
        Perron => {
            let sd = spectral_data(&s.system.a)?;
            let m = resolvent_integral(&s.system.a, gamma, &perron_grid(grid), opts.norm, opts.quad_tol)?;
            let pc = perron_from_resolvent(&m, opts.norm);
            rep.clause("A", Side::Condition, Truth::from_bool(sd.abscissa < 0.0), &sd);
            rep.clause("B", Side::Simulation, pc.verdict, &pc);
            rep.equivalent("A", "B");
        }
    }
    Ok(ScenarioRun {
        report: rep.finish(),
        solution: x,
        field: Some(field),
        profile,
        weighted,
        solution_estimate,
    })
}

/// A coarse grid for the resolvent integral; each sample is a full quadrature.
fn perron_grid(grid: &Grid) -> Grid {
    let steps = 64usize;
    Grid::new(grid.t_start, (grid.t_end() - grid.t_start) / steps as f64, steps + 1).expect("valid grid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronCheck {
    pub m_half: f64,
    pub m_end: f64,
    /// `|M(T) - M(T/2)| / M(T/2)`.
    pub relative_change: f64,
    /// Matrix norm of `R(t, s)` inside the integral.
    pub norm: Norm,
    pub verdict: Truth,
}

/// Bounded when `M` changes by at most one percent over the second half of
/// the horizon, unbounded when it at least doubles.
pub fn perron_from_resolvent(m: &Trajectory, norm: Norm) -> PerronCheck {
    let n = m.grid.n;
    let m_half = m.at((n - 1) / 2);
    let m_end = m.at(n - 1);
    let relative_change = (m_end - m_half).abs() / m_half.abs().max(f64::MIN_POSITIVE);
    let verdict = if relative_change <= 1e-2 {
        Truth::Holds
    } else if m_end >= 2.0 * m_half {
        Truth::Fails
    } else {
        Truth::Inconclusive
    };
    PerronCheck {
        m_half,
        m_end,
        relative_change,
        norm,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: f64, h: f64) -> Grid {
        Grid::spanning(0.0, t, h).unwrap()
    }

    fn series(g: &Grid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        g.times().map(f).collect()
    }

    #[test]
    fn limsup_examples() {
        let p = WindowPolicy::default();
        let g = grid(200.0, 0.01);
        let e = limsup_series(&g, &series(&g, |t| t.sin().abs()), &p);
        assert_eq!(e.verdict, LimsupVerdict::PositiveFinite);
        assert!((e.final_estimate - 1.0).abs() < 1e-3);
        let g = grid(60.0, 0.01);
        assert_eq!(limsup_series(&g, &series(&g, |t| (-t).exp()), &p).verdict, LimsupVerdict::Zero);
        let g = grid(100.0, 0.01);
        assert_eq!(limsup_series(&g, &series(&g, |t| t), &p).verdict, LimsupVerdict::Infinite);
    }

    #[test]
    fn windows_are_dyadic_and_ordered() {
        let g = grid(80.0, 0.5);
        let w = tail_windows(&g, 3);
        assert_eq!(w, vec![(10.0, 20.0), (20.0, 40.0), (40.0, 80.0)]);
    }

    #[test]
    fn bigo_examples() {
        let opts = CheckOptions::default();
        let g = grid(50.0, 0.01);
        let one = WeightFunction::parse("1").unwrap();
        let chirp = ScalarFunction::parse("2*t*sin(t^2)").unwrap();
        let b = check_bigo(&chirp, &one, 1.0, &g, &opts).unwrap();
        assert_eq!(b.verdict, Truth::Holds);
        assert!(b.k_hat <= 2.0 + 1e-6);
        let b = check_bigo(&ScalarFunction::parse("1").unwrap(), &one, 1.0, &g, &opts).unwrap();
        assert_eq!(b.verdict, Truth::Holds);
        assert!((b.k_hat - 1.0).abs() < 1e-9);
        let g = grid(100.0, 0.05);
        let b = check_bigo(&ScalarFunction::parse("t").unwrap(), &one, 1.0, &g, &opts).unwrap();
        assert_eq!(b.verdict, Truth::Fails);
    }

    #[test]
    fn littleo_examples() {
        let opts = CheckOptions::default();
        let one = WeightFunction::parse("1").unwrap();
        let g = grid(400.0, 0.05);
        let l = check_littleo(&ScalarFunction::parse("1/(1+t)").unwrap(), &one, 1.0, &g, &opts).unwrap();
        assert_eq!(l.verdict, Truth::Holds, "{:?}", l);
        let l = check_littleo(&ScalarFunction::parse("1").unwrap(), &one, 1.0, &g, &opts).unwrap();
        assert_eq!(l.verdict, Truth::Fails);
        // Row theta saturates near t = pi / (2 theta); the coarser theta grid
        // lets every row saturate before the first window.
        let g = grid(200.0, 0.005);
        let w = WeightFunction::parse("(1+t)^(1/4)").unwrap();
        let coarse = CheckOptions { theta_count: 16, ..opts };
        let l = check_littleo(&ScalarFunction::parse("2*t*sin(t^2)").unwrap(), &w, 1.0, &g, &coarse).unwrap();
        assert_eq!(l.verdict, Truth::Holds, "{:?}", l);
    }

    #[test]
    fn profile_examples() {
        let opts = CheckOptions::default();
        let one = WeightFunction::parse("1").unwrap();
        let g = grid(40.0, 0.01);
        let p = theta_profile(&ScalarFunction::parse("3").unwrap(), &one, 1.0, &g, &opts).unwrap();
        assert_eq!(p.zero_set_measure_estimate, 0.0);
        assert!((p.l_hat[63] - 3.0).abs() < 1e-9);
        let p = theta_profile(&ScalarFunction::parse("0").unwrap(), &one, 1.0, &g, &opts).unwrap();
        assert_eq!(p.zero_set_measure_estimate, 1.0);
        let p = theta_profile(&ScalarFunction::parse("sin(2*pi*t)").unwrap(), &one, 1.0, &g, &opts).unwrap();
        assert_eq!(p.zero_thetas, vec![1.0]);
        assert_eq!(p.zero_interval_measure, 0.0);
        assert!(p.zero_set_measure_estimate <= 1.0 / 63.0 + 1e-12);
    }

    #[test]
    fn exact_order_examples() {
        let opts = CheckOptions::default();
        let one = WeightFunction::parse("1").unwrap();
        let g = grid(50.0, 0.01);
        for f in ["1", "2*t*sin(t^2)"] {
            let e = check_exact_order(&ScalarFunction::parse(f).unwrap(), &one, 1.0, &g, &opts).unwrap();
            assert_eq!(e.clause_a, Truth::Holds, "{}", f);
            assert_eq!(e.clause_c, Truth::Holds, "{}", f);
            assert_eq!(e.subadditivity_violations, 0, "{}", f);
        }
        let e = check_exact_order(&ScalarFunction::parse("exp(-t)").unwrap(), &one, 1.0, &g, &opts).unwrap();
        assert_eq!(e.clause_a, Truth::Fails);
    }

    #[test]
    fn exponential_stability_examples() {
        let g = grid(12.0, 0.01);
        let c = check_exponential_stability(&ScalarFunction::parse("exp(-2*t)").unwrap(), 1.0, 0.0, &g, 1e-9).unwrap();
        assert!((c.limit - 0.5).abs() < 1e-12);
        assert_eq!(c.side_a.verdict, Truth::Holds);
        assert!((c.side_a.rate - 2.0).abs() < 1e-6, "{:?}", c.side_a);
        assert_eq!(c.side_b.verdict, Truth::Holds);
        assert!((c.side_b.rate - 1.0).abs() < 2e-2, "{:?}", c.side_b);
        let c = check_exponential_stability(&ScalarFunction::parse("1").unwrap(), 1.0, 0.0, &g, 1e-9).unwrap();
        assert_eq!(c.side_a.verdict, Truth::Fails);
        assert_eq!(c.side_b.verdict, Truth::Fails);
        let c = check_exponential_stability(&ScalarFunction::parse("0").unwrap(), 1.0, 1.0, &g, 1e-9).unwrap();
        assert_eq!(c.side_a.verdict, Truth::Holds);
        assert!(c.side_a.trivial);
        assert!((c.side_b.rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn liapunov_examples() {
        let p = WindowPolicy::default();
        let g = grid(30.0, 0.01);
        let tr = |f: fn(f64) -> f64| Trajectory::scalar(g, g.times().map(f).collect(), "x");
        let e = estimate_liapunov(&tr(|t| (2.0 * t).exp()), &p, Norm::Spectral);
        assert!((e.estimate - 2.0).abs() < 1e-9);
        let e = estimate_liapunov(&tr(|t| t * t.exp()), &p, Norm::Spectral);
        assert!(e.estimate >= 1.0 && e.estimate <= 1.12, "{}", e.estimate);
        let e = estimate_liapunov(&tr(|t| (-t).exp()), &p, Norm::Spectral);
        assert!((e.estimate + 1.0).abs() < 1e-9);
    }

    #[test]
    fn le_preservation_examples() {
        let opts = CheckOptions::default();
        let g = grid(20.0, 0.01);
        let eps = [0.05, 0.1, 0.2];
        let f = |s: &str| ScalarFunction::parse(s).unwrap();
        let c = check_le_preservation(&[f("exp(0.5*t)"), f("0")], 1.0, 1.0, &eps, &g, &opts).unwrap();
        assert_eq!(c.verdict, Truth::Holds);
        let c = check_le_preservation(&[f("exp(2*t)"), f("0")], 1.0, 1.0, &eps, &g, &opts).unwrap();
        assert_eq!(c.per_eps[0].verdict, Truth::Fails);
        let c = check_le_preservation(&[f("0")], 1.0, 1.0, &eps, &g, &opts).unwrap();
        assert_eq!(c.verdict, Truth::Holds);
        assert_eq!(c.per_eps[0].c_hat[0], 0.0);
    }

    #[test]
    fn unstable_examples() {
        let opts = CheckOptions::default();
        let g = grid(30.0, 0.01);
        let f = |s: &str| ScalarFunction::parse(s).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let gamma = WeightFunction::parse("exp(2*t)").unwrap();
        let spec = SystemSpec::new(a.clone(), vec![f("exp(2*t)*cos(t)"), f("0")], nalgebra::DVector::zeros(2)).unwrap();
        let u = check_unstable_dominant(&spec, &gamma, 1.0, &g, &opts).unwrap();
        assert_eq!(u.condition, Truth::Holds);
        assert_eq!(u.simulation, Truth::Holds);
        let spec = SystemSpec::new(a, vec![f("0"), f("0")], nalgebra::DVector::zeros(2)).unwrap();
        let u = check_unstable_dominant(&spec, &gamma, 1.0, &g, &opts).unwrap();
        assert_eq!(u.condition, Truth::Fails);
        assert_eq!(u.behaviour.verdict, LimsupVerdict::Zero);
        let spec = SystemSpec::new(DMatrix::zeros(1, 1), vec![f("exp(t)")], nalgebra::DVector::zeros(1)).unwrap();
        let u = check_unstable_dominant(&spec, &WeightFunction::parse("exp(t)").unwrap(), 1.0, &g, &opts).unwrap();
        assert_eq!(u.condition, Truth::Holds);
        assert_eq!(u.simulation, Truth::Holds);
    }

    #[test]
    fn derivative_examples() {
        let opts = CheckOptions::default();
        let g = grid(50.0, 0.01);
        let f = |s: &str| ScalarFunction::parse(s).unwrap();
        let one = WeightFunction::parse("1").unwrap();
        for (forcing, expect_i, expect_ii) in [("1", Truth::Holds, Truth::Fails), ("0", Truth::Holds, Truth::Holds)] {
            let spec = SystemSpec::scalar(1.0, f(forcing), 0.0).unwrap();
            let x = solve_system(&spec, &g, 1e-9).unwrap();
            let dx = derivative_trajectory(&x, &spec).unwrap();
            let ft = crate::solver::forcing_trajectory(&spec, &g).unwrap();
            let d = check_derivative_bounds(&x, &dx, &ft, &one, None, None, &opts);
            assert_eq!((d.clauses[0].1, d.clauses[0].2), (expect_i, expect_i), "{}", forcing);
            assert_eq!((d.clauses[1].1, d.clauses[1].2), (expect_ii, expect_ii), "{}", forcing);
        }
    }
}
