//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thetalab::classify::{check_le_preservation, estimate_liapunov, limsup_ratio, CheckOptions, LimsupVerdict, Truth, WindowPolicy};
use thetalab::forcing::{
    decompose, field_from_primitive, moving_average_field, oscillatory_forcing, theta_grid_lobatto, theta_grid_uniform,
    verify_decomposition_identity,
};
use thetalab::funcspec::{parse_expr, ScalarFunction};
use thetalab::runner::{builtin_corpus, run, RunOptions};
use thetalab::solver::{
    growth_envelope, matrix_exponential, matrix_norm, resolvent_integral, solve_scalar, solve_system, spectral_data,
    verify_ave_identity, verify_representation, Grid, Norm, SystemSpec,
};
use thetalab::weights::{conv_exp_ratio, verify_subexponential, CheckVerdict, WeightFunction, DEFAULT_THETAS};

type Outcome = Result<String, String>;

const FORCINGS: [&str; 5] = ["0", "1", "sin(t)", "exp(-2*t)", "2*t*sin(t^2)"];
const QT: f64 = 1e-9;

fn f(s: &str) -> ScalarFunction {
    ScalarFunction::parse(s).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn identity_suite() -> Outcome {
    let start = Instant::now();
    let grid = Grid::spanning(0.0, 50.0, 0.01).unwrap();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for src in FORCINGS {
        let y = solve_scalar(&f(src), 1.0, 0.0, &grid, QT).map_err(|e| e.to_string())?;
        for theta in [0.1, 0.5, 1.0] {
            let r = verify_ave_identity(&y, &f(src), theta, 1e-6, QT).map_err(|e| e.to_string())?;
            worst = worst.max(r.max_residual);
            if !r.pass {
                failures.push(format!("{src} theta={theta}: {:e}", r.max_residual));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures.is_empty() && secs < 30.0,
        format!("max residual {worst:.2e}, {secs:.1} s {}", failures.join("; ")),
    )
}

fn decomposition_suite() -> Outcome {
    let grid = Grid::spanning(0.0, 50.0, 0.01).unwrap();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for src in FORCINGS {
        let y = solve_scalar(&f(src), 1.0, 0.0, &grid, QT).map_err(|e| e.to_string())?;
        for delta in [0.5, 1.0] {
            let dec = decompose(&f(src), delta, &grid, QT).map_err(|e| e.to_string())?;
            let field = field_from_primitive(dec.primitive(), &theta_grid_lobatto(delta, 65), &grid).map_err(|e| e.to_string())?;
            let id = verify_decomposition_identity(&dec, &field, 1e-5, QT).map_err(|e| e.to_string())?;
            let rep = verify_representation(&y, &dec, 1e-5, QT).map_err(|e| e.to_string())?;
            for r in [id, rep] {
                worst = worst.max(r.max_residual);
                if !r.pass {
                    failures.push(format!("{src} D={delta} {}: {:e}", r.name, r.max_residual));
                }
            }
        }
    }
    check(failures.is_empty(), format!("max residual {worst:.2e} {}", failures.join("; ")))
}

fn oscillation_counterexample() -> Outcome {
    let osc = oscillatory_forcing(&parse_expr("t^2").unwrap(), 50.0).map_err(|e| e.to_string())?;
    let fc = &osc.forcing;
    // |f| peaks near t_k = sqrt((k + 1/2) pi); take the last crest below 50.
    let k = ((2500.0 / std::f64::consts::PI) - 0.5).floor();
    let crest = ((k + 0.5) * std::f64::consts::PI).sqrt();
    let grid = Grid::spanning(0.0, 50.0, 0.01).unwrap();
    let sampled = grid.times().map(|t| fc.value(t).abs()).fold(0.0, f64::max);
    let f_max = sampled.max(fc.value(crest).abs());
    let field = moving_average_field(fc, &theta_grid_uniform(1.0, 65), &grid, QT).map_err(|e| e.to_string())?;
    let sup_field = field.max_abs();
    let mut exact_err: f64 = 0.0;
    for (j, th) in field.theta_grid.iter().enumerate() {
        for k in 0..grid.n {
            exact_err = exact_err.max((field.values[j][k] - osc.exact_window(grid.t(k), *th)).abs());
        }
    }
    let y = solve_scalar(fc, 1.0, 0.0, &grid, QT).map_err(|e| e.to_string())?;
    let one = WeightFunction::parse("1").unwrap();
    let v = limsup_ratio(&y, &one, &WindowPolicy::default(), Norm::Spectral).verdict;
    check(
        f_max >= 95.0 && sup_field <= 2.0 + 1e-4 && v == LimsupVerdict::PositiveFinite,
        format!("max|f| {f_max:.3}, sup|f_theta| {sup_field:.6} (closed-form error {exact_err:.1e}), y verdict {v:?}"),
    )
}

fn subexponential_battery() -> Outcome {
    let horizons = [1e2, 1e3, 1e4];
    let mut notes = Vec::new();
    let mut ok = true;
    for g in ["(1+t)^2", "exp(sqrt(1+t))", "1", "(1+t)^(1/2)*log(2+t)"] {
        let r = verify_subexponential(&WeightFunction::parse(g).unwrap(), &DEFAULT_THETAS, &horizons, 1e-2).map_err(|e| e.to_string())?;
        if r.verdict != CheckVerdict::Pass {
            ok = false;
            notes.push(format!("{g}: {:?}", r.verdict));
        }
    }
    let r = verify_subexponential(&WeightFunction::parse("exp(t)").unwrap(), &DEFAULT_THETAS, &horizons, 1e-2).map_err(|e| e.to_string())?;
    let worst = r
        .ratios
        .iter()
        .filter(|(t, _, _)| *t == 1e4)
        .map(|(_, th, v)| (v - (-th).exp()).abs())
        .fold(0.0, f64::max);
    ok &= r.verdict == CheckVerdict::Fail && worst <= 1e-3;
    check(
        ok,
        format!("exp(t) verdict {:?}, |ratio - e^-theta| {worst:.1e} {}", r.verdict, notes.join("; ")),
    )
}

fn convolution_asymptotics() -> Outcome {
    let g = WeightFunction::parse("(1+t)^2").unwrap();
    let mut devs = Vec::new();
    for alpha in [1.0, 2.0] {
        let r = conv_exp_ratio(&g, alpha, 200.0, QT).map_err(|e| e.to_string())?;
        devs.push((alpha, r));
    }
    let ok = devs.iter().all(|(_, r)| (r - 1.0).abs() <= 0.02);
    check(
        ok,
        devs.iter().map(|(a, r)| format!("alpha={a}: {r:.5}")).collect::<Vec<_>>().join(", "),
    )
}

fn corpus_reports(dir: &std::path::Path, jobs: Option<usize>) -> Result<(thetalab::runner::RunManifest, f64), String> {
    let start = Instant::now();
    let m = run(&builtin_corpus(), dir, &RunOptions { jobs, only: None }).map_err(|e| e.to_string())?;
    Ok((m, start.elapsed().as_secs_f64()))
}

fn cross_check_corpus(dir: &std::path::Path) -> Outcome {
    let (m, secs) = corpus_reports(dir, None)?;
    let c = &m.counts;
    let bad: Vec<String> = m
        .scenarios
        .iter()
        .filter(|e| e.consistency != Some(thetalab::classify::Consistency::Agree))
        .map(|e| format!("{}: {:?} {:?}", e.id, e.consistency, e.error))
        .collect();
    check(
        m.scenarios.len() == 12 && c.agree == 12 && c.disagree == 0 && secs < 180.0,
        format!(
            "{} scenarios, agree {} disagree {} inconclusive {} error {}, {secs:.1} s {}",
            m.scenarios.len(),
            c.agree,
            c.disagree,
            c.inconclusive,
            c.error,
            bad.join("; ")
        ),
    )
}

fn liapunov_preservation() -> Outcome {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let forcing = vec![f("sin(t)"), f("cos(t)")];
    let spec = SystemSpec::new(a.clone(), forcing.clone(), DVector::zeros(2)).map_err(|e| e.to_string())?;
    let grid = Grid::spanning(0.0, 30.0, 0.01).unwrap();
    let x = solve_system(&spec, &grid, QT).map_err(|e| e.to_string())?;
    let est = estimate_liapunov(&x, &WindowPolicy::default(), Norm::Spectral);
    let lambda = spectral_data(&a).map_err(|e| e.to_string())?.abscissa;
    let le = check_le_preservation(&forcing, lambda, 1.0, &[0.05, 0.1, 0.2], &grid, &CheckOptions::default())
        .map_err(|e| e.to_string())?;
    let per_eps_ok = le.per_eps.iter().all(|e| e.verdict == Truth::Holds);
    check(
        (0.90..=1.15).contains(&est.estimate) && le.verdict == Truth::Holds && per_eps_ok,
        format!("estimate {:.4} (end value {:.4}), preservation {:?}", est.estimate, est.end_value, le.verdict),
    )
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    matrix_norm(&(a - b), Norm::Spectral) / matrix_norm(b, Norm::Spectral).max(f64::MIN_POSITIVE)
}

fn matrix_exponential_corpus() -> Outcome {
    let (c, s) = (1f64.cos(), 1f64.sin());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
    let sym = (&r + r.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let sym_oracle = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp)) * eig.eigenvectors.transpose();
    let corpus: Vec<(&str, DMatrix<f64>, DMatrix<f64>)> = vec![
        ("zero", DMatrix::zeros(2, 2), DMatrix::identity(2, 2)),
        (
            "diag(-1,-2)",
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0])),
            DMatrix::from_diagonal(&DVector::from_vec(vec![(-1f64).exp(), (-2f64).exp()])),
        ),
        (
            "nilpotent",
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        ),
        (
            "rotation",
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[c, s, -s, c]),
        ),
        ("symmetric 5x5", sym, sym_oracle),
    ];
    let mut worst_rel: f64 = 0.0;
    let mut worst_semi: f64 = 0.0;
    let mut envelope_ok = true;
    for (name, a, oracle) in &corpus {
        let phi = matrix_exponential(a, 1.0).map_err(|e| e.to_string())?;
        worst_rel = worst_rel.max(rel_err(&phi, oracle));
        for (t1, t2) in [(0.3, 0.7), (1.0, 2.0), (2.5, 4.0)] {
            let lhs = matrix_exponential(a, t1 + t2).map_err(|e| e.to_string())?;
            let rhs = matrix_exponential(a, t1).map_err(|e| e.to_string())? * matrix_exponential(a, t2).map_err(|e| e.to_string())?;
            worst_semi = worst_semi.max(rel_err(&rhs, &lhs));
        }
        let env = growth_envelope(a, 20.0, 200, Norm::Spectral).map_err(|e| e.to_string())?;
        if !env.holds {
            envelope_ok = false;
            eprintln!("envelope fails for {name}: {env:?}");
        }
    }
    check(
        worst_rel <= 1e-10 && worst_semi <= 1e-9 && envelope_ok,
        format!("max relative error {worst_rel:.1e}, semigroup {worst_semi:.1e}, envelope {envelope_ok}"),
    )
}

fn perron_resolvent() -> Outcome {
    let gamma = WeightFunction::parse("(1+t)^2").unwrap();
    let stable = resolvent_integral(&(-DMatrix::identity(2, 2)), &gamma, &Grid::new(0.0, 100.0, 3).unwrap(), Norm::Spectral, QT)
        .map_err(|e| e.to_string())?;
    let (m100, m200) = (stable.at(1), stable.at(2));
    let unstable = resolvent_integral(&DMatrix::from_element(1, 1, 1.0), &gamma, &Grid::new(0.0, 20.0, 2).unwrap(), Norm::Spectral, QT)
        .map_err(|e| e.to_string())?;
    let m20 = unstable.at(1);
    check(
        (m200 - m100).abs() <= 1e-2 * m100 && m20 >= 1e5,
        format!("A=-I: M(100) {m100:.6}, M(200) {m200:.6}; A=1: M(20) {m20:.3e}"),
    )
}

fn determinism(first: &std::path::Path, second: &std::path::Path) -> Outcome {
    let (m, _) = corpus_reports(second, Some(1))?;
    let mut diffs = Vec::new();
    for e in &m.scenarios {
        let a = std::fs::read(first.join(&e.id).join("report.json")).map_err(|e| e.to_string())?;
        let b = std::fs::read(second.join(&e.id).join("report.json")).map_err(|e| e.to_string())?;
        if a != b {
            diffs.push(e.id.clone());
        }
    }
    check(
        diffs.is_empty() && m.scenarios.len() == 12,
        format!("{} reports compared (parallel vs one thread), differing: {:?}", m.scenarios.len(), diffs),
    )
}

fn main() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("identity suite", Box::new(identity_suite)),
        ("decomposition and representation", Box::new(decomposition_suite)),
        ("oscillation counterexample", Box::new(oscillation_counterexample)),
        ("subexponential battery", Box::new(subexponential_battery)),
        ("convolution asymptotics", Box::new(convolution_asymptotics)),
        ("cross-check corpus", Box::new(|| cross_check_corpus(first.path()))),
        ("Liapunov preservation", Box::new(liapunov_preservation)),
        ("matrix exponential", Box::new(matrix_exponential_corpus)),
        ("Perron resolvent", Box::new(perron_resolvent)),
        ("determinism", Box::new(|| determinism(first.path(), second.path()))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
