//! Scenarios where the theorem's conditions fail: both sides must fail and
//! the report must still agree.

use thetalab::classify::{cross_check, Consistency, Side, Truth};
use thetalab::runner::parse_config;

const NEGATIVE: &str = r#"{"scenarios": [
  {"id": "bigo-linear", "theorem": "bigo-monotone", "forcing": "t",
   "weight": {"expr": "1", "declared_class": "non_decreasing"},
   "system": {"alpha": 1}, "grid": {"t_end": 100, "h": 0.05}},
  {"id": "bounded-growing", "theorem": "bounded", "forcing": "t*sin(t)", "weight": "1",
   "system": {"alpha": 1}, "grid": {"t_end": 200, "h": 0.02}},
  {"id": "littleo-sine", "theorem": "littleo-monotone", "forcing": "sin(t)",
   "weight": {"expr": "1", "declared_class": "non_decreasing"},
   "system": {"alpha": 1}, "grid": {"t_end": 200, "h": 0.05}},
  {"id": "exact-order-decay", "theorem": "exact-order", "forcing": "exp(-t)",
   "weight": {"expr": "1", "declared_class": "non_decreasing"},
   "system": {"alpha": 1}, "grid": {"t_end": 60, "h": 0.02}},
  {"id": "multi-bigo-linear", "theorem": "multi-bigo", "forcing": ["t", "0"],
   "weight": {"expr": "1", "declared_class": "non_decreasing"},
   "system": {"A": [[-1, 0], [1, -2]]}, "grid": {"t_end": 100, "h": 0.05}},
  {"id": "exp-stability-constant", "theorem": "exp-stability", "forcing": "1", "weight": "1",
   "system": {"alpha": 1}, "grid": {"t_end": 12, "h": 0.01}},
  {"id": "liapunov-fast-forcing", "theorem": "liapunov", "forcing": ["exp(2*t)", "0"], "weight": "1",
   "system": {"A": [[1, 1], [0, 1]]}, "grid": {"t_end": 30, "h": 0.01}},
  {"id": "unstable-unforced", "theorem": "unstable-dominant", "forcing": ["0", "0"],
   "weight": {"expr": "exp(2*t)", "declared_class": {"exponential_rate": 2}},
   "system": {"A": [[1, 0], [0, 0]]}, "grid": {"t_end": 30, "h": 0.01}},
  {"id": "perron-unstable", "theorem": "perron", "forcing": ["0"], "weight": "1",
   "system": {"A": [[1]]}, "grid": {"t_end": 20, "h": 0.1}}
]}"#;

#[test]
fn failing_conditions_agree() {
    for cfg in parse_config(NEGATIVE).unwrap() {
        let rep = cross_check(cfg.scenario()).unwrap();
        assert_eq!(rep.consistency, Consistency::Agree, "{}: {:#?}", cfg.id, rep.clauses);
        for (name, c) in &rep.clauses {
            assert_eq!(c.verdict, Truth::Fails, "{} clause {} ({:?})", cfg.id, name, c.side);
        }
    }
}

#[test]
fn perron_stable_side_agrees() {
    let text = r#"{"scenarios": [{"id": "perron-stable", "theorem": "perron", "forcing": ["0", "0"],
        "weight": "(1+t)^2", "system": {"A": [[-1, 0], [0, -1]]}, "grid": {"t_end": 200, "h": 1}}]}"#;
    let cfg = parse_config(text).unwrap();
    let rep = cross_check(cfg[0].scenario()).unwrap();
    assert_eq!(rep.consistency, Consistency::Agree);
    assert_eq!(rep.clauses["B"].verdict, Truth::Holds);
    assert_eq!(rep.clauses["B"].side, Side::Simulation);
}

#[test]
fn unstable_spectrum_is_inapplicable_for_multi_bigo() {
    let text = r#"{"scenarios": [{"id": "m", "theorem": "multi-bigo", "forcing": ["1", "0"],
        "weight": "1", "system": {"A": [[1, 0], [0, -1]]}, "grid": {"t_end": 20, "h": 0.05}}]}"#;
    let cfg = parse_config(text).unwrap();
    let rep = cross_check(cfg[0].scenario()).unwrap();
    assert_eq!(rep.consistency, Consistency::Inconclusive);
    assert!(rep.clauses.values().all(|c| c.verdict == Truth::Inapplicable));
    assert!(!rep.notes.is_empty());
}

/// Doubling the horizon may settle an inconclusive clause but must never flip
/// a definite one.
#[test]
fn definite_verdicts_survive_a_longer_horizon() {
    use thetalab::solver::Grid;
    for cfg in thetalab::runner::builtin_corpus() {
        let s = cfg.scenario();
        let short = cross_check(s).unwrap();
        let mut long = s.clone();
        long.grid = Grid::new(s.grid.t_start, s.grid.h, 2 * (s.grid.n - 1) + 1).unwrap();
        let long = cross_check(&long).unwrap();
        for (name, c) in &short.clauses {
            let d = &long.clauses[name];
            if c.verdict.is_definite() && d.verdict.is_definite() {
                assert_eq!(c.verdict, d.verdict, "{} clause {}", cfg.id, name);
            }
        }
    }
}
