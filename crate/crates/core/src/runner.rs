//! Scenario files in, CSV/JSON artifacts and a run manifest out.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classify::{
    evaluate, CheckOptions, Consistency, Scenario, ScenarioRun, TheoremId, ThetaProfile, WindowPolicy,
};
use crate::error::{Error, Result};
use crate::funcspec::ScalarFunction;
use crate::numfmt::{fmt_f64, to_json_string};
use crate::solver::{Grid, Norm, SystemSpec};
use crate::weights::{WeightClass, WeightFunction};

/// Largest accepted `t_end / h`.
pub const MAX_STEPS: f64 = 1e7;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "THETALAB_OUT";

pub const DEFAULT_OUT: &str = "thetalab-out";

/// The shipped cross-check suite.
pub const BUILTIN_CORPUS: &str = include_str!("../corpus/corpus.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ForcingConfig {
    Scalar(String),
    Vector(Vec<String>),
}

impl ForcingConfig {
    fn exprs(&self) -> Vec<&str> {
        match self {
            ForcingConfig::Scalar(s) => vec![s.as_str()],
            ForcingConfig::Vector(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightConfig {
    Expr(String),
    Declared {
        expr: String,
        #[serde(default = "unverified")]
        declared_class: WeightClass,
    },
}

fn unverified() -> WeightClass {
    WeightClass::Unverified
}

impl WeightConfig {
    fn parts(&self) -> (&str, WeightClass) {
        match self {
            WeightConfig::Expr(e) => (e, WeightClass::Unverified),
            WeightConfig::Declared { expr, declared_class } => (expr, *declared_class),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemConfig {
    Scalar {
        alpha: f64,
        #[serde(default)]
        y0: f64,
    },
    Matrix {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(default)]
        zeta: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_end: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub quad_tol: f64,
    pub le_tol: f64,
    #[serde(flatten)]
    pub policy: WindowPolicy,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quad_tol: 1e-9,
            le_tol: 0.15,
            policy: WindowPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Trajectories,
    Field,
    Profile,
    Report,
    Plotdata,
}

fn all_outputs() -> Vec<OutputKind> {
    use OutputKind::*;
    vec![Trajectories, Field, Profile, Report, Plotdata]
}

fn default_delta() -> f64 {
    1.0
}

fn default_theta_count() -> usize {
    64
}

fn default_epsilons() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}

/// One entry of a scenario file, as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub theorem: TheoremId,
    pub forcing: ForcingConfig,
    pub weight: WeightConfig,
    #[serde(default)]
    pub aux_weight: Option<WeightConfig>,
    pub system: SystemConfig,
    pub grid: GridConfig,
    #[serde(default = "default_delta", alias = "Δ")]
    pub delta: f64,
    #[serde(default = "default_theta_count")]
    pub theta_count: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub norm: Norm,
    #[serde(default = "all_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(skip)]
    resolved: Option<Box<ResolvedParts>>,
}

#[derive(Debug, Clone)]
struct ResolvedParts {
    scenario: Scenario,
}

impl PartialEq for ResolvedParts {
    fn eq(&self, other: &Self) -> bool {
        self.scenario.id == other.scenario.id
    }
}

impl ScenarioConfig {
    /// The validated scenario. Only set on configs returned by the loaders.
    pub fn scenario(&self) -> &Scenario {
        &self.resolved.as_ref().expect("config was validated").scenario
    }

    fn wants(&self, k: OutputKind) -> bool {
        self.outputs.contains(&k)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenarios: Vec<ScenarioConfig>,
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => {
                let _ = write!(out, "/{}", index);
            }
            Segment::Map { key } => {
                let _ = write!(out, "/{}", key.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Enum { variant } => {
                let _ = write!(out, "/{}", variant);
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        "/".into()
    } else {
        out
    }
}

fn config_err(pointer: String, message: impl Into<String>) -> Error {
    Error::Config {
        pointer,
        message: message.into(),
    }
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<Vec<ScenarioConfig>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        config_err(pointer, e.into_inner().to_string())
    })?;
    let mut seen = BTreeMap::new();
    let mut out = Vec::with_capacity(file.scenarios.len());
    for (i, mut cfg) in file.scenarios.into_iter().enumerate() {
        if let Some(prev) = seen.insert(cfg.id.clone(), i) {
            return Err(config_err(
                format!("/scenarios/{}/id", i),
                format!("duplicate scenario id `{}` (also at index {})", cfg.id, prev),
            ));
        }
        let scenario = resolve(&cfg, i)?;
        cfg.resolved = Some(Box::new(ResolvedParts { scenario }));
        out.push(cfg);
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<ScenarioConfig>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn builtin_corpus() -> Vec<ScenarioConfig> {
    parse_config(BUILTIN_CORPUS).expect("builtin corpus is valid")
}

fn resolve(cfg: &ScenarioConfig, i: usize) -> Result<Scenario> {
    let at = |field: &str| format!("/scenarios/{}/{}", i, field);
    let id = &cfg.id;
    let bad = |field: &str, msg: String| config_err(at(field), format!("scenario `{}`: {}", id, msg));
    let parse_fn = |text: &str, field: String| -> Result<ScalarFunction> {
        ScalarFunction::parse(text).map_err(|e| config_err(field, format!("scenario `{}`: {}", id, e)))
    };

    let exprs = cfg.forcing.exprs();
    let forcing = exprs
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let field = match cfg.forcing {
                ForcingConfig::Scalar(_) => at("forcing"),
                ForcingConfig::Vector(_) => at(&format!("forcing/{}", j)),
            };
            parse_fn(e, field)
        })
        .collect::<Result<Vec<_>>>()?;
    let weight_of = |w: &WeightConfig, field: &str| -> Result<WeightFunction> {
        let (expr, class) = w.parts();
        let p = match w {
            WeightConfig::Expr(_) => at(field),
            WeightConfig::Declared { .. } => at(&format!("{}/expr", field)),
        };
        Ok(WeightFunction::new(parse_fn(expr, p)?, class))
    };
    let weight = weight_of(&cfg.weight, "weight")?;
    let aux_weight = cfg.aux_weight.as_ref().map(|w| weight_of(w, "aux_weight")).transpose()?;

    let GridConfig { t_end, h } = cfg.grid;
    if !(t_end.is_finite() && t_end > 0.0 && h.is_finite() && h > 0.0) {
        return Err(bad("grid", "t_end and h must be positive".into()));
    }
    if t_end / h > MAX_STEPS {
        return Err(bad("grid", format!("t_end/h = {} exceeds the cap {}", t_end / h, MAX_STEPS)));
    }
    if !(cfg.delta > 0.0 && cfg.delta <= t_end / 4.0) {
        return Err(bad("delta", format!("Delta must lie in (0, t_end/4], got {}", cfg.delta)));
    }
    if cfg.theta_count < 16 {
        return Err(bad("theta_count", "at least 16 theta rows are needed".into()));
    }
    if cfg.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(bad("epsilons", "epsilons must be positive".into()));
    }
    let tol = &cfg.tolerances;
    if !(tol.quad_tol > 0.0) || tol.policy.windows < 2 {
        return Err(bad("tolerances", "quad_tol must be positive and windows at least 2".into()));
    }
    let grid = Grid::spanning(0.0, t_end, h).map_err(|e| bad("grid", e.to_string()))?;

    let system = match &cfg.system {
        SystemConfig::Scalar { alpha, y0 } => {
            if forcing.len() != 1 {
                return Err(bad("forcing", "a scalar equation takes one forcing".into()));
            }
            SystemSpec::scalar(*alpha, forcing[0].clone(), *y0)
        }
        SystemConfig::Matrix { a, zeta } => {
            let n = a.len();
            if n == 0 || a.iter().any(|r| r.len() != n) {
                return Err(bad("system/A", "A must be a non-empty square array".into()));
            }
            let m = DMatrix::from_row_iterator(n, n, a.iter().flatten().copied());
            let z = match zeta {
                Some(z) => DVector::from_column_slice(z),
                None => DVector::zeros(n),
            };
            SystemSpec::new(m, forcing.clone(), z)
        }
    }
    .map_err(|e| bad("system", e.to_string()))?;

    Ok(Scenario {
        id: cfg.id.clone(),
        theorem: cfg.theorem,
        system,
        weight,
        aux_weight,
        grid,
        delta: cfg.delta,
        epsilons: cfg.epsilons.clone(),
        le_tol: tol.le_tol,
        opts: CheckOptions {
            theta_count: cfg.theta_count,
            quad_tol: tol.quad_tol,
            policy: tol.policy,
            norm: cfg.norm,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub theorem: TheoremId,
    pub status: ScenarioStatus,
    pub consistency: Option<Consistency>,
    pub error: Option<String>,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub agree: usize,
    pub disagree: usize,
    pub inconclusive: usize,
    pub error: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub started: String,
    pub finished: String,
    pub counts: Counts,
    pub scenarios: Vec<ManifestEntry>,
}

impl RunManifest {
    /// 0 when no scenario errored, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.counts.error == 0 {
            0
        } else {
            1
        }
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    res.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Serialises a report with the deterministic float format.
pub fn report_json(run: &ScenarioRun) -> String {
    to_json_string(&serde_json::to_value(&run.report).expect("report serialises"))
}

fn traj_csv(run: &ScenarioRun) -> String {
    let x = &run.solution;
    let mut s = String::from("t");
    if x.dim == 1 {
        s.push_str(",y");
    } else {
        for i in 0..x.dim {
            let _ = write!(s, ",x{}", i + 1);
        }
    }
    s.push('\n');
    for k in 0..x.grid.n {
        s.push_str(&fmt_f64(x.grid.t(k)));
        for v in x.state(k) {
            s.push(',');
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

/// Scalar runs write the signed field; systems write `|F_theta(t)|` in the
/// scenario norm.
fn field_csv(run: &ScenarioRun, scenario: &Scenario) -> Result<Option<String>> {
    let Some(field) = &run.field else { return Ok(None) };
    let mut buf = Vec::new();
    let io = |e| Error::io("field.csv", e);
    if field.components.len() == 1 {
        field.components[0].write_csv(&mut buf).map_err(io)?;
    } else {
        let one = WeightFunction::parse("1")?;
        let rf = field.ratios(&one, scenario.opts.norm);
        let mut m = field.components[0].clone();
        m.values = rf.rows;
        m.write_csv(&mut buf).map_err(io)?;
    }
    Ok(Some(String::from_utf8(buf).expect("ascii csv")))
}

fn profile_for(run: &ScenarioRun, scenario: &Scenario) -> Option<ThetaProfile> {
    run.profile.clone().or_else(|| {
        run.field
            .as_ref()
            .map(|f| ThetaProfile::from_ratios(&f.ratios(&scenario.weight, scenario.opts.norm), &scenario.opts.policy))
    })
}

fn profile_csv(p: &ThetaProfile) -> String {
    let mut s = String::from("theta,l_hat,verdict\n");
    for j in 0..p.theta_grid.len() {
        let v = serde_json::to_value(p.verdicts[j]).ok();
        let v = v.as_ref().and_then(Value::as_str).unwrap_or("");
        let _ = writeln!(s, "{},{},{}", fmt_f64(p.theta_grid[j]), fmt_f64(p.l_hat[j]), v);
    }
    s
}

/// At most this many theta rows go into the plot data.
const PLOT_THETA_ROWS: usize = 9;

/// Long-format `series,t,value` rows. Series: `y` (`|x|/gamma`), `window_max`
/// (window maxima of `y` at the window ends), `f_theta=<theta>` (a spread of
/// field rows over `gamma`) and `Ltheta` (theta in the `t` column).
pub fn emit_plotdata(
    run: &ScenarioRun,
    scenario: &Scenario,
    outputs: &[OutputKind],
    profile: Option<&ThetaProfile>,
) -> String {
    let mut s = String::from("series,t,value\n");
    let grid = &run.solution.grid;
    let row = |s: &mut String, series: &str, t: f64, v: f64| {
        let _ = writeln!(s, "{},{},{}", series, fmt_f64(t), fmt_f64(v));
    };
    if outputs.contains(&OutputKind::Trajectories) {
        for (k, v) in run.weighted.iter().enumerate() {
            row(&mut s, "y", grid.t(k), *v);
        }
    }
    if outputs.contains(&OutputKind::Report) {
        for w in &run.solution_estimate.windows {
            row(&mut s, "window_max", w.t_hi, w.max);
        }
    }
    if outputs.contains(&OutputKind::Field) {
        if let Some(field) = &run.field {
            let rf = field.ratios(&scenario.weight, scenario.opts.norm);
            let n = rf.theta_grid.len();
            let stride = ((n - 1) / (PLOT_THETA_ROWS - 1)).max(1);
            for j in (0..n).step_by(stride) {
                let name = format!("f_theta={}", fmt_f64(rf.theta_grid[j]));
                for (k, v) in rf.rows[j].iter().enumerate() {
                    row(&mut s, &name, grid.t(k), *v);
                }
            }
        }
    }
    if let Some(p) = profile {
        for (th, l) in p.theta_grid.iter().zip(&p.l_hat) {
            row(&mut s, "Ltheta", *th, *l);
        }
    }
    s
}

fn write_outputs(cfg: &ScenarioConfig, run: &ScenarioRun, dir: &Path) -> Result<Vec<PathBuf>> {
    let sc = cfg.scenario();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(&str, String)> = Vec::new();
    if cfg.wants(OutputKind::Trajectories) {
        files.push(("traj.csv", traj_csv(run)));
    }
    if cfg.wants(OutputKind::Field) {
        if let Some(f) = field_csv(run, sc)? {
            files.push(("field.csv", f));
        }
    }
    let profile = (cfg.wants(OutputKind::Profile)).then(|| profile_for(run, sc)).flatten();
    if let Some(p) = &profile {
        files.push(("profile.csv", profile_csv(p)));
    }
    if cfg.wants(OutputKind::Report) {
        files.push(("report.json", report_json(run)));
    }
    if cfg.wants(OutputKind::Plotdata) {
        files.push(("plotdata.csv", emit_plotdata(run, sc, &cfg.outputs, profile.as_ref())));
    }
    files
        .into_iter()
        .map(|(name, body)| {
            let p = dir.join(name);
            write_atomic(&p, body.as_bytes())?;
            Ok(p)
        })
        .collect()
}

fn run_one(cfg: &ScenarioConfig, out: &Path) -> ManifestEntry {
    let sc = cfg.scenario();
    let result = evaluate(sc).and_then(|run| {
        let paths = write_outputs(cfg, &run, &out.join(&cfg.id))?;
        Ok((run.report.consistency, paths))
    });
    match result {
        Ok((c, outputs)) => ManifestEntry {
            id: cfg.id.clone(),
            theorem: cfg.theorem,
            status: ScenarioStatus::Ok,
            consistency: Some(c),
            error: None,
            outputs,
        },
        Err(e) => ManifestEntry {
            id: cfg.id.clone(),
            theorem: cfg.theorem,
            status: ScenarioStatus::Error,
            consistency: None,
            error: Some(e.to_string()),
            outputs: Vec::new(),
        },
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    pub only: Option<String>,
}

/// Default output directory: `$THETALAB_OUT`, else `thetalab-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Runs the scenarios and writes `manifest.json` into `out`.
pub fn run(configs: &[ScenarioConfig], out: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let started = chrono::Utc::now().to_rfc3339();
    let mut selected: Vec<&ScenarioConfig> = configs
        .iter()
        .filter(|c| opts.only.as_ref().map_or(true, |o| &c.id == o))
        .collect();
    if let Some(o) = &opts.only {
        if selected.is_empty() {
            return Err(config_err("/scenarios".into(), format!("no scenario with id `{}`", o)));
        }
    }
    selected.sort_by(|a, b| a.id.cmp(&b.id));
    let go = || selected.par_iter().map(|c| run_one(c, out)).collect::<Vec<_>>();
    let entries = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(go),
        None => go(),
    };
    let mut counts = Counts::default();
    for e in &entries {
        match e.consistency {
            None => counts.error += 1,
            Some(Consistency::Agree) => counts.agree += 1,
            Some(Consistency::Disagree) => counts.disagree += 1,
            Some(Consistency::Inconclusive) => counts.inconclusive += 1,
        }
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        counts,
        scenarios: entries,
    };
    let text = to_json_string(&json!(manifest));
    let written = fs::create_dir_all(out)
        .map_err(|e| Error::io(out, e))
        .and_then(|_| write_atomic(&out.join("manifest.json"), text.as_bytes()));
    match written {
        Ok(()) => Ok(manifest),
        // Each scenario already records the failure.
        Err(_) if manifest.counts.error > 0 => Ok(manifest),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"scenarios":[{"id":"s","theorem":"bounded","forcing":"1","weight":"1",
        "system":{"alpha":1},"grid":{"t_end":20,"h":0.05}}]}"#;

    #[test]
    fn minimal_config_loads() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].scenario().grid.n, 401);
        assert_eq!(c[0].outputs, all_outputs());
    }

    #[test]
    fn bad_expression_names_scenario_and_offset() {
        let text = MINIMAL.replace(r#""forcing":"1""#, r#""forcing":"sin(""#);
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("scenario `s`"), "{}", e);
        assert!(e.contains("byte 4"), "{}", e);
        assert!(e.contains("/scenarios/0/forcing"), "{}", e);
    }

    #[test]
    fn schema_errors_carry_a_pointer() {
        let text = MINIMAL.replace(r#""h":0.05"#, r#""h":"x""#);
        let e = parse_config(&text).unwrap_err();
        match e {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/scenarios/0/grid/h"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn caps_are_enforced() {
        let text = MINIMAL.replace(r#""h":0.05"#, r#""h":1e-7"#);
        assert!(parse_config(&text).unwrap_err().to_string().contains("cap"));
        let text = MINIMAL.replace(r#""grid""#, r#""delta":6,"grid""#);
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn builtin_corpus_has_twelve() {
        assert_eq!(builtin_corpus().len(), 12);
    }

    #[test]
    fn empty_list_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = run(&[], dir.path(), &RunOptions::default()).unwrap();
        assert!(m.scenarios.is_empty());
        assert_eq!(m.exit_code(), 0);
    }

    #[test]
    fn trajectory_only_plotdata() {
        let text = MINIMAL.replace(r#""grid""#, r#""outputs":["trajectories","plotdata"],"grid""#);
        let c = parse_config(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = run(&c, dir.path(), &RunOptions::default()).unwrap();
        let e = &m.scenarios[0];
        assert_eq!(e.outputs.len(), 2);
        let plot = fs::read_to_string(dir.path().join("s/plotdata.csv")).unwrap();
        let series: std::collections::BTreeSet<&str> = plot.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(series.into_iter().collect::<Vec<_>>(), vec!["y"]);
    }

    #[test]
    fn full_scenario_files() {
        let c = parse_config(MINIMAL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = run(&c, dir.path(), &RunOptions { jobs: Some(1), only: None }).unwrap();
        assert_eq!(m.counts.agree, 1, "{:?}", m);
        for f in ["traj.csv", "field.csv", "profile.csv", "report.json", "plotdata.csv"] {
            assert!(dir.path().join("s").join(f).exists(), "{}", f);
        }
        let plot = fs::read_to_string(dir.path().join("s/plotdata.csv")).unwrap();
        assert!(plot.lines().any(|l| l.starts_with("Ltheta,")));
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn unwritable_output_is_a_scenario_error() {
        let c = parse_config(MINIMAL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let m = run(&c, &blocker, &RunOptions::default()).unwrap();
        assert_eq!(m.scenarios[0].status, ScenarioStatus::Error);
        assert_ne!(m.exit_code(), 0);
    }
}
