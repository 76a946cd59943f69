//! Config-driven runs: one TOML document selects the shift, the pair and the
//! task parameters, and every output file starts with the resolved config.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{evaluate_grid, legendre, PressureSurface};
use crate::counting::{
    count_fix_window, count_scan, count_w_scan, deviation_profile, exhaustive, fit_growth_rate,
    gibbs_bound_check, laplace_fourier_check, local_estimate_prediction, sandwich_check, Budget,
    WindowSpec, COUNT_COLUMNS, DEFAULT_BUDGET,
};
use crate::error::{Error, Result};
use crate::manhattan::{
    bs_inequality_scan, correlation_number, rigidity_gap, swap_check, trace_curve, ManhattanCurve,
};
use crate::potential::{
    estimate_critical_exponent, PotentialPair, PotentialSpec, TruncationFamily, TruncationRule,
};
use crate::saddle::{
    convergence_table, gaussian_case, max_grid_step, pressure_case, quadrature_oracle,
    quartic_case, saddle_leading_term,
};
use crate::shift::{parse_word, Cylinder, Shift, ShiftSpec};
use crate::thermo::{bowen_root, pressure, rpf_data, transfer_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    PressureGrid,
    Manhattan,
    Correlation,
    BishopSteger,
    Count,
    Verify,
    Saddle,
    TruncationStudy,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::PressureGrid => "pressure-grid",
            Task::Manhattan => "manhattan",
            Task::Correlation => "correlation",
            Task::BishopSteger => "bishop-steger",
            Task::Count => "count",
            Task::Verify => "verify",
            Task::Saddle => "saddle",
            Task::TruncationStudy => "truncation-study",
        };
        f.write_str(s)
    }
}

/// Shift given inline or as a path to a TOML [`ShiftSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl Default for ShiftSource {
    fn default() -> Self {
        ShiftSource {
            file: None,
            alphabet_size: Some(2),
            transitions: Some(vec![vec![1, 1], vec![1, 1]]),
            labels: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.from];
        }
        let step = (self.to - self.from) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.from + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureParams {
    pub z1: Grid,
    pub z2: Grid,
}

impl Default for PressureParams {
    fn default() -> Self {
        PressureParams {
            z1: Grid { from: -1.0, to: 0.0, count: 11 },
            z2: Grid { from: -1.0, to: 0.0, count: 11 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManhattanParams {
    pub samples: usize,
    /// Check/correlation slopes; empty means five interior curve samples.
    pub slopes: Vec<f64>,
    /// `(α, β)` weights for the Bishop–Steger comparison.
    pub weights: Vec<[f64; 2]>,
}

impl Default for ManhattanParams {
    fn default() -> Self {
        ManhattanParams {
            samples: 41,
            slopes: Vec::new(),
            weights: vec![[1.0, 1.0], [2.0, 1.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountParams {
    /// Window slope; absent means `m*` (or the midpoint slope when `m*` is
    /// not admissible).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<SlopeChoice>,
    pub xi: f64,
    pub t_from: f64,
    pub t_to: f64,
    pub t_step: f64,
    pub cylinder: String,
    /// Half-width of the `n/t` band around `t_m` in the deviation profile.
    pub eps: f64,
    /// Power `β` of `t` added to `ln M(t)` before the growth fit.
    pub prefactor_power: f64,
}

impl Default for CountParams {
    fn default() -> Self {
        CountParams {
            m: None,
            xi: 0.5,
            t_from: 8.0,
            t_to: 24.0,
            t_step: 0.5,
            cylinder: "0".into(),
            eps: 0.2,
            prefactor_power: 1.5,
        }
    }
}

/// `m = 1.1`, `m = "star"` or `m = "midpoint"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlopeChoice {
    Value(f64),
    Named(NamedSlope),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedSlope {
    Star,
    Midpoint,
}

impl std::str::FromStr for SlopeChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "star" | "m*" => Ok(SlopeChoice::Named(NamedSlope::Star)),
            "midpoint" | "mid" => Ok(SlopeChoice::Named(NamedSlope::Midpoint)),
            _ => s
                .parse::<f64>()
                .map(SlopeChoice::Value)
                .map_err(|_| format!("expected a number, `star` or `midpoint`, got `{s}`")),
        }
    }
}

impl SlopeChoice {
    pub fn resolve(self, curve: &ManhattanCurve) -> f64 {
        let (lo, hi) = curve.slope_range();
        match self {
            SlopeChoice::Value(m) => m,
            SlopeChoice::Named(NamedSlope::Star) => curve.m_star(),
            SlopeChoice::Named(NamedSlope::Midpoint) => 0.5 * (lo + hi),
        }
    }
}

impl CountParams {
    pub fn thresholds(&self) -> Vec<f64> {
        let steps = ((self.t_to - self.t_from) / self.t_step + 1e-9).floor() as usize;
        (0..=steps).map(|i| self.t_from + self.t_step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaddleCase {
    Gaussian,
    Quartic,
    Pressure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaddleParams {
    pub case: SaddleCase,
    pub n: Vec<f64>,
    pub lambda: f64,
    pub kappa: f64,
    /// Quadrature step is the largest admissible step divided by this.
    pub refine: f64,
    /// Base point `z` of the pressure case; `x = ∇ℙ(z)`.
    pub z: [f64; 2],
}

impl Default for SaddleParams {
    fn default() -> Self {
        SaddleParams {
            case: SaddleCase::Quartic,
            n: vec![64.0, 256.0, 1024.0],
            lambda: 1.0,
            kappa: 1.0,
            refine: 4.0,
            z: [-0.3, -0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationParams {
    pub rule: TruncationRule,
    pub sizes: Vec<usize>,
    /// `N` grid for the critical exponent estimate.
    pub exponent_grid: Vec<usize>,
}

impl Default for TruncationParams {
    fn default() -> Self {
        TruncationParams {
            rule: TruncationRule::Log {
                scale: 2.0,
                offset: 1.0,
            },
            sizes: vec![8, 16, 32, 64],
            exponent_grid: vec![1 << 12, 1 << 14, 1 << 16, 1 << 18, 1 << 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunParams {
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub budget: u64,
    pub seed: u64,
    pub json_summary: bool,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            out_dir: PathBuf::from("out"),
            threads: None,
            budget: DEFAULT_BUDGET,
            seed: 0,
            json_summary: true,
        }
    }
}

fn standard_f() -> PotentialSpec {
    table(&[("0", 1.0), ("1", std::f64::consts::SQRT_2)])
}

fn standard_g() -> PotentialSpec {
    table(&[("0", 3f64.sqrt()), ("1", 1.0)])
}

fn table(values: &[(&str, f64)]) -> PotentialSpec {
    PotentialSpec {
        depth: Some(1),
        values: Some(values.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
        rule: None,
        n: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub shift: ShiftSource,
    #[serde(default = "standard_f")]
    pub f: PotentialSpec,
    #[serde(default = "standard_g")]
    pub g: PotentialSpec,
    #[serde(default)]
    pub pressure: PressureParams,
    #[serde(default)]
    pub manhattan: ManhattanParams,
    #[serde(default)]
    pub count: CountParams,
    #[serde(default)]
    pub saddle: SaddleParams,
    #[serde(default)]
    pub truncation: TruncationParams,
    #[serde(default)]
    pub run: RunParams,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            task: None,
            shift: ShiftSource::default(),
            f: standard_f(),
            g: standard_g(),
            pressure: PressureParams::default(),
            manhattan: ManhattanParams::default(),
            count: CountParams::default(),
            saddle: SaddleParams::default(),
            truncation: TruncationParams::default(),
            run: RunParams::default(),
            base_dir: None,
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            config_err(&field, e.message())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("--config", format!("{}: {e}", path.display())))?;
        let mut s = Self::from_toml(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn build_shift(&self) -> Result<Arc<Shift>> {
        let src = &self.shift;
        let spec = match &src.file {
            Some(file) => {
                let path = self.resolve(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| config_err("shift.file", format!("{}: {e}", path.display())))?;
                toml::from_str::<ShiftSpec>(&text).map_err(|e| config_err("shift.file", e.to_string()))?
            }
            None => ShiftSpec {
                alphabet_size: src
                    .alphabet_size
                    .ok_or_else(|| config_err("shift.alphabet_size", "missing"))?,
                transitions: src
                    .transitions
                    .clone()
                    .ok_or_else(|| config_err("shift.transitions", "missing"))?,
                labels: src.labels.clone(),
            },
        };
        Ok(Arc::new(Shift::from_spec(&spec)?))
    }

    pub fn build_pair(&self) -> Result<PotentialPair> {
        let shift = self.build_shift()?;
        let f = self.f.build(Some(shift.clone())).map_err(|e| scoped("f", e))?;
        let g = self.g.build(Some(f.shift().clone())).map_err(|e| scoped("g", e))?;
        PotentialPair::new(f, g)
    }

    /// Range checks on the task parameters.
    pub fn validate(&self) -> Result<()> {
        let c = &self.count;
        if !(c.xi > 0.0) {
            return Err(config_err("count.xi", "must be positive"));
        }
        if !(c.t_step > 0.0) || !(c.t_to >= c.t_from) || !(c.t_from > 0.0) {
            return Err(config_err("count.t_*", "need 0 < t_from <= t_to and t_step > 0"));
        }
        if !(c.eps > 0.0) {
            return Err(config_err("count.eps", "must be positive"));
        }
        if let Some(SlopeChoice::Value(m)) = c.m {
            if !(m > 0.0) {
                return Err(config_err("count.m", "must be positive"));
            }
        }
        parse_word(&c.cylinder).map_err(|e| config_err("count.cylinder", e.to_string()))?;
        if self.manhattan.samples < 5 {
            return Err(config_err("manhattan.samples", "need at least 5"));
        }
        for w in &self.manhattan.weights {
            if w[0] < 0.0 || w[1] < 0.0 || w[0] + w[1] == 0.0 {
                return Err(config_err("manhattan.weights", "need α, β >= 0, not both zero"));
            }
        }
        if self.saddle.n.iter().any(|n| !(*n > 0.0)) || self.saddle.n.is_empty() {
            return Err(config_err("saddle.n", "need a nonempty list of positive values"));
        }
        if !(self.saddle.refine >= 1.0) {
            return Err(config_err("saddle.refine", "must be >= 1"));
        }
        if self.truncation.sizes.is_empty() || self.truncation.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("truncation.sizes", "must be strictly increasing"));
        }
        if self.run.threads == Some(0) {
            return Err(config_err("run.threads", "must be positive"));
        }
        for (name, g) in [("pressure.z1", &self.pressure.z1), ("pressure.z2", &self.pressure.z2)] {
            if g.count == 0 {
                return Err(config_err(name, "count must be positive"));
            }
        }
        Ok(())
    }
}

fn scoped(field: &str, e: Error) -> Error {
    match e {
        Error::Config { field: inner, message } => config_err(&format!("{field}.{inner}"), message),
        other => config_err(field, other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Success,
    VerifyFailed,
    BudgetTruncated,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::VerifyFailed => 1,
            Status::BudgetTruncated => 2,
        }
    }
}

/// A CSV table with one definition per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub file: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, columns: &[(&str, &str)]) -> Self {
        Table {
            file: file.into(),
            columns: columns.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    pub fn header(&self) -> String {
        self.columns.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub task: Task,
    pub status: Status,
    pub tables: Vec<Table>,
    pub scalars: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
}

impl Outcome {
    fn new(task: Task) -> Self {
        Outcome {
            task,
            status: Status::Success,
            tables: Vec::new(),
            scalars: BTreeMap::new(),
            notes: BTreeMap::new(),
        }
    }

    fn scalar(&mut self, k: &str, v: f64) {
        self.scalars.insert(k.into(), v);
    }

    fn note(&mut self, k: &str, v: impl ToString) {
        self.notes.insert(k.into(), v.to_string());
    }

    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }
}

fn e(x: f64) -> String {
    format!("{x:.15e}")
}

pub fn run_scenario(scenario: &Scenario) -> Result<Outcome> {
    scenario.validate()?;
    let task = scenario
        .task
        .ok_or_else(|| config_err("task", "no task selected"))?;
    let run = || match task {
        Task::PressureGrid => run_pressure(scenario),
        Task::Manhattan => run_manhattan(scenario),
        Task::Correlation => run_correlation(scenario),
        Task::BishopSteger => run_bishop_steger(scenario),
        Task::Count => run_count(scenario),
        Task::Verify => run_verify(scenario),
        Task::Saddle => run_saddle(scenario),
        Task::TruncationStudy => run_truncation(scenario),
    };
    match scenario.run.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| config_err("run.threads", e.to_string()))?
            .install(run),
        None => run(),
    }
}

fn curve_for(s: &Scenario) -> Result<ManhattanCurve> {
    let surface = Arc::new(PressureSurface::new(s.build_pair()?));
    trace_curve(surface, s.manhattan.samples)
}

fn check_slopes(s: &Scenario, curve: &ManhattanCurve) -> Vec<f64> {
    if !s.manhattan.slopes.is_empty() {
        return s.manhattan.slopes.clone();
    }
    let core: Vec<f64> = curve.core().map(|c| c.m).collect();
    (1..=5).map(|i| core[i * (core.len() - 1) / 6]).collect()
}

fn run_pressure(s: &Scenario) -> Result<Outcome> {
    let surface = PressureSurface::new(s.build_pair()?);
    let rows = evaluate_grid(&surface, &s.pressure.z1.points(), &s.pressure.z2.points())?;
    let mut t = Table::new(
        "pressure.csv",
        &[
            ("z1", "coefficient of f"),
            ("z2", "coefficient of g"),
            ("P", "pressure of z1 f + z2 g"),
            ("dP_dz1", "integral of f against the equilibrium state"),
            ("dP_dz2", "integral of g against the equilibrium state"),
            ("var_f", "second derivative in z1"),
            ("cov", "mixed second derivative"),
            ("var_g", "second derivative in z2"),
        ],
    );
    for r in &rows {
        t.push([r.z[0], r.z[1], r.pressure, r.grad[0], r.grad[1], r.var_f, r.cov, r.var_g].map(e));
    }
    let mut out = Outcome::new(Task::PressureGrid);
    out.scalar("points", rows.len() as f64);
    out.tables.push(t);
    Ok(out)
}

fn curve_table(curve: &ManhattanCurve) -> Table {
    let mut t = Table::new(
        "curve.csv",
        &[
            ("s", "first coordinate a of the curve point"),
            ("q", "second coordinate b, P(-s f - q g) = 0"),
            ("m", "normal slope: integral of g over integral of f"),
            ("H", "correlation number s + m q"),
            ("t_m", "reciprocal of the integral of f"),
            ("a", "same as s"),
            ("b", "same as q"),
        ],
    );
    for c in &curve.samples {
        t.push([c.s, c.q, c.m, c.h, c.t_m, c.s, c.q].map(e));
    }
    t
}

fn run_manhattan(s: &Scenario) -> Result<Outcome> {
    let curve = curve_for(s)?;
    let gap = rigidity_gap(&curve)?;
    let mut out = Outcome::new(Task::Manhattan);
    out.scalar("delta_f", curve.delta_f);
    out.scalar("delta_g", curve.delta_g);
    out.scalar("m_star", gap.m_star);
    out.scalar("H_m_star", gap.h_star);
    out.scalar("gap", gap.gap);
    out.scalar("secant_deviation", gap.secant_deviation);
    let (lo, hi) = curve.slope_range();
    out.scalar("slope_min", lo);
    out.scalar("slope_max", hi);
    out.note("rigid", curve.rigid);
    out.tables.push(curve_table(&curve));
    Ok(out)
}

fn run_correlation(s: &Scenario) -> Result<Outcome> {
    let curve = curve_for(s)?;
    let mut t = Table::new(
        "correlation.csv",
        &[
            ("m", "slope"),
            ("H", "correlation number a + m b"),
            ("a", "curve point first coordinate"),
            ("b", "curve point second coordinate"),
            ("t_m", "reciprocal of the integral of f"),
            ("x1", "integral of f"),
            ("x2", "integral of g"),
        ],
    );
    let slopes = if curve.rigid {
        vec![curve.m_star()]
    } else {
        check_slopes(s, &curve)
    };
    for m in slopes {
        let c = correlation_number(&curve, m)?;
        t.push([c.m, c.h, c.a, c.b, c.t_m, c.x_m[0], c.x_m[1]].map(e));
    }
    let mut out = Outcome::new(Task::Correlation);
    out.scalar("delta_f", curve.delta_f);
    out.scalar("delta_g", curve.delta_g);
    out.scalar("m_star", curve.m_star());
    out.tables.push(t);
    Ok(out)
}

fn run_bishop_steger(s: &Scenario) -> Result<Outcome> {
    let curve = curve_for(s)?;
    let mut t = Table::new(
        "bishop_steger.csv",
        &[
            ("alpha", "weight of f"),
            ("beta", "weight of g"),
            ("h_bs", "Bowen root of alpha f + beta g"),
            ("sampled_max", "max over curve samples of H(m)/(alpha + m beta)"),
            ("refined_max", "same after golden-section refinement"),
            ("a_over_b", "a/b at the refined maximizer"),
            ("equality_residual", "|refined_max - h_bs|"),
        ],
    );
    for w in &s.manhattan.weights {
        let r = bs_inequality_scan(&curve, w[0], w[1])?;
        t.push([r.alpha, r.beta, r.h_bs, r.sampled_max, r.refined_max, r.refined_ab, r.equality_residual()].map(e));
    }
    let mut out = Outcome::new(Task::BishopSteger);
    out.tables.push(t);
    Ok(out)
}

fn run_count(s: &Scenario) -> Result<Outcome> {
    let pair = s.build_pair()?;
    let shift = pair.shift().clone();
    let surface = Arc::new(PressureSurface::new(pair.clone()));
    let curve = trace_curve(surface, s.manhattan.samples)?;
    let (lo, hi) = curve.slope_range();
    let p = &s.count;
    let m = match p.m {
        Some(choice) => choice.resolve(&curve),
        None if curve.rigid => curve.m_star(),
        None => {
            let ms = curve.m_star();
            if lo < ms && ms < hi {
                ms
            } else {
                0.5 * (lo + hi)
            }
        }
    };
    let ts = p.thresholds();
    let budget = Budget::new(s.run.budget);
    let report = count_scan(&shift, &pair, m, p.xi, &ts, &budget)?;
    let cyl = Cylinder::new(&shift, parse_word(&p.cylinder)?)?;
    let z = shift.pick_sample_word(&cyl)?;
    let w_report = count_w_scan(&shift, &pair, m, p.xi, &ts, &cyl, &z, &budget)?;

    let mut out = Outcome::new(Task::Count);
    let cols: Vec<(&str, &str)> = COUNT_COLUMNS.to_vec();
    let mut t = Table::new("report.csv", &cols);
    t.rows = report.csv_rows(Some(&w_report));
    out.tables.push(t);

    out.scalar("m", m);
    out.scalar("xi", p.xi);
    out.scalar("nodes", (report.nodes() + w_report.nodes()) as f64);
    out.scalar("boundary_hits", (report.boundary_hits + w_report.boundary_hits) as f64);
    out.scalar("delta_f", curve.delta_f);
    out.scalar("delta_g", curve.delta_g);
    out.scalar("m_star", curve.m_star());
    let corr = correlation_number(&curve, m);
    if let Ok(c) = &corr {
        out.scalar("H", c.h);
        out.scalar("t_m", c.t_m);
    }
    match fit_growth_rate(&report, None, 0.0) {
        Ok(f) => {
            out.scalar("alpha_hat_raw", f.alpha_hat);
            out.scalar("alpha_hat_raw_stderr", f.stderr);
        }
        Err(err) => out.note("alpha_hat_raw", err),
    }
    match fit_growth_rate(&report, None, p.prefactor_power) {
        Ok(f) => {
            out.scalar("alpha_hat", f.alpha_hat);
            out.scalar("stderr", f.stderr);
        }
        Err(err) => out.note("alpha_hat", err),
    }
    if let Ok(c) = &corr {
        let mut dev = Table::new(
            "deviation.csv",
            &[
                ("t", "threshold"),
                ("near", "sum of M_n/n over |n/t - t_m| < eps"),
                ("far", "sum of M_n/n over the rest"),
                ("far_fraction", "far / (near + far)"),
            ],
        );
        for r in deviation_profile(&report, c.t_m, p.eps) {
            dev.push([r.t, r.near, r.far, r.far_fraction()].map(e));
        }
        out.tables.push(dev);
    }
    match local_estimate_prediction(&curve, m, &cyl, &z, p.xi, ts[ts.len() - 1]) {
        Ok(pred) => {
            out.scalar("prediction_constant", pred.constant());
            out.scalar("p_bar", pred.p_bar);
            out.scalar("c_p", pred.c_p);
            out.scalar("det_factor", pred.det_factor);
            let mut nt = Table::new(
                "local_estimate.csv",
                &[
                    ("t", "threshold"),
                    ("Mp_t", "sum over n of W_n_p / n"),
                    ("normalized", "t^1.5 e^(-H t) Mp_t"),
                    ("ratio", "normalized / prediction constant"),
                    ("ratio_curv", "normalized / (prediction constant * det_factor)"),
                ],
            );
            for (i, &tt) in w_report.t.iter().enumerate() {
                if !w_report.complete[i] {
                    continue;
                }
                let mp = w_report.weighted(i);
                let norm = tt.powf(1.5) * (-pred.h * tt).exp() * mp;
                nt.push(
                    [tt, mp, norm, norm / pred.constant(), norm / pred.constant_with_curvature()].map(e),
                );
            }
            out.tables.push(nt);
        }
        Err(err) => out.note("local_estimate", err),
    }
    if report.truncated() || w_report.truncated() {
        out.status = Status::BudgetTruncated;
        out.note("budget", format!("node budget {} reached; later thresholds incomplete", s.run.budget));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub measured: String,
    pub tolerance: String,
}

fn check(name: &str, measured: f64, tol: f64, pass: bool) -> Check {
    Check {
        name: name.into(),
        pass,
        measured: format!("{measured:.3e}"),
        tolerance: format!("{tol:.1e}"),
    }
}

fn failed(name: &str, err: Error, tol: f64) -> Check {
    Check {
        name: name.into(),
        pass: false,
        measured: err.to_string().replace(',', ";"),
        tolerance: format!("{tol:.1e}"),
    }
}

fn within(name: &str, measured: Result<f64>, tol: f64) -> Check {
    match measured {
        Ok(v) => check(name, v, tol, v.abs() < tol),
        Err(err) => failed(name, err, tol),
    }
}

/// Invariant suite of every module on the configured pair.
pub fn verify_checks(s: &Scenario) -> Result<Vec<Check>> {
    let pair = s.build_pair()?;
    let shift = pair.shift().clone();
    let full2 = Shift::full(2)?;
    let full2 = Arc::new(full2);
    let mut out = Vec::new();

    out.push(within(
        "pressure_closed_form",
        (|| {
            let mut worst = 0.0f64;
            for i in 0..21 {
                let (a, b) = (-2.0 + 0.2 * i as f64, 1.5 - 0.15 * i as f64);
                let u = crate::potential::Potential::new(full2.clone(), 1, vec![a, b])?;
                worst = worst.max((pressure(&full2, &u)? - (a.exp() + b.exp()).ln()).abs());
            }
            Ok(worst)
        })(),
        1e-10,
    ));
    out.push(within(
        "golden_mean_entropy",
        (|| {
            let g = Arc::new(Shift::golden_mean());
            let u = crate::potential::Potential::constant(g.clone(), 0.0)?;
            Ok(pressure(&g, &u)? - ((1.0 + 5f64.sqrt()) / 2.0).ln())
        })(),
        1e-10,
    ));
    out.push(within(
        "bowen_root",
        (|| {
            let f = crate::potential::Potential::new(full2.clone(), 1, vec![2f64.ln(), 4f64.ln()])?;
            Ok(bowen_root(&full2, &f)? - ((1.0 + 5f64.sqrt()) / 2.0).log2())
        })(),
        1e-8,
    ));
    out.push(within(
        "rpf_residuals",
        (|| {
            let u = pair.combination([-0.5, -0.5]);
            let tm = transfer_matrix(&shift, &u)?;
            let rpf = rpf_data(&shift, &u)?;
            let (r, l, inv) = rpf.residuals(&tm);
            Ok(r.max(l).max(inv))
        })(),
        1e-10,
    ));

    let surface = Arc::new(PressureSurface::new(pair.clone()));
    let legendre_tol = 1e-7;
    let mut worst = Ok(0.0f64);
    let zs = Grid { from: -0.6, to: -0.2, count: 5 }.points();
    'grid: for &z1 in &zs {
        for &z2 in &zs {
            let r = surface.grad([z1, z2]).and_then(|x| legendre(&surface, x)).map(|lp| {
                (lp.z[0] - z1).abs().max((lp.z[1] - z2).abs()).max(lp.young_residual() * 10.0)
            });
            match r {
                Ok(v) => worst = worst.map(|w| w.max(v)),
                Err(err) => {
                    worst = Err(err);
                    break 'grid;
                }
            }
        }
    }
    out.push(within("legendre_round_trip", worst, legendre_tol));

    let curve = trace_curve(surface.clone(), s.manhattan.samples)?;
    let first = curve.samples.iter().find(|c| !c.extended).unwrap();
    let last = curve.samples.iter().rev().find(|c| !c.extended).unwrap();
    let endpoint = (first.s.abs() + (first.q - curve.delta_g).abs())
        .max((last.s - curve.delta_f).abs() + last.q.abs());
    out.push(check("curve_endpoints", endpoint, 1e-8, endpoint < 1e-8));
    out.push(check(
        "curve_pressure_residual",
        curve.max_pressure_residual(),
        1e-10,
        curve.max_pressure_residual() < 1e-10,
    ));
    if curve.rigid {
        let d = curve.secant_deviation();
        out.push(check("curve_on_secant", d, 1e-9, d < 1e-9));
    } else {
        let min = curve.q_second_differences().into_iter().fold(f64::INFINITY, f64::min);
        out.push(check("curve_strictly_convex", min, 0.0, min > 0.0));
    }
    match rigidity_gap(&curve) {
        Ok(g) if curve.rigid => out.push(check("rigidity_gap_zero", g.gap, 1e-8, g.gap.abs() < 1e-8)),
        Ok(g) => out.push(check("rigidity_gap_positive", g.gap, 1e-4, g.gap > 1e-4)),
        Err(err) => out.push(failed("rigidity_gap", err, 1e-8)),
    }
    if !curve.rigid {
        let swapped = trace_curve(Arc::new(PressureSurface::new(pair.swapped())), s.manhattan.samples)?;
        let mut worst = Ok(0.0f64);
        for m in check_slopes(s, &curve) {
            worst = worst.and_then(|w| Ok(w.max(swap_check(&curve, &swapped, m)?)));
        }
        out.push(within("swap_identity", worst, 1e-7));
        for w in &s.manhattan.weights {
            let name = format!("bishop_steger_{}_{}", w[0], w[1]);
            match bs_inequality_scan(&curve, w[0], w[1]) {
                Ok(r) => {
                    let v = r.equality_residual().max(r.ratio_residual() * 1e-3);
                    out.push(check(&name, v, 1e-6, r.equality_residual() < 1e-6 && r.ratio_residual() < 1e-3));
                }
                Err(err) => out.push(failed(&name, err, 1e-6)),
            }
        }
    }

    let cylinders: Vec<Cylinder> = shift.cylinders(1).into_iter().chain(shift.cylinders(2).into_iter().take(1)).collect();
    let mut worst = Ok(0.0f64);
    for c in &cylinders {
        let zp = shift.pick_sample_word(c)?;
        for z in [[0.0, 0.0], [-0.4, -0.2], [-0.7, -0.1]] {
            for n in [c.depth(), 6, 10] {
                worst = worst.and_then(|w| Ok(w.max(laplace_fourier_check(&shift, &pair, c, &zp, n, z)?.relative_residual)));
            }
        }
    }
    out.push(within("laplace_fourier", worst, 1e-9));

    let mut rng = ChaCha8Rng::seed_from_u64(s.run.seed);
    let budget = Budget::new(s.run.budget);
    let mut mismatches = 0u32;
    for _ in 0..20 {
        let n = rng.gen_range(1..=10);
        let m = rng.gen_range(0.5..2.0);
        let xi = rng.gen_range(0.2..2.0);
        let t = rng.gen_range(0.5..1.5) * n as f64;
        let spec = WindowSpec::new(m, xi, t)?;
        if count_fix_window(&shift, &pair, &spec, n, &budget)? != exhaustive::fix_window(&shift, &pair, &spec, n) {
            mismatches += 1;
        }
    }
    out.push(check("pruning_exact", mismatches as f64, 0.0, mismatches == 0));

    // window around an actual periodic point, so the sandwich is not vacuous
    let n = 9;
    let word = shift.enumerate_fix(n).into_iter().nth(1 << (n - 1)).unwrap_or_else(|| shift.enumerate_fix(n).remove(0));
    let (x, y) = exhaustive::periodic_sums(&pair, &word);
    let sandwich = WindowSpec::new(y / x, 0.5, x - 0.25)
        .and_then(|spec| sandwich_check(&shift, &pair, &spec, pair.depth(), n, &budget));
    match sandwich {
        Ok(r) => out.push(check("sandwich", r.periodic as f64, 0.0, r.holds)),
        Err(err) => out.push(failed("sandwich", err, 0.0)),
    }
    let c0 = &cylinders[0];
    let zp = shift.pick_sample_word(c0)?;
    match gibbs_bound_check(&shift, &pair, c0, &zp, [-0.4, -0.2], pair.depth().max(1)..=10) {
        Ok(r) => out.push(check("gibbs_bound", r.max_ratio, r.q_hat, r.holds)),
        Err(err) => out.push(failed("gibbs_bound", err, 0.0)),
    }

    let g = gaussian_case(100.0);
    out.push(within(
        "saddle_gaussian",
        (|| Ok((quadrature_oracle(&g, max_grid_step(&g) / 8.0)? - saddle_leading_term(&g)?).norm()))(),
        1e-6,
    ));
    Ok(out)
}

fn run_verify(s: &Scenario) -> Result<Outcome> {
    let checks = verify_checks(s)?;
    let mut t = Table::new(
        "verify.csv",
        &[
            ("check", "invariant name"),
            ("status", "pass or fail"),
            ("measured", "measured residual or statistic"),
            ("tolerance", "acceptance threshold"),
        ],
    );
    let mut out = Outcome::new(Task::Verify);
    let mut fails = 0;
    for c in &checks {
        if !c.pass {
            fails += 1;
        }
        t.push([
            c.name.clone(),
            if c.pass { "pass" } else { "fail" }.to_string(),
            c.measured.clone(),
            c.tolerance.clone(),
        ]);
    }
    out.scalar("checks", checks.len() as f64);
    out.scalar("failures", fails as f64);
    if fails > 0 {
        out.status = Status::VerifyFailed;
    }
    out.tables.push(t);
    Ok(out)
}

fn run_saddle(s: &Scenario) -> Result<Outcome> {
    let p = &s.saddle;
    let mut out = Outcome::new(Task::Saddle);
    let mut t = Table::new(
        "saddle.csv",
        &[
            ("n", "asymptotic parameter"),
            ("leading", "leading term e^(nF(0)) G(0) 2 pi / (n sqrt(det))"),
            ("quadrature", "midpoint rule over the disc"),
            ("relative_error", "|quadrature - leading| / |leading|"),
            ("scaled_error", "relative_error * sqrt(n)"),
        ],
    );
    let base = match p.case {
        SaddleCase::Gaussian => gaussian_case(1.0),
        SaddleCase::Quartic => quartic_case(1.0, p.lambda, p.kappa),
        SaddleCase::Pressure => {
            let surface = PressureSurface::new(s.build_pair()?);
            let x = surface.grad(p.z)?;
            let ps = pressure_case(&surface, x, p.z, 1.0)?;
            out.scalar("pstar", ps.legendre.pstar);
            out.scalar("det_hess", ps.legendre.hess.determinant());
            out.scalar("det_hess_star", ps.legendre.hess_star.determinant());
            ps.problem
        }
    };
    for r in convergence_table(&base, &p.n, p.refine)? {
        t.push([r.n, r.leading, r.quadrature, r.relative_error, r.scaled_error].map(e));
    }
    out.tables.push(t);
    Ok(out)
}

fn run_truncation(s: &Scenario) -> Result<Outcome> {
    let p = &s.truncation;
    let n_max = p.sizes.iter().chain(&p.exponent_grid).copied().max().unwrap_or(1);
    let fam = TruncationFamily::new(p.rule.clone(), n_max)?;
    let mut t = Table::new(
        "truncation.csv",
        &[
            ("N", "truncation size"),
            ("delta_f", "Bowen root of f on the first N letters"),
            ("increment", "delta_f(N) minus the previous row"),
        ],
    );
    let mut prev: Option<f64> = None;
    for &n in &p.sizes {
        let f = fam.potential(n)?;
        let d = bowen_root(f.shift(), &f)?;
        let inc = prev.map(|q| d - q);
        t.push([n.to_string(), e(d), inc.map(e).unwrap_or_default()]);
        prev = Some(d);
    }
    let mut out = Outcome::new(Task::TruncationStudy);
    match estimate_critical_exponent(&fam, &p.exponent_grid) {
        Ok(c) => {
            out.scalar("d_hat", c.d_hat);
            out.note("converges_for_all", c.converges_for_all);
        }
        Err(err) => out.note("d_hat", err),
    }
    out.tables.push(t);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    CsvAndJson,
}

/// Writes one table with the version/config/column comment block.
pub fn write_table(outcome: &Outcome, config: &str, table: &Table, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# thermocount {} task={}", env!("CARGO_PKG_VERSION"), outcome.task)?;
    writeln!(w, "# resolved config:")?;
    for line in config.lines() {
        writeln!(w, "#   {line}")?;
    }
    for (name, def) in &table.columns {
        writeln!(w, "# {name}: {def}")?;
    }
    writeln!(w, "{}", table.header())?;
    for row in &table.rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every table (and optionally `summary.json`) into `dir`; returns the paths.
pub fn emit_report(outcome: &Outcome, config: &str, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for table in &outcome.tables {
        let path = dir.join(&table.file);
        write_table(outcome, config, table, &path)?;
        written.push(path);
    }
    if format == ReportFormat::CsvAndJson {
        let path = dir.join("summary.json");
        let summary = serde_json::json!({
            "task": outcome.task,
            "status": outcome.status,
            "scalars": outcome.scalars,
            "notes": outcome.notes,
            "config": config,
        });
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        written.push(path);
    }
    Ok(written)
}
