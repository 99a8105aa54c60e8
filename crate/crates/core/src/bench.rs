//! Algorithm × problem suites and performance profiles.
//!
//! For a timing matrix `tau[a][p]` the ratio `r[a][p] = tau[a][p] /
//! min_a' tau[a'][p]`, and the profile of algorithm `a` is
//! `rho_a(kappa) = #{p : log2 r[a][p] <= kappa} / #P`. Unsolved cells carry
//! `r = +inf` and never count.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{derive_seed, ControlSchedule};
use crate::road::{compile_constraints, OperatorPolicy, RoadError, RoadProblem};
use crate::solver::{run_cycip, Metric, SolverConfig, SolverError, TraceDepth, DEFAULT_TOLERANCE};

/// Timings below this are clamped before forming ratios.
pub const MIN_TIME_SECONDS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no results to aggregate")]
    Empty,
    #[error("unknown algorithm `{0}` (known: CycIP_2, CycIP_inf, rCycIP_2, rCycIP_inf, CycP)")]
    UnknownAlgorithm(String),
    #[error("duplicate algorithm name `{0}`")]
    DuplicateAlgorithm(String),
    #[error("timing matrix is {rows}x{cols}, expected {algorithms}x{problems}")]
    Shape {
        rows: usize,
        cols: usize,
        algorithms: usize,
        problems: usize,
    },
    #[error("problem `{id}`: {source}")]
    Problem { id: String, source: RoadError },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlTemplate {
    Cyclic,
    /// A fresh random permutation of the sets every sweep.
    Random,
}

impl ControlTemplate {
    pub fn instantiate(self, size: usize, seed: u64) -> ControlSchedule {
        match self {
            ControlTemplate::Cyclic => ControlSchedule::cyclic(size),
            ControlTemplate::Random => ControlSchedule::random_permutation_blocks(size, seed),
        }
        .expect("road problems have six sets")
    }
}

impl FromStr for ControlTemplate {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cyclic" => Ok(ControlTemplate::Cyclic),
            "random" => Ok(ControlTemplate::Random),
            other => Err(format!("unknown control `{other}` (expected cyclic or random)")),
        }
    }
}

impl fmt::Display for ControlTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlTemplate::Cyclic => "cyclic",
            ControlTemplate::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlgorithmSpec {
    pub name: String,
    pub metric: Metric,
    pub control: ControlTemplate,
    pub policy: OperatorPolicy,
}

impl AlgorithmSpec {
    pub fn new(
        name: impl Into<String>,
        metric: Metric,
        control: ControlTemplate,
        policy: OperatorPolicy,
    ) -> Self {
        Self {
            name: name.into(),
            metric,
            control,
            policy,
        }
    }

    /// CycIP_2, CycIP_inf, rCycIP_2, rCycIP_inf and classical cyclic
    /// projections (CycP, stopped on `d_inf`).
    pub fn standard_suite() -> Vec<Self> {
        use ControlTemplate::*;
        use OperatorPolicy::*;
        vec![
            Self::new("CycIP_2", Metric::D2, Cyclic, Intrepid),
            Self::new("CycIP_inf", Metric::Dinf, Cyclic, Intrepid),
            Self::new("rCycIP_2", Metric::D2, Random, Intrepid),
            Self::new("rCycIP_inf", Metric::Dinf, Random, Intrepid),
            Self::new("CycP", Metric::Dinf, Cyclic, Projection),
        ]
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Self::standard_suite()
            .into_iter()
            .find(|a| a.name == name)
            .ok_or_else(|| BenchError::UnknownAlgorithm(name.to_string()))
    }

    /// Comma-separated names; `all` selects the standard suite.
    pub fn parse_list(list: &str) -> Result<Vec<Self>> {
        if list.trim() == "all" {
            return Ok(Self::standard_suite());
        }
        let mut out: Vec<Self> = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if out.iter().any(|a| a.name == name) {
                return Err(BenchError::DuplicateAlgorithm(name.to_string()));
            }
            out.push(Self::by_name(name)?);
        }
        Ok(out)
    }
}

/// Where each run starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StartPoint {
    /// Piecewise-linear interpolant of the fixed elevations.
    Interpolant,
    Zero,
}

impl StartPoint {
    pub fn point(self, p: &RoadProblem) -> Vec<f64> {
        match self {
            StartPoint::Interpolant => p.interpolant_start(),
            StartPoint::Zero => vec![0.0; p.n()],
        }
    }
}

impl FromStr for StartPoint {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "interpolant" => Ok(StartPoint::Interpolant),
            "zero" => Ok(StartPoint::Zero),
            other => Err(format!("unknown start `{other}` (expected interpolant or zero)")),
        }
    }
}

impl fmt::Display for StartPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StartPoint::Interpolant => "interpolant",
            StartPoint::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchProblem {
    pub id: String,
    pub problem: RoadProblem,
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub tau_max: Duration,
    pub tolerance: f64,
    pub seed: u64,
    pub max_iterations: u64,
    pub start: StartPoint,
    /// Timed suites run serially; untimed ones may use every core.
    pub timed: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            tau_max: Duration::from_secs(150),
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
            max_iterations: u64::MAX,
            start: StartPoint::Interpolant,
            timed: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Solved,
    Timeout,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Solved => "solved",
            RunStatus::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub problem_id: String,
    pub n: usize,
    pub algorithm: String,
    pub status: RunStatus,
    pub iterations: u64,
    /// Solver wall time, capped at `tau_max`; `tau_max` for timeouts.
    pub time: Duration,
    pub d2: f64,
    pub dinf: f64,
}

fn run_cell(
    problem: &BenchProblem,
    alg: &AlgorithmSpec,
    seed: u64,
    opts: &SuiteOptions,
) -> Result<RunResult> {
    let compiled = compile_constraints(&problem.problem).map_err(|source| BenchError::Problem {
        id: problem.id.clone(),
        source,
    })?;
    let fp = compiled
        .to_problem(alg.policy)
        .map_err(|source| BenchError::Problem {
            id: problem.id.clone(),
            source,
        })?;
    let cfg = SolverConfig {
        tolerance: opts.tolerance,
        metric: alg.metric,
        max_iterations: opts.max_iterations,
        max_time: Some(opts.tau_max),
        control: alg.control.instantiate(fp.len(), seed),
        trace: TraceDepth::None,
    };
    let x0 = opts.start.point(&problem.problem);
    let r = run_cycip(&fp, &cfg, &x0)?;
    let solved = r.solved() && r.wall_time <= opts.tau_max;
    Ok(RunResult {
        problem_id: problem.id.clone(),
        n: problem.problem.n(),
        algorithm: alg.name.clone(),
        status: if solved {
            RunStatus::Solved
        } else {
            RunStatus::Timeout
        },
        iterations: r.iterations,
        time: if solved { r.wall_time } else { opts.tau_max },
        d2: r.d2,
        dinf: r.dinf,
    })
}

/// One result per (problem, algorithm), ordered problem-major.
///
/// Timing covers the iteration loop only; compiling the sets and building
/// the start point happen before the clock starts.
pub fn run_suite(
    problems: &[BenchProblem],
    algorithms: &[AlgorithmSpec],
    opts: &SuiteOptions,
) -> Result<Vec<RunResult>> {
    let cells: Vec<(usize, usize)> = (0..problems.len())
        .flat_map(|p| (0..algorithms.len()).map(move |a| (p, a)))
        .collect();
    let run = |&(p, a): &(usize, usize)| {
        let seed = derive_seed(derive_seed(opts.seed, p as u64), a as u64);
        run_cell(&problems[p], &algorithms[a], seed, opts)
    };
    if opts.timed {
        cells.iter().map(run).collect()
    } else {
        cells.par_iter().map(run).collect()
    }
}

/// `ratios[a][p]`; `+inf` for unsolved cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTable {
    pub algorithms: Vec<String>,
    pub problems: Vec<String>,
    pub ratios: Vec<Vec<f64>>,
}

/// Ratios from a timing matrix `times[a][p]` in seconds (`None` =
/// unsolved).
pub fn ratios_from_times(times: &[Vec<Option<f64>>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = times.first() else {
        return Err(BenchError::Empty);
    };
    let np = first.len();
    if np == 0 {
        return Err(BenchError::Empty);
    }
    if let Some(row) = times.iter().find(|r| r.len() != np) {
        return Err(BenchError::Shape {
            rows: times.len(),
            cols: row.len(),
            algorithms: times.len(),
            problems: np,
        });
    }
    let clamp = |t: f64| t.max(MIN_TIME_SECONDS);
    let best: Vec<Option<f64>> = (0..np)
        .map(|p| {
            times
                .iter()
                .filter_map(|row| row[p].map(clamp))
                .min_by(f64::total_cmp)
        })
        .collect();
    Ok(times
        .iter()
        .map(|row| {
            row.iter()
                .zip(&best)
                .map(|(t, b)| match (t, b) {
                    (Some(t), Some(b)) => clamp(*t) / b,
                    _ => f64::INFINITY,
                })
                .collect()
        })
        .collect())
}

pub fn performance_ratios(results: &[RunResult]) -> Result<RatioTable> {
    if results.is_empty() {
        return Err(BenchError::Empty);
    }
    let mut algorithms: Vec<String> = Vec::new();
    let mut problems: Vec<String> = Vec::new();
    for r in results {
        if !algorithms.contains(&r.algorithm) {
            algorithms.push(r.algorithm.clone());
        }
        if !problems.contains(&r.problem_id) {
            problems.push(r.problem_id.clone());
        }
    }
    let mut times = vec![vec![None; problems.len()]; algorithms.len()];
    for r in results {
        let a = algorithms.iter().position(|x| *x == r.algorithm).unwrap();
        let p = problems.iter().position(|x| *x == r.problem_id).unwrap();
        if r.status == RunStatus::Solved {
            times[a][p] = Some(r.time.as_secs_f64());
        }
    }
    let ratios = ratios_from_times(&times)?;
    Ok(RatioTable {
        algorithms,
        problems,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub algorithm: String,
    pub kappa: Vec<f64>,
    pub rho: Vec<f64>,
}

/// `rho(kappa)` for one row of ratios.
pub fn profile_value(ratios: &[f64], kappa: f64) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    let hits = ratios.iter().filter(|r| r.log2() <= kappa).count();
    hits as f64 / ratios.len() as f64
}

pub fn profile_curve(table: &RatioTable, kappas: &[f64]) -> Vec<ProfileCurve> {
    table
        .algorithms
        .iter()
        .zip(&table.ratios)
        .map(|(name, row)| ProfileCurve {
            algorithm: name.clone(),
            kappa: kappas.to_vec(),
            rho: kappas.iter().map(|&k| profile_value(row, k)).collect(),
        })
        .collect()
}

/// `points` evenly spaced values on `[0, K]`, where `K` is the largest
/// finite `log2` ratio rounded up (at least 1).
pub fn default_kappa_grid(table: &RatioTable, points: usize) -> Vec<f64> {
    let top = table
        .ratios
        .iter()
        .flatten()
        .filter(|r| r.is_finite())
        .map(|r| r.log2())
        .fold(0.0_f64, f64::max)
        .ceil()
        .max(1.0);
    let points = points.max(2);
    (0..points)
        .map(|i| top * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultRow {
    problem_id: String,
    n: usize,
    algorithm: String,
    status: RunStatus,
    iterations: u64,
    time_ms: f64,
    d2_final: f64,
    dinf_final: f64,
}

#[derive(Debug, Serialize)]
struct ProfileRow<'a> {
    algorithm: &'a str,
    kappa: f64,
    rho: f64,
}

fn write_meta<W: Write>(w: &mut W, meta: &[(String, String)]) -> std::io::Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k} = {v}")?;
    }
    Ok(())
}

/// Writes `results.csv`; `meta` pairs become leading `# key = value` lines.
pub fn write_results_csv<W: Write>(
    results: &[RunResult],
    mut w: W,
    meta: &[(String, String)],
) -> Result<()> {
    write_meta(&mut w, meta)?;
    let mut csv = csv::Writer::from_writer(w);
    if results.is_empty() {
        csv.write_record([
            "problem_id",
            "n",
            "algorithm",
            "status",
            "iterations",
            "time_ms",
            "d2_final",
            "dinf_final",
        ])?;
    }
    for r in results {
        csv.serialize(ResultRow {
            problem_id: r.problem_id.clone(),
            n: r.n,
            algorithm: r.algorithm.clone(),
            status: r.status,
            iterations: r.iterations,
            time_ms: (r.time.as_secs_f64() * 1e6).round() / 1e3,
            d2_final: r.d2,
            dinf_final: r.dinf,
        })?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(r: R) -> Result<Vec<RunResult>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    rdr.deserialize::<ResultRow>()
        .map(|row| {
            let row = row?;
            Ok(RunResult {
                problem_id: row.problem_id,
                n: row.n,
                algorithm: row.algorithm,
                status: row.status,
                iterations: row.iterations,
                time: Duration::from_secs_f64(row.time_ms.max(0.0) / 1e3),
                d2: row.d2_final,
                dinf: row.dinf_final,
            })
        })
        .collect()
}

pub fn write_profile_csv<W: Write>(
    curves: &[ProfileCurve],
    mut w: W,
    meta: &[(String, String)],
) -> Result<()> {
    write_meta(&mut w, meta)?;
    let mut csv = csv::Writer::from_writer(w);
    if curves.iter().all(|c| c.kappa.is_empty()) {
        csv.write_record(["algorithm", "kappa", "rho"])?;
    }
    for c in curves {
        for (&kappa, &rho) in c.kappa.iter().zip(&c.rho) {
            csv.serialize(ProfileRow {
                algorithm: &c.algorithm,
                kappa,
                rho,
            })?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Gnuplot data: one indexed block per algorithm, columns `kappa rho`.
pub fn write_profile_gp<W: Write>(
    curves: &[ProfileCurve],
    mut w: W,
    meta: &[(String, String)],
) -> Result<()> {
    write_meta(&mut w, meta)?;
    for (i, c) in curves.iter().enumerate() {
        if i > 0 {
            writeln!(w, "\n")?;
        }
        writeln!(w, "# algorithm: {}", c.algorithm)?;
        writeln!(w, "# kappa rho")?;
        for (k, r) in c.kappa.iter().zip(&c.rho) {
            writeln!(w, "{k} {r}")?;
        }
    }
    Ok(())
}

/// Writes `results.csv`, `profile.csv` and `profile.gp` into `dir`.
pub fn export_results(
    results: &[RunResult],
    curves: &[ProfileCurve],
    dir: impl AsRef<Path>,
    meta: &[(String, String)],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    write_results_csv(results, &mut buf, meta)?;
    std::fs::write(dir.join("results.csv"), &buf)?;
    buf.clear();
    write_profile_csv(curves, &mut buf, meta)?;
    std::fs::write(dir.join("profile.csv"), &buf)?;
    buf.clear();
    write_profile_gp(curves, &mut buf, meta)?;
    std::fs::write(dir.join("profile.gp"), &buf)?;
    Ok(())
}
