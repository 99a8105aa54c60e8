//! The cyclic projection driver `x_{k+1} = T_{i(k)} x_k`, infeasibility
//! measures and Fejér diagnostics.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::control::ControlSchedule;
use crate::geometry::{check_dim, ConstraintSet, Enlargement, GeometryError, Hyperslab, SlabFamily};
use crate::operators::{
    BlockIntrepidProjector, IntrepidProjector, Operator, OperatorError, RelaxedProjector,
};

/// Default stopping tolerance on the infeasibility measure.
pub const DEFAULT_TOLERANCE: f64 = 5e-4;
pub const DEFAULT_MAX_ITERATIONS: u64 = 1_000_000;
pub const DEFAULT_MAX_TIME: Duration = Duration::from_secs(150);

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("control schedule covers {schedule} indices but the problem has {problem} sets")]
    ControlSizeMismatch { schedule: usize, problem: usize },
    #[error("problem has no constraint sets")]
    EmptyProblem,
    #[error("full iterate trace unavailable")]
    TraceUnavailable,
    #[error("trace export failed: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Whether a set enters through an intrepid map (`I_0`) or a relaxed
/// projector (`I_1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorTag {
    Intrepid,
    Relaxed { lambda: f64 },
}

struct Component {
    set: Box<dyn ConstraintSet>,
    op: Box<dyn Operator>,
    tag: OperatorTag,
}

/// An indexed family of sets `C_i` with bound step maps `T_i`.
pub struct FeasibilityProblem {
    dim: usize,
    components: Vec<Component>,
    heuristic: bool,
}

impl fmt::Debug for FeasibilityProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeasibilityProblem")
            .field("dim", &self.dim)
            .field("tags", &self.tags())
            .field("heuristic", &self.heuristic)
            .finish()
    }
}

impl FeasibilityProblem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            components: Vec::new(),
            heuristic: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn tags(&self) -> Vec<OperatorTag> {
        self.components.iter().map(|c| c.tag).collect()
    }

    /// Set when some component is nonconvex; results are then heuristic.
    pub fn is_heuristic(&self) -> bool {
        self.heuristic
    }

    pub fn mark_heuristic(&mut self) -> &mut Self {
        self.heuristic = true;
        self
    }

    pub fn set(&self, i: usize) -> &dyn ConstraintSet {
        self.components[i].set.as_ref()
    }

    pub fn operator(&self, i: usize) -> &dyn Operator {
        self.components[i].op.as_ref()
    }

    /// Adds an arbitrary `(set, operator)` pair.
    pub fn push(
        &mut self,
        set: Box<dyn ConstraintSet>,
        op: Box<dyn Operator>,
        tag: OperatorTag,
    ) -> Result<&mut Self> {
        for d in [set.dim(), op.dim()] {
            if d != self.dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: self.dim,
                    found: d,
                }
                .into());
            }
        }
        self.components.push(Component { set, op, tag });
        Ok(self)
    }

    pub fn add_relaxed<S>(&mut self, set: S, lambda: f64) -> Result<&mut Self>
    where
        S: ConstraintSet + Clone + 'static,
    {
        let op = RelaxedProjector::new(set.clone(), lambda)?;
        self.push(Box::new(set), Box::new(op), OperatorTag::Relaxed { lambda })
    }

    /// `C_i = Z_[radius]`, stepped by the intrepid projector.
    pub fn add_intrepid<Z>(&mut self, core: Z, radius: f64) -> Result<&mut Self>
    where
        Z: ConstraintSet + Clone + 'static,
    {
        let op = IntrepidProjector::new(core.clone(), radius)?;
        let set = Enlargement::new(core, radius)?;
        self.push(Box::new(set), Box::new(op), OperatorTag::Intrepid)
    }

    /// A hyperslab viewed as the enlargement of its midplane.
    pub fn add_hyperslab_intrepid(&mut self, slab: Hyperslab) -> Result<&mut Self> {
        let family = SlabFamily::new(slab.dim(), vec![slab])?;
        self.add_slab_family_intrepid(family)
    }

    pub fn add_slab_family_intrepid(&mut self, family: SlabFamily) -> Result<&mut Self> {
        let op = BlockIntrepidProjector::from_slab_family(&family);
        self.push(Box::new(family), Box::new(op), OperatorTag::Intrepid)
    }

    /// Applies `T_i` in place.
    pub fn step(&self, i: usize, x: &mut [f64]) {
        self.components[i].op.apply_in_place(x);
    }

    pub fn measures(&self, x: &[f64]) -> Result<Infeasibility> {
        check_dim(self.dim, x)?;
        let mut sq = 0.0;
        let mut inf = 0.0_f64;
        for c in &self.components {
            let r = c.set.residual(x);
            sq += r.l2 * r.l2;
            inf = inf.max(r.linf);
        }
        Ok(Infeasibility {
            d2: sq.sqrt(),
            dinf: inf,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Infeasibility {
    pub d2: f64,
    pub dinf: f64,
}

impl Infeasibility {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::D2 => self.d2,
            Metric::Dinf => self.dinf,
        }
    }
}

/// `sqrt(sum_i d_{C_i}(x)^2)`
pub fn infeasibility_d2(p: &FeasibilityProblem, x: &[f64]) -> Result<f64> {
    Ok(p.measures(x)?.d2)
}

/// `max_i ||x - P_{C_i} x||_inf`
pub fn infeasibility_dinf(p: &FeasibilityProblem, x: &[f64]) -> Result<f64> {
    Ok(p.measures(x)?.dinf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    D2,
    Dinf,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::D2 => "d2",
            Metric::Dinf => "dinf",
        })
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "d2" => Ok(Metric::D2),
            "dinf" => Ok(Metric::Dinf),
            other => Err(format!("unknown metric `{other}` (expected d2 or dinf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceDepth {
    None,
    /// One record per sweep.
    Summary,
    /// Per-sweep records plus every step and every iterate.
    Full,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub metric: Metric,
    pub max_iterations: u64,
    pub max_time: Option<Duration>,
    pub control: ControlSchedule,
    pub trace: TraceDepth,
}

impl SolverConfig {
    /// Defaults (`d_inf`, `5e-4`, 150 s) with a cyclic control over
    /// `num_sets` indices.
    pub fn new(num_sets: usize) -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            metric: Metric::Dinf,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            max_time: Some(DEFAULT_MAX_TIME),
            control: ControlSchedule::cyclic(num_sets.max(1)).expect("nonempty"),
            trace: TraceDepth::None,
        }
    }

    fn validate(&self, p: &FeasibilityProblem) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(SolverError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig(
                "iteration limit must be positive".into(),
            ));
        }
        if self.max_time == Some(Duration::ZERO) {
            return Err(SolverError::InvalidConfig(
                "time limit must be positive".into(),
            ));
        }
        if p.is_empty() {
            return Err(SolverError::EmptyProblem);
        }
        if self.control.size() != p.len() {
            return Err(SolverError::ControlSizeMismatch {
                schedule: self.control.size(),
                problem: p.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub k: u64,
    pub index: usize,
    pub step_norm: f64,
}

/// Written after each sweep; `index` and `step_norm` describe the last step
/// of the sweep (`None`/`0` for the record of the starting point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub k: u64,
    pub index: Option<usize>,
    pub step_norm: f64,
    pub d2: f64,
    pub dinf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub depth: TraceDepth,
    pub sweeps: Vec<SweepRecord>,
    pub steps: Vec<StepRecord>,
    /// `x_0, x_1, ...` (full depth only).
    pub iterates: Vec<Vec<f64>>,
}

impl IterationTrace {
    fn new(depth: TraceDepth) -> Self {
        Self {
            depth,
            sweeps: Vec::new(),
            steps: Vec::new(),
            iterates: Vec::new(),
        }
    }

    /// CSV with columns `k,index,step_norm,d2,dinf`, one row per sweep.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,index,step_norm,d2,dinf")?;
        for r in &self.sweeps {
            let index = r.index.map(|i| i.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", r.k, index, r.step_norm, r.d2, r.dinf)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    IterationLimit,
    TimeLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Solved => "solved",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::TimeLimit => "time-limit",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub point: Vec<f64>,
    pub iterations: u64,
    pub wall_time: Duration,
    pub d2: f64,
    pub dinf: f64,
    /// The problem contained nonconvex sets; no convergence guarantee.
    pub heuristic: bool,
    pub trace: Option<IterationTrace>,
}

impl SolveResult {
    pub fn solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }
}

fn step_norm(a: &[f64], b: &[f64]) -> f64 {
    crate::geometry::dist2(a, b)
}

/// Runs `x_{k+1} = T_{i(k)} x_k` from `x0`.
///
/// The stopping metric is evaluated at `x0` and after every sweep of
/// `card(I)` steps. Wall time covers the iteration loop only.
pub fn run_cycip(p: &FeasibilityProblem, cfg: &SolverConfig, x0: &[f64]) -> Result<SolveResult> {
    cfg.validate(p)?;
    check_dim(p.dim(), x0)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::InvalidConfig(
            "starting point has non-finite entries".into(),
        ));
    }

    let m = p.len() as u64;
    let mut x = x0.to_vec();
    let mut prev = vec![0.0; if cfg.trace == TraceDepth::None { 0 } else { x.len() }];
    let mut trace = (cfg.trace != TraceDepth::None).then(|| IterationTrace::new(cfg.trace));
    let full = cfg.trace == TraceDepth::Full;

    let start = Instant::now();
    let mut k: u64 = 0;
    let mut meas = p.measures(&x)?;
    if let Some(t) = trace.as_mut() {
        t.sweeps.push(SweepRecord {
            k,
            index: None,
            step_norm: 0.0,
            d2: meas.d2,
            dinf: meas.dinf,
        });
        if full {
            t.iterates.push(x.clone());
        }
    }

    let mut indices = cfg.control.iter();
    let status = loop {
        if meas.get(cfg.metric) < cfg.tolerance {
            break SolveStatus::Solved;
        }
        if k >= cfg.max_iterations {
            break SolveStatus::IterationLimit;
        }
        if matches!(cfg.max_time, Some(limit) if start.elapsed() >= limit) {
            break SolveStatus::TimeLimit;
        }

        let sweep_end = (k + m).min(cfg.max_iterations);
        let mut last = (0usize, 0.0);
        while k < sweep_end {
            let i = indices.next().expect("control streams are infinite");
            let record = full || (trace.is_some() && k + 1 == sweep_end);
            if record {
                prev.copy_from_slice(&x);
            }
            p.step(i, &mut x);
            k += 1;
            if record {
                let s = step_norm(&prev, &x);
                last = (i, s);
                if let (true, Some(t)) = (full, trace.as_mut()) {
                    t.steps.push(StepRecord {
                        k: k - 1,
                        index: i,
                        step_norm: s,
                    });
                    t.iterates.push(x.clone());
                }
            }
        }

        meas = p.measures(&x)?;
        if let Some(t) = trace.as_mut() {
            t.sweeps.push(SweepRecord {
                k,
                index: Some(last.0),
                step_norm: last.1,
                d2: meas.d2,
                dinf: meas.dinf,
            });
        }
    };

    Ok(SolveResult {
        status,
        point: x,
        iterations: k,
        wall_time: start.elapsed(),
        d2: meas.d2,
        dinf: meas.dinf,
        heuristic: p.is_heuristic(),
        trace,
    })
}

/// `max_k (||x_{k+1} - c|| - ||x_k - c||)`, or `0` for a trace without
/// steps.
///
/// Each difference is evaluated as `sum_j (a_j - b_j)(a_j + b_j) /
/// (||a|| + ||b||)` with `a = x_{k+1} - c`, `b = x_k - c`, so coordinates a
/// step leaves untouched contribute exactly zero.
pub fn fejer_margin(trace: &IterationTrace, c: &[f64]) -> Result<f64> {
    if trace.depth != TraceDepth::Full || trace.iterates.is_empty() {
        return Err(SolverError::TraceUnavailable);
    }
    check_dim(trace.iterates[0].len(), c)?;
    let mut margin = 0.0_f64;
    let mut first = true;
    for w in trace.iterates.windows(2) {
        let (b, a) = (&w[0], &w[1]);
        let mut num = 0.0;
        let (mut na, mut nb) = (0.0, 0.0);
        for ((ai, bi), ci) in a.iter().zip(b).zip(c) {
            let (da, db) = (ai - ci, bi - ci);
            num += (ai - bi) * (da + db);
            na += da * da;
            nb += db * db;
        }
        let denom = na.sqrt() + nb.sqrt();
        let diff = if denom > 0.0 { num / denom } else { 0.0 };
        margin = if first { diff } else { margin.max(diff) };
        first = false;
    }
    Ok(margin)
}
