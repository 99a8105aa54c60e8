//! Road vertical alignment as a six-set feasibility problem.
//!
//! Given stations `t_1 < ... < t_n`, find elevations `x` such that
//!
//! * `x_j = y_j` for `j` in `J` (interpolation),
//! * `|s_j| <= sigma_j` with `s_j = (x_{j+1} - x_j) / (t_{j+1} - t_j)` (slope),
//! * `delta_j <= s_{j+1} - s_j <= gamma_j` (curvature),
//! * optionally `|s_j| >= sigma_min` (minimum slope; nonconvex).
//!
//! Compilation groups the slope rows by parity and the curvature rows by
//! residue mod 3 so that each group is a family of hyperslabs with disjoint
//! supports:
//!
//! | set | rows                                  |
//! |-----|---------------------------------------|
//! | C1  | interpolation equalities              |
//! | C2  | slopes `j` odd (1-based)              |
//! | C3  | slopes `j` even                       |
//! | C4  | curvature `j ≡ 1 (mod 3)`             |
//! | C5  | curvature `j ≡ 2 (mod 3)`             |
//! | C6  | curvature `j ≡ 0 (mod 3)`             |

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::control::derive_seed;
use crate::geometry::{
    check_dim, ConstraintSet, CoordinateAffine, GeometryError, Hyperslab, Residual, SlabFamily,
    SparseNormal,
};
use crate::operators::{intrepid_slab_step, BlockIntrepidProjector, Operator, Projector};
use crate::solver::{FeasibilityProblem, OperatorTag, SolverError};

pub const FORMAT_TAG: &str = "roadfp/1";
pub const WITNESS_TAG: &str = "roadfp-witness/1";

#[derive(Debug, Error)]
pub enum RoadError {
    #[error("invalid road problem: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("generator: {0}")]
    Generator(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RoadError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(RoadError::Invalid(msg.into()))
}

/// Problem data. Interpolation indices are 0-based here and 1-based on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadProblem {
    pub t: Vec<f64>,
    pub interp_indices: Vec<usize>,
    pub interp_values: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma_min: Option<f64>,
    pub comment: Option<String>,
}

impl RoadProblem {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn is_nonconvex(&self) -> bool {
        self.sigma_min.is_some()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.t.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return invalid(format!("need at least 2 breakpoints, got {n}"));
        }
        if self.t.iter().any(|v| !v.is_finite()) {
            return invalid("breakpoints t must be finite");
        }
        if let Some(j) = self.t.windows(2).position(|w| !(w[0] < w[1])) {
            return invalid(format!(
                "breakpoints t must be strictly increasing (t_{} >= t_{})",
                j + 1,
                j + 2
            ));
        }
        if self.sigma.len() != n - 1 {
            return invalid(format!("sigma must have n-1 = {} entries", n - 1));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return invalid("slope bounds sigma must be positive and finite");
        }
        let m = n.saturating_sub(2);
        if self.gamma.len() != m || self.delta.len() != m {
            return invalid(format!("gamma and delta must have n-2 = {m} entries"));
        }
        for (j, (g, d)) in self.gamma.iter().zip(&self.delta).enumerate() {
            if !(g.is_finite() && d.is_finite()) {
                return invalid("curvature bounds must be finite");
            }
            if d > g {
                return invalid(format!("curvature bounds need delta_j <= gamma_j (j = {})", j + 1));
            }
        }
        if self.interp_indices.len() != self.interp_values.len() {
            return invalid("J and y must have the same length");
        }
        if let Some(&j) = self.interp_indices.iter().find(|&&j| j >= n) {
            return invalid(format!("interpolation index {} outside 1..={n}", j + 1));
        }
        if self.interp_indices.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("interpolation indices J must be strictly increasing");
        }
        if self.interp_values.iter().any(|v| !v.is_finite()) {
            return invalid("interpolation values y must be finite");
        }
        if let Some(smin) = self.sigma_min {
            let lo = self.sigma.iter().copied().fold(f64::INFINITY, f64::min);
            if !(smin > 0.0 && smin <= lo) {
                return invalid(format!(
                    "minimum slope must satisfy 0 < sigma_min <= min sigma_j = {lo}"
                ));
            }
        }
        if let Some(c) = &self.comment {
            if c.contains('\n') || c.contains('\r') {
                return invalid("comment must be a single line");
            }
        }
        Ok(())
    }

    /// Piecewise-linear interpolant of the fixed elevations, held constant
    /// beyond the first and last fixed station; all zeros when `J` is empty.
    pub fn interpolant_start(&self) -> Vec<f64> {
        let n = self.n();
        let j = &self.interp_indices;
        let y = &self.interp_values;
        if j.is_empty() {
            return vec![0.0; n];
        }
        let mut x = vec![0.0; n];
        let mut seg = 0;
        for (i, xi) in x.iter_mut().enumerate() {
            if i <= j[0] {
                *xi = y[0];
            } else if i >= j[j.len() - 1] {
                *xi = y[y.len() - 1];
            } else {
                while j[seg + 1] < i {
                    seg += 1;
                }
                let (a, b) = (j[seg], j[seg + 1]);
                let w = (self.t[i] - self.t[a]) / (self.t[b] - self.t[a]);
                *xi = y[seg] + w * (y[seg + 1] - y[seg]);
            }
        }
        x
    }
}

/// Nearest point of `[-upper, -lower] ∪ [lower, upper]` to `s`; `s = 0`
/// goes to `+lower`.
pub fn project_minslope(lower: f64, upper: f64, s: f64) -> std::result::Result<f64, RoadError> {
    if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
        return invalid(format!(
            "minimum-slope projection needs 0 < sigma_min <= sigma_j (got {lower}, {upper})"
        ));
    }
    Ok(band_nearest(lower, upper, s))
}

#[inline]
fn band_nearest(lower: f64, upper: f64, s: f64) -> f64 {
    if s >= 0.0 {
        s.clamp(lower, upper)
    } else {
        s.clamp(-upper, -lower)
    }
}

/// Slope rows with a minimum absolute value: `lo_j <= |<a_j, x>| <= hi_j`.
/// Supports are pairwise disjoint. This set is not convex.
#[derive(Debug, Clone, PartialEq)]
pub struct MinSlopeFamily {
    dim: usize,
    rows: Vec<(SparseNormal, f64, f64)>,
}

impl MinSlopeFamily {
    pub fn rows(&self) -> &[(SparseNormal, f64, f64)] {
        &self.rows
    }

    #[inline]
    fn row_coefficient(normal: &SparseNormal, lo: f64, hi: f64, x: &[f64]) -> f64 {
        let v = normal.dot(x);
        (v - band_nearest(lo, hi, v)) / normal.norm_sq()
    }
}

impl ConstraintSet for MinSlopeFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn project_in_place(&self, x: &mut [f64]) {
        for (a, lo, hi) in &self.rows {
            let t = Self::row_coefficient(a, *lo, *hi, x);
            if t != 0.0 {
                a.axpy(-t, x);
            }
        }
    }

    fn residual(&self, x: &[f64]) -> Residual {
        let mut sq = 0.0;
        let mut linf = 0.0_f64;
        for (a, lo, hi) in &self.rows {
            let t = Self::row_coefficient(a, *lo, *hi, x);
            sq += t * t * a.norm_sq();
            for &(_, v) in a.entries() {
                linf = linf.max((t * v).abs());
            }
        }
        Residual {
            l2: sq.sqrt(),
            linf,
        }
    }
}

/// Intrepid steps on a [`MinSlopeFamily`]: each row picks the branch by the
/// sign of `<a,x>` and takes the slab intrepid step onto that branch.
#[derive(Debug, Clone)]
pub struct MinSlopeIntrepid(pub MinSlopeFamily);

impl Operator for MinSlopeIntrepid {
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn apply_in_place(&self, x: &mut [f64]) {
        for (a, lo, hi) in &self.0.rows {
            if a.dot(x) >= 0.0 {
                intrepid_slab_step(a, *lo, *hi, x);
            } else {
                intrepid_slab_step(a, -hi, -lo, x);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlopeSet {
    Convex(SlabFamily),
    MinSlope(MinSlopeFamily),
}

impl SlopeSet {
    pub fn len(&self) -> usize {
        match self {
            SlopeSet::Convex(f) => f.len(),
            SlopeSet::MinSlope(f) => f.rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How the compiled sets are stepped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorPolicy {
    /// `T_1 = P_{C_1}`, intrepid maps on the slab families.
    Intrepid,
    /// `T_i = P_{C_i}` for every set (classical cyclic projections).
    Projection,
}

impl fmt::Display for OperatorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorPolicy::Intrepid => "intrepid",
            OperatorPolicy::Projection => "projection",
        })
    }
}

impl std::str::FromStr for OperatorPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "intrepid" => Ok(OperatorPolicy::Intrepid),
            "projection" | "plain" => Ok(OperatorPolicy::Projection),
            other => Err(format!("unknown operator policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRoadSets {
    pub interpolation: CoordinateAffine,
    pub slopes: [SlopeSet; 2],
    pub curvature: [SlabFamily; 3],
    /// 1-based row numbers held by each slope group.
    pub slope_rows: [Vec<usize>; 2],
    /// 1-based row numbers held by each curvature group.
    pub curvature_rows: [Vec<usize>; 3],
}

pub fn slope_normal(n: usize, j: usize) -> std::result::Result<SparseNormal, GeometryError> {
    SparseNormal::new(n, vec![(j, -1.0), (j + 1, 1.0)])
}

/// Row `j` (0-based) of `s_{j+1} - s_j` as a linear form in `x`.
pub fn curvature_normal(
    n: usize,
    j: usize,
    h0: f64,
    h1: f64,
) -> std::result::Result<SparseNormal, GeometryError> {
    SparseNormal::new(
        n,
        vec![(j, 1.0 / h0), (j + 1, -(1.0 / h0 + 1.0 / h1)), (j + 2, 1.0 / h1)],
    )
}

pub fn compile_constraints(p: &RoadProblem) -> Result<CompiledRoadSets> {
    p.validate()?;
    let n = p.n();
    let h = p.gaps();
    let interpolation = CoordinateAffine::new(n, &p.interp_indices, &p.interp_values)?;

    let mut slope_rows: [Vec<usize>; 2] = Default::default();
    let mut convex: [Vec<Hyperslab>; 2] = Default::default();
    let mut banded: [Vec<(SparseNormal, f64, f64)>; 2] = Default::default();
    for j in 0..n - 1 {
        let g = j % 2;
        let a = slope_normal(n, j)?;
        let bound = p.sigma[j] * h[j];
        slope_rows[g].push(j + 1);
        match p.sigma_min {
            None => convex[g].push(Hyperslab::from_sparse(a, -bound, bound)?),
            Some(smin) => banded[g].push((a, smin * h[j], bound)),
        }
    }
    let slopes = match p.sigma_min {
        None => {
            let [c2, c3] = convex;
            [
                SlopeSet::Convex(SlabFamily::new(n, c2)?),
                SlopeSet::Convex(SlabFamily::new(n, c3)?),
            ]
        }
        Some(_) => {
            let [b2, b3] = banded;
            [
                SlopeSet::MinSlope(MinSlopeFamily { dim: n, rows: b2 }),
                SlopeSet::MinSlope(MinSlopeFamily { dim: n, rows: b3 }),
            ]
        }
    };

    let mut curvature_rows: [Vec<usize>; 3] = Default::default();
    let mut curv: [Vec<Hyperslab>; 3] = Default::default();
    for j in 0..n.saturating_sub(2) {
        let g = j % 3;
        let a = curvature_normal(n, j, h[j], h[j + 1])?;
        curvature_rows[g].push(j + 1);
        curv[g].push(Hyperslab::from_sparse(a, p.delta[j], p.gamma[j])?);
    }
    let [c4, c5, c6] = curv;
    Ok(CompiledRoadSets {
        interpolation,
        slopes,
        curvature: [
            SlabFamily::new(n, c4)?,
            SlabFamily::new(n, c5)?,
            SlabFamily::new(n, c6)?,
        ],
        slope_rows,
        curvature_rows,
    })
}

impl CompiledRoadSets {
    pub fn dim(&self) -> usize {
        self.interpolation.dim()
    }

    /// The six sets in order `C1..C6` as trait objects.
    pub fn sets(&self) -> Vec<&dyn ConstraintSet> {
        let mut out: Vec<&dyn ConstraintSet> = vec![&self.interpolation];
        for s in &self.slopes {
            out.push(match s {
                SlopeSet::Convex(f) => f,
                SlopeSet::MinSlope(f) => f,
            });
        }
        for f in &self.curvature {
            out.push(f);
        }
        out
    }

    /// Builds `(C_i, T_i)` for `i = 1..6`. `T_1` is always the plain
    /// projector onto the interpolation subspace.
    pub fn to_problem(&self, policy: OperatorPolicy) -> Result<FeasibilityProblem> {
        let n = self.dim();
        let mut fp = FeasibilityProblem::new(n);
        fp.add_relaxed(self.interpolation.clone(), 1.0)?;
        for s in &self.slopes {
            match (s, policy) {
                (SlopeSet::Convex(f), OperatorPolicy::Intrepid) => {
                    fp.add_slab_family_intrepid(f.clone())?;
                }
                (SlopeSet::Convex(f), OperatorPolicy::Projection) => {
                    fp.add_relaxed(f.clone(), 1.0)?;
                }
                (SlopeSet::MinSlope(f), OperatorPolicy::Intrepid) => {
                    fp.push(
                        Box::new(f.clone()),
                        Box::new(MinSlopeIntrepid(f.clone())),
                        OperatorTag::Intrepid,
                    )?;
                }
                (SlopeSet::MinSlope(f), OperatorPolicy::Projection) => {
                    fp.push(
                        Box::new(f.clone()),
                        Box::new(Projector(f.clone())),
                        OperatorTag::Relaxed { lambda: 1.0 },
                    )?;
                }
            }
        }
        for f in &self.curvature {
            match policy {
                OperatorPolicy::Intrepid => fp.add_slab_family_intrepid(f.clone())?,
                OperatorPolicy::Projection => fp.add_relaxed(f.clone(), 1.0)?,
            };
        }
        if self.slopes.iter().any(|s| matches!(s, SlopeSet::MinSlope(_))) {
            fp.mark_heuristic();
        }
        Ok(fp)
    }
}

/// Block intrepid operator for a convex slope or curvature family.
pub fn family_operator(f: &SlabFamily) -> BlockIntrepidProjector {
    BlockIntrepidProjector::from_slab_family(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    Interpolation,
    Slope,
    Curvature,
    MinSlope,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Interpolation => "interpolation",
            ConstraintKind::Slope => "slope",
            ConstraintKind::Curvature => "curvature",
            ConstraintKind::MinSlope => "min_slope",
        })
    }
}

/// `slack >= 0` means satisfied; `index` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCheck {
    pub kind: ConstraintKind,
    pub index: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub tolerance: f64,
    pub checks: Vec<ConstraintCheck>,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.slack >= -self.tolerance)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| c.slack < -self.tolerance)
    }

    pub fn worst(&self) -> Option<&ConstraintCheck> {
        self.checks
            .iter()
            .min_by(|a, b| a.slack.total_cmp(&b.slack))
    }

    /// Smallest slack over the inequality rows.
    pub fn inequality_margin(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.kind != ConstraintKind::Interpolation)
            .map(|c| c.slack)
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `constraint_kind,index,slack`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "constraint_kind,index,slack")?;
        for c in &self.checks {
            writeln!(w, "{},{},{:?}", c.kind, c.index, c.slack)?;
        }
        Ok(())
    }
}

pub fn slopes(p: &RoadProblem, x: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(p.t.windows(2))
        .map(|(xs, ts)| (xs[1] - xs[0]) / (ts[1] - ts[0]))
        .collect()
}

pub fn verify_feasible(p: &RoadProblem, x: &[f64], tol: f64) -> Result<FeasibilityReport> {
    check_dim(p.n(), x)?;
    let mut checks = Vec::with_capacity(3 * p.n());
    for (&j, &y) in p.interp_indices.iter().zip(&p.interp_values) {
        checks.push(ConstraintCheck {
            kind: ConstraintKind::Interpolation,
            index: j + 1,
            slack: -(x[j] - y).abs(),
        });
    }
    let s = slopes(p, x);
    for (j, (sj, sigma)) in s.iter().zip(&p.sigma).enumerate() {
        checks.push(ConstraintCheck {
            kind: ConstraintKind::Slope,
            index: j + 1,
            slack: sigma - sj.abs(),
        });
        if let Some(smin) = p.sigma_min {
            checks.push(ConstraintCheck {
                kind: ConstraintKind::MinSlope,
                index: j + 1,
                slack: sj.abs() - smin,
            });
        }
    }
    for j in 0..p.n().saturating_sub(2) {
        let c = s[j + 1] - s[j];
        checks.push(ConstraintCheck {
            kind: ConstraintKind::Curvature,
            index: j + 1,
            slack: (p.gamma[j] - c).min(c - p.delta[j]),
        });
    }
    Ok(FeasibilityReport {
        tolerance: tol,
        checks,
    })
}

/// A point satisfying every constraint; `margin` is its smallest slack
/// over the inequality rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityWitness {
    pub point: Vec<f64>,
    pub margin: f64,
}

/// Knobs for [`generate_problem`]. Ranges are `(low, high)` and sampled
/// uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// Station spacing.
    pub gap: (f64, f64),
    /// Slope bounds `sigma_j`.
    pub sigma: (f64, f64),
    /// Magnitudes of `delta_j < 0 < gamma_j`.
    pub curvature: (f64, f64),
    /// Interior slack `m` kept by the ground-truth profile.
    pub margin: f64,
    /// Probability that an interior station is fixed; the two end stations
    /// are always fixed.
    pub interp_fraction: f64,
    /// Elevation of the first station.
    pub base_elevation: (f64, f64),
    /// Minimum absolute slope (nonconvex variant).
    pub min_slope: Option<f64>,
    pub max_retries: u32,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            gap: (10.0, 40.0),
            sigma: (0.04, 0.10),
            curvature: (0.004, 0.02),
            margin: 1e-3,
            interp_fraction: 0.05,
            base_elevation: (0.0, 50.0),
            min_slope: None,
            max_retries: 100,
        }
    }
}

impl GeneratorParams {
    fn check(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(RoadError::Generator(m));
        if n < 3 {
            return bad(format!("need n >= 3, got {n}"));
        }
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        for (name, r) in [
            ("gap", self.gap),
            ("sigma", self.sigma),
            ("curvature", self.curvature),
            ("base_elevation", self.base_elevation),
        ] {
            if !range_ok(r) {
                return bad(format!("range {name} = {r:?} is not a finite interval"));
            }
        }
        if !(self.gap.0 > 0.0) {
            return bad("station gaps must be positive".into());
        }
        if !(self.margin > 0.0) {
            return bad("margin must be positive".into());
        }
        if !(self.sigma.0 > 2.0 * self.margin) {
            return bad("slope bounds leave no room inside the margin".into());
        }
        if !(self.curvature.0 > self.margin) {
            return bad("curvature bounds leave no room inside the margin".into());
        }
        if !(0.0..=1.0).contains(&self.interp_fraction) {
            return bad("interp_fraction must lie in [0, 1]".into());
        }
        if let Some(smin) = self.min_slope {
            if !(smin > 0.0 && smin + 2.0 * self.margin < self.sigma.0 - self.margin) {
                return bad(format!(
                    "minimum slope {smin} leaves no strictly feasible slopes below sigma"
                ));
            }
        }
        Ok(())
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Random point of a union of disjoint open intervals.
fn sample_union(rng: &mut ChaCha8Rng, parts: &[(f64, f64)]) -> Option<f64> {
    let total: f64 = parts.iter().map(|(a, b)| (b - a).max(0.0)).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.gen_range(0.0..total);
    for &(a, b) in parts {
        let len = (b - a).max(0.0);
        if u < len {
            return Some(a + u);
        }
        u -= len;
    }
    parts.iter().rev().find(|(a, b)| b > a).map(|(a, b)| 0.5 * (a + b))
}

fn try_generate(
    n: usize,
    rng: &mut ChaCha8Rng,
    params: &GeneratorParams,
) -> Option<(RoadProblem, FeasibilityWitness)> {
    let m = params.margin;
    let mut t = Vec::with_capacity(n);
    t.push(0.0);
    for _ in 1..n {
        let last = *t.last().unwrap();
        t.push(last + sample(rng, params.gap));
    }
    let sigma: Vec<f64> = (0..n - 1).map(|_| sample(rng, params.sigma)).collect();
    let delta: Vec<f64> = (0..n - 2).map(|_| -sample(rng, params.curvature)).collect();
    let gamma: Vec<f64> = (0..n - 2).map(|_| sample(rng, params.curvature)).collect();

    // Slopes stay inside the tightest bound so every row keeps its margin.
    let cap = sigma.iter().copied().fold(f64::INFINITY, f64::min) - m;
    let window: Vec<(f64, f64)> = match params.min_slope {
        None => vec![(-cap, cap)],
        Some(smin) => vec![(-cap, -smin - m), (smin + m, cap)],
    };
    let mut s = Vec::with_capacity(n - 1);
    s.push(sample_union(rng, &window)?);
    for j in 0..n - 2 {
        let prev = s[j];
        let (lo, hi) = (prev + delta[j] + m, prev + gamma[j] - m);
        let parts: Vec<(f64, f64)> = window
            .iter()
            .map(|&(a, b)| (a.max(lo), b.min(hi)))
            .collect();
        s.push(sample_union(rng, &parts)?);
    }

    let mut x = Vec::with_capacity(n);
    x.push(sample(rng, params.base_elevation));
    for j in 0..n - 1 {
        x.push(x[j] + s[j] * (t[j + 1] - t[j]));
    }

    let mut interp_indices = vec![0];
    for j in 1..n - 1 {
        if rng.gen_bool(params.interp_fraction) {
            interp_indices.push(j);
        }
    }
    interp_indices.push(n - 1);
    let interp_values = interp_indices.iter().map(|&j| x[j]).collect();

    let problem = RoadProblem {
        t,
        interp_indices,
        interp_values,
        sigma,
        gamma,
        delta,
        sigma_min: params.min_slope,
        comment: None,
    };
    let report = verify_feasible(&problem, &x, 0.0).ok()?;
    let margin = report.inequality_margin();
    if !(report.passed() && margin > 0.0) {
        return None;
    }
    Some((problem, FeasibilityWitness { point: x, margin }))
}

/// Random strictly feasible problem of size `n`, deterministic in `seed`.
pub fn generate_problem(
    n: usize,
    seed: u64,
    params: &GeneratorParams,
) -> Result<(RoadProblem, FeasibilityWitness)> {
    params.check(n)?;
    for attempt in 0..params.max_retries.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt as u64));
        if let Some(out) = try_generate(n, &mut rng, params) {
            return Ok(out);
        }
    }
    Err(RoadError::Generator(format!(
        "no strictly feasible instance after {} attempts",
        params.max_retries
    )))
}

/// `count` problems with sizes drawn uniformly from `n_range` (inclusive).
pub fn generate_batch(
    count: usize,
    n_range: (usize, usize),
    seed: u64,
    params: &GeneratorParams,
) -> Result<Vec<(RoadProblem, FeasibilityWitness)>> {
    let (lo, hi) = n_range;
    if lo > hi {
        return Err(RoadError::Generator(format!("empty size range {lo}..={hi}")));
    }
    let mut sizes = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    (0..count)
        .map(|i| {
            let n = sizes.gen_range(lo..=hi);
            generate_problem(n, derive_seed(seed, i as u64), params)
        })
        .collect()
}

fn fmt_array<T: fmt::Debug>(values: impl IntoIterator<Item = T>) -> String {
    let items: Vec<String> = values.into_iter().map(|v| format!("{v:?}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn write_problem<W: Write>(p: &RoadProblem, mut w: W) -> Result<()> {
    p.validate()?;
    writeln!(w, "{FORMAT_TAG}")?;
    if let Some(c) = &p.comment {
        writeln!(w, "comment = {c}")?;
    }
    writeln!(w, "n = {}", p.n())?;
    writeln!(w, "t = {}", fmt_array(&p.t))?;
    writeln!(w, "J = {}", fmt_array(p.interp_indices.iter().map(|j| j + 1)))?;
    writeln!(w, "y = {}", fmt_array(&p.interp_values))?;
    writeln!(w, "sigma = {}", fmt_array(&p.sigma))?;
    writeln!(w, "gamma = {}", fmt_array(&p.gamma))?;
    writeln!(w, "delta = {}", fmt_array(&p.delta))?;
    if let Some(s) = p.sigma_min {
        writeln!(w, "sigma_min = {s:?}")?;
    }
    Ok(())
}

pub fn write_problem_file(p: &RoadProblem, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_problem(p, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

struct KeyValues {
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    fn parse<R: BufRead>(r: R, tag: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        let mut seen_tag = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            if !seen_tag {
                if text != tag {
                    return Err(RoadError::Parse {
                        line: lineno,
                        message: format!("expected format tag `{tag}`, found `{text}`"),
                    });
                }
                seen_tag = true;
                continue;
            }
            let Some((key, value)) = text.split_once('=') else {
                return Err(RoadError::Parse {
                    line: lineno,
                    message: format!("expected `key = value`, found `{text}`"),
                });
            };
            let key = key.trim().to_string();
            if entries.iter().any(|(k, _, _)| *k == key) {
                return Err(RoadError::Parse {
                    line: lineno,
                    message: format!("duplicate field `{key}`"),
                });
            }
            entries.push((key, value.trim().to_string(), lineno));
        }
        if !seen_tag {
            return Err(RoadError::Parse {
                line: 1,
                message: format!("missing format tag `{tag}`"),
            });
        }
        Ok(Self { entries })
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _, _)| !known.contains(&k.as_str())) {
            Some((k, _, line)) => Err(RoadError::Parse {
                line: *line,
                message: format!("unknown field `{k}`"),
            }),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn require(&self, key: &str) -> Result<(&str, usize)> {
        self.get(key).ok_or_else(|| RoadError::Parse {
            line: 0,
            message: format!("missing required field `{key}`"),
        })
    }

    fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| RoadError::Parse {
                line,
                message: format!("field `{key}`: cannot parse `{v}`"),
            }),
        }
    }

    fn array<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let (v, line) = self.require(key)?;
        let inner = v
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| RoadError::Parse {
                line,
                message: format!("field `{key}`: expected `[v1, v2, ...]`"),
            })?;
        if inner.trim().is_empty() {
            return Ok(Vec::new());
        }
        inner
            .split(',')
            .enumerate()
            .map(|(i, item)| {
                item.trim().parse().map_err(|_| RoadError::Parse {
                    line,
                    message: format!("field `{key}`, entry {}: cannot parse `{}`", i + 1, item.trim()),
                })
            })
            .collect()
    }
}

pub fn read_problem<R: BufRead>(r: R) -> Result<RoadProblem> {
    let kv = KeyValues::parse(r, FORMAT_TAG)?;
    kv.reject_unknown(&[
        "n", "t", "J", "y", "sigma", "gamma", "delta", "sigma_min", "comment",
    ])?;
    let n: usize = kv.scalar("n")?.ok_or_else(|| RoadError::Parse {
        line: 0,
        message: "missing required field `n`".into(),
    })?;
    let t: Vec<f64> = kv.array("t")?;
    if t.len() != n {
        return Err(RoadError::Parse {
            line: kv.require("t")?.1,
            message: format!("field `t` has {} entries, expected n = {n}", t.len()),
        });
    }
    let j1: Vec<usize> = kv.array("J")?;
    if let Some(pos) = j1.iter().position(|&j| j == 0) {
        return Err(RoadError::Parse {
            line: kv.require("J")?.1,
            message: format!("field `J`, entry {}: indices are 1-based", pos + 1),
        });
    }
    let p = RoadProblem {
        t,
        interp_indices: j1.into_iter().map(|j| j - 1).collect(),
        interp_values: kv.array("y")?,
        sigma: kv.array("sigma")?,
        gamma: kv.array("gamma")?,
        delta: kv.array("delta")?,
        sigma_min: kv.scalar("sigma_min")?,
        comment: kv.get("comment").map(|(c, _)| c.to_string()),
    };
    p.validate()?;
    Ok(p)
}

pub fn read_problem_file(path: impl AsRef<Path>) -> Result<RoadProblem> {
    let f = std::fs::File::open(path)?;
    read_problem(std::io::BufReader::new(f))
}

pub fn write_witness<W: Write>(wit: &FeasibilityWitness, mut w: W) -> Result<()> {
    writeln!(w, "{WITNESS_TAG}")?;
    writeln!(w, "margin = {:?}", wit.margin)?;
    writeln!(w, "x = {}", fmt_array(&wit.point))?;
    Ok(())
}

pub fn read_witness<R: BufRead>(r: R) -> Result<FeasibilityWitness> {
    let kv = KeyValues::parse(r, WITNESS_TAG)?;
    kv.reject_unknown(&["margin", "x"])?;
    Ok(FeasibilityWitness {
        margin: kv.scalar("margin")?.unwrap_or(f64::NAN),
        point: kv.array("x")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(n: usize) -> RoadProblem {
        RoadProblem {
            t: (0..n).map(|i| i as f64).collect(),
            interp_indices: vec![],
            interp_values: vec![],
            sigma: vec![1.0; n - 1],
            gamma: vec![10.0; n.saturating_sub(2)],
            delta: vec![-10.0; n.saturating_sub(2)],
            sigma_min: None,
            comment: None,
        }
    }

    #[test]
    fn grouping_for_three_breakpoints() {
        let c = compile_constraints(&small(3)).unwrap();
        assert_eq!(c.slope_rows, [vec![1], vec![2]]);
        assert_eq!(c.curvature_rows, [vec![1], vec![], vec![]]);
        assert!(c.curvature[1].is_empty() && c.curvature[2].is_empty());
    }

    #[test]
    fn two_breakpoints_have_no_curvature() {
        let c = compile_constraints(&small(2)).unwrap();
        assert_eq!(c.slopes[0].len() + c.slopes[1].len(), 1);
        assert!(c.curvature.iter().all(|f| f.is_empty()));
    }

    #[test]
    fn slope_slab_row_one() {
        let mut p = small(3);
        p.sigma = vec![2.0, 2.0];
        let c = compile_constraints(&p).unwrap();
        let SlopeSet::Convex(f) = &c.slopes[0] else {
            panic!("convex expected")
        };
        let s = &f.slabs()[0];
        assert_eq!(s.normal().to_dense(), vec![-1.0, 1.0, 0.0]);
        assert_eq!((s.lower(), s.upper()), (-2.0, 2.0));
        let x = s.project(&[0.0, 5.0, 5.0]).unwrap();
        for (u, v) in x.iter().zip([1.5, 3.5, 5.0]) {
            assert_abs_diff_eq!(*u, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_profile_is_feasible() {
        let p = RoadProblem {
            sigma: vec![1.0, 1.0],
            gamma: vec![0.0],
            delta: vec![0.0],
            ..small(3)
        };
        assert!(verify_feasible(&p, &[0.0; 3], 0.0).unwrap().passed());
    }

    #[test]
    fn minslope_examples() {
        let (lo, hi) = (0.5, 2.0);
        assert_eq!(project_minslope(lo, hi, lo + 0.1).unwrap(), lo + 0.1);
        assert_eq!(project_minslope(lo, hi, 0.0).unwrap(), lo);
        assert_eq!(project_minslope(lo, hi, -0.4 * lo).unwrap(), -lo);
        assert_eq!(project_minslope(lo, hi, 5.0).unwrap(), hi);
        assert_eq!(project_minslope(lo, hi, -5.0).unwrap(), -hi);
        assert!(project_minslope(0.0, 1.0, 0.3).is_err());
        assert!(project_minslope(2.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn invariant_violations_are_named() {
        let mut p = small(4);
        p.t = vec![0.0, 1.0, 1.0, 2.0];
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("strictly increasing"), "{err}");
        let mut p = small(4);
        p.delta[1] = 20.0;
        assert!(p.validate().unwrap_err().to_string().contains("delta_j <= gamma_j"));
        let mut p = small(4);
        p.sigma_min = Some(2.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn interpolant_start_matches_fixed_values() {
        let mut p = small(5);
        p.interp_indices = vec![1, 3];
        p.interp_values = vec![2.0, 6.0];
        assert_eq!(p.interpolant_start(), vec![2.0, 2.0, 4.0, 6.0, 6.0]);
        assert_eq!(small(3).interpolant_start(), vec![0.0; 3]);
    }

    #[test]
    fn generator_is_deterministic_and_strict() {
        let params = GeneratorParams::default();
        let (a, wa) = generate_problem(60, 11, &params).unwrap();
        let (b, wb) = generate_problem(60, 11, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        assert!(wa.margin > 0.0);
        assert!(verify_feasible(&a, &wa.point, 0.0).unwrap().passed());
        let (c, _) = generate_problem(60, 12, &params).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generator_rejects_bad_params() {
        let mut params = GeneratorParams::default();
        assert!(generate_problem(2, 0, &params).is_err());
        params.min_slope = Some(0.5);
        assert!(matches!(
            generate_problem(10, 0, &params),
            Err(RoadError::Generator(_))
        ));
    }

    #[test]
    fn file_round_trip_and_errors() {
        let (mut p, w) = generate_problem(
            20,
            3,
            &GeneratorParams {
                min_slope: Some(0.005),
                ..Default::default()
            },
        )
        .unwrap();
        p.comment = Some("test profile".into());
        let mut buf = Vec::new();
        write_problem(&p, &mut buf).unwrap();
        assert_eq!(read_problem(buf.as_slice()).unwrap(), p);

        let mut wbuf = Vec::new();
        write_witness(&w, &mut wbuf).unwrap();
        assert_eq!(read_witness(wbuf.as_slice()).unwrap(), w);

        let bad = "roadfp/1\nn = 3\nt = [0, 2, 1]\nJ = []\ny = []\nsigma = [1, 1]\ngamma = [1]\ndelta = [-1]\n";
        let err = read_problem(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("strictly increasing"), "{err}");

        let convex = "roadfp/1\nn = 3\nt = [0, 1, 2]\nJ = [1]\ny = [4.5]\nsigma = [1, 1]\ngamma = [1]\ndelta = [-1]\n";
        let p = read_problem(convex.as_bytes()).unwrap();
        assert_eq!(p.sigma_min, None);
        assert_eq!(p.interp_indices, vec![0]);

        let garbled = "roadfp/1\nn = 3\nt = [0, x, 2]\n";
        match read_problem(garbled.as_bytes()) {
            Err(RoadError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("entry 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_problem("roadfp/2\n".as_bytes()).is_err());
        assert!(read_problem(
            "roadfp/1\nn = 2\nt = [0, 1]\nJ = []\ny = []\nsigma = [1]\ngamma = []\ndelta = []\nfoo = 1\n"
                .as_bytes()
        )
        .is_err());
    }

    #[test]
    fn report_csv_and_named_violation() {
        let p = small(4);
        let x = [0.0, 0.0, 3.0, 3.0];
        let r = verify_feasible(&p, &x, 1e-9).unwrap();
        assert!(!r.passed());
        let v: Vec<_> = r.violations().collect();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].kind, v[0].index), (ConstraintKind::Slope, 2));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("constraint_kind,index,slack\n"));
        assert!(text.contains("slope,2,-2.0"));
    }
}
