//! Cyclic intrepid projections for convex feasibility problems.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: sets with exact projections (hyperplanes, hyperslabs,
//!   coordinate constraints, disjoint slab families, enlargements).
//! - [`operators`]: relaxed projectors, intrepid projectors and their
//!   blockwise form.
//! - [`control`]: index selectors (cyclic, per-block random permutations,
//!   explicit sequences) and quasicyclicity checks.
//! - [`solver`]: the cyclic driver, infeasibility measures and Fejér
//!   diagnostics.
//! - [`road`]: the road vertical alignment model, its generator, verifier and
//!   `roadfp/1` file format.
//! - [`bench`]: timed algorithm × problem suites and performance profiles.
//! - [`cli`]: the `cycip` command-line front end.

// `!(a <= b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod control;
pub mod geometry;
pub mod operators;
pub mod road;
pub mod solver;

pub use control::{ControlSchedule, QuasiperiodCertificate};
pub use geometry::{
    ConstraintSet, CoordinateAffine, Enlargement, Hyperplane, Hyperslab, SlabFamily,
};
pub use operators::{BlockIntrepidProjector, IntrepidProjector, Operator, RelaxedProjector};
pub use road::{
    compile_constraints, generate_problem, verify_feasible, GeneratorParams, OperatorPolicy,
    RoadProblem,
};
pub use solver::{
    run_cycip, FeasibilityProblem, Metric, SolveResult, SolveStatus, SolverConfig, TraceDepth,
};
