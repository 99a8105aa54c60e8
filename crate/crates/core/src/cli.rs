//! `cycip` command line: `gen`, `solve`, `bench`, `profile`.
//!
//! Exit codes: 0 on success, 1 when `solve` stops without reaching the
//! tolerance, 2 on usage, input or I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    default_kappa_grid, export_results, performance_ratios, profile_curve, read_results_csv,
    run_suite, write_results_csv, AlgorithmSpec, BenchProblem, ControlTemplate, StartPoint,
    SuiteOptions,
};
use crate::road::{
    compile_constraints, generate_batch, generate_problem, read_problem_file, verify_feasible,
    write_problem_file, write_witness, GeneratorParams, OperatorPolicy,
};
use crate::solver::{run_cycip, Metric, SolverConfig, TraceDepth};

const EXIT_OK: i32 = 0;
const EXIT_UNSOLVED: i32 = 1;
const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cycip", version, about = "Cyclic intrepid projections for road-profile feasibility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate random feasible road problems.
    Gen(GenArgs),
    /// Solve one problem file.
    Solve(SolveArgs),
    /// Run a set of algorithms over a directory of problems.
    Bench(BenchArgs),
    /// Build performance profiles from a results file.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Number of stations for every problem.
    #[arg(long, conflicts_with = "n_range")]
    n: Option<usize>,
    /// Inclusive size range `LO:HI`, sampled per problem.
    #[arg(long, value_parser = parse_range)]
    n_range: Option<(usize, usize)>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add a minimum absolute slope constraint.
    #[arg(long, requires = "min_slope")]
    nonconvex: bool,
    #[arg(long, requires = "nonconvex")]
    min_slope: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value = "dinf")]
    metric: Metric,
    #[arg(long, default_value_t = 5e-4)]
    eps: f64,
    #[arg(long, default_value = "cyclic")]
    control: ControlTemplate,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time limit in seconds.
    #[arg(long, default_value_t = 150.0)]
    max_time: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: u64,
    /// Write a per-sweep trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "intrepid")]
    operators: OperatorPolicy,
    #[arg(long, default_value = "interpolant")]
    start: StartPoint,
    /// Write the final point here, one value per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Directory of `.roadfp` files.
    #[arg(long)]
    problems: PathBuf,
    /// Comma-separated algorithm names, or `all`.
    #[arg(long, default_value = "all")]
    algs: String,
    /// Per-run time limit in seconds.
    #[arg(long, default_value_t = 150.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5e-4)]
    eps: f64,
    #[arg(long, default_value = "interpolant")]
    start: StartPoint,
    /// Run cells in parallel; timings are then not comparable.
    #[arg(long)]
    untimed: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of kappa grid points.
    #[arg(long, default_value_t = 101)]
    points: usize,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn seconds(s: f64, flag: &str) -> Result<Duration, String> {
    Duration::try_from_secs_f64(s)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| format!("--{flag} must be a positive number of seconds, got {s}"))
}

type CmdResult = Result<i32, Box<dyn std::error::Error>>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let out = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Profile(a) => profile(a),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn gen(a: GenArgs) -> CmdResult {
    let params = GeneratorParams {
        min_slope: a.min_slope,
        ..GeneratorParams::default()
    };
    let batch = match (a.n, a.n_range) {
        (Some(n), None) => (0..a.count)
            .map(|i| generate_problem(n, crate::control::derive_seed(a.seed, i as u64), &params))
            .collect::<Result<Vec<_>, _>>()?,
        (None, Some(range)) => generate_batch(a.count, range, a.seed, &params)?,
        _ => return Err("one of --n or --n-range is required".into()),
    };
    fs::create_dir_all(&a.out)?;
    let width = a.count.saturating_sub(1).to_string().len().max(3);
    for (i, (mut problem, witness)) in batch.into_iter().enumerate() {
        problem.comment = Some(format!(
            "cycip gen seed={} index={} n={}{}",
            a.seed,
            i,
            problem.n(),
            a.min_slope
                .map(|s| format!(" min_slope={s}"))
                .unwrap_or_default()
        ));
        let stem = format!("problem_{i:0width$}");
        write_problem_file(&problem, a.out.join(format!("{stem}.roadfp")))?;
        let mut w = fs::File::create(a.out.join(format!("{stem}.witness")))?;
        write_witness(&witness, &mut w)?;
        println!("{stem} n={} margin={:e}", problem.n(), witness.margin);
    }
    Ok(EXIT_OK)
}

fn solve(a: SolveArgs) -> CmdResult {
    let problem = read_problem_file(&a.problem)?;
    let fp = compile_constraints(&problem)?.to_problem(a.operators)?;
    let cfg = SolverConfig {
        tolerance: a.eps,
        metric: a.metric,
        max_iterations: a.max_iters,
        max_time: Some(seconds(a.max_time, "max-time")?),
        control: a.control.instantiate(fp.len(), a.seed),
        trace: if a.trace.is_some() {
            TraceDepth::Summary
        } else {
            TraceDepth::None
        },
    };
    let x0 = a.start.point(&problem);
    let r = run_cycip(&fp, &cfg, &x0)?;
    if let (Some(path), Some(trace)) = (&a.trace, &r.trace) {
        trace.write_csv(fs::File::create(path)?)?;
    }
    if let Some(path) = &a.out {
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        for v in &r.point {
            writeln!(w, "{v:?}")?;
        }
        w.flush()?;
    }
    let report = verify_feasible(&problem, &r.point, a.eps)?;
    println!("problem = {}", a.problem.display());
    println!("n = {}", problem.n());
    println!(
        "metric = {}\neps = {}\ncontrol = {}\nseed = {}\noperators = {}\nstart = {}",
        a.metric, a.eps, a.control, a.seed, a.operators, a.start
    );
    println!("status = {}", r.status);
    println!("iterations = {}", r.iterations);
    println!("time_ms = {:.3}", r.wall_time.as_secs_f64() * 1e3);
    println!("d2 = {:e}\ndinf = {:e}", r.d2, r.dinf);
    if let Some(w) = report.worst() {
        println!("worst_constraint = {} {} {:e}", w.kind, w.index, w.slack);
    }
    if r.heuristic {
        println!("heuristic = true");
    }
    Ok(if r.solved() { EXIT_OK } else { EXIT_UNSOLVED })
}

fn problem_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "roadfp"))
        .collect();
    files.sort();
    Ok(files)
}

fn bench(a: BenchArgs) -> CmdResult {
    let algs = AlgorithmSpec::parse_list(&a.algs)?;
    let files = problem_files(&a.problems)?;
    if files.is_empty() {
        return Err(format!("no .roadfp files in {}", a.problems.display()).into());
    }
    let problems = files
        .iter()
        .map(|f| {
            Ok(BenchProblem {
                id: f.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                problem: read_problem_file(f)?,
            })
        })
        .collect::<Result<Vec<_>, crate::road::RoadError>>()?;
    let opts = SuiteOptions {
        tau_max: seconds(a.tau_max, "tau-max")?,
        tolerance: a.eps,
        seed: a.seed,
        start: a.start,
        timed: !a.untimed,
        ..SuiteOptions::default()
    };
    let results = run_suite(&problems, &algs, &opts)?;
    let names: Vec<&str> = algs.iter().map(|x| x.name.as_str()).collect();
    let meta = vec![
        ("algs".to_string(), names.join(",")),
        ("tau_max".to_string(), a.tau_max.to_string()),
        ("seed".to_string(), a.seed.to_string()),
        ("eps".to_string(), a.eps.to_string()),
        ("start".to_string(), a.start.to_string()),
        ("timed".to_string(), (!a.untimed).to_string()),
    ];
    fs::create_dir_all(&a.out)?;
    let mut buf = Vec::new();
    write_results_csv(&results, &mut buf, &meta)?;
    fs::write(a.out.join("results.csv"), buf)?;
    let solved = results
        .iter()
        .filter(|r| r.status == crate::bench::RunStatus::Solved)
        .count();
    println!(
        "{} runs ({} problems x {} algorithms), {} solved",
        results.len(),
        problems.len(),
        algs.len(),
        solved
    );
    Ok(EXIT_OK)
}

fn profile(a: ProfileArgs) -> CmdResult {
    let results = read_results_csv(fs::File::open(&a.results)?)?;
    let table = performance_ratios(&results)?;
    let kappas = default_kappa_grid(&table, a.points);
    let curves = profile_curve(&table, &kappas);
    let meta = vec![
        ("results".to_string(), a.results.display().to_string()),
        ("points".to_string(), a.points.to_string()),
    ];
    export_results(&results, &curves, &a.out, &meta)?;
    for c in &curves {
        println!(
            "{} rho(0) = {} rho({}) = {}",
            c.algorithm,
            c.rho[0],
            c.kappa.last().copied().unwrap_or(0.0),
            c.rho.last().copied().unwrap_or(0.0)
        );
    }
    Ok(EXIT_OK)
}
