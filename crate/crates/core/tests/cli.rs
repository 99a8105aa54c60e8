use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cycip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cycip"))
        .args(args)
        .output()
        .expect("failed to spawn cycip")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value<'a>(out: &'a str, key: &str) -> Option<&'a str> {
    out.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix(" = "))
}

fn gen(dir: &Path, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["gen", "--out", out];
    args.extend_from_slice(extra);
    let o = cycip(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        gen(d, &["--n-range", "20:80", "--count", "4", "--seed", "11"]);
    }
    let fa = read_all(a.path());
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, read_all(b.path()));
    let c = tempfile::tempdir().unwrap();
    gen(c.path(), &["--n-range", "20:80", "--count", "4", "--seed", "12"]);
    assert_ne!(fa, read_all(c.path()));
}

#[test]
fn solve_generated_problem_exits_zero() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), &["--n", "50", "--seed", "3"]);
    let problem = d.path().join("problem_000.roadfp");
    let point = d.path().join("x.txt");
    let trace = d.path().join("trace.csv");
    let o = cycip(&[
        "solve",
        "--problem",
        problem.to_str().unwrap(),
        "--out",
        point.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{s}");
    assert_eq!(value(&s, "status"), Some("solved"));
    assert_eq!(value(&s, "n"), Some("50"));
    assert_eq!(value(&s, "metric"), Some("dinf"));
    let dinf: f64 = value(&s, "dinf").unwrap().parse().unwrap();
    assert!(dinf < 5e-4);
    assert!(value(&s, "heuristic").is_none());
    let x: Vec<f64> = fs::read_to_string(&point)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(x.len(), 50);
    assert!(fs::read_to_string(&trace).unwrap().lines().count() > 1);
}

#[test]
fn feasible_start_needs_no_iterations() {
    // a problem whose interpolant start is already feasible: flat data with
    // generous bounds
    let d = tempfile::tempdir().unwrap();
    let problem = d.path().join("flat.roadfp");
    fs::write(
        &problem,
        "roadfp/1\nn = 4\nt = [0, 1, 2, 3]\nJ = [1, 4]\ny = [0, 0]\nsigma = [1, 1, 1]\ngamma = [1, 1]\ndelta = [-1, -1]\n",
    )
    .unwrap();
    let o = cycip(&["solve", "--problem", problem.to_str().unwrap()]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{s}{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&s, "iterations"), Some("0"));
}

#[test]
fn solve_iteration_limit_exits_one() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), &["--n", "300", "--seed", "5"]);
    let problem = d.path().join("problem_000.roadfp");
    let o = cycip(&[
        "solve",
        "--problem",
        problem.to_str().unwrap(),
        "--start",
        "zero",
        "--max-iters",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert_ne!(value(&stdout(&o), "status"), Some("solved"));
}

#[test]
fn bad_input_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope.roadfp");
    assert_eq!(cycip(&["solve", "--problem", missing.to_str().unwrap()]).status.code(), Some(2));
    let junk = d.path().join("junk.roadfp");
    fs::write(&junk, "hello\n").unwrap();
    let o = cycip(&["solve", "--problem", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(cycip(&["solve", "--problem", "x", "--metric", "d3"]).status.code(), Some(2));
    let empty = tempfile::tempdir().unwrap();
    let out = d.path().join("out");
    let o = cycip(&[
        "bench",
        "--problems",
        empty.path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn nonconvex_solve_is_flagged_heuristic() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), &["--n", "40", "--seed", "9", "--nonconvex", "--min-slope", "0.01"]);
    let text = fs::read_to_string(d.path().join("problem_000.roadfp")).unwrap();
    assert!(text.contains("sigma_min"));
    let o = cycip(&[
        "solve",
        "--problem",
        d.path().join("problem_000.roadfp").to_str().unwrap(),
        "--max-time",
        "5",
    ]);
    assert!(matches!(o.status.code(), Some(0 | 1)));
    assert_eq!(value(&stdout(&o), "heuristic"), Some("true"));
}

#[test]
fn bench_then_profile_writes_all_outputs() {
    let d = tempfile::tempdir().unwrap();
    let probs = d.path().join("probs");
    gen(&probs, &["--n-range", "30:60", "--count", "3", "--seed", "1"]);
    let bench_out = d.path().join("bench");
    let o = cycip(&[
        "bench",
        "--problems",
        probs.to_str().unwrap(),
        "--algs",
        "CycIP_inf,CycP",
        "--tau-max",
        "10",
        "--untimed",
        "--out",
        bench_out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = fs::read_to_string(bench_out.join("results.csv")).unwrap();
    assert!(results.contains("# algs = CycIP_inf,CycP"));
    let rows = results.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 3 * 2);

    let prof_out = d.path().join("profile");
    let o = cycip(&[
        "profile",
        "--results",
        bench_out.join("results.csv").to_str().unwrap(),
        "--points",
        "11",
        "--out",
        prof_out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.csv", "profile.csv", "profile.gp"] {
        assert!(prof_out.join(f).exists(), "missing {f}");
    }
    let gp = fs::read_to_string(prof_out.join("profile.gp")).unwrap();
    assert!(gp.contains("# algorithm: CycIP_inf"));
    assert!(gp.contains("# algorithm: CycP"));
    let profile = fs::read_to_string(prof_out.join("profile.csv")).unwrap();
    assert_eq!(profile.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 11);

    // profiling the same results twice gives identical files
    let again = d.path().join("profile2");
    cycip(&[
        "profile",
        "--results",
        bench_out.join("results.csv").to_str().unwrap(),
        "--points",
        "11",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(prof_out.join("profile.csv")).unwrap(),
        fs::read(again.join("profile.csv")).unwrap()
    );
}
