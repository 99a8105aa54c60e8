use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use cycip_ffi::*;

fn last_error() -> String {
    let p = cycip_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generated(n: usize, seed: u64) -> (*mut CycipProblem, Vec<f64>) {
    let mut p = ptr::null_mut();
    let mut w = vec![0.0; n];
    let st = unsafe { cycip_problem_generate(n, seed, 0.0, &mut p, w.as_mut_ptr()) };
    assert_eq!(st, CycipStatus::Ok);
    (p, w)
}

#[test]
fn generate_solve_verify_round_trip() {
    let (p, w) = generated(60, 7);
    unsafe {
        assert_eq!(cycip_problem_dim(p), 60);
        let mut ok = 0;
        assert_eq!(cycip_verify(p, w.as_ptr(), w.len(), 0.0, &mut ok), CycipStatus::Ok);
        assert_eq!(ok, 1);

        let mut r = ptr::null_mut();
        assert_eq!(cycip_solve(p, ptr::null(), &mut r), CycipStatus::Ok);
        assert_eq!(cycip_result_status(r), CycipSolveStatus::Solved);
        assert!(cycip_result_dinf(r) < 5e-4);
        assert!(cycip_result_d2(r).is_finite());
        assert!(cycip_result_time_ms(r) >= 0.0);

        let mut small = vec![0.0; 10];
        assert_eq!(
            cycip_result_point(r, small.as_mut_ptr(), small.len()),
            CycipStatus::BufferTooSmall
        );
        assert!(last_error().contains("buffer"));
        let mut x = vec![0.0; 60];
        assert_eq!(cycip_result_point(r, x.as_mut_ptr(), x.len()), CycipStatus::Ok);
        assert!(x.iter().all(|v| v.is_finite()));

        cycip_result_free(r);
        cycip_problem_free(p);
    }
}

#[test]
fn iteration_limit_is_reported_through_status() {
    let (p, _) = generated(200, 3);
    unsafe {
        let mut opts = cycip_solve_options_default();
        opts.max_iterations = 1;
        opts.start = CycipStart::Zero;
        let mut r = ptr::null_mut();
        assert_eq!(cycip_solve(p, &opts, &mut r), CycipStatus::Ok);
        assert_eq!(cycip_result_status(r), CycipSolveStatus::IterationLimit);
        assert_eq!(cycip_result_iterations(r), 1);
        cycip_result_free(r);
        cycip_problem_free(p);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(cycip_problem_load(ptr::null(), &mut p), CycipStatus::NullPointer);

        let missing = CString::new("/nonexistent/dir/x.roadfp").unwrap();
        assert_eq!(cycip_problem_load(missing.as_ptr(), &mut p), CycipStatus::IoError);
        assert!(!last_error().is_empty());

        let junk = CString::new("not a problem file\n").unwrap();
        assert_eq!(cycip_problem_parse(junk.as_ptr(), &mut p), CycipStatus::ParseError);
        assert!(p.is_null());

        let mut x = [1.0, 1.0];
        let a = [0.0, 0.0];
        assert_eq!(
            cycip_project_hyperslab(a.as_ptr(), 2, 0.0, 1.0, x.as_mut_ptr()),
            CycipStatus::InvalidArgument
        );
        assert_eq!(cycip_problem_dim(ptr::null()), 0);
        cycip_problem_free(ptr::null_mut());
        cycip_result_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_previous_error() {
    unsafe {
        let mut p = ptr::null_mut();
        cycip_problem_load(ptr::null(), &mut p);
        let mut x = [3.0, 0.0];
        let a = [1.0, 0.0];
        assert_eq!(
            cycip_project_hyperslab(a.as_ptr(), 2, -1.0, 1.0, x.as_mut_ptr()),
            CycipStatus::Ok
        );
        assert!(cycip_last_error().is_null());
        assert_eq!(x, [1.0, 0.0]);
    }
}

#[test]
fn intrepid_hyperplane_regimes() {
    let a = [0.0, 2.0];
    unsafe {
        // d = 3, beta = 1: projection
        let mut x = [5.0, 3.0];
        assert_eq!(cycip_intrepid_hyperplane(a.as_ptr(), 2, 0.0, 1.0, x.as_mut_ptr()), CycipStatus::Ok);
        assert!((x[0] - 5.0).abs() < 1e-15 && x[1].abs() < 1e-15);
        // d = 0.5 <= beta: identity
        let mut x = [5.0, 0.5];
        cycip_intrepid_hyperplane(a.as_ptr(), 2, 0.0, 1.0, x.as_mut_ptr());
        assert_eq!(x, [5.0, 0.5]);
        // d = 1.5: x + (1 - d/beta)(x - Px) = 1.5 - 0.5 * 1.5
        let mut x = [5.0, 1.5];
        cycip_intrepid_hyperplane(a.as_ptr(), 2, 0.0, 1.0, x.as_mut_ptr());
        assert!((x[1] - 0.75).abs() < 1e-14);
        assert_eq!(
            cycip_intrepid_hyperplane(a.as_ptr(), 2, 0.0, -1.0, x.as_mut_ptr()),
            CycipStatus::InvalidArgument
        );
    }
}

#[test]
fn profile_from_timing_matrix() {
    // algorithm 0 solves both problems, algorithm 1 is twice as slow on p0
    // and fails p1
    let times = [1.0, 2.0, 2.0, f64::NAN];
    let kappa = [0.0, 1.0, 10.0];
    let mut rho = [f64::NAN; 6];
    let st = unsafe {
        cycip_performance_profile(times.as_ptr(), 2, 2, kappa.as_ptr(), 3, rho.as_mut_ptr())
    };
    assert_eq!(st, CycipStatus::Ok);
    assert_eq!(rho, [1.0, 1.0, 1.0, 0.0, 0.5, 0.5]);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(cycip_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cycip.h");
    assert!(header.exists(), "header not generated");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"cycip.h\"\nint main(void) {\n  CycipSolveOptions o = cycip_solve_options_default();\n  return (int)o.metric;\n}\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler available; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
