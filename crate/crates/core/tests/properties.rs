use std::time::Duration;

use cycip::bench::{
    profile_value, ratios_from_times, run_suite, AlgorithmSpec, BenchProblem, RunStatus,
    SuiteOptions,
};
use cycip::geometry::{ConstraintSet, Hyperplane, Hyperslab};
use cycip::operators::{IntrepidProjector, Operator};
use cycip::road::{
    generate_problem, read_problem, verify_feasible, write_problem, GeneratorParams, RoadProblem,
};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 3)
}

fn normal3() -> impl Strategy<Value = Vec<f64>> {
    vec3().prop_filter("nonzero", |a| a.iter().map(|v| v * v).sum::<f64>() > 1e-2)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn slab_projection_is_idempotent_and_nonexpansive(
        a in normal3(), lo in -20.0..20.0f64, w in 0.0..10.0f64, x in vec3(), y in vec3(),
    ) {
        let s = Hyperslab::new(&a, lo, lo + w).unwrap();
        let px = s.project(&x).unwrap();
        let py = s.project(&y).unwrap();
        let scale = 1e-12 * (1.0 + norm(&x) + norm(&y));
        prop_assert!(s.distance(&px).unwrap() <= scale * norm(&a).max(1.0));
        prop_assert!(norm(&diff(&s.project(&px).unwrap(), &px)) <= scale);
        prop_assert!(norm(&diff(&px, &py)) <= norm(&diff(&x, &y)) + scale);
    }

    #[test]
    fn intrepid_lands_in_enlargement(
        a in normal3(), b in -20.0..20.0f64, beta in 0.01..10.0f64, x in vec3(),
    ) {
        let h = Hyperplane::new(&a, b).unwrap();
        let d = h.distance(&x).unwrap();
        let q = IntrepidProjector::new(h.clone(), beta).unwrap();
        let qx = q.apply(&x).unwrap();
        prop_assert!(h.distance(&qx).unwrap() <= beta + 1e-10);
        if d <= beta {
            prop_assert_eq!(qx, x);
        }
    }

    #[test]
    fn best_ratio_is_one_and_profiles_are_monotone(
        times in prop::collection::vec(prop::collection::vec(prop::option::of(1e-6..10.0f64), 5), 3),
    ) {
        prop_assume!((0..5).all(|p| times.iter().any(|row| row[p].is_some())));
        let r = ratios_from_times(&times).unwrap();
        for p in 0..5 {
            let best = r.iter().map(|row| row[p]).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(best, 1.0);
        }
        for row in &r {
            let mut prev = 0.0;
            for k in 0..40 {
                let v = profile_value(row, k as f64 * 0.5);
                prop_assert!((0.0..=1.0).contains(&v) && v >= prev);
                prev = v;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_problems_round_trip_and_witness_is_feasible(n in 3usize..200, seed in any::<u64>()) {
        let (p, w) = generate_problem(n, seed, &GeneratorParams::default()).unwrap();
        prop_assert!(w.margin > 0.0);
        prop_assert!(verify_feasible(&p, &w.point, 0.0).unwrap().passed());
        let mut buf = Vec::new();
        write_problem(&p, &mut buf).unwrap();
        let back = read_problem(&buf[..]).unwrap();
        prop_assert_eq!(back, p);
    }
}

#[test]
fn infeasible_problem_times_out_at_tau_max() {
    // both ends are fixed but the slope between them exceeds its bound
    let text = "roadfp/1\nn = 3\nt = [0, 1, 2]\nJ = [1, 3]\ny = [0, 10]\nsigma = [1, 1]\ngamma = [1]\ndelta = [-1]\n";
    let problem: RoadProblem = read_problem(text.as_bytes()).unwrap();
    let problems = [BenchProblem { id: "bad".into(), problem }];
    let algs = AlgorithmSpec::parse_list("CycIP_inf,CycP").unwrap();
    let opts = SuiteOptions {
        tau_max: Duration::from_millis(200),
        ..SuiteOptions::default()
    };
    let results = run_suite(&problems, &algs, &opts).unwrap();
    assert_eq!(results.len(), 2);
    for r in &results {
        assert_eq!(r.status, RunStatus::Timeout);
        assert_eq!(r.time, Duration::from_millis(200));
        assert!(r.dinf > 0.0);
    }
}
