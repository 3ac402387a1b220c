mod common;

use std::sync::OnceLock;

use tube_mitl::harness::*;
use tube_mitl::mitl::{monitor, parse};
use tube_mitl::rational::Rational;
use tube_mitl::synthesis::*;

fn default_plan() -> &'static Plan {
    static PLAN: OnceLock<Plan> = OnceLock::new();
    PLAN.get_or_init(|| synthesize(common::default_wts(), &Scenario::nexus_sml().formula, &SearchOptions::default()).unwrap().0)
}

fn default_trace() -> &'static Trace {
    static TRACE: OnceLock<Trace> = OnceLock::new();
    TRACE.get_or_init(|| execute_plan(&Scenario::nexus_sml(), default_plan(), 7).unwrap())
}

fn validation_errors(file: ScenarioFile) -> Vec<String> {
    match Scenario::from_file(file) {
        Err(ScenarioError::Validation(errs)) => errs,
        other => panic!("expected validation errors, got {:?}", other.map(|s| s.file.name)),
    }
}

#[test]
fn shipped_scenario_loads() {
    let s = load_scenario(std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/nexus_sml.toml"))).unwrap();
    assert_eq!(s.regions.len(), 9);
    assert_eq!(s.regions.iter().filter(|r| r.obstacle).count(), 4);
    assert_eq!(s.formula, parse("G[0,inf) (!obs1 & !obs2 & !obs3 & !obs4) & F[30,50] mission2 & F[80,110] mission1").unwrap());
    assert_eq!(s.hash(), Scenario::nexus_sml().hash());
}

#[test]
fn overlapping_regions_are_rejected() {
    let mut f = Scenario::nexus_sml().file;
    f.regions[1].center = f.regions[0].center.iter().map(|c| c + 0.1).collect();
    let errs = validation_errors(f);
    assert!(errs.iter().any(|e| e.contains("overlap") && e.contains("R1") && e.contains("R2")), "{errs:?}");
}

#[test]
fn radius_rule_names_the_region() {
    let mut f = Scenario::nexus_sml().file;
    let r3 = f.regions.iter_mut().find(|r| r.id == "R3").unwrap();
    r3.radius = 0.2;
    let errs = validation_errors(f);
    assert_eq!(errs.len(), 1, "{errs:?}");
    assert!(errs[0].starts_with("region R3 radius 0.2 is below"), "{errs:?}");
}

#[test]
fn every_violation_is_reported() {
    let mut f = Scenario::nexus_sml().file;
    f.initial_region = "R9".into();
    f.formula = "F[0,1] nowhere".into();
    f.robot_radius = -0.1;
    let errs = validation_errors(f);
    assert!(errs.iter().any(|e| e.contains("robot radius")));
    assert!(errs.iter().any(|e| e.contains("initial region R9")));
    assert!(errs.iter().any(|e| e.contains("nowhere")));
}

#[test]
fn mismatched_plan_is_refused() {
    let mut plan = default_plan().clone();
    plan.abstraction_hash = "0".repeat(64);
    assert!(matches!(execute_plan(&Scenario::nexus_sml(), &plan, 1), Err(HarnessError::HashMismatch { .. })));
    let mut f = Scenario::nexus_sml().file;
    f.disturbance.bound = 0.04;
    let other = Scenario::from_file(f).unwrap();
    assert!(matches!(execute_plan(&other, default_plan(), 1), Err(HarnessError::HashMismatch { .. })));
}

#[test]
fn default_run_passes() {
    let s = Scenario::nexus_sml();
    let trace = default_trace();
    let report = verify_trace(&s, trace, &s.formula);
    assert!(report.pass(), "{report}");
    assert!(trace.counters.all_zero());
    let stamp_of = |label: &str, lo: i64| {
        report.word.iter().find(|(t, l)| l.iter().any(|x| x == label) && *t >= Rational::from_integer(lo)).map(|(t, _)| *t).unwrap()
    };
    let m2 = stamp_of("mission2", 0);
    assert!(m2 >= Rational::from_integer(30) && m2 <= Rational::from_integer(50));
    let m1 = stamp_of("mission1", 80);
    assert!(m1 <= Rational::from_integer(110));
    assert!(trace.max_jitter() <= Rational::new(1, 5));
}

#[test]
fn inputs_stay_within_the_box() {
    let worst = default_trace().samples.iter().flat_map(|s| s.u.iter().map(|u| u.abs())).fold(0.0, f64::max);
    assert!(worst <= 0.2 + 1e-12, "{worst}");
}

#[test]
fn trace_round_trips_through_text() {
    let trace = default_trace();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.txt");
    export_trace(trace, &path).unwrap();
    let back = import_trace(&path).unwrap();
    assert_eq!(&back, trace);
    let text = std::fs::read_to_string(&path).unwrap();
    let row = text.lines().find(|l| !l.starts_with('#')).unwrap();
    // t, x, nominal, u, d, transition
    assert_eq!(row.split_whitespace().count(), 1 + 4 * 3 + 1);
    assert!(text.contains(&format!("# scenario_hash {}", Scenario::nexus_sml().hash())));
}

#[test]
fn plot_series_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let files = export_plot_data(default_trace(), dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for n in ["x.dat", "y.dat", "angle.dat", "u1.dat", "u2.dat", "u3.dat"] {
        assert!(names.iter().any(|m| m == n), "{names:?}");
    }
    let rows = std::fs::read_to_string(dir.path().join("u1.dat")).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, default_trace().samples.len());
}

#[test]
fn same_seed_gives_identical_bytes() {
    let s = Scenario::nexus_sml();
    let again = execute_plan(&s, default_plan(), 7).unwrap();
    assert_eq!(again.to_text(), default_trace().to_text());
    let other = execute_plan(&s, default_plan(), 8).unwrap();
    assert_ne!(other.to_text(), default_trace().to_text());
}

#[test]
fn obstacle_sample_fails_with_first_offender() {
    let s = Scenario::nexus_sml();
    let mut trace = default_trace().clone();
    let obs = s.regions.iter().find(|r| r.obstacle).unwrap();
    let k = trace.samples.len() / 2;
    let t = trace.samples[k].t;
    for i in [k, k + 1] {
        trace.samples[i].x[0] = obs.center[0];
        trace.samples[i].x[1] = obs.center[1];
        trace.samples[i].nominal = trace.samples[i].x.clone();
    }
    let report = verify_trace(&s, &trace, &s.formula);
    assert!(!report.pass());
    assert_eq!(report.scan.counters.obstacle, 2);
    let (t0, x0) = report.scan.first_obstacle.clone().unwrap();
    assert_eq!(t0, t);
    assert_eq!(&x0[..2], &obs.center[..]);
    assert!(report.to_string().contains("obstacles    FAIL (2 samples)"));
}

#[test]
fn early_mission_visit_fails_the_monitor() {
    let s = Scenario::nexus_sml();
    let mut trace = default_trace().clone();
    let e = trace.events.iter_mut().find(|e| e.labels.contains("mission2")).unwrap();
    e.stamp = Rational::new(299, 10);
    let report = verify_trace(&s, &trace, &s.formula);
    assert!(!report.monitor);
    assert!(!report.pass());
    assert!(report.containment_ok());
}

#[test]
fn calm_execution_hits_plan_stamps() {
    let s = common::calm_scenario();
    assert_eq!(s.tube.tube_radius, 0.0);
    let (plan, _) = synthesize(common::calm_wts(), &s.formula, &SearchOptions::default()).unwrap();
    let trace = execute_plan(&s, &plan, 3).unwrap();
    assert!(trace.max_deviation() <= 1e-6);
    for e in trace.events.iter().filter(|e| e.kind != EventKind::Depart) {
        assert_eq!(e.stamp, e.plan_stamp, "{}", e.region);
    }
    assert!(verify_trace(&s, &trace, &s.formula).pass());
}

#[test]
fn monte_carlo_seeds_keep_the_formula() {
    let s = Scenario::nexus_sml();
    let two_h = s.fhocp.step * Rational::from_integer(2);
    for seed in 0..100 {
        let trace = execute_plan(&s, default_plan(), 1000 + seed).unwrap();
        assert!(monitor(&s.formula, &trace.word()), "seed {seed}");
        assert!(trace.max_jitter() <= two_h, "seed {seed}: jitter {}", trace.max_jitter());
        let report = verify_trace(&s, &trace, &s.formula);
        assert!(report.pass(), "seed {seed}\n{report}");
    }
}
