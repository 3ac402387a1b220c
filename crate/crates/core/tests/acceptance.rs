//! Acceptance checks, one PASS/FAIL line each. Runs as a plain binary so the
//! lines show up in `cargo test` output.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::logic::*;
use tube_mitl::abstraction::abstract_scenario;
use tube_mitl::dynamics::{DisturbanceGenerator, DisturbancePolicy, DisturbanceSpec, SingleIntegrator};
use tube_mitl::geometry::*;
use tube_mitl::harness::*;
use tube_mitl::mitl::{build_tba, monitor, parse};
use tube_mitl::rational::{to_f64, Rational};
use tube_mitl::synthesis::*;
use tube_mitl::tube::*;

const DELTA: f64 = 0.05;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    Verdict { ok, detail }
}

/// Free point of the lab workspace keeping `clear` away from every boundary.
fn free_point(rng: &mut ChaCha8Rng, x_set: &ConstraintSet, clear: f64) -> [f64; 2] {
    loop {
        let p = [rng.gen_range(-2.42 + clear..2.42 - clear), rng.gen_range(-2.42 + clear..2.42 - clear)];
        if x_set.exclusions.iter().all(|b| distance(&p, &b.center) > b.radius + clear) {
            return p;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn lab_request<'a>(
    model: &'a SingleIntegrator,
    start: &'a [f64],
    target: &'a [f64],
    x_set: &'a ConstraintSet,
    u_set: &'a InputSet,
    tube: &'a TubeParams,
    fh: &'a FhocpParams,
    t_max: Rational,
    hold: Rational,
) -> NavigationRequest<'a> {
    NavigationRequest { model, x_start: start, start_time: 0.0, target, state_set: x_set, input_set: u_set, tube, fhocp: fh, t_max, hold }
}

const POLICIES: [DisturbancePolicy; 3] =
    [DisturbancePolicy::WorstCaseRadial, DisturbancePolicy::UniformInBall, DisturbancePolicy::PiecewiseConstant { hold: 0.5 }];

/// Short seeded runs around random targets: worst deviation plus obstacle,
/// workspace and input counts.
fn short_runs() -> (Verdict, Verdict) {
    let start_clock = Instant::now();
    let model = SingleIntegrator { dim: 3 };
    let x_set = common::lab_workspace();
    let u_set = common::input_box();
    let tube = make_tube_params(0.0, 1.0, 1.0, DELTA).unwrap();
    let fh = common::fhocp();
    let dt = fh.h() / fh.closed_loop_substeps as f64;
    let allowance = DELTA * (1.0 + 1e-3) + 10.0 * dt * DELTA;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut samples, mut arrived) = (0.0f64, 0usize, 0usize);
    let (mut in_obstacle, mut outside, mut saturated) = (0usize, 0usize, 0usize);
    for run in 0..500u64 {
        let target = free_point(&mut rng, &x_set, 0.3);
        let start = loop {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let d = rng.gen_range(0.2..0.5);
            let p = [target[0] + d * a.cos(), target[1] + d * a.sin()];
            if p.iter().all(|c| c.abs() < 2.42 - 0.1) && x_set.exclusions.iter().all(|b| distance(&p, &b.center) > b.radius + 0.1) {
                break p;
            }
        };
        let (target, start) = ([target[0], target[1], 0.0], [start[0], start[1], rng.gen_range(-0.5..0.5)]);
        let spec = DisturbanceSpec { bound: DELTA, policy: POLICIES[run as usize % 3] };
        let req = lab_request(&model, &start, &target, &x_set, &u_set, &tube, &fh, Rational::from_integer(10), Rational::new(1, 2));
        let out = navigate(&req, &mut DisturbanceGenerator::new(spec, 3, run)).unwrap();
        arrived += (out.status == NavStatus::Arrived) as usize;
        worst = worst.max(out.max_deviation);
        saturated += out.saturations;
        for (x, u) in out.trace.states.iter().zip(&out.trace.inputs) {
            samples += 1;
            let p = [x[0], x[1]];
            in_obstacle += x_set.exclusions.iter().filter(|b| distance(&p, &b.center) < b.radius).count();
            outside += !AxisBox::symmetric(2, 2.42).contains(&p, 0.0) as usize;
            saturated += !u_set.contains(u, MEMBERSHIP_TOL) as usize;
        }
    }
    let secs = start_clock.elapsed().as_secs_f64();
    (
        verdict(
            worst <= allowance && secs <= 60.0 && arrived == 500,
            format!("max ‖e−ê‖ = {worst:.5} ≤ {allowance:.5}; 500 runs, {arrived} arrived, {secs:.1} s"),
        ),
        verdict(
            in_obstacle == 0 && outside == 0 && saturated == 0,
            format!("{samples} samples: {in_obstacle} in obstacles, {outside} outside W, {saturated} saturations"),
        ),
    )
}

fn hold_bound() -> Verdict {
    let model = SingleIntegrator { dim: 3 };
    let x_set = common::lab_workspace();
    let u_set = common::input_box();
    let tube = make_tube_params(0.0, 1.0, 1.0, DELTA).unwrap();
    let fh = common::fhocp();
    let bound = fh.arrival_radius() + tube.tube_radius + 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut arrived, mut worst, mut ok) = (0, 0.0f64, true);
    for k in 0..20u64 {
        let s = free_point(&mut rng, &x_set, 0.3);
        let t = free_point(&mut rng, &x_set, 0.3);
        let (start, target) = ([s[0], s[1], 0.0], [t[0], t[1], 0.0]);
        let spec = DisturbanceSpec { bound: DELTA, policy: POLICIES[k as usize % 2] };
        let req = lab_request(&model, &start, &target, &x_set, &u_set, &tube, &fh, Rational::from_integer(60), Rational::from_integer(3));
        let out = navigate(&req, &mut DisturbanceGenerator::new(spec, 3, k)).unwrap();
        if out.status != NavStatus::Arrived {
            continue;
        }
        arrived += 1;
        for x in &out.trace.states[out.arrival_index.unwrap()..] {
            worst = worst.max(distance(x, &target));
        }
        let tt = out.arrival_time.unwrap();
        ok &= (tt / fh.step).is_integer() && tt == Rational::from_integer(out.arrival_steps.unwrap() as i64) * fh.step;
    }
    verdict(ok && worst <= bound && arrived > 0, format!("{arrived}/20 arrived; max hold distance {worst:.4} ≤ {bound:.4}; 𝔱 multiples of h: {ok}"))
}

struct FullRun {
    verdict: Verdict,
    scenario: Scenario,
    plan: Option<Plan>,
    trace: Option<Trace>,
}

fn full_run() -> FullRun {
    let t0 = Instant::now();
    let s = Scenario::nexus_sml();
    let fail = |s: Scenario, msg: String| FullRun { verdict: verdict(false, msg), scenario: s, plan: None, trace: None };
    let w = match abstract_scenario(&s) {
        Ok(w) => w,
        Err(e) => return fail(s, format!("abstraction: {e}")),
    };
    let plan = match synthesize(&w, &s.formula, &SearchOptions::default()) {
        Ok((p, _)) => p,
        Err(e) => return fail(s, format!("synthesis: {e}")),
    };
    let trace = match execute_plan(&s, &plan, s.file.seed) {
        Ok(t) => t,
        Err(e) => return fail(s, format!("execution: {e}")),
    };
    let report = verify_trace(&s, &trace, &s.formula);
    let secs = t0.elapsed().as_secs_f64();
    let stamps = |label: &str| -> Vec<Rational> {
        report.word.iter().filter(|(_, l)| l.iter().any(|x| x == label)).map(|(t, _)| *t).collect()
    };
    let within = |v: &[Rational], lo: i64, hi: i64| v.iter().any(|t| *t >= Rational::from_integer(lo) && *t <= Rational::from_integer(hi));
    let (m2, m1) = (stamps("mission2"), stamps("mission1"));
    let show = |v: &[Rational]| v.iter().map(|t| format!("{:.1}", to_f64(t))).collect::<Vec<_>>().join(",");
    let ok = report.pass() && within(&m2, 30, 50) && within(&m1, 80, 110) && secs <= 300.0;
    let detail = format!("report {}; mission2 at [{}], mission1 at [{}]; {secs:.1} s", if report.pass() { "PASS" } else { "FAIL" }, show(&m2), show(&m1));
    FullRun { verdict: verdict(ok, detail), scenario: s, plan: Some(plan), trace: Some(trace) }
}

fn logic_cross_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let opts = SearchOptions::default();
    let (mut tba_pairs, mut tba_agree) = (0, 0);
    let corpus = flat_corpus(30, 3);
    for f in &corpus {
        let tba = build_tba(f).unwrap();
        let bound = f.max_constant() + Rational::from_integer(2);
        for _ in 0..1000 {
            let w = random_word_within(&mut rng, 6, bound);
            tba_pairs += 1;
            tba_agree += (tba_accepts(&tba, &w, &opts).unwrap() == monitor(f, &w)) as usize;
        }
    }
    let words = all_words(4, 6);
    let exhaustive = exhaustive_corpus();
    let (mut bf_pairs, mut bf_agree) = (0, 0);
    for f in &exhaustive {
        for w in &words {
            bf_pairs += 1;
            bf_agree += (brute_force(f, w) == monitor(f, w)) as usize;
        }
    }
    verdict(
        tba_agree == tba_pairs && bf_agree == bf_pairs,
        format!(
            "TBA ⇔ monitor {tba_agree}/{tba_pairs} ({} formulas); brute force {bf_agree}/{bf_pairs} ({} formulas × {} words)",
            corpus.len(),
            exhaustive.len(),
            words.len()
        ),
    )
}

fn in_ball(rng: &mut ChaCha8Rng, b: &Ball) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..b.dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if norm(&v) <= 1.0 {
            return v.iter().zip(&b.center).map(|(x, c)| c + b.radius * x).collect();
        }
    }
}

fn geometry_checks() -> Verdict {
    let a = Ball::new(vec![0.5, -0.25], 0.375).unwrap();
    let b = Ball::new(vec![1.0, 0.75], 0.125).unwrap();
    let bx = AxisBox::new(vec![-2.5, -1.0], vec![2.5, 3.0]).unwrap();
    let exact = ball_minkowski_ball(&a, &b) == Ball::new(vec![1.5, 0.5], 0.5).unwrap()
        && scale_ball(-2.0, &a) == Ball::new(vec![-1.0, 0.5], 0.75).unwrap()
        && erode_box_by_ball(&bx, 0.25).unwrap() == AxisBox::new(vec![-2.25, -0.75], vec![2.25, 2.75]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sum = ball_minkowski_ball(&a, &b);
    let scaled = scale_ball(-2.0, &a);
    let eroded = erode_box_by_ball(&bx, 0.25).unwrap();
    let mut bad = [0usize; 3];
    for _ in 0..10_000 {
        let p: Vec<f64> = in_ball(&mut rng, &a).iter().zip(in_ball(&mut rng, &b)).map(|(x, y)| x + y).collect();
        bad[0] += !sum.contains(&p, MEMBERSHIP_TOL) as usize;
        let q: Vec<f64> = in_ball(&mut rng, &a).iter().map(|x| -2.0 * x).collect();
        bad[1] += !scaled.contains(&q, MEMBERSHIP_TOL) as usize;
        let c: Vec<f64> = (0..2).map(|k| rng.gen_range(eroded.lower[k]..=eroded.upper[k])).collect();
        let d: Vec<f64> = in_ball(&mut rng, &Ball::origin(2, 0.25)).iter().zip(&c).map(|(x, y)| x + y).collect();
        bad[2] += !bx.contains(&d, MEMBERSHIP_TOL) as usize;
    }
    verdict(exact && bad == [0; 3], format!("identities exact: {exact}; counterexamples ⊕ {} · {} ⊖ {} (10⁴ samples each)", bad[0], bad[1], bad[2]))
}

fn calm_run() -> Verdict {
    let s = common::calm_scenario();
    let radius = s.tube.tube_radius;
    let plan = match synthesize(common::calm_wts(), &s.formula, &SearchOptions::default()) {
        Ok((p, _)) => p,
        Err(e) => return verdict(false, format!("synthesis: {e}")),
    };
    let trace = match execute_plan(&s, &plan, 11) {
        Ok(t) => t,
        Err(e) => return verdict(false, format!("execution: {e}")),
    };
    let dev = trace.max_deviation();
    let events: Vec<_> = trace.events.iter().filter(|e| e.kind != EventKind::Depart).collect();
    let equal = events.iter().filter(|e| e.stamp == e.plan_stamp).count();
    verdict(
        radius == 0.0 && dev <= 1e-6 && equal == events.len(),
        format!("tube radius {radius}; max ‖e−ê‖ = {dev:.2e}; {equal}/{} stamps equal the plan", events.len()),
    )
}

fn round_trips(run: &FullRun) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let parsed = (0..200)
        .filter(|_| {
            let f = random_formula(&mut rng, 4, &["a", "b", "mission1", "obs_2"]);
            parse(&f.to_string()).ok() == Some(f)
        })
        .count();
    let (Some(plan), Some(trace)) = (&run.plan, &run.trace) else {
        return verdict(false, format!("parser {parsed}/200; no trace from the full run"));
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.txt");
    export_trace(trace, &path).unwrap();
    let identical = import_trace(&path).map(|t| &t == trace).unwrap_or(false);
    let again = execute_plan(&run.scenario, plan, run.scenario.file.seed).map(|t| t.to_text() == trace.to_text()).unwrap_or(false);
    verdict(
        parsed == 200 && identical && again,
        format!("parser {parsed}/200; export/import identical: {identical}; same seed byte-identical: {again}"),
    )
}

fn synthesis_checks(run: &FullRun) -> Verdict {
    let default_ok = match (&run.plan, &run.trace) {
        (Some(p), Some(_)) => monitor(&run.scenario.formula, &p.run.word(common::default_wts())),
        _ => false,
    };
    let narrow = SearchOptions::default();
    let wide = SearchOptions { saturation_extra: Rational::from_integer(10), ..SearchOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let graphs: Vec<_> = (0..8).map(|_| random_wts(&mut rng)).collect();
    let (mut stable, mut sound, mut pairs, mut plans) = (0, 0, 0, 0);
    for f in flat_corpus(30, 41) {
        for w in &graphs {
            let a = synthesize(w, &f, &narrow);
            let b = synthesize(w, &f, &wide);
            pairs += 1;
            stable += (a.is_ok() == b.is_ok()) as usize;
            for (p, _) in [a, b].into_iter().flatten() {
                plans += 1;
                sound += monitor(&f, &p.run.word(w)) as usize;
            }
        }
    }
    let m = parse("F[0,1] m").unwrap();
    let mut heavy = random_wts(&mut rng);
    for t in &mut heavy.transitions {
        t.weight += Rational::from_integer(1);
    }
    for s in &mut heavy.states {
        s.labels.insert("m".into());
    }
    heavy.states[0].labels.clear();
    let unrealizable = matches!(synthesize(&heavy, &m, &narrow), Err(SynthesisError::Unrealizable { .. }))
        && matches!(
            synthesize(common::default_wts(), &parse("F[0,1] mission2").unwrap(), &narrow),
            Err(SynthesisError::Unrealizable { .. })
        );
    verdict(
        default_ok && stable == pairs && sound == plans && unrealizable,
        format!("default plan monitored: {default_ok}; {sound}/{plans} plans sound; verdicts stable {stable}/{pairs}; F[0,1] fixtures unrealizable: {unrealizable}"),
    )
}

fn main() -> ExitCode {
    let mut lines: Vec<(usize, &str, Verdict)> = Vec::new();
    let (rpi, transfer) = short_runs();
    lines.push((1, "RPI tube bound", rpi));
    lines.push((2, "hold bound after arrival", hold_bound()));
    lines.push((3, "constraint transfer", transfer));
    let run = full_run();
    let v4 = verdict(run.verdict.ok, run.verdict.detail.clone());
    lines.push((4, "default scenario run", v4));
    lines.push((5, "monitor/TBA cross-validation", logic_cross_check()));
    lines.push((6, "geometry exactness", geometry_checks()));
    lines.push((7, "disturbance-free degeneracy", calm_run()));
    lines.push((8, "determinism and round-trips", round_trips(&run)));
    lines.push((9, "synthesis soundness", synthesis_checks(&run)));
    lines.sort_by_key(|l| l.0);
    let mut all = true;
    for (n, name, v) in &lines {
        println!("criterion {n} {name:<30} {}  {}", if v.ok { "PASS" } else { "FAIL" }, v.detail);
        all &= v.ok;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
