//! Closed-loop execution of a plan under the scenario's disturbance.

use thiserror::Error;

use crate::dynamics::DisturbanceGenerator;
use crate::rational::{to_f64, Rational};
use crate::synthesis::Plan;
use crate::tube::{navigate, ControlError, NavStatus, NavTrace, NavigationRequest};

use super::scenario::Scenario;
use super::trace::{Counters, Event, EventKind, Sample, Trace};
use super::verify::count_violations;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("plan was synthesized for abstraction {plan}, scenario has {scenario}")]
    HashMismatch { plan: String, scenario: String },
    #[error("plan names unknown region {0}")]
    UnknownRegion(String),
    #[error("execution failed on leg {leg}: {message}")]
    ExecutionFailure { leg: usize, message: String, trace: Box<Trace> },
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Seed of the disturbance generator driving leg `leg`.
pub fn leg_seed(seed: u64, leg: usize) -> u64 {
    let mut z = seed.wrapping_add((leg as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn ceil_to(v: Rational, step: Rational) -> Rational {
    (v / step).ceil() * step
}

struct Runner<'a> {
    scenario: &'a Scenario,
    trace: Trace,
    x: Vec<f64>,
    now: Rational,
}

impl Runner<'_> {
    fn append(&mut self, nav: &NavTrace, transition: Option<usize>) {
        // the first navigation sample repeats the current state
        for k in 1..nav.len() {
            self.trace.samples.push(Sample {
                t: nav.times[k],
                x: nav.states[k].clone(),
                nominal: nav.nominal[k].clone(),
                u: nav.inputs[k].clone(),
                d: nav.disturbances[k].clone(),
                transition,
            });
        }
        if let Some(last) = nav.states.last() {
            self.x = last.clone();
        }
    }

    fn fail(&self, leg: usize, message: String) -> HarnessError {
        let mut trace = self.trace.clone();
        let saturation = trace.counters.saturation;
        trace.counters = Counters { saturation, ..count_violations(self.scenario, &trace.samples).counters };
        HarnessError::ExecutionFailure { leg, message, trace: Box::new(trace) }
    }

    /// Navigates from the current state into `dst` (optionally holding there
    /// for `hold`); returns the arrival time relative to the call.
    fn go(
        &mut self,
        src: usize,
        dst: usize,
        hold: Rational,
        gen: &mut DisturbanceGenerator,
        transition: Option<usize>,
        leg: usize,
    ) -> Result<Rational, HarnessError> {
        let s = self.scenario;
        let model = s.model();
        let goal = s.region_state(dst);
        let x_set = s.state_set(src, dst);
        let start = self.x.clone();
        let req = NavigationRequest {
            model: model.as_ref(),
            x_start: &start,
            start_time: to_f64(&self.now),
            target: &goal,
            state_set: &x_set,
            input_set: &s.file.input_set,
            tube: &s.tube,
            fhocp: &s.fhocp,
            t_max: s.t_max(),
            hold,
        };
        let out = navigate(&req, gen)?;
        self.append(&out.trace, transition);
        self.trace.counters.saturation += out.saturations;
        if out.status != NavStatus::Arrived {
            let msg = format!(
                "navigation {} -> {} ended {:?}{}",
                s.regions[src].id,
                s.regions[dst].id,
                out.status,
                out.message.map(|m| format!(": {m}")).unwrap_or_default()
            );
            return Err(self.fail(leg, msg));
        }
        let arrival = out.arrival_time.expect("arrived");
        self.now += arrival + ceil_to(hold, s.fhocp.step);
        Ok(arrival)
    }

    fn event(&mut self, kind: EventKind, region: usize, stamp: Rational, plan_stamp: Rational) {
        let t = to_f64(&stamp) - 1e-9;
        let sample = self.trace.samples.iter().position(|s| s.t >= t).unwrap_or(self.trace.samples.len() - 1);
        let r = &self.scenario.regions[region];
        self.trace.events.push(Event { kind, region: r.id.clone(), labels: r.labels.clone(), stamp, plan_stamp, sample });
    }

    fn last_word_stamp(&self) -> Rational {
        self.trace.events.iter().rev().find(|e| e.kind != EventKind::Depart).map(|e| e.stamp).unwrap_or_default()
    }

    /// Regulates in `region` until `until` (rounded up to a sampling instant).
    fn hold_until(&mut self, region: usize, until: Rational, gen: &mut DisturbanceGenerator, leg: usize) -> Result<(), HarnessError> {
        let h = self.scenario.fhocp.step;
        let remaining = ceil_to(until, h) - self.now;
        if remaining > Rational::from_integer(0) {
            self.go(region, region, remaining, gen, None, leg)?;
        }
        Ok(())
    }
}

/// Runs every plan transition with the tube controller, holding in each
/// region until its planned stamp, then parks through the plan's park
/// stamps. Arrival events are stamped at the later of the planned stamp and
/// the actual arrival.
pub fn execute_plan(scenario: &Scenario, plan: &Plan, seed: u64) -> Result<Trace, HarnessError> {
    if plan.abstraction_hash != scenario.abstraction_hash() {
        return Err(HarnessError::HashMismatch { plan: plan.abstraction_hash.clone(), scenario: scenario.abstraction_hash() });
    }
    let regions: Vec<usize> = plan
        .region_ids
        .iter()
        .map(|id| scenario.region_index(id).ok_or_else(|| HarnessError::UnknownRegion(id.clone())))
        .collect::<Result<_, _>>()?;
    let n = scenario.dim();
    let h = scenario.fhocp.step;
    let spec = scenario.file.disturbance;
    let x0 = scenario.region_state(regions[0]);
    let mut run = Runner {
        scenario,
        trace: Trace { scenario_hash: scenario.hash(), dim: n, ..Trace::default() },
        x: x0.clone(),
        now: Rational::from_integer(0),
    };
    run.trace.samples.push(Sample { t: 0.0, x: x0.clone(), nominal: x0, u: vec![0.0; n], d: vec![0.0; n], transition: None });
    let zero = Rational::from_integer(0);
    run.event(EventKind::Arrive, regions[0], zero, zero);

    let stamps = &plan.run.stamps;
    let legs = regions.len() - 1;
    for l in 0..legs {
        let (src, dst) = (regions[l], regions[l + 1]);
        let now = run.now;
        run.event(EventKind::Depart, src, now, stamps[l]);
        let mut gen = DisturbanceGenerator::new(spec, n, leg_seed(seed, l));
        run.go(src, dst, zero, &mut gen, Some(l), l)?;
        if run.now < stamps[l + 1] {
            run.hold_until(dst, stamps[l + 1], &mut gen, l)?;
        }
        let stamp = if run.now > stamps[l + 1] { run.now } else { stamps[l + 1] };
        run.event(EventKind::Arrive, dst, stamp, stamps[l + 1]);
    }
    let last = *regions.last().expect("nonempty plan");
    for (i, p) in plan.run.park_stamps.iter().enumerate() {
        let mut gen = DisturbanceGenerator::new(spec, n, leg_seed(seed, legs + i));
        let mut stamp = *p;
        let prev = run.last_word_stamp();
        if stamp <= prev {
            stamp = ceil_to(prev, h) + h;
        }
        run.hold_until(last, stamp, &mut gen, legs + i)?;
        if run.now > stamp && run.now - stamp >= h {
            stamp = run.now;
        }
        run.event(EventKind::Park, last, stamp, *p);
    }
    let violations = count_violations(scenario, &run.trace.samples);
    run.trace.counters = Counters { saturation: run.trace.counters.saturation, ..violations.counters };
    Ok(run.trace)
}
