#![allow(dead_code)]

pub mod logic;

use std::path::PathBuf;
use std::sync::OnceLock;

use tube_mitl::abstraction::{load_or_build, Wts};
use tube_mitl::harness::Scenario;

pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("abstractions")
}

/// Default scenario abstraction, built once and cached on disk across test binaries.
pub fn default_wts() -> &'static Wts {
    static WTS: OnceLock<Wts> = OnceLock::new();
    WTS.get_or_init(|| load_or_build(&Scenario::nexus_sml(), &cache_dir()).expect("default abstraction").0)
}

use tube_mitl::geometry::{AxisBox, Ball, ConstraintSet, InputSet};
use tube_mitl::rational::Rational;
use tube_mitl::tube::FhocpParams;

/// `N = 1.2 s`, `h = 0.1 s`, `Q = P = R = 0.5·I₃`, `ε = 0.1`.
pub fn fhocp() -> FhocpParams {
    FhocpParams::new(Rational::new(6, 5), Rational::new(1, 10), 3, 0.5, 0.1)
}

pub fn input_box() -> InputSet {
    InputSet::Box(AxisBox::symmetric(3, 0.2))
}

/// The default workspace shrunk by the robot radius, with the four
/// obstacle regions inflated by it as exclusions.
pub fn lab_workspace() -> ConstraintSet {
    let s = Scenario::nexus_sml();
    ConstraintSet::new(
        AxisBox::symmetric(2, 2.42),
        s.obstacle_balls().into_iter().map(|(_, b)| b).collect::<Vec<Ball>>(),
    )
}

/// The default scenario with the disturbance switched off.
pub fn calm_scenario() -> Scenario {
    let mut f = Scenario::nexus_sml().file;
    f.disturbance = tube_mitl::dynamics::DisturbanceSpec::zero();
    Scenario::from_file(f).expect("calm scenario")
}

pub fn calm_wts() -> &'static Wts {
    static WTS: OnceLock<Wts> = OnceLock::new();
    WTS.get_or_init(|| load_or_build(&calm_scenario(), &cache_dir()).expect("calm abstraction").0)
}
