use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tube_mitl::abstraction::{self, Wts};
use tube_mitl::dynamics::DisturbancePolicy;
use tube_mitl::harness::{
    execute_plan, export_plot_data, export_trace, import_trace, load_scenario, verify_trace, HarnessError, Scenario,
    ScenarioError, TraceError,
};
use tube_mitl::mitl::{self, SyntaxError};
use tube_mitl::rational::format_rational;
use tube_mitl::synthesis::{self, Plan, SearchOptions, SynthesisError};

const EXIT_FAIL: u8 = 1;
const EXIT_UNREALIZABLE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_EXECUTION: u8 = 4;

#[derive(Parser)]
#[command(name = "tubeplan", version, about = "Timed temporal-logic planning with tube-based navigation controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArg {
    /// Scenario file; the built-in nexus_sml scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario's disturbance policy (the bound is kept).
    #[arg(long, value_enum)]
    disturbance: Option<DisturbanceArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DisturbanceArg {
    Zero,
    Worst,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a formula and print its canonical form and syntax tree.
    Parse { formula: String },
    /// Build the weighted transition system of a scenario.
    Abstract {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value = "abstraction.toml")]
        out: PathBuf,
    },
    /// Search for an accepting run and write the plan.
    Synthesize {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Abstraction file from `abstract`.
        #[arg(long)]
        abstraction: PathBuf,
        /// Formula overriding the scenario's.
        #[arg(long)]
        formula: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        budget: usize,
        #[arg(long, default_value = "plan.toml")]
        out: PathBuf,
    },
    /// Execute a plan in closed loop and write the trace.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "trace.txt")]
        out: PathBuf,
    },
    /// Check a trace against the scenario and a formula.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        trace: PathBuf,
        /// Formula overriding the scenario's.
        #[arg(long)]
        formula: Option<String>,
    },
    /// Abstract, synthesize, simulate and verify in one go.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1_000_000)]
        budget: usize,
        /// Output directory; also holds the abstraction cache.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write per-signal series files from a trace.
    PlotData {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "plot")]
        out: PathBuf,
    },
}

fn load(arg: &ScenarioArg) -> Result<Scenario> {
    let mut s = match &arg.scenario {
        Some(p) => load_scenario(p).with_context(|| format!("loading {}", p.display()))?,
        None => Scenario::nexus_sml(),
    };
    if let Some(d) = arg.disturbance {
        s.file.disturbance.policy = match d {
            DisturbanceArg::Zero => DisturbancePolicy::Zero,
            DisturbanceArg::Worst => DisturbancePolicy::WorstCaseRadial,
            DisturbanceArg::Random => DisturbancePolicy::UniformInBall,
        };
    }
    Ok(s)
}

fn formula_of(s: &Scenario, text: &Option<String>) -> Result<mitl::Formula> {
    match text {
        Some(t) => Ok(mitl::parse(t)?),
        None => Ok(s.formula.clone()),
    }
}

fn print_wts(w: &Wts) {
    println!("{} states, {} transitions (step {})", w.states.len(), w.transitions.len(), format_rational(&w.step));
    for t in &w.transitions {
        println!("  {} -> {}  {} s", w.states[t.source].id, w.states[t.target].id, format_rational(&t.weight));
    }
}

fn print_plan(p: &Plan) {
    println!("plan for {}", p.formula);
    for (id, t) in p.region_ids.iter().zip(&p.run.stamps) {
        println!("  {:>10} s  {}", format_rational(t), id);
    }
    for t in &p.run.park_stamps {
        println!("  {:>10} s  {} (parked)", format_rational(t), p.region_ids.last().map(String::as_str).unwrap_or(""));
    }
}

fn synthesize(s: &Scenario, w: &Wts, formula: &mitl::Formula, budget: usize) -> Result<Plan> {
    if w.abstraction_hash != s.abstraction_hash() {
        anyhow::bail!(HarnessError::HashMismatch { plan: w.abstraction_hash.clone(), scenario: s.abstraction_hash() });
    }
    let opts = SearchOptions { budget, ..SearchOptions::default() };
    let (plan, explored) = synthesis::synthesize(w, formula, &opts)?;
    println!("explored {explored} product nodes");
    Ok(plan)
}

fn simulate(s: &Scenario, plan: &Plan, seed: u64, out: &Path) -> Result<tube_mitl::harness::Trace> {
    match execute_plan(s, plan, seed) {
        Ok(trace) => {
            export_trace(&trace, out)?;
            println!("wrote {} samples to {}", trace.samples.len(), out.display());
            Ok(trace)
        }
        Err(HarnessError::ExecutionFailure { leg, message, trace }) => {
            export_trace(&trace, out)?;
            println!("partial trace written to {}", out.display());
            Err(HarnessError::ExecutionFailure { leg, message, trace }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn verify(s: &Scenario, trace: &tube_mitl::harness::Trace, formula: &mitl::Formula) -> ExitCode {
    let report = verify_trace(s, trace, formula);
    println!("{report}");
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Parse { formula } => {
            let f = mitl::parse(&formula)?;
            println!("{f}");
            println!("{f:#?}");
            let atoms: Vec<_> = f.atoms().into_iter().collect();
            println!("atoms: {}", atoms.join(", "));
        }
        Command::Abstract { scenario, out } => {
            let s = load(&scenario)?;
            let w = abstraction::abstract_scenario(&s)?;
            w.save(&out)?;
            print_wts(&w);
            println!("wrote {}", out.display());
        }
        Command::Synthesize { scenario, abstraction, formula, budget, out } => {
            let s = load(&scenario)?;
            let w = Wts::load(&abstraction)?;
            let plan = synthesize(&s, &w, &formula_of(&s, &formula)?, budget)?;
            plan.save(&out)?;
            print_plan(&plan);
            println!("wrote {}", out.display());
        }
        Command::Simulate { scenario, plan, seed, out } => {
            let s = load(&scenario)?;
            let plan = Plan::load(&plan)?;
            let seed = seed.unwrap_or(s.file.seed);
            simulate(&s, &plan, seed, &out)?;
        }
        Command::Verify { scenario, trace, formula } => {
            let s = load(&scenario)?;
            let trace = import_trace(&trace)?;
            return Ok(verify(&s, &trace, &formula_of(&s, &formula)?));
        }
        Command::Run { scenario, seed, budget, out } => {
            let start = Instant::now();
            let s = load(&scenario)?;
            std::fs::create_dir_all(&out)?;
            let (w, cached) = abstraction::load_or_build(&s, &out)?;
            print_wts(&w);
            println!("abstraction {} ({:.1} s)", if cached { "loaded from cache" } else { "built" }, start.elapsed().as_secs_f64());
            let plan = synthesize(&s, &w, &s.formula, budget)?;
            plan.save(&out.join("plan.toml"))?;
            print_plan(&plan);
            let seed = seed.unwrap_or(s.file.seed);
            let trace = simulate(&s, &plan, seed, &out.join("trace.txt"))?;
            let code = verify(&s, &trace, &s.formula);
            println!("total {:.1} s", start.elapsed().as_secs_f64());
            return Ok(code);
        }
        Command::PlotData { trace, out } => {
            let trace = import_trace(&trace)?;
            for p in export_plot_data(&trace, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SynthesisError>() {
            return match e {
                SynthesisError::Unrealizable { .. } => EXIT_UNREALIZABLE,
                SynthesisError::Unsound(_) => EXIT_EXECUTION,
                _ => EXIT_INPUT,
            };
        }
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return match e {
                HarnessError::HashMismatch { .. } | HarnessError::UnknownRegion(_) => EXIT_INPUT,
                _ => EXIT_EXECUTION,
            };
        }
        if let Some(e) = cause.downcast_ref::<abstraction::AbstractionError>() {
            return match e {
                abstraction::AbstractionError::Control(_) => EXIT_EXECUTION,
                _ => EXIT_INPUT,
            };
        }
        if cause.is::<ScenarioError>() || cause.is::<SyntaxError>() || cause.is::<TraceError>() || cause.is::<std::io::Error>() {
            return EXIT_INPUT;
        }
    }
    EXIT_EXECUTION
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
