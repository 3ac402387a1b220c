//! Timed Büchi automata for the flat fragment: Boolean combinations of
//! `□_I ψ`, `◇_I ψ`, `ψ₁ U_I ψ₂` and propositional `ψ`, with propositional
//! operands. Each timed block owns one clock that is never reset, so its value
//! is the time since the start of the word. Conjunction is a synchronous
//! product, disjunction a disjoint union. Every block's accepting locations
//! are closed under its edges, so a product location is accepting when all
//! components are.
//!
//! The automaton reads the first letter at time 0 from one of its initial
//! locations with all clocks at zero.

use std::cmp::Ordering;
use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use super::ast::{Formula, Interval, Letter};
use crate::rational::{format_rational, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("formula outside the supported fragment: {subformula}")]
pub struct UnsupportedFragment {
    pub subformula: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClockConstraint {
    pub clock: usize,
    pub op: CmpOp,
    pub constant: Rational,
}

impl ClockConstraint {
    pub fn holds(&self, clocks: &[Rational]) -> bool {
        let ord = clocks[self.clock].cmp(&self.constant);
        match self.op {
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ge => ord != Ordering::Less,
            CmpOp::Gt => ord == Ordering::Greater,
        }
    }
}

impl fmt::Display for ClockConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        };
        write!(f, "c{} {op} {}", self.clock, format_rational(&self.constant))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    /// Propositional constraint on the letter read.
    pub label: Formula,
    /// Conjunction of clock constraints.
    pub guard: Vec<ClockConstraint>,
    pub resets: Vec<usize>,
}

impl Edge {
    pub fn enabled(&self, letter: &Letter, clocks: &[Rational]) -> bool {
        self.guard.iter().all(|g| g.holds(clocks)) && self.label.eval_letter(letter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub name: String,
    pub accepting: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedAutomaton {
    pub locations: Vec<Location>,
    pub initial: Vec<usize>,
    pub clocks: usize,
    pub edges: Vec<Edge>,
    /// Largest guard constant.
    pub max_constant: Rational,
}

impl TimedAutomaton {
    /// Edges leaving `loc`, in construction order.
    pub fn edges_from(&self, loc: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.source == loc)
    }

    pub fn guard_constants(&self) -> Vec<Rational> {
        self.edges.iter().flat_map(|e| e.guard.iter().map(|g| g.constant)).collect()
    }

    fn single(name: &str, accepting: bool, self_loop: Option<Formula>) -> Self {
        let edges = self_loop
            .map(|label| vec![Edge { source: 0, target: 0, label, guard: vec![], resets: vec![] }])
            .unwrap_or_default();
        TimedAutomaton {
            locations: vec![Location { name: name.into(), accepting }],
            initial: vec![0],
            clocks: 0,
            edges,
            max_constant: Rational::zero(),
        }
    }

    fn empty() -> Self {
        TimedAutomaton { locations: vec![], initial: vec![], clocks: 0, edges: vec![], max_constant: Rational::zero() }
    }
}

fn interval_guard(clock: usize, i: &Interval) -> Vec<ClockConstraint> {
    let mut g = vec![ClockConstraint { clock, op: if i.lower_closed { CmpOp::Ge } else { CmpOp::Gt }, constant: i.lower }];
    if let Some(u) = i.upper {
        g.push(ClockConstraint { clock, op: if i.upper_closed { CmpOp::Le } else { CmpOp::Lt }, constant: u });
    }
    g
}

fn max_of(i: &Interval) -> Rational {
    i.upper.unwrap_or(i.lower)
}

/// `◇_I ψ` (and `ψ₁ U_I ψ₂` when `stay` is `ψ₁`).
fn reach_block(i: &Interval, stay: Formula, goal: Formula, name: &str) -> TimedAutomaton {
    TimedAutomaton {
        locations: vec![
            Location { name: format!("{name}:wait"), accepting: false },
            Location { name: format!("{name}:done"), accepting: true },
        ],
        initial: vec![0],
        clocks: 1,
        edges: vec![
            Edge { source: 0, target: 1, label: goal, guard: interval_guard(0, i), resets: vec![] },
            Edge { source: 0, target: 0, label: stay, guard: vec![], resets: vec![] },
            Edge { source: 1, target: 1, label: Formula::True, guard: vec![], resets: vec![] },
        ],
        max_constant: max_of(i),
    }
}

/// `□_I ψ`.
fn safety_block(i: &Interval, psi: Formula, name: &str) -> TimedAutomaton {
    let not_psi = Formula::not(psi.clone());
    let mut edges = vec![Edge { source: 0, target: 0, label: psi, guard: vec![], resets: vec![] }];
    let below = ClockConstraint { clock: 0, op: if i.lower_closed { CmpOp::Lt } else { CmpOp::Le }, constant: i.lower };
    if !(i.lower.is_zero() && i.lower_closed) {
        edges.push(Edge { source: 0, target: 0, label: not_psi.clone(), guard: vec![below], resets: vec![] });
    }
    if let Some(u) = i.upper {
        let above = ClockConstraint { clock: 0, op: if i.upper_closed { CmpOp::Gt } else { CmpOp::Ge }, constant: u };
        edges.push(Edge { source: 0, target: 0, label: not_psi, guard: vec![above], resets: vec![] });
    }
    TimedAutomaton {
        locations: vec![Location { name: format!("{name}:ok"), accepting: true }],
        initial: vec![0],
        clocks: 1,
        edges,
        max_constant: max_of(i),
    }
}

fn shift_clocks(e: &Edge, by: usize) -> (Vec<ClockConstraint>, Vec<usize>) {
    let guard = e.guard.iter().map(|g| ClockConstraint { clock: g.clock + by, ..g.clone() }).collect();
    let resets = e.resets.iter().map(|c| c + by).collect();
    (guard, resets)
}

fn simplify_and(a: &Formula, b: &Formula) -> Formula {
    match (a, b) {
        (Formula::True, x) | (x, Formula::True) => x.clone(),
        _ => Formula::and(a.clone(), b.clone()),
    }
}

/// Synchronous product: both components read every letter.
fn product(a: &TimedAutomaton, b: &TimedAutomaton) -> TimedAutomaton {
    let nb = b.locations.len();
    let idx = |i: usize, j: usize| i * nb + j;
    let mut locations = Vec::with_capacity(a.locations.len() * nb);
    for la in &a.locations {
        for lb in &b.locations {
            locations.push(Location {
                name: format!("({},{})", la.name, lb.name),
                accepting: la.accepting && lb.accepting,
            });
        }
    }
    let mut initial = Vec::new();
    for &i in &a.initial {
        for &j in &b.initial {
            initial.push(idx(i, j));
        }
    }
    let mut edges = Vec::new();
    for ea in &a.edges {
        for eb in &b.edges {
            let (gb, rb) = shift_clocks(eb, a.clocks);
            let mut guard = ea.guard.clone();
            guard.extend(gb);
            let mut resets = ea.resets.clone();
            resets.extend(rb);
            edges.push(Edge {
                source: idx(ea.source, eb.source),
                target: idx(ea.target, eb.target),
                label: simplify_and(&ea.label, &eb.label),
                guard,
                resets,
            });
        }
    }
    TimedAutomaton {
        locations,
        initial,
        clocks: a.clocks + b.clocks,
        edges,
        max_constant: a.max_constant.max(b.max_constant),
    }
}

/// Disjoint union with both initial sets.
fn union(a: &TimedAutomaton, b: &TimedAutomaton) -> TimedAutomaton {
    let off = a.locations.len();
    let mut locations = a.locations.clone();
    locations.extend(b.locations.iter().cloned());
    let mut initial = a.initial.clone();
    initial.extend(b.initial.iter().map(|i| i + off));
    let mut edges = a.edges.clone();
    for e in &b.edges {
        let (guard, resets) = shift_clocks(e, a.clocks);
        edges.push(Edge { source: e.source + off, target: e.target + off, label: e.label.clone(), guard, resets });
    }
    TimedAutomaton {
        locations,
        initial,
        clocks: a.clocks + b.clocks,
        edges,
        max_constant: a.max_constant.max(b.max_constant),
    }
}

fn unsupported(f: &Formula) -> UnsupportedFragment {
    UnsupportedFragment { subformula: f.to_string() }
}

fn require_prop(f: &Formula, whole: &Formula) -> Result<(), UnsupportedFragment> {
    if f.is_propositional() {
        Ok(())
    } else {
        Err(unsupported(whole))
    }
}

/// Compiles `f` (or `¬f` when `negated`) by pushing negations inward.
fn compile(f: &Formula, negated: bool, counter: &mut usize) -> Result<TimedAutomaton, UnsupportedFragment> {
    let mut name = || {
        *counter += 1;
        format!("b{}", *counter)
    };
    if f.is_propositional() {
        let psi = if negated { Formula::not(f.clone()) } else { f.clone() };
        return Ok(reach_block(&Interval::closed(Rational::zero(), Rational::zero()), Formula::False, psi, &name()));
    }
    match (f, negated) {
        (Formula::True, false) | (Formula::False, true) => Ok(TimedAutomaton::single("top", true, Some(Formula::True))),
        (Formula::True, true) | (Formula::False, false) => Ok(TimedAutomaton::empty()),
        (Formula::Not(g), n) => compile(g, !n, counter),
        (Formula::And(a, b), false) | (Formula::Or(a, b), true) => {
            let (ta, tb) = (compile(a, negated, counter)?, compile(b, negated, counter)?);
            Ok(product(&ta, &tb))
        }
        (Formula::Or(a, b), false) | (Formula::And(a, b), true) => {
            let (ta, tb) = (compile(a, negated, counter)?, compile(b, negated, counter)?);
            Ok(union(&ta, &tb))
        }
        (Formula::Eventually(i, g), false) => {
            require_prop(g, f)?;
            Ok(reach_block(i, Formula::True, (**g).clone(), &name()))
        }
        (Formula::Always(i, g), true) => {
            require_prop(g, f)?;
            Ok(reach_block(i, Formula::True, Formula::not((**g).clone()), &name()))
        }
        (Formula::Always(i, g), false) => {
            require_prop(g, f)?;
            Ok(safety_block(i, (**g).clone(), &name()))
        }
        (Formula::Eventually(i, g), true) => {
            require_prop(g, f)?;
            Ok(safety_block(i, Formula::not((**g).clone()), &name()))
        }
        (Formula::Until(i, a, b), false) => {
            require_prop(a, f)?;
            require_prop(b, f)?;
            Ok(reach_block(i, (**a).clone(), (**b).clone(), &name()))
        }
        (Formula::Until(..), true) | (Formula::Next(..), _) => Err(unsupported(f)),
        (Formula::Atom(_), _) => unreachable!("atoms are propositional"),
    }
}

/// Builds the timed Büchi automaton of a flat-fragment formula.
pub fn build_tba(f: &Formula) -> Result<TimedAutomaton, UnsupportedFragment> {
    let mut counter = 0;
    compile(f, false, &mut counter)
}
