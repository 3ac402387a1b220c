//! Product of a WTS with a timed Büchi automaton and accepting-run search.
//!
//! Clock values are exact rationals saturated at `C_max + extra`; above the
//! largest guard constant all values satisfy the same guards. A finite run
//! is read as an infinite word by letting the robot park in its last region,
//! re-reading that region's label every `w` seconds, where `w` is half the
//! gcd of all weights and guard constants. The returned lasso is the prefix of
//! WTS transitions followed by that park cycle.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{ControllerDescriptor, Wts};
use crate::mitl::{self, build_tba, Formula, TimedAutomaton, TimedWord, UnsupportedFragment};
use crate::rational::{rational_gcd, Rational};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("no accepting run; reachable automaton locations: {}", reachable_locations.join(", "))]
    Unrealizable { reachable_locations: Vec<String> },
    #[error("search budget exceeded after {explored} nodes")]
    SearchBudgetExceeded { explored: usize },
    #[error(transparent)]
    Unsupported(#[from] UnsupportedFragment),
    #[error("run uses a transition absent from the abstraction: {from} -> {to}")]
    UnknownTransition { from: String, to: String },
    #[error("synthesized run violates the formula: {0}")]
    Unsound(String),
    #[error("plan file: {0}")]
    Io(#[from] std::io::Error),
    #[error("plan file parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductNode {
    pub state: usize,
    pub loc: usize,
    pub clocks: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    /// Hard cap on explored product and park nodes.
    pub budget: usize,
    /// Clocks saturate at `C_max + saturation_extra`.
    pub saturation_extra: Rational,
    /// Park re-read period; derived from the inputs when `None`.
    pub park_step: Option<Rational>,
    /// States the run may end in; all states when `None`.
    pub park_states: Option<Vec<usize>>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget: 1_000_000,
            saturation_extra: Rational::from_integer(1),
            park_step: None,
            park_states: None,
        }
    }
}

/// `(r(l), τ(l))` pairs plus the WTS transition indices between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedRun {
    pub regions: Vec<usize>,
    #[serde(with = "stamps_serde")]
    pub stamps: Vec<Rational>,
    pub transitions: Vec<usize>,
    /// Times after the last stamp at which the parked robot re-reads its
    /// region label and the automaton changes location.
    #[serde(with = "stamps_serde", default)]
    pub park_stamps: Vec<Rational>,
}

mod stamps_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(crate::rational::format_rational).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let strs: Vec<String> = Vec::deserialize(d)?;
        strs.iter()
            .map(|s| crate::rational::parse_rational(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl TimedRun {
    /// The timed word `(L(r(l)), τ(l))` followed by the park positions.
    pub fn word(&self, wts: &Wts) -> TimedWord {
        let last = *self.regions.last().expect("nonempty run");
        let mut letters: Vec<_> = self.regions.iter().map(|r| wts.labels(*r).clone()).collect();
        letters.extend(self.park_stamps.iter().map(|_| wts.labels(last).clone()));
        let stamps = self.stamps.iter().chain(&self.park_stamps).copied().collect();
        TimedWord::new(letters, stamps).expect("run stamps are valid")
    }

    /// Region and stamp of every position, park positions included.
    pub fn positions(&self) -> Vec<(usize, Rational)> {
        let last = *self.regions.last().expect("nonempty run");
        self.regions
            .iter()
            .copied()
            .zip(self.stamps.iter().copied())
            .chain(self.park_stamps.iter().map(|t| (last, *t)))
            .collect()
    }
}

fn saturate(v: Rational, cap: &Rational) -> Rational {
    if v > *cap {
        *cap
    } else {
        v
    }
}

fn advance(clocks: &[Rational], by: Rational, cap: &Rational) -> Vec<Rational> {
    clocks.iter().map(|c| saturate(*c + by, cap)).collect()
}

fn apply_resets(mut clocks: Vec<Rational>, resets: &[usize]) -> Vec<Rational> {
    for &c in resets {
        clocks[c] = Rational::zero();
    }
    clocks
}

/// Saturation cap for `tba` under `opts`.
pub fn saturation_cap(tba: &TimedAutomaton, opts: &SearchOptions) -> Rational {
    tba.max_constant + opts.saturation_extra
}

/// Product nodes after reading the initial region's label at time 0.
pub fn initial_nodes(wts: &Wts, tba: &TimedAutomaton, initial: usize) -> Vec<ProductNode> {
    let zero = vec![Rational::zero(); tba.clocks];
    let mut out: Vec<ProductNode> = Vec::new();
    for &l0 in &tba.initial {
        for (_, e) in tba.edges_from(l0) {
            if e.enabled(wts.labels(initial), &zero) {
                let node = ProductNode { state: initial, loc: e.target, clocks: apply_resets(zero.clone(), &e.resets) };
                if !out.contains(&node) {
                    out.push(node);
                }
            }
        }
    }
    out
}

/// Successors over WTS transitions, in ascending (target region, edge) order.
pub fn product_successors(node: &ProductNode, wts: &Wts, tba: &TimedAutomaton, cap: &Rational) -> Vec<(ProductNode, usize)> {
    let mut outgoing: Vec<(usize, &crate::abstraction::Transition)> = wts.outgoing(node.state).collect();
    outgoing.sort_by_key(|(_, t)| t.target);
    let mut out = Vec::new();
    for (ti, tr) in outgoing {
        let adv = advance(&node.clocks, tr.weight, cap);
        for (_, e) in tba.edges_from(node.loc) {
            if e.enabled(wts.labels(tr.target), &adv) {
                let succ = ProductNode { state: tr.target, loc: e.target, clocks: apply_resets(adv.clone(), &e.resets) };
                out.push((succ, ti));
            }
        }
    }
    out
}

/// Half the gcd of every weight and guard constant.
pub fn default_park_step(wts: &Wts, tba: &TimedAutomaton) -> Rational {
    let mut vals: Vec<Rational> = wts.transitions.iter().map(|t| t.weight).collect();
    vals.extend(tba.guard_constants());
    rational_gcd(vals.iter()).unwrap_or_else(|| Rational::from_integer(1)) / Rational::from_integer(2)
}

/// Memoized "can park here forever and accept" over (state, loc, clocks).
struct ParkOracle<'a> {
    wts: &'a Wts,
    tba: &'a TimedAutomaton,
    cap: Rational,
    step: Rational,
    memo: HashMap<ProductNode, bool>,
    /// Accepting nodes lying on a park cycle.
    cycle_accepting: HashSet<ProductNode>,
}

impl<'a> ParkOracle<'a> {
    fn successors(&self, n: &ProductNode) -> Vec<ProductNode> {
        let adv = advance(&n.clocks, self.step, &self.cap);
        let label = self.wts.labels(n.state);
        let mut out: Vec<ProductNode> = Vec::new();
        for (_, e) in self.tba.edges_from(n.loc) {
            if e.enabled(label, &adv) {
                let s = ProductNode { state: n.state, loc: e.target, clocks: apply_resets(adv.clone(), &e.resets) };
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }

    fn accepting(&mut self, start: &ProductNode, budget: &mut usize) -> Result<bool, usize> {
        if let Some(v) = self.memo.get(start) {
            return Ok(*v);
        }
        // explore the unresolved part of the park graph
        let mut index: HashMap<ProductNode, usize> = HashMap::new();
        let mut nodes: Vec<ProductNode> = Vec::new();
        let mut adj: Vec<Vec<usize>> = Vec::new();
        let mut queue = VecDeque::new();
        index.insert(start.clone(), 0);
        nodes.push(start.clone());
        adj.push(Vec::new());
        queue.push_back(0);
        let mut known: Vec<Option<bool>> = vec![None];
        while let Some(i) = queue.pop_front() {
            if known[i].is_some() {
                continue;
            }
            for s in self.successors(&nodes[i]) {
                let j = match index.get(&s) {
                    Some(&j) => j,
                    None => {
                        if *budget == 0 {
                            return Err(0);
                        }
                        *budget -= 1;
                        let j = nodes.len();
                        index.insert(s.clone(), j);
                        known.push(self.memo.get(&s).copied());
                        nodes.push(s);
                        adj.push(Vec::new());
                        queue.push_back(j);
                        j
                    }
                };
                adj[i].push(j);
            }
        }
        let sccs = tarjan(&adj, &known);
        // SCCs come out in reverse topological order: successors first
        let mut verdict: Vec<Option<bool>> = known.clone();
        let mut comp_of = vec![usize::MAX; nodes.len()];
        for (c, comp) in sccs.iter().enumerate() {
            for &v in comp {
                comp_of[v] = c;
            }
        }
        for (c, comp) in sccs.iter().enumerate() {
            if comp.len() == 1 && verdict[comp[0]].is_some() {
                continue;
            }
            let cyclic = comp.len() > 1 || adj[comp[0]].contains(&comp[0]);
            let has_acc = comp.iter().any(|&v| self.tba.locations[nodes[v].loc].accepting);
            let mut good = cyclic && has_acc;
            if good {
                for &v in comp {
                    if self.tba.locations[nodes[v].loc].accepting {
                        self.cycle_accepting.insert(nodes[v].clone());
                    }
                }
            } else {
                good = comp.iter().any(|&v| adj[v].iter().any(|&w| comp_of[w] != c && verdict[w] == Some(true)));
            }
            for &v in comp {
                verdict[v] = Some(good);
            }
        }
        for (i, n) in nodes.into_iter().enumerate() {
            self.memo.insert(n, verdict[i].expect("every node resolved"));
        }
        Ok(self.memo[start])
    }

    /// Park step counts at which the location changes on a shortest park
    /// path from `start` to an accepting cycle node. `start` must be accepting.
    fn witness(&self, start: &ProductNode) -> Vec<usize> {
        let mut parent: HashMap<ProductNode, Option<ProductNode>> = HashMap::new();
        let mut queue = VecDeque::new();
        parent.insert(start.clone(), None);
        queue.push_back(start.clone());
        let mut goal = None;
        while let Some(n) = queue.pop_front() {
            if self.cycle_accepting.contains(&n) {
                goal = Some(n);
                break;
            }
            for s in self.successors(&n) {
                if self.memo.get(&s) == Some(&true) && !parent.contains_key(&s) {
                    parent.insert(s.clone(), Some(n.clone()));
                    queue.push_back(s);
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = goal;
        while let Some(n) = cur {
            cur = parent[&n].clone();
            path.push(n);
        }
        path.reverse();
        (1..path.len()).filter(|&i| path[i].loc != path[i - 1].loc).collect()
    }
}

/// Iterative Tarjan; nodes with a known verdict are not expanded.
fn tarjan(adj: &[Vec<usize>], known: &[Option<bool>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut it)) = call.last_mut() {
            let succs: &[usize] = if known[v].is_some() { &[] } else { &adj[v] };
            if *it < succs.len() {
                let w = succs[*it];
                *it += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("nonempty stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Search statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub run: TimedRun,
    pub explored: usize,
}

/// Breadth-first search over WTS transitions for the first layer holding a
/// node from which parking forever is accepting; ties in that layer go to
/// the shortest total duration, then discovery order.
pub fn search(wts: &Wts, tba: &TimedAutomaton, initial: usize, opts: &SearchOptions) -> Result<SearchResult, SynthesisError> {
    let cap = saturation_cap(tba, opts);
    let step = opts.park_step.unwrap_or_else(|| default_park_step(wts, tba));
    let mut park = ParkOracle { wts, tba, cap, step, memo: HashMap::new(), cycle_accepting: HashSet::new() };
    let mut budget = opts.budget;
    let exceeded = |budget: usize, opts: &SearchOptions| SynthesisError::SearchBudgetExceeded { explored: opts.budget - budget };

    struct Entry {
        node: ProductNode,
        parent: Option<usize>,
        via: Option<usize>,
        duration: Rational,
    }
    let mut arena: Vec<Entry> = Vec::new();
    let mut seen: HashMap<ProductNode, usize> = HashMap::new();
    let mut layer: Vec<usize> = Vec::new();
    for node in initial_nodes(wts, tba, initial) {
        seen.insert(node.clone(), arena.len());
        layer.push(arena.len());
        arena.push(Entry { node, parent: None, via: None, duration: Rational::zero() });
    }
    let may_park = |s: usize| opts.park_states.as_ref().is_none_or(|p| p.contains(&s));
    while !layer.is_empty() {
        let mut best: Option<usize> = None;
        for &i in &layer {
            if !may_park(arena[i].node.state) {
                continue;
            }
            let ok = park.accepting(&arena[i].node, &mut budget).map_err(|_| exceeded(0, opts))?;
            if ok && best.is_none_or(|b| arena[i].duration < arena[b].duration) {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            let mut chain = Vec::new();
            let mut cur = Some(b);
            while let Some(i) = cur {
                chain.push(i);
                cur = arena[i].parent;
            }
            chain.reverse();
            let run = TimedRun {
                regions: chain.iter().map(|&i| arena[i].node.state).collect(),
                stamps: chain.iter().map(|&i| arena[i].duration).collect(),
                transitions: chain.iter().filter_map(|&i| arena[i].via).collect(),
                park_stamps: park
                    .witness(&arena[b].node)
                    .into_iter()
                    .map(|k| arena[b].duration + step * Rational::from_integer(k as i64))
                    .collect(),
            };
            return Ok(SearchResult { run, explored: opts.budget - budget });
        }
        let mut next = Vec::new();
        for &i in &layer {
            let node = arena[i].node.clone();
            for (succ, ti) in product_successors(&node, wts, tba, &cap) {
                if seen.contains_key(&succ) {
                    continue;
                }
                if budget == 0 {
                    return Err(exceeded(budget, opts));
                }
                budget -= 1;
                let duration = arena[i].duration + wts.transitions[ti].weight;
                seen.insert(succ.clone(), arena.len());
                next.push(arena.len());
                arena.push(Entry { node: succ, parent: Some(i), via: Some(ti), duration });
            }
        }
        layer = next;
    }
    let mut locs: Vec<usize> = arena.iter().map(|e| e.node.loc).collect();
    locs.sort_unstable();
    locs.dedup();
    Err(SynthesisError::Unrealizable {
        reachable_locations: locs.into_iter().map(|l| tba.locations[l].name.clone()).collect(),
    })
}

/// A synthesized plan: the run and the controllers realizing its transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub formula: String,
    pub abstraction_hash: String,
    pub region_ids: Vec<String>,
    pub run: TimedRun,
    pub controllers: Vec<ControllerDescriptor>,
}

impl Plan {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn from_toml(text: &str) -> Result<Plan, SynthesisError> {
        toml::from_str(text).map_err(|e| SynthesisError::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthesisError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Plan, SynthesisError> {
        Plan::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Looks up the controller of every step and checks `τ(l+1) − τ(l) = 𝔱(r(l), r(l+1))`.
pub fn run_to_plan(run: &TimedRun, wts: &Wts, formula: &Formula) -> Result<Plan, SynthesisError> {
    let mut controllers = Vec::new();
    let mut t = Rational::zero();
    let unknown = |a: usize, b: usize| SynthesisError::UnknownTransition {
        from: wts.states.get(a).map(|s| s.id.clone()).unwrap_or_else(|| a.to_string()),
        to: wts.states.get(b).map(|s| s.id.clone()).unwrap_or_else(|| b.to_string()),
    };
    if run.stamps.first() != Some(&Rational::zero()) || run.stamps.len() != run.regions.len() {
        return Err(SynthesisError::Unsound("run stamps must start at 0, one per region".into()));
    }
    for l in 0..run.regions.len() - 1 {
        let (a, b) = (run.regions[l], run.regions[l + 1]);
        let tr = wts.find(a, b).ok_or_else(|| unknown(a, b))?;
        let desc = tr.controller.clone().ok_or_else(|| unknown(a, b))?;
        t += tr.weight;
        if t != run.stamps[l + 1] {
            return Err(SynthesisError::Unsound(format!("stamp {} does not match accumulated weights", l + 1)));
        }
        controllers.push(desc);
    }
    Ok(Plan {
        formula: formula.to_string(),
        abstraction_hash: wts.abstraction_hash.clone(),
        region_ids: run.regions.iter().map(|r| wts.states[*r].id.clone()).collect(),
        run: run.clone(),
        controllers,
    })
}

/// Finds an accepting run from `initial` and maps it to a plan.
pub fn find_accepting_run(wts: &Wts, tba: &TimedAutomaton, initial: usize, formula: &Formula) -> Result<Plan, SynthesisError> {
    let res = search(wts, tba, initial, &SearchOptions::default())?;
    run_to_plan(&res.run, wts, formula)
}

/// Compiles `formula`, searches the product and checks the result with the monitor.
pub fn synthesize(wts: &Wts, formula: &Formula, opts: &SearchOptions) -> Result<(Plan, usize), SynthesisError> {
    let tba = build_tba(formula)?;
    let res = search(wts, &tba, wts.initial, opts)?;
    let plan = run_to_plan(&res.run, wts, formula)?;
    if !mitl::monitor(formula, &res.run.word(wts)) {
        return Err(SynthesisError::Unsound(format!("{:?}", plan.region_ids)));
    }
    Ok((plan, res.explored))
}

/// TBA acceptance of a finite word under the park extension, decided by
/// product search on the word's chain WTS.
pub fn tba_accepts(tba: &TimedAutomaton, word: &TimedWord, opts: &SearchOptions) -> Result<bool, SynthesisError> {
    let wts = Wts::from_word(word);
    let mut opts = opts.clone();
    opts.park_states = Some(vec![word.len() - 1]);
    match search(&wts, tba, 0, &opts) {
        Ok(_) => Ok(true),
        Err(SynthesisError::Unrealizable { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}
