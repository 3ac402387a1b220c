//! Random formulas and words, plus a brute-force evaluator that samples the
//! stuttering tail on a half-unit grid.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tube_mitl::abstraction::{ControllerDescriptor, Transition, Wts, WtsState};
use tube_mitl::mitl::{parse, Formula, Interval, Letter, TimedWord};
use tube_mitl::rational::Rational;

pub const ATOMS: [&str; 2] = ["a", "b"];

fn rat(rng: &mut ChaCha8Rng, max_num: i64) -> Rational {
    let den = *[1, 1, 2, 3, 4].choose(rng).unwrap();
    Rational::new(rng.gen_range(0..=max_num * den), den)
}

/// Random nonempty interval with rational endpoints.
pub fn random_interval(rng: &mut ChaCha8Rng) -> Interval {
    loop {
        let lo = rat(rng, 6);
        let hi = if rng.gen_bool(0.2) { None } else { Some(lo + rat(rng, 6)) };
        if let Some(i) = Interval::new(lo, hi, rng.gen(), rng.gen()) {
            return i;
        }
    }
}

/// Random formula over the full syntax with temporal depth at most `depth`.
pub fn random_formula(rng: &mut ChaCha8Rng, depth: usize, atoms: &[&str]) -> Formula {
    let leaf = depth == 0 || rng.gen_bool(0.25);
    if leaf {
        return match rng.gen_range(0..10) {
            0 => Formula::True,
            1 => Formula::False,
            _ => Formula::atom(atoms.choose(rng).unwrap()),
        };
    }
    match rng.gen_range(0..7) {
        0 => Formula::not(random_formula(rng, depth, atoms)),
        1 => Formula::and(random_formula(rng, depth - 1, atoms), random_formula(rng, depth - 1, atoms)),
        2 => Formula::or(random_formula(rng, depth - 1, atoms), random_formula(rng, depth - 1, atoms)),
        3 => Formula::next(random_interval(rng), random_formula(rng, depth - 1, atoms)),
        4 => Formula::eventually(random_interval(rng), random_formula(rng, depth - 1, atoms)),
        5 => Formula::always(random_interval(rng), random_formula(rng, depth - 1, atoms)),
        _ => Formula::until(random_interval(rng), random_formula(rng, depth - 1, atoms), random_formula(rng, depth - 1, atoms)),
    }
}

/// Interval with integer endpoints at most `max`.
pub fn small_interval(rng: &mut ChaCha8Rng, max: i64) -> Interval {
    loop {
        let lo = Rational::from_integer(rng.gen_range(0..=max));
        let hi = if rng.gen_bool(0.25) { None } else { Some(Rational::from_integer(rng.gen_range(0..=max))) };
        if let Some(i) = Interval::new(lo, hi, rng.gen(), rng.gen()) {
            return i;
        }
    }
}

fn prop(rng: &mut ChaCha8Rng, atoms: &[&str]) -> Formula {
    let a = || Formula::atom(atoms[0]);
    let b = || Formula::atom(atoms[1]);
    match rng.gen_range(0..6) {
        0 => a(),
        1 => b(),
        2 => Formula::not(a()),
        3 => Formula::and(a(), Formula::not(b())),
        4 => Formula::or(a(), b()),
        _ => Formula::True,
    }
}

/// Temporal depth at most 2 with integer constants at most 3.
pub fn small_formula(rng: &mut ChaCha8Rng, depth: usize) -> Formula {
    if depth == 0 {
        return prop(rng, &ATOMS);
    }
    let i = small_interval(rng, 3);
    match rng.gen_range(0..7) {
        0 => Formula::next(i, small_formula(rng, depth - 1)),
        1 => Formula::eventually(i, small_formula(rng, depth - 1)),
        2 => Formula::always(i, small_formula(rng, depth - 1)),
        3 => Formula::until(i, small_formula(rng, depth - 1), small_formula(rng, depth - 1)),
        4 => Formula::not(small_formula(rng, depth)),
        5 => Formula::and(small_formula(rng, depth - 1), small_formula(rng, depth)),
        _ => Formula::or(small_formula(rng, depth), small_formula(rng, depth - 1)),
    }
}

/// Flat-fragment formula: Boolean combinations of timed blocks over
/// propositional operands.
pub fn flat_formula(rng: &mut ChaCha8Rng) -> Formula {
    let block = |rng: &mut ChaCha8Rng| {
        let i = random_small_rational_interval(rng);
        match rng.gen_range(0..6) {
            0 => Formula::eventually(i, prop(rng, &ATOMS)),
            1 => Formula::always(i, prop(rng, &ATOMS)),
            2 => Formula::until(i, prop(rng, &ATOMS), prop(rng, &ATOMS)),
            3 => Formula::not(Formula::eventually(i, prop(rng, &ATOMS))),
            4 => Formula::not(Formula::always(i, prop(rng, &ATOMS))),
            _ => prop(rng, &ATOMS),
        }
    };
    let first = block(rng);
    match rng.gen_range(0..4) {
        0 => first,
        1 => Formula::and(first, block(rng)),
        2 => Formula::or(first, block(rng)),
        _ => Formula::and(first, Formula::or(block(rng), block(rng))),
    }
}

fn random_small_rational_interval(rng: &mut ChaCha8Rng) -> Interval {
    loop {
        let lo = Rational::new(rng.gen_range(0..=8), 2);
        let hi = if rng.gen_bool(0.2) { None } else { Some(lo + Rational::new(rng.gen_range(0..=6), 2)) };
        if let Some(i) = Interval::new(lo, hi, rng.gen(), rng.gen()) {
            return i;
        }
    }
}

pub fn random_letter(rng: &mut ChaCha8Rng) -> Letter {
    ATOMS.iter().filter(|_| rng.gen_bool(0.5)).map(|a| a.to_string()).collect()
}

/// Word of length 1..=max_len with quarter-unit stamp increments.
pub fn random_word(rng: &mut ChaCha8Rng, max_len: usize) -> TimedWord {
    let n = rng.gen_range(1..=max_len);
    let mut t = Rational::from_integer(0);
    let mut stamps = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            t += Rational::new(rng.gen_range(1..=12), 4);
        }
        stamps.push(t);
    }
    TimedWord::new((0..n).map(|_| random_letter(rng)).collect(), stamps).unwrap()
}

/// Word of length 1..=max_len with distinct quarter-unit stamps in `[0, bound]`.
pub fn random_word_within(rng: &mut ChaCha8Rng, max_len: usize, bound: Rational) -> TimedWord {
    let slots = (bound * Rational::from_integer(4)).floor().to_integer().max(0) as usize;
    let n = rng.gen_range(1..=max_len.min(slots + 1));
    let mut picks: Vec<usize> = rand::seq::index::sample(rng, slots, n - 1).into_vec().into_iter().map(|k| k + 1).collect();
    picks.sort_unstable();
    let stamps = std::iter::once(Rational::from_integer(0)).chain(picks.into_iter().map(|k| Rational::new(k as i64, 4))).collect();
    TimedWord::new((0..n).map(|_| random_letter(rng)).collect(), stamps).unwrap()
}

/// Random text over the formula alphabet plus a few stray characters.
pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 26] = [
        "a", "b", "!", "&", "|", "(", ")", "[", "]", ",", "U", "F", "G", "X", "0", "1", "2.5", "3/4", "inf", "true", "false", " ", "@", "-", "1/0", ".",
    ];
    let len = rng.gen_range(0..30);
    (0..len).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

/// Every word of length `1..=max_len` over [`ATOMS`] with integer stamps in `0..=max_stamp`.
pub fn all_words(max_len: usize, max_stamp: i64) -> Vec<TimedWord> {
    let letters: Vec<Letter> = (0..4u8).map(|m| ATOMS.iter().enumerate().filter(|(k, _)| m >> k & 1 == 1).map(|(_, a)| a.to_string()).collect()).collect();
    let mut stamp_sets: Vec<Vec<i64>> = vec![vec![0]];
    let mut out = Vec::new();
    for len in 1..=max_len {
        for stamps in &stamp_sets {
            let mut idx = vec![0usize; len];
            loop {
                out.push(
                    TimedWord::new(idx.iter().map(|&i| letters[i].clone()).collect(), stamps.iter().map(|&s| Rational::from_integer(s)).collect())
                        .unwrap(),
                );
                let mut k = 0;
                while k < len && idx[k] == 3 {
                    idx[k] = 0;
                    k += 1;
                }
                if k == len {
                    break;
                }
                idx[k] += 1;
            }
        }
        stamp_sets = stamp_sets
            .iter()
            .flat_map(|s| {
                let last = *s.last().unwrap();
                (last + 1..=max_stamp).map(move |t| {
                    let mut v = s.clone();
                    v.push(t);
                    v
                })
            })
            .collect();
    }
    out
}

fn halves(r: &Rational) -> i64 {
    let h = r * Rational::from_integer(2);
    assert!(h.is_integer(), "brute force needs half-integer values, got {r}");
    h.to_integer()
}

struct Window {
    lo: i64,
    hi: i64,
    lo_closed: bool,
    hi_closed: bool,
}

impl Window {
    fn new(i: &Interval, cap: i64) -> Window {
        let lo = halves(&i.lower);
        match &i.upper {
            Some(u) => Window { lo, hi: halves(u), lo_closed: i.lower_closed, hi_closed: i.upper_closed },
            None => Window { lo, hi: lo + cap, lo_closed: i.lower_closed, hi_closed: true },
        }
    }

    fn contains(&self, d: i64) -> bool {
        (if self.lo_closed { d >= self.lo } else { d > self.lo }) && (if self.hi_closed { d <= self.hi } else { d < self.hi })
    }
}

struct Grid<'a> {
    times: Vec<i64>,
    letters: Vec<&'a Letter>,
    positions: usize,
    cap: i64,
}

impl Grid<'_> {
    fn eval(&self, f: &Formula) -> Vec<bool> {
        let m = self.times.len();
        match f {
            Formula::True => vec![true; m],
            Formula::False => vec![false; m],
            Formula::Atom(a) => self.letters.iter().map(|l| l.contains(a)).collect(),
            Formula::Not(g) => self.eval(g).into_iter().map(|b| !b).collect(),
            Formula::And(a, b) => self.eval(a).into_iter().zip(self.eval(b)).map(|(x, y)| x && y).collect(),
            Formula::Or(a, b) => self.eval(a).into_iter().zip(self.eval(b)).map(|(x, y)| x || y).collect(),
            Formula::Next(i, g) => {
                let w = Window::new(i, self.cap);
                let v = self.eval(g);
                (0..m)
                    .map(|p| {
                        if p + 1 < self.positions {
                            w.contains(self.times[p + 1] - self.times[p]) && v[p + 1]
                        } else {
                            // no successor position: any later instant of the tail
                            (self.positions..m).any(|q| self.times[q] > self.times[p] && w.contains(self.times[q] - self.times[p]) && v[q])
                        }
                    })
                    .collect()
            }
            Formula::Eventually(i, g) => {
                let w = Window::new(i, self.cap);
                let v = self.eval(g);
                (0..m).map(|p| (p..m).any(|q| w.contains(self.times[q] - self.times[p]) && v[q])).collect()
            }
            Formula::Always(i, g) => {
                let w = Window::new(i, self.cap);
                let v = self.eval(g);
                (0..m).map(|p| (p..m).all(|q| !w.contains(self.times[q] - self.times[p]) || v[q])).collect()
            }
            Formula::Until(i, a, b) => {
                let w = Window::new(i, self.cap);
                let (va, vb) = (self.eval(a), self.eval(b));
                (0..m).map(|p| (p..m).any(|q| w.contains(self.times[q] - self.times[p]) && vb[q] && (p..q).all(|r| va[r]))).collect()
            }
        }
    }
}

/// Direct evaluation on the word's positions followed by tail instants
/// `τ_last + k/2`; unbounded windows are cut once they cover the whole
/// word and a few units of tail. Needs half-integer stamps and constants.
pub fn brute_force(f: &Formula, w: &TimedWord) -> bool {
    let n = w.len();
    let last = halves(&w.last_stamp());
    let max_c = f.constants().iter().map(halves).max().unwrap_or(0);
    let cap = last + 6;
    let reach = max_c + cap;
    let depth = f.temporal_depth().max(1) as i64;
    let tail = depth * reach + 2;
    let mut times: Vec<i64> = w.stamps.iter().map(halves).collect();
    let mut letters: Vec<&Letter> = w.letters.iter().collect();
    for k in 1..=tail {
        times.push(last + k);
        letters.push(&w.letters[n - 1]);
    }
    Grid { times, letters, positions: n, cap }.eval(f)[0]
}

/// Depth-limited corpus for exhaustive comparison.
pub fn exhaustive_corpus() -> Vec<Formula> {
    let mut out: Vec<Formula> = [
        "F[1,2] a",
        "G[0,3] (a | b)",
        "a U[1,3] b",
        "X(0,1] b",
        "X[0,0] a",
        "F(0,1) (a & !b)",
        "G(2,inf) a",
        "G[0,2] F[0,1] b",
        "F[1,inf) G[0,inf) a",
        "(a U(0,2] b) | X[1,1] a",
        "!(a U[0,inf) F[2,3] b)",
        "F[0,1] (a U(1,2) b)",
        "G[0,inf) (a | X[0,1] b)",
    ]
    .iter()
    .map(|s| parse(s).unwrap())
    .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut seen: HashSet<Formula> = out.iter().cloned().collect();
    while out.len() < 64 {
        let f = small_formula(&mut rng, 2);
        if f.temporal_depth() >= 1 && seen.insert(f.clone()) {
            out.push(f);
        }
    }
    out
}

/// Distinct flat-fragment formulas with at least one timed block.
pub fn flat_corpus(count: usize, seed: u64) -> Vec<Formula> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < count {
        let f = flat_formula(&mut rng);
        if !f.is_propositional() && seen.insert(f.clone()) {
            out.push(f);
        }
    }
    out
}

/// Small WTS with placeholder controllers.
pub fn test_wts(labels: &[Letter], edges: &[(usize, usize, Rational)]) -> Wts {
    Wts {
        states: labels.iter().enumerate().map(|(k, l)| WtsState { id: format!("s{k}"), labels: l.clone(), obstacle: false }).collect(),
        initial: 0,
        transitions: edges
            .iter()
            .map(|&(source, target, weight)| Transition {
                source,
                target,
                weight,
                controller: Some(ControllerDescriptor {
                    source: format!("s{source}"),
                    target: format!("s{target}"),
                    sigma: 1.0,
                    tube_radius: 0.0,
                    horizon: Rational::new(6, 5),
                    step: Rational::new(1, 10),
                    terminal_level: 0.1,
                    start_offset: vec![0.0, 0.0],
                }),
                arrival_gap: 0.0,
            })
            .collect(),
        step: Rational::new(1, 2),
        abstraction_hash: String::new(),
    }
}

pub fn random_wts(rng: &mut ChaCha8Rng) -> Wts {
    let n = rng.gen_range(2..=4);
    let labels: Vec<Letter> = (0..n).map(|_| random_letter(rng)).collect();
    let mut edges = Vec::new();
    for s in 0..n {
        let mut targets: Vec<usize> = (0..n).filter(|&t| t != s).collect();
        targets.shuffle(rng);
        for &t in &targets[..rng.gen_range(1..=targets.len())] {
            edges.push((s, t, Rational::new(rng.gen_range(1..=8), 2)));
        }
    }
    test_wts(&labels, &edges)
}

