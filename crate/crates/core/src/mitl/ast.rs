use std::collections::BTreeSet;
use std::fmt;

use num_traits::Zero;

use crate::rational::{format_rational, Rational};

/// Nonempty interval of nonnegative rationals; `upper = None` is `+∞`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lower: Rational,
    pub upper: Option<Rational>,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl Interval {
    pub fn new(lower: Rational, upper: Option<Rational>, lower_closed: bool, upper_closed: bool) -> Option<Self> {
        if lower < Rational::zero() {
            return None;
        }
        let upper_closed = upper_closed && upper.is_some();
        if let Some(u) = upper {
            if u < lower || (u == lower && !(lower_closed && upper_closed)) {
                return None;
            }
        }
        Some(Interval { lower, upper, lower_closed, upper_closed })
    }

    pub fn closed(lower: Rational, upper: Rational) -> Self {
        Interval::new(lower, Some(upper), true, true).expect("lower <= upper")
    }

    /// `[0, ∞)`.
    pub fn unbounded() -> Self {
        Interval { lower: Rational::zero(), upper: None, lower_closed: true, upper_closed: false }
    }

    pub fn from_ints(lower: i64, upper: i64) -> Self {
        Interval::closed(Rational::from_integer(lower), Rational::from_integer(upper))
    }

    pub fn contains(&self, d: &Rational) -> bool {
        let lo_ok = if self.lower_closed { *d >= self.lower } else { *d > self.lower };
        let hi_ok = match &self.upper {
            None => true,
            Some(u) => {
                if self.upper_closed {
                    d <= u
                } else {
                    d < u
                }
            }
        };
        lo_ok && hi_ok
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(&Rational::zero())
    }

    /// Whether some `d ∈ I` satisfies `d > x`.
    pub fn reaches_beyond(&self, x: &Rational) -> bool {
        match &self.upper {
            None => true,
            Some(u) => u > x,
        }
    }

    /// Whether `I` contains a strictly positive value.
    pub fn has_positive(&self) -> bool {
        self.reaches_beyond(&Rational::zero())
    }

    pub fn constants(&self) -> impl Iterator<Item = Rational> + '_ {
        std::iter::once(self.lower).chain(self.upper)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_closed { '[' } else { '(' };
        match &self.upper {
            None => write!(f, "{open}{},inf)", format_rational(&self.lower)),
            Some(u) => {
                let close = if self.upper_closed { ']' } else { ')' };
                write!(f, "{open}{},{}{close}", format_rational(&self.lower), format_rational(u))
            }
        }
    }
}

/// MITL abstract syntax.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

pub type Letter = BTreeSet<String>;

impl Formula {
    pub fn atom(name: &str) -> Formula {
        Formula::Atom(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn next(i: Interval, f: Formula) -> Formula {
        Formula::Next(i, Box::new(f))
    }

    pub fn eventually(i: Interval, f: Formula) -> Formula {
        Formula::Eventually(i, Box::new(f))
    }

    pub fn always(i: Interval, f: Formula) -> Formula {
        Formula::Always(i, Box::new(f))
    }

    pub fn until(i: Interval, a: Formula, b: Formula) -> Formula {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    /// Right-nested conjunction; `True` for an empty list.
    pub fn conj(parts: Vec<Formula>) -> Formula {
        parts.into_iter().rev().reduce(|acc, f| Formula::and(f, acc)).unwrap_or(Formula::True)
    }

    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Not(f) | Formula::Next(_, f) | Formula::Eventually(_, f) | Formula::Always(_, f) => f.collect_atoms(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Temporal nesting depth.
    pub fn temporal_depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 0,
            Formula::Not(f) => f.temporal_depth(),
            Formula::And(a, b) | Formula::Or(a, b) => a.temporal_depth().max(b.temporal_depth()),
            Formula::Next(_, f) | Formula::Eventually(_, f) | Formula::Always(_, f) => 1 + f.temporal_depth(),
            Formula::Until(_, a, b) => 1 + a.temporal_depth().max(b.temporal_depth()),
        }
    }

    pub fn is_propositional(&self) -> bool {
        self.temporal_depth() == 0
    }

    /// All interval endpoints.
    pub fn constants(&self) -> Vec<Rational> {
        let mut out = Vec::new();
        self.collect_constants(&mut out);
        out
    }

    fn collect_constants(&self, out: &mut Vec<Rational>) {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => {}
            Formula::Not(f) => f.collect_constants(out),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_constants(out);
                b.collect_constants(out);
            }
            Formula::Next(i, f) | Formula::Eventually(i, f) | Formula::Always(i, f) => {
                out.extend(i.constants());
                f.collect_constants(out);
            }
            Formula::Until(i, a, b) => {
                out.extend(i.constants());
                a.collect_constants(out);
                b.collect_constants(out);
            }
        }
    }

    /// Largest finite interval endpoint (`C_max`), zero if none.
    pub fn max_constant(&self) -> Rational {
        self.constants().into_iter().max().unwrap_or_else(Rational::zero)
    }

    /// Evaluates a propositional formula on one letter.
    ///
    /// # Panics
    /// On temporal operators.
    pub fn eval_letter(&self, letter: &Letter) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => letter.contains(a),
            Formula::Not(f) => !f.eval_letter(letter),
            Formula::And(a, b) => a.eval_letter(letter) && b.eval_letter(letter),
            Formula::Or(a, b) => a.eval_letter(letter) || b.eval_letter(letter),
            _ => panic!("eval_letter on temporal formula {self}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(g) => write!(f, "!({g})"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Next(i, g) => write!(f, "X{i}({g})"),
            Formula::Eventually(i, g) => write!(f, "F{i}({g})"),
            Formula::Always(i, g) => write!(f, "G{i}({g})"),
            Formula::Until(i, a, b) => write!(f, "({a} U{i} {b})"),
        }
    }
}

/// Canonical fully parenthesized text; round-trips through `parse`.
pub fn to_string(f: &Formula) -> String {
    f.to_string()
}

/// Finite timed word `(σ_l, τ_l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedWord {
    pub letters: Vec<Letter>,
    pub stamps: Vec<Rational>,
}

impl TimedWord {
    /// Checks `τ_0 = 0`, strictly increasing stamps and matching lengths.
    pub fn new(letters: Vec<Letter>, stamps: Vec<Rational>) -> Result<Self, String> {
        if letters.is_empty() || letters.len() != stamps.len() {
            return Err("timed word needs equally many letters and stamps, at least one".into());
        }
        if !stamps[0].is_zero() {
            return Err("first stamp must be 0".into());
        }
        if stamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err("stamps must be strictly increasing".into());
        }
        Ok(TimedWord { letters, stamps })
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn last_stamp(&self) -> Rational {
        *self.stamps.last().expect("nonempty word")
    }
}

/// Builds a letter from atom names.
pub fn letter<I: IntoIterator<Item = S>, S: Into<String>>(atoms: I) -> Letter {
    atoms.into_iter().map(Into::into).collect()
}
