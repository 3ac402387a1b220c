//! Point-based satisfaction over finite timed words with a stuttering tail:
//! after `τ_last` the last letter holds at every real time. All tail points
//! share one future, so every subformula has a single tail value besides its
//! per-position values.

use super::ast::{Formula, Interval, TimedWord};
use crate::rational::Rational;

struct Valuation {
    at: Vec<bool>,
    tail: bool,
}

/// `I ∩ (τ_last − τ_l, ∞) ≠ ∅`: the window from position `l` reaches the tail.
fn tail_hits(i: &Interval, w: &TimedWord, l: usize) -> bool {
    let gap: Rational = w.last_stamp() - w.stamps[l];
    i.reaches_beyond(&gap)
}

fn eval(f: &Formula, w: &TimedWord) -> Valuation {
    let n = w.len();
    let last = n - 1;
    match f {
        Formula::True => Valuation { at: vec![true; n], tail: true },
        Formula::False => Valuation { at: vec![false; n], tail: false },
        Formula::Atom(a) => Valuation {
            at: w.letters.iter().map(|s| s.contains(a)).collect(),
            tail: w.letters[last].contains(a),
        },
        Formula::Not(g) => {
            let v = eval(g, w);
            Valuation { at: v.at.iter().map(|b| !b).collect(), tail: !v.tail }
        }
        Formula::And(a, b) => {
            let (va, vb) = (eval(a, w), eval(b, w));
            Valuation { at: va.at.iter().zip(&vb.at).map(|(x, y)| *x && *y).collect(), tail: va.tail && vb.tail }
        }
        Formula::Or(a, b) => {
            let (va, vb) = (eval(a, w), eval(b, w));
            Valuation { at: va.at.iter().zip(&vb.at).map(|(x, y)| *x || *y).collect(), tail: va.tail || vb.tail }
        }
        Formula::Next(i, g) => {
            let v = eval(g, w);
            let at_tail = i.has_positive() && v.tail;
            let at = (0..n)
                .map(|l| if l < last { i.contains(&(w.stamps[l + 1] - w.stamps[l])) && v.at[l + 1] } else { at_tail })
                .collect();
            Valuation { at, tail: at_tail }
        }
        Formula::Eventually(i, g) => {
            let v = eval(g, w);
            let at = (0..n)
                .map(|l| {
                    (l..n).any(|j| v.at[j] && i.contains(&(w.stamps[j] - w.stamps[l]))) || (tail_hits(i, w, l) && v.tail)
                })
                .collect();
            Valuation { at, tail: v.tail }
        }
        Formula::Always(i, g) => {
            let v = eval(g, w);
            let at = (0..n)
                .map(|l| {
                    (l..n).all(|j| v.at[j] || !i.contains(&(w.stamps[j] - w.stamps[l]))) && (!tail_hits(i, w, l) || v.tail)
                })
                .collect();
            Valuation { at, tail: v.tail }
        }
        Formula::Until(i, a, b) => {
            let (va, vb) = (eval(a, w), eval(b, w));
            let at = (0..n)
                .map(|l| {
                    let mut prefix_ok = true;
                    for j in l..n {
                        if vb.at[j] && i.contains(&(w.stamps[j] - w.stamps[l])) {
                            return true;
                        }
                        prefix_ok &= va.at[j];
                        if !prefix_ok {
                            return false;
                        }
                    }
                    // every finite position from l satisfied the left side
                    tail_hits(i, w, l) && vb.tail && va.tail
                })
                .collect();
            Valuation { at, tail: vb.tail && (i.contains_zero() || va.tail) }
        }
    }
}

/// `w ⊨ f` at position 0.
pub fn monitor(f: &Formula, w: &TimedWord) -> bool {
    eval(f, w).at[0]
}

/// Truth value of `f` at every position of `w`.
pub fn monitor_positions(f: &Formula, w: &TimedWord) -> Vec<bool> {
    eval(f, w).at
}
