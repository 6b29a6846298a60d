//! Events, finite event traces, and the trace operators used by the rest of
//! the engine: concatenation, prefix ordering, prefix subtraction, the length
//! measure, and trace interleaving.
//!
//! Traces over a fixed event set form a cancellative monoid under
//! concatenation with the empty trace as unit; `subtract` is the (unique)
//! inverse of concatenation on prefixes. Only finite event sequences are
//! instantiated as the carrier.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// An event: a channel name applied to a tuple of integer arguments.
///
/// An argument-free channel yields a single event printed as the bare channel
/// name; `pay` applied to `(0, 1, 1)` prints as `pay.0.1.1`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Event {
    pub channel: String,
    pub args: Vec<i64>,
}

impl Event {
    pub fn new(channel: impl Into<String>, args: Vec<i64>) -> Event {
        Event { channel: channel.into(), args }
    }

    /// Argument-free event.
    pub fn plain(channel: impl Into<String>) -> Event {
        Event::new(channel, Vec::new())
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.channel)?;
        for a in &self.args {
            write!(f, ".{a}")?;
        }
        Ok(())
    }
}

/// A finite sequence of events. Immutable after construction.
///
/// The trace bound of a universe is enforced where relations are enumerated,
/// not here; the algebra itself is total.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Trace {
    items: Vec<Event>,
}

/// `subtract(t, s)` requires `s` to be a prefix of `t`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{prefix} is not a prefix of {of}")]
pub struct NotAPrefix {
    pub prefix: Trace,
    pub of: Trace,
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\u{27e8}")?;
        for (i, e) in self.items.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "\u{27e9}")
    }
}

impl Trace {
    pub fn new(items: Vec<Event>) -> Trace {
        Trace { items }
    }

    pub fn singleton(e: Event) -> Trace {
        Trace { items: vec![e] }
    }

    pub fn items(&self) -> &[Event] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// The zero-length trace, the monoid unit.
pub fn empty() -> Trace {
    Trace::default()
}

/// `s` followed by `t`. Total; associative; `empty()` is a two-sided unit.
pub fn concat(s: &Trace, t: &Trace) -> Trace {
    let mut items = Vec::with_capacity(s.items.len() + t.items.len());
    items.extend_from_slice(&s.items);
    items.extend_from_slice(&t.items);
    Trace { items }
}

/// True iff some `u` satisfies `concat(s, u) = t`.
pub fn prefix_le(s: &Trace, t: &Trace) -> bool {
    t.items.len() >= s.items.len() && t.items[..s.items.len()] == s.items[..]
}

/// The unique `u` with `concat(s, u) = t`, when `s` is a prefix of `t`.
pub fn subtract(t: &Trace, s: &Trace) -> Result<Trace, NotAPrefix> {
    if prefix_le(s, t) {
        Ok(Trace { items: t.items[s.items.len()..].to_vec() })
    } else {
        Err(NotAPrefix { prefix: s.clone(), of: t.clone() })
    }
}

/// Discrete trace measure: sequence length.
/// Satisfies `measure(empty()) = 0` and
/// `measure(concat(s,t)) = measure(s) + measure(t)`.
pub fn measure(t: &Trace) -> usize {
    t.items.len()
}

/// All interleavings of `s` and `t`, by the recursion
/// `⟨⟩ ⫴ xs = xs ⫴ ⟨⟩ = {xs}` with the cons case taking either head.
pub fn interleavings(s: &Trace, t: &Trace) -> BTreeSet<Trace> {
    fn go(s: &[Event], t: &[Event]) -> BTreeSet<Vec<Event>> {
        if s.is_empty() {
            return BTreeSet::from([t.to_vec()]);
        }
        if t.is_empty() {
            return BTreeSet::from([s.to_vec()]);
        }
        let mut out = BTreeSet::new();
        for z in go(&s[1..], t) {
            let mut v = Vec::with_capacity(z.len() + 1);
            v.push(s[0].clone());
            v.extend(z);
            out.insert(v);
        }
        for z in go(s, &t[1..]) {
            let mut v = Vec::with_capacity(z.len() + 1);
            v.push(t[0].clone());
            v.extend(z);
            out.insert(v);
        }
        out
    }
    go(&s.items, &t.items).into_iter().map(Trace::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(c: &str) -> Event {
        Event::plain(c)
    }

    fn tr(names: &[&str]) -> Trace {
        Trace::new(names.iter().map(|c| ev(c)).collect())
    }

    /// All traces up to `len` over the given events.
    fn all_traces(events: &[Event], len: usize) -> Vec<Trace> {
        let mut out = vec![empty()];
        let mut layer = vec![empty()];
        for _ in 0..len {
            let mut next = Vec::new();
            for t in &layer {
                for e in events {
                    let mut items = t.items().to_vec();
                    items.push(e.clone());
                    next.push(Trace::new(items));
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat(&tr(&["a"]), &tr(&["b"])), tr(&["a", "b"]));
        assert_eq!(concat(&empty(), &tr(&["a", "b"])), tr(&["a", "b"]));
        assert_eq!(concat(&tr(&["a"]), &empty()), tr(&["a"]));
        assert_eq!(concat(&empty(), &empty()), empty());
    }

    #[test]
    fn prefix_examples() {
        assert!(prefix_le(&tr(&["a"]), &tr(&["a", "b"])));
        assert!(!prefix_le(&tr(&["b"]), &tr(&["a", "b"])));
        for t in all_traces(&[ev("a"), ev("b")], 3) {
            assert!(prefix_le(&empty(), &t));
        }
    }

    #[test]
    fn subtract_examples() {
        // Oracle for subtract(⟨a,b⟩, ⟨a⟩): search all u with s⌢u = t over
        // traces up to length 2.
        let s = tr(&["a"]);
        let t = tr(&["a", "b"]);
        let found: Vec<Trace> = all_traces(&[ev("a"), ev("b")], 2)
            .into_iter()
            .filter(|u| concat(&s, u) == t)
            .collect();
        assert_eq!(found, vec![tr(&["b"])]);
        assert_eq!(subtract(&t, &s).unwrap(), tr(&["b"]));

        assert_eq!(subtract(&t, &empty()).unwrap(), t);
        assert_eq!(
            subtract(&tr(&["a"]), &tr(&["b"])),
            Err(NotAPrefix { prefix: tr(&["b"]), of: tr(&["a"]) })
        );
    }

    #[test]
    fn measure_examples() {
        assert_eq!(measure(&empty()), 0);
        assert_eq!(measure(&tr(&["a", "b"])), 2);
        assert_eq!(
            measure(&concat(&tr(&["a"]), &tr(&["b"]))),
            measure(&tr(&["a"])) + measure(&tr(&["b"]))
        );
    }

    #[test]
    fn interleavings_examples() {
        let ab: BTreeSet<Trace> = [tr(&["a", "b"]), tr(&["b", "a"])].into();
        assert_eq!(interleavings(&tr(&["a"]), &tr(&["b"])), ab);
        assert_eq!(
            interleavings(&empty(), &tr(&["a", "b"])),
            BTreeSet::from([tr(&["a", "b"])])
        );
        assert_eq!(
            interleavings(&tr(&["a"]), &tr(&["a"])),
            BTreeSet::from([tr(&["a", "a"])])
        );
    }

    /// Exhaustive monoid/cancellation axioms over all traces of length ≤ 3
    /// on a 2-event alphabet: associativity, two-sided unit, left and right
    /// cancellation, and x⌢y = ε ⟹ x = ε.
    #[test]
    fn axioms_exhaustive() {
        let ts = all_traces(&[ev("a"), ev("b")], 3);
        for x in &ts {
            assert_eq!(&concat(&empty(), x), x);
            assert_eq!(&concat(x, &empty()), x);
            for y in &ts {
                if concat(x, y) == empty() {
                    assert_eq!(x, &empty());
                    assert_eq!(y, &empty());
                }
                for z in &ts {
                    assert_eq!(concat(&concat(x, y), z), concat(x, &concat(y, z)));
                    if concat(x, y) == concat(x, z) {
                        assert_eq!(y, z);
                    }
                    if concat(y, x) == concat(z, x) {
                        assert_eq!(y, z);
                    }
                }
            }
        }
    }

    /// Measure axioms at the same scale, plus the positivity reading
    /// s ≠ ε ⟹ #s > 0.
    #[test]
    fn measure_axioms_exhaustive() {
        let ts = all_traces(&[ev("a"), ev("b")], 3);
        assert_eq!(measure(&empty()), 0);
        for x in &ts {
            if x != &empty() {
                assert!(measure(x) > 0);
            }
            for y in &ts {
                assert_eq!(measure(&concat(x, y)), measure(x) + measure(y));
            }
        }
    }

    #[test]
    fn subtract_inverts_concat() {
        let ts = all_traces(&[ev("a"), ev("b")], 3);
        for s in &ts {
            for t in &ts {
                if prefix_le(s, t) {
                    assert_eq!(concat(s, &subtract(t, s).unwrap()), *t);
                } else {
                    assert!(subtract(t, s).is_err());
                }
                // prefix_le agrees with its existential characterisation
                let exists = ts.iter().any(|u| &concat(s, u) == t);
                assert_eq!(prefix_le(s, t), exists);
            }
        }
    }

    fn binom(n: usize, k: usize) -> usize {
        let mut r = 1usize;
        for i in 0..k {
            r = r * (n - i) / (i + 1);
        }
        r
    }

    #[test]
    fn interleaving_counts() {
        let ts = all_traces(&[ev("a"), ev("b")], 3);
        for s in &ts {
            for t in &ts {
                let il = interleavings(s, t);
                let bound = binom(measure(s) + measure(t), measure(s));
                assert!(il.len() <= bound);
                let s_evs: BTreeSet<&Event> = s.items().iter().collect();
                let t_evs: BTreeSet<&Event> = t.items().iter().collect();
                if s_evs.is_disjoint(&t_evs) {
                    assert_eq!(il.len(), bound);
                }
                // every interleaving has both inputs as subsequences
                for z in &il {
                    assert_eq!(measure(z), measure(s) + measure(t));
                }
            }
        }
    }

    #[test]
    fn display_forms() {
        assert_eq!(empty().to_string(), "\u{27e8}\u{27e9}");
        assert_eq!(tr(&["a", "b"]).to_string(), "\u{27e8}a,b\u{27e9}");
        assert_eq!(Event::new("pay", vec![0, 1, 1]).to_string(), "pay.0.1.1");
    }
}
