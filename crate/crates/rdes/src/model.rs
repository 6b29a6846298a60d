//! The finite-universe alphabetised-relation engine: universes (finite event
//! alphabet, finite state space, bounded traces), bindings, relations as
//! explicit binding sets, the relational calculus (Boolean operators,
//! quantification, substitution, sequential composition, conditional,
//! assignment), refinement, and finite-lattice fixed points.
//!
//! The refinement order is P ⊑ Q iff Q.rows ⊆ P.rows, so the lattice bottom
//! is the universal relation (all bindings) and the top is the empty one.
//!
//! Everything downstream reduces to these relations; relation-level results
//! double as the brute-force oracle for the contract-level calculational laws.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::trace_algebra::{Event, Trace};

/// Interned event index within a universe.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EventId(pub u16);

/// Interned trace index within a universe. Index 0 is the empty trace;
/// ordering is by length, then pointwise event index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TraceId(pub u32);

/// Interned state index within a universe.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct StateId(pub u32);

/// A refusal set as a bitmask over event indices.
pub type RefMask = u32;

pub const EMPTY_TRACE: TraceId = TraceId(0);

/// A state-variable value.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Value {
    Int(i64),
    Bool(bool),
    /// Partial map with finite integer keys; absent keys are undefined.
    Map(std::collections::BTreeMap<i64, i64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{k}->{v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// One value per declared state variable, in declaration order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct State(pub Vec<Value>);

/// Domain of a state variable.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum VarDom {
    Int { lo: i64, hi: i64 },
    Bool,
    /// Partial maps from every key in `key_lo..=key_hi` to values in
    /// `val_lo..=val_hi`; each key may also be absent.
    Map { key_lo: i64, key_hi: i64, val_lo: i64, val_hi: i64 },
}

#[derive(Clone, Debug)]
pub struct ChannelDecl {
    pub name: String,
    pub arg_ranges: Vec<(i64, i64)>,
}

#[derive(Clone, Debug)]
pub struct StateVarDecl {
    pub name: String,
    pub dom: VarDom,
}

#[derive(Debug, Error)]
pub enum UniverseError {
    #[error("domain of {0} is empty")]
    EmptyDomain(String),
    #[error("trace bound must be at least 1")]
    ZeroBound,
    #[error("duplicate declaration name {0}")]
    DuplicateName(String),
    #[error("event alphabet has {0} events; at most 32 are supported")]
    TooManyEvents(usize),
    #[error("universe too large to enumerate: {0}")]
    TooLarge(String),
}

/// The finite model configuration: event alphabet, state space, and trace
/// bound L. Events, states, and all traces of length ≤ L are enumerated and
/// interned eagerly at construction.
#[derive(Debug)]
pub struct Universe {
    channels: Vec<ChannelDecl>,
    state_vars: Vec<StateVarDecl>,
    bound: usize,
    events: Vec<Event>,
    event_index: HashMap<Event, EventId>,
    states: Vec<State>,
    state_index: HashMap<State, StateId>,
    traces: Vec<Vec<EventId>>,
    trace_index: HashMap<Vec<EventId>, TraceId>,
    var_index: HashMap<String, usize>,
    /// Compositions dropped because the concatenated trace would exceed L.
    truncations: AtomicU64,
}

impl Universe {
    pub fn new(
        channels: Vec<ChannelDecl>,
        state_vars: Vec<StateVarDecl>,
        bound: usize,
    ) -> Result<Arc<Universe>, UniverseError> {
        if bound == 0 {
            return Err(UniverseError::ZeroBound);
        }
        let mut seen = BTreeSet::new();
        for n in channels.iter().map(|c| &c.name).chain(state_vars.iter().map(|v| &v.name)) {
            if !seen.insert(n.clone()) {
                return Err(UniverseError::DuplicateName(n.clone()));
            }
        }
        // events
        let mut events = Vec::new();
        for ch in &channels {
            let mut tuples: Vec<Vec<i64>> = vec![Vec::new()];
            for &(lo, hi) in &ch.arg_ranges {
                if lo > hi {
                    return Err(UniverseError::EmptyDomain(ch.name.clone()));
                }
                let mut next = Vec::new();
                for t in &tuples {
                    for v in lo..=hi {
                        let mut t2 = t.clone();
                        t2.push(v);
                        next.push(t2);
                    }
                }
                tuples = next;
            }
            for args in tuples {
                events.push(Event::new(ch.name.clone(), args));
            }
        }
        if events.len() > 32 {
            return Err(UniverseError::TooManyEvents(events.len()));
        }
        let event_index: HashMap<Event, EventId> =
            events.iter().enumerate().map(|(i, e)| (e.clone(), EventId(i as u16))).collect();

        // states
        let mut states: Vec<Vec<Value>> = vec![Vec::new()];
        for sv in &state_vars {
            let vals: Vec<Value> = match &sv.dom {
                VarDom::Int { lo, hi } => {
                    if lo > hi {
                        return Err(UniverseError::EmptyDomain(sv.name.clone()));
                    }
                    (*lo..=*hi).map(Value::Int).collect()
                }
                VarDom::Bool => vec![Value::Bool(false), Value::Bool(true)],
                VarDom::Map { key_lo, key_hi, val_lo, val_hi } => {
                    if key_lo > key_hi || val_lo > val_hi {
                        return Err(UniverseError::EmptyDomain(sv.name.clone()));
                    }
                    let mut maps = vec![std::collections::BTreeMap::new()];
                    for k in *key_lo..=*key_hi {
                        let mut next = Vec::new();
                        for m in &maps {
                            next.push(m.clone());
                            for v in *val_lo..=*val_hi {
                                let mut m2 = m.clone();
                                m2.insert(k, v);
                                next.push(m2);
                            }
                        }
                        maps = next;
                    }
                    maps.into_iter().map(Value::Map).collect()
                }
            };
            let mut next = Vec::with_capacity(states.len() * vals.len());
            for s in &states {
                for v in &vals {
                    let mut s2 = s.clone();
                    s2.push(v.clone());
                    next.push(s2);
                }
            }
            states = next;
            if states.len() > 1 << 20 {
                return Err(UniverseError::TooLarge(format!("{} states", states.len())));
            }
        }
        let states: Vec<State> = states.into_iter().map(State).collect();
        let state_index: HashMap<State, StateId> =
            states.iter().enumerate().map(|(i, s)| (s.clone(), StateId(i as u32))).collect();

        // traces of length <= bound, ordered by (length, lexicographic)
        let mut traces: Vec<Vec<EventId>> = vec![Vec::new()];
        let mut layer: Vec<Vec<EventId>> = vec![Vec::new()];
        for _ in 0..bound {
            let mut next = Vec::new();
            for t in &layer {
                for i in 0..events.len() {
                    let mut t2 = t.clone();
                    t2.push(EventId(i as u16));
                    next.push(t2);
                }
            }
            traces.extend(next.iter().cloned());
            layer = next;
            if traces.len() > 1 << 24 {
                return Err(UniverseError::TooLarge(format!("{} traces", traces.len())));
            }
        }
        let trace_index: HashMap<Vec<EventId>, TraceId> =
            traces.iter().enumerate().map(|(i, t)| (t.clone(), TraceId(i as u32))).collect();

        let var_index =
            state_vars.iter().enumerate().map(|(i, v)| (v.name.clone(), i)).collect();

        Ok(Arc::new(Universe {
            channels,
            state_vars,
            bound,
            events,
            event_index,
            states,
            state_index,
            traces,
            trace_index,
            var_index,
            truncations: AtomicU64::new(0),
        }))
    }

    pub fn bound(&self) -> usize {
        self.bound
    }
    pub fn channels(&self) -> &[ChannelDecl] {
        &self.channels
    }
    pub fn state_vars(&self) -> &[StateVarDecl] {
        &self.state_vars
    }
    pub fn n_events(&self) -> usize {
        self.events.len()
    }
    pub fn n_states(&self) -> usize {
        self.states.len()
    }
    pub fn n_traces(&self) -> usize {
        self.traces.len()
    }
    pub fn event(&self, id: EventId) -> &Event {
        &self.events[id.0 as usize]
    }
    pub fn event_id(&self, e: &Event) -> Option<EventId> {
        self.event_index.get(e).copied()
    }
    pub fn state(&self, id: StateId) -> &State {
        &self.states[id.0 as usize]
    }
    pub fn state_id(&self, s: &State) -> Option<StateId> {
        self.state_index.get(s).copied()
    }
    pub fn var_position(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }
    pub fn full_refusal(&self) -> RefMask {
        if self.events.is_empty() {
            0
        } else {
            (1u64 << self.events.len()) as RefMask - 1
        }
    }

    pub fn trace_events(&self, id: TraceId) -> &[EventId] {
        &self.traces[id.0 as usize]
    }
    pub fn trace_len(&self, id: TraceId) -> usize {
        self.traces[id.0 as usize].len()
    }
    pub fn trace_id(&self, events: &[EventId]) -> Option<TraceId> {
        self.trace_index.get(events).copied()
    }
    /// Value-level view of an interned trace, for display and the algebra.
    pub fn trace_value(&self, id: TraceId) -> Trace {
        Trace::new(self.trace_events(id).iter().map(|&e| self.event(e).clone()).collect())
    }
    pub fn intern_trace(&self, t: &Trace) -> Option<TraceId> {
        let ids: Option<Vec<EventId>> = t.items().iter().map(|e| self.event_id(e)).collect();
        self.trace_id(&ids?)
    }

    /// True iff `a` is a prefix of `b`.
    pub fn trace_le(&self, a: TraceId, b: TraceId) -> bool {
        let (ta, tb) = (self.trace_events(a), self.trace_events(b));
        tb.len() >= ta.len() && &tb[..ta.len()] == ta
    }

    /// `a ⌢ b` when the result fits the bound; `None` otherwise (the caller
    /// decides whether that counts as a truncation).
    pub fn trace_concat(&self, a: TraceId, b: TraceId) -> Option<TraceId> {
        let (ta, tb) = (self.trace_events(a), self.trace_events(b));
        if ta.len() + tb.len() > self.bound {
            return None;
        }
        let mut v = Vec::with_capacity(ta.len() + tb.len());
        v.extend_from_slice(ta);
        v.extend_from_slice(tb);
        self.trace_id(&v)
    }

    /// Like `trace_concat`, but an over-bound result bumps the universe's
    /// truncation counter.
    pub fn trace_concat_counting(&self, a: TraceId, b: TraceId) -> Option<TraceId> {
        let r = self.trace_concat(a, b);
        if r.is_none() {
            self.truncations.fetch_add(1, Ordering::Relaxed);
        }
        r
    }

    /// `b − a` when `a ≤ b`.
    pub fn trace_subtract(&self, b: TraceId, a: TraceId) -> Option<TraceId> {
        if !self.trace_le(a, b) {
            return None;
        }
        let (ta, tb) = (self.trace_events(a), self.trace_events(b));
        self.trace_id(&tb[ta.len()..])
    }

    pub fn note_truncation(&self) {
        self.truncations.fetch_add(1, Ordering::Relaxed);
    }
    pub fn truncation_count(&self) -> u64 {
        self.truncations.load(Ordering::Relaxed)
    }
    pub fn reset_truncations(&self) {
        self.truncations.store(0, Ordering::Relaxed);
    }

    /// Build a state from named assignments; every declared variable must be
    /// covered. Intended for tests and denotation code.
    pub fn mk_state(&self, vals: &[(&str, Value)]) -> Option<StateId> {
        let mut v: Vec<Option<Value>> = vec![None; self.state_vars.len()];
        for (name, val) in vals {
            let i = self.var_position(name)?;
            v[i] = Some(val.clone());
        }
        let st = State(v.into_iter().collect::<Option<Vec<_>>>()?);
        self.state_id(&st)
    }
}

/// Display for states: `{x=1, m={0->2}}`.
pub fn state_display(u: &Universe, id: StateId) -> String {
    let s = u.state(id);
    let mut out = String::from("{");
    for (i, (decl, v)) in u.state_vars().iter().zip(&s.0).enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("{}={}", decl.name, v));
    }
    out.push('}');
    out
}

/// Display for traces: `⟨a,b⟩`.
pub fn trace_display(u: &Universe, id: TraceId) -> String {
    let mut out = String::from("⟨");
    for (i, &e) in u.trace_events(id).iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&u.event(e).to_string());
    }
    out.push('⟩');
    out
}

/// Display for refusal sets: `{a,b}`.
pub fn refusal_display(u: &Universe, mask: RefMask) -> String {
    let mut out = String::from("{");
    let mut first = true;
    for i in 0..u.n_events() {
        if mask & (1 << i) != 0 {
            if !first {
                out.push(',');
            }
            out.push_str(&u.event(EventId(i as u16)).to_string());
            first = false;
        }
    }
    out.push('}');
    out
}

/// An observational variable of the relational alphabet.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Var {
    Ok,
    OkP,
    Wait,
    WaitP,
    Tr,
    TrP,
    St,
    StP,
    RefP,
}

pub const ALL_VARS: [Var; 9] =
    [Var::Ok, Var::OkP, Var::Wait, Var::WaitP, Var::Tr, Var::TrP, Var::St, Var::StP, Var::RefP];

impl Var {
    fn bit(self) -> u16 {
        1 << (self as u16)
    }
    /// The unprimed partner of a primed variable, if any.
    pub fn unprimed_partner(self) -> Option<Var> {
        match self {
            Var::OkP => Some(Var::Ok),
            Var::WaitP => Some(Var::Wait),
            Var::TrP => Some(Var::Tr),
            Var::StP => Some(Var::St),
            _ => None,
        }
    }
    pub fn is_primed(self) -> bool {
        matches!(self, Var::OkP | Var::WaitP | Var::TrP | Var::StP | Var::RefP)
    }
    pub fn name(self) -> &'static str {
        match self {
            Var::Ok => "ok",
            Var::OkP => "ok'",
            Var::Wait => "wait",
            Var::WaitP => "wait'",
            Var::Tr => "tr",
            Var::TrP => "tr'",
            Var::St => "st",
            Var::StP => "st'",
            Var::RefP => "ref'",
        }
    }
}

/// A set of alphabet variables.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Alpha(u16);

impl Alpha {
    pub const EMPTY: Alpha = Alpha(0);
    pub fn of(vars: &[Var]) -> Alpha {
        Alpha(vars.iter().fold(0, |a, v| a | v.bit()))
    }
    /// The full reactive alphabet {ok, ok', wait, wait', tr, tr', st, st', ref'}.
    pub fn full() -> Alpha {
        Alpha::of(&ALL_VARS)
    }
    /// The design alphabet {ok, ok', st, st'}.
    pub fn design() -> Alpha {
        Alpha::of(&[Var::Ok, Var::OkP, Var::St, Var::StP])
    }
    pub fn contains(self, v: Var) -> bool {
        self.0 & v.bit() != 0
    }
    pub fn with(self, v: Var) -> Alpha {
        Alpha(self.0 | v.bit())
    }
    pub fn without(self, v: Var) -> Alpha {
        Alpha(self.0 & !v.bit())
    }
    pub fn union(self, o: Alpha) -> Alpha {
        Alpha(self.0 | o.0)
    }
    pub fn is_subset(self, o: Alpha) -> bool {
        self.0 & !o.0 == 0
    }
    pub fn iter(self) -> impl Iterator<Item = Var> {
        ALL_VARS.into_iter().filter(move |v| self.contains(*v))
    }
    /// Every primed variable with an unprimed partner is paired, and vice
    /// versa. `ref'` is allowed: it has no partner and is not composed over.
    pub fn is_homogeneous(self) -> bool {
        for v in [Var::Ok, Var::Wait, Var::Tr, Var::St] {
            let p = match v {
                Var::Ok => Var::OkP,
                Var::Wait => Var::WaitP,
                Var::Tr => Var::TrP,
                Var::St => Var::StP,
                _ => unreachable!(),
            };
            if self.contains(v) != self.contains(p) {
                return false;
            }
        }
        true
    }
    pub fn unprimed_only(self) -> bool {
        self.iter().all(|v| !v.is_primed())
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", v.name())?;
        }
        write!(f, "}}")
    }
}

/// One observation row. Fields outside a relation's alphabet are kept at
/// canonical defaults so set semantics stay exact.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Binding {
    pub ok: bool,
    pub okp: bool,
    pub wait: bool,
    pub waitp: bool,
    pub tr: TraceId,
    pub trp: TraceId,
    pub st: StateId,
    pub stp: StateId,
    pub refp: RefMask,
}

impl Default for TraceId {
    fn default() -> Self {
        EMPTY_TRACE
    }
}
impl Default for StateId {
    fn default() -> Self {
        StateId(0)
    }
}

/// A variable's value inside a binding, for generic manipulation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum VarVal {
    B(bool),
    T(TraceId),
    S(StateId),
    R(RefMask),
}

impl Binding {
    pub fn get(&self, v: Var) -> VarVal {
        match v {
            Var::Ok => VarVal::B(self.ok),
            Var::OkP => VarVal::B(self.okp),
            Var::Wait => VarVal::B(self.wait),
            Var::WaitP => VarVal::B(self.waitp),
            Var::Tr => VarVal::T(self.tr),
            Var::TrP => VarVal::T(self.trp),
            Var::St => VarVal::S(self.st),
            Var::StP => VarVal::S(self.stp),
            Var::RefP => VarVal::R(self.refp),
        }
    }
    pub fn set(&mut self, v: Var, val: VarVal) {
        match (v, val) {
            (Var::Ok, VarVal::B(b)) => self.ok = b,
            (Var::OkP, VarVal::B(b)) => self.okp = b,
            (Var::Wait, VarVal::B(b)) => self.wait = b,
            (Var::WaitP, VarVal::B(b)) => self.waitp = b,
            (Var::Tr, VarVal::T(t)) => self.tr = t,
            (Var::TrP, VarVal::T(t)) => self.trp = t,
            (Var::St, VarVal::S(s)) => self.st = s,
            (Var::StP, VarVal::S(s)) => self.stp = s,
            (Var::RefP, VarVal::R(r)) => self.refp = r,
            _ => panic!("type mismatch in Binding::set"),
        }
    }
    /// Zero every field outside `alpha`.
    pub fn canon(mut self, alpha: Alpha) -> Binding {
        for v in ALL_VARS {
            if !alpha.contains(v) {
                match v {
                    Var::Ok => self.ok = false,
                    Var::OkP => self.okp = false,
                    Var::Wait => self.wait = false,
                    Var::WaitP => self.waitp = false,
                    Var::Tr => self.tr = EMPTY_TRACE,
                    Var::TrP => self.trp = EMPTY_TRACE,
                    Var::St => self.st = StateId(0),
                    Var::StP => self.stp = StateId(0),
                    Var::RefP => self.refp = 0,
                }
            }
        }
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("alphabet mismatch: {0} vs {1}")]
    AlphabetMismatch(Alpha, Alpha),
    #[error("relations belong to different universes")]
    UniverseMismatch,
    #[error("sequential composition needs a homogeneous alphabet, got {0}")]
    NotHomogeneous(Alpha),
    #[error("conditional guard must range over unprimed variables, got {0}")]
    BadCondition(Alpha),
    #[error("empty family has no indexed infimum")]
    EmptyFamily,
    #[error("function is not monotone (witnessed on a sampled pair)")]
    NotMonotone,
    #[error("{0} is not in the alphabet {1}")]
    VarNotInAlphabet(&'static str, Alpha),
}

/// An alphabetised relation: an explicit, canonicalised set of bindings.
#[derive(Clone, Debug)]
pub struct Rel {
    u: Arc<Universe>,
    alpha: Alpha,
    rows: BTreeSet<Binding>,
}

impl PartialEq for Rel {
    fn eq(&self, o: &Rel) -> bool {
        Arc::ptr_eq(&self.u, &o.u) && self.alpha == o.alpha && self.rows == o.rows
    }
}
impl Eq for Rel {}

/// Values a variable ranges over in a universe.
pub fn var_domain(u: &Universe, v: Var) -> Vec<VarVal> {
    match v {
        Var::Ok | Var::OkP | Var::Wait | Var::WaitP => {
            vec![VarVal::B(false), VarVal::B(true)]
        }
        Var::Tr | Var::TrP => (0..u.n_traces()).map(|i| VarVal::T(TraceId(i as u32))).collect(),
        Var::St | Var::StP => (0..u.n_states()).map(|i| VarVal::S(StateId(i as u32))).collect(),
        Var::RefP => (0..=u.full_refusal()).map(VarVal::R).collect(),
    }
}

/// Every binding over the alphabet, canonical outside it.
pub fn all_bindings(u: &Universe, alpha: Alpha) -> Vec<Binding> {
    let mut out = vec![Binding::default()];
    for v in alpha.iter() {
        let dom = var_domain(u, v);
        let mut next = Vec::with_capacity(out.len() * dom.len());
        for b in &out {
            for val in &dom {
                let mut b2 = *b;
                b2.set(v, *val);
                next.push(b2);
            }
        }
        out = next;
    }
    out
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub holds: bool,
    /// Up to `max_counterexamples` witnesses in Q ∖ P.
    pub counterexamples: Vec<Binding>,
    pub total_violations: usize,
}

pub const DEFAULT_MAX_COUNTEREXAMPLES: usize = 10;

impl Rel {
    pub fn new(u: Arc<Universe>, alpha: Alpha, rows: BTreeSet<Binding>) -> Rel {
        let rows = rows.into_iter().map(|b| b.canon(alpha)).collect();
        Rel { u, alpha, rows }
    }

    pub fn from_rows(u: Arc<Universe>, alpha: Alpha, rows: impl IntoIterator<Item = Binding>) -> Rel {
        Rel::new(u, alpha, rows.into_iter().collect())
    }

    /// The lattice top: no observations (relational `false`, miraculous).
    pub fn top(u: Arc<Universe>, alpha: Alpha) -> Rel {
        Rel { u, alpha, rows: BTreeSet::new() }
    }

    /// The lattice bottom: all bindings (relational `true`, abort).
    pub fn bottom(u: Arc<Universe>, alpha: Alpha) -> Rel {
        let rows = all_bindings(&u, alpha).into_iter().collect();
        Rel { u, alpha, rows }
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.u
    }
    pub fn alpha(&self) -> Alpha {
        self.alpha
    }
    pub fn rows(&self) -> &BTreeSet<Binding> {
        &self.rows
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
    pub fn contains(&self, b: &Binding) -> bool {
        self.rows.contains(&b.canon(self.alpha))
    }

    fn check_same(&self, o: &Rel) -> Result<(), ModelError> {
        if !Arc::ptr_eq(&self.u, &o.u) {
            return Err(ModelError::UniverseMismatch);
        }
        if self.alpha != o.alpha {
            return Err(ModelError::AlphabetMismatch(self.alpha, o.alpha));
        }
        Ok(())
    }

    pub fn conj(&self, o: &Rel) -> Result<Rel, ModelError> {
        self.check_same(o)?;
        let rows = self.rows.intersection(&o.rows).copied().collect();
        Ok(Rel { u: self.u.clone(), alpha: self.alpha, rows })
    }

    pub fn disj(&self, o: &Rel) -> Result<Rel, ModelError> {
        self.check_same(o)?;
        let rows = self.rows.union(&o.rows).copied().collect();
        Ok(Rel { u: self.u.clone(), alpha: self.alpha, rows })
    }

    pub fn neg(&self) -> Rel {
        let rows = all_bindings(&self.u, self.alpha)
            .into_iter()
            .filter(|b| !self.rows.contains(b))
            .collect();
        Rel { u: self.u.clone(), alpha: self.alpha, rows }
    }

    pub fn implies(&self, o: &Rel) -> Result<Rel, ModelError> {
        self.check_same(o)?;
        Ok(self.neg().disj(o).expect("same alphabet"))
    }

    /// Projection-then-cylindrification over `vars`: a binding is in the
    /// result iff some reassignment of `vars` puts it in the relation.
    pub fn exists(&self, vars: &[Var]) -> Result<Rel, ModelError> {
        for v in vars {
            if !self.alpha.contains(*v) {
                return Err(ModelError::VarNotInAlphabet(v.name(), self.alpha));
            }
        }
        let shrunk = self.alpha.iter().fold(Alpha::EMPTY, |a, v| {
            if vars.contains(&v) {
                a
            } else {
                a.with(v)
            }
        });
        let reps: BTreeSet<Binding> = self.rows.iter().map(|b| b.canon(shrunk)).collect();
        let mut rows = BTreeSet::new();
        for rep in reps {
            let mut expand = vec![rep];
            for v in vars {
                let dom = var_domain(&self.u, *v);
                let mut next = Vec::with_capacity(expand.len() * dom.len());
                for b in &expand {
                    for val in &dom {
                        let mut b2 = *b;
                        b2.set(*v, *val);
                        next.push(b2);
                    }
                }
                expand = next;
            }
            rows.extend(expand);
        }
        Ok(Rel { u: self.u.clone(), alpha: self.alpha, rows })
    }

    /// Substitute a Boolean constant for a flag variable:
    /// b ∈ result iff b[var := val] ∈ self.
    pub fn subst_flag(&self, var: Var, val: bool) -> Result<Rel, ModelError> {
        if !self.alpha.contains(var) {
            return Err(ModelError::VarNotInAlphabet(var.name(), self.alpha));
        }
        let mut rows = BTreeSet::new();
        for b in &self.rows {
            if b.get(var) == VarVal::B(val) {
                for choice in [false, true] {
                    let mut b2 = *b;
                    b2.set(var, VarVal::B(choice));
                    rows.insert(b2);
                }
            }
        }
        Ok(Rel { u: self.u.clone(), alpha: self.alpha, rows })
    }

    /// Substitute one variable's value for another of the same kind:
    /// b ∈ result iff b[target := b[source]] ∈ self.
    pub fn subst_copy(&self, target: Var, source: Var) -> Result<Rel, ModelError> {
        for v in [target, source] {
            if !self.alpha.contains(v) {
                return Err(ModelError::VarNotInAlphabet(v.name(), self.alpha));
            }
        }
        let dom = var_domain(&self.u, target);
        let mut rows = BTreeSet::new();
        for b in &self.rows {
            if b.get(target) == b.get(source) {
                for val in &dom {
                    let mut b2 = *b;
                    b2.set(target, *val);
                    rows.insert(b2);
                }
            }
        }
        Ok(Rel { u: self.u.clone(), alpha: self.alpha, rows })
    }

    /// Relational composition. The alphabet must be homogeneous; the
    /// intermediate ranges over every primed/unprimed pair. `ref'` has no
    /// unprimed partner, so it is not composed over: both factors are read
    /// at the result row's `ref'` (a shared final observation).
    pub fn seq_compose(&self, o: &Rel) -> Result<Rel, ModelError> {
        self.check_same(o)?;
        if !self.alpha.is_homogeneous() {
            return Err(ModelError::NotHomogeneous(self.alpha));
        }
        let pairs: Vec<(Var, Var)> = [
            (Var::Ok, Var::OkP),
            (Var::Wait, Var::WaitP),
            (Var::Tr, Var::TrP),
            (Var::St, Var::StP),
        ]
        .into_iter()
        .filter(|(v, _)| self.alpha.contains(*v))
        .collect();
        let has_ref = self.alpha.contains(Var::RefP);

        // key: intermediate values as seen from Q's unprimed side (+ shared ref')
        let key_of_q = |b: &Binding| {
            let mut k = Vec::with_capacity(pairs.len() + 1);
            for (v, _) in &pairs {
                k.push(b.get(*v));
            }
            if has_ref {
                k.push(b.get(Var::RefP));
            }
            k
        };
        let key_of_p = |b: &Binding| {
            let mut k = Vec::with_capacity(pairs.len() + 1);
            for (_, vp) in &pairs {
                k.push(b.get(*vp));
            }
            if has_ref {
                k.push(b.get(Var::RefP));
            }
            k
        };
        let mut index: HashMap<Vec<VarVal>, Vec<&Binding>> = HashMap::new();
        for q in &o.rows {
            index.entry(key_of_q(q)).or_default().push(q);
        }
        let mut rows = BTreeSet::new();
        for p in &self.rows {
            if let Some(qs) = index.get(&key_of_p(p)) {
                for q in qs {
                    let mut b = *p;
                    for (_, vp) in &pairs {
                        b.set(*vp, q.get(*vp));
                    }
                    rows.insert(b);
                }
            }
        }
        Ok(Rel { u: self.u.clone(), alpha: self.alpha, rows })
    }

    /// (b ∧ P) ∨ (¬b ∧ Q); the guard ranges over unprimed variables only.
    pub fn cond(&self, b: &Rel, o: &Rel) -> Result<Rel, ModelError> {
        self.check_same(o)?;
        if !Arc::ptr_eq(&self.u, &b.u) {
            return Err(ModelError::UniverseMismatch);
        }
        if !b.alpha.unprimed_only() || !b.alpha.is_subset(self.alpha) {
            return Err(ModelError::BadCondition(b.alpha));
        }
        let mut rows = BTreeSet::new();
        for r in &self.rows {
            if b.rows.contains(&r.canon(b.alpha)) {
                rows.insert(*r);
            }
        }
        for r in &o.rows {
            if !b.rows.contains(&r.canon(b.alpha)) {
                rows.insert(*r);
            }
        }
        Ok(Rel { u: self.u.clone(), alpha: self.alpha, rows })
    }

    /// P ⊑ Q iff every observation of Q is one of P.
    pub fn refines(&self, o: &Rel, max_counterexamples: usize) -> Result<Refinement, ModelError> {
        self.check_same(o)?;
        let mut counterexamples = Vec::new();
        let mut total = 0usize;
        for q in &o.rows {
            if !self.rows.contains(q) {
                total += 1;
                if counterexamples.len() < max_counterexamples {
                    counterexamples.push(*q);
                }
            }
        }
        Ok(Refinement { holds: total == 0, counterexamples, total_violations: total })
    }
}

/// Indexed nondeterministic choice: set union. The family must be non-empty.
pub fn inf_indexed(family: &[Rel]) -> Result<Rel, ModelError> {
    let (first, rest) = family.split_first().ok_or(ModelError::EmptyFamily)?;
    let mut acc = first.clone();
    for r in rest {
        acc = acc.disj(r)?;
    }
    Ok(acc)
}

/// Indexed conjunction: set intersection. The family must be non-empty.
pub fn sup_indexed(family: &[Rel]) -> Result<Rel, ModelError> {
    let (first, rest) = family.split_first().ok_or(ModelError::EmptyFamily)?;
    let mut acc = first.clone();
    for r in rest {
        acc = acc.conj(r)?;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug)]
pub struct FixOpts {
    /// Number of sampled ⊑-pairs used to check monotonicity of F.
    pub monotone_samples: usize,
    pub seed: u64,
}

impl Default for FixOpts {
    fn default() -> Self {
        FixOpts { monotone_samples: 8, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct FixResult {
    pub rel: Rel,
    /// Number of applications of F until stabilisation.
    pub steps: usize,
}

fn check_monotone<F: Fn(&Rel) -> Rel>(
    u: &Arc<Universe>,
    alpha: Alpha,
    f: &F,
    opts: FixOpts,
) -> Result<(), ModelError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let space = all_bindings(u, alpha);
    for _ in 0..opts.monotone_samples {
        // X ⊑ Y built as Y ⊆ X row-wise
        let x_rows: BTreeSet<Binding> =
            space.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let y_rows: BTreeSet<Binding> =
            x_rows.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let x = Rel::new(u.clone(), alpha, x_rows);
        let y = Rel::new(u.clone(), alpha, y_rows);
        let fx = f(&x);
        let fy = f(&y);
        if !fy.rows.is_subset(&fx.rows) {
            return Err(ModelError::NotMonotone);
        }
    }
    Ok(())
}

/// Least fixed point w.r.t. ⊑: iterate F from the lattice bottom (the
/// universal relation) to stability. Monotonicity is checked by sampling.
pub fn mu<F: Fn(&Rel) -> Rel>(
    u: &Arc<Universe>,
    alpha: Alpha,
    f: F,
    opts: FixOpts,
) -> Result<FixResult, ModelError> {
    check_monotone(u, alpha, &f, opts)?;
    let mut x = Rel::bottom(u.clone(), alpha);
    let mut steps = 0;
    loop {
        let next = f(&x);
        steps += 1;
        if next == x {
            return Ok(FixResult { rel: x, steps });
        }
        x = next;
    }
}

/// Greatest fixed point w.r.t. ⊑: iterate F from the lattice top (the empty
/// relation) to stability.
pub fn nu<F: Fn(&Rel) -> Rel>(
    u: &Arc<Universe>,
    alpha: Alpha,
    f: F,
    opts: FixOpts,
) -> Result<FixResult, ModelError> {
    check_monotone(u, alpha, &f, opts)?;
    let mut x = Rel::top(u.clone(), alpha);
    let mut steps = 0;
    loop {
        let next = f(&x);
        steps += 1;
        if next == x {
            return Ok(FixResult { rel: x, steps });
        }
        x = next;
    }
}

/// State expressions over unprimed state variables, used for assignment
/// right-hand sides and guards. Evaluation returns `None` exactly when a
/// partial-map application misses (the enclosing atom is then false, or the
/// enclosing assignment row is excluded).
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum StateExpr {
    Int(i64),
    Bool(bool),
    Var(String),
    /// m(k)
    MapApp(String, Box<StateExpr>),
    /// m with key k updated to v
    MapUpd(String, Box<StateExpr>, Box<StateExpr>),
    /// literal finite map; the empty literal resets a map variable
    MapLit(Vec<(i64, i64)>),
    /// sum of the values present in map m
    Sum(String),
    Add(Box<StateExpr>, Box<StateExpr>),
    SubOp(Box<StateExpr>, Box<StateExpr>),
    Cmp(CmpOp, Box<StateExpr>, Box<StateExpr>),
    InDom(Box<StateExpr>, String),
    Not(Box<StateExpr>),
    And(Box<StateExpr>, Box<StateExpr>),
    Or(Box<StateExpr>, Box<StateExpr>),
    Implies(Box<StateExpr>, Box<StateExpr>),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl StateExpr {
    /// Evaluate against a state, with an optional table of bound constants
    /// (input-prefix variables). `None` means undefined.
    pub fn eval(&self, u: &Universe, s: &State, consts: &HashMap<String, i64>) -> Option<Value> {
        match self {
            StateExpr::Int(n) => Some(Value::Int(*n)),
            StateExpr::Bool(b) => Some(Value::Bool(*b)),
            StateExpr::Var(n) => {
                if let Some(v) = consts.get(n) {
                    return Some(Value::Int(*v));
                }
                let i = u.var_position(n)?;
                Some(s.0[i].clone())
            }
            StateExpr::MapApp(m, k) => {
                let i = u.var_position(m)?;
                let Value::Map(map) = &s.0[i] else { return None };
                let Value::Int(k) = k.eval(u, s, consts)? else { return None };
                map.get(&k).map(|v| Value::Int(*v))
            }
            StateExpr::MapUpd(m, k, v) => {
                let i = u.var_position(m)?;
                let Value::Map(map) = &s.0[i] else { return None };
                let Value::Int(k) = k.eval(u, s, consts)? else { return None };
                let Value::Int(v) = v.eval(u, s, consts)? else { return None };
                let mut map = map.clone();
                map.insert(k, v);
                Some(Value::Map(map))
            }
            StateExpr::MapLit(entries) => {
                Some(Value::Map(entries.iter().copied().collect()))
            }
            StateExpr::Sum(m) => {
                let i = u.var_position(m)?;
                let Value::Map(map) = &s.0[i] else { return None };
                Some(Value::Int(map.values().sum()))
            }
            StateExpr::Add(a, b) => {
                let (Value::Int(a), Value::Int(b)) =
                    (a.eval(u, s, consts)?, b.eval(u, s, consts)?)
                else {
                    return None;
                };
                Some(Value::Int(a + b))
            }
            StateExpr::SubOp(a, b) => {
                let (Value::Int(a), Value::Int(b)) =
                    (a.eval(u, s, consts)?, b.eval(u, s, consts)?)
                else {
                    return None;
                };
                Some(Value::Int(a - b))
            }
            StateExpr::Cmp(op, a, b) => {
                // undefined operand makes the atom false, not undefined
                let av = a.eval(u, s, consts);
                let bv = b.eval(u, s, consts);
                let r = match (av, bv) {
                    (Some(Value::Int(a)), Some(Value::Int(b))) => match op {
                        CmpOp::Eq => a == b,
                        CmpOp::Ne => a != b,
                        CmpOp::Lt => a < b,
                        CmpOp::Le => a <= b,
                        CmpOp::Gt => a > b,
                        CmpOp::Ge => a >= b,
                    },
                    (Some(Value::Bool(a)), Some(Value::Bool(b))) => match op {
                        CmpOp::Eq => a == b,
                        CmpOp::Ne => a != b,
                        _ => false,
                    },
                    _ => false,
                };
                Some(Value::Bool(r))
            }
            StateExpr::InDom(k, m) => {
                let r = (|| {
                    let i = u.var_position(m)?;
                    let Value::Map(map) = &s.0[i] else { return None };
                    let Value::Int(k) = k.eval(u, s, consts)? else { return None };
                    Some(map.contains_key(&k))
                })();
                Some(Value::Bool(r.unwrap_or(false)))
            }
            StateExpr::Not(a) => {
                let Value::Bool(a) = a.eval(u, s, consts)? else { return None };
                Some(Value::Bool(!a))
            }
            StateExpr::And(a, b) => {
                let (Value::Bool(a), Value::Bool(b)) =
                    (a.eval(u, s, consts)?, b.eval(u, s, consts)?)
                else {
                    return None;
                };
                Some(Value::Bool(a && b))
            }
            StateExpr::Or(a, b) => {
                let (Value::Bool(a), Value::Bool(b)) =
                    (a.eval(u, s, consts)?, b.eval(u, s, consts)?)
                else {
                    return None;
                };
                Some(Value::Bool(a || b))
            }
            StateExpr::Implies(a, b) => {
                let (Value::Bool(a), Value::Bool(b)) =
                    (a.eval(u, s, consts)?, b.eval(u, s, consts)?)
                else {
                    return None;
                };
                Some(Value::Bool(!a || b))
            }
        }
    }

    /// Evaluate as a guard; undefined or non-Boolean counts as false.
    pub fn eval_bool(&self, u: &Universe, s: &State, consts: &HashMap<String, i64>) -> bool {
        matches!(self.eval(u, s, consts), Some(Value::Bool(true)))
    }
}

/// Apply a substitution to a state; `None` if any right-hand side is
/// undefined there.
pub fn apply_subst(
    u: &Universe,
    sigma: &[(String, StateExpr)],
    st: StateId,
    consts: &HashMap<String, i64>,
) -> Option<StateId> {
    let s = u.state(st);
    let mut out = s.0.clone();
    for (name, e) in sigma {
        let i = u.var_position(name)?;
        let v = e.eval(u, s, consts)?;
        out[i] = v;
    }
    u.state_id(&State(out))
}

/// Relational assignment over a homogeneous alphabet containing st/st':
/// primed state = σ(unprimed state), every other paired variable identified,
/// `ref'` (having no partner) unconstrained. Bindings where σ is undefined
/// are excluded.
pub fn assign(u: &Arc<Universe>, sigma: &[(String, StateExpr)], alpha: Alpha) -> Rel {
    assert!(alpha.contains(Var::St) && alpha.contains(Var::StP) && alpha.is_homogeneous());
    let consts = HashMap::new();
    let mut rows = BTreeSet::new();
    let mut base = Vec::new();
    for sid in 0..u.n_states() {
        let st = StateId(sid as u32);
        if let Some(stp) = apply_subst(u, sigma, st, &consts) {
            let mut b = Binding::default();
            b.st = st;
            b.stp = stp;
            base.push(b);
        }
    }
    // cylindrify over the remaining paired variables (identified) and ref'
    for b0 in base {
        let mut expand = vec![b0];
        for (v, vp) in [(Var::Ok, Var::OkP), (Var::Wait, Var::WaitP), (Var::Tr, Var::TrP)] {
            if alpha.contains(v) {
                let dom = var_domain(u, v);
                let mut next = Vec::with_capacity(expand.len() * dom.len());
                for b in &expand {
                    for val in &dom {
                        let mut b2 = *b;
                        b2.set(v, *val);
                        b2.set(vp, *val);
                        next.push(b2);
                    }
                }
                expand = next;
            }
        }
        if alpha.contains(Var::RefP) {
            let mut next = Vec::new();
            for b in &expand {
                for r in 0..=u.full_refusal() {
                    let mut b2 = *b;
                    b2.refp = r;
                    next.push(b2);
                }
            }
            expand = next;
        }
        rows.extend(expand);
    }
    Rel::new(u.clone(), alpha, rows)
}

/// The identity relation over a homogeneous alphabet: every paired variable
/// identified; `ref'` unconstrained if present.
pub fn skip(u: &Arc<Universe>, alpha: Alpha) -> Rel {
    assert!(alpha.is_homogeneous());
    let mut expand = vec![Binding::default()];
    for (v, vp) in [
        (Var::Ok, Var::OkP),
        (Var::Wait, Var::WaitP),
        (Var::Tr, Var::TrP),
        (Var::St, Var::StP),
    ] {
        if alpha.contains(v) {
            let dom = var_domain(u, v);
            let mut next = Vec::with_capacity(expand.len() * dom.len());
            for b in &expand {
                for val in &dom {
                    let mut b2 = *b;
                    b2.set(v, *val);
                    b2.set(vp, *val);
                    next.push(b2);
                }
            }
            expand = next;
        }
    }
    if alpha.contains(Var::RefP) {
        let mut next = Vec::new();
        for b in &expand {
            for r in 0..=u.full_refusal() {
                let mut b2 = *b;
                b2.refp = r;
                next.push(b2);
            }
        }
        expand = next;
    }
    Rel::from_rows(u.clone(), alpha, expand)
}

/// A condition on unprimed state: rows are exactly the states satisfying `p`.
pub fn state_set(u: &Arc<Universe>, p: impl Fn(&State) -> bool) -> Rel {
    let alpha = Alpha::of(&[Var::St]);
    let rows = (0..u.n_states())
        .filter(|&i| p(u.state(StateId(i as u32))))
        .map(|i| {
            let mut b = Binding::default();
            b.st = StateId(i as u32);
            b
        })
        .collect();
    Rel::new(u.clone(), alpha, rows)
}

/// Sample a relation uniformly: each binding is present with probability 1/2.
pub fn random_rel<R: Rng>(u: &Arc<Universe>, alpha: Alpha, rng: &mut R) -> Rel {
    let rows = all_bindings(u, alpha).into_iter().filter(|_| rng.gen_bool(0.5)).collect();
    Rel { u: u.clone(), alpha, rows }
}
