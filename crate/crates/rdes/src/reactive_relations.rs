//! Reactive relations in trace-contribution form: rows (st, tt, st', ref')
//! where tt is the trace contributed by the observation. Trace extension and
//! history-independence are representation invariants here, so a contribution
//! relation expands to an RR-healthy full relation and back without loss.
//!
//! Rows are bit-packed into u64 and kept sorted, which keeps the big
//! composed systems (millions of rows) cheap to intersect and search.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::healthiness;
use crate::model::{
    Alpha, Binding, RefMask, Rel, State, StateExpr, StateId, TraceId, Universe, EMPTY_TRACE,
};

/// Subset of the contribution alphabet {st, tt, st', ref'}.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RrAlpha(u8);

impl RrAlpha {
    pub const ST: RrAlpha = RrAlpha(1);
    pub const TT: RrAlpha = RrAlpha(2);
    pub const STP: RrAlpha = RrAlpha(4);
    pub const REFP: RrAlpha = RrAlpha(8);
    /// Conditions: initial state and contributed trace.
    pub const CONDITION: RrAlpha = RrAlpha(1 | 2);
    /// Periconditions: intermediate observations with refusals.
    pub const PERI: RrAlpha = RrAlpha(1 | 2 | 8);
    /// Postconditions and general reactive relations.
    pub const POST: RrAlpha = RrAlpha(1 | 2 | 4 | 8);

    pub fn contains(self, o: RrAlpha) -> bool {
        self.0 & o.0 == o.0
    }
    pub fn union(self, o: RrAlpha) -> RrAlpha {
        RrAlpha(self.0 | o.0)
    }
    pub fn minus(self, o: RrAlpha) -> RrAlpha {
        RrAlpha(self.0 & !o.0)
    }
}

impl std::fmt::Display for RrAlpha {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if self.contains(RrAlpha::ST) {
            parts.push("st");
        }
        if self.contains(RrAlpha::TT) {
            parts.push("tt");
        }
        if self.contains(RrAlpha::STP) {
            parts.push("st'");
        }
        if self.contains(RrAlpha::REFP) {
            parts.push("ref'");
        }
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// One contribution row; fields outside the alphabet stay at defaults.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct RrRow {
    pub st: StateId,
    pub tt: TraceId,
    pub stp: StateId,
    pub refp: RefMask,
}

impl RrRow {
    pub fn canon(mut self, alpha: RrAlpha) -> RrRow {
        if !alpha.contains(RrAlpha::ST) {
            self.st = StateId(0);
        }
        if !alpha.contains(RrAlpha::TT) {
            self.tt = EMPTY_TRACE;
        }
        if !alpha.contains(RrAlpha::STP) {
            self.stp = StateId(0);
        }
        if !alpha.contains(RrAlpha::REFP) {
            self.refp = 0;
        }
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RrError {
    #[error("contribution alphabet mismatch: {0} vs {1}")]
    AlphabetMismatch(RrAlpha, RrAlpha),
    #[error("relations belong to different universes")]
    UniverseMismatch,
    #[error("relation is not RR-healthy")]
    NotRRHealthy,
    #[error("weakest precondition needs a prefix-closed condition")]
    NotRC,
    #[error("empty family")]
    EmptyFamily,
    #[error("contribution rows need {0} bits, more than the 64 supported")]
    PackTooWide(u32),
}

#[derive(Clone, Copy, Debug)]
struct Pack {
    st_bits: u32,
    tt_bits: u32,
    ref_bits: u32,
}

fn bits_for(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

impl Pack {
    fn new(u: &Universe) -> Result<Pack, RrError> {
        let p = Pack {
            st_bits: bits_for(u.n_states()),
            tt_bits: bits_for(u.n_traces()),
            ref_bits: u.n_events() as u32,
        };
        let total = 2 * p.st_bits + p.tt_bits + p.ref_bits;
        if total > 64 {
            return Err(RrError::PackTooWide(total));
        }
        Ok(p)
    }
    fn pack(&self, r: RrRow) -> u64 {
        let mut w = r.st.0 as u64;
        w = (w << self.tt_bits) | r.tt.0 as u64;
        w = (w << self.st_bits) | r.stp.0 as u64;
        (w << self.ref_bits) | r.refp as u64
    }
    fn unpack(&self, mut w: u64) -> RrRow {
        let mask = |bits: u32| if bits == 0 { 0 } else { (1u64 << bits) - 1 };
        let refp = (w & mask(self.ref_bits)) as RefMask;
        w >>= self.ref_bits;
        let stp = StateId((w & mask(self.st_bits)) as u32);
        w >>= self.st_bits;
        let tt = TraceId((w & mask(self.tt_bits)) as u32);
        w >>= self.tt_bits;
        RrRow { st: StateId(w as u32), tt, stp, refp }
    }
}

/// Whether contribution rows for this universe fit the packed representation.
pub fn pack_fits(u: &Universe) -> bool {
    Pack::new(u).is_ok()
}

#[derive(Clone)]
pub struct RrRel {
    u: Arc<Universe>,
    alpha: RrAlpha,
    pack: Pack,
    rows: Vec<u64>,
}

impl PartialEq for RrRel {
    fn eq(&self, o: &RrRel) -> bool {
        Arc::ptr_eq(&self.u, &o.u) && self.alpha == o.alpha && self.rows == o.rows
    }
}
impl Eq for RrRel {}

impl std::fmt::Debug for RrRel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RrRel[{} rows over {}]", self.rows.len(), self.alpha)
    }
}

impl RrRel {
    pub fn new(u: Arc<Universe>, alpha: RrAlpha, rows: impl IntoIterator<Item = RrRow>) -> RrRel {
        let pack = Pack::new(&u).expect("universe fits packed rows");
        let mut v: Vec<u64> = rows.into_iter().map(|r| pack.pack(r.canon(alpha))).collect();
        v.sort_unstable();
        v.dedup();
        RrRel { u, alpha, pack, rows: v }
    }

    pub fn empty(u: Arc<Universe>, alpha: RrAlpha) -> RrRel {
        RrRel::new(u, alpha, std::iter::empty())
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.u
    }
    pub fn alpha(&self) -> RrAlpha {
        self.alpha
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
    pub fn iter(&self) -> impl Iterator<Item = RrRow> + '_ {
        self.rows.iter().map(|&w| self.pack.unpack(w))
    }
    pub fn contains(&self, r: RrRow) -> bool {
        self.rows.binary_search(&self.pack.pack(r.canon(self.alpha))).is_ok()
    }

    fn check_same(&self, o: &RrRel) -> Result<(), RrError> {
        if !Arc::ptr_eq(&self.u, &o.u) {
            return Err(RrError::UniverseMismatch);
        }
        if self.alpha != o.alpha {
            return Err(RrError::AlphabetMismatch(self.alpha, o.alpha));
        }
        Ok(())
    }

    pub fn conj(&self, o: &RrRel) -> Result<RrRel, RrError> {
        self.check_same(o)?;
        let rows = intersect_sorted(&self.rows, &o.rows);
        Ok(RrRel { u: self.u.clone(), alpha: self.alpha, pack: self.pack, rows })
    }

    pub fn disj(&self, o: &RrRel) -> Result<RrRel, RrError> {
        self.check_same(o)?;
        let rows = union_sorted(&self.rows, &o.rows);
        Ok(RrRel { u: self.u.clone(), alpha: self.alpha, pack: self.pack, rows })
    }

    /// Complement within the contribution universe. Complementation here is
    /// automatically trace-extending, so this is reactive negation.
    pub fn neg_r(&self) -> RrRel {
        let all = all_rows(&self.u, self.alpha);
        let rows = all
            .into_iter()
            .map(|r| self.pack.pack(r))
            .filter(|w| self.rows.binary_search(w).is_err())
            .collect();
        RrRel { u: self.u.clone(), alpha: self.alpha, pack: self.pack, rows }
    }

    pub fn implies_r(&self, o: &RrRel) -> Result<RrRel, RrError> {
        self.check_same(o)?;
        self.neg_r().disj(o)
    }

    pub fn is_subset(&self, o: &RrRel) -> Result<bool, RrError> {
        self.check_same(o)?;
        Ok(self.rows.iter().all(|w| o.rows.binary_search(w).is_ok()))
    }

    /// Rows whose (st, tt) part satisfies the condition.
    pub fn restrict_by_cond(&self, c: &RrRel) -> Result<RrRel, RrError> {
        if !Arc::ptr_eq(&self.u, &c.u) {
            return Err(RrError::UniverseMismatch);
        }
        if c.alpha != RrAlpha::CONDITION {
            return Err(RrError::AlphabetMismatch(c.alpha, RrAlpha::CONDITION));
        }
        let rows = self
            .rows
            .iter()
            .copied()
            .filter(|&w| {
                let r = self.pack.unpack(w);
                c.contains(RrRow { st: r.st, tt: r.tt, ..RrRow::default() })
            })
            .collect();
        Ok(RrRel { u: self.u.clone(), alpha: self.alpha, pack: self.pack, rows })
    }

    /// Existential projection: drop the given fields.
    pub fn project_out(&self, drop: RrAlpha) -> RrRel {
        let alpha = self.alpha.minus(drop);
        let mut rows: Vec<u64> =
            self.iter().map(|r| self.pack.pack(r.canon(alpha))).collect();
        rows.sort_unstable();
        rows.dedup();
        RrRel { u: self.u.clone(), alpha, pack: self.pack, rows }
    }

    /// Cylindrify up to a larger alphabet.
    pub fn lift(&self, to: RrAlpha) -> RrRel {
        assert!(to.contains(self.alpha));
        let add = to.minus(self.alpha);
        let mut out: Vec<RrRow> = self.iter().collect();
        if add.contains(RrAlpha::ST) {
            out = expand_states(&self.u, out, |r, s| RrRow { st: s, ..r });
        }
        if add.contains(RrAlpha::TT) {
            let mut next = Vec::new();
            for r in out {
                for t in 0..self.u.n_traces() {
                    next.push(RrRow { tt: TraceId(t as u32), ..r });
                }
            }
            out = next;
        }
        if add.contains(RrAlpha::STP) {
            out = expand_states(&self.u, out, |r, s| RrRow { stp: s, ..r });
        }
        if add.contains(RrAlpha::REFP) {
            let mut next = Vec::new();
            for r in out {
                for m in 0..=self.u.full_refusal() {
                    next.push(RrRow { refp: m, ..r });
                }
            }
            out = next;
        }
        RrRel::new(self.u.clone(), to, out)
    }
}

fn expand_states(
    u: &Arc<Universe>,
    rows: Vec<RrRow>,
    set: impl Fn(RrRow, StateId) -> RrRow,
) -> Vec<RrRow> {
    let mut next = Vec::with_capacity(rows.len() * u.n_states());
    for r in rows {
        for s in 0..u.n_states() {
            next.push(set(r, StateId(s as u32)));
        }
    }
    next
}

fn intersect_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let (small, big) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().copied().filter(|w| big.binary_search(w).is_ok()).collect()
}

fn union_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Every canonical row of an alphabet.
pub fn all_rows(u: &Arc<Universe>, alpha: RrAlpha) -> Vec<RrRow> {
    let mut out = vec![RrRow::default()];
    if alpha.contains(RrAlpha::ST) {
        out = expand_states(u, out, |r, s| RrRow { st: s, ..r });
    }
    if alpha.contains(RrAlpha::TT) {
        let mut next = Vec::new();
        for r in out {
            for t in 0..u.n_traces() {
                next.push(RrRow { tt: TraceId(t as u32), ..r });
            }
        }
        out = next;
    }
    if alpha.contains(RrAlpha::STP) {
        out = expand_states(u, out, |r, s| RrRow { stp: s, ..r });
    }
    if alpha.contains(RrAlpha::REFP) {
        let mut next = Vec::new();
        for r in out {
            for m in 0..=u.full_refusal() {
                next.push(RrRow { refp: m, ..r });
            }
        }
        out = next;
    }
    out
}

/// All rows over the alphabet: the reactive `true`.
pub fn rr_true(u: &Arc<Universe>, alpha: RrAlpha) -> RrRel {
    RrRel::new(u.clone(), alpha, all_rows(u, alpha))
}

/// Non-empty indexed disjunction.
pub fn rr_inf(family: &[RrRel]) -> Result<RrRel, RrError> {
    let (first, rest) = family.split_first().ok_or(RrError::EmptyFamily)?;
    let mut acc = first.clone();
    for r in rest {
        acc = acc.disj(r)?;
    }
    Ok(acc)
}

/// Sequential composition of full-contribution relations: traces concatenate,
/// states chain through st'. The first factor's ref' is an intermediate
/// refusal and is dropped; the result keeps the second factor's. Compositions
/// whose trace would exceed the bound are dropped and counted as truncations.
pub fn rr_seq(p: &RrRel, q: &RrRel) -> Result<RrRel, RrError> {
    if p.alpha != RrAlpha::POST || q.alpha != RrAlpha::POST {
        return Err(RrError::AlphabetMismatch(p.alpha, RrAlpha::POST));
    }
    seq_general(p, q)
}

/// Composition where the first factor is a postcondition-shaped relation or a
/// condition (then the intermediate state is unconstrained), and the second
/// factor has any alphabet containing st and tt. The result takes the second
/// factor's alphabet.
pub fn seq_general(p: &RrRel, q: &RrRel) -> Result<RrRel, RrError> {
    if !Arc::ptr_eq(&p.u, &q.u) {
        return Err(RrError::UniverseMismatch);
    }
    if !(p.alpha == RrAlpha::POST || p.alpha == RrAlpha::CONDITION)
        || !q.alpha.contains(RrAlpha::CONDITION)
    {
        return Err(RrError::AlphabetMismatch(p.alpha, q.alpha));
    }
    let u = &p.u;
    // distinct (st, t1, st') triples of the first factor
    let first: BTreeSet<(StateId, TraceId, Option<StateId>)> = p
        .iter()
        .map(|r| {
            if p.alpha.contains(RrAlpha::STP) {
                (r.st, r.tt, Some(r.stp))
            } else {
                (r.st, r.tt, None)
            }
        })
        .collect();
    // second factor grouped by initial state
    let mut by_state: HashMap<StateId, Vec<RrRow>> = HashMap::new();
    for r in q.iter() {
        by_state.entry(r.st).or_default().push(r);
    }
    let all_states: Vec<StateId> = (0..u.n_states()).map(|i| StateId(i as u32)).collect();
    let mut out: Vec<u64> = Vec::new();
    for (st, t1, mid) in first {
        let mids: &[StateId] = match &mid {
            Some(s) => std::slice::from_ref(s),
            None => &all_states,
        };
        for m in mids {
            if let Some(qs) = by_state.get(m) {
                for qr in qs {
                    if let Some(t) = u.trace_concat_counting(t1, qr.tt) {
                        out.push(q.pack.pack(RrRow { st, tt: t, stp: qr.stp, refp: qr.refp }));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(RrRel { u: u.clone(), alpha: q.alpha, pack: q.pack, rows: out })
}

/// Conditional on a set of initial states: rows of `p` inside, of `q` outside.
pub fn rr_cond(p: &RrRel, b: &BTreeSet<StateId>, q: &RrRel) -> Result<RrRel, RrError> {
    p.check_same(q)?;
    let rows = p
        .rows
        .iter()
        .copied()
        .filter(|&w| b.contains(&p.pack.unpack(w).st))
        .chain(q.rows.iter().copied().filter(|&w| !b.contains(&q.pack.unpack(w).st)))
        .collect::<BTreeSet<u64>>()
        .into_iter()
        .collect();
    Ok(RrRel { u: p.u.clone(), alpha: p.alpha, pack: p.pack, rows })
}

/// Display for a contribution row under an alphabet, e.g.
/// `{st={x=0}, tt=⟨a⟩, st'={x=1}, ref'={a,b}}`.
pub fn row_display(u: &Universe, alpha: RrAlpha, r: RrRow) -> String {
    let mut parts = Vec::new();
    if alpha.contains(RrAlpha::ST) {
        parts.push(format!("st={}", crate::model::state_display(u, r.st)));
    }
    if alpha.contains(RrAlpha::TT) {
        parts.push(format!("tt={}", crate::model::trace_display(u, r.tt)));
    }
    if alpha.contains(RrAlpha::STP) {
        parts.push(format!("st'={}", crate::model::state_display(u, r.stp)));
    }
    if alpha.contains(RrAlpha::REFP) {
        parts.push(format!("ref'={}", crate::model::refusal_display(u, r.refp)));
    }
    format!("{{{}}}", parts.join(", "))
}

/// States satisfying a predicate.
pub fn states_where(u: &Universe, pred: impl Fn(&State) -> bool) -> BTreeSet<StateId> {
    (0..u.n_states())
        .map(|i| StateId(i as u32))
        .filter(|&s| pred(u.state(s)))
        .collect()
}

/// Relational assignment contribution: empty trace, final state given by the
/// substitution, refusals unconstrained. States where the substitution is
/// undefined contribute no rows.
pub fn assigns_r(u: &Arc<Universe>, sigma: &[(String, StateExpr)]) -> RrRel {
    assigns_r_with(u, sigma, &HashMap::new())
}

pub fn assigns_r_with(
    u: &Arc<Universe>,
    sigma: &[(String, StateExpr)],
    consts: &HashMap<String, i64>,
) -> RrRel {
    let mut rows = Vec::new();
    for i in 0..u.n_states() {
        let st = StateId(i as u32);
        if let Some(stp) = crate::model::apply_subst(u, sigma, st, consts) {
            for m in 0..=u.full_refusal() {
                rows.push(RrRow { st, tt: EMPTY_TRACE, stp, refp: m });
            }
        }
    }
    RrRel::new(u.clone(), RrAlpha::POST, rows)
}

/// The contribution identity: empty trace, state unchanged.
pub fn ii_r(u: &Arc<Universe>) -> RrRel {
    assigns_r(u, &[])
}

/// A condition holding exactly on the given initial states, any trace.
pub fn state_cond(u: &Arc<Universe>, pred: impl Fn(&State) -> bool) -> RrRel {
    let sts = states_where(u, pred);
    let mut rows = Vec::new();
    for st in sts {
        for t in 0..u.n_traces() {
            rows.push(RrRow { st, tt: TraceId(t as u32), ..RrRow::default() });
        }
    }
    RrRel::new(u.clone(), RrAlpha::CONDITION, rows)
}

/// Apply a state substitution to a condition: (st, t) holds iff (σ(st), t)
/// does.
pub fn subst_cond(
    u: &Arc<Universe>,
    sigma: &[(String, StateExpr)],
    r: &RrRel,
) -> Result<RrRel, RrError> {
    if r.alpha != RrAlpha::CONDITION {
        return Err(RrError::AlphabetMismatch(r.alpha, RrAlpha::CONDITION));
    }
    Ok(subst_init(u, sigma, r))
}

/// Initial-state substitution on any contribution alphabet: a row at st
/// holds iff the same row at σ(st) does. States where σ is undefined keep no
/// rows.
pub fn subst_init(u: &Arc<Universe>, sigma: &[(String, StateExpr)], r: &RrRel) -> RrRel {
    let consts = HashMap::new();
    let mut preimages: HashMap<StateId, Vec<StateId>> = HashMap::new();
    for i in 0..u.n_states() {
        let st = StateId(i as u32);
        if let Some(img) = crate::model::apply_subst(u, sigma, st, &consts) {
            preimages.entry(img).or_default().push(st);
        }
    }
    let mut rows = Vec::new();
    for row in r.iter() {
        if let Some(sts) = preimages.get(&row.st) {
            for &st in sts {
                rows.push(RrRow { st, ..row });
            }
        }
    }
    RrRel::new(u.clone(), r.alpha, rows)
}

#[derive(Clone, Copy, Debug)]
pub struct RcReport {
    /// Every prefix of a row's trace is also a row.
    pub prefix_closed: bool,
    /// The complement admits every in-bound extension of its traces.
    pub complement_extension_closed: bool,
}

impl RcReport {
    /// The two characterisations always agree within the bounded trace
    /// universe; a disagreement would be a bound artefact.
    pub fn agree(&self) -> bool {
        self.prefix_closed == self.complement_extension_closed
    }
}

pub fn rc_report(c: &RrRel) -> Result<RcReport, RrError> {
    if c.alpha != RrAlpha::CONDITION {
        return Err(RrError::AlphabetMismatch(c.alpha, RrAlpha::CONDITION));
    }
    let u = &c.u;
    let mut prefix_closed = true;
    'outer: for r in c.iter() {
        let items = u.trace_events(r.tt).to_vec();
        for k in 0..items.len() {
            let t0 = u.trace_id(&items[..k]).expect("prefix interned");
            if !c.contains(RrRow { st: r.st, tt: t0, ..RrRow::default() }) {
                prefix_closed = false;
                break 'outer;
            }
        }
    }
    let mut complement_extension_closed = true;
    'outer2: for i in 0..u.n_states() {
        let st = StateId(i as u32);
        for t in 0..u.n_traces() {
            let tt = TraceId(t as u32);
            if !c.contains(RrRow { st, tt, ..RrRow::default() }) {
                // every one-event extension must stay out
                for e in 0..u.n_events() {
                    let mut items = u.trace_events(tt).to_vec();
                    items.push(crate::model::EventId(e as u16));
                    if let Some(ext) = u.trace_id(&items) {
                        if c.contains(RrRow { st, tt: ext, ..RrRow::default() }) {
                            complement_extension_closed = false;
                            break 'outer2;
                        }
                    }
                }
            }
        }
    }
    Ok(RcReport { prefix_closed, complement_extension_closed })
}

pub fn is_rc(c: &RrRel) -> Result<bool, RrError> {
    Ok(rc_report(c)?.prefix_closed)
}

/// Close a condition under trace prefixes (handy for sampling conditions).
pub fn prefix_closure(c: &RrRel) -> Result<RrRel, RrError> {
    if c.alpha != RrAlpha::CONDITION {
        return Err(RrError::AlphabetMismatch(c.alpha, RrAlpha::CONDITION));
    }
    let u = c.u.clone();
    let mut rows = Vec::new();
    for r in c.iter() {
        let items = u.trace_events(r.tt).to_vec();
        for k in 0..=items.len() {
            let t0 = u.trace_id(&items[..k]).expect("prefix interned");
            rows.push(RrRow { st: r.st, tt: t0, ..RrRow::default() });
        }
    }
    Ok(RrRel::new(u, RrAlpha::CONDITION, rows))
}

/// Reactive weakest (liberal) precondition: the weakest condition under which
/// every terminal behaviour of `p` lands in `q`. Computed by quantifying over
/// trace decompositions; `q` must be prefix-closed.
pub fn wp_r(p: &RrRel, q: &RrRel) -> Result<RrRel, RrError> {
    if !Arc::ptr_eq(&p.u, &q.u) {
        return Err(RrError::UniverseMismatch);
    }
    if p.alpha != RrAlpha::POST {
        return Err(RrError::AlphabetMismatch(p.alpha, RrAlpha::POST));
    }
    if !is_rc(q)? {
        return Err(RrError::NotRC);
    }
    let u = &p.u;
    let mut index: HashMap<(StateId, TraceId), BTreeSet<StateId>> = HashMap::new();
    for r in p.iter() {
        index.entry((r.st, r.tt)).or_default().insert(r.stp);
    }
    let mut rows = Vec::new();
    for i in 0..u.n_states() {
        let st = StateId(i as u32);
        'next: for t in 0..u.n_traces() {
            let tt = TraceId(t as u32);
            let items = u.trace_events(tt).to_vec();
            for k in 0..=items.len() {
                let t1 = u.trace_id(&items[..k]).expect("prefix interned");
                let t2 = u.trace_id(&items[k..]).expect("suffix interned");
                if let Some(mids) = index.get(&(st, t1)) {
                    for &m in mids {
                        if !q.contains(RrRow { st: m, tt: t2, ..RrRow::default() }) {
                            continue 'next;
                        }
                    }
                }
            }
            rows.push(RrRow { st, tt, ..RrRow::default() });
        }
    }
    Ok(RrRel::new(u.clone(), RrAlpha::CONDITION, rows))
}

/// Expand to the full-alphabet relation: ok/wait unconstrained, tr any
/// history with room for the contribution, absent contribution fields free.
pub fn to_full(p: &RrRel) -> Rel {
    let u = p.u.clone();
    let alpha = Alpha::full();
    let mut rows: Vec<Binding> = Vec::new();
    let states: Vec<StateId> = (0..u.n_states()).map(|i| StateId(i as u32)).collect();
    let masks: Vec<RefMask> = (0..=u.full_refusal()).collect();
    for r in p.iter() {
        let stps: &[StateId] =
            if p.alpha.contains(RrAlpha::STP) { std::slice::from_ref(&r.stp) } else { &states };
        let refs: &[RefMask] =
            if p.alpha.contains(RrAlpha::REFP) { std::slice::from_ref(&r.refp) } else { &masks };
        for tr in 0..u.n_traces() {
            let tr = TraceId(tr as u32);
            let Some(trp) = u.trace_concat(tr, r.tt) else { continue };
            for &stp in stps {
                for &refp in refs {
                    for flags in 0..16u8 {
                        rows.push(Binding {
                            ok: flags & 1 != 0,
                            okp: flags & 2 != 0,
                            wait: flags & 4 != 0,
                            waitp: flags & 8 != 0,
                            tr,
                            trp,
                            st: r.st,
                            stp,
                            refp,
                        });
                    }
                }
            }
        }
    }
    Rel::from_rows(u, alpha, rows)
}

/// Read a full-alphabet RR-healthy relation back into contribution form via
/// its empty-history section.
pub fn from_full(q: &Rel) -> Result<RrRel, RrError> {
    if q.alpha() != Alpha::full() {
        return Err(RrError::NotRRHealthy);
    }
    if !healthiness::is_healthy(crate::healthiness::HealthName::RR, q)
        .map_err(|_| RrError::NotRRHealthy)?
    {
        return Err(RrError::NotRRHealthy);
    }
    let u = q.universe().clone();
    let mut rows = Vec::new();
    for b in q.rows() {
        if b.tr == EMPTY_TRACE && !b.ok && !b.okp && !b.wait && !b.waitp {
            rows.push(RrRow { st: b.st, tt: b.trp, stp: b.stp, refp: b.refp });
        }
    }
    Ok(RrRel::new(u, RrAlpha::POST, rows))
}

/// Sample a contribution relation with the given row density.
pub fn random_rr<R: Rng>(
    u: &Arc<Universe>,
    alpha: RrAlpha,
    density: f64,
    rng: &mut R,
) -> RrRel {
    let rows = all_rows(u, alpha).into_iter().filter(|_| rng.gen_bool(density));
    RrRel::new(u.clone(), alpha, rows)
}

/// Sample a postcondition-shaped relation that leaves ref' unconstrained.
pub fn random_rr_post<R: Rng>(u: &Arc<Universe>, density: f64, rng: &mut R) -> RrRel {
    let base = random_rr(u, RrAlpha::POST.minus(RrAlpha::REFP), density, rng);
    base.lift(RrAlpha::POST)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelDecl, StateVarDecl, Value, VarDom};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn law_universe() -> Arc<Universe> {
        Universe::new(
            vec![
                ChannelDecl { name: "a".into(), arg_ranges: vec![] },
                ChannelDecl { name: "b".into(), arg_ranges: vec![] },
            ],
            vec![StateVarDecl { name: "x".into(), dom: VarDom::Bool }],
            2,
        )
        .unwrap()
    }

    /// 1 event, no state, L = 1: 4 contribution rows, 16 relations.
    fn tiny_universe() -> Arc<Universe> {
        Universe::new(vec![ChannelDecl { name: "a".into(), arg_ranges: vec![] }], vec![], 1)
            .unwrap()
    }

    #[test]
    fn boolean_algebra_exhaustive() {
        let u = tiny_universe();
        let space = all_rows(&u, RrAlpha::POST);
        assert_eq!(space.len(), 4);
        let rels: Vec<RrRel> = (0..16u32)
            .map(|mask| {
                RrRel::new(
                    u.clone(),
                    RrAlpha::POST,
                    space.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, r)| *r),
                )
            })
            .collect();
        let t = rr_true(&u, RrAlpha::POST);
        let f = RrRel::empty(u.clone(), RrAlpha::POST);
        assert_eq!(t.neg_r(), f);
        for p in &rels {
            assert_eq!(p.neg_r().neg_r(), *p);
            assert_eq!(p.disj(&p.neg_r()).unwrap(), t);
            assert_eq!(p.conj(&p.neg_r()).unwrap(), f);
            assert_eq!(f.implies_r(p).unwrap(), t);
            for q in &rels {
                assert_eq!(p.conj(q).unwrap(), q.conj(p).unwrap());
                assert_eq!(p.disj(q).unwrap(), q.disj(p).unwrap());
                assert_eq!(
                    p.conj(q).unwrap().neg_r(),
                    p.neg_r().disj(&q.neg_r()).unwrap()
                );
                for r in &rels {
                    assert_eq!(
                        p.conj(&q.disj(r).unwrap()).unwrap(),
                        p.conj(q).unwrap().disj(&p.conj(r).unwrap()).unwrap()
                    );
                    assert_eq!(
                        p.conj(q).unwrap().conj(r).unwrap(),
                        p.conj(&q.conj(r).unwrap()).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn round_trip_full() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let p = random_rr(&u, RrAlpha::POST, 0.5, &mut rng);
            assert_eq!(from_full(&to_full(&p)).unwrap(), p);
        }
        let bot = Rel::bottom(u.clone(), Alpha::full());
        assert_eq!(
            to_full(&rr_true(&u, RrAlpha::POST)),
            healthiness::apply(crate::healthiness::HealthName::RR, &bot).unwrap()
        );
        // from_full accepts any RR image
        let mut rng2 = ChaCha8Rng::seed_from_u64(32);
        let s = crate::model::random_rel(&u, Alpha::full(), &mut rng2);
        let rr = healthiness::apply(crate::healthiness::HealthName::RR, &s).unwrap();
        let c = from_full(&rr).unwrap();
        assert_eq!(to_full(&c), rr);
        assert!(matches!(from_full(&s), Err(RrError::NotRRHealthy)));
    }

    #[test]
    fn seq_unit_and_zero() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let p = random_rr(&u, RrAlpha::POST, 0.4, &mut rng);
        let ii = ii_r(&u);
        assert_eq!(rr_seq(&ii, &p).unwrap(), p);
        // the right unit needs ref'-cylindrical rows: a first factor's ref'
        // is an intermediate observation and is dropped
        let pc = random_rr_post(&u, 0.4, &mut rng);
        assert_eq!(rr_seq(&pc, &ii).unwrap(), pc);
        let f = RrRel::empty(u.clone(), RrAlpha::POST);
        assert_eq!(rr_seq(&p, &f).unwrap(), f);
        assert_eq!(rr_seq(&f, &p).unwrap(), f);
    }

    #[test]
    fn seq_matches_full_oracle() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        u.reset_truncations();
        for _ in 0..4 {
            // first factors shaped like shipped postconditions: ref' free
            let p = random_rr_post(&u, 0.3, &mut rng);
            let q = random_rr(&u, RrAlpha::POST, 0.3, &mut rng);
            let via_full = from_full(&to_full(&p).seq_compose(&to_full(&q)).unwrap()).unwrap();
            let direct = rr_seq(&p, &q).unwrap();
            assert_eq!(via_full, direct);
        }
        u.reset_truncations();
    }

    #[test]
    fn seq_associative() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..3 {
            let p = random_rr(&u, RrAlpha::POST, 0.3, &mut rng);
            let q = random_rr(&u, RrAlpha::POST, 0.3, &mut rng);
            let r = random_rr(&u, RrAlpha::POST, 0.3, &mut rng);
            let a = rr_seq(&rr_seq(&p, &q).unwrap(), &r).unwrap();
            let b = rr_seq(&p, &rr_seq(&q, &r).unwrap()).unwrap();
            assert_eq!(a, b);
        }
        u.reset_truncations();
    }

    #[test]
    fn truncation_counted() {
        let u = Universe::new(
            vec![ChannelDecl { name: "a".into(), arg_ranges: vec![] }],
            vec![],
            1,
        )
        .unwrap();
        u.reset_truncations();
        let one = TraceId(1);
        let p = RrRel::new(
            u.clone(),
            RrAlpha::POST,
            [RrRow { st: StateId(0), tt: one, stp: StateId(0), refp: 0 }],
        );
        let r = rr_seq(&p, &p).unwrap();
        assert!(r.is_empty());
        assert!(u.truncation_count() > 0);
        u.reset_truncations();
    }

    #[test]
    fn assigns_examples() {
        let u = law_universe();
        let a = assigns_r(&u, &[("x".into(), StateExpr::Bool(true))]);
        for r in a.iter() {
            assert_eq!(r.tt, EMPTY_TRACE);
            assert_eq!(u.state(r.stp).0[0], Value::Bool(true));
        }
        assert_eq!(ii_r(&u), assigns_r(&u, &[]));
        // assignment contributions are ref'-cylindrical
        assert_eq!(a.len() as u32, u.n_states() as u32 * (u.full_refusal() + 1));
    }

    #[test]
    fn rc_checks() {
        let u = law_universe();
        let sc = state_cond(&u, |s| s.0[0] == Value::Bool(true));
        assert!(is_rc(&sc).unwrap());
        let rep = rc_report(&sc).unwrap();
        assert!(rep.agree());
        // {(st, ⟨a⟩)} misses its empty prefix
        let a1 = TraceId(1);
        let bad = RrRel::new(
            u.clone(),
            RrAlpha::CONDITION,
            [RrRow { st: StateId(0), tt: a1, ..RrRow::default() }],
        );
        assert!(!is_rc(&bad).unwrap());
        assert!(rc_report(&bad).unwrap().agree());
        // ¬_r {(st,t) | ⟨a⟩ ≤ t} is prefix-closed
        let pref = RrRel::new(
            u.clone(),
            RrAlpha::CONDITION,
            all_rows(&u, RrAlpha::CONDITION)
                .into_iter()
                .filter(|r| u.trace_le(a1, r.tt)),
        );
        assert!(is_rc(&pref.neg_r()).unwrap());
        // prefix closure repairs arbitrary conditions
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..5 {
            let c = random_rr(&u, RrAlpha::CONDITION, 0.4, &mut rng);
            let pc = prefix_closure(&c).unwrap();
            assert!(is_rc(&pc).unwrap());
            assert!(c.is_subset(&pc).unwrap());
        }
    }

    #[test]
    fn rc_forms_agree_on_samples() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..20 {
            let c = random_rr(&u, RrAlpha::CONDITION, 0.5, &mut rng);
            assert!(rc_report(&c).unwrap().agree());
        }
    }

    fn random_rc(u: &Arc<Universe>, rng: &mut ChaCha8Rng) -> RrRel {
        prefix_closure(&random_rr(u, RrAlpha::CONDITION, 0.3, rng)).unwrap()
    }

    #[test]
    fn wp_laws() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let t = rr_true(&u, RrAlpha::CONDITION);
        for _ in 0..4 {
            let p = random_rr(&u, RrAlpha::POST, 0.3, &mut rng);
            let q = random_rr(&u, RrAlpha::POST, 0.3, &mut rng);
            let r = random_rc(&u, &mut rng);
            let s = random_rc(&u, &mut rng);
            // P wp true = true
            assert_eq!(wp_r(&p, &t).unwrap(), t);
            // false wp R = true
            let f = RrRel::empty(u.clone(), RrAlpha::POST);
            assert_eq!(wp_r(&f, &r).unwrap(), t);
            // P wp (Q ∧ R)
            let conj = r.conj(&s).unwrap();
            assert_eq!(
                wp_r(&p, &conj).unwrap(),
                wp_r(&p, &r).unwrap().conj(&wp_r(&p, &s).unwrap()).unwrap()
            );
            // (P ◁b▷ Q) wp R
            let b = states_where(&u, |st| st.0[0] == Value::Bool(true));
            assert_eq!(
                wp_r(&rr_cond(&p, &b, &q).unwrap(), &r).unwrap(),
                rr_cond(&wp_r(&p, &r).unwrap(), &b, &wp_r(&q, &r).unwrap()).unwrap()
            );
            // (P ⨾ Q) wp R = P wp (Q wp R)
            u.reset_truncations();
            assert_eq!(
                wp_r(&rr_seq(&p, &q).unwrap(), &r).unwrap(),
                wp_r(&p, &wp_r(&q, &r).unwrap()).unwrap()
            );
            u.reset_truncations();
            // II wp R = R
            assert_eq!(wp_r(&ii_r(&u), &r).unwrap(), r);
            // (P ⊓ Q) wp R
            assert_eq!(
                wp_r(&p.disj(&q).unwrap(), &r).unwrap(),
                wp_r(&p, &r).unwrap().conj(&wp_r(&q, &r).unwrap()).unwrap()
            );
            // indexed form over a family of three
            let fam = [p.clone(), q.clone(), rr_seq(&p, &q).unwrap()];
            let lhs = wp_r(&rr_inf(&fam).unwrap(), &r).unwrap();
            let rhs = fam
                .iter()
                .map(|x| wp_r(x, &r).unwrap())
                .reduce(|a, b| a.conj(&b).unwrap())
                .unwrap();
            u.reset_truncations();
            assert_eq!(lhs, rhs);
            // closure
            assert!(is_rc(&wp_r(&p, &r).unwrap()).unwrap());
            // literal formula: ¬_r (P ⨾ ¬_r R)
            let literal = seq_general(&p, &r.neg_r()).unwrap().neg_r();
            u.reset_truncations();
            assert_eq!(wp_r(&p, &r).unwrap(), literal);
        }
    }

    #[test]
    fn wp_assignment_substitution() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let sigma: Vec<(String, StateExpr)> =
            vec![("x".into(), StateExpr::Not(Box::new(StateExpr::Var("x".into()))))];
        for _ in 0..5 {
            let r = random_rc(&u, &mut rng);
            assert_eq!(
                wp_r(&assigns_r(&u, &sigma), &r).unwrap(),
                subst_cond(&u, &sigma, &r).unwrap()
            );
        }
    }

    #[test]
    fn lift_project_inverse() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let c = random_rr(&u, RrAlpha::CONDITION, 0.5, &mut rng);
        let lifted = c.lift(RrAlpha::POST);
        assert_eq!(lifted.project_out(RrAlpha::STP.union(RrAlpha::REFP)), c);
        let p = random_rr(&u, RrAlpha::PERI, 0.5, &mut rng);
        assert_eq!(p.project_out(RrAlpha::REFP).alpha(), RrAlpha::CONDITION);
    }

    #[test]
    fn restrict_by_cond_filters() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let p = random_rr(&u, RrAlpha::POST, 0.5, &mut rng);
        let c = random_rr(&u, RrAlpha::CONDITION, 0.5, &mut rng);
        let r = p.restrict_by_cond(&c).unwrap();
        for row in r.iter() {
            assert!(c.contains(RrRow { st: row.st, tt: row.tt, ..RrRow::default() }));
        }
        assert_eq!(r, p.conj(&c.lift(RrAlpha::POST)).unwrap());
    }
}
