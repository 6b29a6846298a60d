//! Parallel composition by merge. An inner merge relation fuses the trace,
//! state, and refusal contributions two components make from a shared start;
//! wrapping it in the divergence, waiting, and continuation layers yields the
//! full parallel operator, and the weakest parallel precondition says which
//! starts keep a required condition safe against a given partner.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::contracts::{mk_contract, Contract, ContractError};
use crate::healthiness::ii_srd;
use crate::model::{Alpha, Binding, ModelError, RefMask, Rel, StateId, TraceId, Universe};
use crate::reactive_relations::{is_rc, RrAlpha, RrError, RrRel, RrRow};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParError {
    #[error("operands belong to different universes")]
    UniverseMismatch,
    #[error("parallel composition needs full-alphabet operands, got {0}")]
    BadAlphabet(Alpha),
    #[error("merge relation is not symmetric in its two sides")]
    MergeNotSymmetric,
    #[error("rely argument of wpp must be a reactive condition")]
    NotRC,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rr(#[from] RrError),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// One inner-merge row: the shared initial state, each side's contribution
/// (trace delta, final state, refusal), and the fused output observation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MergeRow {
    pub st: StateId,
    pub tt0: TraceId,
    pub st0: StateId,
    pub ref0: RefMask,
    pub tt1: TraceId,
    pub st1: StateId,
    pub ref1: RefMask,
    pub tt: TraceId,
    pub stp: StateId,
    pub refp: RefMask,
}

/// An inner merge as an explicit row set. Rows speak only about trace
/// contributions, never about the history before the start, so every merge
/// expressible here is automatically history-blind; divergence and waiting
/// flags live in the outer wrapper, out of the inner merge's reach.
///
/// Field order of [`MergeRow`] puts the seven input coordinates first, so the
/// derived ordering clusters all outputs of one input into a contiguous run.
#[derive(Clone)]
pub struct MergeRel {
    u: Arc<Universe>,
    rows: BTreeSet<MergeRow>,
}

impl PartialEq for MergeRel {
    fn eq(&self, o: &MergeRel) -> bool {
        Arc::ptr_eq(&self.u, &o.u) && self.rows == o.rows
    }
}
impl Eq for MergeRel {}

impl std::fmt::Debug for MergeRel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MergeRel[{} rows]", self.rows.len())
    }
}

impl MergeRel {
    pub fn new(u: Arc<Universe>, rows: impl IntoIterator<Item = MergeRow>) -> MergeRel {
        MergeRel { u, rows: rows.into_iter().collect() }
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.u
    }
    pub fn rows(&self) -> &BTreeSet<MergeRow> {
        &self.rows
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// True iff swapping the two input sides maps the row set onto itself.
    pub fn is_symmetric(&self) -> bool {
        self.rows.iter().all(|r| {
            self.rows.contains(&MergeRow {
                tt0: r.tt1,
                st0: r.st1,
                ref0: r.ref1,
                tt1: r.tt0,
                st1: r.st0,
                ref1: r.ref0,
                ..*r
            })
        })
    }

    /// All fused outputs for one pair of contributions.
    #[allow(clippy::too_many_arguments)]
    pub fn matches(
        &self,
        st: StateId,
        tt0: TraceId,
        st0: StateId,
        ref0: RefMask,
        tt1: TraceId,
        st1: StateId,
        ref1: RefMask,
    ) -> impl Iterator<Item = MergeRow> + '_ {
        let lo = MergeRow {
            st,
            tt0,
            st0,
            ref0,
            tt1,
            st1,
            ref1,
            tt: TraceId(0),
            stp: StateId(0),
            refp: 0,
        };
        let hi = MergeRow {
            tt: TraceId(u32::MAX),
            stp: StateId(u32::MAX),
            refp: RefMask::MAX,
            ..lo
        };
        self.rows.range(lo..=hi).copied()
    }

    /// Forgets the fused state: each row is replayed with every possible
    /// output state. Used when merging intermediate observations, which
    /// carry no final state.
    pub fn hide_state(&self) -> MergeRel {
        let mut rows = BTreeSet::new();
        for r in &self.rows {
            for s in 0..self.u.n_states() {
                rows.insert(MergeRow { stp: StateId(s as u32), ..*r });
            }
        }
        MergeRel { u: self.u.clone(), rows }
    }

    /// Composes the merge with the always-true reactive relation: every fused
    /// trace may grow further within the bound, and the fused state and
    /// refusal become arbitrary. Extensions past the bound are simply absent.
    pub fn extend_traces(&self) -> MergeRel {
        let u = &self.u;
        let masks: Vec<RefMask> = (0..=u.full_refusal()).collect();
        let mut rows = BTreeSet::new();
        for r in &self.rows {
            for t in 0..u.n_traces() {
                let tt = TraceId(t as u32);
                if !u.trace_le(r.tt, tt) {
                    continue;
                }
                for s in 0..u.n_states() {
                    for &m in &masks {
                        rows.insert(MergeRow {
                            tt,
                            stp: StateId(s as u32),
                            refp: m,
                            ..*r
                        });
                    }
                }
            }
        }
        MergeRel { u: self.u.clone(), rows }
    }
}

/// All interleavings of two event sequences.
fn interleavings(a: &[u16], b: &[u16]) -> Vec<Vec<u16>> {
    if a.is_empty() {
        return vec![b.to_vec()];
    }
    if b.is_empty() {
        return vec![a.to_vec()];
    }
    let mut out = Vec::new();
    for mut v in interleavings(&a[1..], b) {
        v.insert(0, a[0]);
        out.push(v);
    }
    for mut v in interleavings(a, &b[1..]) {
        v.insert(0, b[0]);
        out.push(v);
    }
    out
}

/// The merge that interleaves the two contributed traces, refuses only what
/// both sides refuse, and leaves the fused state completely unconstrained.
/// Contribution pairs whose interleavings would exceed the trace bound are
/// dropped and counted on the universe's truncation counter, one count per
/// dropped pair.
pub fn interleave_merge(u: &Arc<Universe>) -> MergeRel {
    let states: Vec<StateId> = (0..u.n_states()).map(|i| StateId(i as u32)).collect();
    let full = u.full_refusal();
    let mut rows = BTreeSet::new();
    for i in 0..u.n_traces() {
        let t0 = TraceId(i as u32);
        for j in 0..u.n_traces() {
            let t1 = TraceId(j as u32);
            if u.trace_len(t0) + u.trace_len(t1) > u.bound() {
                u.note_truncation();
                continue;
            }
            let ev0: Vec<u16> = u.trace_events(t0).iter().map(|e| e.0).collect();
            let ev1: Vec<u16> = u.trace_events(t1).iter().map(|e| e.0).collect();
            let mut outs = BTreeSet::new();
            for w in interleavings(&ev0, &ev1) {
                let ids: Vec<crate::model::EventId> =
                    w.into_iter().map(crate::model::EventId).collect();
                outs.insert(u.trace_id(&ids).expect("in-bound interleaving is interned"));
            }
            for &st in &states {
                for &st0 in &states {
                    for &st1 in &states {
                        for ref0 in 0..=full {
                            for ref1 in 0..=full {
                                let both = ref0 & ref1;
                                for refp in 0..=full {
                                    if refp & !both != 0 {
                                        continue;
                                    }
                                    for &stp in &states {
                                        for &tt in &outs {
                                            rows.insert(MergeRow {
                                                st,
                                                tt0: t0,
                                                st0,
                                                ref0,
                                                tt1: t1,
                                                st1,
                                                ref1,
                                                tt,
                                                stp,
                                                refp,
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    MergeRel { u: u.clone(), rows }
}

/// A full-alphabet merge: the inner contribution merge plus the choice of
/// wrapper applied around it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum OuterMerge {
    /// The inner merge used directly. Output flags are unconstrained and the
    /// merge applies uniformly at waiting and diverged starts.
    Plain(MergeRel),
    /// The reactive-design wrapper: output divergence is the conjunction and
    /// waiting the disjunction of the sides' flags, waiting starts behave as
    /// the reactive skip, diverged starts allow any trace extension, and a
    /// trailing skip closes the result under continuation.
    Reactive(MergeRel),
}

impl OuterMerge {
    fn inner(&self) -> &MergeRel {
        match self {
            OuterMerge::Plain(m) | OuterMerge::Reactive(m) => m,
        }
    }
}

type InKey = (bool, bool, TraceId, StateId);

fn by_input(p: &Rel) -> BTreeMap<InKey, Vec<Binding>> {
    let mut map: BTreeMap<InKey, Vec<Binding>> = BTreeMap::new();
    for b in p.rows() {
        map.entry((b.ok, b.wait, b.tr, b.st)).or_default().push(*b);
    }
    map
}

/// Parallel composition of two full-alphabet relations through a merge.
/// A fused observation exists at a start only if both components observe
/// something there; each side's output trace is split into the common history
/// and its own contribution before the inner merge fuses the contributions.
/// Fused traces that would exceed the bound are dropped and counted.
pub fn par_by_merge(p: &Rel, q: &Rel, m: &OuterMerge) -> Result<Rel, ParError> {
    if !Arc::ptr_eq(p.universe(), q.universe())
        || !Arc::ptr_eq(p.universe(), m.inner().universe())
    {
        return Err(ParError::UniverseMismatch);
    }
    if p.alpha() != Alpha::full() {
        return Err(ParError::BadAlphabet(p.alpha()));
    }
    if q.alpha() != Alpha::full() {
        return Err(ParError::BadAlphabet(q.alpha()));
    }
    let u = p.universe().clone();
    let reactive = matches!(m, OuterMerge::Reactive(_));
    let inner = m.inner();
    let skip = ii_srd(&u);
    let skip_in = by_input(&skip);
    let pm = by_input(p);
    let qm = by_input(q);
    let mut rows: BTreeSet<Binding> = BTreeSet::new();
    for (key, pouts) in &pm {
        let Some(qouts) = qm.get(key) else { continue };
        let &(ok, wait, tr, st) = key;
        let base = Binding { ok, wait, tr, st, ..Binding::default() };
        if reactive && wait {
            // a waiting start has not been reached yet: behave as skip
            if let Some(souts) = skip_in.get(key) {
                rows.extend(souts.iter().copied());
            }
        } else {
            for l in pouts {
                let Some(tt0) = u.trace_subtract(l.trp, tr) else { continue };
                for r in qouts {
                    let Some(tt1) = u.trace_subtract(r.trp, tr) else { continue };
                    for mr in inner.matches(st, tt0, l.stp, l.refp, tt1, r.stp, r.refp) {
                        // Fused observations past the bound are structurally
                        // absent, exactly as in full-level sequencing.
                        let Some(trp) = u.trace_concat(tr, mr.tt) else { continue };
                        if reactive {
                            rows.insert(Binding {
                                okp: l.okp && r.okp,
                                waitp: l.waitp || r.waitp,
                                trp,
                                stp: mr.stp,
                                refp: mr.refp,
                                ..base
                            });
                        } else {
                            for okp in [false, true] {
                                for waitp in [false, true] {
                                    rows.insert(Binding {
                                        okp,
                                        waitp,
                                        trp,
                                        stp: mr.stp,
                                        refp: mr.refp,
                                        ..base
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        if reactive && !ok {
            // a diverged start allows any observation extending the history
            for t in 0..u.n_traces() {
                let trp = TraceId(t as u32);
                if !u.trace_le(tr, trp) {
                    continue;
                }
                for s in 0..u.n_states() {
                    for refp in 0..=u.full_refusal() {
                        for okp in [false, true] {
                            for waitp in [false, true] {
                                rows.insert(Binding {
                                    okp,
                                    waitp,
                                    trp,
                                    stp: StateId(s as u32),
                                    refp,
                                    ..base
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    let core = Rel::from_rows(u.clone(), Alpha::full(), rows);
    if reactive {
        Ok(core.seq_compose(&skip)?)
    } else {
        Ok(core)
    }
}

fn check_behaviour(p: &RrRel, m: &MergeRel) -> Result<(), ParError> {
    if !Arc::ptr_eq(p.universe(), m.universe()) {
        return Err(ParError::UniverseMismatch);
    }
    Ok(())
}

/// Rows obtained by fusing every pair of side observations over a shared
/// initial state. Sides narrower than a final observation are padded with
/// every value of the missing coordinates first.
fn fuse(p: &RrRel, q: &RrRel, m: &MergeRel) -> Result<BTreeSet<RrRow>, ParError> {
    check_behaviour(p, m)?;
    check_behaviour(q, m)?;
    let pl = p.lift(RrAlpha::POST);
    let ql = q.lift(RrAlpha::POST);
    let mut qs: BTreeMap<StateId, Vec<RrRow>> = BTreeMap::new();
    for r in ql.iter() {
        qs.entry(r.st).or_default().push(r);
    }
    let mut out = BTreeSet::new();
    for l in pl.iter() {
        let Some(rs) = qs.get(&l.st) else { continue };
        for r in rs {
            for mr in m.matches(l.st, l.tt, l.stp, l.refp, r.tt, r.stp, r.refp) {
                out.insert(RrRow { st: l.st, tt: mr.tt, stp: mr.stp, refp: mr.refp });
            }
        }
    }
    Ok(out)
}

/// Merge of two final observations: the components' contributions are fused
/// by the inner merge into one final observation.
pub fn rr_par(p: &RrRel, q: &RrRel, m: &MergeRel) -> Result<RrRel, ParError> {
    let rows = fuse(p, q, m)?;
    Ok(RrRel::new(m.universe().clone(), RrAlpha::POST, rows))
}

/// Merge of observations taken while at least one side is still running: as
/// [`rr_par`] but with the fused state forgotten.
pub fn rr_par_mid(p: &RrRel, q: &RrRel, m: &MergeRel) -> Result<RrRel, ParError> {
    let rows = fuse(p, q, &m.hide_state())?;
    Ok(RrRel::new(m.universe().clone(), RrAlpha::PERI, rows))
}

fn wpp_extended(p: &RrRel, ext: &MergeRel, q: &RrRel) -> Result<RrRel, ParError> {
    if !is_rc(q)? {
        return Err(ParError::NotRC);
    }
    let fused = fuse(&q.neg_r(), p, ext)?;
    let u = ext.universe().clone();
    let viol = RrRel::new(u, RrAlpha::CONDITION, fused);
    Ok(viol.neg_r())
}

/// Weakest parallel precondition: the set of starts from which no behaviour
/// of `p`, merged through `m` with an arbitrary continuation of the partner,
/// can escape the condition `q`. The result is again a reactive condition.
pub fn wpp(p: &RrRel, m: &MergeRel, q: &RrRel) -> Result<RrRel, ParError> {
    wpp_extended(p, &m.extend_traces(), q)
}

/// Parallel composition of two contracts over a symmetric inner merge.
/// The composite assumes that neither side's behaviour can violate the
/// other's assumption, interleaves intermediate with final observations
/// while either side is unfinished, and fuses final observations when both
/// are done.
pub fn rd_par(c1: &Contract, c2: &Contract, m: &MergeRel) -> Result<Contract, ParError> {
    if !Arc::ptr_eq(c1.universe(), c2.universe())
        || !Arc::ptr_eq(c1.universe(), m.universe())
    {
        return Err(ParError::UniverseMismatch);
    }
    if !m.is_symmetric() {
        return Err(ParError::MergeNotSymmetric);
    }
    let ext = m.extend_traces();
    let (p1, p2, p3) = (c1.pre(), c1.peri(), c1.post());
    let (q1, q2, q3) = (c2.pre(), c2.peri(), c2.post());
    let pre = wpp_extended(&p1.lift(RrAlpha::PERI).implies_r(p2)?, &ext, q1)?
        .conj(&wpp_extended(&p1.lift(RrAlpha::POST).implies_r(p3)?, &ext, q1)?)?
        .conj(&wpp_extended(&q1.lift(RrAlpha::PERI).implies_r(q2)?, &ext, p1)?)?
        .conj(&wpp_extended(&q1.lift(RrAlpha::POST).implies_r(q3)?, &ext, p1)?)?;
    let peri = rr_par_mid(p2, q2, m)?
        .disj(&rr_par_mid(p3, q2, m)?)?
        .disj(&rr_par_mid(p2, q3, m)?)?;
    let post = rr_par(p3, q3, m)?;
    Ok(mk_contract(&pre, &peri, &post)?)
}
