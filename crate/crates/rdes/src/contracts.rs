//! Reactive design contracts: triples (pre, peri, post) of trace
//! contributions. The precondition is a prefix-closed condition on (st, tt),
//! the pericondition describes quiescent intermediate observations, and the
//! postcondition describes terminating ones. Operations compute composite
//! triples directly; `expand` gives the full-alphabet relation they denote,
//! so every calculation can be cross-checked against the relational model.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::healthiness::{self, HealthName};
use crate::model::{
    all_bindings, Alpha, Binding, EventId, ModelError, Rel, StateExpr, StateId, Universe,
};
use crate::reactive_relations::{
    self, ii_r, row_display, rr_cond, rr_seq, rr_true, seq_general, wp_r, RrAlpha, RrError, RrRel,
    RrRow,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("precondition is not prefix-closed")]
    NotRC,
    #[error("pericondition must not constrain the final state")]
    PeriMentionsFinalState,
    #[error("component over {found} where {expected} was needed")]
    BadAlphabet { expected: RrAlpha, found: RrAlpha },
    #[error("components belong to different universes")]
    UniverseMismatch,
    #[error("relation is not a stateful reactive design")]
    NotSrdHealthy,
    #[error("iteration needs a productive body: a postcondition row contributes no events")]
    NotProductive,
    #[error("empty contract family")]
    EmptyFamily,
    #[error(transparent)]
    Rr(#[from] RrError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A reactive design contract. Invariants: pre is prefix-closed, peri and
/// post are already restricted to initial observations satisfying pre.
#[derive(Clone, PartialEq, Eq)]
pub struct Contract {
    pre: RrRel,
    peri: RrRel,
    post: RrRel,
}

impl fmt::Debug for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Contract[pre {} rows, peri {} rows, post {} rows]",
            self.pre.len(),
            self.peri.len(),
            self.post.len()
        )
    }
}

impl Contract {
    pub fn pre(&self) -> &RrRel {
        &self.pre
    }
    pub fn peri(&self) -> &RrRel {
        &self.peri
    }
    pub fn post(&self) -> &RrRel {
        &self.post
    }
    pub fn universe(&self) -> &Arc<Universe> {
        self.pre.universe()
    }

    /// Three labelled row listings in stable sorted order.
    pub fn render(&self) -> String {
        let u = self.universe();
        let mut out = String::new();
        for (label, rel) in
            [("pre", &self.pre), ("peri", &self.peri), ("post", &self.post)]
        {
            out.push_str(label);
            out.push_str(":\n");
            if rel.is_empty() {
                out.push_str("  (no rows)\n");
            }
            for r in rel.iter() {
                out.push_str("  ");
                out.push_str(&row_display(u, rel.alpha(), r));
                out.push('\n');
            }
        }
        out
    }
}

impl fmt::Display for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Build a contract from its three components. The pericondition and
/// postcondition are restricted to the precondition, so distinct inputs that
/// denote the same process collapse to one normal form.
pub fn mk_contract(pre: &RrRel, peri: &RrRel, post: &RrRel) -> Result<Contract, ContractError> {
    if !Arc::ptr_eq(pre.universe(), peri.universe())
        || !Arc::ptr_eq(pre.universe(), post.universe())
    {
        return Err(ContractError::UniverseMismatch);
    }
    if pre.alpha() != RrAlpha::CONDITION {
        return Err(ContractError::BadAlphabet {
            expected: RrAlpha::CONDITION,
            found: pre.alpha(),
        });
    }
    if peri.alpha().contains(RrAlpha::STP) {
        return Err(ContractError::PeriMentionsFinalState);
    }
    if peri.alpha() != RrAlpha::PERI {
        return Err(ContractError::BadAlphabet { expected: RrAlpha::PERI, found: peri.alpha() });
    }
    if post.alpha() != RrAlpha::POST {
        return Err(ContractError::BadAlphabet { expected: RrAlpha::POST, found: post.alpha() });
    }
    if !reactive_relations::is_rc(pre)? {
        return Err(ContractError::NotRC);
    }
    Ok(Contract {
        pre: pre.clone(),
        peri: peri.restrict_by_cond(pre)?,
        post: post.restrict_by_cond(pre)?,
    })
}

/// Top of the refinement lattice: nothing can be observed of it.
pub fn miracle(u: &Arc<Universe>) -> Contract {
    Contract {
        pre: rr_true(u, RrAlpha::CONDITION),
        peri: RrRel::empty(u.clone(), RrAlpha::PERI),
        post: RrRel::empty(u.clone(), RrAlpha::POST),
    }
}

/// Bottom of the refinement lattice: its assumption can never be met.
pub fn chaos(u: &Arc<Universe>) -> Contract {
    Contract {
        pre: RrRel::empty(u.clone(), RrAlpha::CONDITION),
        peri: RrRel::empty(u.clone(), RrAlpha::PERI),
        post: RrRel::empty(u.clone(), RrAlpha::POST),
    }
}

/// Terminates immediately, contributing nothing and preserving the state.
pub fn skip_srd(u: &Arc<Universe>) -> Contract {
    Contract {
        pre: rr_true(u, RrAlpha::CONDITION),
        peri: RrRel::empty(u.clone(), RrAlpha::PERI),
        post: ii_r(u),
    }
}

/// Generalised assignment: terminates immediately with the updated state.
pub fn assigns_rd(u: &Arc<Universe>, sigma: &[(String, StateExpr)]) -> Contract {
    Contract {
        pre: rr_true(u, RrAlpha::CONDITION),
        peri: RrRel::empty(u.clone(), RrAlpha::PERI),
        post: reactive_relations::assigns_r(u, sigma),
    }
}

/// Deadlock: quiescent from the start under every refusal, never terminating.
pub fn stop_srd(u: &Arc<Universe>) -> Contract {
    let full = u.full_refusal();
    let peri = RrRel::new(
        u.clone(),
        RrAlpha::PERI,
        (0..u.n_states() as u32).flat_map(|s| {
            (0..=full).map(move |refp| RrRow {
                st: StateId(s),
                tt: crate::model::EMPTY_TRACE,
                refp,
                ..RrRow::default()
            })
        }),
    );
    Contract {
        pre: rr_true(u, RrAlpha::CONDITION),
        peri,
        post: RrRel::empty(u.clone(), RrAlpha::POST),
    }
}

/// Offer one event until it happens, then terminate with the state unchanged.
pub fn prefix_srd(u: &Arc<Universe>, e: EventId) -> Contract {
    let t = u.trace_id(&[e]).expect("singleton traces are interned");
    let full = u.full_refusal();
    let bit: crate::model::RefMask = 1 << e.0;
    let peri = RrRel::new(
        u.clone(),
        RrAlpha::PERI,
        (0..u.n_states() as u32).flat_map(|s| {
            (0..=full).filter(move |refp| refp & bit == 0).map(move |refp| RrRow {
                st: StateId(s),
                tt: crate::model::EMPTY_TRACE,
                refp,
                ..RrRow::default()
            })
        }),
    );
    let post = RrRel::new(
        u.clone(),
        RrAlpha::POST,
        (0..u.n_states() as u32).flat_map(|s| {
            (0..=full).map(move |refp| RrRow { st: StateId(s), tt: t, stp: StateId(s), refp })
        }),
    );
    Contract { pre: rr_true(u, RrAlpha::CONDITION), peri, post }
}

fn component_at(c: &RrRel, u: &Universe, b: &Binding) -> bool {
    match u.trace_subtract(b.trp, b.tr) {
        Some(tt) => c.contains(RrRow { st: b.st, tt, stp: b.stp, refp: b.refp }),
        None => false,
    }
}

/// The full-alphabet relation a contract denotes: the reactive healthiness
/// conditions applied to the guarded implication from assumption to
/// commitment, with the pericondition read at wait' and the postcondition at
/// ¬wait'.
pub fn expand(c: &Contract) -> Rel {
    let u = c.universe().clone();
    let mut rows: BTreeSet<Binding> = BTreeSet::new();
    for b in all_bindings(&u, Alpha::full()) {
        let keep = if !(b.ok && component_at(&c.pre, &u, &b)) {
            true
        } else if !b.okp {
            false
        } else if b.waitp {
            component_at(&c.peri, &u, &b)
        } else {
            component_at(&c.post, &u, &b)
        };
        if keep {
            rows.insert(b);
        }
    }
    let design = Rel::new(u, Alpha::full(), rows);
    healthiness::apply(HealthName::Rs, &design).expect("full alphabet is accepted")
}

/// Largest prefix-closed condition inside `c`: the divergences an observer
/// can rely on never being entered part-way. Equals ¬((¬c) ⨾ true) but is
/// computed by direct prefix membership, so it never attempts an out-of-bound
/// concatenation.
fn rc_interior(c: &RrRel) -> Result<RrRel, ContractError> {
    let u = c.universe().clone();
    let mut rows = Vec::new();
    for r in c.iter() {
        let items = u.trace_events(r.tt).to_vec();
        let closed_below = (0..items.len()).all(|k| {
            let t0 = u.trace_id(&items[..k]).expect("prefix interned");
            c.contains(RrRow { st: r.st, tt: t0, ..RrRow::default() })
        });
        if closed_below {
            rows.push(r);
        }
    }
    Ok(RrRel::new(u, RrAlpha::CONDITION, rows))
}

/// Recover the contract of a stateful reactive design. Exact inverse of
/// `expand` for contracts built by `mk_contract`; relations outside that
/// image are first normalised (precondition closed under prefixes, final
/// state projected out of intermediate observations), matching what
/// composition with the reactive skip forces anyway.
pub fn contract_of(p: &Rel) -> Result<Contract, ContractError> {
    if !healthiness::is_healthy(HealthName::SRD, p)? {
        return Err(ContractError::NotSrdHealthy);
    }
    let u = p.universe().clone();
    let mut pre_rows: Vec<RrRow> = Vec::new();
    let mut peri_rows: Vec<RrRow> = Vec::new();
    let mut post_rows: Vec<RrRow> = Vec::new();
    for b in p.rows() {
        if b.tr != crate::model::EMPTY_TRACE || b.wait {
            continue;
        }
        let row = RrRow { st: b.st, tt: b.trp, stp: b.stp, refp: b.refp };
        if b.ok && !b.okp {
            pre_rows.push(RrRow { stp: StateId(0), refp: 0, ..row });
        } else if b.ok && b.okp && b.waitp {
            peri_rows.push(RrRow { stp: StateId(0), ..row });
        } else if b.ok && b.okp && !b.waitp {
            post_rows.push(row);
        }
    }
    let diverges = RrRel::new(u.clone(), RrAlpha::CONDITION, pre_rows);
    let pre = rc_interior(&diverges.neg_r())?;
    let peri = RrRel::new(u.clone(), RrAlpha::PERI, peri_rows);
    let post = RrRel::new(u, RrAlpha::POST, post_rows);
    mk_contract(&pre, &peri, &post)
}

/// Sequential composition: the assumption additionally demands that no
/// terminating run of the first part violates the second's assumption.
pub fn seq(p: &Contract, q: &Contract) -> Result<Contract, ContractError> {
    let pre = p.pre.conj(&wp_r(&p.post, &q.pre)?)?;
    let peri = p.peri.disj(&seq_general(&p.post, &q.peri)?)?;
    let post = rr_seq(&p.post, &q.post)?;
    mk_contract(&pre, &peri, &post)
}

/// Internal choice: either branch may run, so both assumptions must hold.
pub fn intchoice(p: &Contract, q: &Contract) -> Result<Contract, ContractError> {
    mk_contract(
        &p.pre.conj(&q.pre)?,
        &p.peri.disj(&q.peri)?,
        &p.post.disj(&q.post)?,
    )
}

/// Internal choice over a non-empty family.
pub fn intchoice_indexed(family: &[Contract]) -> Result<Contract, ContractError> {
    let (first, rest) = family.split_first().ok_or(ContractError::EmptyFamily)?;
    let mut acc = first.clone();
    for c in rest {
        acc = intchoice(&acc, c)?;
    }
    Ok(acc)
}

/// External choice: before any event every branch must be quiescent jointly;
/// once the trace is non-empty a single branch carries the behaviour.
pub fn extchoice_indexed(family: &[Contract]) -> Result<Contract, ContractError> {
    let (first, rest) = family.split_first().ok_or(ContractError::EmptyFamily)?;
    let u = first.universe().clone();
    let mut pre = first.pre.clone();
    let mut peri_all = first.peri.clone();
    let mut peri_any = first.peri.clone();
    let mut post = first.post.clone();
    for c in rest {
        pre = pre.conj(&c.pre)?;
        peri_all = peri_all.conj(&c.peri)?;
        peri_any = peri_any.disj(&c.peri)?;
        post = post.disj(&c.post)?;
    }
    let empty = crate::model::EMPTY_TRACE;
    let peri = RrRel::new(
        u,
        RrAlpha::PERI,
        peri_all
            .iter()
            .filter(|r| r.tt == empty)
            .chain(peri_any.iter().filter(|r| r.tt != empty)),
    );
    mk_contract(&pre, &peri, &post)
}

pub fn extchoice(p: &Contract, q: &Contract) -> Result<Contract, ContractError> {
    extchoice_indexed(&[p.clone(), q.clone()])
}

/// Conjunction: one assumption suffices, and each branch's commitment is
/// only required where its own assumption held.
pub fn conj(p: &Contract, q: &Contract) -> Result<Contract, ContractError> {
    let pre = p.pre.disj(&q.pre)?;
    let p_peri = p.pre.lift(RrAlpha::PERI).implies_r(&p.peri)?;
    let q_peri = q.pre.lift(RrAlpha::PERI).implies_r(&q.peri)?;
    let p_post = p.pre.lift(RrAlpha::POST).implies_r(&p.post)?;
    let q_post = q.pre.lift(RrAlpha::POST).implies_r(&q.post)?;
    mk_contract(&pre, &p_peri.conj(&q_peri)?, &p_post.conj(&q_post)?)
}

/// Conditional on a set of initial states, distributed componentwise.
pub fn cond(p: &Contract, b: &BTreeSet<StateId>, q: &Contract) -> Result<Contract, ContractError> {
    mk_contract(
        &rr_cond(&p.pre, b, &q.pre)?,
        &rr_cond(&p.peri, b, &q.peri)?,
        &rr_cond(&p.post, b, &q.post)?,
    )
}

/// n-fold sequential power. The assumption guards every iteration prefix;
/// the intermediate behaviour is any number of completed rounds followed by
/// a quiescent one.
pub fn power(c: &Contract, n: usize) -> Result<Contract, ContractError> {
    let u = c.universe();
    let mut pre = rr_true(u, RrAlpha::CONDITION);
    let mut peri = RrRel::empty(u.clone(), RrAlpha::PERI);
    let mut iter = ii_r(u);
    for _ in 0..n {
        pre = pre.conj(&wp_r(&iter, &c.pre)?)?;
        peri = peri.disj(&seq_general(&iter, &c.peri)?)?;
        iter = rr_seq(&iter, &c.post)?;
    }
    mk_contract(&pre, &peri, &iter)
}

/// Whether every terminating run contributes at least one event.
pub fn is_productive(c: &Contract) -> bool {
    c.post.iter().all(|r| r.tt != crate::model::EMPTY_TRACE)
}

#[derive(Debug, Clone)]
pub struct TailRec {
    pub contract: Contract,
    /// Iterations of the body's postcondition until no run fits the trace
    /// bound; the fixed-point series is exact from here on.
    pub stabilised_at: usize,
}

/// Weakest fixed point of X ↦ seq(c, X): repeat the body forever. Requires a
/// productive body, whose iterates strictly lengthen the trace and so die
/// out at the bound; the resulting contract never terminates.
pub fn tail_rec(c: &Contract) -> Result<TailRec, ContractError> {
    if !is_productive(c) {
        return Err(ContractError::NotProductive);
    }
    let u = c.universe();
    let step_min = c.post.iter().map(|r| u.trace_len(r.tt)).min();
    let mut pre = rr_true(u, RrAlpha::CONDITION);
    let mut peri = RrRel::empty(u.clone(), RrAlpha::PERI);
    let mut iter = ii_r(u);
    let mut steps = 0usize;
    while !iter.is_empty() {
        pre = pre.conj(&wp_r(&iter, &c.pre)?)?;
        peri = peri.disj(&seq_general(&iter, &c.peri)?)?;
        // When even the shortest continuation overflows the trace bound the
        // next iterate is empty outright; skip the composition so the run is
        // not reported as truncated.
        let iter_min = iter.iter().map(|r| u.trace_len(r.tt)).min().unwrap_or(0);
        iter = match step_min {
            Some(m) if iter_min + m <= u.bound() => rr_seq(&iter, &c.post)?,
            _ => RrRel::empty(u.clone(), RrAlpha::POST),
        };
        steps += 1;
    }
    let post = RrRel::empty(u.clone(), RrAlpha::POST);
    Ok(TailRec { contract: mk_contract(&pre, &peri, &post)?, stabilised_at: steps })
}

/// The full-alphabet guard used to measure recursion: trace extension with
/// fewer than n contributed events.
pub fn gv_guard(u: &Arc<Universe>, n: usize) -> Rel {
    let rows = all_bindings(u, Alpha::full())
        .into_iter()
        .filter(|b| match u.trace_subtract(b.trp, b.tr) {
            Some(tt) => u.trace_len(tt) < n,
            None => false,
        })
        .collect::<BTreeSet<Binding>>();
    Rel::new(u.clone(), Alpha::full(), rows)
}

/// Check that a contract transformer is guarded on the given samples: what
/// it produces below n+1 contributed events depends only on its argument
/// below n. Guarded transformers have unique fixed points. The check runs at
/// the full-relation level; since the transformer acts on the theory, the
/// guarded argument re-enters it through the healthiness conditions before
/// each application.
pub fn gv_guard_check<F>(
    f: F,
    samples: &[Contract],
    n_max: usize,
) -> Result<bool, ContractError>
where
    F: Fn(&Contract) -> Result<Contract, ContractError>,
{
    let lift = |x: &Rel| -> Result<Rel, ContractError> {
        let h = healthiness::apply(HealthName::SRD, x)?;
        Ok(expand(&f(&contract_of(&h)?)?))
    };
    for c in samples {
        let u = c.universe().clone();
        let p = expand(c);
        for n in 0..n_max {
            let lhs = lift(&p)?.conj(&gv_guard(&u, n + 1))?;
            let rhs = lift(&p.conj(&gv_guard(&u, n))?)?.conj(&gv_guard(&u, n + 1))?;
            if lhs != rhs {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefineReport {
    pub holds: bool,
    pub pre_ok: bool,
    pub peri_ok: bool,
    pub post_ok: bool,
    /// Initial observations the target's assumption admits but the
    /// candidate's does not.
    pub pre_counterexamples: Vec<RrRow>,
    /// Candidate quiescent rows, inside the target's assumption, that the
    /// target does not allow.
    pub peri_counterexamples: Vec<RrRow>,
    /// Candidate terminating rows, inside the target's assumption, that the
    /// target does not allow.
    pub post_counterexamples: Vec<RrRow>,
}

/// Check target ⊑ candidate: the candidate may assume less and do less. Three
/// obligations: the candidate's assumption is no stronger, and under the
/// target's assumption its quiescent and terminating observations are
/// allowed by the target.
pub fn refines(
    target: &Contract,
    candidate: &Contract,
    max_counterexamples: usize,
) -> Result<RefineReport, ContractError> {
    if !Arc::ptr_eq(target.universe(), candidate.universe()) {
        return Err(ContractError::UniverseMismatch);
    }
    // Direct membership sweep over the stronger side: never materialises a
    // complement, which matters when the weaker side is a dense relation.
    let excess = |stronger: &RrRel, weaker: &RrRel| -> (bool, Vec<RrRow>) {
        let mut ces = Vec::new();
        let mut ok = true;
        for r in stronger.iter() {
            if !weaker.contains(r) {
                ok = false;
                if ces.len() < max_counterexamples {
                    ces.push(r);
                } else {
                    break;
                }
            }
        }
        (ok, ces)
    };
    let (pre_ok, pre_ces) = excess(&target.pre, &candidate.pre);
    let (peri_ok, peri_ces) =
        excess(&candidate.peri.restrict_by_cond(&target.pre)?, &target.peri);
    let (post_ok, post_ces) =
        excess(&candidate.post.restrict_by_cond(&target.pre)?, &target.post);
    Ok(RefineReport {
        holds: pre_ok && peri_ok && post_ok,
        pre_ok,
        peri_ok,
        post_ok,
        pre_counterexamples: pre_ces,
        peri_counterexamples: peri_ces,
        post_counterexamples: post_ces,
    })
}

/// Contract equivalence: equal assumptions and, under them, equal quiescent
/// and terminating observations.
pub fn equiv(p: &Contract, q: &Contract) -> Result<bool, ContractError> {
    Ok(p.pre == q.pre
        && p.peri.restrict_by_cond(&q.pre)? == q.peri.restrict_by_cond(&p.pre)?
        && p.post.restrict_by_cond(&q.pre)? == q.post.restrict_by_cond(&p.pre)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::healthiness::{ii_srd, theory_lattice};
    use crate::model::{
        mu, nu, state_display, trace_display, ChannelDecl, FixOpts, StateVarDecl, Value, VarDom,
        EMPTY_TRACE,
    };
    use crate::reactive_relations::{
        all_rows, prefix_closure, random_rr, random_rr_post, subst_init,
    };
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

    fn random_contract(u: &Arc<Universe>, rng: &mut ChaCha8Rng) -> Contract {
        let pre = prefix_closure(&random_rr(u, RrAlpha::CONDITION, 0.7, rng)).unwrap();
        let peri = random_rr(u, RrAlpha::PERI, 0.3, rng);
        let post = random_rr_post(u, 0.3, rng);
        mk_contract(&pre, &peri, &post).unwrap()
    }

    fn event(u: &Arc<Universe>, name: &str) -> crate::model::EventId {
        (0..u.n_events())
            .map(|i| crate::model::EventId(i as u16))
            .find(|&e| u.event(e).to_string() == name)
            .unwrap()
    }

    /// Offer one `a` event, then terminate with the state unchanged.
    fn prefix_then_skip(u: &Arc<Universe>, name: &str) -> Contract {
        let e = event(u, name);
        let t = u.trace_id(&[e]).unwrap();
        let peri = RrRel::new(
            u.clone(),
            RrAlpha::PERI,
            all_rows(u, RrAlpha::PERI)
                .into_iter()
                .filter(|r| r.tt == EMPTY_TRACE && r.refp & (1 << e.0) == 0),
        );
        let post = RrRel::new(
            u.clone(),
            RrAlpha::POST,
            all_rows(u, RrAlpha::POST).into_iter().filter(|r| r.tt == t && r.stp == r.st),
        );
        mk_contract(&rr_true(u, RrAlpha::CONDITION), &peri, &post).unwrap()
    }

    /// Offer nothing, never terminate.
    fn stop(u: &Arc<Universe>) -> Contract {
        let peri = RrRel::new(
            u.clone(),
            RrAlpha::PERI,
            all_rows(u, RrAlpha::PERI).into_iter().filter(|r| r.tt == EMPTY_TRACE),
        );
        mk_contract(
            &rr_true(u, RrAlpha::CONDITION),
            &peri,
            &RrRel::empty(u.clone(), RrAlpha::POST),
        )
        .unwrap()
    }

    /// Every quiescent observation leaves some event unrefused.
    fn deadlock_free(u: &Arc<Universe>) -> Contract {
        let full = u.full_refusal();
        let peri = RrRel::new(
            u.clone(),
            RrAlpha::PERI,
            all_rows(u, RrAlpha::PERI).into_iter().filter(|r| r.refp != full),
        );
        mk_contract(&rr_true(u, RrAlpha::CONDITION), &peri, &rr_true(u, RrAlpha::POST))
            .unwrap()
    }

    #[test]
    fn extremes_match_theory_lattice() {
        let u = law_universe();
        let lat = theory_lattice(HealthName::SRD, &u, Alpha::full()).unwrap();
        assert_eq!(expand(&miracle(&u)), lat.top);
        assert_eq!(expand(&chaos(&u)), lat.bottom);
    }

    #[test]
    fn mk_contract_validates() {
        let u = law_universe();
        let tcond = rr_true(&u, RrAlpha::CONDITION);
        let tperi = rr_true(&u, RrAlpha::PERI);
        let tpost = rr_true(&u, RrAlpha::POST);
        // a condition holding at ⟨a⟩ but not at its prefix ε
        let e = event(&u, "a");
        let ta = u.trace_id(&[e]).unwrap();
        let broken = RrRel::new(
            u.clone(),
            RrAlpha::CONDITION,
            all_rows(&u, RrAlpha::CONDITION).into_iter().filter(|r| r.tt == ta),
        );
        assert_eq!(mk_contract(&broken, &tperi, &tpost), Err(ContractError::NotRC));
        assert_eq!(
            mk_contract(&tcond, &tpost, &tpost),
            Err(ContractError::PeriMentionsFinalState)
        );
        assert_eq!(
            mk_contract(&tcond, &tperi, &tperi),
            Err(ContractError::BadAlphabet {
                expected: RrAlpha::POST,
                found: RrAlpha::PERI
            })
        );
        let u2 = law_universe();
        assert_eq!(
            mk_contract(&rr_true(&u2, RrAlpha::CONDITION), &tperi, &tpost),
            Err(ContractError::UniverseMismatch)
        );
    }

    #[test]
    fn normalisation_restricts_to_assumption() {
        let u = law_universe();
        let e = event(&u, "a");
        // assume the environment never starts with an a
        let pre = RrRel::new(
            u.clone(),
            RrAlpha::CONDITION,
            all_rows(&u, RrAlpha::CONDITION)
                .into_iter()
                .filter(|r| u.trace_events(r.tt).first() != Some(&e)),
        );
        assert!(reactive_relations::is_rc(&pre).unwrap());
        let c =
            mk_contract(&pre, &rr_true(&u, RrAlpha::PERI), &rr_true(&u, RrAlpha::POST)).unwrap();
        assert!(c.peri().iter().all(|r| u.trace_events(r.tt).first() != Some(&e)));
        assert!(c.post().iter().all(|r| u.trace_events(r.tt).first() != Some(&e)));
        // anything under a false assumption collapses to chaos
        let empty = RrRel::empty(u.clone(), RrAlpha::CONDITION);
        let c2 = mk_contract(&empty, &rr_true(&u, RrAlpha::PERI), &rr_true(&u, RrAlpha::POST))
            .unwrap();
        assert_eq!(c2, chaos(&u));
    }

    #[test]
    fn round_trips_through_expansion() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut samples = vec![
            miracle(&u),
            chaos(&u),
            skip_srd(&u),
            assigns_rd(&u, &[("x".into(), StateExpr::Bool(true))]),
            prefix_then_skip(&u, "a"),
            stop(&u),
            deadlock_free(&u),
        ];
        for _ in 0..5 {
            samples.push(random_contract(&u, &mut rng));
        }
        for c in &samples {
            let full = expand(c);
            assert!(healthiness::is_healthy(HealthName::NSRD, &full).unwrap());
            assert_eq!(&contract_of(&full).unwrap(), c);
        }
    }

    #[test]
    fn contract_of_requires_srd() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = crate::model::random_rel(&u, Alpha::full(), &mut rng);
        assert_eq!(contract_of(&raw), Err(ContractError::NotSrdHealthy));
    }

    #[test]
    fn srd_relations_normalise_through_reactive_skip() {
        let u = law_universe();
        let e = event(&u, "a");
        let ta = u.trace_id(&[e]).unwrap();
        // diverges exactly at contribution ⟨a⟩: the complement condition is
        // not prefix-closed, so this relation is SRD but not normal
        let pre = RrRel::new(
            u.clone(),
            RrAlpha::CONDITION,
            all_rows(&u, RrAlpha::CONDITION).into_iter().filter(|r| r.tt != ta),
        );
        let mut rows = BTreeSet::new();
        for b in all_bindings(&u, Alpha::full()) {
            let keep = if !(b.ok && component_at(&pre, &u, &b)) {
                true
            } else if !b.okp {
                false
            } else if b.waitp {
                false
            } else {
                match u.trace_subtract(b.trp, b.tr) {
                    Some(tt) => tt == EMPTY_TRACE && b.stp == b.st,
                    None => false,
                }
            };
            if keep {
                rows.insert(b);
            }
        }
        let p = healthiness::apply(HealthName::SRD, &Rel::new(u.clone(), Alpha::full(), rows))
            .unwrap();
        assert!(healthiness::is_healthy(HealthName::SRD, &p).unwrap());
        assert!(!healthiness::is_healthy(HealthName::NSRD, &p).unwrap());
        let c = contract_of(&p).unwrap();
        // the recovered assumption is the largest prefix-closed part: no
        // trace with an ⟨a⟩ prefix survives
        for r in c.pre().iter() {
            assert!(u.trace_events(r.tt).first() != Some(&e));
        }
        // composing with the reactive skip is exactly that normalisation
        assert_eq!(p.seq_compose(&ii_srd(&u)).unwrap(), expand(&c));
    }

    #[test]
    fn compositions_match_the_relational_model() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b: BTreeSet<StateId> = reactive_relations::states_where(&u, |s| {
            s.0[0] == Value::Bool(true)
        });
        let st_alpha = Alpha::of(&[crate::model::Var::St]);
        let b_full = Rel::from_rows(
            u.clone(),
            st_alpha,
            all_bindings(&u, st_alpha)
                .into_iter()
                .filter(|bind| u.state(bind.st).0[0] == Value::Bool(true)),
        );
        for _ in 0..5 {
            let c1 = random_contract(&u, &mut rng);
            let c2 = random_contract(&u, &mut rng);
            let (e1, e2) = (expand(&c1), expand(&c2));
            assert_eq!(expand(&seq(&c1, &c2).unwrap()), e1.seq_compose(&e2).unwrap());
            assert_eq!(expand(&intchoice(&c1, &c2).unwrap()), e1.disj(&e2).unwrap());
            assert_eq!(expand(&conj(&c1, &c2).unwrap()), e1.conj(&e2).unwrap());
            assert_eq!(expand(&cond(&c1, &b, &c2).unwrap()), e1.cond(&b_full, &e2).unwrap());
        }
    }

    #[test]
    fn reactive_design_laws() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mir = miracle(&u);
        let cha = chaos(&u);
        let skip = skip_srd(&u);
        for c in [
            prefix_then_skip(&u, "a"),
            stop(&u),
            random_contract(&u, &mut rng),
            random_contract(&u, &mut rng),
        ] {
            assert_eq!(intchoice(&mir, &c).unwrap(), c);
            assert_eq!(intchoice(&cha, &c).unwrap(), cha);
            assert_eq!(seq(&skip, &c).unwrap(), c);
            assert_eq!(seq(&c, &skip).unwrap(), c);
            let nonterm =
                mk_contract(c.pre(), c.peri(), &RrRel::empty(u.clone(), RrAlpha::POST)).unwrap();
            assert_eq!(seq(&nonterm, &c).unwrap(), nonterm);
            assert_eq!(seq(&mir, &c).unwrap(), mir);
            assert_eq!(seq(&cha, &c).unwrap(), cha);
            assert_eq!(seq(&c, &mir).unwrap(), nonterm);
            let guarded = mk_contract(
                &c.pre().conj(&wp_r(c.post(), &RrRel::empty(u.clone(), RrAlpha::CONDITION))
                    .unwrap())
                    .unwrap(),
                c.peri(),
                &RrRel::empty(u.clone(), RrAlpha::POST),
            )
            .unwrap();
            assert_eq!(seq(&c, &cha).unwrap(), guarded);
            // lattice identities for conjunction
            assert_eq!(conj(&c, &cha).unwrap(), c);
            assert_eq!(conj(&c, &mir).unwrap(), mir);
        }
    }

    #[test]
    fn reactive_assignment_laws() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let not_x: Vec<(String, StateExpr)> =
            vec![("x".into(), StateExpr::Not(Box::new(StateExpr::Var("x".into()))))];
        let to_false: Vec<(String, StateExpr)> = vec![("x".into(), StateExpr::Bool(false))];
        assert_eq!(assigns_rd(&u, &[]), skip_srd(&u));
        for c in [prefix_then_skip(&u, "b"), random_contract(&u, &mut rng)] {
            let lhs = seq(&assigns_rd(&u, &not_x), &c).unwrap();
            let rhs = mk_contract(
                &subst_init(&u, &not_x, c.pre()),
                &subst_init(&u, &not_x, c.peri()),
                &subst_init(&u, &not_x, c.post()),
            )
            .unwrap();
            assert_eq!(lhs, rhs);
        }
        // x:=false after x:=¬x is just x:=false
        assert_eq!(
            seq(&assigns_rd(&u, &not_x), &assigns_rd(&u, &to_false)).unwrap(),
            assigns_rd(&u, &to_false)
        );
        // and x:=¬x twice is the identity
        assert_eq!(
            seq(&assigns_rd(&u, &not_x), &assigns_rd(&u, &not_x)).unwrap(),
            skip_srd(&u)
        );
        assert_eq!(seq(&assigns_rd(&u, &not_x), &miracle(&u)).unwrap(), miracle(&u));
        assert_eq!(seq(&assigns_rd(&u, &not_x), &chaos(&u)).unwrap(), chaos(&u));
    }

    #[test]
    fn divergence_shows_up_in_the_assumption() {
        let u = law_universe();
        let e = event(&u, "a");
        // offer a once, then fail: the assumption forbids the a ever happening
        let c = seq(&prefix_then_skip(&u, "a"), &chaos(&u)).unwrap();
        for r in all_rows(&u, RrAlpha::CONDITION) {
            let diverging = u.trace_events(r.tt).first() == Some(&e);
            assert_eq!(c.pre().contains(r), !diverging);
        }
    }

    #[test]
    fn refinement_laws_and_reports() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mir = miracle(&u);
        let cha = chaos(&u);
        for _ in 0..4 {
            let c = random_contract(&u, &mut rng);
            assert!(refines(&c, &c, 5).unwrap().holds);
            assert!(refines(&c, &mir, 5).unwrap().holds);
            assert!(refines(&cha, &c, 5).unwrap().holds);
            let d = random_contract(&u, &mut rng);
            // triple-level verdict must agree with the relational model
            let triple = refines(&c, &d, 5).unwrap().holds;
            let full = expand(&c).refines(&expand(&d), 5).unwrap().holds;
            assert_eq!(triple, full);
        }
        // a miracle is refined by nothing observable
        let c = prefix_then_skip(&u, "a");
        let rep = refines(&mir, &c, 5).unwrap();
        assert!(!rep.holds && rep.pre_ok && !rep.peri_ok && !rep.post_ok);
    }

    #[test]
    fn deadlock_freedom_verdicts() {
        let u = law_universe();
        let cdf = deadlock_free(&u);
        assert!(refines(&cdf, &prefix_then_skip(&u, "a"), 5).unwrap().holds);
        let rep = refines(&cdf, &stop(&u), 5).unwrap();
        assert!(!rep.holds && rep.pre_ok && !rep.peri_ok && rep.post_ok);
        // the witness is the quiescent row refusing the whole alphabet
        assert!(rep
            .peri_counterexamples
            .iter()
            .all(|r| r.refp == u.full_refusal() && r.tt == EMPTY_TRACE));
        assert!(!rep.peri_counterexamples.is_empty());
    }

    #[test]
    fn direct_constructors_match_their_filter_forms() {
        let u = law_universe();
        assert_eq!(stop_srd(&u), stop(&u));
        assert_eq!(prefix_srd(&u, event(&u, "a")), prefix_then_skip(&u, "a"));
    }

    #[test]
    fn external_choice_resolves_on_the_first_event() {
        let u = law_universe();
        let a_chaos = seq(&prefix_srd(&u, event(&u, "a")), &chaos(&u)).unwrap();
        let b_skip = prefix_then_skip(&u, "b");
        let c = extchoice(&a_chaos, &b_skip).unwrap();
        let ea = event(&u, "a");
        let eb = event(&u, "b");
        let tb = u.trace_id(&[eb]).unwrap();
        for r in all_rows(&u, RrAlpha::CONDITION) {
            assert_eq!(c.pre().contains(r), u.trace_events(r.tt).first() != Some(&ea));
        }
        for r in all_rows(&u, RrAlpha::PERI) {
            let offered = r.refp & (1 << ea.0) == 0 && r.refp & (1 << eb.0) == 0;
            assert_eq!(c.peri().contains(r), r.tt == EMPTY_TRACE && offered);
        }
        for r in all_rows(&u, RrAlpha::POST) {
            assert_eq!(c.post().contains(r), r.tt == tb && r.stp == r.st);
        }
    }

    #[test]
    fn external_choice_laws() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..6 {
            let c = random_contract(&u, &mut rng);
            let d = random_contract(&u, &mut rng);
            let e = random_contract(&u, &mut rng);
            assert_eq!(extchoice_indexed(&[c.clone()]).unwrap(), c);
            assert_eq!(extchoice(&c, &d).unwrap(), extchoice(&d, &c).unwrap());
            assert_eq!(
                extchoice(&extchoice(&c, &d).unwrap(), &e).unwrap(),
                extchoice(&c, &extchoice(&d, &e).unwrap()).unwrap()
            );
        }
        // a miracle branch silences quiescence at the start: the event is
        // urgent, and only the prefix branch's termination remains
        let urgent = extchoice(&prefix_then_skip(&u, "a"), &miracle(&u)).unwrap();
        assert!(urgent.peri().is_empty());
        assert_eq!(urgent.post(), prefix_then_skip(&u, "a").post());
        assert_eq!(urgent.pre(), &rr_true(&u, RrAlpha::CONDITION));
    }

    #[test]
    fn power_is_iterated_composition() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for c in [prefix_then_skip(&u, "a"), random_contract(&u, &mut rng)] {
            assert_eq!(power(&c, 0).unwrap(), skip_srd(&u));
            assert_eq!(power(&c, 1).unwrap(), c);
            let mut acc = c.clone();
            for n in 2..4 {
                acc = seq(&acc, &c).unwrap();
                assert_eq!(power(&c, n).unwrap(), acc);
            }
        }
    }

    #[test]
    fn productivity() {
        let u = law_universe();
        assert!(is_productive(&prefix_then_skip(&u, "a")));
        assert!(is_productive(&miracle(&u)));
        assert!(!is_productive(&skip_srd(&u)));
        assert_eq!(tail_rec(&skip_srd(&u)).unwrap_err(), ContractError::NotProductive);
    }

    #[test]
    fn tail_recursion_repeats_the_body() {
        let u = law_universe();
        let e = event(&u, "a");
        let rec = tail_rec(&prefix_then_skip(&u, "a")).unwrap();
        // iterates die out one step past the trace bound
        assert_eq!(rec.stabilised_at, u.bound() + 1);
        let c = &rec.contract;
        assert_eq!(c.pre(), &rr_true(&u, RrAlpha::CONDITION));
        assert!(c.post().is_empty());
        // quiescent rows: any number of completed a rounds, a never refused
        for r in all_rows(&u, RrAlpha::PERI) {
            let all_a = u.trace_events(r.tt).iter().all(|&x| x == e);
            let offers_a = r.refp & (1 << e.0) == 0;
            assert_eq!(c.peri().contains(r), all_a && offers_a);
        }
    }

    #[test]
    fn tail_recursion_is_the_unique_fixed_point() {
        let u = law_universe();
        let body = expand(&prefix_then_skip(&u, "a"));
        let f = |x: &Rel| {
            let h = healthiness::apply(HealthName::SRD, x).unwrap();
            body.seq_compose(&h).unwrap()
        };
        let lo = mu(&u, Alpha::full(), &f, FixOpts::default()).unwrap();
        let hi = nu(&u, Alpha::full(), &f, FixOpts::default()).unwrap();
        assert_eq!(lo.rel, hi.rel);
        let rec = tail_rec(&prefix_then_skip(&u, "a")).unwrap();
        assert_eq!(expand(&rec.contract), lo.rel);
    }

    #[test]
    fn guardedness_of_transformers() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let samples =
            vec![prefix_then_skip(&u, "a"), stop(&u), random_contract(&u, &mut rng)];
        let body = prefix_then_skip(&u, "a");
        let prefixed = |x: &Contract| seq(&body, x);
        assert!(gv_guard_check(prefixed, &samples, 2).unwrap());
        let identity = |x: &Contract| Ok(x.clone());
        assert!(!gv_guard_check(identity, &samples, 2).unwrap());
        let stopped = stop(&u);
        let constant = |_: &Contract| Ok(stopped.clone());
        assert!(gv_guard_check(constant, &samples, 2).unwrap());
    }

    #[test]
    fn equivalence_is_mutual_refinement() {
        let u = law_universe();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..6 {
            let c = random_contract(&u, &mut rng);
            let d = random_contract(&u, &mut rng);
            let both = refines(&c, &d, 1).unwrap().holds && refines(&d, &c, 1).unwrap().holds;
            assert_eq!(equiv(&c, &d).unwrap(), both);
            assert!(equiv(&c, &c).unwrap());
        }
    }

    #[test]
    fn rendering_is_stable_and_labelled() {
        let u = law_universe();
        let c = prefix_then_skip(&u, "a");
        let text = c.render();
        assert!(text.starts_with("pre:\n"));
        assert!(text.contains("peri:\n"));
        assert!(text.contains("post:\n"));
        let first_peri = c.peri().iter().next().unwrap();
        assert!(text.contains(&row_display(&u, RrAlpha::PERI, first_peri)));
        assert_eq!(text, c.render());
        // display helpers spell rows the way the reports do
        let st = StateId(0);
        assert!(state_display(&u, st).starts_with('{'));
        assert!(trace_display(&u, EMPTY_TRACE) == "⟨⟩");
    }
}
