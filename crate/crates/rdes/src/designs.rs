//! Classical designs: assumption/commitment pairs over (ok, st, ok', st'),
//! plus the lifting that embeds a state-only design into a reactive contract
//! with an empty trace contribution. Designs carry no trace or refusal
//! observations, so they model imperative specifications; the lift and drop
//! functions connect those to the reactive world.

use std::sync::Arc;

use thiserror::Error;

use crate::contracts::{mk_contract, Contract, ContractError};
use crate::healthiness::{self, HealthName};
use crate::model::{
    all_bindings, apply_subst, Alpha, Binding, ModelError, Rel, State, StateExpr, StateId,
    TraceId, Universe, Var, VarVal, EMPTY_TRACE,
};
use crate::reactive_relations::{RrAlpha, RrRel, RrRow};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DesignError {
    #[error("relation is not a design")]
    NotHHealthy,
    #[error("design is not normal: its assumption depends on the final state")]
    NotNHealthy,
    #[error("state component over unexpected alphabet {0}")]
    BadAlphabet(Alpha),
    #[error("components belong to different universes")]
    UniverseMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// The alphabet of state relations: initial and final state.
pub fn state_alpha() -> Alpha {
    Alpha::of(&[Var::St, Var::StP])
}

/// The alphabet of state conditions: initial state only.
pub fn init_alpha() -> Alpha {
    Alpha::of(&[Var::St])
}

/// A state relation from a predicate on (before, after).
pub fn state_rel(u: &Arc<Universe>, pred: impl Fn(&State, &State) -> bool) -> Rel {
    let alpha = state_alpha();
    Rel::from_rows(
        u.clone(),
        alpha,
        all_bindings(u, alpha).into_iter().filter(|b| pred(u.state(b.st), u.state(b.stp))),
    )
}

/// A state condition from a predicate on the initial state.
pub fn state_pred(u: &Arc<Universe>, pred: impl Fn(&State) -> bool) -> Rel {
    let alpha = init_alpha();
    Rel::from_rows(
        u.clone(),
        alpha,
        all_bindings(u, alpha).into_iter().filter(|b| pred(u.state(b.st))),
    )
}

/// A relation over {ok, ok', st, st'} fixed under the design healthiness
/// conditions.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Design(Rel);

impl Design {
    pub fn rel(&self) -> &Rel {
        &self.0
    }
    pub fn universe(&self) -> &Arc<Universe> {
        self.0.universe()
    }

    /// Admit an existing relation after checking it lies in the theory.
    pub fn from_rel(p: &Rel) -> Result<Design, DesignError> {
        if p.alpha() != Alpha::design() {
            return Err(DesignError::BadAlphabet(p.alpha()));
        }
        if !healthiness::is_healthy(HealthName::H, p)? {
            return Err(DesignError::NotHHealthy);
        }
        Ok(Design(p.clone()))
    }
}

fn check_state_component(u: &Arc<Universe>, p: &Rel) -> Result<(), DesignError> {
    if !Arc::ptr_eq(u, p.universe()) {
        return Err(DesignError::UniverseMismatch);
    }
    if !p.alpha().is_subset(state_alpha()) {
        return Err(DesignError::BadAlphabet(p.alpha()));
    }
    Ok(())
}

/// The design turnstile: if started with the assumption holding, terminate
/// with the commitment holding.
pub fn design(p: &Rel, q: &Rel) -> Result<Design, DesignError> {
    let u = p.universe().clone();
    check_state_component(&u, p)?;
    check_state_component(&u, q)?;
    let alpha = Alpha::design();
    let rows = all_bindings(&u, alpha)
        .into_iter()
        .filter(|b| !(b.ok && p.contains(b)) || (b.okp && q.contains(b)));
    Ok(Design(Rel::from_rows(u, alpha, rows)))
}

/// Unconditional abort: no commitment survives a false assumption.
pub fn bottom_d(u: &Arc<Universe>) -> Design {
    Design(Rel::bottom(u.clone(), Alpha::design()))
}

/// The unimplementable design: assumes everything, commits to nothing.
pub fn top_d(u: &Arc<Universe>) -> Design {
    design(&state_pred(u, |_| true), &state_rel(u, |_, _| false)).expect("fixed components")
}

/// Design identity: terminate with the state unchanged.
pub fn skip_d(u: &Arc<Universe>) -> Design {
    design(&state_pred(u, |_| true), &state_rel(u, |s, s2| s == s2)).expect("fixed components")
}

/// Assignment as a design: always terminates with the substituted state.
pub fn assigns_d(u: &Arc<Universe>, sigma: &[(String, StateExpr)]) -> Design {
    let consts = std::collections::HashMap::new();
    let rel = Rel::from_rows(
        u.clone(),
        state_alpha(),
        (0..u.n_states()).filter_map(|i| {
            let st = StateId(i as u32);
            apply_subst(u, sigma, st, &consts).map(|stp| Binding { st, stp, ..Binding::default() })
        }),
    );
    design(&state_pred(u, |_| true), &rel).expect("fixed components")
}

/// Nondeterministic choice of designs.
pub fn meet_d(p: &Design, q: &Design) -> Result<Design, DesignError> {
    Ok(Design(p.0.disj(&q.0)?))
}

/// Conditional on the initial state.
pub fn cond_d(p: &Design, b: &Rel, q: &Design) -> Result<Design, DesignError> {
    Ok(Design(p.0.cond(b, &q.0)?))
}

/// Sequential composition of designs.
pub fn seq_d(p: &Design, q: &Design) -> Result<Design, DesignError> {
    Ok(Design(p.0.seq_compose(&q.0)?))
}

fn design_section(d: &Rel, ok: bool, okp: bool) -> Rel {
    let u = d.universe().clone();
    let alpha = state_alpha();
    Rel::from_rows(
        u,
        alpha,
        all_bindings(d.universe(), alpha).into_iter().filter(|b| {
            let mut q = *b;
            q.set(Var::Ok, VarVal::B(ok));
            q.set(Var::OkP, VarVal::B(okp));
            d.contains(&q)
        }),
    )
}

/// The assumption of a design, recovered by substitution.
pub fn pre_d(d: &Rel) -> Result<Rel, DesignError> {
    if d.alpha() != Alpha::design() {
        return Err(DesignError::BadAlphabet(d.alpha()));
    }
    if !healthiness::is_healthy(HealthName::H, d)? {
        return Err(DesignError::NotHHealthy);
    }
    Ok(design_section(d, true, false).neg())
}

/// The commitment of a design, recovered by substitution; includes anything
/// permitted when the assumption fails.
pub fn post_d(d: &Rel) -> Result<Rel, DesignError> {
    if d.alpha() != Alpha::design() {
        return Err(DesignError::BadAlphabet(d.alpha()));
    }
    if !healthiness::is_healthy(HealthName::H, d)? {
        return Err(DesignError::NotHHealthy);
    }
    Ok(design_section(d, true, true))
}

/// Check target ⊑ candidate for designs: the candidate assumes no more, and
/// commits to no more wherever the target's assumption held.
pub fn design_refines(target: &Design, candidate: &Design) -> Result<bool, DesignError> {
    let p1 = pre_d(target.rel())?;
    let p2 = post_d(target.rel())?;
    let q1 = pre_d(candidate.rel())?;
    let q2 = post_d(candidate.rel())?;
    let total = all_bindings(target.universe(), state_alpha()).len();
    let weaker = p1.implies(&q1)?;
    let stronger = q2.conj(&p1)?.implies(&p2)?;
    Ok(weaker.len() == total && stronger.len() == total)
}

/// Hoare triple: under p, running q establishes r on termination.
pub fn hoare(p: &Rel, q: &Design, r: &Rel) -> Result<bool, DesignError> {
    design_refines(&design(p, r)?, q)
}

/// Specification statement: achieve `post` from `pre` changing only the
/// variables named in `frame`.
pub fn spec_stmt(
    u: &Arc<Universe>,
    frame: &[&str],
    pre: &Rel,
    post: &Rel,
) -> Result<Design, DesignError> {
    let fixed: Vec<usize> = u
        .state_vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| !frame.contains(&v.name.as_str()))
        .map(|(i, _)| i)
        .collect();
    check_state_component(u, post)?;
    let framed = Rel::from_rows(
        u.clone(),
        state_alpha(),
        all_bindings(u, state_alpha()).into_iter().filter(|b| {
            post.contains(b) && fixed.iter().all(|&i| u.state(b.st).0[i] == u.state(b.stp).0[i])
        }),
    );
    design(pre, &framed)
}

/// Embed a normal design as a contract: same assumption, no quiescent
/// observations, terminating runs contribute no events.
pub fn lift_rd(d: &Design) -> Result<Contract, DesignError> {
    if !healthiness::is_healthy(HealthName::N, d.rel())? {
        return Err(DesignError::NotNHealthy);
    }
    let u = d.universe().clone();
    let pre = pre_d(d.rel())?;
    let post = post_d(d.rel())?;
    let mut pre_rows = Vec::new();
    for i in 0..u.n_states() {
        let st = StateId(i as u32);
        // a normal design's assumption is final-state independent
        if pre.contains(&Binding { st, ..Binding::default() }) {
            for t in 0..u.n_traces() {
                pre_rows.push(RrRow { st, tt: TraceId(t as u32), ..RrRow::default() });
            }
        }
    }
    let mut post_rows = Vec::new();
    for b in post.rows() {
        for m in 0..=u.full_refusal() {
            post_rows.push(RrRow { st: b.st, tt: EMPTY_TRACE, stp: b.stp, refp: m });
        }
    }
    let pre_c = RrRel::new(u.clone(), RrAlpha::CONDITION, pre_rows);
    let peri = RrRel::empty(u.clone(), RrAlpha::PERI);
    let post_c = RrRel::new(u, RrAlpha::POST, post_rows);
    Ok(mk_contract(&pre_c, &peri, &post_c)?)
}

/// Project a contract back to a design: keep only what holds with an empty
/// trace contribution.
pub fn drop_dr(c: &Contract) -> Result<Design, DesignError> {
    let u = c.universe().clone();
    let pre = Rel::from_rows(
        u.clone(),
        init_alpha(),
        all_bindings(&u, init_alpha())
            .into_iter()
            .filter(|b| c.pre().contains(RrRow { st: b.st, ..RrRow::default() })),
    );
    let post = Rel::from_rows(
        u.clone(),
        state_alpha(),
        all_bindings(&u, state_alpha()).into_iter().filter(|b| {
            (0..=u.full_refusal()).any(|m| {
                c.post().contains(RrRow { st: b.st, tt: EMPTY_TRACE, stp: b.stp, refp: m })
            })
        }),
    );
    design(&pre, &post)
}
