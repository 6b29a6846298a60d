//! Second route to a contract: execute the process structurally,
//! collecting per-initial-state divergence traces, quiescent failures and
//! terminal states, then reassemble the triple those observations induce.
//! Shares nothing with the calculational route past `mk_contract`, which
//! is what makes agreement between the two worth testing.
//!
//! Interleaving has no execution rule here; everything else in the
//! process syntax is covered.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::contracts::{mk_contract, Contract};
use crate::model::{apply_subst, EventId, RefMask, StateExpr, StateId, Universe, Value};
use crate::reactive_relations::{RrAlpha, RrRel, RrRow};
use crate::trace_algebra::Event;

use super::denote::{
    check_expr, check_map_var, check_var, resolve_ref, DenoteError, MAX_REF_DEPTH,
};
use super::{ModelSpec, ProcAst};

/// What one initial state can be observed to do: traces after which the
/// process is dead (divergences), stable refusals (failures), and traces
/// ending in termination with a final state (terminals). Traces longer
/// than the universe bound are dropped at the point of extension.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Obs {
    pub divergences: BTreeSet<Vec<EventId>>,
    pub failures: BTreeSet<(Vec<EventId>, RefMask)>,
    pub terminals: BTreeSet<(Vec<EventId>, StateId)>,
}

impl Obs {
    fn terminal(tt: Vec<EventId>, st: StateId) -> Obs {
        let mut o = Obs::default();
        o.terminals.insert((tt, st));
        o
    }

    fn diverged() -> Obs {
        let mut o = Obs::default();
        o.divergences.insert(Vec::new());
        o
    }

    /// Deadlock: every refusal set is stable at the empty trace.
    fn stopped(u: &Universe) -> Obs {
        let mut o = Obs::default();
        for refp in 0..=u.full_refusal() {
            o.failures.insert((Vec::new(), refp));
        }
        o
    }

    fn has_empty_terminal(&self) -> bool {
        self.terminals.iter().any(|(w, _)| w.is_empty())
    }
}

fn glue(bound: usize, w: &[EventId], tail: &[EventId]) -> Option<Vec<EventId>> {
    if w.len() + tail.len() > bound {
        return None;
    }
    let mut out = Vec::with_capacity(w.len() + tail.len());
    out.extend_from_slice(w);
    out.extend_from_slice(tail);
    Some(out)
}

/// Extends `base` with everything `tail` observes after the trace `w`,
/// dropping extensions past the bound.
fn graft(u: &Universe, base: &mut Obs, w: &[EventId], tail: &Obs) {
    let l = u.bound();
    for d in &tail.divergences {
        if let Some(t) = glue(l, w, d) {
            base.divergences.insert(t);
        }
    }
    for (f, refp) in &tail.failures {
        if let Some(t) = glue(l, w, f) {
            base.failures.insert((t, *refp));
        }
    }
    for (t, stp) in &tail.terminals {
        if let Some(t) = glue(l, w, t) {
            base.terminals.insert((t, *stp));
        }
    }
}

fn truth(u: &Universe, cond: &StateExpr, st: StateId) -> bool {
    let consts = HashMap::new();
    cond.eval(u, u.state(st), &consts) == Some(Value::Bool(true))
}

fn obs(
    spec: &ModelSpec,
    u: &Arc<Universe>,
    p: &ProcAst,
    st: StateId,
    depth: usize,
) -> Result<Obs, DenoteError> {
    match p {
        ProcAst::Skip => Ok(Obs::terminal(Vec::new(), st)),
        ProcAst::Stop => Ok(Obs::stopped(u)),
        ProcAst::Chaos => Ok(Obs::diverged()),
        ProcAst::Miracle => Ok(Obs::default()),
        ProcAst::Prefix { channel, args, body } => {
            let Some(decl) = u.channels().iter().find(|c| c.name == *channel) else {
                return Err(DenoteError::UndeclaredChannel(channel.clone()));
            };
            if decl.arg_ranges.len() != args.len() {
                return Err(DenoteError::ArityMismatch {
                    name: channel.clone(),
                    expected: decl.arg_ranges.len(),
                    got: args.len(),
                });
            }
            for a in args {
                check_expr(u, a)?;
            }
            let consts = HashMap::new();
            let s = u.state(st);
            let vals: Option<Vec<i64>> = args
                .iter()
                .map(|a| match a.eval(u, s, &consts) {
                    Some(Value::Int(v)) => Some(v),
                    _ => None,
                })
                .collect();
            let Some(vals) = vals else { return Ok(Obs::default()) };
            let Some(e) = u.event_id(&Event::new(channel, vals)) else {
                return Ok(Obs::default());
            };
            let mut out = Obs::default();
            let bit: RefMask = 1 << e.0;
            for refp in 0..=u.full_refusal() {
                if refp & bit == 0 {
                    out.failures.insert((Vec::new(), refp));
                }
            }
            let after = obs(spec, u, body, st, depth)?;
            graft(u, &mut out, &[e], &after);
            Ok(out)
        }
        ProcAst::Guard { cond, body } => {
            check_expr(u, cond)?;
            if truth(u, cond, st) {
                obs(spec, u, body, st, depth)
            } else {
                Ok(Obs::stopped(u))
            }
        }
        ProcAst::Assign { var, value } => {
            check_var(u, var)?;
            check_expr(u, value)?;
            let sigma = [(var.clone(), value.clone())];
            Ok(match apply_subst(u, &sigma, st, &HashMap::new()) {
                Some(stp) => Obs::terminal(Vec::new(), stp),
                None => Obs::default(),
            })
        }
        ProcAst::IndexedAssign { var, index, value } => {
            check_map_var(u, var)?;
            check_expr(u, index)?;
            check_expr(u, value)?;
            let in_dom = StateExpr::InDom(Box::new(index.clone()), var.clone());
            if !truth(u, &in_dom, st) {
                return Ok(Obs::diverged());
            }
            let upd = StateExpr::MapUpd(
                var.clone(),
                Box::new(index.clone()),
                Box::new(value.clone()),
            );
            let sigma = [(var.clone(), upd)];
            Ok(match apply_subst(u, &sigma, st, &HashMap::new()) {
                Some(stp) => Obs::terminal(Vec::new(), stp),
                None => Obs::default(),
            })
        }
        ProcAst::Seq(l, r) => {
            let first = obs(spec, u, l, st, depth)?;
            let mut out = Obs::default();
            out.divergences = first.divergences;
            out.failures = first.failures;
            for (w, mid) in &first.terminals {
                let rest = obs(spec, u, r, *mid, depth)?;
                graft(u, &mut out, w, &rest);
            }
            Ok(out)
        }
        ProcAst::ExtChoice(ps) => {
            let branches: Vec<Obs> =
                ps.iter().map(|q| obs(spec, u, q, st, depth)).collect::<Result<_, _>>()?;
            let mut out = Obs::default();
            // Before anything happens the environment faces every branch
            // at once, so a refusal must be stable in all of them.
            for refp in 0..=u.full_refusal() {
                if branches.iter().all(|b| b.failures.contains(&(Vec::new(), refp))) {
                    out.failures.insert((Vec::new(), refp));
                }
            }
            for b in branches {
                out.divergences.extend(b.divergences);
                out.failures.extend(b.failures.into_iter().filter(|(w, _)| !w.is_empty()));
                out.terminals.extend(b.terminals);
            }
            Ok(out)
        }
        ProcAst::IntChoice(ps) => {
            let mut out = Obs::default();
            for q in ps {
                let b = obs(spec, u, q, st, depth)?;
                out.divergences.extend(b.divergences);
                out.failures.extend(b.failures);
                out.terminals.extend(b.terminals);
            }
            Ok(out)
        }
        ProcAst::Cond { cond, then_branch, else_branch } => {
            check_expr(u, cond)?;
            if truth(u, cond, st) {
                obs(spec, u, then_branch, st, depth)
            } else {
                obs(spec, u, else_branch, st, depth)
            }
        }
        ProcAst::MuTail(body) => {
            // The body must make progress from every state, or unfolding
            // from some reachable state would never leave the frontier.
            let mut per_state: Vec<Obs> = Vec::with_capacity(u.n_states());
            for i in 0..u.n_states() {
                let o = obs(spec, u, body, StateId(i as u32), depth)?;
                if o.has_empty_terminal() {
                    return Err(DenoteError::NotProductive);
                }
                per_state.push(o);
            }
            let mut out = Obs::default();
            let mut frontier: BTreeSet<(Vec<EventId>, StateId)> = BTreeSet::new();
            frontier.insert((Vec::new(), st));
            while !frontier.is_empty() {
                let mut next = BTreeSet::new();
                for (w, s) in frontier {
                    let o = &per_state[s.0 as usize];
                    let l = u.bound();
                    for d in &o.divergences {
                        if let Some(t) = glue(l, &w, d) {
                            out.divergences.insert(t);
                        }
                    }
                    for (f, refp) in &o.failures {
                        if let Some(t) = glue(l, &w, f) {
                            out.failures.insert((t, *refp));
                        }
                    }
                    for (t, mid) in &o.terminals {
                        if let Some(t) = glue(l, &w, t) {
                            next.insert((t, *mid));
                        }
                    }
                }
                frontier = next;
            }
            Ok(out)
        }
        ProcAst::Interleave(_, _) => Err(DenoteError::OracleUnsupported("interleaving")),
        ProcAst::Ref { name, args } => {
            let body = resolve_ref(spec, name, args)?;
            if depth >= MAX_REF_DEPTH {
                return Err(DenoteError::RefDepthExceeded);
            }
            obs(spec, u, &body, st, depth + 1)
        }
    }
}

/// Runs the process from one initial state.
pub fn observe(
    spec: &ModelSpec,
    u: &Arc<Universe>,
    p: &ProcAst,
    st: StateId,
) -> Result<Obs, DenoteError> {
    obs(spec, u, p, st, 0)
}

/// Assembles the contract the observations induce: the precondition holds
/// at a trace with no divergence prefix, failures become quiescent rows,
/// terminals become final-state rows under every refusal.
pub fn denote_by_execution(
    spec: &ModelSpec,
    u: &Arc<Universe>,
    p: &ProcAst,
) -> Result<Contract, DenoteError> {
    let mut pre = Vec::new();
    let mut peri = Vec::new();
    let mut post = Vec::new();
    for i in 0..u.n_states() {
        let st = StateId(i as u32);
        let o = obs(spec, u, p, st, 0)?;
        for t in 0..u.n_traces() {
            let tt = crate::model::TraceId(t as u32);
            let evs = u.trace_events(tt);
            let dead = o
                .divergences
                .iter()
                .any(|d| evs.len() >= d.len() && &evs[..d.len()] == d.as_slice());
            if !dead {
                pre.push(RrRow { st, tt, ..RrRow::default() });
            }
        }
        for (w, refp) in &o.failures {
            let tt = u.trace_id(w).expect("failure trace within bound");
            peri.push(RrRow { st, tt, refp: *refp, ..RrRow::default() });
        }
        for (w, stp) in &o.terminals {
            let tt = u.trace_id(w).expect("terminal trace within bound");
            for refp in 0..=u.full_refusal() {
                post.push(RrRow { st, tt, stp: *stp, refp });
            }
        }
    }
    Ok(mk_contract(
        &RrRel::new(u.clone(), RrAlpha::CONDITION, pre),
        &RrRel::new(u.clone(), RrAlpha::PERI, peri),
        &RrRel::new(u.clone(), RrAlpha::POST, post),
    )?)
}
