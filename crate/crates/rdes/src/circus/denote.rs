//! Denotation of process syntax into contracts, elaboration of named
//! specification triples, and refinement checking against a specification
//! kept as predicates (so large universes never enumerate the spec side).

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::contracts::{
    assigns_rd, chaos, cond, extchoice_indexed, intchoice_indexed, miracle, mk_contract, seq,
    skip_srd, stop_srd, tail_rec, Contract, ContractError, RefineReport,
};
use crate::model::{
    RefMask, StateExpr, StateId, TraceId, Universe, UniverseError, Value, EMPTY_TRACE,
};
use crate::parallel::{interleave_merge, rd_par, ParError};
use crate::reactive_relations::{
    assigns_r, rr_true, state_cond, states_where, RrAlpha, RrRel, RrRow,
};
use crate::trace_algebra::Event;

use super::parser::subst_var;
use super::{resolve_event, CExpr, CPred, ContractDef, ModelSpec, ProcAst};

#[derive(Debug, Error)]
pub enum DenoteError {
    #[error("process `{0}` is not defined")]
    UndefinedProcess(String),
    #[error("`{name}` takes {expected} arguments, got {got}")]
    ArityMismatch { name: String, expected: usize, got: usize },
    #[error("arguments of `{0}` must be constant integers")]
    NonConstantArg(String),
    #[error("channel `{0}` is not declared")]
    UndeclaredChannel(String),
    #[error("variable `{0}` is not declared")]
    UndeclaredVariable(String),
    #[error("`{0}` is not a map variable")]
    NotAMapVariable(String),
    #[error("recursion body can terminate without contributing an event")]
    NotProductive,
    #[error("process references nest too deeply")]
    RefDepthExceeded,
    #[error("the execution oracle has no rule for {0}")]
    OracleUnsupported(&'static str),
    #[error("event `{0}` is outside the declared alphabet")]
    UnknownEvent(String),
    #[error("the {slot} of `{name}` mentions {what}, which is outside that slot's alphabet")]
    SpecScope { name: String, slot: &'static str, what: String },
    #[error("the precondition of `{0}` is not closed under trace prefixes")]
    SpecPreNotPrefixClosed(String),
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Par(#[from] ParError),
}

const DEFAULT_BOUND: usize = 4;
pub(super) const MAX_REF_DEPTH: usize = 64;

/// The universe a parsed model ranges over. A missing `bound` declaration
/// defaults to 4.
pub fn build_universe(
    spec: &ModelSpec,
    bound_override: Option<usize>,
) -> Result<Arc<Universe>, UniverseError> {
    let bound = bound_override.or(spec.bound).unwrap_or(DEFAULT_BOUND);
    Universe::new(spec.channels.clone(), spec.state_vars.clone(), bound)
}

pub(super) fn check_var(u: &Universe, name: &str) -> Result<(), DenoteError> {
    if u.var_position(name).is_none() {
        return Err(DenoteError::UndeclaredVariable(name.to_string()));
    }
    Ok(())
}

pub(super) fn check_map_var(u: &Universe, name: &str) -> Result<(), DenoteError> {
    check_var(u, name)?;
    let is_map = u
        .state_vars()
        .iter()
        .any(|d| d.name == name && matches!(d.dom, crate::model::VarDom::Map { .. }));
    if !is_map {
        return Err(DenoteError::NotAMapVariable(name.to_string()));
    }
    Ok(())
}

/// Every name in an expression must resolve; parameters are substituted
/// away before denotation, so a stray name is an error, not a binding.
pub(super) fn check_expr(u: &Universe, e: &StateExpr) -> Result<(), DenoteError> {
    match e {
        StateExpr::Int(_) | StateExpr::Bool(_) | StateExpr::MapLit(_) => Ok(()),
        StateExpr::Var(n) => check_var(u, n),
        StateExpr::MapApp(m, k) => {
            check_map_var(u, m)?;
            check_expr(u, k)
        }
        StateExpr::MapUpd(m, k, v) => {
            check_map_var(u, m)?;
            check_expr(u, k)?;
            check_expr(u, v)
        }
        StateExpr::Sum(m) => check_map_var(u, m),
        StateExpr::InDom(k, m) => {
            check_map_var(u, m)?;
            check_expr(u, k)
        }
        StateExpr::Add(a, b)
        | StateExpr::SubOp(a, b)
        | StateExpr::Cmp(_, a, b)
        | StateExpr::And(a, b)
        | StateExpr::Or(a, b)
        | StateExpr::Implies(a, b) => {
            check_expr(u, a)?;
            check_expr(u, b)
        }
        StateExpr::Not(a) => check_expr(u, a),
    }
}

fn const_int(e: &StateExpr) -> Option<i64> {
    match e {
        StateExpr::Int(n) => Some(*n),
        StateExpr::Add(a, b) => Some(const_int(a)? + const_int(b)?),
        StateExpr::SubOp(a, b) => Some(const_int(a)? - const_int(b)?),
        _ => None,
    }
}

/// Looks up a process reference and substitutes its constant arguments,
/// yielding the closed body to recurse into.
pub(super) fn resolve_ref(
    spec: &ModelSpec,
    name: &str,
    args: &[StateExpr],
) -> Result<ProcAst, DenoteError> {
    let Some(def) = spec.process(name) else {
        return Err(DenoteError::UndefinedProcess(name.to_string()));
    };
    if def.params.len() != args.len() {
        return Err(DenoteError::ArityMismatch {
            name: name.to_string(),
            expected: def.params.len(),
            got: args.len(),
        });
    }
    let mut body = def.body.clone();
    for (p, a) in def.params.iter().zip(args) {
        let v = const_int(a).ok_or_else(|| DenoteError::NonConstantArg(name.to_string()))?;
        body = subst_var(&body, p, v);
    }
    Ok(body)
}

fn guard_states(
    u: &Arc<Universe>,
    cond: &StateExpr,
) -> Result<std::collections::BTreeSet<StateId>, DenoteError> {
    check_expr(u, cond)?;
    let consts = HashMap::new();
    Ok(states_where(u, |s| cond.eval(u, s, &consts) == Some(Value::Bool(true))))
}

/// Event prefix as a contract: quiescent at the empty trace refusing
/// anything but the event, terminating with the event performed and the
/// state unchanged. Event arguments are evaluated per initial state; a
/// state where they are undefined or out of the channel's ranges
/// contributes no rows.
fn prefix_contract(
    u: &Arc<Universe>,
    channel: &str,
    args: &[StateExpr],
) -> Result<Contract, DenoteError> {
    let Some(decl) = u.channels().iter().find(|c| c.name == channel) else {
        return Err(DenoteError::UndeclaredChannel(channel.to_string()));
    };
    if decl.arg_ranges.len() != args.len() {
        return Err(DenoteError::ArityMismatch {
            name: channel.to_string(),
            expected: decl.arg_ranges.len(),
            got: args.len(),
        });
    }
    for a in args {
        check_expr(u, a)?;
    }
    let consts = HashMap::new();
    let mut peri = Vec::new();
    let mut post = Vec::new();
    for i in 0..u.n_states() {
        let st = StateId(i as u32);
        let s = u.state(st);
        let vals: Option<Vec<i64>> = args
            .iter()
            .map(|a| match a.eval(u, s, &consts) {
                Some(Value::Int(v)) => Some(v),
                _ => None,
            })
            .collect();
        let Some(vals) = vals else { continue };
        let Some(e) = u.event_id(&Event::new(channel, vals)) else { continue };
        let t = u.trace_id(&[e]).expect("singleton trace within bound");
        let bit: RefMask = 1 << e.0;
        for refp in 0..=u.full_refusal() {
            if refp & bit == 0 {
                peri.push(RrRow { st, tt: EMPTY_TRACE, refp, ..RrRow::default() });
            }
            post.push(RrRow { st, tt: t, stp: st, refp });
        }
    }
    Ok(mk_contract(
        &rr_true(u, RrAlpha::CONDITION),
        &RrRel::new(u.clone(), RrAlpha::PERI, peri),
        &RrRel::new(u.clone(), RrAlpha::POST, post),
    )?)
}

pub fn denote(spec: &ModelSpec, u: &Arc<Universe>, p: &ProcAst) -> Result<Contract, DenoteError> {
    denote_at(spec, u, p, 0)
}

fn denote_at(
    spec: &ModelSpec,
    u: &Arc<Universe>,
    p: &ProcAst,
    depth: usize,
) -> Result<Contract, DenoteError> {
    let go = |p: &ProcAst| denote_at(spec, u, p, depth);
    match p {
        ProcAst::Skip => Ok(skip_srd(u)),
        ProcAst::Stop => Ok(stop_srd(u)),
        ProcAst::Chaos => Ok(chaos(u)),
        ProcAst::Miracle => Ok(miracle(u)),
        ProcAst::Prefix { channel, args, body } => {
            let head = prefix_contract(u, channel, args)?;
            Ok(seq(&head, &go(body)?)?)
        }
        ProcAst::Guard { cond: g, body } => {
            let b = guard_states(u, g)?;
            Ok(cond(&go(body)?, &b, &stop_srd(u))?)
        }
        ProcAst::Assign { var, value } => {
            check_var(u, var)?;
            check_expr(u, value)?;
            Ok(assigns_rd(u, &[(var.clone(), value.clone())]))
        }
        ProcAst::IndexedAssign { var, index, value } => {
            check_map_var(u, var)?;
            check_expr(u, index)?;
            check_expr(u, value)?;
            let consts = HashMap::new();
            let in_dom = StateExpr::InDom(Box::new(index.clone()), var.clone());
            let pre = state_cond(u, |s| in_dom.eval(u, s, &consts) == Some(Value::Bool(true)));
            let upd = StateExpr::MapUpd(
                var.clone(),
                Box::new(index.clone()),
                Box::new(value.clone()),
            );
            let post = assigns_r(u, &[(var.clone(), upd)]);
            Ok(mk_contract(&pre, &RrRel::empty(u.clone(), RrAlpha::PERI), &post)?)
        }
        ProcAst::Seq(l, r) => Ok(seq(&go(l)?, &go(r)?)?),
        ProcAst::ExtChoice(ps) => {
            let cs: Vec<Contract> = ps.iter().map(&go).collect::<Result<_, _>>()?;
            Ok(extchoice_indexed(&cs)?)
        }
        ProcAst::IntChoice(ps) => {
            let cs: Vec<Contract> = ps.iter().map(&go).collect::<Result<_, _>>()?;
            Ok(intchoice_indexed(&cs)?)
        }
        ProcAst::Cond { cond: g, then_branch, else_branch } => {
            let b = guard_states(u, g)?;
            Ok(cond(&go(then_branch)?, &b, &go(else_branch)?)?)
        }
        ProcAst::MuTail(body) => match tail_rec(&go(body)?) {
            Ok(rec) => Ok(rec.contract),
            Err(ContractError::NotProductive) => Err(DenoteError::NotProductive),
            Err(e) => Err(e.into()),
        },
        ProcAst::Interleave(l, r) => {
            Ok(rd_par(&go(l)?, &go(r)?, &interleave_merge(u))?)
        }
        ProcAst::Ref { name, args } => {
            let body = resolve_ref(spec, name, args)?;
            if depth >= MAX_REF_DEPTH {
                return Err(DenoteError::RefDepthExceeded);
            }
            denote_at(spec, u, &body, depth + 1)
        }
    }
}

/// A named specification triple bound to a universe, with its slots
/// scope-checked and its events resolved.
pub struct SpecContract {
    pub name: String,
    u: Arc<Universe>,
    pre: CPred,
    peri: CPred,
    post: CPred,
}

impl SpecContract {
    pub fn universe(&self) -> &Arc<Universe> {
        &self.u
    }
    pub fn pre_at(&self, st: StateId, tt: TraceId) -> bool {
        self.pre.eval(&self.u, st, tt, None, None)
    }
    pub fn peri_at(&self, r: RrRow) -> bool {
        self.peri.eval(&self.u, r.st, r.tt, Some(r.refp), None)
    }
    pub fn post_at(&self, r: RrRow) -> bool {
        self.post.eval(&self.u, r.st, r.tt, Some(r.refp), Some(r.stp))
    }
}

struct Scope {
    refusal: bool,
    primed: bool,
}

fn check_cexpr(
    u: &Universe,
    name: &str,
    slot: &'static str,
    scope: &Scope,
    e: &CExpr,
) -> Result<(), DenoteError> {
    let primed_here = |p: bool, what: &dyn Fn() -> String| -> Result<(), DenoteError> {
        if p && !scope.primed {
            return Err(DenoteError::SpecScope {
                name: name.to_string(),
                slot,
                what: what(),
            });
        }
        Ok(())
    };
    match e {
        CExpr::Int(_) => Ok(()),
        CExpr::Var { name: v, primed } => {
            check_var(u, v)?;
            primed_here(*primed, &|| format!("`{v}'`"))
        }
        CExpr::MapApp { map, primed, key } => {
            check_map_var(u, map)?;
            primed_here(*primed, &|| format!("`{map}'`"))?;
            check_cexpr(u, name, slot, scope, key)
        }
        CExpr::Sum { map, primed } => {
            check_map_var(u, map)?;
            primed_here(*primed, &|| format!("`{map}'`"))
        }
        CExpr::Add(a, b) | CExpr::Sub(a, b) => {
            check_cexpr(u, name, slot, scope, a)?;
            check_cexpr(u, name, slot, scope, b)
        }
    }
}

fn check_cpred(
    u: &Universe,
    name: &str,
    slot: &'static str,
    scope: &Scope,
    p: &CPred,
) -> Result<(), DenoteError> {
    match p {
        CPred::Lit(_) | CPred::TraceEmpty => Ok(()),
        CPred::Cmp(_, a, b) => {
            check_cexpr(u, name, slot, scope, a)?;
            check_cexpr(u, name, slot, scope, b)
        }
        CPred::InDom { key, map, primed } => {
            check_map_var(u, map)?;
            if *primed && !scope.primed {
                return Err(DenoteError::SpecScope {
                    name: name.to_string(),
                    slot,
                    what: format!("`{map}'`"),
                });
            }
            check_cexpr(u, name, slot, scope, key)
        }
        CPred::TraceLast(e) => match resolve_event(u, e) {
            Some(_) => Ok(()),
            None => Err(DenoteError::UnknownEvent(e.to_string())),
        },
        CPred::InRef(e) => {
            if !scope.refusal {
                return Err(DenoteError::SpecScope {
                    name: name.to_string(),
                    slot,
                    what: "`ref'`".to_string(),
                });
            }
            match resolve_event(u, e) {
                Some(_) => Ok(()),
                None => Err(DenoteError::UnknownEvent(e.to_string())),
            }
        }
        CPred::Not(a) => check_cpred(u, name, slot, scope, a),
        CPred::And(a, b) | CPred::Or(a, b) | CPred::Implies(a, b) => {
            check_cpred(u, name, slot, scope, a)?;
            check_cpred(u, name, slot, scope, b)
        }
    }
}

/// Bind a contract definition to a universe. The precondition may mention
/// only st and tt, the pericondition additionally ref', the postcondition
/// everything; the precondition must be closed under trace prefixes.
pub fn elaborate_contract(
    u: &Arc<Universe>,
    def: &ContractDef,
) -> Result<SpecContract, DenoteError> {
    check_cpred(u, &def.name, "precondition", &Scope { refusal: false, primed: false }, &def.pre)?;
    check_cpred(u, &def.name, "pericondition", &Scope { refusal: true, primed: false }, &def.peri)?;
    check_cpred(u, &def.name, "postcondition", &Scope { refusal: true, primed: true }, &def.post)?;
    let sc = SpecContract {
        name: def.name.clone(),
        u: u.clone(),
        pre: def.pre.clone(),
        peri: def.peri.clone(),
        post: def.post.clone(),
    };
    for i in 0..u.n_states() {
        let st = StateId(i as u32);
        for t in 0..u.n_traces() {
            let tt = TraceId(t as u32);
            if !sc.pre_at(st, tt) {
                continue;
            }
            let items = u.trace_events(tt).to_vec();
            for k in 0..items.len() {
                let prefix = u.trace_id(&items[..k]).expect("prefix interned");
                if !sc.pre_at(st, prefix) {
                    return Err(DenoteError::SpecPreNotPrefixClosed(def.name.clone()));
                }
            }
        }
    }
    Ok(sc)
}

/// The three refinement obligations against a predicate-level target:
/// the target's assumption must imply the candidate's, and inside the
/// target's assumption every candidate quiescent and terminating row must
/// satisfy the corresponding target predicate. Only the candidate's
/// (sparse) rows and the st × tt grid are enumerated.
pub fn refines_spec(
    target: &SpecContract,
    candidate: &Contract,
    max_counterexamples: usize,
) -> Result<RefineReport, DenoteError> {
    if !Arc::ptr_eq(&target.u, candidate.universe()) {
        return Err(DenoteError::Contract(ContractError::UniverseMismatch));
    }
    let u = &target.u;
    let mut pre_ok = true;
    let mut pre_ces = Vec::new();
    for i in 0..u.n_states() {
        let st = StateId(i as u32);
        for t in 0..u.n_traces() {
            let tt = TraceId(t as u32);
            let r = RrRow { st, tt, ..RrRow::default() };
            if target.pre_at(st, tt) && !candidate.pre().contains(r) {
                pre_ok = false;
                if pre_ces.len() < max_counterexamples {
                    pre_ces.push(r);
                }
            }
        }
    }
    let sweep = |rel: &RrRel, pred: &dyn Fn(RrRow) -> bool| {
        let mut ok = true;
        let mut ces = Vec::new();
        for r in rel.iter() {
            if target.pre_at(r.st, r.tt) && !pred(r) {
                ok = false;
                if ces.len() < max_counterexamples {
                    ces.push(r);
                }
            }
        }
        (ok, ces)
    };
    let (peri_ok, peri_ces) = sweep(candidate.peri(), &|r| target.peri_at(r));
    let (post_ok, post_ces) = sweep(candidate.post(), &|r| target.post_at(r));
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

#[cfg(test)]
mod tests {
    use super::super::{parse, ProcDef};
    use super::*;
    use crate::contracts::{expand, prefix_srd, refines};
    use crate::healthiness::{self, HealthName};

    fn law_spec() -> ModelSpec {
        parse("channel a\nchannel b\nstate x : bool\nstate m : map 0..1 to 0..1\nbound 2\n")
            .unwrap()
    }

    /// Denote a process expression in the context of `spec`'s definitions.
    fn den(spec: &ModelSpec, u: &Arc<Universe>, text: &str) -> Result<Contract, DenoteError> {
        let tmp = parse(&format!("process ZTmp = {text}")).unwrap();
        let mut with_defs = spec.clone();
        with_defs.processes.extend(tmp.processes);
        let body = with_defs.process("ZTmp").unwrap().body.clone();
        denote(&with_defs, u, &body)
    }

    #[test]
    fn prefix_contract_shape() {
        let spec = law_spec();
        let u = build_universe(&spec, None).unwrap();
        let c = den(&spec, &u, "a -> skip").unwrap();
        let e = u.event_id(&Event::plain("a")).unwrap();
        assert_eq!(c, prefix_srd(&u, e));
        let t = u.trace_id(&[e]).unwrap();
        assert_eq!(c.pre(), &rr_true(&u, RrAlpha::CONDITION));
        assert!(c.peri().iter().all(|r| r.tt == EMPTY_TRACE && r.refp & (1 << e.0) == 0));
        assert!(c.post().iter().all(|r| r.tt == t && r.stp == r.st));
    }

    #[test]
    fn divergent_indexed_assignment_is_chaos() {
        let spec = law_spec();
        let u = build_universe(&spec, None).unwrap();
        let c = den(&spec, &u, "m := {} ; m(0) := 1").unwrap();
        assert_eq!(c, chaos(&u));
        assert_eq!(u.truncation_count(), 0);
    }

    #[test]
    fn guards_select_between_body_and_deadlock() {
        let spec = law_spec();
        let u = build_universe(&spec, None).unwrap();
        assert_eq!(den(&spec, &u, "false & a -> skip").unwrap(), stop_srd(&u));
        assert_eq!(
            den(&spec, &u, "true & a -> skip").unwrap(),
            den(&spec, &u, "a -> skip").unwrap()
        );
        // x & P behaves as P in the states satisfying x and deadlocks
        // elsewhere
        let g = den(&spec, &u, "x & a -> skip").unwrap();
        let on = guard_states(&u, &StateExpr::Var("x".into())).unwrap();
        let body = den(&spec, &u, "a -> skip").unwrap();
        let stopped = den(&spec, &u, "stop").unwrap();
        let pick = |p: &Contract, s: &Contract| -> (RrRel, RrRel) {
            let peri = p
                .peri()
                .iter()
                .filter(|r| on.contains(&r.st))
                .chain(s.peri().iter().filter(|r| !on.contains(&r.st)));
            let post = p
                .post()
                .iter()
                .filter(|r| on.contains(&r.st))
                .chain(s.post().iter().filter(|r| !on.contains(&r.st)));
            (
                RrRel::new(u.clone(), RrAlpha::PERI, peri),
                RrRel::new(u.clone(), RrAlpha::POST, post),
            )
        };
        let (peri, post) = pick(&body, &stopped);
        assert_eq!(g.peri(), &peri);
        assert_eq!(g.post(), &post);
        assert_eq!(g.pre(), &rr_true(&u, RrAlpha::CONDITION));
    }

    #[test]
    fn references_substitute_constant_arguments() {
        let spec = parse(
            "channel c(0..3)\nstate x : bool\nbound 2\n\
             process P(v) = c.v -> skip\nprocess Q = P(1 + 2)\n",
        )
        .unwrap();
        let u = build_universe(&spec, None).unwrap();
        let q = denote(&spec, &u, &spec.process("Q").unwrap().body.clone()).unwrap();
        let e = u.event_id(&Event::new("c", vec![3])).unwrap();
        assert_eq!(q, prefix_srd(&u, e));
        let err = den(&spec, &u, "P(x)").unwrap_err();
        assert!(matches!(err, DenoteError::NonConstantArg(_)));
        let err = den(&spec, &u, "P(0, 1)").unwrap_err();
        assert!(matches!(err, DenoteError::ArityMismatch { expected: 1, got: 2, .. }));
        let err = den(&spec, &u, "Nope").unwrap_err();
        assert!(matches!(err, DenoteError::UndefinedProcess(_)));
    }

    #[test]
    fn out_of_range_event_arguments_contribute_nothing() {
        let spec = parse("channel c(0..1)\nstate x : bool\nbound 2\nprocess P = c.7 -> skip\n")
            .unwrap();
        let u = build_universe(&spec, None).unwrap();
        let c = denote(&spec, &u, &spec.process("P").unwrap().body.clone()).unwrap();
        // no state can perform the event: miraculous everywhere
        assert_eq!(c, miracle(&u));
    }

    #[test]
    fn name_errors_are_reported() {
        let spec = law_spec();
        let u = build_universe(&spec, None).unwrap();
        assert!(matches!(
            den(&spec, &u, "zap -> skip").unwrap_err(),
            DenoteError::UndeclaredChannel(_)
        ));
        assert!(matches!(
            den(&spec, &u, "y := 1").unwrap_err(),
            DenoteError::UndeclaredVariable(_)
        ));
        assert!(matches!(
            den(&spec, &u, "x(0) := 1").unwrap_err(),
            DenoteError::NotAMapVariable(_)
        ));
        assert!(matches!(
            den(&spec, &u, "y & skip").unwrap_err(),
            DenoteError::UndeclaredVariable(_)
        ));
    }

    #[test]
    fn unproductive_recursion_is_rejected() {
        let spec = law_spec();
        let u = build_universe(&spec, None).unwrap();
        assert!(matches!(
            den(&spec, &u, "mu X . skip ; X").unwrap_err(),
            DenoteError::NotProductive
        ));
        let c = den(&spec, &u, "mu X . a -> skip ; X").unwrap();
        assert!(c.post().is_empty());
    }

    #[test]
    fn denotations_are_normal_reactive_designs() {
        let spec = law_spec();
        let u = build_universe(&spec, None).unwrap();
        for text in [
            "a -> skip",
            "stop",
            "chaos",
            "miracle",
            "x := not x",
            "a -> skip [] b -> stop",
            "a -> skip |~| b -> stop",
            "a -> skip ||| b -> stop",
            "if x then a -> skip else stop",
            "mu X . a -> skip ; X",
        ] {
            let c = den(&spec, &u, text).unwrap();
            assert!(
                healthiness::is_healthy(HealthName::NSRD, &expand(&c)).unwrap(),
                "{text}"
            );
        }
    }

    #[test]
    fn spec_contracts_check_scope_and_prefix_closure() {
        let u = build_universe(&law_spec(), None).unwrap();
        let def = |s: &str| parse(s).unwrap().contracts.into_iter().next().unwrap();
        let err = elaborate_contract(&u, &def("contract C = [ a in ref' |- true <> true ]"))
            .unwrap_err();
        assert!(matches!(err, DenoteError::SpecScope { slot: "precondition", .. }));
        let err = elaborate_contract(&u, &def("contract C = [ true |- m'(0) = 1 <> true ]"))
            .unwrap_err();
        assert!(matches!(err, DenoteError::SpecScope { slot: "pericondition", .. }));
        let err = elaborate_contract(&u, &def("contract C = [ true |- zap in ref' <> true ]"))
            .unwrap_err();
        assert!(matches!(err, DenoteError::UnknownEvent(_)));
        // holds at ⟨a⟩ but not at ⟨⟩: not a usable assumption
        let err = elaborate_contract(
            &u,
            &def("contract C = [ not (tt = <>) |- true <> true ]"),
        )
        .unwrap_err();
        assert!(matches!(err, DenoteError::SpecPreNotPrefixClosed(_)));
        assert!(elaborate_contract(&u, &def("contract C = [ tt = <> or true |- a in ref' <> m(0) = m'(0) ]")).is_ok());
    }

    #[test]
    fn predicate_refinement_agrees_with_row_refinement() {
        let spec = law_spec();
        let u = build_universe(&spec, None).unwrap();
        // target: after any a the process must keep b unrefused
        let def = parse("contract C = [ true |- not (b in ref') <> true ]")
            .unwrap()
            .contracts
            .remove(0);
        let sc = elaborate_contract(&u, &def).unwrap();
        let good = den(&spec, &u, "b -> skip").unwrap();
        // b -> skip refuses a while waiting but never b
        assert!(refines_spec(&sc, &good, 4).unwrap().holds);
        let bad = den(&spec, &u, "stop").unwrap();
        let rep = refines_spec(&sc, &bad, 4).unwrap();
        assert!(!rep.holds && rep.pre_ok && !rep.peri_ok && rep.post_ok);
        let b = u.event_id(&Event::plain("b")).unwrap();
        assert!(rep.peri_counterexamples.iter().all(|r| r.refp & (1 << b.0) != 0));

        // the same verdicts through the row-level checker
        let peri = RrRel::new(
            u.clone(),
            RrAlpha::PERI,
            crate::reactive_relations::all_rows(&u, RrAlpha::PERI)
                .into_iter()
                .filter(|r| r.refp & (1 << b.0) == 0),
        );
        let target = mk_contract(
            &rr_true(&u, RrAlpha::CONDITION),
            &peri,
            &rr_true(&u, RrAlpha::POST),
        )
        .unwrap();
        assert!(refines(&target, &good, 4).unwrap().holds);
        assert!(!refines(&target, &bad, 4).unwrap().holds);
    }

    #[test]
    fn reference_depth_is_bounded() {
        // a hand-built cyclic spec must error out, not overflow
        let mut spec = law_spec();
        spec.processes.push(ProcDef {
            name: "Loop".into(),
            params: vec![],
            body: ProcAst::Ref { name: "Loop".into(), args: vec![] },
        });
        let u = build_universe(&spec, None).unwrap();
        let err = denote(&spec, &u, &ProcAst::Ref { name: "Loop".into(), args: vec![] })
            .unwrap_err();
        assert!(matches!(err, DenoteError::RefDepthExceeded));
    }

    #[test]
    fn universe_errors_surface() {
        let spec = parse("state x : int 5..2\n").unwrap();
        assert!(matches!(
            build_universe(&spec, None),
            Err(UniverseError::EmptyDomain(_))
        ));
    }
}
