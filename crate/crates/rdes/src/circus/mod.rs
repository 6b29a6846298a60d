//! Process-language front end: a small textual language of reactive
//! processes, parsed into an AST and denoted into contracts, plus named
//! contract specifications kept as predicates so they never have to be
//! enumerated. Also generates the card-transfer demonstration model.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::contracts::{mk_contract, Contract};
use crate::model::{RefMask, StateExpr, StateId, TraceId, Universe, Value, EMPTY_TRACE};
use crate::reactive_relations::{all_rows, rr_true, RrAlpha, RrRel};

mod denote;
mod oracle;
mod parser;

pub use denote::{
    build_universe, denote, elaborate_contract, refines_spec, DenoteError, SpecContract,
};
pub use oracle::{denote_by_execution, observe, Obs};
pub use parser::{parse, SyntaxError};

/// Process syntax. Input prefixes and parameter references are resolved
/// away before this level: every event argument is an expression over the
/// state variables (or a literal), and `Ref` carries explicit arguments.
#[derive(Clone, Debug, PartialEq)]
pub enum ProcAst {
    Skip,
    Stop,
    Chaos,
    Miracle,
    Prefix { channel: String, args: Vec<StateExpr>, body: Box<ProcAst> },
    Guard { cond: StateExpr, body: Box<ProcAst> },
    Assign { var: String, value: StateExpr },
    IndexedAssign { var: String, index: StateExpr, value: StateExpr },
    Seq(Box<ProcAst>, Box<ProcAst>),
    ExtChoice(Vec<ProcAst>),
    IntChoice(Vec<ProcAst>),
    Cond { cond: StateExpr, then_branch: Box<ProcAst>, else_branch: Box<ProcAst> },
    /// `mu X . body ; X`: iterate the body forever. The binder is gone by
    /// construction; only the tail shape is accepted by the parser.
    MuTail(Box<ProcAst>),
    Interleave(Box<ProcAst>, Box<ProcAst>),
    Ref { name: String, args: Vec<StateExpr> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: ProcAst,
}

/// A named specification triple kept as predicates over the observation
/// variables; `[ pre |- peri <> post ]` in the source syntax.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractDef {
    pub name: String,
    pub pre: CPred,
    pub peri: CPred,
    pub post: CPred,
}

/// A parsed model file: universe declarations plus named definitions.
#[derive(Clone, Debug, Default)]
pub struct ModelSpec {
    pub channels: Vec<crate::model::ChannelDecl>,
    pub state_vars: Vec<crate::model::StateVarDecl>,
    pub bound: Option<usize>,
    pub processes: Vec<ProcDef>,
    pub contracts: Vec<ContractDef>,
}

impl ModelSpec {
    pub fn process(&self, name: &str) -> Option<&ProcDef> {
        self.processes.iter().find(|d| d.name == name)
    }
    pub fn contract(&self, name: &str) -> Option<&ContractDef> {
        self.contracts.iter().find(|d| d.name == name)
    }
}

/// An event written literally in a specification predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventLit {
    pub channel: String,
    pub args: Vec<i64>,
}

impl fmt::Display for EventLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.channel)?;
        for a in &self.args {
            write!(f, ".{a}")?;
        }
        Ok(())
    }
}

/// Integer-valued terms in specification predicates. A primed variable
/// reads the final state, an unprimed one the initial state.
#[derive(Clone, Debug, PartialEq)]
pub enum CExpr {
    Int(i64),
    Var { name: String, primed: bool },
    MapApp { map: String, primed: bool, key: Box<CExpr> },
    Sum { map: String, primed: bool },
    Add(Box<CExpr>, Box<CExpr>),
    Sub(Box<CExpr>, Box<CExpr>),
}

/// Specification predicates over st, tt, ref' and st'. Undefined terms
/// (missing map keys, absent variables) make their atom false, matching
/// the expression rule used by processes.
#[derive(Clone, Debug, PartialEq)]
pub enum CPred {
    Lit(bool),
    Cmp(crate::model::CmpOp, CExpr, CExpr),
    InDom { key: CExpr, map: String, primed: bool },
    /// tt = ⟨⟩
    TraceEmpty,
    /// last(tt) = e
    TraceLast(EventLit),
    /// e ∈ ref'
    InRef(EventLit),
    Not(Box<CPred>),
    And(Box<CPred>, Box<CPred>),
    Or(Box<CPred>, Box<CPred>),
    Implies(Box<CPred>, Box<CPred>),
}

impl CExpr {
    fn read_var(u: &Universe, name: &str, primed: bool, st: StateId, stp: Option<StateId>) -> Option<Value> {
        let pos = u.var_position(name)?;
        let id = if primed { stp? } else { st };
        Some(u.state(id).0[pos].clone())
    }

    pub fn eval(&self, u: &Universe, st: StateId, stp: Option<StateId>) -> Option<Value> {
        match self {
            CExpr::Int(n) => Some(Value::Int(*n)),
            CExpr::Var { name, primed } => Self::read_var(u, name, *primed, st, stp),
            CExpr::MapApp { map, primed, key } => {
                let Value::Map(m) = Self::read_var(u, map, *primed, st, stp)? else {
                    return None;
                };
                let Value::Int(k) = key.eval(u, st, stp)? else { return None };
                m.get(&k).map(|v| Value::Int(*v))
            }
            CExpr::Sum { map, primed } => {
                let Value::Map(m) = Self::read_var(u, map, *primed, st, stp)? else {
                    return None;
                };
                Some(Value::Int(m.values().sum()))
            }
            CExpr::Add(a, b) => match (a.eval(u, st, stp)?, b.eval(u, st, stp)?) {
                (Value::Int(x), Value::Int(y)) => Some(Value::Int(x + y)),
                _ => None,
            },
            CExpr::Sub(a, b) => match (a.eval(u, st, stp)?, b.eval(u, st, stp)?) {
                (Value::Int(x), Value::Int(y)) => Some(Value::Int(x - y)),
                _ => None,
            },
        }
    }
}

impl CPred {
    /// Evaluate at one observation. `refp`/`stp` may be absent when the
    /// predicate's slot does not carry them; scope checking guarantees the
    /// predicate never looks.
    pub fn eval(
        &self,
        u: &Universe,
        st: StateId,
        tt: TraceId,
        refp: Option<RefMask>,
        stp: Option<StateId>,
    ) -> bool {
        use crate::model::CmpOp;
        match self {
            CPred::Lit(b) => *b,
            CPred::Cmp(op, a, b) => {
                let (Some(x), Some(y)) = (a.eval(u, st, stp), b.eval(u, st, stp)) else {
                    return false;
                };
                match (op, x, y) {
                    (CmpOp::Eq, x, y) => x == y,
                    (CmpOp::Ne, x, y) => x != y,
                    (op, Value::Int(x), Value::Int(y)) => match op {
                        CmpOp::Lt => x < y,
                        CmpOp::Le => x <= y,
                        CmpOp::Gt => x > y,
                        CmpOp::Ge => x >= y,
                        _ => unreachable!(),
                    },
                    _ => false,
                }
            }
            CPred::InDom { key, map, primed } => {
                let Some(Value::Int(k)) = key.eval(u, st, stp) else { return false };
                match CExpr::read_var(u, map, *primed, st, stp) {
                    Some(Value::Map(m)) => m.contains_key(&k),
                    _ => false,
                }
            }
            CPred::TraceEmpty => tt == EMPTY_TRACE,
            CPred::TraceLast(e) => match u.trace_events(tt).last() {
                Some(&last) => resolve_event(u, e) == Some(last),
                None => false,
            },
            CPred::InRef(e) => match (resolve_event(u, e), refp) {
                (Some(id), Some(mask)) => mask & (1u32 << id.0) != 0,
                _ => false,
            },
            CPred::Not(p) => !p.eval(u, st, tt, refp, stp),
            CPred::And(p, q) => p.eval(u, st, tt, refp, stp) && q.eval(u, st, tt, refp, stp),
            CPred::Or(p, q) => p.eval(u, st, tt, refp, stp) || q.eval(u, st, tt, refp, stp),
            CPred::Implies(p, q) => !p.eval(u, st, tt, refp, stp) || q.eval(u, st, tt, refp, stp),
        }
    }
}

pub(crate) fn resolve_event(u: &Universe, e: &EventLit) -> Option<crate::model::EventId> {
    u.event_id(&crate::trace_algebra::Event::new(e.channel.clone(), e.args.clone()))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircusError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("event alphabet would have {events} events; at most {cap} are supported")]
    AlphabetTooLarge { events: usize, cap: usize },
}

/// Deadlock freedom as a contract: every quiescent observation must leave
/// at least one event unrefused.
pub fn cdf(u: &Arc<Universe>) -> Contract {
    let full = u.full_refusal();
    let peri = RrRel::new(
        u.clone(),
        RrAlpha::PERI,
        all_rows(u, RrAlpha::PERI).into_iter().filter(|r| r.refp != full),
    );
    mk_contract(&rr_true(u, RrAlpha::CONDITION), &peri, &rr_true(u, RrAlpha::POST))
        .expect("components fixed")
}

const EVENT_CAP: usize = 32;

/// Source text of the card-transfer model: `cards` accounts, balances in
/// 0..=max_balance, transfers drawn from `amounts`. The channel carrying
/// the amount spans the smallest contiguous range covering `amounts`.
pub fn mondex_text(cards: usize, max_balance: i64, amounts: &[i64]) -> Result<String, CircusError> {
    assert!(cards >= 2, "transfers need at least two cards");
    let lo = *amounts.iter().min().expect("at least one amount");
    let hi = *amounts.iter().max().expect("at least one amount");
    let span = (hi - lo + 1) as usize;
    let events = cards * cards * span + 2 * cards;
    if events > EVENT_CAP {
        return Err(CircusError::AlphabetTooLarge { events, cap: EVENT_CAP });
    }

    let hi_card = cards - 1;
    let mut s = String::new();
    s.push_str("-- card-transfer model: pay moves value between accounts,\n");
    s.push_str("-- accept/reject report the outcome per card\n\n");
    s.push_str(&format!("channel pay(0..{hi_card}, 0..{hi_card}, {lo}..{hi})\n"));
    s.push_str(&format!("channel accept(0..{hi_card})\n"));
    s.push_str(&format!("channel reject(0..{hi_card})\n\n"));
    s.push_str(&format!("state accts : map 0..{hi_card} to 0..{max_balance}\n\n"));
    s.push_str("bound 4\n\n");

    s.push_str("process Pay(i, j, n) =\n");
    s.push_str("  pay.i.j.n ->\n");
    s.push_str("    (if i = j or not (i in dom accts) or n <= 0 or n > accts(i)\n");
    s.push_str("     then reject.i -> skip\n");
    s.push_str("     else (accts(i) := accts(i) - n ; accts(j) := accts(j) + n ; accept.i -> skip))\n\n");

    s.push_str("-- faulty variant: credits the payee without debiting the payer\n");
    s.push_str("process BrokenPay(i, j, n) =\n");
    s.push_str("  pay.i.j.n ->\n");
    s.push_str("    (if i = j or not (i in dom accts) or n <= 0 or n > accts(i)\n");
    s.push_str("     then reject.i -> skip\n");
    s.push_str("     else (accts(j) := accts(j) + n ; accept.i -> skip))\n\n");

    let mut distinct = Vec::new();
    let mut all_pairs = Vec::new();
    for i in 0..cards {
        for j in 0..cards {
            for n in amounts {
                all_pairs.push(format!("Pay({i}, {j}, {n})"));
                if i != j {
                    distinct.push(format!("Pay({i}, {j}, {n})"));
                }
            }
        }
    }
    s.push_str(&format!("process SomePay = {}\n\n", distinct.join(" |~| ")));
    s.push_str("-- also lets a card pay itself, exercising the reject branch\n");
    s.push_str(&format!("process SomePayAll = {}\n\n", all_pairs.join(" |~| ")));
    s.push_str("process Cycle = mu X . SomePay ; X\n\n");
    let init: Vec<String> = (0..cards).map(|i| format!("{i} -> {max_balance}")).collect();
    s.push_str(&format!("process System = accts := {{{}}} ; Cycle\n\n", init.join(", ")));

    let everyone: Vec<String> = (0..cards).map(|k| format!("{k} in dom accts")).collect();
    let everyone = everyone.join(" and ");
    s.push_str(&format!(
        "contract Conservation = [ {everyone} |- true <> sum(accts) = sum(accts') ]\n"
    ));
    let keeps: Vec<String> = (0..cards)
        .map(|k| format!("(accts({k}) >= 0 => accts'({k}) >= 0)"))
        .collect();
    s.push_str(&format!(
        "contract NoOverdraft = [ {everyone} |- true <> {} ]\n",
        keeps.join(" and ")
    ));
    let n = lo;
    s.push_str(&format!(
        "contract Acceptance = [ {everyone} |- (tt != <> and last(tt) = pay.0.1.{n} and {n} <= accts(0)) => not (accept.0 in ref') <> true ]\n"
    ));
    Ok(s)
}

/// The card-transfer model, parsed.
pub fn mondex_spec(
    cards: usize,
    max_balance: i64,
    amounts: &[i64],
) -> Result<ModelSpec, CircusError> {
    Ok(parse(&mondex_text(cards, max_balance, amounts)?)?)
}
