//! Lexer and recursive-descent parser for model files. Backtracking is by
//! position snapshot; every failure reports the line, column and what was
//! expected there.

use thiserror::Error;

use crate::model::{ChannelDecl, CmpOp, StateExpr, StateVarDecl, VarDom};

use super::{CExpr, CPred, ContractDef, EventLit, ModelSpec, ProcAst, ProcDef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at line {line}, column {col}: expected {expected}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Name(String),
    /// NAME' (final-state variable or ref')
    Primed(String),
    Nat(i64),
    Arrow,
    ColonEq,
    ExtCh,
    IntCh,
    Inter,
    Turnstile,
    Diamond,
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
    Imp,
    Plus,
    Minus,
    Amp,
    Semi,
    Dot,
    DotDot,
    Question,
    Comma,
    Colon,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("`{n}`"),
            Tok::Primed(n) => format!("`{n}'`"),
            Tok::Nat(n) => format!("`{n}`"),
            Tok::Arrow => "`->`".into(),
            Tok::ColonEq => "`:=`".into(),
            Tok::ExtCh => "`[]`".into(),
            Tok::IntCh => "`|~|`".into(),
            Tok::Inter => "`|||`".into(),
            Tok::Turnstile => "`|-`".into(),
            Tok::Diamond => "`<>`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Imp => "`=>`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Dot => "`.`".into(),
            Tok::DotDot => "`..`".into(),
            Tok::Question => "`?`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
        }
    }
}

const RESERVED: &[&str] = &[
    "channel", "state", "bound", "process", "contract", "skip", "stop", "chaos", "miracle", "if",
    "then", "else", "mu", "in", "dom", "not", "and", "or", "true", "false", "sum", "last", "tt",
    "to", "int", "bool", "map",
];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize, usize)>, SyntaxError> {
    let mut lx = Lexer { src: text.as_bytes(), pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        lx.skip_ws_and_comments();
        if lx.pos >= lx.src.len() {
            return Ok(out);
        }
        let (line, col) = (lx.line, lx.col);
        let t = lx.token().map_err(|expected| SyntaxError { line, col, expected })?;
        out.push((t, line, col));
    }
}

impl<'a> Lexer<'a> {
    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.src.get(self.pos + ahead).copied()
    }

    fn skip_ws_and_comments(&mut self) {
        loop {
            match self.peek(0) {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'-') if self.peek(1) == Some(b'-') => {
                    while let Some(c) = self.peek(0) {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn take(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    fn token(&mut self) -> Result<Tok, String> {
        let c = self.peek(0).expect("caller checked non-empty");
        let two = |lx: &Lexer<'_>| (lx.peek(0), lx.peek(1), lx.peek(2));
        match two(self) {
            (Some(b'|'), Some(b'|'), Some(b'|')) => {
                self.take(3);
                return Ok(Tok::Inter);
            }
            (Some(b'|'), Some(b'~'), Some(b'|')) => {
                self.take(3);
                return Ok(Tok::IntCh);
            }
            _ => {}
        }
        let pair = (c, self.peek(1));
        let two_char = |t: Tok, lx: &mut Lexer<'_>| {
            lx.take(2);
            Ok(t)
        };
        match pair {
            (b'-', Some(b'>')) => return two_char(Tok::Arrow, self),
            (b':', Some(b'=')) => return two_char(Tok::ColonEq, self),
            (b'[', Some(b']')) => return two_char(Tok::ExtCh, self),
            (b'|', Some(b'-')) => return two_char(Tok::Turnstile, self),
            (b'<', Some(b'>')) => return two_char(Tok::Diamond, self),
            (b'<', Some(b'=')) => return two_char(Tok::Le, self),
            (b'>', Some(b'=')) => return two_char(Tok::Ge, self),
            (b'=', Some(b'>')) => return two_char(Tok::Imp, self),
            (b'!', Some(b'=')) => return two_char(Tok::Ne, self),
            (b'.', Some(b'.')) => return two_char(Tok::DotDot, self),
            _ => {}
        }
        let single = match c {
            b'<' => Some(Tok::Lt),
            b'>' => Some(Tok::Gt),
            b'=' => Some(Tok::Eq),
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'&' => Some(Tok::Amp),
            b';' => Some(Tok::Semi),
            b'.' => Some(Tok::Dot),
            b'?' => Some(Tok::Question),
            b',' => Some(Tok::Comma),
            b':' => Some(Tok::Colon),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'{' => Some(Tok::LBrace),
            b'}' => Some(Tok::RBrace),
            b'[' => Some(Tok::LBracket),
            b']' => Some(Tok::RBracket),
            _ => None,
        };
        if let Some(t) = single {
            self.bump();
            return Ok(t);
        }
        if c.is_ascii_digit() {
            let mut n: i64 = 0;
            while let Some(d) = self.peek(0) {
                if !d.is_ascii_digit() {
                    break;
                }
                n = n * 10 + i64::from(d - b'0');
                self.bump();
            }
            return Ok(Tok::Nat(n));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while let Some(d) = self.peek(0) {
                if !(d.is_ascii_alphanumeric() || d == b'_') {
                    break;
                }
                self.bump();
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
            if self.peek(0) == Some(b'\'') {
                self.bump();
                return Ok(Tok::Primed(name));
            }
            return Ok(Tok::Name(name));
        }
        Err(format!("a token, found `{}`", c as char))
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    /// channels seen so far; input prefixes need their ranges at parse time
    channels: Vec<ChannelDecl>,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn peek_at(&self, ahead: usize) -> Option<&Tok> {
        self.toks.get(self.pos + ahead).map(|(t, _, _)| t)
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(&(_, l, c)) => (l, c),
            None => self.toks.last().map(|&(_, l, c)| (l, c + 1)).unwrap_or((1, 1)),
        }
    }

    fn err<T>(&self, expected: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(SyntaxError { line, col, expected: expected.into() })
    }

    fn err_at<T>(&self, at: (usize, usize), expected: impl Into<String>) -> PResult<T> {
        Err(SyntaxError { line: at.0, col: at.1, expected: expected.into() })
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(t.describe())
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Name(n)) if n == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("`{kw}`"))
        }
    }

    fn name(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Name(n)) if !RESERVED.contains(&n.as_str()) => {
                let n = n.clone();
                self.pos += 1;
                Ok(n)
            }
            _ => self.err(what),
        }
    }

    fn int_lit(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek() {
            Some(&Tok::Nat(n)) => {
                self.pos += 1;
                Ok(if neg { -n } else { n })
            }
            _ => self.err("an integer"),
        }
    }

    fn range(&mut self) -> PResult<(i64, i64)> {
        let lo = self.int_lit()?;
        self.expect(&Tok::DotDot)?;
        let hi = self.int_lit()?;
        Ok((lo, hi))
    }

    // ---- declarations ----

    fn spec(&mut self) -> PResult<ModelSpec> {
        let mut spec = ModelSpec::default();
        let mut def_sites: Vec<(String, (usize, usize))> = Vec::new();
        while let Some(t) = self.peek() {
            let site = self.here();
            match t {
                Tok::Name(n) if n == "channel" => {
                    self.pos += 1;
                    let name = self.name("a channel name")?;
                    let mut arg_ranges = Vec::new();
                    if self.eat(&Tok::LParen) {
                        loop {
                            arg_ranges.push(self.range()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(&Tok::RParen)?;
                    }
                    let decl = ChannelDecl { name, arg_ranges };
                    self.channels.push(decl.clone());
                    spec.channels.push(decl);
                }
                Tok::Name(n) if n == "state" => {
                    self.pos += 1;
                    let name = self.name("a state variable name")?;
                    self.expect(&Tok::Colon)?;
                    let dom = if self.eat_kw("bool") {
                        VarDom::Bool
                    } else if self.eat_kw("int") {
                        let (lo, hi) = self.range()?;
                        VarDom::Int { lo, hi }
                    } else if self.eat_kw("map") {
                        let (key_lo, key_hi) = self.range()?;
                        self.expect_kw("to")?;
                        let (val_lo, val_hi) = self.range()?;
                        VarDom::Map { key_lo, key_hi, val_lo, val_hi }
                    } else {
                        return self.err("`int`, `bool` or `map`");
                    };
                    spec.state_vars.push(StateVarDecl { name, dom });
                }
                Tok::Name(n) if n == "bound" => {
                    self.pos += 1;
                    match self.peek() {
                        Some(&Tok::Nat(n)) if n > 0 => {
                            self.pos += 1;
                            spec.bound = Some(n as usize);
                        }
                        _ => return self.err("a positive trace bound"),
                    }
                }
                Tok::Name(n) if n == "process" => {
                    self.pos += 1;
                    let name = self.name("a process name")?;
                    let mut params = Vec::new();
                    if self.eat(&Tok::LParen) {
                        loop {
                            params.push(self.name("a parameter name")?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(&Tok::RParen)?;
                    }
                    self.expect(&Tok::Eq)?;
                    let body = self.proc()?;
                    def_sites.push((name.clone(), site));
                    spec.processes.push(ProcDef { name, params, body });
                }
                Tok::Name(n) if n == "contract" => {
                    self.pos += 1;
                    let name = self.name("a contract name")?;
                    self.expect(&Tok::Eq)?;
                    self.expect(&Tok::LBracket)?;
                    let pre = self.cpred()?;
                    self.expect(&Tok::Turnstile)?;
                    let peri = self.cpred()?;
                    self.expect(&Tok::Diamond)?;
                    let post = self.cpred()?;
                    self.expect(&Tok::RBracket)?;
                    def_sites.push((name.clone(), site));
                    spec.contracts.push(ContractDef { name, pre, peri, post });
                }
                _ => return self.err("a declaration (channel, state, bound, process, contract)"),
            }
        }
        for (i, (name, site)) in def_sites.iter().enumerate() {
            if def_sites[..i].iter().any(|(n, _)| n == name) {
                return self.err_at(*site, format!("a fresh definition name, `{name}` is taken"));
            }
        }
        self.check_def_cycles(&spec, &def_sites)?;
        Ok(spec)
    }

    /// Only mu-tail loops may repeat; references between definitions must
    /// form a DAG.
    fn check_def_cycles(
        &self,
        spec: &ModelSpec,
        sites: &[(String, (usize, usize))],
    ) -> PResult<()> {
        fn refs(p: &ProcAst, out: &mut Vec<String>) {
            match p {
                ProcAst::Ref { name, .. } => out.push(name.clone()),
                ProcAst::Prefix { body, .. } | ProcAst::Guard { body, .. } | ProcAst::MuTail(body) => {
                    refs(body, out)
                }
                ProcAst::Seq(l, r) | ProcAst::Interleave(l, r) => {
                    refs(l, out);
                    refs(r, out);
                }
                ProcAst::ExtChoice(ps) | ProcAst::IntChoice(ps) => {
                    ps.iter().for_each(|p| refs(p, out))
                }
                ProcAst::Cond { then_branch, else_branch, .. } => {
                    refs(then_branch, out);
                    refs(else_branch, out);
                }
                _ => {}
            }
        }
        // colour: 0 unvisited, 1 on stack, 2 done
        fn visit(
            name: &str,
            spec: &ModelSpec,
            colour: &mut std::collections::HashMap<String, u8>,
        ) -> bool {
            match colour.get(name).copied().unwrap_or(0) {
                1 => return false,
                2 => return true,
                _ => {}
            }
            colour.insert(name.to_string(), 1);
            if let Some(def) = spec.process(name) {
                let mut out = Vec::new();
                refs(&def.body, &mut out);
                for r in out {
                    if spec.process(&r).is_some() && !visit(&r, spec, colour) {
                        return false;
                    }
                }
            }
            colour.insert(name.to_string(), 2);
            true
        }
        let mut colour = std::collections::HashMap::new();
        for def in &spec.processes {
            if !visit(&def.name, spec, &mut colour) {
                let site = sites
                    .iter()
                    .find(|(n, _)| *n == def.name)
                    .map(|&(_, s)| s)
                    .unwrap_or((1, 1));
                return self.err_at(
                    site,
                    format!("no recursive references through `{}` (only `mu X . P ; X` may loop)", def.name),
                );
            }
        }
        Ok(())
    }

    // ---- processes ----

    fn proc(&mut self) -> PResult<ProcAst> {
        let first = self.seq_proc()?;
        let op = match self.peek() {
            Some(Tok::ExtCh) => Tok::ExtCh,
            Some(Tok::IntCh) => Tok::IntCh,
            Some(Tok::Inter) => Tok::Inter,
            _ => return Ok(first),
        };
        let mut items = vec![first];
        while self.eat(&op) {
            items.push(self.seq_proc()?);
        }
        if matches!(self.peek(), Some(Tok::ExtCh | Tok::IntCh | Tok::Inter)) {
            return self.err("parentheses (distinct choice operators do not chain)");
        }
        Ok(match op {
            Tok::ExtCh => ProcAst::ExtChoice(items),
            Tok::IntCh => ProcAst::IntChoice(items),
            _ => {
                let mut it = items.into_iter();
                let first = it.next().expect("nonempty");
                it.fold(first, |l, r| ProcAst::Interleave(Box::new(l), Box::new(r)))
            }
        })
    }

    fn seq_proc(&mut self) -> PResult<ProcAst> {
        let mut p = self.prefix_proc()?;
        while self.eat(&Tok::Semi) {
            let q = self.prefix_proc()?;
            p = ProcAst::Seq(Box::new(p), Box::new(q));
        }
        Ok(p)
    }

    fn prefix_proc(&mut self) -> PResult<ProcAst> {
        // guard: an expression followed by `&`
        let snap = self.pos;
        if let Ok(e) = self.expr() {
            if self.eat(&Tok::Amp) {
                let body = self.prefix_proc()?;
                return Ok(ProcAst::Guard { cond: e, body: Box::new(body) });
            }
        }
        self.pos = snap;

        if self.eat_kw("skip") {
            return Ok(ProcAst::Skip);
        }
        if self.eat_kw("stop") {
            return Ok(ProcAst::Stop);
        }
        if self.eat_kw("chaos") {
            return Ok(ProcAst::Chaos);
        }
        if self.eat_kw("miracle") {
            return Ok(ProcAst::Miracle);
        }
        if self.eat_kw("if") {
            let cond = self.expr()?;
            self.expect_kw("then")?;
            let t = self.prefix_proc()?;
            self.expect_kw("else")?;
            let e = self.prefix_proc()?;
            return Ok(ProcAst::Cond {
                cond,
                then_branch: Box::new(t),
                else_branch: Box::new(e),
            });
        }
        if self.eat_kw("mu") {
            return self.mu_proc();
        }
        if self.eat(&Tok::LParen) {
            let p = self.proc()?;
            self.expect(&Tok::RParen)?;
            return Ok(p);
        }
        let site = self.here();
        let n = self.name("a process")?;
        if self.eat(&Tok::Question) {
            return self.input_prefix(n, site);
        }
        if self.eat(&Tok::ColonEq) {
            let value = self.expr()?;
            return Ok(ProcAst::Assign { var: n, value });
        }
        if self.peek() == Some(&Tok::LParen) {
            // `x(k) := v` or a parameterised reference
            let snap = self.pos;
            self.pos += 1;
            if let Ok(index) = self.expr() {
                if self.eat(&Tok::RParen) && self.eat(&Tok::ColonEq) {
                    let value = self.expr()?;
                    return Ok(ProcAst::IndexedAssign { var: n, index, value });
                }
            }
            self.pos = snap;
            self.expect(&Tok::LParen)?;
            let mut args = Vec::new();
            loop {
                args.push(self.expr()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RParen)?;
            return Ok(ProcAst::Ref { name: n, args });
        }
        let mut args = Vec::new();
        while self.eat(&Tok::Dot) {
            args.push(self.expr_atom()?);
        }
        if self.eat(&Tok::Arrow) {
            let body = self.prefix_proc()?;
            return Ok(ProcAst::Prefix { channel: n, args, body: Box::new(body) });
        }
        if !args.is_empty() {
            return self.err("`->` after a dotted event");
        }
        Ok(ProcAst::Ref { name: n, args: Vec::new() })
    }

    fn mu_proc(&mut self) -> PResult<ProcAst> {
        let site = self.here();
        let binder = self.name("a recursion variable")?;
        self.expect(&Tok::Dot)?;
        let whole = self.seq_proc()?;
        let body = match whole {
            ProcAst::Seq(l, r)
                if matches!(&*r, ProcAst::Ref { name, args } if *name == binder && args.is_empty()) =>
            {
                *l
            }
            _ => {
                return self.err_at(
                    site,
                    format!("the recursion to end with `; {binder}` (tail form)"),
                )
            }
        };
        if mentions_ref(&body, &binder) {
            return self.err_at(
                site,
                format!("`{binder}` exactly once, in tail position"),
            );
        }
        if contains_mu(&body) {
            return self.err_at(site, "an unnested recursion (one `mu` per loop)");
        }
        Ok(ProcAst::MuTail(Box::new(body)))
    }

    /// `c?x -> P` becomes an external choice over the channel's one
    /// argument range, with `x` substituted as a literal in each branch.
    fn input_prefix(&mut self, channel: String, site: (usize, usize)) -> PResult<ProcAst> {
        let bind = self.name("an input variable")?;
        self.expect(&Tok::Arrow)?;
        let body = self.prefix_proc()?;
        let Some(decl) = self.channels.iter().find(|c| c.name == channel) else {
            return self.err_at(site, format!("`{channel}` to be a declared channel (input prefixes need its range)"));
        };
        if decl.arg_ranges.len() != 1 {
            return self.err_at(
                site,
                format!("a one-argument channel before `?`, `{channel}` has {}", decl.arg_ranges.len()),
            );
        }
        let (lo, hi) = decl.arg_ranges[0];
        let mut branches = Vec::new();
        for v in lo..=hi {
            branches.push(ProcAst::Prefix {
                channel: channel.clone(),
                args: vec![StateExpr::Int(v)],
                body: Box::new(subst_var(&body, &bind, v)),
            });
        }
        Ok(if branches.len() == 1 {
            branches.pop().expect("nonempty")
        } else {
            ProcAst::ExtChoice(branches)
        })
    }

    // ---- state expressions ----

    fn expr(&mut self) -> PResult<StateExpr> {
        let lhs = self.expr_or()?;
        if self.eat(&Tok::Imp) {
            let rhs = self.expr()?;
            return Ok(StateExpr::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn expr_or(&mut self) -> PResult<StateExpr> {
        let mut e = self.expr_and()?;
        while self.eat_kw("or") {
            let r = self.expr_and()?;
            e = StateExpr::Or(Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn expr_and(&mut self) -> PResult<StateExpr> {
        let mut e = self.expr_unary()?;
        while self.eat_kw("and") {
            let r = self.expr_unary()?;
            e = StateExpr::And(Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn expr_unary(&mut self) -> PResult<StateExpr> {
        if self.eat_kw("not") {
            let e = self.expr_unary()?;
            return Ok(StateExpr::Not(Box::new(e)));
        }
        self.expr_cmp()
    }

    fn expr_cmp(&mut self) -> PResult<StateExpr> {
        let lhs = self.expr_add()?;
        let op = match self.peek() {
            Some(Tok::Eq) => Some(CmpOp::Eq),
            Some(Tok::Ne) => Some(CmpOp::Ne),
            Some(Tok::Lt) => Some(CmpOp::Lt),
            Some(Tok::Le) => Some(CmpOp::Le),
            Some(Tok::Gt) => Some(CmpOp::Gt),
            Some(Tok::Ge) => Some(CmpOp::Ge),
            Some(Tok::Name(n)) if n == "in" => None,
            _ => return Ok(lhs),
        };
        match op {
            Some(op) => {
                self.pos += 1;
                let rhs = self.expr_add()?;
                Ok(StateExpr::Cmp(op, Box::new(lhs), Box::new(rhs)))
            }
            None => {
                self.pos += 1;
                self.expect_kw("dom")?;
                let map = self.name("a map variable")?;
                Ok(StateExpr::InDom(Box::new(lhs), map))
            }
        }
    }

    fn expr_add(&mut self) -> PResult<StateExpr> {
        let mut e = self.expr_atom()?;
        loop {
            if self.eat(&Tok::Plus) {
                let r = self.expr_atom()?;
                e = StateExpr::Add(Box::new(e), Box::new(r));
            } else if self.eat(&Tok::Minus) {
                let r = self.expr_atom()?;
                e = StateExpr::SubOp(Box::new(e), Box::new(r));
            } else {
                return Ok(e);
            }
        }
    }

    fn expr_atom(&mut self) -> PResult<StateExpr> {
        match self.peek() {
            Some(&Tok::Nat(n)) => {
                self.pos += 1;
                Ok(StateExpr::Int(n))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                match self.expr_atom()? {
                    StateExpr::Int(n) => Ok(StateExpr::Int(-n)),
                    e => Ok(StateExpr::SubOp(Box::new(StateExpr::Int(0)), Box::new(e))),
                }
            }
            Some(Tok::Name(n)) if n == "true" => {
                self.pos += 1;
                Ok(StateExpr::Bool(true))
            }
            Some(Tok::Name(n)) if n == "false" => {
                self.pos += 1;
                Ok(StateExpr::Bool(false))
            }
            Some(Tok::Name(n)) if n == "sum" => {
                self.pos += 1;
                self.expect(&Tok::LParen)?;
                let m = self.name("a map variable")?;
                self.expect(&Tok::RParen)?;
                Ok(StateExpr::Sum(m))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::LBrace) => {
                self.pos += 1;
                let mut entries = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        let k = self.int_lit()?;
                        self.expect(&Tok::Arrow)?;
                        let v = self.int_lit()?;
                        entries.push((k, v));
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(&Tok::RBrace)?;
                }
                Ok(StateExpr::MapLit(entries))
            }
            Some(Tok::Name(n)) if !RESERVED.contains(&n.as_str()) => {
                let n = n.clone();
                self.pos += 1;
                if self.eat(&Tok::LParen) {
                    let k = self.expr()?;
                    self.expect(&Tok::RParen)?;
                    Ok(StateExpr::MapApp(n, Box::new(k)))
                } else {
                    Ok(StateExpr::Var(n))
                }
            }
            _ => self.err("an expression"),
        }
    }

    // ---- contract predicates ----

    fn cpred(&mut self) -> PResult<CPred> {
        let lhs = self.cpred_or()?;
        if self.eat(&Tok::Imp) {
            let rhs = self.cpred()?;
            return Ok(CPred::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn cpred_or(&mut self) -> PResult<CPred> {
        let mut p = self.cpred_and()?;
        while self.eat_kw("or") {
            let q = self.cpred_and()?;
            p = CPred::Or(Box::new(p), Box::new(q));
        }
        Ok(p)
    }

    fn cpred_and(&mut self) -> PResult<CPred> {
        let mut p = self.cpred_unary()?;
        while self.eat_kw("and") {
            let q = self.cpred_unary()?;
            p = CPred::And(Box::new(p), Box::new(q));
        }
        Ok(p)
    }

    fn cpred_unary(&mut self) -> PResult<CPred> {
        if self.eat_kw("not") {
            let p = self.cpred_unary()?;
            return Ok(CPred::Not(Box::new(p)));
        }
        self.cpred_atom()
    }

    fn cpred_atom(&mut self) -> PResult<CPred> {
        if self.eat_kw("true") {
            return Ok(CPred::Lit(true));
        }
        if self.eat_kw("false") {
            return Ok(CPred::Lit(false));
        }
        if self.eat_kw("tt") {
            let neg = if self.eat(&Tok::Eq) {
                false
            } else if self.eat(&Tok::Ne) {
                true
            } else {
                return self.err("`=` or `!=` after `tt`");
            };
            self.expect(&Tok::Diamond)?;
            let p = CPred::TraceEmpty;
            return Ok(if neg { CPred::Not(Box::new(p)) } else { p });
        }
        if self.eat_kw("last") {
            self.expect(&Tok::LParen)?;
            self.expect_kw("tt")?;
            self.expect(&Tok::RParen)?;
            self.expect(&Tok::Eq)?;
            let e = self.event_lit()?;
            return Ok(CPred::TraceLast(e));
        }
        // a dotted event literal can only sit in `e in ref'`
        if matches!(self.peek(), Some(Tok::Name(n)) if !RESERVED.contains(&n.as_str()))
            && self.peek_at(1) == Some(&Tok::Dot)
        {
            let e = self.event_lit()?;
            self.expect_kw("in")?;
            return match self.peek() {
                Some(Tok::Primed(n)) if n == "ref" => {
                    self.pos += 1;
                    Ok(CPred::InRef(e))
                }
                _ => self.err("`ref'`"),
            };
        }
        // try a comparison; fall back to a parenthesised predicate
        let snap = self.pos;
        if let Ok(lhs) = self.cexpr() {
            let op = match self.peek() {
                Some(Tok::Eq) => Some(CmpOp::Eq),
                Some(Tok::Ne) => Some(CmpOp::Ne),
                Some(Tok::Lt) => Some(CmpOp::Lt),
                Some(Tok::Le) => Some(CmpOp::Le),
                Some(Tok::Gt) => Some(CmpOp::Gt),
                Some(Tok::Ge) => Some(CmpOp::Ge),
                _ => None,
            };
            if let Some(op) = op {
                self.pos += 1;
                let rhs = self.cexpr()?;
                return Ok(CPred::Cmp(op, lhs, rhs));
            }
            if self.eat_kw("in") {
                if self.eat_kw("dom") {
                    let (map, primed) = self.map_ref()?;
                    return Ok(CPred::InDom { key: lhs, map, primed });
                }
                if matches!(self.peek(), Some(Tok::Primed(n)) if n == "ref") {
                    if let CExpr::Var { name, primed: false } = lhs {
                        self.pos += 1;
                        return Ok(CPred::InRef(EventLit { channel: name, args: Vec::new() }));
                    }
                }
                return self.err("`dom` or `ref'`");
            }
        }
        self.pos = snap;
        if self.eat(&Tok::LParen) {
            let p = self.cpred()?;
            self.expect(&Tok::RParen)?;
            return Ok(p);
        }
        self.err("a predicate")
    }

    fn map_ref(&mut self) -> PResult<(String, bool)> {
        match self.peek() {
            Some(Tok::Name(n)) if !RESERVED.contains(&n.as_str()) => {
                let n = n.clone();
                self.pos += 1;
                Ok((n, false))
            }
            Some(Tok::Primed(n)) if n != "ref" => {
                let n = n.clone();
                self.pos += 1;
                Ok((n, true))
            }
            _ => self.err("a map variable"),
        }
    }

    fn event_lit(&mut self) -> PResult<EventLit> {
        let channel = self.name("a channel name")?;
        let mut args = Vec::new();
        while self.eat(&Tok::Dot) {
            args.push(self.int_lit()?);
        }
        Ok(EventLit { channel, args })
    }

    fn cexpr(&mut self) -> PResult<CExpr> {
        let mut e = self.cexpr_atom()?;
        loop {
            if self.eat(&Tok::Plus) {
                let r = self.cexpr_atom()?;
                e = CExpr::Add(Box::new(e), Box::new(r));
            } else if self.eat(&Tok::Minus) {
                let r = self.cexpr_atom()?;
                e = CExpr::Sub(Box::new(e), Box::new(r));
            } else {
                return Ok(e);
            }
        }
    }

    fn cexpr_atom(&mut self) -> PResult<CExpr> {
        match self.peek() {
            Some(&Tok::Nat(n)) => {
                self.pos += 1;
                Ok(CExpr::Int(n))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                match self.cexpr_atom()? {
                    CExpr::Int(n) => Ok(CExpr::Int(-n)),
                    e => Ok(CExpr::Sub(Box::new(CExpr::Int(0)), Box::new(e))),
                }
            }
            Some(Tok::Name(n)) if n == "sum" => {
                self.pos += 1;
                self.expect(&Tok::LParen)?;
                let (map, primed) = self.map_ref()?;
                self.expect(&Tok::RParen)?;
                Ok(CExpr::Sum { map, primed })
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.cexpr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Name(n)) if !RESERVED.contains(&n.as_str()) => {
                let name = n.clone();
                self.pos += 1;
                self.cexpr_var(name, false)
            }
            Some(Tok::Primed(n)) if n != "ref" => {
                let name = n.clone();
                self.pos += 1;
                self.cexpr_var(name, true)
            }
            _ => self.err("a term"),
        }
    }

    fn cexpr_var(&mut self, name: String, primed: bool) -> PResult<CExpr> {
        if self.eat(&Tok::LParen) {
            let k = self.cexpr()?;
            self.expect(&Tok::RParen)?;
            Ok(CExpr::MapApp { map: name, primed, key: Box::new(k) })
        } else {
            Ok(CExpr::Var { name, primed })
        }
    }
}

fn mentions_ref(p: &ProcAst, name: &str) -> bool {
    match p {
        ProcAst::Ref { name: n, .. } => n == name,
        ProcAst::Prefix { body, .. } | ProcAst::Guard { body, .. } | ProcAst::MuTail(body) => {
            mentions_ref(body, name)
        }
        ProcAst::Seq(l, r) | ProcAst::Interleave(l, r) => {
            mentions_ref(l, name) || mentions_ref(r, name)
        }
        ProcAst::ExtChoice(ps) | ProcAst::IntChoice(ps) => {
            ps.iter().any(|p| mentions_ref(p, name))
        }
        ProcAst::Cond { then_branch, else_branch, .. } => {
            mentions_ref(then_branch, name) || mentions_ref(else_branch, name)
        }
        _ => false,
    }
}

fn contains_mu(p: &ProcAst) -> bool {
    match p {
        ProcAst::MuTail(_) => true,
        ProcAst::Prefix { body, .. } | ProcAst::Guard { body, .. } => contains_mu(body),
        ProcAst::Seq(l, r) | ProcAst::Interleave(l, r) => contains_mu(l) || contains_mu(r),
        ProcAst::ExtChoice(ps) | ProcAst::IntChoice(ps) => ps.iter().any(contains_mu),
        ProcAst::Cond { then_branch, else_branch, .. } => {
            contains_mu(then_branch) || contains_mu(else_branch)
        }
        _ => false,
    }
}

fn subst_expr(e: &StateExpr, name: &str, v: i64) -> StateExpr {
    let go = |e: &StateExpr| Box::new(subst_expr(e, name, v));
    match e {
        StateExpr::Var(n) if n == name => StateExpr::Int(v),
        StateExpr::Int(_) | StateExpr::Bool(_) | StateExpr::Var(_) | StateExpr::MapLit(_)
        | StateExpr::Sum(_) => e.clone(),
        StateExpr::MapApp(m, k) => StateExpr::MapApp(m.clone(), go(k)),
        StateExpr::MapUpd(m, k, val) => StateExpr::MapUpd(m.clone(), go(k), go(val)),
        StateExpr::Add(a, b) => StateExpr::Add(go(a), go(b)),
        StateExpr::SubOp(a, b) => StateExpr::SubOp(go(a), go(b)),
        StateExpr::Cmp(op, a, b) => StateExpr::Cmp(*op, go(a), go(b)),
        StateExpr::InDom(k, m) => StateExpr::InDom(go(k), m.clone()),
        StateExpr::Not(a) => StateExpr::Not(go(a)),
        StateExpr::And(a, b) => StateExpr::And(go(a), go(b)),
        StateExpr::Or(a, b) => StateExpr::Or(go(a), go(b)),
        StateExpr::Implies(a, b) => StateExpr::Implies(go(a), go(b)),
    }
}

/// Substitute a literal for a name in every expression of a process body.
pub(super) fn subst_var(p: &ProcAst, name: &str, v: i64) -> ProcAst {
    let go = |p: &ProcAst| Box::new(subst_var(p, name, v));
    let ge = |e: &StateExpr| subst_expr(e, name, v);
    match p {
        ProcAst::Skip | ProcAst::Stop | ProcAst::Chaos | ProcAst::Miracle => p.clone(),
        ProcAst::Prefix { channel, args, body } => ProcAst::Prefix {
            channel: channel.clone(),
            args: args.iter().map(ge).collect(),
            body: go(body),
        },
        ProcAst::Guard { cond, body } => ProcAst::Guard { cond: ge(cond), body: go(body) },
        ProcAst::Assign { var, value } => {
            ProcAst::Assign { var: var.clone(), value: ge(value) }
        }
        ProcAst::IndexedAssign { var, index, value } => ProcAst::IndexedAssign {
            var: var.clone(),
            index: ge(index),
            value: ge(value),
        },
        ProcAst::Seq(l, r) => ProcAst::Seq(go(l), go(r)),
        ProcAst::ExtChoice(ps) => {
            ProcAst::ExtChoice(ps.iter().map(|p| subst_var(p, name, v)).collect())
        }
        ProcAst::IntChoice(ps) => {
            ProcAst::IntChoice(ps.iter().map(|p| subst_var(p, name, v)).collect())
        }
        ProcAst::Cond { cond, then_branch, else_branch } => ProcAst::Cond {
            cond: ge(cond),
            then_branch: go(then_branch),
            else_branch: go(else_branch),
        },
        ProcAst::MuTail(body) => ProcAst::MuTail(go(body)),
        ProcAst::Interleave(l, r) => ProcAst::Interleave(go(l), go(r)),
        ProcAst::Ref { name: n, args } => {
            ProcAst::Ref { name: n.clone(), args: args.iter().map(ge).collect() }
        }
    }
}

pub fn parse(text: &str) -> Result<ModelSpec, SyntaxError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, channels: Vec::new() };
    p.spec()
}
