//! Thread scripts.
//!
//! A script file holds `party <roles>: <commands>` entries, each run by one
//! participant on the endpoint `ch`, or a single `main: <commands>` entry
//! that builds its own topology. `service <name> <roles> <session> as <x> { .. }`
//! declares a reusable acceptor. Commands are separated by `;`, blocks are
//! written in braces and `#` starts a comment.

use std::fmt;
use std::rc::Rc;

use rand::Rng;
use thiserror::Error;

use super::{Side, Value};
use crate::roles::RoleSet;
use crate::session::{parse_session, Payload, Protocol, SessionType};

pub type Block = Rc<Vec<Cmd>>;

/// The endpoint variable every party script starts with.
pub const PARTY_VAR: &str = "ch";

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Lit(Value),
    Var(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cmd {
    Sync(String),
    Send(String, Option<Operand>),
    Recv(String, Option<String>),
    Choose(String, Side),
    Offer(String, Block, Block),
    MConj { ep: String, left: String, right: String },
    /// The caller keeps `keep`; a new thread runs `body` on `give`.
    MDisj { ep: String, side: Side, keep: String, give: String, body: Block },
    Append(String, Block),
    /// A new thread runs `body` on the `roles` part, bound to `give`.
    Split { ep: String, roles: RoleSet, give: String, body: Block },
    Cut1(String),
    Cut2(String, String),
    Cut3(String, String, String),
    CutRes { a: String, b: String, residual: String },
    /// The caller gets the complement of `roles`; the acceptor gets `roles` as `give`.
    Create { var: String, roles: RoleSet, session: SessionType, give: String, body: Block },
    Request { var: String, service: String },
    Spawn { vars: Vec<String>, body: Block },
    Close(String),
    Repeat(usize, Block),
    Loop(Block),
    Break,
    /// Two channels in one call. Deadlock-prone by design.
    Chan2 { vars: [String; 2], roles: [RoleSet; 2], sessions: [SessionType; 2], gives: [String; 2], body: Block },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceDecl {
    pub name: String,
    pub roles: RoleSet,
    pub session: SessionType,
    pub var: String,
    pub body: Block,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    pub parties: Vec<(RoleSet, Block)>,
    pub main: Option<Block>,
    pub services: Vec<ServiceDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("script error at line {line}: {msg}")]
pub struct ScriptError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ScriptError> {
    let mut out = Vec::new();
    for (n, line) in src.lines().enumerate() {
        let line_no = n + 1;
        let cs: Vec<char> = line.chars().collect();
        let mut k = 0;
        while k < cs.len() {
            let c = cs[k];
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                k += 1;
                continue;
            }
            let err = |msg: String| ScriptError { line: line_no, msg };
            let tok = if c == '"' {
                let mut s = String::new();
                k += 1;
                loop {
                    match cs.get(k) {
                        None => return Err(err("unterminated string".into())),
                        Some('"') => break,
                        Some('\\') if k + 1 < cs.len() => {
                            s.push(cs[k + 1]);
                            k += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            k += 1;
                        }
                    }
                }
                k += 1;
                Tok::Str(s)
            } else if c == '-' && cs.get(k + 1) == Some(&'>') {
                k += 2;
                Tok::Sym("->")
            } else if c == '(' && cs.get(k + 1) == Some(&')') {
                k += 2;
                Tok::Sym("()")
            } else if c.is_ascii_digit() || (c == '-' && cs.get(k + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = k;
                k += 1;
                while k < cs.len() && cs[k].is_ascii_digit() {
                    k += 1;
                }
                let text: String = cs[start..k].iter().collect();
                Tok::Int(text.parse().map_err(|_| err(format!("bad integer {text}")))?)
            } else if c.is_alphabetic() || c == '_' {
                let start = k;
                while k < cs.len() && (cs[k].is_alphanumeric() || cs[k] == '_') {
                    k += 1;
                }
                Tok::Word(cs[start..k].iter().collect())
            } else {
                k += 1;
                match c {
                    '{' => Tok::Sym("{"),
                    '}' => Tok::Sym("}"),
                    ';' => Tok::Sym(";"),
                    ':' => Tok::Sym(":"),
                    ',' => Tok::Sym(","),
                    '|' => Tok::Sym("|"),
                    other => return Err(err(format!("unexpected character {other:?}"))),
                }
            };
            out.push((line_no, tok));
        }
    }
    Ok(out)
}

const ITEM_KEYWORDS: [&str; 3] = ["party", "main", "service"];

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    protocol: Option<&'a Protocol>,
}

impl Parser<'_> {
    fn line(&self) -> usize {
        self.toks.get(self.at).or(self.toks.last()).map(|t| t.0).unwrap_or(1)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ScriptError> {
        Err(ScriptError { line: self.line(), msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn sym(&mut self, s: &str) -> Result<(), ScriptError> {
        if self.is_sym(s) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected '{s}'"))
        }
    }

    fn keyword(&mut self, w: &str) -> Result<(), ScriptError> {
        if self.is_word(w) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected '{w}'"))
        }
    }

    fn word(&mut self) -> Result<String, ScriptError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.at += 1;
                Ok(w)
            }
            _ => self.err("expected a name"),
        }
    }

    fn number(&mut self) -> Result<i64, ScriptError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.at += 1;
                Ok(n)
            }
            _ => self.err("expected a number"),
        }
    }

    fn roles(&mut self) -> Result<RoleSet, ScriptError> {
        self.sym("{")?;
        let mut r = RoleSet::default();
        while !self.is_sym("}") {
            let n = self.number()?;
            if !(0..64).contains(&n) {
                return self.err(format!("role {n} out of range"));
            }
            r = r.union(RoleSet::singleton(n as usize));
            if !self.is_sym("}") {
                self.sym(",")?;
            }
        }
        self.sym("}")?;
        Ok(r)
    }

    fn session(&mut self) -> Result<SessionType, ScriptError> {
        match self.peek().cloned() {
            Some(Tok::Str(s)) => {
                self.at += 1;
                parse_session(&s).or_else(|e| self.err(e.to_string()))
            }
            Some(Tok::Word(name)) => {
                self.at += 1;
                match self.protocol.map(|p| p.get(&name)) {
                    Some(Ok(s)) => Ok(s.clone()),
                    Some(Err(e)) => self.err(e.to_string()),
                    None => self.err(format!("session {name:?} used without a protocol")),
                }
            }
            _ => self.err("expected a session name or a quoted session"),
        }
    }

    fn side(&mut self) -> Result<Side, ScriptError> {
        match self.word()?.as_str() {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => self.err(format!("expected left or right, got {other:?}")),
        }
    }

    fn block(&mut self) -> Result<Block, ScriptError> {
        self.sym("{")?;
        let cmds = self.cmds()?;
        self.sym("}")?;
        Ok(Rc::new(cmds))
    }

    fn at_end_of_cmds(&self) -> bool {
        match self.peek() {
            None => true,
            Some(Tok::Sym("}")) => true,
            Some(Tok::Word(w)) => ITEM_KEYWORDS.contains(&w.as_str()),
            _ => false,
        }
    }

    fn cmds(&mut self) -> Result<Vec<Cmd>, ScriptError> {
        let mut out = Vec::new();
        loop {
            while self.is_sym(";") {
                self.at += 1;
            }
            if self.at_end_of_cmds() {
                return Ok(out);
            }
            out.push(self.cmd()?);
        }
    }

    fn operand(&mut self) -> Option<Operand> {
        let op = match self.peek()? {
            Tok::Int(n) => Operand::Lit(Value::Int(*n)),
            Tok::Str(s) => Operand::Lit(Value::Str(s.clone())),
            Tok::Sym("()") => Operand::Lit(Value::Unit),
            Tok::Word(w) if !ITEM_KEYWORDS.contains(&w.as_str()) => Operand::Var(w.clone()),
            _ => return None,
        };
        self.at += 1;
        Some(op)
    }

    fn cmd(&mut self) -> Result<Cmd, ScriptError> {
        let name = self.word()?;
        let cmd = match name.as_str() {
            "sync" => Cmd::Sync(self.word()?),
            "send" => {
                let ep = self.word()?;
                Cmd::Send(ep, self.operand())
            }
            "recv" => {
                let ep = self.word()?;
                let bind = if self.is_word("as") {
                    self.at += 1;
                    Some(self.word()?)
                } else {
                    None
                };
                Cmd::Recv(ep, bind)
            }
            "choose" => {
                let ep = self.word()?;
                Cmd::Choose(ep, self.side()?)
            }
            "offer" => {
                let ep = self.word()?;
                let l = self.block()?;
                self.keyword("else")?;
                Cmd::Offer(ep, l, self.block()?)
            }
            "mconj" => {
                let ep = self.word()?;
                self.sym("->")?;
                let left = self.word()?;
                self.sym(",")?;
                Cmd::MConj { ep, left, right: self.word()? }
            }
            "mdisj_l" | "mdisj_r" => {
                let side = if name == "mdisj_l" { Side::Left } else { Side::Right };
                let ep = self.word()?;
                self.sym("->")?;
                let keep = self.word()?;
                self.sym("|")?;
                let give = self.word()?;
                Cmd::MDisj { ep, side, keep, give, body: self.block()? }
            }
            "append" => {
                let ep = self.word()?;
                Cmd::Append(ep, self.block()?)
            }
            "split" => {
                let ep = self.word()?;
                let roles = self.roles()?;
                self.keyword("as")?;
                let give = self.word()?;
                Cmd::Split { ep, roles, give, body: self.block()? }
            }
            "cut1" => Cmd::Cut1(self.word()?),
            "cut2" => Cmd::Cut2(self.word()?, self.word()?),
            "cut3" => Cmd::Cut3(self.word()?, self.word()?, self.word()?),
            "cutres" => {
                let a = self.word()?;
                let b = self.word()?;
                self.sym("->")?;
                Cmd::CutRes { a, b, residual: self.word()? }
            }
            "create" => {
                let var = self.word()?;
                let roles = self.roles()?;
                let session = self.session()?;
                self.keyword("as")?;
                let give = self.word()?;
                Cmd::Create { var, roles, session, give, body: self.block()? }
            }
            "request" => {
                let var = self.word()?;
                Cmd::Request { var, service: self.word()? }
            }
            "spawn" => {
                let mut vars = Vec::new();
                while !self.is_sym("{") {
                    vars.push(self.word()?);
                    if self.is_sym(",") {
                        self.at += 1;
                    }
                }
                Cmd::Spawn { vars, body: self.block()? }
            }
            "close" => Cmd::Close(self.word()?),
            "repeat" => {
                let n = self.number()?;
                if n < 0 {
                    return self.err("repeat count must be non-negative");
                }
                Cmd::Repeat(n as usize, self.block()?)
            }
            "loop" => Cmd::Loop(self.block()?),
            "break" => Cmd::Break,
            "chan2" => {
                let vars = [self.word()?, self.word()?];
                let roles = [self.roles()?, self.roles()?];
                let sessions = [self.session()?, self.session()?];
                self.keyword("as")?;
                let gives = [self.word()?, self.word()?];
                Cmd::Chan2 { vars, roles, sessions, gives, body: self.block()? }
            }
            other => {
                self.at -= 1;
                return self.err(format!("unknown command {other:?}"));
            }
        };
        Ok(cmd)
    }

    fn file(&mut self) -> Result<Script, ScriptError> {
        let mut script = Script::default();
        while self.peek().is_some() {
            match self.word()?.as_str() {
                "party" => {
                    let roles = self.roles()?;
                    self.sym(":")?;
                    let cmds = self.cmds()?;
                    script.parties.push((roles, Rc::new(cmds)));
                }
                "main" => {
                    self.sym(":")?;
                    if script.main.is_some() {
                        return self.err("more than one main");
                    }
                    script.main = Some(Rc::new(self.cmds()?));
                }
                "service" => {
                    let name = self.word()?;
                    let roles = self.roles()?;
                    let session = self.session()?;
                    self.keyword("as")?;
                    let var = self.word()?;
                    let body = self.block()?;
                    script.services.push(ServiceDecl { name, roles, session, var, body });
                }
                other => {
                    self.at -= 1;
                    return self.err(format!("expected party, main or service, got {other:?}"));
                }
            }
            if self.is_sym("}") {
                return self.err("unbalanced '}'");
            }
        }
        if script.main.is_some() && !script.parties.is_empty() {
            return self.err("a script has either parties or a main program");
        }
        Ok(script)
    }
}

/// Parses a script. Session names refer to `protocol`.
pub fn parse_script(src: &str, protocol: Option<&Protocol>) -> Result<Script, ScriptError> {
    let mut p = Parser { toks: tokenize(src)?, at: 0, protocol };
    p.file()
}

/// Parses a bare command list.
pub fn parse_commands(src: &str, protocol: Option<&Protocol>) -> Result<Block, ScriptError> {
    let mut p = Parser { toks: tokenize(src)?, at: 0, protocol };
    let cmds = p.cmds()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(Rc::new(cmds))
}

struct Indented<'a>(&'a [Cmd], usize);

impl fmt::Display for Indented<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.0 {
            writeln!(f, "{:width$}{};", "", CmdAt(c, self.1), width = self.1)?;
        }
        Ok(())
    }
}

struct CmdAt<'a>(&'a Cmd, usize);

fn roles_text(r: RoleSet) -> String {
    let v: Vec<String> = r.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", v.join(","))
}

fn quoted(s: &SessionType) -> String {
    format!("\"{s}\"")
}

impl fmt::Display for CmdAt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ind = self.1;
        let blk = |b: &Block| format!("{{\n{}{:ind$}}}", Indented(b, ind + 2), "");
        match self.0 {
            Cmd::Sync(x) => write!(f, "sync {x}"),
            Cmd::Send(x, None) => write!(f, "send {x}"),
            Cmd::Send(x, Some(Operand::Lit(v))) => write!(f, "send {x} {v}"),
            Cmd::Send(x, Some(Operand::Var(v))) => write!(f, "send {x} {v}"),
            Cmd::Recv(x, None) => write!(f, "recv {x}"),
            Cmd::Recv(x, Some(v)) => write!(f, "recv {x} as {v}"),
            Cmd::Choose(x, s) => write!(f, "choose {x} {}", s.name()),
            Cmd::Offer(x, l, r) => write!(f, "offer {x} {} else {}", blk(l), blk(r)),
            Cmd::MConj { ep, left, right } => write!(f, "mconj {ep} -> {left}, {right}"),
            Cmd::MDisj { ep, side, keep, give, body } => {
                let n = if *side == Side::Left { "mdisj_l" } else { "mdisj_r" };
                write!(f, "{n} {ep} -> {keep} | {give} {}", blk(body))
            }
            Cmd::Append(x, b) => write!(f, "append {x} {}", blk(b)),
            Cmd::Split { ep, roles, give, body } => write!(f, "split {ep} {} as {give} {}", roles_text(*roles), blk(body)),
            Cmd::Cut1(x) => write!(f, "cut1 {x}"),
            Cmd::Cut2(a, b) => write!(f, "cut2 {a} {b}"),
            Cmd::Cut3(a, b, c) => write!(f, "cut3 {a} {b} {c}"),
            Cmd::CutRes { a, b, residual } => write!(f, "cutres {a} {b} -> {residual}"),
            Cmd::Create { var, roles, session, give, body } => {
                write!(f, "create {var} {} {} as {give} {}", roles_text(*roles), quoted(session), blk(body))
            }
            Cmd::Request { var, service } => write!(f, "request {var} {service}"),
            Cmd::Spawn { vars, body } => write!(f, "spawn {} {}", vars.join(", "), blk(body)),
            Cmd::Close(x) => write!(f, "close {x}"),
            Cmd::Repeat(n, b) => write!(f, "repeat {n} {}", blk(b)),
            Cmd::Loop(b) => write!(f, "loop {}", blk(b)),
            Cmd::Break => f.write_str("break"),
            Cmd::Chan2 { vars, roles, sessions, gives, body } => write!(
                f,
                "chan2 {} {} {} {} {} {} as {} {} {}",
                vars[0],
                vars[1],
                roles_text(roles[0]),
                roles_text(roles[1]),
                quoted(&sessions[0]),
                quoted(&sessions[1]),
                gives[0],
                gives[1],
                blk(body)
            ),
        }
    }
}

impl fmt::Display for Cmd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        CmdAt(self, 0).fmt(f)
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.services {
            writeln!(f, "service {} {} {} as {} {{", s.name, roles_text(s.roles), quoted(&s.session), s.var)?;
            write!(f, "{}}}", Indented(&s.body, 2))?;
            writeln!(f)?;
        }
        for (r, b) in &self.parties {
            writeln!(f, "party {}:", roles_text(*r))?;
            write!(f, "{}", Indented(b, 2))?;
        }
        if let Some(m) = &self.main {
            writeln!(f, "main:")?;
            write!(f, "{}", Indented(m, 2))?;
        }
        Ok(())
    }
}

/// Derives a program that plays `s` at `roles` on endpoint `var`. Choices
/// made at `roles` and the values sent are drawn from `rng`; repetitions
/// run at most `max_reps` times.
pub fn follow<R: Rng>(s: &SessionType, roles: RoleSet, var: &str, max_reps: usize, rng: &mut R) -> Block {
    let mut fresh = 0;
    let mut out = Vec::new();
    follow_into(s, roles, var, max_reps, rng, &mut fresh, &mut out);
    out.push(Cmd::Close(var.to_string()));
    Rc::new(out)
}

fn value_for<R: Rng>(p: Payload, rng: &mut R) -> Value {
    match p {
        Payload::Unit => Value::Unit,
        Payload::Int => Value::Int(rng.gen_range(0..100)),
        Payload::Str => Value::Str(format!("v{}", rng.gen_range(0..100))),
    }
}

fn follow_into<R: Rng>(
    s: &SessionType,
    r: RoleSet,
    var: &str,
    max_reps: usize,
    rng: &mut R,
    fresh: &mut usize,
    out: &mut Vec<Cmd>,
) {
    let x = var.to_string();
    let sub = |s: &SessionType, var: &str, rng: &mut R, fresh: &mut usize| {
        let mut v = Vec::new();
        follow_into(s, r, var, max_reps, rng, fresh, &mut v);
        v
    };
    let name = |fresh: &mut usize| {
        *fresh += 1;
        format!("{var}_{fresh}")
    };
    match s {
        SessionType::Msg { from, to, payload, .. } => {
            if r.contains(*from) && !r.contains(*to) {
                out.push(Cmd::Send(x, Some(Operand::Lit(value_for(*payload, rng)))));
            } else if r.contains(*to) && !r.contains(*from) {
                out.push(Cmd::Recv(x, None));
            } else {
                out.push(Cmd::Sync(x));
            }
        }
        SessionType::Bcast { from, payload, .. } => {
            if r.contains(*from) {
                out.push(Cmd::Send(x, Some(Operand::Lit(value_for(*payload, rng)))));
            } else if r.is_empty() {
                out.push(Cmd::Sync(x));
            } else {
                out.push(Cmd::Recv(x, None));
            }
        }
        SessionType::Gather { to, payload, .. } => {
            if r.contains(*to) {
                out.push(Cmd::Recv(x, None));
            } else if r.is_empty() {
                out.push(Cmd::Sync(x));
            } else {
                out.push(Cmd::Send(x, Some(Operand::Lit(value_for(*payload, rng)))));
            }
        }
        SessionType::Nil => {}
        SessionType::Append(a, b) => {
            follow_into(a, r, var, max_reps, rng, fresh, out);
            follow_into(b, r, var, max_reps, rng, fresh, out);
        }
        SessionType::AConj(k, a, b) => {
            if r.contains(*k) {
                let left = rng.gen_bool(0.5);
                out.push(Cmd::Choose(x, if left { Side::Left } else { Side::Right }));
                let body = sub(if left { a } else { b }, var, rng, fresh);
                out.extend(body);
            } else {
                let l = sub(a, var, rng, fresh);
                let rr = sub(b, var, rng, fresh);
                out.push(Cmd::Offer(x, Rc::new(l), Rc::new(rr)));
            }
        }
        SessionType::Option(k, a) => {
            let s = SessionType::AConj(*k, a.clone(), Box::new(SessionType::Nil));
            follow_into(&s, r, var, max_reps, rng, fresh, out);
        }
        SessionType::Repseq(k, a) => {
            if r.contains(*k) {
                let n = rng.gen_range(0..=max_reps);
                let mut body = vec![Cmd::Choose(x.clone(), Side::Left)];
                body.extend(sub(a, var, rng, fresh));
                out.push(Cmd::Repeat(n, Rc::new(body)));
                out.push(Cmd::Choose(x, Side::Right));
            } else {
                let body = sub(a, var, rng, fresh);
                out.push(Cmd::Loop(Rc::new(vec![Cmd::Offer(x, Rc::new(body), Rc::new(vec![Cmd::Break]))])));
            }
        }
        SessionType::MConj(k, a, b) => {
            let other = name(fresh);
            if r.contains(*k) {
                out.push(Cmd::MConj { ep: x.clone(), left: x.clone(), right: other.clone() });
                let mut spawned = sub(b, &other, rng, fresh);
                spawned.push(Cmd::Close(other.clone()));
                out.push(Cmd::Spawn { vars: vec![other], body: Rc::new(spawned) });
            } else {
                let mut body = sub(b, &other, rng, fresh);
                body.push(Cmd::Close(other.clone()));
                out.push(Cmd::MDisj { ep: x.clone(), side: Side::Left, keep: x.clone(), give: other, body: Rc::new(body) });
            }
            out.extend(sub(a, var, rng, fresh));
        }
        SessionType::Repeat(k, a) => {
            let other = name(fresh);
            let mut body = sub(a, &other, rng, fresh);
            body.push(Cmd::Close(other.clone()));
            let body = Rc::new(body);
            if r.contains(*k) {
                let n = rng.gen_range(0..=max_reps);
                let it = vec![
                    Cmd::Choose(x.clone(), Side::Left),
                    Cmd::MConj { ep: x.clone(), left: other.clone(), right: x.clone() },
                    Cmd::Spawn { vars: vec![other], body },
                ];
                out.push(Cmd::Repeat(n, Rc::new(it)));
                out.push(Cmd::Choose(x, Side::Right));
            } else {
                let left = vec![Cmd::MDisj { ep: x.clone(), side: Side::Right, keep: x.clone(), give: other, body }];
                out.push(Cmd::Loop(Rc::new(vec![Cmd::Offer(x, Rc::new(left), Rc::new(vec![Cmd::Break]))])));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_party_scripts() {
        let src = "party {1}: send ch \"war and peace\"; recv ch as q\n  # comment\nparty {0,2}: recv ch; send ch 12;\n";
        let s = parse_script(src, None).unwrap();
        assert_eq!(s.parties.len(), 2);
        assert_eq!(s.parties[1].0, "{0,2}".parse().unwrap());
        assert_eq!(s.parties[0].1[1], Cmd::Recv("ch".into(), Some("q".into())));
        assert!(parse_script("party {1}: frobnicate ch", None).is_err());
        assert!(parse_script("main: sync ch\nparty {0}: sync ch", None).is_err());
    }

    #[test]
    fn printed_scripts_parse_back() {
        let s = parse_session("query(0)@mconj(0, answer(1, 0, int)@score(0, 1), repseq(2, a(2, 0)@b(0, 2, str)))").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for r in ["{0}", "{1}", "{2}", "{}"] {
            let b = follow(&s, r.parse().unwrap(), "ch", 2, &mut rng);
            let text = Indented(&b, 0).to_string();
            assert_eq!(parse_commands(&text, None).unwrap(), b, "{text}");
        }
    }
}
