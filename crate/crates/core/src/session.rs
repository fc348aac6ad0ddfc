//! Session types over role sets: the protocol DSL, the LMRL encoding,
//! coherence of endpoint typings and per-endpoint action classification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::logic::Formula;
use crate::roles::{RoleSet, Ultrafilter, Universe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Unit,
    Int,
    Str,
}

impl Payload {
    fn keyword(&self) -> &'static str {
        match self {
            Payload::Unit => "unit",
            Payload::Int => "int",
            Payload::Str => "str",
        }
    }

    fn from_keyword(s: &str) -> Option<Payload> {
        match s {
            "unit" => Some(Payload::Unit),
            "int" => Some(Payload::Int),
            "str" => Some(Payload::Str),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SessionType {
    /// Point-to-point message.
    Msg { label: String, from: usize, to: usize, payload: Payload },
    /// One sender, every other role receives.
    Bcast { label: String, from: usize, payload: Payload },
    /// Every other role sends to one receiver.
    Gather { label: String, to: usize, payload: Payload },
    Nil,
    /// `A@B`: finish `A`, then continue with `B`.
    Append(Box<SessionType>, Box<SessionType>),
    MConj(usize, Box<SessionType>, Box<SessionType>),
    AConj(usize, Box<SessionType>, Box<SessionType>),
    Option(usize, Box<SessionType>),
    Repseq(usize, Box<SessionType>),
    Repeat(usize, Box<SessionType>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("role {0} outside a universe of {1}")]
    RoleOutOfRange(usize, usize),
    #[error("message {0} has the same sender and receiver")]
    SameRole(String),
    #[error("endpoint sessions differ: {0} vs {1}")]
    SessionMismatch(String, String),
    #[error("endpoint role sets do not partition the universe")]
    NotPartition,
    #[error("unknown session {0:?}")]
    UnknownSession(String),
}

impl SessionType {
    pub fn msg(label: &str, from: usize, to: usize) -> Self {
        SessionType::Msg { label: label.into(), from, to, payload: Payload::Unit }
    }

    pub fn append(a: SessionType, b: SessionType) -> Self {
        SessionType::Append(Box::new(a), Box::new(b))
    }

    /// Right-nested `@` chain; `Nil` for an empty list.
    pub fn seq(parts: Vec<SessionType>) -> Self {
        let mut it = parts.into_iter().rev();
        let Some(last) = it.next() else { return SessionType::Nil };
        it.fold(last, |acc, s| SessionType::append(s, acc))
    }

    pub fn node_count(&self) -> usize {
        match self {
            SessionType::Msg { .. } | SessionType::Bcast { .. } | SessionType::Gather { .. } | SessionType::Nil => 1,
            SessionType::Append(a, b) | SessionType::MConj(_, a, b) | SessionType::AConj(_, a, b) => {
                1 + a.node_count() + b.node_count()
            }
            SessionType::Option(_, a) | SessionType::Repseq(_, a) | SessionType::Repeat(_, a) => 1 + a.node_count(),
        }
    }

    pub fn roles(&self, out: &mut BTreeSet<usize>) {
        match self {
            SessionType::Msg { from, to, .. } => {
                out.insert(*from);
                out.insert(*to);
            }
            SessionType::Bcast { from: r, .. } | SessionType::Gather { to: r, .. } => {
                out.insert(*r);
            }
            SessionType::Nil => {}
            SessionType::Append(a, b) => {
                a.roles(out);
                b.roles(out);
            }
            SessionType::MConj(r, a, b) | SessionType::AConj(r, a, b) => {
                out.insert(*r);
                a.roles(out);
                b.roles(out);
            }
            SessionType::Option(r, a) | SessionType::Repseq(r, a) | SessionType::Repeat(r, a) => {
                out.insert(*r);
                a.roles(out);
            }
        }
    }

    /// Every role below `n`, and no message to oneself.
    pub fn validate(&self, n: usize) -> Result<(), SessionError> {
        let mut rs = BTreeSet::new();
        self.roles(&mut rs);
        if let Some(&r) = rs.iter().find(|&&r| r >= n) {
            return Err(SessionError::RoleOutOfRange(r, n));
        }
        self.no_self_messages()
    }

    fn no_self_messages(&self) -> Result<(), SessionError> {
        match self {
            SessionType::Msg { label, from, to, .. } if from == to => Err(SessionError::SameRole(label.clone())),
            SessionType::Append(a, b) | SessionType::MConj(_, a, b) | SessionType::AConj(_, a, b) => {
                a.no_self_messages()?;
                b.no_self_messages()
            }
            SessionType::Option(_, a) | SessionType::Repseq(_, a) | SessionType::Repeat(_, a) => a.no_self_messages(),
            _ => Ok(()),
        }
    }

    /// One step of the defining equations for the derived constructors:
    /// `option(r,A) = A &_r nil`, `repseq(r,A) = option(r, A@repseq(r,A))`
    /// and `repeat(r,A) = option(r, A (x)_r repeat(r,A))`.
    pub fn unfold(&self) -> SessionType {
        let nil = || Box::new(SessionType::Nil);
        match self {
            SessionType::Option(r, a) => SessionType::AConj(*r, a.clone(), nil()),
            SessionType::Repseq(r, a) => {
                SessionType::AConj(*r, Box::new(SessionType::Append(a.clone(), Box::new(self.clone()))), nil())
            }
            SessionType::Repeat(r, a) => {
                SessionType::AConj(*r, Box::new(SessionType::MConj(*r, a.clone(), Box::new(self.clone()))), nil())
            }
            other => other.clone(),
        }
    }

    /// The LMRL formula for this session, unrolling `repseq` `unroll` times.
    pub fn encode_lmrl(&self, unroll: usize) -> Encoding {
        let mut sequential = BTreeSet::new();
        let formula = self.encode_at(unroll, &mut Vec::new(), &mut sequential);
        Encoding { formula, sequential }
    }

    fn encode_at(&self, unroll: usize, path: &mut Vec<u8>, seq: &mut BTreeSet<Vec<u8>>) -> Formula {
        let sub = |s: &SessionType, step: u8, unroll: usize, path: &mut Vec<u8>, seq: &mut BTreeSet<Vec<u8>>| {
            path.push(step);
            let f = s.encode_at(unroll, path, seq);
            path.pop();
            f
        };
        match self {
            SessionType::Msg { .. } | SessionType::Bcast { .. } | SessionType::Gather { .. } => {
                Formula::atom(&self.atom_label())
            }
            SessionType::Nil => Formula::atom("nil"),
            SessionType::Append(a, b) => {
                seq.insert(path.clone());
                let fa = sub(a, 0, unroll, path, seq);
                let fb = sub(b, 1, unroll, path, seq);
                Formula::tensor(Ultrafilter(0), fa, fb)
            }
            SessionType::MConj(r, a, b) => {
                let fa = sub(a, 0, unroll, path, seq);
                let fb = sub(b, 1, unroll, path, seq);
                Formula::tensor(Ultrafilter(*r), fa, fb)
            }
            SessionType::AConj(r, a, b) => {
                let fa = sub(a, 0, unroll, path, seq);
                let fb = sub(b, 1, unroll, path, seq);
                Formula::with(Ultrafilter(*r), fa, fb)
            }
            SessionType::Option(r, a) => {
                let fa = sub(a, 0, unroll, path, seq);
                Formula::with(Ultrafilter(*r), fa, Formula::atom("nil"))
            }
            SessionType::Repseq(r, a) => {
                if unroll == 0 {
                    return Formula::atom("nil");
                }
                // option(r, A@repseq(r,A)): the @ node sits at path + [0]
                path.push(0);
                seq.insert(path.clone());
                let fa = sub(a, 0, unroll, path, seq);
                let rest = sub(self, 1, unroll - 1, path, seq);
                path.pop();
                Formula::with(Ultrafilter(*r), Formula::tensor(Ultrafilter(0), fa, rest), Formula::atom("nil"))
            }
            SessionType::Repeat(r, a) => {
                let fa = sub(a, 0, unroll, path, seq);
                Formula::bang(Ultrafilter(*r), fa)
            }
        }
    }

    /// `label:from:to[:payload]`, with `*` for the unnamed side of broadcasts.
    pub fn atom_label(&self) -> String {
        let (label, from, to, payload) = match self {
            SessionType::Msg { label, from, to, payload } => (label, from.to_string(), to.to_string(), payload),
            SessionType::Bcast { label, from, payload } => (label, from.to_string(), "*".into(), payload),
            SessionType::Gather { label, to, payload } => (label, "*".into(), to.to_string(), payload),
            _ => return String::new(),
        };
        match payload {
            Payload::Unit => format!("{label}:{from}:{to}"),
            p => format!("{label}:{from}:{to}:{}", p.keyword()),
        }
    }
}

/// An LMRL formula together with the positions of the tensors that stand
/// for `@`. A position is the list of child indices from the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub formula: Formula,
    pub sequential: BTreeSet<Vec<u8>>,
}

/// `chan(R, S)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointType {
    pub roles: RoleSet,
    pub session: SessionType,
}

/// Same session everywhere and role sets that partition the universe.
pub fn coherence_check(universe: &Universe, endpoints: &[EndpointType]) -> Result<(), SessionError> {
    if let Some(first) = endpoints.first() {
        if let Some(other) = endpoints.iter().find(|e| e.session != first.session) {
            return Err(SessionError::SessionMismatch(first.session.to_string(), other.session.to_string()));
        }
    }
    let roles: Vec<RoleSet> = endpoints.iter().map(|e| e.roles).collect();
    if !universe.partition_check(&roles) {
        return Err(SessionError::NotPartition);
    }
    Ok(())
}

/// What the holder of an endpoint at some role set does next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    /// Sends; `to` is `None` for a broadcast.
    Send { to: Option<usize> },
    /// Receives; `from` is `None` when every other role sends.
    Recv { from: Option<usize> },
    Skip,
    Offer,
    Choose,
    ForkConj,
    ForkDisj,
    Append,
    Done,
}

/// Classifies the head constructor of `s` for an endpoint at `r`.
pub fn next_action(s: &SessionType, r: RoleSet) -> Action {
    match s {
        SessionType::Msg { from, to, .. } => match (r.contains(*from), r.contains(*to)) {
            (true, false) => Action::Send { to: Some(*to) },
            (false, true) => Action::Recv { from: Some(*from) },
            _ => Action::Skip,
        },
        SessionType::Bcast { from, .. } => {
            if r.contains(*from) {
                Action::Send { to: None }
            } else if r.is_empty() {
                Action::Skip
            } else {
                Action::Recv { from: Some(*from) }
            }
        }
        SessionType::Gather { to, .. } => {
            if r.contains(*to) {
                Action::Recv { from: None }
            } else if r.is_empty() {
                Action::Skip
            } else {
                Action::Send { to: Some(*to) }
            }
        }
        SessionType::Nil => Action::Done,
        SessionType::Append(..) => Action::Append,
        SessionType::MConj(k, ..) => {
            if r.contains(*k) {
                Action::ForkConj
            } else {
                Action::ForkDisj
            }
        }
        SessionType::AConj(k, ..) | SessionType::Option(k, _) | SessionType::Repseq(k, _) | SessionType::Repeat(k, _) => {
            if r.contains(*k) {
                Action::Choose
            } else {
                Action::Offer
            }
        }
    }
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let payload = |p: &Payload| match p {
            Payload::Unit => String::new(),
            p => format!(", {}", p.keyword()),
        };
        match self {
            SessionType::Msg { label, from, to, payload: p } => write!(f, "{label}({from}, {to}{})", payload(p)),
            SessionType::Bcast { label, from, payload: p } => write!(f, "{label}({from}{})", payload(p)),
            SessionType::Gather { label, to, payload: p } => write!(f, "{label}(*, {to}{})", payload(p)),
            SessionType::Nil => f.write_str("nil"),
            SessionType::Append(a, b) => {
                if matches!(**a, SessionType::Append(..)) {
                    write!(f, "({a})@{b}")
                } else {
                    write!(f, "{a}@{b}")
                }
            }
            SessionType::MConj(r, a, b) => write!(f, "mconj({r}, {a}, {b})"),
            SessionType::AConj(r, a, b) => write!(f, "aconj({r}, {a}, {b})"),
            SessionType::Option(r, a) => write!(f, "option({r}, {a})"),
            SessionType::Repseq(r, a) => write!(f, "repseq({r}, {a})"),
            SessionType::Repeat(r, a) => write!(f, "repeat({r}, {a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(usize),
    Star,
    LParen,
    RParen,
    Comma,
    At,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, SessionError> {
    let mut out = Vec::new();
    let cs: Vec<(usize, char)> = src.char_indices().collect();
    let mut k = 0;
    while k < cs.len() {
        let (pos, c) = cs[k];
        k += 1;
        let tok = match c {
            c if c.is_whitespace() => continue,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '@' => Tok::At,
            '*' => Tok::Star,
            c if c.is_ascii_digit() => {
                let mut s = c.to_string();
                while k < cs.len() && cs[k].1.is_ascii_digit() {
                    s.push(cs[k].1);
                    k += 1;
                }
                Tok::Num(s.parse().map_err(|_| SessionError::Syntax { pos, msg: "number too large".into() })?)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = c.to_string();
                while k < cs.len() && (cs[k].1.is_alphanumeric() || cs[k].1 == '_' || cs[k].1 == '-') {
                    s.push(cs[k].1);
                    k += 1;
                }
                Tok::Ident(s)
            }
            other => return Err(SessionError::Syntax { pos, msg: format!("unexpected character {other:?}") }),
        };
        out.push((pos, tok));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|t| t.0).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SessionError> {
        Err(SessionError::Syntax { pos: self.pos(), msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.1.clone());
        self.at += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), SessionError> {
        if self.peek() == Some(&want) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected {want:?}"))
        }
    }

    fn role(&mut self) -> Result<usize, SessionError> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(n),
            _ => {
                self.at -= 1;
                self.err("expected a role")
            }
        }
    }

    fn seq(&mut self) -> Result<SessionType, SessionError> {
        let first = self.prim()?;
        if self.peek() == Some(&Tok::At) {
            self.at += 1;
            let rest = self.seq()?;
            return Ok(SessionType::append(first, rest));
        }
        Ok(first)
    }

    fn prim(&mut self) -> Result<SessionType, SessionError> {
        match self.next() {
            Some(Tok::LParen) => {
                let s = self.seq()?;
                self.expect(Tok::RParen)?;
                Ok(s)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "nil" if self.peek() != Some(&Tok::LParen) => Ok(SessionType::Nil),
                "mconj" | "aconj" => {
                    self.expect(Tok::LParen)?;
                    let r = self.role()?;
                    self.expect(Tok::Comma)?;
                    let a = Box::new(self.seq()?);
                    self.expect(Tok::Comma)?;
                    let b = Box::new(self.seq()?);
                    self.expect(Tok::RParen)?;
                    Ok(if name == "mconj" { SessionType::MConj(r, a, b) } else { SessionType::AConj(r, a, b) })
                }
                "option" | "repseq" | "repeat" => {
                    self.expect(Tok::LParen)?;
                    let r = self.role()?;
                    self.expect(Tok::Comma)?;
                    let a = Box::new(self.seq()?);
                    self.expect(Tok::RParen)?;
                    Ok(match name.as_str() {
                        "option" => SessionType::Option(r, a),
                        "repseq" => SessionType::Repseq(r, a),
                        _ => SessionType::Repeat(r, a),
                    })
                }
                _ => self.atom(name),
            },
            _ => {
                self.at -= 1;
                self.err("expected a session")
            }
        }
    }

    fn atom(&mut self, label: String) -> Result<SessionType, SessionError> {
        self.expect(Tok::LParen)?;
        let mut sides: Vec<Option<usize>> = Vec::new();
        let mut payload = Payload::Unit;
        loop {
            match self.next() {
                Some(Tok::Num(n)) if sides.len() < 2 => sides.push(Some(n)),
                Some(Tok::Star) if sides.len() < 2 => sides.push(None),
                Some(Tok::Ident(p)) if !sides.is_empty() => match Payload::from_keyword(&p) {
                    Some(p) => {
                        payload = p;
                        self.expect(Tok::RParen)?;
                        break;
                    }
                    None => {
                        self.at -= 1;
                        return self.err(format!("unknown payload {p:?}"));
                    }
                },
                _ => {
                    self.at -= 1;
                    return self.err("expected a role, '*' or a payload");
                }
            }
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => break,
                _ => {
                    self.at -= 1;
                    return self.err("expected ',' or ')'");
                }
            }
        }
        match sides.as_slice() {
            [Some(from)] | [Some(from), None] => Ok(SessionType::Bcast { label, from: *from, payload }),
            [None, Some(to)] => Ok(SessionType::Gather { label, to: *to, payload }),
            [Some(from), Some(to)] => Ok(SessionType::Msg { label, from: *from, to: *to, payload }),
            _ => self.err("a message needs at least one named role"),
        }
    }
}

/// Parses the session grammar; `@` associates to the right.
pub fn parse_session(src: &str) -> Result<SessionType, SessionError> {
    let mut p = Parser { toks: tokenize(src)?, at: 0, end: src.len() };
    let s = p.seq()?;
    if p.at < p.toks.len() {
        return p.err("trailing input");
    }
    Ok(s)
}

impl FromStr for SessionType {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_session(s)
    }
}

impl Serialize for SessionType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SessionType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A protocol file: `roles <N>` followed by `session <name> = <S>` entries.
/// A session may continue over several lines; `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub universe: Universe,
    pub sessions: BTreeMap<String, SessionType>,
}

impl Protocol {
    pub fn get(&self, name: &str) -> Result<&SessionType, SessionError> {
        self.sessions.get(name).ok_or_else(|| SessionError::UnknownSession(name.to_string()))
    }
}

pub fn parse_protocol(src: &str) -> Result<Protocol, SessionError> {
    let mut roles = None;
    let mut entries: Vec<(String, String, usize)> = Vec::new();
    let mut offset = 0;
    for line in src.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(n) = text.strip_prefix("roles ") {
            let n: usize = n.trim().parse().map_err(|_| SessionError::Syntax { pos: start, msg: "bad role count".into() })?;
            roles = Some(n);
        } else if let Some(rest) = text.strip_prefix("session ") {
            let Some((name, body)) = rest.split_once('=') else {
                return Err(SessionError::Syntax { pos: start, msg: "expected '='".into() });
            };
            entries.push((name.trim().to_string(), body.to_string(), start));
        } else if let Some(last) = entries.last_mut() {
            last.1.push(' ');
            last.1.push_str(text);
        } else {
            return Err(SessionError::Syntax { pos: start, msg: "expected 'roles' or 'session'".into() });
        }
    }
    let n = roles.ok_or(SessionError::Syntax { pos: 0, msg: "missing 'roles <N>'".into() })?;
    let universe = Universe::new(n).map_err(|e| SessionError::Syntax { pos: 0, msg: e.to_string() })?;
    let mut sessions = BTreeMap::new();
    for (name, body, start) in entries {
        let s = parse_session(&body).map_err(|e| match e {
            SessionError::Syntax { pos, msg } => SessionError::Syntax { pos: start + pos, msg },
            e => e,
        })?;
        s.validate(n)?;
        sessions.insert(name, s);
    }
    Ok(Protocol { universe, sessions })
}
