//! Formulas, i-formulas and sequents shared by MRL, MRLJ and LMRL.
//!
//! Concrete syntax is a prefix s-expression language:
//!
//! ```text
//! F ::= ident | (ident term*) | (not ENDO F) | (and UF F F) | (imp ENDO UF F F)
//!     | (with UF F F) | (tensor UF F F) | (bang UF F) | (forall UF ident F)
//! ```
//!
//! Terms starting with an uppercase letter or a digit are constants, all
//! other terms are variables.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::roles::{Endo, RoleSet, Ultrafilter};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {pos}: {msg}")]
pub struct SyntaxError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(s: &str) -> Term {
        Term::Var(s.to_string())
    }

    pub fn constant(s: &str) -> Term {
        Term::Const(s.to_string())
    }

    /// Classifies a bare token by its first character.
    pub fn from_token(s: &str) -> Term {
        match s.chars().next() {
            Some(c) if c.is_ascii_uppercase() || c.is_ascii_digit() => Term::Const(s.to_string()),
            _ => Term::Var(s.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Var(s) | Term::Const(s) => s,
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom(String, Vec<Term>),
    Neg(Endo, Box<Formula>),
    Conj(Ultrafilter, Box<Formula>, Box<Formula>),
    Impl(Endo, Ultrafilter, Box<Formula>, Box<Formula>),
    AConj(Ultrafilter, Box<Formula>, Box<Formula>),
    MConj(Ultrafilter, Box<Formula>, Box<Formula>),
    Bang(Ultrafilter, Box<Formula>),
    Forall(Ultrafilter, String, Box<Formula>),
}

impl Formula {
    pub fn atom(label: &str) -> Formula {
        Formula::Atom(label.to_string(), Vec::new())
    }

    pub fn pred(label: &str, args: Vec<Term>) -> Formula {
        Formula::Atom(label.to_string(), args)
    }

    pub fn neg(f: Endo, a: Formula) -> Formula {
        Formula::Neg(f, Box::new(a))
    }

    pub fn conj(u: Ultrafilter, a: Formula, b: Formula) -> Formula {
        Formula::Conj(u, Box::new(a), Box::new(b))
    }

    pub fn imp(f: Endo, u: Ultrafilter, a: Formula, b: Formula) -> Formula {
        Formula::Impl(f, u, Box::new(a), Box::new(b))
    }

    pub fn with(u: Ultrafilter, a: Formula, b: Formula) -> Formula {
        Formula::AConj(u, Box::new(a), Box::new(b))
    }

    pub fn tensor(u: Ultrafilter, a: Formula, b: Formula) -> Formula {
        Formula::MConj(u, Box::new(a), Box::new(b))
    }

    pub fn bang(u: Ultrafilter, a: Formula) -> Formula {
        Formula::Bang(u, Box::new(a))
    }

    pub fn forall(u: Ultrafilter, x: &str, a: Formula) -> Formula {
        Formula::Forall(u, x.to_string(), Box::new(a))
    }

    /// Number of connectives.
    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(..) => 0,
            Formula::Neg(_, a) | Formula::Bang(_, a) | Formula::Forall(_, _, a) => 1 + a.size(),
            Formula::Conj(_, a, b)
            | Formula::Impl(_, _, a, b)
            | Formula::AConj(_, a, b)
            | Formula::MConj(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Formula::Atom(..))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(_, args) => {
                for t in args {
                    if let Term::Var(v) = t {
                        if !bound.contains(v) {
                            out.insert(v.clone());
                        }
                    }
                }
            }
            Formula::Neg(_, a) | Formula::Bang(_, a) => a.collect_free(bound, out),
            Formula::Conj(_, a, b)
            | Formula::Impl(_, _, a, b)
            | Formula::AConj(_, a, b)
            | Formula::MConj(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::Forall(_, x, a) => {
                bound.push(x.clone());
                a.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn has_free(&self, x: &str) -> bool {
        self.free_vars().contains(x)
    }

    /// Every variable name, free or bound.
    pub fn all_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(_, args) => {
                for t in args {
                    if let Term::Var(v) = t {
                        out.insert(v.clone());
                    }
                }
            }
            Formula::Neg(_, a) | Formula::Bang(_, a) => a.all_vars(out),
            Formula::Conj(_, a, b)
            | Formula::Impl(_, _, a, b)
            | Formula::AConj(_, a, b)
            | Formula::MConj(_, a, b) => {
                a.all_vars(out);
                b.all_vars(out);
            }
            Formula::Forall(_, x, a) => {
                out.insert(x.clone());
                a.all_vars(out);
            }
        }
    }

    /// Terms occurring free in atoms (constants and free variables).
    pub fn free_terms(&self, out: &mut BTreeSet<Term>) {
        let fv = self.free_vars();
        self.walk_atoms(&mut |_, args| {
            for t in args {
                match t {
                    Term::Const(_) => {
                        out.insert(t.clone());
                    }
                    Term::Var(v) if fv.contains(v) => {
                        out.insert(t.clone());
                    }
                    Term::Var(_) => {}
                }
            }
        });
    }

    fn walk_atoms(&self, visit: &mut dyn FnMut(&str, &[Term])) {
        match self {
            Formula::Atom(l, args) => visit(l, args),
            Formula::Neg(_, a) | Formula::Bang(_, a) | Formula::Forall(_, _, a) => a.walk_atoms(visit),
            Formula::Conj(_, a, b)
            | Formula::Impl(_, _, a, b)
            | Formula::AConj(_, a, b)
            | Formula::MConj(_, a, b) => {
                a.walk_atoms(visit);
                b.walk_atoms(visit);
            }
        }
    }

    /// Capture-avoiding `A[t/x]`.
    pub fn substitute(&self, x: &str, t: &Term) -> Formula {
        match self {
            Formula::Atom(l, args) => Formula::Atom(
                l.clone(),
                args.iter()
                    .map(|a| match a {
                        Term::Var(v) if v == x => t.clone(),
                        other => other.clone(),
                    })
                    .collect(),
            ),
            Formula::Neg(f, a) => Formula::Neg(f.clone(), Box::new(a.substitute(x, t))),
            Formula::Bang(u, a) => Formula::Bang(*u, Box::new(a.substitute(x, t))),
            Formula::Conj(u, a, b) => Formula::Conj(*u, Box::new(a.substitute(x, t)), Box::new(b.substitute(x, t))),
            Formula::Impl(f, u, a, b) => {
                Formula::Impl(f.clone(), *u, Box::new(a.substitute(x, t)), Box::new(b.substitute(x, t)))
            }
            Formula::AConj(u, a, b) => Formula::AConj(*u, Box::new(a.substitute(x, t)), Box::new(b.substitute(x, t))),
            Formula::MConj(u, a, b) => Formula::MConj(*u, Box::new(a.substitute(x, t)), Box::new(b.substitute(x, t))),
            Formula::Forall(u, y, body) => {
                if y == x || !body.has_free(x) {
                    return self.clone();
                }
                match t {
                    Term::Var(v) if v == y => {
                        let mut avoid = BTreeSet::new();
                        body.all_vars(&mut avoid);
                        avoid.insert(v.clone());
                        avoid.insert(x.to_string());
                        let fresh = fresh_name(y, &avoid);
                        let renamed = body.substitute(y, &Term::Var(fresh.clone()));
                        Formula::Forall(*u, fresh, Box::new(renamed.substitute(x, t)))
                    }
                    _ => Formula::Forall(*u, y.clone(), Box::new(body.substitute(x, t))),
                }
            }
        }
    }

    /// Representative of the alpha-equivalence class: bound variables are
    /// renamed by binder depth to names no parser can produce.
    pub fn canonical(&self) -> Formula {
        self.canon(&mut Vec::new())
    }

    fn canon(&self, scope: &mut Vec<(String, String)>) -> Formula {
        match self {
            Formula::Atom(l, args) => Formula::Atom(
                l.clone(),
                args.iter()
                    .map(|a| match a {
                        Term::Var(v) => match scope.iter().rev().find(|(n, _)| n == v) {
                            Some((_, c)) => Term::Var(c.clone()),
                            None => a.clone(),
                        },
                        other => other.clone(),
                    })
                    .collect(),
            ),
            Formula::Neg(f, a) => Formula::Neg(f.clone(), Box::new(a.canon(scope))),
            Formula::Bang(u, a) => Formula::Bang(*u, Box::new(a.canon(scope))),
            Formula::Conj(u, a, b) => Formula::Conj(*u, Box::new(a.canon(scope)), Box::new(b.canon(scope))),
            Formula::Impl(f, u, a, b) => Formula::Impl(f.clone(), *u, Box::new(a.canon(scope)), Box::new(b.canon(scope))),
            Formula::AConj(u, a, b) => Formula::AConj(*u, Box::new(a.canon(scope)), Box::new(b.canon(scope))),
            Formula::MConj(u, a, b) => Formula::MConj(*u, Box::new(a.canon(scope)), Box::new(b.canon(scope))),
            Formula::Forall(u, x, a) => {
                let c = format!("#{}", scope.len());
                scope.push((x.clone(), c.clone()));
                let body = a.canon(scope);
                scope.pop();
                Formula::Forall(*u, c, Box::new(body))
            }
        }
    }

    pub fn alpha_eq(&self, other: &Formula) -> bool {
        self == other || self.canonical() == other.canonical()
    }

    /// The largest role index mentioned by any endomorphism or ultrafilter,
    /// plus the endomorphism table sizes.
    pub fn universe_refs(&self, roles: &mut BTreeSet<usize>, endo_sizes: &mut BTreeSet<usize>) {
        match self {
            Formula::Atom(..) => {}
            Formula::Neg(f, a) => {
                endo_sizes.insert(f.size());
                a.universe_refs(roles, endo_sizes);
            }
            Formula::Bang(u, a) | Formula::Forall(u, _, a) => {
                roles.insert(u.role());
                a.universe_refs(roles, endo_sizes);
            }
            Formula::Conj(u, a, b) | Formula::AConj(u, a, b) | Formula::MConj(u, a, b) => {
                roles.insert(u.role());
                a.universe_refs(roles, endo_sizes);
                b.universe_refs(roles, endo_sizes);
            }
            Formula::Impl(f, u, a, b) => {
                endo_sizes.insert(f.size());
                roles.insert(u.role());
                a.universe_refs(roles, endo_sizes);
                b.universe_refs(roles, endo_sizes);
            }
        }
    }
}

/// `base'`, `base''`, ... the first one not in `avoid`.
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let mut candidate = format!("{base}'");
    while avoid.contains(&candidate) {
        candidate.push('\'');
    }
    candidate
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(l, args) if args.is_empty() => f.write_str(l),
            Formula::Atom(l, args) => {
                write!(f, "({l}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
            Formula::Neg(e, a) => write!(f, "(not {e} {a})"),
            Formula::Conj(u, a, b) => write!(f, "(and {u} {a} {b})"),
            Formula::Impl(e, u, a, b) => write!(f, "(imp {e} {u} {a} {b})"),
            Formula::AConj(u, a, b) => write!(f, "(with {u} {a} {b})"),
            Formula::MConj(u, a, b) => write!(f, "(tensor {u} {a} {b})"),
            Formula::Bang(u, a) => write!(f, "(bang {u} {a})"),
            Formula::Forall(u, x, a) => write!(f, "(forall {u} {x} {a})"),
        }
    }
}

const KEYWORDS: [&str; 7] = ["not", "and", "imp", "with", "tensor", "bang", "forall"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Word(String),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, SyntaxError> {
    let mut out = Vec::new();
    let bytes: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push((pos, Tok::Open));
                i += 1;
            }
            ')' => {
                out.push((pos, Tok::Close));
                i += 1;
            }
            '[' => {
                let start = pos;
                let mut word = String::new();
                while i < bytes.len() && bytes[i].1 != ']' {
                    word.push(bytes[i].1);
                    i += 1;
                }
                if i == bytes.len() {
                    return Err(SyntaxError { pos: start, msg: "unterminated endomorphism".into() });
                }
                word.push(']');
                i += 1;
                out.push((start, Tok::Word(word)));
            }
            _ => {
                let start = pos;
                let mut word = String::new();
                while i < bytes.len() && !bytes[i].1.is_whitespace() && !"()[]".contains(bytes[i].1) {
                    word.push(bytes[i].1);
                    i += 1;
                }
                out.push((start, Tok::Word(word)));
            }
        }
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

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { pos: self.pos(), msg: msg.into() })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.1.clone());
        self.at += 1;
        t
    }

    fn word(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.toks.get(self.at) {
            Some((_, Tok::Word(w))) => {
                let w = w.clone();
                self.at += 1;
                Ok(w)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn endo(&mut self) -> Result<Endo, SyntaxError> {
        let pos = self.pos();
        let w = self.word("endomorphism")?;
        w.parse().map_err(|e: crate::roles::RoleError| SyntaxError { pos, msg: e.to_string() })
    }

    fn uf(&mut self) -> Result<Ultrafilter, SyntaxError> {
        let pos = self.pos();
        let w = self.word("ultrafilter")?;
        w.parse().map_err(|e: crate::roles::RoleError| SyntaxError { pos, msg: e.to_string() })
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        let pos = self.pos();
        let w = self.word("identifier")?;
        if valid_ident(&w) {
            Ok(w)
        } else {
            Err(SyntaxError { pos, msg: format!("invalid identifier {w:?}") })
        }
    }

    fn close(&mut self) -> Result<(), SyntaxError> {
        match self.toks.get(self.at) {
            Some((_, Tok::Close)) => {
                self.at += 1;
                Ok(())
            }
            _ => self.err("expected ')'"),
        }
    }

    fn formula(&mut self) -> Result<Formula, SyntaxError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Word(w)) => {
                if valid_ident(&w) && !KEYWORDS.contains(&w.as_str()) {
                    Ok(Formula::Atom(w, Vec::new()))
                } else {
                    Err(SyntaxError { pos, msg: format!("unexpected {w:?}") })
                }
            }
            Some(Tok::Open) => {
                let head = self.ident()?;
                let f = match head.as_str() {
                    "not" => {
                        let e = self.endo()?;
                        Formula::neg(e, self.formula()?)
                    }
                    "and" | "with" | "tensor" => {
                        let u = self.uf()?;
                        let a = self.formula()?;
                        let b = self.formula()?;
                        match head.as_str() {
                            "and" => Formula::conj(u, a, b),
                            "with" => Formula::with(u, a, b),
                            _ => Formula::tensor(u, a, b),
                        }
                    }
                    "imp" => {
                        let e = self.endo()?;
                        let u = self.uf()?;
                        let a = self.formula()?;
                        Formula::imp(e, u, a, self.formula()?)
                    }
                    "bang" => {
                        let u = self.uf()?;
                        Formula::bang(u, self.formula()?)
                    }
                    "forall" => {
                        let u = self.uf()?;
                        let x = self.ident()?;
                        if Term::from_token(&x) != Term::Var(x.clone()) {
                            return self.err(format!("{x:?} is not a variable name"));
                        }
                        Formula::forall(u, &x, self.formula()?)
                    }
                    _ => {
                        let mut args = Vec::new();
                        while let Some((_, Tok::Word(_))) = self.toks.get(self.at) {
                            args.push(Term::from_token(&self.ident()?));
                        }
                        Formula::Atom(head, args)
                    }
                };
                self.close()?;
                Ok(f)
            }
            Some(Tok::Close) => Err(SyntaxError { pos, msg: "unexpected ')'".into() }),
            None => Err(SyntaxError { pos, msg: "unexpected end of input".into() }),
        }
    }
}

fn valid_ident(w: &str) -> bool {
    !w.is_empty()
        && !w.starts_with('@')
        && w.chars().all(|c| c.is_alphanumeric() || "_:-'.+*".contains(c))
}

pub fn parse_formula(src: &str) -> Result<Formula, SyntaxError> {
    let mut p = Parser { toks: tokenize(src)?, at: 0, end: src.len() };
    let f = p.formula()?;
    if p.at < p.toks.len() {
        return p.err("trailing input");
    }
    Ok(f)
}

impl FromStr for Formula {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_formula(&s).map_err(serde::de::Error::custom)
    }
}

/// `<R>A`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IFormula {
    pub roles: RoleSet,
    pub formula: Formula,
}

impl IFormula {
    pub fn new(roles: RoleSet, formula: Formula) -> Self {
        IFormula { roles, formula }
    }

    pub fn alpha_eq(&self, other: &IFormula) -> bool {
        self.roles == other.roles && self.formula.alpha_eq(&other.formula)
    }

    pub fn canonical(&self) -> IFormula {
        IFormula { roles: self.roles, formula: self.formula.canonical() }
    }

    pub fn substitute(&self, x: &str, t: &Term) -> IFormula {
        IFormula { roles: self.roles, formula: self.formula.substitute(x, t) }
    }
}

impl fmt::Debug for IFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>{}", self.roles, self.formula)
    }
}

impl fmt::Display for IFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>{}", self.roles, self.formula)
    }
}

/// A multiset of i-formulas. Item order is kept for presentation but
/// ignored by equality, which is also insensitive to renaming bound variables.
#[derive(Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sequent {
    pub items: Vec<IFormula>,
}

impl Sequent {
    pub fn new(items: Vec<IFormula>) -> Self {
        Sequent { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, IFormula> {
        self.items.iter()
    }

    /// Sorted canonical forms; two sequents are equal iff their keys are.
    pub fn key(&self) -> Vec<IFormula> {
        multiset_key(&self.items)
    }

    pub fn multiset_eq(&self, other: &Sequent) -> bool {
        self.len() == other.len() && self.key() == other.key()
    }

    pub fn free_in(&self, x: &str) -> bool {
        free_in(x, &self.items)
    }
}

pub fn multiset_key(items: &[IFormula]) -> Vec<IFormula> {
    let mut k: Vec<IFormula> = items.iter().map(IFormula::canonical).collect();
    k.sort();
    k
}

pub fn multiset_eq(a: &[IFormula], b: &[IFormula]) -> bool {
    a.len() == b.len() && multiset_key(a) == multiset_key(b)
}

/// True iff `x` occurs free in some i-formula.
pub fn free_in(x: &str, items: &[IFormula]) -> bool {
    items.iter().any(|i| i.formula.has_free(x))
}

impl PartialEq for Sequent {
    fn eq(&self, other: &Self) -> bool {
        self.multiset_eq(other)
    }
}

impl Eq for Sequent {}

impl fmt::Debug for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("|- ")?;
        for (k, i) in self.items.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

impl From<Vec<IFormula>> for Sequent {
    fn from(items: Vec<IFormula>) -> Self {
        Sequent { items }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    fn rs(s: &str) -> RoleSet {
        s.parse().unwrap()
    }

    #[test]
    fn sizes() {
        assert_eq!(p("a").size(), 0);
        assert_eq!(p("(not [1,0] a)").size(), 1);
        assert_eq!(p("(tensor @0 a (not [1,0] b))").size(), 2);
    }

    #[test]
    fn substitution_examples() {
        let c = Term::constant("C");
        assert_eq!(p("(p x)").substitute("x", &c), Formula::pred("p", vec![c.clone()]));
        let bound = p("(forall @0 x (p x))");
        assert_eq!(bound.substitute("x", &c), bound);
        assert_eq!(p("(not [1,0] (p x))").substitute("x", &c), p("(not [1,0] (p C))"));
    }

    #[test]
    fn substitution_avoids_capture() {
        let f = p("(forall @0 y (r x y))");
        let g = f.substitute("x", &Term::var("y"));
        match &g {
            Formula::Forall(_, b, body) => {
                assert_ne!(b, "y");
                assert!(body.has_free("y"));
                assert!(!body.has_free(b) || b == "y'");
            }
            _ => panic!("shape changed"),
        }
        assert!(g.has_free("y"));
        assert!(!g.has_free("x"));
    }

    #[test]
    fn free_in_examples() {
        let r = rs("{0}");
        assert!(free_in("x", &[IFormula::new(r, p("(p x)"))]));
        assert!(!free_in("x", &[IFormula::new(r, p("(p C)"))]));
        assert!(!free_in("x", &[IFormula::new(r, p("(forall @0 x (p x))"))]));
    }

    #[test]
    fn parse_examples() {
        assert_eq!(p("(not [1,0] a)"), Formula::neg(Endo::swap(2, 0, 1), Formula::atom("a")));
        assert_eq!(
            p("(tensor @0 a b)"),
            Formula::tensor(Ultrafilter(0), Formula::atom("a"), Formula::atom("b"))
        );
        assert_eq!(
            p("(forall @1 x (p x))"),
            Formula::forall(Ultrafilter(1), "x", Formula::pred("p", vec![Term::var("x")]))
        );
        assert_eq!(p("(msg:0:1)"), Formula::atom("msg:0:1"));
    }

    #[test]
    fn parse_errors_report_position() {
        let e = parse_formula("(tensor @0 a").unwrap_err();
        assert_eq!(e.pos, 12);
        assert!(parse_formula("(not [1,2] a)").is_err());
        assert!(parse_formula("a b").is_err());
        assert!(parse_formula("(forall @0 X a)").is_err());
    }

    #[test]
    fn sequent_multiset_semantics() {
        let a = IFormula::new(rs("{0}"), p("a"));
        let b = IFormula::new(rs("{1}"), p("b"));
        assert_eq!(Sequent::new(vec![a.clone(), b.clone()]), Sequent::new(vec![b.clone(), a.clone()]));
        assert_ne!(Sequent::new(vec![a.clone(), b.clone()]), Sequent::new(vec![a.clone(), b.clone(), a.clone()]));
        let x = IFormula::new(rs("{0}"), p("(forall @0 x (p x))"));
        let y = IFormula::new(rs("{0}"), p("(forall @0 y (p y))"));
        assert_eq!(Sequent::new(vec![x]), Sequent::new(vec![y]));
    }

    #[test]
    fn serde_forms() {
        let s = Sequent::new(vec![IFormula::new(rs("{0,2}"), p("(bang @1 a)"))]);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"[{"roles":[0,2],"formula":"(bang @1 a)"}]"#);
        let back: Sequent = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}
