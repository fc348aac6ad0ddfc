//! A multi-threaded linear lambda calculus whose channel constants run on
//! the runtime's pool.
//!
//! Programs are s-expressions. Resource constants `(rc n)` stand for live
//! endpoints; they appear in source only when a signature for them is
//! declared, and otherwise arise during evaluation.

mod eval;
mod parse;
mod typing;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::roles::RoleSet;
use crate::runtime::{normalize, RuntimeError};
use crate::session::SessionType;

pub use eval::{eval_pool, retype_pool, EvalReport, MtlcThread};
pub use parse::{parse_expr, parse_program, parse_ty, Program};
pub use typing::{canonical_form, const_type, declarative, typecheck, Canonical, Checker, Context};

/// Linear and non-linear types. The non-linear ones, for which
/// [`Ty::is_type`] holds, may be duplicated and discarded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ty {
    Bool,
    Int,
    /// The singleton integer type `int(i)`.
    IntIdx(i64),
    Str,
    Unit,
    Prod(Box<Ty>, Box<Ty>),
    Tensor(Box<Ty>, Box<Ty>),
    /// What offering an additive choice returns: one of two endpoints.
    Sum(Box<Ty>, Box<Ty>),
    /// Intuitionistic function, usable any number of times.
    FunI(Box<Ty>, Box<Ty>),
    /// Linear function, called exactly once.
    FunL(Box<Ty>, Box<Ty>),
    /// An endpoint playing the roles in the set, with the protocol still to run.
    Chan(RoleSet, SessionType),
    Service(RoleSet, SessionType),
}

impl Ty {
    /// An endpoint type; the protocol is kept in head-normal form so that
    /// structurally equal cursors compare equal.
    pub fn chan(roles: RoleSet, s: &SessionType) -> Ty {
        Ty::Chan(roles, normalize(s))
    }

    pub fn service(roles: RoleSet, s: &SessionType) -> Ty {
        Ty::Service(roles, normalize(s))
    }

    pub fn prod(a: Ty, b: Ty) -> Ty {
        Ty::Prod(Box::new(a), Box::new(b))
    }

    pub fn tensor(a: Ty, b: Ty) -> Ty {
        Ty::Tensor(Box::new(a), Box::new(b))
    }

    pub fn sum(a: Ty, b: Ty) -> Ty {
        Ty::Sum(Box::new(a), Box::new(b))
    }

    pub fn fun_i(a: Ty, b: Ty) -> Ty {
        Ty::FunI(Box::new(a), Box::new(b))
    }

    pub fn fun_l(a: Ty, b: Ty) -> Ty {
        Ty::FunL(Box::new(a), Box::new(b))
    }

    /// Non-linear.
    pub fn is_type(&self) -> bool {
        match self {
            Ty::Bool | Ty::Int | Ty::IntIdx(_) | Ty::Str | Ty::Unit | Ty::FunI(..) | Ty::Service(..) => true,
            Ty::Prod(a, b) => a.is_type() && b.is_type(),
            Ty::Tensor(..) | Ty::Sum(..) | Ty::FunL(..) | Ty::Chan(..) => false,
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Bool => f.write_str("bool"),
            Ty::Int => f.write_str("int"),
            Ty::IntIdx(i) => write!(f, "(int {i})"),
            Ty::Str => f.write_str("str"),
            Ty::Unit => f.write_str("unit"),
            Ty::Prod(a, b) => write!(f, "(* {a} {b})"),
            Ty::Tensor(a, b) => write!(f, "(tensor {a} {b})"),
            Ty::Sum(a, b) => write!(f, "(+ {a} {b})"),
            Ty::FunI(a, b) => write!(f, "(-> {a} {b})"),
            Ty::FunL(a, b) => write!(f, "(-o {a} {b})"),
            Ty::Chan(r, s) => write!(f, "(chan {r} \"{s}\")"),
            Ty::Service(r, s) => write!(f, "(service {r} \"{s}\")"),
        }
    }
}

/// Built-in constants. Every one but `service_create` is a function that
/// reduces once its arguments are values; `service_create` builds a value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Const {
    Iadd,
    Isub,
    Imul,
    Ilt,
    Ieq,
    RandBit,
    ThreadCreate,
    ChanCreate,
    /// Two channels shared by the same two threads; exists to show a deadlock.
    Chan2Create,
    ChanSync,
    ChanSend,
    ChanRecv,
    ChanAConjL,
    ChanAConjR,
    ChanADisj,
    ChanMConj,
    ChanMDisjL,
    ChanMDisjR,
    ChanAppend,
    /// Left behind by `chan_append` while its body runs; restores the saved continuation.
    AppendExit(SessionType),
    ChanSplit,
    ChanClose,
    Chan1Cut,
    Chan2Cut,
    Chan3Cut,
    Chan2CutRes,
    ServiceCreate,
    ServiceRequest,
}

const NAMES: &[(&str, Const)] = &[
    ("iadd", Const::Iadd),
    ("isub", Const::Isub),
    ("imul", Const::Imul),
    ("ilt", Const::Ilt),
    ("ieq", Const::Ieq),
    ("randbit", Const::RandBit),
    ("thread_create", Const::ThreadCreate),
    ("chan_create", Const::ChanCreate),
    ("chan2_create", Const::Chan2Create),
    ("chan_sync", Const::ChanSync),
    ("chan_send", Const::ChanSend),
    ("chan_recv", Const::ChanRecv),
    ("chan_aconj_l", Const::ChanAConjL),
    ("chan_aconj_r", Const::ChanAConjR),
    ("chan_adisj", Const::ChanADisj),
    ("chan_mconj", Const::ChanMConj),
    ("chan_mdisj_l", Const::ChanMDisjL),
    ("chan_mdisj_r", Const::ChanMDisjR),
    ("chan_append", Const::ChanAppend),
    ("chan_split", Const::ChanSplit),
    ("chan_close", Const::ChanClose),
    ("chan_1_cut", Const::Chan1Cut),
    ("chan_2_cut", Const::Chan2Cut),
    ("chan_3_cut", Const::Chan3Cut),
    ("chan_2_cutres", Const::Chan2CutRes),
    ("service_create", Const::ServiceCreate),
    ("service_request", Const::ServiceRequest),
];

impl Const {
    pub fn from_name(name: &str) -> Option<Const> {
        NAMES.iter().find(|(n, _)| *n == name).map(|(_, c)| c.clone())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Const::AppendExit(_) => "chan_append_exit",
            c => NAMES.iter().find(|(_, k)| k == c).map(|(n, _)| *n).expect("every constant is named"),
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Const::RandBit => 0,
            Const::Iadd | Const::Isub | Const::Imul | Const::Ilt | Const::Ieq => 2,
            Const::ChanSend | Const::ChanMDisjL | Const::ChanMDisjR | Const::ChanAppend | Const::ChanSplit => 2,
            Const::Chan2Cut | Const::Chan2CutRes => 2,
            Const::Chan3Cut => 3,
            _ => 1,
        }
    }

    pub fn is_constructor(&self) -> bool {
        *self == Const::ServiceCreate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    /// A resource constant: the endpoint with this id.
    Res(usize),
    Bool(bool),
    Int(i64),
    Str(String),
    Unit,
    Pair(Box<Expr>, Box<Expr>),
    Fst(Box<Expr>),
    Snd(Box<Expr>),
    LetPair(String, String, Box<Expr>, Box<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
    Lam { param: String, ty: Ty, body: Box<Expr> },
    App(Box<Expr>, Box<Expr>),
    /// Recursion; the body is a value.
    Fix { name: String, ty: Ty, body: Box<Expr> },
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    /// An injection into a sum; `other` is the type of the side not taken.
    Inj { left: bool, other: Ty, body: Box<Expr> },
    Case { scrut: Box<Expr>, left: (String, Box<Expr>), right: (String, Box<Expr>) },
    /// Type ascription.
    The(Ty, Box<Expr>),
    Call(Const, Vec<Expr>),
}

impl Expr {
    pub fn var(x: &str) -> Expr {
        Expr::Var(x.to_string())
    }

    pub fn pair(a: Expr, b: Expr) -> Expr {
        Expr::Pair(Box::new(a), Box::new(b))
    }

    pub fn app(f: Expr, a: Expr) -> Expr {
        Expr::App(Box::new(f), Box::new(a))
    }

    pub fn lam(param: &str, ty: Ty, body: Expr) -> Expr {
        Expr::Lam { param: param.to_string(), ty, body: Box::new(body) }
    }

    pub fn let_(x: &str, e: Expr, body: Expr) -> Expr {
        Expr::Let(x.to_string(), Box::new(e), Box::new(body))
    }

    pub fn let_pair(a: &str, b: &str, e: Expr, body: Expr) -> Expr {
        Expr::LetPair(a.to_string(), b.to_string(), Box::new(e), Box::new(body))
    }

    pub fn call(c: Const, args: Vec<Expr>) -> Expr {
        Expr::Call(c, args)
    }

    pub fn is_value(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Res(_) | Expr::Bool(_) | Expr::Int(_) | Expr::Str(_) | Expr::Unit | Expr::Lam { .. } => true,
            Expr::Pair(a, b) => a.is_value() && b.is_value(),
            Expr::Inj { body, .. } => body.is_value(),
            Expr::Call(c, args) => c.is_constructor() && args.iter().all(Expr::is_value),
            _ => false,
        }
    }

    /// Direct subexpressions, in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var(_) | Expr::Res(_) | Expr::Bool(_) | Expr::Int(_) | Expr::Str(_) | Expr::Unit => vec![],
            Expr::Pair(a, b) | Expr::App(a, b) | Expr::LetPair(_, _, a, b) | Expr::Let(_, a, b) => vec![a, b],
            Expr::Fst(e) | Expr::Snd(e) | Expr::Lam { body: e, .. } | Expr::Fix { body: e, .. } => vec![e],
            Expr::Inj { body: e, .. } | Expr::The(_, e) => vec![e],
            Expr::If(a, b, c) => vec![a, b, c],
            Expr::Case { scrut, left, right } => vec![scrut, &left.1, &right.1],
            Expr::Call(_, args) => args.iter().collect(),
        }
    }

    pub(crate) fn child_mut(&mut self, k: usize) -> &mut Expr {
        match (self, k) {
            (Expr::Pair(a, _) | Expr::App(a, _) | Expr::LetPair(_, _, a, _) | Expr::Let(_, a, _), 0) => a,
            (Expr::Pair(_, b) | Expr::App(_, b) | Expr::LetPair(_, _, _, b) | Expr::Let(_, _, b), 1) => b,
            (Expr::Fst(e) | Expr::Snd(e) | Expr::Lam { body: e, .. } | Expr::Fix { body: e, .. }, 0) => e,
            (Expr::Inj { body: e, .. } | Expr::The(_, e), 0) => e,
            (Expr::If(a, _, _), 0) | (Expr::Case { scrut: a, .. }, 0) => a,
            (Expr::If(_, b, _), 1) | (Expr::Case { left: (_, b), .. }, 1) => b,
            (Expr::If(_, _, c), 2) | (Expr::Case { right: (_, c), .. }, 2) => c,
            (Expr::Call(_, args), k) => &mut args[k],
            (e, k) => panic!("{e} has no child {k}"),
        }
    }

    /// Replaces the free occurrences of `x` by the closed value `v`.
    pub fn subst(&self, x: &str, v: &Expr) -> Expr {
        let go = |e: &Expr| Box::new(e.subst(x, v));
        let under = |bound: bool, e: &Expr| if bound { Box::new(e.clone()) } else { Box::new(e.subst(x, v)) };
        match self {
            Expr::Var(y) if y == x => v.clone(),
            Expr::Var(_) | Expr::Res(_) | Expr::Bool(_) | Expr::Int(_) | Expr::Str(_) | Expr::Unit => self.clone(),
            Expr::Pair(a, b) => Expr::Pair(go(a), go(b)),
            Expr::Fst(e) => Expr::Fst(go(e)),
            Expr::Snd(e) => Expr::Snd(go(e)),
            Expr::LetPair(a, b, e1, e2) => Expr::LetPair(a.clone(), b.clone(), go(e1), under(a == x || b == x, e2)),
            Expr::Let(y, e1, e2) => Expr::Let(y.clone(), go(e1), under(y == x, e2)),
            Expr::Lam { param, ty, body } => Expr::Lam { param: param.clone(), ty: ty.clone(), body: under(param == x, body) },
            Expr::App(a, b) => Expr::App(go(a), go(b)),
            Expr::Fix { name, ty, body } => Expr::Fix { name: name.clone(), ty: ty.clone(), body: under(name == x, body) },
            Expr::If(a, b, c) => Expr::If(go(a), go(b), go(c)),
            Expr::Inj { left, other, body } => Expr::Inj { left: *left, other: other.clone(), body: go(body) },
            Expr::Case { scrut, left, right } => Expr::Case {
                scrut: go(scrut),
                left: (left.0.clone(), under(left.0 == x, &left.1)),
                right: (right.0.clone(), under(right.0 == x, &right.1)),
            },
            Expr::The(t, e) => Expr::The(t.clone(), go(e)),
            Expr::Call(c, args) => Expr::Call(c.clone(), args.iter().map(|a| a.subst(x, v)).collect()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(x) => f.write_str(x),
            Expr::Res(n) => write!(f, "(rc {n})"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Str(s) => write!(f, "{s:?}"),
            Expr::Unit => f.write_str("()"),
            Expr::Pair(a, b) => write!(f, "(pair {a} {b})"),
            Expr::Fst(e) => write!(f, "(fst {e})"),
            Expr::Snd(e) => write!(f, "(snd {e})"),
            Expr::LetPair(a, b, e1, e2) => write!(f, "(letp ({a} {b}) {e1} {e2})"),
            Expr::Let(x, e1, e2) => write!(f, "(let {x} {e1} {e2})"),
            Expr::Lam { param, ty, body } => write!(f, "(lam ({param} {ty}) {body})"),
            Expr::App(a, b) => write!(f, "(app {a} {b})"),
            Expr::Fix { name, ty, body } => write!(f, "(fix ({name} {ty}) {body})"),
            Expr::If(a, b, c) => write!(f, "(if {a} {b} {c})"),
            Expr::Inj { left, other, body } => write!(f, "({} {other} {body})", if *left { "inl" } else { "inr" }),
            Expr::Case { scrut, left, right } => {
                write!(f, "(case {scrut} ({} {}) ({} {}))", left.0, left.1, right.0, right.1)
            }
            Expr::The(t, e) => write!(f, "(the {t} {e})"),
            Expr::Call(Const::AppendExit(s), args) => {
                write!(f, "(chan_append_exit \"{s}\"")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
            Expr::Call(c, args) => {
                write!(f, "({}", c.name())?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A multiset of resource constants.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourceBag(BTreeMap<usize, usize>);

impl ResourceBag {
    pub fn single(rc: usize) -> ResourceBag {
        ResourceBag(BTreeMap::from([(rc, 1)]))
    }

    pub fn add(&mut self, other: &ResourceBag) {
        for (rc, n) in &other.0 {
            *self.0.entry(*rc).or_default() += n;
        }
    }

    pub fn union(mut self, other: &ResourceBag) -> ResourceBag {
        self.add(other);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, rc: usize) -> usize {
        self.0.get(&rc).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.values().sum()
    }

    /// Distinct resources.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    /// Membership in RES: no resource occurs twice.
    pub fn is_res(&self) -> bool {
        self.0.values().all(|n| *n <= 1)
    }
}

impl fmt::Display for ResourceBag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        let mut first = true;
        for (rc, n) in &self.0 {
            for _ in 0..*n {
                if !first {
                    f.write_str(", ")?;
                }
                first = false;
                write!(f, "rc{rc}")?;
            }
        }
        f.write_str("}")
    }
}

/// The resources an expression holds. Of the two branches of a conditional
/// only the first counts; typing makes them hold the same ones.
pub fn rho(e: &Expr) -> ResourceBag {
    match e {
        Expr::Res(n) => ResourceBag::single(*n),
        Expr::If(a, b, _) => rho(a).union(&rho(b)),
        Expr::Case { scrut, left, .. } => rho(scrut).union(&rho(&left.1)),
        other => other.children().into_iter().fold(ResourceBag::default(), |acc, c| acc.union(&rho(c))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{rule}: {msg}")]
pub struct TypeError {
    /// The typing rule whose premise failed.
    pub rule: &'static str,
    pub msg: String,
}

impl TypeError {
    pub fn new(rule: &'static str, msg: impl Into<String>) -> TypeError {
        TypeError { rule, msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MtlcError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("stuck: no reduction applies to {0}")]
    StuckNonRedex(String),
    #[error("value {value} does not have a canonical form at {ty}")]
    ClassificationImpossible { value: String, ty: String },
    #[error("after step {step} the pool no longer typechecks: {error}")]
    SubjectReduction { step: usize, error: TypeError },
    #[error("resource rc{0} occurs more than once in the pool")]
    DuplicateResource(usize),
    #[error("programs declaring resources can be checked but not run")]
    DeclaredResources,
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}
