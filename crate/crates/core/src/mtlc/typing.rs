//! Linear typechecking.
//!
//! [`Checker`] threads the linear context: each subterm takes what is left
//! of it and returns what it did not use. [`declarative`] instead tries
//! every split of the linear context at every rule with several premises;
//! it is exponential and exists to cross-check the threading on small terms.
//!
//! Both include three subsumptions that are the identity at run time:
//! `int(i) <= int`, `T1 * T2 <= T1 (x) T2` and `->i <= ->l`.

use std::collections::{BTreeMap, BTreeSet};

use super::{rho, Const, Expr, MtlcError, Ty, TypeError};
use crate::roles::{RoleSet, Universe};
use crate::runtime::{advance_atom, choose_branch, head};
use crate::session::{Payload, SessionType};

pub type Gamma = BTreeMap<String, Ty>;
pub type Delta = BTreeMap<String, Ty>;

/// Non-linear and linear variable bindings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Context {
    pub gamma: Gamma,
    pub delta: Delta,
}

impl Context {
    /// Binds `x` in the part of the context its type calls for.
    pub fn bind(&mut self, x: &str, t: Ty) {
        if t.is_type() {
            self.gamma.insert(x.to_string(), t);
        } else {
            self.delta.insert(x.to_string(), t);
        }
    }
}

pub fn subtype(a: &Ty, b: &Ty) -> bool {
    if a == b {
        return true;
    }
    match (a, b) {
        (Ty::IntIdx(_), Ty::Int) => true,
        (Ty::Prod(a1, a2), Ty::Prod(b1, b2) | Ty::Tensor(b1, b2))
        | (Ty::Tensor(a1, a2), Ty::Tensor(b1, b2))
        | (Ty::Sum(a1, a2), Ty::Sum(b1, b2)) => subtype(a1, b1) && subtype(a2, b2),
        (Ty::FunI(a1, r1), Ty::FunI(b1, r2) | Ty::FunL(b1, r2)) | (Ty::FunL(a1, r1), Ty::FunL(b1, r2)) => {
            subtype(b1, a1) && subtype(r1, r2)
        }
        _ => false,
    }
}

/// Least common supertype, used for the branches of a conditional.
pub fn join(a: &Ty, b: &Ty) -> Option<Ty> {
    if subtype(a, b) {
        return Some(b.clone());
    }
    if subtype(b, a) {
        return Some(a.clone());
    }
    match (a, b) {
        (Ty::IntIdx(_), Ty::IntIdx(_)) => Some(Ty::Int),
        (Ty::Prod(a1, a2), Ty::Prod(b1, b2)) => Some(Ty::prod(join(a1, b1)?, join(a2, b2)?)),
        (Ty::Prod(a1, a2) | Ty::Tensor(a1, a2), Ty::Prod(b1, b2) | Ty::Tensor(b1, b2)) => {
            Some(Ty::tensor(join(a1, b1)?, join(a2, b2)?))
        }
        (Ty::Sum(a1, a2), Ty::Sum(b1, b2)) => Some(Ty::sum(join(a1, b1)?, join(a2, b2)?)),
        (Ty::FunI(a1, r1), Ty::FunI(b1, r2)) if a1 == b1 => Some(Ty::fun_i((**a1).clone(), join(r1, r2)?)),
        (Ty::FunI(a1, r1) | Ty::FunL(a1, r1), Ty::FunI(b1, r2) | Ty::FunL(b1, r2)) if a1 == b1 => {
            Some(Ty::fun_l((**a1).clone(), join(r1, r2)?))
        }
        _ => None,
    }
}

pub fn free_vars(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn go(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        fn under(names: &[&String], body: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            let n = bound.len();
            bound.extend(names.iter().map(|s| (*s).clone()));
            go(body, bound, out);
            bound.truncate(n);
        }
        match e {
            Expr::Var(x) if !bound.contains(x) => {
                out.insert(x.clone());
            }
            Expr::LetPair(a, b, e1, e2) => {
                go(e1, bound, out);
                under(&[a, b], e2, bound, out);
            }
            Expr::Let(x, e1, e2) => {
                go(e1, bound, out);
                under(&[x], e2, bound, out);
            }
            Expr::Lam { param, body, .. } => under(&[param], body, bound, out),
            Expr::Fix { name, body, .. } => under(&[name], body, bound, out),
            Expr::Case { scrut, left, right } => {
                go(scrut, bound, out);
                under(&[&left.0], &left.1, bound, out);
                under(&[&right.0], &right.1, bound, out);
            }
            other => {
                for c in other.children() {
                    go(c, bound, out);
                }
            }
        }
    }
    go(e, &mut Vec::new(), &mut out);
    out
}

fn cst(c: &Const, msg: impl Into<String>) -> TypeError {
    TypeError::new("ty-cst", format!("{}: {}", c.name(), msg.into()))
}

fn payload_ty(p: Payload) -> Ty {
    match p {
        Payload::Unit => Ty::Unit,
        Payload::Int => Ty::Int,
        Payload::Str => Ty::Str,
    }
}

fn int_op(c: &Const, i: i64, j: i64) -> Option<i64> {
    match c {
        Const::Iadd => i.checked_add(j),
        Const::Isub => i.checked_sub(j),
        _ => i.checked_mul(j),
    }
}

/// Instantiates the schema of `c` at the argument types.
pub fn const_type(c: &Const, args: &[Ty], universe: &Universe) -> Result<Ty, TypeError> {
    if args.len() != c.arity() {
        return Err(cst(c, format!("takes {} arguments, got {}", c.arity(), args.len())));
    }
    let chan = |k: usize| match &args[k] {
        Ty::Chan(r, s) => Ok((*r, s.clone())),
        other => Err(cst(c, format!("argument {} must be an endpoint, got {other}", k + 1))),
    };
    let fun = |k: usize| match &args[k] {
        Ty::FunI(a, b) | Ty::FunL(a, b) => Ok(((**a).clone(), (**b).clone())),
        other => Err(cst(c, format!("argument {} must be a function, got {other}", k + 1))),
    };
    let returns_unit = |b: &Ty| if subtype(b, &Ty::Unit) { Ok(()) } else { Err(cst(c, format!("the function must return unit, not {b}"))) };
    let fun_on_chan = |k: usize| -> Result<(RoleSet, SessionType), TypeError> {
        let (a, b) = fun(k)?;
        returns_unit(&b)?;
        match a {
            Ty::Chan(r, s) => Ok((r, s)),
            other => Err(cst(c, format!("the function must take an endpoint, not {other}"))),
        }
    };
    let same_chan = |want: &Ty, got: &Ty| {
        if want == got {
            Ok(())
        } else {
            Err(cst(c, format!("expected a function on {want}, got one on {got}")))
        }
    };
    let int = |k: usize| match &args[k] {
        Ty::IntIdx(i) => Ok(Some(*i)),
        Ty::Int => Ok(None),
        other => Err(cst(c, format!("argument {} must be an int, got {other}", k + 1))),
    };
    match c {
        Const::Iadd | Const::Isub | Const::Imul => Ok(match (int(0)?, int(1)?) {
            (Some(i), Some(j)) => int_op(c, i, j).map(Ty::IntIdx).unwrap_or(Ty::Int),
            _ => Ty::Int,
        }),
        Const::Ilt | Const::Ieq => {
            int(0)?;
            int(1)?;
            Ok(Ty::Bool)
        }
        Const::RandBit => Ok(Ty::Int),
        Const::ThreadCreate => {
            let (a, b) = fun(0)?;
            if a != Ty::Unit {
                return Err(cst(c, format!("the function must take unit, not {a}")));
            }
            returns_unit(&b)?;
            Ok(Ty::Unit)
        }
        Const::ChanCreate => {
            let (r, s) = fun_on_chan(0)?;
            Ok(Ty::Chan(universe.complement(r), s))
        }
        Const::Chan2Create => {
            let (a, b) = fun(0)?;
            returns_unit(&b)?;
            match a {
                Ty::Tensor(x, y) => match (*x, *y) {
                    (Ty::Chan(r1, s1), Ty::Chan(r2, s2)) => {
                        Ok(Ty::tensor(Ty::Chan(universe.complement(r1), s1), Ty::Chan(universe.complement(r2), s2)))
                    }
                    _ => Err(cst(c, "the function must take a pair of endpoints")),
                },
                _ => Err(cst(c, "the function must take a pair of endpoints")),
            }
        }
        Const::ChanSync => {
            let (r, s) = chan(0)?;
            match head(&s) {
                SessionType::Msg { .. } | SessionType::Bcast { .. } | SessionType::Gather { .. } => Ok(Ty::Chan(r, advance_atom(&s))),
                h => Err(cst(c, format!("the endpoint is at {h}, not a message"))),
            }
        }
        Const::ChanSend => {
            let (r, s) = chan(0)?;
            let (ok, p) = match head(&s) {
                SessionType::Msg { from, to, payload, .. } => (r.contains(*from) && !r.contains(*to), *payload),
                SessionType::Bcast { from, payload, .. } => (r.contains(*from), *payload),
                h => return Err(cst(c, format!("the endpoint is at {h}, which cannot be sent on"))),
            };
            if !ok {
                return Err(cst(c, format!("{r} does not send {}", head(&s))));
            }
            if !subtype(&args[1], &payload_ty(p)) {
                return Err(cst(c, format!("payload {} does not fit {}", args[1], payload_ty(p))));
            }
            Ok(Ty::Chan(r, advance_atom(&s)))
        }
        Const::ChanRecv => {
            let (r, s) = chan(0)?;
            let (ok, p) = match head(&s) {
                SessionType::Msg { from, to, payload, .. } => (r.contains(*to) && !r.contains(*from), *payload),
                SessionType::Bcast { from, payload, .. } => (!r.contains(*from) && !r.is_empty(), *payload),
                h => return Err(cst(c, format!("the endpoint is at {h}, which cannot be received on"))),
            };
            if !ok {
                return Err(cst(c, format!("{r} does not receive {}", head(&s))));
            }
            Ok(Ty::tensor(payload_ty(p), Ty::Chan(r, advance_atom(&s))))
        }
        Const::ChanAConjL | Const::ChanAConjR | Const::ChanADisj => {
            let (r, s) = chan(0)?;
            let SessionType::AConj(k, ..) = head(&s) else {
                return Err(cst(c, format!("the endpoint is at {}, not a choice", head(&s))));
            };
            let chooser = r.contains(*k);
            match c {
                Const::ChanADisj if !chooser => {
                    Ok(Ty::sum(Ty::Chan(r, choose_branch(&s, true)), Ty::Chan(r, choose_branch(&s, false))))
                }
                Const::ChanADisj => Err(cst(c, format!("{r} makes this choice and cannot offer it"))),
                _ if chooser => Ok(Ty::Chan(r, choose_branch(&s, *c == Const::ChanAConjL))),
                _ => Err(cst(c, format!("{r} does not make this choice"))),
            }
        }
        Const::ChanMConj | Const::ChanMDisjL | Const::ChanMDisjR => {
            let (r, s) = chan(0)?;
            let SessionType::MConj(k, a, b) = &s else {
                return Err(cst(c, format!("the endpoint is at {s}, not a multiplicative split")));
            };
            let (a, b) = (Ty::chan(r, a), Ty::chan(r, b));
            match c {
                Const::ChanMConj if r.contains(*k) => Ok(Ty::tensor(a, b)),
                Const::ChanMConj => Err(cst(c, format!("{r} does not hold role {k}"))),
                _ if r.contains(*k) => Err(cst(c, format!("{r} holds role {k} and must use chan_mconj"))),
                _ => {
                    let (param, result) = fun(1)?;
                    returns_unit(&result)?;
                    let (keep, give) = if *c == Const::ChanMDisjL { (a, b) } else { (b, a) };
                    same_chan(&give, &param)?;
                    Ok(keep)
                }
            }
        }
        Const::ChanAppend => {
            let (r, s) = chan(0)?;
            let SessionType::Append(a, b) = &s else {
                return Err(cst(c, format!("the endpoint is at {s}, not an append")));
            };
            let (param, result) = fun(1)?;
            same_chan(&Ty::chan(r, a), &param)?;
            match result {
                Ty::Tensor(t, end) if *end == Ty::Chan(r, SessionType::Nil) => Ok(Ty::tensor(*t, Ty::chan(r, b))),
                other => Err(cst(c, format!("the body must return a value paired with the finished endpoint, not {other}"))),
            }
        }
        Const::AppendExit(b) => match &args[0] {
            Ty::Tensor(t, end) => match &**end {
                Ty::Chan(r, SessionType::Nil) => Ok(Ty::tensor((**t).clone(), Ty::chan(*r, b))),
                other => Err(cst(c, format!("the body left the endpoint at {other}"))),
            },
            other => Err(cst(c, format!("expected a value paired with an endpoint, got {other}"))),
        },
        Const::ChanSplit => {
            let (r, s) = chan(0)?;
            let (part, s1) = fun_on_chan(1)?;
            same_chan(&Ty::Chan(part, s.clone()), &Ty::Chan(part, s1))?;
            if !part.is_subset(r) {
                return Err(cst(c, format!("cannot split {part} off {r}")));
            }
            Ok(Ty::Chan(r.minus(part), s))
        }
        Const::ChanClose => match chan(0)? {
            (_, SessionType::Nil) => Ok(Ty::Unit),
            (_, s) => Err(cst(c, format!("the protocol is not over: {s}"))),
        },
        Const::Chan1Cut => match chan(0)? {
            (r, _) if r.is_empty() => Ok(Ty::Unit),
            (r, _) => Err(cst(c, format!("needs an empty role set, got {r}"))),
        },
        Const::Chan2Cut | Const::Chan3Cut | Const::Chan2CutRes => {
            let eps: Vec<(RoleSet, SessionType)> = (0..args.len()).map(chan).collect::<Result<_, _>>()?;
            if let Some((_, s)) = eps.iter().find(|(_, s)| *s != eps[0].1) {
                return Err(cst(c, format!("protocols differ: {} vs {s}", eps[0].1)));
            }
            let co: Vec<RoleSet> = eps.iter().map(|(r, _)| universe.complement(*r)).collect();
            if *c == Const::Chan2CutRes {
                if !co[0].is_disjoint(co[1]) {
                    return Err(cst(c, "the complements must be disjoint"));
                }
                return Ok(Ty::Chan(eps[0].0.intersect(eps[1].0), eps[0].1.clone()));
            }
            if !universe.partition_check(&co) {
                return Err(cst(c, "the complements must partition the roles"));
            }
            Ok(Ty::Unit)
        }
        Const::ServiceCreate => match &args[0] {
            Ty::FunI(a, b) => {
                returns_unit(b)?;
                match &**a {
                    Ty::Chan(r, s) => Ok(Ty::Service(universe.complement(*r), s.clone())),
                    other => Err(cst(c, format!("the function must take an endpoint, not {other}"))),
                }
            }
            other => Err(cst(c, format!("needs an intuitionistic function, got {other}"))),
        },
        Const::ServiceRequest => match &args[0] {
            Ty::Service(r, s) => Ok(Ty::Chan(*r, s.clone())),
            other => Err(cst(c, format!("needs a service, got {other}"))),
        },
    }
}

/// The algorithmic checker. `sig` types the resource constants.
#[derive(Debug, Clone, Copy)]
pub struct Checker<'a> {
    pub universe: &'a Universe,
    pub sig: &'a BTreeMap<usize, Ty>,
}

fn mismatch(rule: &'static str, want: &Ty, got: &Ty) -> TypeError {
    TypeError::new(rule, format!("expected {want}, got {got}"))
}

impl Checker<'_> {
    /// `(gamma; delta) |- e : T` with every linear variable used.
    pub fn judge(&self, ctx: &Context, e: &Expr) -> Result<Ty, TypeError> {
        let (t, left) = self.synth(&ctx.gamma, ctx.delta.clone(), e)?;
        if let Some(x) = left.keys().next() {
            return Err(TypeError::new("ty-var-l", format!("linear variable {x} is never used")));
        }
        Ok(t)
    }

    fn bound(
        &self,
        gamma: &Gamma,
        mut delta: Delta,
        binders: &[(&String, &Ty)],
        body: &Expr,
        rule: &'static str,
    ) -> Result<(Ty, Delta), TypeError> {
        let mut g = gamma.clone();
        let mut stash = Vec::new();
        for (x, t) in binders {
            if let Some(old) = delta.remove(*x) {
                stash.push(((*x).clone(), old));
            }
            g.remove(*x);
            if t.is_type() {
                g.insert((*x).clone(), (*t).clone());
            } else {
                delta.insert((*x).clone(), (*t).clone());
            }
        }
        let (t, mut out) = self.synth(&g, delta, body)?;
        for (x, ty) in binders {
            if !ty.is_type() && out.remove(*x).is_some() {
                return Err(TypeError::new(rule, format!("linear variable {x} is never used")));
            }
        }
        out.extend(stash);
        Ok((t, out))
    }

    pub fn synth(&self, gamma: &Gamma, mut delta: Delta, e: &Expr) -> Result<(Ty, Delta), TypeError> {
        match e {
            Expr::Var(x) => {
                if let Some(t) = gamma.get(x) {
                    return Ok((t.clone(), delta));
                }
                match delta.remove(x) {
                    Some(t) => Ok((t, delta)),
                    None => Err(TypeError::new("ty-var-l", format!("{x} is unbound or already used"))),
                }
            }
            Expr::Res(n) => match self.sig.get(n) {
                Some(t) => Ok((t.clone(), delta)),
                None => Err(TypeError::new("ty-res", format!("no signature for rc{n}"))),
            },
            Expr::Bool(_) => Ok((Ty::Bool, delta)),
            Expr::Int(n) => Ok((Ty::IntIdx(*n), delta)),
            Expr::Str(_) => Ok((Ty::Str, delta)),
            Expr::Unit => Ok((Ty::Unit, delta)),
            Expr::Pair(a, b) => {
                let (ta, d) = self.synth(gamma, delta, a)?;
                let (tb, d) = self.synth(gamma, d, b)?;
                let t = if ta.is_type() && tb.is_type() { Ty::prod(ta, tb) } else { Ty::tensor(ta, tb) };
                Ok((t, d))
            }
            Expr::Fst(p) | Expr::Snd(p) => {
                let rule = if matches!(e, Expr::Fst(_)) { "ty-fst" } else { "ty-snd" };
                match self.synth(gamma, delta, p)? {
                    (Ty::Prod(a, b), d) => Ok((if rule == "ty-fst" { *a } else { *b }, d)),
                    (t, _) => Err(TypeError::new(rule, format!("expected a non-linear pair, got {t}"))),
                }
            }
            Expr::LetPair(x, y, e1, e2) => {
                if x == y {
                    return Err(TypeError::new("ty-tup-l-elim", format!("{x} bound twice")));
                }
                let (t, d) = self.synth(gamma, delta, e1)?;
                let (a, b) = match t {
                    Ty::Tensor(a, b) | Ty::Prod(a, b) => (*a, *b),
                    t => return Err(TypeError::new("ty-tup-l-elim", format!("expected a pair, got {t}"))),
                };
                self.bound(gamma, d, &[(x, &a), (y, &b)], e2, "ty-tup-l-elim")
            }
            Expr::Let(x, e1, e2) => {
                let (t, d) = self.synth(gamma, delta, e1)?;
                self.bound(gamma, d, &[(x, &t)], e2, "ty-let")
            }
            Expr::Lam { param, ty, body } => {
                let before = delta.len();
                let (tb, out) = self.bound(gamma, delta, &[(param, ty)], body, "ty-lam-l")?;
                let t = if out.len() == before && rho(body).is_empty() {
                    Ty::fun_i(ty.clone(), tb)
                } else {
                    Ty::fun_l(ty.clone(), tb)
                };
                Ok((t, out))
            }
            Expr::App(f, a) => {
                let (tf, d) = self.synth(gamma, delta, f)?;
                let (rule, param, result) = match tf {
                    Ty::FunI(p, r) => ("ty-app-i", *p, *r),
                    Ty::FunL(p, r) => ("ty-app-l", *p, *r),
                    t => return Err(TypeError::new("ty-app-l", format!("applying a non-function of type {t}"))),
                };
                let d = self.check(gamma, d, a, &param, rule)?;
                Ok((result, d))
            }
            Expr::Fix { name, ty, body } => {
                if !ty.is_type() {
                    return Err(TypeError::new("ty-fix", format!("{ty} is linear")));
                }
                if !matches!(**body, Expr::Lam { .. }) {
                    return Err(TypeError::new("ty-fix", "the body must be a lambda"));
                }
                let mut g = gamma.clone();
                g.insert(name.clone(), ty.clone());
                for x in free_vars(body) {
                    if x != *name && !g.contains_key(&x) && delta.contains_key(&x) {
                        return Err(TypeError::new("ty-fix", format!("captures linear variable {x}")));
                    }
                }
                self.check(&g, Delta::new(), body, ty, "ty-fix")?;
                Ok((ty.clone(), delta))
            }
            Expr::If(c, a, b) => {
                let (tc, d) = self.synth(gamma, delta, c)?;
                if !subtype(&tc, &Ty::Bool) {
                    return Err(mismatch("ty-if", &Ty::Bool, &tc));
                }
                let (ta, da) = self.synth(gamma, d.clone(), a)?;
                let (tb, db) = self.synth(gamma, d, b)?;
                self.branches("ty-if", (&ta, &da, a), (&tb, &db, b))
            }
            Expr::Case { scrut, left, right } => {
                let (ts, d) = self.synth(gamma, delta, scrut)?;
                let Ty::Sum(l, r) = ts else {
                    return Err(TypeError::new("ty-case", format!("expected a sum, got {ts}")));
                };
                let (ta, da) = self.bound(gamma, d.clone(), &[(&left.0, &l)], &left.1, "ty-case")?;
                let (tb, db) = self.bound(gamma, d, &[(&right.0, &r)], &right.1, "ty-case")?;
                self.branches("ty-case", (&ta, &da, &left.1), (&tb, &db, &right.1))
            }
            Expr::Inj { left, other, body } => {
                let (t, d) = self.synth(gamma, delta, body)?;
                let t = if *left { Ty::sum(t, other.clone()) } else { Ty::sum(other.clone(), t) };
                Ok((t, d))
            }
            Expr::The(t, body) => {
                let d = self.check(gamma, delta, body, t, "ty-the")?;
                Ok((t.clone(), d))
            }
            Expr::Call(c, args) => {
                let mut tys = Vec::new();
                for a in args {
                    let (t, d) = match (c, a) {
                        (Const::ServiceCreate, Expr::Lam { ty, .. }) => {
                            let want = Ty::fun_i(ty.clone(), Ty::Unit);
                            (want.clone(), self.check(gamma, delta, a, &want, "ty-cst")?)
                        }
                        _ => self.synth(gamma, delta, a)?,
                    };
                    tys.push(t);
                    delta = d;
                }
                Ok((const_type(c, &tys, self.universe)?, delta))
            }
        }
    }

    fn branches(
        &self,
        rule: &'static str,
        (ta, da, a): (&Ty, &Delta, &Expr),
        (tb, db, b): (&Ty, &Delta, &Expr),
    ) -> Result<(Ty, Delta), TypeError> {
        if da.keys().ne(db.keys()) {
            let ka: Vec<&String> = da.keys().collect();
            let kb: Vec<&String> = db.keys().collect();
            return Err(TypeError::new(rule, format!("branches leave different linear variables: {ka:?} vs {kb:?}")));
        }
        let (ra, rb) = (rho(a), rho(b));
        if ra != rb {
            return Err(TypeError::new(rule, format!("branches hold different resources: {ra} vs {rb}")));
        }
        match join(ta, tb) {
            Some(t) => Ok((t, da.clone())),
            None => Err(TypeError::new(rule, format!("branches have types {ta} and {tb}"))),
        }
    }

    /// Checks `e` against `want`. Lambdas checked against `->i` use the
    /// intuitionistic rule directly so a violation is reported as such.
    pub fn check(&self, gamma: &Gamma, delta: Delta, e: &Expr, want: &Ty, rule: &'static str) -> Result<Delta, TypeError> {
        match (e, want) {
            (Expr::Lam { param, ty, body }, Ty::FunI(a, r)) => {
                if !subtype(a, ty) {
                    return Err(mismatch(rule, want, &Ty::fun_i(ty.clone(), (**r).clone())));
                }
                for x in free_vars(body) {
                    if x != *param && !gamma.contains_key(&x) && delta.contains_key(&x) {
                        return Err(TypeError::new("ty-lam-i", format!("captures linear variable {x}")));
                    }
                }
                let (tb, _) = self.bound(gamma, Delta::new(), &[(param, ty)], body, "ty-lam-i")?;
                let held = rho(body);
                if !held.is_empty() {
                    return Err(TypeError::new("ty-lam-i", format!("the body holds resources {held}")));
                }
                if !subtype(&tb, r) {
                    return Err(mismatch(rule, r, &tb));
                }
                Ok(delta)
            }
            (Expr::Pair(x, y), Ty::Tensor(a, b) | Ty::Prod(a, b)) => {
                let d = self.check(gamma, delta, x, a, rule)?;
                self.check(gamma, d, y, b, rule)
            }
            _ => {
                let (t, d) = self.synth(gamma, delta, e)?;
                if subtype(&t, want) {
                    Ok(d)
                } else {
                    Err(mismatch(rule, want, &t))
                }
            }
        }
    }
}

/// Types a closed term: `(; ) |- e : T`.
pub fn typecheck(universe: &Universe, sig: &BTreeMap<usize, Ty>, e: &Expr) -> Result<Ty, TypeError> {
    Checker { universe, sig }.judge(&Context::default(), e)
}

struct Decl<'a> {
    universe: &'a Universe,
    sig: &'a BTreeMap<usize, Ty>,
}

/// Every way to hand the entries of `d` to `n` premises.
fn splits(d: &Delta, n: usize) -> Vec<Vec<Delta>> {
    let entries: Vec<(&String, &Ty)> = d.iter().collect();
    let total = n.pow(entries.len() as u32);
    (0..total)
        .map(|mut code| {
            let mut parts = vec![Delta::new(); n];
            for (x, t) in &entries {
                parts[code % n].insert((*x).clone(), (*t).clone());
                code /= n;
            }
            parts
        })
        .collect()
}

fn extend(gamma: &Gamma, delta: &Delta, binders: &[(&String, &Ty)]) -> Option<(Gamma, Delta)> {
    let mut g = gamma.clone();
    let mut d = delta.clone();
    for (x, t) in binders {
        g.remove(*x);
        if d.contains_key(*x) {
            // A shadowed linear variable could never be used.
            return None;
        }
        if t.is_type() {
            g.insert((*x).clone(), (*t).clone());
        } else {
            d.insert((*x).clone(), (*t).clone());
        }
    }
    Some((g, d))
}

impl Decl<'_> {
    fn derive(&self, g: &Gamma, d: &Delta, e: &Expr) -> Option<Ty> {
        let empty = d.is_empty();
        match e {
            Expr::Var(x) => match (g.get(x), d.get(x)) {
                (Some(t), _) if empty => Some(t.clone()),
                (None, Some(t)) if d.len() == 1 => Some(t.clone()),
                _ => None,
            },
            Expr::Res(n) if empty => self.sig.get(n).cloned(),
            Expr::Bool(_) if empty => Some(Ty::Bool),
            Expr::Int(n) if empty => Some(Ty::IntIdx(*n)),
            Expr::Str(_) if empty => Some(Ty::Str),
            Expr::Unit if empty => Some(Ty::Unit),
            Expr::Res(_) | Expr::Bool(_) | Expr::Int(_) | Expr::Str(_) | Expr::Unit => None,
            Expr::Pair(a, b) => splits(d, 2).into_iter().find_map(|p| {
                let (ta, tb) = (self.derive(g, &p[0], a)?, self.derive(g, &p[1], b)?);
                Some(if ta.is_type() && tb.is_type() { Ty::prod(ta, tb) } else { Ty::tensor(ta, tb) })
            }),
            Expr::Fst(p) => match self.derive(g, d, p)? {
                Ty::Prod(a, _) => Some(*a),
                _ => None,
            },
            Expr::Snd(p) => match self.derive(g, d, p)? {
                Ty::Prod(_, b) => Some(*b),
                _ => None,
            },
            Expr::LetPair(x, y, e1, e2) if x != y => splits(d, 2).into_iter().find_map(|p| {
                let (a, b) = match self.derive(g, &p[0], e1)? {
                    Ty::Tensor(a, b) | Ty::Prod(a, b) => (*a, *b),
                    _ => return None,
                };
                let (g2, d2) = extend(g, &p[1], &[(x, &a), (y, &b)])?;
                self.derive(&g2, &d2, e2)
            }),
            Expr::LetPair(..) => None,
            Expr::Let(x, e1, e2) => splits(d, 2).into_iter().find_map(|p| {
                let t = self.derive(g, &p[0], e1)?;
                let (g2, d2) = extend(g, &p[1], &[(x, &t)])?;
                self.derive(&g2, &d2, e2)
            }),
            Expr::Lam { param, ty, body } => {
                if empty {
                    let (g2, d2) = extend(g, d, &[(param, ty)])?;
                    if let Some(tb) = self.derive(&g2, &d2, body) {
                        if rho(body).is_empty() {
                            return Some(Ty::fun_i(ty.clone(), tb));
                        }
                        return Some(Ty::fun_l(ty.clone(), tb));
                    }
                    return None;
                }
                let (g2, d2) = extend(g, d, &[(param, ty)])?;
                Some(Ty::fun_l(ty.clone(), self.derive(&g2, &d2, body)?))
            }
            Expr::App(f, a) => splits(d, 2).into_iter().find_map(|p| match self.derive(g, &p[0], f)? {
                Ty::FunI(x, r) | Ty::FunL(x, r) => self.check(g, &p[1], a, &x).then_some(*r),
                _ => None,
            }),
            Expr::Fix { name, ty, body } => {
                if !empty || !ty.is_type() || !matches!(**body, Expr::Lam { .. }) {
                    return None;
                }
                let mut g2 = g.clone();
                g2.insert(name.clone(), ty.clone());
                self.check(&g2, &Delta::new(), body, ty).then(|| ty.clone())
            }
            Expr::If(c, a, b) => splits(d, 2).into_iter().find_map(|p| {
                if !subtype(&self.derive(g, &p[0], c)?, &Ty::Bool) || rho(a) != rho(b) {
                    return None;
                }
                join(&self.derive(g, &p[1], a)?, &self.derive(g, &p[1], b)?)
            }),
            Expr::Case { scrut, left, right } => splits(d, 2).into_iter().find_map(|p| {
                let Ty::Sum(l, r) = self.derive(g, &p[0], scrut)? else { return None };
                if rho(&left.1) != rho(&right.1) {
                    return None;
                }
                let (gl, dl) = extend(g, &p[1], &[(&left.0, &l)])?;
                let (gr, dr) = extend(g, &p[1], &[(&right.0, &r)])?;
                join(&self.derive(&gl, &dl, &left.1)?, &self.derive(&gr, &dr, &right.1)?)
            }),
            Expr::Inj { left, other, body } => {
                let t = self.derive(g, d, body)?;
                Some(if *left { Ty::sum(t, other.clone()) } else { Ty::sum(other.clone(), t) })
            }
            Expr::The(t, body) => self.check(g, d, body, t).then(|| t.clone()),
            Expr::Call(c, args) => splits(d, args.len().max(1)).into_iter().find_map(|p| {
                if args.is_empty() && !d.is_empty() {
                    return None;
                }
                let mut tys = Vec::new();
                for (a, part) in args.iter().zip(&p) {
                    match (c, a) {
                        (Const::ServiceCreate, Expr::Lam { ty, .. }) => {
                            let want = Ty::fun_i(ty.clone(), Ty::Unit);
                            if !self.check(g, part, a, &want) {
                                return None;
                            }
                            tys.push(want);
                        }
                        _ => tys.push(self.derive(g, part, a)?),
                    }
                }
                const_type(c, &tys, self.universe).ok()
            }),
        }
    }

    fn check(&self, g: &Gamma, d: &Delta, e: &Expr, want: &Ty) -> bool {
        match (e, want) {
            (Expr::Lam { param, ty, body }, Ty::FunI(a, r)) => {
                if !d.is_empty() || !subtype(a, ty) || !rho(body).is_empty() {
                    return false;
                }
                let Some((g2, d2)) = extend(g, d, &[(param, ty)]) else { return false };
                self.derive(&g2, &d2, body).is_some_and(|tb| subtype(&tb, r))
            }
            (Expr::Pair(x, y), Ty::Tensor(a, b) | Ty::Prod(a, b)) => {
                splits(d, 2).into_iter().any(|p| self.check(g, &p[0], x, a) && self.check(g, &p[1], y, b))
            }
            _ => self.derive(g, d, e).is_some_and(|t| subtype(&t, want)),
        }
    }
}

/// The same judgment as [`Checker::judge`], found by trying every split of
/// the linear context instead of threading it.
pub fn declarative(universe: &Universe, sig: &BTreeMap<usize, Ty>, ctx: &Context, e: &Expr) -> Option<Ty> {
    Decl { universe, sig }.derive(&ctx.gamma, &ctx.delta, e)
}

/// Which clause of the canonical forms lemma a closed value falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Canonical {
    /// A constructor applied to values: literals, services.
    Constructor,
    Resource,
    Unit,
    Pair,
    Lambda,
    Injection,
}

/// Classifies a closed, well-typed value by its type.
pub fn canonical_form(v: &Expr, t: &Ty) -> Result<Canonical, MtlcError> {
    let ctor = matches!(v, Expr::Bool(_) | Expr::Int(_) | Expr::Str(_)) || matches!(v, Expr::Call(c, _) if c.is_constructor());
    let class = match t {
        Ty::Bool | Ty::Int | Ty::IntIdx(_) | Ty::Str | Ty::Service(..) if ctor && v.is_value() => Some(Canonical::Constructor),
        Ty::Chan(..) if matches!(v, Expr::Res(_)) => Some(Canonical::Resource),
        Ty::Chan(..) if ctor && v.is_value() => Some(Canonical::Constructor),
        Ty::Unit if *v == Expr::Unit => Some(Canonical::Unit),
        Ty::Prod(..) | Ty::Tensor(..) if matches!(v, Expr::Pair(..)) && v.is_value() => Some(Canonical::Pair),
        Ty::FunI(..) | Ty::FunL(..) if matches!(v, Expr::Lam { .. }) => Some(Canonical::Lambda),
        Ty::Sum(..) if matches!(v, Expr::Inj { .. }) && v.is_value() => Some(Canonical::Injection),
        _ => None,
    };
    class.ok_or_else(|| MtlcError::ClassificationImpossible { value: v.to_string(), ty: t.to_string() })
}
