//! Pool evaluation. Every thread of a term pool is a host thread of the
//! runtime's pool: pure redexes and thread, channel and cut management are
//! reduced here, and the primitives that need a partner block until the
//! runtime fires their channel.

use std::any::Any;
use std::collections::BTreeMap;

use super::typing::subtype;
use super::{rho, typecheck, Const, Expr, MtlcError, ResourceBag, Ty, TypeError};
use crate::roles::Universe;
use crate::runtime::{choose_branch, Config, EpId, HostCtx, HostStep, HostThread, Op, Pool, Reply, RunReport, RuntimeError, Side, Value};

/// One thread of a term pool.
#[derive(Debug, Clone)]
pub struct MtlcThread {
    pub expr: Expr,
    /// Endpoint types of both branches of a pending offer.
    offer: Option<(Ty, Ty)>,
    stuck: Option<String>,
}

impl MtlcThread {
    pub fn new(expr: Expr) -> MtlcThread {
        MtlcThread { expr, offer: None, stuck: None }
    }

    /// The term the thread could not reduce, if it got stuck.
    pub fn stuck(&self) -> Option<&str> {
        self.stuck.as_deref()
    }
}

fn boxed(e: Expr) -> Box<dyn HostThread> {
    Box::new(MtlcThread::new(e))
}

/// Path to the subterm the evaluation context focuses on, or `None` for a value.
fn focus(e: &Expr) -> Option<Vec<usize>> {
    let mut path = Vec::new();
    let mut cur = e;
    loop {
        if cur.is_value() {
            return if path.is_empty() { None } else { Some(path) };
        }
        let k = match cur {
            Expr::Pair(a, _) => Some(if a.is_value() { 1 } else { 0 }),
            Expr::App(f, a) => {
                if !f.is_value() {
                    Some(0)
                } else if !a.is_value() {
                    Some(1)
                } else {
                    None
                }
            }
            Expr::Call(_, args) => args.iter().position(|a| !a.is_value()),
            Expr::Fst(x) | Expr::Snd(x) | Expr::Inj { body: x, .. } | Expr::The(_, x) => (!x.is_value()).then_some(0),
            Expr::Let(_, x, _) | Expr::LetPair(_, _, x, _) | Expr::If(x, _, _) | Expr::Case { scrut: x, .. } => {
                (!x.is_value()).then_some(0)
            }
            _ => None,
        };
        match k {
            Some(k) => {
                path.push(k);
                cur = cur.children()[k];
            }
            None => return Some(path),
        }
    }
}

fn at_mut<'a>(e: &'a mut Expr, path: &[usize]) -> &'a mut Expr {
    path.iter().fold(e, |cur, k| cur.child_mut(*k))
}

enum Reduct {
    Term(Expr),
    Block(EpId, Op, Option<(Ty, Ty)>),
}

fn stuck(e: &Expr) -> MtlcError {
    MtlcError::StuckNonRedex(e.to_string())
}

fn to_value(e: &Expr) -> Option<Value> {
    match e {
        Expr::Unit => Some(Value::Unit),
        Expr::Int(n) => Some(Value::Int(*n)),
        Expr::Str(s) => Some(Value::Str(s.clone())),
        _ => None,
    }
}

fn from_value(v: &Value) -> Result<Expr, RuntimeError> {
    match v {
        Value::Unit => Ok(Expr::Unit),
        Value::Int(n) => Ok(Expr::Int(*n)),
        Value::Str(s) => Ok(Expr::Str(s.clone())),
        Value::List(_) => Err(RuntimeError::Host("a gathered list has no term representation".into())),
    }
}

fn carried(e: &Expr) -> Vec<EpId> {
    rho(e).support().map(EpId).collect()
}

fn reduce(redex: &Expr, ctx: &mut HostCtx<'_>) -> Result<Reduct, MtlcError> {
    let term = |e: &Expr| Ok(Reduct::Term(e.clone()));
    match redex {
        Expr::If(c, a, b) => match **c {
            Expr::Bool(true) => term(a),
            Expr::Bool(false) => term(b),
            _ => Err(stuck(redex)),
        },
        Expr::Fst(p) | Expr::Snd(p) => match &**p {
            Expr::Pair(a, b) => term(if matches!(redex, Expr::Fst(_)) { a } else { b }),
            _ => Err(stuck(redex)),
        },
        Expr::LetPair(x, y, p, body) => match &**p {
            Expr::Pair(a, b) => term(&body.subst(x, a).subst(y, b)),
            _ => Err(stuck(redex)),
        },
        Expr::Let(x, v, body) => term(&body.subst(x, v)),
        Expr::App(f, a) => match &**f {
            Expr::Lam { param, body, .. } => term(&body.subst(param, a)),
            _ => Err(stuck(redex)),
        },
        Expr::Fix { name, body, .. } => term(&body.subst(name, redex)),
        Expr::Case { scrut, left, right } => match &**scrut {
            Expr::Inj { left: true, body, .. } => term(&left.1.subst(&left.0, body)),
            Expr::Inj { left: false, body, .. } => term(&right.1.subst(&right.0, body)),
            _ => Err(stuck(redex)),
        },
        Expr::The(_, v) => term(v),
        Expr::Call(c, args) => call(redex, c, args, ctx),
        _ => Err(stuck(redex)),
    }
}

fn call(redex: &Expr, c: &Const, args: &[Expr], ctx: &mut HostCtx<'_>) -> Result<Reduct, MtlcError> {
    let ep = |k: usize| match args.get(k) {
        Some(Expr::Res(n)) => Ok(EpId(*n)),
        _ => Err(stuck(redex)),
    };
    let param = |k: usize| match args.get(k) {
        Some(Expr::Lam { ty, .. }) => Ok(ty.clone()),
        _ => Err(stuck(redex)),
    };
    let int = |k: usize| match args.get(k) {
        Some(Expr::Int(n)) => Ok(*n),
        _ => Err(stuck(redex)),
    };
    let block = |op: Op| Ok(Reduct::Block(ep(0)?, op, None));
    let t = match c {
        Const::Iadd => Expr::Int(int(0)?.wrapping_add(int(1)?)),
        Const::Isub => Expr::Int(int(0)?.wrapping_sub(int(1)?)),
        Const::Imul => Expr::Int(int(0)?.wrapping_mul(int(1)?)),
        Const::Ilt => Expr::Bool(int(0)? < int(1)?),
        Const::Ieq => Expr::Bool(int(0)? == int(1)?),
        Const::RandBit => Expr::Int(ctx.random_bit() as i64),
        Const::ThreadCreate => {
            let f = &args[0];
            ctx.spawn(&carried(f), boxed(Expr::app(f.clone(), Expr::Unit)))?;
            Expr::Unit
        }
        Const::ChanCreate => {
            let Ty::Chan(r, s) = param(0)? else { return Err(stuck(redex)) };
            let f = &args[0];
            let mine = ctx.universe().complement(r);
            let e = ctx.create(mine, &s, &carried(f), |g| boxed(Expr::app(f.clone(), Expr::Res(g.0))))?;
            Expr::Res(e.0)
        }
        Const::Chan2Create => {
            let Ty::Tensor(a, b) = param(0)? else { return Err(stuck(redex)) };
            let (Ty::Chan(r1, s1), Ty::Chan(r2, s2)) = (*a, *b) else { return Err(stuck(redex)) };
            let f = &args[0];
            let mine = ctx.create_pair([r1, r2], &[s1, s2], &carried(f), |[x, y]| {
                boxed(Expr::app(f.clone(), Expr::pair(Expr::Res(x.0), Expr::Res(y.0))))
            })?;
            Expr::pair(Expr::Res(mine[0].0), Expr::Res(mine[1].0))
        }
        Const::ServiceRequest => {
            let Some(Expr::Call(Const::ServiceCreate, inner)) = args.first() else { return Err(stuck(redex)) };
            let f = &inner[0];
            let Some(Expr::Lam { ty: Ty::Chan(q, s), .. }) = inner.first() else { return Err(stuck(redex)) };
            let mine = ctx.universe().complement(*q);
            let e = ctx.request(mine, s, &carried(f), |g| boxed(Expr::app(f.clone(), Expr::Res(g.0))))?;
            Expr::Res(e.0)
        }
        Const::ChanSplit => {
            let Ty::Chan(part, _) = param(1)? else { return Err(stuck(redex)) };
            let f = &args[1];
            let rest = ctx.split(ep(0)?, part, &carried(f), |g| boxed(Expr::app(f.clone(), Expr::Res(g.0))))?;
            Expr::Res(rest.0)
        }
        Const::ChanClose => {
            ctx.close(ep(0)?)?;
            Expr::Unit
        }
        Const::Chan1Cut => {
            ctx.cut1(ep(0)?)?;
            Expr::Unit
        }
        Const::Chan2Cut | Const::Chan3Cut => {
            let eps: Vec<EpId> = (0..args.len()).map(ep).collect::<Result<_, _>>()?;
            ctx.cut(&eps)?;
            Expr::Unit
        }
        Const::Chan2CutRes => Expr::Res(ctx.cutres(ep(0)?, ep(1)?)?.0),
        Const::ChanAppend => {
            let e = ep(0)?;
            ctx.append_enter(e)?;
            let rest = ctx.net().endpoint(e)?.rests.last().cloned().expect("append saved a continuation");
            Expr::call(Const::AppendExit(rest), vec![Expr::app(args[1].clone(), Expr::Res(e.0))])
        }
        Const::AppendExit(_) => match &args[0] {
            Expr::Pair(_, end) => match **end {
                Expr::Res(n) => {
                    ctx.append_exit(EpId(n))?;
                    args[0].clone()
                }
                _ => return Err(stuck(redex)),
            },
            _ => return Err(stuck(redex)),
        },
        Const::ChanSync => return block(Op::Sync),
        Const::ChanSend => return block(Op::Send(to_value(&args[1]).ok_or_else(|| stuck(redex))?)),
        Const::ChanRecv => return block(Op::Recv),
        Const::ChanAConjL => return block(Op::Choose(Side::Left)),
        Const::ChanAConjR => return block(Op::Choose(Side::Right)),
        Const::ChanADisj => {
            let e = ep(0)?;
            let end = ctx.net().endpoint(e)?;
            let branches = (Ty::chan(end.roles, &choose_branch(&end.cursor, true)), Ty::chan(end.roles, &choose_branch(&end.cursor, false)));
            return Ok(Reduct::Block(e, Op::Offer, Some(branches)));
        }
        Const::ChanMConj => return block(Op::MConj),
        Const::ChanMDisjL => return block(Op::MDisj(Side::Left)),
        Const::ChanMDisjR => return block(Op::MDisj(Side::Right)),
        Const::ServiceCreate => return Err(stuck(redex)),
    };
    Ok(Reduct::Term(t))
}

fn host_error(e: MtlcError) -> RuntimeError {
    match e {
        MtlcError::Runtime(r) => r,
        other => RuntimeError::Host(other.to_string()),
    }
}

impl HostThread for MtlcThread {
    fn step(&mut self, ctx: &mut HostCtx<'_>) -> Result<HostStep, RuntimeError> {
        let Some(path) = focus(&self.expr) else {
            return Ok(HostStep::Done);
        };
        let redex = at_mut(&mut self.expr, &path);
        match reduce(redex, ctx) {
            Ok(Reduct::Term(t)) => {
                *redex = t;
                Ok(HostStep::Continue)
            }
            Ok(Reduct::Block(ep, op, offer)) => {
                self.offer = offer;
                Ok(HostStep::Block(ep, op))
            }
            Err(e) => {
                if let MtlcError::StuckNonRedex(s) = &e {
                    self.stuck = Some(s.clone());
                }
                Err(host_error(e))
            }
        }
    }

    fn resume(&mut self, reply: Reply, ctx: &mut HostCtx<'_>) -> Result<(), RuntimeError> {
        let path = focus(&self.expr).expect("a blocked thread is at a redex");
        let redex = at_mut(&mut self.expr, &path);
        let Expr::Call(c, args) = redex.clone() else {
            unreachable!("threads block only on constants")
        };
        let Some(Expr::Res(n)) = args.first() else { unreachable!("channel constants take the endpoint first") };
        let t = match (c, reply) {
            (Const::ChanRecv, Reply::Value(v)) => Expr::pair(from_value(&v)?, Expr::Res(*n)),
            (Const::ChanADisj, Reply::Tag(side)) => {
                let (l, r) = self.offer.take().expect("offer types recorded when blocking");
                let left = side == Side::Left;
                Expr::Inj { left, other: if left { r } else { l }, body: Box::new(Expr::Res(*n)) }
            }
            (Const::ChanMConj, Reply::Pair(a, b)) => Expr::pair(Expr::Res(a.0), Expr::Res(b.0)),
            (Const::ChanMDisjL | Const::ChanMDisjR, Reply::Disj { keep, give }) => {
                let f = &args[1];
                let mut carry = carried(f);
                carry.push(give);
                ctx.spawn(&carry, boxed(Expr::app(f.clone(), Expr::Res(give.0))))?;
                Expr::Res(keep.0)
            }
            (_, Reply::Unit | Reply::Value(_)) => Expr::Res(*n),
            (c, reply) => return Err(RuntimeError::Host(format!("{} cannot take the reply {reply:?}", c.name()))),
        };
        *redex = t;
        Ok(())
    }

    fn clone_box(&self) -> Box<dyn HostThread> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// The outcome of evaluating a term pool.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub run: RunReport,
    /// Type of the main term before evaluation.
    pub ty: Ty,
    /// The main thread's final value, once it has one.
    pub value: Option<Expr>,
    /// How many intermediate pools were retyped.
    pub retyped: usize,
    /// A term no rule applies to; a well-typed pool never has one.
    pub stuck: Option<String>,
}

fn threads(pool: &Pool) -> impl Iterator<Item = (usize, &MtlcThread)> {
    pool.hosts().filter_map(|(tid, h)| h.as_any().downcast_ref::<MtlcThread>().map(|t| (tid, t)))
}

/// Types every thread of the pool against the live endpoints: the main
/// thread at (a subtype of) `main`, every other one at unit. No endpoint
/// may occur twice.
pub fn retype_pool(pool: &Pool, main: &Ty) -> Result<(), TypeError> {
    let sig: BTreeMap<usize, Ty> = pool.net.endpoints.iter().map(|(id, e)| (id.0, Ty::chan(e.roles, &e.cursor))).collect();
    let mut held = ResourceBag::default();
    for (tid, t) in threads(pool) {
        held.add(&rho(&t.expr));
        let got = typecheck(&pool.net.universe, &sig, &t.expr)?;
        let want = if tid == 0 { main } else { &Ty::Unit };
        if !subtype(&got, want) {
            return Err(TypeError::new("ty-pool", format!("thread {tid} has type {got}, expected {want}")));
        }
    }
    if let Some(rc) = held.support().find(|rc| held.count(*rc) > 1) {
        return Err(TypeError::new("ty-pool", format!("rc{rc} is held twice")));
    }
    Ok(())
}

/// Typechecks the closed term `main` and runs it as the main thread of a
/// pool. With `retype`, every intermediate pool is typechecked again.
pub fn eval_pool(universe: &Universe, main: &Expr, config: Config, retype: bool) -> Result<EvalReport, MtlcError> {
    let ty = typecheck(universe, &BTreeMap::new(), main)?;
    let mut pool = Pool::with_host(*universe, boxed(main.clone()), config);
    let mut retyped = 0;
    let outcome = loop {
        if let Some(o) = pool.step() {
            break o;
        }
        if retype {
            retype_pool(&pool, &ty).map_err(|error| MtlcError::SubjectReduction { step: pool.steps(), error })?;
            retyped += 1;
        }
    };
    let stuck = threads(&pool).find_map(|(_, t)| t.stuck.clone());
    let value = threads(&pool).find(|(tid, _)| *tid == 0).map(|(_, t)| t.expr.clone()).filter(Expr::is_value);
    Ok(EvalReport { run: pool.report(outcome), ty, value, retyped, stuck })
}
