//! The golden term corpus, random terms, and party programs derived from
//! random protocols.

use std::collections::BTreeMap;
use std::path::PathBuf;

use multirole::mtlc::{eval_pool, parse_expr, parse_program, parse_ty, rho, typecheck, Const, EvalReport, Expr, Program, Ty};
use multirole::roles::{RoleSet, Universe};
use multirole::runtime::{advance_atom, choose_branch, head, normalize, Config, Outcome};
use multirole::session::{Payload, SessionType};
use rand::seq::SliceRandom;
use rand::Rng;

use super::protocols::random_session;

#[derive(Debug, Clone, PartialEq)]
pub enum Expect {
    Type(Ty),
    Reject(String),
}

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub roles: usize,
    pub expect: Expect,
    /// Printed value the main thread must end with.
    pub value: Option<String>,
    pub program: Program,
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus/mtlc")
}

pub fn load_case(path: &std::path::Path) -> Case {
    let src = std::fs::read_to_string(path).unwrap();
    let name = path.file_stem().unwrap().to_string_lossy().into_owned();
    let (mut roles, mut expect, mut value) = (2, None, None);
    for line in src.lines() {
        if let Some(t) = line.strip_prefix("; expect: type ") {
            expect = Some(Expect::Type(parse_ty(t).unwrap()));
        } else if let Some(r) = line.strip_prefix("; expect: reject ") {
            expect = Some(Expect::Reject(r.trim().to_string()));
        } else if let Some(v) = line.strip_prefix("; value: ") {
            value = Some(v.trim().to_string());
        } else if let Some(n) = line.strip_prefix("; roles: ") {
            roles = n.trim().parse().unwrap();
        }
    }
    let program = parse_program(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
    Case { expect: expect.unwrap_or_else(|| panic!("{name} has no expectation")), name, roles, value, program }
}

pub fn corpus() -> Vec<Case> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir()).unwrap().map(|e| e.unwrap().path()).collect();
    paths.retain(|p| p.extension().is_some_and(|x| x == "mtlc"));
    paths.sort();
    paths.iter().map(|p| load_case(p)).collect()
}

impl Case {
    pub fn universe(&self) -> Universe {
        Universe::new(self.roles).unwrap()
    }

    /// Compares the checker's verdict with the expectation.
    pub fn check(&self) -> Result<(), String> {
        let got = typecheck(&self.universe(), &self.program.resources, &self.program.main);
        match (&self.expect, got) {
            (Expect::Type(want), Ok(t)) if *want == t => Ok(()),
            (Expect::Reject(rule), Err(e)) if e.rule == rule => Ok(()),
            (want, got) => Err(format!("{}: expected {want:?}, got {got:?}", self.name)),
        }
    }

    /// Runs a closed, well-typed case with retyping after every step.
    pub fn run(&self, seed: u64) -> Option<Result<EvalReport, String>> {
        if !matches!(self.expect, Expect::Type(_)) || !self.program.resources.is_empty() {
            return None;
        }
        let config = Config { seed, ..Config::default() };
        Some(eval_pool(&self.universe(), &self.program.main, config, true).map_err(|e| format!("{}: {e}", self.name)))
    }
}

/// A run that type preservation and progress both vouch for.
pub fn clean(r: &EvalReport) -> Result<(), String> {
    if let Some(s) = &r.stuck {
        return Err(format!("stuck at {s}"));
    }
    if r.run.outcome != Outcome::Completed {
        return Err(format!("outcome {:?}", r.run.outcome));
    }
    if r.value.is_none() {
        return Err("the main thread has no value".into());
    }
    Ok(())
}

fn name<R: Rng>(rng: &mut R) -> String {
    ["x", "y", "z"].choose(rng).unwrap().to_string()
}

fn small_ty<R: Rng>(rng: &mut R) -> Ty {
    match rng.gen_range(0..4) {
        0 => Ty::Int,
        1 => Ty::Unit,
        2 => Ty::chan(RoleSet::singleton(0), &SessionType::Nil),
        _ => Ty::prod(Ty::Int, Ty::Bool),
    }
}

/// An arbitrary term, not necessarily well typed, mentioning `rc0..rc3`.
pub fn random_expr<R: Rng>(rng: &mut R, depth: usize) -> Expr {
    let leaf = depth == 0 || rng.gen_bool(0.25);
    if leaf {
        return match rng.gen_range(0..6) {
            0 => Expr::Res(rng.gen_range(0..4)),
            1 => Expr::Var(name(rng)),
            2 => Expr::Int(rng.gen_range(-3..10)),
            3 => Expr::Bool(rng.gen()),
            4 => Expr::Str("s".into()),
            _ => Expr::Unit,
        };
    }
    let d = depth - 1;
    let sub = |rng: &mut R| Box::new(random_expr(rng, d));
    match rng.gen_range(0..13) {
        0 => Expr::Pair(sub(rng), sub(rng)),
        1 => Expr::Fst(sub(rng)),
        2 => Expr::Snd(sub(rng)),
        3 => Expr::LetPair(name(rng), name(rng), sub(rng), sub(rng)),
        4 => Expr::Let(name(rng), sub(rng), sub(rng)),
        5 => Expr::Lam { param: name(rng), ty: small_ty(rng), body: sub(rng) },
        6 => Expr::App(sub(rng), sub(rng)),
        7 => Expr::If(sub(rng), sub(rng), sub(rng)),
        8 => Expr::Inj { left: rng.gen(), other: small_ty(rng), body: sub(rng) },
        9 => Expr::Case { scrut: sub(rng), left: (name(rng), sub(rng)), right: (name(rng), sub(rng)) },
        10 => Expr::The(small_ty(rng), sub(rng)),
        11 => Expr::Fix { name: name(rng), ty: small_ty(rng), body: sub(rng) },
        _ => {
            let c = [Const::Iadd, Const::ChanClose, Const::ChanSend, Const::Chan2Cut, Const::ThreadCreate].choose(rng).unwrap().clone();
            let args = (0..c.arity()).map(|_| random_expr(rng, d)).collect();
            Expr::Call(c, args)
        }
    }
}

/// Writes the code one party runs on endpoint `ep` until the protocol ends.
struct PartyGen<'r, R> {
    rng: &'r mut R,
    roles: RoleSet,
    fresh: usize,
}

fn payload(p: Payload) -> &'static str {
    match p {
        Payload::Unit => "()",
        Payload::Int => "1",
        Payload::Str => "\"s\"",
    }
}

fn has_mconj(s: &SessionType) -> bool {
    match s {
        SessionType::MConj(..) => true,
        SessionType::Append(a, b) | SessionType::AConj(_, a, b) => has_mconj(a) || has_mconj(b),
        SessionType::Option(_, a) | SessionType::Repseq(_, a) | SessionType::Repeat(_, a) => has_mconj(a),
        _ => false,
    }
}

impl<R: Rng> PartyGen<'_, R> {
    fn var(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    fn chan(&self, s: &SessionType) -> String {
        format!("(chan {} \"{}\")", self.roles, s)
    }

    /// `give_back` ends the code with the finished endpoint paired with unit
    /// instead of closing it, as the body of an append must.
    fn walk(&mut self, s: &SessionType, ep: &str, give_back: bool) -> String {
        let s = normalize(s);
        let x = self.var();
        match &s {
            SessionType::Nil if give_back => format!("(pair () {ep})"),
            SessionType::Nil => format!("(chan_close {ep})"),
            SessionType::MConj(k, a, b) => {
                let y = self.var();
                if self.roles.contains(*k) {
                    let kb = self.walk(b, &y, false);
                    let ka = self.walk(a, &x, give_back);
                    format!("(letp ({x} {y}) (chan_mconj {ep}) (seq (thread_create (lam (u unit) {kb})) {ka}))")
                } else {
                    let left = self.rng.gen_bool(0.5);
                    let (keep, give) = if left { (a, b) } else { (b, a) };
                    let kg = self.walk(give, &y, false);
                    let kk = self.walk(keep, &x, give_back);
                    let side = if left { "l" } else { "r" };
                    format!("(let {x} (chan_mdisj_{side} {ep} (lam ({y} {}) {kg})) {kk})", self.chan(&normalize(give)))
                }
            }
            SessionType::Append(a, b) if !matches!(**a, SessionType::Append(..)) && !has_mconj(a) && self.rng.gen_bool(0.4) => {
                let (y, w) = (self.var(), self.var());
                let body = self.walk(a, &y, true);
                let rest = self.walk(b, &x, give_back);
                format!("(letp ({w} {x}) (chan_append {ep} (lam ({y} {}) {body})) {rest})", self.chan(a))
            }
            _ => match head(&s).clone() {
                SessionType::Msg { from, to, payload: p, .. } => {
                    let next = advance_atom(&s);
                    let k = self.walk(&next, &x, give_back);
                    if self.roles.contains(from) && !self.roles.contains(to) {
                        format!("(let {x} (chan_send {ep} {}) {k})", payload(p))
                    } else if self.roles.contains(to) && !self.roles.contains(from) {
                        let v = self.var();
                        format!("(letp ({v} {x}) (chan_recv {ep}) {k})")
                    } else {
                        format!("(let {x} (chan_sync {ep}) {k})")
                    }
                }
                SessionType::Bcast { from, payload: p, .. } => {
                    let next = advance_atom(&s);
                    let k = self.walk(&next, &x, give_back);
                    if self.roles.contains(from) {
                        format!("(let {x} (chan_send {ep} {}) {k})", payload(p))
                    } else {
                        let v = self.var();
                        format!("(letp ({v} {x}) (chan_recv {ep}) {k})")
                    }
                }
                SessionType::AConj(k, ..) => {
                    let y = self.var();
                    let kl = self.walk(&choose_branch(&s, true), &x, give_back);
                    let kr = self.walk(&choose_branch(&s, false), &y, give_back);
                    if self.roles.contains(k) {
                        format!("(if (ieq (randbit) 0) (let {x} (chan_aconj_l {ep}) {kl}) (let {y} (chan_aconj_r {ep}) {kr}))")
                    } else {
                        format!("(case (chan_adisj {ep}) ({x} {kl}) ({y} {kr}))")
                    }
                }
                h => panic!("no party code for {h}"),
            },
        }
    }
}

fn finite(s: &SessionType) -> bool {
    match s {
        SessionType::Repseq(..) | SessionType::Repeat(..) | SessionType::Gather { .. } => false,
        SessionType::Append(a, b) | SessionType::AConj(_, a, b) | SessionType::MConj(_, a, b) => finite(a) && finite(b),
        SessionType::Option(_, a) => finite(a),
        _ => true,
    }
}

/// A random protocol without loops.
pub fn random_finite_session<R: Rng>(rng: &mut R, n: usize, depth: usize) -> SessionType {
    loop {
        let s = random_session(rng, n, depth);
        if finite(&s) {
            return s;
        }
    }
}

/// One term that plays every role of `s` in its own thread: the last role
/// is forked off by `chan_create`, the middle ones are split off the main
/// endpoint, and the main thread plays role 0.
pub fn party_program<R: Rng>(rng: &mut R, n: usize, s: &SessionType) -> Expr {
    let mut fresh = 0;
    let mut party = |rng: &mut R, role: usize, ep: &str| {
        let mut g = PartyGen { rng, roles: RoleSet::singleton(role), fresh };
        let code = g.walk(s, ep, false);
        fresh = g.fresh;
        code
    };
    let mut term = party(rng, 0, "c");
    for role in 1..n - 1 {
        let code = party(rng, role, "d");
        term = format!("(let c (chan_split c (lam (d (chan {{{role}}} \"{s}\")) {code})) {term})");
    }
    let code = party(rng, n - 1, "d");
    let term = format!("(let c (chan_create (lam (d (chan {{{}}} \"{s}\")) {code})) {term})", n - 1);
    parse_expr(&term).unwrap_or_else(|e| panic!("{e} in {term}"))
}

/// Arithmetic and control flow only.
pub fn pure_program<R: Rng>(rng: &mut R) -> Expr {
    let a = rng.gen_range(0..20);
    let b = rng.gen_range(0..20);
    let src = match rng.gen_range(0..4) {
        0 => format!("(iadd {a} (imul {b} 2))"),
        1 => format!("(if (ilt {a} {b}) (pair {a} true) (pair {b} false))"),
        2 => format!("(app (fix (f (-> int int)) (lam (n int) (if (ilt n 1) 0 (iadd n (app f (isub n 1)))))) {a})"),
        _ => format!("(case (if (ieq (randbit) 0) (inl int {a}) (inr (int {a}) {b})) (x (isub x 1)) (y (iadd y 1)))"),
    };
    parse_expr(&src).unwrap()
}

pub fn sig_nil(k: usize) -> BTreeMap<usize, Ty> {
    (0..k).map(|n| (n, Ty::chan(RoleSet::singleton(0), &SessionType::Nil))).collect()
}

#[derive(Debug)]
enum Sx {
    Atom(String),
    List(Vec<Sx>),
}

/// Reads printed terms back without going through the term parser.
fn read(tokens: &mut std::iter::Peekable<std::vec::IntoIter<String>>) -> Sx {
    let t = tokens.next().unwrap();
    if t == "(" {
        let mut items = Vec::new();
        while tokens.peek().map(String::as_str) != Some(")") {
            items.push(read(tokens));
        }
        tokens.next();
        Sx::List(items)
    } else {
        Sx::Atom(t)
    }
}

fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' | ')' => out.push(c.to_string()),
            '"' => {
                let mut t = String::from('"');
                while let Some(c) = chars.next() {
                    t.push(c);
                    if c == '\\' {
                        t.push(chars.next().unwrap());
                    } else if c == '"' {
                        break;
                    }
                }
                out.push(t);
            }
            c if c.is_whitespace() => {}
            c => {
                let mut t = c.to_string();
                let close = if c == '{' { Some('}') } else { None };
                while let Some(&d) = chars.peek() {
                    if close.is_none() && (d.is_whitespace() || d == '(' || d == ')') {
                        break;
                    }
                    t.push(d);
                    chars.next();
                    if Some(d) == close {
                        break;
                    }
                }
                out.push(t);
            }
        }
    }
    out
}

/// Resource count straight from the printed form: a conditional counts its
/// test and its first branch, a case its scrutinee and its first arm.
fn oracle(sx: &Sx, out: &mut BTreeMap<usize, usize>) {
    let Sx::List(items) = sx else { return };
    match items.first() {
        Some(Sx::Atom(h)) if h == "rc" => {
            let Sx::Atom(n) = &items[1] else { panic!() };
            *out.entry(n.parse().unwrap()).or_default() += 1;
        }
        Some(Sx::Atom(h)) if h == "if" || h == "case" => {
            for (k, item) in items.iter().enumerate() {
                if k != 3 {
                    oracle(item, out);
                }
            }
        }
        _ => items.iter().for_each(|i| oracle(i, out)),
    }
}

pub fn oracle_rho(e: &Expr) -> BTreeMap<usize, usize> {
    let mut tokens = tokenize(&e.to_string()).into_iter().peekable();
    let mut out = BTreeMap::new();
    oracle(&read(&mut tokens), &mut out);
    out
}

pub fn bag(e: &Expr) -> BTreeMap<usize, usize> {
    let r = rho(e);
    r.support().map(|n| (n, r.count(n))).collect()
}
