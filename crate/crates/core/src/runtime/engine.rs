//! Thread pool, scheduler and the forwarders behind the cut primitives.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::cursor::head;
use super::net::{Counters, Net, Op, Reply};
use super::script::{Block, Cmd, Operand, Script, ServiceDecl, PARTY_VAR};
use super::{ChanId, EpId, Event, Observation, Rule, RuntimeError, Side, Tid, Value};
use crate::roles::{RoleSet, Universe};
use crate::session::{coherence_check, EndpointType, SessionType};

/// How the scheduler resolves a choice between enabled steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TieBreak {
    /// Round-robin over ready threads; with none ready, the lowest matching channel.
    Lowest,
    /// Uniform over every enabled step, ready threads and matching channels alike.
    Seeded(u64),
    /// Take these option indices in order at each choice point, then behave as `Lowest`.
    Scripted(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub tie: TieBreak,
    pub max_steps: usize,
    pub allow_demo: bool,
    /// Seed for the coin host threads flip through [`HostCtx::random_bit`].
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config { tie: TieBreak::Lowest, max_steps: 100_000, allow_demo: false, seed: 0 }
    }
}

/// A thread whose local steps are computed outside the runtime, by a host
/// language interpreter for instance. The scheduler treats it like any
/// other thread: it runs it when ready and hands it the reply of the
/// primitive it blocked on.
pub trait HostThread: fmt::Debug {
    fn step(&mut self, ctx: &mut HostCtx<'_>) -> Result<HostStep, RuntimeError>;
    fn resume(&mut self, reply: Reply, ctx: &mut HostCtx<'_>) -> Result<(), RuntimeError>;
    fn clone_box(&self) -> Box<dyn HostThread>;
    fn as_any(&self) -> &dyn Any;
}

impl Clone for Box<dyn HostThread> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HostStep {
    Continue,
    Block(EpId, Op),
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Outcome {
    Completed,
    Deadlock { blocked: Vec<String> },
    Fault { tid: Option<Tid>, error: String },
    StepLimit,
}

#[derive(Debug, Clone, PartialEq)]
enum Binding {
    Ep(EpId),
    Val(Value),
    Consumed,
}

#[derive(Debug, Clone)]
enum FrameKind {
    Seq,
    Loop,
    Repeat(usize),
    Append(String),
}

#[derive(Debug, Clone)]
struct Frame {
    block: Block,
    pc: usize,
    kind: FrameKind,
}

#[derive(Debug, Clone)]
enum Resume {
    Nothing,
    Bind(String),
    Branch(Block, Block),
    Pair { old: String, left: String, right: String },
    Disj { old: String, keep: String, give: String, body: Block },
    Forward(usize),
    Host,
}

#[derive(Debug, Clone)]
enum State {
    Ready,
    Blocked { ep: EpId, op: Op, resume: Resume },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FwdStep {
    Recv,
    Send,
    Sync,
    Offer,
    Choose,
    MConj,
    MDisj,
}

/// Relays a channel merged by a cut. It holds one endpoint per cut channel,
/// all at the same cursor, and for each head it takes part on the channel
/// the action comes from before repeating it on the others.
#[derive(Debug, Clone)]
struct Forwarder {
    eps: Vec<EpId>,
    plan: VecDeque<(usize, FwdStep)>,
    carry: Option<Value>,
    tag: Option<Side>,
    parts: Vec<Option<(EpId, EpId)>>,
}

#[derive(Debug, Clone)]
enum Program {
    Script { frames: Vec<Frame>, env: BTreeMap<String, Binding> },
    Forward(Forwarder),
    Host(Box<dyn HostThread>),
}

#[derive(Debug, Clone)]
struct Thread {
    program: Program,
    state: State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Service {
    pub roles: RoleSet,
    pub session: SessionType,
    pub var: String,
    pub body: Block,
}

#[derive(Debug, Clone)]
pub struct Pool {
    pub net: Net,
    threads: BTreeMap<Tid, Thread>,
    services: BTreeMap<String, Service>,
    next_tid: Tid,
    config: Config,
    rng: ChaCha8Rng,
    coin: ChaCha8Rng,
    scripted_at: usize,
    round_robin: Tid,
    steps: usize,
    counters: Vec<Counters>,
    outcome: Option<Outcome>,
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub outcome: Outcome,
    pub steps: usize,
    pub trace: Vec<Event>,
    pub observations: BTreeMap<(usize, String), Vec<Observation>>,
    /// Relaxedness counters before the first step and after each step.
    pub counters: Vec<Counters>,
}

impl RunReport {
    pub fn sync_events(&self) -> Vec<&Event> {
        self.trace.iter().filter(|e| e.is_sync()).collect()
    }

    /// Steps at which the pool was not relaxed.
    pub fn relaxed_violations(&self) -> Vec<(usize, Counters)> {
        self.counters.iter().enumerate().filter(|(_, c)| !c.relaxed()).map(|(k, c)| (k, *c)).collect()
    }

    /// Steps at which relaxedness held only because there were no endpoints.
    pub fn zero_convention_steps(&self) -> usize {
        self.counters.iter().filter(|c| c.zero_convention()).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}

fn seq_frame(block: Block) -> Frame {
    Frame { block, pc: 0, kind: FrameKind::Seq }
}

fn script_thread(block: Block, env: BTreeMap<String, Binding>) -> Thread {
    Thread { program: Program::Script { frames: vec![seq_frame(block)], env }, state: State::Ready }
}

fn endpoint_of(env: &BTreeMap<String, Binding>, var: &str) -> Result<EpId, RuntimeError> {
    match env.get(var) {
        Some(Binding::Ep(e)) => Ok(*e),
        Some(Binding::Consumed) => Err(RuntimeError::EndpointConsumed(var.into())),
        Some(Binding::Val(_)) => Err(RuntimeError::NotAnEndpoint(var.into())),
        None => Err(RuntimeError::Unbound(var.into())),
    }
}

impl Pool {
    /// A pool whose main thread runs `main`.
    pub fn new(universe: Universe, main: Block, services: &[ServiceDecl], config: Config) -> Pool {
        let seed = match config.tie {
            TieBreak::Seeded(s) => s,
            _ => 0,
        };
        let mut threads = BTreeMap::new();
        threads.insert(0, script_thread(main, BTreeMap::new()));
        let services = services
            .iter()
            .map(|s| {
                let svc = Service { roles: s.roles, session: s.session.clone(), var: s.var.clone(), body: s.body.clone() };
                (s.name.clone(), svc)
            })
            .collect();
        let coin = ChaCha8Rng::seed_from_u64(config.seed);
        let mut pool = Pool {
            net: Net::new(universe),
            threads,
            services,
            next_tid: 1,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            coin,
            scripted_at: 0,
            round_robin: 0,
            steps: 0,
            counters: Vec::new(),
            outcome: None,
        };
        pool.counters.push(pool.relaxed_counters());
        pool
    }

    /// A pool whose main thread is a host thread.
    pub fn with_host(universe: Universe, main: Box<dyn HostThread>, config: Config) -> Pool {
        let mut pool = Pool::new(universe, Rc::new(Vec::new()), &[], config);
        pool.threads.insert(0, Thread { program: Program::Host(main), state: State::Ready });
        pool
    }

    /// The host thread `tid`, finished or not.
    pub fn host(&self, tid: Tid) -> Option<&dyn HostThread> {
        match &self.threads.get(&tid)?.program {
            Program::Host(h) => Some(h.as_ref()),
            _ => None,
        }
    }

    /// Live host threads in id order.
    pub fn hosts(&self) -> impl Iterator<Item = (Tid, &dyn HostThread)> + '_ {
        self.threads.iter().filter_map(|(tid, t)| match &t.program {
            Program::Host(h) => Some((*tid, h.as_ref())),
            _ => None,
        })
    }

    /// A channel-free pool whose main thread creates one channel for
    /// `session` and hands one endpoint to each party: a create for the
    /// first party, a split for each further one, and the last party is
    /// played by the main thread itself.
    pub fn bootstrap(
        universe: Universe,
        session: &SessionType,
        parties: &[(RoleSet, Block)],
        services: &[ServiceDecl],
        config: Config,
    ) -> Result<Pool, RuntimeError> {
        let eps: Vec<EndpointType> = parties.iter().map(|(r, _)| EndpointType { roles: *r, session: session.clone() }).collect();
        coherence_check(&universe, &eps)?;
        session.validate(universe.size())?;
        let ch = PARTY_VAR.to_string();
        let (first, rest) = parties.split_first().ok_or(RuntimeError::Session(crate::session::SessionError::NotPartition))?;
        let mut main = vec![Cmd::Create {
            var: ch.clone(),
            roles: first.0,
            session: session.clone(),
            give: ch.clone(),
            body: first.1.clone(),
        }];
        match rest.split_last() {
            None => main.push(Cmd::Cut1(ch)),
            Some((last, middle)) => {
                for (r, b) in middle {
                    main.push(Cmd::Split { ep: ch.clone(), roles: *r, give: ch.clone(), body: b.clone() });
                }
                main.extend(last.1.iter().cloned());
            }
        }
        Ok(Pool::new(universe, Rc::new(main), services, config))
    }

    /// Builds a pool from a script: its parties play `session`, or its main runs as is.
    pub fn from_script(
        universe: Universe,
        script: &Script,
        session: Option<&SessionType>,
        config: Config,
    ) -> Result<Pool, RuntimeError> {
        match (&script.main, session) {
            (Some(main), _) => Ok(Pool::new(universe, main.clone(), &script.services, config)),
            (None, Some(s)) => Pool::bootstrap(universe, s, &script.parties, &script.services, config),
            (None, None) => Err(RuntimeError::Unbound("session".into())),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    fn forwarders(&self) -> BTreeSet<Tid> {
        self.threads.iter().filter(|(_, t)| matches!(t.program, Program::Forward(_))).map(|(k, _)| *k).collect()
    }

    pub fn relaxed_counters(&self) -> Counters {
        self.net.counters(&self.forwarders())
    }

    pub fn relaxed(&self) -> bool {
        self.relaxed_counters().relaxed()
    }

    fn alloc_tid(&mut self) -> Tid {
        self.next_tid += 1;
        self.next_tid - 1
    }

    fn spawn(&mut self, tid: Tid, block: Block, env: BTreeMap<String, Binding>) -> Result<(), RuntimeError> {
        for b in env.values() {
            if let Binding::Ep(e) = b {
                self.net.transfer(*e, tid)?;
            }
        }
        self.threads.insert(tid, script_thread(block, env));
        Ok(())
    }

    fn spawn_forwarder(&mut self, eps: Vec<EpId>) -> Result<Tid, RuntimeError> {
        let tid = self.alloc_tid();
        for e in &eps {
            self.net.transfer(*e, tid)?;
        }
        let n = eps.len();
        let f = Forwarder { eps, plan: VecDeque::new(), carry: None, tag: None, parts: vec![None; n] };
        self.threads.insert(tid, Thread { program: Program::Forward(f), state: State::Ready });
        Ok(tid)
    }

    fn pick(&mut self, options: usize) -> Option<usize> {
        match &self.config.tie {
            TieBreak::Scripted(list) if self.scripted_at < list.len() && options > 1 => {
                let k = list[self.scripted_at] % options;
                self.scripted_at += 1;
                Some(k)
            }
            TieBreak::Seeded(_) => Some(self.rng.gen_range(0..options)),
            _ => None,
        }
    }

    fn pending(&self) -> (BTreeMap<EpId, Op>, BTreeMap<EpId, Tid>) {
        let mut ops = BTreeMap::new();
        let mut owners = BTreeMap::new();
        for (tid, t) in &self.threads {
            if let State::Blocked { ep, op, .. } = &t.state {
                ops.insert(*ep, op.clone());
                owners.insert(*ep, *tid);
            }
        }
        (ops, owners)
    }

    fn matching(&self) -> Vec<ChanId> {
        self.net.matching(&self.pending().0)
    }

    fn ready(&self) -> Vec<Tid> {
        self.threads.iter().filter(|(_, t)| matches!(t.state, State::Ready)).map(|(k, _)| *k).collect()
    }

    /// Runs one scheduler step. Returns the outcome once the run is over.
    pub fn step(&mut self) -> Option<Outcome> {
        if let Some(o) = &self.outcome {
            return Some(o.clone());
        }
        let ready = self.ready();
        let matching = if ready.is_empty() || matches!(self.config.tie, TieBreak::Seeded(_)) { self.matching() } else { Vec::new() };
        if ready.is_empty() && matching.is_empty() {
            let outcome = self.terminal();
            self.outcome = Some(outcome.clone());
            return Some(outcome);
        }
        if self.steps >= self.config.max_steps {
            self.outcome = Some(Outcome::StepLimit);
            return self.outcome.clone();
        }
        self.steps += 1;
        self.net.step = self.steps;
        let total = ready.len() + matching.len();
        let choice = self.pick(total);
        let result = match choice {
            Some(k) if k < ready.len() => self.exec(ready[k]).map_err(|e| (Some(ready[k]), e)),
            Some(k) => self.fire(matching[k - ready.len()]),
            None if !ready.is_empty() => {
                let t = ready.iter().copied().find(|t| *t >= self.round_robin).unwrap_or(ready[0]);
                self.round_robin = t + 1;
                self.exec(t).map_err(|e| (Some(t), e))
            }
            None => self.fire(matching[0]),
        };
        let result = result.and_then(|_| self.net.check_partitions().map_err(|e| (None, e)));
        self.counters.push(self.relaxed_counters());
        if let Err((tid, e)) = result {
            self.outcome = Some(Outcome::Fault { tid, error: e.to_string() });
            return self.outcome.clone();
        }
        None
    }

    fn terminal(&self) -> Outcome {
        let blocked: Vec<String> = self
            .threads
            .iter()
            .filter_map(|(tid, t)| match &t.state {
                State::Blocked { ep, op, .. } => {
                    let e = self.net.endpoints.get(ep);
                    let at = e.map(|e| format!("{} of {} at {}", e.roles, e.chan, head(&e.cursor))).unwrap_or_default();
                    Some(format!("thread {tid} blocked on {op:?} with {at}"))
                }
                _ => None,
            })
            .collect();
        if blocked.is_empty() {
            Outcome::Completed
        } else {
            Outcome::Deadlock { blocked }
        }
    }

    /// Runs until the pool completes, deadlocks, faults or hits the step limit.
    pub fn run(mut self) -> RunReport {
        let outcome = loop {
            if let Some(o) = self.step() {
                break o;
            }
        };
        self.report(outcome)
    }

    /// The report of a pool driven step by step.
    pub fn report(self, outcome: Outcome) -> RunReport {
        RunReport {
            outcome,
            steps: self.steps,
            trace: self.net.trace,
            observations: self.net.observations,
            counters: self.counters,
        }
    }

    fn fire(&mut self, chan: ChanId) -> Result<(), (Option<Tid>, RuntimeError)> {
        let (ops, owners) = self.pending();
        let forwarders = self.forwarders();
        let (idx, replies) = self.net.fire(chan, &ops, &forwarders).map_err(|e| (None, e))?;
        for (ep, reply) in replies {
            let tid = owners[&ep];
            self.resume(tid, reply, idx).map_err(|e| (Some(tid), e))?;
        }
        Ok(())
    }

    fn resume(&mut self, tid: Tid, reply: Reply, event: usize) -> Result<(), RuntimeError> {
        let mut th = self.threads.remove(&tid).expect("blocked thread exists");
        let State::Blocked { resume, .. } = std::mem::replace(&mut th.state, State::Ready) else {
            unreachable!("only blocked threads are resumed")
        };
        let outcome = self.apply_reply(tid, &mut th, resume, reply, event);
        self.threads.insert(tid, th);
        outcome
    }

    fn apply_reply(&mut self, tid: Tid, th: &mut Thread, resume: Resume, reply: Reply, event: usize) -> Result<(), RuntimeError> {
        match (&mut th.program, resume, reply) {
            (Program::Script { env, .. }, Resume::Bind(v), Reply::Value(x)) => {
                env.insert(v, Binding::Val(x));
            }
            (Program::Script { frames, .. }, Resume::Branch(l, r), Reply::Tag(side)) => {
                frames.push(seq_frame(if side == Side::Left { l } else { r }));
            }
            (Program::Script { env, .. }, Resume::Pair { old, left, right }, Reply::Pair(a, b)) => {
                env.insert(old, Binding::Consumed);
                env.insert(left, Binding::Ep(a));
                env.insert(right, Binding::Ep(b));
            }
            (Program::Script { env, .. }, Resume::Disj { old, keep, give, body }, Reply::Disj { keep: k, give: g }) => {
                env.insert(old, Binding::Consumed);
                env.insert(keep, Binding::Ep(k));
                let child = self.alloc_tid();
                self.spawn(child, body, BTreeMap::from([(give, Binding::Ep(g))]))?;
                self.net.trace[event].spawned.push(child);
            }
            (Program::Forward(f), Resume::Forward(k), reply) => match reply {
                Reply::Value(v) => f.carry = Some(v),
                Reply::Tag(s) => f.tag = Some(s),
                Reply::Pair(a, b) => f.parts[k] = Some((a, b)),
                Reply::Disj { keep, give } => {
                    let mut kept = Vec::new();
                    let mut given = Vec::new();
                    for (j, part) in f.parts.iter().enumerate() {
                        if j == k {
                            kept.push(keep);
                            given.push(give);
                        } else {
                            let (a, b) = part.expect("other halves split before the mdisj");
                            kept.push(a);
                            given.push(b);
                        }
                    }
                    f.eps = kept;
                    f.parts = vec![None; f.eps.len()];
                    let child = self.spawn_forwarder(given)?;
                    self.net.trace[event].spawned.push(child);
                }
                Reply::Unit => {}
            },
            (Program::Host(h), Resume::Host, reply) => {
                let mut ctx = HostCtx { pool: self, tid, event: Some(event) };
                h.resume(reply, &mut ctx)?;
            }
            (_, _, Reply::Unit) | (_, Resume::Nothing, _) => {}
            (_, resume, reply) => unreachable!("thread {tid}: reply {reply:?} does not fit {resume:?}"),
        }
        Ok(())
    }

    fn exec(&mut self, tid: Tid) -> Result<(), RuntimeError> {
        let mut th = self.threads.remove(&tid).expect("ready thread exists");
        let result = match &mut th.program {
            Program::Script { .. } => self.exec_script(tid, &mut th),
            Program::Forward(_) => self.exec_forward(tid, &mut th),
            Program::Host(_) => self.exec_host(tid, &mut th),
        };
        match th.state {
            State::Done if tid != 0 => {
                let ev = self.net.event(Rule::PR2, "exit");
                ev.tid = Some(tid);
            }
            _ => {
                self.threads.insert(tid, th);
            }
        }
        result
    }

    fn finish(&mut self, tid: Tid, env: &mut BTreeMap<String, Binding>) -> Result<(), RuntimeError> {
        for (var, b) in env.iter_mut() {
            if let Binding::Ep(e) = *b {
                let cursor = self.net.endpoint(e)?.full_cursor();
                if cursor != SessionType::Nil {
                    return Err(RuntimeError::EndpointLeaked { tid, var: var.clone(), cursor: cursor.to_string() });
                }
                self.net.close(e)?;
                *b = Binding::Consumed;
            }
        }
        Ok(())
    }

    fn exec_script(&mut self, tid: Tid, th: &mut Thread) -> Result<(), RuntimeError> {
        let Program::Script { frames, env } = &mut th.program else { unreachable!() };
        let Some(frame) = frames.last_mut() else {
            self.finish(tid, env)?;
            th.state = State::Done;
            return Ok(());
        };
        if frame.pc >= frame.block.len() {
            match &mut frame.kind {
                FrameKind::Seq => {
                    frames.pop();
                }
                FrameKind::Loop => frame.pc = 0,
                FrameKind::Repeat(0) => {
                    frames.pop();
                }
                FrameKind::Repeat(n) => {
                    *n -= 1;
                    frame.pc = 0;
                }
                FrameKind::Append(var) => {
                    let ep = endpoint_of(env, var)?;
                    self.net.append_exit(ep)?;
                    frames.pop();
                }
            }
            return Ok(());
        }
        let cmd = frame.block[frame.pc].clone();
        frame.pc += 1;
        let block = |th: &mut Thread, ep, op, resume| {
            th.state = State::Blocked { ep, op, resume };
        };
        match cmd {
            Cmd::Sync(x) => {
                let ep = endpoint_of(env, &x)?;
                self.net.check_op(ep, &Op::Sync)?;
                block(th, ep, Op::Sync, Resume::Nothing);
            }
            Cmd::Send(x, operand) => {
                let ep = endpoint_of(env, &x)?;
                let v = match operand {
                    Some(Operand::Lit(v)) => v,
                    Some(Operand::Var(name)) => match env.get(&name) {
                        Some(Binding::Val(v)) => v.clone(),
                        Some(_) => return Err(RuntimeError::NotAnEndpoint(name)),
                        None => return Err(RuntimeError::Unbound(name)),
                    },
                    None => match head(&self.net.endpoint(ep)?.cursor) {
                        SessionType::Msg { payload, .. } | SessionType::Bcast { payload, .. } | SessionType::Gather { payload, .. } => {
                            Value::default_for(*payload)
                        }
                        _ => Value::Unit,
                    },
                };
                let op = Op::Send(v);
                self.net.check_op(ep, &op)?;
                block(th, ep, op, Resume::Nothing);
            }
            Cmd::Recv(x, bind) => {
                let ep = endpoint_of(env, &x)?;
                self.net.check_op(ep, &Op::Recv)?;
                let resume = bind.map(Resume::Bind).unwrap_or(Resume::Nothing);
                block(th, ep, Op::Recv, resume);
            }
            Cmd::Choose(x, side) => {
                let ep = endpoint_of(env, &x)?;
                let op = Op::Choose(side);
                self.net.check_op(ep, &op)?;
                block(th, ep, op, Resume::Nothing);
            }
            Cmd::Offer(x, l, r) => {
                let ep = endpoint_of(env, &x)?;
                self.net.check_op(ep, &Op::Offer)?;
                block(th, ep, Op::Offer, Resume::Branch(l, r));
            }
            Cmd::MConj { ep: x, left, right } => {
                let ep = endpoint_of(env, &x)?;
                self.net.check_op(ep, &Op::MConj)?;
                block(th, ep, Op::MConj, Resume::Pair { old: x, left, right });
            }
            Cmd::MDisj { ep: x, side, keep, give, body } => {
                let ep = endpoint_of(env, &x)?;
                let op = Op::MDisj(side);
                self.net.check_op(ep, &op)?;
                block(th, ep, op, Resume::Disj { old: x, keep, give, body });
            }
            Cmd::Append(x, body) => {
                let ep = endpoint_of(env, &x)?;
                self.net.append_enter(ep)?;
                frames.push(Frame { block: body, pc: 0, kind: FrameKind::Append(x) });
            }
            Cmd::Split { ep: x, roles, give, body } => {
                let ep = endpoint_of(env, &x)?;
                let (child, part, rest) = self.split_off(tid, ep, roles)?;
                env.insert(x, Binding::Ep(rest));
                self.spawn(child, body, BTreeMap::from([(give, Binding::Ep(part))]))?;
            }
            Cmd::Cut1(x) => {
                let ep = endpoint_of(env, &x)?;
                self.net.cut1(ep)?;
                env.insert(x, Binding::Consumed);
            }
            Cmd::Cut2(a, b) => self.cut_vars(tid, env, &[a, b])?,
            Cmd::Cut3(a, b, c) => self.cut_vars(tid, env, &[a, b, c])?,
            Cmd::CutRes { a, b, residual } => {
                let (ea, eb) = (endpoint_of(env, &a)?, endpoint_of(env, &b)?);
                let res = self.cutres(tid, ea, eb)?;
                env.insert(a, Binding::Consumed);
                env.insert(b, Binding::Consumed);
                env.insert(residual, Binding::Ep(res));
            }
            Cmd::Create { var, roles, session, give, body } => {
                let co = self.net.universe.complement(roles);
                let (mine, child, theirs) = self.open(tid, co, roles, &session, "create")?;
                env.insert(var, Binding::Ep(mine));
                self.spawn(child, body, BTreeMap::from([(give, Binding::Ep(theirs))]))?;
            }
            Cmd::Request { var, service } => {
                let svc = self.services.get(&service).cloned().ok_or(RuntimeError::UnknownService(service))?;
                let co = self.net.universe.complement(svc.roles);
                let (mine, child, theirs) = self.open(tid, svc.roles, co, &svc.session, "request")?;
                env.insert(var, Binding::Ep(mine));
                self.spawn(child, svc.body, BTreeMap::from([(svc.var, Binding::Ep(theirs))]))?;
            }
            Cmd::Spawn { vars, body } => {
                let mut moved = BTreeMap::new();
                for v in vars {
                    match env.get(&v).cloned() {
                        Some(Binding::Ep(e)) => {
                            env.insert(v.clone(), Binding::Consumed);
                            moved.insert(v, Binding::Ep(e));
                        }
                        Some(Binding::Val(x)) => {
                            moved.insert(v, Binding::Val(x));
                        }
                        Some(Binding::Consumed) => return Err(RuntimeError::EndpointConsumed(v)),
                        None => return Err(RuntimeError::Unbound(v)),
                    }
                }
                let child = self.alloc_tid();
                self.spawn(child, body, moved)?;
                let ev = self.net.event(Rule::PR1, "spawn");
                ev.tid = Some(tid);
                ev.spawned = vec![child];
            }
            Cmd::Close(x) => {
                let ep = endpoint_of(env, &x)?;
                self.net.close(ep)?;
                env.insert(x, Binding::Consumed);
            }
            Cmd::Repeat(0, _) => {}
            Cmd::Repeat(n, body) => frames.push(Frame { block: body, pc: 0, kind: FrameKind::Repeat(n - 1) }),
            Cmd::Loop(body) => frames.push(Frame { block: body, pc: 0, kind: FrameKind::Loop }),
            Cmd::Break => loop {
                match frames.pop().map(|f| f.kind) {
                    Some(FrameKind::Loop) | Some(FrameKind::Repeat(_)) => break,
                    Some(FrameKind::Seq) => continue,
                    Some(FrameKind::Append(_)) | None => return Err(RuntimeError::StrayBreak),
                }
            },
            Cmd::Chan2 { vars, roles, sessions, gives, body } => {
                let (mine, child, theirs) = self.open_pair(tid, roles, &sessions)?;
                let mut child_env = BTreeMap::new();
                for k in 0..2 {
                    env.insert(vars[k].clone(), Binding::Ep(mine[k]));
                    child_env.insert(gives[k].clone(), Binding::Ep(theirs[k]));
                }
                self.spawn(child, body, child_env)?;
            }
        }
        Ok(())
    }

    /// A new channel between `tid`, playing `mine`, and a new thread playing
    /// `theirs`. Returns the caller's endpoint, the new thread and its endpoint.
    fn open(&mut self, tid: Tid, mine: RoleSet, theirs: RoleSet, session: &SessionType, action: &str) -> Result<(EpId, Tid, EpId), RuntimeError> {
        let child = self.alloc_tid();
        let (chan, eps) = self.net.create(&[(mine, tid), (theirs, child)], session)?;
        let ev = self.net.event(Rule::PR3, action);
        ev.chan = Some(chan.0);
        ev.tid = Some(tid);
        ev.spawned = vec![child];
        Ok((eps[0], child, eps[1]))
    }

    /// Two channels at once, both shared between `tid` and one new thread.
    /// The new thread gets `roles` on each.
    fn open_pair(&mut self, tid: Tid, roles: [RoleSet; 2], sessions: &[SessionType; 2]) -> Result<([EpId; 2], Tid, [EpId; 2]), RuntimeError> {
        if !self.config.allow_demo {
            return Err(RuntimeError::DemoDisabled);
        }
        let child = self.alloc_tid();
        let mut mine = [EpId(0); 2];
        let mut theirs = [EpId(0); 2];
        let mut chans = Vec::new();
        for k in 0..2 {
            let co = self.net.universe.complement(roles[k]);
            let (chan, eps) = self.net.create(&[(co, tid), (roles[k], child)], &sessions[k])?;
            mine[k] = eps[0];
            theirs[k] = eps[1];
            chans.push(chan.0);
        }
        let ev = self.net.event(Rule::PR3, "chan2");
        ev.tid = Some(tid);
        ev.channels = chans;
        ev.spawned = vec![child];
        Ok((mine, child, theirs))
    }

    /// Splits `part` off `ep` for a new thread. Returns the thread, its endpoint and the rest.
    fn split_off(&mut self, tid: Tid, ep: EpId, part: RoleSet) -> Result<(Tid, EpId, EpId), RuntimeError> {
        let child = self.alloc_tid();
        let chan = self.net.endpoint(ep)?.chan;
        let (part, rest) = self.net.split(ep, part, child)?;
        let ev = self.net.event(Rule::PR1, "split");
        ev.chan = Some(chan.0);
        ev.tid = Some(tid);
        ev.spawned = vec![child];
        Ok((child, part, rest))
    }

    fn cut_vars(&mut self, tid: Tid, env: &mut BTreeMap<String, Binding>, vars: &[String]) -> Result<(), RuntimeError> {
        let eps: Vec<EpId> = vars.iter().map(|v| endpoint_of(env, v)).collect::<Result<_, _>>()?;
        self.cut(tid, &eps)?;
        for v in vars {
            env.insert(v.clone(), Binding::Consumed);
        }
        Ok(())
    }

    /// A 2-cut or 3-cut: a forwarder takes over the endpoints.
    fn cut(&mut self, tid: Tid, eps: &[EpId]) -> Result<(), RuntimeError> {
        self.net.check_cut(eps, true)?;
        let f = self.spawn_forwarder(eps.to_vec())?;
        let ev = self.net.event(Rule::PR1, if eps.len() == 2 { "cut2" } else { "cut3" });
        ev.tid = Some(tid);
        ev.spawned = vec![f];
        Ok(())
    }

    /// A 2-cut with residual; returns the residual endpoint, held by `tid`.
    fn cutres(&mut self, tid: Tid, a: EpId, b: EpId) -> Result<EpId, RuntimeError> {
        self.net.check_cut(&[a, b], false)?;
        let fwd = self.alloc_tid();
        let (chan, res, internal) = self.net.residual(a, b, tid, fwd)?;
        self.next_tid -= 1;
        let f = self.spawn_forwarder(vec![a, b, internal])?;
        debug_assert_eq!(f, fwd);
        let ev = self.net.event(Rule::PR1, "cutres");
        ev.tid = Some(tid);
        ev.channels = vec![chan.0];
        ev.spawned = vec![f];
        Ok(res)
    }

    fn install_host(&mut self, tid: Tid, carry: &[EpId], h: Box<dyn HostThread>) -> Result<(), RuntimeError> {
        for e in carry {
            self.net.transfer(*e, tid)?;
        }
        self.threads.insert(tid, Thread { program: Program::Host(h), state: State::Ready });
        Ok(())
    }

    fn exec_host(&mut self, tid: Tid, th: &mut Thread) -> Result<(), RuntimeError> {
        let Program::Host(h) = &mut th.program else { unreachable!() };
        let mut ctx = HostCtx { pool: self, tid, event: None };
        match h.step(&mut ctx)? {
            HostStep::Continue => {}
            HostStep::Block(ep, op) => {
                self.net.check_op(ep, &op)?;
                th.state = State::Blocked { ep, op, resume: Resume::Host };
            }
            HostStep::Done => {
                // The main thread's result may keep endpoints alive.
                if tid != 0 {
                    let held: Vec<EpId> = self.net.endpoints.iter().filter(|(_, e)| e.holder == tid).map(|(k, _)| *k).collect();
                    for ep in held {
                        let cursor = self.net.endpoint(ep)?.full_cursor();
                        if cursor != SessionType::Nil {
                            return Err(RuntimeError::EndpointLeaked { tid, var: format!("#{}", ep.0), cursor: cursor.to_string() });
                        }
                        self.net.close(ep)?;
                    }
                }
                th.state = State::Done;
            }
        }
        Ok(())
    }

    fn exec_forward(&mut self, _tid: Tid, th: &mut Thread) -> Result<(), RuntimeError> {
        let Program::Forward(f) = &mut th.program else { unreachable!() };
        if f.plan.is_empty() {
            let cursor = self.net.endpoint(f.eps[0])?.full_cursor();
            if cursor == SessionType::Nil {
                for e in &f.eps {
                    self.net.close(*e)?;
                }
                th.state = State::Done;
                return Ok(());
            }
            let roles: Vec<RoleSet> = f.eps.iter().map(|e| self.net.endpoint(*e).map(|e| e.roles)).collect::<Result<_, _>>()?;
            let origin = |role: usize| roles.iter().position(|r| !r.contains(role));
            let h = head(&cursor).clone();
            let cannot = || RuntimeError::CannotForward(h.to_string());
            f.carry = None;
            f.tag = None;
            match &h {
                SessionType::Msg { from, to, .. } => {
                    let i = origin(*from).ok_or_else(cannot)?;
                    f.plan.push_back((i, if roles[i].contains(*to) { FwdStep::Recv } else { FwdStep::Sync }));
                    for (j, r) in roles.iter().enumerate().filter(|(j, _)| *j != i) {
                        f.plan.push_back((j, if r.contains(*to) { FwdStep::Sync } else { FwdStep::Send }));
                    }
                }
                SessionType::Bcast { from, .. } => {
                    let i = origin(*from).ok_or_else(cannot)?;
                    f.plan.push_back((i, if roles[i].is_empty() { FwdStep::Sync } else { FwdStep::Recv }));
                    for j in (0..roles.len()).filter(|j| *j != i) {
                        f.plan.push_back((j, FwdStep::Send));
                    }
                }
                SessionType::AConj(r, ..) => {
                    let i = origin(*r).ok_or_else(cannot)?;
                    f.plan.push_back((i, FwdStep::Offer));
                    for j in (0..roles.len()).filter(|j| *j != i) {
                        f.plan.push_back((j, FwdStep::Choose));
                    }
                }
                SessionType::MConj(r, ..) => {
                    let i = origin(*r).ok_or_else(cannot)?;
                    for j in (0..roles.len()).filter(|j| *j != i) {
                        f.plan.push_back((j, FwdStep::MConj));
                    }
                    f.plan.push_back((i, FwdStep::MDisj));
                }
                _ => return Err(cannot()),
            }
        }
        let (k, step) = f.plan.pop_front().expect("plan is not empty");
        let ep = f.eps[k];
        let op = match step {
            FwdStep::Recv => Op::Recv,
            FwdStep::Sync => Op::Sync,
            FwdStep::Send => Op::Send(match f.carry.clone() {
                Some(v) => v,
                None => match head(&self.net.endpoint(ep)?.cursor) {
                    SessionType::Msg { payload, .. } | SessionType::Bcast { payload, .. } => Value::default_for(*payload),
                    _ => Value::Unit,
                },
            }),
            FwdStep::Offer => Op::Offer,
            FwdStep::Choose => Op::Choose(f.tag.expect("offer precedes choose")),
            FwdStep::MConj => Op::MConj,
            FwdStep::MDisj => Op::MDisj(Side::Left),
        };
        self.net.check_op(ep, &op)?;
        th.state = State::Blocked { ep, op, resume: Resume::Forward(k) };
        Ok(())
    }
}

/// What a host thread may do to the pool during one of its steps.
pub struct HostCtx<'a> {
    pool: &'a mut Pool,
    tid: Tid,
    /// The event whose reply is being delivered, if any.
    event: Option<usize>,
}

impl HostCtx<'_> {
    pub fn tid(&self) -> Tid {
        self.tid
    }

    pub fn net(&self) -> &Net {
        &self.pool.net
    }

    pub fn universe(&self) -> &Universe {
        &self.pool.net.universe
    }

    pub fn random_bit(&mut self) -> bool {
        self.pool.coin.gen_bool(0.5)
    }

    /// A new channel where the caller plays `mine` and a new thread, built
    /// from its endpoint, plays the complement and also takes `carry`.
    pub fn create(
        &mut self,
        mine: RoleSet,
        session: &SessionType,
        carry: &[EpId],
        child: impl FnOnce(EpId) -> Box<dyn HostThread>,
    ) -> Result<EpId, RuntimeError> {
        self.open(mine, session, carry, "create", child)
    }

    /// Like [`HostCtx::create`], logged as a service request.
    pub fn request(
        &mut self,
        mine: RoleSet,
        session: &SessionType,
        carry: &[EpId],
        child: impl FnOnce(EpId) -> Box<dyn HostThread>,
    ) -> Result<EpId, RuntimeError> {
        self.open(mine, session, carry, "request", child)
    }

    fn open(
        &mut self,
        mine: RoleSet,
        session: &SessionType,
        carry: &[EpId],
        action: &str,
        child: impl FnOnce(EpId) -> Box<dyn HostThread>,
    ) -> Result<EpId, RuntimeError> {
        let theirs = self.pool.net.universe.complement(mine);
        let (ep, tid, given) = self.pool.open(self.tid, mine, theirs, session, action)?;
        self.pool.install_host(tid, carry, child(given))?;
        Ok(ep)
    }

    /// Two channels shared with one new thread, which plays `theirs` on
    /// each. Only available with `allow_demo`.
    pub fn create_pair(
        &mut self,
        theirs: [RoleSet; 2],
        sessions: &[SessionType; 2],
        carry: &[EpId],
        child: impl FnOnce([EpId; 2]) -> Box<dyn HostThread>,
    ) -> Result<[EpId; 2], RuntimeError> {
        let (mine, tid, given) = self.pool.open_pair(self.tid, theirs, sessions)?;
        self.pool.install_host(tid, carry, child(given))?;
        Ok(mine)
    }

    /// Starts a new thread holding `carry`. During a reply the thread is
    /// credited to the event being delivered.
    pub fn spawn(&mut self, carry: &[EpId], child: Box<dyn HostThread>) -> Result<Tid, RuntimeError> {
        let tid = self.pool.alloc_tid();
        self.pool.install_host(tid, carry, child)?;
        match self.event {
            Some(k) => self.pool.net.trace[k].spawned.push(tid),
            None => {
                let ev = self.pool.net.event(Rule::PR1, "spawn");
                ev.tid = Some(self.tid);
                ev.spawned = vec![tid];
            }
        }
        Ok(tid)
    }

    /// Splits `part` off `ep` for a new thread that also takes `carry`; returns the rest.
    pub fn split(
        &mut self,
        ep: EpId,
        part: RoleSet,
        carry: &[EpId],
        child: impl FnOnce(EpId) -> Box<dyn HostThread>,
    ) -> Result<EpId, RuntimeError> {
        let (tid, given, rest) = self.pool.split_off(self.tid, ep, part)?;
        self.pool.install_host(tid, carry, child(given))?;
        Ok(rest)
    }

    pub fn cut1(&mut self, ep: EpId) -> Result<(), RuntimeError> {
        self.pool.net.cut1(ep)
    }

    pub fn close(&mut self, ep: EpId) -> Result<(), RuntimeError> {
        self.pool.net.close(ep)
    }

    /// A 2-cut or 3-cut over `eps`.
    pub fn cut(&mut self, eps: &[EpId]) -> Result<(), RuntimeError> {
        self.pool.cut(self.tid, eps)
    }

    pub fn cutres(&mut self, a: EpId, b: EpId) -> Result<EpId, RuntimeError> {
        self.pool.cutres(self.tid, a, b)
    }

    pub fn append_enter(&mut self, ep: EpId) -> Result<(), RuntimeError> {
        self.pool.net.append_enter(ep)
    }

    pub fn append_exit(&mut self, ep: EpId) -> Result<(), RuntimeError> {
        self.pool.net.append_exit(ep)
    }
}

/// Result of exploring every order in which simultaneously matching channels can fire.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExploreReport {
    pub runs: usize,
    pub completed: usize,
    pub deadlocked: usize,
    pub faulted: usize,
    /// The run cap was reached before every order was tried.
    pub truncated: bool,
}

/// Depth-first search over firing orders. Local steps run round-robin,
/// which does not affect what can fire since they touch only the stepping
/// thread's own endpoints. `visit` sees the report of every finished run.
pub fn explore(pool: &Pool, max_runs: usize, visit: &mut dyn FnMut(&RunReport)) -> ExploreReport {
    let mut report = ExploreReport::default();
    let mut stack = vec![pool.clone()];
    while let Some(mut p) = stack.pop() {
        if report.runs >= max_runs {
            report.truncated = true;
            break;
        }
        p.config.tie = TieBreak::Lowest;
        let outcome = loop {
            if p.outcome.is_none() && p.ready().is_empty() {
                let m = p.matching();
                if m.len() > 1 {
                    for c in m.iter().rev() {
                        let mut q = p.clone();
                        q.steps += 1;
                        q.net.step = q.steps;
                        let r = q.fire(*c).and_then(|_| q.net.check_partitions().map_err(|e| (None, e)));
                        q.counters.push(q.relaxed_counters());
                        if let Err((tid, e)) = r {
                            q.outcome = Some(Outcome::Fault { tid, error: e.to_string() });
                        }
                        stack.push(q);
                    }
                    break None;
                }
            }
            if let Some(o) = p.step() {
                break Some(o);
            }
        };
        if let Some(o) = outcome {
            report.runs += 1;
            match o {
                Outcome::Completed => report.completed += 1,
                Outcome::Deadlock { .. } => report.deadlocked += 1,
                _ => report.faulted += 1,
            }
            visit(&p.report(o));
        }
    }
    report
}
