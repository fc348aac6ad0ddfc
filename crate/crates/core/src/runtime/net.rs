//! The channel table: endpoints, their cursors and holders, and the firing
//! of matching sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::cursor::{advance_atom, choose_branch, head, normalize};
use super::{ChanId, EpId, Event, Observation, Rule, RuntimeError, Side, Tid, Value};
use crate::roles::{RoleSet, Universe};
use crate::session::SessionType;

#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub chan: ChanId,
    pub roles: RoleSet,
    pub cursor: SessionType,
    pub holder: Tid,
    /// Which half was taken at each multiplicative split, from the channel's creation.
    pub lineage: String,
    /// Continuations saved by explicit appends, innermost last.
    pub rests: Vec<SessionType>,
}

impl Endpoint {
    /// The cursor with every saved continuation put back.
    pub fn full_cursor(&self) -> SessionType {
        let full = self.rests.iter().rev().fold(self.cursor.clone(), |acc, r| SessionType::append(acc, r.clone()));
        normalize(&full)
    }
}

/// A blocking primitive on one endpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Sync,
    Send(Value),
    Recv,
    Choose(Side),
    Offer,
    MConj,
    /// `Left` keeps the first half and hands the second to a new thread.
    MDisj(Side),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Sync => "sync",
            Op::Send(_) => "send",
            Op::Recv => "recv",
            Op::Choose(_) => "choose",
            Op::Offer => "offer",
            Op::MConj => "mconj",
            Op::MDisj(Side::Left) => "mdisj_l",
            Op::MDisj(Side::Right) => "mdisj_r",
        }
    }
}

/// What a blocked primitive returns once its channel fires.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Unit,
    Value(Value),
    Tag(Side),
    Pair(EpId, EpId),
    Disj { keep: EpId, give: EpId },
}

/// The quantities in the relaxedness inequality. Channels joined by a
/// forwarder count as one, and endpoints held by forwarders are internal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub holders: usize,
    pub chans: usize,
    pub endpts: usize,
}

impl Counters {
    /// `holders + chans >= endpts + 1`, taken to hold when there are no endpoints.
    pub fn relaxed(&self) -> bool {
        self.endpts == 0 || self.holders + self.chans > self.endpts
    }

    pub fn zero_convention(&self) -> bool {
        self.endpts == 0
    }
}

#[derive(Debug, Clone)]
pub struct Net {
    pub universe: Universe,
    pub endpoints: BTreeMap<EpId, Endpoint>,
    pub channels: BTreeMap<ChanId, BTreeSet<EpId>>,
    pub trace: Vec<Event>,
    /// Per role and channel lineage, in order.
    pub observations: BTreeMap<(usize, String), Vec<Observation>>,
    pub step: usize,
    next_chan: usize,
    next_ep: usize,
}

impl Net {
    pub fn new(universe: Universe) -> Net {
        Net {
            universe,
            endpoints: BTreeMap::new(),
            channels: BTreeMap::new(),
            trace: Vec::new(),
            observations: BTreeMap::new(),
            step: 0,
            next_chan: 0,
            next_ep: 0,
        }
    }

    pub fn endpoint(&self, ep: EpId) -> Result<&Endpoint, RuntimeError> {
        self.endpoints.get(&ep).ok_or(RuntimeError::DeadEndpoint(ep))
    }

    pub fn event(&mut self, rule: Rule, action: &str) -> &mut Event {
        self.trace.push(Event::new(self.step, rule, action));
        self.trace.last_mut().unwrap()
    }

    fn fresh_chan(&mut self) -> ChanId {
        self.next_chan += 1;
        ChanId(self.next_chan - 1)
    }

    fn add_endpoint(&mut self, chan: ChanId, roles: RoleSet, cursor: SessionType, holder: Tid, lineage: String) -> EpId {
        let id = EpId(self.next_ep);
        self.next_ep += 1;
        self.endpoints.insert(id, Endpoint { chan, roles, cursor, holder, lineage, rests: Vec::new() });
        self.channels.entry(chan).or_default().insert(id);
        id
    }

    fn remove_endpoint(&mut self, ep: EpId) -> Result<Endpoint, RuntimeError> {
        let e = self.endpoints.remove(&ep).ok_or(RuntimeError::DeadEndpoint(ep))?;
        if let Some(set) = self.channels.get_mut(&e.chan) {
            set.remove(&ep);
            if set.is_empty() {
                self.channels.remove(&e.chan);
            }
        }
        Ok(e)
    }

    /// A new channel with one endpoint per part; the parts must partition the universe.
    pub fn create(&mut self, parts: &[(RoleSet, Tid)], session: &SessionType) -> Result<(ChanId, Vec<EpId>), RuntimeError> {
        let roles: Vec<RoleSet> = parts.iter().map(|p| p.0).collect();
        if !self.universe.partition_check(&roles) {
            return Err(RuntimeError::CutSideCondition(format!("endpoint roles {roles:?} do not partition the universe")));
        }
        session.validate(self.universe.size())?;
        let chan = self.fresh_chan();
        let cursor = normalize(session);
        let eps = parts.iter().map(|(r, t)| self.add_endpoint(chan, *r, cursor.clone(), *t, String::new())).collect();
        Ok((chan, eps))
    }

    pub fn transfer(&mut self, ep: EpId, tid: Tid) -> Result<(), RuntimeError> {
        self.endpoints.get_mut(&ep).ok_or(RuntimeError::DeadEndpoint(ep))?.holder = tid;
        Ok(())
    }

    /// Splits `ep` into a `part` endpoint held by `taker` and the rest, kept by the old holder.
    pub fn split(&mut self, ep: EpId, part: RoleSet, taker: Tid) -> Result<(EpId, EpId), RuntimeError> {
        let e = self.endpoint(ep)?.clone();
        if !part.is_subset(e.roles) {
            return Err(RuntimeError::NotDisjointSplit { whole: e.roles, part });
        }
        self.remove_endpoint(ep)?;
        let a = self.add_endpoint(e.chan, part, e.full_cursor(), taker, e.lineage.clone());
        let b = self.add_endpoint(e.chan, e.roles.minus(part), e.cursor, e.holder, e.lineage);
        self.endpoints.get_mut(&b).expect("just added").rests = e.rests;
        Ok((a, b))
    }

    pub fn cut1(&mut self, ep: EpId) -> Result<(), RuntimeError> {
        let e = self.endpoint(ep)?;
        if !e.roles.is_empty() {
            return Err(RuntimeError::NonEmptyRoles(e.roles));
        }
        let e = self.remove_endpoint(ep)?;
        self.event(Rule::PR0, "cut1").chan = Some(e.chan.0);
        Ok(())
    }

    /// Disposes of an endpoint whose protocol is over.
    pub fn close(&mut self, ep: EpId) -> Result<(), RuntimeError> {
        let e = self.endpoint(ep)?;
        if e.cursor != SessionType::Nil || !e.rests.is_empty() {
            return Err(RuntimeError::ProtocolMismatch { op: "close".into(), head: e.full_cursor().to_string() });
        }
        let e = self.remove_endpoint(ep)?;
        let ev = self.event(Rule::PR0, "close");
        ev.chan = Some(e.chan.0);
        ev.tid = Some(e.holder);
        Ok(())
    }

    /// Enters an explicit `A@B` at the cursor: the cursor becomes `A` and `B` is saved.
    pub fn append_enter(&mut self, ep: EpId) -> Result<(), RuntimeError> {
        let e = self.endpoints.get_mut(&ep).ok_or(RuntimeError::DeadEndpoint(ep))?;
        match e.cursor.clone() {
            SessionType::Append(a, b) => {
                e.cursor = normalize(&a);
                e.rests.push(*b);
                Ok(())
            }
            other => Err(RuntimeError::ProtocolMismatch { op: "append".into(), head: other.to_string() }),
        }
    }

    pub fn append_exit(&mut self, ep: EpId) -> Result<(), RuntimeError> {
        let e = self.endpoints.get_mut(&ep).ok_or(RuntimeError::DeadEndpoint(ep))?;
        if e.cursor != SessionType::Nil {
            return Err(RuntimeError::SubprotocolUnfinished(e.cursor.to_string()));
        }
        let rest = e.rests.pop().ok_or_else(|| RuntimeError::ProtocolMismatch { op: "append exit".into(), head: "nil".into() })?;
        e.cursor = normalize(&rest);
        Ok(())
    }

    /// Validates a primitive against the endpoint's head before the caller blocks.
    pub fn check_op(&self, ep: EpId, op: &Op) -> Result<(), RuntimeError> {
        let e = self.endpoint(ep)?;
        let r = e.roles;
        let h = head(&e.cursor);
        let mismatch = || RuntimeError::ProtocolMismatch { op: op.name().into(), head: h.to_string() };
        let role_err = || RuntimeError::RoleMismatch { op: op.name().into(), roles: r, head: h.to_string() };
        let (sender, receiver, payload) = match h {
            SessionType::Msg { from, to, payload, .. } => {
                (r.contains(*from) && !r.contains(*to), r.contains(*to) && !r.contains(*from), *payload)
            }
            SessionType::Bcast { from, payload, .. } => (r.contains(*from), !r.contains(*from) && !r.is_empty(), *payload),
            SessionType::Gather { to, payload, .. } => (!r.contains(*to) && !r.is_empty(), r.contains(*to), *payload),
            SessionType::AConj(k, ..) => {
                return match op {
                    Op::Choose(_) if r.contains(*k) => Ok(()),
                    Op::Offer if !r.contains(*k) => Ok(()),
                    Op::Choose(_) | Op::Offer => Err(role_err()),
                    _ => Err(mismatch()),
                };
            }
            SessionType::MConj(k, ..) => {
                if !matches!(e.cursor, SessionType::MConj(..)) || !e.rests.is_empty() {
                    return Err(RuntimeError::ProtocolMismatch {
                        op: op.name().into(),
                        head: format!("{} (a multiplicative split cannot be followed by @)", e.cursor),
                    });
                }
                return match op {
                    Op::MConj if r.contains(*k) => Ok(()),
                    Op::MDisj(_) if !r.contains(*k) => Ok(()),
                    Op::MConj | Op::MDisj(_) => Err(role_err()),
                    _ => Err(mismatch()),
                };
            }
            _ => return Err(mismatch()),
        };
        match op {
            Op::Sync => Ok(()),
            Op::Send(v) if sender => {
                if v.fits(payload) {
                    Ok(())
                } else {
                    Err(RuntimeError::PayloadTypeMismatch { expected: payload, got: v.clone() })
                }
            }
            Op::Recv if receiver => Ok(()),
            Op::Send(_) | Op::Recv => Err(role_err()),
            _ => Err(mismatch()),
        }
    }

    /// Channels whose every endpoint has a pending primitive, in id order.
    pub fn matching(&self, pending: &BTreeMap<EpId, Op>) -> Vec<ChanId> {
        self.channels.iter().filter(|(_, eps)| eps.iter().all(|e| pending.contains_key(e))).map(|(c, _)| *c).collect()
    }

    fn observe(&mut self, eps: &[EpId], internal: &BTreeSet<Tid>, obs: &dyn Fn(usize) -> Observation) {
        for ep in eps {
            let e = &self.endpoints[ep];
            if internal.contains(&e.holder) {
                continue;
            }
            let lineage = e.lineage.clone();
            for q in e.roles.iter() {
                self.observations.entry((q, lineage.clone())).or_default().push(obs(q));
            }
        }
    }

    /// Fires a matching channel. `internal` lists forwarder threads, whose
    /// endpoints are not observed.
    pub fn fire(
        &mut self,
        chan: ChanId,
        pending: &BTreeMap<EpId, Op>,
        internal: &BTreeSet<Tid>,
    ) -> Result<(usize, Vec<(EpId, Reply)>), RuntimeError> {
        let eps: Vec<EpId> = self.channels.get(&chan).map(|s| s.iter().copied().collect()).unwrap_or_default();
        let cursor = self.endpoints[&eps[0]].cursor.clone();
        for ep in &eps {
            let other = &self.endpoints[ep].cursor;
            if head(other) != head(&cursor) {
                return Err(RuntimeError::SessionMismatch(cursor.to_string(), other.to_string()));
            }
            self.check_op(*ep, &pending[ep])?;
        }
        let h = head(&cursor).clone();
        let mut replies = Vec::new();
        let idx = self.trace.len();
        match &h {
            SessionType::Msg { label, from, to, payload } => {
                let mut value = Value::default_for(*payload);
                for ep in &eps {
                    if let Op::Send(v) = &pending[ep] {
                        value = v.clone();
                    }
                }
                for ep in &eps {
                    let reply = if pending[ep] == Op::Recv { Reply::Value(value.clone()) } else { Reply::Unit };
                    replies.push((*ep, reply));
                }
                let (from, to) = (*from, *to);
                self.observe(&eps, internal, &|q| Observation {
                    action: "msg".into(),
                    label: label.clone(),
                    from: Some(from),
                    to: Some(to),
                    payload: (q == from || q == to).then(|| value.clone()),
                });
                let ev = self.event(Rule::PR4, "msg");
                ev.chan = Some(chan.0);
                ev.from = Some(from);
                ev.to = Some(to);
                ev.label = Some(label.clone());
                ev.payload = Some(value);
            }
            SessionType::Bcast { label, from, payload } => {
                let mut value = Value::default_for(*payload);
                for ep in &eps {
                    if let Op::Send(v) = &pending[ep] {
                        value = v.clone();
                    }
                }
                for ep in &eps {
                    let reply = if pending[ep] == Op::Recv { Reply::Value(value.clone()) } else { Reply::Unit };
                    replies.push((*ep, reply));
                }
                let from = *from;
                self.observe(&eps, internal, &|_| Observation {
                    action: "bcast".into(),
                    label: label.clone(),
                    from: Some(from),
                    to: None,
                    payload: Some(value.clone()),
                });
                let ev = self.event(Rule::PR4, "bcast");
                ev.chan = Some(chan.0);
                ev.from = Some(from);
                ev.label = Some(label.clone());
                ev.payload = Some(value);
            }
            SessionType::Gather { label, to, payload } => {
                let mut values = Vec::new();
                let mut sent = BTreeMap::new();
                for ep in &eps {
                    let e = &self.endpoints[ep];
                    if !e.roles.contains(*to) && !e.roles.is_empty() {
                        let v = match &pending[ep] {
                            Op::Send(v) => v.clone(),
                            _ => Value::default_for(*payload),
                        };
                        sent.insert(*ep, v.clone());
                        values.push(v);
                    }
                }
                let value = Value::List(values);
                for ep in &eps {
                    let reply = if pending[ep] == Op::Recv { Reply::Value(value.clone()) } else { Reply::Unit };
                    replies.push((*ep, reply));
                }
                let to = *to;
                for ep in &eps {
                    let own = sent.get(ep).cloned();
                    let value = value.clone();
                    self.observe(&[*ep], internal, &|q| Observation {
                        action: "gather".into(),
                        label: label.clone(),
                        from: None,
                        to: Some(to),
                        payload: if q == to { Some(value.clone()) } else { own.clone() },
                    });
                }
                let ev = self.event(Rule::PR4, "gather");
                ev.chan = Some(chan.0);
                ev.to = Some(to);
                ev.label = Some(label.clone());
                ev.payload = Some(value);
            }
            SessionType::AConj(r, ..) => {
                let side = eps
                    .iter()
                    .find_map(|ep| match pending[ep] {
                        Op::Choose(s) => Some(s),
                        _ => None,
                    })
                    .ok_or_else(|| RuntimeError::ProtocolMismatch { op: "offer".into(), head: h.to_string() })?;
                for ep in &eps {
                    let reply = if pending[ep] == Op::Offer { Reply::Tag(side) } else { Reply::Unit };
                    replies.push((*ep, reply));
                }
                let r = *r;
                self.observe(&eps, internal, &|_| Observation {
                    action: "choose".into(),
                    label: side.name().into(),
                    from: Some(r),
                    to: None,
                    payload: None,
                });
                let ev = self.event(Rule::PR4, "choose");
                ev.chan = Some(chan.0);
                ev.from = Some(r);
                ev.label = Some(side.name().into());
                for ep in &eps {
                    let e = self.endpoints.get_mut(ep).unwrap();
                    e.cursor = choose_branch(&e.cursor, side == Side::Left);
                }
                return Ok((idx, replies));
            }
            SessionType::MConj(r, a, b) => {
                let r = *r;
                self.observe(&eps, internal, &|_| Observation {
                    action: "mconj".into(),
                    label: String::new(),
                    from: Some(r),
                    to: None,
                    payload: None,
                });
                let (ca, cb) = (self.fresh_chan(), self.fresh_chan());
                let (sa, sb) = (normalize(a), normalize(b));
                for ep in &eps {
                    let old = self.remove_endpoint(*ep)?;
                    let x = self.add_endpoint(ca, old.roles, sa.clone(), old.holder, format!("{}0", old.lineage));
                    let y = self.add_endpoint(cb, old.roles, sb.clone(), old.holder, format!("{}1", old.lineage));
                    let reply = match pending[ep] {
                        Op::MDisj(Side::Left) => Reply::Disj { keep: x, give: y },
                        Op::MDisj(Side::Right) => Reply::Disj { keep: y, give: x },
                        _ => Reply::Pair(x, y),
                    };
                    replies.push((*ep, reply));
                }
                let ev = self.event(Rule::PR5, "mconj");
                ev.chan = Some(chan.0);
                ev.from = Some(r);
                ev.channels = vec![ca.0, cb.0];
                return Ok((idx, replies));
            }
            other => return Err(RuntimeError::ProtocolMismatch { op: "sync".into(), head: other.to_string() }),
        }
        for ep in &eps {
            let e = self.endpoints.get_mut(ep).unwrap();
            e.cursor = advance_atom(&e.cursor);
        }
        Ok((idx, replies))
    }

    /// Checks that endpoints for a cut lie on distinct channels, share a cursor
    /// and have complements that are pairwise disjoint. With `total`, the
    /// complements must also cover the universe.
    pub fn check_cut(&self, eps: &[EpId], total: bool) -> Result<(), RuntimeError> {
        let es: Vec<&Endpoint> = eps.iter().map(|e| self.endpoint(*e)).collect::<Result<_, _>>()?;
        let chans: BTreeSet<ChanId> = es.iter().map(|e| e.chan).collect();
        if chans.len() != es.len() {
            return Err(RuntimeError::CutSideCondition("endpoints must lie on distinct channels".into()));
        }
        let first = es[0].full_cursor();
        for e in &es[1..] {
            if e.full_cursor() != first {
                return Err(RuntimeError::SessionMismatch(first.to_string(), e.full_cursor().to_string()));
            }
        }
        let co: Vec<RoleSet> = es.iter().map(|e| self.universe.complement(e.roles)).collect();
        let ok = if total {
            self.universe.partition_check(&co)
        } else {
            co.iter().enumerate().all(|(i, a)| co[i + 1..].iter().all(|b| a.is_disjoint(*b)))
        };
        if !ok {
            let roles: Vec<String> = es.iter().map(|e| e.roles.to_string()).collect();
            let what = if total { "partition the universe" } else { "be disjoint" };
            return Err(RuntimeError::CutSideCondition(format!("complements of {} must {what}", roles.join(", "))));
        }
        Ok(())
    }

    /// The residual channel of a 2-cut with residual: an endpoint at the
    /// intersection for `caller` and its complement for the forwarder.
    pub fn residual(&mut self, a: EpId, b: EpId, caller: Tid, forwarder: Tid) -> Result<(ChanId, EpId, EpId), RuntimeError> {
        let (ea, eb) = (self.endpoint(a)?, self.endpoint(b)?);
        let inter = ea.roles.intersect(eb.roles);
        let cursor = ea.full_cursor();
        let chan = self.fresh_chan();
        let res = self.add_endpoint(chan, inter, cursor.clone(), caller, String::new());
        let internal = self.add_endpoint(chan, self.universe.complement(inter), cursor, forwarder, String::new());
        Ok((chan, res, internal))
    }

    pub fn check_partitions(&self) -> Result<(), RuntimeError> {
        for (c, eps) in &self.channels {
            // Channels whose protocol is over lose endpoints one close at a time.
            if eps.iter().all(|e| self.endpoints[e].full_cursor() == SessionType::Nil) {
                continue;
            }
            let roles: Vec<RoleSet> = eps.iter().map(|e| self.endpoints[e].roles).collect();
            if !self.universe.partition_check(&roles) {
                return Err(RuntimeError::PartitionBroken(*c));
            }
        }
        Ok(())
    }

    /// Relaxedness counters. Channels sharing a forwarder are merged.
    pub fn counters(&self, forwarders: &BTreeSet<Tid>) -> Counters {
        let holders: BTreeSet<Tid> = self.endpoints.values().map(|e| e.holder).collect();
        let mut parent: BTreeMap<ChanId, ChanId> = self.channels.keys().map(|c| (*c, *c)).collect();
        fn find(p: &mut BTreeMap<ChanId, ChanId>, c: ChanId) -> ChanId {
            let up = p[&c];
            if up == c {
                return c;
            }
            let root = find(p, up);
            p.insert(c, root);
            root
        }
        let mut first: BTreeMap<Tid, ChanId> = BTreeMap::new();
        for e in self.endpoints.values().filter(|e| forwarders.contains(&e.holder)) {
            match first.get(&e.holder) {
                Some(&c) => {
                    let (x, y) = (find(&mut parent, c), find(&mut parent, e.chan));
                    parent.insert(x, y);
                }
                None => {
                    first.insert(e.holder, e.chan);
                }
            }
        }
        let keys: Vec<ChanId> = parent.keys().copied().collect();
        let roots: BTreeSet<ChanId> = keys.into_iter().map(|c| find(&mut parent, c)).collect();
        let endpts = self.endpoints.values().filter(|e| !forwarders.contains(&e.holder)).count();
        Counters { holders: holders.len(), chans: roots.len(), endpts }
    }

    /// Counters without merging: every channel and endpoint counts.
    pub fn physical_counters(&self) -> Counters {
        let holders: BTreeSet<Tid> = self.endpoints.values().map(|e| e.holder).collect();
        Counters { holders: holders.len(), chans: self.channels.len(), endpts: self.endpoints.len() }
    }
}
