//! Deterministic multiparty channel runtime.
//!
//! Channels are synchronous: a step on a channel fires only once every live
//! endpoint of that channel is blocked on a matching primitive. Threads are
//! either scripted programs, host threads driven by an embedding interpreter,
//! or forwarders created by the cut primitives.

mod cursor;
mod engine;
mod net;
pub mod script;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roles::RoleSet;
use crate::session::{Payload, SessionError};

pub use cursor::{advance_atom, choose_branch, head, normalize};
pub use engine::{explore, Config, ExploreReport, HostCtx, HostStep, HostThread, Outcome, Pool, RunReport, Service, TieBreak};
pub use net::{Counters, Endpoint, Net, Op, Reply};

pub type Tid = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChanId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpId(pub usize);

impl fmt::Display for ChanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

/// A message payload.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Unit,
    Int(i64),
    Str(String),
    /// What the receiver of a gather gets, one entry per sending endpoint.
    List(Vec<Value>),
}

impl Value {
    pub fn default_for(p: Payload) -> Value {
        match p {
            Payload::Unit => Value::Unit,
            Payload::Int => Value::Int(0),
            Payload::Str => Value::Str(String::new()),
        }
    }

    pub fn fits(&self, p: Payload) -> bool {
        matches!((self, p), (Value::Unit, Payload::Unit) | (Value::Int(_), Payload::Int) | (Value::Str(_), Payload::Str))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::List(vs) => {
                f.write_str("[")?;
                for (k, v) in vs.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// Branch of an additive choice, or which part an `mdisj` caller keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Pool reduction rule that produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// A local channel operation inside one thread: close, 1-cut.
    PR0,
    /// Thread creation: spawn, split, cut forwarders.
    PR1,
    /// Exit of a thread other than the main one.
    PR2,
    /// Channel creation.
    PR3,
    /// Synchronous exchange on a channel.
    PR4,
    /// Multiplicative split of a channel into two.
    PR5,
}

/// One line of the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub rule: Rule,
    pub chan: Option<usize>,
    pub action: String,
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tid: Option<Tid>,
    /// Channels created by this event.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<usize>,
    /// Threads created by this event.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spawned: Vec<Tid>,
}

impl Event {
    pub fn new(step: usize, rule: Rule, action: &str) -> Event {
        Event {
            step,
            rule,
            chan: None,
            action: action.to_string(),
            from: None,
            to: None,
            label: None,
            payload: None,
            tid: None,
            channels: Vec::new(),
            spawned: Vec::new(),
        }
    }

    /// A synchronous exchange: a message or a choice.
    pub fn is_sync(&self) -> bool {
        self.rule == Rule::PR4
    }
}

/// What one role saw on one line of channel descent. `payload` is filled
/// only for the roles that sent or received it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub action: String,
    pub label: String,
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub payload: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("protocol mismatch: {op} against {head}")]
    ProtocolMismatch { op: String, head: String },
    #[error("role mismatch: {op} at {roles} against {head}")]
    RoleMismatch { op: String, roles: RoleSet, head: String },
    #[error("payload {got} does not fit {expected:?}")]
    PayloadTypeMismatch { expected: Payload, got: Value },
    #[error("append body finished with {0} left")]
    SubprotocolUnfinished(String),
    #[error("cannot split {part} off {whole}")]
    NotDisjointSplit { whole: RoleSet, part: RoleSet },
    #[error("1-cut needs an empty role set, got {0}")]
    NonEmptyRoles(RoleSet),
    #[error("cut side condition: {0}")]
    CutSideCondition(String),
    #[error("session mismatch: {0} vs {1}")]
    SessionMismatch(String, String),
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("chan2 is a deadlock demonstration and needs --allow-demo")]
    DemoDisabled,
    #[error("unbound variable {0:?}")]
    Unbound(String),
    #[error("endpoint {0:?} was already consumed")]
    EndpointConsumed(String),
    #[error("{0:?} is not an endpoint")]
    NotAnEndpoint(String),
    #[error("thread {tid} ended holding endpoint {var:?} at {cursor}")]
    EndpointLeaked { tid: Tid, var: String, cursor: String },
    #[error("forwarding is not defined for {0}")]
    CannotForward(String),
    #[error("channel {0} no longer partitions the universe")]
    PartitionBroken(ChanId),
    #[error("no live endpoint {0:?}")]
    DeadEndpoint(EpId),
    #[error("'break' outside a loop")]
    StrayBreak,
    /// Raised by a host thread.
    #[error("{0}")]
    Host(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}
