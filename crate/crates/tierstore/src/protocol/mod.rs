//! Protocol state machines for the two-tier store.
//!
//! Four process roles cooperate over reliable asynchronous channels: writers
//! and readers (clients of the edge tier), edge servers (the quorum tier that
//! clients talk to), and backend servers (the coded bulk tier reached only by
//! edge servers). Every written value carries a totally ordered tag, and each
//! role is a deterministic step function from (state, delivered message) to
//! (new state, sends, observable events). The simulator owns time and
//! channels; nothing in this module blocks or draws randomness.

pub mod backend;
pub mod edge;
pub mod reader;
pub mod writer;

use crate::codec::{Element, Helper, SystemParams, Value};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A process in the system. Writers, readers, edge servers, and backend
/// servers are each numbered from 1 within their role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessId {
    Writer(u32),
    Reader(u32),
    Edge(u32),
    Backend(u32),
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessId::Writer(i) => write!(f, "w{i}"),
            ProcessId::Reader(i) => write!(f, "r{i}"),
            ProcessId::Edge(i) => write!(f, "s{i}"),
            ProcessId::Backend(i) => write!(f, "b{i}"),
        }
    }
}

impl FromStr for ProcessId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, num) = s.split_at(s.len().min(1));
        let idx: u32 = num
            .parse()
            .map_err(|_| format!("bad process id {s:?}: expected w/r/s/b followed by a number"))?;
        if idx == 0 {
            return Err(format!("bad process id {s:?}: indices start at 1"));
        }
        match kind {
            "w" => Ok(ProcessId::Writer(idx)),
            "r" => Ok(ProcessId::Reader(idx)),
            "s" => Ok(ProcessId::Edge(idx)),
            "b" => Ok(ProcessId::Backend(idx)),
            _ => Err(format!("bad process id {s:?}: unknown role prefix")),
        }
    }
}

impl Serialize for ProcessId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProcessId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One client operation, identified by its client and a per-client sequence
/// number. Serialized as `"w1:3"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId {
    pub client: ProcessId,
    pub seq: u32,
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.client, self.seq)
    }
}

impl FromStr for OpId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (client, seq) = s
            .split_once(':')
            .ok_or_else(|| format!("bad op id {s:?}: expected client:seq"))?;
        Ok(OpId {
            client: client.parse()?,
            seq: seq.parse().map_err(|_| format!("bad op id {s:?}: seq is not a number"))?,
        })
    }
}

impl Serialize for OpId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OpId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Version tag: a counter plus the writer id that minted it, ordered
/// lexicographically. The initial tag is `(0, 0)`; real writer ids start
/// at 1, so every minted tag exceeds it.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct Tag {
    pub z: u64,
    pub w: u32,
}

impl Tag {
    pub const ZERO: Tag = Tag { z: 0, w: 0 };

    pub fn new(z: u64, w: u32) -> Self {
        Tag { z, w }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.z, self.w)
    }
}

/// The closed set of protocol messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg {
    /// Writer asks an edge server for its highest known tag.
    QueryTag { op: OpId },
    /// Edge reply to `QueryTag` (highest list tag) or `QueryCommTag`
    /// (committed tag).
    TagResponse { op: OpId, tag: Tag },
    /// Writer ships the tagged value to an edge server.
    PutData { op: OpId, tag: Tag, value: Value },
    /// Edge acknowledgment to a writer's `PutData` or a reader's `PutTag`.
    Ack { op: OpId, tag: Tag },
    /// Commit announcement relayed among edge servers; `(origin, seq)`
    /// identifies the broadcast instance for dedup.
    CommitTag { origin: u32, seq: u64, tag: Tag },
    /// Reader asks an edge server for its committed tag.
    QueryCommTag { op: OpId },
    /// Reader asks an edge server for data at least as fresh as `tag`.
    QueryData { op: OpId, tag: Tag },
    /// Edge sends a full value to a reader.
    ValueResponse { op: OpId, tag: Tag, value: Value },
    /// Edge sends its regenerated coded element to a reader; `None` means
    /// the regeneration could not meet the requested tag.
    CodedResponse { op: OpId, elem: Option<(Tag, Element)> },
    /// Reader writes back the tag it is about to return.
    PutTag { op: OpId, tag: Tag },
    /// Edge offloads one backend server's coded element.
    WriteCodeElem { tag: Tag, elem: Element },
    /// Backend acknowledgment of `WriteCodeElem`.
    AckCodeElem { tag: Tag },
    /// Edge asks a backend server for repair help toward edge coordinate
    /// `target`, on behalf of reader operation `op`.
    QueryCodeElem { op: OpId, target: u32 },
    /// Backend repair help: the stored tag and the helper symbols.
    SendHelperElem { op: OpId, tag: Tag, helper: Helper },
}

impl Msg {
    /// Wire name used in trace records.
    pub fn name(&self) -> &'static str {
        match self {
            Msg::QueryTag { .. } => "QUERY-TAG",
            Msg::TagResponse { .. } => "tag-response",
            Msg::PutData { .. } => "PUT-DATA",
            Msg::Ack { .. } => "ACK",
            Msg::CommitTag { .. } => "COMMIT-TAG",
            Msg::QueryCommTag { .. } => "QUERY-COMM-TAG",
            Msg::QueryData { .. } => "QUERY-DATA",
            Msg::ValueResponse { .. } => "value-response",
            Msg::CodedResponse { .. } => "coded-response",
            Msg::PutTag { .. } => "PUT-TAG",
            Msg::WriteCodeElem { .. } => "WRITE-CODE-ELEM",
            Msg::AckCodeElem { .. } => "ACK-CODE-ELEM",
            Msg::QueryCodeElem { .. } => "QUERY-CODE-ELEM",
            Msg::SendHelperElem { .. } => "SEND-HELPER-ELEM",
        }
    }

    /// Payload size in field symbols. Tags, counters, and acknowledgments
    /// are metadata and cost nothing.
    pub fn payload_syms(&self, params: &SystemParams) -> u64 {
        match self {
            Msg::PutData { .. } | Msg::ValueResponse { .. } => params.b as u64,
            Msg::WriteCodeElem { .. } => params.alpha as u64,
            Msg::CodedResponse { elem: Some(_), .. } => params.alpha as u64,
            Msg::SendHelperElem { .. } => params.beta as u64,
            _ => 0,
        }
    }

    /// The client operation this message belongs to, if any.
    pub fn op(&self) -> Option<OpId> {
        match self {
            Msg::QueryTag { op }
            | Msg::TagResponse { op, .. }
            | Msg::PutData { op, .. }
            | Msg::Ack { op, .. }
            | Msg::QueryCommTag { op }
            | Msg::QueryData { op, .. }
            | Msg::ValueResponse { op, .. }
            | Msg::CodedResponse { op, .. }
            | Msg::PutTag { op, .. }
            | Msg::QueryCodeElem { op, .. }
            | Msg::SendHelperElem { op, .. } => Some(*op),
            _ => None,
        }
    }

    /// The tag this message carries, if any.
    pub fn tag(&self) -> Option<Tag> {
        match self {
            Msg::TagResponse { tag, .. }
            | Msg::PutData { tag, .. }
            | Msg::Ack { tag, .. }
            | Msg::CommitTag { tag, .. }
            | Msg::QueryData { tag, .. }
            | Msg::ValueResponse { tag, .. }
            | Msg::PutTag { tag, .. }
            | Msg::WriteCodeElem { tag, .. }
            | Msg::AckCodeElem { tag }
            | Msg::SendHelperElem { tag, .. } => Some(*tag),
            Msg::CodedResponse { elem, .. } => elem.as_ref().map(|(t, _)| *t),
            _ => None,
        }
    }
}

/// Deliberate protocol defects, selectable for checker sensitivity runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Edge servers acknowledge a write on receipt of the data instead of
    /// waiting for the commit announcements.
    SkipBroadcastWait,
    /// Clients wait for only `k` responses where the protocol requires
    /// `f1 + k`.
    AckAtK,
    /// Readers return without performing the tag write-back phase.
    SkipWriteBack,
    /// Edge servers update their committed tag without the monotonicity
    /// guard, so it can move backward.
    AllowTcDecrease,
    /// Readers decode from `k - 1` coded elements, padding the missing
    /// share with zeros.
    DecodeKMinus1,
}

impl Mutation {
    pub const ALL: [Mutation; 5] = [
        Mutation::SkipBroadcastWait,
        Mutation::AckAtK,
        Mutation::SkipWriteBack,
        Mutation::AllowTcDecrease,
        Mutation::DecodeKMinus1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mutation::SkipBroadcastWait => "skip-broadcast-wait",
            Mutation::AckAtK => "ack-at-k",
            Mutation::SkipWriteBack => "skip-write-back",
            Mutation::AllowTcDecrease => "allow-tc-decrease",
            Mutation::DecodeKMinus1 => "decode-k-minus-1",
        }
    }
}

impl FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "skip-writeback" {
            return Ok(Mutation::SkipWriteBack);
        }
        Mutation::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mutation {s:?}"))
    }
}

/// Number of responses a client waits for in each phase.
pub fn client_quorum(params: &SystemParams, mutation: Option<Mutation>) -> usize {
    match mutation {
        Some(Mutation::AckAtK) => params.k as usize,
        _ => params.edge_quorum() as usize,
    }
}

/// State-change markers emitted by servers for the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    /// Edge list gained a valued entry.
    InsertValued,
    /// Edge list gained a tombstone entry.
    InsertTombstone,
    /// Edge committed tag changed.
    SetTc,
    /// A valued list entry's payload was dropped, leaving the tombstone.
    NullEntry,
    /// Backend replaced its stored coded element.
    StoreElem,
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::InsertValued => "insert-valued",
            ActionKind::InsertTombstone => "insert-tombstone",
            ActionKind::SetTc => "set-tc",
            ActionKind::NullEntry => "null-entry",
            ActionKind::StoreElem => "store-elem",
        }
    }
}

/// Internal operations an edge server runs against the backend tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IopKind {
    /// Offload a committed value as coded elements.
    Offload,
    /// Rebuild this server's own coded element from backend helpers.
    Regenerate,
}

impl IopKind {
    pub fn name(&self) -> &'static str {
        match self {
            IopKind::Offload => "offload",
            IopKind::Regenerate => "regenerate",
        }
    }
}

/// Observable outcomes of one protocol step, in emission order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtoEvent {
    /// A client operation completed.
    Respond {
        op: OpId,
        write: bool,
        tag: Tag,
        value: Option<Value>,
    },
    /// A server state change.
    Action { act: ActionKind, tag: Tag },
    /// An internal backend-tier operation started.
    IopStart {
        iop: IopKind,
        tag: Option<Tag>,
        op: Option<OpId>,
    },
    /// An internal backend-tier operation finished.
    IopEnd {
        iop: IopKind,
        tag: Option<Tag>,
        op: Option<OpId>,
        ok: bool,
    },
}

/// Sends and events produced by one step, in deterministic order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub sends: Vec<(ProcessId, Msg)>,
    pub events: Vec<ProtoEvent>,
}

impl StepOutput {
    pub fn send(&mut self, to: ProcessId, msg: Msg) {
        self.sends.push((to, msg));
    }

    pub fn action(&mut self, act: ActionKind, tag: Tag) {
        self.events.push(ProtoEvent::Action { act, tag });
    }
}
