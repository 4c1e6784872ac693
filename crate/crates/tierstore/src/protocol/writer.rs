//! Writer automaton: a two-phase client that first learns the highest tag
//! held by an edge quorum, then stores its value under the next tag.

use super::{client_quorum, Msg, Mutation, OpId, ProcessId, ProtoEvent, StepOutput, Tag};
use crate::codec::{SystemParams, Value};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
enum Phase {
    Idle,
    GetTag {
        op: OpId,
        value: Value,
        responses: BTreeMap<u32, Tag>,
    },
    PutData {
        op: OpId,
        tag: Tag,
        ackers: BTreeSet<u32>,
    },
}

#[derive(Debug, Clone)]
pub struct Writer {
    id: u32,
    params: SystemParams,
    mutation: Option<Mutation>,
    phase: Phase,
}

impl Writer {
    pub fn new(id: u32, params: SystemParams, mutation: Option<Mutation>) -> Self {
        Writer { id, params, mutation, phase: Phase::Idle }
    }

    fn quorum(&self) -> usize {
        client_quorum(&self.params, self.mutation)
    }

    fn all_edges(&self) -> impl Iterator<Item = ProcessId> {
        (1..=self.params.n1).map(ProcessId::Edge)
    }

    /// Start a write. The caller guarantees the previous operation finished.
    pub fn invoke(&mut self, op: OpId, value: Value) -> StepOutput {
        assert!(matches!(self.phase, Phase::Idle), "writer {} already busy", self.id);
        let mut out = StepOutput::default();
        for dst in self.all_edges() {
            out.send(dst, Msg::QueryTag { op });
        }
        self.phase = Phase::GetTag { op, value, responses: BTreeMap::new() };
        out
    }

    pub fn deliver(&mut self, from: ProcessId, msg: Msg) -> StepOutput {
        let mut out = StepOutput::default();
        let sender = match from {
            ProcessId::Edge(i) => i,
            _ => return out,
        };
        let phase = std::mem::replace(&mut self.phase, Phase::Idle);
        self.phase = self.step(phase, sender, msg, &mut out);
        out
    }

    fn step(&self, phase: Phase, sender: u32, msg: Msg, out: &mut StepOutput) -> Phase {
        match (phase, msg) {
            (Phase::GetTag { op, value, mut responses }, Msg::TagResponse { op: mop, tag })
                if mop == op =>
            {
                responses.insert(sender, tag);
                if responses.len() < self.quorum() {
                    return Phase::GetTag { op, value, responses };
                }
                let max = responses.values().max().copied().unwrap_or(Tag::ZERO);
                let tag = Tag::new(max.z + 1, self.id);
                for dst in self.all_edges() {
                    out.send(dst, Msg::PutData { op, tag, value: value.clone() });
                }
                Phase::PutData { op, tag, ackers: BTreeSet::new() }
            }
            (Phase::PutData { op, tag, mut ackers }, Msg::Ack { op: mop, .. }) if mop == op => {
                ackers.insert(sender);
                if ackers.len() < self.quorum() {
                    return Phase::PutData { op, tag, ackers };
                }
                out.events.push(ProtoEvent::Respond { op, write: true, tag, value: None });
                Phase::Idle
            }
            // Stale or duplicate traffic for finished phases is dropped.
            (phase, _) => phase,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodeConfig;

    fn params() -> SystemParams {
        SystemParams::new(CodeConfig { n1: 4, f1: 1, n2: 5, f2: 1, beta: 1, q: 65537 }).unwrap()
    }

    fn op(w: u32, seq: u32) -> OpId {
        OpId { client: ProcessId::Writer(w), seq }
    }

    #[test]
    fn queries_all_edges_then_stores_under_next_tag() {
        let mut w = Writer::new(2, params(), None);
        let o = op(2, 1);
        let out = w.invoke(o, vec![7; 5]);
        assert_eq!(out.sends.len(), 4);
        assert!(out.sends.iter().all(|(_, m)| matches!(m, Msg::QueryTag { .. })));

        // Quorum is f1 + k = 3; the fourth response must be ignored.
        let t = |z, wi| Tag::new(z, wi);
        assert!(w
            .deliver(ProcessId::Edge(1), Msg::TagResponse { op: o, tag: t(3, 1) })
            .sends
            .is_empty());
        assert!(w
            .deliver(ProcessId::Edge(2), Msg::TagResponse { op: o, tag: t(5, 3) })
            .sends
            .is_empty());
        let out = w.deliver(ProcessId::Edge(3), Msg::TagResponse { op: o, tag: t(4, 2) });
        assert_eq!(out.sends.len(), 4);
        for (_, m) in &out.sends {
            match m {
                Msg::PutData { tag, value, .. } => {
                    assert_eq!(*tag, Tag::new(6, 2));
                    assert_eq!(value, &vec![7; 5]);
                }
                other => panic!("unexpected send {other:?}"),
            }
        }
        let late = w.deliver(ProcessId::Edge(4), Msg::TagResponse { op: o, tag: t(9, 1) });
        assert!(late.sends.is_empty() && late.events.is_empty());
    }

    #[test]
    fn completes_after_quorum_acks_from_distinct_servers() {
        let mut w = Writer::new(1, params(), None);
        let o = op(1, 1);
        w.invoke(o, vec![1; 5]);
        for i in 1..=3 {
            w.deliver(ProcessId::Edge(i), Msg::TagResponse { op: o, tag: Tag::ZERO });
        }
        let tag = Tag::new(1, 1);
        assert!(w.deliver(ProcessId::Edge(1), Msg::Ack { op: o, tag }).events.is_empty());
        // A duplicate from the same server must not advance the count.
        assert!(w.deliver(ProcessId::Edge(1), Msg::Ack { op: o, tag }).events.is_empty());
        assert!(w.deliver(ProcessId::Edge(2), Msg::Ack { op: o, tag }).events.is_empty());
        let out = w.deliver(ProcessId::Edge(4), Msg::Ack { op: o, tag });
        assert_eq!(
            out.events,
            vec![ProtoEvent::Respond { op: o, write: true, tag, value: None }]
        );
    }

    #[test]
    fn ack_at_k_mutation_shrinks_both_waits() {
        let mut w = Writer::new(1, params(), Some(Mutation::AckAtK));
        let o = op(1, 1);
        w.invoke(o, vec![1; 5]);
        w.deliver(ProcessId::Edge(1), Msg::TagResponse { op: o, tag: Tag::ZERO });
        let out = w.deliver(ProcessId::Edge(2), Msg::TagResponse { op: o, tag: Tag::ZERO });
        assert_eq!(out.sends.len(), 4, "k = 2 responses suffice under the mutation");
        let tag = Tag::new(1, 1);
        w.deliver(ProcessId::Edge(1), Msg::Ack { op: o, tag });
        let out = w.deliver(ProcessId::Edge(2), Msg::Ack { op: o, tag });
        assert_eq!(out.events.len(), 1);
    }
}
