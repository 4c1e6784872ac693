//! Edge server automaton.
//!
//! Each edge server keeps a tag-indexed list of entries (valued or
//! tombstone), a committed tag `tc`, a registry of waiting readers, and the
//! bookkeeping for three distributed subprotocols:
//!
//! * commit: on receiving a value it relays a commit announcement through a
//!   fixed relay set; once announcements for a tag reach a quorum count and
//!   the entry is present, it acknowledges the writer, advances `tc`, serves
//!   waiting readers, drops superseded payloads, and offloads the value.
//! * offload: the committed value is encoded and spread over the backend
//!   tier; after a backend quorum acknowledges, the local payload is replaced
//!   by a tombstone.
//! * regenerate: a reader that cannot be served locally is registered and
//!   the server rebuilds its own coded element from backend helpers, handing
//!   the reader whatever tag the helpers support.

use super::{
    ActionKind, IopKind, Msg, Mutation, OpId, ProcessId, ProtoEvent, StepOutput, Tag,
};
use crate::codec::{Helper, SystemParams, Value};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
pub struct EdgeServer {
    id: u32,
    params: SystemParams,
    mutation: Option<Mutation>,
    /// Tag-indexed entries; `None` payload is a tombstone.
    list: BTreeMap<Tag, Option<Value>>,
    /// Highest committed tag.
    tc: Tag,
    /// Waiting readers: data-phase operation -> (reader, requested tag).
    gamma: BTreeMap<OpId, (ProcessId, Tag)>,
    /// Commit announcements consumed per tag.
    commit_counter: BTreeMap<Tag, u32>,
    /// Tags whose commit rule already ran.
    commit_fired: BTreeSet<Tag>,
    /// Tags whose writer was acknowledged.
    acked: BTreeSet<Tag>,
    /// Writing operation per tag, learned from the data message.
    tag_writer: BTreeMap<Tag, OpId>,
    /// Running offloads: tag -> backend acks so far.
    offload_pending: BTreeMap<Tag, u32>,
    /// Finished offloads.
    offload_done: BTreeSet<Tag>,
    /// Helper responses per regeneration: (backend coordinate, tag, helper).
    helper_acc: BTreeMap<OpId, Vec<(u32, Tag, Helper)>>,
    /// Helper response count per regeneration.
    helper_count: BTreeMap<OpId, u32>,
    /// Next broadcast instance number minted by this server.
    bcast_next: u64,
    /// Broadcast instances already handled: (origin, instance).
    bcast_seen: BTreeSet<(u32, u64)>,
}

impl EdgeServer {
    pub fn new(id: u32, params: SystemParams, mutation: Option<Mutation>) -> Self {
        let mut list = BTreeMap::new();
        // The initial tag is present as a tombstone; its value lives in the
        // backend tier from the start.
        list.insert(Tag::ZERO, None);
        EdgeServer {
            id,
            params,
            mutation,
            list,
            tc: Tag::ZERO,
            gamma: BTreeMap::new(),
            commit_counter: BTreeMap::new(),
            commit_fired: BTreeSet::new(),
            acked: BTreeSet::new(),
            tag_writer: BTreeMap::new(),
            offload_pending: BTreeMap::new(),
            offload_done: BTreeSet::new(),
            helper_acc: BTreeMap::new(),
            helper_count: BTreeMap::new(),
            bcast_next: 0,
            bcast_seen: BTreeSet::new(),
        }
    }

    pub fn committed_tag(&self) -> Tag {
        self.tc
    }

    pub fn entry(&self, tag: Tag) -> Option<&Option<Value>> {
        self.list.get(&tag)
    }

    pub fn registered_ops(&self) -> impl Iterator<Item = &OpId> {
        self.gamma.keys()
    }

    /// Relays are the lowest-numbered f1 + 1 edge servers.
    fn is_relay(&self) -> bool {
        self.id <= self.params.f1 + 1
    }

    fn all_edges(&self) -> impl Iterator<Item = ProcessId> {
        (1..=self.params.n1).map(ProcessId::Edge)
    }

    fn all_backends(&self) -> impl Iterator<Item = ProcessId> {
        (1..=self.params.n2).map(ProcessId::Backend)
    }

    fn valued(&self, tag: Tag) -> Option<&Value> {
        self.list.get(&tag).and_then(|e| e.as_ref())
    }

    /// Tag-update guard; the mutation drops the monotonicity requirement.
    fn tc_update_applies(&self, tag: Tag) -> bool {
        match self.mutation {
            Some(Mutation::AllowTcDecrease) => tag != self.tc,
            _ => tag > self.tc,
        }
    }

    pub fn deliver(&mut self, from: ProcessId, msg: Msg) -> StepOutput {
        let mut out = StepOutput::default();
        match msg {
            Msg::QueryTag { op } => {
                let max = self.list.keys().max().copied().unwrap_or(Tag::ZERO);
                out.send(from, Msg::TagResponse { op, tag: max });
            }
            Msg::QueryCommTag { op } => {
                out.send(from, Msg::TagResponse { op, tag: self.tc });
            }
            Msg::PutData { op, tag, value } => self.on_put_data(from, op, tag, value, &mut out),
            Msg::CommitTag { origin, seq, tag } => self.on_commit_tag(origin, seq, tag, &mut out),
            Msg::QueryData { op, tag } => self.on_query_data(from, op, tag, &mut out),
            Msg::PutTag { op, tag } => self.on_put_tag(from, op, tag, &mut out),
            Msg::AckCodeElem { tag } => self.on_ack_code_elem(tag, &mut out),
            Msg::SendHelperElem { op, tag, helper } => {
                self.on_helper_elem(from, op, tag, helper, &mut out)
            }
            // Messages meant for other roles are ignored.
            _ => {}
        }
        out
    }

    fn on_put_data(&mut self, from: ProcessId, op: OpId, tag: Tag, value: Value, out: &mut StepOutput) {
        self.tag_writer.insert(tag, op);
        // The announcement goes out on every receipt, superseded or not; the
        // commit counters must reach the threshold at the servers that did
        // store the value even when others already moved past this tag.
        let seq = self.bcast_next;
        self.bcast_next += 1;
        for relay in 1..=self.params.f1 + 1 {
            out.send(ProcessId::Edge(relay), Msg::CommitTag { origin: self.id, seq, tag });
        }
        if tag > self.tc {
            if !self.list.contains_key(&tag) {
                self.list.insert(tag, Some(value));
                out.action(ActionKind::InsertValued, tag);
            }
            if self.mutation == Some(Mutation::SkipBroadcastWait) && self.acked.insert(tag) {
                out.send(from, Msg::Ack { op, tag });
            }
        } else if self.acked.insert(tag) {
            // Already superseded here; acknowledge right away.
            out.send(from, Msg::Ack { op, tag });
        }
    }

    fn on_commit_tag(&mut self, origin: u32, seq: u64, tag: Tag, out: &mut StepOutput) {
        if !self.bcast_seen.insert((origin, seq)) {
            return;
        }
        if self.is_relay() {
            // Forward on first reception, before consuming locally.
            for dst in self.all_edges() {
                out.send(dst, Msg::CommitTag { origin, seq, tag });
            }
        }
        *self.commit_counter.entry(tag).or_insert(0) += 1;
        self.maybe_commit(tag, out);
    }

    /// Commit rule: once announcements for a tag reach f1 + k and the entry
    /// exists, acknowledge the writer; if the tag is fresher than `tc`,
    /// advance `tc`, serve waiting readers, drop superseded payloads, and
    /// offload. Runs at most once per tag.
    fn maybe_commit(&mut self, tag: Tag, out: &mut StepOutput) {
        if self.commit_fired.contains(&tag)
            || self.commit_counter.get(&tag).copied().unwrap_or(0) < self.params.edge_quorum()
            || !self.list.contains_key(&tag)
        {
            return;
        }
        self.commit_fired.insert(tag);
        if let Some(&wop) = self.tag_writer.get(&tag) {
            if self.acked.insert(tag) {
                out.send(wop.client, Msg::Ack { op: wop, tag });
            }
        }
        if self.tc_update_applies(tag) {
            self.set_tc(tag, out);
            self.serve_registered(tag, out);
            self.gc_below_tc(out);
            self.start_offload(tag, out);
        }
    }

    fn set_tc(&mut self, tag: Tag, out: &mut StepOutput) {
        self.tc = tag;
        out.action(ActionKind::SetTc, tag);
    }

    /// Send `(serve_tag, value)` to every waiting reader whose requested tag
    /// it satisfies, and unregister them.
    fn serve_with(&mut self, serve_tag: Tag, out: &mut StepOutput) {
        let value = match self.valued(serve_tag) {
            Some(v) => v.clone(),
            None => return,
        };
        let ready: Vec<OpId> = self
            .gamma
            .iter()
            .filter(|(_, (_, t_req))| serve_tag >= *t_req)
            .map(|(op, _)| *op)
            .collect();
        for op in ready {
            let (reader, _) = self.gamma.remove(&op).unwrap();
            out.send(
                reader,
                Msg::ValueResponse { op, tag: serve_tag, value: value.clone() },
            );
        }
    }

    fn serve_registered(&mut self, tag: Tag, out: &mut StepOutput) {
        self.serve_with(tag, out);
    }

    /// Null the payload of every entry older than `tc`.
    fn gc_below_tc(&mut self, out: &mut StepOutput) {
        let tc = self.tc;
        let stale: Vec<Tag> = self
            .list
            .iter()
            .filter(|(t, e)| **t < tc && e.is_some())
            .map(|(t, _)| *t)
            .collect();
        for t in stale {
            self.list.insert(t, None);
            out.action(ActionKind::NullEntry, t);
        }
    }

    /// Encode the valued entry for `tag` over the backend tier and send one
    /// coded element to each backend server. Runs at most once per tag.
    fn start_offload(&mut self, tag: Tag, out: &mut StepOutput) {
        if self.offload_pending.contains_key(&tag) || self.offload_done.contains(&tag) {
            return;
        }
        let value = match self.valued(tag) {
            Some(v) => v.clone(),
            None => return,
        };
        self.offload_pending.insert(tag, 0);
        out.events.push(ProtoEvent::IopStart { iop: IopKind::Offload, tag: Some(tag), op: None });
        let elems = self.params.encode_backend(&value).expect("value length fixed by params");
        for (i, elem) in elems.into_iter().enumerate() {
            out.send(ProcessId::Backend(i as u32 + 1), Msg::WriteCodeElem { tag, elem });
        }
    }

    fn on_ack_code_elem(&mut self, tag: Tag, out: &mut StepOutput) {
        let count = match self.offload_pending.get_mut(&tag) {
            Some(c) => {
                *c += 1;
                *c
            }
            None => return,
        };
        if count < self.params.backend_quorum() {
            return;
        }
        self.offload_pending.remove(&tag);
        self.offload_done.insert(tag);
        if self.valued(tag).is_some() {
            self.list.insert(tag, None);
            out.action(ActionKind::NullEntry, tag);
        }
        out.events.push(ProtoEvent::IopEnd {
            iop: IopKind::Offload,
            tag: Some(tag),
            op: None,
            ok: true,
        });
    }

    /// Data query: serve the exact requested tag if still valued, else the
    /// committed one if fresher and valued; otherwise register the reader
    /// and regenerate from the backend tier.
    fn on_query_data(&mut self, from: ProcessId, op: OpId, t_req: Tag, out: &mut StepOutput) {
        if let Some(v) = self.valued(t_req) {
            out.send(from, Msg::ValueResponse { op, tag: t_req, value: v.clone() });
            return;
        }
        if self.tc > t_req {
            if let Some(v) = self.valued(self.tc) {
                out.send(from, Msg::ValueResponse { op, tag: self.tc, value: v.clone() });
                return;
            }
        }
        self.gamma.insert(op, (from, t_req));
        self.helper_acc.insert(op, Vec::new());
        self.helper_count.insert(op, 0);
        out.events.push(ProtoEvent::IopStart { iop: IopKind::Regenerate, tag: None, op: Some(op) });
        for dst in self.all_backends() {
            out.send(dst, Msg::QueryCodeElem { op, target: self.id });
        }
    }

    /// Helper arrival. When exactly a backend quorum has answered, rebuild
    /// the highest tag with enough helpers; respond to the reader only if it
    /// is still registered, and leave it registered either way.
    fn on_helper_elem(&mut self, from: ProcessId, op: OpId, tag: Tag, helper: Helper, out: &mut StepOutput) {
        let bid = match from {
            ProcessId::Backend(i) => i,
            _ => return,
        };
        let count = match self.helper_count.get_mut(&op) {
            Some(c) => {
                *c += 1;
                *c
            }
            None => return,
        };
        let coord = self.params.backend_coord(bid);
        self.helper_acc.entry(op).or_default().push((coord, tag, helper));
        if count != self.params.backend_quorum() {
            return;
        }
        let acc = self.helper_acc.remove(&op).unwrap_or_default();
        let mut by_tag: BTreeMap<Tag, Vec<(u32, Helper)>> = BTreeMap::new();
        for (coord, t, h) in acc {
            by_tag.entry(t).or_default().push((coord, h));
        }
        let d = self.params.d as usize;
        let rebuilt = by_tag
            .into_iter()
            .rev()
            .find(|(_, hs)| hs.len() >= d)
            .and_then(|(t, hs)| {
                self.params
                    .code
                    .regenerate(self.id, &hs[..d])
                    .ok()
                    .map(|elem| (t, elem))
            });
        out.events.push(ProtoEvent::IopEnd {
            iop: IopKind::Regenerate,
            tag: rebuilt.as_ref().map(|(t, _)| *t),
            op: Some(op),
            ok: rebuilt.is_some(),
        });
        if let Some((reader, t_req)) = self.gamma.get(&op).copied() {
            let elem = match rebuilt {
                Some((t, elem)) if t >= t_req => Some((t, elem)),
                _ => None,
            };
            out.send(reader, Msg::CodedResponse { op, elem });
        }
    }

    /// Tag write-back from a reader: drop that operation's registration,
    /// adopt the tag if the guard allows (serving whoever the adopted state
    /// can satisfy), and always acknowledge. Unregistration is keyed by the
    /// operation, not the reader: a delayed write-back from the reader's
    /// previous operation must not evict a newer registration.
    fn on_put_tag(&mut self, from: ProcessId, op: OpId, tag: Tag, out: &mut StepOutput) {
        self.gamma.remove(&op);
        if self.tc_update_applies(tag) {
            self.set_tc(tag, out);
            if self.valued(tag).is_some() {
                self.serve_with(tag, out);
                self.start_offload(tag, out);
            } else {
                if !self.list.contains_key(&tag) {
                    self.list.insert(tag, None);
                    out.action(ActionKind::InsertTombstone, tag);
                }
                let fallback = self
                    .list
                    .iter()
                    .filter(|(t, e)| **t < tag && e.is_some())
                    .map(|(t, _)| *t)
                    .max();
                if let Some(t_bar) = fallback {
                    self.serve_with(t_bar, out);
                }
            }
            self.gc_below_tc(out);
        }
        out.send(from, Msg::Ack { op, tag });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodeConfig;

    fn params() -> SystemParams {
        SystemParams::new(CodeConfig { n1: 4, f1: 1, n2: 5, f2: 1, beta: 1, q: 65537 }).unwrap()
    }

    fn wop(seq: u32) -> OpId {
        OpId { client: ProcessId::Writer(1), seq }
    }

    fn rop(seq: u32) -> OpId {
        OpId { client: ProcessId::Reader(1), seq }
    }

    fn value(fill: u64) -> Value {
        vec![fill; 5]
    }

    /// Feed enough commit announcements (distinct origins) to reach the
    /// commit threshold for `tag` at server `s`.
    fn announce(s: &mut EdgeServer, tag: Tag, n: u32) -> StepOutput {
        let mut last = StepOutput::default();
        for origin in 1..=n {
            last = s.deliver(
                ProcessId::Edge(origin),
                Msg::CommitTag { origin, seq: 0, tag },
            );
        }
        last
    }

    #[test]
    fn stale_put_data_is_acked_without_insertion() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        let t2 = Tag::new(2, 1);
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t2, value: value(2) });
        announce(&mut s, t2, 3);
        assert_eq!(s.committed_tag(), t2);

        let out = s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(2), tag: t1, value: value(1) });
        let bcasts = out
            .sends
            .iter()
            .filter(|(_, m)| matches!(m, Msg::CommitTag { tag, .. } if *tag == t1))
            .count();
        assert_eq!(bcasts, 2, "the announcement still goes to the relay set");
        assert!(matches!(out.sends.last(), Some((ProcessId::Writer(1), Msg::Ack { tag, .. })) if *tag == t1));
        assert!(s.entry(t1).is_none(), "stale value must not be stored");
    }

    #[test]
    fn fresh_put_data_broadcasts_to_relays_only() {
        let mut s = EdgeServer::new(4, params(), None);
        let t1 = Tag::new(1, 1);
        let out = s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        let dests: Vec<_> = out.sends.iter().map(|(d, _)| *d).collect();
        assert_eq!(dests, vec![ProcessId::Edge(1), ProcessId::Edge(2)], "relay set is f1+1 lowest ids");
        assert!(out.sends.iter().all(|(_, m)| matches!(m, Msg::CommitTag { .. })));
        assert_eq!(s.entry(t1), Some(&Some(value(1))));
    }

    #[test]
    fn commit_fires_once_at_threshold_with_entry_present() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        // Two announcements: below threshold, nothing happens.
        for origin in 1..=2 {
            let out = s.deliver(ProcessId::Edge(origin), Msg::CommitTag { origin, seq: 0, tag: t1 });
            assert!(out.sends.is_empty());
        }
        // Third announcement reaches f1 + k = 3: ack writer, commit, offload.
        let out = s.deliver(ProcessId::Edge(3), Msg::CommitTag { origin: 3, seq: 0, tag: t1 });
        assert!(matches!(&out.sends[0], (ProcessId::Writer(1), Msg::Ack { .. })));
        let offloads = out
            .sends
            .iter()
            .filter(|(_, m)| matches!(m, Msg::WriteCodeElem { .. }))
            .count();
        assert_eq!(offloads, 5, "one coded element per backend server");
        assert_eq!(s.committed_tag(), t1);
        // A late duplicate-instance announcement is consumed at most once.
        let out = s.deliver(ProcessId::Edge(3), Msg::CommitTag { origin: 3, seq: 0, tag: t1 });
        assert!(out.sends.is_empty() && out.events.is_empty());
        // A fresh instance must not re-fire the commit rule.
        let out = s.deliver(ProcessId::Edge(4), Msg::CommitTag { origin: 4, seq: 0, tag: t1 });
        assert!(out.sends.is_empty() && out.events.is_empty());
    }

    #[test]
    fn commit_fires_when_entry_arrives_after_counter_saturates() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        announce(&mut s, t1, 3);
        assert_eq!(s.committed_tag(), Tag::ZERO, "no entry yet, commit must wait");
        // The entry arrives; its own broadcast instance comes back and the
        // rule fires on that consumption.
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        let out = s.deliver(ProcessId::Edge(3), Msg::CommitTag { origin: 3, seq: 1, tag: t1 });
        assert!(matches!(&out.sends[0], (ProcessId::Writer(1), Msg::Ack { .. })));
        assert_eq!(s.committed_tag(), t1);
    }

    #[test]
    fn relay_forwards_each_instance_once() {
        let mut s = EdgeServer::new(1, params(), None);
        let t1 = Tag::new(1, 1);
        let out = s.deliver(ProcessId::Edge(4), Msg::CommitTag { origin: 4, seq: 7, tag: t1 });
        let forwards = out
            .sends
            .iter()
            .filter(|(_, m)| matches!(m, Msg::CommitTag { origin: 4, seq: 7, .. }))
            .count();
        assert_eq!(forwards, 4, "relay forwards to every edge server");
        // Second copy of the same instance (e.g. via another relay): ignored.
        let out = s.deliver(ProcessId::Edge(2), Msg::CommitTag { origin: 4, seq: 7, tag: t1 });
        assert!(out.sends.is_empty());
        // Non-relay server never forwards.
        let mut s3 = EdgeServer::new(3, params(), None);
        let out = s3.deliver(ProcessId::Edge(4), Msg::CommitTag { origin: 4, seq: 7, tag: t1 });
        assert!(out.sends.is_empty());
    }

    #[test]
    fn commit_gc_nulls_older_payloads_and_serves_registered_readers() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        let t2 = Tag::new(2, 2);
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        // A reader registers while nothing fresh enough is present.
        let out = s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(1), tag: t2 });
        assert!(
            out.sends.iter().all(|(_, m)| matches!(m, Msg::QueryCodeElem { .. }))
                && out.sends.len() == 5,
            "registration triggers a regeneration against all backends"
        );
        s.deliver(ProcessId::Writer(2), Msg::PutData { op: wop(2), tag: t2, value: value(2) });
        let out = announce(&mut s, t2, 3);
        // Commit of t2 serves the registered reader and nulls t1's payload.
        assert!(out.sends.iter().any(|(d, m)| matches!(
            (d, m),
            (ProcessId::Reader(1), Msg::ValueResponse { tag, .. }) if *tag == t2
        )));
        assert_eq!(s.entry(t1), Some(&None), "older payload must be dropped");
        assert_eq!(s.registered_ops().count(), 0);
    }

    #[test]
    fn offload_completes_at_backend_quorum_and_tombstones() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        announce(&mut s, t1, 3);
        for i in 1..=3 {
            let out = s.deliver(ProcessId::Backend(i), Msg::AckCodeElem { tag: t1 });
            assert!(out.events.is_empty());
        }
        let out = s.deliver(ProcessId::Backend(4), Msg::AckCodeElem { tag: t1 });
        assert!(matches!(
            out.events.last(),
            Some(ProtoEvent::IopEnd { iop: IopKind::Offload, ok: true, .. })
        ));
        assert_eq!(s.entry(t1), Some(&None), "payload replaced by tombstone");
        // A late fifth ack is a no-op.
        let out = s.deliver(ProcessId::Backend(5), Msg::AckCodeElem { tag: t1 });
        assert!(out.events.is_empty());
    }

    #[test]
    fn query_data_serves_exact_then_committed_then_registers() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        let t2 = Tag::new(2, 2);
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        // Exact match on a valued entry, even though t1 is not committed here.
        let out = s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(1), tag: t1 });
        assert!(matches!(&out.sends[0], (_, Msg::ValueResponse { tag, .. }) if *tag == t1));
        // Committed fresher entry serves a lower request.
        s.deliver(ProcessId::Writer(2), Msg::PutData { op: wop(2), tag: t2, value: value(2) });
        announce(&mut s, t2, 3);
        let out = s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(2), tag: t1 });
        assert!(matches!(&out.sends[0], (_, Msg::ValueResponse { tag, .. }) if *tag == t2));
        // Once the committed entry is offloaded to a tombstone, the server
        // can only register and regenerate.
        for i in 1..=4 {
            s.deliver(ProcessId::Backend(i), Msg::AckCodeElem { tag: t2 });
        }
        let out = s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(3), tag: t1 });
        assert_eq!(
            out.sends.iter().filter(|(_, m)| matches!(m, Msg::QueryCodeElem { .. })).count(),
            5
        );
        assert_eq!(s.registered_ops().count(), 1);
    }

    #[test]
    fn regeneration_picks_highest_tag_with_d_helpers() {
        let p = params();
        let t1 = Tag::new(1, 1);
        let t2 = Tag::new(2, 2);
        let v1 = value(3);
        let elems = p.encode_backend(&v1).unwrap();
        let mut s = EdgeServer::new(3, p.clone(), None);
        // Register a reader asking for t1.
        s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(1), tag: t1 });
        // Helpers: t2 appears on only f2 = 1 backend, t1 on d = 3; t1 wins.
        let mk = |i: u32| p.code.helper(&elems[i as usize - 1], 3).unwrap();
        s.deliver(ProcessId::Backend(1), Msg::SendHelperElem { op: rop(1), tag: t2, helper: vec![0] });
        s.deliver(ProcessId::Backend(2), Msg::SendHelperElem { op: rop(1), tag: t1, helper: mk(2) });
        s.deliver(ProcessId::Backend(3), Msg::SendHelperElem { op: rop(1), tag: t1, helper: mk(3) });
        let out = s.deliver(ProcessId::Backend(4), Msg::SendHelperElem { op: rop(1), tag: t1, helper: mk(4) });
        let expect = p.code.encode_nodes(&v1, &[3]).unwrap().remove(0);
        match &out.sends[0] {
            (ProcessId::Reader(1), Msg::CodedResponse { elem: Some((t, e)), .. }) => {
                assert_eq!(*t, t1);
                assert_eq!(e, &expect);
            }
            other => panic!("unexpected send {other:?}"),
        }
        assert_eq!(s.registered_ops().count(), 1, "reader stays registered");
        // A fifth helper after the quorum must not re-trigger.
        let out = s.deliver(ProcessId::Backend(5), Msg::SendHelperElem { op: rop(1), tag: t1, helper: mk(5) });
        assert!(out.sends.is_empty() && out.events.is_empty());
    }

    #[test]
    fn regeneration_below_request_sends_empty_response() {
        let p = params();
        let t2 = Tag::new(2, 2);
        let elems = p.encode_backend(&value(3)).unwrap();
        let mut s = EdgeServer::new(3, p.clone(), None);
        s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(1), tag: t2 });
        let mk = |i: u32| p.code.helper(&elems[i as usize - 1], 3).unwrap();
        for i in 1..=3 {
            s.deliver(ProcessId::Backend(i), Msg::SendHelperElem { op: rop(1), tag: Tag::ZERO, helper: mk(i) });
        }
        let out = s.deliver(ProcessId::Backend(4), Msg::SendHelperElem { op: rop(1), tag: Tag::ZERO, helper: mk(4) });
        assert!(
            matches!(&out.sends[0], (ProcessId::Reader(1), Msg::CodedResponse { elem: None, .. })),
            "stale regeneration answers with an empty pair"
        );
        assert_eq!(s.registered_ops().count(), 1);
    }

    #[test]
    fn regeneration_skips_send_after_reader_unregisters() {
        let p = params();
        let t1 = Tag::new(1, 1);
        let elems = p.encode_backend(&value(3)).unwrap();
        let mut s = EdgeServer::new(3, p.clone(), None);
        s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(1), tag: t1 });
        s.deliver(ProcessId::Reader(1), Msg::PutTag { op: rop(1), tag: t1 });
        assert_eq!(s.registered_ops().count(), 0);
        let mk = |i: u32| p.code.helper(&elems[i as usize - 1], 3).unwrap();
        for i in 1..=3 {
            s.deliver(ProcessId::Backend(i), Msg::SendHelperElem { op: rop(1), tag: t1, helper: mk(i) });
        }
        let out = s.deliver(ProcessId::Backend(4), Msg::SendHelperElem { op: rop(1), tag: t1, helper: mk(4) });
        assert!(out.sends.is_empty(), "no response once the reader is gone");
        assert!(matches!(
            out.events.last(),
            Some(ProtoEvent::IopEnd { iop: IopKind::Regenerate, ok: true, .. })
        ));
    }

    #[test]
    fn put_tag_fresh_unvalued_inserts_tombstone_and_serves_fallback() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        let t2 = Tag::new(2, 2);
        // Reader 2 registers while nothing it can use is stored, then the
        // data for t1 arrives (receipt alone serves no one).
        s.deliver(ProcessId::Reader(2), Msg::QueryData { op: OpId { client: ProcessId::Reader(2), seq: 1 }, tag: t1 });
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        // Reader 1 writes back t2, which this server has never stored.
        let out = s.deliver(ProcessId::Reader(1), Msg::PutTag { op: rop(9), tag: t2 });
        assert_eq!(s.committed_tag(), t2);
        assert_eq!(s.entry(t2), Some(&None), "tombstone inserted for adopted tag");
        // The fallback serve uses the best remaining valued entry, t1.
        assert!(out.sends.iter().any(|(d, m)| matches!(
            (d, m),
            (ProcessId::Reader(2), Msg::ValueResponse { tag, .. }) if *tag == t1
        )));
        // The write-back is acknowledged and t1's payload is then nulled.
        assert!(matches!(out.sends.last(), Some((ProcessId::Reader(1), Msg::Ack { .. }))));
        assert_eq!(s.entry(t1), Some(&None));
    }

    #[test]
    fn put_tag_fresh_valued_serves_and_offloads() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        let out = s.deliver(ProcessId::Reader(1), Msg::PutTag { op: rop(1), tag: t1 });
        assert_eq!(s.committed_tag(), t1);
        assert_eq!(
            out.sends.iter().filter(|(_, m)| matches!(m, Msg::WriteCodeElem { .. })).count(),
            5,
            "adopting a valued tag starts its offload"
        );
        // The later commit rule must not offload the same tag again.
        let out = announce(&mut s, t1, 3);
        assert!(
            !out.sends.iter().any(|(_, m)| matches!(m, Msg::WriteCodeElem { .. })),
            "offload runs once per tag"
        );
        // But the writer ack still goes out at commit time.
        assert!(out.sends.iter().any(|(d, m)| matches!((d, m), (ProcessId::Writer(1), Msg::Ack { .. }))));
    }

    #[test]
    fn put_tag_of_an_earlier_read_spares_a_later_registration() {
        let p = params();
        let t1 = Tag::new(1, 1);
        let elems = p.encode_backend(&value(3)).unwrap();
        let mut s = EdgeServer::new(3, p.clone(), None);
        // The reader's second operation registers, then the write-back of
        // its first operation arrives late.
        s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(2), tag: t1 });
        s.deliver(ProcessId::Reader(1), Msg::PutTag { op: rop(1), tag: t1 });
        assert_eq!(s.registered_ops().count(), 1, "the newer registration survives");
        let mk = |i: u32| p.code.helper(&elems[i as usize - 1], 3).unwrap();
        for i in 1..=3 {
            s.deliver(ProcessId::Backend(i), Msg::SendHelperElem { op: rop(2), tag: t1, helper: mk(i) });
        }
        let out = s.deliver(ProcessId::Backend(4), Msg::SendHelperElem { op: rop(2), tag: t1, helper: mk(4) });
        assert!(
            out.sends.iter().any(|(d, m)| matches!(
                (d, m),
                (ProcessId::Reader(1), Msg::CodedResponse { elem: Some(_), .. })
            )),
            "the regeneration still answers the registered operation"
        );
    }

    #[test]
    fn put_tag_stale_only_unregisters_and_acks() {
        let mut s = EdgeServer::new(3, params(), None);
        let t1 = Tag::new(1, 1);
        let t2 = Tag::new(2, 2);
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t2, value: value(2) });
        announce(&mut s, t2, 3);
        s.deliver(ProcessId::Reader(1), Msg::QueryData { op: rop(1), tag: t2 });
        let before = s.committed_tag();
        let out = s.deliver(ProcessId::Reader(1), Msg::PutTag { op: rop(1), tag: t1 });
        assert_eq!(s.committed_tag(), before, "stale tag must not move tc");
        assert_eq!(out.sends.len(), 1);
        assert!(matches!(&out.sends[0], (ProcessId::Reader(1), Msg::Ack { .. })));
        assert_eq!(s.registered_ops().count(), 0);
    }

    #[test]
    fn allow_tc_decrease_mutation_moves_tc_backward() {
        let mut s = EdgeServer::new(3, params(), Some(Mutation::AllowTcDecrease));
        let t1 = Tag::new(1, 1);
        let t2 = Tag::new(2, 2);
        s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t2, value: value(2) });
        announce(&mut s, t2, 3);
        assert_eq!(s.committed_tag(), t2);
        s.deliver(ProcessId::Reader(1), Msg::PutTag { op: rop(1), tag: t1 });
        assert_eq!(s.committed_tag(), t1, "mutated guard lets tc move backward");
    }

    #[test]
    fn skip_broadcast_wait_mutation_acks_on_receipt() {
        let mut s = EdgeServer::new(3, params(), Some(Mutation::SkipBroadcastWait));
        let t1 = Tag::new(1, 1);
        let out = s.deliver(ProcessId::Writer(1), Msg::PutData { op: wop(1), tag: t1, value: value(1) });
        assert!(
            out.sends.iter().any(|(d, m)| matches!((d, m), (ProcessId::Writer(1), Msg::Ack { .. }))),
            "mutated server acks before any commit announcement"
        );
        assert_eq!(s.committed_tag(), Tag::ZERO);
        // The commit rule later runs without double-acking.
        let out = announce(&mut s, t1, 3);
        assert!(!out.sends.iter().any(|(_, m)| matches!(m, Msg::Ack { .. })));
        assert_eq!(s.committed_tag(), t1);
    }

    #[test]
    fn query_tag_reports_highest_list_tag_not_tc() {
        let mut s = EdgeServer::new(3, params(), None);
        let t5 = Tag::new(5, 2);
        s.deliver(ProcessId::Writer(2), Msg::PutData { op: wop(1), tag: t5, value: value(9) });
        let out = s.deliver(ProcessId::Writer(1), Msg::QueryTag { op: wop(2) });
        assert!(matches!(&out.sends[0], (_, Msg::TagResponse { tag, .. }) if *tag == t5));
        let out = s.deliver(ProcessId::Reader(1), Msg::QueryCommTag { op: rop(1) });
        assert!(matches!(&out.sends[0], (_, Msg::TagResponse { tag, .. }) if *tag == Tag::ZERO));
    }
}
