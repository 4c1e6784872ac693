//! Reader automaton: a three-phase client. It learns the highest committed
//! tag from an edge quorum, gathers data at least that fresh (full values or
//! enough coded elements to decode), and writes the chosen tag back before
//! returning.

use super::{client_quorum, Msg, Mutation, OpId, ProcessId, ProtoEvent, StepOutput, Tag};
use crate::codec::{Element, SystemParams, Value};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
enum Phase {
    Idle,
    GetCommTag {
        op: OpId,
        responses: BTreeMap<u32, Tag>,
    },
    GetData {
        op: OpId,
        responders: BTreeSet<u32>,
        best_value: Option<(Tag, Value)>,
        coded: BTreeMap<Tag, BTreeMap<u32, Element>>,
    },
    PutTag {
        op: OpId,
        tag: Tag,
        value: Value,
        ackers: BTreeSet<u32>,
    },
}

#[derive(Debug, Clone)]
pub struct Reader {
    id: u32,
    params: SystemParams,
    mutation: Option<Mutation>,
    phase: Phase,
}

impl Reader {
    pub fn new(id: u32, params: SystemParams, mutation: Option<Mutation>) -> Self {
        Reader { id, params, mutation, phase: Phase::Idle }
    }

    fn quorum(&self) -> usize {
        client_quorum(&self.params, self.mutation)
    }

    /// Coded elements needed before this reader attempts a decode.
    fn decode_count(&self) -> usize {
        match self.mutation {
            Some(Mutation::DecodeKMinus1) => (self.params.k as usize).saturating_sub(1),
            _ => self.params.k as usize,
        }
    }

    fn all_edges(&self) -> impl Iterator<Item = ProcessId> {
        (1..=self.params.n1).map(ProcessId::Edge)
    }

    /// Start a read. The caller guarantees the previous operation finished.
    pub fn invoke(&mut self, op: OpId) -> StepOutput {
        assert!(matches!(self.phase, Phase::Idle), "reader {} already busy", self.id);
        let mut out = StepOutput::default();
        for dst in self.all_edges() {
            out.send(dst, Msg::QueryCommTag { op });
        }
        self.phase = Phase::GetCommTag { op, responses: BTreeMap::new() };
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
            (Phase::GetCommTag { op, mut responses }, Msg::TagResponse { op: mop, tag })
                if mop == op =>
            {
                responses.insert(sender, tag);
                if responses.len() < self.quorum() {
                    return Phase::GetCommTag { op, responses };
                }
                let t_req = responses.values().max().copied().unwrap_or(Tag::ZERO);
                for dst in self.all_edges() {
                    out.send(dst, Msg::QueryData { op, tag: t_req });
                }
                Phase::GetData {
                    op,
                    responders: BTreeSet::new(),
                    best_value: None,
                    coded: BTreeMap::new(),
                }
            }
            (
                Phase::GetData { op, mut responders, mut best_value, coded },
                Msg::ValueResponse { op: mop, tag, value },
            ) if mop == op => {
                responders.insert(sender);
                if best_value.as_ref().map_or(true, |(t, _)| tag > *t) {
                    best_value = Some((tag, value));
                }
                self.finish_get_data(op, responders, best_value, coded, out)
            }
            (
                Phase::GetData { op, mut responders, best_value, mut coded },
                Msg::CodedResponse { op: mop, elem },
            ) if mop == op => {
                responders.insert(sender);
                if let Some((tag, elem)) = elem {
                    coded.entry(tag).or_default().insert(sender, elem);
                }
                self.finish_get_data(op, responders, best_value, coded, out)
            }
            (Phase::PutTag { op, tag, value, mut ackers }, Msg::Ack { op: mop, .. })
                if mop == op =>
            {
                ackers.insert(sender);
                if ackers.len() < self.quorum() {
                    return Phase::PutTag { op, tag, value, ackers };
                }
                out.events.push(ProtoEvent::Respond {
                    op,
                    write: false,
                    tag,
                    value: Some(value),
                });
                Phase::Idle
            }
            // Stale or duplicate traffic for finished phases is dropped.
            (phase, _) => phase,
        }
    }

    /// Completion rule for the data phase: a quorum of distinct responders,
    /// among which either some full value arrived or enough coded elements
    /// share one tag to decode. Empty responses count toward the quorum but
    /// never produce a candidate; the highest-tagged candidate wins.
    fn finish_get_data(
        &self,
        op: OpId,
        responders: BTreeSet<u32>,
        best_value: Option<(Tag, Value)>,
        coded: BTreeMap<Tag, BTreeMap<u32, Element>>,
        out: &mut StepOutput,
    ) -> Phase {
        let stay = |responders, best_value, coded| Phase::GetData {
            op,
            responders,
            best_value,
            coded,
        };
        if responders.len() < self.quorum() {
            return stay(responders, best_value, coded);
        }
        let decodable = coded
            .iter()
            .rev()
            .find(|(_, shares)| shares.len() >= self.decode_count())
            .map(|(t, shares)| (*t, shares));
        let chosen = match (&best_value, decodable) {
            (Some((vt, _)), Some((ct, shares))) if ct > *vt => Some((ct, self.decode_from(shares))),
            (Some((vt, v)), _) => Some((*vt, v.clone())),
            (None, Some((ct, shares))) => Some((ct, self.decode_from(shares))),
            (None, None) => None,
        };
        let (tag, value) = match chosen {
            Some(c) => c,
            None => return stay(responders, best_value, coded),
        };
        if self.mutation == Some(Mutation::SkipWriteBack) {
            out.events.push(ProtoEvent::Respond { op, write: false, tag, value: Some(value) });
            return Phase::Idle;
        }
        for dst in self.all_edges() {
            out.send(dst, Msg::PutTag { op, tag });
        }
        Phase::PutTag { op, tag, value, ackers: BTreeSet::new() }
    }

    fn decode_from(&self, shares: &BTreeMap<u32, Element>) -> Value {
        let mut picked: Vec<(u32, Element)> = shares
            .iter()
            .take(self.decode_count())
            .map(|(i, e)| (*i, e.clone()))
            .collect();
        if self.mutation == Some(Mutation::DecodeKMinus1) {
            let used: BTreeSet<u32> = picked.iter().map(|(i, _)| *i).collect();
            let pad = (1..=self.params.n1)
                .find(|i| !used.contains(i))
                .expect("n1 >= k leaves a free coordinate");
            picked.push((pad, vec![0; self.params.alpha as usize]));
        }
        self.params
            .code
            .decode(&picked)
            .expect("decode from distinct edge coordinates")
    }
}
