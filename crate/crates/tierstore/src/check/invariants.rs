//! Continuous server-state monitors:
//!
//! * committed tags never decrease at any edge;
//! * after each server step, no edge holds a valued payload below its
//!   committed tag (stale payloads are garbage collected);
//! * at every response point, fewer than `f1 + k` alive edges sit below the
//!   freshest completed tag, so every client quorum meets it;
//! * a regeneration that starts after an offload completed rebuilds a tag
//!   at least that fresh;
//! * backend elements only ever advance to strictly fresher tags;
//! * crashed processes stay silent;
//! * every message sent to a never-crashed destination is delivered
//!   exactly once, consistently, and the remainder matches the engine's
//!   undelivered count.

use crate::check::{CheckKind, CheckOutcome, Witness};
use crate::protocol::{ActionKind, IopKind, OpId, ProcessId, Tag};
use crate::sim::trace::{Record, RecordKind};
use crate::sim::SimRun;
use std::collections::{BTreeMap, BTreeSet};

pub fn check(run: &SimRun) -> CheckOutcome {
    let monitors: [(&str, fn(&SimRun) -> Option<Witness>); 7] = [
        ("committed-tag monotonicity", committed_tag_monotone),
        ("stale-payload collection", stale_payloads_collected),
        ("completed-tag persistence", completed_tags_persist),
        ("regenerated-tag freshness", regenerated_tags_fresh),
        ("backend element monotonicity", backend_elements_monotone),
        ("crash isolation", crashed_stay_silent),
        ("delivery accounting", deliveries_consistent),
    ];
    for (name, monitor) in monitors {
        if let Some(witness) = monitor(run) {
            return CheckOutcome::fail(CheckKind::Invariants, witness)
                .note(format!("violated monitor: {name}"));
        }
    }
    CheckOutcome::pass(CheckKind::Invariants)
        .note(format!("{} monitors held over {} records", monitors.len(), run.records.len()))
}

fn committed_tag_monotone(run: &SimRun) -> Option<Witness> {
    let mut tc: BTreeMap<ProcessId, Tag> = BTreeMap::new();
    for r in &run.records {
        if r.kind != RecordKind::Action || r.act != Some(ActionKind::SetTc) {
            continue;
        }
        let tag = r.tag.expect("commit action names its tag");
        let prev = tc.insert(r.process, tag).unwrap_or(Tag::ZERO);
        if tag < prev {
            return Some(Witness {
                description: format!(
                    "{} lowered its committed tag from {prev} to {tag}",
                    r.process
                ),
                records: vec![r.seq],
                ops: Vec::new(),
            });
        }
    }
    None
}

/// Replays each edge's stored list from its action records and, whenever a
/// new engine event shows the previous step has finished, confirms no
/// touched edge kept a valued payload below its committed tag.
fn stale_payloads_collected(run: &SimRun) -> Option<Witness> {
    struct EdgeView {
        tc: Tag,
        valued: BTreeSet<Tag>,
    }
    let mut edges: BTreeMap<ProcessId, EdgeView> = BTreeMap::new();
    let mut dirty: BTreeMap<ProcessId, u64> = BTreeMap::new();
    let validate = |edges: &BTreeMap<ProcessId, EdgeView>,
                        dirty: &mut BTreeMap<ProcessId, u64>|
     -> Option<Witness> {
        for (process, seq) in std::mem::take(dirty) {
            let e = &edges[&process];
            if let Some(stale) = e.valued.range(..e.tc).next() {
                return Some(Witness {
                    description: format!(
                        "{process} still holds a payload for {stale} below its committed tag {}",
                        e.tc
                    ),
                    records: vec![seq],
                    ops: Vec::new(),
                });
            }
        }
        None
    };
    for r in &run.records {
        match r.kind {
            RecordKind::Deliver | RecordKind::Invoke | RecordKind::Crash => {
                if let Some(w) = validate(&edges, &mut dirty) {
                    return Some(w);
                }
                if r.kind == RecordKind::Crash {
                    edges.remove(&r.process);
                }
            }
            RecordKind::Action if matches!(r.process, ProcessId::Edge(_)) => {
                let e = edges
                    .entry(r.process)
                    .or_insert_with(|| EdgeView { tc: Tag::ZERO, valued: BTreeSet::new() });
                match r.act {
                    Some(ActionKind::InsertValued) => {
                        e.valued.insert(r.tag.expect("insert names its tag"));
                    }
                    Some(ActionKind::NullEntry) => {
                        e.valued.remove(&r.tag.expect("null names its tag"));
                    }
                    Some(ActionKind::SetTc) => e.tc = r.tag.expect("commit names its tag"),
                    _ => {}
                }
                dirty.insert(r.process, r.seq);
            }
            _ => {}
        }
    }
    validate(&edges, &mut dirty)
}

/// At each response point, the freshest tag any completed operation carries
/// must already be committed widely enough that every set of `f1 + k` alive
/// edges contains it: fewer than `f1 + k` alive edges may sit below it.
/// Only meaningful within the crash budget; monitoring stops past it.
fn completed_tags_persist(run: &SimRun) -> Option<Witness> {
    let p = &run.params;
    let quorum = u64::from(p.edge_quorum());
    let mut tc: BTreeMap<u32, Tag> = (1..=p.n1).map(|i| (i, Tag::ZERO)).collect();
    let mut edge_crashes = 0u32;
    let mut freshest: Option<(Tag, OpId)> = None;
    for r in &run.records {
        match r.kind {
            RecordKind::Action if r.act == Some(ActionKind::SetTc) => {
                if let ProcessId::Edge(i) = r.process {
                    tc.insert(i, r.tag.expect("commit names its tag"));
                }
            }
            RecordKind::Crash => {
                if let ProcessId::Edge(i) = r.process {
                    tc.remove(&i);
                    edge_crashes += 1;
                    if edge_crashes > p.f1 {
                        return None;
                    }
                }
            }
            RecordKind::Respond => {
                let tag = r.tag.expect("respond record names its tag");
                let op = r.op.expect("respond record names its op");
                if freshest.map_or(true, |(t, _)| tag > t) {
                    freshest = Some((tag, op));
                }
                let (tag, op) = freshest.expect("just set");
                let behind = tc.values().filter(|t| **t < tag).count() as u64;
                if behind >= quorum {
                    return Some(Witness {
                        description: format!(
                            "{behind} of {} alive edges sit below {tag} of completed {op}, so some client quorum misses it",
                            tc.len()
                        ),
                        records: vec![r.seq],
                        ops: vec![op.to_string()],
                    });
                }
            }
            _ => {}
        }
    }
    None
}

fn regenerated_tags_fresh(run: &SimRun) -> Option<Witness> {
    let mut offloaded: Option<(Tag, u64)> = None;
    let mut open: BTreeMap<(ProcessId, OpId), Option<(Tag, u64)>> = BTreeMap::new();
    for r in &run.records {
        match (r.kind, r.iop) {
            (RecordKind::InternalOpEnd, Some(IopKind::Offload)) if r.ok == Some(true) => {
                let tag = r.tag.expect("completed offload names its tag");
                if offloaded.map_or(true, |(t, _)| tag > t) {
                    offloaded = Some((tag, r.seq));
                }
            }
            (RecordKind::InternalOpStart, Some(IopKind::Regenerate)) => {
                let op = r.op.expect("regeneration names the registered read");
                open.insert((r.process, op), offloaded);
            }
            (RecordKind::InternalOpEnd, Some(IopKind::Regenerate)) => {
                let op = r.op.expect("regeneration names the registered read");
                let snapshot = open.remove(&(r.process, op)).flatten();
                if r.ok != Some(true) {
                    continue;
                }
                let tag = r.tag.expect("successful regeneration names its tag");
                if let Some((floor, floor_seq)) = snapshot {
                    if tag < floor {
                        return Some(Witness {
                            description: format!(
                                "{} regenerated {tag} although {floor} was fully offloaded before the regeneration started",
                                r.process
                            ),
                            records: vec![floor_seq, r.seq],
                            ops: vec![op.to_string()],
                        });
                    }
                }
            }
            _ => {}
        }
    }
    None
}

fn backend_elements_monotone(run: &SimRun) -> Option<Witness> {
    let mut stored: BTreeMap<ProcessId, Tag> = BTreeMap::new();
    for r in &run.records {
        if r.kind != RecordKind::Action || r.act != Some(ActionKind::StoreElem) {
            continue;
        }
        let tag = r.tag.expect("store action names its tag");
        if let Some(prev) = stored.insert(r.process, tag) {
            if tag <= prev {
                return Some(Witness {
                    description: format!(
                        "{} replaced its element for {prev} with one for {tag}",
                        r.process
                    ),
                    records: vec![r.seq],
                    ops: Vec::new(),
                });
            }
        }
    }
    None
}

fn crashed_stay_silent(run: &SimRun) -> Option<Witness> {
    let mut crashed: BTreeSet<ProcessId> = BTreeSet::new();
    for r in &run.records {
        if crashed.contains(&r.process) {
            return Some(Witness {
                description: format!("{} acted after crashing", r.process),
                records: vec![r.seq],
                ops: Vec::new(),
            });
        }
        if r.kind == RecordKind::Crash {
            crashed.insert(r.process);
        }
    }
    None
}

fn deliveries_consistent(run: &SimRun) -> Option<Witness> {
    let sends: BTreeMap<u64, &Record> = run
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Send)
        .map(|r| (r.seq, r))
        .collect();
    let crashed_ever: BTreeSet<ProcessId> = run
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Crash)
        .map(|r| r.process)
        .collect();
    let mut delivered: BTreeSet<u64> = BTreeSet::new();
    for r in &run.records {
        if r.kind != RecordKind::Deliver {
            continue;
        }
        let mid = r.mid.expect("delivery names the send it consumed");
        let Some(s) = sends.get(&mid) else {
            return Some(witness_at(r, "delivery without a matching send"));
        };
        if s.to != Some(r.process) || Some(s.process) != r.from || s.msg != r.msg {
            return Some(witness_at(r, "delivery disagrees with its send"));
        }
        if s.time > r.time {
            return Some(witness_at(r, "delivery before its send"));
        }
        if !delivered.insert(mid) {
            return Some(witness_at(r, "message delivered twice"));
        }
    }
    let missing: Vec<u64> = sends
        .values()
        .filter(|s| {
            !delivered.contains(&s.seq) && !crashed_ever.contains(&s.to.expect("sends have a destination"))
        })
        .map(|s| s.seq)
        .collect();
    if missing.len() as u64 != run.undelivered {
        return Some(Witness {
            description: format!(
                "{} sends to never-crashed destinations lack deliveries but the engine reports {} undelivered",
                missing.len(),
                run.undelivered
            ),
            records: missing,
            ops: Vec::new(),
        });
    }
    None
}

fn witness_at(r: &Record, description: &str) -> Witness {
    Witness { description: description.into(), records: vec![r.seq], ops: Vec::new() }
}
