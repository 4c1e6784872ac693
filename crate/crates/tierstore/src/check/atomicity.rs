//! Atomicity via the tag order: writes are ordered by their unique tags,
//! reads sit after the write whose tag they return, and that order must
//! agree with real time. Three properties are checked:
//!
//! * P1: no operation orders below one that completed before it was
//!   invoked, comparing `(tag, kind)` with writes before reads on equal
//!   tags.
//! * P2: all write tags are pairwise distinct, including writes that failed
//!   after picking a tag.
//! * P3: every completed read returns the value written under its tag, or
//!   the initial value for the zero tag.

use crate::check::{CheckKind, CheckOutcome, Witness};
use crate::codec::Value;
use crate::metrics::collect_ops;
use crate::protocol::{OpId, Tag};
use crate::sim::scenario::OpKind;
use crate::sim::trace::{Record, RecordKind};
use std::collections::BTreeMap;

/// Order flag: a write precedes a read carrying the same tag.
fn kind_rank(kind: OpKind) -> u8 {
    match kind {
        OpKind::Write => 0,
        OpKind::Read => 1,
    }
}

pub fn check(records: &[Record], v0: &Value) -> CheckOutcome {
    let ops = collect_ops(records);

    // P2: distinct write tags.
    let mut writes_by_tag: BTreeMap<Tag, OpId> = BTreeMap::new();
    for v in &ops {
        if v.kind != OpKind::Write {
            continue;
        }
        let Some(tag) = v.tag else { continue };
        if let Some(prev) = writes_by_tag.insert(tag, v.op) {
            return CheckOutcome::fail(
                CheckKind::Atomicity,
                Witness {
                    description: format!("P2: writes {prev} and {} share tag {tag}", v.op),
                    records: vec![v.invoked.1],
                    ops: vec![prev.to_string(), v.op.to_string()],
                },
            );
        }
    }

    // P1: sweep invokes and responds in trace order; at each invoke,
    // remember the strongest completed (tag, kind); at each respond,
    // the responding op must not order below that snapshot.
    let mut strongest: Option<(Tag, u8, OpId, u64)> = None;
    let mut at_invoke: BTreeMap<OpId, (Tag, u8, OpId, u64)> = BTreeMap::new();
    for r in records {
        match r.kind {
            RecordKind::Invoke => {
                if let (Some(op), Some(m)) = (r.op, strongest) {
                    at_invoke.insert(op, m);
                }
            }
            RecordKind::Respond => {
                let op = r.op.expect("respond record names its op");
                let kind = r.opkind.expect("respond record names the op kind");
                let tag = r.tag.expect("respond record names its tag");
                let rank = kind_rank(kind);
                if let Some((mt, mr, mop, mseq)) = at_invoke.get(&op).copied() {
                    if (tag, rank) < (mt, mr) {
                        return CheckOutcome::fail(
                            CheckKind::Atomicity,
                            Witness {
                                description: format!(
                                    "P1: {op} returned tag {tag} although {mop} with tag {mt} completed before {op} was invoked"
                                ),
                                records: vec![mseq, r.seq],
                                ops: vec![mop.to_string(), op.to_string()],
                            },
                        );
                    }
                }
                if strongest.map_or(true, |(mt, mr, ..)| (tag, rank) > (mt, mr)) {
                    strongest = Some((tag, rank, op, r.seq));
                }
            }
            _ => {}
        }
    }

    // P3: read values match their tag's write.
    let mut written: BTreeMap<Tag, &Value> = BTreeMap::new();
    let mut write_values: BTreeMap<OpId, &Value> = BTreeMap::new();
    for r in records {
        if r.kind == RecordKind::Invoke && r.opkind == Some(OpKind::Write) {
            if let (Some(op), Some(value)) = (r.op, r.value.as_ref()) {
                write_values.insert(op, value);
            }
        }
    }
    for v in &ops {
        if v.kind == OpKind::Write {
            if let (Some(tag), Some(value)) = (v.tag, write_values.get(&v.op)) {
                written.insert(tag, value);
            }
        }
    }
    for r in records {
        if r.kind != RecordKind::Respond || r.opkind != Some(OpKind::Read) {
            continue;
        }
        let op = r.op.expect("respond record names its op");
        let tag = r.tag.expect("read respond names its tag");
        let value = r.value.as_ref().expect("read respond carries its value");
        let expected = if tag == Tag::ZERO { Some(v0) } else { written.get(&tag).copied() };
        let ok = expected.is_some_and(|e| e == value);
        if !ok {
            let description = match expected {
                Some(_) => format!("P3: read {op} returned tag {tag} with a value differing from that write"),
                None => format!("P3: read {op} returned tag {tag}, which no write produced"),
            };
            return CheckOutcome::fail(
                CheckKind::Atomicity,
                Witness { description, records: vec![r.seq], ops: vec![op.to_string()] },
            );
        }
    }

    let completed = ops.iter().filter(|v| v.completed()).count();
    CheckOutcome::pass(CheckKind::Atomicity)
        .note(format!("{completed} completed operations ordered consistently"))
}
