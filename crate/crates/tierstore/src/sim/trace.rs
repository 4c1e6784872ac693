//! Trace records: one JSON object per observable simulator event, written
//! as JSON Lines. Absent fields are omitted, so each record kind stays
//! compact. `seq` orders records globally; a delivery's `mid` names the
//! `seq` of the send it consumed.

use crate::codec::Value;
use crate::protocol::{ActionKind, IopKind, OpId, ProcessId, Tag};
use crate::sim::scenario::OpKind;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    Invoke,
    Respond,
    Send,
    Deliver,
    Action,
    Crash,
    InternalOpStart,
    InternalOpEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub time: u64,
    pub seq: u64,
    pub process: ProcessId,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<OpId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opkind: Option<OpKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mid: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act: Option<ActionKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iop: Option<IopKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ok: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<Tag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    /// Payload size of a send, in field symbols; absent on zero-payload
    /// messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sym: Option<u64>,
    /// `sym` normalized by the value size `b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
}

impl Record {
    pub fn new(time: u64, seq: u64, process: ProcessId, kind: RecordKind) -> Self {
        Record {
            time,
            seq,
            process,
            kind,
            op: None,
            opkind: None,
            msg: None,
            from: None,
            to: None,
            mid: None,
            act: None,
            iop: None,
            ok: None,
            tag: None,
            value: None,
            sym: None,
            norm: None,
        }
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[Record]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> std::io::Result<Vec<Record>> {
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("trace line {}: {e}", i + 1),
            )
        })?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip_through_jsonl() {
        let p: ProcessId = "s1".parse().unwrap();
        let w: ProcessId = "w1".parse().unwrap();
        let op: OpId = "w1:1".parse().unwrap();
        let mut send = Record::new(3, 7, p, RecordKind::Send);
        send.msg = Some("PUT-DATA".into());
        send.op = Some(op);
        send.to = Some(w);
        send.tag = Some(Tag::new(1, 1));
        send.sym = Some(5);
        send.norm = Some(1.0);
        let mut crash = Record::new(9, 8, w, RecordKind::Crash);
        crash.ok = None;
        let records = vec![send, crash];

        let mut buf = Vec::new();
        write_jsonl(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().ends_with(r#""kind":"crash"}"#));

        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn absent_fields_are_omitted() {
        let r = Record::new(0, 0, "b2".parse().unwrap(), RecordKind::Deliver);
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(line, r#"{"time":0,"seq":0,"process":"b2","kind":"deliver"}"#);
    }
}
