//! Communication and storage costs against the closed forms. The forms are
//! worst-case figures, so the upper bounds hold unconditionally; schedules
//! where a superseded value skips its offload or a write-back overtakes a
//! straggling regeneration legitimately come in under them. Runs that meet
//! a form exactly are counted in the notes, and the reference scenarios pin
//! those equalities op by op.

use crate::check::{CheckKind, CheckOutcome, Witness};
use crate::metrics::{closed_forms, measure_costs, min_storage_l2, DeltaOutcome};
use crate::protocol::ProcessId;
use crate::sim::scenario::OpKind;
use crate::sim::trace::RecordKind;
use crate::sim::SimRun;
use num_rational::Ratio;

pub fn check(run: &SimRun) -> CheckOutcome {
    let p = &run.params;
    let forms = closed_forms(p);
    let report = measure_costs(&run.records, p);
    let backend_crashes = run
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Crash && matches!(r.process, ProcessId::Backend(_)))
        .count() as u32;
    let quiesced =
        run.undelivered == 0 && report.ops.iter().all(|c| c.latency.is_some());

    let mut exact_writes = 0usize;
    let mut exact_reads = 0usize;
    for c in &report.ops {
        if c.latency.is_none() {
            continue;
        }
        match c.kind {
            OpKind::Write => {
                if c.norm > forms.write {
                    return CheckOutcome::fail(
                        CheckKind::Costs,
                        Witness {
                            description: format!(
                                "write {} cost {} exceeds the closed form {}",
                                c.op, c.norm, forms.write
                            ),
                            records: Vec::new(),
                            ops: vec![c.op.to_string()],
                        },
                    );
                }
                if c.norm == forms.write {
                    exact_writes += 1;
                }
            }
            OpKind::Read => {
                if c.norm > forms.read_upper {
                    return CheckOutcome::fail(
                        CheckKind::Costs,
                        Witness {
                            description: format!(
                                "read {} cost {} exceeds the concurrent bound {}",
                                c.op, c.norm, forms.read_upper
                            ),
                            records: Vec::new(),
                            ops: vec![c.op.to_string()],
                        },
                    );
                }
                if c.delta == Some(DeltaOutcome::Known(0)) {
                    if c.norm > forms.read_base {
                        return CheckOutcome::fail(
                            CheckKind::Costs,
                            Witness {
                                description: format!(
                                    "read {} saw no fresher write but its cost {} exceeds the base form {}",
                                    c.op, c.norm, forms.read_base
                                ),
                                records: Vec::new(),
                                ops: vec![c.op.to_string()],
                            },
                        );
                    }
                    if c.norm == forms.read_base {
                        exact_reads += 1;
                    }
                }
            }
        }
    }

    // More than f2 backend crashes can strand an offload short of its ack
    // quorum, legitimately pinning a payload at an alive edge.
    if quiesced && backend_crashes <= p.f2 {
        let last = report.storage.points.last().expect("timeline has an initial point");
        if last.l1_values != 0 {
            return CheckOutcome::fail(
                CheckKind::Costs,
                Witness {
                    description: format!(
                        "{} edge payloads still resident although the run quiesced",
                        last.l1_values
                    ),
                    records: vec![last.at.1],
                    ops: Vec::new(),
                },
            );
        }
    }
    if backend_crashes == 0 && report.storage.l2_final != forms.l2_storage {
        return CheckOutcome::fail(
            CheckKind::Costs,
            Witness {
                description: format!(
                    "backend storage {} differs from the closed form {}",
                    report.storage.l2_final, forms.l2_storage
                ),
                records: Vec::new(),
                ops: Vec::new(),
            },
        );
    }

    let mut out = CheckOutcome::pass(CheckKind::Costs).note(format!(
        "{} operations within bounds; {exact_writes} writes and {exact_reads} uncontended reads matched the closed forms exactly",
        report.ops.iter().filter(|c| c.latency.is_some()).count()
    ));
    if forms.l2_storage <= Ratio::from_integer(2) * min_storage_l2(p) {
        out = out.note(format!(
            "backend storage {} within twice the minimum-storage figure {}",
            forms.l2_storage,
            min_storage_l2(p)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::CheckStatus;
    use crate::codec::CodeConfig;
    use crate::protocol::Tag;
    use crate::sim::run_scenario;
    use crate::sim::scenario::{
        DelayClasses, DelayModel, Scenario, WorkItem, SCENARIO_VERSION,
    };
    use crate::sim::trace::Record;

    fn scenario() -> Scenario {
        Scenario {
            version: SCENARIO_VERSION,
            code: CodeConfig { n1: 4, f1: 1, n2: 5, f2: 1, beta: 1, q: 65537 },
            delays: DelayClasses {
                client_edge: DelayModel::Fixed { value: 1 },
                edge_edge: DelayModel::Fixed { value: 1 },
                edge_backend: DelayModel::Fixed { value: 10 },
            },
            link_overrides: Vec::new(),
            crashes: Vec::new(),
            workload: vec![
                WorkItem { client: "w1".into(), op: OpKind::Write, value_seed: Some(3), at: 0 },
                WorkItem { client: "r1".into(), op: OpKind::Read, value_seed: None, at: 40 },
            ],
            initial_value_seed: None,
            seed: 1,
            horizon: 500,
        }
    }

    #[test]
    fn quiescent_run_matches_the_closed_forms() {
        let run = run_scenario(&scenario(), None);
        let out = check(&run);
        assert_eq!(out.status, CheckStatus::Pass, "{:?}", out.witness);
        assert!(out.notes[0].contains("1 writes and 1 uncontended reads"));
    }

    #[test]
    fn concurrent_read_stays_within_the_upper_bound() {
        let mut s = scenario();
        s.workload[1].at = 0;
        let run = run_scenario(&s, None);
        assert_eq!(check(&run).status, CheckStatus::Pass);
    }

    #[test]
    fn padded_write_traffic_is_caught() {
        let mut run = run_scenario(&scenario(), None);
        let seq = run.records.last().unwrap().seq + 1;
        let mut fake = Record::new(90, seq, ProcessId::Edge(1), RecordKind::Send);
        fake.msg = Some("WRITE-CODE-ELEM".into());
        fake.to = Some(ProcessId::Backend(1));
        fake.tag = Some(Tag { z: 1, w: 1 });
        fake.sym = Some(u64::from(run.params.alpha));
        run.records.push(fake);
        let out = check(&run);
        assert_eq!(out.status, CheckStatus::Fail);
        assert!(out.witness.unwrap().description.contains("exceeds the closed form"));
    }
}
