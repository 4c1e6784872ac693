//! Liveness: every operation a never-crashed client invokes must respond.
//! Asserted only inside the fault model; past the crash budget the checker
//! refuses rather than blame the protocol.

use crate::check::{CheckKind, CheckOutcome, Witness};
use crate::metrics::collect_ops;
use crate::protocol::ProcessId;
use crate::sim::SimRun;

pub fn check(run: &SimRun) -> CheckOutcome {
    let p = &run.params;
    let mut edge_crashes = 0u32;
    let mut backend_crashes = 0u32;
    for c in &run.scenario.crashes {
        match c.process.parse::<ProcessId>() {
            Ok(ProcessId::Edge(_)) => edge_crashes += 1,
            Ok(ProcessId::Backend(_)) => backend_crashes += 1,
            _ => {}
        }
    }
    if edge_crashes > p.f1 {
        return CheckOutcome::refused(
            CheckKind::Liveness,
            format!("{edge_crashes} edge crashes exceed the tolerance f1={}", p.f1),
        );
    }
    if backend_crashes > p.f2 {
        return CheckOutcome::refused(
            CheckKind::Liveness,
            format!("{backend_crashes} backend crashes exceed the tolerance f2={}", p.f2),
        );
    }

    let ops = collect_ops(&run.records);
    let mut completed = 0usize;
    let mut exempt = 0usize;
    for v in &ops {
        if v.client_crashed.is_some() {
            exempt += 1;
            continue;
        }
        if v.completed() {
            completed += 1;
        } else {
            return CheckOutcome::fail(
                CheckKind::Liveness,
                Witness {
                    description: format!(
                        "{} invoked by never-crashed {} got no response",
                        v.op, v.op.client
                    ),
                    records: vec![v.invoked.1],
                    ops: vec![v.op.to_string()],
                },
            );
        }
    }
    CheckOutcome::pass(CheckKind::Liveness).note(format!(
        "{completed} operations of never-crashed clients completed, {exempt} of crashed clients exempt"
    ))
}
