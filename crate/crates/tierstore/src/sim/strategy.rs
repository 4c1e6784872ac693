//! Adversarial scheduling strategies: deterministic scenario transforms
//! that steer a run toward historically fragile schedules before the
//! simulator executes it.

use crate::protocol::ProcessId;
use crate::sim::scenario::{CrashSpec, DelayModel, OpKind, Scenario};
use crate::sim::trace::RecordKind;
use crate::sim::run_scenario;
use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Run the scenario as written.
    #[default]
    None,
    /// Pin every edge-to-backend link at its worst delay, so offloads and
    /// regenerations drag behind the client-facing protocol.
    SlowL2,
    /// Pin every edge-to-edge link at its worst delay, starving the commit
    /// relay.
    SlowInterlink,
    /// Dry-run the scenario, then crash the first `f1` edge servers that
    /// acknowledged the first completed write, each right after its
    /// acknowledgment left.
    KillAckedQuorum,
    /// Pull every write invocation to the earliest one, maximizing writer
    /// contention.
    ConcurrentWriters,
    /// Widen every delay to a uniform draw up to three times its bound, so
    /// messages overtake each other aggressively.
    Reorder,
    /// Replace every delay with a heavy-tailed draw and extend the horizon;
    /// no finite delay bound holds.
    Unbounded,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::None,
        Strategy::SlowL2,
        Strategy::SlowInterlink,
        Strategy::KillAckedQuorum,
        Strategy::ConcurrentWriters,
        Strategy::Reorder,
        Strategy::Unbounded,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::SlowL2 => "slow-l2",
            Strategy::SlowInterlink => "slow-interlink",
            Strategy::KillAckedQuorum => "kill-acked-quorum",
            Strategy::ConcurrentWriters => "concurrent-writers",
            Strategy::Reorder => "reorder",
            Strategy::Unbounded => "unbounded",
        }
    }

    /// Transform the scenario. The result is still a valid scenario; running
    /// it is up to the caller.
    pub fn apply(&self, base: &Scenario) -> Scenario {
        match self {
            Strategy::None => base.clone(),
            Strategy::SlowL2 => {
                let mut s = base.clone();
                s.delays.edge_backend = DelayModel::Fixed { value: bound_of(s.delays.edge_backend) };
                s
            }
            Strategy::SlowInterlink => {
                let mut s = base.clone();
                s.delays.edge_edge = DelayModel::Fixed { value: bound_of(s.delays.edge_edge) };
                s
            }
            Strategy::KillAckedQuorum => kill_acked_quorum(base),
            Strategy::ConcurrentWriters => {
                let mut s = base.clone();
                let first = s
                    .workload
                    .iter()
                    .filter(|w| w.op == OpKind::Write)
                    .map(|w| w.at)
                    .min();
                if let Some(at) = first {
                    for w in &mut s.workload {
                        if w.op == OpKind::Write {
                            w.at = at;
                        }
                    }
                }
                s
            }
            Strategy::Reorder => {
                let mut s = base.clone();
                for m in [
                    &mut s.delays.client_edge,
                    &mut s.delays.edge_edge,
                    &mut s.delays.edge_backend,
                ] {
                    *m = DelayModel::Uniform { lo: 1, hi: 3 * bound_of(*m).max(1) };
                }
                s
            }
            Strategy::Unbounded => {
                let tail = DelayModel::HeavyTail { scale: 3.0, cap: 2000 };
                let mut s = base.clone();
                s.delays.client_edge = tail;
                s.delays.edge_edge = tail;
                s.delays.edge_backend = tail;
                s.link_overrides.clear();
                s.horizon = s.horizon.max(1_000_000);
                s
            }
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

/// Worst plausible delay of a model; for the heavy tail that is its cap.
fn bound_of(m: DelayModel) -> u64 {
    match m {
        DelayModel::Fixed { value } => value,
        DelayModel::Uniform { hi, .. } => hi,
        DelayModel::HeavyTail { cap, .. } => cap,
    }
}

/// Crash the first `f1` edge servers whose write acknowledgments reached the
/// first completed write, each one tick after it sent the acknowledgment.
/// Crashing at the send tick itself could retroactively drop the very
/// delivery the dry run used, so the extra tick keeps the prefix identical.
fn kill_acked_quorum(base: &Scenario) -> Scenario {
    let params = base.params();
    if params.f1 == 0 {
        return base.clone();
    }
    let dry = run_scenario(base, None);
    let first_write = dry
        .records
        .iter()
        .find(|r| r.kind == RecordKind::Respond && r.opkind == Some(OpKind::Write));
    let Some(first_write) = first_write else {
        return base.clone();
    };
    let wop = first_write.op.expect("responds carry their op");

    let send_times: BTreeMap<u64, (ProcessId, u64)> = dry
        .records
        .iter()
        .filter(|r| {
            r.kind == RecordKind::Send
                && r.msg.as_deref() == Some("ACK")
                && r.op == Some(wop)
                && matches!(r.process, ProcessId::Edge(_))
        })
        .map(|r| (r.seq, (r.process, r.time)))
        .collect();
    let mut victims: Vec<(ProcessId, u64)> = Vec::new();
    for r in &dry.records {
        if r.kind != RecordKind::Deliver || r.process != wop.client {
            continue;
        }
        let Some((edge, sent_at)) = r.mid.and_then(|mid| send_times.get(&mid)).copied() else {
            continue;
        };
        if !victims.iter().any(|(v, _)| *v == edge) {
            victims.push((edge, sent_at));
        }
        if victims.len() == params.f1 as usize {
            break;
        }
    }

    let mut s = base.clone();
    for (edge, sent_at) in victims {
        s.crashes.push(CrashSpec { process: edge.to_string(), at: sent_at + 1 });
    }
    s
}
