//! Trace verdicts: atomicity over the tag order, liveness, server-state
//! invariant monitors, latency bounds, and cost accounting against the
//! closed forms. Every fail carries a witness naming the records and
//! operations that exhibit it.

pub mod atomicity;
pub mod costs;
pub mod invariants;
pub mod latency;
pub mod liveness;

use crate::sim::SimRun;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Atomicity,
    Liveness,
    Invariants,
    Latency,
    Costs,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] = [
        CheckKind::Atomicity,
        CheckKind::Liveness,
        CheckKind::Invariants,
        CheckKind::Latency,
        CheckKind::Costs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Atomicity => "atomicity",
            CheckKind::Liveness => "liveness",
            CheckKind::Invariants => "invariants",
            CheckKind::Latency => "latency",
            CheckKind::Costs => "costs",
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CheckKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown check {s:?}, expected one of atomicity, liveness, invariants, latency, costs"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The trace is outside the model the check speaks about (crash budget
    /// exceeded, unbounded delays), so nothing is asserted.
    Refused,
}

/// What a failing check points at: the offending records by sequence number
/// and the operations involved. Replaying the named records reproduces the
/// violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub description: String,
    pub records: Vec<u64>,
    pub ops: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: CheckKind,
    pub status: CheckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckOutcome {
    pub fn pass(check: CheckKind) -> Self {
        CheckOutcome { check, status: CheckStatus::Pass, witness: None, notes: Vec::new() }
    }

    pub fn fail(check: CheckKind, witness: Witness) -> Self {
        CheckOutcome { check, status: CheckStatus::Fail, witness: Some(witness), notes: Vec::new() }
    }

    pub fn refused(check: CheckKind, reason: String) -> Self {
        CheckOutcome { check, status: CheckStatus::Refused, witness: None, notes: vec![reason] }
    }

    pub fn note(mut self, note: String) -> Self {
        self.notes.push(note);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// True iff no selected check failed; refused checks do not fail.
    pub pass: bool,
    pub outcomes: Vec<CheckOutcome>,
}

pub fn run_checks(run: &SimRun, kinds: &[CheckKind]) -> Verdict {
    let v0 = run.scenario.initial_value(&run.params);
    let outcomes: Vec<CheckOutcome> = kinds
        .iter()
        .map(|k| match k {
            CheckKind::Atomicity => atomicity::check(&run.records, &v0),
            CheckKind::Liveness => liveness::check(run),
            CheckKind::Invariants => invariants::check(run),
            CheckKind::Latency => latency::check(run),
            CheckKind::Costs => costs::check(run),
        })
        .collect();
    Verdict { pass: outcomes.iter().all(|o| o.status != CheckStatus::Fail), outcomes }
}
