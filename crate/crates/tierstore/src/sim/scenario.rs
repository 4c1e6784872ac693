//! Scenario files: code parameters, network delay models, crash schedule,
//! and client workload, all under one seed.

use crate::codec::{CodeConfig, SystemParams, Value};
use crate::protocol::ProcessId;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SCENARIO_VERSION: u32 = 1;

/// Delay distribution for one link class or one overridden link. Samples are
/// whole ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    Fixed { value: u64 },
    Uniform { lo: u64, hi: u64 },
    /// Pareto-like tail: `scale * (1/u - 1)` rounded, clamped to `cap`.
    HeavyTail { scale: f64, cap: u64 },
}

impl DelayModel {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        match *self {
            DelayModel::Fixed { value } => value,
            DelayModel::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            DelayModel::HeavyTail { scale, cap } => {
                let u: f64 = 1.0 - rng.gen::<f64>();
                ((scale * (1.0 / u - 1.0)).round() as u64).min(cap)
            }
        }
    }

    /// Worst-case delay, or `None` when the model is effectively unbounded
    /// for analysis purposes (the tail cap is a simulation guard, not a
    /// promise the network keeps).
    pub fn max_delay(&self) -> Option<u64> {
        match *self {
            DelayModel::Fixed { value } => Some(value),
            DelayModel::Uniform { hi, .. } => Some(hi),
            DelayModel::HeavyTail { .. } => None,
        }
    }

    fn validate(&self, what: &str) -> Result<(), String> {
        match *self {
            DelayModel::Fixed { .. } => Ok(()),
            DelayModel::Uniform { lo, hi } if lo > hi => {
                Err(format!("{what}: uniform delay needs lo <= hi, got [{lo}, {hi}]"))
            }
            DelayModel::Uniform { .. } => Ok(()),
            DelayModel::HeavyTail { scale, .. } if !(scale > 0.0) => {
                Err(format!("{what}: heavy tail scale must be positive, got {scale}"))
            }
            DelayModel::HeavyTail { .. } => Ok(()),
        }
    }
}

/// The three link classes of the topology. Clients never talk to the
/// backend tier, and same-class links share a model unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayClasses {
    pub client_edge: DelayModel,
    pub edge_edge: DelayModel,
    pub edge_backend: DelayModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkOverride {
    pub from: String,
    pub to: String,
    pub delay: DelayModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashSpec {
    pub process: String,
    pub at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Write,
    Read,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkItem {
    pub client: String,
    pub op: OpKind,
    /// Seed for the written value; required for writes, absent for reads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_seed: Option<u64>,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub code: CodeConfig,
    pub delays: DelayClasses,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub link_overrides: Vec<LinkOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub crashes: Vec<CrashSpec>,
    pub workload: Vec<WorkItem>,
    /// Seed for the initial value; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_value_seed: Option<u64>,
    pub seed: u64,
    pub horizon: u64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| format!("scenario parse error: {e}"))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Structural validation beyond what the schema enforces. Errors name
    /// the offending field.
    pub fn validate(&self) -> Result<(), String> {
        if self.version != SCENARIO_VERSION {
            return Err(format!(
                "version: expected {SCENARIO_VERSION}, got {}",
                self.version
            ));
        }
        let params = SystemParams::new(self.code).map_err(|e| format!("code: {e}"))?;
        self.delays.client_edge.validate("delays.client_edge")?;
        self.delays.edge_edge.validate("delays.edge_edge")?;
        self.delays.edge_backend.validate("delays.edge_backend")?;

        let in_system = |p: ProcessId| match p {
            ProcessId::Edge(i) => i <= params.n1,
            ProcessId::Backend(i) => i <= params.n2,
            ProcessId::Writer(_) | ProcessId::Reader(_) => true,
        };
        for (i, ov) in self.link_overrides.iter().enumerate() {
            let what = format!("link_overrides[{i}]");
            let from: ProcessId = ov.from.parse().map_err(|e| format!("{what}.from: {e}"))?;
            let to: ProcessId = ov.to.parse().map_err(|e| format!("{what}.to: {e}"))?;
            if !in_system(from) || !in_system(to) {
                return Err(format!("{what}: {} -> {} is outside the system", ov.from, ov.to));
            }
            if link_class(from, to).is_none() {
                return Err(format!(
                    "{what}: no {} -> {} links exist in this topology",
                    ov.from, ov.to
                ));
            }
            ov.delay.validate(&what)?;
        }
        for (i, c) in self.crashes.iter().enumerate() {
            let p: ProcessId = c
                .process
                .parse()
                .map_err(|e| format!("crashes[{i}].process: {e}"))?;
            if !in_system(p) {
                return Err(format!("crashes[{i}]: {} is outside the system", c.process));
            }
        }
        for (i, w) in self.workload.iter().enumerate() {
            let what = format!("workload[{i}]");
            let client: ProcessId = w
                .client
                .parse()
                .map_err(|e| format!("{what}.client: {e}"))?;
            match (client, w.op) {
                (ProcessId::Writer(_), OpKind::Write) => {
                    if w.value_seed.is_none() {
                        return Err(format!("{what}: write needs a value_seed"));
                    }
                }
                (ProcessId::Reader(_), OpKind::Read) => {
                    if w.value_seed.is_some() {
                        return Err(format!("{what}: read must not carry a value_seed"));
                    }
                }
                _ => {
                    return Err(format!(
                        "{what}: client {} cannot issue a {:?} operation",
                        w.client, w.op
                    ));
                }
            }
            if w.at > self.horizon {
                return Err(format!("{what}.at: {} is past the horizon {}", w.at, self.horizon));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> SystemParams {
        SystemParams::new(self.code).expect("validated scenario")
    }

    /// Effective per-link delay table, overrides folded in.
    pub fn delay_table(&self) -> DelayTable {
        let mut overrides = BTreeMap::new();
        for ov in &self.link_overrides {
            let from: ProcessId = ov.from.parse().expect("validated scenario");
            let to: ProcessId = ov.to.parse().expect("validated scenario");
            overrides.insert((from, to), ov.delay);
        }
        DelayTable { classes: self.delays, overrides }
    }

    /// The value written under `value_seed`: `b` field symbols drawn from a
    /// dedicated generator, so values are reproducible independently of
    /// scheduling.
    pub fn resolve_value(params: &SystemParams, value_seed: u64) -> Value {
        let mut rng = ChaCha20Rng::seed_from_u64(value_seed);
        (0..params.b).map(|_| rng.gen_range(0..params.q)).collect()
    }

    pub fn initial_value(&self, params: &SystemParams) -> Value {
        match self.initial_value_seed {
            Some(seed) => Self::resolve_value(params, seed),
            None => vec![0; params.b as usize],
        }
    }
}

/// Which class a directed link belongs to, or `None` for links the topology
/// does not have.
pub fn link_class(from: ProcessId, to: ProcessId) -> Option<LinkClass> {
    use ProcessId::*;
    match (from, to) {
        (Writer(_) | Reader(_), Edge(_)) | (Edge(_), Writer(_) | Reader(_)) => {
            Some(LinkClass::ClientEdge)
        }
        (Edge(_), Edge(_)) => Some(LinkClass::EdgeEdge),
        (Edge(_), Backend(_)) | (Backend(_), Edge(_)) => Some(LinkClass::EdgeBackend),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkClass {
    ClientEdge,
    EdgeEdge,
    EdgeBackend,
}

/// Resolved delay lookup: exact link overrides first, class model otherwise.
#[derive(Debug, Clone)]
pub struct DelayTable {
    classes: DelayClasses,
    overrides: BTreeMap<(ProcessId, ProcessId), DelayModel>,
}

impl DelayTable {
    pub fn model(&self, from: ProcessId, to: ProcessId) -> DelayModel {
        if let Some(m) = self.overrides.get(&(from, to)) {
            return *m;
        }
        match link_class(from, to).expect("message crossed a nonexistent link") {
            LinkClass::ClientEdge => self.classes.client_edge,
            LinkClass::EdgeEdge => self.classes.edge_edge,
            LinkClass::EdgeBackend => self.classes.edge_backend,
        }
    }

    /// Worst-case delay of every link in a class, overrides included;
    /// `None` when any relevant model is unbounded.
    pub fn class_max(&self, class: LinkClass) -> Option<u64> {
        let base = match class {
            LinkClass::ClientEdge => self.classes.client_edge,
            LinkClass::EdgeEdge => self.classes.edge_edge,
            LinkClass::EdgeBackend => self.classes.edge_backend,
        };
        let mut max = base.max_delay()?;
        for ((from, to), model) in &self.overrides {
            if link_class(*from, *to) == Some(class) {
                max = max.max(model.max_delay()?);
            }
        }
        Some(max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "code": { "n1": 4, "f1": 1, "n2": 5, "f2": 1, "beta": 1, "q": 65537 },
            "delays": {
                "client_edge": { "kind": "fixed", "value": 1 },
                "edge_edge": { "kind": "fixed", "value": 1 },
                "edge_backend": { "kind": "fixed", "value": 10 }
            },
            "workload": [
                { "client": "w1", "op": "write", "value_seed": 11, "at": 0 },
                { "client": "r1", "op": "read", "at": 20 }
            ],
            "seed": 7,
            "horizon": 1000
        })
    }

    #[test]
    fn round_trips_and_validates() {
        let s = Scenario::from_json(&base_json().to_string()).unwrap();
        assert_eq!(s.params().k, 2);
        let again = Scenario::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn rejects_bad_fields_by_name() {
        let mut j = base_json();
        j["workload"][0]["client"] = "r1".into();
        let err = Scenario::from_json(&j.to_string()).unwrap_err();
        assert!(err.contains("workload[0]"), "{err}");

        let mut j = base_json();
        j["workload"][0].as_object_mut().unwrap().remove("value_seed");
        assert!(Scenario::from_json(&j.to_string()).unwrap_err().contains("value_seed"));

        let mut j = base_json();
        j["code"]["f2"] = 2.into();
        assert!(Scenario::from_json(&j.to_string()).unwrap_err().starts_with("code:"));

        let mut j = base_json();
        j["link_overrides"] = serde_json::json!([
            { "from": "w1", "to": "b1", "delay": { "kind": "fixed", "value": 5 } }
        ]);
        let err = Scenario::from_json(&j.to_string()).unwrap_err();
        assert!(err.contains("link_overrides[0]"), "{err}");
    }

    #[test]
    fn overrides_shadow_class_models() {
        let mut j = base_json();
        j["link_overrides"] = serde_json::json!([
            { "from": "s1", "to": "s2", "delay": { "kind": "fixed", "value": 50 } }
        ]);
        let s = Scenario::from_json(&j.to_string()).unwrap();
        let table = s.delay_table();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let s1: ProcessId = "s1".parse().unwrap();
        let s2: ProcessId = "s2".parse().unwrap();
        let s3: ProcessId = "s3".parse().unwrap();
        assert_eq!(table.model(s1, s2).sample(&mut rng), 50);
        assert_eq!(table.model(s2, s1).sample(&mut rng), 1, "override is directional");
        assert_eq!(table.model(s1, s3).sample(&mut rng), 1);
        assert_eq!(table.class_max(LinkClass::EdgeEdge), Some(50));
        assert_eq!(table.class_max(LinkClass::ClientEdge), Some(1));
    }

    #[test]
    fn heavy_tail_is_capped_and_unbounded_for_analysis() {
        let m = DelayModel::HeavyTail { scale: 3.0, cap: 2000 };
        assert_eq!(m.max_delay(), None);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut saw_large = false;
        for _ in 0..10_000 {
            let d = m.sample(&mut rng);
            assert!(d <= 2000);
            saw_large |= d > 100;
        }
        assert!(saw_large, "tail should produce occasional large delays");
    }

    #[test]
    fn values_depend_only_on_their_seed() {
        let s = Scenario::from_json(&base_json().to_string()).unwrap();
        let p = s.params();
        let v1 = Scenario::resolve_value(&p, 11);
        let v2 = Scenario::resolve_value(&p, 11);
        let v3 = Scenario::resolve_value(&p, 12);
        assert_eq!(v1, v2);
        assert_ne!(v1, v3);
        assert_eq!(v1.len(), p.b as usize);
        assert!(v1.iter().all(|&x| x < p.q));
        assert_eq!(s.initial_value(&p), vec![0; p.b as usize]);
    }
}
