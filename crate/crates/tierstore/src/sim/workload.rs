//! Random workload generation for fuzzing: small client populations issuing
//! bursts of overlapping operations, with optional backend and client
//! crashes. Edge crashes are left to the scheduling strategies, which place
//! them adversarially instead of uniformly.

use crate::sim::scenario::{
    CrashSpec, DelayClasses, DelayModel, OpKind, Scenario, WorkItem, SCENARIO_VERSION,
};
use crate::codec::CodeConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub code: CodeConfig,
    pub delays: DelayClasses,
    pub horizon: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            code: CodeConfig { n1: 4, f1: 1, n2: 5, f2: 1, beta: 1, q: 65537 },
            delays: DelayClasses {
                client_edge: DelayModel::Uniform { lo: 1, hi: 3 },
                edge_edge: DelayModel::Uniform { lo: 1, hi: 3 },
                edge_backend: DelayModel::Uniform { lo: 1, hi: 12 },
            },
            horizon: 20_000,
        }
    }
}

/// Generate the scenario for one fuzz cell. The same `seed` drives both the
/// workload shape (on a separate generator stream) and the simulator's delay
/// draws, so a cell is reproducible from `(config, seed)` alone.
pub fn generate(cfg: &FuzzConfig, seed: u64) -> Scenario {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let mut workload = Vec::new();
    for w in 1..=3 {
        for _ in 0..rng.gen_range(1..=20) {
            workload.push(WorkItem {
                client: format!("w{w}"),
                op: OpKind::Write,
                value_seed: Some(rng.gen()),
                at: rng.gen_range(0..60),
            });
        }
    }
    for r in 1..=3 {
        for _ in 0..rng.gen_range(1..=20) {
            workload.push(WorkItem {
                client: format!("r{r}"),
                op: OpKind::Read,
                value_seed: None,
                at: rng.gen_range(0..60),
            });
        }
    }
    workload.sort_by(|a, b| (a.at, &a.client).cmp(&(b.at, &b.client)));

    let mut crashes = Vec::new();
    if rng.gen_bool(0.5) {
        crashes.push(CrashSpec {
            process: format!("b{}", rng.gen_range(1..=cfg.code.n2)),
            at: rng.gen_range(0..100),
        });
    }
    let mut clients: Vec<String> = workload.iter().map(|w| w.client.clone()).collect();
    clients.dedup();
    clients.sort();
    clients.dedup();
    for c in clients {
        if rng.gen_bool(0.1) {
            crashes.push(CrashSpec { process: c, at: rng.gen_range(0..80) });
        }
    }

    let scenario = Scenario {
        version: SCENARIO_VERSION,
        code: cfg.code,
        delays: cfg.delays,
        link_overrides: Vec::new(),
        crashes,
        workload,
        initial_value_seed: None,
        seed,
        horizon: cfg.horizon,
    };
    scenario.validate().expect("generated scenarios are valid by construction");
    scenario
}
