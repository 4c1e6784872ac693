//! Deterministic discrete-event simulator.
//!
//! All processes share one logical clock. Every send is assigned a delivery
//! time by sampling the link's delay model from a single seeded generator,
//! in emission order, so a scenario plus a seed fully determines the trace.
//! Events at the same tick fire in scheduling order: crashes first (they are
//! scheduled at startup, before the workload), then invocations, then
//! deliveries. Messages to crashed processes vanish without a record;
//! in-flight messages outlive their sender.

pub mod scenario;
pub mod strategy;
pub mod trace;
pub mod workload;

use crate::codec::SystemParams;
use crate::protocol::backend::BackendServer;
use crate::protocol::edge::EdgeServer;
use crate::protocol::reader::Reader;
use crate::protocol::writer::Writer;
use crate::protocol::{Msg, Mutation, OpId, ProcessId, ProtoEvent, StepOutput};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use scenario::{DelayTable, OpKind, Scenario};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use trace::{Record, RecordKind};

#[derive(Debug, Clone)]
enum Event {
    Invoke { client: ProcessId, op: OpKind, value_seed: Option<u64> },
    Deliver { from: ProcessId, to: ProcessId, msg: Msg, mid: u64 },
    Crash { process: ProcessId },
}

/// Heap entry ordered by (time, scheduling id); `BinaryHeap` is a max-heap,
/// so the comparison is reversed.
struct Scheduled {
    time: u64,
    id: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.id) == (other.time, other.id)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (other.time, other.id).cmp(&(self.time, self.id))
    }
}

enum ClientMachine {
    W(Writer),
    R(Reader),
}

impl ClientMachine {
    fn deliver(&mut self, from: ProcessId, msg: Msg) -> StepOutput {
        match self {
            ClientMachine::W(w) => w.deliver(from, msg),
            ClientMachine::R(r) => r.deliver(from, msg),
        }
    }
}

struct ClientState {
    machine: ClientMachine,
    busy: bool,
    deferred: VecDeque<(OpKind, Option<u64>)>,
    ops_issued: u32,
}

/// A finished simulation: the full trace plus what was still in flight at
/// the horizon.
pub struct SimRun {
    pub scenario: Scenario,
    pub params: SystemParams,
    pub mutation: Option<Mutation>,
    pub records: Vec<Record>,
    /// Messages to live destinations whose delivery time fell past the
    /// horizon.
    pub undelivered: u64,
}

pub fn run_scenario(scenario: &Scenario, mutation: Option<Mutation>) -> SimRun {
    Sim::new(scenario.clone(), mutation).run()
}

struct Sim {
    scenario: Scenario,
    params: SystemParams,
    mutation: Option<Mutation>,
    delays: DelayTable,
    rng: ChaCha20Rng,
    heap: BinaryHeap<Scheduled>,
    next_sched_id: u64,
    next_seq: u64,
    now: u64,
    records: Vec<Record>,
    clients: BTreeMap<ProcessId, ClientState>,
    edges: BTreeMap<u32, EdgeServer>,
    backends: BTreeMap<u32, BackendServer>,
    crashed: BTreeSet<ProcessId>,
}

impl Sim {
    fn new(scenario: Scenario, mutation: Option<Mutation>) -> Self {
        scenario.validate().expect("scenario must be validated before running");
        let params = scenario.params();
        let delays = scenario.delay_table();
        let rng = ChaCha20Rng::seed_from_u64(scenario.seed);

        let edges = (1..=params.n1)
            .map(|i| (i, EdgeServer::new(i, params.clone(), mutation)))
            .collect();
        let initial_elems = params
            .encode_backend(&scenario.initial_value(&params))
            .expect("initial value has the configured length");
        let backends = (1..=params.n2)
            .zip(initial_elems)
            .map(|(i, elem)| (i, BackendServer::new(params.clone(), elem)))
            .collect();

        let mut clients = BTreeMap::new();
        for item in &scenario.workload {
            let pid: ProcessId = item.client.parse().expect("validated scenario");
            clients.entry(pid).or_insert_with(|| ClientState {
                machine: match pid {
                    ProcessId::Writer(i) => {
                        ClientMachine::W(Writer::new(i, params.clone(), mutation))
                    }
                    ProcessId::Reader(i) => {
                        ClientMachine::R(Reader::new(i, params.clone(), mutation))
                    }
                    _ => unreachable!("validated scenario"),
                },
                busy: false,
                deferred: VecDeque::new(),
                ops_issued: 0,
            });
        }

        let mut sim = Sim {
            scenario,
            params,
            mutation,
            delays,
            rng,
            heap: BinaryHeap::new(),
            next_sched_id: 0,
            next_seq: 0,
            now: 0,
            records: Vec::new(),
            clients,
            edges,
            backends,
            crashed: BTreeSet::new(),
        };
        for c in sim.scenario.crashes.clone() {
            let process = c.process.parse().expect("validated scenario");
            sim.schedule(c.at, Event::Crash { process });
        }
        for item in sim.scenario.workload.clone() {
            let client = item.client.parse().expect("validated scenario");
            sim.schedule(
                item.at,
                Event::Invoke { client, op: item.op, value_seed: item.value_seed },
            );
        }
        sim
    }

    fn schedule(&mut self, time: u64, event: Event) {
        let id = self.next_sched_id;
        self.next_sched_id += 1;
        self.heap.push(Scheduled { time, id, event });
    }

    fn push_record(&mut self, record: Record) {
        self.records.push(record);
    }

    fn fresh(&mut self, process: ProcessId, kind: RecordKind) -> Record {
        let seq = self.next_seq;
        self.next_seq += 1;
        Record::new(self.now, seq, process, kind)
    }

    fn run(mut self) -> SimRun {
        let horizon = self.scenario.horizon;
        while let Some(item) = self.heap.peek() {
            if item.time > horizon {
                break;
            }
            let item = self.heap.pop().unwrap();
            self.now = item.time;
            match item.event {
                Event::Crash { process } => self.on_crash(process),
                Event::Invoke { client, op, value_seed } => {
                    self.on_invoke_event(client, op, value_seed)
                }
                Event::Deliver { from, to, msg, mid } => self.on_deliver(from, to, msg, mid),
            }
        }
        let undelivered = self
            .heap
            .iter()
            .filter(|s| {
                matches!(&s.event, Event::Deliver { to, .. } if !self.crashed.contains(to))
            })
            .count() as u64;
        SimRun {
            scenario: self.scenario,
            params: self.params,
            mutation: self.mutation,
            records: self.records,
            undelivered,
        }
    }

    fn on_crash(&mut self, process: ProcessId) {
        if !self.crashed.insert(process) {
            return;
        }
        let rec = self.fresh(process, RecordKind::Crash);
        self.push_record(rec);
    }

    fn on_invoke_event(&mut self, client: ProcessId, op: OpKind, value_seed: Option<u64>) {
        if self.crashed.contains(&client) {
            return;
        }
        let state = self.clients.get_mut(&client).expect("client exists");
        if state.busy {
            state.deferred.push_back((op, value_seed));
            return;
        }
        self.start_op(client, op, value_seed);
    }

    fn start_op(&mut self, client: ProcessId, op_kind: OpKind, value_seed: Option<u64>) {
        let state = self.clients.get_mut(&client).expect("client exists");
        state.busy = true;
        state.ops_issued += 1;
        let op = OpId { client, seq: state.ops_issued };

        let mut rec = self.fresh(client, RecordKind::Invoke);
        rec.op = Some(op);
        rec.opkind = Some(op_kind);
        let out = match op_kind {
            OpKind::Write => {
                let value =
                    Scenario::resolve_value(&self.params, value_seed.expect("validated scenario"));
                rec.value = Some(value.clone());
                self.push_record(rec);
                let state = self.clients.get_mut(&client).unwrap();
                match &mut state.machine {
                    ClientMachine::W(w) => w.invoke(op, value),
                    ClientMachine::R(_) => unreachable!("validated scenario"),
                }
            }
            OpKind::Read => {
                self.push_record(rec);
                let state = self.clients.get_mut(&client).unwrap();
                match &mut state.machine {
                    ClientMachine::R(r) => r.invoke(op),
                    ClientMachine::W(_) => unreachable!("validated scenario"),
                }
            }
        };
        self.process_output(client, out);
    }

    fn on_deliver(&mut self, from: ProcessId, to: ProcessId, msg: Msg, mid: u64) {
        if self.crashed.contains(&to) {
            return;
        }
        let mut rec = self.fresh(to, RecordKind::Deliver);
        rec.msg = Some(msg.name().to_string());
        rec.from = Some(from);
        rec.mid = Some(mid);
        self.push_record(rec);

        let out = match to {
            ProcessId::Edge(i) => self.edges.get_mut(&i).expect("edge exists").deliver(from, msg),
            ProcessId::Backend(i) => {
                self.backends.get_mut(&i).expect("backend exists").deliver(from, msg)
            }
            ProcessId::Writer(_) | ProcessId::Reader(_) => match self.clients.get_mut(&to) {
                Some(state) => state.machine.deliver(from, msg),
                None => StepOutput::default(),
            },
        };
        self.process_output(to, out);
    }

    /// Record a step's events, then its sends (drawing delays in emission
    /// order), then start any deferred client operation freed by a respond.
    fn process_output(&mut self, process: ProcessId, out: StepOutput) {
        let mut responded = false;
        for event in out.events {
            match event {
                ProtoEvent::Respond { op, write, tag, value } => {
                    let mut rec = self.fresh(process, RecordKind::Respond);
                    rec.op = Some(op);
                    rec.opkind = Some(if write { OpKind::Write } else { OpKind::Read });
                    rec.tag = Some(tag);
                    rec.value = value;
                    self.push_record(rec);
                    responded = true;
                }
                ProtoEvent::Action { act, tag } => {
                    let mut rec = self.fresh(process, RecordKind::Action);
                    rec.act = Some(act);
                    rec.tag = Some(tag);
                    self.push_record(rec);
                }
                ProtoEvent::IopStart { iop, tag, op } => {
                    let mut rec = self.fresh(process, RecordKind::InternalOpStart);
                    rec.iop = Some(iop);
                    rec.tag = tag;
                    rec.op = op;
                    self.push_record(rec);
                }
                ProtoEvent::IopEnd { iop, tag, op, ok } => {
                    let mut rec = self.fresh(process, RecordKind::InternalOpEnd);
                    rec.iop = Some(iop);
                    rec.tag = tag;
                    rec.op = op;
                    rec.ok = Some(ok);
                    self.push_record(rec);
                }
            }
        }
        for (to, msg) in out.sends {
            self.send(process, to, msg);
        }
        if responded {
            let state = self.clients.get_mut(&process).expect("client exists");
            state.busy = false;
            if let Some((op, value_seed)) = state.deferred.pop_front() {
                self.start_op(process, op, value_seed);
            }
        }
    }

    fn send(&mut self, from: ProcessId, to: ProcessId, msg: Msg) {
        let sym = msg.payload_syms(&self.params);
        let mut rec = self.fresh(from, RecordKind::Send);
        let mid = rec.seq;
        rec.msg = Some(msg.name().to_string());
        rec.to = Some(to);
        rec.op = msg.op();
        rec.tag = msg.tag();
        if sym > 0 {
            rec.sym = Some(sym);
            rec.norm = Some(sym as f64 / self.params.b as f64);
        }
        self.push_record(rec);
        let delay = self.delays.model(from, to).sample(&mut self.rng);
        self.schedule(self.now + delay, Event::Deliver { from, to, msg, mid });
    }
}
