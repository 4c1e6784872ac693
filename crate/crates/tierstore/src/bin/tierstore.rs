//! Command-line harness: single scenario runs, fuzz campaigns, codec
//! self-tests, and the multi-object storage sweep.
//!
//! Exit status 0 means every selected check passed or was refused, 1 means
//! at least one check failed (or a self-test found a counterexample), and 2
//! means the invocation or an input file was unusable.

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tierstore::check::{run_checks, CheckKind, CheckStatus, Verdict};
use tierstore::codec::{CodeConfig, Element, Helper, RegenCode, Value};
use tierstore::metrics::{self, MultiObjectConfig};
use tierstore::protocol::Mutation;
use tierstore::sim::scenario::Scenario;
use tierstore::sim::strategy::Strategy;
use tierstore::sim::workload::{self, FuzzConfig};
use tierstore::sim::{run_scenario, trace};

#[derive(Parser)]
#[command(
    name = "tierstore",
    version,
    about = "Two-tier erasure-coded atomic storage: simulate, check, and account"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, check the trace, and write artifacts.
    Run(RunArgs),
    /// Run a campaign of generated workloads under scheduling strategies.
    Fuzz(FuzzArgs),
    /// Exercise the regenerating code over a parameter grid.
    CodecSelftest(SelftestArgs),
    /// Tabulate multi-object storage against the closed forms.
    StorageSweep(SweepArgs),
}

const ALL_CHECKS: &str = "atomicity,liveness,invariants,latency,costs";

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's simulator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Scheduling strategy applied to the scenario before the run.
    #[arg(long, default_value = "none")]
    strategy: Strategy,
    /// Comma-separated list of checks to run on the trace.
    #[arg(long, value_delimiter = ',', default_value = ALL_CHECKS)]
    checks: Vec<CheckKind>,
    /// Planted protocol mutation.
    #[arg(long)]
    mutate: Option<Mutation>,
    /// Directory for trace.jsonl, verdict.json, ops.csv, and storage.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuzzArgs {
    /// First seed of the campaign.
    #[arg(long, default_value_t = 0)]
    seed_start: u64,
    /// Number of seeds; each runs once per strategy.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', default_value = "none")]
    strategies: Vec<Strategy>,
    /// Comma-separated list of checks to run on each trace.
    #[arg(long, value_delimiter = ',', default_value = ALL_CHECKS)]
    checks: Vec<CheckKind>,
    /// Planted protocol mutation applied to every cell.
    #[arg(long)]
    mutate: Option<Mutation>,
    /// Output directory; per-cell verdicts land under cells/. Cells whose
    /// verdict file already exists are skipped, so an interrupted campaign
    /// resumes where it stopped.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelftestArgs {
    /// Random values per grid point.
    #[arg(long, default_value_t = 100)]
    values: u64,
    /// Largest code width checked exhaustively over all subsets.
    #[arg(long, default_value_t = 10)]
    exhaustive_limit: u32,
    /// Random subset samples per value at widths past the exhaustive limit.
    #[arg(long, default_value_t = 8)]
    samples: u32,
    /// Seed for value and subset sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 100)]
    n1: u32,
    #[arg(long, default_value_t = 10)]
    f1: u32,
    #[arg(long, default_value_t = 100)]
    n2: u32,
    #[arg(long, default_value_t = 10)]
    f2: u32,
    #[arg(long, default_value_t = 1)]
    beta: u32,
    #[arg(long, default_value_t = 65537)]
    q: u64,
    /// Writes per object arrive every 2*mu + 10 ticks.
    #[arg(long, default_value_t = 10)]
    mu: u64,
    /// Objects whose instances start inside one delay unit.
    #[arg(long, default_value_t = 100)]
    theta: u64,
    /// Comma-separated object counts to tabulate.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000,10000")]
    ns: Vec<u64>,
    /// Largest object count simulated instance-by-instance.
    #[arg(long, default_value_t = 100)]
    sim_limit: u64,
    /// Directory for sweep.csv.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Fuzz(args) => cmd_fuzz(args),
        Command::CodecSelftest(args) => cmd_codec_selftest(args),
        Command::StorageSweep(args) => cmd_storage_sweep(args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    let mut scenario = Scenario::from_json(&text)
        .map_err(|e| format!("{}: {e}", args.scenario.display()))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let scenario = args.strategy.apply(&scenario);
    let run = run_scenario(&scenario, args.mutate);
    let verdict = run_checks(&run, &args.checks);

    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let mut trace_bytes = Vec::new();
    trace::write_jsonl(&mut trace_bytes, &run.records).map_err(|e| e.to_string())?;
    write_atomic(&args.out.join("trace.jsonl"), &trace_bytes)?;
    let report = metrics::measure_costs(&run.records, &run.params);
    write_atomic(&args.out.join("ops.csv"), metrics::ops_csv(&report).as_bytes())?;
    write_atomic(
        &args.out.join("storage.csv"),
        metrics::storage_csv(&report.storage, &run.params).as_bytes(),
    )?;
    write_atomic(&args.out.join("verdict.json"), pretty_json(&verdict)?.as_bytes())?;

    println!(
        "{} seed={} strategy={} mutation={} ({} records, {} undelivered)",
        args.scenario.display(),
        scenario.seed,
        args.strategy.name(),
        args.mutate.map_or("none", |m| m.name()),
        run.records.len(),
        run.undelivered,
    );
    print_verdict(&verdict);
    println!("artifacts written to {}", args.out.display());
    Ok(exit_for(&verdict))
}

fn cmd_fuzz(args: FuzzArgs) -> Result<ExitCode, String> {
    let cells_dir = args.out.join("cells");
    fs::create_dir_all(&cells_dir).map_err(|e| format!("{}: {e}", cells_dir.display()))?;
    let cfg = FuzzConfig::default();

    let mut cells = Vec::new();
    for seed in args.seed_start..args.seed_start + args.seeds {
        for &strategy in &args.strategies {
            cells.push((seed, strategy));
        }
    }

    let results = cells
        .par_iter()
        .map(|&(seed, strategy)| run_cell(&cfg, seed, strategy, &args, &cells_dir))
        .collect::<Result<Vec<CellResult>, String>>()?;

    let resumed = results.iter().filter(|c| c.resumed).count();
    let refused = results
        .iter()
        .filter(|c| c.verdict.outcomes.iter().any(|o| o.status == CheckStatus::Refused))
        .count();
    let failing: Vec<&CellResult> = results.iter().filter(|c| !c.verdict.pass).collect();

    let summary = serde_json::json!({
        "cells": results.len(),
        "passed": results.len() - failing.len(),
        "failed": failing.len(),
        "with_refused_checks": refused,
        "resumed": resumed,
        "failing": failing.iter().map(|c| c.name()).collect::<Vec<_>>(),
    });
    write_atomic(
        &args.out.join("summary.json"),
        format!("{summary:#}\n").as_bytes(),
    )?;

    println!(
        "{} cells: {} passed, {} failed, {} with refused checks, {} resumed",
        results.len(),
        results.len() - failing.len(),
        failing.len(),
        refused,
        resumed,
    );
    for cell in failing.iter().take(10) {
        let witness = cell
            .verdict
            .outcomes
            .iter()
            .find_map(|o| o.witness.as_ref())
            .map_or("no witness", |w| w.description.as_str());
        println!("  {} failed: {}", cell.name(), witness);
    }
    if failing.len() > 10 {
        println!("  ... and {} more, see {}", failing.len() - 10, args.out.join("summary.json").display());
    }
    Ok(if failing.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

struct CellResult {
    seed: u64,
    strategy: Strategy,
    verdict: Verdict,
    resumed: bool,
}

impl CellResult {
    fn name(&self) -> String {
        format!("s{:06}-{}", self.seed, self.strategy.name())
    }
}

fn run_cell(
    cfg: &FuzzConfig,
    seed: u64,
    strategy: Strategy,
    args: &FuzzArgs,
    cells_dir: &Path,
) -> Result<CellResult, String> {
    let name = format!("s{seed:06}-{}", strategy.name());
    let verdict_path = cells_dir.join(format!("{name}.verdict.json"));
    if verdict_path.exists() {
        let text = fs::read_to_string(&verdict_path)
            .map_err(|e| format!("{}: {e}", verdict_path.display()))?;
        let verdict = serde_json::from_str(&text)
            .map_err(|e| format!("{}: {e}", verdict_path.display()))?;
        return Ok(CellResult { seed, strategy, verdict, resumed: true });
    }

    let scenario = strategy.apply(&workload::generate(cfg, seed));
    let run = run_scenario(&scenario, args.mutate);
    let verdict = run_checks(&run, &args.checks);
    if !verdict.pass {
        let mut bytes = Vec::new();
        trace::write_jsonl(&mut bytes, &run.records).map_err(|e| e.to_string())?;
        write_atomic(&cells_dir.join(format!("{name}.trace.jsonl")), &bytes)?;
        write_atomic(
            &cells_dir.join(format!("{name}.scenario.json")),
            pretty_json(&scenario)?.as_bytes(),
        )?;
    }
    // The verdict lands last: a cell interrupted mid-write is retried on
    // resume rather than counted without its witness artifacts.
    write_atomic(&verdict_path, pretty_json(&verdict)?.as_bytes())?;
    Ok(CellResult { seed, strategy, verdict, resumed: false })
}

fn cmd_codec_selftest(args: SelftestArgs) -> Result<ExitCode, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    for k in 2u32..=3 {
        for d in k..=4 {
            for q in [7u64, 13, 65537] {
                // n must stay below q; the large field also gets a code wide
                // enough to leave the exhaustive range.
                let n = if q > 100 { args.exhaustive_limit + 2 } else { d + 2 };
                let code = RegenCode::new(n, k, d, 1, q)
                    .map_err(|e| format!("k={k} d={d} q={q} n={n}: {e}"))?;
                match selftest_point(&mut rng, &code, &args) {
                    Ok((decodes, repairs, exhaustive)) => println!(
                        "k={k} d={d} q={q:<5} n={n:<2} alpha={} B={:<2} {}: {} decodes, {} repairs ok",
                        code.alpha(),
                        code.b(),
                        if exhaustive { "exhaustive" } else { "sampled" },
                        decodes,
                        repairs,
                    ),
                    Err(counterexample) => {
                        println!("k={k} d={d} q={q} n={n}: COUNTEREXAMPLE {counterexample}");
                        return Ok(ExitCode::from(1));
                    }
                }
            }
        }
    }

    let rejections = [
        ("q=6 (composite)", RegenCode::new(4, 2, 2, 1, 6)),
        ("q=7 with n=8 (field too small)", RegenCode::new(8, 2, 3, 1, 7)),
        ("d=2 below k=3", RegenCode::new(6, 3, 2, 1, 13)),
    ];
    for (what, result) in rejections {
        match result {
            Err(e) => println!("rejected {what}: {e}"),
            Ok(_) => {
                println!("COUNTEREXAMPLE: {what} was accepted");
                return Ok(ExitCode::from(1));
            }
        }
    }
    println!("codec self-test ok");
    Ok(ExitCode::SUCCESS)
}

/// Round-trips random values through every (or a sampled set of) k-subset
/// decode and (target, d-subset) repair. Returns (decodes, repairs,
/// exhaustive) on success and a counterexample description on mismatch.
fn selftest_point(
    rng: &mut ChaCha20Rng,
    code: &RegenCode,
    args: &SelftestArgs,
) -> Result<(u64, u64, bool), String> {
    let n = code.n();
    let coords: Vec<u32> = (1..=n).collect();
    let exhaustive = n <= args.exhaustive_limit;
    let all_decode_sets = subsets(&coords, code.k() as usize);
    let all_repair_pairs: Vec<(u32, Vec<u32>)> = coords
        .iter()
        .flat_map(|&target| {
            let rest: Vec<u32> = coords.iter().copied().filter(|&i| i != target).collect();
            subsets(&rest, code.d() as usize)
                .into_iter()
                .map(move |helpers| (target, helpers))
        })
        .collect();

    let mut decodes = 0u64;
    let mut repairs = 0u64;
    for vi in 0..args.values {
        let value: Value = (0..code.b()).map(|_| rng.gen_range(0..code.q())).collect();
        let elements = code
            .encode(&value)
            .map_err(|e| format!("encode failed at value {vi}: {e}"))?;

        let decode_sets: Vec<Vec<u32>> = if exhaustive {
            all_decode_sets.clone()
        } else {
            (0..args.samples)
                .map(|_| {
                    let mut s: Vec<u32> =
                        coords.choose_multiple(rng, code.k() as usize).copied().collect();
                    s.sort_unstable();
                    s
                })
                .collect()
        };
        for set in &decode_sets {
            let shares: Vec<(u32, Element)> = set
                .iter()
                .map(|&i| (i, elements[(i - 1) as usize].clone()))
                .collect();
            let decoded = code
                .decode(&shares)
                .map_err(|e| format!("decode failed for nodes {set:?} at value {vi}: {e}"))?;
            if decoded != value {
                return Err(format!("decode mismatch for nodes {set:?} at value {vi}"));
            }
            decodes += 1;
        }

        let repair_pairs: Vec<(u32, Vec<u32>)> = if exhaustive {
            all_repair_pairs.clone()
        } else {
            (0..args.samples)
                .map(|_| {
                    let target = rng.gen_range(1..=n);
                    let rest: Vec<u32> =
                        coords.iter().copied().filter(|&i| i != target).collect();
                    let mut h: Vec<u32> =
                        rest.choose_multiple(rng, code.d() as usize).copied().collect();
                    h.sort_unstable();
                    (target, h)
                })
                .collect()
        };
        for (target, helpers) in &repair_pairs {
            let hs: Vec<(u32, Helper)> = helpers
                .iter()
                .map(|&i| {
                    code.helper(&elements[(i - 1) as usize], *target)
                        .map(|h| (i, h))
                        .map_err(|e| format!("helper {i} for target {target} at value {vi}: {e}"))
                })
                .collect::<Result<_, String>>()?;
            let rebuilt = code
                .regenerate(*target, &hs)
                .map_err(|e| format!("repair of {target} from {helpers:?} at value {vi}: {e}"))?;
            if rebuilt != elements[(*target - 1) as usize] {
                return Err(format!(
                    "repair mismatch for target {target} from helpers {helpers:?} at value {vi}"
                ));
            }
            repairs += 1;
        }
    }
    Ok((decodes, repairs, exhaustive))
}

fn cmd_storage_sweep(args: SweepArgs) -> Result<ExitCode, String> {
    let code = CodeConfig {
        n1: args.n1,
        f1: args.f1,
        n2: args.n2,
        f2: args.f2,
        beta: args.beta,
        q: args.q,
    };
    let cfg = MultiObjectConfig {
        code,
        mu: args.mu,
        theta: args.theta,
        ns: args.ns.clone(),
        sim_limit: args.sim_limit,
    };
    let rows = metrics::multi_object_sweep(&cfg)?;

    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let path = args.out.join("sweep.csv");
    write_atomic(&path, metrics::sweep_csv(&rows).as_bytes())?;

    for row in &rows {
        println!(
            "N={:<6} L1 peak {:>12} of bound {:>12} ({}), L2 cost {}",
            row.n,
            row.l1_peak,
            row.l1_bound,
            if row.simulated { "simulated" } else { "replicated" },
            row.l2,
        );
    }
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn exit_for(verdict: &Verdict) -> ExitCode {
    if verdict.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn print_verdict(verdict: &Verdict) {
    for outcome in &verdict.outcomes {
        let status = match outcome.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Refused => "refused",
        };
        println!("{}: {status}", outcome.check);
        if let Some(w) = &outcome.witness {
            println!("  witness: {}", w.description);
            if !w.records.is_empty() {
                println!("  records: {:?}", w.records);
            }
            if !w.ops.is_empty() {
                println!("  ops: {}", w.ops.join(", "));
            }
        }
        for note in &outcome.notes {
            println!("  note: {note}");
        }
    }
    println!("verdict: {}", if verdict.pass { "pass" } else { "fail" });
}

fn pretty_json<T: serde::Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| e.to_string())
}

/// Writes through a dot-prefixed temporary in the same directory and
/// renames over the target, so readers never observe a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| format!("{}: not a file path", path.display()))?;
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)
        .and_then(|()| fs::rename(&tmp, path))
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// All k-element subsets of `pool`, in lexicographic index order.
fn subsets(pool: &[u32], k: usize) -> Vec<Vec<u32>> {
    let n = pool.len();
    if k > n {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut out = Vec::new();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
