use std::path::PathBuf;
use std::time::Instant;

use amih::single::SINGLE_MAX_BITS;
use amih::{default_m, HashIndex, IndexSnapshot, MultiIndex};
use clap::Args;
use serde_json::json;

use crate::{data, usage, CliResult, Engine};

/// Longest code the single-table engine accepts without `--force`.
pub const SINGLE_SAFE_BITS: u32 = 32;

#[derive(Args)]
pub struct BuildArgs {
    /// Dataset file; may also be given positionally.
    #[arg(long = "dataset", conflicts_with = "dataset_pos")]
    dataset: Option<PathBuf>,
    #[arg(value_name = "DATASET", required_unless_present = "dataset")]
    dataset_pos: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Engine::Amih)]
    engine: Engine,
    /// Substring count for amih; defaults to round(p / log2 n).
    #[arg(long)]
    m: Option<u32>,
    /// Allow the single-table engine above 32 bits.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Peak resident set size, where the platform reports it.
fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

pub fn run(a: BuildArgs) -> CliResult {
    let path = a
        .dataset
        .as_ref()
        .or(a.dataset_pos.as_ref())
        .expect("clap requires one");
    let codes = data::dataset(path)?;
    let (p, n) = (codes.bits(), codes.len());
    let start = Instant::now();
    let snapshot = match a.engine {
        Engine::Single => {
            if p > SINGLE_MAX_BITS {
                return usage(format!(
                    "single-table engine supports at most {SINGLE_MAX_BITS} bits, dataset has {p}"
                ));
            }
            if p > SINGLE_SAFE_BITS && !a.force {
                return usage(format!(
                    "single-table search over {p}-bit codes probes exponentially many buckets; pass --force to build anyway"
                ));
            }
            if a.m.is_some() {
                return usage("--m applies only to --engine amih");
            }
            IndexSnapshot::Single(HashIndex::build(codes)?)
        }
        Engine::Amih => {
            let m = a.m.unwrap_or_else(|| default_m(p, n as u64));
            if m == 0 || m > p || p.div_ceil(m) > 64 {
                return usage(format!(
                    "--m must be in {}..={p} for {p}-bit codes",
                    p.div_ceil(64)
                ));
            }
            IndexSnapshot::Amih(MultiIndex::build(codes, m)?)
        }
        Engine::Scan => return usage("the scan engine has no index; use bench"),
    };
    let build_ns = start.elapsed().as_nanos() as u64;
    snapshot.save(&a.out)?;
    let m = match &snapshot {
        IndexSnapshot::Amih(i) => i.m(),
        IndexSnapshot::Single(_) => 1,
    };
    let report = json!({
        "engine": snapshot.engine_name(),
        "n": n,
        "p": p,
        "m": m,
        "build_time_ns": build_ns,
        "index_bytes": snapshot.heap_bytes(),
        "peak_rss_bytes": peak_rss_bytes(),
    });
    eprintln!("{report}");
    Ok(())
}
