use std::path::PathBuf;
use std::time::Instant;

use amih::gen::generate;
use amih::single::SINGLE_MAX_BITS;
use amih::{
    default_m, linear_scan_knn, BinaryCode, CodeStore, HashIndex, MultiIndex, QueryStats,
    SearchScratch,
};
use clap::Args;

use crate::output::writer;
use crate::{data, usage, CliResult, Engine};

#[derive(Args)]
pub struct BenchArgs {
    /// Dataset or index snapshot; only the codes are used.
    #[arg(long = "index-or-dataset")]
    input: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "amih,scan")]
    engines: Vec<Engine>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    ks: Vec<usize>,
    /// Dataset prefix sizes; defaults to the whole dataset.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Query codes; when absent, random queries are drawn with the
    /// dataset's observed bit density.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n_queries: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Substring count for amih; defaults to round(p / log2 n) per size.
    #[arg(long)]
    m: Option<u32>,
    /// Per-query bucket budget for the single-table engine.
    #[arg(long, default_value_t = 1_000_000)]
    single_budget: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Queries per engine turn.
const BLOCK: usize = 50;

const HEADER: [&str; 8] = [
    "engine",
    "n",
    "K",
    "mean_time_ns",
    "mean_buckets_probed",
    "mean_candidates",
    "pct_anchor_phase",
    "speedup_vs_scan",
];

#[derive(Default)]
struct Totals {
    time_ns: f64,
    buckets: f64,
    candidates: f64,
    anchor: f64,
    truncated: usize,
    count: usize,
}

impl Totals {
    fn add(&mut self, time_ns: u128, stats: &QueryStats) {
        self.time_ns += time_ns as f64;
        self.buckets += stats.buckets_probed as f64;
        self.candidates += stats.candidates_checked as f64;
        self.anchor += f64::from(u8::from(stats.entered_anchor_phase));
        self.truncated += usize::from(stats.truncated);
        self.count += 1;
    }

    fn mean(&self, x: f64) -> f64 {
        x / self.count.max(1) as f64
    }
}

fn queries(a: &BenchArgs, codes: &CodeStore) -> CliResult<Vec<BinaryCode>> {
    let p = codes.bits();
    let qs: Vec<BinaryCode> = match &a.queries {
        Some(path) => {
            let store = data::dataset(path)?;
            if store.bits() != p {
                return Err(amih::Error::LengthMismatch {
                    expected: p,
                    found: store.bits(),
                }
                .into());
            }
            (0..store.len()).map(|i| store.code(i)).collect()
        }
        None => {
            let ones: u64 = codes
                .iter()
                .map(|w| w.iter().map(|x| x.count_ones() as u64).sum::<u64>())
                .sum();
            let density = (ones as f64 / (p as f64 * codes.len().max(1) as f64)).clamp(0.01, 0.99);
            let store = generate(a.n_queries, p, density, a.seed)?;
            (0..store.len()).map(|i| store.code(i)).collect()
        }
    };
    let kept: Vec<BinaryCode> = qs.into_iter().filter(|q| q.popcount() > 0).collect();
    if kept.is_empty() {
        return usage("no non-empty query codes to run");
    }
    Ok(kept)
}

fn fmt(x: f64, decimals: usize) -> String {
    format!("{x:.decimals$}")
}

pub fn run(a: BenchArgs) -> CliResult {
    if a.engines.is_empty() || a.ks.is_empty() {
        return usage("--engines and --ks must not be empty");
    }
    if a.ks.contains(&0) {
        return usage("every K must be at least 1");
    }
    let input = data::dataset_or_index(&a.input)?;
    let codes = input.codes();
    let (p, n) = (codes.bits(), codes.len());
    let sizes = if a.sizes.is_empty() {
        vec![n]
    } else {
        a.sizes.clone()
    };
    if let Some(&s) = sizes.iter().find(|&&s| s > n || s == 0) {
        return usage(format!("size {s} is outside 1..={n}"));
    }
    if a.engines.contains(&Engine::Single) && p > SINGLE_MAX_BITS {
        return usage(format!(
            "single-table engine supports at most {SINGLE_MAX_BITS} bits"
        ));
    }
    let qs = queries(&a, codes)?;
    let mut out = csv::Writer::from_writer(writer(a.out.as_deref())?);
    out.write_record(HEADER)?;

    for &size in &sizes {
        let prefix = codes.prefix(size);
        let single = a
            .engines
            .contains(&Engine::Single)
            .then(|| HashIndex::build(prefix.clone()))
            .transpose()?;
        let multi = if a.engines.contains(&Engine::Amih) {
            let m = a.m.unwrap_or_else(|| default_m(p, size as u64));
            if m == 0 || m > p || p.div_ceil(m) > 64 {
                return usage(format!("--m {m} is invalid for {p}-bit codes"));
            }
            Some(MultiIndex::build(prefix.clone(), m)?)
        } else {
            None
        };
        let mut scratch = SearchScratch::new();
        for &k in &a.ks {
            // Engines take turns on blocks of queries: drift in machine load
            // hits all of them alike, and each still runs with warm caches.
            let mut totals: Vec<Totals> = a.engines.iter().map(|_| Totals::default()).collect();
            let mut scan = Totals::default();
            for block in qs.chunks(BLOCK) {
                let mut scan_times = Vec::with_capacity(block.len());
                let stats = QueryStats {
                    candidates_checked: size as u64,
                    ..QueryStats::default()
                };
                for q in block {
                    let start = Instant::now();
                    let hits = linear_scan_knn(&prefix, q, k)?;
                    let t = start.elapsed().as_nanos();
                    std::hint::black_box(&hits);
                    scan.add(t, &stats);
                    scan_times.push(t);
                }
                for (&engine, total) in a.engines.iter().zip(&mut totals) {
                    match engine {
                        Engine::Scan => scan_times.iter().for_each(|&t| total.add(t, &stats)),
                        Engine::Single => {
                            let index = single.as_ref().unwrap();
                            for q in block {
                                let start = Instant::now();
                                let (_, stats) = index.knn_budgeted(q, k, Some(a.single_budget))?;
                                total.add(start.elapsed().as_nanos(), &stats);
                            }
                        }
                        Engine::Amih => {
                            let index = multi.as_ref().unwrap();
                            for q in block {
                                let start = Instant::now();
                                let (_, stats) = index.knn_with(q, k, &mut scratch)?;
                                total.add(start.elapsed().as_nanos(), &stats);
                            }
                        }
                    }
                }
            }
            let scan_mean = scan.mean(scan.time_ns);
            for (&engine, totals) in a.engines.iter().zip(&totals) {
                if totals.truncated > 0 {
                    eprintln!(
                        "note: {} n={size} K={k}: {} of {} queries stopped at the {}-bucket budget",
                        engine.name(),
                        totals.truncated,
                        totals.count,
                        a.single_budget
                    );
                }
                let mean_time = totals.mean(totals.time_ns);
                out.write_record([
                    engine.name().to_string(),
                    size.to_string(),
                    k.to_string(),
                    fmt(mean_time, 1),
                    fmt(totals.mean(totals.buckets), 3),
                    fmt(totals.mean(totals.candidates), 3),
                    fmt(100.0 * totals.mean(totals.anchor), 2),
                    fmt(scan_mean / mean_time.max(1.0), 3),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
