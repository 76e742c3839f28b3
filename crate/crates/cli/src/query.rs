use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use amih::{BinaryCode, Error, IndexSnapshot, SearchScratch};
use clap::Args;
use rayon::prelude::*;

use crate::output::{sim17, writer};
use crate::{data, usage, CliResult};

/// Environment variable capping worker threads.
pub const THREADS_VAR: &str = "ABC_THREADS";

#[derive(Args)]
pub struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// Dataset file holding the query codes.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => builder = builder.num_threads(t),
            _ => {
                return usage(format!(
                    "{THREADS_VAR} must be a positive integer, got {v:?}"
                ))
            }
        }
    }
    Ok(builder.build()?)
}

fn answer(
    index: &IndexSnapshot,
    id: usize,
    q: &BinaryCode,
    k: usize,
    scratch: &mut SearchScratch,
) -> String {
    let start = Instant::now();
    let result = index.knn(q, k, scratch);
    let time_ns = start.elapsed().as_nanos();
    let mut line = String::new();
    match result {
        Ok((hits, stats)) => {
            write!(line, "{{\"query_id\":{id},\"neighbors\":[").unwrap();
            for (i, h) in hits.iter().enumerate() {
                let sep = if i == 0 { "" } else { "," };
                write!(
                    line,
                    "{sep}{{\"id\":{},\"sim\":{}}}",
                    h.id,
                    sim17(h.similarity)
                )
                .unwrap();
            }
            write!(
                line,
                "],\"stats\":{{\"buckets_probed\":{},\"candidates_checked\":{},\"tuples_emitted\":{},\"entered_anchor_phase\":{},\"time_ns\":{time_ns}}}}}",
                stats.buckets_probed, stats.candidates_checked, stats.tuples_emitted, stats.entered_anchor_phase
            )
            .unwrap();
        }
        Err(e) => {
            let msg = serde_json::to_string(&e.to_string()).unwrap();
            write!(line, "{{\"query_id\":{id},\"error\":{msg}}}").unwrap();
        }
    }
    line
}

pub fn run(a: QueryArgs) -> CliResult {
    if a.k == 0 {
        return usage("--k must be at least 1");
    }
    let pool = thread_pool()?;
    let index = data::snapshot(&a.index)?;
    let queries = data::dataset(&a.queries)?;
    if queries.bits() != index.bits() {
        return Err(Error::LengthMismatch {
            expected: index.bits(),
            found: queries.bits(),
        }
        .into());
    }
    let lines: Vec<String> = pool.install(|| {
        (0..queries.len())
            .into_par_iter()
            .map_init(SearchScratch::new, |scratch, i| {
                answer(&index, i, &queries.code(i), a.k, scratch)
            })
            .collect()
    });
    let mut out = writer(a.out.as_deref())?;
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
