use std::path::PathBuf;

use amih::io::write_dataset;
use amih::MAX_CODE_BITS;
use clap::Args;

use crate::{output, usage, CliResult};

#[derive(Args)]
pub struct GenArgs {
    /// Number of codes.
    #[arg(long)]
    n: usize,
    /// Bits per code.
    #[arg(long)]
    p: u32,
    /// Probability that each bit is set.
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(a: GenArgs) -> CliResult {
    if a.p == 0 || a.p > MAX_CODE_BITS {
        return usage(format!("--p must be in 1..={MAX_CODE_BITS}"));
    }
    if !(a.density > 0.0 && a.density < 1.0) {
        return usage("--density must be strictly between 0 and 1");
    }
    let codes = amih::gen::generate(a.n, a.p, a.density, a.seed)?;
    write_dataset(output::writer(a.out.as_deref())?, &codes)?;
    Ok(())
}
