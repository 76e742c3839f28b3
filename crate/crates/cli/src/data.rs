//! Loading datasets and snapshots with readable errors.

use std::path::Path;

use amih::io::{load_dataset, DATASET_MAGIC, SNAPSHOT_MAGIC};
use amih::{CodeStore, IndexSnapshot};
use anyhow::{bail, Context};

pub fn dataset(path: &Path) -> anyhow::Result<CodeStore> {
    load_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

pub fn snapshot(path: &Path) -> anyhow::Result<IndexSnapshot> {
    IndexSnapshot::load(path).with_context(|| format!("reading index {}", path.display()))
}

/// Either file kind, told apart by its magic bytes.
pub enum Input {
    Dataset(CodeStore),
    Index(IndexSnapshot),
}

impl Input {
    pub fn codes(&self) -> &CodeStore {
        match self {
            Input::Dataset(c) => c,
            Input::Index(i) => i.codes(),
        }
    }
}

pub fn dataset_or_index(path: &Path) -> anyhow::Result<Input> {
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        let mut f =
            std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        f.read_exact(&mut magic)
            .with_context(|| format!("reading {}", path.display()))?;
    }
    if &magic == DATASET_MAGIC {
        Ok(Input::Dataset(dataset(path)?))
    } else if &magic == SNAPSHOT_MAGIC {
        Ok(Input::Index(snapshot(path)?))
    } else {
        bail!(
            "{} is neither a dataset nor an index (magic {:?})",
            path.display(),
            magic
        )
    }
}
