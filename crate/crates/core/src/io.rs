//! On-disk formats.
//!
//! Dataset file, all integers little-endian:
//!
//! ```text
//! "ABC1" | version: u32 = 1 | p: u32 | n: u64 | n * ceil(p/64) words: u64
//! ```
//!
//! Index snapshot:
//!
//! ```text
//! "ABCX" | version: u32 = 1 | engine: u32 (0 single, 1 amih) | p: u32 | n: u64
//! m: u32 | m * (offset: u32, width: u32)
//! per table: layout: u32 (0 hashed, 1 direct) | groups: u64
//!            | groups * key: u64 | groups * len: u32 | n * id: u32
//! dataset body (as above, without header)
//! checksum: u64, FNV-1a over every preceding byte
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::amih::{balanced_spans, MultiIndex, SearchScratch, Span};
use crate::code::{words_for, BinaryCode, CodeStore};
use crate::error::{Error, Result};
use crate::search::{Neighbor, QueryStats};
use crate::single::HashIndex;
use crate::table::Postings;
use crate::MAX_CODE_BITS;

pub const DATASET_MAGIC: &[u8; 4] = b"ABC1";
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"ABCX";
pub const FORMAT_VERSION: u32 = 1;
const DATASET_HEADER_LEN: usize = 20;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u64s(&mut self, count: usize) -> Result<Vec<u64>> {
        let bytes = self.take(
            count
                .checked_mul(8)
                .ok_or_else(|| Error::Format("length overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, count: usize) -> Result<Vec<u32>> {
        let bytes = self.take(
            count
                .checked_mul(4)
                .ok_or_else(|| Error::Format("length overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn check_magic(found: &[u8], expected: &[u8; 4]) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!(
            "bad magic {found:?}, expected {:?}",
            std::str::from_utf8(expected).unwrap()
        )));
    }
    Ok(())
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

fn read_body(cur: &mut Cursor<'_>, p: u32, n: u64) -> Result<CodeStore> {
    if p == 0 || p > MAX_CODE_BITS {
        return Err(Error::Format(format!("code length {p} out of range")));
    }
    let count = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(words_for(p)))
        .ok_or_else(|| Error::Format(format!("record count {n} too large")))?;
    let words = cur.u64s(count)?;
    CodeStore::from_words(p, words).map_err(|e| Error::Format(e.to_string()))
}

/// Serializes `codes` as a dataset file.
pub fn write_dataset<W: Write>(mut w: W, codes: &CodeStore) -> Result<()> {
    let mut header = Vec::with_capacity(DATASET_HEADER_LEN);
    header.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut header, FORMAT_VERSION);
    put_u32(&mut header, codes.bits());
    put_u64(&mut header, codes.len() as u64);
    w.write_all(&header)?;
    let mut body = Vec::with_capacity(codes.as_words().len() * 8);
    for &word in codes.as_words() {
        body.extend_from_slice(&word.to_le_bytes());
    }
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Parses a complete dataset file; trailing bytes are an error.
pub fn parse_dataset(bytes: &[u8]) -> Result<CodeStore> {
    let mut cur = Cursor::new(bytes);
    check_magic(cur.take(4)?, DATASET_MAGIC)?;
    check_version(cur.u32()?)?;
    let p = cur.u32()?;
    let n = cur.u64()?;
    let store = read_body(&mut cur, p, n)?;
    if cur.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", cur.remaining())));
    }
    Ok(store)
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<CodeStore> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_dataset(&bytes)
}

pub fn save_dataset(path: impl AsRef<Path>, codes: &CodeStore) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), codes)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<CodeStore> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// A persisted index of either engine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexSnapshot {
    Single(HashIndex),
    Amih(MultiIndex),
}

impl IndexSnapshot {
    pub fn engine_name(&self) -> &'static str {
        match self {
            IndexSnapshot::Single(_) => "single",
            IndexSnapshot::Amih(_) => "amih",
        }
    }

    pub fn codes(&self) -> &CodeStore {
        match self {
            IndexSnapshot::Single(i) => i.codes(),
            IndexSnapshot::Amih(i) => i.codes(),
        }
    }

    pub fn bits(&self) -> u32 {
        self.codes().bits()
    }

    pub fn len(&self) -> usize {
        self.codes().len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes().is_empty()
    }

    pub fn heap_bytes(&self) -> usize {
        match self {
            IndexSnapshot::Single(i) => i.heap_bytes(),
            IndexSnapshot::Amih(i) => i.heap_bytes(),
        }
    }

    /// Exact top-`k`. `scratch` is only used by the multi-index engine.
    pub fn knn(
        &self,
        q: &BinaryCode,
        k: usize,
        scratch: &mut SearchScratch,
    ) -> Result<(Vec<Neighbor>, QueryStats)> {
        match self {
            IndexSnapshot::Single(i) => i.knn(q, k),
            IndexSnapshot::Amih(i) => i.knn_with(q, k, scratch),
        }
    }

    fn parts(&self) -> (u32, Vec<Span>, Vec<&Postings>) {
        match self {
            IndexSnapshot::Single(i) => (
                0,
                vec![Span {
                    offset: 0,
                    width: i.bits(),
                }],
                vec![i.table()],
            ),
            IndexSnapshot::Amih(i) => (1, i.spans().to_vec(), i.tables().iter().collect()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (engine, spans, tables) = self.parts();
        let codes = self.codes();
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, engine);
        put_u32(&mut out, codes.bits());
        put_u64(&mut out, codes.len() as u64);
        put_u32(&mut out, spans.len() as u32);
        for s in &spans {
            put_u32(&mut out, s.offset);
            put_u32(&mut out, s.width);
        }
        for table in tables {
            put_u32(&mut out, u32::from(table.is_dense()));
            let groups = table.groups();
            put_u64(&mut out, groups.len() as u64);
            for (key, _) in &groups {
                put_u64(&mut out, *key);
            }
            for (_, ids) in &groups {
                put_u32(&mut out, ids.len() as u32);
            }
            for (_, ids) in &groups {
                for &id in *ids {
                    put_u32(&mut out, id);
                }
            }
        }
        for &word in codes.as_words() {
            put_u64(&mut out, word);
        }
        let sum = fnv1a(&out);
        put_u64(&mut out, sum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Format("snapshot too short".into()));
        }
        check_magic(&bytes[..4], SNAPSHOT_MAGIC)?;
        let (content, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a(content) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let mut cur = Cursor::new(content);
        cur.take(4)?;
        check_version(cur.u32()?)?;
        let engine = cur.u32()?;
        let p = cur.u32()?;
        let n = cur.u64()?;
        let m = cur.u32()?;
        if p == 0 || p > MAX_CODE_BITS || m == 0 || m > p {
            return Err(Error::Format(format!("bad shape p={p} m={m}")));
        }
        let mut spans = Vec::with_capacity(m as usize);
        for _ in 0..m {
            spans.push(Span {
                offset: cur.u32()?,
                width: cur.u32()?,
            });
        }
        let expected = match engine {
            0 => vec![Span {
                offset: 0,
                width: p,
            }],
            1 => balanced_spans(p, m).map_err(|e| Error::Format(e.to_string()))?,
            e => return Err(Error::Format(format!("unknown engine {e}"))),
        };
        if spans != expected {
            return Err(Error::Format(
                "span table does not match code length".into(),
            ));
        }
        let n_ids = usize::try_from(n).map_err(|_| Error::Format("n too large".into()))?;
        let mut tables = Vec::with_capacity(m as usize);
        for span in &spans {
            tables.push(read_table(&mut cur, span.width, n_ids)?);
        }
        let codes = read_body(&mut cur, p, n)?;
        if cur.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", cur.remaining())));
        }
        Ok(match engine {
            0 => IndexSnapshot::Single(HashIndex::from_parts(codes, tables.pop().unwrap())),
            _ => IndexSnapshot::Amih(MultiIndex::from_parts(codes, spans, tables)),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn read_table(cur: &mut Cursor<'_>, width: u32, n: usize) -> Result<Postings> {
    let dense = match cur.u32()? {
        0 => false,
        1 if width < 32 => true,
        other => return Err(Error::Format(format!("bad table layout {other}"))),
    };
    let groups = usize::try_from(cur.u64()?).map_err(|_| Error::Format("group count".into()))?;
    if groups > n {
        return Err(Error::Format(format!("{groups} groups for {n} items")));
    }
    let keys = cur.u64s(groups)?;
    let lens = cur.u32s(groups)?;
    let ids = cur.u32s(n)?;
    let limit = if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    if keys.windows(2).any(|w| w[0] >= w[1]) || keys.iter().any(|&k| k > limit) {
        return Err(Error::Format("table keys unsorted or out of range".into()));
    }
    if lens.contains(&0) || lens.iter().map(|&l| l as u64).sum::<u64>() != n as u64 {
        return Err(Error::Format("bucket sizes do not add up".into()));
    }
    if ids.iter().any(|&id| id as usize >= n) {
        return Err(Error::Format("id out of range".into()));
    }
    Ok(Postings::from_groups(width, dense, &keys, &lens, ids))
}
