//! WebAssembly bindings behind the browser demo in `www/`.
//!
//! Each export returns a JSON string so the page can stay plain JavaScript.
//! The Rust-side functions that build those values are public too, which
//! lets them be tested natively.

use amih::code::similarity;
use amih::{
    bucket_count, candidate_tuples, gen, linear_scan_knn, probing_bound, BinaryCode, HammingTuple,
    MultiIndex, Neighbor, TupleSequence,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest probing order the page will ask for; enough to fill a table.
pub const MAX_ORDER_ROWS: usize = 2000;

#[derive(Debug, Serialize)]
pub struct TupleRow {
    pub r1: u32,
    pub r2: u32,
    pub similarity: f64,
    /// Buckets holding codes at this tuple, as a float since it can exceed
    /// what JSON integers carry.
    pub buckets: f64,
    /// `"ball"` or `"anchor"`, the generator phase that produced it.
    pub phase: &'static str,
}

#[derive(Debug, Serialize)]
pub struct ProbingOrder {
    pub z: u32,
    pub p: u32,
    pub r_hat: u32,
    pub total: u64,
    pub rows: Vec<TupleRow>,
}

/// The first `limit` tuples visited for a query with `z` ones out of `p` bits.
pub fn probing_order(z: u32, p: u32, limit: usize) -> amih::Result<ProbingOrder> {
    let mut seq = TupleSequence::new(z, p)?;
    let mut rows = Vec::new();
    while rows.len() < limit.min(MAX_ORDER_ROWS) {
        let Some(t) = seq.next() else { break };
        rows.push(TupleRow {
            r1: t.r1,
            r2: t.r2,
            similarity: similarity(z, t),
            buckets: bucket_count(z, p, t)? as f64,
            phase: if seq.in_anchor_phase() {
                "anchor"
            } else {
                "ball"
            },
        });
    }
    Ok(ProbingOrder {
        z,
        p,
        r_hat: seq.r_hat(),
        total: seq.total(),
        rows,
    })
}

#[derive(Debug, Serialize)]
pub struct CandidateReport {
    pub r1: u32,
    pub r2: u32,
    pub m: u32,
    pub radius: u32,
    pub tuples: Vec<(u32, u32)>,
    /// Ceiling on buckets probed, absent once the bound no longer applies.
    pub probing_bound: Option<f64>,
}

/// Substring tuples probed in each of `m` tables to cover `(r1, r2)` on `p`-bit codes.
pub fn candidates(r1: u32, r2: u32, m: u32, p: u32) -> amih::Result<CandidateReport> {
    let bound = HammingTuple::new(r1, r2);
    let set = candidate_tuples(bound, m)?;
    Ok(CandidateReport {
        r1,
        r2,
        m,
        radius: set.radius,
        tuples: set.tuples.iter().map(|t| (t.r1, t.r2)).collect(),
        probing_bound: probing_bound(p, m, bound).ok(),
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Hit {
    pub id: u32,
    pub similarity: f64,
    pub r1: u32,
    pub r2: u32,
    pub code: String,
}

#[derive(Debug, Serialize)]
pub struct SearchReport {
    pub hits: Vec<Hit>,
    pub buckets_probed: u64,
    pub candidates_checked: u64,
    pub tuples_emitted: u64,
}

/// A random dataset indexed for the interactive search panel.
#[wasm_bindgen]
pub struct Demo {
    index: MultiIndex,
}

impl Demo {
    pub fn build(n: usize, p: u32, density: f64, seed: u64) -> amih::Result<Demo> {
        let codes = gen::generate(n, p, density, seed)?;
        Ok(Demo {
            index: MultiIndex::build_default(codes)?,
        })
    }

    fn hits(&self, found: Vec<Neighbor>) -> Vec<Hit> {
        found
            .into_iter()
            .map(|n| Hit {
                id: n.id,
                similarity: n.similarity,
                r1: n.tuple.r1,
                r2: n.tuple.r2,
                code: self.index.codes().code(n.id as usize).to_string(),
            })
            .collect()
    }

    pub fn search_amih(&self, query: &str, k: usize) -> amih::Result<SearchReport> {
        let q = BinaryCode::parse_bits(query)?;
        let (found, stats) = self.index.knn(&q, k)?;
        Ok(SearchReport {
            hits: self.hits(found),
            buckets_probed: stats.buckets_probed,
            candidates_checked: stats.candidates_checked,
            tuples_emitted: stats.tuples_emitted,
        })
    }

    pub fn search_scan(&self, query: &str, k: usize) -> amih::Result<SearchReport> {
        let q = BinaryCode::parse_bits(query)?;
        let found = linear_scan_knn(self.index.codes(), &q, k)?;
        Ok(SearchReport {
            hits: self.hits(found),
            buckets_probed: 0,
            candidates_checked: self.index.len() as u64,
            tuples_emitted: 0,
        })
    }
}

fn to_json<T: Serialize>(value: amih::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, p: u32, density: f64, seed: u64) -> Result<Demo, JsError> {
        Demo::build(n, p, density, seed).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn bits(&self) -> u32 {
        self.index.bits()
    }

    pub fn tables(&self) -> u32 {
        self.index.m()
    }

    /// Item `id` as a bit string, handy as a query with an exact match.
    pub fn item(&self, id: usize) -> Option<String> {
        (id < self.index.len()).then(|| self.index.codes().code(id).to_string())
    }

    #[wasm_bindgen(js_name = knnAmih)]
    pub fn knn_amih(&self, query: &str, k: usize) -> Result<String, JsError> {
        to_json(self.search_amih(query, k))
    }

    #[wasm_bindgen(js_name = knnScan)]
    pub fn knn_scan(&self, query: &str, k: usize) -> Result<String, JsError> {
        to_json(self.search_scan(query, k))
    }
}

#[wasm_bindgen(js_name = probingOrder)]
pub fn probing_order_json(z: u32, p: u32, limit: usize) -> Result<String, JsError> {
    to_json(probing_order(z, p, limit))
}

#[wasm_bindgen(js_name = candidateTuples)]
pub fn candidates_json(r1: u32, r2: u32, m: u32, p: u32) -> Result<String, JsError> {
    to_json(candidates(r1, r2, m, p))
}
