use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use amih::io::{load_dataset, save_dataset};
use amih::{gen, BinaryCode, CodeStore, IndexSnapshot};
use serde_json::Value;
use tempfile::TempDir;

fn amih(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amih"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn amih_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amih"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> &Output {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_file(dir: &TempDir, name: &str, n: usize, p: u32, seed: u64) -> PathBuf {
    let out = path(dir, name);
    ok(&amih(&[
        "gen",
        "--n",
        &n.to_string(),
        "--p",
        &p.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]));
    out
}

fn build_report(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("JSON report on stderr");
    serde_json::from_str(line).unwrap()
}

/// Query output with every `"time_ns":<digits>` field blanked.
fn without_time(bytes: &[u8]) -> String {
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let mut out = String::with_capacity(text.len());
    let mut rest = text.as_str();
    while let Some(i) = rest.find("\"time_ns\":") {
        let (head, tail) = rest.split_at(i + "\"time_ns\":".len());
        out.push_str(head);
        rest = tail.trim_start_matches(|c: char| c.is_ascii_digit());
    }
    out.push_str(rest);
    out
}

fn lines(bytes: &[u8]) -> Vec<Value> {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn neighbor_ids(line: &Value) -> Vec<u64> {
    line["neighbors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n["id"].as_u64().unwrap())
        .collect()
}

#[test]
fn gen_is_deterministic_with_expected_density() {
    let dir = TempDir::new().unwrap();
    let a = gen_file(&dir, "a.bin", 10_000, 64, 5);
    let b = gen_file(&dir, "b.bin", 10_000, 64, 5);
    let c = gen_file(&dir, "c.bin", 10_000, 64, 6);
    let (a, b, c) = (
        std::fs::read(a).unwrap(),
        std::fs::read(b).unwrap(),
        std::fs::read(c).unwrap(),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 20 + 10_000 * 8);

    let codes = amih::io::parse_dataset(&a).unwrap();
    let mean = codes.iter().map(|w| w[0].count_ones() as f64).sum::<f64>() / codes.len() as f64;
    // standard error of the mean is sqrt(64 / 4 / 10^4) = 0.04
    assert!((mean - 32.0).abs() < 5.0 * 0.04, "mean popcount {mean}");
}

#[test]
fn gen_edge_cases_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    let empty = gen_file(&dir, "empty.bin", 0, 100, 1);
    let codes = load_dataset(&empty).unwrap();
    assert_eq!((codes.len(), codes.bits()), (0, 100));

    let sparse = path(&dir, "sparse.bin");
    ok(&amih(&[
        "gen",
        "--n",
        "2000",
        "--p",
        "200",
        "--density",
        "0.1",
        "--out",
        s(&sparse),
    ]));
    let codes = load_dataset(&sparse).unwrap();
    let ones: u32 = (0..codes.len()).map(|i| codes.code(i).popcount()).sum();
    let density = ones as f64 / (2000.0 * 200.0);
    assert!((density - 0.1).abs() < 0.005, "density {density}");

    let out = s(&path(&dir, "x.bin")).to_string();
    for bad in [
        vec!["gen", "--n", "5", "--p", "0", "--out", &out],
        vec!["gen", "--n", "5", "--p", "4097", "--out", &out],
        vec![
            "gen",
            "--n",
            "5",
            "--p",
            "8",
            "--density",
            "1.0",
            "--out",
            &out,
        ],
        vec![
            "gen",
            "--n",
            "5",
            "--p",
            "8",
            "--density",
            "0",
            "--out",
            &out,
        ],
        vec!["gen", "--n", "-1", "--p", "8", "--out", &out],
        vec!["gen", "--p", "8", "--out", &out],
    ] {
        assert_eq!(amih(&bad).status.code(), Some(2), "{bad:?}");
    }
}

#[test]
fn build_defaults_m_and_reports_json() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 1_000_000, 64, 3);
    let index = path(&dir, "i.idx");
    let out = ok(&amih(&["build", "--dataset", s(&data), "--out", s(&index)])).clone();
    let report = build_report(&out);
    assert_eq!(report["engine"], "amih");
    assert_eq!(report["m"], 3);
    assert_eq!(report["n"], 1_000_000);
    assert_eq!(report["p"], 64);
    assert!(report["build_time_ns"].as_u64().unwrap() > 0);
    assert!(report["index_bytes"].as_u64().unwrap() > 8_000_000);
    match IndexSnapshot::load(&index).unwrap() {
        IndexSnapshot::Amih(i) => assert_eq!(i.m(), 3),
        other => panic!("wrong engine {}", other.engine_name()),
    }

    // explicit m and positional dataset
    let small = gen_file(&dir, "s.bin", 1000, 64, 3);
    let out = ok(&amih(&["build", s(&small), "--m", "5", "--out", s(&index)])).clone();
    assert_eq!(build_report(&out)["m"], 5);
}

#[test]
fn single_engine_limits() {
    let dir = TempDir::new().unwrap();
    let d16 = gen_file(&dir, "d16.bin", 500, 16, 1);
    let index = path(&dir, "i.idx");
    ok(&amih(&[
        "build",
        "--dataset",
        s(&d16),
        "--engine",
        "single",
        "--out",
        s(&index),
    ]));
    match IndexSnapshot::load(&index).unwrap() {
        IndexSnapshot::Single(h) => {
            assert!(h.table().is_dense());
            assert_eq!(h.table().slot_count(), 65_536);
        }
        other => panic!("wrong engine {}", other.engine_name()),
    }

    let d40 = gen_file(&dir, "d40.bin", 500, 40, 1);
    let refused = amih(&[
        "build",
        "--dataset",
        s(&d40),
        "--engine",
        "single",
        "--out",
        s(&index),
    ]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));
    ok(&amih(&[
        "build",
        "--dataset",
        s(&d40),
        "--engine",
        "single",
        "--force",
        "--out",
        s(&index),
    ]));

    let d80 = gen_file(&dir, "d80.bin", 50, 80, 1);
    let out = amih(&[
        "build",
        "--dataset",
        s(&d80),
        "--engine",
        "single",
        "--force",
        "--out",
        s(&index),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = amih(&[
        "build",
        "--dataset",
        s(&d16),
        "--engine",
        "scan",
        "--out",
        s(&index),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = amih(&[
        "build",
        "--dataset",
        s(&d16),
        "--m",
        "17",
        "--out",
        s(&index),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_inputs_are_data_errors() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 100, 32, 1);
    let index = path(&dir, "i.idx");
    ok(&amih(&["build", "--dataset", s(&data), "--out", s(&index)]));

    let mut bytes = std::fs::read(&index).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    let bad_index = path(&dir, "bad.idx");
    std::fs::write(&bad_index, &bytes).unwrap();
    let out = amih(&[
        "query",
        "--index",
        s(&bad_index),
        "--queries",
        s(&data),
        "--k",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));

    let bytes = std::fs::read(&data).unwrap();
    let truncated = path(&dir, "t.bin");
    std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
    let out = amih(&["build", "--dataset", s(&truncated), "--out", s(&index)]);
    assert_eq!(out.status.code(), Some(1));

    let mut wrong_magic = bytes.clone();
    wrong_magic[0] = b'X';
    std::fs::write(&truncated, &wrong_magic).unwrap();
    let out = amih(&["build", "--dataset", s(&truncated), "--out", s(&index)]);
    assert_eq!(out.status.code(), Some(1));

    let missing = path(&dir, "missing.bin");
    let out = amih(&["build", "--dataset", s(&missing), "--out", s(&index)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn query_finds_every_stored_code_with_unit_similarity() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 3000, 64, 11);
    let index = path(&dir, "i.idx");
    ok(&amih(&["build", "--dataset", s(&data), "--out", s(&index)]));
    let codes = load_dataset(&data).unwrap();
    let queries = path(&dir, "q.bin");
    save_dataset(&queries, &codes.prefix(200)).unwrap();

    let out = ok(&amih(&[
        "query",
        "--index",
        s(&index),
        "--queries",
        s(&queries),
        "--k",
        "1",
    ]))
    .clone();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 200);
    for (i, line) in text.lines().enumerate() {
        assert!(line.contains("\"sim\":1.0000000000000000"), "{line}");
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["query_id"], i);
        let stats = &v["stats"];
        for key in [
            "buckets_probed",
            "candidates_checked",
            "tuples_emitted",
            "time_ns",
        ] {
            assert!(stats[key].is_u64(), "{key} in {line}");
        }
        assert!(stats["entered_anchor_phase"].is_boolean());
    }
}

#[test]
fn query_output_is_deterministic_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 20_000, 48, 2);
    let queries = gen_file(&dir, "q.bin", 300, 48, 9);
    let index = path(&dir, "i.idx");
    ok(&amih(&["build", "--dataset", s(&data), "--out", s(&index)]));
    let args = [
        "query",
        "--index",
        s(&index),
        "--queries",
        s(&queries),
        "--k",
        "7",
    ];
    let a = ok(&amih(&args)).stdout.clone();
    let b = ok(&amih(&args)).stdout.clone();
    let c = ok(&amih_env(&args, "ABC_THREADS", "1")).stdout.clone();
    let d = ok(&amih_env(&args, "ABC_THREADS", "3")).stdout.clone();
    assert_eq!(without_time(&a), without_time(&b));
    assert_eq!(without_time(&a), without_time(&c));
    assert_eq!(without_time(&a), without_time(&d));

    let file = path(&dir, "out.jsonl");
    ok(&amih(&[
        "query",
        "--index",
        s(&index),
        "--queries",
        s(&queries),
        "--k",
        "7",
        "--out",
        s(&file),
    ]));
    assert_eq!(
        without_time(&std::fs::read(&file).unwrap()),
        without_time(&a)
    );

    assert_eq!(amih_env(&args, "ABC_THREADS", "0").status.code(), Some(2));
    assert_eq!(
        amih_env(&args, "ABC_THREADS", "many").status.code(),
        Some(2)
    );
    let zero_k = [
        "query",
        "--index",
        s(&index),
        "--queries",
        s(&queries),
        "--k",
        "0",
    ];
    assert_eq!(amih(&zero_k).status.code(), Some(2));
}

#[test]
fn single_and_amih_agree_line_for_line() {
    let dir = TempDir::new().unwrap();
    for (p, n) in [(16u32, 5000usize), (32, 20_000)] {
        let data = gen_file(&dir, &format!("d{p}.bin"), n, p, 4);
        let queries = gen_file(&dir, &format!("q{p}.bin"), 150, p, 8);
        let single = path(&dir, &format!("s{p}.idx"));
        let multi = path(&dir, &format!("m{p}.idx"));
        ok(&amih(&[
            "build",
            "--dataset",
            s(&data),
            "--engine",
            "single",
            "--out",
            s(&single),
        ]));
        ok(&amih(&[
            "build",
            "--dataset",
            s(&data),
            "--engine",
            "amih",
            "--out",
            s(&multi),
        ]));
        for k in ["1", "10", "100"] {
            let a = ok(&amih(&[
                "query",
                "--index",
                s(&single),
                "--queries",
                s(&queries),
                "--k",
                k,
            ]))
            .stdout
            .clone();
            let b = ok(&amih(&[
                "query",
                "--index",
                s(&multi),
                "--queries",
                s(&queries),
                "--k",
                k,
            ]))
            .stdout
            .clone();
            let (a, b) = (lines(&a), lines(&b));
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(neighbor_ids(x), neighbor_ids(y), "p={p} k={k}");
                assert_eq!(x["neighbors"], y["neighbors"]);
            }
        }
    }
}

#[test]
fn zero_norm_queries_report_per_line_errors() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 500, 24, 1);
    let index = path(&dir, "i.idx");
    ok(&amih(&["build", "--dataset", s(&data), "--out", s(&index)]));
    let mut qs = CodeStore::new(24).unwrap();
    qs.push(&BinaryCode::from_u64(24, 0b1011).unwrap()).unwrap();
    qs.push(&BinaryCode::zeros(24).unwrap()).unwrap();
    qs.push(&BinaryCode::from_u64(24, 0xff00).unwrap()).unwrap();
    let queries = path(&dir, "q.bin");
    save_dataset(&queries, &qs).unwrap();

    let out = ok(&amih(&[
        "query",
        "--index",
        s(&index),
        "--queries",
        s(&queries),
        "--k",
        "3",
    ]))
    .clone();
    let v = lines(&out.stdout);
    assert_eq!(v.len(), 3);
    assert_eq!(neighbor_ids(&v[0]).len(), 3);
    assert_eq!(v[1]["query_id"], 1);
    assert!(v[1]["error"].as_str().unwrap().contains("no set bits"));
    assert!(v[1].get("neighbors").is_none());
    assert_eq!(neighbor_ids(&v[2]).len(), 3);
}

#[test]
fn query_length_mismatch_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 100, 32, 1);
    let queries = gen_file(&dir, "q.bin", 10, 33, 1);
    let index = path(&dir, "i.idx");
    ok(&amih(&["build", "--dataset", s(&data), "--out", s(&index)]));
    let out = amih(&[
        "query",
        "--index",
        s(&index),
        "--queries",
        s(&queries),
        "--k",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // a dataset where a snapshot is expected
    let out = amih(&[
        "query",
        "--index",
        s(&data),
        "--queries",
        s(&queries),
        "--k",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommands_and_flags_are_usage_errors() {
    assert_eq!(amih(&[]).status.code(), Some(2));
    assert_eq!(amih(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(amih(&["gen", "--bogus"]).status.code(), Some(2));
    ok(&amih(&["--help"]));
}

#[test]
fn bench_writes_csv_rows_per_engine_size_and_k() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 4000, 32, 1);
    let csv_path = path(&dir, "b.csv");
    ok(&amih(&[
        "bench",
        "--index-or-dataset",
        s(&data),
        "--engines",
        "single,amih,scan",
        "--ks",
        "1,5",
        "--sizes",
        "1000,4000",
        "--n-queries",
        "40",
        "--out",
        s(&csv_path),
    ]));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut rows = text.lines();
    assert_eq!(
        rows.next().unwrap(),
        "engine,n,K,mean_time_ns,mean_buckets_probed,mean_candidates,pct_anchor_phase,speedup_vs_scan"
    );
    let rows: Vec<Vec<String>> = rows
        .map(|r| r.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 2 * 2 * 3);
    for r in &rows {
        assert_eq!(r.len(), 8);
        let time: f64 = r[3].parse().unwrap();
        assert!(time > 0.0);
        if r[0] == "scan" {
            assert_eq!(r[5], format!("{}.000", r[1]));
            assert_eq!(r[7], "1.000");
        }
    }

    // snapshots are accepted too, and bad sizes are usage errors
    let index = path(&dir, "i.idx");
    ok(&amih(&["build", "--dataset", s(&data), "--out", s(&index)]));
    ok(&amih(&[
        "bench",
        "--index-or-dataset",
        s(&index),
        "--n-queries",
        "5",
    ]));
    let out = amih(&["bench", "--index-or-dataset", s(&index), "--sizes", "5000"]);
    assert_eq!(out.status.code(), Some(2));
    let out = amih(&["bench", "--index-or-dataset", s(&index), "--ks", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_accepts_query_files() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 2000, 64, 1);
    let queries = gen_file(&dir, "q.bin", 25, 64, 2);
    let out = ok(&amih(&[
        "bench",
        "--index-or-dataset",
        s(&data),
        "--queries",
        s(&queries),
    ]))
    .clone();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    let wrong = gen_file(&dir, "w.bin", 5, 32, 2);
    let out = amih(&[
        "bench",
        "--index-or-dataset",
        s(&data),
        "--queries",
        s(&wrong),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn scan_time_grows_roughly_linearly() {
    let dir = TempDir::new().unwrap();
    let data = gen_file(&dir, "d.bin", 1_000_000, 64, 1);
    let out = ok(&amih(&[
        "bench",
        "--index-or-dataset",
        s(&data),
        "--engines",
        "scan",
        "--sizes",
        "100000,1000000",
        "--n-queries",
        "200",
    ]))
    .clone();
    let text = String::from_utf8(out.stdout).unwrap();
    let times: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|r| r.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    let ratio = times[1] / times[0];
    // a decade step in n; allow 0.5x to 2x of linear
    assert!((5.0..=20.0).contains(&ratio), "scan time ratio {ratio}");
}

#[test]
fn generated_files_match_library_output() {
    let dir = TempDir::new().unwrap();
    let file = gen_file(&dir, "d.bin", 777, 130, 42);
    let expected = gen::generate(777, 130, 0.5, 42).unwrap();
    assert_eq!(load_dataset(&file).unwrap(), expected);
}
