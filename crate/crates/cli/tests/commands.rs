use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn onesweep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onesweep"))
        .args(args)
        .env_remove("ONESWEEP_WORKERS")
        .output()
        .expect("spawn onesweep")
}

fn ok(args: &[&str]) -> Output {
    let out = onesweep(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
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

#[test]
fn gen_zero_keys_writes_empty_file() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "empty.bin");
    ok(&["gen", "--n", "0", "--out", s(&out)]);
    assert_eq!(fs::metadata(&out).unwrap().len(), 0);
}

#[test]
fn gen_is_deterministic_and_sized() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.bin"), path(&dir, "b.bin"));
    for p in [&a, &b] {
        ok(&[
            "gen",
            "--n",
            "2^20",
            "--q",
            "1",
            "--bits",
            "32",
            "--seed",
            "5",
            "--out",
            s(p),
        ]);
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes.len(), 4 << 20);
    assert_eq!(bytes, fs::read(&b).unwrap());

    let keys: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let h = onesweep::keygen::empirical_bit_entropy(&keys).unwrap();
    assert!((h - 1.0).abs() < 0.01, "entropy {h}");
}

#[test]
fn round_trip_over_flag_matrix() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "in.bin");
    let sorted = path(&dir, "sorted.bin");
    let cases: &[(&str, &str, &[&str])] = &[
        ("32", "u32", &[]),
        ("32", "i32", &["--d", "5"]),
        ("32", "f32", &["--tile", "256", "--strip", "1000"]),
        ("64", "u64", &["--d", "11", "--algo", "rts"]),
        ("64", "i64", &["--workers", "3"]),
        ("64", "f64", &["--algo", "oracle"]),
    ];
    for &(bits, kt, extra) in cases {
        for q in ["1", "4"] {
            for values in [false, true] {
                let mut gen = vec![
                    "gen",
                    "--n",
                    "20000",
                    "--q",
                    q,
                    "--bits",
                    bits,
                    "--out",
                    s(&input),
                ];
                let mut common = vec!["--key-type", kt];
                if values {
                    gen.push("--values");
                    common.extend(["--values", "--value-bits", "64"]);
                    gen.extend(["--value-bits", "64"]);
                }
                ok(&gen);
                let mut sort = vec!["sort", "--in", s(&input), "--out", s(&sorted)];
                sort.extend(&common);
                sort.extend(extra);
                ok(&sort);
                let mut verify = vec!["verify", "--in", s(&input), "--sorted", s(&sorted)];
                verify.extend(&common);
                ok(&verify);
            }
        }
    }
}

#[test]
fn sort_outputs_agree_across_algorithms_and_workers() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "in.bin");
    ok(&[
        "gen",
        "--n",
        "50000",
        "--q",
        "2",
        "--values",
        "--out",
        s(&input),
    ]);
    let run = |name: &str, extra: &[&str]| {
        let out = path(&dir, name);
        let mut args = vec!["sort", "--in", s(&input), "--out", s(&out), "--values"];
        args.extend(extra);
        ok(&args);
        fs::read(out).unwrap()
    };
    let reference = run("w1.bin", &["--workers", "1"]);
    assert_eq!(reference, run("w8.bin", &["--workers", "8"]));
    assert_eq!(
        reference,
        run("rts.bin", &["--algo", "rts", "--workers", "8"])
    );
    assert_eq!(reference, run("oracle.bin", &["--algo", "oracle"]));

    // Already sorted input is left as is.
    let sorted = path(&dir, "w1.bin");
    let again = path(&dir, "again.bin");
    ok(&["sort", "--in", s(&sorted), "--out", s(&again), "--values"]);
    assert_eq!(reference, fs::read(again).unwrap());
}

#[test]
fn workers_may_come_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "in.bin");
    let out = path(&dir, "out.bin");
    ok(&["gen", "--n", "5000", "--out", s(&input)]);
    let status = Command::new(env!("CARGO_BIN_EXE_onesweep"))
        .args(["sort", "--in", s(&input), "--out", s(&out)])
        .env("ONESWEEP_WORKERS", "4")
        .status()
        .unwrap();
    assert!(status.success());
    ok(&["verify", "--in", s(&input), "--sorted", s(&out)]);
}

fn write_u32_pairs(p: &Path, records: &[(u32, u32)]) {
    let bytes: Vec<u8> = records
        .iter()
        .flat_map(|&(k, v)| k.to_le_bytes().into_iter().chain(v.to_le_bytes()))
        .collect();
    fs::write(p, bytes).unwrap();
}

#[test]
fn verify_rejects_swapped_pair() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "in.bin");
    let bad = path(&dir, "bad.bin");
    let keys: Vec<u8> = [5u32, 1, 9, 3]
        .iter()
        .flat_map(|k| k.to_le_bytes())
        .collect();
    fs::write(&input, keys).unwrap();
    let swapped: Vec<u8> = [1u32, 5, 3, 9]
        .iter()
        .flat_map(|k| k.to_le_bytes())
        .collect();
    fs::write(&bad, swapped).unwrap();
    let out = onesweep(&["verify", "--in", s(&input), "--sorted", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("index 1") && msg.contains("key=3"), "{msg}");
}

#[test]
fn verify_rejects_stability_violation() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "in.bin");
    let bad = path(&dir, "bad.bin");
    write_u32_pairs(&input, &[(7, 0), (3, 1), (7, 2)]);
    // Keys in order, but the equal keys' payloads are inverted.
    write_u32_pairs(&bad, &[(3, 1), (7, 2), (7, 0)]);
    let out = onesweep(&["verify", "--in", s(&input), "--sorted", s(&bad), "--values"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("index 1") && msg.contains("value=0"), "{msg}");

    let good = path(&dir, "good.bin");
    write_u32_pairs(&good, &[(3, 1), (7, 0), (7, 2)]);
    ok(&[
        "verify",
        "--in",
        s(&input),
        "--sorted",
        s(&good),
        "--values",
    ]);
}

#[test]
fn malformed_sizes_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    let ragged = path(&dir, "ragged.bin");
    let out = path(&dir, "out.bin");
    fs::write(&ragged, [0u8; 10]).unwrap();
    let r = onesweep(&["sort", "--in", s(&ragged), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("not a multiple"));

    let missing = path(&dir, "missing.bin");
    let r = onesweep(&["sort", "--in", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.bin"));

    fs::write(&ragged, [0u8; 8]).unwrap();
    for args in [
        vec![
            "sort",
            "--in",
            s(&ragged),
            "--out",
            s(&out),
            "--key-type",
            "u16",
        ],
        vec![
            "sort",
            "--in",
            s(&ragged),
            "--out",
            s(&out),
            "--bits",
            "32",
            "--key-type",
            "u64",
        ],
        vec!["sort", "--in", s(&ragged), "--out", s(&out), "--d", "17"],
        vec!["gen", "--n", "10", "--q", "0", "--out", s(&out)],
        vec!["frobnicate"],
    ] {
        assert_eq!(onesweep(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bench_csv_is_well_formed() {
    let dir = TempDir::new().unwrap();
    let csv_path = path(&dir, "bench.csv");
    ok(&[
        "bench",
        "--sizes",
        "12..13",
        "--q",
        "1,16",
        "--d",
        "8",
        "--algos",
        "onesweep,rts,oracle",
        "--trials",
        "2",
        "--workers",
        "1,2",
        "--csv",
        s(&csv_path),
    ]);
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    // sizes x q x algos x workers x trials
    assert_eq!(rows.len(), 2 * 2 * 3 * 2 * 2);
    for row in &rows {
        assert_eq!(row.len(), header.len());
        assert_eq!(&row[col("error")], "");
        let n: u64 = row[col("n")].parse().unwrap();
        let ops: u64 = row[col("element_ops")].parse().unwrap();
        let trial: u32 = row[col("trial")].parse().unwrap();
        assert!(trial >= 1, "warmup rows are not emitted");
        let wall: f64 = row[col("wall_seconds")].parse().unwrap();
        let tput: f64 = row[col("throughput")].parse().unwrap();
        assert!((tput - n as f64 / wall).abs() / tput < 1e-3);
        match &row[col("algo")] {
            "onesweep" => {
                assert_eq!(ops, 9 * n);
                assert_eq!(&row[col("traffic_ratio")], "1.0000");
            }
            "rts" => {
                assert_eq!(ops, 12 * n);
                assert_eq!(&row[col("traffic_ratio")], "1.3333");
            }
            _ => assert_eq!(&row[col("traffic_ratio")], ""),
        }
    }
}

#[test]
fn bench_records_failures_and_continues() {
    let out = ok(&[
        "bench",
        "--sizes",
        "10",
        "--d",
        "0,8",
        "--algos",
        "onesweep",
        "--trials",
        "1",
        "--workers",
        "1",
    ]);
    let mut reader = csv::Reader::from_reader(&out.stdout[..]);
    let header = reader.headers().unwrap().clone();
    let err = header.iter().position(|h| h == "error").unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0][err].contains("digit width"));
    assert_eq!(&rows[1][err], "");
}
