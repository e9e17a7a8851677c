//! End-to-end tests of the binary: pipelines, attack replay, exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SEED: &str = "101112131415161718191a1b1c1d1e1f";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eopsi"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> TempDir {
        let dir = std::env::temp_dir().join(format!("eopsi-cli-test-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, content).unwrap();
        p
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_prints_sorted_intersection_and_is_reproducible() {
    let tmp = TempDir::new("run");
    let a = tmp.write("a.txt", "3\n1\n2\n# comment\n");
    let b = tmp.write("b.txt", "2\n4\n3\n");
    let t1 = tmp.path("t1.bin");
    let t2 = tmp.path("t2.bin");
    let common = [
        "--cardinality",
        "10",
        "--bin-capacity",
        "10",
        "--seed",
        SEED,
    ];
    for (scheme, transcript) in [("improved", &t1), ("eo", &t2)] {
        let out = run(&[
            "run",
            "--set-a",
            path_str(&a),
            "--set-b",
            path_str(&b),
            "--scheme",
            scheme,
            "--transcript",
            path_str(transcript),
            &common[0],
            common[1],
            common[2],
            common[3],
            common[4],
            common[5],
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert_eq!(stdout(&out), "2\n3\n");
    }

    // Same seed, same bytes.
    let t1_again = tmp.path("t1-again.bin");
    let out = run(&[
        "run",
        "--set-a",
        path_str(&a),
        "--set-b",
        path_str(&b),
        "--scheme",
        "improved",
        "--transcript",
        path_str(&t1_again),
        "--cardinality",
        "10",
        "--bin-capacity",
        "10",
        "--seed",
        SEED,
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(&t1).unwrap(), fs::read(&t1_again).unwrap());
}

#[test]
fn step_pipeline_reproduces_run_for_both_schemes() {
    for scheme in ["improved", "eo"] {
        let tmp = TempDir::new(&format!("steps-{scheme}"));
        let a = tmp.write("a.txt", "10\n20\n30\n");
        let b = tmp.write("b.txt", "20\n30\n40\n");
        let store = tmp.path("store");
        let store_s = path_str(&store);
        let size = ["--cardinality", "10", "--bin-capacity", "10"];

        let out = run(&[
            "setup",
            "--store-dir",
            store_s,
            "--seed",
            SEED,
            size[0],
            size[1],
            size[2],
            size[3],
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        for (party, file) in [("A", &a), ("B", &b)] {
            let out = run(&[
                "outsource",
                "--store-dir",
                store_s,
                "--seed",
                SEED,
                "--party",
                party,
                "--set-file",
                path_str(file),
                "--scheme",
                scheme,
            ]);
            assert!(out.status.success(), "{}", stderr(&out));
        }
        for step in ["delegate", "cloud"] {
            let out = run(&[
                step,
                "--store-dir",
                store_s,
                "--seed",
                SEED,
                "--scheme",
                scheme,
            ]);
            assert!(out.status.success(), "{step}: {}", stderr(&out));
        }
        let steps_out = tmp.path("steps.txt");
        let out = run(&[
            "retrieve",
            "--store-dir",
            store_s,
            "--seed",
            SEED,
            "--scheme",
            scheme,
            "--out",
            path_str(&steps_out),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));

        let run_out = tmp.path("run.txt");
        let out = run(&[
            "run",
            "--set-a",
            path_str(&a),
            "--set-b",
            path_str(&b),
            "--scheme",
            scheme,
            "--seed",
            SEED,
            "--out",
            path_str(&run_out),
            size[0],
            size[1],
            size[2],
            size[3],
        ]);
        assert!(out.status.success());
        assert_eq!(
            fs::read(&steps_out).unwrap(),
            fs::read(&run_out).unwrap(),
            "file pipeline and in-process run disagree for {scheme}"
        );
    }
}

#[test]
fn attack_reports_follow_the_scheme() {
    let tmp = TempDir::new("attack");
    let a = tmp.write("a.txt", "1\n2\n3\n");
    let b = tmp.write("b.txt", "2\n3\n4\n");
    for (scheme, expect_applicable) in [("eo", true), ("improved", false)] {
        let transcript = tmp.path(&format!("{scheme}.bin"));
        let out = run(&[
            "run",
            "--set-a",
            path_str(&a),
            "--set-b",
            path_str(&b),
            "--scheme",
            scheme,
            "--seed",
            SEED,
            "--cardinality",
            "10",
            "--bin-capacity",
            "10",
            "--transcript",
            path_str(&transcript),
        ]);
        assert!(out.status.success());
        let out = run(&["attack", "--transcript", path_str(&transcript)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let text = stdout(&out);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5, "4 attack reports plus the scan line");
        for line in &lines[..3] {
            assert!(
                line.contains(&format!("\"applicable\":{expect_applicable}")),
                "{scheme}: {line}"
            );
        }
        if scheme == "eo" {
            assert!(lines[0].contains("\"recovered\":[2,3,4]"), "{}", lines[0]);
            assert!(lines[1].contains("\"recovered\":[2,3]"), "{}", lines[1]);
            assert!(lines[2].contains("\"recovered\":[1,2,3]"), "{}", lines[2]);
            assert!(lines[4].contains("mk_B") && lines[4].contains("tk"));
        } else {
            assert!(lines[3].contains("\"recovered\":[1,2,3]"), "{}", lines[3]);
            assert!(lines[4].contains("\"hits\":[]"), "{}", lines[4]);
        }
    }
}

#[test]
fn attack_channel_filter_disables_key_leak() {
    let tmp = TempDir::new("channels");
    let a = tmp.write("a.txt", "1\n2\n");
    let b = tmp.write("b.txt", "2\n5\n");
    let transcript = tmp.path("eo.bin");
    let out = run(&[
        "run",
        "--set-a",
        path_str(&a),
        "--set-b",
        path_str(&b),
        "--scheme",
        "eo",
        "--seed",
        SEED,
        "--cardinality",
        "8",
        "--bin-capacity",
        "8",
        "--transcript",
        path_str(&transcript),
    ]);
    assert!(out.status.success());
    let out = run(&[
        "attack",
        "--transcript",
        path_str(&transcript),
        "--channels",
        "A-B,A-C,C-A,B-C,C-B",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let keyleak = text.lines().next().unwrap();
    assert!(keyleak.contains("\"applicable\":false"), "{keyleak}");
    // Subtraction only needs A->B and C->B.
    let subtract = text.lines().nth(1).unwrap();
    assert!(subtract.contains("\"applicable\":true"), "{subtract}");
}

#[test]
fn bench_writes_csv_and_reports_exact_counts() {
    let tmp = TempDir::new("bench");
    let csv = tmp.path("bench.csv");
    let out = run(&[
        "bench",
        "--c-list",
        "8,16",
        "--bin-capacity",
        "8",
        "--out",
        path_str(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("counts: EXACT MATCH"));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,c,h,d,n,party,phase,adds,muls,invs,interp_factor,msg_bytes,ms"
    );
    // 2 schemes x 2 cardinalities x 3 parties x 3 phases.
    assert_eq!(text.lines().count(), 1 + 36);
    assert!(text.contains("\neo,8,"));
    assert!(text.contains("\nimproved,16,"));
}

#[test]
fn bench_small_forced_shape_shows_the_frozen_counts() {
    // A relaxed failure budget lets a 4-element set sit in 2 bins of
    // capacity 3; client A's online multiplications are then 56 under the
    // improved scheme and 112 under the baseline.
    let tmp = TempDir::new("bench-small");
    let csv = tmp.path("small.csv");
    let out = run(&[
        "bench",
        "--c-list",
        "4",
        "--bin-capacity",
        "3",
        "--fail-prob",
        "0.2",
        "--seed",
        "00000000000000000000000000000001",
        "--out",
        path_str(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("counts: EXACT MATCH"));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.contains("improved,4,2,3,7,A,online,42,56,"), "{text}");
    assert!(text.contains("eo,4,2,3,7,A,online,112,112,"), "{text}");
}

#[test]
fn exit_codes_by_failure_class() {
    let tmp = TempDir::new("exits");
    let a = tmp.write("a.txt", "1\n2\n3\n4\n5\n");
    let b = tmp.write("b.txt", "1\n");

    // Oversized set: protocol failure, message names the cardinality.
    let out = run(&[
        "run",
        "--set-a",
        path_str(&a),
        "--set-b",
        path_str(&b),
        "--cardinality",
        "3",
        "--bin-capacity",
        "3",
        "--seed",
        SEED,
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("cardinality"));

    // Unreadable transcript: I/O failure.
    let out = run(&["attack", "--transcript", path_str(&tmp.path("missing.bin"))]);
    assert_eq!(out.status.code(), Some(4));

    // Retrieval before the cloud step: the missing artifact is named.
    let store = tmp.path("store");
    let out = run(&[
        "setup",
        "--store-dir",
        path_str(&store),
        "--seed",
        SEED,
        "--cardinality",
        "4",
        "--bin-capacity",
        "4",
    ]);
    assert!(out.status.success());
    let out = run(&["retrieve", "--store-dir", path_str(&store), "--seed", SEED]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("result.bin"), "{}", stderr(&out));

    // Usage failures.
    let out = run(&["bench", "--c-list", ""]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["run", "--set-a", path_str(&a)]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "run",
        "--set-a",
        path_str(&a),
        "--set-b",
        path_str(&b),
        "--seed",
        "zz",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Malformed set file: parse failure.
    let bad = tmp.write("bad.txt", "1\nnot-a-number\n");
    let out = run(&[
        "run",
        "--set-a",
        path_str(&bad),
        "--set-b",
        path_str(&b),
        "--seed",
        SEED,
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn outsourcing_twice_overwrites_deterministically() {
    let tmp = TempDir::new("overwrite");
    let a = tmp.write("a.txt", "1\n2\n");
    let store = tmp.path("store");
    let store_s = path_str(&store);
    let out = run(&[
        "setup",
        "--store-dir",
        store_s,
        "--seed",
        SEED,
        "--cardinality",
        "4",
        "--bin-capacity",
        "4",
    ]);
    assert!(out.status.success());
    for _ in 0..2 {
        let out = run(&[
            "outsource",
            "--store-dir",
            store_s,
            "--seed",
            SEED,
            "--party",
            "A",
            "--set-file",
            path_str(&a),
        ]);
        assert!(out.status.success());
    }
    let first = fs::read(store.join("store_A.bin")).unwrap();
    let out = run(&[
        "outsource",
        "--store-dir",
        store_s,
        "--seed",
        SEED,
        "--party",
        "A",
        "--set-file",
        path_str(&a),
    ]);
    assert!(out.status.success());
    assert_eq!(first, fs::read(store.join("store_A.bin")).unwrap());
}

#[test]
fn secrets_stay_off_the_streams_without_the_flag() {
    let tmp = TempDir::new("secrets");
    let a = tmp.write("a.txt", "1\n");
    let b = tmp.write("b.txt", "1\n");
    let base = [
        "run",
        "--set-a",
        path_str(&a),
        "--set-b",
        path_str(&b),
        "--cardinality",
        "4",
        "--bin-capacity",
        "4",
        "--seed",
        SEED,
    ];
    let quiet = run(&base);
    assert!(quiet.status.success());
    assert!(!stderr(&quiet).contains("secrets:"));

    let mut with_flag: Vec<&str> = base.to_vec();
    with_flag.push("--dump-secrets");
    let loud = run(&with_flag);
    assert!(loud.status.success());
    let err = stderr(&loud);
    assert!(err.contains("secrets:") && err.contains("mk_A="));
}
