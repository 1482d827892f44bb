//! End-to-end runs of the installed binary.

use std::path::Path;
use std::process::{Command, Output};

fn propsel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propsel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn expect_ok(dir: &Path, args: &[&str]) {
    let out = propsel(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn expect_code(dir: &Path, args: &[&str], code: i32) {
    let out = propsel(dir, args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(
        stderr.lines().filter(|l| l.starts_with("error:")).count(),
        1,
        "diagnostics should be a single line: {stderr}"
    );
}

fn synth_small(dir: &Path) {
    expect_ok(
        dir,
        &[
            "synth",
            "--seed",
            "1",
            "--grid",
            "64x64",
            "--objects",
            "3",
            "--layers",
            "3",
            "--parts",
            "2",
            "--tiles",
            "4",
            "--reward-noise",
            "0.05",
            "--feature-noise",
            "0.05",
            "--pool-out",
            "pool.json",
            "--gt-out",
            "gt.json",
        ],
    );
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn lazy_and_naive_selections_evaluate_identically() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_small(dir);
    for algorithm in ["lazy", "naive"] {
        expect_ok(
            dir,
            &[
                "select",
                "--pool",
                "pool.json",
                "--k",
                "10",
                "--algorithm",
                algorithm,
                "--out",
                &format!("sel_{algorithm}.json"),
            ],
        );
        expect_ok(
            dir,
            &[
                "eval",
                "--pool",
                "pool.json",
                "--gt",
                "gt.json",
                "--selection",
                &format!("sel_{algorithm}.json"),
                "--out",
                &format!("metrics_{algorithm}.json"),
            ],
        );
    }
    let strip = |name: &str| {
        let mut v = json(dir, name);
        v.as_object_mut().unwrap().remove("provenance");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip("metrics_lazy.json"), strip("metrics_naive.json"));
    // Same picks and scores; only bookkeeping (algorithm, evaluation
    // count) may differ between the two searches.
    let lazy = json(dir, "sel_lazy.json");
    let naive = json(dir, "sel_naive.json");
    for field in ["order", "gains", "trace"] {
        assert_eq!(lazy[field], naive[field], "{field}");
    }
    assert!(lazy["evaluations"].as_u64() < naive["evaluations"].as_u64());
}

#[test]
fn outputs_are_reproducible_and_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_small(dir);
    let select = |out: &str| {
        expect_ok(
            dir,
            &[
                "select", "--pool", "pool.json", "--k", "10", "--out", out,
            ],
        );
    };
    select("a.json");
    select("b.json");
    assert_eq!(
        std::fs::read_to_string(dir.join("a.json")).unwrap().replace("a.json", "b.json"),
        std::fs::read_to_string(dir.join("b.json")).unwrap()
    );

    let sel = json(dir, "a.json");
    assert_eq!(sel["order"].as_array().unwrap().len(), 10);
    let config = &sel["provenance"]["config"];
    assert_eq!(config["objective"]["alpha"], 3.9);
    assert_eq!(config["objective"]["beta"], 2.0);
    assert_eq!(config["algorithm"], "lazy");
    assert_eq!(config["graph"]["scale_neighbors"], 7);
    assert_eq!(config["graph"]["dilation"], 1);
    let pool_hash = sel["provenance"]["inputs"]["pool"].as_str().unwrap();
    assert!(pool_hash.starts_with("sha256:"));

    // The emitted pool file still parses as a pool even with the
    // provenance block attached.
    expect_ok(
        dir,
        &["oracle", "--pool", "pool.json", "--k", "2", "--out", "oracle.json"],
    );
    let oracle = json(dir, "oracle.json");
    assert_eq!(oracle["algorithm"], "oracle");
}

#[test]
fn eval_defaults_to_the_full_selection_budget() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_small(dir);
    expect_ok(
        dir,
        &["select", "--pool", "pool.json", "--k", "7", "--out", "sel.json"],
    );
    expect_ok(
        dir,
        &[
            "eval", "--pool", "pool.json", "--gt", "gt.json", "--selection", "sel.json",
            "--out", "metrics.json",
        ],
    );
    let metrics = json(dir, "metrics.json");
    assert_eq!(metrics["provenance"]["config"]["k"], 7);
}

#[test]
fn sweep_emits_commented_provenance_then_csv() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_small(dir);
    expect_ok(
        dir,
        &["select", "--pool", "pool.json", "--k", "10", "--out", "sel.json"],
    );
    expect_ok(
        dir,
        &[
            "sweep", "--pool", "pool.json", "--gt", "gt.json", "--selection", "sel.json",
            "--step", "2", "--out", "curve.csv",
        ],
    );
    let csv = std::fs::read_to_string(dir.join("curve.csv")).unwrap();
    let mut lines = csv.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with("# provenance: {"));
    assert!(prov.contains("\"k_max\":10"));
    assert_eq!(lines.next(), Some("k,recall_at_half,j_instance"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn precomputed_clusters_and_graph_cache_change_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_small(dir);
    expect_ok(
        dir,
        &["cluster", "--pool", "pool.json", "--out", "clusters.json"],
    );
    expect_ok(
        dir,
        &[
            "select", "--pool", "pool.json", "--k", "10", "--clusters", "clusters.json",
            "--graph-cache", "graph.bin", "--out", "with_cache.json",
        ],
    );
    assert!(dir.join("graph.bin").exists());
    // Second run hits the cache; selection must not change.
    expect_ok(
        dir,
        &[
            "select", "--pool", "pool.json", "--k", "10", "--clusters", "clusters.json",
            "--graph-cache", "graph.bin", "--out", "cache_hit.json",
        ],
    );
    expect_ok(
        dir,
        &["select", "--pool", "pool.json", "--k", "10", "--out", "plain.json"],
    );
    let order = |name: &str| json(dir, name)["order"].clone();
    assert_eq!(order("with_cache.json"), order("cache_hit.json"));
    assert_eq!(order("with_cache.json"), order("plain.json"));
}

#[test]
fn logistic_transform_rescales_signed_scores() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_small(dir);
    expect_ok(
        dir,
        &[
            "select", "--pool", "pool.json", "--k", "5",
            "--reward-transform", "logistic", "--out", "sel.json",
        ],
    );
    let sel = json(dir, "sel.json");
    assert_eq!(sel["provenance"]["config"]["objective"]["reward_transform"], "logistic");
}

#[test]
fn failure_classes_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth_small(dir);
    // Usage: zero budget rejected by flag parsing.
    expect_code(
        dir,
        &["select", "--pool", "pool.json", "--k", "0", "--out", "x.json"],
        2,
    );
    // Io: input file absent.
    expect_code(
        dir,
        &["select", "--pool", "nope.json", "--k", "5", "--out", "x.json"],
        3,
    );
    // Validation: budget exceeds the pool.
    expect_code(
        dir,
        &["select", "--pool", "pool.json", "--k", "99999", "--out", "x.json"],
        4,
    );
    // Guard: exhaustive search too large. Seventy segments at budget
    // ten is about 4e11 subsets, far past the enumeration limit.
    expect_ok(
        dir,
        &[
            "synth", "--seed", "2", "--grid", "256x256", "--objects", "6", "--layers", "4",
            "--parts", "4", "--tiles", "40", "--pool-out", "big.json", "--gt-out", "big_gt.json",
        ],
    );
    expect_code(
        dir,
        &["oracle", "--pool", "big.json", "--k", "10", "--out", "x.json"],
        5,
    );
}
