//! End-to-end tests of the gdspin binary.

use std::path::Path;
use std::process::{Command, Output};

use gdspin::instances::read_matrix_json;

fn gdspin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdspin"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_lists_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdspin(&["--help"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for needle in ["solve", "gen", "bench", "--jobs"] {
        assert!(text.contains(needle), "help is missing '{needle}':\n{text}");
    }
}

#[test]
fn gen_is_deterministic_and_k4_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let out = gdspin(
            &["gen", "--kind", "sparse3", "--n", "4", "--seed", "3", "--out", name],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let j = read_matrix_json(a.as_bytes()).unwrap();
    assert_eq!(j.n(), 4);
    for i in 0..4 {
        for k in 0..4 {
            if i != k {
                assert!(j.get(i, k) != 0.0, "missing K4 edge ({i},{k})");
            }
        }
    }
}

#[test]
fn gen_gset_round_trips_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdspin(
        &["gen", "--kind", "sparse3", "--n", "8", "--seed", "5", "--format", "gset", "--out", "g.gset"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let out = gdspin(
        &["solve", "--input", "g.gset", "--model", "xy", "--algo", "mc", "--runs", "4", "--seed", "1"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("best energy:"));
}

#[test]
fn solve_two_spin_matrix() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("two.json"),
        r#"{"n": 2, "entries": [[0, 1, 1.0]]}"#,
    )
    .unwrap();
    let out = gdspin(
        &["solve", "--input", "two.json", "--algo", "gd", "--seed", "1", "--out", "rec.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("best energy: -2.0000"), "{text}");
    assert!(text.contains("converged: true"), "{text}");
    assert!(text.contains("projected hardware time:"), "{text}");
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rec.json")).unwrap())
            .unwrap();
    assert!((rec["best_energy"].as_f64().unwrap() + 2.0).abs() < 1e-6);
    assert_eq!(rec["schema_version"], 1);
}

#[test]
fn solve_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--input", "gen:dense:10", "--algo", "bh", "--runs", "2", "--seed", "7"];
    let a = gdspin(&args, dir.path());
    let b = gdspin(&args, dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let c = gdspin(
        &["solve", "--input", "gen:dense:10", "--algo", "bh", "--runs", "2", "--seed", "8"],
        dir.path(),
    );
    assert!(c.status.success());
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = gdspin(&["solve", "--input", "nope.json", "--algo", "gd"], dir.path());
    assert_eq!(missing.status.code(), Some(2), "{}", stderr(&missing));
    assert!(stderr(&missing).contains("no such file"));

    let bad_algo = gdspin(
        &["solve", "--input", "gen:dense:4", "--algo", "annealer"],
        dir.path(),
    );
    assert_eq!(bad_algo.status.code(), Some(2));

    let bad_model = gdspin(
        &["solve", "--input", "gen:dense:4", "--algo", "gd", "--model", "heisenberg"],
        dir.path(),
    );
    assert_eq!(bad_model.status.code(), Some(2));

    // baselines have no discrete readout, so non-XY models are rejected
    let mc_ising = gdspin(
        &["solve", "--input", "gen:dense:4", "--algo", "mc", "--model", "ising"],
        dir.path(),
    );
    assert_eq!(mc_ising.status.code(), Some(2));

    let malformed = dir.path().join("bad.gset");
    std::fs::write(&malformed, "3 1\n1 1 5\n").unwrap();
    let parse = gdspin(&["solve", "--input", "bad.gset", "--algo", "gd"], dir.path());
    assert_eq!(parse.status.code(), Some(2));
    assert!(stderr(&parse).contains("line 2"), "{}", stderr(&parse));
}

#[test]
fn solve_bundled_toy_maxcut() {
    let dir = tempfile::tempdir().unwrap();
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy6.gset");
    let out = gdspin(
        &[
            "solve",
            "--input",
            toy.to_str().unwrap(),
            "--algo",
            "gd",
            "--runs",
            "12",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("cut value: 16"), "{text}");
}

#[test]
fn config_overlay_defers_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("solver.conf"),
        "# defaults\nalgo = mc\nruns = 3\nseed = 11\n",
    )
    .unwrap();
    // config supplies algo/runs/seed
    let from_config = gdspin(
        &["solve", "--input", "gen:dense:8", "--config", "solver.conf"],
        dir.path(),
    );
    assert!(from_config.status.success(), "{}", stderr(&from_config));
    assert!(stdout(&from_config).contains("algorithm: mc"));

    // an explicit flag wins over the config value
    let overridden = gdspin(
        &["solve", "--input", "gen:dense:8", "--config", "solver.conf", "--algo", "bh"],
        dir.path(),
    );
    assert!(overridden.status.success(), "{}", stderr(&overridden));
    assert!(stdout(&overridden).contains("algorithm: bh"));

    std::fs::write(dir.path().join("bad.conf"), "algo mc\n").unwrap();
    let bad = gdspin(
        &["solve", "--input", "gen:dense:8", "--config", "bad.conf"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("line 1"));
}

#[test]
fn bench_success_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdspin(
        &[
            "bench", "--experiment", "success", "--n", "6", "--instances", "2", "--runs", "3",
            "--algos", "gd,mc", "--out", "art",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("art/success.csv")).unwrap();
    assert!(csv.starts_with("method,instance,success"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2); // header + 2 methods x 2 instances
    let ndjson = std::fs::read_to_string(dir.path().join("art/runs.ndjson")).unwrap();
    assert_eq!(ndjson.lines().count(), 2 * 2 * 3);
    assert!(stdout(&out).contains("mean_success"));
}

#[test]
fn bench_maxcut_toy_instance() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdspin(
        &[
            "bench", "--experiment", "maxcut", "--files", "toy6", "--runs", "12", "--seed", "1",
            "--out", "art",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("art/maxcut.csv")).unwrap();
    assert!(csv.starts_with("instance,"), "{csv}");
    assert!(csv.contains("toy6,16"), "{csv}");

    // unknown instances without a data dir are an input error
    let missing = gdspin(
        &["bench", "--experiment", "maxcut", "--files", "G1", "--out", "art"],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("GDSPIN_DATA"));
}

#[test]
fn bench_scaling_small_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let out = gdspin(
        &[
            "bench", "--experiment", "scaling", "--sizes", "10,20", "--repeats", "1", "--out",
            "art",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("art/scaling.csv")).unwrap();
    assert!(csv.contains("slope"), "{csv}");
    assert!(stdout(&out).contains("log-log slope"));
}
