use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use callpack::config::{dump_config, load_config, parse_config};
use callpack::engine::RunConfig;
use callpack::trace::{generate_trace, load_trace};

fn callpack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_callpack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "[trace]\nn_calls = 1500\nduration_s = 7200\n\n[cluster]\nn_mps = 30\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let o = callpack(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_config_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[planner]\nbugdet = 5\n").unwrap();
    let o = callpack(&["dump-config", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bugdet"), "{}", stderr(&o));
}

#[test]
fn invalid_override_exits_2() {
    let o = callpack(&["dump-config", "--cluster-size", "0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = callpack(&["simulate", "--policy", "fastest", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_trace_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = callpack(&[
        "simulate",
        "--trace",
        s(&dir.path().join("nope.jsonl")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.jsonl"));
}

#[test]
fn report_on_empty_directory_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = callpack(&["report", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_trace_matches_library_generator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("t.jsonl");
    let o = callpack(&["gen-trace", "--config", &cfg, "--seed", "11", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut want = load_config(&cfg).unwrap().trace;
    want.seed = 11;
    assert_eq!(load_trace(&out).unwrap(), generate_trace(&want).unwrap());
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let root = dir.path().join(run);
        fs::create_dir_all(&root).unwrap();
        let trace = root.join("trace.jsonl");
        let o = callpack(&["gen-trace", "--config", &cfg, "--seed", "5", "--out", s(&trace)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let sim = root.join("sim");
        let o = callpack(&[
            "simulate", "--config", &cfg, "--seed", "5", "--trace", s(&trace), "--policy", "tetris",
            "--migration", "mip", "--plans", "--out", s(&sim),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let cmp = root.join("cmp");
        let o = callpack(&[
            "compare", "--config", &cfg, "--seed", "5", "--policies", "rr,p2+greedy", "--out", s(&cmp),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(
            [
                trace,
                sim.join("snapshots.csv"),
                sim.join("aggregates.json"),
                sim.join("plans.jsonl"),
                cmp.join("comparison.csv"),
                cmp.join("comparison.json"),
            ]
            .map(|p| fs::read(p).unwrap()),
        );
    }
    for (a, b) in outputs[0].iter().zip(&outputs[1]) {
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
}

#[test]
fn compare_three_policies_gives_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("cmp");
    let o = callpack(&[
        "compare", "--config", &cfg, "--policies", "rr,llr,tetris", "--migration", "none", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].contains("h_vs_rr"), "{}", lines[0]);
    assert!(lines[1].starts_with("rr+none,"));
    assert!(lines[2].starts_with("llr+none,"));
    assert!(lines[3].starts_with("tetris+none,"));
    let rr_ratio = lines[1].split(',').nth(lines[0].split(',').position(|c| c == "h_vs_rr").unwrap());
    assert_eq!(rr_ratio, Some("1.000000"));

    let o = callpack(&["report", s(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("tetris"));
}

#[test]
fn simulate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sim");
    let o = callpack(&["simulate", "--config", &cfg, "--migration", "greedy", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snaps = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert_eq!(snaps.lines().count(), 1 + 120);
    assert!(out.join("solver_timings.csv").exists());
    assert!(!out.join("plans.jsonl").exists());
    let o = callpack(&["report", s(&out)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("tetris+greedy"));
}

#[test]
fn dumped_default_config_reloads_identically() {
    let o = callpack(&["dump-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = parse_config(&text).unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(dump_config(&cfg).unwrap(), text);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.toml");
    let o = callpack(&["dump-config", "--seed", "9", "--out", s(&path)]);
    assert!(o.status.success());
    let cfg = load_config(&path).unwrap();
    assert_eq!((cfg.seed, cfg.trace.seed), (9, 9));
}
