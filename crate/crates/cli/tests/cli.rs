use std::path::Path;
use std::process::{Command, Output};

fn xlayer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlayer"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn gen_map_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.map", "b.map"] {
        assert!(xlayer(dir.path(), &["--seed", "5", "gen-map", "--out", out]).status.success());
    }
    let a = std::fs::read(dir.path().join("a.map")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.map")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("xlayer-radiomap v1"));
    assert_eq!(text.lines().count(), 7001);
}

#[test]
fn run_auth_and_attack_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run-auth", "--trace-len", "3", "--mts", "2"][..],
        &["run-auth", "--sla", "decentralized", "--drop", "0.1", "--trace-len", "2"],
        &["attack", "--scenario", "mitm", "--n", "10"],
    ] {
        let a = xlayer(dir.path(), args);
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(stdout(&a), stdout(&xlayer(dir.path(), args)), "{args:?}");
    }
}

#[test]
fn saved_map_reproduces_run_auth() {
    let dir = tempfile::tempdir().unwrap();
    assert!(xlayer(dir.path(), &["gen-map", "--out", "m.map"]).status.success());
    let built = xlayer(dir.path(), &["run-auth", "--trace-len", "2"]);
    let loaded = xlayer(dir.path(), &["run-auth", "--trace-len", "2", "--map", "m.map"]);
    assert_eq!(stdout(&built), stdout(&loaded));
}

#[test]
fn bench_csv_without_wall_clock_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        ["bench", "--cells", "2,4", "--no-wall", "--entropy-positions", "50", "--out", out]
    };
    let a = xlayer(dir.path(), &args("a.csv"));
    assert!(a.status.success());
    let b = xlayer(dir.path(), &args("b.csv"));
    let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(dir.path().join("b.csv")).unwrap());
    assert!(csv.starts_with("approach,cells,"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0")));
    assert_eq!(
        stdout(&a).lines().filter(|l| !l.starts_with("wrote")).collect::<Vec<_>>(),
        stdout(&b).lines().filter(|l| !l.starts_with("wrote")).collect::<Vec<_>>()
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["run-auth", "--sla", "sideways"],
        &["run-auth", "--drop", "1.5"],
        &["attack", "--scenario", "nope"],
        &["--config", "missing.toml", "run-auth"],
    ] {
        assert_eq!(xlayer(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(xlayer(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "seed = 3\nsla = \"decentralized\"\n").unwrap();
    let o = xlayer(dir.path(), &["--config", "c.toml", "run-auth", "--trace-len", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("summary sla=decentralized"), "{out}");
    // the command-line seed wins over the file
    let cli_seed = xlayer(dir.path(), &["--config", "c.toml", "--seed", "7", "run-auth", "--trace-len", "1"]);
    assert_ne!(stdout(&cli_seed), out);
    std::fs::write(dir.path().join("bad.toml"), "seed = \"seven\"\n").unwrap();
    assert_eq!(xlayer(dir.path(), &["--config", "bad.toml", "run-auth"]).status.code(), Some(2));
}

#[test]
fn strict_mode_turns_domain_failures_into_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run-auth", "--drop", "1.0", "--trace-len", "1"];
    assert_eq!(xlayer(dir.path(), &args).status.code(), Some(0));
    let mut strict = vec!["--strict"];
    strict.extend(args);
    let o = xlayer(dir.path(), &strict);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("timed_out=1"));
    let o = xlayer(dir.path(), &["--strict", "attack", "--scenario", "key-over-air-legacy", "--n", "3"]);
    assert_eq!(o.status.code(), Some(1));
}
