use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use twmc::hitting::solve_hitting_td;
use twmc::io::{parse_mc, parse_td};
use twmc::TargetSet;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn twmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twmc")).args(args).output().expect("binary runs")
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

fn values(out: &Output) -> Vec<f64> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let (id, v) = l.split_once(' ').unwrap();
            assert_eq!(id.parse::<usize>().unwrap(), i);
            v.parse().unwrap()
        })
        .collect()
}

#[test]
fn hitting_on_the_fixture_matches_the_library() {
    let mc = fixture("nine.mc");
    let td = fixture("nine.td");
    let out = twmc(&["hitting", "--input", path(&mc), "--td", path(&td), "--precision", "17"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = values(&out);
    let f = parse_mc(&fs::read_to_string(&mc).unwrap()).unwrap();
    let (want, _) = solve_hitting_td(&f.mc, &TargetSet::single(5), &parse_td(&fs::read_to_string(&td).unwrap()).unwrap()).unwrap();
    assert_eq!(got.len(), 9);
    for (g, w) in got.iter().zip(&want.prob) {
        assert!((g - w).abs() < 1e-15, "{g} vs {w}");
    }
    let simple = values(&twmc(&["hitting", "--input", path(&mc), "--targets", "5", "--precision", "17"]));
    let dense = values(&twmc(&["hitting", "--input", path(&mc), "--dense", "--precision", "17"]));
    for u in 0..9 {
        assert!((simple[u] - got[u]).abs() < 1e-12);
        assert!((dense[u] - got[u]).abs() < 1e-12);
    }
}

#[test]
fn discounted_and_mean_payoff_run_on_the_fixture() {
    let mc = fixture("nine.mc");
    let out = twmc(&["discounted", "--input", path(&mc), "--lambda", "0.5"]);
    assert!(out.status.success());
    assert_eq!(values(&out).len(), 9);
    let out = twmc(&["meanpayoff", "--input", path(&mc)]);
    assert!(out.status.success());
    assert!(values(&out).iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn linsolve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("LS 2 2\nEQ 1 0 1 3\nEQ 2 0 1 1 2 5\n", 0),
        ("LS 1 2\nEQ 1 0 1 1\nEQ 1 0 1 2\n", 2),
        ("LS 2 1\nEQ 2 0 1 1 1 1\n", 3),
    ];
    for (i, (text, code)) in cases.iter().enumerate() {
        let p = dir.path().join(format!("{i}.ls"));
        fs::write(&p, text).unwrap();
        for dense in [false, true] {
            let mut args = vec!["linsolve", "--input", path(&p)];
            if dense {
                args.push("--dense");
            }
            let out = twmc(&args);
            assert_eq!(out.status.code(), Some(*code), "case {i}, dense {dense}");
            if *code == 0 {
                assert_eq!(values(&out), vec![3.0, 1.0]);
            } else {
                assert!(out.stdout.is_empty());
            }
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(twmc(&[]).status.code(), Some(1));
    assert_eq!(twmc(&["hitting"]).status.code(), Some(1));
    assert_eq!(twmc(&["hitting", "--input", "/nonexistent.mc", "--targets", "0"]).status.code(), Some(1));
    assert_eq!(twmc(&["--help"]).status.code(), Some(0));
}

#[test]
fn generated_instances_validate_and_solve() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = dir.path().join("g.mdp");
    let td = dir.path().join("g.td");
    let out = twmc(&["gen", "--kind", "grid-band", "--n", "60", "--width", "3", "--seed", "7", "--out", path(&mdp), "--td-out", path(&td)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = twmc(&["validate", "--input", path(&mdp), "--td", path(&td)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "ok");
    let si = values(&twmc(&["mdp-hitting", "--input", path(&mdp), "--td", path(&td), "--precision", "15"]));
    let vi = values(&twmc(&["mdp-hitting", "--input", path(&mdp), "--method", "vi", "--precision", "15"]));
    assert_eq!(si.len(), 60);
    for (a, b) in si.iter().zip(&vi) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}

#[test]
fn validate_rejects_a_bad_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let td = dir.path().join("bad.td");
    fs::write(&td, "TD 1 0\nB 0 3 0 1 2\n").unwrap();
    let out = twmc(&["validate", "--input", path(&fixture("nine.mc")), "--td", path(&td)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bench_writes_one_row_per_instance_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    fs::create_dir(&suite).unwrap();
    let csv = dir.path().join("out.csv");
    let out = twmc(&["bench", "--suite", path(&suite), "--methods", "hitting:td", "--out", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("instance,"));

    fs::copy(fixture("nine.mc"), suite.join("nine.mc")).unwrap();
    fs::copy(fixture("nine.td"), suite.join("nine.td")).unwrap();
    let out = twmc(&["bench", "--suite", path(&suite), "--methods", "hitting:td,hitting:dense", "--out", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with("nine,9,16,2,") && r.ends_with(",ok")), "{text}");
}
