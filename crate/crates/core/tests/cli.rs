use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const DEMO3: &str = r#"[
  {"x": 0.0, "y": 0.0, "alpha": 0.0},
  {"x": 1.0, "y": 2.0, "alpha": 1.5707963267948966},
  {"x": -1.0, "y": 5.0, "alpha": 1.5707963267948966}
]"#;

fn gilbert(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gilbert"))
        .current_dir(dir)
        .env_remove("GILBERT_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn simulate_demo_configuration() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("demo3.json"), DEMO3).unwrap();
    let out = gilbert(dir.path(), &["simulate", "--seeds", "demo3.json", "--svg", "out.svg"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = &json["seeds"][2];
    assert_eq!(c["xi_minus"], 5.0);
    assert_eq!(c["xi_plus"], "inf");
    let svg = fs::read_to_string(dir.path().join("out.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="branch""#).count(), 6);
}

#[test]
fn duplicate_seeds_are_a_config_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("dup.json"), r#"[{"x":1,"y":1,"alpha":0.2},{"x":1,"y":1,"alpha":0.9}]"#).unwrap();
    let out = gilbert(dir.path(), &["simulate", "--seeds", "dup.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("DegenerateConfiguration"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&gilbert(dir.path(), &["simulate", "--no-such-flag"])), 2);
    assert_eq!(code(&gilbert(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&gilbert(dir.path(), &["estimate-e", "--tau", "-1"])), 2);
    assert_eq!(code(&gilbert(dir.path(), &["scaling", "--phi", "count"])), 2);
    assert_eq!(code(&gilbert(dir.path(), &["simulate", "--seeds", "missing.json"])), 2);
    assert_eq!(code(&gilbert(dir.path(), &["--help"])), 0);
}

#[test]
fn failed_check_exits_3() {
    let dir = TempDir::new().unwrap();
    // Four replicates at λ = 4 cannot put the estimate within 5%.
    let out = gilbert(dir.path(), &["lln", "--lambdas", "4,9", "--n-rep", "4", "--e-reps", "30", "--check"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("check: FAIL"));
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let run = |env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_gilbert"));
        cmd.current_dir(dir.path()).env_remove("GILBERT_SEED").args(args);
        if let Some(s) = env {
            cmd.env("GILBERT_SEED", s);
        }
        cmd.output().unwrap().stdout
    };
    let a = run(Some("9"), &["estimate-e", "--n-rep", "40", "--out-dir", "a"]);
    let b = run(None, &["estimate-e", "--n-rep", "40", "--seed", "9", "--out-dir", "b"]);
    let c = run(None, &["estimate-e", "--n-rep", "40", "--out-dir", "c"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn assert_same_tree(a: &Path, b: &Path) {
    let names = |d: &Path| {
        let mut v: Vec<_> = fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    assert_eq!(names(a), names(b));
    for n in names(a) {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn manifests_replay_byte_identically() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::write(p.join("demo3.json"), DEMO3).unwrap();
    let runs: [&[&str]; 3] = [
        &["simulate", "--seeds", "demo3.json", "--out-dir", "sim"],
        &["simulate", "--poisson-tau", "1", "--width", "8", "--height", "6", "--seed", "4", "--out-dir", "poi"],
        &["measure", "--lambda", "50", "--f", "cos-pi", "--seed", "4", "--out-dir", "meas"],
    ];
    for args in runs {
        let out = gilbert(p, args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let dir = args.last().unwrap();
        let replay = format!("{dir}-again");
        let out = gilbert(p, &["replay", &format!("{dir}/manifest.json"), "--out-dir", &replay]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_same_tree(&p.join(dir), &p.join(&replay));
    }
    // Replays never depend on the input file still being there.
    fs::remove_file(p.join("demo3.json")).unwrap();
    assert_eq!(code(&gilbert(p, &["replay", "sim/manifest.json", "--out-dir", "sim-third"])), 0);
    assert_same_tree(&p.join("sim"), &p.join("sim-third"));
}
