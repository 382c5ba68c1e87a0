use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

const GEN: &str = r#"
[spec]
d = 2
b = [-1.0, -1.0]
A = [[1.0, 0.2], [0.2, 1.0]]
R = [[1.0, 0.5], [-0.3, 1.0]]

[lattice]
n = [16]
K = 1.0
"#;

fn rbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbm")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn malformed_row_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GEN.replace("[0.2, 1.0]]", "[0.2]]"));
    let o = rbm(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("spec.A[1]"), "{}", stderr(&o));
}

#[test]
fn unknown_test_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{GEN}\n[[tests]]\nname = \"no_such_test\"\n"));
    let o = rbm(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("no_such_test"), "{}", stderr(&o));
}

#[test]
fn empty_lattice_dump_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GEN.replace("K = 1.0", "K = 0.05").replace("n = [16]", "n = [100]"));
    let o = rbm(&["dump-chain", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn oversized_dump_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GEN.replace("K = 1.0", "K = 40.0"));
    let o = rbm(&["dump-chain", "--config", &cfg, "--n", "1600"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn dump_interior_rows_are_transposed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GEN.replace("K = 1.0", "K = 2.0"));
    let o = rbm(&["dump-chain", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let again = stdout(&rbm(&["dump-chain", "--config", &cfg]));
    assert_eq!(text, again);

    let mut rates: HashMap<(String, [i64; 2], [i64; 2]), f64> = HashMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let n: Vec<i64> = f[1..5].iter().map(|v| v.parse().unwrap()).collect();
        rates.insert((f[0].to_string(), [n[0], n[1]], [n[2], n[3]]), f[5].parse().unwrap());
    }
    let m = 8;
    let inner = |s: [i64; 2]| s.iter().all(|&k| (2..=m - 2).contains(&k));
    let mut compared = 0;
    for ((chain, site, dir), rate) in &rates {
        let to = [site[0] + dir[0], site[1] + dir[1]];
        if chain != "primal" || !inner(*site) || !inner(to) {
            continue;
        }
        let back = rates.get(&("dual".to_string(), to, [-dir[0], -dir[1]])).copied().unwrap_or(0.0);
        assert_eq!(back, *rate, "{site:?} -> {to:?}");
        compared += 1;
    }
    assert!(compared > 0);
}

#[test]
fn pair_decay_is_skipped_in_one_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[spec]
d = 1
b = [-1.0]
A = [[1.0]]
R = [[1.0]]

[lattice]
n = [16, 64]

[[tests]]
name = "boundary_pair_decay"
"#,
    );
    let out = dir.path().join("out");
    let o = rbm(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("boundary_pair_decay: SKIPPED"), "{}", stdout(&o));
    let json = std::fs::read_to_string(out.join("reports/00_boundary_pair_decay.json")).unwrap();
    assert!(json.contains("\"status\": \"skipped\""));
    assert!(out.join("manifest.json").exists());

    let r = rbm(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(stdout(&r), std::fs::read_to_string(out.join("report.txt")).unwrap());
}

#[test]
fn failing_test_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{GEN}\n[[tests]]\nname = \"duality_exact\"\nn = 4\nK = 1.5\ntol = 1e-300\n"),
    );
    let o = rbm(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("overall: FAIL"));
}

#[test]
fn validate_reports_assumption() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GEN.replace("b = [-1.0, -1.0]", "b = [1.0, 1.0]"));
    let o = rbm(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("r_inv_b_negative"));

    let cfg = write_config(
        dir.path(),
        &GEN.replace("[[1.0, 0.5], [-0.3, 1.0]]", "[[1.0, 0.0], [0.0, 1.0]]")
            .replace("[[1.0, 0.2], [0.2, 1.0]]", "[[1.0, 0.0], [0.0, 1.0]]"),
    );
    let o = rbm(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("skew-symmetric: yes"));
}

#[test]
fn stationary_histogram_is_a_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GEN.replace("K = 1.0", "K = 2.0"));
    let o = rbm(&["stationary", "--config", &cfg, "--t-run", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mass: f64 = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap()).sum();
    assert!((mass - 200.0).abs() < 1e-6, "{mass}");
}
