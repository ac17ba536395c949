use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn metamarket(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metamarket"))
        .args(args)
        .env_remove("METAMARKET_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_prints_bounds_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = metamarket(&["gen", "--seed", "7", "--out", path(d)]);
        assert_eq!(o.status.code(), Some(0), "{o:?}");
        let text = stdout(&o);
        assert!(text.contains("pr bounds: ["), "{text}");
        assert!(text.contains("pw bounds: ["), "{text}");
    }
    assert_eq!(
        fs::read(a.join("scenario.toml")).unwrap(),
        fs::read(b.join("scenario.toml")).unwrap()
    );
}

#[test]
fn gen_records_rational_split() {
    let dir = tempfile::tempdir().unwrap();
    let o = metamarket(&["gen", "--n-msus", "100", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("users: 80 rational, 20 irrational"));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_metamarket"))
        .args(["gen", "--seed", "2"])
        .env("METAMARKET_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("scenario.toml").exists());
}

#[test]
fn inverted_price_bounds_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = metamarket(&["gen", "--seed", "4", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let file = dir.path().join("scenario.toml");
    let text = fs::read_to_string(&file).unwrap();

    // A user who values rendering below every unit cost closes the price box.
    let (head, users) = text.split_once("[[msus]]").unwrap();
    let start = users.find("\nalpha = ").unwrap() + 1;
    let end = start + users[start..].find('\n').unwrap();
    let broken = format!(
        "{head}[[msus]]{}alpha = 0.5{}",
        &users[..start],
        &users[end..]
    );
    fs::write(&file, broken).unwrap();

    let o = metamarket(&[
        "solve",
        "--scenario",
        path(&file),
        "--out",
        path(&dir.path().join("s")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible market"));
}

#[test]
fn invalid_configuration_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    let cases: [&[&str]; 6] = [
        &["solve", "--kappa", "0.5", "--out", out],
        &["solve", "--delta", "0", "--out", out],
        &["solve", "--solver", "simplex", "--out", out],
        &[
            "sweep", "--sweep", "alpha", "--range", "70,20", "--out", out,
        ],
        &["sweep", "--sweep", "gamma", "--range", "1,2", "--out", out],
        &["solve", "--unknown-flag"],
    ];
    for args in cases {
        let o = metamarket(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {o:?}");
    }
    let missing = dir.path().join("missing.toml");
    let o = metamarket(&["solve", "--scenario", path(&missing), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let o = metamarket(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("solve"));
}

#[test]
fn solve_writes_all_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let files = [
        "summary.json",
        "assignment.csv",
        "trace.csv",
        "ledger.txt",
        "equilibrium.json",
    ];
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = metamarket(&["solve", "--seed", "5", "--out", path(&out)]);
            assert_eq!(o.status.code(), Some(0), "{o:?}");
            assert!(stdout(&o).contains("profit: "));
            out
        })
        .collect();
    for f in files {
        let a = fs::read(runs[0].join(f)).unwrap();
        assert_eq!(a, fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    for f in ["assignment.csv", "trace.csv"] {
        let text = fs::read_to_string(runs[0].join(f)).unwrap();
        assert!(text.starts_with("# config_digest="), "{f}");
    }
    let trace = fs::read_to_string(runs[0].join("trace.csv")).unwrap();
    assert!(trace.lines().nth(1).unwrap().starts_with("iteration,"));
}

#[test]
fn fnse_with_unit_step_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = metamarket(&[
        "solve",
        "--solver",
        "fnse",
        "--step",
        "1",
        "--no-verify",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.lines().count() > 3);
    assert!(!dir.path().join("equilibrium.json").exists());
}

fn summary_value(dir: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(dir.join("summary.json")).unwrap();
    let at = text.find(&format!("\"{key}\"")).unwrap();
    let rest = &text[at + key.len() + 3..];
    let end = rest.find([',', '\n']).unwrap();
    rest[..end].trim().parse().unwrap()
}

#[test]
fn single_point_sweep_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let solved = dir.path().join("solve");
    let swept = dir.path().join("sweep");
    let o = metamarket(&[
        "solve",
        "--seed",
        "3",
        "--no-verify",
        "--out",
        path(&solved),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = metamarket(&[
        "sweep",
        "--seed",
        "3",
        "--sweep",
        "n_msus",
        "--range",
        "20,20",
        "--steps",
        "1",
        "--no-verify",
        "--out",
        path(&swept),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");

    let csv = fs::read_to_string(swept.join("sweep.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_digest="));
    assert_eq!(lines.len(), 3, "{csv}");
    let header: Vec<_> = lines[1].split(',').collect();
    let row: Vec<_> = lines[2].split(',').collect();
    let col = |name: &str| -> f64 {
        let i = header.iter().position(|h| *h == name).unwrap();
        row[i].parse().unwrap()
    };
    assert_eq!(header[0], "n_msus");
    assert_eq!(row[0].parse::<f64>().unwrap(), 20.0);
    assert_eq!(col("pr_star"), summary_value(&solved, "pr_star"));
    assert_eq!(col("pw_star"), summary_value(&solved, "pw_star"));
    assert_eq!(col("profit"), summary_value(&solved, "profit"));
}

#[test]
fn compare_includes_greedy_only_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let o = metamarket(&[
        "compare",
        "--solvers",
        "gsrap,fnse",
        "--n-values",
        "10,20",
        "--seeds",
        "1,2",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    let rows: Vec<_> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 2 * 2 * 3);
    for alg in ["gsrap", "fnse", "greedy-only"] {
        let n = rows
            .iter()
            .filter(|r| r.starts_with(&format!("{alg},")))
            .count();
        assert_eq!(n, 4, "{alg}");
    }
}
