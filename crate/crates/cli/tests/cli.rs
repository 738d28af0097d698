use std::path::{Path, PathBuf};
use std::process::Command;

use emsolver::solver::Trajectory;
use emsolver_cli::{RunReport, CSV_HEADER};

const MIXTURE: &str = r#"{"kind":"gaussian-mixture","weights":[0.45,0.55],"means":[[0.9,-0.4,0.2],[-0.6,0.5,-0.3]],"stds":[0.4,0.3]}"#;
const POINT: &str = r#"{"kind":"point-gaussian","x0":[0.5,-1.0]}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emsolver"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(out.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn ems(dir: &Path, model: &Path, name: &str, n: &str) -> PathBuf {
    let out = dir.join(name);
    run_ok(&[
        "ems", "--model", model.to_str().unwrap(), "--schedule", "vp-linear", "--num-timesteps", n,
        "--num-datapoints", "200", "--seed", "3", "--lam-min", "-3", "--lam-max", "3", "--out", out.to_str().unwrap(),
    ]);
    out
}

#[test]
fn missing_out_is_usage_error() {
    let out = bin().args(["ems", "--model", "m.json", "--schedule", "edm"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["solve", "--order", "two"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["ems", "--model", "/nonexistent.json", "--schedule", "edm", "--out"])
        .arg(dir.path().join("x.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn point_gaussian_summary_shows_unit_l() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "pg.json", POINT);
    let out = bin()
        .args(["ems", "--model", model.to_str().unwrap(), "--schedule", "vp-linear", "--num-timesteps", "40"])
        .args(["--num-datapoints", "50", "--out"])
        .arg(dir.path().join("e.json"))
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("l mean = 1.000000"), "{text}");
}

#[test]
fn ems_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MIXTURE);
    let a = ems(dir.path(), &model, "a.json", "120");
    let b = ems(dir.path(), &model, "b.json", "120");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn solve_equivalences() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MIXTURE);
    let table = ems(dir.path(), &model, "e.json", "240");
    let solve = |name: &str, extra: &[&str]| -> Trajectory {
        let out = dir.path().join(name);
        let mut args = vec!["solve", "--ems", table.to_str().unwrap(), "--model", model.to_str().unwrap()];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--noise-seed", "9", "--out", out.to_str().unwrap()]);
        run_ok(&args);
        serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
    };
    let plain = solve("p.json", &["--order", "2", "--steps", "12"]);
    let pseudo = solve("q.json", &["--order", "2", "--steps", "12", "--pseudo-predictor"]);
    for (a, b) in plain.x_final.iter().zip(&pseudo.x_final) {
        assert!((a - b).abs() <= 1e-12);
    }
    assert_eq!(plain.grid.len(), 13);
    assert!(plain.trace.is_empty());

    let one = solve("o1.json", &["--order", "1", "--steps", "1"]);
    let three = solve("o3.json", &["--order", "3", "--steps", "1", "--trace"]);
    assert_eq!(one.x_final, three.x_final);
    assert_eq!(three.trace.len(), 1);

    let again = solve("p2.json", &["--order", "2", "--steps", "12"]);
    assert_eq!(
        std::fs::read(dir.path().join("p.json")).unwrap(),
        std::fs::read(dir.path().join("p2.json")).unwrap()
    );
    assert_eq!(again, plain);
}

#[test]
fn solve_rejects_mismatched_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MIXTURE);
    let table = ems(dir.path(), &model, "e.json", "60");
    let out = bin()
        .args(["solve", "--ems", table.to_str().unwrap(), "--model", model.to_str().unwrap()])
        .args(["--schedule", "edm", "--out"])
        .arg(dir.path().join("t.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_outputs_are_deterministic_and_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MIXTURE);
    let table = ems(dir.path(), &model, "e.json", "240");
    let conv = |name: &str| {
        let out = dir.path().join(name);
        run_ok(&[
            "bench-convergence", "--model", model.to_str().unwrap(), "--ems", table.to_str().unwrap(),
            "--orders", "1,2", "--nfe", "6,12,24", "--seeds", "1,0", "--out", out.to_str().unwrap(),
        ]);
        std::fs::read_to_string(out).unwrap()
    };
    let a = conv("a.csv");
    assert_eq!(a, conv("b.csv"));
    assert!(a.starts_with(&format!("{CSV_HEADER}\n")));
    let rep = RunReport::from_csv(&a).unwrap();
    assert_eq!(rep.rows.len(), 12);
    assert!(rep.rows.iter().all(|r| r.seconds == 0.0 && r.l2_error >= r.linf_error));
    assert_eq!((rep.rows[0].order, rep.rows[0].nfe, rep.rows[0].seed), (1, 6, 0));
    assert_eq!((rep.rows[1].order, rep.rows[1].nfe, rep.rows[1].seed), (1, 6, 1));
    assert_eq!(rep.summary.len(), 2);
    assert_eq!(rep.to_csv().unwrap(), a);

    let cmp = |name: &str| {
        let out = dir.path().join(name);
        run_ok(&[
            "bench-compare", "--model", model.to_str().unwrap(), "--ems", table.to_str().unwrap(),
            "--nfe", "5,8", "--seeds", "0,1", "--out", out.to_str().unwrap(),
        ]);
        std::fs::read_to_string(out).unwrap()
    };
    let c = cmp("c.csv");
    assert_eq!(c, cmp("d.csv"));
    let rep = RunReport::from_csv(&c).unwrap();
    assert_eq!(rep.rows.len(), 16);
    let solvers: Vec<&str> = rep.rows.iter().map(|r| r.solver.as_str()).collect();
    let mut sorted = solvers.clone();
    sorted.sort();
    assert_eq!(solvers, sorted);
}

#[test]
fn timing_fills_seconds() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MIXTURE);
    let table = ems(dir.path(), &model, "e.json", "120");
    let out = dir.path().join("t.csv");
    run_ok(&[
        "bench-convergence", "--model", model.to_str().unwrap(), "--ems", table.to_str().unwrap(), "--orders", "1",
        "--nfe", "4,8,16", "--timing", "--out", out.to_str().unwrap(),
    ]);
    let rep = RunReport::from_csv(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(rep.rows.iter().all(|r| r.seconds > 0.0));
}

#[test]
fn point_gaussian_convergence_is_at_floor() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "pg.json", POINT);
    let table = ems(dir.path(), &model, "e.json", "120");
    let out = dir.path().join("c.csv");
    run_ok(&[
        "bench-convergence", "--model", model.to_str().unwrap(), "--ems", table.to_str().unwrap(),
        "--nfe", "5,10,20", "--out", out.to_str().unwrap(),
    ]);
    let rep = RunReport::from_csv(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(rep.rows.iter().all(|r| r.l2_error <= 1e-8));
    assert!(rep.summary.iter().all(|l| l.ends_with("value=floor")));
}
