//! End-to-end behaviour of the `nlshape` binary: exit codes, overrides and
//! the files each subcommand writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nlshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlshape")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A small γ₁ problem; `extra` is appended to `[problem]`, `tail` after everything.
fn small_config(dir: &Path, problem_extra: &str, tail: &str) -> PathBuf {
    let text = format!(
        r#"
[kernel]
preset = "gamma1"
delta = 0.1

[problem]
nu = 2e-3
forcing = [10.0, -10.0]
initial_mesh = {{ generated = {{ cells = 12, collar_cells = 2, shape = {{ kind = "square", center = [0.5, 0.5], half_width = 0.25 }} }} }}
{problem_extra}

[optimizer]
epsilon = 2.0

[output]
dir = "out"
snapshots = false
{tail}
"#
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

const TARGET: &str = r#"target_mesh = { generated = { cells = 12, collar_cells = 2, shape = { kind = "circle", center = [0.5, 0.5], radius = 0.25 } } }"#;

#[test]
fn every_subcommand_has_help() {
    for sub in [vec!["--help"], vec!["run", "--help"], vec!["verify", "--help"], vec!["gendata", "--help"]] {
        let out = nlshape(&sub);
        assert_eq!(code(&out), 0, "{sub:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn maxiter_override_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), TARGET, "");
    let out = nlshape(&["run", "--config", cfg.to_str().unwrap(), "--maxiter", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("out/history.csv")).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "iter,J,defnorm_L2,walltime_s,mesh_file");
    assert_eq!(lines.len(), 2);
    assert!(dir.path().join("out/final_mesh.json").exists());
    assert!(dir.path().join("out/diagnostics.csv").exists());
}

#[test]
fn huge_tolerance_stops_after_first_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), TARGET, "");
    let text = fs::read_to_string(&cfg).unwrap().replace("epsilon = 2.0", "epsilon = 2.0\ntol = 1e9");
    fs::write(&cfg, text).unwrap();
    let out = nlshape(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("out/history.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged"));
}

#[test]
fn missing_mesh_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), r#"target_mesh = { file = { path = "nowhere/target.msh" } }"#, "");
    let out = nlshape(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nowhere/target.msh"), "{}", stderr(&out));
}

#[test]
fn negative_coefficient_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), TARGET, "");
    let text = fs::read_to_string(&cfg).unwrap().replace(
        "delta = 0.1",
        "delta = 0.1\ncoefficients = { o11 = -0.1, o12 = 1.0, o21 = 1.0, o22 = 10.0, o1i = 1.0, o2i = 1.0 }",
    );
    fs::write(&cfg, text).unwrap();
    let out = nlshape(&["verify", "--config", cfg.to_str().unwrap(), "norms"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), TARGET, "");
    let text = fs::read_to_string(&cfg).unwrap().replace("epsilon = 2.0", "epsilon = 2.0\nstep = 1.0");
    fs::write(&cfg, text).unwrap();
    let out = nlshape(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("step") && err.contains("line"), "{err}");
}

#[test]
fn verify_assembly_on_eight_triangles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("verify_hexagon.toml");
    let out =
        nlshape(&["verify", "--config", cfg.to_str().unwrap(), "--output", dir.path().to_str().unwrap(), "assembly"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = fs::read_to_string(dir.path().join("assembly.csv")).unwrap();
    assert!(report.starts_with("form,rel_err"));
}

#[test]
fn verify_fd1_on_full_interaction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("verify_full.toml");
    let out = nlshape(&["verify", "--config", cfg.to_str().unwrap(), "--output", dir.path().to_str().unwrap(), "fd1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = fs::read_to_string(dir.path().join("fd1_grad_0.csv")).unwrap();
    assert!(report.starts_with("t,fd,assembled,rel_err"));
}

#[test]
fn missed_tolerance_exits_3_and_keeps_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("verify_full.toml"))
        .unwrap()
        .replace("fields = 3", "fields = 1\ntol_first = 1e-300");
    let cfg = dir.path().join("strict.toml");
    fs::write(&cfg, text).unwrap();
    let out = nlshape(&["verify", "--config", cfg.to_str().unwrap(), "--output", dir.path().to_str().unwrap(), "fd1"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(dir.path().join("fd1_grad_0.csv").exists());
}

#[test]
fn gendata_with_zero_forcing_writes_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), TARGET, "");
    let text = fs::read_to_string(&cfg).unwrap().replace("forcing = [10.0, -10.0]", "forcing = [0.0, 0.0]");
    fs::write(&cfg, text).unwrap();
    let out = nlshape(&["gendata", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let data = fs::read_to_string(dir.path().join("out/data.json")).unwrap();
    let values = &data[data.find('[').unwrap() + 1..data.rfind(']').unwrap()];
    assert!(values.split(',').all(|v| v.trim().parse::<f64>().unwrap() == 0.0));
}

#[test]
fn gendata_is_deterministic_and_feeds_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), TARGET, "");
    let cfg = cfg.to_str().unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let out = nlshape(&["gendata", "--config", cfg, "--threads", "1"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        outputs.push(fs::read(dir.path().join("out/data.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let second = dir.path().join("from_file");
    fs::create_dir_all(&second).unwrap();
    let cfg = small_config(&second, r#"data_file = "../out/data.json""#, "");
    let out = nlshape(&["run", "--config", cfg.to_str().unwrap(), "--maxiter", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(second.join("out/history.csv").exists());
}
