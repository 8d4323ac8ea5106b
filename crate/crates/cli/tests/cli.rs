//! End-to-end runs of the `rklmc` binary.

use std::path::Path;
use std::process::{Command, Output};

fn rklmc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rklmc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RKLMC_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse::<f64>().unwrap()))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
}

#[test]
fn check_order_two_gradient_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = rklmc(&["check-order", "--preset", "rklmc-2g"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for r in ["r1 ", "r2 ", "r3 "] {
        assert!(field(&text, r).abs() <= 1e-12);
    }
    assert_eq!(field(&text, "kappa1 "), 1.5);
}

#[test]
fn check_order_three_gradient_b_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = rklmc(&["check-order", "--preset", "rklmc-3g-b"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!((field(&stdout(&o), "kappa1 ") - 11.0 / 18.0).abs() < 1e-15);
}

#[test]
fn check_order_all_zero_fails() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "check-order",
        "alpha=0",
        "beta=0",
        "a11=0",
        "a21=0",
        "a22=0",
        "b1=0",
        "b2=0",
    ];
    let o = rklmc(&args, dir.path());
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert_eq!(field(&text, "r1 "), -0.5);
    assert_eq!(field(&text, "r2 "), -1.0);
    assert_eq!(field(&text, "r3 "), -1.5);
}

#[test]
fn check_order_prints_bound_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = rklmc(
        &[
            "check-order", "--preset", "rklmc-2g", "--mu", "1", "--mu-prime", "1", "--l1", "1", "--l1-prime", "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&stdout(&o), "stepsize_bound "), 1.0 / 32.0);

    assert_eq!(rklmc(&["check-order", "alpha=x"], dir.path()).status.code(), Some(2));
    assert_eq!(rklmc(&["check-order", "--preset", "rk4"], dir.path()).status.code(), Some(2));
    assert_eq!(rklmc(&["check-order"], dir.path()).status.code(), Some(2));
    assert_eq!(rklmc(&["check-order", "--preset", "rklmc-2g", "--mu", "1"], dir.path()).status.code(), Some(2));
}

#[test]
fn stepsize_bound_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = rklmc(
        &[
            "stepsize-bound", "--preset", "rklmc-2g", "--mu", "1", "--mu-prime", "0", "--l1", "1", "--l1-prime", "0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&stdout(&o), "stepsize_bound "), 1.0 / 32.0);
    assert_eq!(rklmc(&["stepsize-bound", "--preset", "rklmc-2g"], dir.path()).status.code(), Some(2));
}

#[test]
fn selftest_passes_and_perturbation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = rklmc(&["selftest"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));

    let o = rklmc(&["selftest", "--perturb-presets", "1e-3"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL order conditions rklmc-2g"));
}

#[test]
fn gradcheck_models() {
    let dir = tempfile::tempdir().unwrap();
    for model in ["two-mode-gmm", "blr", "eight-mode-gmm"] {
        let o = rklmc(&["gradcheck", "--model", model, "--probes", "10"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{model}: {}", stdout(&o));
    }
    assert_eq!(rklmc(&["gradcheck", "--model", "banana"], dir.path()).status.code(), Some(2));
}

const SMALL_CONVERGENCE: &str = "\
[experiment]
kind = convergence

[model]
name = two-mode-gmm
d = 4

[schemes]
list = lmc, rklmc-2g

[grid]
h_ref = 2^-8
hs = 2^-3, 2^-4, 2^-5, 2^-6, 2^-7

[run]
terminal_time = 1
ensemble_size = 64
master_seed = 5
";

#[test]
fn run_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("conv.cfg"), SMALL_CONVERGENCE).unwrap();
    let a = rklmc(&["run", "conv.cfg", "--out", "a", "--workers", "1"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(stdout(&a).contains("slope in h lmc"));
    let b = rklmc(&["run", "conv.cfg", "--out", "b", "--workers", "3"], dir.path());
    assert_eq!(b.status.code(), Some(0));

    let csv_a = std::fs::read(dir.path().join("a/convergence.csv")).unwrap();
    let csv_b = std::fs::read(dir.path().join("b/convergence.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with("scheme,h,rmse,stderr\n"));
    let data_rows = text.lines().filter(|l| l.starts_with("lmc,") || l.starts_with("rklmc-2g,")).count();
    assert_eq!(data_rows, 10);
    assert_eq!(text.lines().filter(|l| l.starts_with("slope,")).count(), 2);
    assert!(dir.path().join("a/convergence_plot.py").exists());
}

#[test]
fn run_uses_environment_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("conv.cfg"), SMALL_CONVERGENCE).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rklmc"))
        .args(["run", "conv.cfg"])
        .current_dir(dir.path())
        .env("RKLMC_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from-env/convergence.csv").exists());
}

#[test]
fn blr_dimension_grid_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "\
[experiment]
kind = dimension

[model]
name = blr

[grid]
h_ref = 2^-8
h = 2^-5

[run]
terminal_time = 1/2
ensemble_size = 16
";
    std::fs::write(dir.path().join("dim.cfg"), cfg).unwrap();
    let o = rklmc(&["run", "dim.cfg", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("slope in d rklmc-2g"));
    let text = std::fs::read_to_string(dir.path().join("out/dimension.csv")).unwrap();
    let dims: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("lmc,"))
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(dims, ["6", "8", "10", "12", "14"]);
}

#[test]
fn run_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "[experiment]\nkind = convergence\n[run]\nseed = 1\n").unwrap();
    let o = rklmc(&["run", "bad.cfg", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `seed`"));
    assert!(!dir.path().join("out").exists());
    assert_eq!(rklmc(&["run", "missing.cfg"], dir.path()).status.code(), Some(2));
    assert_eq!(rklmc(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn divergence_exits_3_with_location() {
    let dir = tempfile::tempdir().unwrap();
    // Far above any stable step for the eight-mode mixture.
    let cfg = "\
[experiment]
kind = eight-mode

[schemes]
list = lmc

[grid]
h = 5

[run]
terminal_time = 500
ensemble_size = 4
";
    std::fs::write(dir.path().join("div.cfg"), cfg).unwrap();
    let o = rklmc(&["run", "div.cfg", "--out", "out"], dir.path());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(3), "{err}");
    assert!(err.contains("lmc diverged at h = 5"), "{err}");
    assert!(err.contains("trajectory") && err.contains("step"), "{err}");
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg: rklmc_cli::config::RunConfig = text.parse().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.resolve(false, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert_eq!(n, 6);
}
