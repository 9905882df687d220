use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "lambda = 0.02\nwindow_side = 30\nhorizon = 400\nmc_samples = 200\n";

fn udn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udn"))
        .args(args)
        .current_dir(dir)
        .env_remove("UDN_WORKERS")
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    dir
}

#[test]
fn simulate_is_deterministic_and_ignores_worker_count() {
    let dir = setup();
    let base = ["simulate", "--config", "small.cfg", "--realizations", "3"];
    let a = udn(&[&base[..], &["--workers", "1"]].concat(), dir.path());
    let b = udn(&[&base[..], &["--workers", "1"]].concat(), dir.path());
    let c = udn(&[&base[..], &["--workers", "4"]].concat(), dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert!(a.stdout.starts_with(b"realization_id,link_id,delivered"));
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let dir = setup();
    let stdout = udn(&["sample", "--config", "small.cfg", "--realizations", "2"], dir.path());
    let file = udn(&["sample", "--config", "small.cfg", "--realizations", "2", "--out", "r.csv"], dir.path());
    assert!(file.status.success());
    assert_eq!(fs::read(dir.path().join("r.csv")).unwrap(), stdout.stdout);
}

#[test]
fn invalid_config_exits_with_two_and_names_the_field() {
    let dir = setup();
    for (text, needle) in [("access_prob = 1.5\n", "access_prob"), ("bogus = 3\n", "bogus")] {
        fs::write(dir.path().join("bad.cfg"), text).unwrap();
        let out = udn(&["simulate", "--config", "bad.cfg", "--out", "x.csv"], dir.path());
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{err}");
        assert!(!dir.path().join("x.csv").exists());
    }
}

#[test]
fn failure_leaves_no_partial_output() {
    let dir = setup();
    let out = udn(
        &["stability-region", "--config", "small.cfg", "--sweep", "p=0.5:1.5:0.5", "--out", "s.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("s.csv").exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1, "temporary file left behind");
}

#[test]
fn empty_sweep_emits_the_header_only() {
    let dir = setup();
    let out = udn(&["local-delay", "--config", "small.cfg", "--sweep", "theta=2:1:0.5"], dir.path());
    assert!(out.status.success());
    assert_eq!(out.stdout, b"sweep_param,mean,variance,censored_fraction,diverging_flag\n");
}

#[test]
fn stability_region_rows_are_ordered_and_zero_at_p_zero() {
    let dir = setup();
    let out = udn(
        &["stability-region", "--config", "small.cfg", "--sweep", "p=0:0.5:0.5", "--realizations", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r[0] == "0") {
        assert_eq!(r[3], "0");
    }
    let at = |kind: &str| rows.iter().find(|r| r[0] == "0.5" && r[1] == kind).unwrap()[3].parse::<f64>().unwrap();
    assert!(at("sufficient") <= at("type_i").min(at("type_ii")));
}

#[test]
fn delay_cdf_is_zero_below_one_slot() {
    let dir = setup();
    let out = udn(
        &["delay-cdf", "--config", "small.cfg", "--sweep", "t=0:0.75:0.25", "--realizations", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "grid_t,cdf_lower,cdf_empirical,cdf_upper,cdf_approx,censored_fraction");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(&f[1..5], ["0", "0", "0", "0"]);
    }
}

#[test]
fn workers_env_var_is_honored() {
    let dir = setup();
    let run = |w: &str| {
        Command::new(env!("CARGO_BIN_EXE_udn"))
            .args(["sample", "--config", "small.cfg", "--realizations", "3"])
            .current_dir(dir.path())
            .env("UDN_WORKERS", w)
            .output()
            .unwrap()
    };
    let (a, b) = (run("1"), run("3"));
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}
