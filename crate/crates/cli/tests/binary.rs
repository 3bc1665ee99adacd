use std::path::PathBuf;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_uvturb");
const REFERENCE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples_cfg/reference.cfg");

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("uvturb-binary-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for key in ["UVTURB_SEED", "UVTURB_SAMPLES", "UVTURB_WORKERS", "UVTURB_ORDERS", "UVTURB_CONFIG", "UVTURB_OUT"] {
        cmd.env_remove(key);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn scenario_writes_header_and_sections() {
    let o = run(&["scenario", "--config", REFERENCE, "--samples", "20000", "--orders", "2"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for needle in [
        "# command: scenario",
        "# config_sha256: ",
        "# samples: 20000",
        "# orders: 2",
        "# chunk_size: 16384",
        "# config: baseline = 500.0 m",
        "# section orders",
        "# section totals",
        "# section pdf",
    ] {
        assert!(text.contains(needle), "missing {needle:?}");
    }
}

#[test]
fn environment_overrides_config_and_flags_override_environment() {
    let o = run(&["scenario", "--samples", "5000", "--orders", "1"], &[("UVTURB_SEED", "99")]);
    assert!(stdout(&o).contains("# seed: 99"));
    let o = run(&["scenario", "--samples", "5000", "--orders", "1", "--seed", "7"], &[("UVTURB_SEED", "99")]);
    assert!(stdout(&o).contains("# seed: 7"));
}

#[test]
fn out_flag_writes_file() {
    let path = scratch("phase.csv");
    let o = run(&["phase", "--points", "32", "--out", path.to_str().unwrap()], &[]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 33);
}

#[test]
fn validation_errors_exit_with_one() {
    let bad = scratch("bad.cfg");
    std::fs::write(&bad, "baseline = 500\n").unwrap();
    let o = run(&["scenario", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 1") && err.contains("missing unit"), "{err}");

    let o = run(&["mcs-compare", "--reps", "1", "--samples", "1000"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["scenario", "--config", "/nonexistent/uvturb.cfg"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let short = scratch("short.txt");
    std::fs::write(&short, "1\n2\n3\n").unwrap();
    let o = run(&["analyze", "--input", short.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    // a 1 cm² cone far off the beam never sees a scattered photon
    let cfg = scratch("blind.cfg");
    std::fs::write(&cfg, "rx_fov = 0.01 deg\nrx_azimuth = -90 deg\nrx_zenith = 80 deg\n").unwrap();
    let o = run(&["scenario", "--config", cfg.to_str().unwrap(), "--samples", "2000", "--orders", "1"], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn analyze_reads_two_column_logs() {
    let log = scratch("log.txt");
    let body: String = (0..400).map(|i| format!("{i} {}\n", 1.0 + 0.1 * ((i % 7) as f64 - 3.0))).collect();
    std::fs::write(&log, body).unwrap();
    let o = run(&["analyze", "--input", log.to_str().unwrap(), "--bins", "7"], &[]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# section summary"));
    assert!(text.contains("# input_sha256: "));
    let summary = text.lines().skip_while(|l| *l != "# section summary").nth(2).unwrap();
    assert!(summary.starts_with("400,"));
}
