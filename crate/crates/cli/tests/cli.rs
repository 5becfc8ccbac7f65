//! The `qrng` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qrng_core::validation::REFERENCE_COUNTS;

fn qrng(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrng"))
        .args(args)
        .env_remove("QRNG_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn kv<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    qrng(&args)
}

#[test]
fn simulate_writes_four_files_and_a_manifest() {
    let d = tempfile::tempdir().unwrap();
    let o = simulate(d.path(), &["--seed", "1", "--bits", "1048576"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["stream.bits", "events.csv", "feedback.csv", "manifest.toml"] {
        assert!(d.path().join(f).is_file(), "{f}");
    }
    assert_eq!(fs::metadata(d.path().join("stream.bits")).unwrap().len(), 1 << 17);
    let m: toml::Table = fs::read_to_string(d.path().join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(m["run"]["bit_count"].as_integer(), Some(1 << 20));
    assert_eq!(m["run"]["seed"].as_integer(), Some(1));
    assert_eq!(m["run"]["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["run"]["build"].as_str().unwrap().starts_with("qrng-cli "));
    assert_eq!(m["counters"]["emitted_bits"].as_integer(), Some(1 << 20));
    assert!(fs::read_to_string(d.path().join("events.csv")).unwrap().starts_with("t_ns,channel,kind\n"));
    assert!(fs::read_to_string(d.path().join("feedback.csv")).unwrap().starts_with("t_s,v_bias,v_control\n"));
}

#[test]
fn simulate_is_reproducible_and_replayable() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--seed", "42", "--bits", "50000", "--set", "feedback.integrator_gain=2e-4"];
    assert!(simulate(a.path(), &args).status.success());
    assert!(simulate(b.path(), &args).status.success());
    let sa = fs::read(a.path().join("stream.bits")).unwrap();
    assert_eq!(sa, fs::read(b.path().join("stream.bits")).unwrap());
    assert_eq!(
        fs::read(a.path().join("events.csv")).unwrap(),
        fs::read(b.path().join("events.csv")).unwrap()
    );
    let manifest = a.path().join("manifest.toml");
    let o = simulate(c.path(), &["--replay", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sa, fs::read(c.path().join("stream.bits")).unwrap());
}

#[test]
fn zero_length_run_gives_an_empty_stream() {
    let d = tempfile::tempdir().unwrap();
    assert!(simulate(d.path(), &["--seed", "1", "--bits", "0"]).status.success());
    assert_eq!(fs::metadata(d.path().join("stream.bits")).unwrap().len(), 0);
    let m: toml::Table = fs::read_to_string(d.path().join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(m["run"]["bit_count"].as_integer(), Some(0));
}

#[test]
fn out_dir_defaults_from_the_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qrng"))
        .args(["simulate", "--seed", "2", "--cycles", "1000", "--no-events"])
        .env("QRNG_OUT_DIR", d.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(d.path().join("manifest.toml").is_file());
    assert!(!d.path().join("events.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(qrng(&["simulate", "--bits", "10"]).status.code(), Some(2));
    assert_eq!(qrng(&["simulate", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(qrng(&["simulate", "--seed", "1", "--bits", "1", "--cycles", "1"]).status.code(), Some(2));
    assert_eq!(qrng(&["predict", "--p1", "1.5", "--p2", "0.2"]).status.code(), Some(2));
    assert_eq!(qrng(&["sweep", "pressure", "--metric", "dark-rate", "--values", "1"]).status.code(), Some(2));
    assert_eq!(qrng(&["validate", "--tier", "slow"]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    fs::write(&cfg, "[feedback]\nintegrator_gain = \n").unwrap();
    let o = simulate(d.path(), &["--seed", "1", "--bits", "10", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    fs::write(&cfg, "[feedback]\ngain = 1.0\n").unwrap();
    let o = simulate(d.path(), &["--seed", "1", "--bits", "10", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let o = simulate(d.path(), &["--seed", "1", "--bits", "10", "--config", "/nonexistent/c.toml"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_file_and_flags_combine() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    fs::write(&cfg, "temperature_c = 40.0\n[feedback]\nenabled = false\n").unwrap();
    let out = d.path().join("run");
    let o = qrng(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--set", "temperature_c=30", "--no-afterpulsing",
        "--seed", "1", "--cycles", "100", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let m: toml::Table = fs::read_to_string(out.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(m["config"]["temperature_c"].as_float(), Some(30.0));
    assert_eq!(m["config"]["feedback"]["enabled"].as_bool(), Some(false));
    assert_eq!(m["config"]["detectors"]["afterpulse_prob"].as_float(), Some(0.0));
}

#[test]
fn analyze_bits_reads_the_sibling_manifest() {
    let d = tempfile::tempdir().unwrap();
    assert!(simulate(d.path(), &["--seed", "7", "--bits", "100003", "--no-events"]).status.success());
    let counts = d.path().join("counts.csv");
    let o = qrng(&[
        "analyze", "bits", d.path().join("stream.bits").to_str().unwrap(), "--format", "kv",
        "--counts-out", counts.to_str().unwrap(), "--label", "run7",
    ]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert_eq!(kv(&text, "n"), Some("100003"));
    assert_eq!(kv(&text, "verdict"), Some("PASS"));
    assert!(fs::read_to_string(&counts).unwrap().starts_with("label,n0,n1,n_hold,n_flip\nrun7,"));
}

#[test]
fn analyze_bits_flags_an_all_zero_stream() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("zeros.bits");
    fs::write(&f, vec![0u8; 4096]).unwrap();
    let o = qrng(&["analyze", "bits", f.to_str().unwrap(), "--format", "kv"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert_eq!(kv(&text, "rel_dev_balance"), Some("-1.0e0"));
    assert_eq!(kv(&text, "verdict"), Some("FAIL"));
}

#[test]
fn analyze_bits_names_the_byte_offset() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("short.bits");
    fs::write(&f, [0u8; 3]).unwrap();
    let o = qrng(&["analyze", "bits", f.to_str().unwrap(), "--bit-count", "40"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte 3"));
}

#[test]
fn analyze_counts_reproduces_the_reference_columns() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("reference.csv");
    let mut csv = String::from("label,n0,n1,n_hold,n_flip\n");
    for (l, n0, n1, h, fl, _, _) in REFERENCE_COUNTS {
        csv.push_str(&format!("{l},{n0},{n1},{h},{fl}\n"));
    }
    fs::write(&f, csv).unwrap();
    let o = qrng(&["analyze", "counts", f.to_str().unwrap(), "--format", "kv"]);
    let text = stdout(&o);
    for (l, n0, n1, h, fl, bal, flip) in REFERENCE_COUNTS {
        assert_eq!(kv(&text, &format!("{l}.n0")), Some(n0.to_string().as_str()));
        assert_eq!(kv(&text, &format!("{l}.n1")), Some(n1.to_string().as_str()));
        assert_eq!(kv(&text, &format!("{l}.n_hold")), Some(h.to_string().as_str()));
        assert_eq!(kv(&text, &format!("{l}.n_flip")), Some(fl.to_string().as_str()));
        assert_eq!(kv(&text, &format!("{l}.rel_dev_balance")), Some(bal));
        assert_eq!(kv(&text, &format!("{l}.rel_dev_flip")), Some(flip));
    }
    // Most reference devices exceed 4 sigma in flip/hold, so the table is flagged.
    assert_eq!(o.status.code(), Some(1));
    let text_table = stdout(&qrng(&["analyze", "counts", f.to_str().unwrap()]));
    assert!(text_table.contains("3.8e-4") && text_table.contains("-4.0e-5"));
}

#[test]
fn analyze_events_and_feedback() {
    let d = tempfile::tempdir().unwrap();
    assert!(simulate(d.path(), &["--seed", "3", "--seconds", "0.2"]).status.success());
    let out = d.path().join("a");
    let o = qrng(&[
        "analyze", "events", d.path().join("events.csv").to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--format", "kv",
    ]);
    assert!(o.status.success());
    assert_eq!(kv(&stdout(&o), "bin_ns"), Some("4"));
    for f in ["autocorr_ch1.csv", "autocorr_ch2.csv", "crosscorr.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with("bin_lo_ns,count\n"), "{f}");
    }
    let o = qrng(&[
        "analyze", "feedback", d.path().join("feedback.csv").to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--format", "kv",
    ]);
    assert!(o.status.success());
    assert!(kv(&stdout(&o), "peak_hz").is_some());
    assert!(fs::read_to_string(out.join("spectrum.csv")).unwrap().starts_with("freq_hz,power\n"));
}

#[test]
fn analyze_events_on_an_empty_log_warns() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("empty.csv");
    fs::write(&f, "t_ns,channel,kind\n").unwrap();
    let o = qrng(&["analyze", "events", f.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let h = fs::read_to_string(d.path().join("crosscorr.csv")).unwrap();
    assert!(h.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn analyze_events_names_the_bad_line() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("bad.csv");
    fs::write(&f, "t_ns,channel,kind\n1,1,prompt\n2,1,early\n").unwrap();
    let o = qrng(&["analyze", "events", f.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn predict_forward_and_inverse() {
    let t = stdout(&qrng(&["predict", "--p1", "0.28", "--p2", "0.28", "--format", "kv"]));
    assert_eq!(kv(&t, "bias"), Some("0.0000e0"));
    assert_eq!(kv(&t, "flip_per_output"), Some("0.500000"));
    let t = stdout(&qrng(&["predict", "--p1", "0.30", "--p2", "0.25", "--format", "kv"]));
    assert_eq!(kv(&t, "bias"), Some("1.5625e-3"));
    let t = stdout(&qrng(&["predict", "--invert", "--bias", "3.8e-4", "--pavg", "0.28", "--format", "kv"]));
    let dp: f64 = kv(&t, "abs_p1_minus_p2").unwrap().parse().unwrap();
    assert!((dp - 0.025).abs() < 1e-3);
}

#[test]
fn text_and_kv_reports_agree() {
    let text = stdout(&qrng(&["predict", "--p1", "0.1", "--p2", "0.45"]));
    let kvs = stdout(&qrng(&["predict", "--p1", "0.1", "--p2", "0.45", "--format", "kv"]));
    for line in kvs.lines() {
        let (k, v) = line.split_once('=').unwrap();
        assert!(text.lines().any(|l| {
            let mut it = l.split_whitespace();
            it.next() == Some(k) && it.next() == Some(v)
        }), "{k}={v}");
    }
}

#[test]
fn sweeps() {
    let t = stdout(&qrng(&["sweep", "temperature", "--from", "0", "--to", "40", "--steps", "5", "--metric", "dark-rate"]));
    let mut lines = t.lines();
    assert_eq!(lines.next(), Some("temperature_c,dark_rate_hz"));
    let ys: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ys.len(), 5);
    assert!(ys.windows(2).all(|w| w[1] > w[0]));
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("s.csv");
    let o = qrng(&["sweep", "v-bias", "--values", "25,30,35", "--metric", "single-rate", "--out", f.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(fs::read_to_string(&f).unwrap().starts_with("v_bias,single_rate_hz\n"));
}

#[test]
fn validate_runs_selected_criteria() {
    let o = qrng(&["validate", "--only", "9"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("[PASS] criterion 9"));
}
