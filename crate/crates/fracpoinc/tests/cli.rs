use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fracpoinc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracpoinc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn constant_prints_twelve_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracpoinc(&["constant", "--params.h", "1/128"], &dir.path().join("run"));
    assert_eq!(o.status.code(), Some(0));
    let lambda: f64 = stdout(&o).trim().parse().unwrap();
    assert!((lambda - 1.155_274_678_905_589).abs() / lambda <= 1e-8, "{lambda}");
    assert_eq!(stdout(&o).trim(), "1.15527467891");
    let eigen = fs::read_to_string(dir.path().join("run/eigenfunction.csv")).unwrap();
    assert_eq!(eigen.lines().count(), 257);
}

#[test]
fn refuses_to_overwrite_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let args = ["constant", "--params.h", "1/16"];
    assert_eq!(fracpoinc(&args, &out).status.code(), Some(0));
    let again = fracpoinc(&args, &out);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("overwrite"));
    let mut forced = args.to_vec();
    forced.push("--overwrite");
    assert_eq!(fracpoinc(&forced, &out).status.code(), Some(0));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "params.s = 0.5\nparams.x = 1\n").unwrap();
    let o = fracpoinc(&["constant", "--config", conf.to_str().unwrap()], &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    for args in [
        &["constant", "--params.s", "1.5"][..],
        &["constant", "--params.p", "0.5"],
        &["sweep", "--sweep.ells", "2,4"],
        &["sweep", "--sweep.ells", "4,2,8"],
        &["verify", "--verify.experiments", "nonsense"],
        &["constant", "--solver.shrink", "2"],
    ] {
        let o = fracpoinc(args, &dir.path().join("b"));
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn failed_checks_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracpoinc(&["identities", "--identities.max_n", "3", "--tol.constant_identity", "0"], &dir.path().join("r"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn help_lists_defaults() {
    let o = Command::new(env!("CARGO_BIN_EXE_fracpoinc")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for key in ["params.h", "sweep.ells", "verify.line_nodes", "tol.picone", "--threads", "--seed"] {
        assert!(text.contains(key), "{key}");
    }
}

#[test]
fn weight_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["constant", "--domain.factors", "0:1,0:2", "--params.h", "1/8", "--params.p", "1.5"];
    let first = dir.path().join("first");
    let mut write = base.to_vec();
    write.extend(["--assembly.cache_write", "true"]);
    assert_eq!(fracpoinc(&write, &first).status.code(), Some(0));
    let cache = first.join("weights.fpnl");
    assert!(cache.exists());
    let second = dir.path().join("second");
    let mut read = base.to_vec();
    read.extend(["--assembly.cache_read", cache.to_str().unwrap()]);
    assert_eq!(fracpoinc(&read, &second).status.code(), Some(0));
    for f in ["constant.csv", "eigenfunction.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let mismatched = dir.path().join("third");
    let mut wrong = read.clone();
    wrong.extend(["--params.h", "1/4"]);
    assert_eq!(fracpoinc(&wrong, &mismatched).status.code(), Some(1));
}

#[test]
fn writes_only_inside_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("only");
    let o = fracpoinc(&["picone", "--picone.trials", "20", "--picone.points", "8"], &out);
    assert_eq!(o.status.code(), Some(0));
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().flatten().map(|e| e.file_name()).collect();
    assert_eq!(entries, vec![std::ffi::OsString::from("only")]);
    let mut written: Vec<String> =
        fs::read_dir(&out).unwrap().flatten().map(|e| e.file_name().to_string_lossy().into_owned()).collect();
    written.sort();
    assert_eq!(written, ["config.txt", "picone.csv", "summary.txt"]);
}
