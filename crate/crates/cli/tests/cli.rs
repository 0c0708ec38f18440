use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ldpclab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldpclab"))
        .current_dir(dir)
        .env_remove("LDPCLAB_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn duality_example_writes_csv_and_prints_the_residual() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldpclab(dir.path(), &["verify-duality", "--code", "builtin:spc3", "--trials", "100", "--seed", "7", "--assert"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("max relative residual"));
    let csv = fs::read_to_string(dir.path().join("ldpclab-out/verify-duality.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert!(csv.starts_with("trial,n,m,rank,eps2,log_z_p,residual,relative_residual,condition"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ldpclab-out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 7);
    assert!(manifest["wall_clock_seconds"].is_number());
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldpclab(dir.path(), &["sinh-moment"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn bad_config_field_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "seed = 1\n[decay]\ncode = \"builtin:ring30\"\nsampels = 3\n").unwrap();
    let o = ldpclab(dir.path(), &["--config", "run.toml", "decay"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("run.toml:4") && e.contains("sampels"), "{e}");
}

#[test]
fn unknown_builtin_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldpclab(dir.path(), &["gexit-fd", "--code", "builtin:nothing", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn capacity_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldpclab(
        dir.path(),
        &["gexit-fd", "--code", "builtin:reg36", "--seed", "1", "--samples", "4", "--budget-log2", "8"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn skip_infeasible_turns_capacity_into_skipped_rows() {
    let dir = tempfile::tempdir().unwrap();
    // One long check plus a chain: the code has a single codeword pair but
    // its depth-2 neighborhood around bit 0 frees all the leaves.
    fs::write(dir.path().join("star.txt"), "6 5\n0 1 2 3 4 5\n1 2\n2 3\n3 4\n4 5\n").unwrap();
    let args = [
        "boundary-check", "--code", "star.txt", "--depths", "2,4", "--samples", "4", "--seed", "1", "--budget-log2", "2",
    ];
    let o = ldpclab(dir.path(), &args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = ldpclab(dir.path(), &[&args[..], &["--skip-infeasible"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("depth 2: skipped"));
}

#[test]
fn assert_mode_fails_on_the_literal_rule_for_a_shared_check() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["cluster-check", "--code", "builtin:spc3", "--pairs", "0-1", "--draws", "3", "--diagnostic-samples", "0", "--seed", "1"];
    let o = ldpclab(dir.path(), &[&base[..], &["--assert"]].concat());
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("linked rule holds"));
    // The report is still written.
    assert!(dir.path().join("ldpclab-out/cluster-check.csv").exists());
    let o = ldpclab(dir.path(), &[&base[..], &["--assert", "--rule", "linked"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    // Without --assert a failed check is only a warning.
    let o = ldpclab(dir.path(), &base);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn reruns_are_byte_identical_and_worker_count_only_changes_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, workers: &str| {
        let o = ldpclab(
            dir.path(),
            &[
                "decay", "--code", "builtin:lattice:6", "--eps2", "0.5,1", "--samples", "200", "--pairs", "all",
                "--seed", "11", "--workers", workers, "--out", out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    };
    run("a", "1");
    run("b", "1");
    run("c", "2");
    let read = |d: &str, f: &str| fs::read(dir.path().join(d).join(f)).unwrap();
    for f in ["decay-eps2-0.5.csv", "decay-eps2-1.csv", "decay.json"] {
        assert_eq!(read("a", f), read("b", f), "{f}");
    }
    for f in ["decay-eps2-0.5.csv", "decay-eps2-1.csv"] {
        assert_eq!(read("a", f), read("c", f), "{f}");
    }
}

#[test]
fn replay_regenerates_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = ldpclab(
        dir.path(),
        &["gexit-fd", "--code", "builtin:rep3", "--eps2", "0.5", "--samples", "500", "--seed", "5", "--out", "first"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ldpclab(dir.path(), &["replay", "first/manifest.json", "--out", "second"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["gexit-fd.csv", "gexit-fd.json"] {
        assert_eq!(
            fs::read(dir.path().join("first").join(f)).unwrap(),
            fs::read(dir.path().join("second").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_file_sections_and_output_env() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 3\n\n[sinh-moment]\neps2 = [0.5]\nmethod = \"mc\"\nsamples = 1000\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ldpclab"))
        .current_dir(dir.path())
        .env("LDPCLAB_OUT", "from-env")
        .args(["--config", "run.toml", "sinh-moment", "--s", "0.2"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("from-env/sinh-moment.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("eps2,s,method,value,stderr"));
    assert!(lines.next().unwrap().starts_with("0.5,0.2,mc,"));
}
