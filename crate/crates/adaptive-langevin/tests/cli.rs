use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaptive-langevin"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("al-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn empty_pipeline_list_is_a_config_error() {
    let d = scratch("empty");
    let cfg = d.join("c.cfg");
    fs::write(&cfg, "pipelines =\n").unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(d.join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pipelines"), "{err}");
    assert!(!d.join("o").exists());
}

#[test]
fn unwritable_output_fails_before_computing() {
    let d = scratch("unwritable");
    let blocker = d.join("file");
    fs::write(&blocker, "x").unwrap();
    let out = bin().args(["run", "--out"]).arg(blocker.join("sub")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("output directory"));
}

#[test]
fn unknown_preset_is_rejected() {
    let d = scratch("preset");
    let out = bin().args(["run", "--preset", "nope", "--out"]).arg(&d).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("potential"));
}

#[test]
fn small_run_writes_artifacts_and_is_reproducible() {
    let d = scratch("run");
    let cfg = d.join("c.cfg");
    fs::write(
        &cfg,
        "h = 0.25, 0.2\npipelines = wkb, sde\nsde.transitions = 40\nsde.trajectories = 4\nsde.equilibrium_time = 100\n",
    )
    .unwrap();
    let run = |o: &str| {
        let out = bin().arg("run").arg(&cfg).args(["--seed", "9", "--out"]).arg(d.join(o)).output().unwrap();
        assert!(out.status.code().is_some(), "{out:?}");
        out
    };
    run("a");
    run("b");
    for f in ["config.txt", "wkb.json", "wkb.csv", "sde.json", "sde_times_0.25.csv", "sde_times_0.2.csv", "summary.json"] {
        assert!(d.join("a").join(f).exists(), "{f}");
        if f == "config.txt" || f == "summary.json" {
            continue; // both echo the output directory
        }
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let times = fs::read_to_string(d.join("a/sde_times_0.2.csv")).unwrap();
    let mut lines = times.lines();
    assert!(lines.next().unwrap().starts_with("# potential=tilted_quartic"));
    assert_eq!(lines.next(), Some("time"));
    assert_eq!(lines.count(), 40);
    let echo = fs::read_to_string(d.join("a/config.txt")).unwrap();
    assert!(echo.contains("seed = 9") && echo.contains("sde.dt = 0.01"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("a/summary.json")).unwrap()).unwrap();
    let keys: Vec<&str> = summary.as_object().unwrap().keys().map(String::as_str).collect();
    assert!(keys.contains(&"pipelines") && keys.contains(&"passed"));
}
