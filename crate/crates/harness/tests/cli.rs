use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use ufmlab::runner::content_hash;

fn ufmlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ufmlab"))
        .args(args)
        .env("UFMLAB_OUT", out)
        .current_dir(out)
        .output()
        .expect("binary runs")
}

fn small_train_config(dir: &Path, name: &str, eps: f64, reps: usize, sweep: bool) -> std::path::PathBuf {
    let sweep = if sweep {
        r#""sweep": {"variable": "depth", "values": [1, 2]},"#
    } else {
        ""
    };
    let json = format!(
        r#"{{
  "name": "{name}",
  "spec": {{"k": 3, "n": 2, "d": 4, "depth": 2}},
  "experiment": {{
    "kind": "train",
    "schedule": {{"step_size": 0.08, "epochs_phase1": 0, "lambda_phase1": 0.0,
                 "epochs_phase2": 300, "log_every": 50, "stop_loss": null}},
    "init": {{"kind": "random", "eps": {eps}}}
  }},
  {sweep}
  "repetitions": {reps},
  "master_seed": 11,
  "output_dir": "{name}"
}}"#
    );
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn single_run_emits_one_log_a_summary_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_train_config(tmp.path(), "one", 0.5, 1, false);
    let out = ufmlab(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("one");
    let logs: Vec<_> = fs::read_dir(dir.join("runs")).unwrap().collect();
    assert_eq!(logs.len(), 1);
    assert!(dir.join("summary.csv").is_file());
    assert!(dir.join("manifest.json").is_file());
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.starts_with("value,runs,ok,loss_mean,loss_std,"));
}

#[test]
fn summaries_are_bitwise_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_train_config(tmp.path(), "rep", 0.5, 2, true);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let c = cfg.to_str().unwrap();
    assert!(ufmlab(&a, &["train", "--config", c, "--workers", "1"]).status.success());
    assert!(ufmlab(&b, &["train", "--config", c, "--workers", "3"]).status.success());
    for f in ["summary.csv", "runs.csv"] {
        let x = fs::read(a.join("rep").join(f)).unwrap();
        let y = fs::read(b.join("rep").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
}

#[test]
fn manifest_lists_every_csv_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_train_config(tmp.path(), "man", 0.5, 2, true);
    assert!(ufmlab(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]).status.success());
    let dir = tmp.path().join("man");
    let manifest: Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<(String, String)> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["path"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect();
    let mut on_disk = vec!["runs.csv".to_string(), "summary.csv".to_string()];
    for e in fs::read_dir(dir.join("runs")).unwrap() {
        on_disk.push(format!("runs/{}", e.unwrap().file_name().to_string_lossy()));
    }
    assert_eq!(listed.len(), on_disk.len());
    for path in on_disk {
        let (_, hash) = listed.iter().find(|(p, _)| *p == path).expect("listed");
        assert_eq!(*hash, content_hash(&fs::read(dir.join(&path)).unwrap()));
    }
    let seeds: Vec<u64> = manifest["seeds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, vec![11, 12, 13, 14]);
    assert_eq!(manifest["config"]["name"], "man");
    assert_eq!(manifest["input_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn divergent_runs_are_recorded_and_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_train_config(tmp.path(), "div", 1e200, 1, false);
    let out = ufmlab(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let manifest: Value =
        serde_json::from_slice(&fs::read(tmp.path().join("div/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["incidents"][0]["status"], "diverged");
    let runs = fs::read_to_string(tmp.path().join("div/runs.csv")).unwrap();
    assert!(runs.lines().nth(1).unwrap().contains(",diverged,"));
}

#[test]
fn presets_dump_as_loadable_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ufmlab(tmp.path(), &["dump-preset", "fig6-hadamard"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((v["spec"]["k"].as_u64(), v["spec"]["depth"].as_u64()), (Some(16), Some(2)));
    let again = ufmlab(tmp.path(), &["preset", "fig6-hadamard", "--dump"]);
    assert_eq!(again.stdout, out.stdout);

    // edit the dump into a short spectral run and feed it back
    let mut v = v;
    v["experiment"]["t_end"] = 5.0.into();
    v["repetitions"] = 1.into();
    let path = tmp.path().join("spec.json");
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let run = ufmlab(tmp.path(), &["spectral", "--config", path.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let traj = fs::read_dir(tmp.path().join("fig6-hadamard/runs")).unwrap().count();
    assert_eq!(traj, 1);
    // a spectral config is not a training config
    let wrong = ufmlab(tmp.path(), &["train", "--config", path.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn unknown_names_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ufmlab(tmp.path(), &["preset", "fig5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
    assert_eq!(ufmlab(tmp.path(), &["figure", "fig7"]).status.code(), Some(1));
}

#[test]
fn geometry_and_concentration_commands_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ufmlab(tmp.path(), &["geometry", "--check", "thm2"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let kgon = fs::read_to_string(tmp.path().join("thm2-kgon/kgon.csv")).unwrap();
    assert_eq!(kgon.lines().count(), 11);

    let out = ufmlab(tmp.path(), &["geometry", "--check", "thm1"]);
    assert!(out.status.success());
    for f in ["objectives.csv", "constructions.json", "logits_dnc.csv", "logits_cross_polytope.csv"] {
        assert!(tmp.path().join("thm1-grid").join(f).is_file(), "{f}");
    }

    let out = ufmlab(tmp.path(), &["concentration", "--widths", "16,64", "--seeds", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().skip_while(|l| *l != "d,mean,std").skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("16,"));
}
