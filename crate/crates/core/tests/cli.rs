use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regiostat::report::{ErrorKind, ErrorRecord, PipelineReport, RunManifest, StageStatus};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn regiostat(args: &[&str], out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_regiostat"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("REGIOSTAT_")) {
        cmd.env_remove(k);
    }
    cmd.args(args)
        .arg("--out")
        .arg(out)
        .args(["--permutations", "199", "--bootstrap", "500"])
        .output()
        .expect("binary runs")
}

fn with_panel<'a>(extra: &[&'a str], panel: &'a str, geometry: &'a str) -> Vec<&'a str> {
    let mut v = vec!["--input", panel, "--geometry", geometry];
    v.extend_from_slice(extra);
    v
}

fn paths() -> (String, String, String) {
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    (s(fixture("panel.csv")), s(fixture("regions.geojson")), s(fixture("model.json")))
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn weights_on_three_by_three_grid() {
    let out = tempfile::tempdir().unwrap();
    let grid = fixture("grid3x3.geojson");
    let res = regiostat(&["weights", "--geometry", grid.to_str().unwrap()], out.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: Value = serde_json::from_slice(&fs::read(out.path().join("connectivity.json")).unwrap()).unwrap();
    let r = &summary["results"];
    assert_eq!(r["n_regions"], 9);
    assert_eq!(r["min_neighbors"], 3);
    assert_eq!(r["max_neighbors"], 8);
    assert!(out.path().join("weights.gal").exists());
    assert!(manifest(out.path()).outputs.iter().any(|o| o.path == "cardinality.csv"));
}

#[test]
fn lisa_is_reproducible_for_a_seed() {
    let (panel, geo, _) = paths();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = with_panel(&["lisa", "--seed", "42"], &panel, &geo);
    assert!(regiostat(&args, a.path()).status.success());
    assert!(regiostat(&args, b.path()).status.success());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);

    let c = tempfile::tempdir().unwrap();
    let other = with_panel(&["lisa", "--seed", "43"], &panel, &geo);
    assert!(regiostat(&other, c.path()).status.success());
    assert_ne!(ta, tree(c.path()));
}

#[test]
fn plssem_writes_every_table() {
    let (panel, geo, model) = paths();
    let out = tempfile::tempdir().unwrap();
    let res = regiostat(&with_panel(&["plssem", "--model", &model], &panel, &geo), out.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let names: Vec<String> = manifest(out.path()).outputs.into_iter().map(|o| o.path).collect();
    for f in ["pls_loadings.csv", "pls_reliability.csv", "pls_vif.csv", "pls_htmt.csv", "pls_q2.csv", "pls_paths.csv", "plssem.json"] {
        assert!(names.iter().any(|n| n == f), "{f} missing from {names:?}");
    }
    let paths = fs::read_to_string(out.path().join("pls_paths.csv")).unwrap();
    // header plus CE->AED, AED->AHU, AED->CER
    assert_eq!(paths.lines().count(), 4, "{paths}");
}

#[test]
fn pipeline_writes_all_stages_and_reruns_identically() {
    let (panel, geo, model) = paths();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = with_panel(&["pipeline", "--model", &model], &panel, &geo);
    let res = regiostat(&args, a.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: PipelineReport = serde_json::from_slice(&fs::read(a.path().join("pipeline.json")).unwrap()).unwrap();
    assert!(report.completed);
    assert_eq!(report.stages.len(), 8);
    for s in &report.stages {
        assert_eq!(s.status, StageStatus::Ok, "{}", s.stage);
        assert!(a.path().join(&s.stage).join("manifest.json").exists());
    }
    assert!(regiostat(&args, b.path()).status.success());
    assert_eq!(fs::read(a.path().join("pipeline.json")).unwrap(), fs::read(b.path().join("pipeline.json")).unwrap());
    for s in &report.stages {
        assert_eq!(tree(&a.path().join(&s.stage)), tree(&b.path().join(&s.stage)), "{}", s.stage);
    }

    let ok = regiostat(&["validate"], a.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    fs::write(a.path().join("05_moran").join("moran.csv"), "tampered\n").unwrap();
    let bad = regiostat(&["validate"], a.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("moran.csv"));
}

#[test]
fn missing_geometry_halts_at_weights() {
    let (panel, _, model) = paths();
    let out = tempfile::tempdir().unwrap();
    let missing = out.path().join("nowhere.geojson");
    let res = regiostat(
        &["pipeline", "--input", &panel, "--model", &model, "--geometry", missing.to_str().unwrap()],
        out.path(),
    );
    assert_eq!(res.status.code(), Some(1));
    let report: PipelineReport = serde_json::from_slice(&fs::read(out.path().join("pipeline.json")).unwrap()).unwrap();
    assert!(!report.completed);
    let status: Vec<StageStatus> = report.stages.iter().map(|s| s.status).collect();
    assert_eq!(&status[..3], &[StageStatus::Ok; 3]);
    assert_eq!(status[3], StageStatus::Failed);
    assert!(status[4..].iter().all(|s| *s == StageStatus::NotRun));
    for stage in ["01_describe", "02_standardize", "03_normality"] {
        assert!(out.path().join(stage).join("manifest.json").exists());
    }
    assert!(!out.path().join("05_moran").exists());

    let err: ErrorRecord = serde_json::from_slice(&fs::read(out.path().join("04_weights").join("error.json")).unwrap()).unwrap();
    assert_eq!(err.kind, ErrorKind::Input);
    assert_eq!(err.exit_code, 1);
    assert!(!err.module.is_empty() && !err.operation.is_empty() && !err.message.is_empty());
    assert!(err.identifiers.iter().any(|i| i.contains("nowhere.geojson")), "{:?}", err.identifiers);
    let raw: Value = serde_json::from_slice(&fs::read(out.path().join("04_weights").join("error.json")).unwrap()).unwrap();
    for key in ["kind", "module", "operation", "message", "identifiers", "exit_code"] {
        assert!(raw.get(key).is_some(), "{key}");
    }
    let stderr: ErrorRecord = serde_json::from_slice(res.stderr.trim_ascii()).unwrap();
    assert_eq!(stderr, err);
}

#[test]
fn seed_can_come_from_environment() {
    let (panel, geo, _) = paths();
    let out = tempfile::tempdir().unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_regiostat"))
        .args(["moran", "--input", &panel, "--geometry", &geo, "--permutations", "99"])
        .arg("--out")
        .arg(out.path())
        .env("REGIOSTAT_SEED", "7")
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(out.path());
    assert_eq!(m.seed, 7);
    assert_eq!(m.settings.permutations, 99);
}

#[test]
fn model_file_may_not_carry_a_seed() {
    let (panel, geo, model) = paths();
    let out = tempfile::tempdir().unwrap();
    let mut value: Value = serde_json::from_slice(&fs::read(&model).unwrap()).unwrap();
    value["config"]["seed"] = 1.into();
    let bad = out.path().join("seeded.json");
    fs::write(&bad, serde_json::to_vec(&value).unwrap()).unwrap();
    let res = regiostat(&with_panel(&["plssem", "--model", bad.to_str().unwrap()], &panel, &geo), out.path());
    assert_eq!(res.status.code(), Some(1));
    let err: ErrorRecord = serde_json::from_slice(&fs::read(out.path().join("error.json")).unwrap()).unwrap();
    assert!(err.message.contains("--seed"), "{}", err.message);
}

#[test]
fn usage_errors_exit_with_input_code() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(regiostat(&["nonsense"], out.path()).status.code(), Some(1));
    assert_eq!(regiostat(&["moran", "--permutations", "10"], out.path()).status.code(), Some(1));
}

#[test]
fn plssem_can_fit_a_single_year() {
    let (panel, geo, model) = paths();
    let out = tempfile::tempdir().unwrap();
    let res = regiostat(&with_panel(&["plssem", "--model", &model, "--pls-year", "2017"], &panel, &geo), out.path());
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let body: Value = serde_json::from_slice(&fs::read(out.path().join("plssem.json")).unwrap()).unwrap();
    assert_eq!(body["results"]["n_observations"], 88);
    assert_eq!(body["results"]["observations"]["year"], 2017);
    assert_eq!(manifest(out.path()).settings.pls_year, Some(2017));

    let pooled = tempfile::tempdir().unwrap();
    assert!(regiostat(&with_panel(&["plssem", "--model", &model], &panel, &geo), pooled.path()).status.success());
    let body: Value = serde_json::from_slice(&fs::read(pooled.path().join("plssem.json")).unwrap()).unwrap();
    // PIB is missing for the last year, so those 88 rows drop out
    assert_eq!(body["results"]["n_observations"], 792);
    assert_eq!(body["results"]["incomplete_rows_dropped"], 88);

    let bad = tempfile::tempdir().unwrap();
    let res = regiostat(&with_panel(&["plssem", "--pls-year", "1990"], &panel, &geo), bad.path());
    assert_eq!(res.status.code(), Some(1));
}
