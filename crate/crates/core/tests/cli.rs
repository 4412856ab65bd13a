use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funcnn::model::{FittedModel, ModelFile};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_funcnn"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "funcnn {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.clone(), std::fs::read(&p).unwrap()))
        .collect()
}

fn simulate(dir: &Path, scenario: &str, n: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("sim{scenario}_{seed}"));
    run(&["--threads", "1", "simulate", "--scenario", scenario, "--n", n, "--seed", seed, "--out", s(&out)]);
    out.join("data.csv")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

const SMALL_NET: &[&str] = &["--neurons", "8", "--epochs", "15", "--weight-basis", "5", "--patience", "0"];

#[test]
fn replaying_a_manifest_reproduces_every_output_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "2", "60", "3");
    let fit = tmp.path().join("fit");
    let cv = tmp.path().join("cv");
    let grid = tmp.path().join("grid.toml");
    std::fs::write(&grid, "epochs = 5\nweight_basis = 5\npatience = 0\n[grid]\nneurons = [4, 8]\n").unwrap();
    let tune = tmp.path().join("tune");
    let mut fit_args = vec!["--threads", "1", "fit", "--data", s(&data), "--out", s(&fit)];
    fit_args.extend(SMALL_NET);
    run(&fit_args);
    let mut cv_args = vec!["--threads", "1", "cv", "--data", s(&data), "--k", "3", "--out", s(&cv), "--seed", "11"];
    cv_args.extend(SMALL_NET);
    run(&cv_args);
    run(&["--threads", "1", "tune", "--data", s(&data), "--grid", s(&grid), "--k", "3", "--out", s(&tune)]);
    let sim_dir = data.parent().unwrap().to_path_buf();

    for dir in [&sim_dir, &fit, &cv, &tune] {
        let before = snapshot(dir);
        assert!(before.len() >= 2, "{dir:?} has outputs");
        run(&["--threads", "1", "replay", s(&dir.join("manifest.json"))]);
        assert_eq!(snapshot(dir), before, "replay of {dir:?} changed an output");
    }

    let again = tmp.path().join("fit_again");
    run(&["--threads", "1", "replay", s(&fit.join("manifest.json")), "--out", s(&again)]);
    for name in ["model.json", "history.csv", "summary.json"] {
        assert_eq!(std::fs::read(fit.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn manifest_echoes_defaults_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "1", "40", "5");
    let fit = tmp.path().join("fit");
    run(&["fit", "--data", s(&data), "--epochs", "3", "--out", s(&fit)]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit.join("manifest.json")).unwrap()).unwrap();
    let config = &manifest["job"]["model"]["config"];
    assert_eq!(manifest["job"]["command"], "fit");
    assert_eq!(config["seed"], 0);
    assert_eq!(config["neurons"], serde_json::json!([64, 32, 2]));
    assert_eq!(config["epochs"], 3);
    assert_eq!(manifest["job"]["schema"]["label"], "label");
}

#[test]
fn predicting_the_training_data_reproduces_training_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "1", "80", "9");
    for model in ["fnn", "nn", "flm"] {
        let fit = tmp.path().join(format!("fit_{model}"));
        let pred = tmp.path().join(format!("pred_{model}"));
        let mut args = vec!["fit", "--data", s(&data), "--model", model, "--out", s(&fit)];
        if model == "flm" {
            args.extend(["--lambda", "0.01", "--weight-basis", "5"]);
        } else {
            args.extend(SMALL_NET);
        }
        run(&args);
        run(&["predict", "--model-file", s(&fit.join("model.json")), "--data", s(&data), "--out", s(&pred)]);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(fit.join("summary.json")).unwrap()).unwrap();
        let (header, rows) = read_csv(&pred.join("predictions.csv"));
        assert_eq!(header, ["row", "label", "predicted", "p_0", "p_1"]);
        let correct = rows.iter().filter(|r| r[1] == r[2]).count();
        let accuracy = correct as f64 / rows.len() as f64;
        assert_eq!(accuracy, summary["training_accuracy"].as_f64().unwrap(), "{model}");
        for r in &rows {
            let p: f64 = r[3].parse::<f64>().unwrap() + r[4].parse::<f64>().unwrap();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn export_weights_of_a_zero_model_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "3", "40", "1");
    for model in ["fnn", "flm"] {
        let fit = tmp.path().join(format!("fit_{model}"));
        let mut args = vec!["fit", "--data", s(&data), "--model", model, "--out", s(&fit)];
        if model == "flm" {
            args.extend(["--lambda", "0.1", "--weight-basis", "5"]);
        } else {
            args.extend(SMALL_NET);
        }
        run(&args);
        let path = fit.join("model.json");
        let mut file = ModelFile::load(&path).unwrap();
        match &mut file.model {
            FittedModel::Fnn(m) => m.network.params_mut().iter_mut().for_each(|p| *p = 0.0),
            FittedModel::Flm(m) => m.coefficients.fill(0.0),
            FittedModel::Nn(_) => unreachable!(),
        }
        file.save(&path).unwrap();
        let out = tmp.path().join(format!("weights_{model}"));
        run(&["export-weights", "--model-file", s(&path), "--points", "51", "--out", s(&out)]);
        let (header, rows) = read_csv(&out.join("weights_x.csv"));
        assert_eq!(header, ["t", "beta_hat"]);
        assert_eq!(rows.len(), 51);
        assert_eq!(rows[0][0], "0");
        assert_eq!(rows[50][0], "1");
        assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() == 0.0), "{model}");
    }
}

#[test]
fn cv_with_defaults_on_scenario_one_is_accurate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "1", "300", "0");
    let cv = tmp.path().join("cv");
    run(&["cv", "--data", s(&data), "--out", s(&cv)]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cv.join("metrics.json")).unwrap()).unwrap();
    let accuracy = report["metrics"]["accuracy"].as_f64().unwrap();
    assert!(accuracy >= 0.90, "cv accuracy {accuracy}");
    let (header, rows) = read_csv(&cv.join("folds.csv"));
    assert_eq!(header[0], "fold");
    assert_eq!(rows.len(), 5);
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "1", "30", "2");

    let unknown = bin().arg("frobnicate").output().unwrap();
    assert!(!unknown.status.success());

    let fit = tmp.path().join("fit");
    run(&["fit", "--data", s(&data), "--model", "flm", "--lambda", "1", "--weight-basis", "3", "--out", s(&fit)]);
    let model = fit.join("model.json");
    let text = std::fs::read_to_string(&model).unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
    std::fs::write(&model, text).unwrap();
    let out = bin()
        .args(["predict", "--model-file", s(&model), "--data", s(&data), "--out", s(&tmp.path().join("p"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("version"), "{err}");

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "label,0,1\n0,1,2\n").unwrap();
    let out = bin().args(["cv", "--data", s(&bad), "--out", s(&tmp.path().join("c"))]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("single observation"), "{err}");
}
