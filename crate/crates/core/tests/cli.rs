//! End-to-end runs of the `ergokit` binary.

use std::path::Path;
use std::process::{Command, Output};

use ergokit::io::{load_dataset, save_dataset, save_model_dir, serialize_openpose};
use ergokit::regressor::{AngleModel, Architecture, ModelSet};
use ergokit::skeleton::AngleName;
use ergokit::synth::{generate_dataset, DatasetSpec, LimbChain, OcclusionPolicy};

fn ergokit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergokit")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_is_repeatable_and_echoes_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        let o = ergokit(&["synth", "--count", "10", "--seed", "7", "--out", name], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("seed: 7"));
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 10);
}

#[test]
fn usage_errors_exit_one_and_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = ergokit(&["synth", "--count", "ten", "--out", "x.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--count"), "{}", stderr(&o));
    let o = ergokit(&["train", "--data", "x.jsonl", "--out-dir", "m"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--angle"));
    assert_eq!(ergokit(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(ergokit(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn bad_input_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"people\": [{\"pose_keypoints_2d\": [1, 2, 3]}]}").unwrap();
    let o = ergokit(&["angles", "--input", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected 75"), "{}", stderr(&o));
    let o = ergokit(&["angles", "--input", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(dir.path().join("bad.toml"), "format_version = 1\n").unwrap();
    std::fs::write(dir.path().join("angles.json"), "{}").unwrap();
    let o = ergokit(&["rula", "--angles-file", "angles.json", "--rula-bins", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn diverging_training_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ergokit(&["synth", "--count", "40", "--out", "d.jsonl"], dir.path()).status.success());
    let o = ergokit(
        &["train", "--angle", "EL", "--data", "d.jsonl", "--epochs", "3", "--lr", "1e300", "--out-dir", "m"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!dir.path().join("m").join("EL.json").exists());
}

/// Models that reproduce their (constant) labels exactly.
fn exact_models(dir: &Path) -> ModelSet {
    let set: ModelSet = AngleName::ALL
        .iter()
        .map(|&a| {
            let mut m = AngleModel::zeros(a, Architecture::FULL);
            m.params.output.bias[0] = (5.0 + 10.0 * a.index() as f64) / 180.0;
            m
        })
        .collect();
    save_model_dir(&dir.join("models"), &set).unwrap();
    set
}

#[test]
fn eval_of_exact_models_reports_zero_training_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut samples = generate_dataset(&DatasetSpec { count: 30, seed: 2, ..DatasetSpec::default() }).unwrap();
    for s in &mut samples {
        for a in AngleName::ALL {
            s.truth.set(a, 5.0 + 10.0 * a.index() as f64);
        }
    }
    save_dataset(&dir.path().join("train.jsonl"), &samples).unwrap();
    exact_models(dir.path());
    assert!(ergokit(&["synth", "--count", "10", "--seed", "3", "--out", "test.jsonl"], dir.path()).status.success());

    let o = ergokit(
        &["eval", "--models", "models", "--train-data", "train.jsonl", "--test-data", "test.jsonl"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let all = text.lines().find(|l| l.starts_with("ALL")).unwrap();
    let cols: Vec<&str> = all.split_whitespace().collect();
    // ALL pooled over all angles <train MAE> <train RMSE> ...
    assert_eq!((cols[5], cols[6]), ("0.0000", "0.0000"), "{all}");

    let o = ergokit(
        &["eval", "--models", "models", "--train-data", "train.jsonl", "--test-data", "test.jsonl", "--format", "csv"],
        dir.path(),
    );
    assert!(stdout(&o).lines().last().unwrap().starts_with("ALL,0.0000,0.0000,480,"));
}

#[test]
fn report_files_are_written_whole_or_not_at_all() {
    let dir = tempfile::tempdir().unwrap();
    exact_models(dir.path());
    assert!(ergokit(&["synth", "--count", "5", "--out", "d.jsonl"], dir.path()).status.success());
    let args = ["eval", "--models", "models", "--train-data", "d.jsonl", "--test-data", "d.jsonl", "--format", "json"];
    let mut with_out = args.to_vec();
    with_out.extend(["--output", "report.json"]);
    assert!(ergokit(&with_out, dir.path()).status.success());
    let written = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(written, stdout(&ergokit(&args, dir.path())));
    let mut bad = args.to_vec();
    bad.extend(["--output", "no/such/dir/report.json"]);
    assert_eq!(ergokit(&bad, dir.path()).status.code(), Some(1));
    // Only the files this test created are present: no stray temporaries.
    let mut names: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["d.jsonl", "models", "report.json"]);
}

#[test]
fn predict_fills_in_an_occluded_right_arm() {
    let dir = tempfile::tempdir().unwrap();
    let set: ModelSet = AngleName::ALL.iter().map(|&a| AngleModel::init(a, 1)).collect();
    save_model_dir(&dir.path().join("models"), &set).unwrap();
    let spec = DatasetSpec { count: 1, seed: 4, occlusion: OcclusionPolicy::Limb(LimbChain::RightArm), ..DatasetSpec::default() };
    let frame = generate_dataset(&spec).unwrap().remove(0).frame;
    std::fs::write(dir.path().join("pose.json"), serialize_openpose(&[frame])).unwrap();

    let o = ergokit(&["angles", "--input", "pose.json"], dir.path());
    let geometric: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // Keypoints 2-4 define EL and SL; geometry alone cannot measure them now.
    assert!(geometric["angles"]["EL"].is_null() && geometric["angles"]["SL"].is_null());

    let o = ergokit(&["predict", "--models", "models", "--input", "pose.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let predicted: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in AngleName::ALL.map(|a| a.acronym()) {
        let v = predicted["angles"][key].as_f64().unwrap();
        assert!((0.0..=180.0).contains(&v));
    }
    std::fs::write(dir.path().join("pred.json"), stdout(&o)).unwrap();
    let o = ergokit(&["rula", "--angles-file", "pred.json", "--side", "right", "--format", "json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((1..=7).contains(&r["grand_score"].as_u64().unwrap()));

    let o = ergokit(&["rula", "--input", "pose.json", "--models", "models", "--side", "right", "--format", "json"], dir.path());
    // Scoring straight from the pose matches scoring the saved predictions.
    assert_eq!(serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap(), r);
}

#[test]
fn missing_models_are_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    exact_models(dir.path());
    std::fs::remove_file(dir.path().join("models").join("KR.json")).unwrap();
    let frame = generate_dataset(&DatasetSpec { count: 1, ..DatasetSpec::default() }).unwrap().remove(0).frame;
    std::fs::write(dir.path().join("pose.json"), serialize_openpose(&[frame])).unwrap();
    let o = ergokit(&["predict", "--models", "models", "--input", "pose.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("KR"), "{}", stderr(&o));
}

#[test]
fn train_writes_loadable_models() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ergokit(&["synth", "--count", "40", "--seed", "1", "--out", "d.jsonl"], dir.path()).status.success());
    let o = ergokit(
        &["train", "--angle", "NT", "--angle", "TB", "--data", "d.jsonl", "--epochs", "2", "--seed", "11", "--out-dir", "m"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("seed: 11\n"));
    let models = ergokit::io::load_model_dir(&dir.path().join("m")).unwrap();
    assert_eq!(models.len(), 2);
    assert_eq!(models.get(AngleName::NT).unwrap().training_meta.epochs, 2);
    assert_eq!(load_dataset(&dir.path().join("d.jsonl")).unwrap().len(), 40);
}
