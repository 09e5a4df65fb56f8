use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctt_core::experiment::Profile;
use ctt_core::model::ModelConfig;

fn ctt(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctt")).args(args).args(extra).output().unwrap()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut cfg = Profile::Desk.defaults();
    cfg.model = ModelConfig { image_size: [32, 32], downsample_factor: 16, channels: vec![2, 2, 4, 8], ..ModelConfig::micro() };
    cfg.data.synthetic.count = 10;
    cfg.data.synthetic.image_size = [32, 32];
    cfg.optimizer.iterations = 6;
    cfg.optimizer.batch_size = 4;
    cfg.optimizer.eval_interval = 3;
    cfg.evaluation.k = 2;
    cfg.output_dir = dir.join("out");
    let mut json: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    edit(&mut json);
    let path = dir.join("config.json");
    std::fs::write(&path, json.to_string()).unwrap();
    path
}

#[test]
fn synth_train_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = data.join("manifest.csv");
    let config = write_config(dir.path(), |j| j["data"]["manifest"] = manifest.to_str().unwrap().into());

    let out = ctt(&["synth-data", "-c"], &[&config, Path::new("-o"), &data]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(manifest.is_file());

    let run = dir.path().join("run");
    let out = ctt(&["train", "-c"], &[&config, Path::new("-o"), &run]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["history.csv", "checkpoint.json", "checkpoint_best.json", "metrics.json", "config.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("iteration,l_reg,l_cls,l_tot,lr"));
    assert_eq!(history.lines().count(), 7);

    let out = ctt(&["evaluate", "-c"], &[&config, Path::new("-o"), &run]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("evaluate/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["n"], 10);
}

#[test]
fn cross_validate_and_export_dist() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), |_| {});
    let out_dir = dir.path().join("cv");
    let out = ctt(&["cross-validate", "-c"], &[&config, Path::new("-o"), &out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.json", "predictions.csv", "dist.json", "dist.txt"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }

    let preds = dir.path().join("p.csv");
    std::fs::write(&preds, "id,pred,post_va\na,0.5,0.9\nb,0.3,0.2\nc,0.4,0.8\n").unwrap();
    let dist_dir = dir.path().join("dist");
    let out = ctt(&["export-dist", "-c"], &[&config, Path::new("-o"), &dist_dir, Path::new("--predictions"), &preds]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dist: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dist_dir.join("dist.json")).unwrap()).unwrap();
    assert_eq!(dist["high"]["count"], 2);
    assert_eq!(dist["low"]["count"], 1);
    assert!((dist["high"]["median"].as_f64().unwrap() - 0.4).abs() < 1e-12);
}

#[test]
fn gradcheck_subcommand_passes_on_small_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), |j| {
        // Narrower encoders leave whole channels dead, which puts biases on
        // the ReLU kink where central differences are meaningless.
        j["model"]["channels"] = serde_json::json!([2, 2, 4, 4]);
        j["model"]["token_dim"] = 16.into();
        j["model"]["layers"] = 1.into();
        j["model"]["cross_layer_start"] = 0.into();
    });
    let out = ctt(&["gradcheck", "--samples", "1", "-c"], &[&config]);
    assert!(out.status.success(), "{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |out: Output| out.status.code().unwrap();

    assert_eq!(code(ctt(&["no-such-command"], &[])), 64);
    assert_eq!(code(ctt(&["train", "-c"], &[&dir.path().join("missing.json")])), 66);

    let bad_key = write_config(dir.path(), |j| j["optimizer"]["momentum_typo"] = 0.5.into());
    assert_eq!(code(ctt(&["train", "-c"], &[&bad_key])), 2);

    let bad_value = write_config(dir.path(), |j| j["optimizer"]["lr"] = (-1.0).into());
    assert_eq!(code(ctt(&["train", "-c"], &[&bad_value])), 2);

    let missing = dir.path().join("nope.csv");
    let bad_data = write_config(dir.path(), |j| j["data"]["manifest"] = missing.to_str().unwrap().into());
    assert_eq!(code(ctt(&["train", "-c"], &[&bad_data])), 3);

    let diverge = write_config(dir.path(), |j| j["optimizer"]["lr"] = 1e12.into());
    assert_eq!(code(ctt(&["train", "-c"], &[&diverge])), 4);
}
