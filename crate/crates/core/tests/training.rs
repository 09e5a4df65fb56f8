use ctt_core::experiment::{
    run_comparison, run_cross_validation, run_training, ExperimentConfig, Profile, Scheme, Variant,
};
use ctt_core::model::ModelConfig;

/// Tiny model and data so each run takes well under a second.
fn tiny() -> ExperimentConfig {
    let mut cfg = Profile::Desk.defaults();
    cfg.model = ModelConfig { image_size: [32, 32], channels: vec![2, 2, 4, 8], downsample_factor: 16, token_dim: 8, ..ModelConfig::micro() };
    cfg.data.synthetic.count = 12;
    cfg.data.synthetic.image_size = [32, 32];
    cfg.optimizer.iterations = 12;
    cfg.optimizer.batch_size = 4;
    cfg.optimizer.eval_interval = 4;
    cfg
}

#[test]
fn same_seed_same_checkpoint() {
    let cfg = tiny();
    let a = run_training(&cfg).unwrap();
    let b = run_training(&cfg).unwrap();
    assert_eq!(a.last.params().tensors(), b.last.params().tensors());
    assert_eq!(a.history, b.history);
    let mut other = cfg.clone();
    other.seed = 1;
    assert_ne!(run_training(&other).unwrap().history.records, a.history.records);
}

#[test]
fn zero_lambda_matches_disabled_auxiliary_loss() {
    let mut zero = tiny();
    zero.loss.lambda = 0.0;
    let mut off = tiny();
    off.loss.acl_enabled = false;
    let a = run_training(&zero).unwrap();
    let b = run_training(&off).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.last.params().tensors(), b.last.params().tensors());
}

#[test]
fn history_is_monotone_and_finite() {
    let t = run_training(&tiny()).unwrap();
    for (i, r) in t.history.records.iter().enumerate() {
        assert_eq!(r.iteration, i);
        assert!(r.l_reg.is_finite() && r.l_cls.is_finite() && r.l_tot.is_finite());
    }
    assert_eq!(t.history.evals.len(), 3);
    assert!(t.history.to_csv().starts_with("iteration,l_reg,l_cls,l_tot,lr\n"));
}

#[test]
fn two_fold_smoke_on_four_samples() {
    let mut cfg = tiny();
    cfg.data.synthetic.count = 4;
    cfg.evaluation.k = 2;
    cfg.data.validation_fraction = 0.0;
    let report = run_cross_validation(&cfg).unwrap();
    assert_eq!(report.folds.len(), 2);
    assert!(report.folds.iter().all(|f| f.n_test == 2));
}

#[test]
fn comparison_rows_consume_same_data() {
    let mut cfg = tiny();
    cfg.evaluation.scheme = Scheme::Holdout;
    cfg.comparison.seeds = vec![0, 1];
    cfg.comparison.rows = vec![Variant::SingleHor, Variant::Cta, Variant::CtaPvaAcl, Variant::FullAttention];
    let report = run_comparison(&cfg).unwrap();
    assert_eq!(report.rows.len(), 4);
    for seed in 0..2 {
        let hashes: Vec<_> = report.rows.iter().map(|r| &r.seeds[seed].data_hashes).collect();
        assert!(hashes.windows(2).all(|w| w[0] == w[1]));
    }
    assert_ne!(report.rows[0].seeds[0].data_hashes, report.rows[0].seeds[1].data_hashes);
    let text = report.to_text();
    assert!(text.contains("CTA+PVA+ACL") && text.contains("0.144"));
    let row = report.row(Variant::Cta).unwrap();
    assert!(row.mean.mae.is_finite() && row.mean.rmse.is_finite());
}
