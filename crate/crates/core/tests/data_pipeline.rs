use ctt_core::data::{
    generate_synthetic, kfold_split, load_dataset, synthetic::planted_target, write_synthetic, SyntheticConfig,
};
use nalgebra::{DMatrix, DVector};

#[test]
fn same_seed_writes_identical_bytes() {
    let cfg = SyntheticConfig { count: 6, image_size: [16, 16], ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_synthetic(a.path(), &generate_synthetic(7, &cfg).unwrap()).unwrap();
    write_synthetic(b.path(), &generate_synthetic(7, &cfg).unwrap()).unwrap();
    let mut files: Vec<_> = walk(a.path());
    files.sort();
    assert!(files.len() > 10);
    for rel in files {
        assert_eq!(std::fs::read(a.path().join(&rel)).unwrap(), std::fs::read(b.path().join(&rel)).unwrap(), "{rel:?}");
    }
}

fn walk(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}

#[test]
fn least_squares_recovers_planted_weights() {
    let cfg = SyntheticConfig { count: 2000, image_size: [8, 8], ..Default::default() };
    let data = generate_synthetic(3, &cfg).unwrap();
    let n = data.len();
    let x = DMatrix::from_fn(n, 4, |i, j| match j {
        0 => data[i].u,
        1 => data[i].v,
        2 => data[i].sample.pre_va,
        _ => 1.0,
    });
    let y = DVector::from_iterator(n, data.iter().map(|s| s.sample.post_va));
    let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * y.clone())).unwrap();
    let resid = &y - &x * &beta;
    let sigma2 = resid.norm_squared() / (n - 4) as f64;
    let cov = (x.transpose() * &x).try_inverse().unwrap() * sigma2;
    for (j, want) in [0.4, 0.4, 0.3].into_iter().enumerate() {
        let se = cov[(j, j)].sqrt();
        assert!((beta[j] - want).abs() < 3.0 * se, "coef {j}: {} vs {want} (se {se})", beta[j]);
    }
}

#[test]
fn planted_target_is_clipped_to_range() {
    for &(u, v, pre, e) in &[(1.0, 1.0, 0.9, 0.5), (0.0, 0.0, 0.1, -0.5), (0.5, 0.5, 0.5, 0.0)] {
        let t = planted_target(u, v, pre, e);
        assert!((0.0..=1.5).contains(&t));
    }
}

#[test]
fn written_dataset_reloads_and_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig { count: 10, image_size: [32, 32], ..Default::default() };
    let manifest = write_synthetic(dir.path(), &generate_synthetic(1, &cfg).unwrap()).unwrap();
    let samples = load_dataset(&manifest, 16, 16).unwrap();
    assert_eq!(samples.len(), 10);
    assert_eq!(samples[0].hor.shape(), &[16, 16]);
    let folds = kfold_split(samples.len(), 5, 0).unwrap();
    assert!(folds.iter().all(|f| f.test.len() == 2));
}
