use molrange_core::classifier::{
    precision_recall_f1, stratified_split, train_classifier, Classifier, ClassifierConfig,
};
use molrange_core::Error;
use molrange_nn::{Checkpoint, Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise(shape: &[usize], scale: f64, shift: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| shift + scale * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

/// Two Gaussian blobs of `[rows, cols]` matrices, alternating labels.
fn blobs(n: usize, rows: usize, cols: usize, seed: u64) -> (Vec<Tensor>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let emb = labels
        .iter()
        .map(|&l| noise(&[rows, cols], 0.5, if l { 0.5 } else { -0.5 }, &mut rng))
        .collect();
    (emb, labels)
}

#[test]
fn score_gradient_matches_finite_differences() {
    let cfg = ClassifierConfig::desk((12, 16));
    let model = Classifier::new(cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = noise(&[3, 12, 16], 1.0, 0.0, &mut rng);
    let w = noise(&[3], 1.0, 0.0, &mut rng);
    let eval = |x: &Tensor| -> f64 {
        let g = Graph::new();
        let p = model.params.bind_frozen(&g);
        let s = model.score(&p, g.constant(x.clone())).unwrap().value();
        s.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    let g = Graph::new();
    let p = model.params.bind_frozen(&g);
    let leaf = g.leaf(x.clone());
    let s = model.score(&p, leaf).unwrap();
    g.backward(s.mul(g.constant(w.clone())).unwrap().sum()).unwrap();
    let analytic = leaf.grad().unwrap();

    let h = 1e-5;
    let (mut diff, mut norm) = (0.0, 0.0f64);
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        diff += (analytic.data()[i] - numeric).powi(2);
        norm += numeric * numeric;
    }
    let rel = diff.sqrt() / norm.sqrt().max(analytic.data().iter().map(|a| a * a).sum::<f64>().sqrt());
    assert!(rel < 1e-3, "relative error {rel}");
}

#[test]
fn separable_embeddings_are_learned() {
    let (emb, labels) = blobs(64, 16, 16, 1);
    let mut cfg = ClassifierConfig::desk((16, 16));
    cfg.epochs = 200;
    cfg.train_fraction = 1.0;
    let t = train_classifier(&emb, &labels, &cfg, 2).unwrap();
    assert!(t.test_idx.is_empty() && t.test_metrics.is_none());
    let m = precision_recall_f1(&t.model.classify_batch(&emb).unwrap(), &labels).unwrap();
    assert!(m.accuracy >= 0.95, "training accuracy {}", m.accuracy);
    assert!(t.history.last().unwrap().train_loss < t.history[0].train_loss);
}

#[test]
fn held_out_metrics_are_reported() {
    let (emb, labels) = blobs(40, 8, 8, 4);
    let mut cfg = ClassifierConfig::desk((8, 8));
    cfg.channels = vec![4, 8];
    cfg.epochs = 30;
    let t = train_classifier(&emb, &labels, &cfg, 5).unwrap();
    assert_eq!(t.train_idx.len(), 32);
    assert_eq!(t.test_idx.len(), 8);
    let m = t.test_metrics.unwrap();
    assert_eq!(m.tp + m.fp + m.tn + m.fn_, 8);
}

#[test]
fn single_class_training_set_is_rejected() {
    let (emb, _) = blobs(6, 8, 8, 0);
    let cfg = ClassifierConfig::desk((8, 8));
    let r = train_classifier(&emb, &[true; 6], &cfg, 0);
    assert!(matches!(r, Err(Error::SingleClassDataset)));
    assert!(matches!(train_classifier(&[], &[], &cfg, 0), Err(Error::EmptyDataset)));
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = Classifier::new(ClassifierConfig::desk((8, 8)), 0).unwrap();
    assert!(model.classify(&Tensor::zeros(&[8, 9])).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let cfg = ClassifierConfig::desk((8, 8));
    let model = Classifier::new(cfg.clone(), 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.mrng");
    model.to_checkpoint().save(&path).unwrap();
    let back = Classifier::from_checkpoint(cfg, &Checkpoint::load(&path).unwrap()).unwrap();
    let (emb, _) = blobs(4, 8, 8, 3);
    assert_eq!(model.classify_batch(&emb).unwrap(), back.classify_batch(&emb).unwrap());
    let mut other = ClassifierConfig::desk((8, 8));
    other.channels = vec![8, 16];
    assert!(Classifier::from_checkpoint(other, &Checkpoint::load(&path).unwrap()).is_err());
}

proptest! {
    #[test]
    fn confusion_counts_match_brute_force(pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..60)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let m = precision_recall_f1(&scores, &labels).unwrap();
        let count = |pred: bool, truth: bool| pairs.iter().filter(|(s, l)| (*s >= 0.5) == pred && *l == truth).count();
        prop_assert_eq!(m.tp, count(true, true));
        prop_assert_eq!(m.fp, count(true, false));
        prop_assert_eq!(m.tn, count(false, false));
        prop_assert_eq!(m.fn_, count(false, true));
        prop_assert!((m.accuracy - (m.tp + m.tn) as f64 / pairs.len() as f64).abs() < 1e-15);
        if m.tp > 0 {
            let p = m.tp as f64 / (m.tp + m.fp) as f64;
            let r = m.tp as f64 / (m.tp + m.fn_) as f64;
            prop_assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        }
    }

    #[test]
    fn split_is_stratified_partition(labels in prop::collection::vec(any::<bool>(), 1..80), seed in any::<u64>()) {
        let (train, test) = stratified_split(&labels, 0.8, seed);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for class in [false, true] {
            let n = labels.iter().filter(|&&l| l == class).count();
            let k = train.iter().filter(|&&i| labels[i] == class).count();
            prop_assert_eq!(k, (n as f64 * 0.8).round() as usize);
        }
        prop_assert_eq!(stratified_split(&labels, 0.8, seed), (train, test));
    }
}
