//! Binary property classifier over embedding matrices.
//!
//! The embedding is treated as a one-channel image. Each block applies
//! batch-norm, dropout and a strided conv2d with ReLU; the flattened feature
//! map goes through one linear unit and a sigmoid.

use molrange_nn::layers::{BatchNorm, Conv2d, Linear};
use molrange_nn::{conv_output_len, Binding, Checkpoint, Graph, Optimizer, OptimizerKind, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const CHECKPOINT_KIND: &str = "classifier";

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// Output channels per conv block; the input has one channel.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dropout: f64,
    pub optimizer: OptimizerKind,
    /// `(rows, cols)` of the embedding matrix.
    pub input: (usize, usize),
    pub epochs: usize,
    pub batch_size: usize,
    pub class_weighting: bool,
    pub train_fraction: f64,
}

impl ClassifierConfig {
    /// Seven 5x5 stride-2 blocks, 1 to 128 channels, dropout 0.85, SGD 0.001.
    pub fn paper(input: (usize, usize)) -> Self {
        Self {
            channels: vec![16, 32, 64, 128, 128, 128, 128],
            kernel: 5,
            stride: 2,
            padding: 2,
            dropout: 0.85,
            optimizer: OptimizerKind::Sgd { lr: 0.001 },
            input,
            epochs: 50,
            batch_size: 32,
            class_weighting: true,
            train_fraction: 0.8,
        }
    }

    pub fn desk(input: (usize, usize)) -> Self {
        Self {
            channels: vec![8, 16, 32],
            kernel: 5,
            stride: 2,
            padding: 2,
            dropout: 0.1,
            optimizer: OptimizerKind::adam(1e-3, 0.9, 0.999),
            input,
            epochs: 40,
            batch_size: 16,
            class_weighting: true,
            train_fraction: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("classifier.channels must be a non-empty list of positive counts");
        }
        if self.kernel == 0 || self.stride == 0 || self.batch_size == 0 {
            return bad("classifier kernel, stride and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("classifier.dropout must lie in [0, 1)");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad("classifier.train_fraction must lie in (0, 1]");
        }
        let (h, w) = self.output_hw();
        if h == 0 || w == 0 {
            return bad("classifier input too small for its conv stack");
        }
        Ok(())
    }

    /// Spatial size after every conv block.
    pub fn spatial_chain(&self) -> Vec<(usize, usize)> {
        let mut hw = self.input;
        let mut out = vec![hw];
        for _ in &self.channels {
            hw = (
                conv_output_len(hw.0, self.kernel, self.stride, self.padding),
                conv_output_len(hw.1, self.kernel, self.stride, self.padding),
            );
            out.push(hw);
        }
        out
    }

    pub fn output_hw(&self) -> (usize, usize) {
        *self.spatial_chain().last().expect("chain has the input")
    }

    fn meta(&self) -> Tensor {
        let mut v: Vec<f64> = vec![
            self.kernel as f64,
            self.stride as f64,
            self.padding as f64,
            self.input.0 as f64,
            self.input.1 as f64,
        ];
        v.extend(self.channels.iter().map(|&c| c as f64));
        Tensor::from_vec(v)
    }
}

#[derive(Debug, Clone)]
struct Block {
    norm: BatchNorm,
    conv: Conv2d,
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub cfg: ClassifierConfig,
    pub params: ParamStore,
    blocks: Vec<Block>,
    head: Linear,
}

impl Classifier {
    pub fn new(cfg: ClassifierConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut c_in = 1;
        let mut blocks = Vec::new();
        for (i, &c) in cfg.channels.iter().enumerate() {
            let k = cfg.kernel;
            blocks.push(Block {
                norm: BatchNorm::new(&mut store, &format!("block{i}.norm"), c_in, 1),
                conv: Conv2d::new(
                    &mut store,
                    &format!("block{i}.conv"),
                    c_in,
                    c,
                    (k, k),
                    (cfg.stride, cfg.stride),
                    (cfg.padding, cfg.padding),
                    &mut rng,
                ),
            });
            c_in = c;
        }
        let (h, w) = cfg.output_hw();
        let head = Linear::new(&mut store, "head", c_in * h * w, 1, true, &mut rng);
        Ok(Self {
            cfg,
            params: store,
            blocks,
            head,
        })
    }

    /// Logits `[B]` for embeddings `[B, rows, cols]`.
    pub fn logits<'g>(
        &self,
        p: &Binding<'g>,
        emb: Var<'g>,
        train: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'g>> {
        let s = emb.shape();
        let (rows, cols) = self.cfg.input;
        if s.len() != 3 || s[1] != rows || s[2] != cols {
            return Err(molrange_nn::NnError::ShapeMismatch {
                lhs: s,
                rhs: vec![0, rows, cols],
                context: "classifier input",
            }
            .into());
        }
        let b = s[0];
        let mut x = emb.reshape(&[b, 1, rows, cols])?;
        let mut rng = rng;
        for blk in &self.blocks {
            x = blk.norm.forward(p, x, train)?;
            if let (true, Some(r)) = (train && self.cfg.dropout > 0.0, rng.as_deref_mut()) {
                x = x.dropout(self.cfg.dropout, true, r)?;
            }
            x = blk.conv.forward(p, x)?.relu();
        }
        let flat = x.shape()[1..].iter().product::<usize>();
        let y = self.head.forward(p, x.reshape(&[b, flat])?)?;
        Ok(y.reshape(&[b])?)
    }

    /// Probability of the positive class `[B]` in eval mode; differentiable
    /// with respect to `emb`, parameters frozen.
    pub fn score<'g>(&self, p: &Binding<'g>, emb: Var<'g>) -> Result<Var<'g>> {
        Ok(self.logits(p, emb, false, None)?.sigmoid())
    }

    /// Probabilities for a batch of `[rows, cols]` matrices.
    pub fn classify_batch(&self, emb: &[Tensor]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(emb.len());
        for chunk in emb.chunks(self.cfg.batch_size.max(1)) {
            let g = Graph::new();
            let p = self.params.bind_frozen(&g);
            let x = g.constant(stack(chunk)?);
            out.extend_from_slice(self.score(&p, x)?.value().data());
        }
        Ok(out)
    }

    pub fn classify(&self, emb: &Tensor) -> Result<f64> {
        Ok(self.classify_batch(std::slice::from_ref(emb))?[0])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND);
        ck.push("__meta__", self.cfg.meta());
        for (n, t) in self.params.named() {
            ck.push(n, t);
        }
        ck
    }

    pub fn from_checkpoint(cfg: ClassifierConfig, ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::CheckpointMismatch(format!("kind {:?}", ck.kind)));
        }
        if ck.get("__meta__") != Some(&cfg.meta()) {
            return Err(Error::CheckpointMismatch("classifier configuration differs".into()));
        }
        let mut model = Self::new(cfg, 0)?;
        let tensors: Vec<(String, Tensor)> = ck
            .tensors
            .iter()
            .filter(|(n, _)| !n.starts_with("__"))
            .cloned()
            .collect();
        model.params.load_named(&tensors)?;
        Ok(model)
    }
}

pub(crate) fn stack(xs: &[Tensor]) -> Result<Tensor> {
    let s = xs.first().ok_or(Error::EmptyInput)?.shape().to_vec();
    let mut data = Vec::with_capacity(xs.len() * xs[0].numel());
    for x in xs {
        if x.shape() != s.as_slice() {
            return Err(molrange_nn::NnError::ShapeMismatch {
                lhs: x.shape().to_vec(),
                rhs: s,
                context: "stacking embeddings",
            }
            .into());
        }
        data.extend_from_slice(x.data());
    }
    let mut shape = vec![xs.len()];
    shape.extend(s);
    Ok(Tensor::new(&shape, data)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

/// Threshold `scores` at 0.5 and compare with `labels`.
pub fn precision_recall_f1(scores: &[f64], labels: &[bool]) -> Result<ClassMetrics> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= 0.5, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut degenerate = false;
    let mut ratio = |a: usize, b: usize| {
        if b == 0 {
            degenerate = true;
            0.0
        } else {
            a as f64 / b as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        degenerate = true;
        0.0
    };
    Ok(ClassMetrics {
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
        degenerate,
    })
}

/// Deterministic per-class split; each class contributes
/// `round(n_class * train_fraction)` members to the training side.
pub fn stratified_split(labels: &[bool], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

pub struct TrainedClassifier {
    pub model: Classifier,
    pub history: Vec<ClassifierEpoch>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// Held-out metrics; `None` when the test split is empty.
    pub test_metrics: Option<ClassMetrics>,
}

/// Weighted BCE on logits: `w * softplus(-z)` for positives, `w * softplus(z)`
/// for negatives, averaged by total weight.
fn bce<'g>(logits: Var<'g>, labels: &[bool], weights: (f64, f64)) -> Result<Var<'g>> {
    let g = logits.graph();
    let n = labels.len();
    let sign: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let w: Vec<f64> = labels.iter().map(|&l| if l { weights.1 } else { weights.0 }).collect();
    let total: f64 = w.iter().sum();
    let signed = logits.mul(g.constant(Tensor::new(&[n], sign)?))?;
    Ok(signed
        .log_sigmoid()
        .mul(g.constant(Tensor::new(&[n], w)?))?
        .sum()
        .scale(-1.0 / total))
}

pub fn train_classifier(
    emb: &[Tensor],
    labels: &[bool],
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<TrainedClassifier> {
    if emb.is_empty() || emb.len() != labels.len() {
        return Err(Error::EmptyDataset);
    }
    let (train_idx, test_idx) = stratified_split(labels, cfg.train_fraction, seed);
    let pos = train_idx.iter().filter(|&&i| labels[i]).count();
    let neg = train_idx.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassDataset);
    }
    let weights = if cfg.class_weighting {
        let n = train_idx.len() as f64;
        (n / (2.0 * neg as f64), n / (2.0 * pos as f64))
    } else {
        (1.0, 1.0)
    };
    let mut model = Classifier::new(cfg.clone(), seed)?;
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1a5);
    let mut order = train_idx.clone();
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            // Batch-norm needs more than one sample per channel.
            if batch.len() < 2 {
                continue;
            }
            let xs: Vec<Tensor> = batch.iter().map(|&i| emb[i].clone()).collect();
            let ys: Vec<bool> = batch.iter().map(|&i| labels[i]).collect();
            let g = Graph::new();
            let p = model.params.bind(&g);
            let logits = model.logits(&p, g.constant(stack(&xs)?), true, Some(&mut rng))?;
            let loss = bce(logits, &ys, weights)?;
            loss_sum += loss.item() * batch.len() as f64;
            correct += logits
                .value()
                .data()
                .iter()
                .zip(&ys)
                .filter(|(&z, &y)| (z >= 0.0) == y)
                .count();
            g.backward(loss)?;
            model.params.absorb(&p);
            opt.step(&mut model.params);
            model.params.zero_grad();
        }
        let n = order.len() as f64;
        log::info!("classifier epoch {epoch}: loss {:.4}", loss_sum / n);
        history.push(ClassifierEpoch {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
        });
    }
    let test_metrics = if test_idx.is_empty() {
        None
    } else {
        let xs: Vec<Tensor> = test_idx.iter().map(|&i| emb[i].clone()).collect();
        let ys: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
        Some(precision_recall_f1(&model.classify_batch(&xs)?, &ys)?)
    };
    Ok(TrainedClassifier {
        model,
        history,
        train_idx,
        test_idx,
        test_metrics,
    })
}

pub fn metrics_csv(m: &ClassMetrics) -> String {
    format!(
        "accuracy,precision,recall,f1,tp,fp,tn,fn,degenerate\n{},{},{},{},{},{},{},{},{}\n",
        m.accuracy, m.precision, m.recall, m.f1, m.tp, m.fp, m.tn, m.fn_, m.degenerate
    )
}
