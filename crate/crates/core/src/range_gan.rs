//! Weight-clipped Wasserstein GAN over embedding matrices with a range
//! penalty on a differentiable property head.

use molrange_nn::layers::{Conv1d, Linear};
use molrange_nn::{
    clip_tensor, log_sigmoid, sigmoid, Binding, Checkpoint, Graph, Optimizer, OptimizerKind, ParamStore, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::classifier::{stack, Classifier};
use crate::{Error, Result};

const CHECKPOINT_KIND: &str = "gan";
const LEAK: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    pub y_lb: f64,
    pub y_ub: f64,
    pub phi: f64,
    pub lambda1: f64,
}

impl Default for RangeSpec {
    fn default() -> Self {
        Self {
            y_lb: 0.5,
            y_ub: 1.0,
            phi: 10.0,
            lambda1: 10.0,
        }
    }
}

impl RangeSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.y_lb < self.y_ub && self.phi > 0.0 && self.lambda1 >= 0.0;
        let finite = [self.y_lb, self.y_ub, self.phi, self.lambda1].iter().all(|v| v.is_finite());
        if ok && finite {
            Ok(())
        } else {
            Err(Error::Config(
                "range needs y_lb < y_ub, phi > 0 and lambda1 >= 0".into(),
            ))
        }
    }

    /// Strictly inside the range; a score on a bound is non-compliant.
    pub fn is_compliant(&self, y: f64) -> bool {
        (y - self.y_lb) * (y - self.y_ub) < 0.0
    }

    /// `ln(1 - exp(-phi (y_ub - y_lb)))`, the y-independent part of `ln p`.
    fn width_term(&self) -> f64 {
        (-(-self.phi * (self.y_ub - self.y_lb)).exp()).ln_1p()
    }
}

/// `p = sigma(phi (y - y_lb)) - sigma(phi (y - y_ub))`.
pub fn satisfaction_probability(y: f64, spec: &RangeSpec) -> f64 {
    sigmoid(spec.phi * (y - spec.y_lb)) - sigmoid(spec.phi * (y - spec.y_ub))
}

/// `ln p`, evaluated as `ln sigma(a) + ln sigma(-b) + ln(1 - e^{-(a - b)})`
/// so it stays finite far outside the range.
pub fn log_satisfaction(y: f64, spec: &RangeSpec) -> f64 {
    log_sigmoid(spec.phi * (y - spec.y_lb)) + log_sigmoid(-spec.phi * (y - spec.y_ub)) + spec.width_term()
}

/// The unsigned form `1/(1+e^{phi(y-y_lb)}) - 1/(1+e^{phi(y-y_ub)})`.
/// It is negative for every finite `y`, so this always reports the value
/// it would have fed into the logarithm.
pub fn satisfaction_probability_strict(y: f64, spec: &RangeSpec) -> Result<f64> {
    let p = sigmoid(-spec.phi * (y - spec.y_lb)) - sigmoid(-spec.phi * (y - spec.y_ub));
    if p > 0.0 {
        Ok(p)
    } else {
        Err(Error::NegativeProbability(p))
    }
}

/// Mean of `-ln p` over non-compliant scores; 0 when there are none.
pub fn range_loss(ys: &[f64], spec: &RangeSpec) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for &y in ys {
        if !spec.is_compliant(y) {
            sum -= log_satisfaction(y, spec);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Graph form of [`range_loss`] over scores `[B]`.
pub fn range_loss_var<'g>(y: Var<'g>, spec: &RangeSpec) -> Result<Var<'g>> {
    let g = y.graph();
    let values = y.value();
    let mask: Vec<f64> = values
        .data()
        .iter()
        .map(|&v| if spec.is_compliant(v) { 0.0 } else { 1.0 })
        .collect();
    let n: f64 = mask.iter().sum();
    if n == 0.0 {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    let len = mask.len();
    let a = y.add_scalar(-spec.y_lb).scale(spec.phi).log_sigmoid();
    let b = y.add_scalar(-spec.y_ub).scale(-spec.phi).log_sigmoid();
    let logp = a.add(b)?.add_scalar(spec.width_term());
    Ok(logp
        .mul(g.constant(Tensor::new(&[len], mask)?))?
        .sum()
        .scale(-1.0 / n))
}

/// `-mean(critic) + lambda1 * L_rng`; the range term is left out of the
/// graph entirely when `lambda1` is 0.
pub fn generator_objective<'g>(critic: Var<'g>, y: Var<'g>, spec: &RangeSpec) -> Result<Var<'g>> {
    let base = critic.mean().neg();
    if spec.lambda1 == 0.0 {
        return Ok(base);
    }
    base.add(range_loss_var(y, spec)?.scale(spec.lambda1)).map_err(Into::into)
}

/// `mean(D(fake)) - mean(D(real))`.
pub fn discriminator_objective<'g>(real: Var<'g>, fake: Var<'g>) -> Result<Var<'g>> {
    Ok(fake.mean().sub(real.mean())?)
}

/// A differentiable scalar property of each embedding in a batch.
pub trait PropertyHead {
    /// Scores `[B]` for embeddings `[B, rows, cols]`.
    fn score<'g>(&self, g: &'g Graph, emb: Var<'g>) -> Result<Var<'g>>;
}

impl PropertyHead for Classifier {
    fn score<'g>(&self, g: &'g Graph, emb: Var<'g>) -> Result<Var<'g>> {
        let p = self.params.bind_frozen(g);
        Classifier::score(self, &p, emb)
    }
}

/// Mean of all entries of each embedding.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanProperty;

impl PropertyHead for MeanProperty {
    fn score<'g>(&self, _g: &'g Graph, emb: Var<'g>) -> Result<Var<'g>> {
        let s = emb.shape();
        let n = s[1..].iter().product::<usize>();
        Ok(emb.reshape(&[s[0], n])?.mean_axis(1)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    /// Noise length; equals the embedding width.
    pub noise_dim: usize,
    /// Generator conv channels after the single noise channel.
    pub gen_channels: Vec<usize>,
    /// Critic conv channels after the embedding-width input channels.
    pub disc_channels: Vec<usize>,
    pub kernel: usize,
    pub clip: f64,
    pub critic_steps: usize,
    pub optimizer: OptimizerKind,
    /// `(rows, cols)` of a generated embedding.
    pub output: (usize, usize),
    pub generator_steps: usize,
    pub batch_size: usize,
}

impl GanConfig {
    /// Noise 1x512, five quadrupling conv layers to 1024x512, critic 512 to
    /// 16 channels over 150 rows, clip 0.1, SGD 0.001.
    pub fn paper() -> Self {
        Self {
            noise_dim: 512,
            gen_channels: vec![4, 16, 64, 256, 1024],
            disc_channels: vec![256, 128, 64, 32, 16],
            kernel: 3,
            clip: 0.1,
            critic_steps: 5,
            optimizer: OptimizerKind::Sgd { lr: 0.001 },
            output: (150, 512),
            generator_steps: 10_000,
            batch_size: 32,
        }
    }

    pub fn desk(output: (usize, usize)) -> Self {
        Self {
            noise_dim: output.1,
            gen_channels: vec![4, 16, 64],
            disc_channels: vec![32, 16, 8],
            kernel: 3,
            clip: 0.1,
            critic_steps: 5,
            optimizer: OptimizerKind::adam(1e-3, 0.5, 0.9),
            output,
            generator_steps: 300,
            batch_size: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.clip.is_nan() || self.clip <= 0.0 {
            return bad("gan.clip must be positive");
        }
        if self.critic_steps == 0 || self.batch_size == 0 {
            return bad("gan.critic_steps and gan.batch_size must be positive");
        }
        if self.noise_dim != self.output.1 {
            return bad("gan.noise_dim must equal the embedding width");
        }
        if self.gen_channels.is_empty() || self.disc_channels.is_empty() || self.kernel.is_multiple_of(2) {
            return bad("gan layer plans must be non-empty with an odd kernel");
        }
        Ok(())
    }

    fn meta(&self) -> Tensor {
        let mut v = vec![
            self.noise_dim as f64,
            self.kernel as f64,
            self.output.0 as f64,
            self.output.1 as f64,
            self.gen_channels.len() as f64,
        ];
        v.extend(self.gen_channels.iter().chain(&self.disc_channels).map(|&c| c as f64));
        Tensor::from_vec(v)
    }
}

/// Noise `[B, 1, noise_dim]` through a length-preserving conv1d chain, then a
/// linear map over the channel axis onto the embedding rows.
#[derive(Debug, Clone)]
pub struct Generator {
    pub params: ParamStore,
    convs: Vec<Conv1d>,
    proj: Linear,
    output: (usize, usize),
}

impl Generator {
    fn new(cfg: &GanConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut store = ParamStore::new();
        let mut c_in = 1;
        let pad = cfg.kernel / 2;
        let convs = cfg
            .gen_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let conv = Conv1d::new(&mut store, &format!("gen.conv{i}"), c_in, c, cfg.kernel, 1, pad, rng);
                c_in = c;
                conv
            })
            .collect();
        let proj = Linear::new(&mut store, "gen.proj", c_in, cfg.output.0, true, rng);
        Self {
            params: store,
            convs,
            proj,
            output: cfg.output,
        }
    }

    pub fn forward<'g>(&self, p: &Binding<'g>, noise: Var<'g>) -> Result<Var<'g>> {
        let b = noise.shape()[0];
        let mut x = noise.reshape(&[b, 1, self.output.1])?;
        for conv in &self.convs {
            x = conv.forward(p, x)?.leaky_relu(LEAK);
        }
        // [B, C, D] -> [B, D, C] -> [B, D, rows] -> [B, rows, D]
        let y = self.proj.forward(p, x.transpose(1, 2)?)?;
        Ok(y.transpose(1, 2)?)
    }

    /// Embeddings for the given noise rows.
    pub fn generate_from(&self, noise: &[Vec<f64>]) -> Result<Vec<Tensor>> {
        if noise.is_empty() {
            return Ok(Vec::new());
        }
        let g = Graph::new();
        let p = self.params.bind_frozen(&g);
        let data: Vec<f64> = noise.iter().flatten().copied().collect();
        let z = g.constant(Tensor::new(&[noise.len(), 1, self.output.1], data)?);
        let y = self.forward(&p, z)?.value();
        let per = self.output.0 * self.output.1;
        y.data()
            .chunks(per)
            .map(|c| Ok(Tensor::new(&[self.output.0, self.output.1], c.to_vec())?))
            .collect()
    }

    /// `n` embeddings from standard-normal noise drawn with `seed`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<Tensor>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = sample_noise(&mut rng, n, self.output.1);
        let mut out = Vec::with_capacity(n);
        for chunk in noise.chunks(64) {
            out.extend(self.generate_from(chunk)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub params: ParamStore,
    convs: Vec<Conv1d>,
    head: Linear,
}

impl Discriminator {
    fn new(cfg: &GanConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut store = ParamStore::new();
        let mut c_in = cfg.output.1;
        let pad = cfg.kernel / 2;
        let convs = cfg
            .disc_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let conv = Conv1d::new(&mut store, &format!("disc.conv{i}"), c_in, c, cfg.kernel, 1, pad, rng);
                c_in = c;
                conv
            })
            .collect();
        let head = Linear::new(&mut store, "disc.head", c_in * cfg.output.0, 1, true, rng);
        Self {
            params: store,
            convs,
            head,
        }
    }

    /// Critic scores `[B]` for embeddings `[B, rows, cols]`.
    pub fn forward<'g>(&self, p: &Binding<'g>, emb: Var<'g>) -> Result<Var<'g>> {
        let b = emb.shape()[0];
        let mut x = emb.transpose(1, 2)?;
        for conv in &self.convs {
            x = conv.forward(p, x)?.leaky_relu(LEAK);
        }
        let flat = x.shape()[1..].iter().product::<usize>();
        Ok(self.head.forward(p, x.reshape(&[b, flat])?)?.reshape(&[b])?)
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.params
            .ids()
            .filter(|&id| self.params.is_trainable(id))
            .map(|id| self.params.get(id).max_abs())
            .fold(0.0, f64::max)
    }

    fn clip(&mut self, bound: f64) {
        self.params.map_trainable(|_, t| clip_tensor(t, bound));
    }
}

fn sample_noise(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanStep {
    pub step: usize,
    pub wasserstein_estimate: f64,
    pub range_loss: f64,
    pub compliance_rate: f64,
    /// Largest critic weight magnitude after the last clip.
    pub max_critic_weight: f64,
    pub validity_rate: Option<f64>,
}

pub fn gan_history_csv(history: &[GanStep]) -> String {
    let mut s = String::from("step,wasserstein_estimate,range_loss,compliance_rate,validity_rate\n");
    for h in history {
        let v = h.validity_rate.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            h.step, h.wasserstein_estimate, h.range_loss, h.compliance_rate, v
        ));
    }
    s
}

pub struct TrainedGan {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub history: Vec<GanStep>,
}

fn batch_of(real: &[Tensor], rng: &mut ChaCha8Rng, n: usize) -> Result<Tensor> {
    let picks: Vec<Tensor> = (0..n).map(|_| real[rng.random_range(0..real.len())].clone()).collect();
    stack(&picks)
}

fn noise_tensor(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Result<Tensor> {
    let data = sample_noise(rng, n, dim).concat();
    Ok(Tensor::new(&[n, 1, dim], data)?)
}

pub fn train_gan(
    real: &[Tensor],
    head: &impl PropertyHead,
    cfg: &GanConfig,
    spec: &RangeSpec,
    seed: u64,
) -> Result<TrainedGan> {
    cfg.validate()?;
    spec.validate()?;
    if real.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let want = [cfg.output.0, cfg.output.1];
    if let Some(bad) = real.iter().find(|t| t.shape() != want) {
        return Err(molrange_nn::NnError::ShapeMismatch {
            lhs: bad.shape().to_vec(),
            rhs: want.to_vec(),
            context: "real embeddings",
        }
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = Generator::new(cfg, &mut rng);
    let mut disc = Discriminator::new(cfg, &mut rng);
    disc.clip(cfg.clip);
    let mut gen_opt = Optimizer::new(cfg.optimizer);
    let mut disc_opt = Optimizer::new(cfg.optimizer);
    let bsz = cfg.batch_size;
    let mut history = Vec::with_capacity(cfg.generator_steps);
    for step in 1..=cfg.generator_steps {
        let mut w_est = 0.0;
        for _ in 0..cfg.critic_steps {
            let xr = batch_of(real, &mut rng, bsz)?;
            let z = noise_tensor(&mut rng, bsz, cfg.noise_dim)?;
            let g = Graph::new();
            let gp = gen.params.bind_frozen(&g);
            let dp = disc.params.bind(&g);
            let fake = gen.forward(&gp, g.constant(z))?;
            let loss = discriminator_objective(disc.forward(&dp, g.constant(xr))?, disc.forward(&dp, fake)?)?;
            w_est = -loss.item();
            g.backward(loss)?;
            disc.params.absorb(&dp);
            disc_opt.step(&mut disc.params);
            disc.params.zero_grad();
            disc.clip(cfg.clip);
        }
        let z = noise_tensor(&mut rng, bsz, cfg.noise_dim)?;
        let g = Graph::new();
        let gp = gen.params.bind(&g);
        let dp = disc.params.bind_frozen(&g);
        let fake = gen.forward(&gp, g.constant(z))?;
        let critic = disc.forward(&dp, fake)?;
        let y = head.score(&g, fake)?;
        let loss = generator_objective(critic, y, spec)?;
        let ys = y.value();
        let compliance = ys.data().iter().filter(|&&v| spec.is_compliant(v)).count() as f64 / bsz as f64;
        g.backward(loss)?;
        gen.params.absorb(&gp);
        gen_opt.step(&mut gen.params);
        gen.params.zero_grad();
        let rec = GanStep {
            step,
            wasserstein_estimate: w_est,
            range_loss: range_loss(ys.data(), spec),
            compliance_rate: compliance,
            max_critic_weight: disc.max_abs_weight(),
            validity_rate: None,
        };
        if step % 50 == 0 || step == cfg.generator_steps {
            log::info!(
                "gan step {step}: w {:.4} rng {:.4} compliance {:.3}",
                rec.wasserstein_estimate,
                rec.range_loss,
                rec.compliance_rate
            );
        }
        history.push(rec);
    }
    Ok(TrainedGan {
        generator: gen,
        discriminator: disc,
        history,
    })
}

impl TrainedGan {
    pub fn to_checkpoint(&self, cfg: &GanConfig) -> Checkpoint {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND);
        ck.push("__meta__", cfg.meta());
        for (n, t) in self.generator.params.named().into_iter().chain(self.discriminator.params.named()) {
            ck.push(n, t);
        }
        ck
    }

    pub fn from_checkpoint(cfg: &GanConfig, ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::CheckpointMismatch(format!("kind {:?}", ck.kind)));
        }
        if ck.get("__meta__") != Some(&cfg.meta()) {
            return Err(Error::CheckpointMismatch("gan configuration differs".into()));
        }
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut generator = Generator::new(cfg, &mut rng);
        let mut discriminator = Discriminator::new(cfg, &mut rng);
        generator.params.load_named(&ck.tensors)?;
        discriminator.params.load_named(&ck.tensors)?;
        Ok(Self {
            generator,
            discriminator,
            history: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let s = RangeSpec::default();
        assert!((satisfaction_probability(0.75, &s) - 0.848_283_639_957_513).abs() < 1e-12);
        let unit = RangeSpec { y_lb: 0.0, ..s };
        assert!((satisfaction_probability(0.5, &unit) - 0.986_614_298_151_430).abs() < 1e-12);
        assert!((range_loss(&[0.3], &s) - 2.135).abs() < 1e-3);
        assert_eq!(range_loss(&[0.7, 0.9], &s), 0.0);
    }

    #[test]
    fn bounds_are_non_compliant() {
        let s = RangeSpec::default();
        assert!(!s.is_compliant(0.5));
        assert!(!s.is_compliant(1.0));
        assert!(s.is_compliant(0.5000001));
    }

    #[test]
    fn strict_form_is_rejected() {
        let s = RangeSpec::default();
        match satisfaction_probability_strict(0.75, &s) {
            Err(Error::NegativeProbability(p)) => assert!((p + 0.8483).abs() < 1e-4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_form_matches_direct_form() {
        let s = RangeSpec::default();
        for i in 0..200 {
            let y = -2.0 + i as f64 * 0.02;
            let direct = satisfaction_probability(y, &s).ln();
            assert!((log_satisfaction(y, &s) - direct).abs() < 1e-10, "{y}");
        }
        assert!(log_satisfaction(-200.0, &s).is_finite());
    }

    #[test]
    fn discriminator_objective_arithmetic() {
        let g = Graph::new();
        let r = g.constant(Tensor::from_vec(vec![1.0, 1.0]));
        let f = g.constant(Tensor::from_vec(vec![0.0, 0.0]));
        assert_eq!(discriminator_objective(r, f).unwrap().item(), -1.0);
    }

    #[test]
    fn generator_objective_adds_weighted_range_term() {
        let g = Graph::new();
        let critic = g.constant(Tensor::from_vec(vec![0.2, 0.4]));
        let s = RangeSpec::default();
        let compliant = g.constant(Tensor::from_vec(vec![0.7, 0.9]));
        assert!((generator_objective(critic, compliant, &s).unwrap().item() + 0.3).abs() < 1e-15);
        let mixed = g.constant(Tensor::from_vec(vec![0.7, 0.3]));
        let v = generator_objective(critic, mixed, &s).unwrap().item();
        assert!((v - (-0.3 + 10.0 * range_loss(&[0.3], &s))).abs() < 1e-12);
        let off = RangeSpec { lambda1: 0.0, ..s };
        assert_eq!(
            generator_objective(critic, mixed, &off).unwrap().item(),
            generator_objective(critic, compliant, &s).unwrap().item()
        );
    }

    #[test]
    fn generator_shape_and_seed() {
        let cfg = GanConfig::desk((6, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gen = Generator::new(&cfg, &mut rng);
        let a = gen.generate(3, 9).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|t| t.shape() == [6, 8]));
        assert_eq!(a, gen.generate(3, 9).unwrap());
        assert!(gen.generate(0, 9).unwrap().is_empty());
    }
}
