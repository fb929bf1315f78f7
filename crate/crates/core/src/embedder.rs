//! Transformer encoder (descriptor tokens to embedding matrix) and decoder
//! (embedding matrix to SMILES tokens).
//!
//! Pre-norm blocks, fixed sinusoidal positions, PAD keys masked in encoder
//! self-attention, causal decoder self-attention, and decoder
//! cross-attention over every row of the embedding matrix so that generated
//! matrices decode the same way as encoded ones.

use std::fmt::Write as _;

use molrange_nn::layers::{uniform, BatchNorm, LayerNorm, Linear};
use molrange_nn::{Binding, Checkpoint, Graph, Optimizer, OptimizerKind, ParamId, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::{SourceSequence, TargetSequence, BOS, EOS, PAD};
use crate::{Error, Result};

const MASKED: f64 = -1e9;
const CHECKPOINT_KIND: &str = "embedder";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Layer,
    Batch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub l_src: usize,
    pub l_tgt: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub norm: NormKind,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// Evaluate exact match every this many epochs (and on the last one).
    pub eval_every: usize,
    /// Stop once training exact match reaches this rate.
    pub target_exact_match: Option<f64>,
}

impl EmbedderConfig {
    /// Six layers, eight heads, width 512, dropout 0.1, batch-norm before
    /// attention, Adam(0.1, 0.99).
    pub fn paper(src_vocab: usize, tgt_vocab: usize) -> Self {
        Self {
            layers: 6,
            heads: 8,
            model_dim: 512,
            ff_dim: 2048,
            dropout: 0.1,
            l_src: 150,
            l_tgt: 74,
            src_vocab,
            tgt_vocab,
            norm: NormKind::Batch,
            optimizer: OptimizerKind::adam(1e-4, 0.1, 0.99),
            epochs: 15,
            batch_size: 32,
            eval_every: 1,
            target_exact_match: None,
        }
    }

    pub fn desk(src_vocab: usize, tgt_vocab: usize) -> Self {
        Self {
            layers: 2,
            heads: 4,
            model_dim: 64,
            ff_dim: 128,
            dropout: 0.0,
            l_src: 150,
            l_tgt: 74,
            src_vocab,
            tgt_vocab,
            norm: NormKind::Layer,
            optimizer: OptimizerKind::adam(2e-3, 0.9, 0.99),
            epochs: 300,
            batch_size: 16,
            eval_every: 5,
            target_exact_match: Some(0.95),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return bad("embedder.model_dim must be divisible by embedder.heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("embedder.dropout must lie in [0, 1)");
        }
        if self.layers == 0 || self.ff_dim == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return bad("embedder sizes must be positive");
        }
        if self.l_tgt < 2 || self.l_src == 0 || self.src_vocab <= PAD as usize || self.tgt_vocab <= EOS as usize {
            return bad("embedder sequence lengths or vocabularies too small");
        }
        Ok(())
    }

    fn meta(&self) -> Tensor {
        Tensor::from_vec(
            [
                self.layers,
                self.heads,
                self.model_dim,
                self.ff_dim,
                self.l_src,
                self.l_tgt,
                self.src_vocab,
                self.tgt_vocab,
                usize::from(self.norm == NormKind::Batch),
            ]
            .iter()
            .map(|&v| v as f64)
            .collect(),
        )
    }
}

#[derive(Debug, Clone)]
enum Norm {
    Layer(LayerNorm),
    Batch(BatchNorm),
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, dim: usize, kind: NormKind) -> Self {
        match kind {
            NormKind::Layer => Norm::Layer(LayerNorm::new(store, name, dim)),
            NormKind::Batch => Norm::Batch(BatchNorm::new(store, name, dim, 2)),
        }
    }

    fn forward<'g>(&self, p: &Binding<'g>, x: Var<'g>, train: bool) -> Result<Var<'g>> {
        Ok(match self {
            Norm::Layer(n) => n.forward(p, x)?,
            Norm::Batch(n) => n.forward(p, x, train)?,
        })
    }
}

#[derive(Debug, Clone)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl Attention {
    fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, true, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, true, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, true, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, true, rng),
            heads,
        }
    }

    fn split<'g>(&self, x: Var<'g>) -> Result<Var<'g>> {
        let s = x.shape();
        let (b, l, d) = (s[0], s[1], s[2]);
        let h = self.heads;
        Ok(x.reshape(&[b, l, h, d / h])?
            .transpose(1, 2)?
            .reshape(&[b * h, l, d / h])?)
    }

    /// Returns the output `[B, Lq, d]` and the weights `[B*h, Lq, Lk]`.
    /// `mask` is additive and must broadcast against the weights.
    fn forward<'g>(
        &self,
        p: &Binding<'g>,
        xq: Var<'g>,
        xkv: Var<'g>,
        mask: Option<Var<'g>>,
    ) -> Result<(Var<'g>, Var<'g>)> {
        let s = xq.shape();
        let (b, lq, d) = (s[0], s[1], s[2]);
        let h = self.heads;
        let q = self.split(self.q.forward(p, xq)?)?;
        let k = self.split(self.k.forward(p, xkv)?)?;
        let v = self.split(self.v.forward(p, xkv)?)?;
        let mut scores = q.matmul(k.transpose(1, 2)?)?.scale(1.0 / ((d / h) as f64).sqrt());
        if let Some(m) = mask {
            scores = scores.add(m)?;
        }
        let weights = scores.softmax(2)?;
        let ctx = weights
            .matmul(v)?
            .reshape(&[b, h, lq, d / h])?
            .transpose(1, 2)?
            .reshape(&[b, lq, d])?;
        Ok((self.o.forward(p, ctx)?, weights))
    }
}

#[derive(Debug, Clone)]
struct FeedForward {
    a: Linear,
    b: Linear,
}

impl FeedForward {
    fn new(store: &mut ParamStore, name: &str, d: usize, ff: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            a: Linear::new(store, &format!("{name}.ff1"), d, ff, true, rng),
            b: Linear::new(store, &format!("{name}.ff2"), ff, d, true, rng),
        }
    }

    fn forward<'g>(&self, p: &Binding<'g>, x: Var<'g>) -> Result<Var<'g>> {
        Ok(self.b.forward(p, self.a.forward(p, x)?.relu())?)
    }
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    norm1: Norm,
    attn: Attention,
    norm2: Norm,
    ff: FeedForward,
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    norm1: Norm,
    self_attn: Attention,
    norm2: Norm,
    cross_attn: Attention,
    norm3: Norm,
    ff: FeedForward,
}

/// Per-forward-pass settings.
struct Pass<'r> {
    train: bool,
    rng: Option<&'r mut ChaCha8Rng>,
}

impl Pass<'_> {
    fn eval() -> Self {
        Pass { train: false, rng: None }
    }

    fn dropout<'g>(&mut self, x: Var<'g>, p: f64) -> Result<Var<'g>> {
        match (&mut self.rng, self.train && p > 0.0) {
            (Some(rng), true) => Ok(x.dropout(p, true, *rng)?),
            _ => Ok(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Embedder {
    pub cfg: EmbedderConfig,
    pub params: ParamStore,
    src_emb: ParamId,
    tgt_emb: ParamId,
    encoder: Vec<EncoderBlock>,
    enc_norm: Norm,
    decoder: Vec<DecoderBlock>,
    dec_norm: Norm,
    out: Linear,
}

/// Sinusoidal position table `[len, d]`.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((i - i % 2) as f64 / d as f64);
            let angle = pos as f64 * freq;
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(&[len, d], data).expect("table shape")
}

fn ids_usize(rows: &[&[u32]]) -> Vec<usize> {
    rows.iter().flat_map(|r| r.iter().map(|&t| t as usize)).collect()
}

impl Embedder {
    pub fn new(cfg: EmbedderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.model_dim;
        let bound = (3.0 / d as f64).sqrt();
        let src_emb = store.add("src_embedding", uniform(&[cfg.src_vocab, d], bound, &mut rng));
        let tgt_emb = store.add("tgt_embedding", uniform(&[cfg.tgt_vocab, d], bound, &mut rng));
        let encoder = (0..cfg.layers)
            .map(|l| {
                let n = format!("enc{l}");
                EncoderBlock {
                    norm1: Norm::new(&mut store, &format!("{n}.norm1"), d, cfg.norm),
                    attn: Attention::new(&mut store, &format!("{n}.attn"), d, cfg.heads, &mut rng),
                    norm2: Norm::new(&mut store, &format!("{n}.norm2"), d, cfg.norm),
                    ff: FeedForward::new(&mut store, &n, d, cfg.ff_dim, &mut rng),
                }
            })
            .collect();
        let enc_norm = Norm::new(&mut store, "enc.norm", d, cfg.norm);
        let decoder = (0..cfg.layers)
            .map(|l| {
                let n = format!("dec{l}");
                DecoderBlock {
                    norm1: Norm::new(&mut store, &format!("{n}.norm1"), d, cfg.norm),
                    self_attn: Attention::new(&mut store, &format!("{n}.self"), d, cfg.heads, &mut rng),
                    norm2: Norm::new(&mut store, &format!("{n}.norm2"), d, cfg.norm),
                    cross_attn: Attention::new(&mut store, &format!("{n}.cross"), d, cfg.heads, &mut rng),
                    norm3: Norm::new(&mut store, &format!("{n}.norm3"), d, cfg.norm),
                    ff: FeedForward::new(&mut store, &n, d, cfg.ff_dim, &mut rng),
                }
            })
            .collect();
        let dec_norm = Norm::new(&mut store, "dec.norm", d, cfg.norm);
        let out = Linear::new(&mut store, "out", d, cfg.tgt_vocab, true, &mut rng);
        Ok(Self {
            cfg,
            params: store,
            src_emb,
            tgt_emb,
            encoder,
            enc_norm,
            decoder,
            dec_norm,
            out,
        })
    }

    fn embed<'g>(&self, p: &Binding<'g>, table: ParamId, rows: &[&[u32]]) -> Result<Var<'g>> {
        let g = p.var(table).graph();
        let (b, l, d) = (rows.len(), rows[0].len(), self.cfg.model_dim);
        let x = g
            .embedding(p.var(table), &ids_usize(rows))?
            .reshape(&[b, l, d])?
            .scale((d as f64).sqrt());
        Ok(x.add(g.constant(positional_encoding(l, d)))?)
    }

    /// Encoder over `rows` (equal lengths); `key_pad[b][j]` masks key `j`.
    fn encode_graph<'g>(
        &self,
        p: &Binding<'g>,
        rows: &[&[u32]],
        key_pad: &[Vec<bool>],
        pass: &mut Pass<'_>,
        weights_out: Option<&mut Vec<Tensor>>,
    ) -> Result<Var<'g>> {
        let g = p.var(self.src_emb).graph();
        let (b, l, h) = (rows.len(), rows[0].len(), self.cfg.heads);
        let mut mask = Vec::with_capacity(b * h * l);
        for pads in key_pad {
            for _ in 0..h {
                mask.extend(pads.iter().map(|&m| if m { MASKED } else { 0.0 }));
            }
        }
        let mask = g.constant(Tensor::new(&[b * h, 1, l], mask)?);
        let mut x = self.embed(p, self.src_emb, rows)?;
        x = pass.dropout(x, self.cfg.dropout)?;
        let mut weights = Vec::new();
        for blk in &self.encoder {
            let n = blk.norm1.forward(p, x, pass.train)?;
            let (a, w) = blk.attn.forward(p, n, n, Some(mask))?;
            weights.push(w);
            x = x.add(pass.dropout(a, self.cfg.dropout)?)?;
            let n = blk.norm2.forward(p, x, pass.train)?;
            let f = blk.ff.forward(p, n)?;
            x = x.add(pass.dropout(f, self.cfg.dropout)?)?;
        }
        if let Some(out) = weights_out {
            out.extend(weights.iter().map(|w| w.value()));
        }
        self.enc_norm.forward(p, x, pass.train)
    }

    /// Decoder logits `[B, T, V]` for input tokens `rows` (equal lengths T).
    fn decode_graph<'g>(
        &self,
        p: &Binding<'g>,
        memory: Var<'g>,
        rows: &[&[u32]],
        pass: &mut Pass<'_>,
    ) -> Result<Var<'g>> {
        let g = memory.graph();
        let t = rows[0].len();
        let mut causal = vec![0.0; t * t];
        for i in 0..t {
            for j in i + 1..t {
                causal[i * t + j] = MASKED;
            }
        }
        let causal = g.constant(Tensor::new(&[1, t, t], causal)?);
        let mut x = self.embed(p, self.tgt_emb, rows)?;
        x = pass.dropout(x, self.cfg.dropout)?;
        for blk in &self.decoder {
            let n = blk.norm1.forward(p, x, pass.train)?;
            let (a, _) = blk.self_attn.forward(p, n, n, Some(causal))?;
            x = x.add(pass.dropout(a, self.cfg.dropout)?)?;
            let n = blk.norm2.forward(p, x, pass.train)?;
            let (c, _) = blk.cross_attn.forward(p, n, memory, None)?;
            x = x.add(pass.dropout(c, self.cfg.dropout)?)?;
            let n = blk.norm3.forward(p, x, pass.train)?;
            let f = blk.ff.forward(p, n)?;
            x = x.add(pass.dropout(f, self.cfg.dropout)?)?;
        }
        let x = self.dec_norm.forward(p, x, pass.train)?;
        Ok(self.out.forward(p, x)?)
    }

    fn check_src(&self, src: &[SourceSequence]) -> Result<()> {
        for s in src {
            if s.tokens.len() != self.cfg.l_src || s.tokens.iter().any(|&t| t as usize >= self.cfg.src_vocab) {
                return Err(molrange_nn::NnError::ShapeMismatch {
                    lhs: vec![s.tokens.len()],
                    rhs: vec![self.cfg.l_src],
                    context: "source sequence",
                }
                .into());
            }
        }
        Ok(())
    }

    fn check_memory(&self, emb: &[Tensor]) -> Result<()> {
        let want = [self.cfg.l_src, self.cfg.model_dim];
        for e in emb {
            if e.shape() != want {
                return Err(molrange_nn::NnError::ShapeMismatch {
                    lhs: e.shape().to_vec(),
                    rhs: want.to_vec(),
                    context: "embedding matrix",
                }
                .into());
            }
        }
        Ok(())
    }

    /// Embedding matrices `[L_src, d]`, one per source sequence.
    pub fn encode_batch(&self, src: &[SourceSequence]) -> Result<Vec<Tensor>> {
        self.check_src(src)?;
        let mut out = Vec::with_capacity(src.len());
        for chunk in src.chunks(self.cfg.batch_size.max(1)) {
            let rows: Vec<&[u32]> = chunk.iter().map(|s| s.tokens.as_slice()).collect();
            let pads: Vec<Vec<bool>> = chunk.iter().map(|s| s.tokens.iter().map(|&t| t == PAD).collect()).collect();
            let g = Graph::new();
            let p = self.params.bind_frozen(&g);
            let x = self.encode_graph(&p, &rows, &pads, &mut Pass::eval(), None)?.value();
            out.extend(split_batch(&x)?);
        }
        Ok(out)
    }

    pub fn encode(&self, src: &SourceSequence) -> Result<Tensor> {
        Ok(self.encode_batch(std::slice::from_ref(src))?.remove(0))
    }

    /// Encoder output for explicit tokens and key mask, plus the attention
    /// weights of every layer. Used to inspect masking.
    pub fn encode_masked(&self, tokens: &[u32], key_pad: &[bool]) -> Result<(Tensor, Vec<Tensor>)> {
        let g = Graph::new();
        let p = self.params.bind_frozen(&g);
        let mut weights = Vec::new();
        let x = self.encode_graph(&p, &[tokens], &[key_pad.to_vec()], &mut Pass::eval(), Some(&mut weights))?;
        Ok((x.value().reshaped(&[tokens.len(), self.cfg.model_dim])?, weights))
    }

    /// Teacher-forced logits `[B, L_tgt, V]`; position t scores token t+1.
    pub fn decode_train(&self, emb: &[Tensor], tgt: &[TargetSequence]) -> Result<Tensor> {
        self.check_memory(emb)?;
        let g = Graph::new();
        let p = self.params.bind_frozen(&g);
        let memory = stack(&g, emb)?;
        let rows: Vec<&[u32]> = tgt.iter().map(|t| t.tokens.as_slice()).collect();
        Ok(self.decode_graph(&p, memory, &rows, &mut Pass::eval())?.value())
    }

    /// Mean NLL over non-PAD next-token targets, evaluated without dropout.
    pub fn sequence_nll(&self, emb: &[Tensor], tgt: &[TargetSequence]) -> Result<f64> {
        let logits = self.decode_train(emb, tgt)?;
        let g = Graph::new();
        let rows: Vec<&[u32]> = tgt.iter().map(|t| t.tokens.as_slice()).collect();
        let (loss, _) = nll(g.constant(logits), &rows)?;
        Ok(loss.item())
    }

    /// Autoregressive argmax decoding from BOS until EOS or `L_tgt`.
    pub fn greedy_decode(&self, emb: &[Tensor]) -> Result<Vec<TargetSequence>> {
        self.check_memory(emb)?;
        let mut out = Vec::with_capacity(emb.len());
        for chunk in emb.chunks(self.cfg.batch_size.max(1)) {
            out.extend(self.greedy_chunk(chunk)?);
        }
        Ok(out)
    }

    fn greedy_chunk(&self, emb: &[Tensor]) -> Result<Vec<TargetSequence>> {
        let b = emb.len();
        let l = self.cfg.l_tgt;
        let v = self.cfg.tgt_vocab;
        let mut seqs: Vec<Vec<u32>> = vec![vec![BOS]; b];
        let mut done = vec![false; b];
        for t in 1..l {
            if done.iter().all(|&d| d) {
                break;
            }
            let g = Graph::new();
            let p = self.params.bind_frozen(&g);
            let memory = stack(&g, emb)?;
            let rows: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
            let logits = self.decode_graph(&p, memory, &rows, &mut Pass::eval())?.value();
            for (i, seq) in seqs.iter_mut().enumerate() {
                let token = if done[i] {
                    PAD
                } else {
                    let row = &logits.data()[(i * t + t - 1) * v..(i * t + t) * v];
                    argmax(row) as u32
                };
                if token == EOS {
                    done[i] = true;
                }
                seq.push(token);
            }
        }
        Ok(seqs
            .into_iter()
            .map(|mut s| {
                s.resize(l, PAD);
                TargetSequence { tokens: s }
            })
            .collect())
    }

    pub fn to_checkpoint(&self, optimizer: Option<&Optimizer>) -> Checkpoint {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND);
        ck.push("__meta__", self.cfg.meta());
        for (n, t) in self.params.named() {
            ck.push(n, t);
        }
        if let Some(o) = optimizer {
            for (n, t) in o.state_tensors(&self.params) {
                ck.push(n, t);
            }
        }
        ck
    }

    pub fn from_checkpoint(cfg: EmbedderConfig, ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::CheckpointMismatch(format!("kind {:?}", ck.kind)));
        }
        if ck.get("__meta__") != Some(&cfg.meta()) {
            return Err(Error::CheckpointMismatch("embedder configuration differs".into()));
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

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// `[B, L, d]` constant from per-sample `[L, d]` matrices.
fn stack<'g>(g: &'g Graph, xs: &[Tensor]) -> Result<Var<'g>> {
    let s = xs[0].shape().to_vec();
    let mut data = Vec::with_capacity(xs.len() * xs[0].numel());
    for x in xs {
        data.extend_from_slice(x.data());
    }
    let mut shape = vec![xs.len()];
    shape.extend(s);
    Ok(g.constant(Tensor::new(&shape, data)?))
}

fn split_batch(x: &Tensor) -> Result<Vec<Tensor>> {
    let s = x.shape();
    let per = s[1..].iter().product::<usize>();
    x.data()
        .chunks(per)
        .map(|c| Ok(Tensor::new(&s[1..], c.to_vec())?))
        .collect()
}

/// Mean next-token NLL over non-PAD targets and, per row, whether every
/// target up to EOS is the argmax.
fn nll<'g>(logits: Var<'g>, rows: &[&[u32]]) -> Result<(Var<'g>, Vec<bool>)> {
    let g = logits.graph();
    let s = logits.shape();
    let (b, t, v) = (s[0], s[1], s[2]);
    let logp = logits.log_softmax(2)?;
    let mut ids = vec![0usize; b * t];
    let mut mask = vec![0.0; b * t];
    let mut exact = vec![true; b];
    let lv = logits.value();
    for (r, row) in rows.iter().enumerate() {
        for pos in 0..t {
            let next = row.get(pos + 1).copied().unwrap_or(PAD);
            if next == PAD {
                continue;
            }
            ids[r * t + pos] = next as usize;
            mask[r * t + pos] = 1.0;
            let at = (r * t + pos) * v;
            if argmax(&lv.data()[at..at + v]) != next as usize {
                exact[r] = false;
            }
        }
    }
    let count = mask.iter().sum::<f64>().max(1.0);
    let picked = logp.pick(&ids)?;
    let loss = picked
        .mul(g.constant(Tensor::new(&[b, t], mask)?))?
        .sum()
        .scale(-1.0 / count);
    Ok((loss, exact))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: Option<f64>,
    pub exact_match: Option<f64>,
    pub val_exact_match: Option<f64>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut s = String::from("epoch,train_nll,val_nll,exact_match,val_exact_match\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            r.train_nll,
            opt(r.val_nll),
            opt(r.exact_match),
            opt(r.val_exact_match)
        );
    }
    s
}

pub struct TrainedEmbedder {
    pub model: Embedder,
    pub optimizer: Optimizer,
    pub history: Vec<EpochRecord>,
}

/// Length of the longest row prefix that still carries content.
fn content_len(rows: &[&TargetSequence]) -> usize {
    rows.iter().map(|r| r.content_len()).max().unwrap_or(1).max(2)
}

impl Embedder {
    /// One teacher-forced pass over `pairs` in the given order. With
    /// `optimizer` set, parameters are updated after every batch.
    fn run_epoch(
        &mut self,
        pairs: &[(&SourceSequence, &TargetSequence)],
        mut optimizer: Option<&mut Optimizer>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64)> {
        let train = optimizer.is_some();
        let (mut total, mut weight, mut exact) = (0.0, 0.0, 0usize);
        for batch in pairs.chunks(self.cfg.batch_size) {
            let src: Vec<&[u32]> = batch.iter().map(|(s, _)| s.tokens.as_slice()).collect();
            let pads: Vec<Vec<bool>> = batch.iter().map(|(s, _)| s.tokens.iter().map(|&t| t == PAD).collect()).collect();
            let tgts: Vec<&TargetSequence> = batch.iter().map(|(_, t)| *t).collect();
            let t = content_len(&tgts);
            let rows: Vec<&[u32]> = tgts.iter().map(|x| &x.tokens[..t]).collect();
            let tokens: f64 = tgts.iter().map(|x| (x.content_len() - 1) as f64).sum();

            let g = Graph::new();
            let p = if train { self.params.bind(&g) } else { self.params.bind_frozen(&g) };
            let mut pass = Pass {
                train,
                rng: Some(&mut *rng),
            };
            let memory = self.encode_graph(&p, &src, &pads, &mut pass, None)?;
            let dec_in: Vec<&[u32]> = rows.iter().map(|r| &r[..t - 1]).collect();
            let logits = self.decode_graph(&p, memory, &dec_in, &mut pass)?;
            let (loss, ex) = nll(logits, &rows)?;
            total += loss.item() * tokens;
            weight += tokens;
            exact += ex.iter().filter(|&&e| e).count();
            if let Some(opt) = optimizer.as_deref_mut() {
                g.backward(loss)?;
                self.params.absorb(&p);
                opt.step(&mut self.params);
                self.params.zero_grad();
            }
        }
        Ok((total / weight.max(1.0), exact as f64 / pairs.len().max(1) as f64))
    }

    /// Teacher-forced NLL and exact match in eval mode. Exact match under
    /// teacher forcing equals greedy-decode exact match: greedy decoding
    /// reproduces a sequence iff every next-token argmax along it is right.
    pub fn evaluate(&self, src: &[SourceSequence], tgt: &[TargetSequence]) -> Result<(f64, f64)> {
        let pairs: Vec<_> = src.iter().zip(tgt).collect();
        let mut copy = self.clone();
        copy.run_epoch(&pairs, None, &mut ChaCha8Rng::seed_from_u64(0))
    }
}

pub fn train_embedder(
    train: (&[SourceSequence], &[TargetSequence]),
    val: Option<(&[SourceSequence], &[TargetSequence])>,
    cfg: &EmbedderConfig,
    seed: u64,
) -> Result<TrainedEmbedder> {
    if train.0.is_empty() || train.0.len() != train.1.len() {
        return Err(Error::EmptyDataset);
    }
    let mut model = Embedder::new(cfg.clone(), seed)?;
    model.check_src(train.0)?;
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train.0.len()).collect();
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let pairs: Vec<_> = order.iter().map(|&i| (&train.0[i], &train.1[i])).collect();
        let (train_nll, _) = model.run_epoch(&pairs, Some(&mut optimizer), &mut rng)?;
        let evaluate = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let mut rec = EpochRecord {
            epoch,
            train_nll,
            val_nll: None,
            exact_match: None,
            val_exact_match: None,
        };
        if evaluate {
            rec.exact_match = Some(model.evaluate(train.0, train.1)?.1);
            if let Some((vs, vt)) = val {
                if !vs.is_empty() {
                    let (nll, em) = model.evaluate(vs, vt)?;
                    rec.val_nll = Some(nll);
                    rec.val_exact_match = Some(em);
                }
            }
        }
        log::info!(
            "embedder epoch {epoch}: nll {train_nll:.4} exact {:?}",
            rec.exact_match
        );
        let stop = matches!((rec.exact_match, cfg.target_exact_match), (Some(e), Some(t)) if e >= t);
        history.push(rec);
        if stop {
            break;
        }
    }
    Ok(TrainedEmbedder {
        model,
        optimizer,
        history,
    })
}

/// Fraction of `decoded` equal to `reference` up to and including EOS.
pub fn exact_match_rate(decoded: &[TargetSequence], reference: &[TargetSequence]) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    let same = decoded
        .iter()
        .zip(reference)
        .filter(|(a, b)| {
            let n = b.content_len();
            a.tokens.len() >= n && a.tokens[..n] == b.tokens[..n]
        })
        .count();
    same as f64 / reference.len() as f64
}
