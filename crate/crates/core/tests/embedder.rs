mod common;

use molrange_core::embedder::{exact_match_rate, train_embedder, Embedder, EmbedderConfig};
use molrange_core::encoding::{source_vocab_size, TargetSequence, BOS, EOS, PAD};
use molrange_nn::Checkpoint;

fn small_config(tgt_vocab: usize) -> EmbedderConfig {
    let mut cfg = EmbedderConfig::desk(source_vocab_size(2048), tgt_vocab);
    cfg.model_dim = 32;
    cfg.ff_dim = 64;
    cfg.heads = 4;
    cfg
}

#[test]
fn embeddings_have_source_by_model_shape() {
    let (src, _, vocab) = common::tokenized(3);
    let model = Embedder::new(small_config(vocab.len()), 1).unwrap();
    let emb = model.encode_batch(&src).unwrap();
    assert_eq!(emb.len(), 3);
    for e in &emb {
        assert_eq!(e.shape(), &[150, 32]);
        assert!(e.is_finite());
    }
}

#[test]
fn batching_does_not_change_embeddings() {
    let (src, _, vocab) = common::tokenized(5);
    let model = Embedder::new(small_config(vocab.len()), 2).unwrap();
    let together = model.encode_batch(&src).unwrap();
    for (s, e) in src.iter().zip(&together) {
        let alone = model.encode(s).unwrap();
        for (a, b) in alone.data().iter().zip(e.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn padded_keys_get_no_attention_and_do_not_leak() {
    let (src, _, vocab) = common::tokenized(1);
    let model = Embedder::new(small_config(vocab.len()), 3).unwrap();
    let tokens = src[0].tokens.clone();
    let n = src[0].content_len();
    assert!(n < tokens.len());
    let pad: Vec<bool> = tokens.iter().map(|&t| t == PAD).collect();
    let (base, weights) = model.encode_masked(&tokens, &pad).unwrap();
    for w in &weights {
        let l = tokens.len();
        for (k, row) in w.data().chunks(l).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if pad[j] {
                    assert!(v < 1e-12, "weight {v} on padded key {j} (row {k})");
                }
            }
        }
    }
    let mut scrambled = tokens.clone();
    for (i, t) in scrambled.iter_mut().enumerate().skip(n) {
        *t = 10 + i as u32;
    }
    let (other, _) = model.encode_masked(&scrambled, &pad).unwrap();
    let d = 32;
    for i in 0..n * d {
        assert!((base.data()[i] - other.data()[i]).abs() < 1e-12);
    }
}

#[test]
fn decoder_is_causal() {
    let (src, tgt, vocab) = common::tokenized(1);
    let model = Embedder::new(small_config(vocab.len()), 4).unwrap();
    let emb = model.encode_batch(&src).unwrap();
    let cut = 5;
    let mut altered = tgt[0].clone();
    for t in altered.tokens.iter_mut().skip(cut + 1) {
        *t = if *t == 4 { 5 } else { 4 };
    }
    let a = model.decode_train(&emb, &tgt[..1]).unwrap();
    let b = model.decode_train(&emb, std::slice::from_ref(&altered)).unwrap();
    let v = vocab.len();
    assert_eq!(a.shape(), &[1, 74, v]);
    for i in 0..=cut * v + v - 1 {
        assert!((a.data()[i] - b.data()[i]).abs() < 1e-12);
    }
    let later = (cut + 1) * v..(cut + 2) * v;
    assert!(a.data()[later.clone()].iter().zip(&b.data()[later]).any(|(x, y)| (x - y).abs() > 1e-9));
}

#[test]
fn untrained_model_scores_near_uniform() {
    let (src, tgt, vocab) = common::tokenized(8);
    let model = Embedder::new(small_config(vocab.len()), 5).unwrap();
    let emb = model.encode_batch(&src).unwrap();
    let nll = model.sequence_nll(&emb, &tgt).unwrap();
    let uniform = (vocab.len() as f64).ln();
    assert!((nll - uniform).abs() < 0.5 * uniform, "nll {nll} vs ln V {uniform}");
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let (src, _, vocab) = common::tokenized(2);
    let cfg = small_config(vocab.len());
    let model = Embedder::new(cfg.clone(), 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.mrng");
    model.to_checkpoint(None).save(&path).unwrap();
    let back = Embedder::from_checkpoint(cfg.clone(), &Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(model.encode_batch(&src).unwrap(), back.encode_batch(&src).unwrap());

    let mut other = cfg;
    other.layers = 1;
    assert!(Embedder::from_checkpoint(other, &Checkpoint::load(&path).unwrap()).is_err());
}

#[test]
fn greedy_decode_starts_with_bos_and_pads_after_eos() {
    let (src, _, vocab) = common::tokenized(3);
    let mut cfg = small_config(vocab.len());
    cfg.l_tgt = 12;
    let model = Embedder::new(cfg, 7).unwrap();
    let dec = model.greedy_decode(&model.encode_batch(&src).unwrap()).unwrap();
    for d in &dec {
        assert_eq!(d.tokens.len(), 12);
        assert_eq!(d.tokens[0], BOS);
        if let Some(e) = d.tokens.iter().position(|&t| t == EOS) {
            assert!(d.tokens[e + 1..].iter().all(|&t| t == PAD));
        }
    }
}

#[test]
fn training_is_deterministic_and_memorizes_a_few_molecules() {
    let (src, tgt, vocab) = common::tokenized(12);
    let mut cfg = small_config(vocab.len());
    cfg.epochs = 200;
    cfg.batch_size = 12;
    cfg.eval_every = 10;
    cfg.target_exact_match = Some(1.0);
    let a = train_embedder((&src, &tgt), None, &cfg, 11).unwrap();
    let first = a.history.first().unwrap().train_nll;
    let last = a.history.last().unwrap().train_nll;
    assert!(last < first * 0.2, "nll {first} -> {last}");
    let dec = a.model.greedy_decode(&a.model.encode_batch(&src).unwrap()).unwrap();
    assert!(exact_match_rate(&dec, &tgt) >= 0.9);

    cfg.epochs = 3;
    cfg.target_exact_match = None;
    let x = train_embedder((&src, &tgt), None, &cfg, 5).unwrap();
    let y = train_embedder((&src, &tgt), None, &cfg, 5).unwrap();
    assert_eq!(x.history, y.history);
    assert_eq!(x.model.encode(&src[0]).unwrap(), y.model.encode(&src[0]).unwrap());
}

#[test]
fn exact_match_ignores_tokens_after_eos() {
    let r = TargetSequence { tokens: vec![BOS, 5, EOS, PAD] };
    let d = TargetSequence { tokens: vec![BOS, 5, EOS, 7] };
    let w = TargetSequence { tokens: vec![BOS, 6, EOS, PAD] };
    assert_eq!(exact_match_rate(&[d, w], &[r.clone(), r]), 0.5);
}
