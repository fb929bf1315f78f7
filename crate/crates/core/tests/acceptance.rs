//! Acceptance criteria. Prints one line per criterion and exits non-zero if
//! any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p molrange-core --test acceptance -- 1 5`.

mod common;

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use molrange_core::chem::{canonical_smiles, parse_smiles, write_smiles, MolecularGraph};
use molrange_core::classifier::{Classifier, ClassifierConfig};
use molrange_core::descriptors::{compute_descriptors, wiener_and_diameter};
use molrange_core::embedder::{exact_match_rate, train_embedder, EmbedderConfig};
use molrange_core::encoding::source_vocab_size;
use molrange_core::fingerprints::{morgan_fingerprint, Fingerprint};
use molrange_core::metrics::{
    fingerprints_of, internal_diversity, internal_diversity_exact, novelty, property_compliance, uniqueness,
    validity, GenerationReport, PAIR_CAP,
};
use molrange_core::range_gan::{
    range_loss, range_loss_var, satisfaction_probability, train_gan, MeanProperty, PropertyHead, RangeSpec,
};
use molrange_nn::gradcheck::op_errors;
use molrange_nn::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// 1

/// `p` as a single fraction of exponentials.
fn oracle_p(y: f64, s: &RangeSpec) -> f64 {
    let ea = (-s.phi * (y - s.y_lb)).exp();
    let eb = (-s.phi * (y - s.y_ub)).exp();
    (eb - ea) / ((1.0 + ea) * (1.0 + eb))
}

fn range_loss_suite() -> Outcome {
    let s = RangeSpec::default();
    let p = satisfaction_probability(0.75, &s);
    // Symmetric about the midpoint, p = tanh(phi * w / 4).
    ensure((p - 1.25f64.tanh()).abs() < 1e-9, format!("p(0.75) = {p}"))?;
    ensure(format!("{p:.4}") == "0.8483", format!("p(0.75) = {p}"))?;
    let unit = RangeSpec {
        y_lb: 0.0,
        y_ub: 1.0,
        ..s
    };
    let q = satisfaction_probability(0.5, &unit);
    ensure((q - 2.5f64.tanh()).abs() < 1e-9, format!("p(0.5) = {q}"))?;
    ensure(format!("{q:.4}") == "0.9866", format!("p(0.5) = {q}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for batch in 0..1000 {
        let spec = if batch % 2 == 0 {
            s
        } else {
            let lb = rng.random_range(-1.0..1.0);
            RangeSpec {
                y_lb: lb,
                y_ub: lb + rng.random_range(0.1..1.0),
                phi: rng.random_range(1.0..20.0),
                lambda1: 10.0,
            }
        };
        let n = rng.random_range(1..64);
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let (mut total, mut count) = (0.0, 0);
        for &y in &ys {
            if !(y > spec.y_lb && y < spec.y_ub) {
                total -= oracle_p(y, &spec).ln();
                count += 1;
            }
        }
        let want = if count == 0 { 0.0 } else { total / count as f64 };
        worst = worst.max((range_loss(&ys, &spec) - want).abs());
    }
    ensure(worst < 1e-12, format!("brute-force gap {worst:e}"))?;

    for b in [s.y_lb, s.y_ub] {
        ensure(!s.is_compliant(b), format!("{b} counted as compliant"))?;
        let l = range_loss(&[b], &s);
        ensure((l + oracle_p(b, &s).ln()).abs() < 1e-12, format!("loss at bound {b} is {l}"))?;
    }
    let inside: Vec<f64> = (1..50).map(|i| 0.5 + i as f64 / 100.0).collect();
    ensure(range_loss(&inside, &s) == 0.0, "all-compliant batch has non-zero loss")?;
    Ok(format!("p(0.75)={p:.10} p(0.5)={q:.10} max gap {worst:.1e}"))
}

// 2

fn head_gradient_error(head: &impl PropertyHead, x: &Tensor, spec: &RangeSpec) -> f64 {
    let eval = |x: &Tensor| {
        let g = Graph::new();
        let y = head.score(&g, g.constant(x.clone())).unwrap();
        range_loss_var(y, spec).unwrap().item()
    };
    let g = Graph::new();
    let leaf = g.leaf(x.clone());
    g.backward(range_loss_var(head.score(&g, leaf).unwrap(), spec).unwrap()).unwrap();
    let analytic = leaf.grad().unwrap();
    let h = 1e-5;
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let a = analytic.data()[i];
        diff += (a - numeric) * (a - numeric);
        na += a * a;
        nn += numeric * numeric;
    }
    diff.sqrt() / f64::max(na, nn).sqrt().max(1e-300)
}

fn random_batch(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.5)).collect()).unwrap()
}

fn gradients() -> Outcome {
    let mut worst_op = ("", 0.0f64);
    for seed in 0..100 {
        for (name, err) in op_errors(seed) {
            ensure(err < 1e-4, format!("{name} seed {seed}: {err:e}"))?;
            if err > worst_op.1 {
                worst_op = (name, err);
            }
        }
    }
    let spec = RangeSpec::default();
    let mut worst_mean = 0.0f64;
    for seed in 0..10 {
        let err = head_gradient_error(&MeanProperty, &random_batch(&[6, 4, 5], seed), &spec);
        ensure(err < 1e-4, format!("range loss through mean: {err:e}"))?;
        worst_mean = worst_mean.max(err);
    }
    let narrow = RangeSpec {
        y_lb: 0.6,
        y_ub: 0.9,
        ..spec
    };
    let mut worst_clf = 0.0f64;
    for seed in 0..3 {
        let mut cfg = ClassifierConfig::desk((12, 16));
        cfg.channels = vec![4, 8];
        let head = Classifier::new(cfg, seed).unwrap();
        let err = head_gradient_error(&head, &random_batch(&[4, 12, 16], seed), &narrow);
        ensure(err < 1e-3, format!("range loss through classifier: {err:e}"))?;
        worst_clf = worst_clf.max(err);
    }

    let unit = RangeSpec {
        y_lb: 0.0,
        y_ub: 1.0,
        ..spec
    };
    let g = Graph::new();
    let y = g.leaf(Tensor::scalar(0.5));
    let a = y.add_scalar(-unit.y_lb).scale(unit.phi).sigmoid();
    let b = y.add_scalar(-unit.y_ub).scale(unit.phi).sigmoid();
    g.backward(a.sub(b).unwrap()).unwrap();
    let dp = y.grad().unwrap().item();
    let h = 1e-6;
    let fd = (satisfaction_probability(0.5 + h, &unit) - satisfaction_probability(0.5 - h, &unit)) / (2.0 * h);
    ensure(dp.abs() < 1e-3 && fd.abs() < 1e-3, format!("dp/dy at midpoint {dp:e} (fd {fd:e})"))?;
    Ok(format!(
        "ops max {:.1e} ({}), mean head {worst_mean:.1e}, classifier head {worst_clf:.1e}, dp/dy(mid) {dp:.1e}",
        worst_op.1, worst_op.0
    ))
}

// 3

fn toy_compliance(lambda1: f64, seed: u64, real: &[Tensor]) -> Result<f64, String> {
    let cfg = common::toy_gan_config(2000);
    let spec = RangeSpec {
        lambda1,
        ..RangeSpec::default()
    };
    let r = train_gan(real, &MeanProperty, &cfg, &spec, seed).map_err(|e| e.to_string())?;
    if let Some(h) = r.history.iter().find(|h| h.max_critic_weight > cfg.clip) {
        return Err(format!("critic weight {} above clip at step {}", h.max_critic_weight, h.step));
    }
    let samples = r.generator.generate(500, seed + 1000).map_err(|e| e.to_string())?;
    let ys: Vec<f64> = samples.iter().map(|t| t.data().iter().sum::<f64>() / t.numel() as f64).collect();
    property_compliance(&ys, &spec).map_err(|e| e.to_string())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn toy_selectivity() -> Outcome {
    let real = common::toy_real(256, 100);
    let base = real.iter().map(|t| t.data().iter().sum::<f64>() / 128.0).collect::<Vec<_>>();
    let base_rate = property_compliance(&base, &RangeSpec::default()).unwrap();
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in 1..=3 {
        with.push(toy_compliance(10.0, seed, &real)?);
        without.push(toy_compliance(0.0, seed, &real)?);
    }
    let (m1, m0) = (median(with.clone()), median(without.clone()));
    let detail = format!("lambda 10 {with:?} median {m1}, lambda 0 {without:?} median {m0}, real data {base_rate:.3}");
    ensure(m1 >= 0.9 && m0 <= 0.6, detail.clone())?;
    Ok(detail)
}

// 4

fn reconstruction() -> Outcome {
    let (src, tgt, vocab) = common::tokenized(200);
    let cfg = EmbedderConfig::desk(source_vocab_size(2048), vocab.len());
    ensure(cfg.epochs <= 300, "desk preset exceeds 300 epochs")?;
    let trained = train_embedder((&src, &tgt), None, &cfg, 1).map_err(|e| e.to_string())?;
    let emb = trained.model.encode_batch(&src).map_err(|e| e.to_string())?;
    let decoded = trained.model.greedy_decode(&emb).map_err(|e| e.to_string())?;
    let rate = exact_match_rate(&decoded, &tgt);
    let epochs = trained.history.len();
    let detail = format!("greedy exact match {rate:.3} after {epochs} epochs");
    ensure(rate >= 0.9, detail.clone())?;
    Ok(detail)
}

// 5

fn fingerprint_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bits_checked = 0;
    for i in 0..50 {
        let n = rng.random_range(1..=12);
        let m = common::random_molecule(n, &mut rng);
        let fp = morgan_fingerprint(&m, 2, 2048).map_err(|e| e.to_string())?;
        let want = common::brute_force_morgan(&m, 2, 2048);
        ensure(fp.on_bits() == want, format!("molecule {i} ({}) differs from oracle", write_smiles(&m)))?;
        bits_checked += want.len();
        for _ in 0..20 {
            let perm = common::random_perm(m.atom_count(), &mut rng);
            let q = morgan_fingerprint(&m.permuted(&perm), 2, 2048).map_err(|e| e.to_string())?;
            ensure(q == fp, format!("molecule {i} not permutation invariant"))?;
        }
    }
    Ok(format!("50 molecules, {bits_checked} on-bits, 1000 shuffles"))
}

// 6

fn canonicalization() -> Outcome {
    let mols = common::corpus_mols();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (i, m) in mols.iter().take(100).enumerate() {
        let c = canonical_smiles(m);
        for _ in 0..20 {
            let perm = common::random_perm(m.atom_count(), &mut rng);
            let other = canonical_smiles(&m.permuted(&perm));
            ensure(other == c, format!("molecule {i}: {c} vs {other}"))?;
        }
    }
    for (i, m) in mols.iter().enumerate() {
        let s = write_smiles(m);
        let back = parse_smiles(&s).map_err(|e| format!("molecule {i}: {s}: {e}"))?;
        ensure(common::isomorphic(m, &back), format!("molecule {i}: {s} not isomorphic"))?;
    }
    Ok(format!("100 x 20 permutations, {} round trips", mols.len()))
}

// 7

fn metrics_exactness() -> Outcome {
    let generated = [
        "CCO", "OCC", "c1ccccc1", "C(O)C", "CC(=O)O", "C(C", "CC(C)(C)(C)(C)C", "CCN", "N#N", "xyz",
    ];
    let valid = ["CCO", "OCC", "c1ccccc1", "C(O)C", "CC(=O)O", "CCN", "N#N"];
    let unique = ["CCO", "c1ccccc1", "CC(=O)O", "CCN", "N#N"];
    let training = ["CCO", "CCN", "CCCC"];
    let scores = [0.1, 0.5, 0.51, 0.75, 0.99, 1.0, 1.2, 0.7, 0.3, 0.6];
    let spec = RangeSpec::default();
    let e = |r: molrange_core::Result<f64>| r.map_err(|e| e.to_string());
    ensure(e(validity(&generated))? == 0.7, "validity")?;
    ensure(e(uniqueness(&valid))? == 5.0 / 7.0, "uniqueness")?;
    ensure(e(novelty(&unique, &training))? == 0.6, "novelty")?;
    ensure(e(property_compliance(&scores, &spec))? == 0.5, "compliance")?;

    let a = Fingerprint::from_bits(64, 2, &[0, 1]).unwrap();
    let b = Fingerprint::from_bits(64, 2, &[0, 2]).unwrap();
    let mixed: Vec<Fingerprint> = (0..10).map(|i| if i < 5 { a.clone() } else { b.clone() }).collect();
    let d = e(internal_diversity(&mixed, PAIR_CAP, 0))?;
    ensure((d - 17.0 / 27.0).abs() < 1e-15, format!("mixed diversity {d}"))?;
    let disjoint: Vec<Fingerprint> = (0..10).map(|i| Fingerprint::from_bits(64, 2, &[i]).unwrap()).collect();
    ensure(e(internal_diversity(&disjoint, PAIR_CAP, 0))? == 0.0, "disjoint diversity")?;

    let report =
        GenerationReport::compute(&generated, &scores, &["CCO"], &spec, 0).map_err(|e| e.to_string())?;
    ensure(report.validity == 0.7 && report.uniqueness == 5.0 / 7.0, "report validity/uniqueness")?;
    ensure(report.novelty == 0.8 && report.property_compliance == 0.5, "report novelty/compliance")?;

    let mols = common::corpus_mols();
    let fps = fingerprints_of(&mols[..10]).map_err(|e| e.to_string())?;
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..10 {
        for j in i + 1..10 {
            let (x, y) = (fps[i].on_bits(), fps[j].on_bits());
            let inter = x.iter().filter(|v| y.contains(v)).count();
            sum += inter as f64 / (x.len() + y.len() - inter) as f64;
            pairs += 1;
        }
    }
    let brute = sum / pairs as f64;
    let got = e(internal_diversity_exact(&fps))?;
    ensure((got - brute).abs() < 1e-12, format!("diversity {got} vs {brute}"))?;
    Ok(format!("fixed sets exact, corpus diversity {got:.6} = brute force"))
}

// 8

fn bfs_oracle(m: &MolecularGraph) -> (u64, u64) {
    let n = m.atom_count();
    let mut wiener = 0;
    let mut diameter = 0;
    for s in 0..n {
        let mut dist = vec![None; n];
        dist[s] = Some(0u64);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for b in m.bonds() {
                let v = if b.a == u {
                    b.b
                } else if b.b == u {
                    b.a
                } else {
                    continue;
                };
                if dist[v].is_none() {
                    dist[v] = Some(dist[u].unwrap() + 1);
                    queue.push_back(v);
                }
            }
        }
        for t in s + 1..n {
            if let Some(d) = dist[t] {
                wiener += d;
                diameter = diameter.max(d);
            }
        }
    }
    (wiener, diameter)
}

fn descriptor_oracle() -> Outcome {
    let mols = common::corpus_mols();
    let mut checked = 0;
    for m in mols.iter().filter(|m| m.component_count() == 1).take(50) {
        let got = wiener_and_diameter(m);
        let want = bfs_oracle(m);
        ensure(got == want, format!("{}: {got:?} vs {want:?}", write_smiles(m)))?;
        checked += 1;
    }
    ensure(checked == 50, format!("only {checked} connected molecules"))?;
    let desc = |s: &str| compute_descriptors(&parse_smiles(s).unwrap()).unwrap();
    let benzene = desc("c1ccccc1").get("wiener").unwrap();
    let methane = desc("C").get("mol_weight").unwrap();
    ensure((benzene - 27.0).abs() < 1e-3, format!("benzene wiener {benzene}"))?;
    ensure((methane - 16.043).abs() < 1e-3, format!("methane weight {methane}"))?;
    Ok(format!("50 molecules, benzene wiener {benzene}, methane {methane:.3}"))
}

// 9

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ra = common::run_pipeline(&common::pipeline_config(a.path(), ""));
    let rb = common::run_pipeline(&common::pipeline_config(b.path(), ""));
    ensure(ra == rb, format!("{ra:?}\n!=\n{rb:?}"))?;
    Ok(format!(
        "n={} validity={} uniqueness={} compliance={}",
        ra.n_generated, ra.validity, ra.uniqueness, ra.property_compliance
    ))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "range loss", Duration::from_secs(60), range_loss_suite),
        (2, "gradients", Duration::from_secs(600), gradients),
        (3, "toy GAN selectivity", Duration::from_secs(1200), toy_selectivity),
        (4, "embedder reconstruction", Duration::from_secs(1800), reconstruction),
        (5, "fingerprint oracle", Duration::from_secs(300), fingerprint_oracle),
        (6, "canonicalization", Duration::from_secs(300), canonicalization),
        (7, "metrics exactness", Duration::MAX, metrics_exactness),
        (8, "descriptor oracle", Duration::MAX, descriptor_oracle),
        (9, "pipeline determinism", Duration::MAX, determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        if outcome.is_ok() && took > budget {
            outcome = Err(format!("took {took:.1?}, budget {budget:?}"));
        }
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{took:.1?}] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{took:.1?}] {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
