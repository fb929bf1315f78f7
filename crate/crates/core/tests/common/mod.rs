#![allow(dead_code)]

use molrange_core::chem::{parse_smiles, MolecularGraph};
use rand::seq::SliceRandom;
use rand::Rng;

pub const CORPUS: &str = include_str!("../../data/sample_corpus.smi");

pub fn corpus() -> Vec<String> {
    molrange_core::chem::read_smiles_lines(CORPUS)
        .into_iter()
        .map(|(_, s)| s)
        .collect()
}

pub fn corpus_mols() -> Vec<MolecularGraph> {
    corpus().iter().map(|s| parse_smiles(s).unwrap()).collect()
}

pub fn random_perm(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn label(m: &MolecularGraph, i: usize) -> (u8, i8, bool, u32, Option<u16>, usize) {
    let a = m.atom(i);
    (
        a.element.atomic_number(),
        a.formal_charge,
        a.aromatic,
        a.total_h(),
        a.isotope,
        m.degree(i),
    )
}

/// Backtracking graph isomorphism on labelled atoms and bond orders.
pub fn isomorphic(a: &MolecularGraph, b: &MolecularGraph) -> bool {
    let n = a.atom_count();
    if n != b.atom_count() || a.bond_count() != b.bond_count() {
        return false;
    }
    let mut la: Vec<_> = (0..n).map(|i| label(a, i)).collect();
    let mut lb: Vec<_> = (0..n).map(|i| label(b, i)).collect();
    la.sort();
    lb.sort();
    if la != lb {
        return false;
    }
    // Visit atoms of `a` in BFS order so each has a mapped neighbour early.
    let mut order = Vec::new();
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = std::collections::VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            order.push(u);
            for &(v, _) in a.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn rec(
        k: usize,
        order: &[usize],
        a: &MolecularGraph,
        b: &MolecularGraph,
        map: &mut [usize],
        used: &mut [bool],
    ) -> bool {
        if k == order.len() {
            return true;
        }
        let u = order[k];
        for v in 0..b.atom_count() {
            if used[v] || label(a, u) != label(b, v) {
                continue;
            }
            let consistent = a.neighbors(u).iter().all(|&(w, bi)| {
                map[w] == usize::MAX
                    || b
                        .bond_between(v, map[w])
                        .is_some_and(|bb| bb.order == a.bonds()[bi].order)
            });
            if !consistent {
                continue;
            }
            map[u] = v;
            used[v] = true;
            if rec(k + 1, order, a, b, map, used) {
                return true;
            }
            map[u] = usize::MAX;
            used[v] = false;
        }
        false
    }
    rec(0, &order, a, b, &mut map, &mut used)
}

/// Random valid molecule with `n` heavy atoms: a random tree plus a few ring
/// closures, elements and bond orders drawn until the valence check passes.
pub fn random_molecule(n: usize, rng: &mut impl Rng) -> MolecularGraph {
    use molrange_core::chem::{validate_valence, Atom, Bond, BondOrder, Element};
    let elements = [
        Element::C,
        Element::C,
        Element::C,
        Element::N,
        Element::O,
        Element::S,
        Element::CL,
        Element::F,
    ];
    loop {
        let atoms: Vec<Atom> = (0..n)
            .map(|_| Atom::new(elements[rng.random_range(0..elements.len())]))
            .collect();
        let mut bonds = Vec::new();
        let order = |rng: &mut dyn rand::RngCore| match rng.random_range(0..10) {
            0..=6 => BondOrder::Single,
            7 | 8 => BondOrder::Double,
            _ => BondOrder::Triple,
        };
        for i in 1..n {
            bonds.push(Bond::new(rng.random_range(0..i), i, order(rng)));
        }
        for _ in 0..rng.random_range(0..3) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b && !bonds.iter().any(|x: &Bond| (x.a, x.b) == (a, b) || (x.a, x.b) == (b, a)) {
                bonds.push(Bond::new(a, b, BondOrder::Single));
            }
        }
        if let Ok(m) = MolecularGraph::new(atoms, bonds) {
            if validate_valence(&m) {
                return m;
            }
        }
    }
}

/// Independent Morgan reference: balls by breadth-first distance, identifiers
/// by recursive tree unfolding, dedup on (ball, identifier).
pub fn brute_force_morgan(m: &MolecularGraph, radius: usize, n_bits: usize) -> Vec<usize> {
    use molrange_core::fingerprints::hash_words;
    use std::collections::{BTreeSet, HashSet, VecDeque};

    fn unfold(m: &MolecularGraph, v: usize, k: usize) -> u64 {
        if k == 0 {
            let a = m.atom(v);
            return hash_words(&[
                a.element.atomic_number() as u64,
                a.formal_charge as i64 as u64,
                m.neighbors(v).len() as u64,
                u64::from(a.aromatic),
                a.total_h() as u64,
            ]);
        }
        let mut nb: Vec<(u64, u64)> = m
            .neighbors(v)
            .iter()
            .map(|&(u, b)| (m.bonds()[b].order.code(), unfold(m, u, k - 1)))
            .collect();
        nb.sort();
        let mut w = vec![k as u64, unfold(m, v, k - 1)];
        for (c, id) in nb {
            w.extend([c, id]);
        }
        hash_words(&w)
    }

    let n = m.atom_count();
    let dist = |s: usize| {
        let mut d = vec![usize::MAX; n];
        d[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &(v, _) in m.neighbors(u) {
                if d[v] == usize::MAX {
                    d[v] = d[u] + 1;
                    q.push_back(v);
                }
            }
        }
        d
    };
    let mut seen: HashSet<(BTreeSet<usize>, u64)> = HashSet::new();
    let mut bits = BTreeSet::new();
    for a in 0..n {
        let d = dist(a);
        for r in 0..=radius {
            let ball: BTreeSet<usize> = (0..n).filter(|&j| d[j] <= r).collect();
            if r > 0 && ball.len() == (0..n).filter(|&j| d[j] < r).count() {
                continue;
            }
            let id = unfold(m, a, r);
            if seen.insert((ball, id)) {
                bits.insert((id % n_bits as u64) as usize);
            }
        }
    }
    bits.into_iter().collect()
}

/// Source and target sequences for the first `n` corpus molecules, with a
/// vocabulary and descriptor statistics over the whole corpus.
pub fn tokenized(
    n: usize,
) -> (
    Vec<molrange_core::encoding::SourceSequence>,
    Vec<molrange_core::encoding::TargetSequence>,
    molrange_core::encoding::Vocabulary,
) {
    use molrange_core::chem::canonical_smiles;
    use molrange_core::encoding::{tokenize_smiles, Vocabulary};
    use molrange_core::pipeline::Featurizer;

    let mols = corpus_mols();
    let canon: Vec<String> = mols.iter().map(canonical_smiles).collect();
    let vocab = Vocabulary::from_smiles(canon.iter().map(String::as_str));
    let refs: Vec<&MolecularGraph> = mols.iter().collect();
    let feat = Featurizer::fit(&refs, 2, 2048, 150).unwrap();
    let src = mols.iter().take(n).map(|m| feat.source(m).unwrap()).collect();
    let tgt = canon.iter().take(n).map(|s| tokenize_smiles(s, &vocab, 74).unwrap()).collect();
    (src, tgt, vocab)
}

/// Toy real data: 8x16 matrices whose entries scatter around a per-sample
/// mean drawn from N(0, 0.25).
pub fn toy_real(n: usize, seed: u64) -> Vec<molrange_nn::Tensor> {
    use rand::SeedableRng;
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let m: f64 = 0.5 * rng.sample::<f64, _>(StandardNormal);
            let data = (0..128).map(|_| m + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
            molrange_nn::Tensor::new(&[8, 16], data).unwrap()
        })
        .collect()
}

/// Small GAN configuration for the toy data.
pub fn toy_gan_config(steps: usize) -> molrange_core::range_gan::GanConfig {
    let mut cfg = molrange_core::range_gan::GanConfig::desk((8, 16));
    cfg.gen_channels = vec![4, 16];
    cfg.disc_channels = vec![8, 4];
    cfg.generator_steps = steps;
    cfg
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Desk pipeline configuration writing into `out`, with `extra` appended to
/// the config text.
pub fn pipeline_config(out: &std::path::Path, extra: &str) -> molrange_core::pipeline::PipelineConfig {
    use molrange_core::pipeline::{Overrides, PipelineConfig};
    let data = data_dir();
    let text = format!(
        "preset = desk\nseed = 5\npaths.corpus = {}\npaths.labeled = {}\npaths.embed_input = {}\npaths.output_dir = {}\n{extra}",
        data.join("sample_corpus.smi").display(),
        data.join("toy_odorants.csv").display(),
        data.join("sample_corpus.smi").display(),
        out.display(),
    );
    PipelineConfig::from_text(&text, out, &Overrides::default()).unwrap()
}

/// Settings that make a full pipeline pass take seconds.
pub const TINY: &str = "embedder.layers = 1\nembedder.heads = 2\nembedder.model_dim = 16\nembedder.ff_dim = 32\n\
embedder.epochs = 1\nclassifier.channels = 4,8\nclassifier.epochs = 2\ngan.generator_steps = 3\ngan.critic_steps = 2\n\
generate.count = 6\n";

/// Every stage that feeds the report, in order; returns the report.
pub fn run_pipeline(cfg: &molrange_core::pipeline::PipelineConfig) -> molrange_core::metrics::GenerationReport {
    use molrange_core::pipeline::{run, stage_evaluate, Command};
    for cmd in [Command::TrainEmbedder, Command::Embed, Command::TrainClassifier, Command::TrainGan, Command::Generate] {
        run(cmd, cfg, true).unwrap();
    }
    stage_evaluate(cfg).unwrap()
}
