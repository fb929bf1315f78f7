//! Dataset ingestion, checkpoint bundles and the command-line stages.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use molrange_nn::{Checkpoint, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{parse_key_values, Overrides, Paths, PipelineConfig, Preset, CONFIG_ENV, OUTPUTS};

use crate::chem::{canonical_smiles, parse_smiles, read_smiles_lines, MolecularGraph};
use crate::classifier::{metrics_csv, precision_recall_f1, train_classifier, Classifier};
use crate::descriptors::{self, compute_descriptors, fit_stats, DescriptorStats, SCHEMA_VERSION};
use crate::embedder::{history_csv, train_embedder, Embedder, EmbedderConfig};
use crate::encoding::{
    detokenize, encode_source, source_vocab_size, tokenize_smiles, EncodingError, SourceSequence, TargetSequence,
    TokenDataset, Vocabulary,
};
use crate::fingerprints::morgan_fingerprint;
use crate::metrics::{parse_valid, GenerationReport};
use crate::range_gan::{
    gan_history_csv, satisfaction_probability_strict, train_gan, Generator, PropertyHead, TrainedGan,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    TrainEmbedder,
    Embed,
    TrainClassifier,
    TrainGan,
    Generate,
    Evaluate,
    ExportDescriptors,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TrainEmbedder => "train-embedder",
            Command::Embed => "embed",
            Command::TrainClassifier => "train-classifier",
            Command::TrainGan => "train-gan",
            Command::Generate => "generate",
            Command::Evaluate => "evaluate",
            Command::ExportDescriptors => "export-descriptors",
        }
    }

    /// Named outputs this stage writes.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Command::TrainEmbedder => &["embedder_checkpoint", "vocab", "dataset_cache", "manifest", "embedder_history"],
            Command::Embed => &["embeddings"],
            Command::TrainClassifier => &["classifier_checkpoint", "classifier_metrics"],
            Command::TrainGan => &["gan_checkpoint", "gan_history"],
            Command::Generate => &["generated"],
            Command::Evaluate => &["report", "report_csv"],
            Command::ExportDescriptors => &["descriptors"],
        }
    }
}

/// Parsed molecules from one input file. Invalid lines are dropped.
#[derive(Debug, Clone)]
pub struct Molecules {
    pub source: PathBuf,
    /// Data lines read, valid or not.
    pub count: usize,
    pub mols: Vec<MolecularGraph>,
    pub canonical: Vec<String>,
    pub labels: Option<Vec<bool>>,
}

impl Molecules {
    pub fn len(&self) -> usize {
        self.mols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mols.is_empty()
    }

    fn push(&mut self, mol: MolecularGraph) {
        self.canonical.push(canonical_smiles(&mol));
        self.mols.push(mol);
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn parse_logged(path: &Path, line: usize, smiles: &str) -> Option<MolecularGraph> {
    match parse_smiles(smiles) {
        Ok(m) if !m.is_empty() => Some(m),
        Ok(_) => None,
        Err(d) => {
            log::warn!("{}:{line}: skipping {smiles:?}: {d}", path.display());
            None
        }
    }
}

/// Newline-separated SMILES; `#` lines and blanks are ignored.
pub fn read_molecules(path: &Path) -> Result<Molecules> {
    let text = read_text(path)?;
    let lines = read_smiles_lines(&text);
    let mut out = Molecules {
        source: path.to_path_buf(),
        count: lines.len(),
        mols: Vec::new(),
        canonical: Vec::new(),
        labels: None,
    };
    for (line, s) in &lines {
        if let Some(m) = parse_logged(path, *line, s) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::AllLinesInvalid(path.to_path_buf()));
    }
    Ok(out)
}

/// CSV with header `smiles,label` and labels 0 or 1.
pub fn read_labeled(path: &Path) -> Result<Molecules> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("smiles") || headers.get(1) != Some("label") {
        return Err(Error::ConfigInvalid {
            key: "paths.labeled".into(),
            message: format!("{} must start with the header `smiles,label`", path.display()),
        });
    }
    let mut out = Molecules {
        source: path.to_path_buf(),
        count: 0,
        mols: Vec::new(),
        canonical: Vec::new(),
        labels: Some(Vec::new()),
    };
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        out.count += 1;
        let line = i + 2;
        let label = match rec.get(1) {
            Some("1") => true,
            Some("0") => false,
            other => {
                log::warn!("{}:{line}: skipping row with label {other:?}", path.display());
                continue;
            }
        };
        if let Some(m) = rec.get(0).and_then(|s| parse_logged(path, line, s)) {
            out.push(m);
            labels.push(label);
        }
    }
    if out.is_empty() {
        return Err(Error::AllLinesInvalid(path.to_path_buf()));
    }
    out.labels = Some(labels);
    Ok(out)
}

/// Seeded shuffle; the first `round(n * ratio)` indices (sorted) train.
pub fn plain_split(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((n as f64 * ratio).round() as usize).clamp(1, n);
    let (mut a, mut b) = (idx[..k].to_vec(), idx[k..].to_vec());
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub source: PathBuf,
    pub count: usize,
    pub valid: usize,
    /// Molecules whose fingerprint did not fit the source length.
    pub truncated: usize,
    /// Valid molecules dropped because their SMILES exceeds the target length.
    pub too_long: usize,
    pub split_seed: u64,
    pub split_ratio: f64,
    pub train: usize,
    pub test: usize,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        format!(
            "source = {}\ncount = {}\nvalid = {}\ntruncated = {}\ntoo_long = {}\nsplit_seed = {}\nsplit_ratio = {}\ntrain = {}\ntest = {}\n",
            self.source.display(),
            self.count,
            self.valid,
            self.truncated,
            self.too_long,
            self.split_seed,
            self.split_ratio,
            self.train,
            self.test
        )
    }
}

/// Descriptor statistics plus fingerprint settings: everything needed to
/// turn a molecule into a source sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub stats: DescriptorStats,
    pub radius: usize,
    pub bits: usize,
    pub l_src: usize,
}

impl Featurizer {
    pub fn fit(mols: &[&MolecularGraph], radius: usize, bits: usize, l_src: usize) -> Result<Self> {
        let descs = mols
            .iter()
            .map(|m| compute_descriptors(m))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            stats: fit_stats(&descs)?,
            radius,
            bits,
            l_src,
        })
    }

    pub fn source(&self, mol: &MolecularGraph) -> Result<SourceSequence> {
        let fp = morgan_fingerprint(mol, self.radius, self.bits)?;
        let desc = compute_descriptors(mol)?;
        Ok(encode_source(&fp, &desc, &self.stats, self.l_src)?)
    }

    fn push_to(&self, ck: &mut Checkpoint) {
        let s = &self.stats;
        ck.push("__stats__/min", Tensor::from_vec(s.min.clone()));
        ck.push("__stats__/max", Tensor::from_vec(s.max.clone()));
        ck.push("__stats__/mean", Tensor::from_vec(s.mean.clone()));
        ck.push("__stats__/std", Tensor::from_vec(s.std.clone()));
        ck.push(
            "__featurizer__",
            Tensor::from_vec(vec![self.radius as f64, self.bits as f64, s.schema_version as f64]),
        );
    }

    fn from_checkpoint(ck: &Checkpoint, l_src: usize) -> Result<Self> {
        let get = |n: &str| {
            ck.get(n)
                .map(|t| t.data().to_vec())
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing {n}")))
        };
        let f = get("__featurizer__")?;
        if f.len() != 3 || f[2] as u32 != SCHEMA_VERSION {
            return Err(Error::CheckpointMismatch("descriptor schema differs".into()));
        }
        Ok(Self {
            stats: DescriptorStats {
                min: get("__stats__/min")?,
                max: get("__stats__/max")?,
                mean: get("__stats__/mean")?,
                std: get("__stats__/std")?,
                schema_version: SCHEMA_VERSION,
            },
            radius: f[0] as usize,
            bits: f[1] as usize,
            l_src,
        })
    }
}

/// Trained embedder with its featurizer and target vocabulary.
#[derive(Debug, Clone)]
pub struct EmbedderBundle {
    pub model: Embedder,
    pub featurizer: Featurizer,
    pub vocab: Vocabulary,
}

impl EmbedderBundle {
    pub fn embed(&self, mols: &[MolecularGraph]) -> Result<Vec<Tensor>> {
        let src = mols
            .iter()
            .map(|m| self.featurizer.source(m))
            .collect::<Result<Vec<_>>>()?;
        self.model.encode_batch(&src)
    }

    pub fn decode(&self, emb: &[Tensor]) -> Result<Vec<String>> {
        Ok(self
            .model
            .greedy_decode(emb)?
            .iter()
            .map(|t| detokenize(t, &self.vocab).smiles)
            .collect())
    }

    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let ck_path = cfg.paths.output("embedder_checkpoint");
        let vocab_path = cfg.paths.output("vocab");
        let ck = load_checkpoint(&ck_path)?;
        if !vocab_path.exists() {
            return Err(Error::MissingCheckpoint(vocab_path));
        }
        let vocab = Vocabulary::load(&vocab_path)?;
        let featurizer = Featurizer::from_checkpoint(&ck, cfg.embedder.l_src)?;
        let mut ecfg = cfg.embedder.clone();
        ecfg.src_vocab = source_vocab_size(featurizer.bits);
        ecfg.tgt_vocab = vocab.len();
        let model = Embedder::from_checkpoint(ecfg, &ck)?;
        Ok(Self {
            model,
            featurizer,
            vocab,
        })
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    Ok(Checkpoint::load(path)?)
}

fn load_classifier(cfg: &PipelineConfig) -> Result<Classifier> {
    Classifier::from_checkpoint(cfg.classifier.clone(), &load_checkpoint(&cfg.paths.output("classifier_checkpoint"))?)
}

fn load_generator(cfg: &PipelineConfig) -> Result<Generator> {
    Ok(TrainedGan::from_checkpoint(&cfg.gan, &load_checkpoint(&cfg.paths.output("gan_checkpoint"))?)?.generator)
}

/// Refuse to clobber existing outputs unless `force`.
fn guard(cfg: &PipelineConfig, cmd: Command, force: bool) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = cmd.outputs().iter().map(|n| cfg.paths.output(n)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::OutputExists(p.clone()));
        }
    }
    for p in &paths {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(paths)
}

/// Run one stage; returns the files written.
pub fn run(cmd: Command, cfg: &PipelineConfig, force: bool) -> Result<Vec<PathBuf>> {
    let outputs = guard(cfg, cmd, force)?;
    match cmd {
        Command::TrainEmbedder => stage_train_embedder(cfg)?,
        Command::Embed => stage_embed(cfg)?,
        Command::TrainClassifier => stage_train_classifier(cfg)?,
        Command::TrainGan => stage_train_gan(cfg)?,
        Command::Generate => stage_generate(cfg)?,
        Command::Evaluate => {
            stage_evaluate(cfg)?;
        }
        Command::ExportDescriptors => stage_export_descriptors(cfg)?,
    }
    Ok(outputs)
}

/// Tokenized corpus split, featurizer and vocabulary.
pub struct PreparedCorpus {
    pub molecules: Molecules,
    /// Indices into `molecules` that survived target tokenization.
    pub kept: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub featurizer: Featurizer,
    pub vocab: Vocabulary,
    pub dataset: TokenDataset,
    pub manifest: DatasetManifest,
}

pub fn prepare_corpus(cfg: &PipelineConfig) -> Result<PreparedCorpus> {
    let molecules = read_molecules(&cfg.paths.corpus)?;
    let vocab = Vocabulary::from_smiles(molecules.canonical.iter().map(String::as_str));
    let l_tgt = cfg.embedder.l_tgt;
    let mut kept = Vec::new();
    let mut targets = Vec::new();
    for (i, s) in molecules.canonical.iter().enumerate() {
        match tokenize_smiles(s, &vocab, l_tgt) {
            Ok(t) => {
                kept.push(i);
                targets.push(t);
            }
            Err(EncodingError::TooLong { .. }) => log::warn!("skipping {s}: longer than {l_tgt} tokens"),
            Err(e) => return Err(e.into()),
        }
    }
    if kept.is_empty() {
        return Err(Error::AllLinesInvalid(cfg.paths.corpus.clone()));
    }
    let (train, test) = plain_split(kept.len(), cfg.split_ratio, cfg.seed);
    let train_mols: Vec<&MolecularGraph> = train.iter().map(|&k| &molecules.mols[kept[k]]).collect();
    let featurizer = Featurizer::fit(&train_mols, cfg.fingerprint_radius, cfg.fingerprint_bits, cfg.embedder.l_src)?;
    let mut sources = Vec::with_capacity(kept.len());
    let mut truncated = 0;
    for &i in &kept {
        let s = featurizer.source(&molecules.mols[i])?;
        truncated += usize::from(s.truncated);
        sources.push(s);
    }
    let manifest = DatasetManifest {
        source: cfg.paths.corpus.clone(),
        count: molecules.count,
        valid: molecules.len(),
        truncated,
        too_long: molecules.len() - kept.len(),
        split_seed: cfg.seed,
        split_ratio: cfg.split_ratio,
        train: train.len(),
        test: test.len(),
    };
    Ok(PreparedCorpus {
        dataset: TokenDataset {
            l_src: cfg.embedder.l_src,
            l_tgt,
            sources,
            targets,
        },
        molecules,
        kept,
        train,
        test,
        featurizer,
        vocab,
        manifest,
    })
}

fn pick<T: Clone>(xs: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| xs[i].clone()).collect()
}

fn embedder_config(cfg: &PipelineConfig, vocab: &Vocabulary) -> EmbedderConfig {
    let mut e = cfg.embedder.clone();
    e.src_vocab = source_vocab_size(cfg.fingerprint_bits);
    e.tgt_vocab = vocab.len();
    e
}

fn stage_train_embedder(cfg: &PipelineConfig) -> Result<()> {
    let prep = prepare_corpus(cfg)?;
    let ds = &prep.dataset;
    let (tr_s, tr_t): (Vec<SourceSequence>, Vec<TargetSequence>) =
        (pick(&ds.sources, &prep.train), pick(&ds.targets, &prep.train));
    let (va_s, va_t) = (pick(&ds.sources, &prep.test), pick(&ds.targets, &prep.test));
    let ecfg = embedder_config(cfg, &prep.vocab);
    let val = (!va_s.is_empty()).then_some((va_s.as_slice(), va_t.as_slice()));
    let trained = train_embedder((&tr_s, &tr_t), val, &ecfg, cfg.seed)?;
    let mut ck = trained.model.to_checkpoint(Some(&trained.optimizer));
    prep.featurizer.push_to(&mut ck);
    let p = &cfg.paths;
    ck.save(p.output("embedder_checkpoint"))?;
    prep.vocab.save(p.output("vocab"))?;
    ds.save(p.output("dataset_cache"))?;
    fs::write(p.output("manifest"), prep.manifest.to_text())?;
    fs::write(p.output("embedder_history"), history_csv(&trained.history))?;
    Ok(())
}

fn stage_embed(cfg: &PipelineConfig) -> Result<()> {
    let bundle = EmbedderBundle::load(cfg)?;
    let input = read_molecules(&cfg.paths.embed_input)?;
    let emb = bundle.embed(&input.mols)?;
    let (l, d) = (cfg.embedder.l_src, cfg.embedder.model_dim);
    let data: Vec<f64> = emb.iter().flat_map(|t| t.data().iter().copied()).collect();
    let mut ck = Checkpoint::new("embeddings");
    ck.push("embeddings", Tensor::new(&[emb.len(), l, d], data)?);
    let out = cfg.paths.output("embeddings");
    ck.save(&out)?;
    fs::write(out.with_extension("smi"), input.canonical.join("\n") + "\n")?;
    Ok(())
}

fn stage_train_classifier(cfg: &PipelineConfig) -> Result<()> {
    let bundle = EmbedderBundle::load(cfg)?;
    let data = read_labeled(&cfg.paths.labeled)?;
    let labels = data.labels.clone().expect("labeled input");
    let emb = bundle.embed(&data.mols)?;
    let trained = train_classifier(&emb, &labels, &cfg.classifier, cfg.seed)?;
    trained.model.to_checkpoint().save(cfg.paths.output("classifier_checkpoint"))?;
    let metrics = match trained.test_metrics {
        Some(m) => m,
        None => {
            let xs = pick(&emb, &trained.train_idx);
            let ys = pick(&labels, &trained.train_idx);
            precision_recall_f1(&trained.model.classify_batch(&xs)?, &ys)?
        }
    };
    fs::write(cfg.paths.output("classifier_metrics"), metrics_csv(&metrics))?;
    Ok(())
}

/// Embeddings of every corpus molecule, used as real samples.
fn real_embeddings(cfg: &PipelineConfig, bundle: &EmbedderBundle) -> Result<Vec<Tensor>> {
    bundle.embed(&read_molecules(&cfg.paths.corpus)?.mols)
}

fn stage_train_gan(cfg: &PipelineConfig) -> Result<()> {
    let bundle = EmbedderBundle::load(cfg)?;
    let classifier = load_classifier(cfg)?;
    let real = real_embeddings(cfg, &bundle)?;
    if cfg.strict_range {
        satisfaction_probability_strict((cfg.range.y_lb + cfg.range.y_ub) / 2.0, &cfg.range)?;
    }
    let mut trained = train_gan(&real, &classifier, &cfg.gan, &cfg.range, cfg.seed)?;
    let probe = trained.generator.generate(cfg.gan.batch_size, cfg.seed ^ 0xfeed)?;
    let decoded = bundle.decode(&probe)?;
    let valid = decoded.iter().filter(|s| parse_valid(s).is_some()).count();
    if let Some(last) = trained.history.last_mut() {
        last.validity_rate = Some(valid as f64 / decoded.len().max(1) as f64);
    }
    trained.to_checkpoint(&cfg.gan).save(cfg.paths.output("gan_checkpoint"))?;
    fs::write(cfg.paths.output("gan_history"), gan_history_csv(&trained.history))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMolecule {
    pub smiles: String,
    pub score: f64,
    pub valid: bool,
    pub canonical: Option<String>,
}

pub const GENERATED_HEADER: &str = "smiles,score,valid,canonical_smiles";

/// `n` noise draws through the generator, scored by `head` and decoded.
pub fn generate_molecules(
    generator: &Generator,
    bundle: &EmbedderBundle,
    head: &impl PropertyHead,
    n: usize,
    seed: u64,
) -> Result<Vec<GeneratedMolecule>> {
    let emb = generator.generate(n, seed)?;
    if emb.is_empty() {
        return Ok(Vec::new());
    }
    let g = molrange_nn::Graph::new();
    let x = g.constant(crate::classifier::stack(&emb)?);
    let scores = head.score(&g, x)?.value();
    let smiles = bundle.decode(&emb)?;
    Ok(smiles
        .into_iter()
        .zip(scores.data())
        .map(|(s, &score)| {
            let canonical = parse_valid(&s).map(|m| canonical_smiles(&m));
            GeneratedMolecule {
                valid: canonical.is_some(),
                smiles: s,
                score,
                canonical,
            }
        })
        .collect())
}

pub fn write_generated(path: &Path, rows: &[GeneratedMolecule]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GENERATED_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.smiles.as_str(),
            &r.score.to_string(),
            if r.valid { "1" } else { "0" },
            r.canonical.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_generated(path: &Path) -> Result<Vec<GeneratedMolecule>> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let score = field(1).parse().map_err(|_| Error::ConfigInvalid {
            key: "paths.generated".into(),
            message: format!("bad score {:?}", field(1)),
        })?;
        let canonical = field(3);
        out.push(GeneratedMolecule {
            smiles: field(0),
            score,
            valid: field(2) == "1",
            canonical: (!canonical.is_empty()).then_some(canonical),
        });
    }
    Ok(out)
}

fn stage_generate(cfg: &PipelineConfig) -> Result<()> {
    let out = cfg.paths.output("generated");
    if cfg.generate_count == 0 {
        return write_generated(&out, &[]);
    }
    let bundle = EmbedderBundle::load(cfg)?;
    let classifier = load_classifier(cfg)?;
    let generator = load_generator(cfg)?;
    let rows = generate_molecules(&generator, &bundle, &classifier, cfg.generate_count, cfg.seed)?;
    write_generated(&out, &rows)
}

/// Compute the report from the generated CSV and write it.
pub fn stage_evaluate(cfg: &PipelineConfig) -> Result<GenerationReport> {
    let rows = read_generated(&cfg.paths.output("generated"))?;
    let training = read_molecules(&cfg.paths.corpus)?;
    let smiles: Vec<&str> = rows.iter().map(|r| r.smiles.as_str()).collect();
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let mut report = GenerationReport::compute(&smiles, &scores, &training.canonical, &cfg.range, cfg.seed)?;
    report.provenance = cfg.provenance();
    fs::write(cfg.paths.output("report"), report.to_key_value())?;
    fs::write(
        cfg.paths.output("report_csv"),
        format!("{}\n{}\n", GenerationReport::csv_header(), report.to_csv_row()),
    )?;
    Ok(report)
}

fn stage_export_descriptors(cfg: &PipelineConfig) -> Result<()> {
    let mols = read_molecules(&cfg.paths.corpus)?;
    let mut out = descriptors::csv_header();
    out.push('\n');
    for (m, s) in mols.mols.iter().zip(&mols.canonical) {
        let d = compute_descriptors(m)?;
        let fp = morgan_fingerprint(m, cfg.fingerprint_radius, cfg.fingerprint_bits)?;
        let _ = writeln!(out, "{}", descriptors::csv_row(s, &d, &fp.to_hex()));
    }
    fs::write(cfg.paths.output("descriptors"), out)?;
    Ok(())
}
