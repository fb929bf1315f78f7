//! Flat `section.key = value` configuration with named presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use molrange_nn::OptimizerKind;

use crate::classifier::ClassifierConfig;
use crate::embedder::{EmbedderConfig, NormKind};
use crate::encoding::source_vocab_size;
use crate::fingerprints::{DEFAULT_BITS, DEFAULT_RADIUS};
use crate::range_gan::{GanConfig, RangeSpec};
use crate::{Error, Result};

/// Environment variable naming the config file used when none is given.
pub const CONFIG_ENV: &str = "MOLRANGE_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(invalid("preset", "expected `paper` or `desk`")),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Output file names under `paths.output_dir`, keyed by their config name.
pub const OUTPUTS: [(&str, &str); 14] = [
    ("embedder_checkpoint", "embedder.mrng"),
    ("vocab", "vocab.txt"),
    ("dataset_cache", "dataset.mrds"),
    ("manifest", "manifest.txt"),
    ("embedder_history", "embedder_history.csv"),
    ("embeddings", "embeddings.mrng"),
    ("classifier_checkpoint", "classifier.mrng"),
    ("classifier_metrics", "classifier_metrics.csv"),
    ("gan_checkpoint", "gan.mrng"),
    ("gan_history", "gan_history.csv"),
    ("generated", "generated.csv"),
    ("report", "report.txt"),
    ("report_csv", "report.csv"),
    ("descriptors", "descriptors.csv"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub corpus: PathBuf,
    pub labeled: PathBuf,
    /// Molecules to embed with the `embed` command.
    pub embed_input: PathBuf,
    pub output_dir: PathBuf,
    overrides: BTreeMap<String, PathBuf>,
}

impl Paths {
    /// Resolved path of a named output.
    pub fn output(&self, name: &str) -> PathBuf {
        if let Some(p) = self.overrides.get(name) {
            return p.clone();
        }
        let file = OUTPUTS
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, f)| *f)
            .unwrap_or_else(|| panic!("unknown output {name}"));
        self.output_dir.join(file)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub seed: u64,
    pub paths: Paths,
    pub fingerprint_radius: usize,
    pub fingerprint_bits: usize,
    pub split_ratio: f64,
    pub embedder: EmbedderConfig,
    pub classifier: ClassifierConfig,
    pub gan: GanConfig,
    pub range: RangeSpec,
    /// Use the unsigned satisfaction formula, which rejects every score.
    pub strict_range: bool,
    pub generate_count: usize,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub count: Option<usize>,
}

/// `key = value` pairs in file order; `#` starts a comment line.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(&format!("line {}", i + 1), "expected `key = value`"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| invalid(key, format!("cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(invalid(key, format!("expected a boolean, got {v:?}"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

fn optimizer_with(current: OptimizerKind, key: &str, field: &str, v: &str) -> Result<OptimizerKind> {
    let (mut lr, mut b1, mut b2, mut adam) = match current {
        OptimizerKind::Sgd { lr } => (lr, 0.9, 0.999, false),
        OptimizerKind::Adam { lr, beta1, beta2, .. } => (lr, beta1, beta2, true),
    };
    match field {
        "optimizer" => {
            adam = match v {
                "adam" => true,
                "sgd" => false,
                _ => return Err(invalid(key, "expected `adam` or `sgd`")),
            }
        }
        "lr" => lr = parse(key, v)?,
        "beta1" => b1 = parse(key, v)?,
        "beta2" => b2 = parse(key, v)?,
        _ => unreachable!(),
    }
    Ok(if adam {
        OptimizerKind::adam(lr, b1, b2)
    } else {
        OptimizerKind::Sgd { lr }
    })
}

fn optimizer_echo(o: &OptimizerKind) -> String {
    match *o {
        OptimizerKind::Sgd { lr } => format!("sgd lr={lr}"),
        OptimizerKind::Adam { lr, beta1, beta2, .. } => format!("adam lr={lr} beta1={beta1} beta2={beta2}"),
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Preset defaults with paths relative to `base_dir`.
    pub fn preset(preset: Preset, base_dir: &Path) -> Self {
        let src = source_vocab_size(DEFAULT_BITS);
        let embedder = match preset {
            Preset::Paper => EmbedderConfig::paper(src, 0),
            Preset::Desk => EmbedderConfig::desk(src, 0),
        };
        let shape = (embedder.l_src, embedder.model_dim);
        let (classifier, gan) = match preset {
            Preset::Paper => (ClassifierConfig::paper(shape), GanConfig::paper()),
            Preset::Desk => (ClassifierConfig::desk(shape), GanConfig::desk(shape)),
        };
        let corpus = base_dir.join("data/sample_corpus.smi");
        Self {
            preset,
            seed: 42,
            paths: Paths {
                embed_input: corpus.clone(),
                corpus,
                labeled: base_dir.join("data/toy_odorants.csv"),
                output_dir: base_dir.join("out"),
                overrides: BTreeMap::new(),
            },
            fingerprint_radius: DEFAULT_RADIUS,
            fingerprint_bits: DEFAULT_BITS,
            split_ratio: 0.8,
            embedder,
            classifier,
            gan,
            range: RangeSpec::default(),
            strict_range: false,
            generate_count: 100,
        }
    }

    /// Build from config text. The preset comes from `overrides`, then the
    /// `preset` key, then defaults to desk. Relative paths resolve against
    /// `base_dir`.
    pub fn from_text(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        let file_preset = pairs
            .iter()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.parse::<Preset>())
            .transpose()?;
        let preset = overrides.preset.or(file_preset).unwrap_or(Preset::Desk);
        let mut cfg = Self::preset(preset, base_dir);
        let mut shape_set = (false, false);
        for (k, v) in &pairs {
            cfg.apply(k, v, base_dir, &mut shape_set)?;
        }
        let shape = (cfg.embedder.l_src, cfg.embedder.model_dim);
        if !shape_set.0 {
            cfg.classifier.input = shape;
        }
        if !shape_set.1 {
            cfg.gan.output = shape;
            cfg.gan.noise_dim = shape.1;
        }
        cfg.embedder.src_vocab = source_vocab_size(cfg.fingerprint_bits);
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(c) = overrides.count {
            cfg.generate_count = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base, overrides)
    }

    fn apply(&mut self, key: &str, v: &str, base: &Path, shape_set: &mut (bool, bool)) -> Result<()> {
        let path = || base.join(v);
        let (section, field) = key.split_once('.').unwrap_or(("", key));
        match (section, field) {
            ("", "preset") => {}
            ("", "seed") => self.seed = parse(key, v)?,
            ("paths", "corpus") => self.paths.corpus = path(),
            ("paths", "labeled") => self.paths.labeled = path(),
            ("paths", "embed_input") => self.paths.embed_input = path(),
            ("paths", "output_dir") => self.paths.output_dir = path(),
            ("paths", name) if OUTPUTS.iter().any(|(k, _)| *k == name) => {
                self.paths.overrides.insert(name.to_string(), path());
            }
            ("fingerprint", "radius") => self.fingerprint_radius = parse(key, v)?,
            ("fingerprint", "bits") => self.fingerprint_bits = parse(key, v)?,
            ("split", "ratio") => self.split_ratio = parse(key, v)?,
            ("generate", "count") => self.generate_count = parse(key, v)?,
            ("embedder", f) => self.apply_embedder(key, f, v)?,
            ("classifier", f) => self.apply_classifier(key, f, v, shape_set)?,
            ("gan", f) => self.apply_gan(key, f, v, shape_set)?,
            ("range", "y_lb") => self.range.y_lb = parse(key, v)?,
            ("range", "y_ub") => self.range.y_ub = parse(key, v)?,
            ("range", "phi") => self.range.phi = parse(key, v)?,
            ("range", "lambda1") => self.range.lambda1 = parse(key, v)?,
            ("range", "strict") => self.strict_range = parse_bool(key, v)?,
            _ => return Err(invalid(key, "unknown key")),
        }
        Ok(())
    }

    fn apply_embedder(&mut self, key: &str, f: &str, v: &str) -> Result<()> {
        let e = &mut self.embedder;
        match f {
            "layers" => e.layers = parse(key, v)?,
            "heads" => e.heads = parse(key, v)?,
            "model_dim" => e.model_dim = parse(key, v)?,
            "ff_dim" => e.ff_dim = parse(key, v)?,
            "dropout" => e.dropout = parse(key, v)?,
            "l_src" => e.l_src = parse(key, v)?,
            "l_tgt" => e.l_tgt = parse(key, v)?,
            "epochs" => e.epochs = parse(key, v)?,
            "batch_size" => e.batch_size = parse(key, v)?,
            "eval_every" => e.eval_every = parse(key, v)?,
            "target_exact_match" => {
                e.target_exact_match = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            "norm" => {
                e.norm = match v {
                    "layer" => NormKind::Layer,
                    "batch" => NormKind::Batch,
                    _ => return Err(invalid(key, "expected `layer` or `batch`")),
                }
            }
            "optimizer" | "lr" | "beta1" | "beta2" => e.optimizer = optimizer_with(e.optimizer, key, f, v)?,
            _ => return Err(invalid(key, "unknown key")),
        }
        Ok(())
    }

    fn apply_classifier(&mut self, key: &str, f: &str, v: &str, shape_set: &mut (bool, bool)) -> Result<()> {
        let c = &mut self.classifier;
        match f {
            "channels" => c.channels = parse_list(key, v)?,
            "kernel" => c.kernel = parse(key, v)?,
            "stride" => c.stride = parse(key, v)?,
            "padding" => c.padding = parse(key, v)?,
            "dropout" => c.dropout = parse(key, v)?,
            "epochs" => c.epochs = parse(key, v)?,
            "batch_size" => c.batch_size = parse(key, v)?,
            "class_weighting" => c.class_weighting = parse_bool(key, v)?,
            "train_fraction" => c.train_fraction = parse(key, v)?,
            "input" => {
                let l = parse_list(key, v)?;
                if l.len() != 2 {
                    return Err(invalid(key, "expected `rows,cols`"));
                }
                c.input = (l[0], l[1]);
                shape_set.0 = true;
            }
            "optimizer" | "lr" | "beta1" | "beta2" => c.optimizer = optimizer_with(c.optimizer, key, f, v)?,
            _ => return Err(invalid(key, "unknown key")),
        }
        Ok(())
    }

    fn apply_gan(&mut self, key: &str, f: &str, v: &str, shape_set: &mut (bool, bool)) -> Result<()> {
        let g = &mut self.gan;
        match f {
            "gen_channels" => g.gen_channels = parse_list(key, v)?,
            "disc_channels" => g.disc_channels = parse_list(key, v)?,
            "kernel" => g.kernel = parse(key, v)?,
            "clip" => g.clip = parse(key, v)?,
            "critic_steps" => g.critic_steps = parse(key, v)?,
            "generator_steps" => g.generator_steps = parse(key, v)?,
            "batch_size" => g.batch_size = parse(key, v)?,
            "output" => {
                let l = parse_list(key, v)?;
                if l.len() != 2 {
                    return Err(invalid(key, "expected `rows,cols`"));
                }
                g.output = (l[0], l[1]);
                g.noise_dim = l[1];
                shape_set.1 = true;
            }
            "optimizer" | "lr" | "beta1" | "beta2" => g.optimizer = optimizer_with(g.optimizer, key, f, v)?,
            _ => return Err(invalid(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks that depend on more than one key; errors name a key.
    pub fn validate(&self) -> Result<()> {
        let tag = |section: &'static str| {
            move |e: Error| match e {
                Error::Config(m) => invalid(section, m),
                other => other,
            }
        };
        if !(self.split_ratio > 0.0 && self.split_ratio <= 1.0) {
            return Err(invalid("split.ratio", "must lie in (0, 1]"));
        }
        if self.fingerprint_bits == 0 {
            return Err(invalid("fingerprint.bits", "must be positive"));
        }
        let mut e = self.embedder.clone();
        e.tgt_vocab = e.tgt_vocab.max(8);
        e.validate().map_err(tag("embedder"))?;
        self.classifier.validate().map_err(tag("classifier"))?;
        self.gan.validate().map_err(tag("gan"))?;
        self.range.validate().map_err(tag("range"))?;
        let shape = (self.embedder.l_src, self.embedder.model_dim);
        if self.classifier.input != shape {
            return Err(invalid("classifier.input", "must equal embedder l_src,model_dim"));
        }
        if self.gan.output != shape {
            return Err(invalid("gan.output", "must equal embedder l_src,model_dim"));
        }
        Ok(())
    }

    /// Every hyperparameter as `key = value` pairs, for report echoes.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let e = &self.embedder;
        let c = &self.classifier;
        let g = &self.gan;
        let r = &self.range;
        let kv: Vec<(&str, String)> = vec![
            ("preset", self.preset.name().into()),
            ("seed", self.seed.to_string()),
            ("fingerprint.radius", self.fingerprint_radius.to_string()),
            ("fingerprint.bits", self.fingerprint_bits.to_string()),
            ("split.ratio", self.split_ratio.to_string()),
            ("embedder.layers", e.layers.to_string()),
            ("embedder.heads", e.heads.to_string()),
            ("embedder.model_dim", e.model_dim.to_string()),
            ("embedder.ff_dim", e.ff_dim.to_string()),
            ("embedder.dropout", e.dropout.to_string()),
            ("embedder.l_src", e.l_src.to_string()),
            ("embedder.l_tgt", e.l_tgt.to_string()),
            ("embedder.norm", format!("{:?}", e.norm).to_lowercase()),
            ("embedder.optimizer", optimizer_echo(&e.optimizer)),
            ("embedder.epochs", e.epochs.to_string()),
            ("embedder.batch_size", e.batch_size.to_string()),
            ("classifier.channels", join(&c.channels)),
            ("classifier.kernel", c.kernel.to_string()),
            ("classifier.stride", c.stride.to_string()),
            ("classifier.padding", c.padding.to_string()),
            ("classifier.dropout", c.dropout.to_string()),
            ("classifier.optimizer", optimizer_echo(&c.optimizer)),
            ("classifier.epochs", c.epochs.to_string()),
            ("gan.noise_dim", g.noise_dim.to_string()),
            ("gan.gen_channels", join(&g.gen_channels)),
            ("gan.disc_channels", join(&g.disc_channels)),
            ("gan.kernel", g.kernel.to_string()),
            ("gan.clip", g.clip.to_string()),
            ("gan.critic_steps", g.critic_steps.to_string()),
            ("gan.optimizer", optimizer_echo(&g.optimizer)),
            ("gan.generator_steps", g.generator_steps.to_string()),
            ("range.y_lb", r.y_lb.to_string()),
            ("range.y_ub", r.y_ub.to_string()),
            ("range.phi", r.phi.to_string()),
            ("range.lambda1", r.lambda1.to_string()),
        ];
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
