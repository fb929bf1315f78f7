//! Token sequences for both sides of the embedder.
//!
//! Source layout: specials `0..4`, one token per fingerprint bit, then a
//! block of `N_BINS` tokens for each descriptor position. A source sequence
//! is the ascending on-bit tokens followed by the 30 descriptor tokens,
//! padded to `L_src`.
//!
//! Vocabulary file: a `MRVOCAB 1` header line, then one token per line; a
//! token's id is its line index after the header.
//!
//! Dataset cache (little-endian): `MRDS`, u32 version, u32 L_src, u32 L_tgt,
//! u64 count, then `count * L_src` u32 source ids and `count * L_tgt` u32
//! target ids.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::descriptors::{DescriptorSet, DescriptorStats, N_BINS, N_DESCRIPTORS};
use crate::fingerprints::Fingerprint;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const N_SPECIAL: u32 = 4;
pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

pub const DEFAULT_L_SRC: usize = 150;
pub const DEFAULT_L_TGT: usize = 74;

const VOCAB_HEADER: &str = "MRVOCAB 1";
const CACHE_MAGIC: &[u8; 4] = b"MRDS";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("descriptor schema version {found} does not match stats version {expected}")]
    StatsMismatch { expected: u32, found: u32 },
    #[error("{tokens} tokens plus BOS/EOS exceed the target length {limit}")]
    TooLong { tokens: usize, limit: usize },
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncodingError>;

/// Bijection between token strings and ids, with the four specials first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Specials followed by `tokens` in the given order (duplicates dropped).
    pub fn new<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in SPECIALS.iter().map(|s| s.to_string()).chain(tokens) {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len() as u32);
                v.tokens.push(t);
            }
        }
        v
    }

    /// Target vocabulary over every token of the given SMILES, sorted.
    pub fn from_smiles<'a, I: IntoIterator<Item = &'a str>>(corpus: I) -> Self {
        let mut all: Vec<String> = corpus.into_iter().flat_map(smiles_tokens).collect();
        all.sort();
        all.dedup();
        Self::new(all)
    }

    /// Source vocabulary for fingerprints of width `n_bits`.
    pub fn source(n_bits: usize) -> Self {
        let bits = (0..n_bits).map(|b| format!("bit{b}"));
        let attrs = (0..N_DESCRIPTORS).flat_map(|d| (0..N_BINS).map(move |k| format!("d{d}_{k}")));
        Self::new(bits.chain(attrs))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(VOCAB_HEADER);
        s.push('\n');
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(VOCAB_HEADER) {
            return Err(EncodingError::Format("missing vocabulary header".into()));
        }
        let tokens: Vec<String> = lines.map(str::to_string).collect();
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS.map(String::from) {
            return Err(EncodingError::Format("special tokens out of place".into()));
        }
        let v = Self::new(tokens[4..].iter().cloned());
        if v.len() != tokens.len() {
            return Err(EncodingError::Format("duplicate token".into()));
        }
        Ok(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourceSequence {
    pub tokens: Vec<u32>,
    pub truncated: bool,
}

impl SourceSequence {
    /// Number of leading non-PAD tokens.
    pub fn content_len(&self) -> usize {
        self.tokens.iter().take_while(|&&t| t != PAD).count()
    }
}

/// Size of a source vocabulary for fingerprints of width `n_bits`.
pub fn source_vocab_size(n_bits: usize) -> usize {
    N_SPECIAL as usize + n_bits + N_DESCRIPTORS * N_BINS
}

pub fn encode_source(
    fp: &Fingerprint,
    desc: &DescriptorSet,
    stats: &DescriptorStats,
    l_src: usize,
) -> Result<SourceSequence> {
    if desc.schema_version != stats.schema_version {
        return Err(EncodingError::StatsMismatch {
            expected: stats.schema_version,
            found: desc.schema_version,
        });
    }
    let room = l_src.saturating_sub(N_DESCRIPTORS);
    let bits = fp.on_bits();
    let truncated = bits.len() > room;
    let mut tokens: Vec<u32> = bits
        .iter()
        .take(room)
        .map(|&b| b as u32 + N_SPECIAL)
        .collect();
    let attr_base = N_SPECIAL + fp.n_bits() as u32;
    for (j, &v) in desc.values.iter().enumerate() {
        tokens.push(attr_base + (N_BINS * j + stats.bin(j, v)) as u32);
    }
    tokens.truncate(l_src);
    tokens.resize(l_src, PAD);
    Ok(SourceSequence { tokens, truncated })
}

/// Lex SMILES into tokens: `Cl`, `Br`, whole bracket atoms, `%nn`, and
/// otherwise single characters.
pub fn smiles_tokens(s: &str) -> Vec<String> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let len = match b[i] {
            b'[' => b[i..].iter().position(|&c| c == b']').map_or(b.len() - i, |p| p + 1),
            b'%' if i + 2 < b.len() && b[i + 1].is_ascii_digit() && b[i + 2].is_ascii_digit() => 3,
            b'C' if b.get(i + 1) == Some(&b'l') => 2,
            b'B' if b.get(i + 1) == Some(&b'r') => 2,
            c if c.is_ascii() => 1,
            _ => s[i..].chars().next().map_or(1, char::len_utf8),
        };
        out.push(s[i..i + len].to_string());
        i += len;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TargetSequence {
    pub tokens: Vec<u32>,
}

impl TargetSequence {
    /// Position of the first EOS.
    pub fn eos_position(&self) -> Option<usize> {
        self.tokens.iter().position(|&t| t == EOS)
    }

    /// Tokens up to and including EOS (or all tokens when there is none).
    pub fn content_len(&self) -> usize {
        self.eos_position().map_or(self.tokens.len(), |p| p + 1)
    }
}

pub fn tokenize_smiles(s: &str, vocab: &Vocabulary, l_tgt: usize) -> Result<TargetSequence> {
    let toks = smiles_tokens(s);
    if toks.len() + 2 > l_tgt {
        return Err(EncodingError::TooLong {
            tokens: toks.len(),
            limit: l_tgt,
        });
    }
    let mut ids = Vec::with_capacity(l_tgt);
    ids.push(BOS);
    for t in toks {
        ids.push(vocab.id(&t).ok_or(EncodingError::UnknownToken(t))?);
    }
    ids.push(EOS);
    ids.resize(l_tgt, PAD);
    Ok(TargetSequence { tokens: ids })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detokenized {
    pub smiles: String,
    pub missing_eos: bool,
}

/// Concatenate tokens after BOS up to the first EOS. Without an EOS the
/// whole tail is used and `missing_eos` is set. Special tokens are skipped.
pub fn detokenize(seq: &TargetSequence, vocab: &Vocabulary) -> Detokenized {
    let start = usize::from(seq.tokens.first() == Some(&BOS));
    let eos = seq.eos_position();
    let end = eos.unwrap_or(seq.tokens.len());
    let mut smiles = String::new();
    for &t in &seq.tokens[start.min(end)..end] {
        if t >= N_SPECIAL {
            if let Some(tok) = vocab.token(t) {
                smiles.push_str(tok);
            }
        }
    }
    Detokenized {
        smiles,
        missing_eos: eos.is_none(),
    }
}

/// Paired source and target sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDataset {
    pub l_src: usize,
    pub l_tgt: usize,
    pub sources: Vec<SourceSequence>,
    pub targets: Vec<TargetSequence>,
}

impl TokenDataset {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.l_src as u32).to_le_bytes())?;
        w.write_all(&(self.l_tgt as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for s in &self.sources {
            for &t in &s.tokens {
                w.write_all(&t.to_le_bytes())?;
            }
        }
        for s in &self.targets {
            for &t in &s.tokens {
                w.write_all(&t.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let bad = |m: &str| EncodingError::Format(m.to_string());
        if buf.len() < 24 || &buf[..4] != CACHE_MAGIC {
            return Err(bad("not a dataset cache"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        if u32_at(4) != CACHE_VERSION {
            return Err(bad("unsupported cache version"));
        }
        let l_src = u32_at(8) as usize;
        let l_tgt = u32_at(12) as usize;
        let count = u64::from_le_bytes(buf[16..24].try_into().unwrap()) as usize;
        if buf.len() != 24 + 4 * count * (l_src + l_tgt) {
            return Err(bad("cache length does not match header"));
        }
        let ids: Vec<u32> = buf[24..].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let (src, tgt) = ids.split_at(count * l_src);
        let sources = src
            .chunks(l_src.max(1))
            .take(count)
            .map(|c| SourceSequence {
                tokens: c.to_vec(),
                truncated: false,
            })
            .collect();
        let targets = tgt
            .chunks(l_tgt.max(1))
            .take(count)
            .map(|c| TargetSequence { tokens: c.to_vec() })
            .collect();
        Ok(Self {
            l_src,
            l_tgt,
            sources,
            targets,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        Ok(f.flush()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::descriptors::{compute_descriptors, fit_stats};

    fn vocab() -> Vocabulary {
        Vocabulary::from_smiles(["CCO", "CCl", "[NH4+]", "c1ccccc1"])
    }

    #[test]
    fn lexer() {
        assert_eq!(smiles_tokens("CCl"), vec!["C", "Cl"]);
        assert_eq!(smiles_tokens("[NH4+]"), vec!["[NH4+]"]);
        assert_eq!(smiles_tokens("C%12CC%12Br"), vec!["C", "%12", "C", "C", "%12", "Br"]);
        assert_eq!(smiles_tokens("c1ccccc1").len(), 8);
    }

    #[test]
    fn tokenize_ethanol() {
        let v = vocab();
        let t = tokenize_smiles("CCO", &v, 74).unwrap();
        assert_eq!(t.tokens.len(), 74);
        let c = v.id("C").unwrap();
        let o = v.id("O").unwrap();
        assert_eq!(&t.tokens[..5], &[BOS, c, c, o, EOS]);
        assert!(t.tokens[5..].iter().all(|&x| x == PAD));
        assert_eq!(detokenize(&t, &v).smiles, "CCO");
    }

    #[test]
    fn tokenize_errors() {
        let v = vocab();
        assert!(matches!(tokenize_smiles("CCN", &v, 74), Err(EncodingError::UnknownToken(t)) if t == "N"));
        let long = "C".repeat(73);
        assert!(matches!(tokenize_smiles(&long, &v, 74), Err(EncodingError::TooLong { .. })));
        assert!(tokenize_smiles(&"C".repeat(72), &v, 74).is_ok());
    }

    #[test]
    fn detokenize_edge_cases() {
        let v = vocab();
        let empty = TargetSequence { tokens: vec![BOS, EOS, PAD] };
        assert_eq!(detokenize(&empty, &v), Detokenized { smiles: String::new(), missing_eos: false });
        let c = v.id("C").unwrap();
        let open = TargetSequence { tokens: vec![BOS, c, c] };
        assert_eq!(detokenize(&open, &v), Detokenized { smiles: "CC".into(), missing_eos: true });
    }

    #[test]
    fn source_layout() {
        let mol = parse_smiles("CCO").unwrap();
        let desc = compute_descriptors(&mol).unwrap();
        let stats = fit_stats(std::slice::from_ref(&desc)).unwrap();
        let fp = Fingerprint::from_bits(2048, 2, &[5, 100]).unwrap();
        let s = encode_source(&fp, &desc, &stats, 150).unwrap();
        assert_eq!(s.tokens.len(), 150);
        assert_eq!(s.content_len(), 32);
        assert_eq!(&s.tokens[..2], &[9, 104]);
        // Constant columns sit in bin 0 of their own block.
        for j in 0..30 {
            assert_eq!(s.tokens[2 + j], 4 + 2048 + 30 * j as u32);
        }
        assert!(!s.truncated);
        let many: Vec<usize> = (0..200).collect();
        let fp = Fingerprint::from_bits(2048, 2, &many).unwrap();
        let s = encode_source(&fp, &desc, &stats, 150).unwrap();
        assert!(s.truncated);
        assert_eq!(s.tokens[119], 119 + 4);
        assert_eq!(s.tokens[120], 4 + 2048);
        let mut other = desc.clone();
        other.schema_version = 99;
        assert!(matches!(encode_source(&fp, &other, &stats, 150), Err(EncodingError::StatsMismatch { .. })));
        assert!(s.tokens.iter().all(|&t| (t as usize) < source_vocab_size(2048)));
        assert_eq!(Vocabulary::source(2048).len(), source_vocab_size(2048));
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = vocab();
        let text = v.to_text();
        assert!(text.starts_with("MRVOCAB 1\n<pad>\n<bos>\n<eos>\n<unk>\n"));
        assert_eq!(Vocabulary::from_text(&text).unwrap(), v);
        assert!(Vocabulary::from_text("C\n").is_err());
    }

    #[test]
    fn cache_round_trip() {
        let v = vocab();
        let ds = TokenDataset {
            l_src: 3,
            l_tgt: 74,
            sources: vec![SourceSequence { tokens: vec![5, 6, 0], truncated: false }],
            targets: vec![tokenize_smiles("CCl", &v, 74).unwrap()],
        };
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MRDS");
        assert_eq!(buf.len(), 24 + 4 * 77);
        assert_eq!(TokenDataset::read_from(&buf[..]).unwrap(), ds);
        assert!(TokenDataset::read_from(&buf[..30]).is_err());
    }
}
