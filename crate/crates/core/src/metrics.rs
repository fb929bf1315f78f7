//! Quality metrics for a set of generated molecules.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chem::{canonical_smiles, parse_smiles, validate_valence, MolecularGraph};
use crate::fingerprints::{morgan_fingerprint, tanimoto, Fingerprint, DEFAULT_BITS, DEFAULT_RADIUS};
use crate::range_gan::RangeSpec;
use crate::{Error, Result};

/// Default cap on sampled pairs for [`internal_diversity`].
pub const PAIR_CAP: usize = 10_000;

/// Parse and valence-check; `None` for anything that fails.
pub fn parse_valid(s: &str) -> Option<MolecularGraph> {
    let m = parse_smiles(s).ok()?;
    if m.is_empty() || !validate_valence(&m) {
        return None;
    }
    Some(m)
}

pub fn validity<S: AsRef<str>>(strings: &[S]) -> Result<f64> {
    if strings.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ok = strings.iter().filter(|s| parse_valid(s.as_ref()).is_some()).count();
    Ok(ok as f64 / strings.len() as f64)
}

/// Distinct canonical forms over the number of inputs (already valid).
pub fn uniqueness<S: AsRef<str>>(valid: &[S]) -> Result<f64> {
    if valid.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(canonical_set(valid).len() as f64 / valid.len() as f64)
}

fn canonical_set<S: AsRef<str>>(valid: &[S]) -> HashSet<String> {
    valid
        .iter()
        .map(|s| {
            parse_smiles(s.as_ref())
                .map(|m| canonical_smiles(&m))
                .unwrap_or_else(|_| s.as_ref().to_string())
        })
        .collect()
}

/// Fraction of `unique` canonical strings absent from `training`.
pub fn novelty<S: AsRef<str>, T: AsRef<str>>(unique: &[S], training: &[T]) -> Result<f64> {
    if unique.is_empty() {
        return Err(Error::EmptyInput);
    }
    let train: HashSet<&str> = training.iter().map(|s| s.as_ref()).collect();
    let novel = unique.iter().filter(|s| !train.contains(s.as_ref())).count();
    Ok(novel as f64 / unique.len() as f64)
}

/// Mean pairwise Tanimoto over all unordered pairs.
pub fn internal_diversity_exact(fps: &[Fingerprint]) -> Result<f64> {
    if fps.len() < 2 {
        return Err(Error::FewerThanTwo);
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..fps.len() {
        for j in i + 1..fps.len() {
            sum += tanimoto(&fps[i], &fps[j])?;
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// Mean pairwise Tanimoto; above `cap` pairs, `cap` distinct pairs are
/// sampled with `seed`.
pub fn internal_diversity(fps: &[Fingerprint], cap: usize, seed: u64) -> Result<f64> {
    let n = fps.len();
    if n < 2 {
        return Err(Error::FewerThanTwo);
    }
    let total = n * (n - 1) / 2;
    if total <= cap {
        return internal_diversity_exact(fps);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(cap);
    let mut sum = 0.0;
    while seen.len() < cap {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || !seen.insert((i.min(j), i.max(j))) {
            continue;
        }
        sum += tanimoto(&fps[i], &fps[j])?;
    }
    Ok(sum / cap as f64)
}

pub fn fingerprints_of(mols: &[MolecularGraph]) -> Result<Vec<Fingerprint>> {
    mols.iter()
        .map(|m| Ok(morgan_fingerprint(m, DEFAULT_RADIUS, DEFAULT_BITS)?))
        .collect()
}

/// Fraction of scores strictly inside the range.
pub fn property_compliance(scores: &[f64], spec: &RangeSpec) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(scores.iter().filter(|&&y| spec.is_compliant(y)).count() as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub n_generated: usize,
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    /// Mean pairwise Tanimoto (higher means more alike).
    pub mean_pairwise_tanimoto: f64,
    pub property_compliance: f64,
    /// Extra `key = value` lines echoed after the metrics.
    pub provenance: Vec<(String, String)>,
}

const REPORT_COLUMNS: [&str; 6] = [
    "n_generated",
    "validity",
    "uniqueness",
    "novelty",
    "mean_pairwise_tanimoto",
    "property_compliance",
];

impl GenerationReport {
    /// Metrics for generated strings with their property scores. Metrics
    /// that have no members to average over are reported as 0.
    pub fn compute<S: AsRef<str>, T: AsRef<str>>(
        generated: &[S],
        scores: &[f64],
        training_canonical: &[T],
        spec: &RangeSpec,
        seed: u64,
    ) -> Result<Self> {
        let n = generated.len();
        if n == 0 {
            return Ok(Self::empty());
        }
        let valid: Vec<(&str, MolecularGraph)> = generated
            .iter()
            .filter_map(|s| parse_valid(s.as_ref()).map(|m| (s.as_ref(), m)))
            .collect();
        let mut canon: Vec<String> = Vec::new();
        let mut uniq_mols = Vec::new();
        let mut seen = HashSet::new();
        for (_, m) in &valid {
            let c = canonical_smiles(m);
            if seen.insert(c.clone()) {
                canon.push(c);
                uniq_mols.push(m.clone());
            }
        }
        let valid_strings: Vec<&str> = valid.iter().map(|(s, _)| *s).collect();
        let uniqueness = if valid.is_empty() { 0.0 } else { uniqueness(&valid_strings)? };
        let novelty = if canon.is_empty() { 0.0 } else { novelty(&canon, training_canonical)? };
        let diversity = if uniq_mols.len() < 2 {
            0.0
        } else {
            internal_diversity(&fingerprints_of(&uniq_mols)?, PAIR_CAP, seed)?
        };
        Ok(Self {
            n_generated: n,
            validity: valid.len() as f64 / n as f64,
            uniqueness,
            novelty,
            mean_pairwise_tanimoto: diversity,
            property_compliance: if scores.is_empty() { 0.0 } else { property_compliance(scores, spec)? },
            provenance: Vec::new(),
        })
    }

    pub fn empty() -> Self {
        Self {
            n_generated: 0,
            validity: 0.0,
            uniqueness: 0.0,
            novelty: 0.0,
            mean_pairwise_tanimoto: 0.0,
            property_compliance: 0.0,
            provenance: Vec::new(),
        }
    }

    fn values(&self) -> [String; 6] {
        [
            self.n_generated.to_string(),
            self.validity.to_string(),
            self.uniqueness.to_string(),
            self.novelty.to_string(),
            self.mean_pairwise_tanimoto.to_string(),
            self.property_compliance.to_string(),
        ]
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in REPORT_COLUMNS.iter().zip(self.values()) {
            s.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in &self.provenance {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn csv_header() -> String {
        REPORT_COLUMNS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.values().join(",")
    }
}
