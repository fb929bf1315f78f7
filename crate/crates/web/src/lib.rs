//! WebAssembly bindings for the demo page. Each export returns a JSON
//! string; failures come back as `{"error": ...}`.

use molrange_core::chem::{canonical_smiles, parse_smiles, ring_info, MolecularGraph};
use molrange_core::descriptors::{compute_descriptors, NAMES};
use molrange_core::fingerprints::{morgan_fingerprint, tanimoto, DEFAULT_BITS, DEFAULT_RADIUS};
use molrange_core::range_gan::{log_satisfaction, satisfaction_probability, RangeSpec};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn parse(s: &str) -> Result<MolecularGraph, Value> {
    parse_smiles(s.trim()).map_err(|d| {
        json!({
            "error": d.message,
            "kind": format!("{:?}", d.kind),
            "position": d.position,
        })
    })
}

/// Canonical form, ring sizes, descriptors and fingerprint summary.
pub fn analyze(smiles: &str) -> Value {
    let mol = match parse(smiles) {
        Ok(m) => m,
        Err(e) => return e,
    };
    let desc = match compute_descriptors(&mol) {
        Ok(d) => d,
        Err(e) => return json!({ "error": e.to_string() }),
    };
    let fp = match morgan_fingerprint(&mol, DEFAULT_RADIUS, DEFAULT_BITS) {
        Ok(f) => f,
        Err(e) => return json!({ "error": e.to_string() }),
    };
    let descriptors: serde_json::Map<String, Value> = NAMES
        .iter()
        .zip(desc.values)
        .map(|(n, v)| (n.to_string(), json!(v)))
        .collect();
    json!({
        "canonical": canonical_smiles(&mol),
        "atoms": mol.atom_count(),
        "bonds": mol.bond_count(),
        "ring_sizes": ring_info(&mol).sizes(),
        "fingerprint_bits_on": fp.popcount(),
        "fingerprint_on_bits": fp.on_bits(),
        "descriptors": descriptors,
    })
}

/// `n` samples of the satisfaction probability and the per-sample range
/// loss over a window around `[lb, ub]`.
pub fn curve(lb: f64, ub: f64, phi: f64, n: usize) -> Value {
    let spec = RangeSpec {
        y_lb: lb,
        y_ub: ub,
        phi,
        ..RangeSpec::default()
    };
    if let Err(e) = spec.validate() {
        return json!({ "error": e.to_string() });
    }
    let n = n.clamp(2, 2000);
    let margin = (ub - lb).max(1e-9);
    let (lo, hi) = (lb - margin, ub + margin);
    let mut ys = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut loss = Vec::with_capacity(n);
    for i in 0..n {
        let y = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        ys.push(y);
        p.push(satisfaction_probability(y, &spec));
        loss.push(if spec.is_compliant(y) { 0.0 } else { -log_satisfaction(y, &spec) });
    }
    json!({ "y": ys, "p": p, "loss": loss })
}

/// Tanimoto similarity of radius-2 fingerprints.
pub fn similar(a: &str, b: &str) -> Value {
    let fp = |s: &str| -> Result<_, Value> {
        let m = parse(s)?;
        morgan_fingerprint(&m, DEFAULT_RADIUS, DEFAULT_BITS).map_err(|e| json!({ "error": e.to_string() }))
    };
    match (fp(a), fp(b)) {
        (Ok(x), Ok(y)) => match tanimoto(&x, &y) {
            Ok(t) => json!({ "tanimoto": t, "on_a": x.popcount(), "on_b": y.popcount() }),
            Err(e) => json!({ "error": e.to_string() }),
        },
        (Err(e), _) | (_, Err(e)) => e,
    }
}

#[wasm_bindgen]
pub fn analyze_smiles(smiles: &str) -> String {
    analyze(smiles).to_string()
}

#[wasm_bindgen]
pub fn range_curve(lb: f64, ub: f64, phi: f64, n: usize) -> String {
    curve(lb, ub, phi, n).to_string()
}

#[wasm_bindgen]
pub fn similarity(a: &str, b: &str) -> String {
    similar(a, b).to_string()
}
