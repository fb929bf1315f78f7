use molrange_web::{analyze_smiles, range_curve, similarity};
use serde_json::Value;

fn json(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn analyze_reports_canonical_form_and_descriptors() {
    let a = json(analyze_smiles("OCC"));
    let b = json(analyze_smiles("CCO"));
    assert_eq!(a["canonical"], b["canonical"]);
    assert_eq!(a["atoms"], 3);
    let benzene = json(analyze_smiles("c1ccccc1"));
    assert_eq!(benzene["ring_sizes"], serde_json::json!([6]));
    assert_eq!(benzene["descriptors"]["wiener"], 27.0);
}

#[test]
fn analyze_reports_error_position() {
    let e = json(analyze_smiles("CC(C"));
    assert!(e["error"].is_string());
    assert!(e["position"].is_u64());
}

#[test]
fn curve_peaks_inside_and_loss_vanishes_there() {
    let v = json(range_curve(0.5, 1.0, 10.0, 201));
    let ys = v["y"].as_array().unwrap();
    let p = v["p"].as_array().unwrap();
    let loss = v["loss"].as_array().unwrap();
    assert_eq!(ys.len(), 201);
    let mid = 100;
    assert!((ys[mid].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!((p[mid].as_f64().unwrap() - 0.8483).abs() < 1e-4);
    assert_eq!(loss[mid].as_f64().unwrap(), 0.0);
    assert!(loss[0].as_f64().unwrap() > 0.0);
    assert!(json(range_curve(1.0, 0.5, 10.0, 10))["error"].is_string());
}

#[test]
fn similarity_bounds() {
    let same = json(similarity("c1ccccc1O", "Oc1ccccc1"));
    assert_eq!(same["tanimoto"], 1.0);
    let diff = json(similarity("CCCC", "c1ccncc1"))["tanimoto"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&diff));
    assert!(json(similarity("C1CC", "C"))["error"].is_string());
}
