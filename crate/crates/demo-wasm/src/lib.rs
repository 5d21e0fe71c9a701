//! Browser bindings: score the synthetic tiny/mid/prototype methods, audit two
//! normalization ranges, and compute distances between two typed-in vectors.

use cfeval::metrics::{self, MetricConfig};
use cfeval::stats::{evaluate_bundle, normalization_audit, EvaluationRequest, MetricReport};
use cfeval::synth::{build_bundle, gen_world, CfMethod, SyntheticSpec};
use wasm_bindgen::prelude::*;

fn reports(seed: u64, n: usize, range: (f64, f64)) -> Result<Vec<MetricReport>, String> {
    if !(range.0 < range.1) {
        return Err(format!(
            "range low {} must be below high {}",
            range.0, range.1
        ));
    }
    let world = gen_world(&SyntheticSpec {
        seed,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    CfMethod::ALL
        .iter()
        .map(|&m| {
            let b = build_bundle(&world, m, n, seed)
                .map_err(|e| e.to_string())?
                .renormalized(range);
            evaluate_bundle(&b, &MetricConfig::default(), &EvaluationRequest::default())
                .map_err(|e| e.to_string())
        })
        .collect()
}

/// Markdown table scoring the three simulated methods on one seeded world.
pub fn score_methods(seed: u64, n: usize, lo: f64, hi: f64) -> Result<String, String> {
    Ok(cfeval::io::render::render_markdown(&reports(
        seed,
        n,
        (lo, hi),
    )?))
}

/// Audit of the same world scored in [-0.5, 0.5] and in [0, 1].
pub fn audit_ranges(seed: u64, n: usize) -> Result<String, String> {
    let a = reports(seed, n, (-0.5, 0.5))?;
    let b = reports(seed, n, (0.0, 1.0))?;
    let audit = normalization_audit(&a, &b).map_err(|e| e.to_string())?;
    let verdict = if audit.passed() {
        "agreement holds"
    } else {
        "agreement FAILS"
    };
    Ok(format!("{}\n{verdict}\n", audit.rendering))
}

/// `[L1, L2, EN]` between two equal-length vectors.
pub fn distances(x: &[f64], c: &[f64]) -> Result<Vec<f64>, String> {
    let l1 = metrics::l1_distance(x, c).map_err(|e| e.to_string())?;
    let l2 = metrics::l2_distance(x, c).map_err(|e| e.to_string())?;
    Ok(vec![l1, l2, l1 + l2])
}

#[wasm_bindgen(js_name = scoreMethods)]
pub fn score_methods_js(seed: u32, n: u32, lo: f64, hi: f64) -> Result<String, JsValue> {
    score_methods(seed.into(), n as usize, lo, hi).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = auditRanges)]
pub fn audit_ranges_js(seed: u32, n: u32) -> Result<String, JsValue> {
    audit_ranges(seed.into(), n as usize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = distances)]
pub fn distances_js(x: Vec<f64>, c: Vec<f64>) -> Result<Vec<f64>, JsValue> {
    distances(&x, &c).map_err(|e| JsValue::from_str(&e))
}
