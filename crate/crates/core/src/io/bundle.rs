//! Bundle directories: a `manifest.json` naming one tensor file per role.
//!
//! ```json
//! {
//!   "version": "1",
//!   "method_name": "prototype",
//!   "normalization_range": [0.0, 1.0],
//!   "files": {
//!     "inputs": "inputs.npy",
//!     "counterfactuals": "counterfactuals.npy",
//!     "f_probs_inputs": "f_probs_inputs.npy",
//!     "f_probs_counterfactuals": "f_probs_counterfactuals.npy",
//!     "label_oracles": [{"label": "smile", "inputs": "a.npy", "counterfactuals": "b.npy"}]
//!   }
//! }
//! ```
//!
//! Required roles are `inputs`, `counterfactuals`, `f_probs_inputs` and
//! `f_probs_counterfactuals`. Optional roles: `targets`,
//! `oracle_probs_counterfactuals`, `ae_target`, `ae_input_class`, `ae_full`
//! (all three or none), `embeddings_reference`, `embeddings_counterfactuals`
//! and `label_oracles`. Paths are relative to the manifest. Unknown keys are
//! reported as warnings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tensor::{read_labels, read_tensor, write_labels, write_tensor, TensorFormat};
use super::IoError;
use crate::data::{
    has_errors, validate_bundle, EvaluationBundle, LabelOracleOutputs, PredictionSet,
    ReconstructionTriplet, Severity, TensorSet,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOracleFiles {
    pub label: String,
    pub inputs: String,
    pub counterfactuals: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestFiles {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterfactuals: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_probs_inputs: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_probs_counterfactuals: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_probs_counterfactuals: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ae_target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ae_input_class: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ae_full: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings_reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings_counterfactuals: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_oracles: Vec<LabelOracleFiles>,
}

const FILE_ROLES: [&str; 12] = [
    "inputs",
    "counterfactuals",
    "targets",
    "f_probs_inputs",
    "f_probs_counterfactuals",
    "oracle_probs_counterfactuals",
    "ae_target",
    "ae_input_class",
    "ae_full",
    "embeddings_reference",
    "embeddings_counterfactuals",
    "label_oracles",
];
const TOP_LEVEL: [&str; 4] = ["version", "method_name", "normalization_range", "files"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: String,
    pub method_name: String,
    pub normalization_range: (f64, f64),
    pub files: ManifestFiles,
}

impl BundleManifest {
    /// Parses manifest text, returning unknown keys as warnings.
    pub fn parse(text: &str) -> Result<(Self, Vec<String>), IoError> {
        let raw: Value =
            serde_json::from_str(text).map_err(|e| IoError::MalformedManifest(e.to_string()))?;
        let mut warnings = Vec::new();
        if let Some(obj) = raw.as_object() {
            for k in obj.keys().filter(|k| !TOP_LEVEL.contains(&k.as_str())) {
                warnings.push(format!("unknown manifest key `{k}`"));
            }
            if let Some(files) = obj.get("files").and_then(Value::as_object) {
                for k in files.keys().filter(|k| !FILE_ROLES.contains(&k.as_str())) {
                    warnings.push(format!("unknown file role `{k}`"));
                }
            }
        }
        let manifest: BundleManifest =
            serde_json::from_value(raw).map_err(|e| IoError::MalformedManifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            warnings.push(format!(
                "manifest version `{}` is newer than `{MANIFEST_VERSION}`",
                manifest.version
            ));
        }
        Ok((manifest, warnings))
    }
}

/// A loaded bundle plus non-fatal remarks (unknown keys, warning findings).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedBundle {
    pub bundle: EvaluationBundle,
    pub warnings: Vec<String>,
}

fn required<'a>(role: &'static str, path: &'a Option<String>) -> Result<&'a str, IoError> {
    path.as_deref().ok_or(IoError::MissingRole(role))
}

fn predictions(path: &Path) -> Result<PredictionSet, IoError> {
    Ok(PredictionSet::from_tensor(&read_tensor(path)?)?)
}

pub fn load_bundle(dir: &Path) -> Result<EvaluationBundle, IoError> {
    load_bundle_with_warnings(dir).map(|l| l.bundle)
}

/// Loads every role and validates; error findings abort the load.
pub fn load_bundle_with_warnings(dir: &Path) -> Result<LoadedBundle, IoError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(IoError::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| IoError::io(&manifest_path, e))?;
    let (m, mut warnings) = BundleManifest::parse(&text)?;
    let f = &m.files;
    let at = |rel: &str| dir.join(rel);

    let inputs = read_tensor(&at(required("inputs", &f.inputs)?))?.with_name("inputs");
    let counterfactuals = read_tensor(&at(required("counterfactuals", &f.counterfactuals)?))?
        .with_name("counterfactuals");
    let f_in = predictions(&at(required("f_probs_inputs", &f.f_probs_inputs)?))?;
    let f_cf = predictions(&at(required(
        "f_probs_counterfactuals",
        &f.f_probs_counterfactuals,
    )?))?;
    let mut b = EvaluationBundle::new(
        m.method_name.clone(),
        m.normalization_range,
        inputs,
        counterfactuals,
        f_in,
        f_cf,
    );

    if let Some(p) = &f.targets {
        b.targets = Some(read_labels(&at(p))?);
    }
    if let Some(p) = &f.oracle_probs_counterfactuals {
        b.oracle_probs_counterfactuals = Some(predictions(&at(p))?);
    }
    b.reconstructions = match (&f.ae_target, &f.ae_input_class, &f.ae_full) {
        (Some(t), Some(i), Some(a)) => Some(ReconstructionTriplet {
            ae_target: read_tensor(&at(t))?.with_name("ae_target"),
            ae_input_class: read_tensor(&at(i))?.with_name("ae_input_class"),
            ae_full: read_tensor(&at(a))?.with_name("ae_full"),
        }),
        (None, None, None) => None,
        _ => {
            return Err(IoError::MalformedManifest(
                "ae_target, ae_input_class and ae_full must be given together".into(),
            ))
        }
    };
    if let Some(p) = &f.embeddings_reference {
        b.embeddings_reference = Some(read_tensor(&at(p))?.with_name("embeddings_reference"));
    }
    if let Some(p) = &f.embeddings_counterfactuals {
        b.embeddings_counterfactuals =
            Some(read_tensor(&at(p))?.with_name("embeddings_counterfactuals"));
    }
    for l in &f.label_oracles {
        b.label_oracles.push(LabelOracleOutputs {
            label_name: l.label.clone(),
            probs_inputs: predictions(&at(&l.inputs))?,
            probs_counterfactuals: predictions(&at(&l.counterfactuals))?,
        });
    }

    let findings = validate_bundle(&b);
    if has_errors(&findings) {
        return Err(IoError::ValidationFailed(findings));
    }
    warnings.extend(
        findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
            .map(ToString::to_string),
    );
    Ok(LoadedBundle {
        bundle: b,
        warnings,
    })
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes every role as NPY next to a manifest. Output bytes depend only on the bundle.
pub fn save_bundle(b: &EvaluationBundle, dir: &Path) -> Result<BundleManifest, IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let put = |name: &str, t: &TensorSet| -> Result<Option<String>, IoError> {
        let file = format!("{name}.npy");
        write_tensor(t, &dir.join(&file), TensorFormat::Npy)?;
        Ok(Some(file))
    };
    let mut files = ManifestFiles {
        inputs: put("inputs", &b.inputs)?,
        counterfactuals: put("counterfactuals", &b.counterfactuals)?,
        f_probs_inputs: put(
            "f_probs_inputs",
            &b.f_probs_inputs.to_tensor("f_probs_inputs"),
        )?,
        f_probs_counterfactuals: put(
            "f_probs_counterfactuals",
            &b.f_probs_counterfactuals
                .to_tensor("f_probs_counterfactuals"),
        )?,
        ..Default::default()
    };
    if let Some(t) = &b.targets {
        let file = "targets.npy".to_string();
        write_labels(t, &dir.join(&file), TensorFormat::Npy)?;
        files.targets = Some(file);
    }
    if let Some(o) = &b.oracle_probs_counterfactuals {
        files.oracle_probs_counterfactuals =
            put("oracle_probs_counterfactuals", &o.to_tensor("oracle"))?;
    }
    if let Some(r) = &b.reconstructions {
        files.ae_target = put("ae_target", &r.ae_target)?;
        files.ae_input_class = put("ae_input_class", &r.ae_input_class)?;
        files.ae_full = put("ae_full", &r.ae_full)?;
    }
    if let Some(e) = &b.embeddings_reference {
        files.embeddings_reference = put("embeddings_reference", e)?;
    }
    if let Some(e) = &b.embeddings_counterfactuals {
        files.embeddings_counterfactuals = put("embeddings_counterfactuals", e)?;
    }
    for (i, l) in b.label_oracles.iter().enumerate() {
        let base = format!("label_{i}_{}", file_safe(&l.label_name));
        files.label_oracles.push(LabelOracleFiles {
            label: l.label_name.clone(),
            inputs: put(
                &format!("{base}_inputs"),
                &l.probs_inputs.to_tensor("label"),
            )?
            .expect("written"),
            counterfactuals: put(
                &format!("{base}_counterfactuals"),
                &l.probs_counterfactuals.to_tensor("label"),
            )?
            .expect("written"),
        });
    }
    let manifest = BundleManifest {
        version: MANIFEST_VERSION.into(),
        method_name: b.method_name.clone(),
        normalization_range: b.normalization_range,
        files,
    };
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| IoError::MalformedManifest(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::three_sample_bundle;
    use crate::metrics::{self, MetricConfig};

    #[test]
    fn save_then_load_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let b = three_sample_bundle();
        save_bundle(&b, dir.path()).unwrap();
        let loaded = load_bundle_with_warnings(dir.path()).unwrap();
        assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
        let mut expect = b.clone();
        // tensor names follow the roles after a reload
        expect.inputs = expect.inputs.with_name("inputs");
        expect.counterfactuals = expect.counterfactuals.with_name("counterfactuals");
        assert_eq!(loaded.bundle.inputs, expect.inputs);
        assert_eq!(loaded.bundle.targets, b.targets);
        let cfg = MetricConfig::default();
        assert_eq!(metrics::tcv(&loaded.bundle, &cfg), metrics::tcv(&b, &cfg));
        let bits =
            |s: metrics::PerSampleScores| s.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(
            bits(metrics::en_scores(&loaded.bundle).unwrap()),
            bits(metrics::en_scores(&b).unwrap())
        );
    }

    #[test]
    fn missing_manifest_and_roles() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_bundle(dir.path()),
            Err(IoError::MissingManifest(_))
        ));

        save_bundle(&three_sample_bundle(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["files"]
            .as_object_mut()
            .unwrap()
            .remove("counterfactuals");
        fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(
            load_bundle(dir.path()),
            Err(IoError::MissingRole("counterfactuals"))
        ));
    }

    #[test]
    fn unknown_keys_warn() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&three_sample_bundle(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        v["comment"] = Value::String("hi".into());
        v["files"]["thumbnails"] = Value::String("x.npy".into());
        fs::write(&path, v.to_string()).unwrap();
        let loaded = load_bundle_with_warnings(dir.path()).unwrap();
        assert_eq!(loaded.warnings.len(), 2);
    }

    #[test]
    fn mismatched_counts_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&three_sample_bundle(), dir.path()).unwrap();
        let short = TensorSet::new("x", vec![2, 2], vec![0.0; 4]).unwrap();
        write_tensor(
            &short,
            &dir.path().join("counterfactuals.npy"),
            TensorFormat::Npy,
        )
        .unwrap();
        match load_bundle(dir.path()) {
            Err(IoError::ValidationFailed(findings)) => {
                assert!(findings
                    .iter()
                    .any(|f| f.message.contains("sample count mismatch")));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }
}
