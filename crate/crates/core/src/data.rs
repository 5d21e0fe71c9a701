//! Evaluation bundle data model, consistency checks and validity filtering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

/// Row sums of a probability table must be within this of 1.
pub const PROBABILITY_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid tensor `{name}`: {reason}")]
    InvalidTensor { name: String, reason: String },
    #[error("invalid prediction table: {0}")]
    InvalidPredictions(String),
    #[error("target-match validity requires per-sample targets")]
    MissingTargets,
    #[error("mask covers {mask} samples but the bundle has {bundle}")]
    LengthMismatch { mask: usize, bundle: usize },
    #[error("no sample passed the validity mask")]
    EmptySelection,
}

/// A batch of samples; the first axis indexes samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSet {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl TensorSet {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, DataError> {
        let name = name.into();
        if shape.is_empty() {
            return Err(DataError::InvalidTensor {
                name,
                reason: "rank 0 tensor has no sample axis".into(),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(DataError::InvalidTensor {
                name,
                reason: format!(
                    "shape {shape:?} needs {expected} values, got {}",
                    values.len()
                ),
            });
        }
        Ok(Self {
            name,
            shape,
            values,
        })
    }

    /// Builds an `n × d` tensor from equally long rows.
    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let name = name.into();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(DataError::InvalidTensor {
                name,
                reason: "ragged rows".into(),
            });
        }
        Self::new(name, vec![rows.len(), d], rows.concat())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_count(&self) -> usize {
        self.shape[0]
    }

    /// Number of scalars per sample (product of the trailing axes).
    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.sample_len();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.sample_count()).map(move |i| self.sample(i))
    }

    /// Keeps the listed samples, in the given order.
    pub fn select(&self, indices: &[usize]) -> TensorSet {
        let mut values = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            values.extend_from_slice(self.sample(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        TensorSet {
            name: self.name.clone(),
            shape,
            values,
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> TensorSet {
        TensorSet {
            name: self.name.clone(),
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Samples as matrix rows. Fails on an empty tensor.
    pub fn to_matrix(&self) -> Option<Matrix> {
        Matrix::new(self.sample_count(), self.sample_len(), self.values.clone()).ok()
    }
}

/// Per-sample discrete distributions over `classes` outcomes, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    classes: usize,
    probs: Vec<f64>,
}

impl PredictionSet {
    pub fn new(classes: usize, probs: Vec<f64>) -> Result<Self, DataError> {
        if classes == 0 {
            return Err(DataError::InvalidPredictions("zero classes".into()));
        }
        if !probs.len().is_multiple_of(classes) {
            return Err(DataError::InvalidPredictions(format!(
                "{} values do not divide into rows of {classes}",
                probs.len()
            )));
        }
        Ok(Self { classes, probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(DataError::InvalidPredictions("ragged rows".into()));
        }
        Self::new(k, rows.concat())
    }

    pub fn from_tensor(t: &TensorSet) -> Result<Self, DataError> {
        if t.shape().len() != 2 {
            return Err(DataError::InvalidPredictions(format!(
                "`{}` must be a 2-D table, got shape {:?}",
                t.name(),
                t.shape()
            )));
        }
        Self::new(t.shape()[1], t.values().to_vec())
    }

    pub fn to_tensor(&self, name: &str) -> TensorSet {
        TensorSet {
            name: name.into(),
            shape: vec![self.len(), self.classes],
            values: self.probs.clone(),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.probs.chunks_exact(self.classes)
    }

    /// Index of the largest entry of row `i`; ties go to the lowest index.
    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    pub fn select(&self, indices: &[usize]) -> PredictionSet {
        let mut probs = Vec::with_capacity(indices.len() * self.classes);
        for &i in indices {
            probs.extend_from_slice(self.row(i));
        }
        PredictionSet {
            classes: self.classes,
            probs,
        }
    }
}

/// Lowest index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOracleOutputs {
    pub label_name: String,
    pub probs_inputs: PredictionSet,
    pub probs_counterfactuals: PredictionSet,
}

/// AE_q(c), AE_p(c) and AE(c) for every counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionTriplet {
    pub ae_target: TensorSet,
    pub ae_input_class: TensorSet,
    pub ae_full: TensorSet,
}

/// Everything needed to score one counterfactual method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationBundle {
    pub method_name: String,
    pub normalization_range: (f64, f64),
    pub inputs: TensorSet,
    pub counterfactuals: TensorSet,
    pub targets: Option<Vec<usize>>,
    pub f_probs_inputs: PredictionSet,
    pub f_probs_counterfactuals: PredictionSet,
    pub oracle_probs_counterfactuals: Option<PredictionSet>,
    pub reconstructions: Option<ReconstructionTriplet>,
    pub embeddings_reference: Option<TensorSet>,
    pub embeddings_counterfactuals: Option<TensorSet>,
    pub label_oracles: Vec<LabelOracleOutputs>,
    /// Position of each sample in the original, unfiltered bundle.
    pub sample_ids: Vec<usize>,
}

impl EvaluationBundle {
    /// Bundle with the required roles only; optional roles start empty.
    pub fn new(
        method_name: impl Into<String>,
        normalization_range: (f64, f64),
        inputs: TensorSet,
        counterfactuals: TensorSet,
        f_probs_inputs: PredictionSet,
        f_probs_counterfactuals: PredictionSet,
    ) -> Self {
        let n = inputs.sample_count();
        Self {
            method_name: method_name.into(),
            normalization_range,
            inputs,
            counterfactuals,
            targets: None,
            f_probs_inputs,
            f_probs_counterfactuals,
            oracle_probs_counterfactuals: None,
            reconstructions: None,
            embeddings_reference: None,
            embeddings_counterfactuals: None,
            label_oracles: Vec::new(),
            sample_ids: (0..n).collect(),
        }
    }

    pub fn sample_count(&self) -> usize {
        self.inputs.sample_count()
    }

    pub fn label_oracle(&self, name: &str) -> Option<&LabelOracleOutputs> {
        self.label_oracles.iter().find(|l| l.label_name == name)
    }

    /// Re-expresses every pixel-space tensor (inputs, counterfactuals,
    /// reconstructions) in another value range by the affine map that sends
    /// the current range onto `range`. Model outputs and embeddings describe
    /// the same underlying images and are left unchanged.
    pub fn renormalized(&self, range: (f64, f64)) -> EvaluationBundle {
        let (lo_a, hi_a) = self.normalization_range;
        let (lo_b, hi_b) = range;
        let scale = (hi_b - lo_b) / (hi_a - lo_a);
        let map = |v: f64| lo_b + (v - lo_a) * scale;
        let mut out = self.clone();
        out.normalization_range = range;
        out.inputs = self.inputs.map_values(map);
        out.counterfactuals = self.counterfactuals.map_values(map);
        out.reconstructions = self
            .reconstructions
            .as_ref()
            .map(|r| ReconstructionTriplet {
                ae_target: r.ae_target.map_values(map),
                ae_input_class: r.ae_input_class.map_values(map),
                ae_full: r.ae_full.map_values(map),
            });
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// One violated bundle constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl Finding {
    fn error(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            field: field.into(),
            message: message.into(),
        }
    }

    fn warning(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

fn check_tensor(field: &str, t: &TensorSet, out: &mut Vec<Finding>) {
    if t.sample_count() == 0 {
        out.push(Finding::error(field, "tensor has no samples"));
    }
    if t.values().iter().any(|v| !v.is_finite()) {
        out.push(Finding::error(field, "non-finite value"));
    }
}

fn check_predictions(field: &str, p: &PredictionSet, n: usize, out: &mut Vec<Finding>) {
    if p.len() != n {
        out.push(Finding::error(
            field,
            format!("sample count mismatch: expected {n}, got {}", p.len()),
        ));
    }
    if p.classes() < 2 {
        out.push(Finding::error(field, "fewer than 2 classes"));
    }
    if let Some(i) = p
        .rows()
        .position(|r| r.iter().any(|&v| !(v >= 0.0) || !v.is_finite()))
    {
        out.push(Finding::error(
            field,
            format!("negative or non-finite probability in row {i}"),
        ));
    }
    if let Some(i) = p
        .rows()
        .position(|r| (r.iter().sum::<f64>() - 1.0).abs() > PROBABILITY_SUM_TOL)
    {
        out.push(Finding::error(
            field,
            format!("distribution does not sum to 1 (row {i})"),
        ));
    }
}

fn check_same_shape(field: &str, t: &TensorSet, reference: &TensorSet, out: &mut Vec<Finding>) {
    if t.sample_count() != reference.sample_count() {
        out.push(Finding::error(
            field,
            format!(
                "sample count mismatch: expected {}, got {}",
                reference.sample_count(),
                t.sample_count()
            ),
        ));
    } else if t.shape() != reference.shape() {
        out.push(Finding::error(
            field,
            format!(
                "shape mismatch: expected {:?}, got {:?}",
                reference.shape(),
                t.shape()
            ),
        ));
    }
}

/// Checks every bundle invariant; an empty result means the bundle is consistent.
pub fn validate_bundle(b: &EvaluationBundle) -> Vec<Finding> {
    let mut out = Vec::new();
    let n = b.inputs.sample_count();

    check_tensor("inputs", &b.inputs, &mut out);
    check_tensor("counterfactuals", &b.counterfactuals, &mut out);
    check_same_shape("counterfactuals", &b.counterfactuals, &b.inputs, &mut out);

    let (lo, hi) = b.normalization_range;
    if !(lo < hi) {
        out.push(Finding::error(
            "normalization_range",
            format!("low {lo} must be below high {hi}"),
        ));
    }

    check_predictions("f_probs_inputs", &b.f_probs_inputs, n, &mut out);
    check_predictions(
        "f_probs_counterfactuals",
        &b.f_probs_counterfactuals,
        n,
        &mut out,
    );
    if b.f_probs_inputs.classes() != b.f_probs_counterfactuals.classes() {
        out.push(Finding::error(
            "f_probs_counterfactuals",
            "class count differs from f_probs_inputs",
        ));
    }
    let k = b.f_probs_inputs.classes();

    if let Some(targets) = &b.targets {
        if targets.len() != n {
            out.push(Finding::error(
                "targets",
                format!("sample count mismatch: expected {n}, got {}", targets.len()),
            ));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= k) {
            out.push(Finding::error(
                "targets",
                format!("target class {t} out of range for {k} classes"),
            ));
        }
    }

    if let Some(o) = &b.oracle_probs_counterfactuals {
        check_predictions("oracle_probs_counterfactuals", o, n, &mut out);
        if o.classes() != k {
            out.push(Finding::error(
                "oracle_probs_counterfactuals",
                "class count differs from the explained classifier",
            ));
        }
    }

    if let Some(r) = &b.reconstructions {
        for (field, t) in [
            ("ae_target", &r.ae_target),
            ("ae_input_class", &r.ae_input_class),
            ("ae_full", &r.ae_full),
        ] {
            check_tensor(field, t, &mut out);
            check_same_shape(field, t, &b.counterfactuals, &mut out);
        }
    }

    match (&b.embeddings_reference, &b.embeddings_counterfactuals) {
        (Some(r), Some(c)) => {
            check_tensor("embeddings_reference", r, &mut out);
            check_tensor("embeddings_counterfactuals", c, &mut out);
            if c.sample_count() != n {
                out.push(Finding::error(
                    "embeddings_counterfactuals",
                    format!(
                        "sample count mismatch: expected {n}, got {}",
                        c.sample_count()
                    ),
                ));
            }
            if r.sample_len() != c.sample_len() {
                out.push(Finding::error(
                    "embeddings_counterfactuals",
                    format!(
                        "embedding dimension mismatch: {} vs {}",
                        r.sample_len(),
                        c.sample_len()
                    ),
                ));
            }
        }
        (Some(_), None) | (None, Some(_)) => {
            out.push(Finding::error(
                "embeddings",
                "reference and counterfactual embeddings must come together",
            ));
        }
        (None, None) => {}
    }

    for (i, l) in b.label_oracles.iter().enumerate() {
        let field = format!("label_oracles[{}]", l.label_name);
        check_predictions(&format!("{field}.inputs"), &l.probs_inputs, n, &mut out);
        check_predictions(
            &format!("{field}.counterfactuals"),
            &l.probs_counterfactuals,
            n,
            &mut out,
        );
        if l.probs_inputs.classes() != l.probs_counterfactuals.classes() {
            out.push(Finding::error(
                field.clone(),
                "inputs and counterfactuals disagree on class count",
            ));
        }
        if b.label_oracles[..i]
            .iter()
            .any(|o| o.label_name == l.label_name)
        {
            out.push(Finding::warning(
                field,
                "duplicate label name; only the first is addressable",
            ));
        }
    }

    if b.sample_ids.len() != n {
        out.push(Finding::error(
            "sample_ids",
            format!(
                "sample count mismatch: expected {n}, got {}",
                b.sample_ids.len()
            ),
        ));
    }
    out
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidityMode {
    /// argmax f(c) ≠ argmax f(x)
    ClassChange,
    /// argmax f(c) = target
    TargetMatch,
}

impl ValidityMode {
    /// Target-match when the bundle carries targets, class-change otherwise.
    pub fn auto_for(b: &EvaluationBundle) -> Self {
        if b.targets.is_some() {
            ValidityMode::TargetMatch
        } else {
            ValidityMode::ClassChange
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityMask {
    pub flags: Vec<bool>,
    pub mode: ValidityMode,
    pub valid_count: usize,
}

impl ValidityMask {
    pub fn new(flags: Vec<bool>, mode: ValidityMode) -> Self {
        let valid_count = flags.iter().filter(|&&f| f).count();
        Self {
            flags,
            mode,
            valid_count,
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn selected(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn compute_validity_mask(
    b: &EvaluationBundle,
    mode: ValidityMode,
) -> Result<ValidityMask, DataError> {
    let n = b.sample_count();
    let flags = match mode {
        ValidityMode::ClassChange => (0..n)
            .map(|i| b.f_probs_counterfactuals.argmax(i) != b.f_probs_inputs.argmax(i))
            .collect(),
        ValidityMode::TargetMatch => {
            let targets = b.targets.as_ref().ok_or(DataError::MissingTargets)?;
            (0..n)
                .map(|i| b.f_probs_counterfactuals.argmax(i) == targets[i])
                .collect()
        }
    };
    Ok(ValidityMask::new(flags, mode))
}

/// Keeps exactly the flagged samples, in order. The reference embeddings
/// describe the test set and pass through untouched.
pub fn filter_by_mask(
    b: &EvaluationBundle,
    m: &ValidityMask,
) -> Result<EvaluationBundle, DataError> {
    if m.len() != b.sample_count() {
        return Err(DataError::LengthMismatch {
            mask: m.len(),
            bundle: b.sample_count(),
        });
    }
    if m.valid_count == 0 {
        return Err(DataError::EmptySelection);
    }
    if m.valid_count == m.len() {
        return Ok(b.clone());
    }
    let idx = m.selected();
    Ok(EvaluationBundle {
        method_name: b.method_name.clone(),
        normalization_range: b.normalization_range,
        inputs: b.inputs.select(&idx),
        counterfactuals: b.counterfactuals.select(&idx),
        targets: b
            .targets
            .as_ref()
            .map(|t| idx.iter().map(|&i| t[i]).collect()),
        f_probs_inputs: b.f_probs_inputs.select(&idx),
        f_probs_counterfactuals: b.f_probs_counterfactuals.select(&idx),
        oracle_probs_counterfactuals: b
            .oracle_probs_counterfactuals
            .as_ref()
            .map(|o| o.select(&idx)),
        reconstructions: b.reconstructions.as_ref().map(|r| ReconstructionTriplet {
            ae_target: r.ae_target.select(&idx),
            ae_input_class: r.ae_input_class.select(&idx),
            ae_full: r.ae_full.select(&idx),
        }),
        embeddings_reference: b.embeddings_reference.clone(),
        embeddings_counterfactuals: b
            .embeddings_counterfactuals
            .as_ref()
            .map(|e| e.select(&idx)),
        label_oracles: b
            .label_oracles
            .iter()
            .map(|l| LabelOracleOutputs {
                label_name: l.label_name.clone(),
                probs_inputs: l.probs_inputs.select(&idx),
                probs_counterfactuals: l.probs_counterfactuals.select(&idx),
            })
            .collect(),
        sample_ids: idx.iter().map(|&i| b.sample_ids[i]).collect(),
    })
}
