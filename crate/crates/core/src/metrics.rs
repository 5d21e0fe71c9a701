//! Metric kernels: distances, target-class validity, auto-encoder
//! reconstruction ratios, Fréchet distance on embeddings, label variation
//! and the oracle score.
//!
//! Per-sample kernels take plain slices; bundle-level helpers return a full
//! [`PerSampleScores`] vector so extremes can be inspected without recomputing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    compute_validity_mask, DataError, EvaluationBundle, TensorSet, ValidityMode,
    PROBABILITY_SUM_TOL,
};
use crate::kahan::KahanSum;
use crate::linalg::{mean_and_cov, sqrtm_psd, trace_sqrtm_psd, LinalgError, DEFAULT_PSD_CLAMP};

/// FID values in `[-FID_CLAMP, 0)` are rounding noise and reported as 0.
pub const FID_CLAMP: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("distributions have different support sizes ({left} vs {right})")]
    SupportMismatch { left: usize, right: usize },
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("bundle has no `{0}` role")]
    MissingRole(&'static str),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("invalid metric config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JsLogBase {
    Natural,
    Base2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceNorm {
    /// divide by n − 1
    Unbiased,
}

/// Validity mode as configured; `Auto` resolves per bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidityPolicy {
    Auto,
    ClassChange,
    TargetMatch,
}

impl ValidityPolicy {
    pub fn resolve(self, b: &EvaluationBundle) -> ValidityMode {
        match self {
            ValidityPolicy::Auto => ValidityMode::auto_for(b),
            ValidityPolicy::ClassChange => ValidityMode::ClassChange,
            ValidityPolicy::TargetMatch => ValidityMode::TargetMatch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// argmax f(c) = argmax o(c)
    Agreement,
    /// argmax f(c) = q and argmax o(c) = q
    TargetBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub epsilon: f64,
    pub js_log_base: JsLogBase,
    pub covariance: CovarianceNorm,
    pub validity_mode: ValidityPolicy,
    pub oracle_mode: OracleMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            js_log_base: JsLogBase::Natural,
            covariance: CovarianceNorm::Unbiased,
            validity_mode: ValidityPolicy::Auto,
            oracle_mode: OracleMode::TargetBoth,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(MetricError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One value per sample, plus the original sample positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSampleScores {
    pub metric_name: String,
    pub values: Vec<f64>,
    pub sample_ids: Vec<usize>,
    /// `None` where the direction depends on context (LVS).
    pub higher_is_better: Option<bool>,
}

/// A count of successes out of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: usize,
    pub n: usize,
}

impl Proportion {
    pub fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.successes as f64 / self.n as f64
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .collect::<KahanSum>()
        .total()
}

/// Σ|xᵢ − cᵢ|
pub fn l1_distance(x: &[f64], c: &[f64]) -> Result<f64, MetricError> {
    check_dims(x, c)?;
    Ok(x.iter()
        .zip(c)
        .map(|(a, b)| (a - b).abs())
        .collect::<KahanSum>()
        .total())
}

/// √Σ(xᵢ − cᵢ)²
pub fn l2_distance(x: &[f64], c: &[f64]) -> Result<f64, MetricError> {
    check_dims(x, c)?;
    Ok(squared_l2(x, c).sqrt())
}

/// Elastic net distance ‖x − c‖₁ + ‖x − c‖₂.
pub fn en_distance(x: &[f64], c: &[f64]) -> Result<f64, MetricError> {
    Ok(l1_distance(x, c)? + l2_distance(x, c)?)
}

/// ‖c − AE_q(c)‖² / (‖c − AE_p(c)‖² + ε)
pub fn im1(
    c: &[f64],
    ae_q_c: &[f64],
    ae_p_c: &[f64],
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    check_dims(c, ae_q_c)?;
    check_dims(c, ae_p_c)?;
    Ok(squared_l2(c, ae_q_c) / (squared_l2(c, ae_p_c) + cfg.epsilon))
}

/// ‖AE_q(c) − AE(c)‖² / (‖c‖₁ + ε)
pub fn im2(
    c: &[f64],
    ae_q_c: &[f64],
    ae_full_c: &[f64],
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    check_dims(c, ae_q_c)?;
    check_dims(c, ae_full_c)?;
    let c_l1 = c.iter().map(|v| v.abs()).collect::<KahanSum>().total();
    Ok(squared_l2(ae_q_c, ae_full_c) / (c_l1 + cfg.epsilon))
}

fn check_distribution(p: &[f64]) -> Result<(), MetricError> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(MetricError::NotADistribution(
            "negative or non-finite entry".into(),
        ));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(MetricError::NotADistribution(format!(
            "entries sum to {total}"
        )));
    }
    Ok(())
}

/// Σ p ln(p/m) over p > 0.
fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).ln())
        .collect::<KahanSum>()
        .total()
}

/// Jensen–Shannon divergence, ½KL(p‖m) + ½KL(q‖m) with m = (p+q)/2.
pub fn js_divergence(p: &[f64], q: &[f64], cfg: &MetricConfig) -> Result<f64, MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::SupportMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    // addition is commutative in IEEE arithmetic, so this is exactly symmetric
    let nats = (0.5 * (kl_to_mixture(p, &m) + kl_to_mixture(q, &m))).max(0.0);
    Ok(match cfg.js_log_base {
        JsLogBase::Natural => nats,
        JsLogBase::Base2 => nats / std::f64::consts::LN_2,
    })
}

fn pairwise_scores(
    name: &str,
    b: &EvaluationBundle,
    f: impl Fn(&[f64], &[f64]) -> Result<f64, MetricError>,
) -> Result<PerSampleScores, MetricError> {
    let values = b
        .inputs
        .samples()
        .zip(b.counterfactuals.samples())
        .map(|(x, c)| f(x, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PerSampleScores {
        metric_name: name.into(),
        values,
        sample_ids: b.sample_ids.clone(),
        higher_is_better: Some(false),
    })
}

pub fn l1_scores(b: &EvaluationBundle) -> Result<PerSampleScores, MetricError> {
    pairwise_scores("L1", b, l1_distance)
}

pub fn l2_scores(b: &EvaluationBundle) -> Result<PerSampleScores, MetricError> {
    pairwise_scores("L2", b, l2_distance)
}

pub fn en_scores(b: &EvaluationBundle) -> Result<PerSampleScores, MetricError> {
    pairwise_scores("EN", b, en_distance)
}

pub fn im1_scores(
    b: &EvaluationBundle,
    cfg: &MetricConfig,
) -> Result<PerSampleScores, MetricError> {
    let r = b
        .reconstructions
        .as_ref()
        .ok_or(MetricError::MissingRole("reconstructions"))?;
    let values = (0..b.sample_count())
        .map(|i| {
            im1(
                b.counterfactuals.sample(i),
                r.ae_target.sample(i),
                r.ae_input_class.sample(i),
                cfg,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PerSampleScores {
        metric_name: "IM1".into(),
        values,
        sample_ids: b.sample_ids.clone(),
        higher_is_better: Some(false),
    })
}

pub fn im2_scores(
    b: &EvaluationBundle,
    cfg: &MetricConfig,
) -> Result<PerSampleScores, MetricError> {
    let r = b
        .reconstructions
        .as_ref()
        .ok_or(MetricError::MissingRole("reconstructions"))?;
    let values = (0..b.sample_count())
        .map(|i| {
            im2(
                b.counterfactuals.sample(i),
                r.ae_target.sample(i),
                r.ae_full.sample(i),
                cfg,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PerSampleScores {
        metric_name: "IM2".into(),
        values,
        sample_ids: b.sample_ids.clone(),
        higher_is_better: Some(false),
    })
}

/// Fraction of valid counterfactuals. Always evaluated on the full bundle.
pub fn tcv(b: &EvaluationBundle, cfg: &MetricConfig) -> Result<Proportion, MetricError> {
    let mask = compute_validity_mask(b, cfg.validity_mode.resolve(b))?;
    Ok(Proportion {
        successes: mask.valid_count,
        n: mask.len(),
    })
}

/// Fréchet distance between Gaussian fits of two embedding sets:
/// ‖μ₁−μ₂‖² + tr Σ₁ + tr Σ₂ − 2 tr √(Σ₁^½ Σ₂ Σ₁^½).
pub fn fid(
    emb_ref: &TensorSet,
    emb_cf: &TensorSet,
    _cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    if emb_ref.sample_len() != emb_cf.sample_len() {
        return Err(MetricError::DimensionMismatch {
            left: emb_ref.sample_len(),
            right: emb_cf.sample_len(),
        });
    }
    for e in [emb_ref, emb_cf] {
        if e.sample_count() < 2 {
            return Err(LinalgError::TooFewSamples(e.sample_count()).into());
        }
    }
    let a = emb_ref.to_matrix().ok_or(LinalgError::TooFewSamples(0))?;
    let b = emb_cf.to_matrix().ok_or(LinalgError::TooFewSamples(0))?;
    let (mu1, sigma1) = mean_and_cov(&a)?;
    let (mu2, sigma2) = mean_and_cov(&b)?;

    let mean_term = mu1
        .0
        .iter()
        .zip(&mu2.0)
        .map(|(x, y)| (x - y) * (x - y))
        .collect::<KahanSum>()
        .total();
    let root1 = sqrtm_psd(&sigma1, DEFAULT_PSD_CLAMP)?;
    let inner = root1.matmul(&sigma2)?.matmul(&root1)?.symmetrized();
    let cross = trace_sqrtm_psd(&inner, DEFAULT_PSD_CLAMP)?;

    let mut acc = KahanSum::new();
    acc.add(mean_term);
    acc.add(sigma1.trace());
    acc.add(sigma2.trace());
    acc.add(-2.0 * cross);
    let value = acc.total();
    Ok(if (-FID_CLAMP..0.0).contains(&value) {
        0.0
    } else {
        value
    })
}

/// Fréchet distance on the bundle's embedding roles.
pub fn fid_for_bundle(b: &EvaluationBundle, cfg: &MetricConfig) -> Result<f64, MetricError> {
    let r = b
        .embeddings_reference
        .as_ref()
        .ok_or(MetricError::MissingRole("embeddings_reference"))?;
    let c = b
        .embeddings_counterfactuals
        .as_ref()
        .ok_or(MetricError::MissingRole("embeddings_counterfactuals"))?;
    fid(r, c, cfg)
}

/// Per-sample JS divergence between a label oracle's outputs on x and cf(x).
/// The mean of the returned values is the label variation score for `label`.
pub fn lvs(
    b: &EvaluationBundle,
    label: &str,
    cfg: &MetricConfig,
) -> Result<PerSampleScores, MetricError> {
    let oracle = b
        .label_oracle(label)
        .ok_or_else(|| MetricError::UnknownLabel(label.to_string()))?;
    let values = oracle
        .probs_inputs
        .rows()
        .zip(oracle.probs_counterfactuals.rows())
        .map(|(p, q)| js_divergence(p, q, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PerSampleScores {
        metric_name: format!("LVS[{label}]"),
        values,
        sample_ids: b.sample_ids.clone(),
        higher_is_better: None,
    })
}

/// Share of counterfactuals on which the oracle backs the explained classifier.
pub fn oracle_score(b: &EvaluationBundle, cfg: &MetricConfig) -> Result<Proportion, MetricError> {
    let oracle = b
        .oracle_probs_counterfactuals
        .as_ref()
        .ok_or(MetricError::MissingRole("oracle_probs_counterfactuals"))?;
    let f = &b.f_probs_counterfactuals;
    let n = b.sample_count();
    let successes = match cfg.oracle_mode {
        OracleMode::Agreement => (0..n).filter(|&i| f.argmax(i) == oracle.argmax(i)).count(),
        OracleMode::TargetBoth => {
            let targets = b.targets.as_ref().ok_or(DataError::MissingTargets)?;
            (0..n)
                .filter(|&i| f.argmax(i) == targets[i] && oracle.argmax(i) == targets[i])
                .count()
        }
    };
    Ok(Proportion { successes, n })
}
