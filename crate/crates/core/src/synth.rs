//! Planted-marker synthetic world, counterfactual method simulators and the
//! FakeMNIST constructor.
//!
//! Every class centroid carries a code in the first `marker_dims` coordinates
//! and a second code in the remaining "body" coordinates. The flawed classifier
//! sees the marker coordinates only; the oracle sees everything. A tiny change
//! to the markers therefore fools the flawed classifier but not the oracle.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    has_errors, validate_bundle, DataError, EvaluationBundle, LabelOracleOutputs, PredictionSet,
    ReconstructionTriplet, TensorSet,
};
use crate::kahan::KahanSum;
use crate::linalg::{dot, mean_and_cov, sym_eigen, LinalgError, Matrix, Vector, DEFAULT_EIGEN_TOL};
use crate::rng::StreamRng;

/// Body amplitude relative to the marker amplitude in each centroid code.
pub const BODY_AMPLITUDE: f64 = 0.5;
/// Number of per-label attribute oracles the world exposes (fewer when `dim` is small).
pub const LABEL_COUNT: usize = 3;
/// Largest number of principal components kept by the auto-encoders.
pub const MAX_AE_COMPONENTS: usize = 8;
/// Share of body coordinates the mid simulator perturbs.
pub const MID_NOISE_FRACTION: f64 = 0.25;
/// Extra step beyond the flawed decision boundary, relative to the centroid gap.
pub const TINY_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("attribute {0} does not exist")]
    UnknownAttribute(usize),
    #[error("classifier already predicts target class {0}")]
    AlreadyTarget(usize),
    #[error("no blend weight in the grid flips both classifiers to class {0}")]
    NoValidAlpha(usize),
    #[error("image width {width} cannot hold {classes} class pixels")]
    TooNarrow { width: usize, classes: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("generated bundle failed validation: {0}")]
    InvalidBundle(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub dim: usize,
    pub classes: usize,
    pub marker_dims: usize,
    pub class_separation: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            dim: 64,
            classes: 5,
            marker_dims: 8,
            class_separation: 10.0,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::SpecInvalid(m));
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.marker_dims < 1 || self.marker_dims >= self.dim {
            return fail(format!(
                "marker dims must satisfy 1 <= m < dim, got m={} dim={}",
                self.marker_dims, self.dim
            ));
        }
        if self.n_per_class < 2 {
            return fail(format!(
                "need at least 2 samples per class, got {}",
                self.n_per_class
            ));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return fail(format!(
                "class separation must be positive, got {}",
                self.class_separation
            ));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return fail(format!("noise sd must be positive, got {}", self.noise_sd));
        }
        Ok(())
    }
}

/// PCA reconstruction map: `mean + P Pᵀ (s − mean)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAutoencoder {
    pub mean: Vector,
    /// Principal directions, largest variance first.
    pub components: Vec<Vector>,
    pub k: usize,
}

impl LinearAutoencoder {
    /// Fits the top-`k` principal directions of `samples` (one per row).
    pub fn fit(samples: &Matrix, k: usize) -> Result<Self, SynthError> {
        let (mean, cov) = mean_and_cov(samples)?;
        let eig = sym_eigen(&cov, DEFAULT_EIGEN_TOL)?;
        let k = k.min(cov.rows());
        let components = (0..k).map(|j| eig.vectors.column(j)).collect();
        Ok(Self {
            mean,
            components,
            k,
        })
    }

    /// Same subspace, centred at the origin, so reconstruction is linear.
    pub fn zero_mean(&self) -> Self {
        Self {
            mean: Vector::zeros(self.mean.dim()),
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }
}

pub fn reconstruct(ae: &LinearAutoencoder, sample: &[f64]) -> Result<Vec<f64>, SynthError> {
    if sample.len() != ae.dim() {
        return Err(SynthError::DimensionMismatch {
            expected: ae.dim(),
            got: sample.len(),
        });
    }
    let centred: Vec<f64> = sample
        .iter()
        .zip(ae.mean.as_slice())
        .map(|(s, m)| s - m)
        .collect();
    let mut out = ae.mean.0.clone();
    for v in &ae.components {
        let coef = dot(&centred, v.as_slice());
        for (o, vi) in out.iter_mut().zip(v.as_slice()) {
            *o += coef * vi;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    /// `classes × n_per_class` samples, class-major.
    pub data: TensorSet,
    pub labels: Vec<usize>,
    pub centroids: Vec<Vector>,
    /// Marker coordinates of each centroid.
    pub flawed_centroids: Vec<Vector>,
    /// Mutually orthonormal attribute directions; attribute 0 runs from class 0 to class 1.
    pub label_directions: Vec<Vector>,
    pub label_names: Vec<String>,
    pub class_autoencoders: Vec<LinearAutoencoder>,
    pub global_autoencoder: LinearAutoencoder,
    pub spec: SyntheticSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    /// Nearest centroid on marker coordinates only.
    Flawed,
    /// Nearest centroid on all coordinates.
    Oracle,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .collect::<KahanSum>()
        .total()
}

fn unit(v: Vec<f64>) -> Vector {
    let n = dot(&v, &v).sqrt();
    Vector(v.into_iter().map(|x| x / n).collect())
}

/// Code for class `k` inside a subspace of `size` coordinates: a one-hot slot,
/// stacked into levels when there are more classes than slots.
fn subspace_code(k: usize, size: usize, amplitude: f64) -> (usize, f64) {
    (k % size, (k / size + 1) as f64 * amplitude)
}

fn make_centroids(spec: &SyntheticSpec) -> Vec<Vector> {
    let m = spec.marker_dims;
    let body = spec.dim - m;
    let raw: Vec<Vec<f64>> = (0..spec.classes)
        .map(|k| {
            let mut c = vec![0.0; spec.dim];
            let (i, a) = subspace_code(k, m, 1.0);
            c[i] = a;
            let (j, b) = subspace_code(k, body, BODY_AMPLITUDE);
            c[m + j] = b;
            c
        })
        .collect();
    let min_dist = |cs: &[Vec<f64>]| {
        let mut best = f64::INFINITY;
        for i in 0..cs.len() {
            for j in i + 1..cs.len() {
                best = best.min(sq_dist(&cs[i], &cs[j]).sqrt());
            }
        }
        best
    };
    let mut scale = spec.class_separation / min_dist(&raw);
    loop {
        let scaled: Vec<Vec<f64>> = raw
            .iter()
            .map(|c| c.iter().map(|v| v * scale).collect())
            .collect();
        if min_dist(&scaled) >= spec.class_separation {
            return scaled.into_iter().map(Vector).collect();
        }
        scale = scale.next_up();
    }
}

/// Coordinates no centroid uses; attribute directions there are invisible to both classifiers.
fn free_dims(centroids: &[Vector]) -> Vec<usize> {
    let dim = centroids[0].dim();
    (0..dim)
        .rev()
        .filter(|&d| centroids.iter().all(|c| c.0[d] == 0.0))
        .collect()
}

fn make_label_directions(centroids: &[Vector]) -> Vec<Vector> {
    let dim = centroids[0].dim();
    let first = unit(
        centroids[1]
            .0
            .iter()
            .zip(&centroids[0].0)
            .map(|(a, b)| a - b)
            .collect(),
    );
    let mut dirs = vec![first];
    let wanted = LABEL_COUNT.min(dim);
    let mut candidates = free_dims(centroids);
    candidates.extend((0..dim).rev());
    for d in candidates {
        if dirs.len() == wanted {
            break;
        }
        let mut v = vec![0.0; dim];
        v[d] = 1.0;
        // Gram–Schmidt, twice for numerical orthogonality
        for _ in 0..2 {
            for u in &dirs {
                let p = dot(&v, u.as_slice());
                for (vi, ui) in v.iter_mut().zip(u.as_slice()) {
                    *vi -= p * ui;
                }
            }
        }
        if dot(&v, &v).sqrt() > 1e-6 {
            dirs.push(unit(v));
        }
    }
    dirs
}

pub fn gen_world(spec: &SyntheticSpec) -> Result<SyntheticWorld, SynthError> {
    spec.validate()?;
    let centroids = make_centroids(spec);
    let m = spec.marker_dims;
    let flawed_centroids = centroids
        .iter()
        .map(|c| Vector(c.0[..m].to_vec()))
        .collect();

    let root = StreamRng::new(spec.seed, "world");
    let mut values = Vec::with_capacity(spec.classes * spec.n_per_class * spec.dim);
    let mut labels = Vec::with_capacity(spec.classes * spec.n_per_class);
    for (k, c) in centroids.iter().enumerate() {
        let mut rng = root.child("samples").indexed(k as u64);
        for _ in 0..spec.n_per_class {
            values.extend(
                c.0.iter()
                    .map(|mu| mu + spec.noise_sd * rng.next_gaussian()),
            );
            labels.push(k);
        }
    }
    let data = TensorSet::new("world", vec![labels.len(), spec.dim], values)?;

    let k_ae = MAX_AE_COMPONENTS.min(spec.dim - 1);
    let all = data.to_matrix().expect("rank-2 world data");
    let class_autoencoders = (0..spec.classes)
        .map(|k| {
            let rows: Vec<Vec<f64>> = (0..spec.n_per_class)
                .map(|i| all.row(k * spec.n_per_class + i).to_vec())
                .collect();
            LinearAutoencoder::fit(&Matrix::from_rows(&rows)?, k_ae)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let global_autoencoder = LinearAutoencoder::fit(&all, k_ae)?;

    let label_directions = make_label_directions(&centroids);
    let label_names = (0..label_directions.len())
        .map(|i| format!("attr{i}"))
        .collect();

    Ok(SyntheticWorld {
        data,
        labels,
        centroids,
        flawed_centroids,
        label_directions,
        label_names,
        class_autoencoders,
        global_autoencoder,
        spec: *spec,
    })
}

fn softmax_neg(d2: &[f64]) -> Vec<f64> {
    let best = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = d2.iter().map(|d| (best - d).exp()).collect();
    let total = w.iter().copied().collect::<KahanSum>().total();
    w.into_iter().map(|v| v / total).collect()
}

impl SyntheticWorld {
    fn check_dim(&self, sample: &[f64]) -> Result<(), SynthError> {
        if sample.len() != self.spec.dim {
            return Err(SynthError::DimensionMismatch {
                expected: self.spec.dim,
                got: sample.len(),
            });
        }
        Ok(())
    }

    fn sq_distances(&self, sample: &[f64], which: Classifier) -> Vec<f64> {
        match which {
            Classifier::Oracle => self
                .centroids
                .iter()
                .map(|c| sq_dist(sample, c.as_slice()))
                .collect(),
            Classifier::Flawed => {
                let m = self.spec.marker_dims;
                self.flawed_centroids
                    .iter()
                    .map(|c| sq_dist(&sample[..m], c.as_slice()))
                    .collect()
            }
        }
    }

    /// Nearest-centroid class, lowest index on ties.
    pub fn predict(&self, sample: &[f64], which: Classifier) -> Result<usize, SynthError> {
        self.check_dim(sample)?;
        let d2 = self.sq_distances(sample, which);
        let mut best = 0;
        for (k, &d) in d2.iter().enumerate() {
            if d < d2[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Embedding used for FID: negative squared distances to the oracle centroids.
    pub fn embed(&self, sample: &[f64]) -> Result<Vec<f64>, SynthError> {
        self.check_dim(sample)?;
        Ok(self
            .sq_distances(sample, Classifier::Oracle)
            .into_iter()
            .map(|d| -d)
            .collect())
    }
}

/// Softmax over negative squared centroid distances.
pub fn classify(
    world: &SyntheticWorld,
    sample: &[f64],
    which: Classifier,
) -> Result<Vec<f64>, SynthError> {
    world.check_dim(sample)?;
    Ok(softmax_neg(&world.sq_distances(sample, which)))
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary attribute oracle `(1 − σ, σ)` with `σ = logistic(⟨s, dir⟩ / noise_sd)`.
pub fn label_oracle(
    world: &SyntheticWorld,
    sample: &[f64],
    attribute: usize,
) -> Result<[f64; 2], SynthError> {
    let dir = world
        .label_directions
        .get(attribute)
        .ok_or(SynthError::UnknownAttribute(attribute))?;
    world.check_dim(sample)?;
    let s = logistic(dot(sample, dir.as_slice()) / world.spec.noise_sd);
    Ok([1.0 - s, s])
}

/// Moves only the marker coordinates, just past the flawed decision boundary
/// toward the target's flawed centroid.
pub fn cf_tiny_change(
    world: &SyntheticWorld,
    x: &[f64],
    target: usize,
) -> Result<Vec<f64>, SynthError> {
    check_target(world, target)?;
    let mut current = world.predict(x, Classifier::Flawed)?;
    if current == target {
        return Err(SynthError::AlreadyTarget(target));
    }
    let m = world.spec.marker_dims;
    let mut c = x.to_vec();
    let mu_q = world.flawed_centroids[target].as_slice();
    // one step suffices for two classes; a third class can capture the path
    for _ in 0..2 * world.spec.classes {
        let mu_p = world.flawed_centroids[current].as_slice();
        let d: Vec<f64> = mu_q.iter().zip(mu_p).map(|(q, p)| q - p).collect();
        let gap = sq_dist(&c[..m], mu_q) - sq_dist(&c[..m], mu_p);
        let t = gap / (2.0 * dot(&d, &d)) + TINY_MARGIN;
        for (ci, di) in c[..m].iter_mut().zip(&d) {
            *ci += t * di;
        }
        current = world.predict(&c, Classifier::Flawed)?;
        if current == target {
            return Ok(c);
        }
    }
    Err(SynthError::NoValidAlpha(target))
}

fn check_target(world: &SyntheticWorld, target: usize) -> Result<(), SynthError> {
    if target >= world.spec.classes {
        return Err(SynthError::InvalidArgument(format!(
            "target {target} out of range for {} classes",
            world.spec.classes
        )));
    }
    Ok(())
}

/// Smallest grid weight `α ∈ {0.05, …, 1}` at which `x + α(μ_target − x)`
/// is classified as `target` by both classifiers, with the blend itself.
pub fn prototype_alpha(
    world: &SyntheticWorld,
    x: &[f64],
    target: usize,
) -> Result<(f64, Vec<f64>), SynthError> {
    check_target(world, target)?;
    world.check_dim(x)?;
    let mu = world.centroids[target].as_slice();
    for step in 1..=20 {
        let alpha = step as f64 / 20.0;
        let c: Vec<f64> = x
            .iter()
            .zip(mu)
            .map(|(xi, mi)| xi + alpha * (mi - xi))
            .collect();
        if world.predict(&c, Classifier::Flawed)? == target
            && world.predict(&c, Classifier::Oracle)? == target
        {
            return Ok((alpha, c));
        }
    }
    Err(SynthError::NoValidAlpha(target))
}

pub fn cf_prototype_blend(
    world: &SyntheticWorld,
    x: &[f64],
    target: usize,
) -> Result<Vec<f64>, SynthError> {
    prototype_alpha(world, x, target).map(|(_, c)| c)
}

/// Prototype blend on the marker coordinates plus Gaussian noise on a random
/// `fraction` of the body coordinates.
pub fn cf_mid_with_fraction(
    world: &SyntheticWorld,
    x: &[f64],
    target: usize,
    fraction: f64,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, SynthError> {
    check_target(world, target)?;
    if world.predict(x, Classifier::Flawed)? == target {
        return Err(SynthError::AlreadyTarget(target));
    }
    let m = world.spec.marker_dims;
    let (_, proto) = prototype_alpha(world, x, target)?;
    let mut c = x.to_vec();
    c[..m].copy_from_slice(&proto[..m]);
    let mut body: Vec<usize> = (m..world.spec.dim).collect();
    rng.shuffle(&mut body);
    let count = ((body.len() as f64) * fraction).round() as usize;
    for &d in &body[..count.min(body.len())] {
        c[d] += world.spec.noise_sd * rng.next_gaussian();
    }
    Ok(c)
}

pub fn cf_mid(
    world: &SyntheticWorld,
    x: &[f64],
    target: usize,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, SynthError> {
    cf_mid_with_fraction(world, x, target, MID_NOISE_FRACTION, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfMethod {
    Tiny,
    Mid,
    Prototype,
}

impl CfMethod {
    pub const ALL: [CfMethod; 3] = [CfMethod::Tiny, CfMethod::Mid, CfMethod::Prototype];

    pub fn name(self) -> &'static str {
        match self {
            CfMethod::Tiny => "tiny",
            CfMethod::Mid => "mid",
            CfMethod::Prototype => "prototype",
        }
    }
}

impl std::fmt::Display for CfMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CfMethod {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tiny" => Ok(CfMethod::Tiny),
            "mid" => Ok(CfMethod::Mid),
            "prototype" | "proto" => Ok(CfMethod::Prototype),
            other => Err(SynthError::InvalidArgument(format!(
                "unknown method `{other}`"
            ))),
        }
    }
}

/// Target for one sample: uniform over classes that neither classifier
/// currently assigns to `x` (falling back to "not the flawed class").
fn pick_target(
    world: &SyntheticWorld,
    x: &[f64],
    rng: &mut StreamRng,
) -> Result<usize, SynthError> {
    let flawed = world.predict(x, Classifier::Flawed)?;
    let oracle = world.predict(x, Classifier::Oracle)?;
    let mut options: Vec<usize> = (0..world.spec.classes)
        .filter(|&k| k != flawed && k != oracle)
        .collect();
    if options.is_empty() {
        options = (0..world.spec.classes).filter(|&k| k != flawed).collect();
    }
    Ok(options[rng.below(options.len())])
}

fn rows_to_tensor(name: &str, rows: &[Vec<f64>]) -> Result<TensorSet, SynthError> {
    Ok(TensorSet::from_rows(name, rows)?)
}

/// Runs one simulator over `n_eval` seeded samples and packs every role the
/// metrics need. Sample draws and targets depend on `seed` only, so bundles
/// built for different methods with the same seed are paired.
pub fn build_bundle(
    world: &SyntheticWorld,
    method: CfMethod,
    n_eval: usize,
    seed: u64,
) -> Result<EvaluationBundle, SynthError> {
    let total = world.data.sample_count();
    if n_eval == 0 || n_eval > total {
        return Err(SynthError::InvalidArgument(format!(
            "n_eval must be in 1..={total}, got {n_eval}"
        )));
    }
    let root = StreamRng::new(seed, "bundle");
    let mut order: Vec<usize> = (0..total).collect();
    root.child("eval").shuffle(&mut order);
    order.truncate(n_eval);

    let mut inputs = Vec::with_capacity(n_eval);
    let mut cfs = Vec::with_capacity(n_eval);
    let mut targets = Vec::with_capacity(n_eval);
    for (i, &idx) in order.iter().enumerate() {
        let x = world.data.sample(idx).to_vec();
        let target = pick_target(world, &x, &mut root.child("targets").indexed(i as u64))?;
        let c = match method {
            CfMethod::Tiny => cf_tiny_change(world, &x, target)?,
            CfMethod::Prototype => cf_prototype_blend(world, &x, target)?,
            CfMethod::Mid => cf_mid(world, &x, target, &mut root.child("mid").indexed(i as u64))?,
        };
        inputs.push(x);
        cfs.push(c);
        targets.push(target);
    }

    let probs = |rows: &[Vec<f64>], which| -> Result<PredictionSet, SynthError> {
        let table = rows
            .iter()
            .map(|r| classify(world, r, which))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PredictionSet::from_rows(&table)?)
    };
    let f_in = probs(&inputs, Classifier::Flawed)?;
    let f_cf = probs(&cfs, Classifier::Flawed)?;
    let oracle_cf = probs(&cfs, Classifier::Oracle)?;

    let mut ae_target = Vec::with_capacity(n_eval);
    let mut ae_input = Vec::with_capacity(n_eval);
    let mut ae_full = Vec::with_capacity(n_eval);
    for (i, c) in cfs.iter().enumerate() {
        ae_target.push(reconstruct(&world.class_autoencoders[targets[i]], c)?);
        ae_input.push(reconstruct(&world.class_autoencoders[f_in.argmax(i)], c)?);
        ae_full.push(reconstruct(&world.global_autoencoder, c)?);
    }

    let embed_all = |rows: &[Vec<f64>]| {
        rows.iter()
            .map(|r| world.embed(r))
            .collect::<Result<Vec<_>, _>>()
    };
    let label_oracles = (0..world.label_directions.len())
        .map(|a| {
            let table = |rows: &[Vec<f64>]| -> Result<PredictionSet, SynthError> {
                let t = rows
                    .iter()
                    .map(|r| label_oracle(world, r, a).map(|p| p.to_vec()))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(PredictionSet::from_rows(&t)?)
            };
            Ok(LabelOracleOutputs {
                label_name: world.label_names[a].clone(),
                probs_inputs: table(&inputs)?,
                probs_counterfactuals: table(&cfs)?,
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;

    let mut b = EvaluationBundle::new(
        method.name(),
        (0.0, 1.0),
        rows_to_tensor("inputs", &inputs)?,
        rows_to_tensor("counterfactuals", &cfs)?,
        f_in,
        f_cf,
    );
    b.targets = Some(targets);
    b.oracle_probs_counterfactuals = Some(oracle_cf);
    b.reconstructions = Some(ReconstructionTriplet {
        ae_target: rows_to_tensor("ae_target", &ae_target)?,
        ae_input_class: rows_to_tensor("ae_input_class", &ae_input)?,
        ae_full: rows_to_tensor("ae_full", &ae_full)?,
    });
    b.embeddings_reference = Some(rows_to_tensor(
        "embeddings_reference",
        &embed_all(&inputs)?,
    )?);
    b.embeddings_counterfactuals = Some(rows_to_tensor(
        "embeddings_counterfactuals",
        &embed_all(&cfs)?,
    )?);
    b.label_oracles = label_oracles;

    let findings = validate_bundle(&b);
    if has_errors(&findings) {
        let msgs: Vec<String> = findings.iter().map(ToString::to_string).collect();
        return Err(SynthError::InvalidBundle(msgs.join("; ")));
    }
    Ok(b)
}

/// Painted images, their new labels and any advisory warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeMnist {
    pub images: TensorSet,
    pub labels: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Shuffles `images`, draws uniform labels and paints each label as a one-hot
/// strip in row 0: columns `0..num_classes` set to the range minimum, then
/// column `label` set to the maximum.
pub fn make_fakemnist(
    images: &TensorSet,
    height: usize,
    width: usize,
    num_classes: usize,
    range: (f64, f64),
    seed: u64,
) -> Result<FakeMnist, SynthError> {
    if num_classes < 2 {
        return Err(SynthError::InvalidArgument(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if width < num_classes {
        return Err(SynthError::TooNarrow {
            width,
            classes: num_classes,
        });
    }
    if images.sample_len() != height * width {
        return Err(SynthError::DimensionMismatch {
            expected: height * width,
            got: images.sample_len(),
        });
    }
    let mut warnings = Vec::new();
    if num_classes > 10 {
        warnings.push(format!(
            "{num_classes} classes exceed the usual 10; painting anyway"
        ));
    }
    let root = StreamRng::new(seed, "fakemnist");
    let n = images.sample_count();
    let mut order: Vec<usize> = (0..n).collect();
    root.child("order").shuffle(&mut order);
    let mut label_rng = root.child("labels");
    let labels: Vec<usize> = (0..n).map(|_| label_rng.below(num_classes)).collect();

    let mut values = Vec::with_capacity(images.values().len());
    for (&src, &label) in order.iter().zip(&labels) {
        let mut img = images.sample(src).to_vec();
        img[..num_classes].fill(range.0);
        img[label] = range.1;
        values.extend(img);
    }
    let mut shape = images.shape().to_vec();
    shape[0] = n;
    Ok(FakeMnist {
        images: TensorSet::new("fakemnist", shape, values)?,
        labels,
        warnings,
    })
}
