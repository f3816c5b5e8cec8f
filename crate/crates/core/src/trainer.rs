//! Projection model, speaker classification losses and the training loop
//! that minimizes `classification + lambda * alignment` per minibatch.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::{Dataset, LossOutput, MiniBatch};
use crate::error::{Error, Result};
use crate::eval::Embedder;
use crate::losses::{combined_loss, da_loss, DaConfig, DaMethod};
use crate::matrix::{dot, norm, Mat};
use crate::rng::SeededRng;
use crate::sampler::{sample, SamplerConfig, SamplerMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassLossKind {
    SoftmaxCe,
    AamSoftmax,
}

impl ClassLossKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassLossKind::SoftmaxCe => "softmax_ce",
            ClassLossKind::AamSoftmax => "aam_softmax",
        }
    }
}

impl fmt::Display for ClassLossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax_ce" => Ok(ClassLossKind::SoftmaxCe),
            "aam_softmax" => Ok(ClassLossKind::AamSoftmax),
            _ => Err(Error::config("loss_kind", format!("unknown loss kind `{s}` (expected softmax_ce or aam_softmax)"))),
        }
    }
}

/// `x -> weight * x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// `out x in`.
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.mul_vec(x);
        for (a, b) in y.iter_mut().zip(&self.bias) {
            *a += b;
        }
        y
    }
}

/// One or two affine layers (tanh in between) followed by a linear speaker
/// classification head over the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub layers: Vec<Affine>,
    /// `num_classes x embed_dim`.
    pub class_weights: Mat,
}

/// Architecture of a [`ProjectionModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub input_dim: usize,
    /// Width of the tanh hidden layer; `None` for a single affine layer.
    pub hidden: Option<usize>,
    pub embed_dim: usize,
    pub num_classes: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be positive"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim", "must be positive"));
        }
        if self.hidden == Some(0) {
            return Err(Error::config("hidden", "must be positive when present"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("num_classes", "must be positive"));
        }
        Ok(())
    }
}

fn uniform_mat(rng: &mut SeededRng, rows: usize, cols: usize, bound: f64) -> Mat {
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect(),
    )
}

impl ProjectionModel {
    /// Every parameter uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, drawn
    /// in order: per layer the weight (row-major) then the bias, then the
    /// class weights (fan-in = embedding dimension).
    pub fn init(shape: &ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = SeededRng::new(seed);
        let dims: Vec<usize> = match shape.hidden {
            Some(h) => vec![shape.input_dim, h, shape.embed_dim],
            None => vec![shape.input_dim, shape.embed_dim],
        };
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / libm::sqrt(w[0] as f64);
                let weight = uniform_mat(&mut rng, w[1], w[0], bound);
                let bias = (0..w[1]).map(|_| rng.uniform_range(-bound, bound)).collect();
                Affine { weight, bias }
            })
            .collect();
        let bound = 1.0 / libm::sqrt(shape.embed_dim as f64);
        let class_weights = uniform_mat(&mut rng, shape.num_classes, shape.embed_dim, bound);
        Ok(Self { layers, class_weights })
    }

    /// Single identity layer with zero bias.
    pub fn identity(dim: usize, class_weights: Mat) -> Self {
        Self {
            layers: vec![Affine {
                weight: Mat::identity(dim),
                bias: vec![0.0; dim],
            }],
            class_weights,
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            input_dim: self.input_dim(),
            hidden: (self.layers.len() == 2).then(|| self.layers[0].weight.rows()),
            embed_dim: self.embed_dim(),
            num_classes: self.class_weights.rows(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.class_weights.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.class_weights.is_finite()
            && self
                .layers
                .iter()
                .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Embeds one vector. Panics on a dimension mismatch; see [`Self::forward`].
    pub fn embed_one(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if l + 1 < self.layers.len() {
                h.iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
        }
        h
    }

    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d_in = self.input_dim();
        if let Some(i) = inputs.iter().position(|x| x.len() != d_in) {
            return Err(Error::arg(format!(
                "input {i} has dimension {}, model expects {d_in}",
                inputs[i].len()
            )));
        }
        Ok(inputs.iter().map(|x| self.embed_one(x)).collect())
    }

    /// Layer inputs for every layer plus the final output.
    fn forward_cached(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (l, layer) in self.layers.iter().enumerate() {
            let mut h = layer.apply(&acts[l]);
            if l + 1 < self.layers.len() {
                h.iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
            acts.push(h);
        }
        acts
    }

    fn backward(&self, acts: &[Vec<f64>], grad_out: &[f64], grads: &mut ModelGrads) {
        let mut g = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let input = &acts[l];
            grads.layers[l].weight.add_outer(&g, input, 1.0);
            for (b, v) in grads.layers[l].bias.iter_mut().zip(&g) {
                *b += v;
            }
            if l > 0 {
                let mut down = self.layers[l].weight.tr_mul_vec(&g);
                // input is tanh(z): d tanh = 1 - tanh^2
                for (d, h) in down.iter_mut().zip(input) {
                    *d *= 1.0 - h * h;
                }
                g = down;
            }
        }
    }

    fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Affine {
                    weight: Mat::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            class_weights: Mat::zeros(self.class_weights.rows(), self.class_weights.cols()),
        }
    }

    fn apply_step(&mut self, grads: &ModelGrads, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weight.axpy(-lr, &g.weight);
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        self.class_weights.axpy(-lr, &grads.class_weights);
    }
}

impl Embedder for ProjectionModel {
    fn embed(&self, x: &[f64]) -> Vec<f64> {
        self.embed_one(x)
    }
}

/// Parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
struct ModelGrads {
    layers: Vec<Affine>,
    class_weights: Mat,
}

/// Classification loss (batch mean) with gradients for the embeddings and
/// the class weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLoss {
    pub value: f64,
    pub embedding_grads: Vec<Vec<f64>>,
    pub weight_grads: Mat,
}

/// Softmax parameters shared by both loss kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassLossParams {
    pub kind: ClassLossKind,
    /// Additive angular margin (radians); `aam_softmax` only.
    pub margin: f64,
    /// Logit scale; `aam_softmax` only.
    pub scale: f64,
}

impl Default for ClassLossParams {
    fn default() -> Self {
        Self {
            kind: ClassLossKind::AamSoftmax,
            margin: 0.2,
            scale: 30.0,
        }
    }
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    let loss = max + libm::log(sum) - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss.max(0.0), grad)
}

/// Mean cross-entropy of `embeddings` against `labels`.
///
/// * `softmax_ce`: logits are `class_weights * x`.
/// * `aam_softmax`: with unit-normalized embedding and class rows and
///   `cos_c` their inner product, logits are `s cos(theta_y + m)` for the
///   label and `s cos_c` for every other class.
pub fn classification_loss(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    class_weights: &Mat,
    params: &ClassLossParams,
) -> Result<ClassLoss> {
    if embeddings.len() != labels.len() {
        return Err(Error::arg("embeddings and labels differ in length"));
    }
    if embeddings.is_empty() {
        return Err(Error::arg("classification loss of an empty batch"));
    }
    let (classes, d) = (class_weights.rows(), class_weights.cols());
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::arg(format!("label {bad} out of range for {classes} classes")));
    }
    if let Some(i) = embeddings.iter().position(|x| x.len() != d) {
        return Err(Error::arg(format!("embedding {i} has dimension {}, expected {d}", embeddings[i].len())));
    }
    let inv_n = 1.0 / embeddings.len() as f64;
    let mut value = 0.0;
    let mut weight_grads = Mat::zeros(classes, d);
    let mut embedding_grads = Vec::with_capacity(embeddings.len());

    match params.kind {
        ClassLossKind::SoftmaxCe => {
            for (x, &y) in embeddings.iter().zip(labels) {
                let logits = class_weights.mul_vec(x);
                let (loss, dz) = softmax_xent(&logits, y);
                value += loss * inv_n;
                let dz: Vec<f64> = dz.into_iter().map(|g| g * inv_n).collect();
                embedding_grads.push(class_weights.tr_mul_vec(&dz));
                for (c, &g) in dz.iter().enumerate() {
                    for (w, xv) in weight_grads.row_mut(c).iter_mut().zip(x) {
                        *w += g * xv;
                    }
                }
            }
        }
        ClassLossKind::AamSoftmax => {
            let (s, m) = (params.scale, params.margin);
            if !(s > 0.0) {
                return Err(Error::arg("AAM-softmax scale must be positive"));
            }
            let row_norms: Vec<f64> = (0..classes).map(|c| norm(class_weights.row(c))).collect();
            if let Some(c) = row_norms.iter().position(|&n| n == 0.0) {
                return Err(Error::arg(format!("class weight row {c} is zero")));
            }
            let unit_rows: Vec<Vec<f64>> = (0..classes)
                .map(|c| class_weights.row(c).iter().map(|w| w / row_norms[c]).collect())
                .collect();
            let (cos_m, sin_m) = (libm::cos(m), libm::sin(m));
            for (i, (x, &y)) in embeddings.iter().zip(labels).enumerate() {
                let xn = norm(x);
                if xn == 0.0 {
                    return Err(Error::arg(format!("embedding {i} is the zero vector")));
                }
                let xu: Vec<f64> = x.iter().map(|v| v / xn).collect();
                let cos: Vec<f64> = unit_rows.iter().map(|w| dot(w, &xu)).collect();
                let cy = cos[y];
                let sin_y = libm::sqrt((1.0 - cy * cy).max(0.0));
                let mut logits: Vec<f64> = cos.iter().map(|c| s * c).collect();
                logits[y] = s * (cy * cos_m - sin_y * sin_m);
                let (loss, dz) = softmax_xent(&logits, y);
                value += loss * inv_n;
                // d logit / d cos
                let mut dcos: Vec<f64> = dz.iter().map(|g| g * s * inv_n).collect();
                let sin_safe = sin_y.max(1e-7);
                dcos[y] *= cos_m + cy * sin_m / sin_safe;
                // d cos_c / d x = (w_c - cos_c x_u) / |x|
                let mut gx = vec![0.0; d];
                for c in 0..classes {
                    if dcos[c] == 0.0 {
                        continue;
                    }
                    for t in 0..d {
                        gx[t] += dcos[c] * (unit_rows[c][t] - cos[c] * xu[t]) / xn;
                    }
                    // d cos_c / d w_c = (x_u - cos_c w_c) / |w_c|
                    let row = weight_grads.row_mut(c);
                    for t in 0..d {
                        row[t] += dcos[c] * (xu[t] - cos[c] * unit_rows[c][t]) / row_norms[c];
                    }
                }
                embedding_grads.push(gx);
            }
        }
    }
    Ok(ClassLoss {
        value,
        embedding_grads,
        weight_grads,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub da: DaConfig,
    /// Batch shape and seed. The mode is chosen by the alignment method:
    /// genre pairs for coral/mmd/wda/bda/wbda, speaker-only for center; `none`
    /// uses the configured mode.
    pub sampler: SamplerConfig,
    pub steps: usize,
    pub learning_rate: f64,
    pub class_loss: ClassLossParams,
    /// Embedding size and optional hidden width.
    pub embed_dim: usize,
    pub hidden: Option<usize>,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            da: DaConfig::for_method(DaMethod::None),
            sampler: SamplerConfig {
                speakers: 8,
                utts_per_speaker: 4,
                seed: 1,
                mode: SamplerMode::GenrePair,
            },
            steps: 2000,
            learning_rate: 0.05,
            class_loss: ClassLossParams::default(),
            embed_dim: 16,
            hidden: Some(64),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.da.validate()?;
        self.sampler.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a finite non-negative number"));
        }
        if self.class_loss.kind == ClassLossKind::AamSoftmax && !(self.class_loss.scale > 0.0) {
            return Err(Error::config("scale", "must be positive for aam_softmax"));
        }
        if !(self.class_loss.margin >= 0.0 && self.class_loss.margin.is_finite()) {
            return Err(Error::config("margin", "must be a finite non-negative number"));
        }
        let (s, m) = (self.sampler.speakers, self.sampler.utts_per_speaker);
        if self.da.method.needs_class_statistics() && (s < 2 || m < 2) {
            return Err(Error::config(
                "speakers",
                format!("{} needs at least 2 speakers and 2 utterances per speaker (got {s} and {m})", self.da.method),
            ));
        }
        if self.da.method == DaMethod::Coral && s * m < 2 {
            return Err(Error::config("speakers", "coral needs at least 2 utterances per genre"));
        }
        Ok(())
    }

    /// The sampler configuration actually used for `method`.
    pub fn effective_sampler(&self) -> SamplerConfig {
        let mode = match self.da.method {
            DaMethod::None => self.sampler.mode,
            DaMethod::Center => SamplerMode::SpeakerOnly,
            _ => SamplerMode::GenrePair,
        };
        SamplerConfig { mode, ..self.sampler }
    }

    pub fn model_shape(&self, ds: &Dataset) -> ModelShape {
        ModelShape {
            input_dim: ds.dim(),
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            num_classes: ds.num_speakers(),
        }
    }
}

/// Losses of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub ce: f64,
    pub da: f64,
    pub total: f64,
}

/// Embeds a batch and returns the embedded batch plus per-item layer caches.
fn embed_batch(model: &ProjectionModel, batch: &MiniBatch) -> (MiniBatch, Vec<Vec<Vec<f64>>>) {
    let mut caches = Vec::with_capacity(batch.len());
    let embedded = batch.map_vectors(|_, x| {
        let acts = model.forward_cached(x);
        let out = acts[acts.len() - 1].clone();
        caches.push(acts);
        out
    });
    (embedded, caches)
}

/// Total objective for one batch and the resulting parameter gradients.
fn batch_objective(
    model: &ProjectionModel,
    batch: &MiniBatch,
    class_of: &alloc::collections::BTreeMap<String, usize>,
    cfg: &TrainConfig,
) -> Result<(StepRecord, ModelGrads)> {
    let (embedded, caches) = embed_batch(model, batch);
    let mut embeddings = Vec::with_capacity(caches.len());
    let mut labels = Vec::with_capacity(caches.len());
    for (_, s, it) in embedded.items() {
        embeddings.push(it.vector.clone());
        labels.push(class_of[&s.speaker]);
    }
    let ce = classification_loss(&embeddings, &labels, &model.class_weights, &cfg.class_loss)?;
    let ce_out = LossOutput {
        value: ce.value,
        grads: embedded.keyed_grads(ce.embedding_grads),
    };
    let da = da_loss(&cfg.da, &embedded)?;
    let lambda = cfg.da.effective_lambda();
    let total = combined_loss(&ce_out, &da, lambda);

    let mut grads = model.zero_grads();
    grads.class_weights = ce.weight_grads;
    for ((_, _, it), acts) in embedded.items().zip(&caches) {
        model.backward(acts, &total.grads[&it.utt_id], &mut grads);
    }
    let record = StepRecord {
        step: 0,
        ce: ce.value,
        da: da.value,
        total: total.value,
    };
    Ok((record, grads))
}

/// Trains a freshly initialized model. See [`train_from`].
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<(ProjectionModel, Vec<StepRecord>)> {
    cfg.validate()?;
    let model = ProjectionModel::init(&cfg.model_shape(ds), cfg.seed)?;
    train_from(model, ds, cfg)
}

/// Plain gradient descent with a fixed learning rate, one sampled batch per
/// step; the classification and alignment terms share the batch.
pub fn train_from(
    mut model: ProjectionModel,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ProjectionModel, Vec<StepRecord>)> {
    cfg.validate()?;
    if model.input_dim() != ds.dim() {
        return Err(Error::arg(format!(
            "model input dimension {} does not match dataset dimension {}",
            model.input_dim(),
            ds.dim()
        )));
    }
    if model.num_classes() != ds.num_speakers() {
        return Err(Error::arg(format!(
            "model has {} classes but the dataset has {} speakers",
            model.num_classes(),
            ds.num_speakers()
        )));
    }
    let sampler = cfg.effective_sampler();
    let class_of = ds.class_map();
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = sample(ds, &sampler, step as u64)?;
        let (mut rec, grads) = batch_objective(&model, &batch, &class_of, cfg).map_err(|e| match e {
            Error::DegenerateCovariance { .. } => Error::Divergence {
                step,
                detail: format!("{e}"),
            },
            other => other,
        })?;
        rec.step = step;
        if !(rec.ce.is_finite() && rec.da.is_finite() && rec.total.is_finite()) {
            return Err(Error::Divergence {
                step,
                detail: format!("non-finite loss (ce={}, da={}, total={})", rec.ce, rec.da, rec.total),
            });
        }
        history.push(rec);
        model.apply_step(&grads, cfg.learning_rate);
        if !model.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: String::from("non-finite parameters after update"),
            });
        }
    }
    Ok((model, history))
}
