//! Assembly of the Y-shaped network: a shared feature extractor `F` over
//! averaged embeddings, a classifier head `P`, and a language-scorer head
//! `Q`, together with the three training losses and the gradient-reversal
//! building block.
//!
//! `F` is dense+ReLU only; `P` and `Q` carry batch normalization in every
//! hidden layer. In `adan` mode `Q` ends in a width-1 linear score, in `grl`
//! mode in a width-2 softmax; `dan` drops `Q` entirely and `logreg` collapses
//! the whole thing to one dense layer with softmax.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::error::{AdanError, Result};
use crate::matrix::Matrix;
use crate::nn::{
    relu_apply, relu_backward, softmax_xent, BatchNormLayer, BnCache, DenseLayer, Gradients, Mode,
};
use crate::optim::ParamsMut;

/// Which network variant to build and train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelMode {
    /// Wasserstein-critic adversarial training.
    Adan,
    /// Gradient-reversal variant with a binary language classifier.
    Grl,
    /// Train-on-source baseline: extractor plus classifier, no scorer.
    Dan,
    /// Single dense layer with softmax.
    LogReg,
}

impl ModelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::Adan => "adan",
            ModelMode::Grl => "grl",
            ModelMode::Dan => "dan",
            ModelMode::LogReg => "logreg",
        }
    }
}

impl FromStr for ModelMode {
    type Err = AdanError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adan" => Ok(ModelMode::Adan),
            "grl" => Ok(ModelMode::Grl),
            "dan" => Ok(ModelMode::Dan),
            "logreg" => Ok(ModelMode::LogReg),
            other => Err(AdanError::Config(format!("unknown mode {other}"))),
        }
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Network shape. Defaults follow the reference configuration: three hidden
/// layers in F, two in P and Q, 900 units everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_width: usize,
    pub f_depth: usize,
    pub p_depth: usize,
    pub q_depth: usize,
    pub num_classes: usize,
    pub mode: ModelMode,
}

impl ModelConfig {
    pub fn new(embed_dim: usize, num_classes: usize, mode: ModelMode) -> Self {
        ModelConfig {
            embed_dim,
            hidden_width: 900,
            f_depth: 3,
            p_depth: 2,
            q_depth: 2,
            num_classes,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(AdanError::Config("embed_dim must be >= 1".to_string()));
        }
        if self.num_classes < 2 {
            return Err(AdanError::Config("num_classes must be >= 2".to_string()));
        }
        if self.mode != ModelMode::LogReg {
            if self.hidden_width == 0 {
                return Err(AdanError::Config("hidden_width must be >= 1".to_string()));
            }
            if self.f_depth == 0 || self.p_depth == 0 {
                return Err(AdanError::Config(
                    "f_depth and p_depth must be >= 1".to_string(),
                ));
            }
            if matches!(self.mode, ModelMode::Adan | ModelMode::Grl) && self.q_depth == 0 {
                return Err(AdanError::Config("q_depth must be >= 1".to_string()));
            }
        }
        Ok(())
    }

    /// Width of the feature vector that P and Q consume.
    pub fn feature_dim(&self) -> usize {
        if self.mode == ModelMode::LogReg {
            self.embed_dim
        } else {
            self.hidden_width
        }
    }
}

/// One layer of a stack.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    Relu,
}

/// Forward cache for one layer, consumed by the backward pass.
pub enum LayerCache {
    Dense(Matrix),
    BatchNorm(BnCache),
    Relu(Matrix),
}

/// A named sequence of layers with a parameter registry. Parameter names are
/// `{prefix}.{layer_index}.{field}` with fields `w`, `b`, `gamma`, `beta`.
#[derive(Debug, Clone)]
pub struct Stack {
    prefix: &'static str,
    layers: Vec<Layer>,
}

impl Stack {
    pub fn new(prefix: &'static str, layers: Vec<Layer>) -> Self {
        Stack { prefix, layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Forward pass returning per-layer caches for a later backward pass.
    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, Vec<LayerCache>)> {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::Dense(dense) => {
                    let out = dense.apply(&cur)?;
                    caches.push(LayerCache::Dense(cur));
                    cur = out;
                }
                Layer::BatchNorm(bn) => {
                    let (out, cache) = bn.forward(&cur, mode)?;
                    caches.push(LayerCache::BatchNorm(cache));
                    cur = out;
                }
                Layer::Relu => {
                    let out = relu_apply(&cur);
                    caches.push(LayerCache::Relu(cur));
                    cur = out;
                }
            }
        }
        Ok((cur, caches))
    }

    /// Forward pass without caches; `n_skip_tail` trailing layers are left
    /// out (used to probe the last hidden activation).
    pub fn forward_infer(&self, x: &Matrix, n_skip_tail: usize) -> Result<Matrix> {
        let mut cur = x.clone();
        let end = self.layers.len().saturating_sub(n_skip_tail);
        for layer in &self.layers[..end] {
            cur = match layer {
                Layer::Dense(dense) => dense.apply(&cur)?,
                Layer::BatchNorm(bn) => bn.forward(&cur, Mode::Infer)?.0,
                Layer::Relu => relu_apply(&cur),
            };
        }
        Ok(cur)
    }

    /// Folds cached batch statistics into the running estimates.
    pub fn absorb_stats(&mut self, caches: &[LayerCache]) {
        for (layer, cache) in self.layers.iter_mut().zip(caches) {
            if let (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) = (layer, cache) {
                bn.absorb_batch_stats(c);
            }
        }
    }

    /// Backward pass: accumulates parameter gradients into `grads` and
    /// returns the gradient with respect to the stack input.
    pub fn backward(
        &self,
        caches: &[LayerCache],
        d_out: &Matrix,
        grads: &mut Gradients,
    ) -> Result<Matrix> {
        let mut d = d_out.clone();
        for (idx, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            match (layer, cache) {
                (Layer::Dense(dense), LayerCache::Dense(input)) => {
                    let back = dense.backward(input, &d)?;
                    grads.accumulate(&format!("{}.{idx}.w", self.prefix), back.d_w)?;
                    grads.accumulate(&format!("{}.{idx}.b", self.prefix), back.d_b)?;
                    d = back.d_x;
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => {
                    let back = bn.backward(c, &d)?;
                    grads.accumulate(&format!("{}.{idx}.gamma", self.prefix), back.d_gamma)?;
                    grads.accumulate(&format!("{}.{idx}.beta", self.prefix), back.d_beta)?;
                    d = back.d_x;
                }
                (Layer::Relu, LayerCache::Relu(input)) => {
                    d = relu_backward(input, &d)?;
                }
                _ => {
                    return Err(AdanError::Contract(
                        "layer/cache mismatch in backward".to_string(),
                    ))
                }
            }
        }
        Ok(d)
    }

    pub fn params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(dense) => {
                    out.push((format!("{}.{idx}.w", self.prefix), &dense.w));
                    out.push((format!("{}.{idx}.b", self.prefix), &dense.b));
                }
                Layer::BatchNorm(bn) => {
                    out.push((format!("{}.{idx}.gamma", self.prefix), &bn.gamma));
                    out.push((format!("{}.{idx}.beta", self.prefix), &bn.beta));
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_> {
        let prefix = self.prefix;
        let mut out: ParamsMut<'_> = Vec::new();
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense(dense) => {
                    out.push((format!("{prefix}.{idx}.w"), &mut dense.w));
                    out.push((format!("{prefix}.{idx}.b"), &mut dense.b));
                }
                Layer::BatchNorm(bn) => {
                    out.push((format!("{prefix}.{idx}.gamma"), &mut bn.gamma));
                    out.push((format!("{prefix}.{idx}.beta"), &mut bn.beta));
                }
                Layer::Relu => {}
            }
        }
        out
    }

    /// Parameters plus batch-norm running statistics, as owned named
    /// tensors (running stats as 1×d rows).
    pub fn state_tensors(&self) -> Vec<(String, Matrix)> {
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(dense) => {
                    out.push((format!("{}.{idx}.w", self.prefix), dense.w.clone()));
                    out.push((format!("{}.{idx}.b", self.prefix), dense.b.clone()));
                }
                Layer::BatchNorm(bn) => {
                    out.push((format!("{}.{idx}.gamma", self.prefix), bn.gamma.clone()));
                    out.push((format!("{}.{idx}.beta", self.prefix), bn.beta.clone()));
                    out.push((
                        format!("{}.{idx}.running_mean", self.prefix),
                        Matrix::row_vec(bn.running_mean.clone()),
                    ));
                    out.push((
                        format!("{}.{idx}.running_var", self.prefix),
                        Matrix::row_vec(bn.running_var.clone()),
                    ));
                }
                Layer::Relu => {}
            }
        }
        out
    }

    fn load_state_tensor(&mut self, name: &str, value: &Matrix) -> Result<bool> {
        let rest = match name.strip_prefix(self.prefix).and_then(|r| r.strip_prefix('.')) {
            Some(rest) => rest,
            None => return Ok(false),
        };
        let (idx_str, field) = rest.split_once('.').ok_or_else(|| {
            AdanError::Checkpoint(format!("malformed tensor name {name}"))
        })?;
        let idx: usize = idx_str
            .parse()
            .map_err(|_| AdanError::Checkpoint(format!("malformed tensor name {name}")))?;
        let layer = self
            .layers
            .get_mut(idx)
            .ok_or_else(|| AdanError::Checkpoint(format!("no layer for tensor {name}")))?;
        let assign = |target: &mut Matrix| -> Result<()> {
            if target.shape() != value.shape() {
                return Err(AdanError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    target.shape()
                )));
            }
            *target = value.clone();
            Ok(())
        };
        match (layer, field) {
            (Layer::Dense(dense), "w") => assign(&mut dense.w)?,
            (Layer::Dense(dense), "b") => assign(&mut dense.b)?,
            (Layer::BatchNorm(bn), "gamma") => assign(&mut bn.gamma)?,
            (Layer::BatchNorm(bn), "beta") => assign(&mut bn.beta)?,
            (Layer::BatchNorm(bn), "running_mean") => {
                if value.shape() != (1, bn.running_mean.len()) {
                    return Err(AdanError::Checkpoint(format!(
                        "tensor {name} has shape {:?}",
                        value.shape()
                    )));
                }
                bn.running_mean = value.values().to_vec();
            }
            (Layer::BatchNorm(bn), "running_var") => {
                if value.shape() != (1, bn.running_var.len()) {
                    return Err(AdanError::Checkpoint(format!(
                        "tensor {name} has shape {:?}",
                        value.shape()
                    )));
                }
                bn.running_var = value.values().to_vec();
            }
            _ => {
                return Err(AdanError::Checkpoint(format!(
                    "tensor {name} does not match layer {idx}"
                )))
            }
        }
        Ok(true)
    }
}

/// Mean of the first `n_src` scores minus the mean of the rest.
fn split_score_gap(scores: &Matrix, n_src: usize) -> f64 {
    let n_tgt = scores.rows() - n_src;
    let mut src_sum = 0.0;
    let mut tgt_sum = 0.0;
    for r in 0..scores.rows() {
        if r < n_src {
            src_sum += scores[(r, 0)];
        } else {
            tgt_sum += scores[(r, 0)];
        }
    }
    src_sum / n_src as f64 - tgt_sum / n_tgt as f64
}

fn split_rows(combined: &Matrix, n_first: usize) -> (Matrix, Matrix) {
    let cols = combined.cols();
    let mut first = Matrix::zeros(n_first, cols);
    let mut second = Matrix::zeros(combined.rows() - n_first, cols);
    for r in 0..n_first {
        first.row_mut(r).copy_from_slice(combined.row(r));
    }
    for r in n_first..combined.rows() {
        second
            .row_mut(r - n_first)
            .copy_from_slice(combined.row(r));
    }
    (first, second)
}

/// Identity in the forward pass; scales gradients by −λ in the backward
/// pass.
#[derive(Debug, Clone, Copy)]
pub struct GradReversal {
    pub lambda: f64,
}

impl GradReversal {
    pub fn forward(&self, x: &Matrix) -> Matrix {
        x.clone()
    }

    pub fn backward(&self, d_out: &Matrix) -> Matrix {
        d_out.scale(-self.lambda)
    }
}

/// Outcome of the combined adversarial loss J_f = J_p + λ·gap.
pub struct JfLoss {
    pub loss: f64,
    pub jp: f64,
    pub gap: f64,
    /// Gradients for θ_f and θ_p; θ_q receives none from this loss.
    pub grads: Gradients,
}

/// The full network with its parameter registry.
#[derive(Debug, Clone)]
pub struct AdanModel {
    pub config: ModelConfig,
    pub f: Stack,
    pub p: Stack,
    pub q: Option<Stack>,
}

/// Builds a model with Glorot-uniform dense weights, zero biases, and
/// unit-gamma batch norm, deterministically from the seed.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<AdanModel> {
    config.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let d = config.embed_dim;
    let h = config.hidden_width;
    let c = config.num_classes;

    if config.mode == ModelMode::LogReg {
        let p = Stack::new("p", vec![Layer::Dense(DenseLayer::glorot(d, c, &mut rng))]);
        return Ok(AdanModel {
            config: config.clone(),
            f: Stack::new("f", vec![]),
            p,
            q: None,
        });
    }

    let mut f_layers = Vec::new();
    let mut prev = d;
    for _ in 0..config.f_depth {
        f_layers.push(Layer::Dense(DenseLayer::glorot(prev, h, &mut rng)));
        f_layers.push(Layer::Relu);
        prev = h;
    }
    let f = Stack::new("f", f_layers);

    let mut p_layers = Vec::new();
    for _ in 0..config.p_depth {
        p_layers.push(Layer::Dense(DenseLayer::glorot(h, h, &mut rng)));
        p_layers.push(Layer::BatchNorm(BatchNormLayer::new(h)));
        p_layers.push(Layer::Relu);
    }
    p_layers.push(Layer::Dense(DenseLayer::glorot(h, c, &mut rng)));
    let p = Stack::new("p", p_layers);

    let q = match config.mode {
        ModelMode::Adan | ModelMode::Grl => {
            let head_width = if config.mode == ModelMode::Grl { 2 } else { 1 };
            let mut q_layers = Vec::new();
            for _ in 0..config.q_depth {
                q_layers.push(Layer::Dense(DenseLayer::glorot(h, h, &mut rng)));
                q_layers.push(Layer::BatchNorm(BatchNormLayer::new(h)));
                q_layers.push(Layer::Relu);
            }
            q_layers.push(Layer::Dense(DenseLayer::glorot(h, head_width, &mut rng)));
            Some(Stack::new("q", q_layers))
        }
        ModelMode::Dan | ModelMode::LogReg => None,
    };

    Ok(AdanModel {
        config: config.clone(),
        f,
        p,
        q,
    })
}

impl AdanModel {
    fn q_stack(&self) -> Result<&Stack> {
        self.q.as_ref().ok_or(AdanError::Mode {
            expected: "adan or grl",
            got: self.config.mode.to_string(),
        })
    }

    /// Deterministic forward pass through F. F carries no batch norm, so
    /// there is no train/infer distinction.
    pub fn feature_extract(&self, x: &Matrix) -> Result<Matrix> {
        if !x.all_finite() {
            return Err(AdanError::Numeric {
                what: "feature_extract input".to_string(),
            });
        }
        self.f.forward_infer(x, 0)
    }

    /// Class logits from features; argmax of a row is the prediction.
    pub fn classify(&self, features: &Matrix, mode: Mode) -> Result<Matrix> {
        Ok(self.p.forward(features, mode)?.0)
    }

    /// Activation of P's last hidden layer (input to the final dense).
    pub fn classifier_hidden(&self, features: &Matrix) -> Result<Matrix> {
        self.p.forward_infer(features, 1)
    }

    /// mean(Q(src)) − mean(Q(tgt)) over width-1 critic scores, one forward
    /// pass per set. Pure: batch statistics are used in train mode but
    /// never folded into the running estimates.
    pub fn critic_gap(&self, src: &Matrix, tgt: &Matrix, mode: Mode) -> Result<f64> {
        if self.config.mode != ModelMode::Adan {
            return Err(AdanError::Mode {
                expected: "adan",
                got: self.config.mode.to_string(),
            });
        }
        if src.rows() == 0 || tgt.rows() == 0 {
            return Err(AdanError::EmptyBatch("critic_gap"));
        }
        let q = self.q_stack()?;
        let s = q.forward(src, mode)?.0;
        let t = q.forward(tgt, mode)?.0;
        Ok(s.mean() - t.mean())
    }

    /// The gap as the training paths see it: the concatenated [src; tgt]
    /// batch goes through Q in one forward pass, so batch-norm statistics
    /// come from the union. Normalizing each set separately would cancel
    /// exactly the per-column moment differences the critic must score.
    pub fn critic_gap_joint(&self, src_feats: &Matrix, tgt_feats: &Matrix) -> Result<f64> {
        if self.config.mode != ModelMode::Adan {
            return Err(AdanError::Mode {
                expected: "adan",
                got: self.config.mode.to_string(),
            });
        }
        if src_feats.rows() == 0 || tgt_feats.rows() == 0 {
            return Err(AdanError::EmptyBatch("critic_gap_joint"));
        }
        let q = self.q_stack()?;
        let combined = Matrix::vstack(src_feats, tgt_feats)?;
        let (scores, _) = q.forward(&combined, Mode::Train)?;
        Ok(split_score_gap(&scores, src_feats.rows()))
    }

    /// Cross-entropy through P∘F with full backprop into θ_p and θ_f.
    pub fn loss_jp(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        update_stats: bool,
    ) -> Result<(f64, Gradients)> {
        let (features, f_caches) = self.f.forward(x, Mode::Train)?;
        let (logits, p_caches) = self.p.forward(&features, Mode::Train)?;
        let (loss, d_logits) = softmax_xent(&logits, labels)?;
        let mut grads = Gradients::new();
        let d_features = self.p.backward(&p_caches, &d_logits, &mut grads)?;
        self.f.backward(&f_caches, &d_features, &mut grads)?;
        if update_stats {
            self.p.absorb_stats(&p_caches);
        }
        Ok((loss, grads))
    }

    /// J_f = J_p(labeled) + λ·(mean Q(F(src)) − mean Q(F(tgt))). The gap
    /// gradient flows through Q into θ_f; θ_q receives none. At λ = 0 the
    /// result is bitwise-identical to `loss_jp`.
    pub fn loss_jf_adversarial(
        &mut self,
        lambda: f64,
        src: &Matrix,
        tgt: &Matrix,
        labeled: &Matrix,
        labels: &[usize],
        update_stats: bool,
    ) -> Result<JfLoss> {
        if lambda < 0.0 {
            return Err(AdanError::Config("lambda must be >= 0".to_string()));
        }
        if src.rows() == 0 || tgt.rows() == 0 {
            return Err(AdanError::EmptyBatch("loss_jf_adversarial"));
        }
        if self.config.mode != ModelMode::Adan {
            return Err(AdanError::Mode {
                expected: "adan",
                got: self.config.mode.to_string(),
            });
        }

        let (jp, mut grads) = self.loss_jp(labeled, labels, update_stats)?;

        let (src_feats, src_f_caches) = self.f.forward(src, Mode::Train)?;
        let (tgt_feats, tgt_f_caches) = self.f.forward(tgt, Mode::Train)?;
        let q = self.q.as_ref().ok_or(AdanError::Mode {
            expected: "adan",
            got: self.config.mode.to_string(),
        })?;
        // One joint forward: Q's batch norm must see the union, or the
        // per-column moment differences between the sets cancel out.
        let combined = Matrix::vstack(&src_feats, &tgt_feats)?;
        let (scores, q_caches) = q.forward(&combined, Mode::Train)?;
        let gap = split_score_gap(&scores, src_feats.rows());
        let loss = jp + lambda * gap;

        // The gap gradient vanishes identically at λ = 0: skip the backward
        // pass so gradients match loss_jp bit for bit.
        if lambda != 0.0 {
            let n_src = src_feats.rows();
            let n_tgt = tgt_feats.rows();
            let mut d_scores = Matrix::zeros(scores.rows(), 1);
            for r in 0..n_src {
                d_scores[(r, 0)] = lambda / n_src as f64;
            }
            for r in 0..n_tgt {
                d_scores[(n_src + r, 0)] = -lambda / n_tgt as f64;
            }
            let mut q_scratch = Gradients::new();
            let d_combined = q.backward(&q_caches, &d_scores, &mut q_scratch)?;
            let (d_src_feats, d_tgt_feats) = split_rows(&d_combined, n_src);
            self.f.backward(&src_f_caches, &d_src_feats, &mut grads)?;
            self.f.backward(&tgt_f_caches, &d_tgt_feats, &mut grads)?;
        }

        Ok(JfLoss {
            loss,
            jp,
            gap,
            grads,
        })
    }

    /// Critic objective over fixed features: returns the gap and the θ_q
    /// gradients of `loss = −gap` (one ascent step on the gap). Running
    /// statistics are folded in when `update_stats` is set, since this is
    /// the path that updates θ_q.
    pub fn critic_objective_grads(
        &mut self,
        src_feats: &Matrix,
        tgt_feats: &Matrix,
        update_stats: bool,
    ) -> Result<(f64, Gradients)> {
        if src_feats.rows() == 0 || tgt_feats.rows() == 0 {
            return Err(AdanError::EmptyBatch("critic_objective"));
        }
        if self.config.mode != ModelMode::Adan {
            return Err(AdanError::Mode {
                expected: "adan",
                got: self.config.mode.to_string(),
            });
        }
        let q = self.q.as_ref().expect("adan mode has a critic");
        let n_src = src_feats.rows();
        let n_tgt = tgt_feats.rows();
        let combined = Matrix::vstack(src_feats, tgt_feats)?;
        let (scores, caches) = q.forward(&combined, Mode::Train)?;
        let gap = split_score_gap(&scores, n_src);

        // d(−gap)/dscore: −1/Bs on source rows, +1/Bt on target rows.
        let mut d_scores = Matrix::zeros(scores.rows(), 1);
        for r in 0..n_src {
            d_scores[(r, 0)] = -1.0 / n_src as f64;
        }
        for r in 0..n_tgt {
            d_scores[(n_src + r, 0)] = 1.0 / n_tgt as f64;
        }
        let mut grads = Gradients::new();
        q.backward(&caches, &d_scores, &mut grads)?;
        if update_stats {
            let q = self.q.as_mut().expect("adan mode has a critic");
            q.absorb_stats(&caches);
        }
        Ok((gap, grads))
    }

    /// Binary language cross-entropy for the GRL variant: source rows are
    /// class 0, target rows class 1, averaged over the combined batch.
    /// Returns θ_q gradients plus the upstream feature gradients.
    pub fn loss_language_xent(
        &mut self,
        src_feats: &Matrix,
        tgt_feats: &Matrix,
        update_stats: bool,
    ) -> Result<(f64, Gradients, Matrix, Matrix)> {
        if self.config.mode != ModelMode::Grl {
            return Err(AdanError::Mode {
                expected: "grl",
                got: self.config.mode.to_string(),
            });
        }
        if src_feats.rows() == 0 || tgt_feats.rows() == 0 {
            return Err(AdanError::EmptyBatch("loss_language_xent"));
        }
        let combined = Matrix::vstack(src_feats, tgt_feats)?;
        let mut labels = vec![0usize; src_feats.rows()];
        labels.extend(std::iter::repeat(1).take(tgt_feats.rows()));

        let q = self.q.as_ref().expect("grl mode has a scorer");
        let (logits, caches) = q.forward(&combined, Mode::Train)?;
        let (loss, d_logits) = softmax_xent(&logits, &labels)?;
        let mut grads = Gradients::new();
        let d_combined = q.backward(&caches, &d_logits, &mut grads)?;
        if update_stats {
            let q = self.q.as_mut().expect("grl mode has a scorer");
            q.absorb_stats(&caches);
        }

        let (d_src, d_tgt) = split_rows(&d_combined, src_feats.rows());
        Ok((loss, grads, d_src, d_tgt))
    }

    /// Mutable views over θ_f ∪ θ_p (trained together) and θ_q.
    pub fn fp_params_mut(&mut self) -> ParamsMut<'_> {
        let mut params = self.f.params_mut();
        params.extend(self.p.params_mut());
        params
    }

    pub fn q_params_mut(&mut self) -> Result<ParamsMut<'_>> {
        Ok(self
            .q
            .as_mut()
            .ok_or(AdanError::Mode {
                expected: "adan or grl",
                got: self.config.mode.to_string(),
            })?
            .params_mut())
    }

    pub fn params(&self) -> Vec<(String, &Matrix)> {
        let mut out = self.f.params();
        out.extend(self.p.params());
        if let Some(q) = &self.q {
            out.extend(q.params());
        }
        out
    }

    /// Largest |entry| over all critic parameters.
    pub fn q_max_abs(&self) -> Result<f64> {
        let q = self.q_stack()?;
        Ok(q.params()
            .iter()
            .fold(0.0f64, |m, (_, p)| m.max(p.max_abs())))
    }

    /// All named tensors (parameters and running statistics) in registry
    /// order, for persistence.
    pub fn state_tensors(&self) -> Vec<(String, Matrix)> {
        let mut out = self.f.state_tensors();
        out.extend(self.p.state_tensors());
        if let Some(q) = &self.q {
            out.extend(q.state_tensors());
        }
        out
    }

    /// Restores tensors written by `state_tensors`. Every entry must match
    /// a slot in this model and every slot must be covered.
    pub fn load_state_tensors(&mut self, tensors: &BTreeMap<String, Matrix>) -> Result<()> {
        let expected = self.state_tensors().len();
        if tensors.len() != expected {
            return Err(AdanError::Checkpoint(format!(
                "expected {expected} tensors, got {}",
                tensors.len()
            )));
        }
        for (name, value) in tensors {
            let mut placed = self.f.load_state_tensor(name, value)?;
            if !placed {
                placed = self.p.load_state_tensor(name, value)?;
            }
            if !placed {
                if let Some(q) = self.q.as_mut() {
                    placed = q.load_state_tensor(name, value)?;
                }
            }
            if !placed {
                return Err(AdanError::Checkpoint(format!(
                    "tensor {name} does not belong to this model"
                )));
            }
        }
        Ok(())
    }
}
