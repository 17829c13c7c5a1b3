//! Training loops: the Wasserstein-critic schedule (k critic steps per main
//! step, weight clipping), the gradient-reversal schedule (λ applied once
//! every k batches), the train-on-source baselines, semi-supervised batch
//! mixing, early stopping on dev accuracy, evaluation, and grid search.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::error::{AdanError, Result};
use crate::matrix::Matrix;
use crate::model::{build_model, AdanModel, GradReversal, ModelConfig, ModelMode};
use crate::nn::Mode;
use crate::optim::{adam_step, clip_params, AdamState};
use crate::text::{
    averaged_batch, derive_seed, make_stream, BatchStream, Corpus, EmbeddingTable,
};

const STREAM_LABELED: u64 = 0;
const STREAM_SEMI: u64 = 1;
const STREAM_SRC_SCORER: u64 = 2;
const STREAM_TGT_SCORER: u64 = 3;

/// Every knob of the training procedure. Defaults reproduce the reference
/// schedule: λ = 0.1, k = 5, Adam at 0.05 for F and P and 0.00005 for Q,
/// critic weights clipped to [−0.01, 0.01], 30 epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub k: usize,
    pub lr_fp: f64,
    pub lr_q: f64,
    pub clip_bound: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: ModelMode,
    /// Leave batch-norm gamma/beta out of the critic clip.
    pub clip_exempt_norm: bool,
}

impl TrainConfig {
    pub fn new(mode: ModelMode) -> Self {
        TrainConfig {
            lambda: 0.1,
            k: 5,
            lr_fp: 0.05,
            lr_q: 0.00005,
            clip_bound: 0.01,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            mode,
            clip_exempt_norm: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(AdanError::Config("lambda must be >= 0".to_string()));
        }
        if self.k == 0 {
            return Err(AdanError::Config("k must be >= 1".to_string()));
        }
        if self.lr_fp <= 0.0 || self.lr_q <= 0.0 {
            return Err(AdanError::Config("learning rates must be > 0".to_string()));
        }
        if self.clip_bound <= 0.0 {
            return Err(AdanError::Config("clip_bound must be > 0".to_string()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(AdanError::Config(
                "epochs and batch_size must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Everything a training run reads. `dev` may be in either language; its
/// table decides. `semi_labeled_tgt` switches on the semi-supervised mode.
pub struct TrainData<'a> {
    pub src_labeled: &'a Corpus,
    pub src_table: &'a EmbeddingTable,
    pub tgt_unlabeled: Option<&'a Corpus>,
    pub tgt_table: &'a EmbeddingTable,
    pub dev: &'a Corpus,
    pub dev_table: &'a EmbeddingTable,
    pub semi_labeled_tgt: Option<&'a Corpus>,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub jp_mean: f64,
    /// Mean critic gap per main iteration; language cross-entropy in grl
    /// mode; 0 for the baselines.
    pub gap_mean: f64,
    pub dev_accuracy: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch with the highest dev accuracy; ties go to the earliest.
    pub best_epoch: usize,
    pub main_iterations: u64,
    pub critic_updates: u64,
    /// Largest |θ_q| observed right after each critic clip.
    pub max_q_abs_after_clip: Option<f64>,
    pub lambda: f64,
    pub k: usize,
}

impl TrainHistory {
    pub fn best_accuracy(&self) -> f64 {
        self.records
            .get(self.best_epoch)
            .map_or(f64::NAN, |r| r.dev_accuracy)
    }

    /// TSV with a `# lambda=… k=…` header comment; wall-clock is excluded
    /// so identical runs serialize byte-identically.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# lambda={} k={}", self.lambda, self.k);
        let _ = writeln!(out, "epoch\tjp_mean\tgap_mean\tdev_accuracy");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.epoch, r.jp_mean, r.gap_mean, r.dev_accuracy
            );
        }
        out
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// Builds the input matrix and label vector for a labeled batch.
fn labeled_matrix(
    corpus: &Corpus,
    indices: &[usize],
    table: &EmbeddingTable,
) -> Result<(Matrix, Vec<usize>)> {
    let x = averaged_batch(corpus, indices, table)?;
    let labels = indices
        .iter()
        .map(|&i| {
            corpus.documents[i].label.ok_or_else(|| {
                AdanError::Contract(format!("unlabeled document {i} in a labeled batch"))
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok((x, labels))
}

/// Infer-mode accuracy with argmax prediction; ties break toward the lowest
/// class index.
pub fn evaluate(model: &AdanModel, corpus: &Corpus, table: &EmbeddingTable) -> Result<f64> {
    if corpus.is_empty() {
        return Err(AdanError::EmptyCorpus);
    }
    if !corpus.labeled {
        return Err(AdanError::Contract(
            "evaluate requires a labeled corpus".to_string(),
        ));
    }
    let num_classes = model.config.num_classes;
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..corpus.len()).collect();
    for chunk in indices.chunks(256) {
        let x = averaged_batch(corpus, chunk, table)?;
        let features = model.feature_extract(&x)?;
        let logits = model.classify(&features, Mode::Infer)?;
        for (row, &i) in chunk.iter().enumerate() {
            let scores = logits.row(row);
            let mut pred = 0usize;
            for (j, &s) in scores.iter().enumerate() {
                if s > scores[pred] {
                    pred = j;
                }
            }
            let label = corpus.documents[i].label.expect("labeled corpus");
            if label >= num_classes {
                return Err(AdanError::Label { label, num_classes });
            }
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / corpus.len() as f64)
}

struct SemiStream<'a> {
    corpus: &'a Corpus,
    stream: BatchStream,
}

/// Trains the model under the given schedule and returns the checkpoint of
/// the best dev epoch plus the full history.
pub fn train(
    model: AdanModel,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<(AdanModel, TrainHistory)> {
    cfg.validate()?;
    if cfg.mode != model.config.mode {
        return Err(AdanError::Mode {
            expected: "matching model and train config",
            got: format!("model {}, config {}", model.config.mode, cfg.mode),
        });
    }
    if data.src_labeled.is_empty() {
        return Err(AdanError::EmptyCorpus);
    }
    if !data.src_labeled.labeled {
        return Err(AdanError::Contract(
            "source training corpus must be labeled".to_string(),
        ));
    }
    if !data.dev.labeled || data.dev.is_empty() {
        return Err(AdanError::Contract(
            "dev corpus must be labeled and nonempty".to_string(),
        ));
    }
    let adversarial = matches!(cfg.mode, ModelMode::Adan | ModelMode::Grl);
    let tgt = match (adversarial, data.tgt_unlabeled) {
        (true, None) => return Err(AdanError::EmptyCorpus),
        (true, Some(t)) if t.is_empty() => return Err(AdanError::EmptyCorpus),
        (_, t) => t,
    };

    let mut model = model;
    let mut adam_fp = AdamState::new(cfg.lr_fp);
    let mut adam_q = AdamState::new(cfg.lr_q);

    // Scorer streams cycle for the whole run; the labeled stream is rebuilt
    // each epoch (one epoch = one pass over labeled source data).
    let mut src_scorer_stream = if adversarial {
        Some(make_stream(
            data.src_labeled,
            cfg.batch_size,
            derive_seed(cfg.seed, STREAM_SRC_SCORER),
            true,
        )?)
    } else {
        None
    };
    let mut tgt_scorer_stream = match (adversarial, tgt) {
        (true, Some(t)) => Some(make_stream(
            t,
            cfg.batch_size,
            derive_seed(cfg.seed, STREAM_TGT_SCORER),
            true,
        )?),
        _ => None,
    };
    let mut semi = match data.semi_labeled_tgt {
        Some(corpus) if !corpus.is_empty() => {
            if !corpus.labeled {
                return Err(AdanError::Contract(
                    "semi-supervised target corpus must be labeled".to_string(),
                ));
            }
            Some(SemiStream {
                corpus,
                stream: make_stream(
                    corpus,
                    cfg.batch_size,
                    derive_seed(cfg.seed, STREAM_SEMI),
                    true,
                )?,
            })
        }
        _ => None,
    };

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0usize;
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_model = model.clone();
    let mut iteration = 0u64;
    let mut critic_updates = 0u64;
    let mut max_q_abs: Option<f64> = None;
    let epoch_seed_base = derive_seed(cfg.seed, STREAM_LABELED);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut jp_sum = 0.0;
        let mut gap_sum = 0.0;
        let mut n_iter = 0u64;

        let labeled_stream = make_stream(
            data.src_labeled,
            cfg.batch_size,
            derive_seed(epoch_seed_base, epoch as u64),
            false,
        )?;
        for batch in labeled_stream {
            iteration += 1;
            let (mut x_l, mut labels) = labeled_matrix(data.src_labeled, &batch, data.src_table)?;
            if let Some(s) = semi.as_mut() {
                let semi_batch = s.stream.next_batch().expect("cycling stream");
                let (x_s, labels_s) = labeled_matrix(s.corpus, &semi_batch, data.tgt_table)?;
                x_l = Matrix::vstack(&x_l, &x_s)?;
                labels.extend(labels_s);
            }

            match cfg.mode {
                ModelMode::Adan => {
                    let tgt = tgt.expect("checked above");
                    let src_stream = src_scorer_stream.as_mut().expect("adan mode");
                    let tgt_stream = tgt_scorer_stream.as_mut().expect("adan mode");

                    for _ in 0..cfg.k {
                        let sb = src_stream.next_batch().expect("cycling stream");
                        let tb = tgt_stream.next_batch().expect("cycling stream");
                        let src_feats = model.feature_extract(&averaged_batch(
                            data.src_labeled,
                            &sb,
                            data.src_table,
                        )?)?;
                        let tgt_feats = model
                            .feature_extract(&averaged_batch(tgt, &tb, data.tgt_table)?)?;
                        let (gap, q_grads) =
                            model.critic_objective_grads(&src_feats, &tgt_feats, true)?;
                        if !gap.is_finite() {
                            return Err(AdanError::Diverged {
                                iteration: iteration as usize,
                            });
                        }
                        let mut q_params = model.q_params_mut()?;
                        adam_step(&mut q_params, &q_grads, &mut adam_q)?;
                        if cfg.clip_exempt_norm {
                            let mut clipped: Vec<_> = q_params
                                .into_iter()
                                .filter(|(n, _)| !n.ends_with(".gamma") && !n.ends_with(".beta"))
                                .collect();
                            clip_params(&mut clipped, cfg.clip_bound);
                        } else {
                            clip_params(&mut q_params, cfg.clip_bound);
                        }
                        critic_updates += 1;
                        let q_abs = model.q_max_abs()?;
                        max_q_abs = Some(max_q_abs.map_or(q_abs, |m: f64| m.max(q_abs)));
                    }

                    // fresh batches for the gap term of the F/P step
                    let sb = src_stream.next_batch().expect("cycling stream");
                    let tb = tgt_stream.next_batch().expect("cycling stream");
                    let x_src = averaged_batch(data.src_labeled, &sb, data.src_table)?;
                    let x_tgt = averaged_batch(tgt, &tb, data.tgt_table)?;
                    let out = model.loss_jf_adversarial(
                        cfg.lambda, &x_src, &x_tgt, &x_l, &labels, true,
                    )?;
                    if !out.loss.is_finite() {
                        return Err(AdanError::Diverged {
                            iteration: iteration as usize,
                        });
                    }
                    let mut fp = model.fp_params_mut();
                    adam_step(&mut fp, &out.grads, &mut adam_fp)?;
                    jp_sum += out.jp;
                    gap_sum += out.gap;
                }
                ModelMode::Grl => {
                    let tgt = tgt.expect("checked above");
                    let (jp, mut fp_grads) = model.loss_jp(&x_l, &labels, true)?;
                    if !jp.is_finite() {
                        return Err(AdanError::Diverged {
                            iteration: iteration as usize,
                        });
                    }

                    let sb = src_scorer_stream
                        .as_mut()
                        .expect("grl mode")
                        .next_batch()
                        .expect("cycling stream");
                    let tb = tgt_scorer_stream
                        .as_mut()
                        .expect("grl mode")
                        .next_batch()
                        .expect("cycling stream");
                    let x_src = averaged_batch(data.src_labeled, &sb, data.src_table)?;
                    let x_tgt = averaged_batch(tgt, &tb, data.tgt_table)?;
                    let (src_feats, src_caches) = model.f.forward(&x_src, Mode::Train)?;
                    let (tgt_feats, tgt_caches) = model.f.forward(&x_tgt, Mode::Train)?;
                    let (lang_loss, q_grads, d_src, d_tgt) =
                        model.loss_language_xent(&src_feats, &tgt_feats, true)?;
                    if !lang_loss.is_finite() {
                        return Err(AdanError::Diverged {
                            iteration: iteration as usize,
                        });
                    }

                    // λ is applied once out of k batches; otherwise the
                    // scorer gradient never reaches F.
                    let lambda_eff = if (iteration - 1) % cfg.k as u64 == 0 {
                        cfg.lambda
                    } else {
                        0.0
                    };
                    if lambda_eff != 0.0 {
                        let grl = GradReversal { lambda: lambda_eff };
                        model
                            .f
                            .backward(&src_caches, &grl.backward(&d_src), &mut fp_grads)?;
                        model
                            .f
                            .backward(&tgt_caches, &grl.backward(&d_tgt), &mut fp_grads)?;
                    }

                    let mut fp = model.fp_params_mut();
                    adam_step(&mut fp, &fp_grads, &mut adam_fp)?;
                    let mut q_params = model.q_params_mut()?;
                    adam_step(&mut q_params, &q_grads, &mut adam_q)?;
                    jp_sum += jp;
                    gap_sum += lang_loss;
                }
                ModelMode::Dan | ModelMode::LogReg => {
                    let (loss, grads) = model.loss_jp(&x_l, &labels, true)?;
                    if !loss.is_finite() {
                        return Err(AdanError::Diverged {
                            iteration: iteration as usize,
                        });
                    }
                    let mut fp = model.fp_params_mut();
                    adam_step(&mut fp, &grads, &mut adam_fp)?;
                    jp_sum += loss;
                }
            }
            n_iter += 1;
        }

        let dev_accuracy = evaluate(&model, data.dev, data.dev_table)?;
        records.push(EpochRecord {
            epoch,
            jp_mean: jp_sum / n_iter as f64,
            gap_mean: gap_sum / n_iter as f64,
            dev_accuracy,
            wall_secs: start.elapsed().as_secs_f64(),
        });
        if dev_accuracy > best_accuracy {
            best_accuracy = dev_accuracy;
            best_epoch = epoch;
            best_model = model.clone();
        }
    }

    let history = TrainHistory {
        records,
        best_epoch,
        main_iterations: iteration,
        critic_updates,
        max_q_abs_after_clip: max_q_abs,
        lambda: cfg.lambda,
        k: cfg.k,
    };
    Ok((best_model, history))
}

/// Wasserstein-critic training; also accepts the dan/logreg baselines,
/// which follow the same epoch structure without a scorer.
pub fn train_adan(
    model: AdanModel,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<(AdanModel, TrainHistory)> {
    if cfg.mode == ModelMode::Grl {
        return Err(AdanError::Mode {
            expected: "adan, dan, or logreg",
            got: cfg.mode.to_string(),
        });
    }
    train(model, data, cfg)
}

/// Gradient-reversal training.
pub fn train_grl(
    model: AdanModel,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<(AdanModel, TrainHistory)> {
    if cfg.mode != ModelMode::Grl {
        return Err(AdanError::Mode {
            expected: "grl",
            got: cfg.mode.to_string(),
        });
    }
    train(model, data, cfg)
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub k: usize,
    pub lambda: f64,
    pub dev_accuracy: f64,
}

/// One full training per (k, λ) cell with a common seed. A diverged cell is
/// recorded as NaN accuracy, not a failure.
pub fn grid_search(
    model_cfg: &ModelConfig,
    base_cfg: &TrainConfig,
    k_set: &[usize],
    lambda_set: &[f64],
    data: &TrainData<'_>,
) -> Result<Vec<GridCell>> {
    if k_set.is_empty() || lambda_set.is_empty() {
        return Err(AdanError::Config("grid sets must be nonempty".to_string()));
    }
    let mut cells = Vec::with_capacity(k_set.len() * lambda_set.len());
    for &k in k_set {
        for &lambda in lambda_set {
            let cfg = TrainConfig {
                k,
                lambda,
                ..base_cfg.clone()
            };
            let model = build_model(model_cfg, cfg.seed)?;
            let dev_accuracy = match train(model, data, &cfg) {
                Ok((_, history)) => history.best_accuracy(),
                Err(AdanError::Diverged { .. }) | Err(AdanError::Numeric { .. }) => f64::NAN,
                Err(other) => return Err(other),
            };
            cells.push(GridCell {
                k,
                lambda,
                dev_accuracy,
            });
        }
    }
    Ok(cells)
}

/// Grid results as TSV rows `k, lambda, dev_accuracy`.
pub fn grid_to_tsv(cells: &[GridCell]) -> String {
    let mut out = String::from("k\tlambda\tdev_accuracy\n");
    for cell in cells {
        let _ = writeln!(out, "{}\t{}\t{}", cell.k, cell.lambda, cell.dev_accuracy);
    }
    out
}

/// Trains a fresh width-1 critic (with clipping) on two fixed feature
/// populations and reports the gap it reaches: an independent measure of
/// how separable the two populations are.
pub fn probe_critic_gap(
    src_feats: &Matrix,
    tgt_feats: &Matrix,
    q_depth: usize,
    iters: usize,
    batch_size: usize,
    lr: f64,
    clip_bound: f64,
    seed: u64,
) -> Result<f64> {
    if src_feats.rows() == 0 || tgt_feats.rows() == 0 {
        return Err(AdanError::EmptyBatch("probe_critic_gap"));
    }
    let config = ModelConfig {
        embed_dim: 1,
        hidden_width: src_feats.cols(),
        f_depth: 1,
        p_depth: 1,
        q_depth,
        num_classes: 2,
        mode: ModelMode::Adan,
    };
    let mut model = build_model(&config, seed)?;
    let mut adam = AdamState::new(lr);
    let mut rng = <rand::rngs::StdRng as rand::SeedableRng>::seed_from_u64(derive_seed(seed, 17));

    let sample = |feats: &Matrix, rng: &mut rand::rngs::StdRng| -> Matrix {
        let mut out = Matrix::zeros(batch_size.min(feats.rows()).max(2), feats.cols());
        for r in 0..out.rows() {
            let i = rand::Rng::gen_range(rng, 0..feats.rows());
            out.row_mut(r).copy_from_slice(feats.row(i));
        }
        out
    };

    for _ in 0..iters {
        let sb = sample(src_feats, &mut rng);
        let tb = sample(tgt_feats, &mut rng);
        let (_, grads) = model.critic_objective_grads(&sb, &tb, true)?;
        let mut q_params = model.q_params_mut()?;
        adam_step(&mut q_params, &grads, &mut adam)?;
        clip_params(&mut q_params, clip_bound);
    }
    model.critic_gap_joint(src_feats, tgt_feats)
}
