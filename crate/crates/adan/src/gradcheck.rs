//! Central finite-difference checking of analytic gradients.
//!
//! A [`Fragment`] is any parameterized computation ending in a scalar loss.
//! [`grad_check`] perturbs every parameter entry by ±eps, compares the
//! numeric slope against the analytic gradient, and reports the worst
//! relative error `|a−n| / max(|a|, |n|, 1e-8)`.
//!
//! Fragment losses must be pure: batch statistics are used in train mode
//! but never folded into running estimates while probing.

use crate::error::{AdanError, Result};
use crate::matrix::Matrix;
use crate::model::{AdanModel, Stack};
use crate::nn::{softmax_xent, Gradients, Mode};

pub trait Fragment {
    /// Names of the parameters the check perturbs.
    fn param_names(&self) -> Vec<String>;
    fn param_mut(&mut self, name: &str) -> &mut Matrix;
    /// Scalar loss at the current parameters; must be side-effect free.
    fn loss(&mut self) -> Result<f64>;
    /// Loss plus analytic gradients, keyed exactly by `param_names`.
    fn loss_and_grads(&mut self) -> Result<(f64, Gradients)>;
}

/// Central differences of an O(1) loss cannot resolve slopes below about
/// `loss · 2⁻⁵³ / eps` ≈ 1e-11 at eps = 1e-5. Entries where both the
/// analytic and the numeric gradient sit under this floor are structural
/// zeros (for example the bias of a dense layer feeding batch norm, which
/// cancels against the batch mean) and count as exact agreement.
const FD_NOISE_FLOOR: f64 = 1e-8;

/// Worst relative error between analytic and central finite-difference
/// gradients over every parameter entry of the fragment.
pub fn grad_check(fragment: &mut dyn Fragment, eps: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(AdanError::Config(format!(
            "grad_check eps {eps} outside [1e-7, 1e-3]"
        )));
    }
    let (base_loss, grads) = fragment.loss_and_grads()?;
    if !base_loss.is_finite() {
        return Err(AdanError::Numeric {
            what: "grad_check loss".to_string(),
        });
    }

    let mut max_rel = 0.0f64;
    for name in fragment.param_names() {
        let n_entries = fragment.param_mut(&name).values().len();
        for i in 0..n_entries {
            let original = fragment.param_mut(&name).values()[i];
            fragment.param_mut(&name).values_mut()[i] = original + eps;
            let loss_plus = fragment.loss()?;
            fragment.param_mut(&name).values_mut()[i] = original - eps;
            let loss_minus = fragment.loss()?;
            fragment.param_mut(&name).values_mut()[i] = original;
            if !loss_plus.is_finite() || !loss_minus.is_finite() {
                return Err(AdanError::Numeric {
                    what: format!("grad_check probe of {name}[{i}]"),
                });
            }
            let numeric = (loss_plus - loss_minus) / (2.0 * eps);
            let analytic = grads
                .get(&name)
                .ok_or_else(|| AdanError::Contract(format!("no gradient for {name}")))?
                .values()[i];
            if analytic.abs() <= FD_NOISE_FLOOR && numeric.abs() <= FD_NOISE_FLOOR {
                continue;
            }
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}

/// Ready-made fragments over the model's losses.
pub mod fragments {
    use super::*;

    /// Any layer stack followed by softmax cross-entropy.
    pub struct StackXent {
        pub stack: Stack,
        pub input: Matrix,
        pub labels: Vec<usize>,
    }

    impl Fragment for StackXent {
        fn param_names(&self) -> Vec<String> {
            self.stack.params().into_iter().map(|(n, _)| n).collect()
        }

        fn param_mut(&mut self, name: &str) -> &mut Matrix {
            self.stack
                .params_mut()
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p)
                .expect("known parameter")
        }

        fn loss(&mut self) -> Result<f64> {
            let (logits, _) = self.stack.forward(&self.input, Mode::Train)?;
            Ok(softmax_xent(&logits, &self.labels)?.0)
        }

        fn loss_and_grads(&mut self) -> Result<(f64, Gradients)> {
            let (logits, caches) = self.stack.forward(&self.input, Mode::Train)?;
            let (loss, d_logits) = softmax_xent(&logits, &self.labels)?;
            let mut grads = Gradients::new();
            self.stack.backward(&caches, &d_logits, &mut grads)?;
            Ok((loss, grads))
        }
    }

    /// A stack with no trainable parameters at all.
    pub struct ParamFree;

    impl Fragment for ParamFree {
        fn param_names(&self) -> Vec<String> {
            Vec::new()
        }
        fn param_mut(&mut self, _name: &str) -> &mut Matrix {
            unreachable!("no parameters")
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(0.0)
        }
        fn loss_and_grads(&mut self) -> Result<(f64, Gradients)> {
            Ok((0.0, Gradients::new()))
        }
    }

    fn model_param_names(model: &AdanModel, prefixes: &[&str]) -> Vec<String> {
        model
            .params()
            .into_iter()
            .map(|(n, _)| n)
            .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
            .collect()
    }

    fn model_param_mut<'a>(model: &'a mut AdanModel, name: &str) -> &'a mut Matrix {
        let params = if name.starts_with("q.") {
            model.q_params_mut().expect("model has a scorer")
        } else {
            model.fp_params_mut()
        };
        params
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .expect("known parameter")
    }

    /// Classification loss J_p through P∘F; checks θ_f and θ_p.
    pub struct JpFragment {
        pub model: AdanModel,
        pub input: Matrix,
        pub labels: Vec<usize>,
    }

    impl Fragment for JpFragment {
        fn param_names(&self) -> Vec<String> {
            model_param_names(&self.model, &["f.", "p."])
        }
        fn param_mut(&mut self, name: &str) -> &mut Matrix {
            model_param_mut(&mut self.model, name)
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(self.model.loss_jp(&self.input, &self.labels, false)?.0)
        }
        fn loss_and_grads(&mut self) -> Result<(f64, Gradients)> {
            self.model.loss_jp(&self.input, &self.labels, false)
        }
    }

    /// Adversarial loss J_f = J_p + λ·gap; checks θ_f and θ_p while θ_q
    /// stays fixed.
    pub struct JfFragment {
        pub model: AdanModel,
        pub lambda: f64,
        pub src: Matrix,
        pub tgt: Matrix,
        pub labeled: Matrix,
        pub labels: Vec<usize>,
    }

    impl Fragment for JfFragment {
        fn param_names(&self) -> Vec<String> {
            model_param_names(&self.model, &["f.", "p."])
        }
        fn param_mut(&mut self, name: &str) -> &mut Matrix {
            model_param_mut(&mut self.model, name)
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(self
                .model
                .loss_jf_adversarial(
                    self.lambda,
                    &self.src,
                    &self.tgt,
                    &self.labeled,
                    &self.labels,
                    false,
                )?
                .loss)
        }
        fn loss_and_grads(&mut self) -> Result<(f64, Gradients)> {
            let out = self.model.loss_jf_adversarial(
                self.lambda,
                &self.src,
                &self.tgt,
                &self.labeled,
                &self.labels,
                false,
            )?;
            Ok((out.loss, out.grads))
        }
    }

    /// Critic objective: loss = −(mean Q(src) − mean Q(tgt)) over fixed
    /// features; checks θ_q.
    pub struct CriticFragment {
        pub model: AdanModel,
        pub src_feats: Matrix,
        pub tgt_feats: Matrix,
    }

    impl Fragment for CriticFragment {
        fn param_names(&self) -> Vec<String> {
            model_param_names(&self.model, &["q."])
        }
        fn param_mut(&mut self, name: &str) -> &mut Matrix {
            model_param_mut(&mut self.model, name)
        }
        fn loss(&mut self) -> Result<f64> {
            Ok(-self
                .model
                .critic_gap_joint(&self.src_feats, &self.tgt_feats)?)
        }
        fn loss_and_grads(&mut self) -> Result<(f64, Gradients)> {
            let (gap, grads) =
                self.model
                    .critic_objective_grads(&self.src_feats, &self.tgt_feats, false)?;
            Ok((-gap, grads))
        }
    }

    /// GRL-mode language cross-entropy through Q∘F, without the gradient
    /// reversal (the −λ factor is exact algebra, tested separately); checks
    /// θ_f and θ_q.
    pub struct LanguageXentFragment {
        pub model: AdanModel,
        pub src: Matrix,
        pub tgt: Matrix,
    }

    impl Fragment for LanguageXentFragment {
        fn param_names(&self) -> Vec<String> {
            model_param_names(&self.model, &["f.", "q."])
        }
        fn param_mut(&mut self, name: &str) -> &mut Matrix {
            model_param_mut(&mut self.model, name)
        }
        fn loss(&mut self) -> Result<f64> {
            let src_feats = self.model.f.forward(&self.src, Mode::Train)?.0;
            let tgt_feats = self.model.f.forward(&self.tgt, Mode::Train)?.0;
            Ok(self
                .model
                .loss_language_xent(&src_feats, &tgt_feats, false)?
                .0)
        }
        fn loss_and_grads(&mut self) -> Result<(f64, Gradients)> {
            let (src_feats, src_caches) = self.model.f.forward(&self.src, Mode::Train)?;
            let (tgt_feats, tgt_caches) = self.model.f.forward(&self.tgt, Mode::Train)?;
            let (loss, mut grads, d_src, d_tgt) =
                self.model.loss_language_xent(&src_feats, &tgt_feats, false)?;
            self.model.f.backward(&src_caches, &d_src, &mut grads)?;
            self.model.f.backward(&tgt_caches, &d_tgt, &mut grads)?;
            Ok((loss, grads))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fragments::*;
    use super::*;
    use crate::model::{build_model, Layer, ModelConfig, ModelMode};
    use crate::nn::{BatchNormLayer, DenseLayer};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn tiny_config(mode: ModelMode) -> ModelConfig {
        ModelConfig {
            embed_dim: 5,
            hidden_width: 7,
            f_depth: 2,
            p_depth: 2,
            q_depth: 2,
            num_classes: 3,
            mode,
        }
    }

    fn random_labels(rng: &mut StdRng, n: usize, c: usize) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..c)).collect()
    }

    #[test]
    fn eps_outside_range_rejected() {
        let mut frag = ParamFree;
        assert!(grad_check(&mut frag, 1e-2).is_err());
        assert!(grad_check(&mut frag, 1e-8).is_err());
    }

    #[test]
    fn zero_parameter_fragment_has_zero_error() {
        let mut frag = ParamFree;
        assert_eq!(grad_check(&mut frag, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn dense_softmax_fragment() {
        for seed in 0..5 {
            let mut rng = StdRng::seed_from_u64(seed);
            let stack = Stack::new(
                "t",
                vec![Layer::Dense(DenseLayer::glorot(4, 3, &mut rng))],
            );
            let input = Matrix::uniform(6, 4, 1.0, &mut rng);
            let labels = random_labels(&mut rng, 6, 3);
            let mut frag = StackXent {
                stack,
                input,
                labels,
            };
            let err = grad_check(&mut frag, 1e-5).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn dense_bn_relu_fragment() {
        for seed in 0..5 {
            let mut rng = StdRng::seed_from_u64(100 + seed);
            let stack = Stack::new(
                "t",
                vec![
                    Layer::Dense(DenseLayer::glorot(4, 6, &mut rng)),
                    Layer::BatchNorm(BatchNormLayer::new(6)),
                    Layer::Relu,
                    Layer::Dense(DenseLayer::glorot(6, 3, &mut rng)),
                ],
            );
            let input = Matrix::uniform(8, 4, 1.0, &mut rng);
            let labels = random_labels(&mut rng, 8, 3);
            let mut frag = StackXent {
                stack,
                input,
                labels,
            };
            let err = grad_check(&mut frag, 1e-5).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn full_fp_stack_fragment() {
        let mut rng = StdRng::seed_from_u64(7);
        let model = build_model(&tiny_config(ModelMode::Dan), 7).unwrap();
        let input = Matrix::uniform(4, 5, 1.0, &mut rng);
        let labels = random_labels(&mut rng, 4, 3);
        let mut frag = JpFragment {
            model,
            input,
            labels,
        };
        let err = grad_check(&mut frag, 1e-5).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn adversarial_jf_fragment() {
        let mut rng = StdRng::seed_from_u64(19);
        let model = build_model(&tiny_config(ModelMode::Adan), 19).unwrap();
        let mut frag = JfFragment {
            model,
            lambda: 0.1,
            src: Matrix::uniform(4, 5, 1.0, &mut rng),
            tgt: Matrix::uniform(4, 5, 1.0, &mut rng),
            labeled: Matrix::uniform(4, 5, 1.0, &mut rng),
            labels: random_labels(&mut rng, 4, 3),
        };
        let err = grad_check(&mut frag, 1e-5).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn critic_fragment() {
        let mut rng = StdRng::seed_from_u64(23);
        let model = build_model(&tiny_config(ModelMode::Adan), 23).unwrap();
        let mut frag = CriticFragment {
            model,
            src_feats: Matrix::uniform(4, 7, 1.0, &mut rng),
            tgt_feats: Matrix::uniform(4, 7, 1.0, &mut rng),
        };
        let err = grad_check(&mut frag, 1e-5).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn language_xent_fragment() {
        let mut rng = StdRng::seed_from_u64(29);
        let model = build_model(&tiny_config(ModelMode::Grl), 29).unwrap();
        let mut frag = LanguageXentFragment {
            model,
            src: Matrix::uniform(4, 5, 1.0, &mut rng),
            tgt: Matrix::uniform(4, 5, 1.0, &mut rng),
        };
        let err = grad_check(&mut frag, 1e-5).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn reversed_gradients_are_minus_lambda_times_plain() {
        // grl_transform's backward is exact algebra over the unreversed
        // chain checked above.
        let mut rng = StdRng::seed_from_u64(31);
        let mut model = build_model(&tiny_config(ModelMode::Grl), 31).unwrap();
        let src = Matrix::uniform(4, 5, 1.0, &mut rng);
        let tgt = Matrix::uniform(4, 5, 1.0, &mut rng);
        let (src_feats, src_caches) = model.f.forward(&src, Mode::Train).unwrap();
        let (tgt_feats, tgt_caches) = model.f.forward(&tgt, Mode::Train).unwrap();
        let (_, _, d_src, d_tgt) = model
            .loss_language_xent(&src_feats, &tgt_feats, false)
            .unwrap();

        let lambda = 0.25;
        let grl = crate::model::GradReversal { lambda };
        let mut reversed = Gradients::new();
        model
            .f
            .backward(&src_caches, &grl.backward(&d_src), &mut reversed)
            .unwrap();
        model
            .f
            .backward(&tgt_caches, &grl.backward(&d_tgt), &mut reversed)
            .unwrap();

        let mut plain = Gradients::new();
        model.f.backward(&src_caches, &d_src, &mut plain).unwrap();
        model.f.backward(&tgt_caches, &d_tgt, &mut plain).unwrap();

        for (name, g) in plain.iter() {
            let r = reversed.get(name).unwrap();
            for (&a, &b) in g.values().iter().zip(r.values()) {
                assert!((b + lambda * a).abs() < 1e-12);
            }
        }
    }


}
