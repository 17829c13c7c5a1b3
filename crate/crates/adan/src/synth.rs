//! Seeded generator of a controlled "two-language" classification problem.
//!
//! Class prototypes live on the unit sphere in ℝ^d. Source token vectors are
//! noisy copies of their class prototype; target token vectors are the same
//! construction pushed through a fixed rotation, which plays the role of the
//! cross-lingual embedding misalignment. Documents mix class tokens (80%)
//! with tokens from a shared neutral pool (20%), so a classifier must rely
//! on the class signal rather than individual tokens.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::{AdanError, Result};
use crate::matrix::Matrix;
use crate::text::{Corpus, Document, EmbeddingTable, Language};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub vocab_per_class: usize,
    pub dim: usize,
    pub src_train_docs: usize,
    pub tgt_unlabeled_docs: usize,
    pub src_dev_docs: usize,
    pub tgt_dev_docs: usize,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    /// Rotation applied to target vectors, in radians, in ⌊d/2⌋ randomly
    /// chosen disjoint coordinate planes.
    pub rotation_angle: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 3,
            vocab_per_class: 100,
            dim: 20,
            src_train_docs: 5000,
            tgt_unlabeled_docs: 5000,
            src_dev_docs: 1000,
            tgt_dev_docs: 1000,
            doc_len_min: 5,
            doc_len_max: 20,
            rotation_angle: std::f64::consts::FRAC_PI_3,
            noise_sigma: 0.25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(AdanError::Config("num_classes must be >= 2".to_string()));
        }
        if self.vocab_per_class == 0 || self.dim == 0 {
            return Err(AdanError::Config(
                "vocab_per_class and dim must be >= 1".to_string(),
            ));
        }
        if self.src_train_docs == 0
            || self.tgt_unlabeled_docs == 0
            || self.src_dev_docs == 0
            || self.tgt_dev_docs == 0
        {
            return Err(AdanError::Config("all split counts must be >= 1".to_string()));
        }
        if self.doc_len_min == 0 || self.doc_len_min > self.doc_len_max {
            return Err(AdanError::Config(
                "doc length range must satisfy 1 <= min <= max".to_string(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(AdanError::Config("noise_sigma must be >= 0".to_string()));
        }
        Ok(())
    }
}

/// Everything one experiment needs. `tgt_labeled_pool` holds the same
/// documents as `tgt_unlabeled` with their true labels attached, as the
/// source of labeled target data for semi-supervised runs.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub src_table: EmbeddingTable,
    pub tgt_table: EmbeddingTable,
    pub src_train: Corpus,
    pub tgt_unlabeled: Corpus,
    pub tgt_labeled_pool: Corpus,
    pub src_dev: Corpus,
    pub tgt_dev: Corpus,
    /// The d×d rotation that maps source space into target space.
    pub rotation: Matrix,
}

fn gaussian(rng: &mut StdRng) -> f64 {
    // Box-Muller; rejects u1 = 0 to keep ln finite.
    loop {
        let u1: f64 = rng.gen();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.gen();
        return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
}

/// Product of Givens rotations by `angle` in ⌊d/2⌋ disjoint planes chosen
/// from a random permutation of the coordinates.
fn random_rotation(dim: usize, angle: f64, rng: &mut StdRng) -> Matrix {
    let mut r = Matrix::zeros(dim, dim);
    for i in 0..dim {
        r[(i, i)] = 1.0;
    }
    let mut coords: Vec<usize> = (0..dim).collect();
    coords.shuffle(rng);
    for pair in coords.chunks_exact(2) {
        let (i, j) = (pair[0], pair[1]);
        let (sin, cos) = angle.sin_cos();
        // left-multiply by G(i, j, angle): rows i and j mix
        for c in 0..dim {
            let (ri, rj) = (r[(i, c)], r[(j, c)]);
            r[(i, c)] = cos * ri - sin * rj;
            r[(j, c)] = sin * ri + cos * rj;
        }
    }
    r
}

fn rotate(r: &Matrix, v: &[f64]) -> Vec<f64> {
    let dim = v.len();
    let mut out = vec![0.0; dim];
    for (i, o) in out.iter_mut().enumerate() {
        let mut sum = 0.0;
        for (j, &x) in v.iter().enumerate() {
            sum += r[(i, j)] * x;
        }
        *o = sum;
    }
    out
}

fn make_documents(
    cfg: &SynthConfig,
    language: Language,
    count: usize,
    labeled: bool,
    rng: &mut StdRng,
) -> Vec<Document> {
    let v = cfg.vocab_per_class;
    let neutral_base = cfg.num_classes * v;
    (0..count)
        .map(|i| {
            let class = i % cfg.num_classes;
            let len = rng.gen_range(cfg.doc_len_min..=cfg.doc_len_max);
            let token_ids = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.8) {
                        class * v + rng.gen_range(0..v)
                    } else {
                        neutral_base + rng.gen_range(0..v)
                    }
                })
                .collect();
            Document {
                language,
                token_ids,
                label: labeled.then_some(class),
            }
        })
        .collect()
}

/// Generates the full benchmark deterministically from `cfg.seed`.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let v = cfg.vocab_per_class;
    let c = cfg.num_classes;

    // class prototypes on the unit sphere
    let prototypes: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            let mut p: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for x in &mut p {
                *x /= norm;
            }
            p
        })
        .collect();

    let rotation = random_rotation(d, cfg.rotation_angle, &mut rng);

    // token pools: per-class pools first, then the shared neutral pool
    let pool_vector = |proto: Option<&Vec<f64>>, rng: &mut StdRng| -> Vec<f64> {
        (0..d)
            .map(|k| proto.map_or(0.0, |p| p[k]) + cfg.noise_sigma * gaussian(rng))
            .collect()
    };

    let mut src_tokens = Vec::with_capacity((c + 1) * v);
    let mut src_vectors = Vec::with_capacity((c + 1) * v);
    for (ci, proto) in prototypes.iter().enumerate() {
        for t in 0..v {
            src_tokens.push(format!("s_c{ci}_{t}"));
            src_vectors.push(pool_vector(Some(proto), &mut rng));
        }
    }
    for t in 0..v {
        src_tokens.push(format!("s_n_{t}"));
        src_vectors.push(pool_vector(None, &mut rng));
    }

    let mut tgt_tokens = Vec::with_capacity((c + 1) * v);
    let mut tgt_vectors = Vec::with_capacity((c + 1) * v);
    for (ci, proto) in prototypes.iter().enumerate() {
        for t in 0..v {
            tgt_tokens.push(format!("t_c{ci}_{t}"));
            tgt_vectors.push(rotate(&rotation, &pool_vector(Some(proto), &mut rng)));
        }
    }
    for t in 0..v {
        tgt_tokens.push(format!("t_n_{t}"));
        tgt_vectors.push(rotate(&rotation, &pool_vector(None, &mut rng)));
    }

    let src_table = EmbeddingTable::new(
        Language::Source,
        src_tokens,
        Matrix::from_rows(&src_vectors)?,
    )?;
    let tgt_table = EmbeddingTable::new(
        Language::Target,
        tgt_tokens,
        Matrix::from_rows(&tgt_vectors)?,
    )?;

    let src_train = Corpus::new(
        make_documents(cfg, Language::Source, cfg.src_train_docs, true, &mut rng),
        c,
    )?;
    let tgt_pool_docs = make_documents(cfg, Language::Target, cfg.tgt_unlabeled_docs, true, &mut rng);
    let tgt_unlabeled = Corpus::new(
        tgt_pool_docs
            .iter()
            .map(|doc| Document {
                label: None,
                ..doc.clone()
            })
            .collect(),
        c,
    )?;
    let tgt_labeled_pool = Corpus::new(tgt_pool_docs, c)?;
    let src_dev = Corpus::new(
        make_documents(cfg, Language::Source, cfg.src_dev_docs, true, &mut rng),
        c,
    )?;
    let tgt_dev = Corpus::new(
        make_documents(cfg, Language::Target, cfg.tgt_dev_docs, true, &mut rng),
        c,
    )?;

    Ok(SynthData {
        src_table,
        tgt_table,
        src_train,
        tgt_unlabeled,
        tgt_labeled_pool,
        src_dev,
        tgt_dev,
        rotation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SynthConfig {
        SynthConfig {
            num_classes: 2,
            vocab_per_class: 20,
            dim: 4,
            src_train_docs: 30,
            tgt_unlabeled_docs: 30,
            src_dev_docs: 10,
            tgt_dev_docs: 10,
            doc_len_min: 3,
            doc_len_max: 8,
            rotation_angle: 0.5,
            noise_sigma: 0.1,
            seed: 7,
        }
    }

    #[test]
    fn same_seed_identical_output() {
        let cfg = tiny_config();
        let a = gen_synthetic(&cfg).unwrap();
        let b = gen_synthetic(&cfg).unwrap();
        assert_eq!(
            a.src_table.vectors().values(),
            b.src_table.vectors().values()
        );
        assert_eq!(
            a.tgt_table.vectors().values(),
            b.tgt_table.vectors().values()
        );
        assert_eq!(a.src_train.documents, b.src_train.documents);
        assert_eq!(a.tgt_dev.documents, b.tgt_dev.documents);
    }

    #[test]
    fn null_transform_matches_tables_up_to_naming() {
        let mut cfg = tiny_config();
        cfg.rotation_angle = 0.0;
        cfg.noise_sigma = 0.0;
        let data = gen_synthetic(&cfg).unwrap();
        assert_eq!(
            data.src_table.vectors().values(),
            data.tgt_table.vectors().values()
        );
    }

    #[test]
    fn right_angle_rotation_in_two_dims() {
        let mut cfg = tiny_config();
        cfg.dim = 2;
        cfg.rotation_angle = std::f64::consts::FRAC_PI_2;
        cfg.noise_sigma = 0.0;
        let data = gen_synthetic(&cfg).unwrap();
        let v = cfg.vocab_per_class;
        for class in 0..cfg.num_classes {
            // noise-free: every token vector equals its (rotated) prototype
            let src = data.src_table.vector(class * v);
            let tgt = data.tgt_table.vector(class * v);
            let rotated = rotate(&data.rotation, src);
            for (a, b) in tgt.iter().zip(&rotated) {
                assert!((a - b).abs() < 1e-12);
            }
            // 90 degrees: rotated vector is orthogonal to the original
            let dot: f64 = src.iter().zip(tgt).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-12, "dot {dot}");
        }
    }

    #[test]
    fn class_means_match_rotated_source_means() {
        let cfg = SynthConfig {
            seed: 11,
            ..SynthConfig::default()
        };
        let data = gen_synthetic(&cfg).unwrap();
        let v = cfg.vocab_per_class;
        let tol = 3.0 * cfg.noise_sigma / (v as f64).sqrt();
        for class in 0..cfg.num_classes {
            let mean_of = |table: &EmbeddingTable| -> Vec<f64> {
                let mut mean = vec![0.0; cfg.dim];
                for t in 0..v {
                    for (m, &x) in mean.iter_mut().zip(table.vector(class * v + t)) {
                        *m += x;
                    }
                }
                mean.iter().map(|m| m / v as f64).collect()
            };
            let src_mean = mean_of(&data.src_table);
            let tgt_mean = mean_of(&data.tgt_table);
            let rotated = rotate(&data.rotation, &src_mean);
            for (k, (a, b)) in tgt_mean.iter().zip(&rotated).enumerate() {
                assert!(
                    (a - b).abs() <= tol,
                    "class {class} coord {k}: |{a} - {b}| > {tol}"
                );
            }
        }
    }

    #[test]
    fn rotation_is_orthogonal() {
        let cfg = SynthConfig::default();
        let data = gen_synthetic(&cfg).unwrap();
        let r = &data.rotation;
        // RᵀR = I
        for i in 0..cfg.dim {
            for j in 0..cfg.dim {
                let dot: f64 = (0..cfg.dim).map(|k| r[(k, i)] * r[(k, j)]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn splits_have_declared_sizes_and_labels() {
        let cfg = tiny_config();
        let data = gen_synthetic(&cfg).unwrap();
        assert_eq!(data.src_train.len(), 30);
        assert_eq!(data.tgt_unlabeled.len(), 30);
        assert_eq!(data.src_dev.len(), 10);
        assert_eq!(data.tgt_dev.len(), 10);
        assert!(data.src_train.labeled);
        assert!(!data.tgt_unlabeled.labeled);
        assert!(data.tgt_labeled_pool.labeled);
        assert!(data.src_dev.labeled);
        assert!(data.tgt_dev.labeled);
        // the labeled pool mirrors the unlabeled documents
        assert_eq!(data.tgt_labeled_pool.len(), data.tgt_unlabeled.len());
        for (a, b) in data
            .tgt_labeled_pool
            .documents
            .iter()
            .zip(&data.tgt_unlabeled.documents)
        {
            assert_eq!(a.token_ids, b.token_ids);
        }
        // balanced classes
        let mut counts = vec![0usize; cfg.num_classes];
        for doc in &data.src_train.documents {
            counts[doc.label.unwrap()] += 1;
        }
        assert_eq!(counts, vec![15, 15]);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = tiny_config();
        cfg.doc_len_min = 0;
        assert!(gen_synthetic(&cfg).is_err());
        let mut cfg = tiny_config();
        cfg.noise_sigma = -1.0;
        assert!(gen_synthetic(&cfg).is_err());
    }
}
