//! Diagnostics beyond accuracy: averaged Hausdorff distance between feature
//! populations, the exact-binomial McNemar test, and feature dumps at the
//! three probe points (averaging layer, extractor output, classifier's last
//! hidden layer).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{AdanError, Result};
use crate::matrix::Matrix;
use crate::model::AdanModel;
use crate::text::{averaged_batch, Corpus, EmbeddingTable};

/// A population of feature vectors, one per row.
#[derive(Debug, Clone)]
pub struct PointSet {
    points: Matrix,
}

impl PointSet {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.rows() == 0 {
            return Err(AdanError::EmptyBatch("point set"));
        }
        Ok(PointSet { points })
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// TSV: one row per point, tab-separated decimal reals.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for r in 0..self.points.rows() {
            let mut first = true;
            for v in self.points.row(r) {
                if !first {
                    write!(out, "\t")?;
                }
                write!(out, "{v}")?;
                first = false;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let reader = BufReader::new(File::open(path)?);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split('\t')
                .map(|s| {
                    s.parse::<f64>().map_err(|_| AdanError::Format {
                        path: display.clone(),
                        line: idx + 1,
                        msg: format!("bad value {s}"),
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(AdanError::Format {
                        path: display,
                        line: idx + 1,
                        msg: format!("ragged row: expected {}, got {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        PointSet::new(Matrix::from_rows(&rows)?)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn directed_mean_min(a: &PointSet, b: &PointSet) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        let row = a.points.row(i);
        let mut best = f64::INFINITY;
        for j in 0..b.len() {
            best = best.min(squared_distance(row, b.points.row(j)));
        }
        total += best.sqrt();
    }
    total / a.len() as f64
}

/// Averaged Hausdorff distance: the larger of the two directed mean
/// nearest-neighbor distances, `max(d(A→B), d(B→A))` with
/// `d(A→B) = (1/|A|)·Σ_a min_b ‖a−b‖₂`.
pub fn averaged_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(AdanError::Shape {
            op: "averaged_hausdorff",
            lhs: a.points.shape(),
            rhs: b.points.shape(),
        });
    }
    Ok(directed_mean_min(a, b).max(directed_mean_min(b, a)))
}

/// Exact binomial McNemar test over the two discordant-pair counts:
/// `p = min(1, 2·Σ_{i=0}^{min(b,c)} C(b+c, i)·0.5^{b+c})`.
pub fn mcnemar_test(b: u64, c: u64) -> Result<f64> {
    let n = b + c;
    if n == 0 {
        return Err(AdanError::UndefinedTest);
    }
    let m = b.min(c);
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_choose = 0.0f64; // ln C(n, 0)
    let mut sum = ln_half_n.exp();
    for i in 0..m {
        ln_choose += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        sum += (ln_choose + ln_half_n).exp();
    }
    Ok((2.0 * sum).min(1.0))
}

/// Where to tap per-document feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    /// Averaged word embeddings (the network input).
    Avg,
    /// Output of the feature extractor.
    F,
    /// Last hidden activation of the classifier, before the softmax layer.
    PLast,
}

impl FromStr for Probe {
    type Err = AdanError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Probe::Avg),
            "F" => Ok(Probe::F),
            "P_last" => Ok(Probe::PLast),
            other => Err(AdanError::Config(format!(
                "unknown probe {other} (expected avg, F, or P_last)"
            ))),
        }
    }
}

/// Per-document feature vectors at the chosen probe point, in corpus order,
/// inference mode.
pub fn dump_features(
    model: &AdanModel,
    corpus: &Corpus,
    table: &EmbeddingTable,
    probe: Probe,
) -> Result<PointSet> {
    if corpus.is_empty() {
        return Err(AdanError::EmptyCorpus);
    }
    let indices: Vec<usize> = (0..corpus.len()).collect();
    let averaged = averaged_batch(corpus, &indices, table)?;
    let points = match probe {
        Probe::Avg => averaged,
        Probe::F => model.feature_extract(&averaged)?,
        Probe::PLast => {
            let features = model.feature_extract(&averaged)?;
            model.classifier_hidden(&features)?
        }
    };
    PointSet::new(points)
}
