//! Vocabulary and embedding tables, corpus ingestion, label mapping,
//! embedding averaging, and mini-batch streams.
//!
//! File formats:
//! - embedding file: UTF-8 text, optional first header line `V d` (two
//!   integers), then one line per token: the token (no spaces) followed by
//!   exactly `d` decimal reals, single-space separated;
//! - corpus file: one document per line, a label field (integer class index
//!   or `-` for unlabeled), one TAB, then space-separated tokens.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::error::{AdanError, Result};
use crate::matrix::Matrix;

/// Which side of the transfer problem a table or document belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Language {
    Source,
    Target,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Source => "source",
            Language::Target => "target",
        }
    }
}

/// Three-way sentiment polarity used by the 5-to-3 label mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub fn class_index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Neutral => 1,
            Polarity::Positive => 2,
        }
    }
}

/// Maps a 1–5 star rating onto {negative, neutral, positive}:
/// 1,2 → negative; 3 → neutral; 4,5 → positive.
pub fn map_labels_5to3(label: usize) -> Result<Polarity> {
    match label {
        1 | 2 => Ok(Polarity::Negative),
        3 => Ok(Polarity::Neutral),
        4 | 5 => Ok(Polarity::Positive),
        _ => Err(AdanError::Label {
            label,
            num_classes: 5,
        }),
    }
}

/// Per-language vocabulary plus a V×d embedding matrix.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    language: Language,
    tokens: Vec<String>,
    vocab: HashMap<String, usize>,
    vectors: Matrix,
}

impl EmbeddingTable {
    pub fn new(language: Language, tokens: Vec<String>, vectors: Matrix) -> Result<Self> {
        if tokens.len() != vectors.rows() {
            return Err(AdanError::Config(format!(
                "{} tokens but {} vector rows",
                tokens.len(),
                vectors.rows()
            )));
        }
        let mut vocab = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if vocab.insert(t.clone(), i).is_some() {
                return Err(AdanError::Config(format!("duplicate token {t}")));
            }
        }
        Ok(EmbeddingTable {
            language,
            tokens,
            vocab,
            vectors,
        })
    }

    /// Loads a table from the text format, preserving file order.
    pub fn load(path: &Path, language: Language) -> Result<Self> {
        let display = path.display().to_string();
        let file = File::open(path)?;
        let reader = BufReader::new(file);

        let mut tokens = Vec::new();
        let mut vocab: HashMap<String, usize> = HashMap::new();
        let mut values: Vec<f64> = Vec::new();
        let mut dim: Option<usize> = None;
        let mut declared: Option<(usize, usize)> = None;

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let first = fields.next().expect("non-empty line");
            let rest: Vec<&str> = fields.collect();

            // A first line of exactly two integers is the "V d" header.
            if line_no == 1 && rest.len() == 1 {
                if let (Ok(v), Ok(d)) = (first.parse::<usize>(), rest[0].parse::<usize>()) {
                    declared = Some((v, d));
                    continue;
                }
            }

            let token = first.to_string();
            if let Some(&prev) = vocab.get(&token) {
                return Err(AdanError::Format {
                    path: display,
                    line: line_no,
                    msg: format!("duplicate token {token} (first seen as entry {prev})"),
                });
            }
            let row: Vec<f64> = rest
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| AdanError::Format {
                        path: display.clone(),
                        line: line_no,
                        msg: format!("bad value {s}"),
                    })
                })
                .collect::<Result<_>>()?;
            match dim {
                None => {
                    if row.is_empty() {
                        return Err(AdanError::Format {
                            path: display,
                            line: line_no,
                            msg: "no embedding values".to_string(),
                        });
                    }
                    dim = Some(row.len());
                }
                Some(d) if d != row.len() => {
                    return Err(AdanError::Format {
                        path: display,
                        line: line_no,
                        msg: format!("ragged dimension: expected {d}, got {}", row.len()),
                    });
                }
                _ => {}
            }
            vocab.insert(token.clone(), tokens.len());
            tokens.push(token);
            values.extend_from_slice(&row);
        }

        let d = dim.unwrap_or(declared.map_or(0, |(_, d)| d));
        if let Some((v_decl, d_decl)) = declared {
            if v_decl != tokens.len() || d_decl != d {
                return Err(AdanError::Format {
                    path: display,
                    line: 1,
                    msg: format!(
                        "header declares {v_decl} x {d_decl}, file holds {} x {d}",
                        tokens.len()
                    ),
                });
            }
        }
        let vectors = Matrix::from_vec(tokens.len(), d, values)?;
        EmbeddingTable::new(language, tokens, vectors)
    }

    /// Writes the table in the text format with a `V d` header line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{} {}", self.len(), self.dim())?;
        for (i, token) in self.tokens.iter().enumerate() {
            write!(out, "{token}")?;
            for v in self.vectors.row(i) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Entries i.i.d. uniform in [-0.1, 0.1] from the seeded generator.
    pub fn random(language: Language, tokens: Vec<String>, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(AdanError::Config("embedding dim must be > 0".to_string()));
        }
        let mut rng = StdRng::seed_from_u64(seed);
        let vectors = Matrix::uniform(tokens.len(), dim, 0.1, &mut rng);
        EmbeddingTable::new(language, tokens, vectors)
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.vocab.get(token).copied()
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        self.vectors.row(id)
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }
}

/// Errors unless two tables share one embedding dimension.
pub fn check_same_dim(a: &EmbeddingTable, b: &EmbeddingTable) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(AdanError::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// A token-index sequence with a language tag and an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub language: Language,
    pub token_ids: Vec<usize>,
    pub label: Option<usize>,
}

/// A collection of documents plus class-count and ingestion metadata.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub num_classes: usize,
    pub labeled: bool,
    /// Tokens dropped during ingestion because they were out of vocabulary.
    pub oov_dropped: usize,
    /// Documents left with zero tokens after OOV filtering.
    pub empty_docs: usize,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, num_classes: usize) -> Result<Self> {
        let labeled = documents.iter().all(|d| d.label.is_some());
        for doc in &documents {
            if let Some(label) = doc.label {
                if label >= num_classes {
                    return Err(AdanError::Label { label, num_classes });
                }
            }
        }
        let empty_docs = documents.iter().filter(|d| d.token_ids.is_empty()).count();
        Ok(Corpus {
            documents,
            num_classes,
            labeled,
            oov_dropped: 0,
            empty_docs,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Loads a corpus file against a vocabulary. Unknown tokens are dropped and
/// counted; documents are kept even when everything was filtered out.
pub fn load_corpus(path: &Path, table: &EmbeddingTable, expect_labels: bool) -> Result<Corpus> {
    let display = path.display().to_string();
    let file = File::open(path)?;
    let reader = BufReader::new(file);

    let mut documents = Vec::new();
    let mut oov_dropped = 0usize;
    let mut max_label: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (label_field, text) = line.split_once('\t').ok_or_else(|| AdanError::Format {
            path: display.clone(),
            line: line_no,
            msg: "missing TAB between label and tokens".to_string(),
        })?;

        let label = if label_field == "-" {
            if expect_labels {
                return Err(AdanError::Format {
                    path: display,
                    line: line_no,
                    msg: "unlabeled document in a labeled corpus".to_string(),
                });
            }
            None
        } else {
            let value = label_field.parse::<usize>().map_err(|_| AdanError::Format {
                path: display.clone(),
                line: line_no,
                msg: format!("bad label {label_field}"),
            })?;
            max_label = Some(max_label.map_or(value, |m| m.max(value)));
            Some(value)
        };

        let mut token_ids = Vec::new();
        for token in text.split_whitespace() {
            match table.token_id(token) {
                Some(id) => token_ids.push(id),
                None => oov_dropped += 1,
            }
        }
        documents.push(Document {
            language: table.language(),
            token_ids,
            label,
        });
    }

    let num_classes = max_label.map_or(0, |m| m + 1);
    let mut corpus = Corpus::new(documents, num_classes)?;
    corpus.oov_dropped = oov_dropped;
    Ok(corpus)
}

/// Writes a corpus back to the text format, resolving ids against `table`.
pub fn save_corpus(corpus: &Corpus, table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for doc in &corpus.documents {
        match doc.label {
            Some(label) => write!(out, "{label}\t")?,
            None => write!(out, "-\t")?,
        }
        let mut first = true;
        for &id in &doc.token_ids {
            if !first {
                write!(out, " ")?;
            }
            write!(out, "{}", table.tokens()[id])?;
            first = false;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Arithmetic mean of the document's token vectors; an empty document
/// averages to the zero vector.
pub fn average_embed(doc: &Document, table: &EmbeddingTable) -> Result<Vec<f64>> {
    if doc.language != table.language() {
        return Err(AdanError::Contract(format!(
            "document language {} does not match table language {}",
            doc.language.as_str(),
            table.language().as_str()
        )));
    }
    let mut mean = vec![0.0; table.dim()];
    if doc.token_ids.is_empty() {
        return Ok(mean);
    }
    for &id in &doc.token_ids {
        for (m, &v) in mean.iter_mut().zip(table.vector(id)) {
            *m += v;
        }
    }
    let n = doc.token_ids.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

/// Stacks `average_embed` rows for the selected documents.
pub fn averaged_batch(
    corpus: &Corpus,
    indices: &[usize],
    table: &EmbeddingTable,
) -> Result<Matrix> {
    let mut out = Matrix::zeros(indices.len(), table.dim());
    for (r, &i) in indices.iter().enumerate() {
        let mean = average_embed(&corpus.documents[i], table)?;
        out.row_mut(r).copy_from_slice(&mean);
    }
    Ok(out)
}

/// Splits a base seed into independent stream seeds (splitmix64 step).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seeded mini-batch index stream over a corpus. A non-cycling stream
/// partitions one epoch (last batch may be short); a cycling stream never
/// ends and reshuffles at every wraparound.
#[derive(Debug, Clone)]
pub struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    cycling: bool,
    rng: StdRng,
}

pub fn make_stream(
    corpus: &Corpus,
    batch_size: usize,
    seed: u64,
    cycling: bool,
) -> Result<BatchStream> {
    if corpus.is_empty() {
        return Err(AdanError::EmptyCorpus);
    }
    if batch_size == 0 {
        return Err(AdanError::Config("batch_size must be >= 1".to_string()));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    Ok(BatchStream {
        order,
        pos: 0,
        batch_size,
        cycling,
        rng,
    })
}

impl BatchStream {
    /// Next batch of document indices; `None` once a non-cycling stream has
    /// finished its single epoch.
    pub fn next_batch(&mut self) -> Option<Vec<usize>> {
        if !self.cycling {
            if self.pos >= self.order.len() {
                return None;
            }
            let end = (self.pos + self.batch_size).min(self.order.len());
            let batch = self.order[self.pos..end].to_vec();
            self.pos = end;
            return Some(batch);
        }
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size {
            if self.pos >= self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            batch.push(self.order[self.pos]);
            self.pos += 1;
        }
        Some(batch)
    }
}

impl Iterator for BatchStream {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        self.next_batch()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::io::Write as _;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn identity_table() -> EmbeddingTable {
        EmbeddingTable::new(
            Language::Source,
            vec!["a".into(), "b".into()],
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn load_minimal_two_line_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "emb.txt", "a 1.0 0.0\nb 0.0 1.0\n");
        let table = EmbeddingTable::load(&path, Language::Source).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.dim(), 2);
        assert_eq!(table.vector(0), &[1.0, 0.0]);
        assert_eq!(table.vector(1), &[0.0, 1.0]);
    }

    #[test]
    fn load_with_header_at_paper_shape() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::from("100000 50\n");
        for i in 0..100000 {
            content.push_str(&format!("w{i}"));
            for j in 0..50 {
                content.push_str(if (i + j) % 2 == 0 { " 0" } else { " 1" });
            }
            content.push('\n');
        }
        let path = write_file(&dir, "big.txt", &content);
        let table = EmbeddingTable::load(&path, Language::Source).unwrap();
        assert_eq!(table.len(), 100000);
        assert_eq!(table.dim(), 50);
    }

    #[test]
    fn duplicate_token_cites_second_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "dup.txt", "a 1\nb 2\nc 3\nd 4\ne 5\nf 6\nc 7\n");
        let err = EmbeddingTable::load(&path, Language::Source).unwrap_err();
        match err {
            AdanError::Format { line, .. } => assert_eq!(line, 7),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn ragged_dimension_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "ragged.txt", "a 1 2\nb 3\n");
        let err = EmbeddingTable::load(&path, Language::Source).unwrap_err();
        assert!(matches!(err, AdanError::Format { line: 2, .. }));
    }

    #[test]
    fn dim_mismatch_between_tables() {
        let a = identity_table();
        let b = EmbeddingTable::new(
            Language::Target,
            vec!["x".into()],
            Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            check_same_dim(&a, &b),
            Err(AdanError::DimMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let table = EmbeddingTable::random(
            Language::Target,
            (0..40).map(|i| format!("t{i}")).collect(),
            7,
            99,
        )
        .unwrap();
        let p1 = dir.path().join("a.txt");
        table.save(&p1).unwrap();
        let loaded = EmbeddingTable::load(&p1, Language::Target).unwrap();
        assert_eq!(loaded.tokens(), table.tokens());
        assert_eq!(loaded.vectors().values(), table.vectors().values());
        // dumping again is byte-identical
        let p2 = dir.path().join("b.txt");
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn random_tables_deterministic_per_seed() {
        let tokens: Vec<String> = (0..1000).map(|i| format!("w{i}")).collect();
        let a = EmbeddingTable::random(Language::Source, tokens.clone(), 300, 5).unwrap();
        let b = EmbeddingTable::random(Language::Source, tokens.clone(), 300, 5).unwrap();
        let c = EmbeddingTable::random(Language::Source, tokens, 300, 6).unwrap();
        assert_eq!(a.vectors().values(), b.vectors().values());
        assert_ne!(a.vectors().values(), c.vectors().values());
        assert!(a.vectors().values().iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn label_mapping_exhaustive() {
        assert_eq!(map_labels_5to3(1).unwrap(), Polarity::Negative);
        assert_eq!(map_labels_5to3(2).unwrap(), Polarity::Negative);
        assert_eq!(map_labels_5to3(3).unwrap(), Polarity::Neutral);
        assert_eq!(map_labels_5to3(4).unwrap(), Polarity::Positive);
        assert_eq!(map_labels_5to3(5).unwrap(), Polarity::Positive);
        assert!(map_labels_5to3(0).is_err());
        assert!(map_labels_5to3(6).is_err());
    }

    #[test]
    fn average_embed_cases() {
        let table = identity_table();
        let single = Document {
            language: Language::Source,
            token_ids: vec![0],
            label: None,
        };
        assert_eq!(average_embed(&single, &table).unwrap(), vec![1.0, 0.0]);

        let pair = Document {
            language: Language::Source,
            token_ids: vec![0, 1],
            label: None,
        };
        assert_eq!(average_embed(&pair, &table).unwrap(), vec![0.5, 0.5]);

        let empty = Document {
            language: Language::Source,
            token_ids: vec![],
            label: None,
        };
        assert_eq!(average_embed(&empty, &table).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn average_embed_permutation_invariant() {
        let tokens: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let table = EmbeddingTable::random(Language::Source, tokens, 6, 1).unwrap();
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let len = rng.gen_range(1..12);
            let mut ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..30)).collect();
            let doc = Document {
                language: Language::Source,
                token_ids: ids.clone(),
                label: None,
            };
            let base = average_embed(&doc, &table).unwrap();
            ids.shuffle(&mut rng);
            let shuffled = Document {
                language: Language::Source,
                token_ids: ids,
                label: None,
            };
            let permuted = average_embed(&shuffled, &table).unwrap();
            for (a, b) in base.iter().zip(&permuted) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn language_mismatch_rejected() {
        let table = identity_table();
        let doc = Document {
            language: Language::Target,
            token_ids: vec![0],
            label: None,
        };
        assert!(average_embed(&doc, &table).is_err());
    }

    #[test]
    fn corpus_happy_path_and_oov() {
        let dir = tempfile::tempdir().unwrap();
        let table = identity_table();
        let path = write_file(&dir, "c.txt", "2\ta b\n-\txyzzy\n");
        let corpus = load_corpus(&path, &table, false).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.documents[0].label, Some(2));
        assert_eq!(corpus.documents[0].token_ids, vec![0, 1]);
        assert_eq!(corpus.documents[1].label, None);
        assert!(corpus.documents[1].token_ids.is_empty());
        assert_eq!(corpus.oov_dropped, 1);
        assert_eq!(corpus.empty_docs, 1);
        assert_eq!(corpus.num_classes, 3);
        assert!(!corpus.labeled);
    }

    #[test]
    fn unlabeled_line_rejected_when_labels_expected() {
        let dir = tempfile::tempdir().unwrap();
        let table = identity_table();
        let path = write_file(&dir, "c.txt", "1\ta\n-\ta\n");
        let err = load_corpus(&path, &table, true).unwrap_err();
        assert!(matches!(err, AdanError::Format { line: 2, .. }));
    }

    #[test]
    fn stream_partitions_one_epoch() {
        let docs: Vec<Document> = (0..10)
            .map(|_| Document {
                language: Language::Source,
                token_ids: vec![0],
                label: Some(0),
            })
            .collect();
        let corpus = Corpus::new(docs, 1).unwrap();
        let stream = make_stream(&corpus, 4, 3, false).unwrap();
        let batches: Vec<Vec<usize>> = stream.collect();
        assert_eq!(
            batches.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![4, 4, 2]
        );
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn stream_deterministic_per_seed() {
        let docs: Vec<Document> = (0..9)
            .map(|_| Document {
                language: Language::Source,
                token_ids: vec![0],
                label: None,
            })
            .collect();
        let corpus = Corpus::new(docs, 0).unwrap();
        let a: Vec<Vec<usize>> = make_stream(&corpus, 2, 11, false).unwrap().collect();
        let b: Vec<Vec<usize>> = make_stream(&corpus, 2, 11, false).unwrap().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn cycling_stream_covers_corpus_evenly() {
        let docs: Vec<Document> = (0..12)
            .map(|_| Document {
                language: Language::Source,
                token_ids: vec![0],
                label: None,
            })
            .collect();
        let corpus = Corpus::new(docs, 0).unwrap();
        let mut stream = make_stream(&corpus, 4, 7, true).unwrap();
        let mut counts = vec![0usize; 12];
        for _ in 0..(3 * 12 / 4) {
            for i in stream.next_batch().unwrap() {
                counts[i] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == 3), "{counts:?}");
    }

    #[test]
    fn empty_corpus_rejected() {
        let corpus = Corpus::new(vec![], 0).unwrap();
        assert!(matches!(
            make_stream(&corpus, 4, 0, false),
            Err(AdanError::EmptyCorpus)
        ));
    }
}
