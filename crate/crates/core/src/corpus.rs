//! Documents, the sentence-per-line corpus format, permutations and splits.
//!
//! Corpus files are UTF-8 text with one sentence per line. One or more blank
//! lines separate documents. There is no escaping.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// A normalized (lowercased, punctuation-trimmed) token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases, splits on whitespace and strips leading/trailing
/// non-alphanumeric characters from every piece. Empty pieces are dropped.
pub fn tokenize(raw: &str) -> Vec<Token> {
    raw.split_whitespace()
        .filter_map(|piece| {
            let lower = piece.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(Token(trimmed.to_string()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub raw: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = tokenize(&raw);
        Sentence { raw, tokens }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Document {
            id: id.into(),
            sentences,
        }
    }

    /// Builds a document from raw sentence strings.
    pub fn from_lines<S: AsRef<str>>(id: impl Into<String>, lines: &[S]) -> Self {
        Document::new(id, lines.iter().map(|l| Sentence::new(l.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Reorders sentences so that position `k` holds the source sentence
    /// `order[k]`.
    pub fn permuted(&self, order: &Permutation) -> Result<Document> {
        if order.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: order.len(),
            });
        }
        Ok(Document {
            id: self.id.clone(),
            sentences: order.apply(&self.sentences),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Blocks dropped during parsing because no line produced a token.
    pub skipped_blocks: usize,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        Corpus {
            documents,
            skipped_blocks: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Writes the corpus back in the sentence-per-line format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, doc) in self.documents.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            for s in &doc.sentences {
                out.push_str(&s.raw);
                out.push('\n');
            }
        }
        out
    }
}

/// Parses a sentence-per-line corpus. Whitespace-only lines separate
/// documents; ids are assigned sequentially as `doc-0`, `doc-1`, ...
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut blocks: Vec<Vec<Sentence>> = Vec::new();
    let mut current: Vec<Sentence> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
        } else {
            current.push(Sentence::new(line));
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }

    let mut corpus = Corpus::default();
    for sentences in blocks {
        if sentences.iter().all(|s| s.tokens.is_empty()) {
            corpus.skipped_blocks += 1;
            continue;
        }
        let id = format!("doc-{}", corpus.documents.len());
        corpus.documents.push(Document::new(id, sentences));
    }
    if corpus.documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus)
}

/// A bijection on `0..n`, stored as the list of source indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || seen[i] {
                return Err(Error::InvalidPermutation(format!("{order:?}")));
            }
            seen[i] = true;
        }
        Ok(Permutation(order))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(k, &i)| k == i)
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (k, &i) in self.0.iter().enumerate() {
            inv[i] = k;
        }
        Permutation(inv)
    }

    /// `self` after `other`: position `k` takes `other[self[k]]`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation(self.0.iter().map(|&i| other.0[i]).collect())
    }

    pub fn reversed(&self) -> Permutation {
        Permutation(self.0.iter().rev().copied().collect())
    }

    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        self.0.iter().map(|&i| items[i].clone()).collect()
    }
}

/// Samples a uniformly random non-identity permutation of `doc` by rejection.
pub fn generate_permutation<R: Rng + ?Sized>(
    doc: &Document,
    rng: &mut R,
) -> Result<(Permutation, Document)> {
    let order = random_non_identity(doc.len(), rng)?;
    let permuted = doc.permuted(&order)?;
    Ok((order, permuted))
}

pub(crate) fn random_non_identity<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Permutation> {
    if n < 2 {
        return Err(Error::DocumentTooShort);
    }
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        order.shuffle(rng);
        if order.iter().enumerate().any(|(k, &i)| k != i) {
            return Ok(Permutation(order));
        }
    }
}

/// Shuffles documents and cuts the list into contiguous train/dev/test
/// parts. Sizes are `round(ratio * N)` for train and dev; test takes the rest.
pub fn split_dataset<R: Rng + ?Sized>(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    rng: &mut R,
) -> Result<(Corpus, Corpus, Corpus)> {
    let (r_train, r_dev, r_test) = ratios;
    if [r_train, r_dev, r_test].iter().any(|r| !(*r > 0.0))
        || (r_train + r_dev + r_test - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidRatios);
    }
    let n = corpus.len();
    if n < 3 {
        return Err(Error::CorpusTooSmall(n));
    }
    let ids: HashSet<&str> = corpus.documents.iter().map(|d| d.id.as_str()).collect();
    if ids.len() != n {
        return Err(Error::InvalidConfig("duplicate document ids".into()));
    }

    let mut docs = corpus.documents.clone();
    docs.shuffle(rng);
    let n_train = ((r_train * n as f64).round() as usize).min(n);
    let n_dev = ((r_dev * n as f64).round() as usize).min(n - n_train);
    let test = docs.split_off(n_train + n_dev);
    let dev = docs.split_off(n_train);
    Ok((Corpus::new(docs), Corpus::new(dev), Corpus::new(test)))
}
