//! Sentence encoders.
//!
//! The default encoder averages frozen word vectors loaded from a
//! GloVe-style text file (`token v1 v2 ... vd` per line). Anything that
//! implements [`SentenceEncoder`] can stand in for it.

use std::collections::HashMap;
use std::io::BufRead;

use crate::corpus::{Document, Sentence};
use crate::error::{Error, Result};

/// A fixed-dimension real vector for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector(pub Vec<f64>);

impl SentenceVector {
    pub fn zeros(dim: usize) -> Self {
        SentenceVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Maps a sentence to a vector of a fixed dimension.
pub trait SentenceEncoder {
    fn dim(&self) -> usize;
    fn encode_sentence(&self, sentence: &Sentence) -> SentenceVector;
}

/// Frozen token → vector lookup.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    duplicates: usize,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. Duplicates keep the first
    /// vector.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        let mut table = EmbeddingTable {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        };
        for (token, vector) in entries {
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: vector.len(),
                });
            }
            table.insert(token.into(), &vector);
        }
        Ok(table)
    }

    fn insert(&mut self, token: String, vector: &[f64]) {
        if self.index.contains_key(&token) {
            self.duplicates += 1;
            return;
        }
        self.index.insert(token, self.data.len() / self.dim);
        self.data.extend_from_slice(vector);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Number of repeated tokens ignored while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    /// Largest absolute component over all stored vectors.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes the table in the text format read by [`load_embeddings`].
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&String, &usize)> = self.index.iter().collect();
        rows.sort_by_key(|(_, &row)| row);
        let mut out = String::new();
        for (token, &row) in rows {
            out.push_str(token);
            for v in &self.data[row * self.dim..(row + 1) * self.dim] {
                out.push(' ');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Reads a whitespace-separated embedding file. The dimension comes from
/// the first line unless `expected_dim` is given. Blank lines are ignored.
pub fn load_embeddings<R: BufRead>(reader: R, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    if expected_dim == Some(0) {
        return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
    }
    let mut table: Option<EmbeddingTable> = None;
    let mut vector = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        vector.clear();
        for field in fields {
            let v: f64 = field.parse().map_err(|_| Error::EmbeddingParse {
                line: lineno,
                message: format!("cannot parse number {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::EmbeddingParse {
                    line: lineno,
                    message: format!("non-finite value {field:?}"),
                });
            }
            vector.push(v);
        }
        let dim = match &table {
            Some(t) => t.dim,
            None => expected_dim.unwrap_or(vector.len()),
        };
        if vector.len() != dim || dim == 0 {
            return Err(Error::EmbeddingParse {
                line: lineno,
                message: format!("expected {dim} values, found {}", vector.len()),
            });
        }
        table
            .get_or_insert_with(|| EmbeddingTable {
                dim,
                index: HashMap::new(),
                data: Vec::new(),
                duplicates: 0,
            })
            .insert(token.to_string(), &vector);
    }
    table.ok_or(Error::EmptyEmbeddings)
}

impl SentenceEncoder for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Mean of in-vocabulary token vectors; zero when nothing is known.
    fn encode_sentence(&self, sentence: &Sentence) -> SentenceVector {
        let mut sum = vec![0.0; self.dim];
        let mut hits = 0usize;
        for token in &sentence.tokens {
            if let Some(v) = self.get(token.as_str()) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                hits += 1;
            }
        }
        if hits > 0 {
            let scale = hits as f64;
            for s in &mut sum {
                *s /= scale;
            }
        }
        SentenceVector(sum)
    }
}

/// Encoded rows `[START, s_1, ..., s_n, END]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDocument {
    pub rows: Vec<SentenceVector>,
}

impl EncodedDocument {
    /// Wraps already-encoded sentences with the boundary vectors.
    pub fn from_sentences(
        start: &SentenceVector,
        sentences: &[SentenceVector],
        end: &SentenceVector,
    ) -> Result<Self> {
        let dim = start.dim();
        for v in sentences.iter().chain(std::iter::once(end)) {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        let mut rows = Vec::with_capacity(sentences.len() + 2);
        rows.push(start.clone());
        rows.extend(sentences.iter().cloned());
        rows.push(end.clone());
        Ok(EncodedDocument { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, SentenceVector::dim)
    }
}

pub fn encode_sentences<E: SentenceEncoder + ?Sized>(encoder: &E, doc: &Document) -> Vec<SentenceVector> {
    doc.sentences.iter().map(|s| encoder.encode_sentence(s)).collect()
}

pub fn encode_document<E: SentenceEncoder + ?Sized>(
    encoder: &E,
    doc: &Document,
    start: &SentenceVector,
    end: &SentenceVector,
) -> Result<EncodedDocument> {
    if start.dim() != encoder.dim() {
        return Err(Error::DimensionMismatch {
            expected: encoder.dim(),
            got: start.dim(),
        });
    }
    EncodedDocument::from_sentences(start, &encode_sentences(encoder, doc), end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Permutation;
    use proptest::prelude::*;

    fn table() -> EmbeddingTable {
        load_embeddings("a 1.0 0.0\nb 0.0 1.0\n".as_bytes(), None).unwrap()
    }

    #[test]
    fn load_basic_table() {
        let t = table();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b"), Some(&[0.0, 1.0][..]));
    }

    #[test]
    fn load_rejects_ragged_rows() {
        let err = load_embeddings("a 1.0 0.0\nc 1.0\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::EmbeddingParse { line: 2, .. }), "{err}");
    }

    #[test]
    fn load_rejects_bad_numbers_and_empty_input() {
        let err = load_embeddings("a 1.0 x\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::EmbeddingParse { line: 1, .. }));
        assert!(matches!(load_embeddings("".as_bytes(), None), Err(Error::EmptyEmbeddings)));
        let err = load_embeddings("a 1 2 3\n".as_bytes(), Some(2)).unwrap_err();
        assert!(matches!(err, Error::EmbeddingParse { line: 1, .. }));
    }

    #[test]
    fn load_keeps_first_duplicate() {
        let t = load_embeddings("a 1 0\na 5 5\nb 0 1\n".as_bytes(), Some(2)).unwrap();
        assert_eq!(t.duplicates(), 1);
        assert_eq!(t.get("a"), Some(&[1.0, 0.0][..]));
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn encode_mean_and_fallbacks() {
        let t = table();
        assert_eq!(t.encode_sentence(&Sentence::new("a b")).0, [0.5, 0.5]);
        assert_eq!(t.encode_sentence(&Sentence::new("zz qq")).0, [0.0, 0.0]);
        assert_eq!(t.encode_sentence(&Sentence::new("A, zz.")).0, [1.0, 0.0]);
    }

    #[test]
    fn encode_document_shapes() {
        let t = table();
        let doc = Document::from_lines("d", &["a", "b"]);
        let zero = SentenceVector::zeros(2);
        let enc = encode_document(&t, &doc, &zero, &zero).unwrap();
        assert_eq!(enc.len(), 4);
        assert_eq!(enc.rows[0], zero);
        assert_eq!(enc.rows[3], zero);

        let perm = Permutation::new(vec![1, 0]).unwrap();
        let swapped = encode_document(&t, &doc.permuted(&perm).unwrap(), &zero, &zero).unwrap();
        assert_eq!(swapped.rows[1], enc.rows[2]);
        assert_eq!(swapped.rows[2], enc.rows[1]);

        let bad = SentenceVector::zeros(3);
        assert!(matches!(
            encode_document(&t, &doc, &bad, &zero),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(encode_document(&t, &doc, &zero, &bad).is_err());
    }

    fn random_table() -> impl Strategy<Value = EmbeddingTable> {
        (1usize..5).prop_flat_map(|dim| {
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), 1..8).prop_map(
                move |rows| {
                    EmbeddingTable::from_entries(
                        dim,
                        rows.into_iter().enumerate().map(|(i, v)| (format!("w{i}"), v)),
                    )
                    .unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn encoding_ignores_token_order(t in random_table(), picks in prop::collection::vec(0usize..8, 0..10)) {
            let words: Vec<String> = picks.iter().map(|i| format!("w{i}")).collect();
            let fwd = t.encode_sentence(&Sentence::new(words.join(" ")));
            let mut rev = words.clone();
            rev.reverse();
            rev.rotate_left(words.len() / 2);
            let back = t.encode_sentence(&Sentence::new(rev.join(" ")));
            for (a, b) in fwd.0.iter().zip(&back.0) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            let bound = t.max_abs();
            prop_assert!(fwd.0.iter().all(|v| v.abs() <= bound + 1e-12));
        }

        #[test]
        fn encoded_length_is_n_plus_two(t in random_table(), n in 1usize..10) {
            let lines: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
            let doc = Document::from_lines("d", &lines);
            let z = SentenceVector::zeros(t.dim());
            let enc = encode_document(&t, &doc, &z, &z).unwrap();
            prop_assert_eq!(enc.len(), n + 2);
            prop_assert!(enc.rows.iter().all(|r| r.dim() == t.dim()));
        }

        #[test]
        fn text_round_trip(t in random_table()) {
            let back = load_embeddings(t.to_text().as_bytes(), Some(t.dim())).unwrap();
            prop_assert_eq!(back.len(), t.len());
            for i in 0..t.len() {
                let key = format!("w{i}");
                prop_assert_eq!(back.get(&key), t.get(&key));
            }
        }
    }
}
