//! Planted-coherence corpora for end-to-end checks.
//!
//! Every pair of adjacent sentences in a document shares exactly two marker
//! tokens that appear nowhere else in the document, so the original order is
//! recoverable from word overlap alone. Sentences also carry filler tokens
//! drawn from a shared pool, which adds noise without signal.

use rand::seq::index::sample;
use rand::Rng;

use crate::corpus::{Corpus, Document, Sentence};
use crate::encoder::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub dim: usize,
    /// Size of the marker vocabulary shared by all documents.
    pub marker_vocab: usize,
    pub filler_vocab: usize,
    pub fillers_per_sentence: usize,
    /// Embedding coordinates are uniform in `[-scale, scale]`.
    pub scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            documents: 1000,
            min_sentences: 8,
            max_sentences: 12,
            dim: 50,
            marker_vocab: 2000,
            filler_vocab: 100,
            fillers_per_sentence: 11,
            scale: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub embeddings: EmbeddingTable,
}

fn marker(k: usize) -> String {
    format!("m{k}")
}

fn filler(k: usize) -> String {
    format!("f{k}")
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    if config.min_sentences < 2 || config.min_sentences > config.max_sentences {
        return Err(Error::InvalidConfig(format!(
            "sentence range {}..={} is invalid",
            config.min_sentences, config.max_sentences
        )));
    }
    if config.documents == 0 || config.dim == 0 {
        return Err(Error::InvalidConfig("documents and dim must be positive".into()));
    }
    let needed = 2 * (config.max_sentences - 1);
    if config.marker_vocab < needed {
        return Err(Error::InvalidConfig(format!(
            "marker vocabulary of {} cannot cover {} distinct markers per document",
            config.marker_vocab, needed
        )));
    }
    if config.fillers_per_sentence > 0 && config.filler_vocab == 0 {
        return Err(Error::InvalidConfig("filler vocabulary is empty".into()));
    }

    let mut rng = rng::stream(config.seed, Stream::Synthetic);
    let mut documents = Vec::with_capacity(config.documents);
    for d in 0..config.documents {
        let n = rng.gen_range(config.min_sentences..=config.max_sentences);
        let links = sample(&mut rng, config.marker_vocab, 2 * (n - 1)).into_vec();
        let sentences = (0..n)
            .map(|i| {
                let mut words = Vec::new();
                if i > 0 {
                    words.push(marker(links[2 * (i - 1)]));
                    words.push(marker(links[2 * (i - 1) + 1]));
                }
                if i + 1 < n {
                    words.push(marker(links[2 * i]));
                    words.push(marker(links[2 * i + 1]));
                }
                for _ in 0..config.fillers_per_sentence {
                    words.push(filler(rng.gen_range(0..config.filler_vocab)));
                }
                Sentence::new(words.join(" "))
            })
            .collect();
        documents.push(Document::new(format!("syn-{d}"), sentences));
    }

    let vector = |rng: &mut rng::Rng| -> Vec<f64> {
        (0..config.dim).map(|_| rng.gen_range(-config.scale..=config.scale)).collect()
    };
    let mut entries = Vec::with_capacity(config.marker_vocab + config.filler_vocab);
    for k in 0..config.marker_vocab {
        entries.push((marker(k), vector(&mut rng)));
    }
    for k in 0..config.filler_vocab {
        entries.push((filler(k), vector(&mut rng)));
    }
    let embeddings = EmbeddingTable::from_entries(config.dim, entries)?;
    Ok(SyntheticData {
        corpus: Corpus::new(documents),
        embeddings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn markers(s: &Sentence) -> HashSet<&str> {
        s.tokens.iter().map(|t| t.as_str()).filter(|t| t.starts_with('m')).collect()
    }

    #[test]
    fn neighbours_share_exactly_two_markers() {
        let data = generate(&SyntheticConfig {
            documents: 50,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_eq!(data.corpus.len(), 50);
        for doc in &data.corpus.documents {
            assert!((8..=12).contains(&doc.len()));
            for i in 0..doc.len() {
                for j in i + 1..doc.len() {
                    let shared = markers(&doc.sentences[i]).intersection(&markers(&doc.sentences[j])).count();
                    assert_eq!(shared, if j == i + 1 { 2 } else { 0 });
                }
            }
        }
    }

    #[test]
    fn every_token_has_an_embedding() {
        let data = generate(&SyntheticConfig {
            documents: 20,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_eq!(data.embeddings.dim(), 50);
        for doc in &data.corpus.documents {
            for s in &doc.sentences {
                for t in &s.tokens {
                    assert!(data.embeddings.get(t.as_str()).is_some(), "{t}");
                }
            }
        }
    }

    #[test]
    fn seeded() {
        let cfg = SyntheticConfig {
            documents: 10,
            seed: 3,
            ..SyntheticConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.corpus.to_text(), b.corpus.to_text());
        assert_eq!(a.embeddings.to_text(), b.embeddings.to_text());
        let c = generate(&SyntheticConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.corpus.to_text(), c.corpus.to_text());
    }

    #[test]
    fn rejects_bad_configs() {
        let small = SyntheticConfig {
            marker_vocab: 5,
            ..SyntheticConfig::default()
        };
        assert!(generate(&small).is_err());
        let range = SyntheticConfig {
            min_sentences: 9,
            max_sentences: 8,
            ..SyntheticConfig::default()
        };
        assert!(generate(&range).is_err());
    }
}
