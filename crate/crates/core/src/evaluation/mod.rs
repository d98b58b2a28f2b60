//! Evaluation tasks: discrimination, insertion and reconstruction, plus the
//! negative-coverage sweep and article-level comparisons.
//!
//! Every task talks to the model through [`CoherenceScorer`]. Because the
//! encoder works sentence by sentence, all orderings of one document can be
//! scored from a single [`PairTable`].

mod beam;
mod kendall;
mod stats;

use std::fmt;

use rand::Rng;

use crate::corpus::{random_non_identity, Corpus, Document, Permutation};
use crate::encoder::{encode_document, SentenceEncoder};
use crate::error::{Error, Result};
use crate::model::{BidirectionalModel, PairTable};
use crate::rng::{self, Stream};
use crate::training::{train, TrainConfig};

pub use beam::beam_search;
pub use kendall::kendall_tau;
pub use stats::{ln_gamma, regularized_incomplete_beta, student_t_sf, welch_one_tailed_t, WelchTest};

/// Scores orderings of a document's sentences.
pub trait CoherenceScorer {
    /// Pair scores over `[START, s_1, ..., s_n, END]`.
    fn pair_table(&self, doc: &Document) -> Result<PairTable>;

    /// Document score for each ordering (lists of sentence indices).
    fn score_orders(&self, doc: &Document, orders: &[&[usize]]) -> Result<Vec<f64>> {
        let table = self.pair_table(doc)?;
        Ok(orders.iter().map(|o| table.score_order(o)).collect())
    }

    /// Score of the document as written.
    fn score_document(&self, doc: &Document) -> Result<f64> {
        if doc.len() < 2 {
            return Err(Error::NothingToScore);
        }
        let identity: Vec<usize> = (0..doc.len()).collect();
        Ok(self.score_orders(doc, &[&identity])?[0])
    }
}

/// A trained model paired with its sentence encoder.
pub struct LcdScorer<'a, E: ?Sized> {
    pub model: &'a BidirectionalModel,
    pub encoder: &'a E,
}

impl<'a, E: SentenceEncoder + ?Sized> LcdScorer<'a, E> {
    pub fn new(model: &'a BidirectionalModel, encoder: &'a E) -> Self {
        LcdScorer { model, encoder }
    }
}

impl<E: SentenceEncoder + ?Sized> CoherenceScorer for LcdScorer<'_, E> {
    fn pair_table(&self, doc: &Document) -> Result<PairTable> {
        let enc = encode_document(self.encoder, doc, &self.model.start, &self.model.end)?;
        self.model.pair_table(&enc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Discrimination,
    Insertion,
    Reconstruction,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Discrimination => "discrimination",
            Task::Insertion => "insertion",
            Task::Reconstruction => "reconstruction",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// Original against one permutation.
    Comparison {
        permutation: Vec<usize>,
        original: f64,
        permuted: f64,
    },
    /// Sentences of one document put back in place.
    Insertion { correct: usize, sentences: usize },
    /// Beam-search reconstruction of one shuffled document, as original
    /// sentence indices.
    Reconstruction { predicted: Vec<usize>, tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemOutcome {
    pub doc_id: String,
    pub outcome: Outcome,
}

impl ItemOutcome {
    /// Per-item metric that the aggregate averages.
    pub fn value(&self) -> f64 {
        match &self.outcome {
            Outcome::Comparison {
                original, permuted, ..
            } => {
                if original > permuted {
                    1.0
                } else {
                    0.0
                }
            }
            Outcome::Insertion { correct, sentences } => *correct as f64 / *sentences as f64,
            Outcome::Reconstruction { tau, .. } => *tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub items: Vec<ItemOutcome>,
    pub aggregate: f64,
    pub seed: Option<u64>,
}

impl EvalReport {
    fn from_items(task: Task, items: Vec<ItemOutcome>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::NothingToScore);
        }
        let mut report = EvalReport {
            task,
            items,
            aggregate: 0.0,
            seed: None,
        };
        report.aggregate = report.recompute();
        Ok(report)
    }

    /// Mean of the per-item values.
    pub fn recompute(&self) -> f64 {
        self.items.iter().map(ItemOutcome::value).sum::<f64>() / self.items.len() as f64
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_csv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::from(match self.task {
            Task::Discrimination => "doc_id,permutation,original_score,permuted_score,correct\n",
            Task::Insertion => "doc_id,sentences,correct,fraction\n",
            Task::Reconstruction => "doc_id,predicted_order,tau\n",
        });
        for item in &self.items {
            let row = match &item.outcome {
                Outcome::Comparison {
                    permutation,
                    original,
                    permuted,
                } => format!(
                    "{},{},{},{},{}",
                    item.doc_id,
                    join(permutation),
                    original,
                    permuted,
                    item.value() as u8
                ),
                Outcome::Insertion { correct, sentences } => {
                    format!("{},{},{},{}", item.doc_id, sentences, correct, item.value())
                }
                Outcome::Reconstruction { predicted, tau } => {
                    format!("{},{},{}", item.doc_id, join(predicted), tau)
                }
            };
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let metric = match self.task {
            Task::Discrimination => "accuracy",
            Task::Insertion => "insertion score",
            Task::Reconstruction => "mean kendall tau",
        };
        let seed = self.seed.map(|s| format!(", seed {s}")).unwrap_or_default();
        format!(
            "{} {metric} {:.4} over {} items{seed}",
            self.task,
            self.aggregate,
            self.items.len()
        )
    }
}

/// Compares each document (n >= 2) with `num_perms` random non-identity
/// permutations of itself. A comparison is correct only when the original
/// scores strictly higher.
pub fn discrimination<S, R>(scorer: &S, docs: &Corpus, num_perms: usize, rng: &mut R) -> Result<EvalReport>
where
    S: CoherenceScorer + ?Sized,
    R: Rng + ?Sized,
{
    if num_perms == 0 {
        return Err(Error::InvalidConfig("number of permutations must be positive".into()));
    }
    let mut items = Vec::new();
    for doc in docs.documents.iter().filter(|d| d.len() >= 2) {
        let perms: Vec<Permutation> = (0..num_perms)
            .map(|_| random_non_identity(doc.len(), rng))
            .collect::<Result<_>>()?;
        let identity: Vec<usize> = (0..doc.len()).collect();
        let mut orders: Vec<&[usize]> = vec![&identity];
        orders.extend(perms.iter().map(Permutation::as_slice));
        let scores = scorer.score_orders(doc, &orders)?;
        for (perm, &permuted) in perms.iter().zip(&scores[1..]) {
            items.push(ItemOutcome {
                doc_id: doc.id.clone(),
                outcome: Outcome::Comparison {
                    permutation: perm.as_slice().to_vec(),
                    original: scores[0],
                    permuted,
                },
            });
        }
    }
    EvalReport::from_items(Task::Discrimination, items)
}

/// Removes each sentence in turn, tries it at every position and counts how
/// often the best-scoring position is the original one. Ties go to the
/// earliest position.
pub fn insertion<S: CoherenceScorer + ?Sized>(scorer: &S, docs: &Corpus) -> Result<EvalReport> {
    let mut items = Vec::new();
    for doc in docs.documents.iter().filter(|d| d.len() >= 2) {
        let n = doc.len();
        let table = scorer.pair_table(doc)?;
        let mut correct = 0;
        for removed in 0..n {
            let rest: Vec<usize> = (0..n).filter(|&i| i != removed).collect();
            let mut best = (f64::NEG_INFINITY, 0);
            for pos in 0..n {
                let mut order = rest.clone();
                order.insert(pos, removed);
                let score = table.score_order(&order);
                if score > best.0 {
                    best = (score, pos);
                }
            }
            if best.1 == removed {
                correct += 1;
            }
        }
        items.push(ItemOutcome {
            doc_id: doc.id.clone(),
            outcome: Outcome::Insertion {
                correct,
                sentences: n,
            },
        });
    }
    EvalReport::from_items(Task::Insertion, items)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Predicted ordering as indices into the shuffled document; starts with
    /// the given first sentence.
    pub order: Permutation,
    pub tau: f64,
}

/// Recovers the order of a shuffled document given its first sentence.
/// `truth` is the correct ordering as indices into `shuffled`.
pub fn reconstruct<S: CoherenceScorer + ?Sized>(
    scorer: &S,
    shuffled: &Document,
    first_index: usize,
    beam_width: usize,
    truth: &Permutation,
) -> Result<ReconstructionResult> {
    let n = shuffled.len();
    if first_index >= n {
        return Err(Error::InvalidConfig(format!(
            "first sentence index {first_index} out of range for {n} sentences"
        )));
    }
    if n < 2 {
        return Err(Error::NothingToScore);
    }
    if truth.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: truth.len(),
        });
    }
    let table = scorer.pair_table(shuffled)?;
    let order = Permutation::new(beam_search(&table, first_index, beam_width)?)?;
    let tau = kendall_tau(&order, truth)?;
    Ok(ReconstructionResult { order, tau })
}

/// Shuffles every document (n >= 2), reconstructs it from its true first
/// sentence and reports Kendall's tau against the original order.
pub fn reconstruction<S, R>(scorer: &S, docs: &Corpus, beam_width: usize, rng: &mut R) -> Result<EvalReport>
where
    S: CoherenceScorer + ?Sized,
    R: Rng + ?Sized,
{
    let mut items = Vec::new();
    for doc in docs.documents.iter().filter(|d| d.len() >= 2) {
        let perm = random_non_identity(doc.len(), rng)?;
        let shuffled = doc.permuted(&perm)?;
        // truth[k] = position in `shuffled` of original sentence k
        let truth = perm.inverse();
        let result = reconstruct(scorer, &shuffled, truth.as_slice()[0], beam_width, &truth)?;
        items.push(ItemOutcome {
            doc_id: doc.id.clone(),
            outcome: Outcome::Reconstruction {
                predicted: result.order.as_slice().iter().map(|&k| perm.as_slice()[k]).collect(),
                tau: result.tau,
            },
        });
    }
    EvalReport::from_items(Task::Reconstruction, items)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoveragePoint {
    pub phi: f64,
    pub accuracy: f64,
    pub best_epoch: usize,
}

/// Trains once per coverage fraction, all else equal, and measures test
/// discrimination accuracy.
pub fn coverage_sweep<E: SentenceEncoder + Sync + ?Sized>(
    config: &TrainConfig,
    train_corpus: &Corpus,
    dev: &Corpus,
    test: &Corpus,
    encoder: &E,
    fractions: &[f64],
    num_perms: usize,
) -> Result<Vec<CoveragePoint>> {
    if fractions.is_empty() {
        return Err(Error::InvalidConfig("no coverage fractions given".into()));
    }
    if let Some(bad) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::InvalidConfig(format!("coverage must be in (0, 1], got {bad}")));
    }
    let mut points = Vec::with_capacity(fractions.len());
    for &phi in fractions {
        let run = TrainConfig {
            coverage: phi,
            ..config.clone()
        };
        let (model, report) = train(&run, train_corpus, dev, encoder)?;
        let scorer = LcdScorer::new(&model, encoder);
        let mut perm_rng = rng::stream(config.seed, Stream::Permutations);
        let accuracy = discrimination(&scorer, test, num_perms, &mut perm_rng)?.aggregate;
        points.push(CoveragePoint {
            phi,
            accuracy,
            best_epoch: report.best_epoch,
        });
    }
    Ok(points)
}

pub fn coverage_csv(points: &[CoveragePoint]) -> String {
    let mut out = String::from("phi,accuracy\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.phi, p.accuracy));
    }
    out
}

/// Mean paragraph score, each paragraph weighted equally. Paragraphs with
/// fewer than two sentences are skipped.
pub fn aggregate_article_score<S: CoherenceScorer + ?Sized>(scorer: &S, article: &[Document]) -> Result<f64> {
    let scores: Vec<f64> = article
        .iter()
        .filter(|p| p.len() >= 2)
        .map(|p| scorer.score_document(p))
        .collect::<Result<_>>()?;
    if scores.is_empty() {
        return Err(Error::NothingToScore);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// At least two paragraphs with at least two sentences each.
pub fn passes_article_filter(article: &[Document]) -> bool {
    article.iter().filter(|p| p.len() >= 2).count() >= 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticleComparison {
    pub reference_mean: f64,
    pub flagged_mean: f64,
    /// Articles left out for failing [`passes_article_filter`].
    pub rejected: usize,
    /// Alternative: the reference group is more coherent than the flagged one.
    pub test: WelchTest,
}

/// Scores two groups of articles and tests whether the reference group has
/// the higher mean coherence.
pub fn compare_article_groups<S: CoherenceScorer + ?Sized>(
    scorer: &S,
    reference: &[Vec<Document>],
    flagged: &[Vec<Document>],
) -> Result<ArticleComparison> {
    let mut rejected = 0;
    let mut scores = |group: &[Vec<Document>]| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for article in group {
            if passes_article_filter(article) {
                out.push(aggregate_article_score(scorer, article)?);
            } else {
                rejected += 1;
            }
        }
        Ok(out)
    };
    let a = scores(reference)?;
    let b = scores(flagged)?;
    let test = welch_one_tailed_t(&a, &b)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(ArticleComparison {
        reference_mean: mean(&a),
        flagged_mean: mean(&b),
        rejected,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::cell::RefCell;
    use std::collections::HashMap;

    /// Knows the original position of every sentence and rewards true
    /// successors.
    struct Oracle;

    impl CoherenceScorer for Oracle {
        fn pair_table(&self, doc: &Document) -> Result<PairTable> {
            let pos: Vec<usize> = doc
                .sentences
                .iter()
                .map(|s| s.raw.trim_start_matches('s').parse().unwrap())
                .collect();
            let n = doc.len();
            // rows: 0 START, 1..=n sentences, n+1 END; original START/END at -1/n
            let orig = |r: usize| -> i64 {
                if r == 0 {
                    -1
                } else if r == n + 1 {
                    n as i64
                } else {
                    pos[r - 1] as i64
                }
            };
            Ok(PairTable::from_fn(n, |a, b| if orig(b) == orig(a) + 1 { 1.0 } else { 0.0 }, None))
        }
    }

    struct Constant(f64);

    impl CoherenceScorer for Constant {
        fn pair_table(&self, doc: &Document) -> Result<PairTable> {
            let c = self.0;
            Ok(PairTable::from_fn(doc.len(), move |_, _| c, Some(&move |_, _| c)))
        }
    }

    /// Independent random score for every (document, ordering) instance.
    struct Noise(RefCell<crate::rng::Rng>);

    impl CoherenceScorer for Noise {
        fn pair_table(&self, doc: &Document) -> Result<PairTable> {
            Constant(0.0).pair_table(doc)
        }

        fn score_orders(&self, _doc: &Document, orders: &[&[usize]]) -> Result<Vec<f64>> {
            let mut rng = self.0.borrow_mut();
            Ok(orders.iter().map(|_| rng.gen()).collect())
        }
    }

    fn corpus(lengths: &[usize]) -> Corpus {
        Corpus::new(
            lengths
                .iter()
                .enumerate()
                .map(|(d, &n)| {
                    let lines: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
                    Document::from_lines(format!("doc-{d}"), &lines)
                })
                .collect(),
        )
    }

    #[test]
    fn discrimination_with_reference_scorers() {
        let docs = corpus(&[2, 3, 5, 8, 1]);
        let mut rng = stream(1, Stream::Permutations);
        let oracle = discrimination(&Oracle, &docs, 20, &mut rng).unwrap();
        assert_eq!(oracle.aggregate, 1.0);
        assert_eq!(oracle.items.len(), 80);
        let constant = discrimination(&Constant(3.0), &docs, 20, &mut rng).unwrap();
        assert_eq!(constant.aggregate, 0.0);
        assert_eq!(constant.aggregate, constant.recompute());
        assert!(matches!(
            discrimination(&Oracle, &corpus(&[1, 1]), 20, &mut rng),
            Err(Error::NothingToScore)
        ));
    }

    #[test]
    fn discrimination_random_scorer_is_chance() {
        let docs = corpus(&[6; 500]);
        let noise = Noise(RefCell::new(stream(4, Stream::Synthetic)));
        let report = discrimination(&noise, &docs, 20, &mut stream(2, Stream::Permutations)).unwrap();
        // 10^4 comparisons; sd of the mean is sqrt(0.25 / 10^4) = 0.005
        assert_eq!(report.items.len(), 10_000);
        assert!((report.aggregate - 0.5).abs() < 4.0 * 0.005, "{}", report.aggregate);
    }

    #[test]
    fn discrimination_ignores_monotone_transforms() {
        let docs = corpus(&[4, 6, 7]);
        struct Cubed<S>(S);
        impl<S: CoherenceScorer> CoherenceScorer for Cubed<S> {
            fn pair_table(&self, doc: &Document) -> Result<PairTable> {
                self.0.pair_table(doc)
            }
            fn score_orders(&self, doc: &Document, orders: &[&[usize]]) -> Result<Vec<f64>> {
                Ok(self.0.score_orders(doc, orders)?.into_iter().map(|s| s.powi(3) * 2.0 + 1.0).collect())
            }
        }
        let a = discrimination(&Oracle, &docs, 10, &mut stream(3, Stream::Permutations)).unwrap();
        let b = discrimination(&Cubed(Oracle), &docs, 10, &mut stream(3, Stream::Permutations)).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
    }

    #[test]
    fn insertion_with_reference_scorers() {
        let docs = corpus(&[4, 7, 2, 1]);
        let oracle = insertion(&Oracle, &docs).unwrap();
        assert_eq!(oracle.aggregate, 1.0);
        assert_eq!(oracle.items.len(), 3);
        let constant = insertion(&Constant(0.0), &corpus(&[4])).unwrap();
        assert_eq!(constant.aggregate, 0.25);
    }

    #[test]
    fn reconstruction_with_oracle() {
        let doc = corpus(&[5]).documents.remove(0);
        let perm = Permutation::new(vec![3, 0, 4, 1, 2]).unwrap();
        let shuffled = doc.permuted(&perm).unwrap();
        let truth = perm.inverse();
        let r = reconstruct(&Oracle, &shuffled, truth.as_slice()[0], 8, &truth).unwrap();
        assert_eq!(r.order, truth);
        assert_eq!(r.tau, 1.0);
        assert!(reconstruct(&Oracle, &shuffled, 5, 8, &truth).is_err());

        let pair = corpus(&[2]).documents.remove(0);
        let swapped = pair.permuted(&Permutation::new(vec![1, 0]).unwrap()).unwrap();
        let truth = Permutation::new(vec![1, 0]).unwrap();
        let r = reconstruct(&Constant(0.0), &swapped, 1, 1, &truth).unwrap();
        assert_eq!(r.tau, 1.0);

        let report = reconstruction(&Oracle, &corpus(&[3, 5, 6]), 4, &mut stream(1, Stream::Permutations)).unwrap();
        assert_eq!(report.aggregate, 1.0);
        for item in &report.items {
            if let Outcome::Reconstruction { predicted, .. } = &item.outcome {
                assert!(predicted.iter().enumerate().all(|(k, &i)| k == i));
            }
        }
    }

    /// Scores fixed per paragraph through its first sentence.
    struct ByParagraph(HashMap<String, f64>);

    impl CoherenceScorer for ByParagraph {
        fn pair_table(&self, doc: &Document) -> Result<PairTable> {
            let c = self.0[&doc.id];
            Ok(PairTable::from_fn(doc.len(), move |_, _| c, None))
        }
    }

    #[test]
    fn article_aggregation() {
        let paras = |lens: &[usize]| -> Vec<Document> {
            lens.iter()
                .enumerate()
                .map(|(i, &n)| {
                    let lines: Vec<String> = (0..n).map(|k| format!("s{k}")).collect();
                    Document::from_lines(format!("p{i}"), &lines)
                })
                .collect()
        };
        let scorer = ByParagraph(
            [("p0", 1.0), ("p1", 2.0), ("p2", 6.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        );
        let one = paras(&[4]);
        assert_eq!(
            aggregate_article_score(&scorer, &one).unwrap(),
            scorer.score_document(&one[0]).unwrap()
        );
        assert_eq!(aggregate_article_score(&scorer, &paras(&[3, 9, 2])).unwrap(), 3.0);
        let zero_one = ByParagraph([("p0".to_string(), 0.0), ("p1".to_string(), 1.0)].into());
        assert_eq!(aggregate_article_score(&zero_one, &paras(&[2, 30])).unwrap(), 0.5);
        assert!(matches!(
            aggregate_article_score(&scorer, &paras(&[1, 1])),
            Err(Error::NothingToScore)
        ));
        assert!(passes_article_filter(&paras(&[2, 2])));
        assert!(!passes_article_filter(&paras(&[5, 1])));
    }

    #[test]
    fn article_groups() {
        // Paragraph scores come from the paragraph id; build articles whose
        // ids map to known scores.
        let mut scores = HashMap::new();
        let mut article = |name: &str, a: f64, b: f64| -> Vec<Document> {
            scores.insert(format!("{name}a"), a);
            scores.insert(format!("{name}b"), b);
            vec![
                Document::from_lines(format!("{name}a"), &["x", "y"]),
                Document::from_lines(format!("{name}b"), &["x", "y", "z"]),
            ]
        };
        let good = vec![article("g1", 0.8, 0.9), article("g2", 0.7, 0.7), article("g3", 0.9, 0.75)];
        let bad = vec![article("b1", 0.5, 0.6), article("b2", 0.4, 0.6), article("b3", 0.55, 0.5)];
        let mut short = vec![Document::from_lines("short", &["x", "y"])];
        short.push(Document::from_lines("tiny", &["x"]));
        let mut bad_plus = bad.clone();
        bad_plus.push(short);
        let scorer = ByParagraph(scores);
        let cmp = compare_article_groups(&scorer, &good, &bad_plus).unwrap();
        assert_eq!(cmp.rejected, 1);
        assert!(cmp.reference_mean > cmp.flagged_mean);
        assert!(cmp.test.t > 0.0 && cmp.test.p_value < 0.05);
    }

    #[test]
    fn report_csv_shapes() {
        let docs = corpus(&[3, 4]);
        let r = discrimination(&Oracle, &docs, 2, &mut stream(1, Stream::Permutations)).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("doc_id,permutation"));
        let ins = insertion(&Oracle, &docs).unwrap().with_seed(3);
        assert_eq!(ins.to_csv().lines().count(), 3);
        assert!(ins.summary().contains("seed 3"));
    }
}
