//! Margin-ranking training against same-document negatives.
//!
//! Every time a document is visited, `triplets_per_doc` triplets
//! `(x_i, x_{i+1}, x_j)` are sampled. The forward scorer should rank
//! `(x_i, x_{i+1})` above `(x_i, x_j)` by the margin; the backward scorer sees
//! the same pairs reversed. One Adam step is taken per document.
//!
//! Rows are indexed in the encoded document: 0 is START, `1..=n` are the
//! sentences, `n + 1` is END.

use std::fmt;

use log::info;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::Corpus;
use crate::encoder::{encode_sentences, EncodedDocument, SentenceEncoder, SentenceVector};
use crate::error::{Error, Result};
use crate::evaluation::{discrimination, LcdScorer};
use crate::model::{
    backward_pass, features_backward, forward_pass, BidirectionalModel,
    DirectionMode, Dropout, FeatureMode, ModelSettings, ScorerParams,
};
use crate::rng::{self, Stream};

/// `max(0, margin - f_pos + f_neg)`.
pub fn margin_loss(f_pos: f64, f_neg: f64, margin: f64) -> f64 {
    (margin - f_pos + f_neg).max(0.0)
}

/// One negative pair: the anchor pair `(anchor, anchor + 1)` with one of its
/// members replaced by sentence row `negative`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub negative: usize,
}

impl Triplet {
    /// Rows of the positive pair.
    pub fn positive(&self) -> (usize, usize) {
        (self.anchor, self.anchor + 1)
    }

    /// Rows of the negative pair in a document of `n` sentences. For the
    /// final anchor `(s_n, END)` the sentence is the element replaced.
    pub fn negative_pair(&self, n: usize) -> (usize, usize) {
        if self.anchor == n {
            (self.negative, n + 1)
        } else {
            (self.anchor, self.negative)
        }
    }
}

/// Negatives for the interior anchors of an `n`-sentence document: anchor
/// rows `1..n`, negative rows `1..=n` minus the anchor pair. There are
/// `(n-1)(n-2)` of them; documents with `n < 3` have none.
pub fn enumerate_negatives(n: usize) -> Vec<Triplet> {
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for anchor in 1..n {
        for negative in 1..=n {
            if negative != anchor && negative != anchor + 1 {
                out.push(Triplet { anchor, negative });
            }
        }
    }
    out
}

/// Negatives for the two boundary anchors `(START, s_1)` and `(s_n, END)`.
pub fn boundary_negatives(n: usize) -> Vec<Triplet> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    out.extend((2..=n).map(|negative| Triplet { anchor: 0, negative }));
    out.extend((1..n).map(|negative| Triplet { anchor: n, negative }));
    out
}

/// The triplets a document may draw from, grouped by anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSpace {
    groups: Vec<(usize, Vec<usize>)>,
}

impl NegativeSpace {
    /// Every valid triplet of an `n`-sentence document.
    pub fn full(n: usize, boundary_anchors: bool) -> Self {
        let mut all = enumerate_negatives(n);
        if boundary_anchors && n >= 3 {
            all.extend(boundary_negatives(n));
        }
        NegativeSpace::from_triplets(all)
    }

    pub fn from_triplets(mut triplets: Vec<Triplet>) -> Self {
        triplets.sort_unstable();
        triplets.dedup();
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for t in triplets {
            match groups.last_mut() {
                Some((anchor, negs)) if *anchor == t.anchor => negs.push(t.negative),
                _ => groups.push((t.anchor, vec![t.negative])),
            }
        }
        NegativeSpace { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|(_, n)| n.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn triplets(&self) -> Vec<Triplet> {
        self.groups
            .iter()
            .flat_map(|(anchor, negs)| negs.iter().map(move |&negative| Triplet { anchor: *anchor, negative }))
            .collect()
    }

    /// Uniform anchor among those with candidates, then a uniform negative.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Triplet {
        let (anchor, negs) = &self.groups[rng.gen_range(0..self.groups.len())];
        Triplet {
            anchor: *anchor,
            negative: negs[rng.gen_range(0..negs.len())],
        }
    }
}

/// Fixed random subset keeping `ceil(phi * |S|)` of the interior negatives
/// and, when boundary anchors are on, `ceil(phi * |B|)` of the boundary ones.
pub fn restrict_coverage<R: Rng + ?Sized>(
    n: usize,
    phi: f64,
    boundary_anchors: bool,
    rng: &mut R,
) -> Result<NegativeSpace> {
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(Error::InvalidConfig(format!("coverage must be in (0, 1], got {phi}")));
    }
    let mut keep = |pool: Vec<Triplet>| -> Vec<Triplet> {
        let k = (phi * pool.len() as f64).ceil() as usize;
        pool.choose_multiple(rng, k.min(pool.len())).copied().collect()
    };
    let mut chosen = keep(enumerate_negatives(n));
    if boundary_anchors && n >= 3 {
        chosen.extend(keep(boundary_negatives(n)));
    }
    Ok(NegativeSpace::from_triplets(chosen))
}

/// Draws `k` triplets with replacement for a document of `n` sentences.
/// With `allowed`, only those triplets are eligible.
pub fn sample_triplets<R: Rng + ?Sized>(
    doc_id: &str,
    n: usize,
    k: usize,
    boundary_anchors: bool,
    allowed: Option<&NegativeSpace>,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    let full;
    let space = match allowed {
        Some(space) => space,
        None => {
            full = NegativeSpace::full(n, boundary_anchors);
            &full
        }
    };
    if n < 3 || space.is_empty() {
        return Err(Error::NoNegatives(doc_id.to_string()));
    }
    Ok((0..k).map(|_| space.draw(rng)).collect())
}

/// Gradients shaped like the trainable parameters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub forward: ScorerParams,
    pub backward: ScorerParams,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &BidirectionalModel) -> Self {
        let input = model.forward.input_dim;
        Gradients {
            forward: ScorerParams::zeros(input, model.hidden),
            backward: ScorerParams::zeros(input, model.hidden),
            start: vec![0.0; model.dim],
            end: vec![0.0; model.dim],
        }
    }

    /// Same order as [`BidirectionalModel::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(10);
        out.extend(self.forward.slices());
        out.extend(self.backward.slices());
        out.push(&self.start);
        out.push(&self.end);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&g| g == 0.0))
    }
}

/// Mean margin loss of a batch, no dropout. Uses only the plain scoring
/// path, so it serves as the reference for gradient checks.
pub fn batch_loss(model: &BidirectionalModel, enc: &EncodedDocument, triplets: &[Triplet]) -> Result<f64> {
    let n = enc.len() - 2;
    let row = |i: usize| enc.rows[i].as_slice();
    let mut total = 0.0;
    for t in triplets {
        let (pa, pb) = t.positive();
        let (na, nb) = t.negative_pair(n);
        let eta = model.settings.margin;
        total += margin_loss(
            model.forward_score(row(pa), row(pb))?,
            model.forward_score(row(na), row(nb))?,
            eta,
        );
        if model.is_bidirectional() {
            total += margin_loss(
                model.backward_score(row(pa), row(pb))?,
                model.backward_score(row(na), row(nb))?,
                eta,
            );
        }
    }
    Ok(total / triplets.len().max(1) as f64)
}

/// Mean batch loss and its exact gradient with respect to both scorers and
/// the START/END rows. Dropout is applied when `dropout_rng` is given.
pub fn compute_gradients<R: Rng + ?Sized>(
    model: &BidirectionalModel,
    enc: &EncodedDocument,
    triplets: &[Triplet],
    mut dropout_rng: Option<&mut R>,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(model);
    if triplets.is_empty() {
        return Ok((0.0, grads));
    }
    if enc.dim() != model.dim || enc.len() < 3 {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: enc.dim(),
        });
    }
    let n = enc.len() - 2;
    let last = n + 1;
    let mode = model.feature_mode();
    let weight = 1.0 / triplets.len() as f64;
    let eta = model.settings.margin;
    let (p_input, p_hidden) = (model.settings.p_input, model.settings.p_hidden);
    let mut feats = Vec::with_capacity(mode.input_dim(model.dim));

    let mut loss = 0.0;
    for t in triplets {
        if t.anchor > n || t.negative == 0 || t.negative > n {
            return Err(Error::InvalidConfig(format!("triplet {t:?} out of range for n = {n}")));
        }
        let pos = t.positive();
        let neg = t.negative_pair(n);
        let directions: &[bool] = if model.is_bidirectional() { &[false, true] } else { &[false] };
        for &reversed in directions {
            let (params, grad) = if reversed {
                (&model.backward, &mut grads.backward)
            } else {
                (&model.forward, &mut grads.forward)
            };
            // (first, second) rows as fed to this scorer.
            let orient = |(a, b): (usize, usize)| if reversed { (b, a) } else { (a, b) };
            let mut pass = |pair: (usize, usize)| {
                let (a, b) = orient(pair);
                let rows = (enc.rows[a].as_slice(), enc.rows[b].as_slice());
                feats.clear();
                crate::model::write_features_into(rows.0, rows.1, mode, &mut feats);
                let trace = match dropout_rng.as_deref_mut() {
                    Some(rng) => forward_pass(
                        params,
                        &feats,
                        Some(&mut Dropout {
                            p_input,
                            p_hidden,
                            rng,
                        }),
                    ),
                    None => forward_pass::<R>(params, &feats, None),
                };
                ((a, b), trace)
            };
            let (pos_rows, pos_trace) = pass(pos);
            let (neg_rows, neg_trace) = pass(neg);
            let l = margin_loss(pos_trace.score, neg_trace.score, eta);
            loss += l;
            if eta - pos_trace.score + neg_trace.score <= 0.0 {
                continue;
            }
            for ((a, b), trace, sign) in [(pos_rows, pos_trace, -1.0), (neg_rows, neg_trace, 1.0)] {
                let touches_boundary = [a, b].iter().any(|&r| r == 0 || r == last);
                let dx = backward_pass(params, &trace, sign * weight, grad, touches_boundary);
                if let Some(dx) = dx {
                    let mut ds = vec![0.0; model.dim];
                    let mut dt = vec![0.0; model.dim];
                    features_backward(enc.rows[a].as_slice(), enc.rows[b].as_slice(), &dx, mode, &mut ds, &mut dt);
                    for (r, g) in [(a, &ds), (b, &dt)] {
                        let target = if r == 0 {
                            &mut grads.start
                        } else if r == last {
                            &mut grads.end
                        } else {
                            continue;
                        };
                        for (t, v) in target.iter_mut().zip(g.iter()) {
                            *t += v;
                        }
                    }
                }
            }
        }
    }
    Ok((loss * weight, grads))
}

/// Adam with bias correction and no weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Updates `params` in place. `params` and `grads` are matching lists of
    /// slices that together cover the state's parameter vector.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        let total_g: usize = grads.iter().map(|g| g.len()).sum();
        if total != self.m.len() || total_g != total || params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: total,
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut offset = 0;
        for (p, g) in params.into_iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    got: g.len(),
                });
            }
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            offset += p.len();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub margin: f64,
    pub hidden: usize,
    pub p_input: f64,
    pub p_hidden: f64,
    pub triplets_per_doc: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Fraction of each document's negatives available for sampling.
    pub coverage: f64,
    pub feature_mode: FeatureMode,
    pub direction_mode: DirectionMode,
    /// Train on `(START, s_1)` and `(s_n, END)` anchors too.
    pub boundary_anchors: bool,
    /// Permutations per dev document for early stopping.
    pub dev_permutations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            margin: 5.0,
            hidden: 500,
            p_input: 0.6,
            p_hidden: 0.3,
            triplets_per_doc: 50,
            max_epochs: 15,
            patience: 3,
            seed: 0,
            coverage: 1.0,
            feature_mode: FeatureMode::Full,
            direction_mode: DirectionMode::Bidirectional,
            boundary_anchors: true,
            dev_permutations: 20,
        }
    }
}

impl TrainConfig {
    pub fn model_settings(&self) -> ModelSettings {
        ModelSettings {
            margin: self.margin,
            p_input: self.p_input,
            p_hidden: self.p_hidden,
            feature_mode: self.feature_mode,
            direction_mode: self.direction_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_settings().validate()?;
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.hidden == 0 || self.triplets_per_doc == 0 || self.max_epochs == 0 || self.dev_permutations == 0 {
            return Err(Error::InvalidConfig(
                "hidden size, triplets per document, epochs and dev permutations must be positive".into(),
            ));
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::InvalidConfig(format!("coverage must be in (0, 1], got {}", self.coverage)));
        }
        Ok(())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lr = {}", self.lr)?;
        writeln!(f, "margin = {}", self.margin)?;
        writeln!(f, "hidden = {}", self.hidden)?;
        writeln!(f, "dropout_input = {}", self.p_input)?;
        writeln!(f, "dropout_hidden = {}", self.p_hidden)?;
        writeln!(f, "triplets_per_doc = {}", self.triplets_per_doc)?;
        writeln!(f, "epochs = {}", self.max_epochs)?;
        writeln!(f, "patience = {}", self.patience)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "coverage = {}", self.coverage)?;
        writeln!(f, "feature_mode = {:?}", self.feature_mode)?;
        writeln!(f, "direction = {:?}", self.direction_mode)?;
        writeln!(f, "boundary_anchors = {}", self.boundary_anchors)?;
        write!(f, "dev_permutations = {}", self.dev_permutations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose snapshot was returned.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub trainable_documents: usize,
    pub skipped_documents: usize,
}

impl TrainReport {
    pub fn best_dev_accuracy(&self) -> f64 {
        self.epochs[self.best_epoch - 1].dev_accuracy
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,dev_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.dev_accuracy));
        }
        out
    }

    pub fn to_log(&self) -> String {
        let mut out = format!(
            "trained on {} documents ({} skipped, fewer than 3 sentences)\n",
            self.trainable_documents, self.skipped_documents
        );
        for e in &self.epochs {
            out.push_str(&format!(
                "epoch {:>3}  loss {:.6}  dev accuracy {:.4}\n",
                e.epoch, e.loss, e.dev_accuracy
            ));
        }
        out.push_str(&format!(
            "stopped: {:?}; best epoch {} with dev accuracy {:.4}\n",
            self.stop_reason,
            self.best_epoch,
            self.best_dev_accuracy()
        ));
        out
    }
}

struct TrainDoc {
    id: String,
    sentences: Vec<SentenceVector>,
    space: NegativeSpace,
}

/// Trains a bidirectional model with early stopping on dev discrimination
/// accuracy and returns the best snapshot.
pub fn train<E: SentenceEncoder + Sync + ?Sized>(
    config: &TrainConfig,
    train_corpus: &Corpus,
    dev: &Corpus,
    encoder: &E,
) -> Result<(BidirectionalModel, TrainReport)> {
    config.validate()?;
    if dev.documents.iter().all(|d| d.len() < 2) {
        return Err(Error::InvalidConfig("dev corpus has no document with at least 2 sentences".into()));
    }
    let mut coverage_rng = rng::stream(config.seed, Stream::Coverage);
    let mut docs = Vec::new();
    for doc in train_corpus.documents.iter().filter(|d| d.len() >= 3) {
        let space = if config.coverage < 1.0 {
            restrict_coverage(doc.len(), config.coverage, config.boundary_anchors, &mut coverage_rng)?
        } else {
            NegativeSpace::full(doc.len(), config.boundary_anchors)
        };
        docs.push(TrainDoc {
            id: doc.id.clone(),
            sentences: encode_sentences(encoder, doc),
            space,
        });
    }
    if docs.is_empty() {
        return Err(Error::NoTrainableDocuments);
    }
    let skipped = train_corpus.len() - docs.len();

    let mut init_rng = rng::stream(config.seed, Stream::Init);
    let mut model = BidirectionalModel::init(&mut init_rng, encoder.dim(), config.hidden, config.model_settings())?;
    let mut adam = AdamState::new(model.num_params(), config.lr);
    let mut sampling_rng = rng::stream(config.seed, Stream::Sampling);
    let mut dropout_rng = rng::stream(config.seed, Stream::Dropout);

    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, BidirectionalModel)> = None;
    let mut since_best = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut sampling_rng);
        let mut loss_sum = 0.0;
        for &d in &order {
            let doc = &docs[d];
            let triplets = sample_triplets(
                &doc.id,
                doc.sentences.len(),
                config.triplets_per_doc,
                config.boundary_anchors,
                Some(&doc.space),
                &mut sampling_rng,
            )?;
            let enc = EncodedDocument::from_sentences(&model.start, &doc.sentences, &model.end)?;
            let (loss, grads) = compute_gradients(&model, &enc, &triplets, Some(&mut dropout_rng))?;
            loss_sum += loss;
            adam.step(model.param_slices_mut(), &grads.slices())?;
        }
        let loss = loss_sum / docs.len() as f64;

        let scorer = LcdScorer::new(&model, encoder);
        let mut dev_rng = rng::stream(config.seed, Stream::DevPermutations);
        let dev_accuracy = discrimination(&scorer, dev, config.dev_permutations, &mut dev_rng)?.aggregate;
        info!("epoch {epoch}: loss {loss:.6}, dev accuracy {dev_accuracy:.4}");
        epochs.push(EpochStats {
            epoch,
            loss,
            dev_accuracy,
        });

        if best.as_ref().map_or(true, |(acc, _, _)| dev_accuracy > *acc) {
            best = Some((dev_accuracy, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience && epoch < config.max_epochs {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch runs");
    Ok((
        best_model,
        TrainReport {
            epochs,
            best_epoch,
            stop_reason,
            trainable_documents: docs.len(),
            skipped_documents: skipped,
        },
    ))
}
