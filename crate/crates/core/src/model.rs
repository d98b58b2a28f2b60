//! The pair scorer.
//!
//! A scorer maps a sentence pair `(S, T)` to a real coherence score through
//! pair features and one ReLU hidden layer with a linear scalar output. The
//! bidirectional model owns a forward scorer over `(S, T)`, a backward scorer
//! over `(T, S)` and the trainable START/END vectors.

use std::io::{Read, Write};

use rand::Rng;

use crate::encoder::{EncodedDocument, SentenceVector};
use crate::error::{Error, ModelFormatError, Result};

/// Which pair features feed the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// `[S | T | S-T | S*T | |S-T|]`, length `5d`.
    Full,
    /// `[S | T]`, length `2d`.
    ConcatOnly,
}

impl FeatureMode {
    pub fn input_dim(self, dim: usize) -> usize {
        match self {
            FeatureMode::Full => 5 * dim,
            FeatureMode::ConcatOnly => 2 * dim,
        }
    }

    fn code(self) -> u8 {
        match self {
            FeatureMode::Full => 0,
            FeatureMode::ConcatOnly => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureMode::Full),
            1 => Some(FeatureMode::ConcatOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMode {
    Bidirectional,
    ForwardOnly,
}

impl DirectionMode {
    fn code(self) -> u8 {
        match self {
            DirectionMode::Bidirectional => 0,
            DirectionMode::ForwardOnly => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DirectionMode::Bidirectional),
            1 => Some(DirectionMode::ForwardOnly),
            _ => None,
        }
    }
}

/// Feature vector for one ordered sentence pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures(pub Vec<f64>);

impl PairFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn pair_features(s: &[f64], t: &[f64], mode: FeatureMode) -> Result<PairFeatures> {
    if s.len() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: s.len(),
            got: t.len(),
        });
    }
    let mut out = Vec::with_capacity(mode.input_dim(s.len()));
    write_features_into(s, t, mode, &mut out);
    Ok(PairFeatures(out))
}

pub(crate) fn write_features_into(s: &[f64], t: &[f64], mode: FeatureMode, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(s);
    out.extend_from_slice(t);
    if mode == FeatureMode::Full {
        out.extend(s.iter().zip(t).map(|(a, b)| a - b));
        out.extend(s.iter().zip(t).map(|(a, b)| a * b));
        out.extend(s.iter().zip(t).map(|(a, b)| (a - b).abs()));
    }
}

/// Accumulates the gradient of the features with respect to `s` and `t`.
/// The subgradient of `|s - t|` at zero is taken as zero.
pub(crate) fn features_backward(
    s: &[f64],
    t: &[f64],
    dx: &[f64],
    mode: FeatureMode,
    ds: &mut [f64],
    dt: &mut [f64],
) {
    let d = s.len();
    for i in 0..d {
        ds[i] += dx[i];
        dt[i] += dx[d + i];
    }
    if mode == FeatureMode::Full {
        for i in 0..d {
            let diff = dx[2 * d + i];
            let prod = dx[3 * d + i];
            let sign = match s[i] - t[i] {
                x if x > 0.0 => 1.0,
                x if x < 0.0 => -1.0,
                _ => 0.0,
            };
            let abs = dx[4 * d + i] * sign;
            ds[i] += diff + prod * t[i] + abs;
            dt[i] += -diff + prod * s[i] - abs;
        }
    }
}

/// Weights of one directional scorer.
///
/// `w1` is stored input-major: the weights leaving input `k` occupy
/// `w1[k * hidden..(k + 1) * hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl ScorerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        ScorerParams {
            input_dim,
            hidden,
            w1: vec![0.0; input_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, input_dim: usize, hidden: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::InvalidConfig("scorer dimensions must be positive".into()));
        }
        let mut p = ScorerParams::zeros(input_dim, hidden);
        let limit1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        for w in &mut p.w1 {
            *w = rng.gen_range(-limit1..=limit1);
        }
        let limit2 = (6.0 / (hidden + 1) as f64).sqrt();
        for w in &mut p.w2 {
            *w = rng.gen_range(-limit2..=limit2);
        }
        Ok(p)
    }

    /// Weight from input `k` to hidden unit `h`.
    pub fn weight(&self, h: usize, k: usize) -> f64 {
        self.w1[k * self.hidden + h]
    }

    fn column(&self, k: usize) -> &[f64] {
        &self.w1[k * self.hidden..(k + 1) * self.hidden]
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }

    pub(crate) fn slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, std::slice::from_ref(&self.b2)]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: len,
            });
        }
        Ok(())
    }
}

/// Training-time dropout settings. Survivors are scaled by `1 / keep`.
pub struct Dropout<'a, R: Rng + ?Sized> {
    pub p_input: f64,
    pub p_hidden: f64,
    pub rng: &'a mut R,
}

/// Scores one feature vector. Without dropout the result is deterministic.
pub fn score_pair<R: Rng + ?Sized>(
    params: &ScorerParams,
    feats: &PairFeatures,
    dropout: Option<&mut Dropout<'_, R>>,
) -> Result<f64> {
    params.check_input(feats.0.len())?;
    Ok(forward_pass(params, &feats.0, dropout).score)
}

/// Everything backprop needs from one forward evaluation.
pub(crate) struct PairTrace {
    /// Input after dropout.
    x: Vec<f64>,
    /// d x_dropped / d x for each input.
    input_gate: Option<Vec<f64>>,
    /// Hidden activations after ReLU and dropout.
    hidden: Vec<f64>,
    /// d hidden / d pre-activation.
    hidden_gate: Vec<f64>,
    pub score: f64,
}

pub(crate) fn forward_pass<R: Rng + ?Sized>(
    params: &ScorerParams,
    input: &[f64],
    dropout: Option<&mut Dropout<'_, R>>,
) -> PairTrace {
    let (x, input_gate, hidden_keep) = match dropout {
        Some(dp) => {
            let keep_in = 1.0 - dp.p_input;
            let keep_h = 1.0 - dp.p_hidden;
            let gate: Vec<f64> = input
                .iter()
                .map(|_| if dp.rng.gen::<f64>() < keep_in { 1.0 / keep_in } else { 0.0 })
                .collect();
            let x = input.iter().zip(&gate).map(|(v, g)| v * g).collect();
            let hidden_keep: Vec<f64> = (0..params.hidden)
                .map(|_| if dp.rng.gen::<f64>() < keep_h { 1.0 / keep_h } else { 0.0 })
                .collect();
            (x, Some(gate), Some(hidden_keep))
        }
        None => (input.to_vec(), None, None),
    };

    let mut pre = params.b1.clone();
    for (k, &xk) in x.iter().enumerate() {
        if xk != 0.0 {
            axpy(xk, params.column(k), &mut pre);
        }
    }

    let mut hidden = vec![0.0; params.hidden];
    let mut hidden_gate = vec![0.0; params.hidden];
    for h in 0..params.hidden {
        if pre[h] > 0.0 {
            let g = hidden_keep.as_ref().map_or(1.0, |m| m[h]);
            hidden[h] = pre[h] * g;
            hidden_gate[h] = g;
        }
    }
    let score = dot(&params.w2, &hidden) + params.b2;
    PairTrace {
        x,
        input_gate,
        hidden,
        hidden_gate,
        score,
    }
}

/// Adds `upstream * d score / d params` into `grads`. When `want_input` is
/// set, also returns `upstream * d score / d input`.
pub(crate) fn backward_pass(
    params: &ScorerParams,
    trace: &PairTrace,
    upstream: f64,
    grads: &mut ScorerParams,
    want_input: bool,
) -> Option<Vec<f64>> {
    grads.b2 += upstream;
    axpy(upstream, &trace.hidden, &mut grads.w2);
    let dpre: Vec<f64> = params
        .w2
        .iter()
        .zip(&trace.hidden_gate)
        .map(|(w, g)| upstream * w * g)
        .collect();
    for (b, d) in grads.b1.iter_mut().zip(&dpre) {
        *b += d;
    }
    let hidden = params.hidden;
    for (k, &xk) in trace.x.iter().enumerate() {
        if xk != 0.0 {
            axpy(xk, &dpre, &mut grads.w1[k * hidden..(k + 1) * hidden]);
        }
    }
    if !want_input {
        return None;
    }
    Some(
        (0..params.input_dim)
            .map(|k| {
                let gate = trace.input_gate.as_ref().map_or(1.0, |g| g[k]);
                if gate == 0.0 {
                    0.0
                } else {
                    gate * dot(params.column(k), &dpre)
                }
            })
            .collect(),
    )
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Non-trainable settings carried by a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSettings {
    pub margin: f64,
    pub p_input: f64,
    pub p_hidden: f64,
    pub feature_mode: FeatureMode,
    pub direction_mode: DirectionMode,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            margin: 5.0,
            p_input: 0.6,
            p_hidden: 0.3,
            feature_mode: FeatureMode::Full,
            direction_mode: DirectionMode::Bidirectional,
        }
    }
}

impl ModelSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig(format!("margin must be positive, got {}", self.margin)));
        }
        for (name, p) in [("input dropout", self.p_input), ("hidden dropout", self.p_hidden)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BidirectionalModel {
    pub dim: usize,
    pub hidden: usize,
    pub settings: ModelSettings,
    pub forward: ScorerParams,
    pub backward: ScorerParams,
    pub start: SentenceVector,
    pub end: SentenceVector,
}

impl BidirectionalModel {
    /// Fresh model: Glorot weights for both scorers, zero START/END.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        dim: usize,
        hidden: usize,
        settings: ModelSettings,
    ) -> Result<Self> {
        settings.validate()?;
        let input = settings.feature_mode.input_dim(dim);
        let forward = ScorerParams::init(rng, input, hidden)?;
        let backward = ScorerParams::init(rng, input, hidden)?;
        Ok(BidirectionalModel {
            dim,
            hidden,
            settings,
            forward,
            backward,
            start: SentenceVector::zeros(dim),
            end: SentenceVector::zeros(dim),
        })
    }

    pub fn is_bidirectional(&self) -> bool {
        self.settings.direction_mode == DirectionMode::Bidirectional
    }

    pub fn feature_mode(&self) -> FeatureMode {
        self.settings.feature_mode
    }

    /// Forward score of the ordered pair `(s, t)`, no dropout.
    pub fn forward_score(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        let feats = pair_features(s, t, self.feature_mode())?;
        score_pair::<rand_chacha::ChaCha8Rng>(&self.forward, &feats, None)
    }

    /// Backward scorer applied to the reversed pair `(t, s)`.
    pub fn backward_score(&self, s: &[f64], t: &[f64]) -> Result<f64> {
        let feats = pair_features(t, s, self.feature_mode())?;
        score_pair::<rand_chacha::ChaCha8Rng>(&self.backward, &feats, None)
    }

    /// Mean forward score over consecutive rows averaged with the mean
    /// backward score over the same pairs (forward only in that mode).
    pub fn score_document(&self, enc: &EncodedDocument) -> Result<f64> {
        if enc.len() < 2 {
            return Err(Error::NothingToScore);
        }
        let pairs = (enc.len() - 1) as f64;
        let mut fwd = 0.0;
        let mut bwd = 0.0;
        for w in enc.rows.windows(2) {
            let (s, t) = (w[0].as_slice(), w[1].as_slice());
            fwd += self.forward_score(s, t)?;
            if self.is_bidirectional() {
                bwd += self.backward_score(s, t)?;
            }
        }
        Ok(if self.is_bidirectional() {
            (fwd / pairs + bwd / pairs) / 2.0
        } else {
            fwd / pairs
        })
    }

    /// Scores for every ordered pair of encoded rows.
    ///
    /// The first layer splits into a part that depends on one row only and a
    /// part that depends on the symmetric features `S*T` and `|S-T|`, so each
    /// unordered pair costs one pass over those columns per scorer.
    pub fn pair_table(&self, enc: &EncodedDocument) -> Result<PairTable> {
        let dim = enc.dim();
        if dim != self.dim || enc.rows.iter().any(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dim,
            });
        }
        let rows: Vec<&[f64]> = enc.rows.iter().map(SentenceVector::as_slice).collect();
        let forward = scorer_matrix(&self.forward, &rows, self.feature_mode());
        let backward = if self.is_bidirectional() {
            // backward[a][b] = g(x_b, x_a)
            let m = rows.len();
            let g = scorer_matrix(&self.backward, &rows, self.feature_mode());
            let mut t = vec![0.0; m * m];
            for a in 0..m {
                for b in 0..m {
                    t[a * m + b] = g[b * m + a];
                }
            }
            Some(t)
        } else {
            None
        };
        Ok(PairTable {
            rows: rows.len(),
            forward,
            backward,
        })
    }

    /// All trainable parameters in a fixed order: forward scorer, backward
    /// scorer, START, END.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(10);
        out.extend(self.forward.slices_mut());
        out.extend(self.backward.slices_mut());
        out.push(&mut self.start.0);
        out.push(&mut self.end.0);
        out
    }

    pub fn num_params(&self) -> usize {
        self.forward.num_params() + self.backward.num_params() + 2 * self.dim
    }
}

/// `m[a * rows + b]` = scorer applied to `(x_a, x_b)` for all `a != b`.
fn scorer_matrix(p: &ScorerParams, rows: &[&[f64]], mode: FeatureMode) -> Vec<f64> {
    let m = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let h = p.hidden;
    // Per-row contributions when the row is the first / second argument.
    let mut first = vec![0.0; m * h];
    let mut second = vec![0.0; m * h];
    for (a, row) in rows.iter().enumerate() {
        let u = &mut first[a * h..(a + 1) * h];
        let v = &mut second[a * h..(a + 1) * h];
        for i in 0..d {
            let x = row[i];
            if x == 0.0 {
                continue;
            }
            axpy(x, p.column(i), u);
            axpy(x, p.column(d + i), v);
            if mode == FeatureMode::Full {
                axpy(x, p.column(2 * d + i), u);
                axpy(-x, p.column(2 * d + i), v);
            }
        }
    }

    let mut out = vec![0.0; m * m];
    let mut shared = vec![0.0; h];
    let mut pre = vec![0.0; h];
    for a in 0..m {
        for b in (a + 1)..m {
            shared.copy_from_slice(&p.b1);
            if mode == FeatureMode::Full {
                for i in 0..d {
                    let (s, t) = (rows[a][i], rows[b][i]);
                    let prod = s * t;
                    if prod != 0.0 {
                        axpy(prod, p.column(3 * d + i), &mut shared);
                    }
                    let abs = (s - t).abs();
                    if abs != 0.0 {
                        axpy(abs, p.column(4 * d + i), &mut shared);
                    }
                }
            }
            for (x, y) in [(a, b), (b, a)] {
                for k in 0..h {
                    pre[k] = shared[k] + first[x * h + k] + second[y * h + k];
                }
                let score: f64 = p
                    .w2
                    .iter()
                    .zip(&pre)
                    .map(|(w, z)| if *z > 0.0 { w * z } else { 0.0 })
                    .sum::<f64>()
                    + p.b2;
                out[x * m + y] = score;
            }
        }
    }
    out
}

/// Pair scores over the encoded rows of one document: row 0 is START, rows
/// `1..=n` the sentences, row `n + 1` END. Any ordering of the sentences can
/// be scored from the table without re-running the network.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    rows: usize,
    forward: Vec<f64>,
    backward: Option<Vec<f64>>,
}

impl PairTable {
    /// Table for `n` sentences from explicit score functions on row indices.
    /// `backward(a, b)` is the backward score for `b` following `a`.
    pub fn from_fn(
        n: usize,
        forward: impl Fn(usize, usize) -> f64,
        backward: Option<&dyn Fn(usize, usize) -> f64>,
    ) -> Self {
        let m = n + 2;
        let fill = |f: &dyn Fn(usize, usize) -> f64| {
            let mut t = vec![0.0; m * m];
            for a in 0..m {
                for b in 0..m {
                    t[a * m + b] = f(a, b);
                }
            }
            t
        };
        PairTable {
            rows: m,
            forward: fill(&forward),
            backward: backward.map(fill),
        }
    }

    /// Number of sentences.
    pub fn sentences(&self) -> usize {
        self.rows - 2
    }

    pub fn forward(&self, a: usize, b: usize) -> f64 {
        self.forward[a * self.rows + b]
    }

    pub fn backward(&self, a: usize, b: usize) -> Option<f64> {
        self.backward.as_ref().map(|t| t[a * self.rows + b])
    }

    /// Combined score of row `b` following row `a`.
    pub fn pair(&self, a: usize, b: usize) -> f64 {
        match self.backward(a, b) {
            Some(g) => (self.forward(a, b) + g) / 2.0,
            None => self.forward(a, b),
        }
    }

    /// Document score for `order` (sentence indices `0..n`) with START and END
    /// wrapped around it.
    pub fn score_order(&self, order: &[usize]) -> f64 {
        let end = self.rows - 1;
        let path = std::iter::once(0)
            .chain(order.iter().map(|&i| i + 1))
            .chain(std::iter::once(end));
        let mut prev = None;
        let (mut fwd, mut bwd, mut pairs) = (0.0, 0.0, 0usize);
        for row in path {
            if let Some(a) = prev {
                fwd += self.forward(a, row);
                if let Some(g) = self.backward(a, row) {
                    bwd += g;
                }
                pairs += 1;
            }
            prev = Some(row);
        }
        let pairs = pairs as f64;
        if self.backward.is_some() {
            (fwd / pairs + bwd / pairs) / 2.0
        } else {
            fwd / pairs
        }
    }
}

const MAGIC: &[u8; 4] = b"LCDM";
const FORMAT_VERSION: u32 = 1;

/// Serializes the model: magic, version, dimensions, modes, margin, dropout
/// rates, then forward `w1 b1 w2 b2`, backward `w1 b1 w2 b2`, START, END as
/// u64-length-prefixed little-endian f64 arrays.
pub fn save_model(model: &BidirectionalModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.num_params() + 8 * 10);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.dim as u64).to_le_bytes());
    out.extend_from_slice(&(model.hidden as u64).to_le_bytes());
    out.push(model.settings.feature_mode.code());
    out.push(model.settings.direction_mode.code());
    for v in [model.settings.margin, model.settings.p_input, model.settings.p_hidden] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let arrays = model
        .forward
        .slices()
        .into_iter()
        .chain(model.backward.slices())
        .chain([model.start.as_slice(), model.end.as_slice()]);
    for array in arrays {
        out.extend_from_slice(&(array.len() as u64).to_le_bytes());
        for v in array {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_model<W: Write>(model: &BidirectionalModel, mut writer: W) -> Result<()> {
    writer.write_all(&save_model(model))?;
    Ok(())
}

pub fn read_model<R: Read>(mut reader: R) -> Result<BidirectionalModel> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    Ok(load_model(&bytes)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFormatError> {
        if self.bytes.len() < n {
            return Err(ModelFormatError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, ModelFormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelFormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn array(&mut self, expected: usize, name: &str) -> Result<Vec<f64>, ModelFormatError> {
        let len = self.u64()?;
        if len != expected as u64 {
            return Err(ModelFormatError::Corrupt(format!(
                "{name} has length {len}, expected {expected}"
            )));
        }
        (0..expected).map(|_| self.f64()).collect()
    }
}

pub fn load_model(bytes: &[u8]) -> Result<BidirectionalModel, ModelFormatError> {
    let mut cur = Cursor { bytes };
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) {
            ModelFormatError::Truncated
        } else {
            ModelFormatError::BadMagic
        });
    }
    if cur.take(4)? != MAGIC {
        return Err(ModelFormatError::BadMagic);
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(ModelFormatError::UnsupportedVersion(version));
    }
    let dim = usize::try_from(cur.u64()?).map_err(|_| ModelFormatError::Corrupt("dimension overflow".into()))?;
    let hidden = usize::try_from(cur.u64()?).map_err(|_| ModelFormatError::Corrupt("dimension overflow".into()))?;
    let feature_mode = FeatureMode::from_code(cur.u8()?)
        .ok_or_else(|| ModelFormatError::Corrupt("unknown feature mode".into()))?;
    let direction_mode = DirectionMode::from_code(cur.u8()?)
        .ok_or_else(|| ModelFormatError::Corrupt("unknown direction mode".into()))?;
    let settings = ModelSettings {
        margin: cur.f64()?,
        p_input: cur.f64()?,
        p_hidden: cur.f64()?,
        feature_mode,
        direction_mode,
    };
    settings
        .validate()
        .map_err(|e| ModelFormatError::Corrupt(e.to_string()))?;
    if dim == 0 || hidden == 0 {
        return Err(ModelFormatError::Corrupt("zero dimension".into()));
    }
    let input = feature_mode
        .input_dim(dim)
        .checked_mul(hidden)
        .ok_or_else(|| ModelFormatError::Corrupt("dimension overflow".into()))?;
    let mut scorer = |name: &str| -> Result<ScorerParams, ModelFormatError> {
        let w1 = cur.array(input, name)?;
        let b1 = cur.array(hidden, name)?;
        let w2 = cur.array(hidden, name)?;
        let b2 = cur.array(1, name)?[0];
        Ok(ScorerParams {
            input_dim: feature_mode.input_dim(dim),
            hidden,
            w1,
            b1,
            w2,
            b2,
        })
    };
    let forward = scorer("forward scorer")?;
    let backward = scorer("backward scorer")?;
    let start = SentenceVector(cur.array(dim, "start vector")?);
    let end = SentenceVector(cur.array(dim, "end vector")?);
    if !cur.bytes.is_empty() {
        return Err(ModelFormatError::Corrupt(format!(
            "{} trailing bytes",
            cur.bytes.len()
        )));
    }
    Ok(BidirectionalModel {
        dim,
        hidden,
        settings,
        forward,
        backward,
        start,
        end,
    })
}
