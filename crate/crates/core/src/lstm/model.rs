// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, log_sum_exp, seeded_rng, sigmoid, softmax_in_place, Matrix};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Two layers of `hidden` units, embedding width `embed`.
    pub fn new(vocab_size: usize, embed_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        Self {
            vocab_size,
            embed_dim,
            hidden_dim,
            num_layers: 2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::arg("model dimensions must be >= 1"));
        }
        if self.num_layers == 0 {
            return Err(Error::arg("num_layers must be >= 1"));
        }
        Ok(())
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            self.hidden_dim
        }
    }

    /// Closed-form parameter count of the declared blocks.
    pub fn parameter_count(&self) -> usize {
        let (v, e, h) = (self.vocab_size, self.embed_dim, self.hidden_dim);
        let layers: usize = (0..self.num_layers)
            .map(|l| 4 * h * self.layer_input_dim(l) + 4 * h * h + 4 * h)
            .sum();
        v * e + layers + v * h + v
    }

    pub fn total_units(&self) -> usize {
        self.num_layers * self.hidden_dim
    }
}

/// Dense token ↔ index map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::arg(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or a vocabulary error naming it.
    pub fn require(&self, token: &str) -> Result<usize> {
        self.index_of(token).ok_or_else(|| Error::Vocabulary {
            form: token.to_string(),
        })
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>> {
        tokens.iter().map(|t| self.require(t.as_ref())).collect()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Vocab::new(tokens).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub steps: usize,
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    /// `4H × in`, gate blocks `i, f, g, o`.
    pub w_input: Matrix,
    /// `4H × H`.
    pub w_hidden: Matrix,
    /// `4H`.
    pub bias: Vec<f64>,
}

/// Full parameter set plus vocabulary and metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocab,
    /// `V × E`.
    pub input_embedding: Matrix,
    pub layers: Vec<LstmLayer>,
    /// `V × H`; never aliased with `input_embedding`.
    pub output_embedding: Matrix,
    /// `V`.
    pub output_bias: Vec<f64>,
    pub metadata: TrainingMetadata,
}

/// Name and shape of every parameter block, in manifest order.
pub(crate) fn block_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
    let mut out = vec![("embedding.input".to_string(), vec![v, e])];
    for l in 0..config.num_layers {
        out.push((format!("layer{l}.w_input"), vec![4 * h, config.layer_input_dim(l)]));
        out.push((format!("layer{l}.w_hidden"), vec![4 * h, h]));
        out.push((format!("layer{l}.bias"), vec![4 * h]));
    }
    out.push(("embedding.output".to_string(), vec![v, h]));
    out.push(("output.bias".to_string(), vec![v]));
    out
}

impl Checkpoint {
    /// All-zero parameters with the given vocabulary.
    pub fn zeros(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::arg(format!(
                "vocabulary has {} tokens but config.vocab_size = {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let layers = (0..config.num_layers)
            .map(|l| LstmLayer {
                w_input: Matrix::zeros(4 * h, config.layer_input_dim(l)),
                w_hidden: Matrix::zeros(4 * h, h),
                bias: vec![0.0; 4 * h],
            })
            .collect();
        Ok(Self {
            input_embedding: Matrix::zeros(v, e),
            layers,
            output_embedding: Matrix::zeros(v, h),
            output_bias: vec![0.0; v],
            metadata: TrainingMetadata::default(),
            config,
            vocab,
        })
    }

    /// Parameter blocks in manifest order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.input_embedding.as_slice()];
        for layer in &self.layers {
            out.push(layer.w_input.as_slice());
            out.push(layer.w_hidden.as_slice());
            out.push(&layer.bias);
        }
        out.push(self.output_embedding.as_slice());
        out.push(&self.output_bias);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.input_embedding.as_mut_slice()];
        for layer in &mut self.layers {
            out.push(layer.w_input.as_mut_slice());
            out.push(layer.w_hidden.as_mut_slice());
            out.push(&mut layer.bias);
        }
        out.push(self.output_embedding.as_mut_slice());
        out.push(&mut self.output_bias);
        out
    }

    pub fn block_names(&self) -> Vec<String> {
        block_layout(&self.config).into_iter().map(|(n, _)| n).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn top_layer(&self) -> usize {
        self.config.num_layers - 1
    }

    /// Every recurrent unit in (layer, index) order.
    pub fn all_units(&self) -> Vec<UnitId> {
        (0..self.num_layers())
            .flat_map(|layer| (0..self.hidden_dim()).map(move |index| UnitId { layer, index }))
            .collect()
    }

    pub(crate) fn check_token(&self, token: usize) -> Result<()> {
        if token >= self.config.vocab_size {
            return Err(Error::arg(format!(
                "token index {token} out of range (vocab size {})",
                self.config.vocab_size
            )));
        }
        Ok(())
    }
}

/// Random initialization: weights uniform in `±1/√H`, forget-gate biases 1,
/// other biases 0. Draw order follows the block manifest.
pub fn init_model(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::zeros(config, vocab)?;
    let bound = 1.0 / (ckpt.config.hidden_dim as f64).sqrt();
    let h = ckpt.config.hidden_dim;
    let mut rng = seeded_rng(seed);
    let names = ckpt.block_names();
    for (name, block) in names.iter().zip(ckpt.blocks_mut()) {
        if name.ends_with("bias") {
            continue;
        }
        for w in block.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
    }
    for layer in &mut ckpt.layers {
        layer.bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
    }
    ckpt.config.seed = seed;
    Ok(ckpt)
}

/// A recurrent unit address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitId {
    pub layer: usize,
    pub index: usize,
}

impl UnitId {
    pub fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }

    /// Position in (layer, index) order across the whole network.
    pub fn global(&self, hidden_dim: usize) -> usize {
        self.layer * hidden_dim + self.index
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer, self.index)
    }
}

impl std::str::FromStr for UnitId {
    type Err = Error;

    /// Parses `layer:index`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::arg(format!("unit must look like layer:index, got {s:?}"));
        let (l, i) = s.split_once(':').ok_or_else(bad)?;
        Ok(Self::new(l.trim().parse().map_err(|_| bad())?, i.trim().parse().map_err(|_| bad())?))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Clamp both hidden and cell state to zero.
    #[default]
    HiddenAndCell,
    /// Clamp only the hidden output; the cell keeps integrating.
    HiddenOnly,
}

/// Units whose activations are clamped to zero at every timestep.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationMask {
    pub units: BTreeSet<UnitId>,
    #[serde(default)]
    pub mode: AblationMode,
}

impl AblationMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_units(units: impl IntoIterator<Item = UnitId>) -> Self {
        Self {
            units: units.into_iter().collect(),
            mode: AblationMode::HiddenAndCell,
        }
    }

    pub fn with_mode(mut self, mode: AblationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn contains(&self, unit: UnitId) -> bool {
        self.units.contains(&unit)
    }

    /// Short text form, e.g. `"none"` or `"1:3+1:7"`.
    pub fn descriptor(&self) -> String {
        if self.units.is_empty() {
            return "none".to_string();
        }
        let mut s = self
            .units
            .iter()
            .map(UnitId::to_string)
            .collect::<Vec<_>>()
            .join("+");
        if self.mode == AblationMode::HiddenOnly {
            s.push_str("/h");
        }
        s
    }

    pub(crate) fn validate(&self, config: &ModelConfig) -> Result<()> {
        for u in &self.units {
            if u.layer >= config.num_layers || u.index >= config.hidden_dim {
                return Err(Error::arg(format!("ablation unit {u} out of range")));
            }
        }
        Ok(())
    }

    fn per_layer(&self, config: &ModelConfig) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); config.num_layers];
        for u in &self.units {
            out[u.layer].push(u.index);
        }
        out
    }
}

/// Hidden and cell vectors of every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LayerState {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            h: vec![vec![0.0; config.hidden_dim]; config.num_layers],
            c: vec![vec![0.0; config.hidden_dim]; config.num_layers],
        }
    }
}

/// Gate activations and post-mask state of one layer at one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGates {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LayerGates {
    fn zeros(h: usize) -> Self {
        Self {
            i: vec![0.0; h],
            f: vec![0.0; h],
            g: vec![0.0; h],
            o: vec![0.0; h],
            c: vec![0.0; h],
            h: vec![0.0; h],
        }
    }
}

/// Per-layer gate values for one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct GateRecord {
    pub layers: Vec<LayerGates>,
}

/// Stateful forward pass with reusable buffers.
pub struct Runner<'a> {
    ckpt: &'a Checkpoint,
    masked: Vec<Vec<usize>>,
    mode: AblationMode,
    state: LayerState,
    gates: GateRecord,
    preact: Vec<f64>,
    steps: usize,
}

impl<'a> Runner<'a> {
    pub fn new(ckpt: &'a Checkpoint, mask: &AblationMask) -> Result<Self> {
        mask.validate(&ckpt.config)?;
        Ok(Self::from_state(ckpt, mask, LayerState::zeros(&ckpt.config)))
    }

    fn from_state(ckpt: &'a Checkpoint, mask: &AblationMask, state: LayerState) -> Self {
        let h = ckpt.config.hidden_dim;
        Self {
            ckpt,
            masked: mask.per_layer(&ckpt.config),
            mode: mask.mode,
            state,
            gates: GateRecord {
                layers: vec![LayerGates::zeros(h); ckpt.config.num_layers],
            },
            preact: vec![0.0; 4 * h],
            steps: 0,
        }
    }

    /// Consumes one token and returns the gate record of this timestep.
    pub fn feed(&mut self, token: usize) -> Result<&GateRecord> {
        self.ckpt.check_token(token)?;
        let ckpt = self.ckpt;
        let h = ckpt.config.hidden_dim;
        for (l, layer) in ckpt.layers.iter().enumerate() {
            let (below, rest) = self.state.h.split_at_mut(l);
            let x: &[f64] = if l == 0 {
                ckpt.input_embedding.row(token)
            } else {
                &below[l - 1]
            };
            let pre = &mut self.preact;
            pre.copy_from_slice(&layer.bias);
            layer.w_input.matvec_add(x, pre);
            layer.w_hidden.matvec_add(&rest[0], pre);

            let g = &mut self.gates.layers[l];
            let c = &mut self.state.c[l];
            let hv = &mut rest[0];
            for u in 0..h {
                let iu = sigmoid(pre[u]);
                let fu = sigmoid(pre[h + u]);
                let gu = pre[2 * h + u].tanh();
                let ou = sigmoid(pre[3 * h + u]);
                let cu = fu * c[u] + iu * gu;
                g.i[u] = iu;
                g.f[u] = fu;
                g.g[u] = gu;
                g.o[u] = ou;
                c[u] = cu;
                hv[u] = ou * cu.tanh();
            }
            for &u in &self.masked[l] {
                hv[u] = 0.0;
                if self.mode == AblationMode::HiddenAndCell {
                    c[u] = 0.0;
                }
            }
            g.c.copy_from_slice(c);
            g.h.copy_from_slice(hv);
        }
        self.steps += 1;
        Ok(&self.gates)
    }

    pub fn state(&self) -> &LayerState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Output logits from the current top-layer hidden state.
    pub fn logits(&self) -> Vec<f64> {
        let mut out = self.ckpt.output_bias.clone();
        self.ckpt
            .output_embedding
            .matvec_add(&self.state.h[self.ckpt.top_layer()], &mut out);
        out
    }

    /// Next-word distribution from the current state.
    pub fn distribution(&self) -> Vec<f64> {
        let mut p = self.logits();
        softmax_in_place(&mut p);
        p
    }

    /// `log p(token | consumed prefix)`.
    pub fn log_prob(&self, token: usize) -> f64 {
        let logits = self.logits();
        logits[token] - log_sum_exp(&logits)
    }

    /// Logit of a single output row; cheaper than the full vector.
    pub fn logit(&self, token: usize) -> f64 {
        self.ckpt.output_bias[token]
            + dot(
                self.ckpt.output_embedding.row(token),
                &self.state.h[self.ckpt.top_layer()],
            )
    }
}

/// One timestep from an explicit state.
pub fn step(
    ckpt: &Checkpoint,
    state: &LayerState,
    token: usize,
    mask: &AblationMask,
) -> Result<(LayerState, Vec<f64>, GateRecord)> {
    mask.validate(&ckpt.config)?;
    let shapes_ok = state.h.len() == ckpt.config.num_layers
        && state.c.len() == ckpt.config.num_layers
        && state
            .h
            .iter()
            .chain(&state.c)
            .all(|v| v.len() == ckpt.config.hidden_dim);
    if !shapes_ok {
        return Err(Error::arg("state shape does not match the model config"));
    }
    let mut runner = Runner::from_state(ckpt, mask, state.clone());
    let gates = runner.feed(token)?.clone();
    let logits = runner.logits();
    Ok((runner.state, logits, gates))
}

/// Softmax over the vocabulary after consuming `prefix` from the zero state.
pub fn next_word_distribution(
    ckpt: &Checkpoint,
    prefix: &[usize],
    mask: &AblationMask,
) -> Result<Vec<f64>> {
    if prefix.is_empty() {
        return Err(Error::arg("prefix must be nonempty"));
    }
    let mut runner = Runner::new(ckpt, mask)?;
    for &t in prefix {
        runner.feed(t)?;
    }
    Ok(runner.distribution())
}

/// `Σ_{t ≥ 1} log p(w_t | w_0 … w_{t−1})`: the sentence log-probability
/// conditioned on its first token.
pub fn sequence_log_prob(ckpt: &Checkpoint, tokens: &[usize], mask: &AblationMask) -> Result<f64> {
    let mut runner = Runner::new(ckpt, mask)?;
    let mut total = 0.0;
    for (t, &tok) in tokens.iter().enumerate() {
        if t > 0 {
            ckpt.check_token(tok)?;
            total += runner.log_prob(tok);
        }
        runner.feed(tok)?;
    }
    Ok(total)
}
