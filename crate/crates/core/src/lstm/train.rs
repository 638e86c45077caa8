// SPDX-License-Identifier: MIT OR Apache-2.0

//! Truncated BPTT with global-norm clipping and plain SGD.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Checkpoint, LayerState};
use super::BOUNDARY;
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, seeded_rng, sigmoid, Matrix};

/// Sentences as index sequences; each ends with the boundary token.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Vec<usize>>,
}

impl Corpus {
    /// Splits a token stream after every occurrence of `boundary`. A trailing
    /// unterminated fragment becomes its own sentence.
    pub fn from_stream(stream: &[usize], boundary: usize) -> Self {
        let mut sentences = Vec::new();
        let mut cur = Vec::new();
        for &t in stream {
            cur.push(t);
            if t == boundary {
                sentences.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            sentences.push(cur);
        }
        Self { sentences }
    }

    /// Encodes whitespace-tokenized lines, appending the boundary token.
    pub fn from_lines<'a>(
        lines: impl IntoIterator<Item = &'a str>,
        vocab: &super::Vocab,
    ) -> Result<Self> {
        let eos = vocab.require(BOUNDARY)?;
        let mut sentences = Vec::new();
        for line in lines {
            let mut s = Vec::new();
            for tok in line.split_whitespace() {
                if tok != BOUNDARY {
                    s.push(vocab.require(tok)?);
                }
            }
            if s.is_empty() {
                continue;
            }
            s.push(eos);
            sentences.push(s);
        }
        Ok(Self { sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub clip: Option<f64>,
    pub epochs: usize,
    /// Sentences per update.
    pub batch_size: usize,
    /// Truncation length; longer sentences are split with the state carried.
    pub bptt_len: usize,
    /// Shuffling seed.
    pub seed: u64,
    /// Stops after this many updates when set.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1.0,
            clip: Some(5.0),
            epochs: 1,
            batch_size: 16,
            bptt_len: 35,
            seed: 0,
            max_steps: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub step_losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub clipped_norms: Vec<f64>,
    pub steps: usize,
}

/// Gradient blocks mirroring [`Checkpoint::blocks`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub input_embedding: Matrix,
    pub layers: Vec<LayerGrads>,
    pub output_embedding: Matrix,
    pub output_bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(ckpt: &Checkpoint) -> Self {
        Self {
            input_embedding: Matrix::zeros(ckpt.input_embedding.rows(), ckpt.input_embedding.cols()),
            layers: ckpt
                .layers
                .iter()
                .map(|l| LayerGrads {
                    w_input: Matrix::zeros(l.w_input.rows(), l.w_input.cols()),
                    w_hidden: Matrix::zeros(l.w_hidden.rows(), l.w_hidden.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            output_embedding: Matrix::zeros(
                ckpt.output_embedding.rows(),
                ckpt.output_embedding.cols(),
            ),
            output_bias: vec![0.0; ckpt.output_bias.len()],
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.input_embedding.as_slice()];
        for l in &self.layers {
            out.push(l.w_input.as_slice());
            out.push(l.w_hidden.as_slice());
            out.push(&l.bias);
        }
        out.push(self.output_embedding.as_slice());
        out.push(&self.output_bias);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.input_embedding.as_mut_slice()];
        for l in &mut self.layers {
            out.push(l.w_input.as_mut_slice());
            out.push(l.w_hidden.as_mut_slice());
            out.push(&mut l.bias);
        }
        out.push(self.output_embedding.as_mut_slice());
        out.push(&mut self.output_bias);
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|g| *g *= s);
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Cached activations of one layer at one timestep.
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Forward over one chunk, accumulating `weight`-scaled gradients of the
/// summed cross-entropy of `targets`. Returns the summed loss and final state.
fn chunk_backprop(
    ckpt: &Checkpoint,
    inputs: &[usize],
    targets: &[usize],
    init: LayerState,
    weight: f64,
    grads: &mut Gradients,
) -> (f64, LayerState) {
    let hd = ckpt.config.hidden_dim;
    let nl = ckpt.config.num_layers;
    let top = nl - 1;
    let steps = inputs.len();

    let mut state = init;
    let mut caches: Vec<Vec<StepCache>> = Vec::with_capacity(steps);
    let mut tops: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut probs: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut loss = 0.0;
    let mut pre = vec![0.0; 4 * hd];

    for (&tok, &target) in inputs.iter().zip(targets) {
        let mut layer_caches = Vec::with_capacity(nl);
        for (l, layer) in ckpt.layers.iter().enumerate() {
            let x: Vec<f64> = if l == 0 {
                ckpt.input_embedding.row(tok).to_vec()
            } else {
                state.h[l - 1].clone()
            };
            pre.copy_from_slice(&layer.bias);
            layer.w_input.matvec_add(&x, &mut pre);
            layer.w_hidden.matvec_add(&state.h[l], &mut pre);
            let mut sc = StepCache {
                x,
                h_prev: state.h[l].clone(),
                c_prev: state.c[l].clone(),
                i: vec![0.0; hd],
                f: vec![0.0; hd],
                g: vec![0.0; hd],
                o: vec![0.0; hd],
                tanh_c: vec![0.0; hd],
            };
            for u in 0..hd {
                sc.i[u] = sigmoid(pre[u]);
                sc.f[u] = sigmoid(pre[hd + u]);
                sc.g[u] = pre[2 * hd + u].tanh();
                sc.o[u] = sigmoid(pre[3 * hd + u]);
                let c = sc.f[u] * sc.c_prev[u] + sc.i[u] * sc.g[u];
                state.c[l][u] = c;
                sc.tanh_c[u] = c.tanh();
                state.h[l][u] = sc.o[u] * sc.tanh_c[u];
            }
            layer_caches.push(sc);
        }
        let mut logits = ckpt.output_bias.clone();
        ckpt.output_embedding.matvec_add(&state.h[top], &mut logits);
        let lse = log_sum_exp(&logits);
        loss += lse - logits[target];
        for z in logits.iter_mut() {
            *z = (*z - lse).exp();
        }
        probs.push(logits);
        tops.push(state.h[top].clone());
        caches.push(layer_caches);
    }

    let mut dh_next = vec![vec![0.0; hd]; nl];
    let mut dc_next = vec![vec![0.0; hd]; nl];
    let mut dpre = vec![0.0; 4 * hd];
    let mut dlogits = vec![0.0; ckpt.config.vocab_size];
    for t in (0..steps).rev() {
        for (d, &p) in dlogits.iter_mut().zip(&probs[t]) {
            *d = p * weight;
        }
        dlogits[targets[t]] -= weight;
        grads.output_embedding.add_outer(&dlogits, &tops[t]);
        grads
            .output_bias
            .iter_mut()
            .zip(&dlogits)
            .for_each(|(g, d)| *g += d);

        let mut dh = dh_next[top].clone();
        ckpt.output_embedding.matvec_t_add(&dlogits, &mut dh);

        for l in (0..nl).rev() {
            let sc = &caches[t][l];
            let layer = &ckpt.layers[l];
            for u in 0..hd {
                let (i, f, g, o, tc) = (sc.i[u], sc.f[u], sc.g[u], sc.o[u], sc.tanh_c[u]);
                let dc = dh[u] * o * (1.0 - tc * tc) + dc_next[l][u];
                dpre[u] = dc * g * i * (1.0 - i);
                dpre[hd + u] = dc * sc.c_prev[u] * f * (1.0 - f);
                dpre[2 * hd + u] = dc * i * (1.0 - g * g);
                dpre[3 * hd + u] = dh[u] * tc * o * (1.0 - o);
                dc_next[l][u] = dc * f;
            }
            let lg = &mut grads.layers[l];
            lg.w_input.add_outer(&dpre, &sc.x);
            lg.w_hidden.add_outer(&dpre, &sc.h_prev);
            lg.bias.iter_mut().zip(&dpre).for_each(|(b, d)| *b += d);

            let mut dx = vec![0.0; sc.x.len()];
            layer.w_input.matvec_t_add(&dpre, &mut dx);
            dh_next[l].iter_mut().for_each(|x| *x = 0.0);
            layer.w_hidden.matvec_t_add(&dpre, &mut dh_next[l]);
            if l == 0 {
                grads
                    .input_embedding
                    .row_mut(inputs[t])
                    .iter_mut()
                    .zip(&dx)
                    .for_each(|(g, d)| *g += d);
            } else {
                dh = dx;
                for (a, b) in dh.iter_mut().zip(&dh_next[l - 1]) {
                    *a += b;
                }
            }
        }
    }
    (loss, state)
}

/// Gradient of the mean per-token loss of one sentence, scaled by `weight`.
fn sentence_backprop(
    ckpt: &Checkpoint,
    sentence: &[usize],
    bptt_len: usize,
    weight: f64,
    grads: &mut Gradients,
) -> f64 {
    if sentence.len() < 2 {
        return 0.0;
    }
    let inputs = &sentence[..sentence.len() - 1];
    let targets = &sentence[1..];
    let per_token = weight / inputs.len() as f64;
    let mut state = LayerState::zeros(&ckpt.config);
    let mut loss = 0.0;
    let len = bptt_len.max(1);
    for start in (0..inputs.len()).step_by(len) {
        let end = (start + len).min(inputs.len());
        let (l, s) = chunk_backprop(
            ckpt,
            &inputs[start..end],
            &targets[start..end],
            state,
            per_token,
            grads,
        );
        loss += l;
        state = s;
    }
    loss / inputs.len() as f64
}

/// Mean over sentences of the per-sentence mean token cross-entropy, and its
/// gradient.
pub fn batch_gradients(
    ckpt: &Checkpoint,
    batch: &[Vec<usize>],
    bptt_len: usize,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    for s in batch {
        for &t in s {
            ckpt.check_token(t)?;
        }
    }
    let weight = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(ckpt);
    let mut loss = 0.0;
    for s in batch {
        loss += sentence_backprop(ckpt, s, bptt_len, weight, &mut grads);
    }
    Ok((loss / batch.len() as f64, grads))
}

/// Loss only (same definition as [`batch_gradients`]).
pub fn batch_loss(ckpt: &Checkpoint, batch: &[Vec<usize>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    let none = super::AblationMask::empty();
    let mut total = 0.0;
    for s in batch {
        if s.len() < 2 {
            continue;
        }
        let mut runner = super::Runner::new(ckpt, &none)?;
        let mut ll = 0.0;
        for w in s.windows(2) {
            runner.feed(w[0])?;
            ckpt.check_token(w[1])?;
            ll -= runner.log_prob(w[1]);
        }
        total += ll / (s.len() - 1) as f64;
    }
    Ok(total / batch.len() as f64)
}

/// SGD training on a private copy of `ckpt`.
pub fn train(
    ckpt: &Checkpoint,
    corpus: &Corpus,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainReport)> {
    let usable: Vec<&Vec<usize>> = corpus.sentences.iter().filter(|s| s.len() >= 2).collect();
    if usable.is_empty() {
        return Err(Error::arg("corpus has no trainable sentences"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::arg("batch_size must be >= 1"));
    }
    for s in &usable {
        for &t in s.iter() {
            ckpt.check_token(t)?;
        }
    }

    let mut model = ckpt.clone();
    let mut report = TrainReport::default();
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();

    'epochs: for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| report.steps >= m) {
                break 'epochs;
            }
            let batch: Vec<Vec<usize>> = chunk.iter().map(|&i| usable[i].clone()).collect();
            let (loss, mut grads) = batch_gradients(&model, &batch, cfg.bptt_len)?;
            if !loss.is_finite() {
                return Err(Error::DivergedTraining {
                    step: report.steps,
                    loss,
                });
            }
            let norm = grads.global_norm();
            if !norm.is_finite() {
                return Err(Error::DivergedTraining {
                    step: report.steps,
                    loss: norm,
                });
            }
            if let Some(tau) = cfg.clip {
                if norm > tau {
                    grads.scale(tau / norm);
                }
            }
            report.grad_norms.push(norm);
            report.clipped_norms.push(grads.global_norm());
            report.step_losses.push(loss);
            if cfg.lr != 0.0 {
                for (p, g) in model.blocks_mut().into_iter().zip(grads.blocks()) {
                    p.iter_mut().zip(g).for_each(|(w, d)| *w -= cfg.lr * d);
                }
            }
            report.steps += 1;
            epoch_loss += loss;
            batches += 1;
        }
        if batches > 0 {
            report.epoch_losses.push(epoch_loss / batches as f64);
        }
    }
    if report.epoch_losses.is_empty() && !report.step_losses.is_empty() {
        let n = report.step_losses.len() as f64;
        report
            .epoch_losses
            .push(report.step_losses.iter().sum::<f64>() / n);
    }

    model.metadata.steps += report.steps;
    model.metadata.epochs += report.epoch_losses.len();
    model
        .metadata
        .epoch_losses
        .extend(report.epoch_losses.iter().copied());
    Ok((model, report))
}

/// Mean of per-sentence gradients; used to check batch linearity.
#[doc(hidden)]
pub fn mean_of_sentence_gradients(
    ckpt: &Checkpoint,
    batch: &[Vec<usize>],
    bptt_len: usize,
) -> Result<Gradients> {
    let mut acc = Gradients::zeros_like(ckpt);
    for s in batch {
        let (_, g) = batch_gradients(ckpt, std::slice::from_ref(s), bptt_len)?;
        acc.add(&g);
    }
    acc.scale(1.0 / batch.len() as f64);
    Ok(acc)
}
