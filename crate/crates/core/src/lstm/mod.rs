// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two-layer LSTM language model with untied input/output embeddings.
//!
//! The cell is the standard formulation without peepholes:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//!
//! Gate blocks are stacked in the order `i, f, g, o` inside each layer's
//! `w_input` (`4H × in`), `w_hidden` (`4H × H`) and `bias` (`4H`). Layer `l`
//! receives the hidden vector of layer `l − 1` directly. Logits are
//! `output_embedding · h_top + output_bias`.
//!
//! Layers and units are indexed from zero.

pub mod gradcheck;
pub mod io;
mod model;
mod train;

pub use gradcheck::{gradient_check, GradientCheckReport};
pub use model::{
    init_model, next_word_distribution, sequence_log_prob, step, AblationMask, AblationMode,
    Checkpoint, GateRecord, LayerGates, LayerState, LstmLayer, ModelConfig, Runner,
    TrainingMetadata, UnitId, Vocab,
};
pub use train::{
    batch_gradients, batch_loss, mean_of_sentence_gradients, train, Corpus, Gradients, TrainConfig,
    TrainReport,
};

/// Sentence-boundary token used by corpora and vocabularies.
pub const BOUNDARY: &str = "<eos>";
