// SPDX-License-Identifier: MIT OR Apache-2.0

//! Central finite-difference verification of the BPTT gradients.

use serde::{Deserialize, Serialize};

use super::model::Checkpoint;
use super::train::{batch_gradients, batch_loss};
use crate::error::Result;

/// Denominator floor for the relative error; below it the comparison is
/// effectively absolute.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub parameters: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    /// Parameters whose analytic gradient is exactly zero.
    pub exact_zeros: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub epsilon: f64,
    pub blocks: Vec<BlockCheck>,
    pub max_relative_error: f64,
}

/// `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares every analytic gradient entry with `(f(θ+ε) − f(θ−ε)) / 2ε`.
pub fn gradient_check(
    ckpt: &Checkpoint,
    batch: &[Vec<usize>],
    epsilon: f64,
) -> Result<GradientCheckReport> {
    let bptt = usize::MAX;
    let (_, grads) = batch_gradients(ckpt, batch, bptt)?;
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();
    let names = ckpt.block_names();

    let mut probe = ckpt.clone();
    let mut blocks = Vec::with_capacity(names.len());
    for (bi, name) in names.iter().enumerate() {
        let n = analytic[bi].len();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut zeros = 0;
        for pi in 0..n {
            let orig = probe.blocks()[bi][pi];
            probe.blocks_mut()[bi][pi] = orig + epsilon;
            let up = batch_loss(&probe, batch)?;
            probe.blocks_mut()[bi][pi] = orig - epsilon;
            let down = batch_loss(&probe, batch)?;
            probe.blocks_mut()[bi][pi] = orig;

            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[bi][pi];
            if a == 0.0 {
                zeros += 1;
            }
            max_abs = max_abs.max((a - numeric).abs());
            max_rel = max_rel.max(relative_error(a, numeric));
        }
        blocks.push(BlockCheck {
            block: name.clone(),
            parameters: n,
            max_relative_error: max_rel,
            max_abs_error: max_abs,
            exact_zeros: zeros,
        });
    }
    let max_relative_error = blocks
        .iter()
        .map(|b| b.max_relative_error)
        .fold(0.0, f64::max);
    Ok(GradientCheckReport {
        epsilon,
        blocks,
        max_relative_error,
    })
}
