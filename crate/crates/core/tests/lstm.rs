// SPDX-License-Identifier: MIT OR Apache-2.0

use aglb::lstm::{
    batch_gradients, gradient_check, init_model, mean_of_sentence_gradients,
    next_word_distribution, train, AblationMask, Corpus, ModelConfig, TrainConfig, Vocab,
};
use aglb::numerics::seeded_rng;
use rand::Rng;

fn vocab(n: usize) -> Vocab {
    Vocab::new((0..n).map(|i| format!("w{i}")).collect()).unwrap()
}

fn random_batch(seed: u64, vocab: usize, count: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            let len = rng.random_range(3..=max_len);
            (0..len).map(|_| rng.random_range(0..vocab)).collect()
        })
        .collect()
}

#[test]
fn gradient_check_two_by_eight() {
    let ckpt = init_model(ModelConfig::new(20, 8, 8, 11), vocab(20), 11).unwrap();
    let batch = random_batch(3, 20, 3, 7);
    let report = gradient_check(&ckpt, &batch, 1e-5).unwrap();
    for b in &report.blocks {
        eprintln!("{:18} rel {:.3e} abs {:.3e}", b.block, b.max_relative_error, b.max_abs_error);
    }
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn unused_embedding_rows_have_zero_gradient() {
    let ckpt = init_model(ModelConfig::new(10, 4, 4, 1), vocab(10), 1).unwrap();
    // token 9 never appears as an input
    let batch = vec![vec![0, 1, 2, 9], vec![3, 4, 5]];
    let (_, grads) = batch_gradients(&ckpt, &batch, 35).unwrap();
    assert!(grads.input_embedding.row(9).iter().all(|&g| g == 0.0));
    assert!(grads.input_embedding.row(0).iter().any(|&g| g != 0.0));
}

#[test]
fn doubled_batch_gradient_is_mean_of_sentence_gradients() {
    let ckpt = init_model(ModelConfig::new(12, 5, 6, 2), vocab(12), 2).unwrap();
    let batch = random_batch(9, 12, 4, 8);
    let mut doubled = batch.clone();
    doubled.extend(batch.iter().cloned());
    let (_, g_batch) = batch_gradients(&ckpt, &batch, 35).unwrap();
    let (_, g_double) = batch_gradients(&ckpt, &doubled, 35).unwrap();
    let g_mean = mean_of_sentence_gradients(&ckpt, &doubled, 35).unwrap();
    for ((a, b), c) in g_batch.blocks().iter().zip(g_double.blocks()).zip(g_mean.blocks()) {
        for ((x, y), z) in a.iter().zip(b.iter()).zip(c.iter()) {
            assert!((x - y).abs() < 1e-10);
            assert!((y - z).abs() < 1e-10);
        }
    }
}

#[test]
fn memorizes_one_sentence() {
    let v = vocab(8);
    let ckpt = init_model(ModelConfig::new(8, 16, 16, 5), v, 5).unwrap();
    let sentence = vec![1, 4, 2, 6, 3, 5, 0];
    let corpus = Corpus { sentences: vec![sentence.clone()] };
    let cfg = TrainConfig {
        lr: 1.0,
        clip: Some(5.0),
        epochs: 500,
        batch_size: 1,
        bptt_len: 35,
        seed: 0,
        max_steps: None,
    };
    let (trained, report) = train(&ckpt, &corpus, &cfg).unwrap();
    let last = *report.step_losses.last().unwrap();
    eprintln!("final loss {last}");
    for t in 1..sentence.len() {
        let p = next_word_distribution(&trained, &sentence[..t], &AblationMask::empty()).unwrap();
        let argmax = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(argmax, sentence[t]);
    }
    assert!(last < 0.05, "loss {last}");
}
