//! Independent reference implementations used by the integration tests.
//! Everything here is written from the definitions, without calling into
//! the library's loss code.

#![allow(dead_code, clippy::field_reassign_with_default)]

use std::collections::HashSet;

use adasid::data::{gen_synthetic, SynthConfig, SyntheticData};
use adasid::trainer::TrainConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    // Box-Muller keeps the oracle free of distribution crates
                    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.random();
                    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                })
                .collect()
        })
        .collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa.sqrt() * bb.sqrt())
}

/// Parameters of the collision term, spelled out for the oracle.
#[derive(Debug, Clone)]
pub struct CollisionParams {
    pub eta: Vec<f64>,
    pub f_max: f64,
    pub d_max: u32,
    pub alpha: f64,
    pub m_base: f64,
    pub exclude_positives: bool,
    pub relaxation: bool,
    pub load_scaling: bool,
}

/// Brute-force adaptive collision loss: enumerate all pairs, count
/// signature loads by pairwise comparison, and sum the gated, scaled hinge.
/// `force_open` treats every gate as closed (g = 0).
pub fn collision_oracle(
    z: &[Vec<f64>],
    codes: &[Vec<usize>],
    positives: &HashSet<(usize, usize)>,
    p: &CollisionParams,
    force_open: bool,
) -> f64 {
    let layers = p.eta.len();
    let mut pairs: Vec<(usize, usize, Vec<bool>)> = Vec::new();
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            if p.exclude_positives && (positives.contains(&(i, j)) || positives.contains(&(j, i))) {
                continue;
            }
            let sig: Vec<bool> = (0..layers).map(|l| codes[i][l] == codes[j][l]).collect();
            if sig.iter().any(|&s| s) {
                pairs.push((i, j, sig));
            }
        }
    }
    let mut total = 0.0;
    for (i, j, sig) in &pairs {
        let depth = sig.iter().filter(|&&s| s).count();
        let load = pairs.iter().filter(|(_, _, other)| other == sig).count();
        let c = cos(&z[*i], &z[*j]);
        let gate = !force_open && p.relaxation && c >= p.eta[depth - 1];
        let scale = if p.load_scaling {
            let d_max = f64::from(p.d_max);
            1.0 + (p.f_max - 1.0) * ((load as f64).min(d_max) / d_max).powf(p.alpha)
        } else {
            1.0
        };
        let margin = p.m_base * depth as f64 / layers as f64;
        let hinge = (margin - (1.0 - c)).max(0.0);
        if !gate {
            total += scale * hinge;
        }
    }
    total
}

/// Symmetric InfoNCE over cosine logits, computed directly from the
/// softmax definition.
pub fn infonce_oracle(tr: &[Vec<f64>], ta: &[Vec<f64>], temperature: f64) -> f64 {
    let b = tr.len();
    let logit = |i: usize, j: usize| cos(&tr[i], &ta[j]) / temperature;
    let mut forward = 0.0;
    let mut backward = 0.0;
    for i in 0..b {
        let denom: f64 = (0..b).map(|j| logit(i, j).exp()).sum();
        forward += -(logit(i, i).exp() / denom).ln();
        let denom: f64 = (0..b).map(|j| logit(j, i).exp()).sum();
        backward += -(logit(i, i).exp() / denom).ln();
    }
    0.5 * (forward / b as f64 + backward / b as f64)
}

/// Synthetic setting shared by the end-to-end checks: 2000 items in 20
/// clusters, 32-dimensional features, d = 16, three layers of 16 codes.
pub fn e2e_data(seed: u64) -> SyntheticData {
    gen_synthetic(&SynthConfig {
        n_items: 2000,
        n_clusters: 20,
        dim: 32,
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic data")
}

/// Full-model configuration for the end-to-end checks. Thresholds are
/// placed between the within-cluster and cross-cluster latent cosines of
/// this synthetic setting (see README, "Calibrating the thresholds").
pub fn e2e_config(seed: u64, steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.batch_size = 64;
    cfg.total_steps = steps;
    cfg.tokenizer.d_in = 32;
    cfg.tokenizer.d = 16;
    cfg.tokenizer.layers = 3;
    cfg.tokenizer.codebook_size = 16;
    cfg.schedule.t_start = steps / 20;
    cfg.schedule.t_end = steps * 9 / 10;
    cfg.regulation.m_base = 1.0;
    cfg.regulation.eta = vec![0.7, 0.8, 0.9];
    cfg
}
