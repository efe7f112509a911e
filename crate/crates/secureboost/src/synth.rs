//! Seeded synthetic datasets for demos and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use secureboost_core::data::{FeatureMatrix, PartyDataset};

use crate::error::Result;

fn features(rng: &mut ChaCha20Rng, n: usize, d: usize, sparsity: f64) -> Vec<f64> {
    (0..n * d)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            if rng.gen_bool(sparsity) {
                0.0
            } else {
                v
            }
        })
        .collect()
}

fn assemble(n: usize, d: usize, values: Vec<f64>, labels: Vec<f64>) -> Result<PartyDataset> {
    Ok(PartyDataset::new(
        (0..n).map(|i| format!("u{i:06}")).collect(),
        FeatureMatrix::new(n, d, values)?,
        Some(labels),
        (0..d).map(|j| format!("x{j}")).collect(),
    )?)
}

/// Binary labels from a logistic model whose signal is spread over the
/// first and second half of the columns alike, with interactions and
/// `sparsity` of the values set to exactly zero.
pub fn binary(n: usize, d: usize, sparsity: f64, seed: u64) -> Result<PartyDataset> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = features(&mut rng, n, d, sparsity);
    let half = d / 2;
    let labels = (0..n)
        .map(|i| {
            let row = &x[i * d..(i + 1) * d];
            let mut z = 0.0;
            for j in 0..d.min(4) {
                z += [1.2, -0.8, 0.6, 0.4][j] * row[j];
            }
            for j in 0..(d - half).min(4) {
                z += [1.0, 0.9, -0.7, 0.5][j] * row[half + j];
            }
            if half > 0 && d > 1 {
                z += 0.8 * (row[0] * row[half]).clamp(-2.0, 2.0);
            }
            let p = 1.0 / (1.0 + (-z).exp());
            if rng.gen_bool(p) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    assemble(n, d, x, labels)
}

/// `classes` Gaussian clusters with random centres, noisy enough that the
/// classes overlap.
pub fn multiclass(n: usize, d: usize, classes: usize, seed: u64) -> Result<PartyDataset> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let informative = (d / 2 * 2).min(8);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..informative).map(|_| rng.gen_range(-1.5..1.5)).collect())
        .collect();
    // informative column j sits in the first half for even j, the second
    // for odd j, so each party holds half of the signal
    let mut centre_of = vec![None; d];
    for j in 0..informative {
        centre_of[if j % 2 == 0 { j / 2 } else { d / 2 + j / 2 }] = Some(j);
    }
    let mut x = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.gen_range(0..classes);
        for slot in &centre_of {
            let noise: f64 = StandardNormal.sample(&mut rng);
            x.push(slot.map_or(0.0, |j| centres[c][j]) + noise);
        }
        labels.push(c as f64);
    }
    assemble(n, d, x, labels)
}
