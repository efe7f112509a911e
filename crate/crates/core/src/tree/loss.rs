use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GradHess {
    pub g: f64,
    pub h: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Derivatives of the logistic loss with respect to the raw margin.
pub fn logloss_grad_hess(y: &[f64], score: &[f64]) -> Vec<GradHess> {
    y.iter()
        .zip(score)
        .map(|(&y, &s)| {
            let p = sigmoid(s);
            GradHess { g: p - y, h: p * (1.0 - p) }
        })
        .collect()
}

/// Mean logistic loss.
pub fn logloss(y: &[f64], score: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(score)
        .map(|(&y, &s)| {
            // log(1 + e^s) - y·s, stable for large |s|
            let softplus = if s > 0.0 { s + libm::log1p(libm::exp(-s)) } else { libm::log1p(libm::exp(s)) };
            softplus - y * s
        })
        .sum();
    total / y.len().max(1) as f64
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&s| libm::exp(s - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy derivatives for row-major `n × k` scores. The
/// hessian is the diagonal `p(1 - p)`. Returns row-major `(G, H)`.
pub fn softmax_grad_hess(labels: &[usize], scores: &[f64], classes: usize) -> (Vec<f64>, Vec<f64>) {
    let mut g = Vec::with_capacity(scores.len());
    let mut h = Vec::with_capacity(scores.len());
    for (row, &y) in scores.chunks(classes).zip(labels) {
        for (c, p) in softmax(row).into_iter().enumerate() {
            g.push(p - if c == y { 1.0 } else { 0.0 });
            h.push(p * (1.0 - p));
        }
    }
    (g, h)
}

/// Mean cross-entropy.
pub fn cross_entropy(labels: &[usize], scores: &[f64], classes: usize) -> f64 {
    let total: f64 = scores
        .chunks(classes)
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|&s| libm::exp(s - max)).sum::<f64>());
            lse - row[y]
        })
        .sum();
    total / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_examples() {
        let gh = logloss_grad_hess(&[1.0, 0.0, 1.0], &[0.0, 0.0, 20.0]);
        assert_eq!(gh[0], GradHess { g: -0.5, h: 0.25 });
        assert_eq!(gh[1], GradHess { g: 0.5, h: 0.25 });
        assert!(gh[2].g.abs() < 1e-8 && gh[2].h < 1e-8);
    }

    #[test]
    fn softmax_examples() {
        let (g, h) = softmax_grad_hess(&[0], &[0.0, 0.0], 2);
        assert_eq!(g, vec![-0.5, 0.5]);
        assert_eq!(h, vec![0.25, 0.25]);
        let (g, _) = softmax_grad_hess(&[1], &[0.0, 0.0, 0.0], 3);
        for (a, b) in g.iter().zip([1.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eps = 1e-4;
        for _ in 0..50 {
            let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let s: f64 = rng.gen_range(-4.0..4.0);
            let f = |s: f64| logloss(&[y], &[s]);
            let d1 = (f(s + eps) - f(s - eps)) / (2.0 * eps);
            let d2 = (f(s + eps) - 2.0 * f(s) + f(s - eps)) / (eps * eps);
            let gh = logloss_grad_hess(&[y], &[s])[0];
            assert!((gh.g - d1).abs() <= 1e-6 * gh.g.abs().max(1e-2), "{} vs {d1}", gh.g);
            assert!((gh.h - d2).abs() <= 1e-4 * gh.h.max(1e-2), "{} vs {d2}", gh.h);
        }
    }

    #[test]
    fn softmax_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 4;
        let eps = 1e-4;
        for _ in 0..30 {
            let y = rng.gen_range(0..k);
            let s: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (g, h) = softmax_grad_hess(&[y], &s, k);
            for c in 0..k {
                let at = |d: f64| {
                    let mut t = s.clone();
                    t[c] += d;
                    cross_entropy(&[y], &t, k)
                };
                let d1 = (at(eps) - at(-eps)) / (2.0 * eps);
                let d2 = (at(eps) - 2.0 * at(0.0) + at(-eps)) / (eps * eps);
                assert!((g[c] - d1).abs() <= 1e-6 * g[c].abs().max(1e-2));
                assert!((h[c] - d2).abs() <= 1e-4 * h[c].max(1e-2));
            }
        }
    }

    #[test]
    fn gradient_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f64> = (0..300).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let y: Vec<f64> = (0..300).map(|i| (i % 2) as f64).collect();
        for gh in logloss_grad_hess(&y, &s) {
            assert!((-1.0..=1.0).contains(&gh.g) && (0.0..=0.25).contains(&gh.h));
        }
    }
}
