//! Gradient-based one-side sampling.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};

pub const DEFAULT_TOP_RATE: f64 = 0.2;
pub const DEFAULT_OTHER_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GossSample {
    /// Selected instance indices, ascending.
    pub indices: Vec<usize>,
    /// Multiplier for g and h of each selected instance (same order).
    pub weights: Vec<f64>,
}

fn ceil_count(rate: f64, n: usize) -> usize {
    let x = rate * n as f64;
    // 0.2 * 2000 must give 400, not 401, after rounding noise
    libm::ceil(x - 1e-9).max(0.0) as usize
}

/// Keep the `⌈top_rate·n⌉` largest magnitudes, plus `⌈other_rate·n⌉`
/// uniformly drawn from the rest amplified by `(1 - top_rate) / other_rate`.
pub fn goss_sample<R: Rng + ?Sized>(
    magnitudes: &[f64],
    top_rate: f64,
    other_rate: f64,
    rng: &mut R,
) -> Result<GossSample> {
    if !(top_rate > 0.0 && top_rate <= 1.0) || !(0.0..=1.0).contains(&other_rate) {
        bail!(Config, "GOSS rates out of range: top {top_rate}, other {other_rate}");
    }
    if top_rate + other_rate > 1.0 + 1e-12 {
        bail!(Config, "top_rate + other_rate must not exceed 1");
    }
    if top_rate < 1.0 && other_rate == 0.0 {
        bail!(Config, "other_rate must be positive unless top_rate is 1");
    }
    let n = magnitudes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| magnitudes[b].total_cmp(&magnitudes[a]).then(a.cmp(&b)));
    let n_top = ceil_count(top_rate, n).min(n);
    let n_other = ceil_count(other_rate, n).min(n - n_top);
    let multiplier = if other_rate > 0.0 { (1.0 - top_rate) / other_rate } else { 1.0 };

    let rest = &order[n_top..];
    let mut picked: Vec<(usize, f64)> = order[..n_top].iter().map(|&i| (i, 1.0)).collect();
    for k in rand::seq::index::sample(rng, rest.len(), n_other).into_iter() {
        picked.push((rest[k], multiplier));
    }
    picked.sort_unstable_by_key(|p| p.0);
    Ok(GossSample {
        indices: picked.iter().map(|p| p.0).collect(),
        weights: picked.iter().map(|p| p.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ten_instances_keep_three() {
        let mags: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = goss_sample(&mags, 0.2, 0.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.indices.len(), 3);
        assert!(s.indices.contains(&8) && s.indices.contains(&9));
        let amplified: Vec<f64> = s.weights.iter().copied().filter(|&w| w != 1.0).collect();
        assert_eq!(amplified, vec![8.0]);
    }

    #[test]
    fn top_rate_one_keeps_everything() {
        let mags = [0.3, 0.1, 0.2];
        let s = goss_sample(&mags, 1.0, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2]);
        assert!(s.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn deterministic_under_seed() {
        let mags: Vec<f64> = (0..200).map(|i| ((i * 7919) % 200) as f64).collect();
        let a = goss_sample(&mags, 0.2, 0.1, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = goss_sample(&mags, 0.2, 0.1, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_thirty_percent() {
        let mags: Vec<f64> = (0..2000).map(|i| (i % 37) as f64).collect();
        let s = goss_sample(&mags, 0.2, 0.1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.indices.len(), 600);
        assert_eq!(s.weights.iter().filter(|&&w| w == 1.0).count(), 400);
    }

    #[test]
    fn invalid_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(goss_sample(&[1.0], 0.0, 0.1, &mut rng).is_err());
        assert!(goss_sample(&[1.0], 0.8, 0.3, &mut rng).is_err());
        assert!(goss_sample(&[1.0], 0.2, -0.1, &mut rng).is_err());
        assert!(goss_sample(&[1.0], 0.2, 0.0, &mut rng).is_err());
    }

    #[test]
    fn amplified_sum_is_unbiased() {
        // E[Σ_sampled w·g] = Σ g over 200 seeds, within a 3σ band
        let n = 500;
        let g: Vec<f64> = (0..n).map(|i| libm::sin(i as f64 * 0.37) * (1.0 + (i % 5) as f64)).collect();
        let mags: Vec<f64> = g.iter().map(|x| x.abs()).collect();
        let truth: f64 = g.iter().sum();
        let trials = 200;
        let estimates: Vec<f64> = (0..trials)
            .map(|seed| {
                let s = goss_sample(&mags, 0.2, 0.1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                s.indices.iter().zip(&s.weights).map(|(&i, &w)| w * g[i]).sum()
            })
            .collect();
        let mean = estimates.iter().sum::<f64>() / trials as f64;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (trials - 1) as f64;
        let se = libm::sqrt(var / trials as f64);
        assert!((mean - truth).abs() <= 3.0 * se, "mean {mean} truth {truth} se {se}");
    }
}
