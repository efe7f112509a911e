//! Second-order split gain and leaf weights, scalar and multi-output.

use alloc::vec::Vec;

pub const DEFAULT_LAMBDA: f64 = 0.1;

pub fn split_gain(g_l: f64, h_l: f64, g_r: f64, h_r: f64, g: f64, h: f64, lambda: f64) -> f64 {
    0.5 * (g_l * g_l / (h_l + lambda) + g_r * g_r / (h_r + lambda) - g * g / (h + lambda))
}

pub fn leaf_weight(g_sum: f64, h_sum: f64, lambda: f64) -> f64 {
    -g_sum / (h_sum + lambda)
}

pub fn mo_leaf_weight(g: &[f64], h: &[f64], lambda: f64) -> Vec<f64> {
    g.iter().zip(h).map(|(&g, &h)| leaf_weight(g, h, lambda)).collect()
}

/// `-½ Σ_j G_j² / (H_j + λ)` of one node.
pub fn mo_score(g: &[f64], h: &[f64], lambda: f64) -> f64 {
    -0.5 * g.iter().zip(h).map(|(&g, &h)| g * g / (h + lambda)).sum::<f64>()
}

/// Score of the parent minus the scores of both children.
pub fn mo_gain(
    parent: (&[f64], &[f64]),
    left: (&[f64], &[f64]),
    right: (&[f64], &[f64]),
    lambda: f64,
) -> f64 {
    mo_score(parent.0, parent.1, lambda) - (mo_score(left.0, left.1, lambda) + mo_score(right.0, right.1, lambda))
}
