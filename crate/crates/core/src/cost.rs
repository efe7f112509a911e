//! Closed-form cipher cost of building one tree, baseline vs optimized.
//! Units are abstract operation counts.

use serde::{Deserialize, Serialize};

use crate::encoding::{compress_capacity, PackState};
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Instances.
    pub n_i: u64,
    /// Features.
    pub n_f: u64,
    /// Bins per feature.
    pub n_b: u64,
    /// Tree depth; the tree has `2^h` nodes in the cost formulas.
    pub h: u32,
    /// Split-infos per compressed ciphertext.
    pub eta_s: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    /// Homomorphic additions.
    pub comp: f64,
    /// Encryptions plus decryptions.
    pub ende: f64,
    /// Ciphertexts transferred.
    pub comm: f64,
}

impl CostParams {
    /// Parameters with `η_s` derived from the bit budget of gradients in
    /// `[-1, 1]` and hessians in `[0, 1]` at the given key size.
    pub fn for_key(n_i: u64, n_f: u64, n_b: u64, h: u32, key_bits: u64, precision: u32) -> Result<Self> {
        let state = PackState::from_bounds(n_i, -1.0, 1.0, 1.0, precision, key_bits - 1)?;
        let eta_s = compress_capacity(key_bits - 1, state.gh_bits)? as u64;
        Ok(Self { n_i, n_f, n_b, h, eta_s })
    }

    pub fn n_nodes(&self) -> f64 {
        libm::pow(2.0, self.h as f64)
    }

    fn check(&self) -> Result<()> {
        if self.eta_s == 0 || self.h > 62 {
            bail!(Config, "cost parameters need eta_s >= 1 and a depth below 63");
        }
        Ok(())
    }
}

pub fn estimate_baseline(p: &CostParams) -> Result<CostEstimate> {
    p.check()?;
    let (n_i, n_f, n_b, h, n_n) = (p.n_i as f64, p.n_f as f64, p.n_b as f64, p.h as f64, p.n_nodes());
    let transfer = 2.0 * n_i + 2.0 * n_b * n_f * n_n;
    Ok(CostEstimate {
        comp: 2.0 * n_i * h * n_f + 2.0 * n_n * n_f * n_b,
        ende: transfer,
        comm: transfer,
    })
}

pub fn estimate_optimized(p: &CostParams) -> Result<CostEstimate> {
    p.check()?;
    let (n_i, n_f, n_b, h, n_n) = (p.n_i as f64, p.n_f as f64, p.n_b as f64, p.h as f64, p.n_nodes());
    let transfer = n_i + n_b * n_f * n_n / p.eta_s as f64;
    Ok(CostEstimate {
        comp: 0.5 * n_i * h * n_f + n_n * n_f * n_b,
        ende: transfer,
        comm: transfer,
    })
}

/// Fractional reduction `1 - optimized / baseline` per component.
pub fn reduction(baseline: &CostEstimate, optimized: &CostEstimate) -> CostEstimate {
    CostEstimate {
        comp: 1.0 - optimized.comp / baseline.comp,
        ende: 1.0 - optimized.ende / baseline.ende,
        comm: 1.0 - optimized.comm / baseline.comm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn large() -> CostParams {
        CostParams { n_i: 1_000_000, n_f: 2000, n_b: 32, h: 5, eta_s: 6 }
    }

    #[test]
    fn baseline_arithmetic() {
        // 2·1e6·5·2000 + 2·32·2000·32
        assert_eq!(estimate_baseline(&large()).unwrap().comp, 2.0004096e10);
        let unit = CostParams { n_i: 1, n_f: 1, n_b: 1, h: 0, eta_s: 1 };
        let b = estimate_baseline(&unit).unwrap();
        assert_eq!((b.comp, b.ende, b.comm), (2.0, 4.0, 4.0));
    }

    #[test]
    fn comp_is_linear_in_features() {
        let a = estimate_baseline(&large()).unwrap();
        let b = estimate_baseline(&CostParams { n_f: 4000, ..large() }).unwrap();
        assert_eq!(b.comp, 2.0 * a.comp);
    }

    #[test]
    fn reductions_for_large_setting() {
        let p = large();
        let r = reduction(&estimate_baseline(&p).unwrap(), &estimate_optimized(&p).unwrap());
        assert!((r.comp - 0.75).abs() < 0.001, "{}", r.comp);
        assert!((r.ende - 0.78).abs() < 0.005, "{}", r.ende);
        assert_eq!(r.ende, r.comm);
    }

    #[test]
    fn derived_capacity_matches_bit_budget() {
        assert_eq!(CostParams::for_key(1_000_000, 2000, 32, 5, 1024, 53).unwrap().eta_s, 6);
    }

    #[test]
    fn no_compression_transfer() {
        let p = CostParams { eta_s: 1, ..large() };
        let o = estimate_optimized(&p).unwrap();
        assert_eq!(o.ende, 1e6 + 32.0 * 2000.0 * 32.0);
    }

    #[test]
    fn optimized_never_exceeds_baseline() {
        for n_i in [1u64, 10, 1000] {
            for h in 0..6 {
                for eta_s in 1..8 {
                    let p = CostParams { n_i, n_f: 3, n_b: 4, h, eta_s };
                    let (b, o) = (estimate_baseline(&p).unwrap(), estimate_optimized(&p).unwrap());
                    assert!(o.comp <= b.comp && o.ende <= b.ende && o.comm <= b.comm);
                }
            }
        }
    }
}
