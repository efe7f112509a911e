//! Plaintext-space engineering: fixed-point encoding, g/h packing,
//! cipher compressing and multi-class packing.
//!
//! Gradients are offset in the fixed-point integer domain: an instance's
//! g field is `⌊g·2^r⌋ + ⌈g_off·2^r⌉`, so the offset removed at unpack time
//! is an exact integer multiple of the sample count and the only error in a
//! recovered sum is the per-instance flooring, at most `count · 2^-r`.

mod compress;
mod multiclass;

pub use compress::{
    compress_split_infos, decompress_fields, decompress_package, RecoveredSplit, SplitInfoPackage,
    SplitMeta,
};
pub use multiclass::{
    pack_gh_multiclass, recover_mo_fields, recover_mo_splitinfo, MultiClassLayout,
};

use alloc::vec::Vec;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

pub const DEFAULT_PRECISION: u32 = 53;
pub const MIN_PRECISION: u32 = 1;
pub const MAX_PRECISION: u32 = 60;

/// Finite `x` as `sign · mantissa · 2^exponent`.
fn decompose(x: f64) -> (bool, u64, i32) {
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 {
        (negative, frac, -1074)
    } else {
        (negative, frac | (1u64 << 52), exp_bits - 1075)
    }
}

/// Exact `⌊factor · x · 2^r⌋` for finite `x`.
fn floor_scaled(x: f64, factor: u64, r: u32) -> BigInt {
    let (negative, mantissa, exponent) = decompose(x);
    let magnitude = BigUint::from(mantissa) * factor;
    let shift = exponent + r as i32;
    let (mut value, inexact) = if shift >= 0 {
        (magnitude << shift as u32, false)
    } else {
        let s = (-shift) as u64;
        let q = &magnitude >> s;
        let inexact = (&q << s) != magnitude;
        (q, inexact)
    };
    if negative {
        if inexact {
            value += 1u32;
        }
        BigInt::from_biguint(Sign::Minus, value)
    } else {
        BigInt::from(value)
    }
}

fn ceil_scaled(x: f64, r: u32) -> BigInt {
    -floor_scaled(-x, 1, r)
}

fn to_biguint(x: BigInt) -> Option<BigUint> {
    x.to_biguint()
}

/// Signed integer scaled by `2^-r`, rounded once to the nearest double.
pub(crate) fn scaled_to_f64(x: &BigInt, r: u32) -> f64 {
    libm::ldexp(x.to_f64().unwrap_or(f64::NAN), -(r as i32))
}

/// `⌊x · 2^r⌋` for a non-negative finite `x`.
pub fn fixpoint_encode(x: f64, r: u32) -> Result<BigUint> {
    if !x.is_finite() || x < 0.0 {
        bail!(Contract, "fixed-point input must be finite and non-negative, got {x}");
    }
    Ok(to_biguint(floor_scaled(x, 1, r)).expect("non-negative"))
}

pub fn fixpoint_decode(v: &BigUint, r: u32) -> f64 {
    scaled_to_f64(&BigInt::from(v.clone()), r)
}

fn check_precision(r: u32) -> Result<()> {
    if !(MIN_PRECISION..=MAX_PRECISION).contains(&r) {
        bail!(Config, "precision r must be within {MIN_PRECISION}..={MAX_PRECISION}, got {r}");
    }
    Ok(())
}

/// Bit assignment for one epoch's packed gradients and hessians.
///
/// `g_max` is the largest raw gradient (before the offset), so the bound on
/// any bin sum of g fields is `n · (g_max + g_off) · 2^r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackState {
    pub precision: u32,
    pub g_offset: f64,
    pub g_max: f64,
    pub h_max: f64,
    pub g_bits: u64,
    pub h_bits: u64,
    pub gh_bits: u64,
    pub n_instances: u64,
}

impl PackState {
    /// Derive the state from gradient and hessian vectors (any shape; for
    /// multi-class data pass the flattened matrices and the row count).
    pub fn compute(g: &[f64], h: &[f64], n_instances: u64, r: u32, iota: u64) -> Result<Self> {
        if g.is_empty() || g.len() != h.len() {
            bail!(Contract, "g and h must be non-empty and of equal length ({} vs {})", g.len(), h.len());
        }
        if g.iter().chain(h).any(|v| !v.is_finite()) {
            bail!(Contract, "non-finite gradient or hessian");
        }
        if h.iter().any(|&v| v < 0.0) {
            bail!(Contract, "hessians must be non-negative");
        }
        let g_min = g.iter().copied().fold(f64::INFINITY, f64::min);
        let g_max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let h_max = h.iter().copied().fold(0.0, f64::max);
        Self::from_bounds(n_instances, g_min, g_max, h_max, r, iota)
    }

    pub fn from_bounds(
        n_instances: u64,
        g_min: f64,
        g_max: f64,
        h_max: f64,
        r: u32,
        iota: u64,
    ) -> Result<Self> {
        check_precision(r)?;
        if n_instances == 0 {
            bail!(Contract, "pack state needs at least one instance");
        }
        if !(g_min.is_finite() && g_max.is_finite() && h_max.is_finite()) || h_max < 0.0 || g_min > g_max {
            bail!(Contract, "invalid gradient bounds [{g_min}, {g_max}], h_max {h_max}");
        }
        let g_offset = if g_min < 0.0 { -g_min } else { 0.0 };
        let g_field_max = floor_scaled(g_max, 1, r) + ceil_scaled(g_offset, r);
        let g_sum_max = g_field_max * BigInt::from(n_instances);
        let h_sum_max = floor_scaled(h_max, n_instances, r);
        let g_bits = g_sum_max.bits().max(1);
        let h_bits = h_sum_max.bits().max(1);
        let gh_bits = g_bits + h_bits;
        if gh_bits > iota {
            return Err(Error::KeyTooShort {
                required_bits: gh_bits,
                available_bits: iota,
                minimal_key_bits: minimal_key_bits(gh_bits),
            });
        }
        Ok(Self {
            precision: r,
            g_offset,
            g_max,
            h_max,
            g_bits,
            h_bits,
            gh_bits,
            n_instances,
        })
    }

    fn offset_field(&self) -> BigInt {
        ceil_scaled(self.g_offset, self.precision)
    }

    fn g_field_max(&self) -> BigInt {
        floor_scaled(self.g_max, 1, self.precision) + self.offset_field()
    }

    /// Offset fixed-point g field of one instance.
    pub fn encode_g(&self, g: f64) -> Result<BigUint> {
        if !g.is_finite() || g > self.g_max {
            bail!(Contract, "gradient {g} outside the packed range (max {})", self.g_max);
        }
        let field = floor_scaled(g, 1, self.precision) + self.offset_field();
        debug_assert!(field <= self.g_field_max());
        to_biguint(field).ok_or_else(|| {
            Error::Contract(alloc::format!("gradient {g} below offset -{}", self.g_offset))
        })
    }

    pub fn encode_h(&self, h: f64) -> Result<BigUint> {
        if !h.is_finite() || h < 0.0 || h > self.h_max {
            bail!(Contract, "hessian {h} outside [0, {}]", self.h_max);
        }
        Ok(to_biguint(floor_scaled(h, 1, self.precision)).expect("non-negative"))
    }

    /// Turn summed g and h fields back into floats, removing
    /// `count · offset` from g.
    pub fn decode_fields(&self, g_field: &BigUint, h_field: &BigUint, count: u64) -> (f64, f64) {
        let g = BigInt::from(g_field.clone()) - self.offset_field() * BigInt::from(count);
        (
            scaled_to_f64(&g, self.precision),
            fixpoint_decode(h_field, self.precision),
        )
    }

    /// The packed integer of a single (g, h) pair.
    pub fn pack(&self, g: f64, h: f64) -> Result<PackedGh> {
        let g_field = self.encode_g(g)?;
        let h_field = self.encode_h(h)?;
        Ok(PackedGh((g_field << self.h_bits) + h_field))
    }

    pub fn h_mask(&self) -> BigUint {
        (BigUint::one() << self.h_bits) - 1u32
    }

    /// Split a packed value into (g field, h field).
    pub fn split_fields(&self, value: &BigUint) -> Result<(BigUint, BigUint)> {
        if value.bits() > self.gh_bits {
            bail!(
                Corruption,
                "packed value has {} bits, more than b_gh = {}",
                value.bits(),
                self.gh_bits
            );
        }
        Ok((value >> self.h_bits, value & self.h_mask()))
    }
}

/// Smallest even key size (≥ 256) whose plaintext space holds `bits` bits.
pub fn minimal_key_bits(bits: u64) -> u64 {
    let k = bits + 1;
    (k + (k & 1)).max(crate::paillier::MIN_KEY_BITS)
}

/// Packed `(g_field << b_h) + h_field` of one instance or one aggregate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PackedGh(pub BigUint);

impl PackedGh {
    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl core::ops::Add for &PackedGh {
    type Output = PackedGh;
    fn add(self, rhs: Self) -> PackedGh {
        PackedGh(&self.0 + &rhs.0)
    }
}

impl core::iter::Sum for PackedGh {
    fn sum<I: Iterator<Item = PackedGh>>(iter: I) -> Self {
        PackedGh(iter.fold(BigUint::zero(), |acc, x| acc + x.0))
    }
}

pub fn compute_pack_state(g: &[f64], h: &[f64], r: u32, iota: u64) -> Result<PackState> {
    PackState::compute(g, h, g.len() as u64, r, iota)
}

pub fn pack_gh(g: &[f64], h: &[f64], state: &PackState) -> Result<Vec<PackedGh>> {
    if g.len() != h.len() {
        bail!(Contract, "g and h length mismatch");
    }
    g.iter().zip(h).map(|(&g, &h)| state.pack(g, h)).collect()
}

/// Recover `(Σg, Σh)` from a packed sum over `sample_count` instances.
pub fn unpack_gh(value: &BigUint, state: &PackState, sample_count: u64) -> Result<(f64, f64)> {
    let (g_field, h_field) = state.split_fields(value)?;
    Ok(state.decode_fields(&g_field, &h_field, sample_count))
}

/// How many packed aggregates fit in one plaintext, `⌊ι / b_gh⌋`.
pub fn compress_capacity(iota: u64, gh_bits: u64) -> Result<usize> {
    if gh_bits == 0 || gh_bits > iota {
        return Err(Error::KeyTooShort {
            required_bits: gh_bits,
            available_bits: iota,
            minimal_key_bits: minimal_key_bits(gh_bits),
        });
    }
    Ok((iota / gh_bits) as usize)
}

/// How an instance's gradient statistics map onto plaintext integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CipherLayout {
    /// One packed integer per instance.
    Packed,
    /// g and h as two separate integers (no packing).
    Separate,
    /// Class-wise packed pairs, several classes per integer.
    MultiClass(MultiClassLayout),
}

impl CipherLayout {
    /// Number of plaintext integers (and ciphertexts) per instance.
    pub fn width(&self) -> usize {
        match self {
            CipherLayout::Packed => 1,
            CipherLayout::Separate => 2,
            CipherLayout::MultiClass(m) => m.ciphers,
        }
    }

    /// Number of gradient outputs.
    pub fn outputs(&self) -> usize {
        match self {
            CipherLayout::MultiClass(m) => m.classes,
            _ => 1,
        }
    }

    /// Encode one instance given its per-output g and h.
    pub fn encode(&self, g: &[f64], h: &[f64], state: &PackState) -> Result<Vec<BigUint>> {
        if g.len() != self.outputs() || h.len() != self.outputs() {
            bail!(Contract, "expected {} outputs per instance", self.outputs());
        }
        match self {
            CipherLayout::Packed => Ok(alloc::vec![state.pack(g[0], h[0])?.0]),
            CipherLayout::Separate => Ok(alloc::vec![state.encode_g(g[0])?, state.encode_h(h[0])?]),
            CipherLayout::MultiClass(m) => m.pack_row(g, h, state),
        }
    }

    /// Decode the decrypted aggregate of `count` instances.
    pub fn decode(
        &self,
        plains: &[BigUint],
        state: &PackState,
        count: u64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if plains.len() != self.width() {
            bail!(Corruption, "expected {} integers, got {}", self.width(), plains.len());
        }
        match self {
            CipherLayout::Packed => {
                let (g, h) = unpack_gh(&plains[0], state, count)?;
                Ok((alloc::vec![g], alloc::vec![h]))
            }
            CipherLayout::Separate => {
                for (p, bits) in plains.iter().zip([state.g_bits, state.h_bits]) {
                    if p.bits() > bits {
                        bail!(Corruption, "field exceeds {bits} bits");
                    }
                }
                let (g, h) = state.decode_fields(&plains[0], &plains[1], count);
                Ok((alloc::vec![g], alloc::vec![h]))
            }
            CipherLayout::MultiClass(m) => recover_mo_splitinfo(plains, m, state, count),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn fixpoint_examples() {
        assert_eq!(fixpoint_encode(0.5, 53).unwrap(), BigUint::one() << 52u32);
        assert_eq!(fixpoint_encode(0.0, 17).unwrap(), BigUint::zero());
        // 0.3 = m · 2^-54 exactly with m = 5404319552844595 (53-bit mantissa)
        let m = BigUint::from(5404319552844595u64);
        assert_eq!(fixpoint_encode(0.3, 53).unwrap(), m >> 1u32);
        assert!(matches!(fixpoint_encode(-0.1, 53), Err(Error::Contract(_))));
        assert!(matches!(fixpoint_encode(f64::NAN, 53), Err(Error::Contract(_))));
    }

    #[test]
    fn fixpoint_roundtrip_error_below_resolution() {
        for &x in &[0.1, 0.3, 1.0 / 3.0, 7.25, 123.456] {
            for r in [10u32, 30, 53] {
                let back = fixpoint_decode(&fixpoint_encode(x, r).unwrap(), r);
                assert!((x - back).abs() < libm::ldexp(1.0, -(r as i32)), "{x} r={r}");
            }
        }
    }

    #[test]
    fn million_instance_bit_budget() {
        let s = PackState::from_bounds(1_000_000, -1.0, 1.0, 1.0, 53, 1023).unwrap();
        assert_eq!((s.g_bits, s.h_bits, s.gh_bits), (74, 73, 147));
        assert_eq!(s.g_offset, 1.0);
        assert_eq!(compress_capacity(1023, s.gh_bits).unwrap(), 6);
    }

    #[test]
    fn degenerate_zero_vectors_get_one_bit_fields() {
        let s = compute_pack_state(&[0.0], &[0.0], 53, 1023).unwrap();
        assert_eq!(s.g_offset, 0.0);
        assert_eq!((s.g_bits, s.h_bits), (1, 1));
        let packed = pack_gh(&[0.0], &[0.0], &s).unwrap();
        assert_eq!(unpack_gh(&packed[0].0, &s, 1).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn thousand_instances_at_r10_matches_bit_length_oracle() {
        // oracle: bit lengths of plain u128 products
        let n = 1000u128;
        let g_bound = n * 2 * (1u128 << 10);
        let h_bound = n * (1u128 << 10);
        let bits = |x: u128| 128 - x.leading_zeros() as u64;
        let g: Vec<f64> = (0..1000).map(|i| -1.0 + 2.0 * (i as f64) / 999.0).collect();
        let h: Vec<f64> = (0..1000).map(|i| (i as f64) / 999.0).collect();
        let s = compute_pack_state(&g, &h, 10, 1023).unwrap();
        assert_eq!(s.g_bits, bits(g_bound));
        assert_eq!(s.h_bits, bits(h_bound));
    }

    #[test]
    fn too_many_instances_reports_minimal_key() {
        let err = PackState::from_bounds(1_000_000, -1.0, 1.0, 1.0, 53, 127).unwrap_err();
        match err {
            Error::KeyTooShort { required_bits, minimal_key_bits, .. } => {
                assert_eq!(required_bits, 147);
                assert_eq!(minimal_key_bits, 256);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert_eq!(minimal_key_bits(1023), 1024);
        assert_eq!(minimal_key_bits(1100), 1102);
    }

    #[test]
    fn coarse_roundtrip() {
        let s = PackState::from_bounds(4, -1.0, 1.0, 1.0, 4, 1023).unwrap();
        let p = s.pack(0.25, 0.5).unwrap();
        let (g, h) = unpack_gh(&p.0, &s, 1).unwrap();
        assert!((g - 0.25).abs() <= 0.125 && (h - 0.5).abs() <= 0.125);
        assert_eq!(unpack_gh(&BigUint::zero(), &s, 0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn three_instance_sum() {
        let g = [0.3, -0.7, 0.11];
        let h = [0.21, 0.09, 0.25];
        let r = 20;
        let s = compute_pack_state(&g, &h, r, 511).unwrap();
        let total: PackedGh = pack_gh(&g, &h, &s).unwrap().into_iter().sum();
        let (gs, hs) = unpack_gh(&total.0, &s, 3).unwrap();
        let tol = 3.0 * libm::ldexp(1.0, -(r as i32));
        assert!((gs - g.iter().sum::<f64>()).abs() <= tol);
        assert!((hs - h.iter().sum::<f64>()).abs() <= tol);
    }

    #[test]
    fn oversized_value_is_corruption() {
        let s = PackState::from_bounds(10, -1.0, 1.0, 1.0, 8, 511).unwrap();
        let v = BigUint::one() << s.gh_bits;
        assert!(matches!(unpack_gh(&v, &s, 1), Err(Error::Corruption(_))));
    }

    #[test]
    fn out_of_range_inputs_are_contract_errors() {
        let s = PackState::from_bounds(10, -0.5, 1.0, 0.25, 20, 511).unwrap();
        assert!(s.encode_g(-0.6).is_err());
        assert!(s.encode_g(1.5).is_err());
        assert!(s.encode_h(-0.1).is_err());
        assert!(s.encode_h(0.3).is_err());
        assert!(PackState::from_bounds(10, 0.0, 1.0, 1.0, 0, 511).is_err());
        assert!(PackState::from_bounds(10, 0.0, 1.0, 1.0, 61, 511).is_err());
    }

    #[test]
    fn no_bleed_at_adversarial_maxima() {
        // every instance at the top of both ranges, small n and r: exhaustive over n
        for r in 1..=6u32 {
            for n in 1..=40u64 {
                let s = PackState::from_bounds(n, -1.0, 1.0, 1.0, r, 511).unwrap();
                let one = s.pack(1.0, 1.0).unwrap();
                let mut total = BigUint::zero();
                for _ in 0..n {
                    total += &one.0;
                }
                let (g_field, h_field) = s.split_fields(&total).unwrap();
                assert_eq!(h_field, BigUint::from(n) << r);
                assert_eq!(g_field, BigUint::from(2 * n) << r);
            }
        }
    }

    #[test]
    fn separate_layout_matches_packed() {
        let g = [0.4, -0.2];
        let h = [0.1, 0.2];
        let s = compute_pack_state(&g, &h, 53, 511).unwrap();
        let mut packed_sum = BigUint::zero();
        let mut sep = [BigUint::zero(), BigUint::zero()];
        for i in 0..2 {
            packed_sum += &CipherLayout::Packed.encode(&g[i..=i], &h[i..=i], &s).unwrap()[0];
            let e = CipherLayout::Separate.encode(&g[i..=i], &h[i..=i], &s).unwrap();
            sep[0] += &e[0];
            sep[1] += &e[1];
        }
        let a = CipherLayout::Packed.decode(&[packed_sum], &s, 2).unwrap();
        let b = CipherLayout::Separate.decode(&sep, &s, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(CipherLayout::Separate.width(), 2);
        assert_eq!(a.0.len(), 1);
        let _ = vec![0];
    }

    fn gh_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-1.0f64..1.0, n),
                proptest::collection::vec(0.0f64..0.25, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn subset_sums_unpack_within_tolerance((g, h) in gh_strategy(), mask in any::<u64>(), r in 10u32..=53) {
            let s = compute_pack_state(&g, &h, r, 1023).unwrap();
            let packed = pack_gh(&g, &h, &s).unwrap();
            let chosen: Vec<usize> = (0..g.len()).filter(|i| mask >> (i % 64) & 1 == 1).collect();
            let total: PackedGh = chosen.iter().map(|&i| packed[i].clone()).sum();
            let (gs, hs) = unpack_gh(&total.0, &s, chosen.len() as u64).unwrap();
            let eg: f64 = chosen.iter().map(|&i| g[i]).sum();
            let eh: f64 = chosen.iter().map(|&i| h[i]).sum();
            let tol = (chosen.len() as f64 + 1.0) * libm::ldexp(1.0, -(r as i32)) + 1e-12;
            prop_assert!((gs - eg).abs() <= tol, "g {} vs {}", gs, eg);
            prop_assert!((hs - eh).abs() <= tol, "h {} vs {}", hs, eh);
        }
    }
}
