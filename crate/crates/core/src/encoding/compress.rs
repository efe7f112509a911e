//! Cipher compressing: several packed split aggregates folded into one
//! ciphertext by shift-and-add, so the guest decrypts once per package.
//!
//! Fold order is most-significant-first: the first split-info of a package
//! occupies the highest `b_gh` bits. Decompression extracts fields from the
//! least significant end and reverses them back into fold order.

use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use super::{unpack_gh, PackState};
use crate::counters::CountingKey;
use crate::error::{bail, Result};
use crate::paillier::Ciphertext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub id: u64,
    pub sample_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitInfoPackage {
    pub cipher: Ciphertext,
    /// Entries in fold order.
    pub entries: Vec<SplitMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSplit {
    pub g: f64,
    pub h: f64,
    pub id: u64,
    pub sample_count: u32,
}

/// Fold `infos` into packages of at most `capacity` entries each.
pub fn compress_split_infos(
    infos: &[(Ciphertext, SplitMeta)],
    capacity: usize,
    gh_bits: u64,
    key: CountingKey<'_>,
) -> Result<Vec<SplitInfoPackage>> {
    if capacity == 0 {
        bail!(Contract, "compression capacity must be at least 1");
    }
    let mut packages = Vec::with_capacity(infos.len().div_ceil(capacity));
    for chunk in infos.chunks(capacity) {
        let mut acc = chunk[0].0.clone();
        for (cipher, _) in &chunk[1..] {
            acc = key.shift_left(&acc, gh_bits)?;
            key.add_assign(&mut acc, cipher)?;
        }
        packages.push(SplitInfoPackage {
            cipher: acc,
            entries: chunk.iter().map(|(_, m)| *m).collect(),
        });
    }
    Ok(packages)
}

/// Split a decrypted package into its `count` packed fields, fold order.
pub fn decompress_fields(plain: &BigUint, count: usize, gh_bits: u64) -> Result<Vec<BigUint>> {
    if count == 0 {
        bail!(Corruption, "empty package");
    }
    if plain.bits() > gh_bits * count as u64 {
        bail!(
            Corruption,
            "package plaintext has {} bits but {} entries of {} bits were declared",
            plain.bits(),
            count,
            gh_bits
        );
    }
    let mask = (BigUint::one() << gh_bits) - 1u32;
    let mut d = plain.clone();
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        fields.push(&d & &mask);
        d >>= gh_bits;
    }
    fields.reverse();
    Ok(fields)
}

/// Recover `(g, h, id, count)` for every entry of a decrypted package.
pub fn decompress_package(
    plain: &BigUint,
    entries: &[SplitMeta],
    state: &PackState,
) -> Result<Vec<RecoveredSplit>> {
    let fields = decompress_fields(plain, entries.len(), state.gh_bits)?;
    fields
        .iter()
        .zip(entries)
        .map(|(field, meta)| {
            let (g, h) = unpack_gh(field, state, meta.sample_count as u64)?;
            Ok(RecoveredSplit {
                g,
                h,
                id: meta.id,
                sample_count: meta.sample_count,
            })
        })
        .collect()
}
