//! Multi-class packing for multi-output trees: an instance's per-class
//! (g, h) pairs are packed `η_c` classes per integer, class 0 most
//! significant in the first integer.

use alloc::vec::Vec;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::{compress::decompress_fields, compress_capacity, unpack_gh, PackState};
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiClassLayout {
    /// Number of classes `k`.
    pub classes: usize,
    /// Classes per integer, `η_c = ⌊ι / b_gh⌋`.
    pub per_cipher: usize,
    /// Integers per instance, `n_k = ⌈k / η_c⌉`.
    pub ciphers: usize,
}

impl MultiClassLayout {
    pub fn new(classes: usize, iota: u64, gh_bits: u64) -> Result<Self> {
        if classes == 0 {
            bail!(Contract, "multi-class layout needs at least one class");
        }
        let per_cipher = compress_capacity(iota, gh_bits)?;
        Ok(Self {
            classes,
            per_cipher,
            ciphers: classes.div_ceil(per_cipher),
        })
    }

    /// Number of classes carried by integer `j`.
    pub fn classes_in(&self, j: usize) -> usize {
        (self.classes - j * self.per_cipher).min(self.per_cipher)
    }

    pub(super) fn pack_row(&self, g: &[f64], h: &[f64], state: &PackState) -> Result<Vec<BigUint>> {
        if g.len() != self.classes || h.len() != self.classes {
            bail!(Contract, "expected {} classes, got {}", self.classes, g.len());
        }
        let mut out = Vec::with_capacity(self.ciphers);
        for (gc, hc) in g.chunks(self.per_cipher).zip(h.chunks(self.per_cipher)) {
            let mut e = BigUint::default();
            for (&gj, &hj) in gc.iter().zip(hc) {
                e = (e << state.gh_bits) + state.pack(gj, hj)?.0;
            }
            out.push(e);
        }
        Ok(out)
    }
}

/// Pack row-major `n × k` gradient and hessian matrices.
pub fn pack_gh_multiclass(
    g: &[f64],
    h: &[f64],
    classes: usize,
    state: &PackState,
    iota: u64,
) -> Result<(Vec<Vec<BigUint>>, MultiClassLayout)> {
    if classes == 0 || g.len() != h.len() || g.len() % classes != 0 {
        bail!(Contract, "gradient matrices do not have {classes} columns");
    }
    let layout = MultiClassLayout::new(classes, iota, state.gh_bits)?;
    let rows = g
        .chunks(classes)
        .zip(h.chunks(classes))
        .map(|(gr, hr)| layout.pack_row(gr, hr, state))
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, layout))
}

/// Per-class packed fields in class order.
pub fn recover_mo_fields(
    plains: &[BigUint],
    layout: &MultiClassLayout,
    gh_bits: u64,
) -> Result<Vec<BigUint>> {
    if plains.len() < layout.ciphers {
        bail!(
            Corruption,
            "multi-class split-info has {} integers, layout needs {}",
            plains.len(),
            layout.ciphers
        );
    }
    let mut fields = Vec::with_capacity(layout.classes);
    for (j, plain) in plains.iter().take(layout.ciphers).enumerate() {
        fields.extend(decompress_fields(plain, layout.classes_in(j), gh_bits)?);
    }
    Ok(fields)
}

/// Per-class `(Σg, Σh)` of a decrypted multi-class aggregate.
pub fn recover_mo_splitinfo(
    plains: &[BigUint],
    layout: &MultiClassLayout,
    state: &PackState,
    sample_count: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let fields = recover_mo_fields(plains, layout, state.gh_bits)?;
    let mut g = Vec::with_capacity(layout.classes);
    let mut h = Vec::with_capacity(layout.classes);
    for field in &fields {
        let (gj, hj) = unpack_gh(field, state, sample_count)?;
        g.push(gj);
        h.push(hj);
    }
    Ok((g, h))
}
