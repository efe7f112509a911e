//! Per-node (feature, bin) accumulators over plaintext floats, packed
//! integers or ciphertexts.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigUint;

use crate::counters::CountingKey;
use crate::data::BinnedMatrix;
use crate::error::{bail, Result};
use crate::paillier::Ciphertext;

/// Arithmetic on one histogram cell.
pub trait CellOps {
    type Cell: Clone + core::fmt::Debug;
    fn zero(&self) -> Self::Cell;
    fn add_assign(&self, acc: &mut Self::Cell, x: &Self::Cell) -> Result<()>;
    fn sub(&self, a: &Self::Cell, b: &Self::Cell) -> Result<Self::Cell>;
}

/// Float cells laid out as `[g_0..g_k, h_0..h_k]`.
#[derive(Debug, Clone, Copy)]
pub struct PlainOps {
    pub outputs: usize,
}

impl CellOps for PlainOps {
    type Cell = Vec<f64>;

    fn zero(&self) -> Vec<f64> {
        vec![0.0; 2 * self.outputs]
    }

    fn add_assign(&self, acc: &mut Vec<f64>, x: &Vec<f64>) -> Result<()> {
        for (a, b) in acc.iter_mut().zip(x) {
            *a += b;
        }
        Ok(())
    }

    fn sub(&self, a: &Vec<f64>, b: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(a.iter().zip(b).map(|(a, b)| a - b).collect())
    }
}

/// Plaintext mirror of the encrypted pipeline: `width` integers per cell.
#[derive(Debug, Clone, Copy)]
pub struct PackedOps {
    pub width: usize,
}

impl CellOps for PackedOps {
    type Cell = Vec<BigUint>;

    fn zero(&self) -> Vec<BigUint> {
        vec![BigUint::default(); self.width]
    }

    fn add_assign(&self, acc: &mut Vec<BigUint>, x: &Vec<BigUint>) -> Result<()> {
        for (a, b) in acc.iter_mut().zip(x) {
            *a += b;
        }
        Ok(())
    }

    fn sub(&self, a: &Vec<BigUint>, b: &Vec<BigUint>) -> Result<Vec<BigUint>> {
        a.iter()
            .zip(b)
            .map(|(a, b)| {
                if a < b {
                    bail!(Contract, "packed subtraction would underflow");
                }
                Ok(a - b)
            })
            .collect()
    }
}

/// Ciphertext cells, `width` ciphertexts each, with counted operations.
#[derive(Clone, Copy)]
pub struct CipherOps<'a> {
    pub key: CountingKey<'a>,
    pub width: usize,
}

impl CellOps for CipherOps<'_> {
    type Cell = Vec<Ciphertext>;

    fn zero(&self) -> Vec<Ciphertext> {
        vec![self.key.key.zero(); self.width]
    }

    fn add_assign(&self, acc: &mut Vec<Ciphertext>, x: &Vec<Ciphertext>) -> Result<()> {
        for (a, b) in acc.iter_mut().zip(x) {
            self.key.add_assign(a, b)?;
        }
        Ok(())
    }

    fn sub(&self, a: &Vec<Ciphertext>, b: &Vec<Ciphertext>) -> Result<Vec<Ciphertext>> {
        a.iter().zip(b).map(|(a, b)| self.key.sub(a, b)).collect()
    }
}

/// Slot marker for rows outside every node being built.
pub const NO_SLOT: u32 = u32::MAX;

/// Histogram of one tree node. A cell is `None` exactly when no instance
/// falls in it, so empty cells never cost a homomorphic operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<C> {
    pub node_id: u32,
    offsets: Vec<usize>,
    cells: Vec<Option<C>>,
    counts: Vec<u32>,
    total: Option<C>,
    total_count: u32,
    zero_recovered: bool,
}

impl<C: Clone> Histogram<C> {
    fn empty(node_id: u32, offsets: Vec<usize>) -> Self {
        let n = *offsets.last().unwrap_or(&0);
        Self {
            node_id,
            cells: vec![None; n],
            counts: vec![0; n],
            offsets,
            total: None,
            total_count: 0,
            zero_recovered: false,
        }
    }

    pub fn n_features(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.offsets[feature + 1] - self.offsets[feature]
    }

    pub fn cell(&self, feature: usize, bin: usize) -> Option<&C> {
        self.cells[self.offsets[feature] + bin].as_ref()
    }

    pub fn count(&self, feature: usize, bin: usize) -> u32 {
        self.counts[self.offsets[feature] + bin]
    }

    pub fn total(&self) -> Option<&C> {
        self.total.as_ref()
    }

    pub fn total_count(&self) -> u32 {
        self.total_count
    }

    pub fn is_zero_recovered(&self) -> bool {
        self.zero_recovered
    }

    /// Apply `f` to every non-empty cell and the total (e.g. decryption).
    pub fn try_map<D, F: FnMut(&C) -> Result<D>>(&self, mut f: F) -> Result<Histogram<D>> {
        Ok(Histogram {
            node_id: self.node_id,
            offsets: self.offsets.clone(),
            cells: self.cells.iter().map(|c| c.as_ref().map(&mut f).transpose()).collect::<Result<_>>()?,
            counts: self.counts.clone(),
            total: self.total.as_ref().map(&mut f).transpose()?,
            total_count: self.total_count,
            zero_recovered: self.zero_recovered,
        })
    }
}

fn bin_offsets(binned: &BinnedMatrix) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(binned.n_features() + 1);
    offsets.push(0);
    for f in 0..binned.n_features() {
        offsets.push(offsets[f] + binned.n_bins(f));
    }
    offsets
}

fn accumulate<O: CellOps>(ops: &O, slot: &mut Option<O::Cell>, x: &O::Cell) -> Result<()> {
    match slot {
        Some(acc) => ops.add_assign(acc, x),
        None => {
            *slot = Some(x.clone());
            Ok(())
        }
    }
}

/// Sparse-aware build of several nodes in one pass over the stored entries.
/// `slot_of[row]` indexes into `node_ids` (or is [`NO_SLOT`]); `values` holds
/// one cell per row. Omitted zero entries are left for [`recover_zero_bin`].
pub fn build_histograms_sparse<O: CellOps>(
    ops: &O,
    binned: &BinnedMatrix,
    slot_of: &[u32],
    node_ids: &[u32],
    values: &[O::Cell],
) -> Result<Vec<Histogram<O::Cell>>> {
    if slot_of.len() != binned.n_rows() || values.len() != binned.n_rows() {
        bail!(Contract, "slot and value vectors must cover all {} rows", binned.n_rows());
    }
    let offsets = bin_offsets(binned);
    let mut hists: Vec<_> = node_ids.iter().map(|&id| Histogram::empty(id, offsets.clone())).collect();
    for (row, &slot) in slot_of.iter().enumerate() {
        if slot == NO_SLOT {
            continue;
        }
        let h = hists.get_mut(slot as usize).ok_or_else(|| crate::Error::Contract("slot out of range".into()))?;
        accumulate(ops, &mut h.total, &values[row])?;
        h.total_count += 1;
    }
    for f in 0..binned.n_features() {
        for e in binned.column(f) {
            let slot = slot_of[e.row as usize];
            if slot == NO_SLOT {
                continue;
            }
            let h = &mut hists[slot as usize];
            let i = offsets[f] + e.bin as usize;
            accumulate(ops, &mut h.cells[i], &values[e.row as usize])?;
            h.counts[i] += 1;
        }
    }
    Ok(hists)
}

/// Add `total − Σ stored` into each feature's zero bin.
pub fn recover_zero_bin<O: CellOps>(ops: &O, hist: &mut Histogram<O::Cell>, binned: &BinnedMatrix) -> Result<()> {
    if hist.zero_recovered {
        return Ok(());
    }
    for f in 0..hist.n_features() {
        let range = hist.offsets[f]..hist.offsets[f + 1];
        let stored: u32 = hist.counts[range.clone()].iter().sum();
        let missing = hist.total_count - stored;
        if missing == 0 {
            continue;
        }
        let zero = hist.offsets[f] + binned.zero_bin(f) as usize;
        let total = hist.total.as_ref().expect("non-empty node has a total");
        let implicit = if stored == 0 {
            total.clone()
        } else {
            let mut sum: Option<O::Cell> = None;
            for cell in hist.cells[range].iter().flatten() {
                accumulate(ops, &mut sum, cell)?;
            }
            ops.sub(total, sum.as_ref().expect("stored entries exist"))?
        };
        accumulate(ops, &mut hist.cells[zero], &implicit)?;
        hist.counts[zero] += missing;
    }
    hist.zero_recovered = true;
    Ok(())
}

/// Sparse build followed by zero recovery.
pub fn build_histograms<O: CellOps>(
    ops: &O,
    binned: &BinnedMatrix,
    slot_of: &[u32],
    node_ids: &[u32],
    values: &[O::Cell],
) -> Result<Vec<Histogram<O::Cell>>> {
    let mut hists = build_histograms_sparse(ops, binned, slot_of, node_ids, values)?;
    for h in &mut hists {
        recover_zero_bin(ops, h, binned)?;
    }
    Ok(hists)
}

/// Histogram of a single node given its rows.
pub fn build_histogram<O: CellOps>(
    ops: &O,
    binned: &BinnedMatrix,
    node_id: u32,
    rows: &[usize],
    values: &[O::Cell],
) -> Result<Histogram<O::Cell>> {
    let mut slot_of = vec![NO_SLOT; binned.n_rows()];
    for &r in rows {
        slot_of[r] = 0;
    }
    Ok(build_histograms(ops, binned, &slot_of, &[node_id], values)?.remove(0))
}

/// Sibling histogram as `parent − child`, cell by cell.
pub fn histogram_subtract<O: CellOps>(
    ops: &O,
    parent: &Histogram<O::Cell>,
    child: &Histogram<O::Cell>,
    sibling_id: u32,
) -> Result<Histogram<O::Cell>> {
    if parent.offsets != child.offsets || parent.zero_recovered != child.zero_recovered {
        bail!(Contract, "histogram layouts differ");
    }
    if child.total_count > parent.total_count {
        bail!(Contract, "child has more instances than its parent");
    }
    let diff = |p: &Option<O::Cell>, pc: u32, c: &Option<O::Cell>, cc: u32| -> Result<Option<O::Cell>> {
        debug_assert!(cc <= pc, "child cell larger than parent cell");
        Ok(match (p, c) {
            _ if cc == pc => None,
            (_, None) => p.clone(),
            (Some(p), Some(c)) => Some(ops.sub(p, c)?),
            (None, Some(_)) => bail!(Contract, "child cell outside parent"),
        })
    };
    let mut cells = Vec::with_capacity(parent.cells.len());
    let mut counts = Vec::with_capacity(parent.cells.len());
    for i in 0..parent.cells.len() {
        cells.push(diff(&parent.cells[i], parent.counts[i], &child.cells[i], child.counts[i])?);
        counts.push(parent.counts[i].checked_sub(child.counts[i]).ok_or_else(|| {
            crate::Error::Contract("child cell count exceeds parent".into())
        })?);
    }
    Ok(Histogram {
        node_id: sibling_id,
        offsets: parent.offsets.clone(),
        cells,
        counts,
        total: diff(&parent.total, parent.total_count, &child.total, child.total_count)?,
        total_count: parent.total_count - child.total_count,
        zero_recovered: parent.zero_recovered,
    })
}

/// Left-side aggregate of splitting `feature` after `bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate<C> {
    pub feature: u32,
    pub bin: u8,
    pub left: C,
    pub left_count: u32,
}

fn prefix_candidates<O: CellOps>(
    ops: &O,
    hist: &Histogram<O::Cell>,
    informative_only: bool,
) -> Result<Vec<SplitCandidate<O::Cell>>> {
    if !hist.zero_recovered {
        bail!(Contract, "zero bins must be recovered before split finding");
    }
    let mut out = Vec::new();
    for f in 0..hist.n_features() {
        let bins = hist.n_bins(f);
        let mut prefix: Option<O::Cell> = None;
        let mut left_count = 0u32;
        for b in 0..bins.saturating_sub(1) {
            let i = hist.offsets[f] + b;
            if let Some(cell) = &hist.cells[i] {
                accumulate(ops, &mut prefix, cell)?;
                left_count += hist.counts[i];
            }
            // an empty bin repeats the previous partition; a full left side
            // is no partition at all
            if informative_only && (hist.counts[i] == 0 || left_count == hist.total_count) {
                continue;
            }
            out.push(SplitCandidate {
                feature: f as u32,
                bin: b as u8,
                left: prefix.clone().unwrap_or_else(|| ops.zero()),
                left_count,
            });
        }
    }
    Ok(out)
}

/// One candidate per (feature, bin) except each feature's last bin.
pub fn cumsum_and_candidates<O: CellOps>(ops: &O, hist: &Histogram<O::Cell>) -> Result<Vec<SplitCandidate<O::Cell>>> {
    prefix_candidates(ops, hist, false)
}

/// Candidates that produce distinct, non-trivial partitions: each kept
/// candidate is the lowest bin for its partition and leaves both sides
/// non-empty.
pub fn informative_candidates<O: CellOps>(
    ops: &O,
    hist: &Histogram<O::Cell>,
) -> Result<Vec<SplitCandidate<O::Cell>>> {
    prefix_candidates(ops, hist, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counters::OpCounters;
    use crate::data::{quantile_bin, FeatureMatrix};
    use crate::encoding::PackState;
    use crate::paillier::keygen_seeded;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: PlainOps = PlainOps { outputs: 1 };

    fn random_binned(rng: &mut ChaCha8Rng, n: usize, d: usize, sparsity: f64) -> BinnedMatrix {
        let values = (0..n * d)
            .map(|_| if rng.gen_bool(sparsity) { 0.0 } else { rng.gen_range(-2.0..3.0) })
            .collect();
        let bins = rng.gen_range(2..10);
        quantile_bin(&FeatureMatrix::new(n, d, values).unwrap(), bins).unwrap()
    }

    /// Dense group-by over (feature, bin), the oracle for every build path.
    fn dense_oracle(binned: &BinnedMatrix, rows: &[usize], values: &[Vec<f64>]) -> Vec<Vec<(Vec<f64>, u32)>> {
        let d = binned.n_features();
        let dense = binned.densify();
        (0..d)
            .map(|f| {
                let mut cells = vec![(vec![0.0; 2], 0u32); binned.n_bins(f)];
                for &r in rows {
                    let c = &mut cells[dense[r * d + f] as usize];
                    c.0[0] += values[r][0];
                    c.0[1] += values[r][1];
                    c.1 += 1;
                }
                cells
            })
            .collect()
    }

    fn integer_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        // small integers keep float sums exact
        (0..n).map(|_| vec![rng.gen_range(-8..8) as f64, rng.gen_range(0..5) as f64]).collect()
    }

    #[test]
    fn single_instance_single_cell() {
        let m = FeatureMatrix::new(5, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = quantile_bin(&m, 5).unwrap();
        let values: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 1.0]).collect();
        let h = build_histogram(&P, &b, 0, &[3], &values).unwrap();
        let filled: Vec<usize> = (0..h.n_bins(0)).filter(|&bin| h.cell(0, bin).is_some()).collect();
        assert_eq!(filled, vec![3]);
        assert_eq!(h.cell(0, 3).unwrap(), &vec![3.0, 1.0]);
    }

    #[test]
    fn dense_and_empty_features_recover_trivially() {
        // feature 0 has no zeros, feature 1 is all zeros
        let m = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let b = quantile_bin(&m, 3).unwrap();
        let values = vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![4.0, 1.0]];
        let h = build_histogram(&P, &b, 0, &[0, 1, 2], &values).unwrap();
        assert_eq!(h.count(0, b.zero_bin(0) as usize), 1);
        assert_eq!(h.cell(0, 0).unwrap(), &vec![1.0, 1.0]);
        assert_eq!(h.cell(1, 0).unwrap(), &vec![7.0, 3.0]);
        assert_eq!(h.count(1, 0), 3);
    }

    #[test]
    fn sparse_build_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..40);
            let (d, sp) = (rng.gen_range(1..5), rng.gen_range(0.0..1.0));
            let b = random_binned(&mut rng, n, d, sp);
            let values = integer_values(&mut rng, n);
            let rows: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
            if rows.is_empty() {
                continue;
            }
            let h = build_histogram(&P, &b, 0, &rows, &values).unwrap();
            let oracle = dense_oracle(&b, &rows, &values);
            for f in 0..b.n_features() {
                for bin in 0..b.n_bins(f) {
                    let (sum, count) = &oracle[f][bin];
                    assert_eq!(h.count(f, bin), *count);
                    let got = h.cell(f, bin).cloned().unwrap_or(vec![0.0, 0.0]);
                    assert_eq!(&got, sum);
                }
            }
        }
    }

    #[test]
    fn subtraction_matches_direct_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ops = PackedOps { width: 1 };
        for _ in 0..100 {
            let n = rng.gen_range(2..40);
            let d = rng.gen_range(1..4);
            let b = random_binned(&mut rng, n, d, 0.4);
            let values: Vec<Vec<BigUint>> = (0..n).map(|_| vec![BigUint::from(rng.gen_range(0u32..1000))]).collect();
            let parent: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.8)).collect();
            let (left, right): (Vec<usize>, Vec<usize>) = parent.iter().partition(|_| rng.gen_bool(0.5));
            if parent.is_empty() {
                continue;
            }
            let hp = build_histogram(&ops, &b, 0, &parent, &values).unwrap();
            let hl = build_histogram(&ops, &b, 1, &left, &values).unwrap();
            let hr = build_histogram(&ops, &b, 2, &right, &values).unwrap();
            let sibling = histogram_subtract(&ops, &hp, &hl, 2).unwrap();
            assert_eq!(sibling, hr);
        }
    }

    #[test]
    fn subtraction_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = random_binned(&mut rng, 10, 2, 0.3);
        let values = integer_values(&mut rng, 10);
        let all: Vec<usize> = (0..10).collect();
        let h = build_histogram(&P, &b, 0, &all, &values).unwrap();
        let none = build_histogram(&P, &b, 1, &[], &values).unwrap();
        let same = histogram_subtract(&P, &h, &h, 2).unwrap();
        assert!((0..2).all(|f| (0..b.n_bins(f)).all(|bin| same.cell(f, bin).is_none())));
        assert_eq!(same.total_count(), 0);
        let sib = histogram_subtract(&P, &h, &none, 2).unwrap();
        assert_eq!(sib.cells, h.cells);
    }

    #[test]
    fn candidate_counts() {
        let m = FeatureMatrix::new(8, 2, (0..16).map(|i| if i % 2 == 0 { (i / 2 + 1) as f64 } else { 5.0 }).collect())
            .unwrap();
        let b = quantile_bin(&m, 4).unwrap();
        assert_eq!((b.n_bins(0), b.n_bins(1)), (4, 1));
        let values = vec![vec![1.0, 1.0]; 8];
        let h = build_histogram(&P, &b, 0, &(0..8).collect::<Vec<_>>(), &values).unwrap();
        let c = cumsum_and_candidates(&P, &h).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.iter().all(|c| c.feature == 0));
        assert_eq!(c.iter().map(|c| c.left_count).collect::<Vec<_>>(), vec![2, 4, 6]);
    }

    #[test]
    fn prefix_sums_match_partial_aggregation() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let b = random_binned(&mut rng, n, 3, 0.3);
            let values = integer_values(&mut rng, n);
            let rows: Vec<usize> = (0..n).collect();
            let h = build_histogram(&P, &b, 0, &rows, &values).unwrap();
            let dense = b.densify();
            let all = cumsum_and_candidates(&P, &h).unwrap();
            let informative = informative_candidates(&P, &h).unwrap();
            for c in &all {
                let f = c.feature as usize;
                let left: Vec<usize> = rows.iter().copied().filter(|&r| dense[r * 3 + f] <= c.bin).collect();
                assert_eq!(c.left_count as usize, left.len());
                assert_eq!(c.left[0], left.iter().map(|&r| values[r][0]).sum::<f64>());
                assert_eq!(c.left[1], left.iter().map(|&r| values[r][1]).sum::<f64>());
            }
            // informative candidates: distinct non-trivial partitions, lowest bin each
            for f in 0..3u32 {
                let kept: Vec<&SplitCandidate<Vec<f64>>> = informative.iter().filter(|c| c.feature == f).collect();
                let mut expected: Vec<(u8, u32)> = Vec::new();
                for c in all.iter().filter(|c| c.feature == f) {
                    if c.left_count > 0 && (c.left_count as usize) < n && expected.last().is_none_or(|l| l.1 != c.left_count) {
                        expected.push((c.bin, c.left_count));
                    }
                }
                assert_eq!(kept.iter().map(|c| (c.bin, c.left_count)).collect::<Vec<_>>(), expected);
            }
        }
    }

    #[test]
    fn ciphertext_histogram_decrypts_to_packed_histogram() {
        let kp = keygen_seeded(512, 5).unwrap();
        let counters = OpCounters::default();
        let key = CountingKey::new(&kp.public, &counters);
        let cipher_ops = CipherOps { key, width: 1 };
        let packed_ops = PackedOps { width: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 30;
        let b = random_binned(&mut rng, n, 3, 0.5);
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.25)).collect();
        let state = PackState::compute(&g, &hs, n as u64, 53, kp.public.max_plaintext_bits()).unwrap();
        let plain: Vec<Vec<BigUint>> = (0..n).map(|i| vec![state.pack(g[i], hs[i]).unwrap().0]).collect();
        let cipher: Vec<Vec<Ciphertext>> =
            plain.iter().map(|p| vec![kp.secret.encrypt(&p[0], &mut rng).unwrap()]).collect();
        let rows: Vec<usize> = (0..n).collect();
        let left: Vec<usize> = (0..n).filter(|i| i % 3 == 0).collect();
        let hp = build_histogram(&cipher_ops, &b, 0, &rows, &cipher).unwrap();
        let hl = build_histogram(&cipher_ops, &b, 1, &left, &cipher).unwrap();
        let hr = histogram_subtract(&cipher_ops, &hp, &hl, 2).unwrap();
        let decrypted = hr.try_map(|c| Ok(vec![kp.secret.decrypt(&c[0])?])).unwrap();
        let right: Vec<usize> = (0..n).filter(|i| i % 3 != 0).collect();
        let expected = build_histogram(&packed_ops, &b, 2, &right, &plain).unwrap();
        assert_eq!(decrypted, expected);
        assert!(counters.snapshot().additions > 0);
    }
}
