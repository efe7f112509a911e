//! Party-local tree kernels: losses, sampling, gains and histograms.

pub mod gain;
pub mod goss;
pub mod histogram;
pub mod loss;
pub mod model;

pub use gain::{leaf_weight, mo_gain, mo_leaf_weight, mo_score, split_gain, DEFAULT_LAMBDA};
pub use goss::{goss_sample, GossSample, DEFAULT_OTHER_RATE, DEFAULT_TOP_RATE};
pub use histogram::{
    build_histogram, build_histograms, build_histograms_sparse, cumsum_and_candidates, histogram_subtract,
    informative_candidates, recover_zero_bin, CellOps, CipherOps, Histogram, PackedOps, PlainOps, SplitCandidate,
    NO_SLOT,
};
pub use loss::{cross_entropy, logloss, logloss_grad_hess, sigmoid, softmax, softmax_grad_hess, GradHess};
pub use model::{NodeKind, SplitRule, Tree, TreeNode, TreeRole};
