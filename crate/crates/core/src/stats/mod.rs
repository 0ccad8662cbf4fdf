//! Rank correlation with bootstrap intervals, Mann-Whitney U, simple OLS and
//! the matrix comparison modes built on them.

pub mod compare;
pub mod correlation;
pub mod mann_whitney;
pub mod ols;

pub use compare::{
    bundled_pair_labels, common_lemmas, compare_matrices, load_pair_labels, pooled_correlation,
    pooled_pairs, random_placement_baseline, read_pair_labels, split_by_relation,
    stratified_correlations, MatrixCompareMode, PairLabel, PlacementBaseline, PooledPairs,
    Relation, RelationSplit, StratumCell,
};
pub use correlation::{
    average_ranks, ci_spearman, correlation_p_value, pearson, percentile, percentile_sorted,
    spearman, spearman_r, spearman_with, CiOptions, CorrelationResult,
};
pub use mann_whitney::{mann_whitney, mann_whitney_with, MannWhitney, MwuMethod};
pub use ols::{ols, OlsFit};
