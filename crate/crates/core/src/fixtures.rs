//! Small deterministic datasets for tests, verification and benchmarks.

use crate::data::{generate_synthetic, SyntheticConfig};
use crate::error::Result;
use crate::graph::{
    apply_feature_normalization, assemble_sequence, compute_stats_default, NormalizationStats,
    NormalizedSequence, SequenceConfig, TemporalGraphSequence,
};

/// Synthetic config with `count` records of `n_nodes` columns and `n_deep`
/// targets.
pub fn small_synthetic(count: usize, n_nodes: usize, n_deep: usize, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        n_records: count,
        n_nodes,
        n_deep,
        seed,
        ..SyntheticConfig::default()
    }
}

/// Raw sequences from a synthetic config.
pub fn sequences_from(cfg: &SyntheticConfig) -> Result<Vec<TemporalGraphSequence>> {
    let seq_cfg = SequenceConfig {
        n_shallow: cfg.n_shallow,
        n_deep: cfg.n_deep,
        ..SequenceConfig::default()
    };
    generate_synthetic(cfg)?
        .iter()
        .map(|r| assemble_sequence(r, &seq_cfg))
        .collect()
}

/// Sequences normalized with statistics of the whole set.
pub fn normalized(
    raw: &[TemporalGraphSequence],
) -> Result<(Vec<NormalizedSequence>, NormalizationStats)> {
    let stats = compute_stats_default(raw)?;
    let seqs = raw
        .iter()
        .map(|s| apply_feature_normalization(s, &stats))
        .collect::<Result<_>>()?;
    Ok((seqs, stats))
}

/// `count` normalized toy sequences of `n_nodes` nodes and `n_deep` targets.
pub fn toy_sequences(
    count: usize,
    n_nodes: usize,
    n_deep: usize,
    seed: u64,
) -> Result<(Vec<NormalizedSequence>, NormalizationStats)> {
    normalized(&sequences_from(&small_synthetic(
        count, n_nodes, n_deep, seed,
    ))?)
}
