//! Temporal graph construction: haversine-weighted adjacency, z-scored node
//! features and offset min-max edge weights with weight-2 self-loops.

mod adjacency;
mod geo;
mod sequence;

pub use adjacency::{
    build_raw_adjacency, chebyshev_basis, normalize_adjacency, off_diagonal_range,
    symmetric_normalize, WeightedAdjacency, DEFAULT_EPSILON_OFFSET, SELF_LOOP_WEIGHT,
};
pub use geo::{haversine_angle, GeoPoint, HaversineMode, MIN_ANGLE};
pub use sequence::{
    apply_feature_normalization, assemble_sequence, compute_stats, compute_stats_default,
    LayerGraph, NormalizationStats, NormalizedSequence, SequenceConfig, TemporalGraphSequence,
    FEATURES,
};
