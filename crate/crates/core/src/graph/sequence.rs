//! Temporal graph sequences and dataset-wide normalization.

use serde::{Deserialize, Serialize};

use super::adjacency::{
    build_raw_adjacency, normalize_adjacency, off_diagonal_range, WeightedAdjacency,
    DEFAULT_EPSILON_OFFSET,
};
use super::geo::{GeoPoint, HaversineMode};
use crate::autodiff::Tensor;
use crate::data::EchogramRecord;
use crate::error::{Error, Result};

/// Node feature columns: latitude, longitude, layer thickness.
pub const FEATURES: usize = 3;
const STD_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    pub n_shallow: usize,
    pub n_deep: usize,
    /// Year of the first layer below the surface.
    pub newest_year: i32,
    pub haversine_mode: HaversineMode,
    /// Required column count, if any.
    pub n_nodes: Option<usize>,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            n_shallow: 5,
            n_deep: 15,
            newest_year: 2011,
            haversine_mode: HaversineMode::Paper,
            n_nodes: None,
        }
    }
}

/// Node features of one annual layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGraph {
    pub year: i32,
    pub features: Tensor,
}

/// Un-normalized graphs built from one echogram.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraphSequence {
    pub source_id: String,
    pub points: Vec<GeoPoint>,
    /// Oldest year first.
    pub graphs: Vec<LayerGraph>,
    /// Reciprocal-angle weights, zero diagonal.
    pub raw_adjacency: Tensor,
    /// n × n_deep thicknesses in pixels, oldest year in column 0.
    pub targets: Tensor,
    pub target_years: Vec<i32>,
}

impl TemporalGraphSequence {
    pub fn n_nodes(&self) -> usize {
        self.points.len()
    }
}

/// Sequence after z-scoring and adjacency normalization; the only form the
/// models accept.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSequence {
    pub source_id: String,
    pub graphs: Vec<LayerGraph>,
    pub adjacency: WeightedAdjacency,
    /// `D^{-1/2} A D^{-1/2}` of `adjacency`.
    pub propagation: Tensor,
    /// z-scored targets.
    pub targets: Tensor,
    /// Targets in pixels.
    pub raw_targets: Tensor,
}

impl NormalizedSequence {
    pub fn n_nodes(&self) -> usize {
        self.propagation.rows()
    }

    /// One n × (2 + T) matrix: lat, lon, then every year's thickness, oldest
    /// first.
    pub fn collapsed_features(&self) -> Tensor {
        let first = &self.graphs[0].features;
        let t = self.graphs.len();
        Tensor::from_fn(first.rows(), 2 + t, |r, c| match c {
            0 | 1 => first.get(r, c),
            _ => self.graphs[c - 2].features.get(r, 2),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub feature_mean: [f64; FEATURES],
    pub feature_std: [f64; FEATURES],
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    pub adjacency_raw_min: f64,
    pub adjacency_raw_max: f64,
    pub epsilon_offset: f64,
}

impl NormalizationStats {
    /// Leaves targets in pixel space.
    pub fn with_identity_targets(mut self) -> Self {
        self.target_mean.iter_mut().for_each(|m| *m = 0.0);
        self.target_std.iter_mut().for_each(|s| *s = 1.0);
        self
    }

    pub fn normalize_features(&self, x: &Tensor) -> Tensor {
        Tensor::from_fn(x.rows(), x.cols(), |r, c| {
            (x.get(r, c) - self.feature_mean[c]) / self.feature_std[c]
        })
    }

    pub fn denormalize_features(&self, z: &Tensor) -> Tensor {
        Tensor::from_fn(z.rows(), z.cols(), |r, c| {
            z.get(r, c) * self.feature_std[c] + self.feature_mean[c]
        })
    }

    pub fn normalize_targets(&self, y: &Tensor) -> Tensor {
        Tensor::from_fn(y.rows(), y.cols(), |r, c| {
            (y.get(r, c) - self.target_mean[c]) / self.target_std[c]
        })
    }

    pub fn denormalize_targets(&self, z: &Tensor) -> Tensor {
        Tensor::from_fn(z.rows(), z.cols(), |r, c| {
            z.get(r, c) * self.target_std[c] + self.target_mean[c]
        })
    }
}

/// Builds the feature graphs, targets and raw adjacency of one record.
///
/// Thickness index 0 is the layer just below the surface (`newest_year`). The
/// first `n_shallow` thicknesses become feature graphs in increasing year
/// order; the next `n_deep` become target columns, oldest first.
pub fn assemble_sequence(
    record: &EchogramRecord,
    config: &SequenceConfig,
) -> Result<TemporalGraphSequence> {
    let needed = config.n_shallow + config.n_deep;
    if config.n_shallow == 0 || config.n_deep == 0 {
        return Err(Error::Config(
            "n_shallow and n_deep must be positive".into(),
        ));
    }
    if record.layer_count() < needed {
        return Err(Error::data(
            record.id(),
            format!(
                "{} layers, at least {needed} required",
                record.layer_count()
            ),
        ));
    }
    let n = record.n_columns();
    if let Some(expected) = config.n_nodes {
        if n != expected {
            return Err(Error::data(
                record.id(),
                format!("{n} columns, expected {expected}"),
            ));
        }
    }
    let thick = record.thickness();
    let points = record.points().to_vec();

    let graphs = (0..config.n_shallow)
        .map(|t| {
            let layer = config.n_shallow - 1 - t;
            LayerGraph {
                year: config.newest_year - layer as i32,
                features: Tensor::from_fn(n, FEATURES, |r, c| match c {
                    0 => points[r].lat(),
                    1 => points[r].lon(),
                    _ => thick[r][layer],
                }),
            }
        })
        .collect();

    let deepest = needed - 1;
    let targets = Tensor::from_fn(n, config.n_deep, |r, k| thick[r][deepest - k]);
    let target_years = (0..config.n_deep)
        .map(|k| config.newest_year - (deepest - k) as i32)
        .collect();

    Ok(TemporalGraphSequence {
        source_id: record.id().to_string(),
        raw_adjacency: build_raw_adjacency(&points, config.haversine_mode)?,
        points,
        graphs,
        targets,
        target_years,
    })
}

/// Pooled statistics over a training split: feature columns over every node of
/// every graph, target columns over every node, and the raw edge-weight range.
/// Population standard deviations; near-zero deviations become 1.
pub fn compute_stats(
    train: &[TemporalGraphSequence],
    epsilon_offset: f64,
) -> Result<NormalizationStats> {
    let first = train
        .first()
        .ok_or_else(|| Error::invalid("normalization statistics need at least one sequence"))?;
    let n_deep = first.targets.cols();

    let mut feature_mean = [0.0; FEATURES];
    let mut feature_std = [0.0; FEATURES];
    for c in 0..FEATURES {
        let values = train
            .iter()
            .flat_map(|s| s.graphs.iter())
            .flat_map(|g| (0..g.features.rows()).map(move |r| g.features.get(r, c)));
        let (m, s) = mean_std(values);
        feature_mean[c] = m;
        feature_std[c] = s;
    }

    let mut target_mean = Vec::with_capacity(n_deep);
    let mut target_std = Vec::with_capacity(n_deep);
    for k in 0..n_deep {
        if train.iter().any(|s| s.targets.cols() != n_deep) {
            return Err(Error::invalid("sequences disagree on target count"));
        }
        let values = train
            .iter()
            .flat_map(|s| (0..s.targets.rows()).map(move |r| s.targets.get(r, k)));
        let (m, s) = mean_std(values);
        target_mean.push(m);
        target_std.push(s);
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in train {
        if let Some((a, b)) = off_diagonal_range(&s.raw_adjacency) {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if lo > hi {
        return Err(Error::invalid(
            "no off-diagonal adjacency entries in training data",
        ));
    }

    Ok(NormalizationStats {
        feature_mean,
        feature_std,
        target_mean,
        target_std,
        adjacency_raw_min: lo,
        adjacency_raw_max: hi,
        epsilon_offset,
    })
}

pub fn compute_stats_default(train: &[TemporalGraphSequence]) -> Result<NormalizationStats> {
    compute_stats(train, DEFAULT_EPSILON_OFFSET)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, count) = values
        .clone()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if count == 0 {
        return (0.0, 1.0);
    }
    let mean = sum / count as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    let std = var.sqrt();
    (mean, if std < STD_FLOOR { 1.0 } else { std })
}

/// Applies training statistics to one sequence.
pub fn apply_feature_normalization(
    seq: &TemporalGraphSequence,
    stats: &NormalizationStats,
) -> Result<NormalizedSequence> {
    if seq.targets.cols() != stats.target_mean.len() {
        return Err(Error::dim(
            "apply_feature_normalization",
            seq.targets.shape(),
            (1, stats.target_mean.len()),
        ));
    }
    let graphs = seq
        .graphs
        .iter()
        .map(|g| LayerGraph {
            year: g.year,
            features: stats.normalize_features(&g.features),
        })
        .collect();
    let adjacency = normalize_adjacency(
        &seq.raw_adjacency,
        stats.adjacency_raw_min,
        stats.adjacency_raw_max,
        stats.epsilon_offset,
    )?;
    Ok(NormalizedSequence {
        source_id: seq.source_id.clone(),
        graphs,
        propagation: adjacency.propagation()?,
        adjacency,
        targets: stats.normalize_targets(&seq.targets),
        raw_targets: seq.targets.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize, layers: usize) -> EchogramRecord {
        let points = (0..n)
            .map(|i| GeoPoint::new(70.0 + i as f64 * 1e-4, -40.0).unwrap())
            .collect();
        let tops = (0..n)
            .map(|c| {
                let mut row = 5.0;
                let mut col = vec![row];
                for k in 0..layers {
                    row += 1.0 + k as f64 + 0.1 * c as f64;
                    col.push(row);
                }
                col
            })
            .collect();
        EchogramRecord::new("rec", points, tops).unwrap()
    }

    #[test]
    fn twenty_layers_give_five_graphs_fifteen_targets() {
        let seq = assemble_sequence(&record(4, 20), &SequenceConfig::default()).unwrap();
        assert_eq!(seq.graphs.len(), 5);
        assert_eq!(seq.targets.shape(), (4, 15));
        let years: Vec<i32> = seq.graphs.iter().map(|g| g.year).collect();
        assert_eq!(years, vec![2007, 2008, 2009, 2010, 2011]);
        assert_eq!(seq.target_years.first(), Some(&1992));
        assert_eq!(seq.target_years.last(), Some(&2006));
    }

    #[test]
    fn nineteen_layers_rejected_with_record_name() {
        let err = assemble_sequence(&record(4, 19), &SequenceConfig::default()).unwrap_err();
        assert!(err.to_string().contains("rec"));
    }

    #[test]
    fn column_count_enforced() {
        let cfg = SequenceConfig {
            n_nodes: Some(5),
            ..SequenceConfig::default()
        };
        assert!(assemble_sequence(&record(4, 20), &cfg).is_err());
    }

    #[test]
    fn targets_follow_year_order() {
        let rec = record(3, 22);
        let seq = assemble_sequence(&rec, &SequenceConfig::default()).unwrap();
        for r in 0..3 {
            for k in 0..15 {
                // column k is year 1992 + k, i.e. thickness index 19 − k
                assert_eq!(seq.targets.get(r, k), rec.thickness()[r][19 - k]);
            }
            for (t, g) in seq.graphs.iter().enumerate() {
                assert_eq!(g.features.get(r, 2), rec.thickness()[r][4 - t]);
            }
        }
    }

    #[test]
    fn degenerate_and_two_value_stats() {
        let mut seq = assemble_sequence(&record(2, 20), &SequenceConfig::default()).unwrap();
        for g in &mut seq.graphs {
            for r in 0..2 {
                g.features.set(r, 2, 7.0);
            }
        }
        let st = compute_stats_default(std::slice::from_ref(&seq)).unwrap();
        assert_eq!(st.feature_mean[2], 7.0);
        assert_eq!(st.feature_std[2], 1.0);

        assert_eq!(mean_std([1.0, 3.0].into_iter()), (2.0, 1.0));
        assert!(compute_stats_default(&[]).is_err());
    }

    #[test]
    fn normalization_round_trip() {
        let seq = assemble_sequence(&record(5, 20), &SequenceConfig::default()).unwrap();
        let st = compute_stats_default(std::slice::from_ref(&seq)).unwrap();
        let norm = apply_feature_normalization(&seq, &st).unwrap();
        for (g, gn) in seq.graphs.iter().zip(&norm.graphs) {
            assert!(
                st.denormalize_features(&gn.features)
                    .max_abs_diff(&g.features)
                    < 1e-12
            );
        }
        assert!(
            st.denormalize_targets(&norm.targets)
                .max_abs_diff(&seq.targets)
                < 1e-12
        );
        norm.adjacency.validate().unwrap();

        let mut x = Tensor::zeros(1, 3);
        for c in 0..3 {
            x.set(0, c, st.feature_mean[c] + st.feature_std[c]);
        }
        let z = st.normalize_features(&x);
        assert!(z.data().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn collapsed_features_layout() {
        let seq = assemble_sequence(&record(3, 20), &SequenceConfig::default()).unwrap();
        let st = compute_stats_default(std::slice::from_ref(&seq)).unwrap();
        let norm = apply_feature_normalization(&seq, &st).unwrap();
        let c = norm.collapsed_features();
        assert_eq!(c.shape(), (3, 7));
        for r in 0..3 {
            assert_eq!(c.get(r, 0), norm.graphs[0].features.get(r, 0));
            for t in 0..5 {
                assert_eq!(c.get(r, 2 + t), norm.graphs[t].features.get(r, 2));
            }
        }
    }
}
