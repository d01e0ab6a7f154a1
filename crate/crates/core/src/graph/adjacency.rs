//! Fully connected, inverse-distance edge weights and their normalizations.

use super::geo::{haversine_angle, GeoPoint, HaversineMode};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const SELF_LOOP_WEIGHT: f64 = 2.0;
pub const DEFAULT_EPSILON_OFFSET: f64 = 0.01;

/// Symmetric edge weights with off-diagonals in (0, 1) and a diagonal of 2.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedAdjacency {
    weights: Tensor,
}

impl WeightedAdjacency {
    /// Wraps a matrix after checking every adjacency invariant.
    pub fn new(weights: Tensor) -> Result<Self> {
        let adj = Self { weights };
        adj.validate()?;
        Ok(adj)
    }

    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        if w.rows() != w.cols() {
            return Err(Error::dim("adjacency", w.shape(), w.shape()));
        }
        let n = w.rows();
        for i in 0..n {
            if w.get(i, i) != SELF_LOOP_WEIGHT {
                return Err(Error::Contract(format!(
                    "adjacency diagonal [{i}] is {}, expected {SELF_LOOP_WEIGHT}",
                    w.get(i, i)
                )));
            }
            for j in (i + 1)..n {
                let (a, b) = (w.get(i, j), w.get(j, i));
                if a != b {
                    return Err(Error::Contract(format!(
                        "adjacency asymmetric at ({i}, {j})"
                    )));
                }
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::Contract(format!(
                        "adjacency weight {a} at ({i}, {j}) outside (0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Degree-normalized propagation matrix `D^{-1/2} A D^{-1/2}`.
    pub fn propagation(&self) -> Result<Tensor> {
        symmetric_normalize(&self.weights)
    }
}

/// Reciprocal-angle weights for every node pair; the diagonal stays 0.
pub fn build_raw_adjacency(points: &[GeoPoint], mode: HaversineMode) -> Result<Tensor> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "adjacency needs at least 2 nodes, got {n}"
        )));
    }
    let mut raw = Tensor::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = 1.0 / haversine_angle(points[i], points[j], mode);
            raw.set(i, j, w);
            raw.set(j, i, w);
        }
    }
    Ok(raw)
}

/// Min and max over off-diagonal entries.
pub fn off_diagonal_range(raw: &Tensor) -> Option<(f64, f64)> {
    let n = raw.rows();
    let mut range: Option<(f64, f64)> = None;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = raw.get(i, j);
            range = Some(match range {
                None => (w, w),
                Some((lo, hi)) => (lo.min(w), hi.max(w)),
            });
        }
    }
    range
}

/// Offset min-max map of the off-diagonals into `[ε, 1−ε]` using dataset-wide
/// bounds, then weight-2 self-loops. Values outside the bounds (unseen data)
/// are clamped into the same interval.
pub fn normalize_adjacency(
    raw: &Tensor,
    raw_min: f64,
    raw_max: f64,
    epsilon: f64,
) -> Result<WeightedAdjacency> {
    if raw.rows() != raw.cols() {
        return Err(Error::dim("normalize_adjacency", raw.shape(), raw.shape()));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid(format!(
            "epsilon offset {epsilon} not in (0, 0.5)"
        )));
    }
    if raw_min > raw_max {
        return Err(Error::invalid(format!(
            "raw range [{raw_min}, {raw_max}] is inverted"
        )));
    }
    let span = raw_max - raw_min;
    let n = raw.rows();
    let weights = Tensor::from_fn(n, n, |i, j| {
        if i == j {
            SELF_LOOP_WEIGHT
        } else if span == 0.0 {
            0.5
        } else {
            let t = (raw.get(i, j) - raw_min) / span;
            (epsilon + (1.0 - 2.0 * epsilon) * t).clamp(epsilon, 1.0 - epsilon)
        }
    });
    WeightedAdjacency::new(weights)
}

/// `D^{-1/2} A D^{-1/2}` with `D` the row sums of `A`.
///
/// Row sums are accumulated over sorted values so the result does not depend
/// on node order, which makes the map exactly permutation-equivariant.
pub fn symmetric_normalize(a: &Tensor) -> Result<Tensor> {
    if a.rows() != a.cols() {
        return Err(Error::dim("symmetric_normalize", a.shape(), a.shape()));
    }
    let n = a.rows();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = a.row(i).to_vec();
        row.sort_by(f64::total_cmp);
        let d: f64 = row.iter().sum();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numeric(format!(
                "row {i} of adjacency has degree {d}"
            )));
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    Ok(Tensor::from_fn(n, n, |i, j| {
        a.get(i, j) * (inv_sqrt[i] * inv_sqrt[j])
    }))
}

/// Chebyshev polynomials `T_1..T_K` of the propagation matrix:
/// `T_1 = Â`, `T_2 = 2Â² − I`, `T_k = 2Â·T_{k−1} − T_{k−2}`.
pub fn chebyshev_basis(prop: &Tensor, order: usize) -> Result<Vec<Tensor>> {
    if order == 0 {
        return Err(Error::invalid("chebyshev order must be at least 1"));
    }
    let n = prop.rows();
    let mut basis = vec![prop.clone()];
    let mut prev = Tensor::identity(n);
    while basis.len() < order {
        let last = basis.last().expect("non-empty");
        let next = prop.matmul(last)?.zip_with(&prev, |a, b| 2.0 * a - b)?;
        prev = last.clone();
        basis.push(next);
    }
    Ok(basis)
}
