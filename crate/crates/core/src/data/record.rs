use crate::error::{Error, Result};
use crate::graph::GeoPoint;

/// Layer geometry of one labeled echogram: a geolocation and an ordered list
/// of layer-top rows (pixels from the image top) per column.
///
/// Thickness `k` of a column is `top[k+1] − top[k]`; every column carries the
/// same number of tops.
#[derive(Clone, Debug, PartialEq)]
pub struct EchogramRecord {
    id: String,
    points: Vec<GeoPoint>,
    tops: Vec<Vec<f64>>,
    thickness: Vec<Vec<f64>>,
}

impl EchogramRecord {
    pub fn new(id: impl Into<String>, points: Vec<GeoPoint>, tops: Vec<Vec<f64>>) -> Result<Self> {
        let id = id.into();
        if points.len() != tops.len() {
            return Err(Error::data(
                &id,
                format!("{} geolocations for {} columns", points.len(), tops.len()),
            ));
        }
        if points.is_empty() {
            return Err(Error::data(&id, "record has no columns"));
        }
        let n_tops = tops[0].len();
        let mut thickness = Vec::with_capacity(tops.len());
        for (c, col) in tops.iter().enumerate() {
            if col.len() != n_tops {
                return Err(Error::data(
                    &id,
                    format!(
                        "column {c} has {} layer tops, column 0 has {n_tops}",
                        col.len()
                    ),
                ));
            }
            if col.len() < 2 {
                return Err(Error::data(
                    &id,
                    format!("column {c} has fewer than 2 layer tops"),
                ));
            }
            if let Some(bad) = col.iter().find(|v| !v.is_finite()) {
                return Err(Error::data(
                    &id,
                    format!("column {c} has non-finite top {bad}"),
                ));
            }
            let diffs: Vec<f64> = col.windows(2).map(|w| w[1] - w[0]).collect();
            if let Some(k) = diffs.iter().position(|&d| d <= 0.0) {
                return Err(Error::data(
                    &id,
                    format!("column {c} layer tops not strictly increasing at index {k}"),
                ));
            }
            thickness.push(diffs);
        }
        Ok(Self {
            id,
            points,
            tops,
            thickness,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_columns(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn tops(&self) -> &[Vec<f64>] {
        &self.tops
    }

    /// Per-column thicknesses, surface-most layer first.
    pub fn thickness(&self) -> &[Vec<f64>] {
        &self.thickness
    }

    /// Number of thickness values per column (labeled tops − 1).
    pub fn layer_count(&self) -> usize {
        self.thickness[0].len()
    }
}
