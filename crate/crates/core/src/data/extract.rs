use crate::error::{Error, Result};

/// Brightness at or above which a mask pixel counts as a layer top.
pub const MASK_THRESHOLD: u8 = 128;

/// Layer tops found in one mask column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnLayers {
    /// Rows of white pixels, top to bottom.
    pub tops: Vec<usize>,
    /// `tops[k+1] - tops[k]`.
    pub thickness: Vec<usize>,
}

/// Reads the layer tops of one column of an 8-bit label mask.
pub fn extract_thickness(column: &[u8]) -> Result<ColumnLayers> {
    let tops: Vec<usize> = column
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= MASK_THRESHOLD)
        .map(|(r, _)| r)
        .collect();
    if tops.len() < 2 {
        return Err(Error::invalid(format!(
            "column has {} white pixels, need at least 2",
            tops.len()
        )));
    }
    let thickness = tops.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(ColumnLayers { tops, thickness })
}

/// Inverse of [`extract_thickness`]: a binary column of `height` rows with
/// white pixels at `first_top` and then every cumulative thickness.
pub fn reconstruct_column(height: usize, first_top: usize, thickness: &[usize]) -> Result<Vec<u8>> {
    let mut col = vec![0u8; height];
    let mut row = first_top;
    for k in 0..=thickness.len() {
        if k > 0 {
            if thickness[k - 1] == 0 {
                return Err(Error::invalid("zero thickness cannot be drawn"));
            }
            row += thickness[k - 1];
        }
        if row >= height {
            return Err(Error::invalid(format!(
                "layer top {row} outside {height} rows"
            )));
        }
        col[row] = 255;
    }
    Ok(col)
}
