use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use image::GrayImage;
use serde::Deserialize;

use super::container::{DatasetManifest, ManifestEntry};
use super::extract::extract_thickness;
use super::record::EchogramRecord;
use crate::error::{Error, Result};
use crate::graph::GeoPoint;

const MASK_EXTENSIONS: [&str; 4] = ["png", "pgm", "pbm", "pnm"];

#[derive(Deserialize)]
struct TrackRow {
    column_index: usize,
    lat: f64,
    lon: f64,
}

/// Parses a `column_index,lat,lon` CSV. Indices must run 0, 1, 2, ...
pub fn parse_track(reader: impl Read, name: &str) -> Result<Vec<GeoPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for (i, row) in rdr.deserialize::<TrackRow>().enumerate() {
        let row = row.map_err(|e| Error::data(name, format!("track row {}: {e}", i + 1)))?;
        if row.column_index != i {
            return Err(Error::data(
                name,
                format!(
                    "track row {} has column_index {}, expected {i}",
                    i + 1,
                    row.column_index
                ),
            ));
        }
        let p = GeoPoint::new(row.lat, row.lon)
            .map_err(|e| Error::data(name, format!("track row {}: {e}", i + 1)))?;
        points.push(p);
    }
    Ok(points)
}

pub fn read_track(path: &Path) -> Result<Vec<GeoPoint>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_track(f, &path.display().to_string())
}

/// Decodes a mask image, converting to 8-bit grayscale.
pub fn read_mask(path: &Path) -> Result<GrayImage> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| {
            Error::data(
                path.display().to_string(),
                format!("cannot decode image: {e}"),
            )
        })?;
    Ok(img.into_luma8())
}

/// Builds a record from a label mask and its per-column track.
pub fn ingest_echogram(id: &str, mask: &GrayImage, track: &[GeoPoint]) -> Result<EchogramRecord> {
    let (width, height) = (mask.width() as usize, mask.height() as usize);
    if width != track.len() {
        return Err(Error::data(
            id,
            format!(
                "image width {width} but track has {} positions",
                track.len()
            ),
        ));
    }
    let mut tops = Vec::with_capacity(width);
    let mut column = vec![0u8; height];
    for x in 0..width {
        for (y, px) in column.iter_mut().enumerate() {
            *px = mask.get_pixel(x as u32, y as u32).0[0];
        }
        let layers =
            extract_thickness(&column).map_err(|e| Error::data(id, format!("column {x}: {e}")))?;
        tops.push(layers.tops.iter().map(|&r| r as f64).collect::<Vec<_>>());
    }
    if let Some((x, c)) = tops
        .iter()
        .enumerate()
        .find(|(_, c)| c.len() != tops[0].len())
    {
        return Err(Error::data(
            id,
            format!(
                "inconsistent layer counts: column 0 has {} tops, column {x} has {}",
                tops[0].len(),
                c.len()
            ),
        ));
    }
    EchogramRecord::new(id, track.to_vec(), tops)
}

/// Outcome of ingesting a directory pair.
#[derive(Clone, Debug)]
pub struct IngestOutcome {
    pub accepted: Vec<EchogramRecord>,
    pub manifest: DatasetManifest,
}

/// Pairs `<stem>.{png,pgm,...}` masks with `<stem>.csv` tracks, ingests each
/// pair and filters by `min_layers`.
///
/// Unpaired files and undecodable images are errors. Records that fail
/// extraction are kept in the manifest as rejections.
pub fn ingest_dir(masks: &Path, tracks: &Path, min_layers: usize) -> Result<IngestOutcome> {
    let mask_files = list_by_stem(masks, &MASK_EXTENSIONS)?;
    let track_files = list_by_stem(tracks, &["csv"])?;

    let mut offenders: Vec<String> = mask_files
        .iter()
        .filter(|(s, _)| !track_files.contains_key(*s))
        .map(|(_, p)| format!("{} (no track)", p.display()))
        .collect();
    offenders.extend(
        track_files
            .iter()
            .filter(|(s, _)| !mask_files.contains_key(*s))
            .map(|(_, p)| format!("{} (no mask)", p.display())),
    );
    if !offenders.is_empty() {
        return Err(Error::data(
            "ingest",
            format!("unpaired files: {}", offenders.join(", ")),
        ));
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (stem, mask_path) in &mask_files {
        let mask = read_mask(mask_path)?;
        let track = read_track(&track_files[stem])?;
        match ingest_echogram(stem, &mask, &track) {
            Ok(r) => records.push(r),
            Err(Error::Data { reason, .. }) => {
                log::warn!("rejecting {stem}: {reason}");
                rejected.push(ManifestEntry::rejected(stem, None, reason));
            }
            Err(e) => return Err(e),
        }
    }
    let (accepted, mut manifest) = super::filter_dataset(records, min_layers)?;
    manifest.entries.extend(rejected);
    manifest.entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(IngestOutcome { accepted, manifest })
}

fn list_by_stem(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::data(path.display().to_string(), "file name is not UTF-8"))?
            .to_string();
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            return Err(Error::data(
                stem,
                format!("duplicate files {} and {}", prev.display(), path.display()),
            ));
        }
    }
    Ok(out)
}
