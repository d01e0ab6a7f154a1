//! Echogram records: mask ingestion, filtering, synthetic generation and the
//! binary dataset container.

mod container;
mod extract;
mod ingest;
mod record;
mod synth;

pub use container::{
    decode_dataset, encode_dataset, load_dataset, load_manifest, manifest_path, record_region_hash,
    save_dataset, DatasetManifest, EncodedDataset, ManifestEntry, Verdict, CONTAINER_VERSION,
    LAYER_CONVENTION, MANIFEST_VERSION,
};
pub use extract::{extract_thickness, reconstruct_column, ColumnLayers, MASK_THRESHOLD};
pub use ingest::{ingest_dir, ingest_echogram, parse_track, read_mask, read_track, IngestOutcome};
pub use record::EchogramRecord;
pub use synth::{
    apply_rule, distance_m, generate_record, generate_synthetic, DependencyRule, SyntheticConfig,
    EARTH_RADIUS_M, MIN_THICKNESS,
};

use crate::error::Result;

/// Default minimum: five feature thicknesses plus fifteen targets.
pub const DEFAULT_MIN_LAYERS: usize = 20;

/// Keeps records with at least `min_layers` thickness values per column. The
/// manifest lists every input record with its verdict, in input order.
pub fn filter_dataset(
    records: Vec<EchogramRecord>,
    min_layers: usize,
) -> Result<(Vec<EchogramRecord>, DatasetManifest)> {
    let mut verdicts = Vec::with_capacity(records.len());
    let mut accepted = Vec::new();
    for r in records {
        if r.layer_count() >= min_layers {
            verdicts.push(None);
            accepted.push(r);
        } else {
            verdicts.push(Some(ManifestEntry::rejected(
                r.id(),
                Some(r.layer_count()),
                format!("{} layers, fewer than {min_layers}", r.layer_count()),
            )));
        }
    }
    let mut manifest = DatasetManifest::for_records(&accepted, Some(min_layers));
    let mut kept = std::mem::take(&mut manifest.entries).into_iter();
    manifest.entries = verdicts
        .into_iter()
        .map(|v| v.unwrap_or_else(|| kept.next().expect("one entry per accepted record")))
        .collect();
    Ok((accepted, manifest))
}
