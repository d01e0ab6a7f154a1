//! Synthetic echograms with a planted spatial and temporal signal.
//!
//! Each record follows a random-walk flight track. The five shallow years are
//! noisy observations of a latent thickness field (a Gaussian-bump mixture
//! along the track whose amplitudes drift slowly between years). Each deep
//! layer is a fixed function of the kernel-smoothed shallow history at the
//! node, so neighbours help denoise the input and the year order matters.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::record::EchogramRecord;
use crate::error::{Error, Result};
use crate::graph::{haversine_angle, GeoPoint, HaversineMode};
use crate::rng::{stream, Rng};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Thicknesses never drop below this many pixels.
pub const MIN_THICKNESS: f64 = 0.5;

/// Deep-layer rule. For node `i` with smoothed shallow values `S_0..S_4`
/// (oldest first), `m = mean(S)`, recency-weighted mean
/// `r = Σ 2^t S_t / Σ 2^t`, and deep column `k` (oldest first):
///
/// ```text
/// g_k  = mean_weight·m + recency_weight·(k+1)/n_deep·r + trend_weight·(S_4 − S_0)
///      + curvature_weight·tanh(S_2 − m) + lat_weight·(lat_i − origin_lat)
/// y_k  = max(MIN_THICKNESS, (1 − compaction·(n_deep−1−k)/(n_deep−1))·(intercept + dependency·g_k))
/// ```
///
/// Smoothing is `S_t(i) = Σ_j K_ij x_t(j) / Σ_j K_ij` with
/// `K_ij = exp(−(d_ij/kernel_length_m)²/2)` over great-circle metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DependencyRule {
    pub intercept: f64,
    /// Scales every data-dependent term; 0 gives a pure-noise control.
    pub dependency: f64,
    pub mean_weight: f64,
    pub recency_weight: f64,
    pub trend_weight: f64,
    pub curvature_weight: f64,
    pub lat_weight: f64,
    pub compaction: f64,
    pub kernel_length_m: f64,
}

impl Default for DependencyRule {
    fn default() -> Self {
        Self {
            intercept: 4.0,
            dependency: 1.0,
            mean_weight: 0.5,
            recency_weight: 0.4,
            trend_weight: 0.8,
            curvature_weight: 1.5,
            lat_weight: 1.0,
            compaction: 0.4,
            kernel_length_m: 25.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_records: usize,
    pub n_nodes: usize,
    pub n_shallow: usize,
    pub n_deep: usize,
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Records start uniformly within this many degrees of the origin.
    pub origin_spread_deg: f64,
    pub heading_deg: f64,
    /// Per-column standard deviation of the heading random walk.
    pub heading_jitter_deg: f64,
    pub column_spacing_m: f64,
    /// Typical width of the latent thickness bumps.
    pub correlation_length_m: f64,
    pub n_bumps: usize,
    pub base_thickness: f64,
    pub bump_amplitude: f64,
    /// Year-to-year correlation of bump amplitudes, in [0, 1].
    pub temporal_smoothness: f64,
    /// Per-node noise on the shallow observations.
    pub observation_noise_std: f64,
    /// Noise added to the deep targets.
    pub noise_std: f64,
    pub surface_row: f64,
    pub rule: DependencyRule,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_records: 600,
            n_nodes: 256,
            n_shallow: 5,
            n_deep: 15,
            origin_lat: 72.0,
            origin_lon: -40.0,
            origin_spread_deg: 1.0,
            heading_deg: 45.0,
            heading_jitter_deg: 2.0,
            column_spacing_m: 14.5,
            correlation_length_m: 300.0,
            n_bumps: 6,
            base_thickness: 10.0,
            bump_amplitude: 3.0,
            temporal_smoothness: 0.8,
            observation_noise_std: 1.0,
            noise_std: 0.25,
            surface_row: 20.0,
            rule: DependencyRule::default(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_records == 0 || self.n_nodes < 2 || self.n_shallow == 0 || self.n_deep == 0 {
            return bad("n_records, n_shallow and n_deep must be positive and n_nodes at least 2");
        }
        if self.n_deep < 2 && self.rule.compaction != 0.0 {
            return bad("compaction needs n_deep of at least 2");
        }
        if !(self.noise_std >= 0.0 && self.observation_noise_std >= 0.0) {
            return bad("noise standard deviations must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.temporal_smoothness) {
            return bad("temporal_smoothness must lie in [0, 1]");
        }
        if !(self.column_spacing_m > 0.0
            && self.correlation_length_m > 0.0
            && self.rule.kernel_length_m > 0.0)
        {
            return bad("lengths must be positive");
        }
        if !(self.surface_row >= 0.0 && self.base_thickness > 0.0) {
            return bad("surface_row must be non-negative and base_thickness positive");
        }
        Ok(())
    }
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn track(cfg: &SyntheticConfig, rng: &mut Rng) -> Result<Vec<GeoPoint>> {
    let spread = cfg.origin_spread_deg;
    let mut lat = cfg.origin_lat + spread * rng.random_range(-1.0..=1.0);
    let mut lon = cfg.origin_lon + 2.0 * spread * rng.random_range(-1.0..=1.0);
    let mut heading = (cfg.heading_deg + 30.0 * rng.random_range(-1.0..=1.0)).to_radians();
    let step = cfg.column_spacing_m / EARTH_RADIUS_M;
    let mut pts = Vec::with_capacity(cfg.n_nodes);
    for i in 0..cfg.n_nodes {
        if i > 0 {
            heading += cfg.heading_jitter_deg.to_radians() * normal(rng);
            lat += (step * heading.cos()).to_degrees();
            lon += (step * heading.sin() / lat.to_radians().cos()).to_degrees();
        }
        pts.push(GeoPoint::new(lat, lon)?);
    }
    Ok(pts)
}

/// Great-circle distance in metres.
pub fn distance_m(p: GeoPoint, q: GeoPoint) -> f64 {
    if p == q {
        return 0.0;
    }
    haversine_angle(p, q, HaversineMode::Standard) * EARTH_RADIUS_M
}

/// Observed shallow thicknesses, `[node][year]`, oldest year first.
fn shallow_observations(cfg: &SyntheticConfig, rng: &mut Rng) -> Vec<Vec<f64>> {
    let length = (cfg.n_nodes - 1) as f64 * cfg.column_spacing_m;
    let centers: Vec<f64> = (0..cfg.n_bumps)
        .map(|_| rng.random_range(0.0..=length))
        .collect();
    let widths: Vec<f64> = (0..cfg.n_bumps)
        .map(|_| cfg.correlation_length_m * rng.random_range(0.5..1.5))
        .collect();
    let rho = cfg.temporal_smoothness;
    let mut amps: Vec<f64> = (0..cfg.n_bumps)
        .map(|_| cfg.bump_amplitude * normal(rng))
        .collect();
    let mut obs = vec![vec![0.0; cfg.n_shallow]; cfg.n_nodes];
    for t in 0..cfg.n_shallow {
        if t > 0 {
            for a in &mut amps {
                *a = rho * *a + (1.0 - rho * rho).sqrt() * cfg.bump_amplitude * normal(rng);
            }
        }
        let base = cfg.base_thickness * (1.0 + 0.05 * normal(rng));
        for (i, row) in obs.iter_mut().enumerate() {
            let s = i as f64 * cfg.column_spacing_m;
            let latent: f64 = base
                + (0..cfg.n_bumps)
                    .map(|b| amps[b] * (-0.5 * ((s - centers[b]) / widths[b]).powi(2)).exp())
                    .sum::<f64>();
            let x = latent + cfg.observation_noise_std * normal(rng);
            row[t] = x.max(MIN_THICKNESS);
        }
    }
    obs
}

/// Noise-free deep thicknesses for one record, `[node][k]`, oldest first.
/// `shallow` is `[node][year]`, oldest year first.
pub fn apply_rule(
    cfg: &SyntheticConfig,
    points: &[GeoPoint],
    shallow: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let n = points.len();
    let rule = &cfg.rule;
    let t_len = cfg.n_shallow;
    let mut smoothed = vec![vec![0.0; t_len]; n];
    for i in 0..n {
        let mut wsum = 0.0;
        for j in 0..n {
            let d = distance_m(points[i], points[j]) / rule.kernel_length_m;
            let w = (-0.5 * d * d).exp();
            wsum += w;
            for t in 0..t_len {
                smoothed[i][t] += w * shallow[j][t];
            }
        }
        for v in &mut smoothed[i] {
            *v /= wsum;
        }
    }
    let rec_w: Vec<f64> = (0..t_len).map(|t| 2f64.powi(t as i32)).collect();
    let rec_total: f64 = rec_w.iter().sum();
    let mid = t_len / 2;
    (0..n)
        .map(|i| {
            let s = &smoothed[i];
            let m = s.iter().sum::<f64>() / t_len as f64;
            let r = s.iter().zip(&rec_w).map(|(v, w)| v * w).sum::<f64>() / rec_total;
            let trend = s[t_len - 1] - s[0];
            let curve = (s[mid] - m).tanh();
            let lat = points[i].lat() - cfg.origin_lat;
            (0..cfg.n_deep)
                .map(|k| {
                    let g = rule.mean_weight * m
                        + rule.recency_weight * (k + 1) as f64 / cfg.n_deep as f64 * r
                        + rule.trend_weight * trend
                        + rule.curvature_weight * curve
                        + rule.lat_weight * lat;
                    let age = if cfg.n_deep > 1 {
                        (cfg.n_deep - 1 - k) as f64 / (cfg.n_deep - 1) as f64
                    } else {
                        0.0
                    };
                    let comp = 1.0 - rule.compaction * age;
                    (comp * (rule.intercept + rule.dependency * g)).max(MIN_THICKNESS)
                })
                .collect()
        })
        .collect()
}

/// One synthetic record. Thickness index 0 is the newest shallow year; the
/// deep layers follow, newest first, matching how labeled masks are read.
pub fn generate_record(cfg: &SyntheticConfig, index: usize) -> Result<EchogramRecord> {
    let mut rng = stream(cfg.seed, "synthetic-record", index as u64);
    let points = track(cfg, &mut rng)?;
    let obs = shallow_observations(cfg, &mut rng);

    let mut tops = Vec::with_capacity(cfg.n_nodes);
    let mut shallow = Vec::with_capacity(cfg.n_nodes);
    for row in &obs {
        let mut col = vec![cfg.surface_row];
        for t in (0..cfg.n_shallow).rev() {
            col.push(col.last().unwrap() + row[t]);
        }
        // the rule sees the thicknesses exactly as they read back from tops
        let mut read: Vec<f64> = col.windows(2).map(|w| w[1] - w[0]).collect();
        read.reverse();
        shallow.push(read);
        tops.push(col);
    }

    let deep = apply_rule(cfg, &points, &shallow);
    for (col, d) in tops.iter_mut().zip(&deep) {
        for k in (0..cfg.n_deep).rev() {
            let y = (d[k] + cfg.noise_std * normal(&mut rng)).max(MIN_THICKNESS);
            col.push(col.last().unwrap() + y);
        }
    }
    EchogramRecord::new(format!("synth-{index:05}"), points, tops)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<EchogramRecord>> {
    cfg.validate()?;
    (0..cfg.n_records)
        .map(|i| generate_record(cfg, i))
        .collect()
}
