//! Seeded ray-cast scans of simple box scenes.
//!
//! Beam `(row, col)` leaves the origin at the row's calibrated elevation and
//! at azimuth `column_azimuth(col) + offset(row)`, i.e. the raw, unshifted
//! firing grid. The closest hit on the ground plane or a box within `d_max`
//! is returned; misses and dropped beams become NaN records.
//!
//! Randomness comes from ChaCha8 seeded with `SceneSpec::seed`. Column `c`
//! draws from stream `c`; the dropout selection draws from stream
//! `u64::MAX`. Scans are therefore identical regardless of thread count.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{firing_index, PointCloud, PointRecord};
use crate::exec::Exec;
use crate::projection::{point_from_polar, wrap_angle};
use crate::sensor::SensorConfig;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("dropout rate {0} outside [0, 1]")]
    Dropout(f64),
    #[error("box {index} has non-positive extent {extents:?}")]
    Extent { index: usize, extents: [f64; 3] },
    #[error("range noise {0} must be finite and >= 0")]
    Noise(f64),
    #[error("non-finite scene value in {0}")]
    NonFinite(&'static str),
    #[error("scene file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundPlane {
    /// Height of the plane `z = height`, meters.
    pub height: f64,
    pub intensity: u8,
}

/// Solid axis-aligned box. `extents` are full edge lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub extents: [f64; 3],
    pub intensity: u8,
}

fn default_intensity_noise() -> u8 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub ground: Option<GroundPlane>,
    #[serde(default, rename = "box")]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of Gaussian range noise, meters.
    #[serde(default)]
    pub range_noise: f64,
    /// Intensity jitter bound: a rounded Gaussian with standard deviation
    /// `n / 2.5`, clamped to `[-n, n]`, is added per return.
    #[serde(default = "default_intensity_noise")]
    pub intensity_noise: u8,
}

/// Bookkeeping of one generated scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SynthStats {
    /// Beams that hit a surface and were kept.
    pub hits: usize,
    /// Beams that hit a surface and were removed by dropout.
    pub dropped: usize,
    /// Beams without a surface within `d_max`.
    pub misses: usize,
}

impl SceneSpec {
    pub fn empty(seed: u64) -> Self {
        SceneSpec {
            ground: None,
            boxes: Vec::new(),
            dropout_rate: 0.0,
            seed,
            range_noise: 0.0,
            intensity_noise: default_intensity_noise(),
        }
    }

    /// A walled courtyard with a ground plane and seeded clutter.
    ///
    /// Every beam of the default sensor hits something, so the NaN count is
    /// exactly the dropout count.
    pub fn courtyard(seed: u64, dropout_rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5CE7E);
        let half = rng.random_range(30.0..45.0);
        let wall = |center: [f64; 3], extents: [f64; 3], intensity| BoxSpec {
            center,
            extents,
            intensity,
        };
        let (top, bottom) = (40.0, -3.0);
        let zc = (top + bottom) / 2.0;
        let h = top - bottom;
        let span = 2.0 * half + 2.0;
        let mut boxes = vec![
            wall([half + 0.5, 0.0, zc], [1.0, span, h], 110),
            wall([-half - 0.5, 0.0, zc], [1.0, span, h], 130),
            wall([0.0, half + 0.5, zc], [span, 1.0, h], 150),
            wall([0.0, -half - 0.5, zc], [span, 1.0, h], 170),
        ];
        for _ in 0..14 {
            let ext = [
                rng.random_range(1.5..8.0),
                rng.random_range(1.5..8.0),
                rng.random_range(1.2..9.0),
            ];
            // Keep clutter clear of the sensor.
            let (x, y) = loop {
                let x: f64 = rng.random_range(-half + 4.0..half - 4.0);
                let y: f64 = rng.random_range(-half + 4.0..half - 4.0);
                if x.abs() > ext[0] / 2.0 + 3.0 || y.abs() > ext[1] / 2.0 + 3.0 {
                    break (x, y);
                }
            };
            boxes.push(wall(
                [x, y, -1.8 + ext[2] / 2.0],
                ext,
                rng.random_range(30..=230),
            ));
        }
        SceneSpec {
            ground: Some(GroundPlane {
                height: -1.8,
                intensity: 40,
            }),
            boxes,
            dropout_rate,
            seed,
            range_noise: 0.04,
            intensity_noise: default_intensity_noise(),
        }
    }

    pub fn load(source: &str) -> Result<Self, SceneError> {
        let spec: SceneSpec =
            toml::from_str(source).map_err(|e| SceneError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(SceneError::Dropout(self.dropout_rate));
        }
        if !(self.range_noise.is_finite() && self.range_noise >= 0.0) {
            return Err(SceneError::Noise(self.range_noise));
        }
        if let Some(g) = &self.ground {
            if !g.height.is_finite() {
                return Err(SceneError::NonFinite("ground"));
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if b.center.iter().any(|v| !v.is_finite()) {
                return Err(SceneError::NonFinite("box center"));
            }
            if b.extents.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
                return Err(SceneError::Extent {
                    index: i,
                    extents: b.extents,
                });
            }
        }
        Ok(())
    }
}

/// Distance along the unit ray `dir` to the entry face of `b`.
///
/// Boxes that contain the origin are transparent.
fn ray_box(dir: &[f64; 3], b: &BoxSpec) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for ((&d, &center), &extent) in dir.iter().zip(&b.center).zip(&b.extents) {
        let lo = center - extent / 2.0;
        let hi = center + extent / 2.0;
        if d == 0.0 {
            if 0.0 < lo || 0.0 > hi {
                return None;
            }
            continue;
        }
        let (a, c) = (lo / d, hi / d);
        let (a, c) = if a < c { (a, c) } else { (c, a) };
        t_near = t_near.max(a);
        t_far = t_far.min(c);
    }
    (t_near <= t_far && t_near > 0.0).then_some(t_near)
}

fn ray_ground(dir: &[f64; 3], g: &GroundPlane) -> Option<f64> {
    let t = g.height / dir[2];
    (t.is_finite() && t > 0.0).then_some(t)
}

/// Nearest surface hit within `d_max` as (distance, intensity).
pub fn cast(spec: &SceneSpec, dir: &[f64; 3], d_max: f64) -> Option<(f64, u8)> {
    let ground = spec
        .ground
        .as_ref()
        .and_then(|g| ray_ground(dir, g).map(|t| (t, g.intensity)));
    spec.boxes
        .iter()
        .filter_map(|b| ray_box(dir, b).map(|t| (t, b.intensity)))
        .chain(ground)
        .filter(|&(t, _)| t <= d_max)
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

pub fn synth_scan(spec: &SceneSpec, config: &SensorConfig) -> PointCloud {
    synth_scan_with(spec, config, Exec::default()).0
}

/// Generates an ordered scan and its bookkeeping.
pub fn synth_scan_with(
    spec: &SceneSpec,
    config: &SensorConfig,
    exec: Exec,
) -> (PointCloud, SynthStats) {
    let (rows, cols) = (config.rows(), config.cols());
    let d_max = config.max_range();
    let channels: Vec<(f64, f64)> = config
        .channels()
        .iter()
        .map(|c| (c.elevation(), c.azimuth_offset()))
        .collect();
    let noise = Normal::new(0.0, spec.range_noise).ok();
    let jitter = spec.intensity_noise as f64;
    let jitter_dist = Normal::new(0.0, jitter / 2.5).ok();

    let columns = exec.map_indices(cols, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(c as u64);
        let base = config.column_azimuth(c);
        channels
            .iter()
            .map(|&(w, off)| {
                let dir = point_from_polar(1.0, wrap_angle(base + off), w);
                let (t, surface) = cast(spec, &dir, d_max)?;
                let dn = match &noise {
                    Some(n) if spec.range_noise > 0.0 => n.sample(&mut rng),
                    _ => 0.0,
                };
                let d = (t + dn).clamp(0.0, d_max);
                let di = match &jitter_dist {
                    Some(n) if jitter > 0.0 => {
                        n.sample(&mut rng).round().clamp(-jitter, jitter) as i32
                    }
                    _ => 0,
                };
                let i = (surface as i32 + di).clamp(0, 255) as u8;
                Some(PointRecord::new(
                    (dir[0] * d) as f32,
                    (dir[1] * d) as f32,
                    (dir[2] * d) as f32,
                    i,
                ))
            })
            .collect::<Vec<_>>()
    });

    let mut points = vec![PointRecord::NAN; rows * cols];
    let mut hit_slots = Vec::new();
    for (c, col) in columns.into_iter().enumerate() {
        for (r, p) in col.into_iter().enumerate() {
            if let Some(p) = p {
                let i = firing_index(r, c, rows);
                points[i] = p;
                hit_slots.push(i);
            }
        }
    }
    let total_hits = hit_slots.len();
    let dropped = (spec.dropout_rate * total_hits as f64).round() as usize;
    if dropped > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::MAX);
        for k in index::sample(&mut rng, total_hits, dropped) {
            points[hit_slots[k]] = PointRecord::NAN;
        }
    }
    let stats = SynthStats {
        hits: total_hits - dropped,
        dropped,
        misses: rows * cols - total_hits,
    };
    let cloud = PointCloud::ordered(points, rows, cols, format!("synth-{}", spec.seed))
        .expect("sized from the grid");
    (cloud, stats)
}
