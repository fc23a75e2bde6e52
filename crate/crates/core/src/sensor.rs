//! Laser scanner calibration.
//!
//! A [`SensorConfig`] describes the scan grid (`rows` laser channels by
//! `cols` firing sequences per revolution), the maximum measurable range,
//! and one [`ChannelCalib`] per row. Angles are kept in degrees, exactly as
//! written in the calibration document, so that loading and re-serializing a
//! document is lossless; radian accessors convert on demand.
//!
//! Calibration document (TOML):
//!
//! ```toml
//! rows = 32
//! cols = 1812
//! max_range = 200.0      # meters
//! rotation_hz = 10.0     # informational
//!
//! [[channel]]            # one table per row, in row order
//! elevation_deg = -25.0
//! azimuth_offset_deg = 1.4
//! ```

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Row indices travel as `u8` in the NaN sidecar.
pub const MAX_ROWS: usize = 256;
/// Column indices travel as `u16`.
pub const MAX_COLS: usize = u16::MAX as usize;

const SYNTHETIC_32: &str = include_str!("../assets/synthetic_32.toml");

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("malformed calibration document: {0}")]
    Malformed(String),
    #[error("calibration lists {found} channels but rows = {rows}")]
    ChannelCount { rows: usize, found: usize },
    #[error("channel {row}: {what} {value} deg out of range")]
    AngleOutOfRange {
        row: usize,
        what: &'static str,
        value: f64,
    },
    #[error("invalid scan geometry: {0}")]
    Geometry(String),
    #[error("row {row} out of range for a {rows}-row sensor")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("cannot read calibration {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCalib {
    pub elevation_deg: f64,
    pub azimuth_offset_deg: f64,
}

impl ChannelCalib {
    pub fn from_radians(elevation: f64, azimuth_offset: f64) -> Self {
        ChannelCalib {
            elevation_deg: elevation.to_degrees(),
            azimuth_offset_deg: azimuth_offset.to_degrees(),
        }
    }

    /// Elevation angle in radians.
    pub fn elevation(&self) -> f64 {
        self.elevation_deg.to_radians()
    }

    /// Per-channel firing offset in radians.
    pub fn azimuth_offset(&self) -> f64 {
        self.azimuth_offset_deg.to_radians()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    rows: usize,
    cols: usize,
    max_range: f64,
    #[serde(default = "default_rotation_hz")]
    rotation_hz: f64,
    #[serde(default, rename = "channel")]
    channels: Vec<ChannelCalib>,
}

fn default_rotation_hz() -> f64 {
    10.0
}

/// Immutable, validated sensor calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    rows: usize,
    cols: usize,
    max_range: f64,
    rotation_hz: f64,
    channels: Vec<ChannelCalib>,
}

impl SensorConfig {
    pub fn new(
        rows: usize,
        cols: usize,
        max_range: f64,
        rotation_hz: f64,
        channels: Vec<ChannelCalib>,
    ) -> Result<Self, SensorError> {
        if rows == 0 || rows > MAX_ROWS {
            return Err(SensorError::Geometry(format!(
                "rows must be in 1..={MAX_ROWS}, got {rows}"
            )));
        }
        if cols == 0 || cols > MAX_COLS {
            return Err(SensorError::Geometry(format!(
                "cols must be in 1..={MAX_COLS}, got {cols}"
            )));
        }
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(SensorError::Geometry(format!(
                "max_range must be positive, got {max_range}"
            )));
        }
        if channels.len() != rows {
            return Err(SensorError::ChannelCount {
                rows,
                found: channels.len(),
            });
        }
        for (row, ch) in channels.iter().enumerate() {
            let e = ch.elevation_deg;
            if !(e.is_finite() && e > -90.0 && e < 90.0) {
                return Err(SensorError::AngleOutOfRange {
                    row,
                    what: "elevation",
                    value: e,
                });
            }
            let a = ch.azimuth_offset_deg;
            if !(a.is_finite() && a > -180.0 && a <= 180.0) {
                return Err(SensorError::AngleOutOfRange {
                    row,
                    what: "azimuth offset",
                    value: a,
                });
            }
        }
        Ok(SensorConfig {
            rows,
            cols,
            max_range,
            rotation_hz,
            channels,
        })
    }

    /// Parses and validates a calibration document.
    pub fn load_config(source: &str) -> Result<Self, SensorError> {
        let doc: ConfigDocument =
            toml::from_str(source).map_err(|e| SensorError::Malformed(e.to_string()))?;
        SensorConfig::new(
            doc.rows,
            doc.cols,
            doc.max_range,
            doc.rotation_hz,
            doc.channels,
        )
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, SensorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SensorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::load_config(&text)
    }

    pub fn serialize_config(&self) -> String {
        let doc = ConfigDocument {
            rows: self.rows,
            cols: self.cols,
            max_range: self.max_range,
            rotation_hz: self.rotation_hz,
            channels: self.channels.clone(),
        };
        toml::to_string(&doc).expect("calibration document always serializes")
    }

    /// The bundled 32 x 1812 synthetic calibration used by the generator and tests.
    pub fn synthetic_default() -> Self {
        Self::load_config(SYNTHETIC_32).expect("bundled calibration is valid")
    }

    /// Evenly spaced elevations in `[lo_deg, hi_deg]`, zero azimuth offsets.
    pub fn uniform(
        rows: usize,
        cols: usize,
        max_range: f64,
        lo_deg: f64,
        hi_deg: f64,
    ) -> Result<Self, SensorError> {
        let step = if rows > 1 {
            (hi_deg - lo_deg) / (rows - 1) as f64
        } else {
            0.0
        };
        let channels = (0..rows)
            .map(|r| ChannelCalib {
                elevation_deg: lo_deg + step * r as f64,
                azimuth_offset_deg: 0.0,
            })
            .collect();
        SensorConfig::new(rows, cols, max_range, 10.0, channels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn rotation_hz(&self) -> f64 {
        self.rotation_hz
    }

    pub fn channels(&self) -> &[ChannelCalib] {
        &self.channels
    }

    pub fn points_per_revolution(&self) -> usize {
        self.rows * self.cols
    }

    /// Angular width of one column, radians.
    pub fn column_step(&self) -> f64 {
        TAU / self.cols as f64
    }

    fn channel(&self, row: usize) -> Result<&ChannelCalib, SensorError> {
        self.channels.get(row).ok_or(SensorError::RowOutOfRange {
            row,
            rows: self.rows,
        })
    }

    pub fn elevation_for_row(&self, row: usize) -> Result<f64, SensorError> {
        Ok(self.channel(row)?.elevation())
    }

    /// Columns by which `row` must be rotated so its pixels share the
    /// azimuth of the column they land in.
    pub fn column_shift(&self, row: usize) -> Result<i64, SensorError> {
        let offset = self.channel(row)?.azimuth_offset();
        Ok(shift_for_offset(offset, self.cols))
    }

    /// Nominal azimuth of column `col` before the channel offset, radians in `[-pi, pi)`.
    pub fn column_azimuth(&self, col: usize) -> f64 {
        column_azimuth(col, self.cols)
    }

    /// Truncated SHA-256 over the geometry and channel table.
    ///
    /// `rotation_hz` is informational and excluded.
    pub fn digest(&self) -> [u8; 8] {
        let mut h = Sha256::new();
        h.update((self.rows as u32).to_le_bytes());
        h.update((self.cols as u32).to_le_bytes());
        h.update(self.max_range.to_bits().to_le_bytes());
        for ch in &self.channels {
            h.update(ch.elevation_deg.to_bits().to_le_bytes());
            h.update(ch.azimuth_offset_deg.to_bits().to_le_bytes());
        }
        let out = h.finalize();
        let mut d = [0u8; 8];
        d.copy_from_slice(&out[..8]);
        d
    }
}

/// `round(offset / (2 pi / cols))`, ties away from zero.
pub fn shift_for_offset(offset: f64, cols: usize) -> i64 {
    (offset / (TAU / cols as f64)).round() as i64
}

pub fn column_azimuth(col: usize, cols: usize) -> f64 {
    -std::f64::consts::PI + TAU * col as f64 / cols as f64
}
