//! Lossless projection between ordered scans and calibrated raster planes.
//!
//! Each beam `(row, col)` of an ordered scan becomes one pixel in three
//! co-registered planes:
//!
//! - **range**: `floor(d / d_max * 65535)` as `u16`,
//! - **azimuth**: `atan2(-x, y)` mapped linearly from `[-pi, pi)` onto `u16`,
//! - **intensity**: the 8-bit return intensity.
//!
//! The elevation is not stored; it is a property of the laser row and comes
//! back from the calibration when points are rebuilt with
//!
//! ```text
//! x = d * sin(-a) * cos(w),  y = d * cos(a) * cos(w),  z = d * sin(w)
//! ```
//!
//! Beams without a return are listed in a [`NanIndex`] and skipped on
//! reconstruction, so the pixels they occupy may hold anything. Before
//! coding, rows are rotated by their channel's azimuth offset
//! ([`shift_planes`]) so that a column shares one azimuth, and NaN pixels are
//! filled to remove the dropout speckle ([`denoise`]).
//!
//! Dequantization returns bin midpoints, so the round-trip error of a single
//! point is at most `dd/2 + d * da/2` with `dd = d_max / 65535` and
//! `da = 2 pi / 65536`.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::cloud::{grid_cell, PointCloud, PointRecord};
use crate::grid::Grid;
use crate::sensor::{SensorConfig, SensorError};

pub const RANGE_LEVELS: f64 = 65535.0;
pub const AZIMUTH_BINS: f64 = 65536.0;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("range {d} m outside [0, {d_max}] m")]
    RangeOutOfBounds { d: f64, d_max: f64 },
    #[error("point {index}: range {d} m exceeds the sensor maximum {d_max} m")]
    PointOutOfRange { index: usize, d: f64, d_max: f64 },
    #[error("cloud is not ordered for a {rows}x{cols} sensor grid")]
    NotOrdered { rows: usize, cols: usize },
    #[error("planes are {found_rows}x{found_cols}, sensor grid is {rows}x{cols}")]
    GridMismatch {
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("planes are {actual}, operation needs them {required}")]
    WrongState {
        required: &'static str,
        actual: &'static str,
    },
    #[error("NaN index entry ({row}, {col}) outside the {rows}x{cols} grid")]
    NanIndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("NaN index entries must be unique and sorted by (row, col)")]
    NanIndexUnsorted,
    #[error("invalid normalization parameters (mu {mu}, theta {theta})")]
    InvalidNormalization { mu: f64, theta: f64 },
    #[error("normalization sample contains no valid returns")]
    EmptySample,
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

pub type Result<T> = std::result::Result<T, ProjectionError>;

/// Range, azimuth and intensity rasters of one scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanPlanes {
    pub range: Grid<u16>,
    pub azimuth: Grid<u16>,
    pub intensity: Grid<u8>,
    pub shifted: bool,
    pub denoised: bool,
}

impl ScanPlanes {
    pub fn rows(&self) -> usize {
        self.range.rows()
    }

    pub fn cols(&self) -> usize {
        self.range.cols()
    }

    fn check_grid(&self, config: &SensorConfig) -> Result<()> {
        let ok = self.range.same_shape(&self.azimuth)
            && self.range.same_shape(&self.intensity)
            && self.rows() == config.rows()
            && self.cols() == config.cols();
        if ok {
            Ok(())
        } else {
            Err(ProjectionError::GridMismatch {
                rows: config.rows(),
                cols: config.cols(),
                found_rows: self.rows(),
                found_cols: self.cols(),
            })
        }
    }
}

/// Grid cells of the beams that returned no echo, sorted by `(row, col)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NanIndex {
    rows: Vec<u8>,
    cols: Vec<u16>,
}

impl NanIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an index from parallel row/column arrays, which must already be
    /// sorted and free of duplicates.
    pub fn from_parts(rows: Vec<u8>, cols: Vec<u16>) -> Result<Self> {
        if rows.len() != cols.len() {
            return Err(ProjectionError::NanIndexUnsorted);
        }
        let idx = NanIndex { rows, cols };
        let sorted = idx.iter().zip(idx.iter().skip(1)).all(|(a, b)| a < b);
        if sorted {
            Ok(idx)
        } else {
            Err(ProjectionError::NanIndexUnsorted)
        }
    }

    /// Sorts and deduplicates arbitrary cells.
    pub fn from_cells(mut cells: Vec<(u8, u16)>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        let (rows, cols) = cells.into_iter().unzip();
        NanIndex { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_indices(&self) -> &[u8] {
        &self.rows
    }

    pub fn col_indices(&self) -> &[u16] {
        &self.cols
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, u16)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }

    pub fn check_bounds(&self, rows: usize, cols: usize) -> Result<()> {
        match self
            .iter()
            .find(|&(r, c)| r as usize >= rows || c as usize >= cols)
        {
            Some((r, c)) => Err(ProjectionError::NanIndexOutOfBounds {
                row: r as usize,
                col: c as usize,
                rows,
                cols,
            }),
            None => Ok(()),
        }
    }

    /// Row-major boolean mask, `true` on NaN cells.
    pub fn mask(&self, rows: usize, cols: usize) -> Result<Grid<bool>> {
        self.check_bounds(rows, cols)?;
        let mut m = Grid::filled(rows, cols, false);
        for (r, c) in self.iter() {
            m.set(r as usize, c as usize, true);
        }
        Ok(m)
    }
}

/// Affine range normalization `(d - mu) / theta` applied before neural coding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    /// Mean range, meters.
    pub mu: f32,
    /// 95th percentile of the ranges, meters.
    pub theta: f32,
}

impl NormalizationParams {
    /// Placeholder for frames whose ranges were never sampled.
    pub fn identity(d_max: f64) -> Self {
        NormalizationParams {
            mu: 0.0,
            theta: d_max as f32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok =
            self.theta.is_finite() && self.theta > 0.0 && self.mu.is_finite() && self.mu >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ProjectionError::InvalidNormalization {
                mu: self.mu as f64,
                theta: self.theta as f64,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftDirection {
    Forward,
    Inverse,
}

pub fn quantize_range(d: f64, d_max: f64) -> Result<u16> {
    if !(d >= 0.0 && d <= d_max) {
        return Err(ProjectionError::RangeOutOfBounds { d, d_max });
    }
    Ok((d / d_max * RANGE_LEVELS).floor().min(RANGE_LEVELS) as u16)
}

/// Midpoint of the range bin, capped at `d_max` (the top bin holds only `d_max`).
pub fn dequantize_range(q: u16, d_max: f64) -> f64 {
    ((q as f64 + 0.5) / RANGE_LEVELS * d_max).min(d_max)
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(alpha: f64) -> f64 {
    let a = (alpha + PI).rem_euclid(TAU) - PI;
    if a >= PI {
        a - TAU
    } else {
        a
    }
}

pub fn quantize_azimuth(alpha: f64) -> u16 {
    let t = (alpha + PI).rem_euclid(TAU) / TAU * AZIMUTH_BINS;
    t.floor().clamp(0.0, AZIMUTH_BINS - 1.0) as u16
}

pub fn dequantize_azimuth(q: u16) -> f64 {
    -PI + (q as f64 + 0.5) * TAU / AZIMUTH_BINS
}

/// Azimuth of a Cartesian point in the sensor frame, consistent with [`point_from_polar`].
pub fn azimuth_of(x: f64, y: f64) -> f64 {
    wrap_angle((-x).atan2(y))
}

pub fn point_from_polar(d: f64, azimuth: f64, elevation: f64) -> [f64; 3] {
    let (sa, ca) = azimuth.sin_cos();
    let (sw, cw) = elevation.sin_cos();
    [d * -sa * cw, d * ca * cw, d * sw]
}

/// Projects an ordered scan into unshifted, undenoised planes.
///
/// NaN pixels hold zeros and are listed in the returned index.
pub fn project(cloud: &PointCloud, config: &SensorConfig) -> Result<(ScanPlanes, NanIndex)> {
    let (rows, cols) = (config.rows(), config.cols());
    if cloud.grid != Some((rows, cols)) || cloud.len() != rows * cols {
        return Err(ProjectionError::NotOrdered { rows, cols });
    }
    let d_max = config.max_range();
    let mut range = Grid::filled(rows, cols, 0u16);
    let mut azimuth = Grid::filled(rows, cols, 0u16);
    let mut intensity = Grid::filled(rows, cols, 0u8);
    let mut nan_cells = Vec::new();

    for (i, p) in cloud.points.iter().enumerate() {
        let (r, c) = grid_cell(i, rows);
        if p.is_nan() {
            nan_cells.push((r as u8, c as u16));
            continue;
        }
        let d = p.range();
        let q = quantize_range(d, d_max).map_err(|_| ProjectionError::PointOutOfRange {
            index: i,
            d,
            d_max,
        })?;
        range.set(r, c, q);
        azimuth.set(r, c, quantize_azimuth(azimuth_of(p.x as f64, p.y as f64)));
        intensity.set(r, c, p.intensity);
    }

    let planes = ScanPlanes {
        range,
        azimuth,
        intensity,
        shifted: false,
        denoised: false,
    };
    Ok((planes, NanIndex::from_cells(nan_cells)))
}

/// Rotates every row by its channel's column shift (negated for
/// [`ShiftDirection::Inverse`]) across all planes and the NaN index.
pub fn shift_planes(
    planes: &ScanPlanes,
    nan: &NanIndex,
    config: &SensorConfig,
    direction: ShiftDirection,
) -> Result<(ScanPlanes, NanIndex)> {
    planes.check_grid(config)?;
    match (direction, planes.shifted) {
        (ShiftDirection::Forward, true) => {
            return Err(ProjectionError::WrongState {
                required: "unshifted",
                actual: "shifted",
            })
        }
        (ShiftDirection::Inverse, false) => {
            return Err(ProjectionError::WrongState {
                required: "shifted",
                actual: "unshifted",
            })
        }
        _ => {}
    }
    let (rows, cols) = (config.rows(), config.cols());
    nan.check_bounds(rows, cols)?;

    let shifts: Vec<usize> = (0..rows)
        .map(|r| {
            let s = config.column_shift(r)?;
            let s = match direction {
                ShiftDirection::Forward => s,
                ShiftDirection::Inverse => -s,
            };
            Ok(s.rem_euclid(cols as i64) as usize)
        })
        .collect::<Result<_>>()?;

    let mut out = planes.clone();
    for (r, &s) in shifts.iter().enumerate() {
        out.range.row_mut(r).rotate_right(s);
        out.azimuth.row_mut(r).rotate_right(s);
        out.intensity.row_mut(r).rotate_right(s);
    }
    out.shifted = direction == ShiftDirection::Forward;

    let cells = nan
        .iter()
        .map(|(r, c)| (r, ((c as usize + shifts[r as usize]) % cols) as u16))
        .collect();
    Ok((out, NanIndex::from_cells(cells)))
}

/// Fills NaN pixels so the planes compress without dropout speckle.
///
/// Range and intensity take the previous pixel in row-major scan order
/// (`0` at the very first pixel). Azimuth takes the nominal azimuth of the
/// column. Pixels not listed in `nan` are never touched.
pub fn denoise(planes: &ScanPlanes, nan: &NanIndex) -> Result<ScanPlanes> {
    if planes.denoised {
        return Err(ProjectionError::WrongState {
            required: "not yet denoised",
            actual: "denoised",
        });
    }
    let (rows, cols) = (planes.rows(), planes.cols());
    let mask = nan.mask(rows, cols)?;
    let mut out = planes.clone();
    fill_previous(out.range.as_mut_slice(), mask.as_slice());
    fill_previous(out.intensity.as_mut_slice(), mask.as_slice());
    for (r, c) in nan.iter() {
        let nominal = quantize_azimuth(crate::sensor::column_azimuth(c as usize, cols));
        out.azimuth.set(r as usize, c as usize, nominal);
    }
    out.denoised = true;
    Ok(out)
}

fn fill_previous<T: Copy + Default>(data: &mut [T], mask: &[bool]) {
    let mut prev = T::default();
    for (v, &is_nan) in data.iter_mut().zip(mask) {
        if is_nan {
            *v = prev;
        }
        prev = *v;
    }
}

/// Real-valued normalized range, `(q / 65535 * d_max - mu) / theta`.
pub fn normalize_range(
    range: &Grid<u16>,
    params: NormalizationParams,
    d_max: f64,
) -> Result<Grid<f32>> {
    params.validate()?;
    let (mu, theta) = (params.mu as f64, params.theta as f64);
    Ok(range.map(|q| ((q as f64 / RANGE_LEVELS * d_max - mu) / theta) as f32))
}

/// Inverse of [`normalize_range`], requantized to the nearest level.
pub fn denormalize_range(
    plane: &Grid<f32>,
    params: NormalizationParams,
    d_max: f64,
) -> Result<Grid<u16>> {
    params.validate()?;
    let (mu, theta) = (params.mu as f64, params.theta as f64);
    Ok(plane.map(|v| {
        let d = v as f64 * theta + mu;
        let q = (d / d_max * RANGE_LEVELS).round();
        if q.is_nan() {
            0
        } else {
            q.clamp(0.0, RANGE_LEVELS) as u16
        }
    }))
}

/// Mean and 95th percentile of every finite range in `sample`.
///
/// The percentile interpolates linearly between order statistics:
/// position `h = (n - 1) * 0.95` in the sorted list.
pub fn estimate_normalization(sample: &[PointCloud]) -> Result<NormalizationParams> {
    let mut ranges: Vec<f64> = sample
        .iter()
        .flat_map(|c| c.points.iter())
        .filter(|p| !p.is_nan())
        .map(PointRecord::range)
        .collect();
    if ranges.is_empty() {
        return Err(ProjectionError::EmptySample);
    }
    let mu = ranges.iter().sum::<f64>() / ranges.len() as f64;
    ranges.sort_by(f64::total_cmp);
    let theta = percentile_sorted(&ranges, 0.95);
    let params = NormalizationParams {
        mu: mu as f32,
        theta: theta as f32,
    };
    params.validate()?;
    Ok(params)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Rebuilds the non-NaN points of unshifted planes, in firing order.
pub fn reconstruct(
    planes: &ScanPlanes,
    nan: &NanIndex,
    config: &SensorConfig,
) -> Result<PointCloud> {
    planes.check_grid(config)?;
    if planes.shifted {
        return Err(ProjectionError::WrongState {
            required: "unshifted",
            actual: "shifted",
        });
    }
    let (rows, cols) = (config.rows(), config.cols());
    let mask = nan.mask(rows, cols)?;
    let d_max = config.max_range();
    let elevations = (0..rows)
        .map(|r| config.elevation_for_row(r))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let mut points = Vec::with_capacity(rows * cols - nan.len());
    for c in 0..cols {
        for (r, &w) in elevations.iter().enumerate() {
            if mask.get(r, c) {
                continue;
            }
            let d = dequantize_range(planes.range.get(r, c), d_max);
            let a = dequantize_azimuth(planes.azimuth.get(r, c));
            let [x, y, z] = point_from_polar(d, a, w);
            points.push(PointRecord::new(
                x as f32,
                y as f32,
                z as f32,
                planes.intensity.get(r, c),
            ));
        }
    }
    Ok(PointCloud::unordered(points, String::new()))
}
