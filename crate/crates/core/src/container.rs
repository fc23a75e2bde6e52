//! `.lpcc` frame serialization.
//!
//! One frame, all scalars little-endian, no padding:
//!
//! ```text
//! offset size  field
//! 0      4     magic "LPCC"
//! 4      1     version (1)
//! 5      4     frame_len: total bytes of this frame, header included
//! 9      8     sensor digest (truncated SHA-256 of the calibration)
//! 17     2     rows
//! 19     2     cols
//! 21     4     d_max, f32 meters
//! 25     4     mu, f32 meters
//! 29     4     theta, f32 meters
//! 33     4     nan_len
//! 37     n     NaN sidecar (zlib stream, see below)
//! ..     1     plane count (3)
//! then per plane:
//!        1     plane kind (0 range, 1 azimuth, 2 intensity)
//!        1     codec id
//!        1     bit depth (8 | 16)
//!        2     width
//!        2     height
//!        1     has_quality (0 | 1)
//!        4     quality, f32, present only when has_quality = 1
//!        4     payload_len
//!        m     payload
//! ```
//!
//! The planes inside a frame are always azimuth-shifted and denoised; the
//! decoder unshifts them before reconstruction.
//!
//! NaN sidecar, before zlib compression:
//!
//! ```text
//! u32 LE   count
//! count    row index bytes
//! varints  column deltas: the column itself for the first entry of a row,
//!          otherwise the gap to the previous column (always >= 1)
//! ```
//!
//! Multi-frame streams are plain concatenations; `frame_len` delimits them.

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;
use thiserror::Error;

use crate::codecs::{CodecError, CodecId, PlaneCodeword};
use crate::projection::{NanIndex, NormalizationParams, ProjectionError};
use crate::sensor::SensorConfig;

pub const MAGIC: [u8; 4] = *b"LPCC";
pub const VERSION: u8 = 1;
/// Bytes before the NaN sidecar payload.
pub const PREAMBLE_LEN: usize = 37;
/// Fixed bytes of a frame excluding sidecar and plane entries.
pub const FIXED_HEADER_LEN: usize = PREAMBLE_LEN + 1;
/// Fixed bytes of a plane entry without quality or payload.
pub const ENTRY_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated frame: need {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("declared frame length {declared} does not match {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("sensor digest mismatch: frame {frame:02x?}, calibration {config:02x?}")]
    DigestMismatch { frame: [u8; 8], config: [u8; 8] },
    #[error("unknown plane kind {0}")]
    UnknownPlaneKind(u8),
    #[error("invalid frame: {0}")]
    Invalid(String),
    #[error("corrupt NaN sidecar: {0}")]
    Sidecar(String),
    #[error("plane {kind}: {source}")]
    Plane {
        kind: PlaneKind,
        #[source]
        source: CodecError,
    },
    #[error("zero points: bits per point undefined")]
    ZeroPoints,
}

impl ContainerError {
    /// True for damaged or malformed bytes, false for a valid frame that
    /// belongs to a different sensor or an unsupported version.
    pub fn is_corruption(&self) -> bool {
        !matches!(
            self,
            ContainerError::DigestMismatch { .. }
                | ContainerError::UnsupportedVersion(_)
                | ContainerError::ZeroPoints
        )
    }
}

pub type Result<T> = std::result::Result<T, ContainerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum PlaneKind {
    Range = 0,
    Azimuth = 1,
    Intensity = 2,
}

impl PlaneKind {
    pub const ALL: [PlaneKind; 3] = [PlaneKind::Range, PlaneKind::Azimuth, PlaneKind::Intensity];

    pub fn bit_depth(self) -> u8 {
        match self {
            PlaneKind::Range | PlaneKind::Azimuth => 16,
            PlaneKind::Intensity => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlaneKind::Range => "range",
            PlaneKind::Azimuth => "azimuth",
            PlaneKind::Intensity => "intensity",
        }
    }
}

impl std::fmt::Display for PlaneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<u8> for PlaneKind {
    type Error = ContainerError;

    fn try_from(v: u8) -> Result<Self> {
        PlaneKind::ALL
            .into_iter()
            .find(|k| *k as u8 == v)
            .ok_or(ContainerError::UnknownPlaneKind(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFrame {
    pub version: u8,
    pub sensor_digest: [u8; 8],
    pub rows: u16,
    pub cols: u16,
    pub d_max: f32,
    pub norm: NormalizationParams,
    pub nan_payload: Vec<u8>,
    pub planes: Vec<(PlaneKind, PlaneCodeword)>,
}

impl CompressedFrame {
    pub fn plane(&self, kind: PlaneKind) -> Option<&PlaneCodeword> {
        self.planes
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, cw)| cw)
    }

    pub fn nan_index(&self) -> Result<NanIndex> {
        decode_nan_sidecar(&self.nan_payload, self.rows as usize, self.cols as usize)
    }

    /// Serialized size, computed from the declared lengths.
    pub fn serialized_len(&self) -> usize {
        FIXED_HEADER_LEN
            + self.nan_payload.len()
            + self
                .planes
                .iter()
                .map(|(_, cw)| {
                    ENTRY_HEADER_LEN + if cw.quality.is_some() { 4 } else { 0 } + cw.payload.len()
                })
                .sum::<usize>()
    }

    /// Checks every structural invariant of the frame.
    pub fn validate(&self) -> Result<()> {
        if self.version != VERSION {
            return Err(ContainerError::UnsupportedVersion(self.version));
        }
        if self.rows == 0 || self.cols == 0 || self.rows as usize > crate::sensor::MAX_ROWS {
            return Err(ContainerError::Invalid(format!(
                "grid {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.d_max.is_finite() && self.d_max > 0.0) {
            return Err(ContainerError::Invalid(format!("d_max {}", self.d_max)));
        }
        self.norm
            .validate()
            .map_err(|e| ContainerError::Invalid(e.to_string()))?;
        if self.norm.mu > self.d_max {
            return Err(ContainerError::Invalid(format!(
                "mu {} above d_max {}",
                self.norm.mu, self.d_max
            )));
        }
        if self.planes.len() != PlaneKind::ALL.len() {
            return Err(ContainerError::Invalid(format!(
                "{} plane entries, expected 3",
                self.planes.len()
            )));
        }
        for kind in PlaneKind::ALL {
            if self.planes.iter().filter(|(k, _)| *k == kind).count() != 1 {
                return Err(ContainerError::Invalid(format!(
                    "need exactly one {kind} plane"
                )));
            }
        }
        for (kind, cw) in &self.planes {
            if cw.width != self.cols as usize || cw.height != self.rows as usize {
                return Err(ContainerError::Invalid(format!(
                    "{kind} plane is {}x{}, frame grid is {}x{}",
                    cw.height, cw.width, self.rows, self.cols
                )));
            }
            if cw.bit_depth != kind.bit_depth() {
                return Err(ContainerError::Invalid(format!(
                    "{kind} plane has bit depth {}",
                    cw.bit_depth
                )));
            }
            if cw.codec == CodecId::ExternalRnn && *kind != PlaneKind::Range {
                return Err(ContainerError::Invalid(format!(
                    "EXTERNAL_RNN is only valid for the range plane, not {kind}"
                )));
            }
            cw.validate().map_err(|source| ContainerError::Plane {
                kind: *kind,
                source,
            })?;
        }
        self.nan_index()?;
        if self.serialized_len() > u32::MAX as usize {
            return Err(ContainerError::Invalid("frame exceeds 4 GiB".into()));
        }
        Ok(())
    }

    /// Rejects frames produced for a different calibration.
    pub fn check_sensor(&self, config: &SensorConfig) -> Result<()> {
        let digest = config.digest();
        if digest != self.sensor_digest {
            return Err(ContainerError::DigestMismatch {
                frame: self.sensor_digest,
                config: digest,
            });
        }
        if self.rows as usize != config.rows()
            || self.cols as usize != config.cols()
            || self.d_max != config.max_range() as f32
        {
            return Err(ContainerError::Invalid(
                "frame geometry disagrees with the calibration".into(),
            ));
        }
        Ok(())
    }
}

pub fn encode_nan_sidecar(nan: &NanIndex) -> Vec<u8> {
    let mut raw = Vec::with_capacity(4 + nan.len() * 3);
    raw.extend_from_slice(&(nan.len() as u32).to_le_bytes());
    raw.extend_from_slice(nan.row_indices());
    let mut prev_row = None;
    let mut prev_col = 0u16;
    for (r, c) in nan.iter() {
        let delta = if prev_row == Some(r) { c - prev_col } else { c };
        write_varint(&mut raw, delta as u32);
        prev_row = Some(r);
        prev_col = c;
    }
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::best());
    enc.write_all(&raw).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

pub fn decode_nan_sidecar(payload: &[u8], rows: usize, cols: usize) -> Result<NanIndex> {
    let bad = |m: &str| ContainerError::Sidecar(m.to_string());
    // Upper bound for a full grid: count + one row byte and <= 3 varint bytes per cell.
    let limit = 4 + rows * cols * 4;
    let mut dec = ZlibDecoder::new(payload);
    let mut raw = Vec::new();
    (&mut dec)
        .take(limit as u64 + 1)
        .read_to_end(&mut raw)
        .map_err(|e| ContainerError::Sidecar(e.to_string()))?;
    if raw.len() > limit {
        return Err(bad("inflated size exceeds the grid"));
    }
    if dec.total_in() as usize != payload.len() {
        return Err(bad("bytes after the zlib stream"));
    }
    if raw.len() < 4 {
        return Err(bad("missing count"));
    }
    let count = u32::from_le_bytes(raw[..4].try_into().unwrap()) as usize;
    if count > rows * cols || raw.len() < 4 + count {
        return Err(bad("count exceeds data"));
    }
    let row_bytes = raw[4..4 + count].to_vec();
    let mut rest = &raw[4 + count..];
    let mut col_vals = Vec::with_capacity(count);
    let mut prev: Option<(u8, u32)> = None;
    for &r in &row_bytes {
        let delta = read_varint(&mut rest).ok_or_else(|| bad("truncated column deltas"))?;
        let c = match prev {
            Some((pr, pc)) if pr == r => {
                if delta == 0 {
                    return Err(bad("duplicate entry"));
                }
                pc.checked_add(delta)
                    .ok_or_else(|| bad("column overflow"))?
            }
            Some((pr, _)) if r < pr => return Err(bad("rows not sorted")),
            _ => delta,
        };
        if r as usize >= rows || c as usize >= cols {
            return Err(bad("entry outside the grid"));
        }
        col_vals.push(c as u16);
        prev = Some((r, c));
    }
    if !rest.is_empty() {
        return Err(bad("trailing bytes in sidecar"));
    }
    NanIndex::from_parts(row_bytes, col_vals).map_err(|e: ProjectionError| bad(&e.to_string()))
}

fn write_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8 & 0x7F) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn read_varint(input: &mut &[u8]) -> Option<u32> {
    let mut v: u32 = 0;
    for shift in (0..35).step_by(7) {
        let (&b, rest) = input.split_first()?;
        *input = rest;
        v |= ((b & 0x7F) as u32).checked_shl(shift)?;
        if b & 0x80 == 0 {
            return Some(v);
        }
    }
    None
}

pub fn write_frame(frame: &CompressedFrame) -> Result<Vec<u8>> {
    frame.validate()?;
    let total = frame.serialized_len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&MAGIC);
    out.push(frame.version);
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&frame.sensor_digest);
    out.extend_from_slice(&frame.rows.to_le_bytes());
    out.extend_from_slice(&frame.cols.to_le_bytes());
    out.extend_from_slice(&frame.d_max.to_le_bytes());
    out.extend_from_slice(&frame.norm.mu.to_le_bytes());
    out.extend_from_slice(&frame.norm.theta.to_le_bytes());
    out.extend_from_slice(&(frame.nan_payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&frame.nan_payload);
    out.push(frame.planes.len() as u8);
    for (kind, cw) in &frame.planes {
        out.push(*kind as u8);
        out.push(cw.codec as u8);
        out.push(cw.bit_depth);
        out.extend_from_slice(&(cw.width as u16).to_le_bytes());
        out.extend_from_slice(&(cw.height as u16).to_le_bytes());
        match cw.quality {
            Some(q) => {
                out.push(1);
                out.extend_from_slice(&q.to_le_bytes());
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(cw.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&cw.payload);
    }
    debug_assert_eq!(out.len(), total);
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.data.len() - self.pos;
        if n > available {
            return Err(ContainerError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses the frame at the start of `bytes`; returns it with its length.
pub fn read_frame_prefix(bytes: &[u8]) -> Result<(CompressedFrame, usize)> {
    let mut cur = Cursor {
        data: bytes,
        pos: 0,
    };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let version = cur.u8()?;
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let declared = cur.u32()? as usize;
    if declared > bytes.len() {
        return Err(ContainerError::Truncated {
            offset: 0,
            needed: declared,
            available: bytes.len(),
        });
    }
    // Parse strictly inside the declared frame.
    let mut cur = Cursor {
        data: &bytes[..declared],
        pos: cur.pos,
    };
    let sensor_digest: [u8; 8] = cur.take(8)?.try_into().unwrap();
    let rows = cur.u16()?;
    let cols = cur.u16()?;
    let d_max = cur.f32()?;
    let norm = NormalizationParams {
        mu: cur.f32()?,
        theta: cur.f32()?,
    };
    let nan_len = cur.u32()? as usize;
    let nan_payload = cur.take(nan_len)?.to_vec();
    let count = cur.u8()?;
    if count as usize != PlaneKind::ALL.len() {
        return Err(ContainerError::Invalid(format!("{count} plane entries")));
    }
    let mut planes = Vec::with_capacity(3);
    for _ in 0..count {
        let kind = PlaneKind::try_from(cur.u8()?)?;
        let codec = CodecId::try_from(cur.u8()?)
            .map_err(|source| ContainerError::Plane { kind, source })?;
        let bit_depth = cur.u8()?;
        let width = cur.u16()? as usize;
        let height = cur.u16()? as usize;
        let quality = match cur.u8()? {
            0 => None,
            1 => Some(cur.f32()?),
            f => return Err(ContainerError::Invalid(format!("quality flag {f}"))),
        };
        let len = cur.u32()? as usize;
        let payload = cur.take(len)?.to_vec();
        planes.push((
            kind,
            PlaneCodeword {
                codec,
                bit_depth,
                width,
                height,
                quality,
                payload,
            },
        ));
    }
    if cur.pos != declared {
        return Err(ContainerError::LengthMismatch {
            declared,
            actual: cur.pos,
        });
    }
    let frame = CompressedFrame {
        version,
        sensor_digest,
        rows,
        cols,
        d_max,
        norm,
        nan_payload,
        planes,
    };
    frame.validate()?;
    Ok((frame, declared))
}

/// Parses exactly one frame; trailing bytes are an error.
pub fn read_frame(bytes: &[u8]) -> Result<CompressedFrame> {
    let (frame, used) = read_frame_prefix(bytes)?;
    if used != bytes.len() {
        return Err(ContainerError::TrailingBytes(bytes.len() - used));
    }
    Ok(frame)
}

/// Parses a concatenation of frames.
/// Reads a concatenation of frames. An empty input is a truncated stream.
pub fn read_stream(mut bytes: &[u8]) -> Result<Vec<CompressedFrame>> {
    if bytes.is_empty() {
        return Err(ContainerError::Truncated {
            offset: 0,
            needed: FIXED_HEADER_LEN,
            available: 0,
        });
    }
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (frame, used) = read_frame_prefix(bytes)?;
        frames.push(frame);
        bytes = &bytes[used..];
    }
    Ok(frames)
}

/// Like [`read_frame`], then checks the calibration digest.
pub fn read_frame_for(bytes: &[u8], config: &SensorConfig) -> Result<CompressedFrame> {
    let frame = read_frame(bytes)?;
    frame.check_sensor(config)?;
    Ok(frame)
}

/// Serialized frame size in bits divided by `point_count`.
pub fn frame_bpp(frame: &CompressedFrame, point_count: usize) -> Result<f64> {
    if point_count == 0 {
        return Err(ContainerError::ZeroPoints);
    }
    Ok(frame.serialized_len() as f64 * 8.0 / point_count as f64)
}
