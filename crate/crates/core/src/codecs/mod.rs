//! Plane codecs behind one encode/decode interface.
//!
//! | id | codec          | payload                                      |
//! |----|----------------|----------------------------------------------|
//! | 0  | RAW            | big-endian samples, row-major                |
//! | 1  | LOSSLESS       | PNG, grayscale 8 or 16 bit                   |
//! | 2  | LOSSY_WAVELET  | JPEG 2000 codestream (J2K), irreversible 9/7 |
//! | 3  | EXTERNAL_RNN   | opaque bitstream from the neural range codec |
//!
//! EXTERNAL_RNN payloads are produced and consumed out of process; this
//! crate only wraps and carries them.

mod lossless;
mod raw;
mod wavelet;

use thiserror::Error;

use crate::grid::Grid;

pub use wavelet::MIN_RATIO;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("unknown codec id {0}")]
    UnknownCodec(u8),
    #[error("unsupported bit depth {0} (expected 8 or 16)")]
    UnsupportedBitDepth(u8),
    #[error("{codec} requires a quality parameter")]
    MissingQuality { codec: CodecId },
    #[error("{codec} is lossless and takes no quality parameter")]
    UnexpectedQuality { codec: CodecId },
    #[error("invalid quality {value} for {codec}")]
    InvalidQuality { codec: CodecId, value: f32 },
    #[error("EXTERNAL_RNN payloads come from the external neural codec; wrap its bitstream instead of encoding here")]
    ExternalPayloadRequired,
    #[error("EXTERNAL_RNN payloads must be decoded by the external neural codec")]
    ExternalDecodeRequired,
    #[error("EXTERNAL_RNN only carries 16-bit planes")]
    ExternalBitDepth,
    #[error("plane dimensions {width}x{height} not supported")]
    BadDimensions { width: usize, height: usize },
    #[error("corrupt {codec} payload: {reason}")]
    Corrupt { codec: CodecId, reason: String },
    #[error("decoded plane is {found_width}x{found_height}x{found_depth}, codeword declares {width}x{height}x{depth}")]
    DimensionMismatch {
        width: usize,
        height: usize,
        depth: u8,
        found_width: usize,
        found_height: usize,
        found_depth: u8,
    },
    #[error("{codec} encoder failed: {reason}")]
    Encoder { codec: CodecId, reason: String },
}

pub type Result<T> = std::result::Result<T, CodecError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CodecId {
    Raw = 0,
    Lossless = 1,
    LossyWavelet = 2,
    ExternalRnn = 3,
}

impl CodecId {
    pub const ALL: [CodecId; 4] = [
        CodecId::Raw,
        CodecId::Lossless,
        CodecId::LossyWavelet,
        CodecId::ExternalRnn,
    ];

    pub fn is_lossy(self) -> bool {
        matches!(self, CodecId::LossyWavelet | CodecId::ExternalRnn)
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecId::Raw => "RAW",
            CodecId::Lossless => "LOSSLESS",
            CodecId::LossyWavelet => "LOSSY_WAVELET",
            CodecId::ExternalRnn => "EXTERNAL_RNN",
        }
    }
}

impl std::fmt::Display for CodecId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<u8> for CodecId {
    type Error = CodecError;

    fn try_from(v: u8) -> Result<Self> {
        CodecId::ALL
            .into_iter()
            .find(|c| *c as u8 == v)
            .ok_or(CodecError::UnknownCodec(v))
    }
}

/// A single-channel raster of either depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Raster {
    Gray8(Grid<u8>),
    Gray16(Grid<u16>),
}

impl Raster {
    pub fn bit_depth(&self) -> u8 {
        match self {
            Raster::Gray8(_) => 8,
            Raster::Gray16(_) => 16,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Raster::Gray8(g) => g.cols(),
            Raster::Gray16(g) => g.cols(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Raster::Gray8(g) => g.rows(),
            Raster::Gray16(g) => g.rows(),
        }
    }

    /// Uncompressed size in bytes.
    pub fn raw_len(&self) -> usize {
        self.width() * self.height() * self.bit_depth() as usize / 8
    }

    pub fn into_gray8(self) -> Option<Grid<u8>> {
        match self {
            Raster::Gray8(g) => Some(g),
            Raster::Gray16(_) => None,
        }
    }

    pub fn into_gray16(self) -> Option<Grid<u16>> {
        match self {
            Raster::Gray16(g) => Some(g),
            Raster::Gray8(_) => None,
        }
    }
}

impl From<Grid<u8>> for Raster {
    fn from(g: Grid<u8>) -> Self {
        Raster::Gray8(g)
    }
}

impl From<Grid<u16>> for Raster {
    fn from(g: Grid<u16>) -> Self {
        Raster::Gray16(g)
    }
}

/// One compressed plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneCodeword {
    pub codec: CodecId,
    pub bit_depth: u8,
    pub width: usize,
    pub height: usize,
    /// Target compression ratio for LOSSY_WAVELET, iteration count for
    /// EXTERNAL_RNN, absent for lossless codecs.
    pub quality: Option<f32>,
    pub payload: Vec<u8>,
}

impl PlaneCodeword {
    /// Size of the same plane stored uncompressed.
    pub fn raw_len(&self) -> usize {
        self.width * self.height * self.bit_depth as usize / 8
    }

    /// Checks the declared metadata and the payload framing without
    /// decoding the pixels. Catches truncated or over-long payloads.
    pub fn validate(&self) -> Result<()> {
        if self.bit_depth != 8 && self.bit_depth != 16 {
            return Err(CodecError::UnsupportedBitDepth(self.bit_depth));
        }
        check_dimensions(self.width, self.height)?;
        check_quality(self.codec, self.quality)?;
        match self.codec {
            CodecId::Raw => raw::validate(self),
            CodecId::Lossless => lossless::validate(self),
            CodecId::LossyWavelet => wavelet::validate(self),
            CodecId::ExternalRnn => {
                if self.bit_depth == 16 {
                    Ok(())
                } else {
                    Err(CodecError::ExternalBitDepth)
                }
            }
        }
    }
}

fn check_dimensions(width: usize, height: usize) -> Result<()> {
    let max = u16::MAX as usize;
    if width == 0 || height == 0 || width > max || height > max {
        return Err(CodecError::BadDimensions { width, height });
    }
    Ok(())
}

fn check_quality(codec: CodecId, quality: Option<f32>) -> Result<()> {
    match (codec, quality) {
        (CodecId::Raw | CodecId::Lossless, None) => Ok(()),
        (CodecId::Raw | CodecId::Lossless, Some(_)) => Err(CodecError::UnexpectedQuality { codec }),
        (_, None) => Err(CodecError::MissingQuality { codec }),
        (CodecId::LossyWavelet, Some(q)) if !(q.is_finite() && q >= MIN_RATIO) => {
            Err(CodecError::InvalidQuality { codec, value: q })
        }
        (CodecId::ExternalRnn, Some(q)) if !(q.is_finite() && q >= 1.0 && q.fract() == 0.0) => {
            Err(CodecError::InvalidQuality { codec, value: q })
        }
        _ => Ok(()),
    }
}

/// Compresses one plane. EXTERNAL_RNN is rejected; see [`wrap_external`].
pub fn encode_plane(plane: &Raster, codec: CodecId, quality: Option<f32>) -> Result<PlaneCodeword> {
    check_dimensions(plane.width(), plane.height())?;
    if codec == CodecId::ExternalRnn {
        return Err(CodecError::ExternalPayloadRequired);
    }
    check_quality(codec, quality)?;
    let payload = match codec {
        CodecId::Raw => raw::encode(plane),
        CodecId::Lossless => lossless::encode(plane)?,
        CodecId::LossyWavelet => wavelet::encode(plane, quality.unwrap_or(MIN_RATIO))?,
        CodecId::ExternalRnn => unreachable!(),
    };
    Ok(PlaneCodeword {
        codec,
        bit_depth: plane.bit_depth(),
        width: plane.width(),
        height: plane.height(),
        quality,
        payload,
    })
}

/// Wraps a bitstream produced by the external neural codec for a
/// `width` x `height` range plane encoded with `iterations` passes.
pub fn wrap_external(
    bitstream: Vec<u8>,
    width: usize,
    height: usize,
    iterations: u32,
) -> Result<PlaneCodeword> {
    let cw = PlaneCodeword {
        codec: CodecId::ExternalRnn,
        bit_depth: 16,
        width,
        height,
        quality: Some(iterations as f32),
        payload: bitstream,
    };
    cw.validate()?;
    Ok(cw)
}

pub fn decode_plane(cw: &PlaneCodeword) -> Result<Raster> {
    cw.validate()?;
    let raster = match cw.codec {
        CodecId::Raw => raw::decode(cw)?,
        CodecId::Lossless => lossless::decode(cw)?,
        CodecId::LossyWavelet => wavelet::decode(cw)?,
        CodecId::ExternalRnn => return Err(CodecError::ExternalDecodeRequired),
    };
    if raster.width() != cw.width
        || raster.height() != cw.height
        || raster.bit_depth() != cw.bit_depth
    {
        return Err(CodecError::DimensionMismatch {
            width: cw.width,
            height: cw.height,
            depth: cw.bit_depth,
            found_width: raster.width(),
            found_height: raster.height(),
            found_depth: raster.bit_depth(),
        });
    }
    Ok(raster)
}
