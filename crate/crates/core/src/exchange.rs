//! Raw plane files shared with the external neural range codec.
//!
//! Layout, all scalars big-endian:
//!
//! ```text
//! offset size  field
//! 0      4     magic "LPPL"
//! 4      1     version (1)
//! 5      1     dtype: 0 = u8, 1 = u16, 2 = f32
//! 6      4     height (rows)
//! 10     4     width (cols)
//! 14     4     mu, f32 meters
//! 18     4     theta, f32 meters
//! 22     4     d_max, f32 meters
//! 26     ..    height * width pixels, row-major
//! ```
//!
//! The encoder side exports the normalized range plane as `f32`, so the
//! neural codec never needs the calibration. The decoder side reads back an
//! `f32` plane and denormalizes it with the frame's `mu` and `theta`.

use thiserror::Error;

use crate::grid::Grid;
use crate::projection::NormalizationParams;

pub const MAGIC: [u8; 4] = *b"LPPL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 26;

#[derive(Debug, Error, PartialEq)]
pub enum ExchangeError {
    #[error("not a plane file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported plane file version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown pixel type {0}")]
    UnknownDtype(u8),
    #[error("plane file is {actual} bytes, expected {expected}")]
    Length { expected: usize, actual: usize },
    #[error("empty plane {height}x{width}")]
    Empty { height: usize, width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlaneData {
    U8(Grid<u8>),
    U16(Grid<u16>),
    F32(Grid<f32>),
}

impl PlaneData {
    fn dtype(&self) -> u8 {
        match self {
            PlaneData::U8(_) => 0,
            PlaneData::U16(_) => 1,
            PlaneData::F32(_) => 2,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            PlaneData::U8(g) => g.rows(),
            PlaneData::U16(g) => g.rows(),
            PlaneData::F32(g) => g.rows(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            PlaneData::U8(g) => g.cols(),
            PlaneData::U16(g) => g.cols(),
            PlaneData::F32(g) => g.cols(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFile {
    pub data: PlaneData,
    pub norm: NormalizationParams,
    pub d_max: f32,
}

pub fn write_plane_file(file: &PlaneFile) -> Vec<u8> {
    let (h, w) = (file.data.height(), file.data.width());
    let size = match file.data {
        PlaneData::U8(_) => 1,
        PlaneData::U16(_) => 2,
        PlaneData::F32(_) => 4,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + h * w * size);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(file.data.dtype());
    out.extend_from_slice(&(h as u32).to_be_bytes());
    out.extend_from_slice(&(w as u32).to_be_bytes());
    out.extend_from_slice(&file.norm.mu.to_be_bytes());
    out.extend_from_slice(&file.norm.theta.to_be_bytes());
    out.extend_from_slice(&file.d_max.to_be_bytes());
    match &file.data {
        PlaneData::U8(g) => out.extend_from_slice(g.as_slice()),
        PlaneData::U16(g) => g
            .as_slice()
            .iter()
            .for_each(|v| out.extend(v.to_be_bytes())),
        PlaneData::F32(g) => g
            .as_slice()
            .iter()
            .for_each(|v| out.extend(v.to_be_bytes())),
    }
    out
}

pub fn read_plane_file(bytes: &[u8]) -> Result<PlaneFile, ExchangeError> {
    if bytes.len() < HEADER_LEN {
        return Err(ExchangeError::Length {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ExchangeError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(ExchangeError::UnsupportedVersion(bytes[4]));
    }
    let dtype = bytes[5];
    let be32 = |at: usize| u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap());
    let (h, w) = (be32(6) as usize, be32(10) as usize);
    let norm = NormalizationParams {
        mu: f32::from_bits(be32(14)),
        theta: f32::from_bits(be32(18)),
    };
    let d_max = f32::from_bits(be32(22));
    if h == 0 || w == 0 {
        return Err(ExchangeError::Empty {
            height: h,
            width: w,
        });
    }
    let size = match dtype {
        0 => 1,
        1 => 2,
        2 => 4,
        d => return Err(ExchangeError::UnknownDtype(d)),
    };
    let expected = (h as u64 * w as u64 * size as u64).saturating_add(HEADER_LEN as u64);
    if bytes.len() as u64 != expected {
        return Err(ExchangeError::Length {
            expected: expected.min(usize::MAX as u64) as usize,
            actual: bytes.len(),
        });
    }
    let body = &bytes[HEADER_LEN..];
    let data = match dtype {
        0 => PlaneData::U8(Grid::from_vec(h, w, body.to_vec()).unwrap()),
        1 => PlaneData::U16(
            Grid::from_vec(
                h,
                w,
                body.chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]))
                    .collect(),
            )
            .unwrap(),
        ),
        _ => PlaneData::F32(
            Grid::from_vec(
                h,
                w,
                body.chunks_exact(4)
                    .map(|b| f32::from_be_bytes(b.try_into().unwrap()))
                    .collect(),
            )
            .unwrap(),
        ),
    };
    Ok(PlaneFile { data, norm, d_max })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm() -> NormalizationParams {
        NormalizationParams {
            mu: 14.5,
            theta: 42.25,
        }
    }

    #[test]
    fn roundtrip_all_dtypes() {
        let planes = [
            PlaneData::U8(Grid::from_vec(2, 3, vec![0, 1, 2, 253, 254, 255]).unwrap()),
            PlaneData::U16(Grid::from_vec(1, 3, vec![0, 258, 65535]).unwrap()),
            PlaneData::F32(Grid::from_vec(3, 1, vec![-1.5, 0.0, f32::MAX]).unwrap()),
        ];
        for data in planes {
            let f = PlaneFile {
                data,
                norm: norm(),
                d_max: 200.0,
            };
            assert_eq!(read_plane_file(&write_plane_file(&f)).unwrap(), f);
        }
    }

    #[test]
    fn header_layout() {
        let f = PlaneFile {
            data: PlaneData::U16(Grid::from_vec(1, 2, vec![0x0102, 0xA0B0]).unwrap()),
            norm: norm(),
            d_max: 200.0,
        };
        let b = write_plane_file(&f);
        assert_eq!(&b[..6], b"LPPL\x01\x01");
        assert_eq!(&b[6..14], &[0, 0, 0, 1, 0, 0, 0, 2]);
        assert_eq!(&b[14..18], &14.5f32.to_be_bytes());
        assert_eq!(&b[22..26], &200f32.to_be_bytes());
        assert_eq!(&b[26..], &[1, 2, 0xA0, 0xB0]);
    }

    #[test]
    fn rejects_malformed() {
        let f = PlaneFile {
            data: PlaneData::U8(Grid::filled(2, 2, 7)),
            norm: norm(),
            d_max: 200.0,
        };
        let b = write_plane_file(&f);
        assert!(matches!(
            read_plane_file(&b[..29]),
            Err(ExchangeError::Length { .. })
        ));
        let mut x = b.clone();
        x[5] = 9;
        assert_eq!(read_plane_file(&x), Err(ExchangeError::UnknownDtype(9)));
        let mut x = b.clone();
        x[0] = b'X';
        assert!(matches!(
            read_plane_file(&x),
            Err(ExchangeError::BadMagic(_))
        ));
        let mut x = b;
        x[6..10].copy_from_slice(&0u32.to_be_bytes());
        assert!(matches!(
            read_plane_file(&x),
            Err(ExchangeError::Empty { .. })
        ));
    }
}
