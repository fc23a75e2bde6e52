//! PNG, single-channel grayscale at the plane's native depth.

use std::io::Cursor;

use super::{CodecError, CodecId, PlaneCodeword, Raster, Result};
use crate::grid::Grid;

const IEND_TRAILER: [u8; 12] = [0, 0, 0, 0, b'I', b'E', b'N', b'D', 0xAE, 0x42, 0x60, 0x82];

fn corrupt(reason: impl ToString) -> CodecError {
    CodecError::Corrupt {
        codec: CodecId::Lossless,
        reason: reason.to_string(),
    }
}

pub(super) fn encode(plane: &Raster) -> Result<Vec<u8>> {
    let (depth, bytes) = match plane {
        Raster::Gray8(g) => (png::BitDepth::Eight, g.as_slice().to_vec()),
        Raster::Gray16(g) => (
            png::BitDepth::Sixteen,
            g.as_slice().iter().flat_map(|v| v.to_be_bytes()).collect(),
        ),
    };
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, plane.width() as u32, plane.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    enc.set_compression(png::Compression::High);
    enc.set_filter(png::Filter::Adaptive);
    let fail = |e: png::EncodingError| CodecError::Encoder {
        codec: CodecId::Lossless,
        reason: e.to_string(),
    };
    let mut writer = enc.write_header().map_err(fail)?;
    writer.write_image_data(&bytes).map_err(fail)?;
    writer.finish().map_err(fail)?;
    Ok(out)
}

/// A well-formed payload ends exactly at the IEND chunk.
pub(super) fn validate(cw: &PlaneCodeword) -> Result<()> {
    if !cw.payload.starts_with(b"\x89PNG\r\n\x1a\n") {
        return Err(corrupt("missing PNG signature"));
    }
    if !cw.payload.ends_with(&IEND_TRAILER) {
        return Err(corrupt("payload does not end with IEND"));
    }
    Ok(())
}

pub(super) fn decode(cw: &PlaneCodeword) -> Result<Raster> {
    validate(cw)?;
    let decoder = png::Decoder::new(Cursor::new(&cw.payload));
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| corrupt("image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(corrupt(format!("color type {:?}", info.color_type)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    buf.truncate(info.buffer_size());
    match info.bit_depth {
        png::BitDepth::Eight => Ok(Raster::Gray8(
            Grid::from_vec(h, w, buf).ok_or_else(|| corrupt("short image"))?,
        )),
        png::BitDepth::Sixteen => {
            let data = buf
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]))
                .collect();
            Ok(Raster::Gray16(
                Grid::from_vec(h, w, data).ok_or_else(|| corrupt("short image"))?,
            ))
        }
        other => Err(corrupt(format!("bit depth {other:?}"))),
    }
}
