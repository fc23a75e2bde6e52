use super::{CodecError, CodecId, PlaneCodeword, Raster, Result};
use crate::grid::Grid;

pub(super) fn encode(plane: &Raster) -> Vec<u8> {
    match plane {
        Raster::Gray8(g) => g.as_slice().to_vec(),
        Raster::Gray16(g) => g.as_slice().iter().flat_map(|v| v.to_be_bytes()).collect(),
    }
}

pub(super) fn validate(cw: &PlaneCodeword) -> Result<()> {
    if cw.payload.len() != cw.raw_len() {
        return Err(CodecError::Corrupt {
            codec: CodecId::Raw,
            reason: format!("{} bytes, expected {}", cw.payload.len(), cw.raw_len()),
        });
    }
    Ok(())
}

pub(super) fn decode(cw: &PlaneCodeword) -> Result<Raster> {
    validate(cw)?;
    let (h, w) = (cw.height, cw.width);
    Ok(match cw.bit_depth {
        8 => Raster::Gray8(Grid::from_vec(h, w, cw.payload.clone()).expect("length checked")),
        _ => {
            let data = cw
                .payload
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]))
                .collect();
            Raster::Gray16(Grid::from_vec(h, w, data).expect("length checked"))
        }
    })
}
