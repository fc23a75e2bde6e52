//! JPEG 2000 (raw J2K codestream) through openjpeg.
//!
//! Planes are coded as one grayscale component at their native precision
//! with the irreversible 9/7 wavelet and a single quality layer whose size
//! is set by the target compression ratio (uncompressed bytes / payload
//! bytes).

use std::ffi::{c_char, c_void, CStr};
use std::ptr;

use openjpeg_sys as opj;

use super::{CodecError, CodecId, PlaneCodeword, Raster, Result};
use crate::grid::Grid;

/// Smallest accepted ratio; 1 disables rate truncation.
pub const MIN_RATIO: f32 = 1.0;

const MAX_RESOLUTIONS: u32 = 6;
const SOC_SIZ: [u8; 4] = [0xFF, 0x4F, 0xFF, 0x51];
const EOC: [u8; 2] = [0xFF, 0xD9];

fn corrupt(reason: impl ToString) -> CodecError {
    CodecError::Corrupt {
        codec: CodecId::LossyWavelet,
        reason: reason.to_string(),
    }
}

fn encoder_error(reason: impl ToString) -> CodecError {
    CodecError::Encoder {
        codec: CodecId::LossyWavelet,
        reason: reason.to_string(),
    }
}

pub(super) fn validate(cw: &PlaneCodeword) -> Result<()> {
    if !cw.payload.starts_with(&SOC_SIZ) {
        return Err(corrupt("missing SOC/SIZ markers"));
    }
    if !cw.payload.ends_with(&EOC) {
        return Err(corrupt("codestream does not end with EOC"));
    }
    Ok(())
}

/// In-memory byte buffer handed to openjpeg as stream user data.
struct MemStream {
    data: Vec<u8>,
    pos: usize,
}

unsafe extern "C" fn mem_read(buf: *mut c_void, n: usize, user: *mut c_void) -> usize {
    let s = &mut *(user as *mut MemStream);
    let left = s.data.len().saturating_sub(s.pos);
    if left == 0 {
        return usize::MAX;
    }
    let k = n.min(left);
    ptr::copy_nonoverlapping(s.data.as_ptr().add(s.pos), buf as *mut u8, k);
    s.pos += k;
    k
}

unsafe extern "C" fn mem_write(buf: *mut c_void, n: usize, user: *mut c_void) -> usize {
    let s = &mut *(user as *mut MemStream);
    let src = std::slice::from_raw_parts(buf as *const u8, n);
    let end = s.pos + n;
    if end > s.data.len() {
        s.data.resize(end, 0);
    }
    s.data[s.pos..end].copy_from_slice(src);
    s.pos = end;
    n
}

unsafe extern "C" fn mem_skip(n: i64, user: *mut c_void) -> i64 {
    let s = &mut *(user as *mut MemStream);
    let target = s.pos as i64 + n;
    if target < 0 {
        return -1;
    }
    s.pos = target as usize;
    n
}

unsafe extern "C" fn mem_seek(n: i64, user: *mut c_void) -> opj::OPJ_BOOL {
    let s = &mut *(user as *mut MemStream);
    if n < 0 {
        return 0;
    }
    s.pos = n as usize;
    1
}

unsafe extern "C" fn collect_message(msg: *const c_char, user: *mut c_void) {
    if msg.is_null() || user.is_null() {
        return;
    }
    let log = &mut *(user as *mut String);
    log.push_str(CStr::from_ptr(msg).to_string_lossy().trim_end());
    log.push_str("; ");
}

/// Owns the openjpeg handles of one encode or decode call.
struct Session {
    codec: *mut opj::opj_codec_t,
    stream: *mut opj::opj_stream_t,
    image: *mut opj::opj_image_t,
}

impl Drop for Session {
    fn drop(&mut self) {
        unsafe {
            if !self.stream.is_null() {
                opj::opj_stream_destroy(self.stream);
            }
            if !self.codec.is_null() {
                opj::opj_destroy_codec(self.codec);
            }
            if !self.image.is_null() {
                opj::opj_image_destroy(self.image);
            }
        }
    }
}

unsafe fn attach_stream(stream: *mut opj::opj_stream_t, mem: &mut MemStream, input: bool) {
    if input {
        opj::opj_stream_set_read_function(stream, Some(mem_read));
        opj::opj_stream_set_user_data_length(stream, mem.data.len() as u64);
    } else {
        opj::opj_stream_set_write_function(stream, Some(mem_write));
    }
    opj::opj_stream_set_skip_function(stream, Some(mem_skip));
    opj::opj_stream_set_seek_function(stream, Some(mem_seek));
    opj::opj_stream_set_user_data(stream, mem as *mut MemStream as *mut c_void, None);
}

unsafe fn attach_error_log(codec: *mut opj::opj_codec_t, log: &mut String) {
    let user = log as *mut String as *mut c_void;
    opj::opj_set_error_handler(codec, Some(collect_message), user);
}

fn resolutions_for(width: usize, height: usize) -> u32 {
    let min_dim = width.min(height).max(1) as u32;
    (min_dim.ilog2() + 1).min(MAX_RESOLUTIONS)
}

pub(super) fn encode(plane: &Raster, ratio: f32) -> Result<Vec<u8>> {
    let (w, h) = (plane.width(), plane.height());
    let depth = plane.bit_depth() as u32;
    let samples: Vec<i32> = match plane {
        Raster::Gray8(g) => g.as_slice().iter().map(|&v| v as i32).collect(),
        Raster::Gray16(g) => g.as_slice().iter().map(|&v| v as i32).collect(),
    };

    let mut log = String::new();
    let mut mem = MemStream {
        data: Vec::with_capacity(plane.raw_len() / ratio.max(1.0) as usize + 256),
        pos: 0,
    };
    unsafe {
        let mut params: opj::opj_cparameters_t = std::mem::zeroed();
        opj::opj_set_default_encoder_parameters(&mut params);
        params.tcp_numlayers = 1;
        params.tcp_rates[0] = if ratio > MIN_RATIO { ratio } else { 0.0 };
        params.cp_disto_alloc = 1;
        params.irreversible = 1;
        params.numresolution = resolutions_for(w, h) as i32;

        let mut comp = opj::opj_image_cmptparm_t {
            dx: 1,
            dy: 1,
            w: w as u32,
            h: h as u32,
            x0: 0,
            y0: 0,
            prec: depth,
            bpp: depth,
            sgnd: 0,
        };
        let mut session = Session {
            codec: ptr::null_mut(),
            stream: ptr::null_mut(),
            image: opj::opj_image_create(1, &mut comp, opj::COLOR_SPACE::OPJ_CLRSPC_GRAY),
        };
        if session.image.is_null() {
            return Err(encoder_error("image allocation failed"));
        }
        let image = &mut *session.image;
        image.x0 = 0;
        image.y0 = 0;
        image.x1 = w as u32;
        image.y1 = h as u32;
        let comp0 = &mut *image.comps;
        std::slice::from_raw_parts_mut(comp0.data, w * h).copy_from_slice(&samples);

        session.codec = opj::opj_create_compress(opj::CODEC_FORMAT::OPJ_CODEC_J2K);
        if session.codec.is_null() {
            return Err(encoder_error("codec allocation failed"));
        }
        attach_error_log(session.codec, &mut log);
        if opj::opj_setup_encoder(session.codec, &mut params, session.image) == 0 {
            return Err(encoder_error(format!("setup: {log}")));
        }
        session.stream = opj::opj_stream_create(1 << 16, 0);
        if session.stream.is_null() {
            return Err(encoder_error("stream allocation failed"));
        }
        attach_stream(session.stream, &mut mem, false);
        let ok = opj::opj_start_compress(session.codec, session.image, session.stream) != 0
            && opj::opj_encode(session.codec, session.stream) != 0
            && opj::opj_end_compress(session.codec, session.stream) != 0;
        drop(session);
        if !ok {
            return Err(encoder_error(log));
        }
    }
    Ok(mem.data)
}

pub(super) fn decode(cw: &PlaneCodeword) -> Result<Raster> {
    validate(cw)?;
    let mut log = String::new();
    let mut mem = MemStream {
        data: cw.payload.clone(),
        pos: 0,
    };
    let (w, h, prec, samples) = unsafe {
        let mut session = Session {
            codec: opj::opj_create_decompress(opj::CODEC_FORMAT::OPJ_CODEC_J2K),
            stream: ptr::null_mut(),
            image: ptr::null_mut(),
        };
        if session.codec.is_null() {
            return Err(corrupt("codec allocation failed"));
        }
        attach_error_log(session.codec, &mut log);
        let mut params: opj::opj_dparameters_t = std::mem::zeroed();
        opj::opj_set_default_decoder_parameters(&mut params);
        if opj::opj_setup_decoder(session.codec, &mut params) == 0 {
            return Err(corrupt(format!("setup: {log}")));
        }
        opj::opj_decoder_set_strict_mode(session.codec, 1);
        session.stream = opj::opj_stream_create(1 << 16, 1);
        if session.stream.is_null() {
            return Err(corrupt("stream allocation failed"));
        }
        attach_stream(session.stream, &mut mem, true);
        if opj::opj_read_header(session.stream, session.codec, &mut session.image) == 0 {
            return Err(corrupt(format!("header: {log}")));
        }
        if opj::opj_decode(session.codec, session.stream, session.image) == 0
            || opj::opj_end_decompress(session.codec, session.stream) == 0
        {
            return Err(corrupt(format!("decode: {log}")));
        }
        let image = &*session.image;
        if image.numcomps != 1 || image.comps.is_null() {
            return Err(corrupt(format!("{} components", image.numcomps)));
        }
        let comp = &*image.comps;
        let (w, h) = (comp.w as usize, comp.h as usize);
        if comp.data.is_null() || comp.dx != 1 || comp.dy != 1 {
            return Err(corrupt("unsupported component layout"));
        }
        let samples = std::slice::from_raw_parts(comp.data, w * h).to_vec();
        (w, h, comp.prec, samples)
    };
    match prec {
        8 => {
            let data = samples.iter().map(|&v| v.clamp(0, 255) as u8).collect();
            Ok(Raster::Gray8(
                Grid::from_vec(h, w, data).expect("sized by decoder"),
            ))
        }
        16 => {
            let data = samples.iter().map(|&v| v.clamp(0, 65535) as u16).collect();
            Ok(Raster::Gray16(
                Grid::from_vec(h, w, data).expect("sized by decoder"),
            ))
        }
        p => Err(corrupt(format!("precision {p}"))),
    }
}
