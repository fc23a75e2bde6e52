//! PCD v0.7 reader and writer.
//!
//! Supported subset:
//!
//! - `DATA ascii` and `DATA binary` (`binary_compressed` is rejected).
//! - Any field list containing `x`, `y`, `z` and `intensity`; other fields
//!   are skipped. Types `F` (4 or 8 bytes), `U` and `I` (1, 2, 4 or 8 bytes).
//! - Intensity is rounded and clamped to `0..=255`; a non-finite intensity
//!   reads as 0.
//!
//! Organized files (`HEIGHT > 1`) are row-major with one laser row per PCD
//! row; they are converted to firing order on read, and ordered clouds are
//! written back the same way. Unorganized files have `HEIGHT 1`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::cloud::{firing_index, PointCloud, PointRecord};

#[derive(Debug, Error, PartialEq)]
pub enum PcdError {
    #[error("malformed PCD header: {0}")]
    Header(String),
    #[error("PCD has no `{0}` field")]
    MissingField(&'static str),
    #[error("unsupported PCD data encoding `{0}`")]
    UnsupportedData(String),
    #[error("unsupported field type {kind}{size} for `{field}`")]
    UnsupportedType {
        field: String,
        kind: char,
        size: usize,
    },
    #[error("PCD body truncated: expected {expected} points, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bad ascii value `{value}` on point {point}")]
    BadValue { point: usize, value: String },
    #[error("{0} trailing bytes after PCD body")]
    Trailing(usize),
}

pub type Result<T> = std::result::Result<T, PcdError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcdEncoding {
    Ascii,
    Binary,
}

#[derive(Debug, Clone)]
struct Field {
    name: String,
    size: usize,
    kind: char,
    count: usize,
}

#[derive(Debug)]
struct Header {
    fields: Vec<Field>,
    width: usize,
    height: usize,
    points: usize,
    data: PcdEncoding,
}

const REQUIRED: [&str; 4] = ["x", "y", "z", "intensity"];

fn header_err(m: impl Into<String>) -> PcdError {
    PcdError::Header(m.into())
}

fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let mut pos = 0;
    let mut fields: Vec<String> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut types: Vec<char> = Vec::new();
    let mut counts: Option<Vec<usize>> = None;
    let (mut width, mut height, mut points) = (None, None, None);

    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| header_err("missing DATA line"))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| header_err("non-UTF-8 header"))?;
        pos += nl + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap().to_ascii_uppercase();
        let vals: Vec<&str> = parts.collect();
        let nums = |vals: &[&str]| -> Result<Vec<usize>> {
            vals.iter()
                .map(|v| {
                    v.parse()
                        .map_err(|_| header_err(format!("{key}: bad number `{v}`")))
                })
                .collect()
        };
        let one = |vals: &[&str]| -> Result<usize> {
            match nums(vals)?.as_slice() {
                [n] => Ok(*n),
                _ => Err(header_err(format!("{key} takes one value"))),
            }
        };
        match key.as_str() {
            "VERSION" | "VIEWPOINT" => {}
            "FIELDS" => fields = vals.iter().map(|s| s.to_string()).collect(),
            "SIZE" => sizes = nums(&vals)?,
            "TYPE" => {
                types = vals
                    .iter()
                    .map(|t| match t.as_bytes() {
                        [c] => Ok((*c as char).to_ascii_uppercase()),
                        _ => Err(header_err(format!("bad TYPE `{t}`"))),
                    })
                    .collect::<Result<_>>()?
            }
            "COUNT" => counts = Some(nums(&vals)?),
            "WIDTH" => width = Some(one(&vals)?),
            "HEIGHT" => height = Some(one(&vals)?),
            "POINTS" => points = Some(one(&vals)?),
            "DATA" => {
                let data = match vals.as_slice() {
                    ["ascii"] => PcdEncoding::Ascii,
                    ["binary"] => PcdEncoding::Binary,
                    [other] => return Err(PcdError::UnsupportedData(other.to_string())),
                    _ => return Err(header_err("DATA takes one value")),
                };
                let n = fields.len();
                if n == 0 {
                    return Err(header_err("no FIELDS"));
                }
                let counts = counts.unwrap_or_else(|| vec![1; n]);
                if sizes.len() != n || types.len() != n || counts.len() != n {
                    return Err(header_err("FIELDS, SIZE, TYPE and COUNT lengths differ"));
                }
                let width = width.ok_or_else(|| header_err("missing WIDTH"))?;
                let height = height.ok_or_else(|| header_err("missing HEIGHT"))?;
                let total = width
                    .checked_mul(height)
                    .ok_or_else(|| header_err("WIDTH x HEIGHT overflows"))?;
                let points = points.unwrap_or(total);
                if points != total {
                    return Err(header_err(format!(
                        "POINTS {points} != WIDTH x HEIGHT {total}"
                    )));
                }
                let fields = fields
                    .into_iter()
                    .zip(sizes)
                    .zip(types)
                    .zip(counts)
                    .map(|(((name, size), kind), count)| Field {
                        name,
                        size,
                        kind,
                        count,
                    })
                    .collect();
                let header = Header {
                    fields,
                    width,
                    height,
                    points,
                    data,
                };
                return Ok((header, pos));
            }
            other => return Err(header_err(format!("unknown key `{other}`"))),
        }
    }
}

/// Where each required field lives inside one point record.
struct Layout {
    /// (field index, byte offset, element index within the ascii tokens)
    slots: [(usize, usize, usize); 4],
    stride: usize,
    tokens: usize,
}

fn layout(fields: &[Field]) -> Result<Layout> {
    let mut slots = [(usize::MAX, 0, 0); 4];
    let (mut offset, mut token) = (0, 0);
    for (fi, f) in fields.iter().enumerate() {
        if let Some(k) = REQUIRED.iter().position(|r| *r == f.name) {
            let ok = matches!((f.kind, f.size), ('F', 4 | 8) | ('U' | 'I', 1 | 2 | 4 | 8));
            if !ok {
                return Err(PcdError::UnsupportedType {
                    field: f.name.clone(),
                    kind: f.kind,
                    size: f.size,
                });
            }
            slots[k] = (fi, offset, token);
        }
        offset += f.size * f.count;
        token += f.count;
    }
    for (k, s) in slots.iter().enumerate() {
        if s.0 == usize::MAX {
            return Err(PcdError::MissingField(REQUIRED[k]));
        }
    }
    Ok(Layout {
        slots,
        stride: offset,
        tokens: token,
    })
}

fn read_binary_value(f: &Field, b: &[u8]) -> f64 {
    let arr = |n: usize| -> [u8; 8] {
        let mut a = [0u8; 8];
        a[..n].copy_from_slice(&b[..n]);
        a
    };
    match (f.kind, f.size) {
        ('F', 4) => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        ('F', 8) => f64::from_le_bytes(arr(8)),
        ('U', 1) => b[0] as f64,
        ('U', 2) => u16::from_le_bytes([b[0], b[1]]) as f64,
        ('U', 4) => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        ('U', 8) => u64::from_le_bytes(arr(8)) as f64,
        ('I', 1) => b[0] as i8 as f64,
        ('I', 2) => i16::from_le_bytes([b[0], b[1]]) as f64,
        ('I', 4) => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        ('I', 8) => i64::from_le_bytes(arr(8)) as f64,
        _ => unreachable!("checked by layout"),
    }
}

fn to_intensity(v: f64) -> u8 {
    if v.is_finite() {
        v.round().clamp(0.0, 255.0) as u8
    } else {
        0
    }
}

pub fn read_pcd(bytes: &[u8]) -> Result<PointCloud> {
    let (header, body_start) = parse_header(bytes)?;
    let lay = layout(&header.fields)?;
    let body = &bytes[body_start..];
    let n = header.points;
    let mut pts = Vec::with_capacity(n);

    match header.data {
        PcdEncoding::Binary => {
            let need = n
                .checked_mul(lay.stride)
                .ok_or_else(|| header_err("body size overflows"))?;
            if body.len() < need {
                return Err(PcdError::Truncated {
                    expected: n,
                    found: body.len() / lay.stride.max(1),
                });
            }
            if body.len() > need {
                return Err(PcdError::Trailing(body.len() - need));
            }
            for rec in body.chunks_exact(lay.stride.max(1)).take(n) {
                let mut v = [0f32; 3];
                for (k, c) in v.iter_mut().enumerate() {
                    let (fi, off, _) = lay.slots[k];
                    let f = &header.fields[fi];
                    *c = read_binary_value(f, &rec[off..off + f.size]) as f32;
                }
                let (fi, off, _) = lay.slots[3];
                let f = &header.fields[fi];
                let i = to_intensity(read_binary_value(f, &rec[off..off + f.size]));
                pts.push(PointRecord::new(v[0], v[1], v[2], i));
            }
        }
        PcdEncoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| header_err("non-UTF-8 ascii body"))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for point in 0..n {
                let line = lines.next().ok_or(PcdError::Truncated {
                    expected: n,
                    found: point,
                })?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != lay.tokens {
                    return Err(PcdError::BadValue {
                        point,
                        value: line.to_string(),
                    });
                }
                let val = |k: usize| -> Result<f64> {
                    let t = toks[lay.slots[k].2];
                    t.parse::<f64>().map_err(|_| PcdError::BadValue {
                        point,
                        value: t.to_string(),
                    })
                };
                let parse_coord = |k: usize| -> Result<f32> {
                    let t = toks[lay.slots[k].2];
                    t.parse::<f32>().map_err(|_| PcdError::BadValue {
                        point,
                        value: t.to_string(),
                    })
                };
                pts.push(PointRecord::new(
                    parse_coord(0)?,
                    parse_coord(1)?,
                    parse_coord(2)?,
                    to_intensity(val(3)?),
                ));
            }
            let extra = lines.count();
            if extra > 0 {
                return Err(PcdError::Trailing(extra));
            }
        }
    }

    if header.height > 1 {
        let (rows, cols) = (header.height, header.width);
        let mut ordered = vec![PointRecord::NAN; n];
        for (k, p) in pts.into_iter().enumerate() {
            ordered[firing_index(k / cols, k % cols, rows)] = p;
        }
        Ok(PointCloud::ordered(ordered, rows, cols, "").expect("sized from header"))
    } else {
        Ok(PointCloud::unordered(pts, ""))
    }
}

pub fn write_pcd(cloud: &PointCloud, encoding: PcdEncoding) -> Vec<u8> {
    let (height, width) = cloud.grid.unwrap_or((1, cloud.len()));
    // Row-major file order.
    let records: Vec<&PointRecord> = match cloud.grid {
        Some((rows, cols)) => (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| &cloud.points[firing_index(r, c, rows)])
            .collect(),
        None => cloud.points.iter().collect(),
    };
    let mut head = String::new();
    head.push_str("# .PCD v0.7 - Point Cloud Data file format\n");
    head.push_str(
        "VERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4 1\nTYPE F F F U\nCOUNT 1 1 1 1\n",
    );
    let _ = writeln!(head, "WIDTH {width}\nHEIGHT {height}");
    head.push_str("VIEWPOINT 0 0 0 1 0 0 0\n");
    let _ = writeln!(head, "POINTS {}", records.len());
    let mut out = head.into_bytes();
    match encoding {
        PcdEncoding::Binary => {
            out.extend_from_slice(b"DATA binary\n");
            out.reserve(records.len() * 13);
            for p in records {
                out.extend_from_slice(&p.x.to_le_bytes());
                out.extend_from_slice(&p.y.to_le_bytes());
                out.extend_from_slice(&p.z.to_le_bytes());
                out.push(p.intensity);
            }
        }
        PcdEncoding::Ascii => {
            out.extend_from_slice(b"DATA ascii\n");
            let mut s = String::with_capacity(records.len() * 32);
            for p in records {
                // `{}` on f32 prints the shortest string that parses back exactly.
                let _ = writeln!(s, "{} {} {} {}", p.x, p.y, p.z, p.intensity);
            }
            out.extend_from_slice(s.as_bytes());
        }
    }
    out
}
