use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lpcc::codecs::CodecId;
use lpcc::container::{frame_bpp, read_stream, write_frame, CompressedFrame, PlaneKind};
use lpcc::exchange::{read_plane_file, write_plane_file, PlaneData};
use lpcc::ingest::{adapt_to_grid, read_pcd, synth_scan_with, write_pcd, PcdEncoding, SceneSpec};
use lpcc::metrics::{voxel_baseline, MetricsReport};
use lpcc::pipeline::{
    compress_batch, decompress as decode_frame, prepare, CodecChoice, CompressOptions, PlaneCodecs,
    RnnPayload,
};
use lpcc::{Exec, PointCloud, SensorConfig, UNCOMPRESSED_BPP};

use crate::error::CliError;
use crate::{CalibArg, CompressArgs, DecompressArgs, EvaluateArgs, GenArgs, InspectArgs};

const DEFAULT_RATIO: f32 = 10.0;
const DEFAULT_DROPOUT: f64 = 0.15;

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_config(arg: &CalibArg) -> Result<SensorConfig> {
    match &arg.calib {
        Some(p) => SensorConfig::load_file(p)
            .map_err(|e| CliError::input(e.to_string()).context(p.display())),
        None => Ok(SensorConfig::synthetic_default()),
    }
}

fn load_pcd(path: &Path) -> Result<PointCloud> {
    let mut cloud = read_pcd(&read(path)?)
        .map_err(|e| CliError::input(e.to_string()).context(path.display()))?;
    cloud.frame_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(cloud)
}

/// `dir/name.ext` becomes `dir/name_007.ext` when there are several outputs.
fn numbered(base: &Path, k: usize, n: usize) -> PathBuf {
    if n <= 1 {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{k:03}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{k:03}"),
    };
    base.with_file_name(name)
}

fn encoding(ascii: bool) -> PcdEncoding {
    if ascii {
        PcdEncoding::Ascii
    } else {
        PcdEncoding::Binary
    }
}

pub fn gen(a: GenArgs) -> Result<()> {
    let config = load_config(&a.calib)?;
    if a.frames == 0 {
        return Err(CliError::input("--frames must be at least 1"));
    }
    let base = match &a.scene {
        Some(p) => {
            let text = String::from_utf8(read(p)?)
                .map_err(|_| CliError::input(format!("{}: not UTF-8", p.display())))?;
            let mut spec = SceneSpec::load(&text)
                .map_err(|e| CliError::input(e.to_string()).context(p.display()))?;
            if let Some(d) = a.dropout {
                spec.dropout_rate = d;
            }
            Some(spec)
        }
        None => None,
    };
    let first = a.seed.or(base.as_ref().map(|s| s.seed)).unwrap_or(0);
    let n = a.frames as usize;
    for k in 0..n {
        let seed = first.wrapping_add(k as u64);
        let spec = match &base {
            Some(s) => SceneSpec { seed, ..s.clone() },
            None => SceneSpec::courtyard(seed, a.dropout.unwrap_or(DEFAULT_DROPOUT)),
        };
        spec.validate()
            .map_err(|e| CliError::input(e.to_string()))?;
        let (cloud, stats) = synth_scan_with(&spec, &config, Exec::Parallel);
        let out = numbered(&a.output, k, n);
        write(&out, &write_pcd(&cloud, encoding(a.ascii)))?;
        println!(
            "{}: seed {seed}, {} beams, {} returns, {} dropped, {} misses",
            out.display(),
            cloud.len(),
            stats.hits,
            stats.dropped,
            stats.misses
        );
    }
    Ok(())
}

fn plane_codecs(a: &CompressArgs) -> Result<PlaneCodecs> {
    let wavelet = |q: Option<f32>| CodecChoice::wavelet(q.unwrap_or(DEFAULT_RATIO));
    let plain = |codec: CodecId| CodecChoice {
        codec,
        quality: None,
    };
    let uses_wavelet =
        [a.range_codec, a.azimuth_codec, a.intensity_codec].contains(&CodecId::LossyWavelet);
    if a.quality.is_some() && !uses_wavelet {
        return Err(CliError::input(
            "--quality only applies when a plane uses the j2k codec",
        ));
    }
    if a.azimuth_quality.is_some() && a.azimuth_codec != CodecId::LossyWavelet {
        return Err(CliError::input(
            "--azimuth-quality requires --azimuth-codec j2k",
        ));
    }
    if a.azimuth_codec == CodecId::ExternalRnn || a.intensity_codec == CodecId::ExternalRnn {
        return Err(CliError::input(
            "the rnn codec is only available for the range plane",
        ));
    }
    let rnn = a.range_codec == CodecId::ExternalRnn;
    if !rnn && (a.rnn_bitstream.is_some() || a.rnn_iterations.is_some()) {
        return Err(CliError::input(
            "--rnn-bitstream and --rnn-iterations require --range-codec rnn",
        ));
    }
    let pick = |codec: CodecId, q: Option<f32>| match codec {
        CodecId::LossyWavelet => wavelet(q),
        c => plain(c),
    };
    Ok(PlaneCodecs {
        range: match a.range_codec {
            CodecId::ExternalRnn => CodecChoice {
                codec: CodecId::ExternalRnn,
                quality: a.rnn_iterations.map(|n| n as f32),
            },
            c => pick(c, a.quality),
        },
        azimuth: pick(a.azimuth_codec, a.azimuth_quality.or(a.quality)),
        intensity: pick(a.intensity_codec, a.quality),
    })
}

fn rnn_payload(a: &CompressArgs) -> Result<Option<RnnPayload>> {
    if a.range_codec != CodecId::ExternalRnn {
        return Ok(None);
    }
    let Some(path) = &a.rnn_bitstream else {
        return Err(CliError::input(
            "--range-codec rnn needs --rnn-bitstream: export the plane with --export-range-plane, \
             encode it with the external neural codec (rnn_codec encode), then pass its bitstream here",
        ));
    };
    let iterations = a
        .rnn_iterations
        .ok_or_else(|| CliError::input("--range-codec rnn needs --rnn-iterations"))?;
    if a.inputs.len() != 1 {
        return Err(CliError::input(
            "--rnn-bitstream carries one frame; pass a single input",
        ));
    }
    Ok(Some(RnnPayload {
        bitstream: read(path)?,
        iterations,
    }))
}

pub fn compress(a: CompressArgs) -> Result<()> {
    let start = Instant::now();
    let config = load_config(&a.calib)?;
    let mut opts = CompressOptions::new(plane_codecs(&a)?);
    opts.rnn = rnn_payload(&a)?;

    let mut clouds = Vec::with_capacity(a.inputs.len());
    for path in &a.inputs {
        let cloud = load_pcd(path)?;
        let (len, grid) = (cloud.len(), cloud.grid);
        let cloud = adapt_to_grid(cloud, &config).ok_or_else(|| {
            CliError::input(format!(
                "{}: grid mismatch: {} points ({}) but the calibration expects {}x{} ordered beams",
                path.display(),
                len,
                grid.map_or("unorganized".to_string(), |(r, c)| format!("{r}x{c}")),
                config.rows(),
                config.cols()
            ))
        })?;
        clouds.push(cloud);
    }

    if let Some(path) = &a.export_range_plane {
        if clouds.len() != 1 {
            return Err(CliError::input("--export-range-plane takes a single input"));
        }
        let prepared = prepare(&clouds[0], &config, None)?;
        write(path, &write_plane_file(&prepared.range_exchange(&config)?))?;
    }

    let frames = compress_batch(&clouds, &config, &opts, Exec::Parallel);
    let mut stream = Vec::new();
    for (k, (frame, cloud)) in frames.into_iter().zip(&clouds).enumerate() {
        let frame = frame.map_err(|e| CliError::from(e).context(a.inputs[k].display()))?;
        stream.extend(write_frame(&frame)?);
        print_frame_line(k, cloud, &frame)?;
    }
    write(&a.output, &stream)?;
    println!(
        "wrote {} ({}, {} bytes) in {:.1} ms",
        a.output.display(),
        frame_count(clouds.len()),
        stream.len(),
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn print_frame_line(k: usize, cloud: &PointCloud, frame: &CompressedFrame) -> Result<()> {
    let points = cloud.valid_count();
    let sizes: Vec<String> = PlaneKind::ALL
        .iter()
        .map(|&kind| {
            let cw = frame.plane(kind).expect("complete frame");
            format!("{kind} {} {} B", cw.codec, cw.payload.len())
        })
        .collect();
    let bpp = if points > 0 {
        let b = frame_bpp(frame, points)?;
        format!(
            "{b:.3} bpp ({:.1}x vs {UNCOMPRESSED_BPP} bpp)",
            UNCOMPRESSED_BPP / b
        )
    } else {
        "no valid points".to_string()
    };
    println!(
        "frame {k} {}: {points} points, {} B, {bpp}; {}; sidecar {} B",
        cloud.frame_id,
        frame.serialized_len(),
        sizes.join(", "),
        frame.nan_payload.len()
    );
    Ok(())
}

pub fn decompress(a: DecompressArgs) -> Result<()> {
    let start = Instant::now();
    let config = load_config(&a.calib)?;
    let frames =
        read_stream(&read(&a.input)?).map_err(|e| CliError::from(e).context(a.input.display()))?;
    if frames.is_empty() {
        return Err(CliError::input(format!(
            "{}: empty stream",
            a.input.display()
        )));
    }
    if a.output.is_none() && a.extract_rnn.is_none() {
        return Err(CliError::input(
            "nothing to do: pass --output and/or --extract-rnn",
        ));
    }
    let has_rnn = |f: &CompressedFrame| {
        f.plane(PlaneKind::Range)
            .is_some_and(|cw| cw.codec == CodecId::ExternalRnn)
    };

    if let Some(path) = &a.extract_rnn {
        let [frame] = frames.as_slice() else {
            return Err(CliError::input("--extract-rnn needs a single-frame stream"));
        };
        frame.check_sensor(&config)?;
        let cw = frame
            .plane(PlaneKind::Range)
            .filter(|_| has_rnn(frame))
            .ok_or_else(|| CliError::input("frame has no EXTERNAL_RNN range plane"))?;
        write(path, &cw.payload)?;
        println!(
            "wrote {} ({} bytes, {} iterations, mu {}, theta {}, {}x{})",
            path.display(),
            cw.payload.len(),
            cw.quality.unwrap_or(0.0),
            frame.norm.mu,
            frame.norm.theta,
            frame.rows,
            frame.cols
        );
    }
    let Some(output) = &a.output else {
        return Ok(());
    };

    let rnn_plane = match &a.rnn_plane {
        Some(path) => {
            let [frame] = frames.as_slice() else {
                return Err(CliError::input("--rnn-plane needs a single-frame stream"));
            };
            let file = read_plane_file(&read(path)?)
                .map_err(|e| CliError::input(e.to_string()).context(path.display()))?;
            let PlaneData::F32(grid) = file.data else {
                return Err(CliError::input(format!(
                    "{}: range plane must be f32",
                    path.display()
                )));
            };
            if file.norm != frame.norm {
                return Err(CliError::input(format!(
                    "{}: normalization (mu {}, theta {}) differs from the frame's (mu {}, theta {})",
                    path.display(),
                    file.norm.mu,
                    file.norm.theta,
                    frame.norm.mu,
                    frame.norm.theta
                )));
            }
            Some(grid)
        }
        None => None,
    };

    let n = frames.len();
    for (k, frame) in frames.iter().enumerate() {
        let cloud = decode_frame(frame, &config, rnn_plane.as_ref())
            .map_err(|e| CliError::from(e).context(format!("frame {k}")))?;
        let out = numbered(output, k, n);
        write(&out, &write_pcd(&cloud, encoding(a.ascii)))?;
        println!("{}: {} points", out.display(), cloud.len());
    }
    println!(
        "decoded {} in {:.1} ms",
        frame_count(n),
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let original = load_pcd(&a.original)?;
    let reconstructed = match (&a.reconstructed, a.voxel) {
        (_, Some(cell)) => {
            voxel_baseline(&original, cell).map_err(|e| CliError::input(e.to_string()))?
        }
        (Some(p), None) => load_pcd(p)?,
        (None, None) => unreachable!("enforced by clap"),
    };
    let bpp = match &a.payload {
        Some(p) => {
            let frames =
                read_stream(&read(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
            let [frame] = frames.as_slice() else {
                return Err(CliError::input(format!(
                    "{}: expected one frame, found {}",
                    p.display(),
                    frames.len()
                )));
            };
            Some(frame_bpp(frame, original.valid_count())?)
        }
        None => None,
    };
    let report = MetricsReport::evaluate(&original, &reconstructed, bpp, Exec::Parallel)
        .map_err(|e| CliError::input(e.to_string()))?;
    let line = serde_json::to_string(&report).map_err(|e| CliError::internal(e.to_string()))?;
    println!("{line}");
    if let Some(path) = &a.report {
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        writeln!(f, "{line}").map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    let frames =
        read_stream(&read(&a.input)?).map_err(|e| CliError::from(e).context(a.input.display()))?;
    let config = match &a.calib.calib {
        Some(_) => Some(load_config(&a.calib)?),
        None => None,
    };
    for (k, f) in frames.iter().enumerate() {
        let nan = f.nan_index()?.len();
        let points = f.rows as usize * f.cols as usize - nan;
        let planes: Vec<_> = f
            .planes
            .iter()
            .map(|(kind, cw)| {
                serde_json::json!({
                    "kind": kind.name(),
                    "codec": cw.codec.name(),
                    "bit_depth": cw.bit_depth,
                    "quality": cw.quality,
                    "bytes": cw.payload.len(),
                })
            })
            .collect();
        let mut obj = serde_json::json!({
            "frame": k,
            "version": f.version,
            "sensor_digest": hex(&f.sensor_digest),
            "rows": f.rows,
            "cols": f.cols,
            "d_max": f.d_max,
            "mu": f.norm.mu,
            "theta": f.norm.theta,
            "nan_count": nan,
            "sidecar_bytes": f.nan_payload.len(),
            "planes": planes,
            "bytes": f.serialized_len(),
            "bpp": if points > 0 { Some(frame_bpp(f, points)?) } else { None },
        });
        if let Some(c) = &config {
            obj["matches_calibration"] = f.check_sensor(c).is_ok().into();
        }
        println!("{obj}");
    }
    Ok(())
}

fn frame_count(n: usize) -> String {
    if n == 1 {
        "1 frame".into()
    } else {
        format!("{n} frames")
    }
}
