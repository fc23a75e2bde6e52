//! Acceptance suite. One PASS/FAIL line per criterion; exits nonzero if any fail.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use lpcc::codecs::{encode_plane, wrap_external, Raster};
use lpcc::container::{
    encode_nan_sidecar, frame_bpp, read_frame, read_frame_for, read_stream, write_frame, VERSION,
};
use lpcc::ingest::{synth_scan, SceneSpec};
use lpcc::metrics::{evaluate_pair, snnrmse, voxel_baseline};
use lpcc::pipeline::{compress, decompress, CodecChoice, CompressOptions, PlaneCodecs};
use lpcc::{
    CodecId, CompressedFrame, Exec, Grid, NanIndex, NormalizationParams, PlaneKind, PointCloud,
    PointRecord, SensorConfig, UNCOMPRESSED_BPP,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const DROPOUT: f64 = 0.15;

struct RoundTrip {
    original: PointCloud,
    frame: CompressedFrame,
    decoded: PointCloud,
}

fn lossless_options() -> CompressOptions {
    CompressOptions::new(PlaneCodecs::uniform(CodecChoice::LOSSLESS))
}

/// Scan -> frame bytes -> frame -> cloud, all planes PNG.
fn round_trip(seed: u64, config: &SensorConfig) -> RoundTrip {
    let original = synth_scan(&SceneSpec::courtyard(seed, DROPOUT), config);
    let frame = compress(&original, config, &lossless_options()).expect("compress");
    let bytes = write_frame(&frame).expect("write");
    let frame = read_frame_for(&bytes, config).expect("read");
    let decoded = decompress(&frame, config, None).expect("decompress");
    RoundTrip {
        original,
        frame,
        decoded,
    }
}

static FIXTURES: OnceLock<Vec<RoundTrip>> = OnceLock::new();

fn fixtures() -> &'static [RoundTrip] {
    FIXTURES.get_or_init(|| {
        let config = SensorConfig::synthetic_default();
        (0..20).map(|seed| round_trip(seed, &config)).collect()
    })
}

fn lossless_bound() -> Check {
    let config = SensorConfig::synthetic_default();
    let dd = config.max_range() / 65535.0;
    let da = 2.0 * PI / 65536.0;
    let start = Instant::now();
    let scans = fixtures();
    let elapsed = start.elapsed();

    let (mut points, mut violations, mut worst) = (0usize, 0usize, 0.0f64);
    for rt in scans {
        let orig = rt.original.valid_points();
        if orig.len() != rt.decoded.len() {
            return Err(format!(
                "{}: {} original points, {} decoded",
                rt.original.frame_id,
                orig.len(),
                rt.decoded.len()
            ));
        }
        for (a, b) in orig.iter().zip(&rt.decoded.points) {
            let (pa, pb) = (a.position(), b.position());
            let err = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2))
                .sqrt();
            let bound = dd + a.range() * da;
            worst = worst.max(err / bound);
            if err > bound {
                violations += 1;
            }
            points += 1;
        }
    }
    let detail = format!(
        "{} scans, {points} points, {violations} violations, worst err/bound {worst:.3}, {:.2}s",
        scans.len(),
        elapsed.as_secs_f64()
    );
    if violations == 0 && elapsed < Duration::from_secs(30) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn point_accounting() -> Check {
    let config = SensorConfig::synthetic_default();
    let total = config.points_per_revolution();
    let mut extra = vec![round_trip(100, &config)];
    for (seed, rate) in [(101, 0.0), (102, 0.5)] {
        let original = synth_scan(&SceneSpec::courtyard(seed, rate), &config);
        let frame = compress(&original, &config, &lossless_options()).expect("compress");
        let decoded = decompress(&frame, &config, None).expect("decompress");
        extra.push(RoundTrip {
            original,
            frame,
            decoded,
        });
    }
    let mut checked = 0;
    for rt in fixtures().iter().chain(&extra) {
        let nan = rt.frame.nan_index().map_err(|e| e.to_string())?;
        let expected = total - nan.len();
        if rt.decoded.len() != expected || rt.original.valid_count() != expected {
            return Err(format!(
                "{}: decoded {} points, {total} - {} NaN = {expected}, original has {}",
                rt.original.frame_id,
                rt.decoded.len(),
                nan.len(),
                rt.original.valid_count()
            ));
        }
        checked += 1;
    }
    Ok(format!(
        "{checked} fixtures, count = {total} - |NaN| on all"
    ))
}

fn intensity_lossless() -> Check {
    for rt in fixtures() {
        let m =
            evaluate_pair(&rt.original, &rt.decoded, Exec::Parallel).map_err(|e| e.to_string())?;
        if m.snnrmse_i != 0.0 {
            return Err(format!(
                "{}: SNNRMSE_I = {}",
                rt.original.frame_id, m.snnrmse_i
            ));
        }
    }
    Ok(format!("SNNRMSE_I = 0 on {} scans", fixtures().len()))
}

/// Exhaustive nearest neighbour, lowest index wins ties. Returns
/// (geometric RMSE, intensity RMSE) from `p` to `q`.
fn exhaustive(p: &[PointRecord], q: &[PointRecord]) -> (f64, f64) {
    let (mut sd, mut si) = (0.0, 0.0);
    for a in p {
        let pa = a.position();
        let mut best = (f64::INFINITY, 0usize);
        for (j, b) in q.iter().enumerate() {
            let pb = b.position();
            let d = (pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2);
            if d < best.0 {
                best = (d, j);
            }
        }
        let di = a.intensity as f64 - q[best.1].intensity as f64;
        sd += best.0;
        si += di * di;
    }
    let n = p.len() as f64;
    ((sd / n).sqrt(), (si / n).sqrt())
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: f32) -> Vec<PointRecord> {
    (0..n)
        .map(|_| {
            PointRecord::new(
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                rng.random_range(-extent / 4.0..extent / 4.0),
                rng.random(),
            )
        })
        .collect()
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for pair in 0..10 {
        let p = random_cloud(&mut rng, 500, 20.0);
        let q = if pair % 2 == 0 {
            random_cloud(&mut rng, 500, 20.0)
        } else {
            // A jittered copy, closer to what a codec produces.
            p.iter()
                .map(|r| {
                    let j = |v: f32, rng: &mut ChaCha8Rng| v + rng.random_range(-0.05..0.05);
                    PointRecord::new(
                        j(r.x, &mut rng),
                        j(r.y, &mut rng),
                        j(r.z, &mut rng),
                        r.intensity ^ rng.random_range(0..4),
                    )
                })
                .collect()
        };
        let (pq, ipq) = exhaustive(&p, &q);
        let (qp, iqp) = exhaustive(&q, &p);
        let want = ((0.5 * pq + 0.5 * qp).sqrt(), (0.5 * ipq + 0.5 * iqp).sqrt());
        let pc = PointCloud::unordered(p, "p");
        let qc = PointCloud::unordered(q, "q");
        for exec in [Exec::Sequential, Exec::Parallel] {
            let m = evaluate_pair(&pc, &qc, exec).map_err(|e| e.to_string())?;
            let diff = (m.snnrmse - want.0).abs().max((m.snnrmse_i - want.1).abs());
            worst = worst.max(diff);
            if diff > 1e-9 {
                return Err(format!(
                    "pair {pair} ({exec:?}): index ({}, {}), oracle ({}, {})",
                    m.snnrmse, m.snnrmse_i, want.0, want.1
                ));
            }
        }
    }
    Ok(format!("10 pairs of 500 points, max |diff| {worst:.1e}"))
}

fn raw_footprint() -> Check {
    let config = SensorConfig::synthetic_default();
    let raw = CompressOptions::new(PlaneCodecs::uniform(CodecChoice::RAW));
    let mut values = Vec::new();
    for seed in 200..205 {
        let cloud = synth_scan(&SceneSpec::courtyard(seed, DROPOUT), &config);
        let frame = compress(&cloud, &config, &raw).map_err(|e| e.to_string())?;
        values.push(frame_bpp(&frame, cloud.valid_count()).map_err(|e| e.to_string())?);
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    let detail = format!(
        "RAW bpp {lo:.2}..{hi:.2} over {} scans, {:.2}x below {UNCOMPRESSED_BPP} bpp",
        values.len(),
        UNCOMPRESSED_BPP / hi
    );
    if UNCOMPRESSED_BPP == 196.0 && lo >= 44.0 && hi <= 52.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn compressibility_ordering() -> Check {
    let config = SensorConfig::synthetic_default();
    let mut sums = [0.0f64; 3];
    for seed in 300..310 {
        let cloud = synth_scan(&SceneSpec::courtyard(seed, DROPOUT), &config);
        let frame = compress(&cloud, &config, &lossless_options()).map_err(|e| e.to_string())?;
        let ratio = |kind| {
            let cw = frame.plane(kind).expect("plane");
            cw.payload.len() as f64 / cw.raw_len() as f64
        };
        let (r, a, i) = (
            ratio(PlaneKind::Range),
            ratio(PlaneKind::Azimuth),
            ratio(PlaneKind::Intensity),
        );
        if !(a < i && i < r) {
            return Err(format!(
                "seed {seed}: azimuth {:.1}%, intensity {:.1}%, range {:.1}%",
                a * 100.0,
                i * 100.0,
                r * 100.0
            ));
        }
        for (s, v) in sums.iter_mut().zip([a, i, r]) {
            *s += v;
        }
    }
    Ok(format!(
        "10 scans, mean azimuth {:.1}% < intensity {:.1}% < range {:.1}%",
        sums[0] * 10.0,
        sums[1] * 10.0,
        sums[2] * 10.0
    ))
}

fn fuzz_plane(
    rng: &mut ChaCha8Rng,
    kind: PlaneKind,
    rows: usize,
    cols: usize,
) -> lpcc::PlaneCodeword {
    let n = rows * cols;
    let raster: Raster = match kind {
        PlaneKind::Intensity => {
            Grid::from_vec(rows, cols, (0..n).map(|_| rng.random::<u8>()).collect())
                .unwrap()
                .into()
        }
        _ => {
            // Smooth ramps plus noise, so PNG and J2K see something image-like.
            let step: u16 = rng.random_range(0..64);
            let noise: u16 = rng.random_range(1..512);
            Grid::from_vec(
                rows,
                cols,
                (0..n)
                    .map(|i| {
                        (i as u16)
                            .wrapping_mul(step)
                            .wrapping_add(rng.random_range(0..noise))
                    })
                    .collect(),
            )
            .unwrap()
            .into()
        }
    };
    let wavelet_ok = rows >= 8 && cols >= 8;
    match rng.random_range(0..10) {
        0..=1 if kind == PlaneKind::Range => {
            let len = rng.random_range(0..300);
            let bits: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            wrap_external(bits, cols, rows, rng.random_range(1..=16)).unwrap()
        }
        2..=3 if wavelet_ok => {
            let q = rng.random_range(10.0f32..60.0);
            encode_plane(&raster, CodecId::LossyWavelet, Some(q)).unwrap()
        }
        4..=6 => encode_plane(&raster, CodecId::Lossless, None).unwrap(),
        _ => encode_plane(&raster, CodecId::Raw, None).unwrap(),
    }
}

fn fuzz_frame(rng: &mut ChaCha8Rng) -> CompressedFrame {
    let (rows, cols) = if rng.random_ratio(1, 20) {
        (256, rng.random_range(1..=8))
    } else {
        (rng.random_range(1..=40), rng.random_range(1..=160))
    };
    let rate = rng.random_range(0.0..0.6);
    let cells: Vec<(u8, u16)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r as u8, c as u16)))
        .filter(|_| rng.random_bool(rate))
        .collect();
    let d_max: f32 = rng.random_range(1.0..500.0);
    let mut planes: Vec<_> = PlaneKind::ALL
        .iter()
        .map(|&k| (k, fuzz_plane(rng, k, rows, cols)))
        .collect();
    planes.shuffle(rng);
    let frame = CompressedFrame {
        version: VERSION,
        sensor_digest: rng.random(),
        rows: rows as u16,
        cols: cols as u16,
        d_max,
        norm: NormalizationParams {
            mu: rng.random_range(0.0..=d_max),
            theta: rng.random_range(0.01..d_max),
        },
        nan_payload: encode_nan_sidecar(&NanIndex::from_cells(cells)),
        planes,
    };
    frame
        .validate()
        .expect("generator produced an invalid frame");
    frame
}

/// Byte ranges of every length or dimension field in a serialized frame,
/// located from the documented layout.
fn length_fields(bytes: &[u8]) -> Vec<(&'static str, std::ops::Range<usize>)> {
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let mut out = vec![
        ("frame_len", 5..9),
        ("rows", 17..19),
        ("cols", 19..21),
        ("nan_len", 33..37),
    ];
    let mut o = 37 + u32_at(33);
    out.push(("plane count", o..o + 1));
    o += 1;
    for _ in 0..3 {
        out.push(("width", o + 3..o + 5));
        out.push(("height", o + 5..o + 7));
        o += 7;
        let has_q = bytes[o] == 1;
        o += 1 + if has_q { 4 } else { 0 };
        out.push(("payload_len", o..o + 4));
        o += 4 + u32_at(o);
    }
    assert_eq!(o, bytes.len(), "layout walk");
    out
}

fn container_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let mut variants = 0usize;
    let reject = |bytes: &[u8], what: &str, i: usize| -> Result<(), String> {
        if let Ok(f) = read_frame(bytes) {
            return Err(format!(
                "frame {i}: {what} accepted ({} bytes, {}x{})",
                bytes.len(),
                f.rows,
                f.cols
            ));
        }
        if read_stream(bytes).is_ok() {
            return Err(format!("frame {i}: {what} accepted as a stream"));
        }
        Ok(())
    };
    let mut previous: Option<Vec<u8>> = None;
    for i in 0..1000 {
        let frame = fuzz_frame(&mut rng);
        let bytes = write_frame(&frame).map_err(|e| e.to_string())?;
        if bytes.len() != frame.serialized_len() {
            return Err(format!(
                "frame {i}: serialized_len {} != {}",
                frame.serialized_len(),
                bytes.len()
            ));
        }
        match read_frame(&bytes) {
            Ok(back) if back == frame => {}
            Ok(_) => return Err(format!("frame {i}: read(write(frame)) differs")),
            Err(e) => return Err(format!("frame {i}: valid frame rejected: {e}")),
        }

        // Truncation: every cut inside the headers, plus random cuts.
        let header_end = 64.min(bytes.len());
        let mut cuts: Vec<usize> = (0..header_end).collect();
        cuts.extend((0..16).map(|_| rng.random_range(0..bytes.len())));
        for cut in cuts {
            reject(&bytes[..cut], &format!("truncation to {cut}"), i)?;
            variants += 1;
        }

        for (name, field) in length_fields(&bytes) {
            for _ in 0..2 {
                let mut bad = bytes.clone();
                let at = rng.random_range(field.clone());
                bad[at] ^= rng.random_range(1..=255u8);
                reject(&bad, &format!("flipped {name} byte {at}"), i)?;
                variants += 1;
            }
        }

        let mut bad = bytes.clone();
        bad[rng.random_range(0..4)] ^= 0x20;
        reject(&bad, "bad magic", i)?;
        let mut bad = bytes.clone();
        bad[4] = VERSION + 1;
        reject(&bad, "future version", i)?;
        let mut bad = bytes.clone();
        bad.push(0);
        reject(&bad, "trailing byte", i)?;
        variants += 3;

        // A corrupt frame after a valid one must not yield the valid one alone.
        if let Some(prev) = &previous {
            let mut stream = prev.clone();
            stream.extend_from_slice(&bytes[..bytes.len() - 1]);
            if read_stream(&stream).is_ok() {
                return Err(format!("frame {i}: stream with a truncated tail accepted"));
            }
            let mut stream = prev.clone();
            stream.extend_from_slice(&bytes);
            match read_stream(&stream) {
                Ok(v) if v.len() == 2 && v[1] == frame => {}
                _ => return Err(format!("frame {i}: two-frame stream did not round-trip")),
            }
            variants += 1;
        }
        previous = Some(bytes);
    }
    Ok(format!(
        "1000 frames round-trip, {variants} corrupted variants rejected"
    ))
}

fn voxel_monotonicity() -> Check {
    let config = SensorConfig::synthetic_default();
    let cloud = synth_scan(&SceneSpec::courtyard(7, DROPOUT), &config);
    let mut scores = Vec::new();
    for cell in [0.1, 0.2, 0.4] {
        let vox = voxel_baseline(&cloud, cell).map_err(|e| e.to_string())?;
        scores.push(snnrmse(&cloud, &vox).map_err(|e| e.to_string())?);
    }
    let detail = format!(
        "SNNRMSE at 0.1/0.2/0.4 m: {:.4} / {:.4} / {:.4}",
        scores[0], scores[1], scores[2]
    );
    if scores[0] < scores[1] && scores[1] < scores[2] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("lossless round-trip bound", lossless_bound),
        ("point accounting", point_accounting),
        ("intensity losslessness", intensity_lossless),
        ("metric oracle equivalence", oracle_equivalence),
        ("raw footprint", raw_footprint),
        ("png compressibility ordering", compressibility_ordering),
        ("container fidelity", container_fidelity),
        ("voxel distortion monotonicity", voxel_monotonicity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
