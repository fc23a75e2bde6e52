//! End-to-end compression and decompression of one scan.
//!
//! Encoder: project, shift, denoise, encode the three planes, pack a frame.
//! Decoder: check the calibration, decode, unshift, reconstruct.

use thiserror::Error;

use crate::cloud::PointCloud;
use crate::codecs::{decode_plane, encode_plane, wrap_external, CodecError, CodecId, Raster};
use crate::container::{encode_nan_sidecar, CompressedFrame, ContainerError, PlaneKind, VERSION};
use crate::exchange::{PlaneData, PlaneFile};
use crate::exec::Exec;
use crate::grid::Grid;
use crate::projection::{
    denoise, denormalize_range, estimate_normalization, normalize_range, project, reconstruct,
    shift_planes, NanIndex, NormalizationParams, ProjectionError, ScanPlanes, ShiftDirection,
};
use crate::sensor::SensorConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("{kind} plane: {source}")]
    Codec {
        kind: PlaneKind,
        #[source]
        source: CodecError,
    },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("range codec EXTERNAL_RNN needs a bitstream from the external neural codec (see `lpcc compress --rnn-bitstream`)")]
    MissingRnnBitstream,
    #[error("frame carries an EXTERNAL_RNN range plane; decode it with the external neural codec and pass the result (see `lpcc decompress --rnn-plane`)")]
    MissingRnnPlane,
    #[error("external range plane is {found_rows}x{found_cols}, frame grid is {rows}x{cols}")]
    RnnPlaneShape {
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecChoice {
    pub codec: CodecId,
    pub quality: Option<f32>,
}

impl CodecChoice {
    pub const RAW: CodecChoice = CodecChoice {
        codec: CodecId::Raw,
        quality: None,
    };
    pub const LOSSLESS: CodecChoice = CodecChoice {
        codec: CodecId::Lossless,
        quality: None,
    };

    pub fn wavelet(ratio: f32) -> Self {
        CodecChoice {
            codec: CodecId::LossyWavelet,
            quality: Some(ratio),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneCodecs {
    pub range: CodecChoice,
    pub azimuth: CodecChoice,
    pub intensity: CodecChoice,
}

impl PlaneCodecs {
    pub fn uniform(choice: CodecChoice) -> Self {
        PlaneCodecs {
            range: choice,
            azimuth: choice,
            intensity: choice,
        }
    }

    /// JPEG 2000 for range and azimuth at ratio 10, PNG for intensity.
    pub fn lossy_default() -> Self {
        PlaneCodecs {
            range: CodecChoice::wavelet(10.0),
            azimuth: CodecChoice::wavelet(10.0),
            intensity: CodecChoice::LOSSLESS,
        }
    }

    pub fn get(&self, kind: PlaneKind) -> CodecChoice {
        match kind {
            PlaneKind::Range => self.range,
            PlaneKind::Azimuth => self.azimuth,
            PlaneKind::Intensity => self.intensity,
        }
    }
}

/// Bitstream handed over by the external neural range codec.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnPayload {
    pub bitstream: Vec<u8>,
    pub iterations: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressOptions {
    pub codecs: PlaneCodecs,
    /// Defaults to the statistics of the cloud being compressed.
    pub norm: Option<NormalizationParams>,
    pub rnn: Option<RnnPayload>,
}

impl CompressOptions {
    pub fn new(codecs: PlaneCodecs) -> Self {
        CompressOptions {
            codecs,
            norm: None,
            rnn: None,
        }
    }
}

/// Shifted, denoised planes ready for the codecs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub planes: ScanPlanes,
    /// NaN cells in shifted coordinates.
    pub nan: NanIndex,
    pub norm: NormalizationParams,
}

impl Prepared {
    /// Normalized range plane in the exchange format.
    pub fn range_exchange(&self, config: &SensorConfig) -> Result<PlaneFile> {
        let d_max = config.max_range();
        Ok(PlaneFile {
            data: PlaneData::F32(normalize_range(&self.planes.range, self.norm, d_max)?),
            norm: self.norm,
            d_max: d_max as f32,
        })
    }
}

pub fn prepare(
    cloud: &PointCloud,
    config: &SensorConfig,
    norm: Option<NormalizationParams>,
) -> Result<Prepared> {
    let (planes, nan) = project(cloud, config)?;
    let (planes, nan) = shift_planes(&planes, &nan, config, ShiftDirection::Forward)?;
    let planes = denoise(&planes, &nan)?;
    let norm = match norm {
        Some(n) => {
            n.validate()?;
            n
        }
        None => match estimate_normalization(std::slice::from_ref(cloud)) {
            Ok(n) => n,
            Err(ProjectionError::EmptySample) => NormalizationParams::identity(config.max_range()),
            Err(e) => return Err(e.into()),
        },
    };
    Ok(Prepared { planes, nan, norm })
}

pub fn compress(
    cloud: &PointCloud,
    config: &SensorConfig,
    opts: &CompressOptions,
) -> Result<CompressedFrame> {
    let prepared = prepare(cloud, config, opts.norm)?;
    pack(&prepared, config, opts)
}

/// Encodes already prepared planes into a frame.
pub fn pack(
    prepared: &Prepared,
    config: &SensorConfig,
    opts: &CompressOptions,
) -> Result<CompressedFrame> {
    let (rows, cols) = (config.rows(), config.cols());
    let mut planes = Vec::with_capacity(3);
    for kind in PlaneKind::ALL {
        let choice = opts.codecs.get(kind);
        let raster: Raster = match kind {
            PlaneKind::Range => prepared.planes.range.clone().into(),
            PlaneKind::Azimuth => prepared.planes.azimuth.clone().into(),
            PlaneKind::Intensity => prepared.planes.intensity.clone().into(),
        };
        let codec_err = |source| PipelineError::Codec { kind, source };
        let cw = if choice.codec == CodecId::ExternalRnn && kind == PlaneKind::Range {
            let rnn = opts
                .rnn
                .as_ref()
                .ok_or(PipelineError::MissingRnnBitstream)?;
            wrap_external(rnn.bitstream.clone(), cols, rows, rnn.iterations).map_err(codec_err)?
        } else {
            encode_plane(&raster, choice.codec, choice.quality).map_err(codec_err)?
        };
        planes.push((kind, cw));
    }
    let frame = CompressedFrame {
        version: VERSION,
        sensor_digest: config.digest(),
        rows: rows as u16,
        cols: cols as u16,
        d_max: config.max_range() as f32,
        norm: prepared.norm,
        nan_payload: encode_nan_sidecar(&prepared.nan),
        planes,
    };
    frame.validate()?;
    Ok(frame)
}

/// Decodes a frame back to a point cloud in firing order.
///
/// `rnn_plane` is the normalized range plane decoded by the external codec;
/// it is required exactly when the frame's range plane is EXTERNAL_RNN.
pub fn decompress(
    frame: &CompressedFrame,
    config: &SensorConfig,
    rnn_plane: Option<&Grid<f32>>,
) -> Result<PointCloud> {
    frame.validate()?;
    frame.check_sensor(config)?;
    let (rows, cols) = (config.rows(), config.cols());
    let nan = frame.nan_index()?;

    let decode = |kind: PlaneKind| -> Result<Raster> {
        let cw = frame.plane(kind).expect("validated frame has every plane");
        decode_plane(cw).map_err(|source| PipelineError::Codec { kind, source })
    };
    let range_cw = frame
        .plane(PlaneKind::Range)
        .expect("validated frame has every plane");
    let range = if range_cw.codec == CodecId::ExternalRnn {
        let plane = rnn_plane.ok_or(PipelineError::MissingRnnPlane)?;
        if plane.rows() != rows || plane.cols() != cols {
            return Err(PipelineError::RnnPlaneShape {
                rows,
                cols,
                found_rows: plane.rows(),
                found_cols: plane.cols(),
            });
        }
        denormalize_range(plane, frame.norm, config.max_range())?
    } else {
        decode(PlaneKind::Range)?
            .into_gray16()
            .expect("validated depth")
    };
    let planes = ScanPlanes {
        range,
        azimuth: decode(PlaneKind::Azimuth)?
            .into_gray16()
            .expect("validated depth"),
        intensity: decode(PlaneKind::Intensity)?
            .into_gray8()
            .expect("validated depth"),
        shifted: true,
        denoised: true,
    };
    let (planes, nan) = shift_planes(&planes, &nan, config, ShiftDirection::Inverse)?;
    Ok(reconstruct(&planes, &nan, config)?)
}

/// Compresses many scans; output order follows input order.
pub fn compress_batch(
    clouds: &[PointCloud],
    config: &SensorConfig,
    opts: &CompressOptions,
    exec: Exec,
) -> Vec<Result<CompressedFrame>> {
    exec.map_slice(clouds, |c| compress(c, config, opts))
}

/// Reference output of a distortion-free codec: `reconstruct(project(x))`.
pub fn lossless_reference(cloud: &PointCloud, config: &SensorConfig) -> Result<PointCloud> {
    let (planes, nan) = project(cloud, config)?;
    Ok(reconstruct(&planes, &nan, config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::{read_frame, write_frame};
    use crate::ingest::{synth_scan, SceneSpec};

    fn small() -> (SensorConfig, PointCloud) {
        let config = SensorConfig::synthetic_default();
        let cloud = synth_scan(&SceneSpec::courtyard(1, 0.15), &config);
        (config, cloud)
    }

    #[test]
    fn lossless_pipeline_matches_reference() {
        let (config, cloud) = small();
        let reference = lossless_reference(&cloud, &config).unwrap();
        for choice in [CodecChoice::RAW, CodecChoice::LOSSLESS] {
            let frame = compress(
                &cloud,
                &config,
                &CompressOptions::new(PlaneCodecs::uniform(choice)),
            )
            .unwrap();
            let frame = read_frame(&write_frame(&frame).unwrap()).unwrap();
            let out = decompress(&frame, &config, None).unwrap();
            assert!(out.same_as(&reference));
            assert_eq!(out.len(), 57984 - cloud.nan_count());
        }
    }

    #[test]
    fn lossy_default_decodes() {
        let (config, cloud) = small();
        let frame = compress(
            &cloud,
            &config,
            &CompressOptions::new(PlaneCodecs::lossy_default()),
        )
        .unwrap();
        let out = decompress(&frame, &config, None).unwrap();
        assert_eq!(out.len(), cloud.valid_count());
    }

    #[test]
    fn external_range_requires_payloads() {
        let (config, cloud) = small();
        let mut codecs = PlaneCodecs::uniform(CodecChoice::LOSSLESS);
        codecs.range = CodecChoice {
            codec: CodecId::ExternalRnn,
            quality: Some(4.0),
        };
        let mut opts = CompressOptions::new(codecs);
        assert!(matches!(
            compress(&cloud, &config, &opts),
            Err(PipelineError::MissingRnnBitstream)
        ));
        opts.rnn = Some(RnnPayload {
            bitstream: vec![0xAB; 100],
            iterations: 4,
        });
        let frame = compress(&cloud, &config, &opts).unwrap();
        assert!(matches!(
            decompress(&frame, &config, None),
            Err(PipelineError::MissingRnnPlane)
        ));
        // A perfect external decoder hands back the exported plane.
        let prepared = prepare(&cloud, &config, None).unwrap();
        let PlaneData::F32(plane) = prepared.range_exchange(&config).unwrap().data else {
            panic!("range exchange is f32");
        };
        let out = decompress(&frame, &config, Some(&plane)).unwrap();
        assert!(out.same_as(&lossless_reference(&cloud, &config).unwrap()));
        let wrong = Grid::filled(2, 2, 0f32);
        assert!(matches!(
            decompress(&frame, &config, Some(&wrong)),
            Err(PipelineError::RnnPlaneShape { .. })
        ));
    }

    #[test]
    fn digest_mismatch_is_reported() {
        let (config, cloud) = small();
        let frame = compress(
            &cloud,
            &config,
            &CompressOptions::new(PlaneCodecs::uniform(CodecChoice::RAW)),
        )
        .unwrap();
        let other = SensorConfig::uniform(32, 1812, 200.0, -25.0, 15.0).unwrap();
        assert!(matches!(
            decompress(&frame, &other, None),
            Err(PipelineError::Container(
                ContainerError::DigestMismatch { .. }
            ))
        ));
    }

    #[test]
    fn all_nan_cloud_uses_identity_normalization() {
        let config = SensorConfig::synthetic_default();
        let cloud = synth_scan(&SceneSpec::empty(0), &config);
        let frame = compress(
            &cloud,
            &config,
            &CompressOptions::new(PlaneCodecs::uniform(CodecChoice::LOSSLESS)),
        )
        .unwrap();
        assert_eq!(frame.norm, NormalizationParams::identity(200.0));
        assert_eq!(decompress(&frame, &config, None).unwrap().len(), 0);
    }

    #[test]
    fn batch_preserves_order() {
        let config = SensorConfig::synthetic_default();
        let clouds: Vec<_> = (0..3)
            .map(|s| synth_scan(&SceneSpec::courtyard(s, 0.1), &config))
            .collect();
        let opts = CompressOptions::new(PlaneCodecs::uniform(CodecChoice::LOSSLESS));
        let seq = compress_batch(&clouds, &config, &opts, Exec::Sequential);
        let par = compress_batch(&clouds, &config, &opts, Exec::Parallel);
        for ((a, b), c) in seq.into_iter().zip(par).zip(&clouds) {
            let (a, b) = (a.unwrap(), b.unwrap());
            assert_eq!(a, b);
            assert_eq!(a, compress(c, &config, &opts).unwrap());
        }
    }
}
