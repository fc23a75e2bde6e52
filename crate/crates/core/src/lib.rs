//! Range-image compression for spinning LiDAR scans.
//!
//! An ordered scan is projected into three co-registered rasters (range,
//! azimuth, intensity) plus a sidecar listing the beams that returned no
//! echo. The rasters are compressed independently with interchangeable
//! codecs and packed into a single `.lpcc` frame. Decoding reverses the
//! chain and rebuilds the point cloud from the calibrated elevation of
//! each laser channel.
//!
//! ```text
//! PointCloud ──project──▶ ScanPlanes ──shift──▶ ──denoise──▶ codecs ──▶ CompressedFrame
//!            ◀─reconstruct── ◀──unshift── ◀──────── decode ◀──────────┘
//! ```
//!
//! The modules map onto that chain:
//!
//! - [`sensor`]: channel calibration and the per-row column shift.
//! - [`projection`]: quantization, projection, shifting, denoising,
//!   normalization and reconstruction.
//! - [`codecs`]: RAW, PNG, JPEG 2000 and the opaque external RNN slot.
//! - [`container`]: the bit-exact frame format and NaN sidecar.
//! - [`metrics`]: SNNRMSE / SNNRMSE_I with a k-d tree and brute-force oracle.
//! - [`ingest`]: PCD files and the synthetic scan generator.
//! - [`pipeline`]: end-to-end compress/decompress helpers.
//! - [`exchange`]: raw plane files shared with the external neural codec.
//!
//! Data-parallel loops go through [`exec`]; with the default `parallel`
//! feature they run on rayon, otherwise sequentially.

pub mod cloud;
pub mod codecs;
pub mod container;
pub mod exchange;
pub mod exec;
pub mod grid;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod sensor;

pub use cloud::{PointCloud, PointRecord};
pub use codecs::{CodecId, PlaneCodeword, Raster};
pub use container::{CompressedFrame, PlaneKind};
pub use exec::Exec;
pub use grid::Grid;
pub use metrics::MetricsReport;
pub use projection::{NanIndex, NormalizationParams, ScanPlanes};
pub use sensor::{ChannelCalib, SensorConfig};

/// Memory footprint of an uncompressed point cloud, in bits per point.
///
/// Used as the reference when reporting compression ratios.
pub const UNCOMPRESSED_BPP: f64 = 196.0;
