//! Point cloud input: PCD files and synthetic scans.

pub mod pcd;
pub mod synth;

pub use pcd::{read_pcd, write_pcd, PcdEncoding, PcdError};
pub use synth::{synth_scan, synth_scan_with, SceneError, SceneSpec, SynthStats};

use crate::cloud::PointCloud;
use crate::sensor::SensorConfig;

/// Brings a cloud read from disk onto the sensor grid.
///
/// Organized clouds must already match `rows x cols`. An unorganized cloud
/// whose length equals `rows * cols` is taken to be in firing order.
pub fn adapt_to_grid(mut cloud: PointCloud, config: &SensorConfig) -> Option<PointCloud> {
    let (rows, cols) = (config.rows(), config.cols());
    match cloud.grid {
        Some(g) if g == (rows, cols) => Some(cloud),
        None if cloud.len() == rows * cols => {
            cloud.grid = Some((rows, cols));
            Some(cloud)
        }
        _ => None,
    }
}
