//! Geometric and intensity fidelity between two point clouds.
//!
//! `RMSE_NN(P, Q)` is the root mean squared distance from each point of P
//! to its nearest neighbour in Q. The symmetric scores are:
//!
//! ```text
//! SNNRMSE   = sqrt(0.5 * RMSE_NN(P, Q) + 0.5 * RMSE_NN(Q, P))
//! SNNRMSE_I = sqrt(0.5 * RMSE_I(P, Q)  + 0.5 * RMSE_I(Q, P))
//! ```
//!
//! That is the square root of averaged RMSE values, not of averaged mean
//! squared errors, so SNNRMSE has units of sqrt(meters). `RMSE_I` pairs each
//! point with its geometric nearest neighbour and compares intensities.
//!
//! NaN returns are ignored; only finite points take part.

pub mod brute;
pub mod kdtree;

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::cloud::{PointCloud, PointRecord};
use crate::exec::Exec;
use crate::projection::{AZIMUTH_BINS, RANGE_LEVELS};
use kdtree::{KdTree, Neighbor};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{0} cloud has no finite points")]
    EmptyCloud(&'static str),
    #[error("voxel size must be positive and finite, got {0}")]
    InvalidCell(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Immutable nearest-neighbour index over the finite points of a cloud.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    tree: KdTree,
    intensity: Vec<u8>,
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        let (pos, intensity) = finite_points(cloud);
        SpatialIndex {
            tree: KdTree::build(pos),
            intensity,
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    /// Index into the cloud's finite points, in their original order.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<Neighbor> {
        self.tree.nearest(q)
    }

    pub fn intensity(&self, index: usize) -> u8 {
        self.intensity[index]
    }
}

fn finite_points(cloud: &PointCloud) -> (Vec<[f64; 3]>, Vec<u8>) {
    cloud
        .points
        .iter()
        .filter(|p| !p.is_nan())
        .map(|p| (p.position(), p.intensity))
        .unzip()
}

/// Both directional terms of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMetrics {
    pub rmse_pq: f64,
    pub rmse_qp: f64,
    pub rmse_i_pq: f64,
    pub rmse_i_qp: f64,
    pub snnrmse: f64,
    pub snnrmse_i: f64,
}

/// Geometric and intensity RMSE from each point of `from` to `to`.
fn directional(from: &(Vec<[f64; 3]>, Vec<u8>), to: &SpatialIndex, exec: Exec) -> (f64, f64) {
    let (pos, inten) = from;
    let per_point = exec.map_indices(pos.len(), |i| {
        let n = to.nearest(&pos[i]).expect("target is non-empty");
        let di = inten[i] as f64 - to.intensity(n.index) as f64;
        (n.dist2, di * di)
    });
    // Summed sequentially so the result does not depend on the thread count.
    let (sd, si) = per_point
        .iter()
        .fold((0.0, 0.0), |(a, b), (d, i)| (a + d, b + i));
    let n = pos.len() as f64;
    ((sd / n).sqrt(), (si / n).sqrt())
}

/// Evaluates every metric for `p` against `q` with one index per side.
pub fn evaluate_pair(p: &PointCloud, q: &PointCloud, exec: Exec) -> Result<PairMetrics> {
    let pp = finite_points(p);
    let qq = finite_points(q);
    if pp.0.is_empty() {
        return Err(MetricsError::EmptyCloud("first"));
    }
    if qq.0.is_empty() {
        return Err(MetricsError::EmptyCloud("second"));
    }
    let index = |pts: &(Vec<[f64; 3]>, Vec<u8>)| SpatialIndex {
        tree: KdTree::build(pts.0.clone()),
        intensity: pts.1.clone(),
    };
    let (p_index, q_index) = (index(&pp), index(&qq));
    let (rmse_pq, rmse_i_pq) = directional(&pp, &q_index, exec);
    let (rmse_qp, rmse_i_qp) = directional(&qq, &p_index, exec);
    Ok(PairMetrics {
        rmse_pq,
        rmse_qp,
        rmse_i_pq,
        rmse_i_qp,
        snnrmse: (0.5 * rmse_pq + 0.5 * rmse_qp).sqrt(),
        snnrmse_i: (0.5 * rmse_i_pq + 0.5 * rmse_i_qp).sqrt(),
    })
}

pub fn rmse_nn(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    let pp = finite_points(p);
    if pp.0.is_empty() {
        return Err(MetricsError::EmptyCloud("first"));
    }
    let q_index = SpatialIndex::build(q);
    if q_index.is_empty() {
        return Err(MetricsError::EmptyCloud("second"));
    }
    Ok(directional(&pp, &q_index, Exec::default()).0)
}

pub fn snnrmse(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    Ok(evaluate_pair(p, q, Exec::default())?.snnrmse)
}

pub fn snnrmse_i(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    Ok(evaluate_pair(p, q, Exec::default())?.snnrmse_i)
}

/// Worst-case displacement of one point caused by range and azimuth
/// quantization alone: one range level plus the arc of one azimuth bin at
/// `d_max`.
pub fn quantization_bound(d_max: f64) -> f64 {
    d_max / RANGE_LEVELS + d_max * (2.0 * std::f64::consts::PI / AZIMUTH_BINS)
}

/// One evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub frame_id: String,
    pub snnrmse: f64,
    pub snnrmse_i: f64,
    /// Frame bits per original finite point, when a payload was supplied.
    pub bpp: Option<f64>,
    pub points_original: usize,
    pub points_reconstructed: usize,
}

impl MetricsReport {
    pub fn evaluate(
        original: &PointCloud,
        reconstructed: &PointCloud,
        bpp: Option<f64>,
        exec: Exec,
    ) -> Result<Self> {
        let m = evaluate_pair(original, reconstructed, exec)?;
        Ok(MetricsReport {
            frame_id: original.frame_id.clone(),
            snnrmse: m.snnrmse,
            snnrmse_i: m.snnrmse_i,
            bpp,
            points_original: original.valid_count(),
            points_reconstructed: reconstructed.valid_count(),
        })
    }
}

/// Snaps every point to the center of its voxel and merges duplicates.
///
/// The voxel of `p` spans `[k * cell, (k + 1) * cell)` on each axis with
/// `k = floor(p / cell)`, and its center is `(k + 0.5) * cell`. A merged
/// point carries the rounded mean intensity. Output follows the order in
/// which voxels are first hit. NaN returns are dropped.
pub fn voxel_baseline(p: &PointCloud, cell: f64) -> Result<PointCloud> {
    if !(cell.is_finite() && cell > 0.0) {
        return Err(MetricsError::InvalidCell(cell));
    }
    let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
    let mut voxels: Vec<([i64; 3], u64, u64)> = Vec::new();
    for pt in p.points.iter().filter(|pt| !pt.is_nan()) {
        let key = pt.position().map(|v| (v / cell).floor() as i64);
        let i = *slot.entry(key).or_insert_with(|| {
            voxels.push((key, 0, 0));
            voxels.len() - 1
        });
        voxels[i].1 += pt.intensity as u64;
        voxels[i].2 += 1;
    }
    let points = voxels
        .into_iter()
        .map(|(k, sum, n)| {
            let [x, y, z] = k.map(|v| ((v as f64 + 0.5) * cell) as f32);
            let mean = (sum as f64 / n as f64).round() as u8;
            PointRecord::new(x, y, z, mean)
        })
        .collect();
    Ok(PointCloud::unordered(points, p.frame_id.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[(f32, f32, f32, u8)]) -> PointCloud {
        PointCloud::unordered(
            pts.iter()
                .map(|&(x, y, z, i)| PointRecord::new(x, y, z, i))
                .collect(),
            "t",
        )
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        let pts = (0..n)
            .map(|_| {
                PointRecord::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-2.0..2.0),
                    rng.random(),
                )
            })
            .collect();
        PointCloud::unordered(pts, "r")
    }

    fn jitter(rng: &mut ChaCha8Rng, c: &PointCloud) -> PointCloud {
        let pts = c
            .points
            .iter()
            .map(|p| {
                PointRecord::new(
                    p.x + rng.random_range(-0.05..0.05),
                    p.y + rng.random_range(-0.05..0.05),
                    p.z + rng.random_range(-0.05..0.05),
                    p.intensity.saturating_add(rng.random_range(0..4)),
                )
            })
            .collect();
        PointCloud::unordered(pts, "j")
    }

    #[test]
    fn identical_clouds_score_zero() {
        let p = cloud(&[(0.0, 0.0, 0.0, 3), (1.0, 2.0, 3.0, 9)]);
        assert_eq!(rmse_nn(&p, &p).unwrap(), 0.0);
        assert_eq!(snnrmse(&p, &p).unwrap(), 0.0);
        assert_eq!(snnrmse_i(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_one_meter() {
        let p = cloud(&[(0.0, 0.0, 0.0, 0)]);
        let q = cloud(&[(1.0, 0.0, 0.0, 0)]);
        assert_eq!(rmse_nn(&p, &q).unwrap(), 1.0);
        assert_eq!(snnrmse(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn intensity_offset_of_ten() {
        let p = cloud(&[
            (0.0, 0.0, 0.0, 20),
            (5.0, 0.0, 0.0, 100),
            (0.0, 7.0, 1.0, 0),
        ]);
        let q = cloud(&[
            (0.0, 0.0, 0.0, 30),
            (5.0, 0.0, 0.0, 110),
            (0.0, 7.0, 1.0, 10),
        ]);
        let v = snnrmse_i(&p, &q).unwrap();
        assert!((v - 10f64.sqrt()).abs() < 1e-12, "{v}");
        assert!((v - 3.1623).abs() < 1e-4);
    }

    #[test]
    fn empty_clouds_are_errors() {
        let p = cloud(&[(0.0, 0.0, 0.0, 0)]);
        let nan = PointCloud::unordered(vec![PointRecord::NAN], "n");
        assert_eq!(rmse_nn(&nan, &p), Err(MetricsError::EmptyCloud("first")));
        assert_eq!(snnrmse(&p, &nan), Err(MetricsError::EmptyCloud("second")));
    }

    #[test]
    fn nan_returns_are_ignored() {
        let p = cloud(&[(0.0, 0.0, 0.0, 1)]);
        let mut q = p.clone();
        q.points.push(PointRecord::NAN);
        assert_eq!(snnrmse(&p, &q).unwrap(), 0.0);
    }

    #[test]
    fn kdtree_matches_brute_force_on_jittered_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_cloud(&mut rng, 500);
        let q = jitter(&mut rng, &p);
        let pp: Vec<_> = p.points.iter().map(|x| x.position()).collect();
        let qq: Vec<_> = q.points.iter().map(|x| x.position()).collect();
        let oracle = brute::rmse_nn(&pp, &qq);
        let fast = rmse_nn(&p, &q).unwrap();
        assert!((fast - oracle).abs() < 1e-9, "{fast} vs {oracle}");
        let pi: Vec<_> = p
            .points
            .iter()
            .map(|x| (x.position(), x.intensity))
            .collect();
        let qi: Vec<_> = q
            .points
            .iter()
            .map(|x| (x.position(), x.intensity))
            .collect();
        let m = evaluate_pair(&p, &q, Exec::Sequential).unwrap();
        assert!((m.rmse_i_pq - brute::rmse_intensity(&pi, &qi)).abs() < 1e-9);
        assert!((m.rmse_i_qp - brute::rmse_intensity(&qi, &pi)).abs() < 1e-9);
    }

    #[test]
    fn sequential_and_parallel_agree_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_cloud(&mut rng, 2000);
        let q = jitter(&mut rng, &p);
        assert_eq!(
            evaluate_pair(&p, &q, Exec::Sequential).unwrap(),
            evaluate_pair(&p, &q, Exec::Parallel).unwrap()
        );
    }

    #[test]
    fn voxel_snapping() {
        let p = cloud(&[(0.05, 0.0, 0.0, 7)]);
        let v = voxel_baseline(&p, 0.2).unwrap();
        assert_eq!(v.len(), 1);
        let q = v.points[0];
        assert!((q.x - 0.1).abs() < 1e-7 && (q.y - 0.1).abs() < 1e-7 && (q.z - 0.1).abs() < 1e-7);
        assert_eq!(q.intensity, 7);
        // Negative coordinates floor away from zero.
        let n = voxel_baseline(&cloud(&[(-0.05, 0.0, 0.0, 0)]), 0.2).unwrap();
        assert!((n.points[0].x + 0.1).abs() < 1e-7);
    }

    #[test]
    fn voxel_merges_and_averages() {
        let p = cloud(&[
            (0.01, 0.01, 0.01, 10),
            (0.5, 0.5, 0.5, 0),
            (0.02, 0.03, 0.04, 21),
        ]);
        let v = voxel_baseline(&p, 0.1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.points[0].intensity, 16);
        assert_eq!(v.points[1].intensity, 0);
        assert!(voxel_baseline(&p, 0.0).is_err());
        assert!(voxel_baseline(&p, f64::NAN).is_err());
    }

    #[test]
    fn voxel_tiny_cell_is_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_cloud(&mut rng, 300);
        let v = voxel_baseline(&p, 1e-4).unwrap();
        assert_eq!(v.len(), p.len());
        assert!(snnrmse(&p, &v).unwrap() < 0.01);
    }

    #[test]
    fn voxel_error_grows_with_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_cloud(&mut rng, 3000);
        let s: Vec<f64> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&c| snnrmse(&p, &voxel_baseline(&p, c).unwrap()).unwrap())
            .collect();
        assert!(s[0] < s[1] && s[1] < s[2], "{s:?}");
    }

    #[test]
    fn bound_value() {
        let b = quantization_bound(200.0);
        assert!((b - (200.0 / 65535.0 + 200.0 * std::f64::consts::TAU / 65536.0)).abs() < 1e-15);
        assert!(b > 0.022 && b < 0.0223);
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        prop::collection::vec((-50f32..50.0, -50f32..50.0, -5f32..5.0, any::<u8>()), 1..80)
            .prop_map(|v| cloud(&v))
    }

    proptest! {
        #[test]
        fn symmetric(p in arb_cloud(), q in arb_cloud()) {
            let a = evaluate_pair(&p, &q, Exec::Sequential).unwrap();
            let b = evaluate_pair(&q, &p, Exec::Sequential).unwrap();
            prop_assert_eq!(a.snnrmse, b.snnrmse);
            prop_assert_eq!(a.snnrmse_i, b.snnrmse_i);
        }

        #[test]
        fn translation_invariant(p in arb_cloud(), q in arb_cloud(), t in prop::array::uniform3(-8i32..8)) {
            // Power-of-two offsets keep the f32 translation exact.
            let shift = |c: &PointCloud| {
                let pts = c.points.iter().map(|r| PointRecord::new(
                    r.x + t[0] as f32 * 0.25, r.y + t[1] as f32 * 0.25, r.z + t[2] as f32 * 0.25, r.intensity,
                )).collect();
                PointCloud::unordered(pts, "s")
            };
            let a = snnrmse(&p, &q).unwrap();
            let b = snnrmse(&shift(&p), &shift(&q)).unwrap();
            prop_assert!((a - b).abs() < 1e-4, "{} vs {}", a, b);
        }

        #[test]
        fn zero_iff_mutual_cover(p in arb_cloud()) {
            let mut q = p.clone();
            q.points.reverse();
            prop_assert_eq!(snnrmse(&p, &q).unwrap(), 0.0);
            q.points.push(PointRecord::new(1000.0, 0.0, 0.0, 0));
            prop_assert!(snnrmse(&p, &q).unwrap() > 0.0);
        }
    }
}
