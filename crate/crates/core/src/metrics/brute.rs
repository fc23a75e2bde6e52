//! O(n²) reference implementations used to check the k-d tree paths.

use super::kdtree::{dist2, Neighbor};

/// Linear scan; ties go to the lowest index.
pub fn nearest(points: &[[f64; 3]], q: &[f64; 3]) -> Option<Neighbor> {
    let mut best: Option<Neighbor> = None;
    for (index, p) in points.iter().enumerate() {
        let d = dist2(q, p);
        if best.map_or(true, |b| d < b.dist2) {
            best = Some(Neighbor { index, dist2: d });
        }
    }
    best
}

/// Root mean squared nearest-neighbour distance by exhaustive search.
pub fn rmse_nn(p: &[[f64; 3]], q: &[[f64; 3]]) -> f64 {
    let sum: f64 = p.iter().map(|a| nearest(q, a).unwrap().dist2).sum();
    (sum / p.len() as f64).sqrt()
}

pub fn rmse_intensity(p: &[([f64; 3], u8)], q: &[([f64; 3], u8)]) -> f64 {
    let qpos: Vec<[f64; 3]> = q.iter().map(|e| e.0).collect();
    let sum: f64 = p
        .iter()
        .map(|(pos, i)| {
            let n = nearest(&qpos, pos).unwrap();
            let d = *i as f64 - q[n.index].1 as f64;
            d * d
        })
        .sum();
    (sum / p.len() as f64).sqrt()
}
