//! Point records and clouds.
//!
//! An *ordered* cloud has exactly `rows * cols` records in firing order:
//! record `i` belongs to laser row `i % rows` of firing sequence `i / rows`,
//! so each column of the scan grid is stored contiguously. Beams without an
//! echo are kept in place as NaN records. Unordered clouds carry only valid
//! points and are accepted by the metrics, never by the projection.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: u8,
}

impl PointRecord {
    pub const NAN: PointRecord = PointRecord {
        x: f32::NAN,
        y: f32::NAN,
        z: f32::NAN,
        intensity: 0,
    };

    pub fn new(x: f32, y: f32, z: f32, intensity: u8) -> Self {
        PointRecord { x, y, z, intensity }
    }

    /// True for a beam without a return (any non-finite coordinate).
    pub fn is_nan(&self) -> bool {
        !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite())
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    pub fn range(&self) -> f64 {
        let [x, y, z] = self.position();
        (x * x + y * y + z * z).sqrt()
    }

    /// Bitwise equality, treating every NaN record as equal to every other.
    pub fn same_as(&self, other: &PointRecord) -> bool {
        if self.is_nan() || other.is_nan() {
            return self.is_nan() && other.is_nan() && self.intensity == other.intensity;
        }
        self.x.to_bits() == other.x.to_bits()
            && self.y.to_bits() == other.y.to_bits()
            && self.z.to_bits() == other.z.to_bits()
            && self.intensity == other.intensity
    }
}

#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<PointRecord>,
    pub frame_id: String,
    /// `(rows, cols)` for ordered clouds.
    pub grid: Option<(usize, usize)>,
}

impl PointCloud {
    /// Builds an ordered cloud. Returns `None` if the length does not match the grid.
    pub fn ordered(
        points: Vec<PointRecord>,
        rows: usize,
        cols: usize,
        frame_id: impl Into<String>,
    ) -> Option<Self> {
        (points.len() == rows * cols).then(|| PointCloud {
            points,
            frame_id: frame_id.into(),
            grid: Some((rows, cols)),
        })
    }

    pub fn unordered(points: Vec<PointRecord>, frame_id: impl Into<String>) -> Self {
        PointCloud {
            points,
            frame_id: frame_id.into(),
            grid: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nan_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_nan()).count()
    }

    pub fn valid_count(&self) -> usize {
        self.len() - self.nan_count()
    }

    /// The finite records, in order.
    pub fn valid_points(&self) -> Vec<PointRecord> {
        self.points
            .iter()
            .copied()
            .filter(|p| !p.is_nan())
            .collect()
    }

    /// Record at grid cell `(row, col)` of an ordered cloud.
    pub fn at(&self, row: usize, col: usize) -> Option<&PointRecord> {
        let (rows, cols) = self.grid?;
        if row >= rows || col >= cols {
            return None;
        }
        self.points.get(firing_index(row, col, rows))
    }

    pub fn same_as(&self, other: &PointCloud) -> bool {
        self.grid == other.grid
            && self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| a.same_as(b))
    }
}

/// Firing-order index of grid cell `(row, col)`.
#[inline]
pub fn firing_index(row: usize, col: usize, rows: usize) -> usize {
    col * rows + row
}

/// Grid cell of firing-order index `i`.
#[inline]
pub fn grid_cell(i: usize, rows: usize) -> (usize, usize) {
    (i % rows, i / rows)
}
