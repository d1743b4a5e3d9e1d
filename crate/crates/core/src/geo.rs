//! Spherical-to-planar projection and RoI partitioning.
//!
//! Coordinates are projected with the small-angle map on a spherical
//! Earth: a displacement of (dlat, dlon) radians from a frame origin at
//! latitude `lat0` becomes `(R cos(lat0) dlon, R dlat)` meters (east,
//! north). Every point of a frame uses the frame origin's latitude, so a
//! frame's projection is a single affine map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

// Index arithmetic slack for extents that are exact multiples of the RoI side.
const COUNT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat_deg: f64,
    lon_deg: f64,
}

impl GeoPoint {
    /// Builds a point, normalizing the longitude into [-180, 180).
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self> {
        if !lat_deg.is_finite() || !(-90.0..=90.0).contains(&lat_deg) {
            return Err(Error::domain(format!(
                "latitude {lat_deg} outside [-90, 90]"
            )));
        }
        if !lon_deg.is_finite() {
            return Err(Error::domain(format!("longitude {lon_deg} is not finite")));
        }
        Ok(Self {
            lat_deg,
            lon_deg: normalize_lon(lon_deg),
        })
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat_deg
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon_deg
    }
}

fn normalize_lon(lon: f64) -> f64 {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Displacement in meters from a frame origin; x east, y north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x_m: f64,
    pub y_m: f64,
}

impl PlanarPoint {
    pub const fn new(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m }
    }

    pub fn dist_sq(&self, other: &PlanarPoint) -> f64 {
        let dx = self.x_m - other.x_m;
        let dy = self.y_m - other.y_m;
        dx * dx + dy * dy
    }
}

/// Projects `p` into the local planar frame anchored at `origin`.
pub fn project(origin: GeoPoint, p: GeoPoint) -> PlanarPoint {
    let dlat = (p.lat_deg - origin.lat_deg).to_radians();
    let dlon = normalize_lon(p.lon_deg - origin.lon_deg).to_radians();
    PlanarPoint {
        x_m: EARTH_RADIUS_M * origin.lat_deg.to_radians().cos() * dlon,
        y_m: EARTH_RADIUS_M * dlat,
    }
}

/// Inverse of [`project`]: the point `east_m`/`north_m` meters away from `origin`.
pub fn unproject(origin: GeoPoint, offset: PlanarPoint) -> Result<GeoPoint> {
    let cos_lat = origin.lat_deg.to_radians().cos();
    if cos_lat <= 0.0 {
        return Err(Error::domain("cannot unproject at a pole"));
    }
    GeoPoint::new(
        origin.lat_deg + (offset.y_m / EARTH_RADIUS_M).to_degrees(),
        origin.lon_deg + (offset.x_m / (EARTH_RADIUS_M * cos_lat)).to_degrees(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub southwest: GeoPoint,
    pub northeast: GeoPoint,
}

impl BoundingBox {
    pub fn new(southwest: GeoPoint, northeast: GeoPoint) -> Result<Self> {
        if southwest.lat_deg > northeast.lat_deg || southwest.lon_deg > northeast.lon_deg {
            return Err(Error::domain(
                "bounding box southwest corner must not lie north or east of the northeast corner",
            ));
        }
        Ok(Self {
            southwest,
            northeast,
        })
    }

    /// Smallest box holding every point; `None` for an empty slice.
    pub fn enclosing(points: &[GeoPoint]) -> Option<Self> {
        let first = points.first()?;
        let (mut s, mut w, mut n, mut e) =
            (first.lat_deg, first.lon_deg, first.lat_deg, first.lon_deg);
        for p in &points[1..] {
            s = s.min(p.lat_deg);
            n = n.max(p.lat_deg);
            w = w.min(p.lon_deg);
            e = e.max(p.lon_deg);
        }
        Some(Self {
            southwest: GeoPoint {
                lat_deg: s,
                lon_deg: w,
            },
            northeast: GeoPoint {
                lat_deg: n,
                lon_deg: e,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiFrame {
    pub frame_id: u32,
    /// Southwest corner.
    pub origin: GeoPoint,
    pub side_m: f64,
}

impl RoiFrame {
    /// Frame-local coordinates of `p` if it falls inside this frame.
    pub fn local(&self, p: GeoPoint) -> Option<PlanarPoint> {
        let q = project(self.origin, p);
        let inside = |v: f64| (0.0..self.side_m).contains(&v);
        (inside(q.x_m) && inside(q.y_m)).then_some(q)
    }
}

/// A row-major grid of disjoint RoI frames anchored at a bounding-box
/// southwest corner. Frame `r * cols + c` sits in row `r` (south to
/// north) and column `c` (west to east).
#[derive(Debug, Clone)]
pub struct Partition {
    side_m: f64,
    rows: usize,
    cols: usize,
    lat_step_deg: f64,
    southwest: GeoPoint,
    row_lon_step_deg: Vec<f64>,
    frames: Vec<RoiFrame>,
}

impl Partition {
    pub fn frames(&self) -> &[RoiFrame] {
        &self.frames
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn side_m(&self) -> f64 {
        self.side_m
    }

    /// Locates the frame holding `p` (half-open cells; a point on a
    /// shared edge goes to the northern/eastern frame).
    pub fn locate(&self, p: GeoPoint) -> Option<(&RoiFrame, PlanarPoint)> {
        if self.frames.is_empty() {
            return None;
        }
        let row_guess = ((p.lat_deg - self.southwest.lat_deg) / self.lat_step_deg).floor();
        if !row_guess.is_finite() {
            return None;
        }
        let row_guess = row_guess as i64;
        for row in [row_guess + 1, row_guess, row_guess - 1] {
            if row < 0 || row >= self.rows as i64 {
                continue;
            }
            let row = row as usize;
            let row_origin = self.frames[row * self.cols].origin;
            let dlon = normalize_lon(p.lon_deg - row_origin.lon_deg);
            let col_guess = (dlon / self.row_lon_step_deg[row]).floor() as i64;
            for col in [col_guess + 1, col_guess, col_guess - 1] {
                if col < 0 || col >= self.cols as i64 {
                    continue;
                }
                let frame = &self.frames[row * self.cols + col as usize];
                if let Some(local) = frame.local(p) {
                    return Some((frame, local));
                }
            }
        }
        None
    }
}

/// Cuts `bbox` into complete `side_m` x `side_m` frames. Partial frames at
/// the north and east edges are dropped; extents are measured at the
/// bounding-box center latitude.
pub fn partition(bbox: &BoundingBox, side_m: f64) -> Result<Partition> {
    if !(side_m.is_finite() && side_m > 0.0) {
        return Err(Error::domain(format!("RoI side {side_m} must be positive")));
    }
    let sw = bbox.southwest;
    let ne = bbox.northeast;
    let center_lat = 0.5 * (sw.lat_deg + ne.lat_deg);
    let extent_x = project(
        GeoPoint {
            lat_deg: center_lat,
            lon_deg: sw.lon_deg,
        },
        GeoPoint {
            lat_deg: center_lat,
            lon_deg: ne.lon_deg,
        },
    )
    .x_m;
    let extent_y = project(
        sw,
        GeoPoint {
            lat_deg: ne.lat_deg,
            lon_deg: sw.lon_deg,
        },
    )
    .y_m;
    let cols = (extent_x / side_m + COUNT_EPS).floor().max(0.0) as usize;
    let rows = (extent_y / side_m + COUNT_EPS).floor().max(0.0) as usize;
    let lat_step_deg = (side_m / EARTH_RADIUS_M).to_degrees();

    let mut frames = Vec::with_capacity(rows * cols);
    let mut row_lon_step_deg = Vec::with_capacity(rows);
    for r in 0..rows {
        let lat = sw.lat_deg + r as f64 * lat_step_deg;
        let cos_lat = lat.to_radians().cos();
        if cos_lat <= 0.0 {
            return Err(Error::domain("partition row reaches a pole"));
        }
        let lon_step = (side_m / (EARTH_RADIUS_M * cos_lat)).to_degrees();
        row_lon_step_deg.push(lon_step);
        for c in 0..cols {
            frames.push(RoiFrame {
                frame_id: (r * cols + c) as u32,
                origin: GeoPoint::new(lat, sw.lon_deg + c as f64 * lon_step)?,
                side_m,
            });
        }
    }
    Ok(Partition {
        side_m,
        rows,
        cols,
        lat_step_deg,
        southwest: sw,
        row_lon_step_deg,
        frames,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// Frame-local points per frame; frames without points are absent.
    pub by_frame: BTreeMap<u32, Vec<PlanarPoint>>,
    pub out_of_region: usize,
}

/// Projects each point into the frame containing it.
pub fn assign(points: &[GeoPoint], partition: &Partition) -> Assignment {
    let mut out = Assignment::default();
    for &p in points {
        match partition.locate(p) {
            Some((frame, local)) => out.by_frame.entry(frame.frame_id).or_default().push(local),
            None => out.out_of_region += 1,
        }
    }
    out
}
