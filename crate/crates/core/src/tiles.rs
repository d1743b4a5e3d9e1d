//! Binary occupancy grids for RoI tiles.
//!
//! Row 0 of every grid is the southern edge and column 0 the western
//! edge; matrices are stored row-major.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngExt};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::geo::PlanarPoint;
use crate::seeds;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    side_m: f64,
    n_cells: usize,
}

impl GridSpec {
    pub fn new(side_m: f64, n_cells: usize) -> Result<Self> {
        if !(side_m.is_finite() && side_m > 0.0) {
            return Err(Error::domain(format!("RoI side {side_m} must be positive")));
        }
        if n_cells < 4 || !n_cells.is_multiple_of(2) {
            return Err(Error::domain(format!(
                "cell count {n_cells} must be even and at least 4"
            )));
        }
        Ok(Self { side_m, n_cells })
    }

    pub fn side_m(&self) -> f64 {
        self.side_m
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn resolution_m(&self) -> f64 {
        self.side_m / self.n_cells as f64
    }

    /// Side length of the RoE grid, N/2.
    pub fn roe_cells(&self) -> usize {
        self.n_cells / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiTile {
    tile_id: u32,
    grid: GridSpec,
    occupancy: Vec<u8>,
    bs_count: usize,
}

impl RoiTile {
    pub fn from_occupancy(tile_id: u32, grid: GridSpec, occupancy: Vec<u8>) -> Result<Self> {
        let n = grid.n_cells();
        if occupancy.len() != n * n {
            return Err(Error::domain(format!(
                "occupancy has {} cells, expected {}",
                occupancy.len(),
                n * n
            )));
        }
        if let Some(pos) = occupancy.iter().position(|&v| v > 1) {
            return Err(Error::domain(format!(
                "occupancy cell {pos} holds {}, expected 0 or 1",
                occupancy[pos]
            )));
        }
        let bs_count = occupancy.iter().filter(|&&v| v == 1).count();
        Ok(Self {
            tile_id,
            grid,
            occupancy,
            bs_count,
        })
    }

    pub fn tile_id(&self) -> u32 {
        self.tile_id
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    /// Number of occupied cells.
    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn is_occupied(&self, row: usize, col: usize) -> bool {
        self.occupancy[row * self.grid.n_cells() + col] == 1
    }

    /// (row, col) of every occupied cell in row-major order.
    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.grid.n_cells();
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(move |(i, _)| (i / n, i % n))
    }

    /// Centers of occupied cells in frame-local meters.
    pub fn bs_positions(&self) -> Vec<PlanarPoint> {
        let res = self.grid.resolution_m();
        self.occupied_cells()
            .map(|(r, c)| PlanarPoint::new((c as f64 + 0.5) * res, (r as f64 + 0.5) * res))
            .collect()
    }

    pub fn transformed(&self, sym: Dihedral) -> RoiTile {
        RoiTile {
            tile_id: self.tile_id,
            grid: self.grid,
            occupancy: sym.apply(&self.occupancy, self.grid.n_cells()),
            bs_count: self.bs_count,
        }
    }
}

/// Rasterizes frame-local points; several points in one cell collapse to a single 1.
pub fn rasterize(tile_id: u32, points: &[PlanarPoint], grid: GridSpec) -> Result<RoiTile> {
    let n = grid.n_cells();
    let res = grid.resolution_m();
    let side = grid.side_m();
    let mut occupancy = vec![0u8; n * n];
    for p in points {
        let inside = |v: f64| (0.0..side).contains(&v);
        if !(inside(p.x_m) && inside(p.y_m)) {
            return Err(Error::domain(format!(
                "point ({}, {}) lies outside the {side} m frame",
                p.x_m, p.y_m
            )));
        }
        // x < side can still round up to n
        let row = ((p.y_m / res).floor() as usize).min(n - 1);
        let col = ((p.x_m / res).floor() as usize).min(n - 1);
        occupancy[row * n + col] = 1;
    }
    RoiTile::from_occupancy(tile_id, grid, occupancy)
}

/// Keeps tiles with `b_min <= bs_count <= b_max`, preserving order.
pub fn filter_tiles(tiles: Vec<RoiTile>, b_min: usize, b_max: usize) -> Vec<RoiTile> {
    tiles
        .into_iter()
        .filter(|t| (b_min..=b_max).contains(&t.bs_count))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train_fraction: f64,
    pub assignment: BTreeMap<u32, Split>,
}

impl SplitAssignment {
    pub fn count(&self, split: Split) -> usize {
        self.assignment.values().filter(|&&s| s == split).count()
    }

    pub fn ids(&self, split: Split) -> Vec<u32> {
        self.assignment
            .iter()
            .filter(|(_, &s)| s == split)
            .map(|(&id, _)| id)
            .collect()
    }
}

/// Seeded train/test split: the sorted tile ids are shuffled and the
/// first `round(fraction * K)` go to training.
pub fn split(tile_ids: &[u32], fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!(
            "train fraction {fraction} must lie in (0, 1)"
        )));
    }
    let mut ids = tile_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != tile_ids.len() {
        return Err(Error::domain("tile ids must be unique"));
    }
    ids.shuffle(&mut seeds::rng(seed));
    let n_train = (fraction * ids.len() as f64).round() as usize;
    let assignment = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            (
                id,
                if i < n_train {
                    Split::Train
                } else {
                    Split::Test
                },
            )
        })
        .collect();
    Ok(SplitAssignment {
        seed,
        train_fraction: fraction,
        assignment,
    })
}

/// Homogeneous PPP of the given density (per m^2) on `[0, side)^2`.
pub fn sample_ppp<R: Rng + ?Sized>(
    density: f64,
    side_m: f64,
    rng: &mut R,
) -> Result<Vec<PlanarPoint>> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::domain(format!(
            "PPP density {density} must be positive"
        )));
    }
    let mean = density * side_m * side_m;
    let count = Poisson::new(mean)
        .map_err(|e| Error::domain(format!("Poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    Ok((0..count)
        .map(|_| {
            let x: f64 = rng.random::<f64>() * side_m;
            let y: f64 = rng.random::<f64>() * side_m;
            // random() is in [0, 1) but the product can round to side_m
            PlanarPoint::new(x.min(prev_below(side_m)), y.min(prev_below(side_m)))
        })
        .collect())
}

fn prev_below(v: f64) -> f64 {
    f64::from_bits(v.to_bits() - 1)
}

/// Synthetic RoI tile drawn from a PPP; deterministic in `seed`.
pub fn synth_ppp(tile_id: u32, density: f64, grid: GridSpec, seed: u64) -> Result<RoiTile> {
    let points = sample_ppp(density, grid.side_m(), &mut seeds::rng(seed))?;
    rasterize(tile_id, &points, grid)
}

/// The eight symmetries of the square acting on a row-major matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipRows,
    FlipCols,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipRows,
        Dihedral::FlipCols,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    /// Destination of source cell (row, col) in a `side` x `side` matrix.
    pub fn map(self, row: usize, col: usize, side: usize) -> (usize, usize) {
        let last = side - 1;
        match self {
            Dihedral::Identity => (row, col),
            Dihedral::Rot90 => (col, last - row),
            Dihedral::Rot180 => (last - row, last - col),
            Dihedral::Rot270 => (last - col, row),
            Dihedral::FlipRows => (last - row, col),
            Dihedral::FlipCols => (row, last - col),
            Dihedral::Transpose => (col, row),
            Dihedral::AntiTranspose => (last - col, last - row),
        }
    }

    pub fn apply<T: Copy>(self, data: &[T], side: usize) -> Vec<T> {
        assert_eq!(data.len(), side * side, "matrix is not square");
        let mut out = data.to_vec();
        for r in 0..side {
            for c in 0..side {
                let (r2, c2) = self.map(r, c, side);
                out[r2 * side + c2] = data[r * side + c];
            }
        }
        out
    }
}
