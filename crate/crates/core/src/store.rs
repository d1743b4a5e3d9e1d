//! Tile files, dataset manifests and grayscale renders.
//!
//! Tile file layout (little-endian):
//!
//! ```text
//! "CMT1"                        magic, 4 bytes
//! u32 tile_id
//! u32 N                         RoI cells per side
//! u32 M                         manifold count
//! N*N bytes                     occupancy in {0,1}, row-major, south row first
//! M times:
//!   f32 gamma_db
//!   (N/2)^2 f32                 coverage values, row-major, south row first
//! ```

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat, Luma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coverage::{ChannelModel, CoverageManifold};
use crate::tiles::{GridSpec, RoiTile, Split};
use crate::{Error, Result};

pub const TILE_MAGIC: &[u8; 4] = b"CMT1";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Canonical file name of a tile inside a data set or prediction directory.
pub fn tile_file_name(tile_id: u32) -> String {
    format!("tile_{tile_id:08}.cmt")
}

pub fn encode_tile(tile: &RoiTile, manifolds: &[CoverageManifold]) -> Result<Vec<u8>> {
    let n = tile.grid().n_cells();
    let side = tile.grid().roe_cells();
    for m in manifolds {
        if m.side() != side {
            return Err(Error::domain(format!(
                "manifold at {} dB is {}x{}, tile expects {side}x{side}",
                m.gamma_db(),
                m.side(),
                m.side()
            )));
        }
        if m.tile_id() != tile.tile_id() {
            return Err(Error::domain(format!(
                "manifold belongs to tile {}, not {}",
                m.tile_id(),
                tile.tile_id()
            )));
        }
    }
    let n_u32 = u32::try_from(n).map_err(|_| Error::domain("grid too large"))?;
    let mut out = Vec::with_capacity(16 + n * n + manifolds.len() * (4 + 4 * side * side));
    out.extend_from_slice(TILE_MAGIC);
    out.extend_from_slice(&tile.tile_id().to_le_bytes());
    out.extend_from_slice(&n_u32.to_le_bytes());
    out.extend_from_slice(&(manifolds.len() as u32).to_le_bytes());
    out.extend_from_slice(tile.occupancy());
    for m in manifolds {
        out.extend_from_slice(&m.gamma_db().to_le_bytes());
        for v in m.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(Error::format(
                self.pos,
                format!("truncated {what}: expected {len} bytes, found {available}"),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Decodes a tile file. `side_m` is not stored in the file and comes from the manifest.
pub fn decode_tile(bytes: &[u8], side_m: f64) -> Result<(RoiTile, Vec<CoverageManifold>)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != TILE_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:?}, expected \"CMT1\""),
        ));
    }
    let tile_id = r.u32("tile id")?;
    let n_pos = r.pos;
    let n = r.u32("grid size")? as usize;
    let count = r.u32("manifold count")? as usize;
    let grid = GridSpec::new(side_m, n).map_err(|e| Error::format(n_pos, e.to_string()))?;
    let occ_pos = r.pos;
    let cells = n
        .checked_mul(n)
        .ok_or_else(|| Error::format(n_pos, format!("grid size {n} is too large")))?;
    let occupancy = r.take(cells, "occupancy block")?.to_vec();
    if let Some(i) = occupancy.iter().position(|&v| v > 1) {
        return Err(Error::format(
            occ_pos + i,
            format!("occupancy byte {} is not 0 or 1", occupancy[i]),
        ));
    }
    let tile = RoiTile::from_occupancy(tile_id, grid, occupancy)?;

    let side = n / 2;
    let mut manifolds = Vec::with_capacity(count.min(64));
    for k in 0..count {
        let gamma_db = r.f32("manifold threshold")?;
        let block_pos = r.pos;
        let raw = r.take(4 * side * side, &format!("manifold block {k}"))?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::format(
                block_pos + 4 * i,
                format!("coverage value {} outside [0, 1]", values[i]),
            ));
        }
        manifolds.push(CoverageManifold::new(tile_id, gamma_db, side, values)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos,
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    Ok((tile, manifolds))
}

/// Writes via a temporary file and rename so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(Error::io(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::io(path))
}

/// Writes a tile file and returns its checksum.
pub fn write_tile(path: &Path, tile: &RoiTile, manifolds: &[CoverageManifold]) -> Result<String> {
    let bytes = encode_tile(tile, manifolds)?;
    write_atomic(path, &bytes)?;
    Ok(checksum(&bytes))
}

pub fn read_tile(path: &Path, side_m: f64) -> Result<(RoiTile, Vec<CoverageManifold>)> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_tile(&bytes, side_m).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Lowercase hex SHA-256.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub alpha: f64,
    pub noise_over_power: f64,
    pub model: ChannelModel,
    pub gamma_db: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreationParams {
    pub seed: u64,
    pub b_min: usize,
    pub b_max: usize,
    pub train_fraction: f64,
    pub source: String,
    pub tiles_considered: usize,
    pub tiles_discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub tile_id: u32,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub bs_count: usize,
    pub split: Split,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub grid: GridSpec,
    pub channel: ChannelSpec,
    pub creation: CreationParams,
    pub tiles: Vec<TileEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "manifest format version {} is not supported (expected {MANIFEST_VERSION})",
                self.format_version
            )));
        }
        GridSpec::new(self.grid.side_m(), self.grid.n_cells())
            .map_err(|e| Error::Data(format!("manifest grid: {e}")))?;
        let mut ids: Vec<u32> = self.tiles.iter().map(|t| t.tile_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("manifest lists a tile id twice".into()));
        }
        Ok(())
    }

    pub fn tile_path(&self, manifest_dir: &Path, entry: &TileEntry) -> PathBuf {
        manifest_dir.join(&entry.path)
    }

    /// Tile ids whose file content no longer matches the recorded checksum.
    pub fn verify(&self, manifest_dir: &Path) -> Result<Vec<u32>> {
        let mut bad = Vec::new();
        for entry in &self.tiles {
            let path = self.tile_path(manifest_dir, entry);
            let bytes = fs::read(&path).map_err(Error::io(&path))?;
            if checksum(&bytes) != entry.checksum {
                bad.push(entry.tile_id);
            }
        }
        Ok(bad)
    }
}

fn to_gray(v: f32) -> u8 {
    (255.0 * v).round().clamp(0.0, 255.0) as u8
}

fn encode_png(img: &GrayImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf.into_inner()
}

fn manifold_image(m: &CoverageManifold) -> GrayImage {
    let side = m.side() as u32;
    GrayImage::from_fn(side, side, |x, y| {
        // north at the top
        Luma([to_gray(m.get((side - 1 - y) as usize, x as usize))])
    })
}

/// 8-bit grayscale PNG, pixel = round(255 * value), north row at top.
pub fn render_png(m: &CoverageManifold) -> Vec<u8> {
    encode_png(&manifold_image(m))
}

/// Truth, prediction and absolute difference side by side, separated by
/// one white column each.
pub fn render_triptych(truth: &CoverageManifold, pred: &CoverageManifold) -> Result<Vec<u8>> {
    if truth.side() != pred.side() {
        return Err(Error::domain("truth and prediction sizes differ"));
    }
    let diff_values = truth
        .values()
        .iter()
        .zip(pred.values())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let diff = CoverageManifold::new(truth.tile_id(), truth.gamma_db(), truth.side(), diff_values)?;
    let side = truth.side() as u32;
    let mut img = GrayImage::from_pixel(3 * side + 2, side, Luma([255]));
    for (k, m) in [truth, pred, &diff].into_iter().enumerate() {
        let panel = manifold_image(m);
        image::imageops::replace(&mut img, &panel, (k as u32 * (side + 1)) as i64, 0);
    }
    Ok(encode_png(&img))
}
