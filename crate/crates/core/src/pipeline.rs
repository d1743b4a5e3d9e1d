//! End-to-end commands: CSV ingestion, tiling, simulation, baselines,
//! evaluation and rendering.
//!
//! A data set is a directory holding `manifest.json` and one tile file
//! per kept RoI under `tiles/`. Prediction directories hold tile files
//! with the same names whose manifold slots carry predicted values.
//!
//! Randomness derives from the single root seed in [`PipelineConfig`]:
//! the split uses `stage_seed(seed, "split")` and synthetic tile `i` uses
//! `stream_seed(seed, "synth", i)`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bfsg_manifold, ppp_manifold};
use crate::coverage::{manifolds, ChannelModel, ChannelParams, CoverageManifold};
use crate::geo::{assign, partition, BoundingBox, GeoPoint};
use crate::metrics::{dataset_error, EvalReport};
use crate::seeds::{stage_seed, stream_seed};
use crate::store::{
    checksum, decode_tile, read_tile, render_png, render_triptych, tile_file_name, write_atomic,
    write_tile, ChannelSpec, CreationParams, DatasetManifest, TileEntry, MANIFEST_FILE,
    MANIFEST_VERSION,
};
use crate::tiles::{filter_tiles, rasterize, split, synth_ppp, GridSpec, RoiTile, Split};
use crate::{Error, Result};

/// Pipeline parameters. Defaults are the 5 km / 256-cell setting with
/// alpha = 4, thresholds {0, 5, 10, 15, 20} dB, no noise, BS bounds
/// [20, 400] and a 70/30 split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub roi_side_m: f64,
    pub n_cells: usize,
    pub alpha: f64,
    pub gamma_db: Vec<f64>,
    pub noise_over_power: f64,
    pub b_min: usize,
    pub b_max: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            roi_side_m: 5000.0,
            n_cells: 256,
            alpha: 4.0,
            gamma_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            noise_over_power: 0.0,
            b_min: 20,
            b_max: 400,
            train_fraction: 0.7,
            seed: 0,
            jobs: None,
        }
    }
}

impl PipelineConfig {
    /// Parses a flat TOML key-value file; missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::domain(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(Error::io(path))?)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if !grid.n_cells().is_multiple_of(4) {
            return Err(Error::domain(format!(
                "n_cells = {} must be divisible by 4",
                grid.n_cells()
            )));
        }
        self.channel_params()?;
        if self.gamma_db.is_empty() {
            return Err(Error::domain("gamma_db must list at least one threshold"));
        }
        let distinct: HashSet<u32> = self
            .gamma_db
            .iter()
            .map(|&g| (g as f32).to_bits())
            .collect();
        if distinct.len() != self.gamma_db.len() {
            return Err(Error::domain("gamma_db contains duplicate thresholds"));
        }
        if self.b_min == 0 || self.b_min > self.b_max {
            return Err(Error::domain(format!(
                "BS bounds [{}, {}] must satisfy 1 <= b_min <= b_max",
                self.b_min, self.b_max
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::domain("train_fraction must lie in (0, 1)"));
        }
        if self.jobs == Some(0) {
            return Err(Error::domain("jobs must be at least 1"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.roi_side_m, self.n_cells)
    }

    pub fn channel_params(&self) -> Result<Vec<ChannelParams>> {
        self.gamma_db
            .iter()
            .map(|&g| ChannelParams::new(self.alpha, self.noise_over_power, g))
            .collect()
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub rows: usize,
    /// (line number, reason) of skipped malformed rows.
    pub bad_rows: Vec<(u64, String)>,
    pub radio_filtered: usize,
    pub duplicates: usize,
    pub points: usize,
}

fn find_column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

/// Reads BS coordinates from a headered CSV with `lat` and `lon` columns
/// (decimal degrees), drops duplicate coordinates and writes a point file.
pub fn ingest(csv_path: &Path, radio: Option<&str>, out: &Path) -> Result<IngestReport> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", csv_path.display())))?
        .clone();
    let lat_col = find_column(&headers, &["lat", "latitude"]);
    let lon_col = find_column(&headers, &["lon", "lng", "longitude"]);
    let (Some(lat_col), Some(lon_col)) = (lat_col, lon_col) else {
        return Err(Error::Data(format!(
            "{}: header must contain lat and lon columns, found {:?}",
            csv_path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    };
    let radio_col = match radio {
        Some(_) => Some(find_column(&headers, &["radio"]).ok_or_else(|| {
            Error::Data(format!(
                "{}: --radio needs a radio column",
                csv_path.display()
            ))
        })?),
        None => None,
    };

    let mut report = IngestReport {
        rows: 0,
        bad_rows: Vec::new(),
        radio_filtered: 0,
        duplicates: 0,
        points: 0,
    };
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    for record in reader.records() {
        report.rows += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                warn!("line {line}: unreadable row: {e}");
                report.bad_rows.push((line, e.to_string()));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        if let (Some(col), Some(want)) = (radio_col, radio) {
            if !record
                .get(col)
                .is_some_and(|v| v.eq_ignore_ascii_case(want))
            {
                report.radio_filtered += 1;
                continue;
            }
        }
        let parsed = (|| {
            let field = |col: usize, name: &str| -> Result<f64> {
                let raw = record
                    .get(col)
                    .ok_or_else(|| Error::domain(format!("missing {name} field")))?;
                raw.parse::<f64>()
                    .map_err(|_| Error::domain(format!("{name} {raw:?} is not a number")))
            };
            GeoPoint::new(field(lat_col, "lat")?, field(lon_col, "lon")?)
        })();
        match parsed {
            Ok(p) => {
                // +0.0 folds -0.0 into 0.0
                let key = ((p.lat_deg() + 0.0).to_bits(), (p.lon_deg() + 0.0).to_bits());
                if seen.insert(key) {
                    points.push(p);
                } else {
                    report.duplicates += 1;
                }
            }
            Err(e) => {
                warn!("line {line}: skipped: {e}");
                report.bad_rows.push((line, e.to_string()));
            }
        }
    }
    let candidates = report.rows - report.radio_filtered;
    if 2 * report.bad_rows.len() > candidates {
        return Err(Error::Data(format!(
            "{}: {} of {candidates} rows are malformed",
            csv_path.display(),
            report.bad_rows.len()
        )));
    }
    write_points(out, &points)?;
    report.points = points.len();
    info!(
        "ingested {} points from {} rows ({} malformed, {} filtered by radio, {} duplicates)",
        report.points,
        report.rows,
        report.bad_rows.len(),
        report.radio_filtered,
        report.duplicates
    );
    Ok(report)
}

/// Point file: CSV with a `lat_deg,lon_deg` header.
pub fn write_points(path: &Path, points: &[GeoPoint]) -> Result<()> {
    let mut text = String::from("lat_deg,lon_deg\n");
    for p in points {
        text.push_str(&format!("{},{}\n", p.lat_deg(), p.lon_deg()));
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_points(path: &Path) -> Result<Vec<GeoPoint>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "lat_deg,lon_deg")) => {}
        _ => {
            return Err(Error::Data(format!(
                "{}: not a point file (missing lat_deg,lon_deg header)",
                path.display()
            )))
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = || {
                Error::Data(format!(
                    "{}:{}: malformed point {l:?}",
                    path.display(),
                    i + 1
                ))
            };
            let (lat, lon) = l.split_once(',').ok_or_else(bad)?;
            let lat = lat.parse().map_err(|_| bad())?;
            let lon = lon.parse().map_err(|_| bad())?;
            GeoPoint::new(lat, lon)
                .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetReport {
    pub manifest_path: PathBuf,
    pub considered: usize,
    pub kept: usize,
    pub discarded: usize,
    pub train: usize,
    pub test: usize,
}

fn config_channel_spec(config: &PipelineConfig) -> ChannelSpec {
    ChannelSpec {
        alpha: config.alpha,
        noise_over_power: config.noise_over_power,
        model: ChannelModel::RayleighMean1,
        gamma_db: config.gamma_db.iter().map(|&g| g as f32).collect(),
    }
}

fn finish_dataset(
    tiles: Vec<RoiTile>,
    config: &PipelineConfig,
    source: String,
    out_dir: &Path,
) -> Result<DatasetReport> {
    let considered = tiles.len();
    let kept = filter_tiles(tiles, config.b_min, config.b_max);
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "none of the {considered} tiles holds between {} and {} base stations; \
             adjust b_min/b_max or the RoI side",
            config.b_min, config.b_max
        )));
    }
    let ids: Vec<u32> = kept.iter().map(RoiTile::tile_id).collect();
    let assignment = split(
        &ids,
        config.train_fraction,
        stage_seed(config.seed, "split"),
    )?;

    let entries = kept
        .par_iter()
        .map(|tile| {
            let rel = Path::new("tiles").join(tile_file_name(tile.tile_id()));
            let sum = write_tile(&out_dir.join(&rel), tile, &[])?;
            Ok(TileEntry {
                tile_id: tile.tile_id(),
                path: rel,
                bs_count: tile.bs_count(),
                split: assignment.assignment[&tile.tile_id()],
                checksum: sum,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        grid: config.grid()?,
        channel: config_channel_spec(config),
        creation: CreationParams {
            seed: config.seed,
            b_min: config.b_min,
            b_max: config.b_max,
            train_fraction: config.train_fraction,
            source,
            tiles_considered: considered,
            tiles_discarded: considered - kept.len(),
        },
        tiles: entries,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    let report = DatasetReport {
        manifest_path,
        considered,
        kept: kept.len(),
        discarded: considered - kept.len(),
        train: assignment.count(Split::Train),
        test: assignment.count(Split::Test),
    };
    info!(
        "kept {} of {} tiles ({} discarded by BS bounds [{}, {}]); {} train / {} test",
        report.kept,
        considered,
        report.discarded,
        config.b_min,
        config.b_max,
        report.train,
        report.test
    );
    Ok(report)
}

/// Partitions the point set into RoIs, rasterizes, filters and splits.
pub fn tile(points_path: &Path, config: &PipelineConfig, out_dir: &Path) -> Result<DatasetReport> {
    config.validate()?;
    let points = read_points(points_path)?;
    let bbox = BoundingBox::enclosing(&points)
        .ok_or_else(|| Error::Data(format!("{}: no points", points_path.display())))?;
    let part = partition(&bbox, config.roi_side_m)?;
    let assignment = assign(&points, &part);
    if assignment.out_of_region > 0 {
        info!(
            "{} points fall outside complete RoIs (partial frames at the north/east edges)",
            assignment.out_of_region
        );
    }
    let grid = config.grid()?;
    with_jobs(config.jobs, || {
        let tiles = part
            .frames()
            .par_iter()
            .map(|f| {
                let pts = assignment
                    .by_frame
                    .get(&f.frame_id)
                    .map_or(&[][..], Vec::as_slice);
                rasterize(f.frame_id, pts, grid)
            })
            .collect::<Result<Vec<_>>>()?;
        let name = points_path.file_name().map_or_else(
            || points_path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        let source = format!(
            "{name} ({} points, {} RoIs of {} m)",
            points.len(),
            part.frames().len(),
            config.roi_side_m
        );
        finish_dataset(tiles, config, source, out_dir)
    })
}

/// Generates `count` synthetic PPP tiles and writes them as a data set.
pub fn synth(
    count: usize,
    density: f64,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<DatasetReport> {
    config.validate()?;
    let grid = config.grid()?;
    with_jobs(config.jobs, || {
        let tiles = (0..count)
            .into_par_iter()
            .map(|i| {
                synth_ppp(
                    i as u32,
                    density,
                    grid,
                    stream_seed(config.seed, "synth", i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = tiles.iter().map(|t| t.bs_count() as f64).sum::<f64>() / count.max(1) as f64;
        info!("synthesized {count} PPP tiles, mean occupied cells {mean:.1}");
        finish_dataset(
            tiles,
            config,
            format!("synthetic PPP, density {density:e} per m^2"),
            out_dir,
        )
    })
}

fn manifest_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn load_checked(
    manifest: &DatasetManifest,
    dir: &Path,
    entry: &TileEntry,
) -> Result<(RoiTile, Vec<CoverageManifold>)> {
    let path = manifest.tile_path(dir, entry);
    let bytes = fs::read(&path).map_err(Error::io(&path))?;
    if checksum(&bytes) != entry.checksum {
        return Err(Error::Data(format!(
            "{}: checksum does not match the manifest",
            path.display()
        )));
    }
    let (tile, ms) = decode_tile(&bytes, manifest.grid.side_m())?;
    if tile.tile_id() != entry.tile_id {
        return Err(Error::Data(format!(
            "{}: holds tile {} but the manifest lists {}",
            path.display(),
            tile.tile_id(),
            entry.tile_id
        )));
    }
    Ok((tile, ms))
}

fn manifest_params(manifest: &DatasetManifest) -> Result<Vec<ChannelParams>> {
    manifest
        .channel
        .gamma_db
        .iter()
        .map(|&g| {
            ChannelParams::new(
                manifest.channel.alpha,
                manifest.channel.noise_over_power,
                g as f64,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateReport {
    pub tiles: usize,
    pub manifolds: usize,
}

/// Computes the ground-truth manifold of every tile at every threshold
/// and rewrites the tile files and manifest.
pub fn simulate(manifest_path: &Path, jobs: Option<usize>) -> Result<SimulateReport> {
    let mut manifest = DatasetManifest::load(manifest_path)?;
    let dir = manifest_dir(manifest_path);
    let params = manifest_params(&manifest)?;
    let sums = with_jobs(jobs, || {
        manifest
            .tiles
            .par_iter()
            .map(|entry| {
                let (tile, _) = load_checked(&manifest, &dir, entry)?;
                let truth = manifolds(&tile, &params)?;
                write_tile(&manifest.tile_path(&dir, entry), &tile, &truth)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (entry, sum) in manifest.tiles.iter_mut().zip(sums) {
        entry.checksum = sum;
    }
    manifest.save(manifest_path)?;
    let report = SimulateReport {
        tiles: manifest.tiles.len(),
        manifolds: manifest.tiles.len() * params.len(),
    };
    info!(
        "simulated {} manifolds over {} tiles",
        report.manifolds, report.tiles
    );
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    Ppp,
    Bfsg,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::Ppp => "ppp",
            Predictor::Bfsg => "bfsg",
        }
    }
}

impl std::str::FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppp" => Ok(Predictor::Ppp),
            "bfsg" => Ok(Predictor::Bfsg),
            other => Err(Error::domain(format!(
                "unknown predictor {other:?} (expected ppp or bfsg)"
            ))),
        }
    }
}

fn find_gamma(ms: &[CoverageManifold], gamma_db: f32) -> Option<&CoverageManifold> {
    ms.iter().find(|m| m.gamma_db() == gamma_db)
}

/// Default prediction directory of a baseline: `<dataset>/predictions/<name>`.
pub fn default_prediction_dir(manifest_path: &Path, predictor: Predictor) -> PathBuf {
    manifest_dir(manifest_path)
        .join("predictions")
        .join(predictor.name())
}

/// Writes baseline predictions for every tile and threshold; returns the
/// number of tile files written.
pub fn baseline(
    manifest_path: &Path,
    predictor: Predictor,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<usize> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let dir = manifest_dir(manifest_path);
    let params = manifest_params(&manifest)?;
    with_jobs(jobs, || {
        manifest
            .tiles
            .par_iter()
            .map(|entry| {
                let (tile, truth) = load_checked(&manifest, &dir, entry)?;
                let preds = params
                    .iter()
                    .map(|p| match predictor {
                        Predictor::Ppp => ppp_manifold(&tile, p),
                        Predictor::Bfsg => find_gamma(&truth, p.gamma_db() as f32)
                            .map(bfsg_manifold)
                            .ok_or_else(|| {
                                Error::Data(format!(
                                    "tile {} has no truth manifold at {} dB; bfsg needs simulate first",
                                    entry.tile_id,
                                    p.gamma_db()
                                ))
                            }),
                    })
                    .collect::<Result<Vec<_>>>()?;
                write_tile(&out_dir.join(tile_file_name(entry.tile_id)), &tile, &preds)
            })
            .collect::<Result<Vec<_>>>()
    })
    .map(|written| {
        info!("wrote {} {} prediction files to {}", written.len(), predictor.name(), out_dir.display());
        written.len()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitFilter {
    Train,
    Test,
    All,
}

impl SplitFilter {
    fn admits(self, split: Split) -> bool {
        match self {
            SplitFilter::All => true,
            SplitFilter::Train => split == Split::Train,
            SplitFilter::Test => split == Split::Test,
        }
    }
}

impl std::str::FromStr for SplitFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitFilter::Train),
            "test" => Ok(SplitFilter::Test),
            "all" => Ok(SplitFilter::All),
            other => Err(Error::domain(format!(
                "unknown split {other:?} (expected train, test or all)"
            ))),
        }
    }
}

fn predictor_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Pairs predictions with truth on the chosen split and returns one
/// report per (prediction directory, threshold).
pub fn evaluate(
    manifest_path: &Path,
    prediction_dirs: &[PathBuf],
    split: SplitFilter,
) -> Result<Vec<EvalReport>> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let dir = manifest_dir(manifest_path);
    let entries: Vec<&TileEntry> = manifest
        .tiles
        .iter()
        .filter(|e| split.admits(e.split))
        .collect();
    if entries.is_empty() {
        return Err(Error::Data(format!("split {split:?} holds no tiles")));
    }
    let gammas = &manifest.channel.gamma_db;

    let mut truth: Vec<BTreeMap<u32, CoverageManifold>> = vec![BTreeMap::new(); gammas.len()];
    for entry in &entries {
        let (_, ms) = load_checked(&manifest, &dir, entry)?;
        for (k, &g) in gammas.iter().enumerate() {
            let m = find_gamma(&ms, g).ok_or_else(|| {
                Error::Data(format!(
                    "tile {} has no truth manifold at {g} dB; run simulate",
                    entry.tile_id
                ))
            })?;
            truth[k].insert(entry.tile_id, m.clone());
        }
    }

    let mut reports = Vec::new();
    for pred_dir in prediction_dirs {
        let name = predictor_name(pred_dir);
        let mut missing = Vec::new();
        let mut preds: Vec<BTreeMap<u32, CoverageManifold>> = vec![BTreeMap::new(); gammas.len()];
        for entry in &entries {
            let path = pred_dir.join(tile_file_name(entry.tile_id));
            if !path.exists() {
                missing.push(entry.tile_id);
                continue;
            }
            let (_, ms) = read_tile(&path, manifest.grid.side_m())?;
            for (k, &g) in gammas.iter().enumerate() {
                match find_gamma(&ms, g) {
                    Some(m) => {
                        preds[k].insert(entry.tile_id, m.clone());
                    }
                    None => {
                        return Err(Error::Data(format!(
                            "{}: no prediction at {g} dB",
                            path.display()
                        )))
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "{}: missing predictions for tiles {missing:?}",
                pred_dir.display()
            )));
        }
        for k in 0..gammas.len() {
            reports.push(dataset_error(&name, &preds[k], &truth[k])?);
        }
    }
    Ok(reports)
}

/// Which manifold of a tile file to render.
#[derive(Debug, Clone, PartialEq)]
pub enum RenderSource {
    Truth,
    Prediction(PathBuf),
    /// Truth, prediction and absolute difference side by side.
    Triptych(PathBuf),
}

fn manifold_at(path: &Path, gamma_db: f32) -> Result<CoverageManifold> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    // side length only matters for geometry, which rendering does not use
    let (_, ms) = decode_tile(&bytes, 1.0)?;
    find_gamma(&ms, gamma_db).cloned().ok_or_else(|| {
        let available: Vec<f32> = ms.iter().map(CoverageManifold::gamma_db).collect();
        Error::Data(format!(
            "{}: no manifold at {gamma_db} dB; available: {available:?}",
            path.display()
        ))
    })
}

pub fn render(tile_path: &Path, gamma_db: f32, source: &RenderSource, out: &Path) -> Result<()> {
    let png = match source {
        RenderSource::Truth => render_png(&manifold_at(tile_path, gamma_db)?),
        RenderSource::Prediction(p) => render_png(&manifold_at(p, gamma_db)?),
        RenderSource::Triptych(p) => render_triptych(
            &manifold_at(tile_path, gamma_db)?,
            &manifold_at(p, gamma_db)?,
        )?,
    };
    write_atomic(out, &png)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let d = PipelineConfig::default();
        assert_eq!((d.roi_side_m, d.n_cells, d.alpha), (5000.0, 256, 4.0));
        assert_eq!(d.gamma_db, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(
            (d.b_min, d.b_max, d.train_fraction, d.noise_over_power),
            (20, 400, 0.7, 0.0)
        );
        d.validate().unwrap();

        let c = PipelineConfig::from_toml("roi_side_m = 10000\nn_cells = 64\ngamma_db = [0, 10]\n")
            .unwrap();
        assert_eq!(
            (c.roi_side_m, c.n_cells, c.gamma_db.len(), c.b_min),
            (10000.0, 64, 2, 20)
        );

        assert!(PipelineConfig::from_toml("n_cells = 30").is_err());
        assert!(PipelineConfig::from_toml("alpha = 2").is_err());
        assert!(PipelineConfig::from_toml("b_min = 500").is_err());
        assert!(PipelineConfig::from_toml("gamma_db = [0, 0]").is_err());
        assert!(PipelineConfig::from_toml("unknown_key = 1").is_err());
        assert!(PipelineConfig::from_toml("jobs = 0").is_err());
    }

    #[test]
    fn names_parse() {
        assert_eq!("ppp".parse::<Predictor>().unwrap(), Predictor::Ppp);
        assert_eq!("BFSG".parse::<Predictor>().unwrap(), Predictor::Bfsg);
        assert!("cnn".parse::<Predictor>().is_err());
        assert_eq!("test".parse::<SplitFilter>().unwrap(), SplitFilter::Test);
        assert!("dev".parse::<SplitFilter>().is_err());
    }

    #[test]
    fn point_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let pts = vec![
            GeoPoint::new(12.345678901234, 77.1).unwrap(),
            GeoPoint::new(-3.0, 179.5).unwrap(),
        ];
        write_points(&path, &pts).unwrap();
        assert_eq!(read_points(&path).unwrap(), pts);
        fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(read_points(&path).is_err());
    }
}
