//! Downlink coverage probability under nearest-BS association.
//!
//! A user at `r` is served by its nearest BS `j`; with unit-mean
//! exponential (Rayleigh power) gains the SINR is
//!
//! ```text
//! SINR(r) = g_j d_j^-a / (sum_{l != j} g_l d_l^-a + noise/power)
//! ```
//!
//! and the coverage probability `Pr(SINR > gamma)` has the closed form
//! `exp(-gamma d_j^a noise/power) * prod_{l != j} 1 / (1 + gamma (d_j/d_l)^a)`.
//! [`coverage_at`] evaluates it exactly; [`mc_coverage_at`] estimates the
//! same probability by sampling gains and serves as an independent check.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geo::PlanarPoint;
use crate::seeds;
use crate::tiles::{GridSpec, RoiTile};
use crate::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    /// Unit-mean exponential power gains.
    #[default]
    RayleighMean1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    alpha: f64,
    noise_over_power: f64,
    gamma_db: f64,
    channel: ChannelModel,
}

impl ChannelParams {
    /// `noise_over_power` multiplies distances in meters raised to `alpha`.
    pub fn new(alpha: f64, noise_over_power: f64, gamma_db: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 2.0) {
            return Err(Error::domain(format!(
                "pathloss exponent {alpha} must exceed 2"
            )));
        }
        if !(noise_over_power.is_finite() && noise_over_power >= 0.0) {
            return Err(Error::domain(format!(
                "noise-to-power ratio {noise_over_power} must be non-negative"
            )));
        }
        if !gamma_db.is_finite() {
            return Err(Error::domain("SINR threshold must be finite"));
        }
        Ok(Self {
            alpha,
            noise_over_power,
            gamma_db,
            channel: ChannelModel::RayleighMean1,
        })
    }

    pub fn with_gamma_db(self, gamma_db: f64) -> Result<Self> {
        Self::new(self.alpha, self.noise_over_power, gamma_db)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn noise_over_power(&self) -> f64 {
        self.noise_over_power
    }

    pub fn gamma_db(&self) -> f64 {
        self.gamma_db
    }

    pub fn gamma(&self) -> f64 {
        db_to_linear(self.gamma_db)
    }

    pub fn channel(&self) -> ChannelModel {
        self.channel
    }
}

/// Coverage probabilities over one RoE at one threshold; row 0 is south.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageManifold {
    tile_id: u32,
    gamma_db: f32,
    side: usize,
    values: Vec<f32>,
}

impl CoverageManifold {
    pub fn new(tile_id: u32, gamma_db: f32, side: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != side * side {
            return Err(Error::domain(format!(
                "manifold has {} values, expected {side}x{side}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain(format!(
                "manifold value {} at index {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            tile_id,
            gamma_db,
            side,
            values,
        })
    }

    pub fn constant(tile_id: u32, gamma_db: f32, side: usize, value: f32) -> Result<Self> {
        Self::new(tile_id, gamma_db, side, vec![value; side * side])
    }

    pub fn tile_id(&self) -> u32 {
        self.tile_id
    }

    pub fn gamma_db(&self) -> f32 {
        self.gamma_db
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.side + col]
    }

    pub fn with_tile_id(mut self, tile_id: u32) -> Self {
        self.tile_id = tile_id;
        self
    }
}

fn roe_offset(grid: &GridSpec) -> Result<usize> {
    let n = grid.n_cells();
    if !n.is_multiple_of(4) {
        return Err(Error::domain(format!(
            "cell count {n} is not divisible by 4; the RoE would not align with RoI cells"
        )));
    }
    Ok(n / 4)
}

/// Centers of the RoE cells (the concentric half-size square), row-major.
pub fn roe_grid(grid: &GridSpec) -> Result<Vec<PlanarPoint>> {
    let lo = roe_offset(grid)?;
    let hi = lo + grid.roe_cells();
    let res = grid.resolution_m();
    Ok((lo..hi)
        .flat_map(|r| {
            (lo..hi).map(move |c| PlanarPoint::new((c as f64 + 0.5) * res, (r as f64 + 0.5) * res))
        })
        .collect())
}

/// Nearest BS (lowest index on ties) and its squared distance.
fn serving(user: &PlanarPoint, bs: &[PlanarPoint]) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in bs.iter().enumerate() {
        let d2 = user.dist_sq(b);
        if best.is_none_or(|(_, bd)| d2 < bd) {
            best = Some((i, d2));
        }
    }
    best.ok_or_else(|| Error::domain("coverage needs at least one base station"))
}

/// Closed form for the Rayleigh channel. `interferers_d2` must be sorted
/// ascending so that the product does not depend on BS enumeration order.
fn rayleigh_closed_form(serving_d2: f64, interferers_d2: &[f64], params: &ChannelParams) -> f64 {
    if serving_d2 == 0.0 {
        return 1.0;
    }
    let gamma = params.gamma();
    let half_alpha = 0.5 * params.alpha;
    let mut p = if params.noise_over_power > 0.0 {
        (-gamma * serving_d2.powf(half_alpha) * params.noise_over_power).exp()
    } else {
        1.0
    };
    for &d2 in interferers_d2 {
        p /= 1.0 + gamma * (serving_d2 / d2).powf(half_alpha);
    }
    p
}

/// Exact coverage probability at `user` given BS positions.
pub fn coverage_at(user: PlanarPoint, bs: &[PlanarPoint], params: &ChannelParams) -> Result<f64> {
    let (j, dj2) = serving(&user, bs)?;
    let mut rest: Vec<f64> = bs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, b)| user.dist_sq(b))
        .collect();
    rest.sort_unstable_by(f64::total_cmp);
    Ok(rayleigh_closed_form(dj2, &rest, params))
}

/// Monte Carlo estimate of `Pr(SINR > gamma)` from `trials` independent
/// gain draws; deterministic in `seed`.
pub fn mc_coverage_at(
    user: PlanarPoint,
    bs: &[PlanarPoint],
    params: &ChannelParams,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::domain("Monte Carlo needs at least one trial"));
    }
    let (j, dj2) = serving(&user, bs)?;
    if dj2 == 0.0 {
        return Ok(1.0);
    }
    let half_alpha = 0.5 * params.alpha;
    // SINR > gamma  <=>  sum_l g_l (d_j/d_l)^a + noise d_j^a < g_j / gamma
    let mut weights: Vec<f64> = bs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, b)| (dj2 / user.dist_sq(b)).powf(half_alpha))
        .collect();
    // strongest first so failing trials stop early
    weights.sort_unstable_by(|a, b| b.total_cmp(a));
    let noise = params.noise_over_power * dj2.powf(half_alpha);
    let gamma = params.gamma();

    let mut rng = seeds::rng(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let g_serving: f64 = Exp1.sample(&mut rng);
        let budget = g_serving / gamma - noise;
        if budget <= 0.0 {
            continue;
        }
        let mut interference = 0.0;
        let mut covered = true;
        for &w in &weights {
            let g: f64 = Exp1.sample(&mut rng);
            interference += g * w;
            if interference >= budget {
                covered = false;
                break;
            }
        }
        if covered {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Ground-truth manifold of a tile at one threshold.
pub fn manifold(tile: &RoiTile, params: &ChannelParams) -> Result<CoverageManifold> {
    Ok(manifolds(tile, std::slice::from_ref(params))?.remove(0))
}

/// Ground-truth manifolds at several thresholds sharing one geometry pass.
///
/// BS positions are the occupied-cell centers. Distances are computed in
/// integer cell units, so the result is exactly equivariant under the
/// symmetries of the square.
pub fn manifolds(tile: &RoiTile, params: &[ChannelParams]) -> Result<Vec<CoverageManifold>> {
    let grid = tile.grid();
    let offset = roe_offset(grid)?;
    if tile.bs_count() == 0 {
        return Err(Error::domain(format!(
            "tile {} has no base stations",
            tile.tile_id()
        )));
    }
    let side = grid.roe_cells();
    let res2 = grid.resolution_m() * grid.resolution_m();
    let bs: Vec<(i64, i64)> = tile
        .occupied_cells()
        .map(|(r, c)| (r as i64, c as i64))
        .collect();

    let pixels: Vec<Vec<f64>> = (0..side * side)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(bs.len()),
            |d2: &mut Vec<u64>, idx| {
                let ur = (idx / side + offset) as i64;
                let uc = (idx % side + offset) as i64;
                d2.clear();
                d2.extend(
                    bs.iter()
                        .map(|&(r, c)| ((r - ur).pow(2) + (c - uc).pow(2)) as u64),
                );
                d2.sort_unstable();
                let serving_d2 = d2[0] as f64 * res2;
                let rest: Vec<f64> = d2[1..].iter().map(|&v| v as f64 * res2).collect();
                params
                    .iter()
                    .map(|p| rayleigh_closed_form(serving_d2, &rest, p))
                    .collect()
            },
        )
        .collect();

    params
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let values = pixels.iter().map(|px| px[k] as f32).collect();
            CoverageManifold::new(tile.tile_id(), p.gamma_db() as f32, side, values)
        })
        .collect()
}

/// Pixel-wise Monte Carlo manifold; pixel `i` uses the stream
/// `stream_seed(seed, "mc_manifold", i)`.
pub fn mc_manifold(
    tile: &RoiTile,
    params: &ChannelParams,
    trials: u64,
    seed: u64,
) -> Result<CoverageManifold> {
    let users = roe_grid(tile.grid())?;
    let bs = tile.bs_positions();
    if bs.is_empty() {
        return Err(Error::domain(format!(
            "tile {} has no base stations",
            tile.tile_id()
        )));
    }
    let values = users
        .par_iter()
        .enumerate()
        .map(|(i, &u)| {
            let s = seeds::stream_seed(seed, "mc_manifold", i as u64);
            mc_coverage_at(u, &bs, params, trials, s).map(|p| p as f32)
        })
        .collect::<Result<Vec<f32>>>()?;
    CoverageManifold::new(
        tile.tile_id(),
        params.gamma_db() as f32,
        tile.grid().roe_cells(),
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiles::{synth_ppp, Dihedral};
    use proptest::prelude::*;

    fn params(gamma_db: f64) -> ChannelParams {
        ChannelParams::new(4.0, 0.0, gamma_db).unwrap()
    }

    fn pt(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    fn binomial_3sigma(p: f64, m: u64) -> f64 {
        3.0 * (p * (1.0 - p) / m as f64).sqrt()
    }

    #[test]
    fn params_validation() {
        assert!(ChannelParams::new(2.0, 0.0, 0.0).is_err());
        assert!(ChannelParams::new(4.0, -1.0, 0.0).is_err());
        assert!(ChannelParams::new(4.0, 0.0, f64::NAN).is_err());
        assert_eq!(params(0.0).gamma(), 1.0);
        assert!((params(10.0).gamma() - 10.0).abs() < 1e-12);
        assert!((linear_to_db(db_to_linear(7.5)) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn roe_grid_examples() {
        let g = GridSpec::new(8.0, 8).unwrap();
        let pts = roe_grid(&g).unwrap();
        assert_eq!(pts.len(), 16);
        assert_eq!(pts[0], pt(2.5, 2.5));
        assert_eq!(pts[15], pt(5.5, 5.5));
        for p in &pts {
            for v in [p.x_m, p.y_m, 8.0 - p.x_m, 8.0 - p.y_m] {
                assert!(v >= 2.0);
            }
        }
        let big = GridSpec::new(5000.0, 256).unwrap();
        assert_eq!(roe_grid(&big).unwrap().len(), 128 * 128);
        assert!(roe_grid(&GridSpec::new(6.0, 6).unwrap()).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let user = pt(0.0, 0.0);
        for (a, g) in [(3.0, -5.0), (4.0, 10.0), (5.5, 20.0)] {
            let p = ChannelParams::new(a, 0.0, g).unwrap();
            assert_eq!(coverage_at(user, &[pt(30.0, 40.0)], &p).unwrap(), 1.0);
        }
        let two = [pt(10.0, 0.0), pt(-10.0, 0.0)];
        assert!((coverage_at(user, &two, &params(0.0)).unwrap() - 0.5).abs() < 1e-15);
        let near_far = [pt(10.0, 0.0), pt(0.0, 20.0)];
        let p = coverage_at(user, &near_far, &params(0.0)).unwrap();
        assert!((p - 16.0 / 17.0).abs() < 1e-15);
        assert_eq!(
            coverage_at(pt(1.0, 1.0), &[pt(1.0, 1.0), pt(5.0, 5.0)], &params(0.0)).unwrap(),
            1.0
        );
        assert!(coverage_at(user, &[], &params(0.0)).is_err());
    }

    #[test]
    fn noise_term_decreases_coverage() {
        let user = pt(0.0, 0.0);
        let bs = [pt(100.0, 0.0)];
        let noisy = ChannelParams::new(4.0, 1e-9, 0.0).unwrap();
        let p = coverage_at(user, &bs, &noisy).unwrap();
        assert!((p - (-1e-9f64 * 1e8).exp()).abs() < 1e-15);
    }

    #[test]
    fn mc_examples() {
        let user = pt(0.0, 0.0);
        for seed in [0, 1, 99] {
            assert_eq!(
                mc_coverage_at(user, &[pt(3.0, 4.0)], &params(0.0), 1000, seed).unwrap(),
                1.0
            );
        }
        let m = 200_000;
        let two = [pt(10.0, 0.0), pt(-10.0, 0.0)];
        let est = mc_coverage_at(user, &two, &params(0.0), m, 5).unwrap();
        assert!((est - 0.5).abs() <= binomial_3sigma(0.5, m), "{est}");

        let m = 1_000_000;
        let target = 16.0 / 17.0;
        let near_far = [pt(10.0, 0.0), pt(0.0, 20.0)];
        let est = mc_coverage_at(user, &near_far, &params(0.0), m, 6).unwrap();
        assert!((est - target).abs() <= binomial_3sigma(target, m), "{est}");

        assert_eq!(
            mc_coverage_at(user, &near_far, &params(0.0), 1000, 3).unwrap(),
            mc_coverage_at(user, &near_far, &params(0.0), 1000, 3).unwrap()
        );
        assert!(mc_coverage_at(user, &near_far, &params(0.0), 0, 3).is_err());
        assert!(mc_coverage_at(user, &[], &params(0.0), 10, 3).is_err());
    }

    #[test]
    fn mc_with_noise_matches_closed_form() {
        let user = pt(0.0, 0.0);
        let bs = [pt(100.0, 0.0), pt(0.0, 150.0), pt(-220.0, 40.0)];
        let p = ChannelParams::new(3.5, 2e-8, 3.0).unwrap();
        let exact = coverage_at(user, &bs, &p).unwrap();
        let m = 400_000;
        let est = mc_coverage_at(user, &bs, &p, m, 17).unwrap();
        assert!(
            (est - exact).abs() <= binomial_3sigma(exact, m),
            "{est} vs {exact}"
        );
    }

    #[test]
    fn single_bs_at_center_gives_ones() {
        let g = GridSpec::new(800.0, 16).unwrap();
        let mut occ = vec![0u8; 256];
        occ[8 * 16 + 8] = 1;
        let tile = RoiTile::from_occupancy(4, g, occ).unwrap();
        let m = manifold(&tile, &params(0.0)).unwrap();
        assert_eq!(m.side(), 8);
        assert!(m.values().iter().all(|&v| v == 1.0));
        assert_eq!(m.tile_id(), 4);
        assert_eq!(m.gamma_db(), 0.0);
    }

    #[test]
    fn empty_tile_is_rejected() {
        let g = GridSpec::new(800.0, 16).unwrap();
        let tile = RoiTile::from_occupancy(4, g, vec![0u8; 256]).unwrap();
        assert!(manifold(&tile, &params(0.0)).is_err());
        assert!(mc_manifold(&tile, &params(0.0), 10, 1).is_err());
    }

    #[test]
    fn manifold_pixels_match_pointwise_closed_form() {
        let g = GridSpec::new(2000.0, 32).unwrap();
        let tile = synth_ppp(0, 40.0 / 4e6, g, 3).unwrap();
        let bs = tile.bs_positions();
        let users = roe_grid(&g).unwrap();
        let m = manifold(&tile, &params(5.0)).unwrap();
        for (i, u) in users.iter().enumerate() {
            let direct = coverage_at(*u, &bs, &params(5.0)).unwrap();
            assert!((m.values()[i] as f64 - direct).abs() < 1e-6);
        }
    }

    #[test]
    fn manifold_is_rotation_equivariant() {
        let g = GridSpec::new(1000.0, 32).unwrap();
        let tile = synth_ppp(0, 60.0 / 1e6, g, 21).unwrap();
        let base = manifold(&tile, &params(0.0)).unwrap();
        for sym in Dihedral::ALL {
            let rotated = manifold(&tile.transformed(sym), &params(0.0)).unwrap();
            assert_eq!(
                rotated.values(),
                sym.apply(base.values(), base.side()).as_slice(),
                "{sym:?}"
            );
        }
    }

    #[test]
    fn manifold_matches_mc_manifold() {
        let g = GridSpec::new(3200.0, 32).unwrap();
        let mut tile = synth_ppp(7, 50.0 / (3200.0 * 3200.0), g, 42).unwrap();
        let mut s = 43;
        while tile.bs_count() != 50 {
            tile = synth_ppp(7, 50.0 / (3200.0 * 3200.0), g, s).unwrap();
            s += 1;
        }
        let exact = manifold(&tile, &params(0.0)).unwrap();
        let mc = mc_manifold(&tile, &params(0.0), 100_000, 8).unwrap();
        let max_dev = exact
            .values()
            .iter()
            .zip(mc.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_dev <= 0.015, "max deviation {max_dev}");
    }

    #[test]
    fn mc_manifold_properties() {
        let g = GridSpec::new(1000.0, 16).unwrap();
        let tile = synth_ppp(1, 30.0 / 1e6, g, 2).unwrap();
        let p = params(0.0);
        let one = mc_manifold(&tile, &p, 1, 9).unwrap();
        assert!(one.values().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(
            mc_manifold(&tile, &p, 500, 9).unwrap(),
            mc_manifold(&tile, &p, 500, 9).unwrap()
        );

        let exact = manifold(&tile, &p).unwrap();
        let l1 = |m: &CoverageManifold| {
            m.values()
                .iter()
                .zip(exact.values())
                .map(|(a, b)| (a - b).abs() as f64)
                .sum::<f64>()
                / m.values().len() as f64
        };
        let coarse = l1(&mc_manifold(&tile, &p, 1_000, 10).unwrap());
        let fine = l1(&mc_manifold(&tile, &p, 100_000, 10).unwrap());
        assert!(fine < coarse, "{fine} !< {coarse}");
    }

    fn bs_strategy() -> impl Strategy<Value = Vec<PlanarPoint>> {
        prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 1..25)
            .prop_map(|v| v.into_iter().map(|(x, y)| pt(x, y)).collect())
    }

    proptest! {
        #[test]
        fn coverage_in_unit_interval(bs in bs_strategy(), ux in -500.0f64..500.0, uy in -500.0f64..500.0, g in -10.0f64..30.0) {
            let p = coverage_at(pt(ux, uy), &bs, &params(g)).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn coverage_monotone_in_threshold(bs in bs_strategy(), ux in -500.0f64..500.0, uy in -500.0f64..500.0, g in -10.0f64..25.0, dg in 0.1f64..5.0) {
            let u = pt(ux, uy);
            let lo = coverage_at(u, &bs, &params(g)).unwrap();
            let hi = coverage_at(u, &bs, &params(g + dg)).unwrap();
            prop_assert!(hi <= lo);
            let (_, dj2) = serving(&u, &bs).unwrap();
            if bs.len() >= 2 && dj2 > 0.0 && lo > 1e-300 {
                prop_assert!(hi < lo);
            }
        }

        #[test]
        fn farther_interferer_lowers_coverage(bs in bs_strategy(), ux in -100.0f64..100.0, uy in -100.0f64..100.0, extra in 1.05f64..3.0, angle in 0.0f64..std::f64::consts::TAU) {
            let u = pt(ux, uy);
            let (_, dj2) = serving(&u, &bs).unwrap();
            prop_assume!(dj2 > 1.0);
            let r = dj2.sqrt() * extra;
            let mut more = bs.clone();
            more.push(pt(ux + r * angle.cos(), uy + r * angle.sin()));
            let before = coverage_at(u, &bs, &params(0.0)).unwrap();
            let after = coverage_at(u, &more, &params(0.0)).unwrap();
            prop_assert!(after < before);
        }

        #[test]
        fn scale_invariant_without_noise(bs in bs_strategy(), ux in -500.0f64..500.0, uy in -500.0f64..500.0, c in 0.01f64..100.0) {
            let u = pt(ux, uy);
            let scaled: Vec<_> = bs.iter().map(|b| pt(b.x_m * c, b.y_m * c)).collect();
            let a = coverage_at(u, &bs, &params(3.0)).unwrap();
            let b = coverage_at(pt(ux * c, uy * c), &scaled, &params(3.0)).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
