//! Stochastic-geometry baselines.
//!
//! For BSs forming a homogeneous PPP of density `lambda` with Rayleigh
//! fading and nearest-BS association, the average coverage probability is
//!
//! ```text
//! ACP = pi lambda int_0^inf exp(-pi lambda v (1 + rho) - gamma (noise/power) v^(a/2)) dv
//! rho(gamma, a) = gamma^(2/a) int_{gamma^(-2/a)}^inf du / (1 + u^(a/2))
//! ```
//!
//! which collapses to `1 / (1 + rho)` without noise: the density cancels.
//! The PPP baseline fills the RoE with that constant; the best-fitted SG
//! (BFSG) baseline fills it with the mean of the true manifold.

use crate::coverage::{ChannelParams, CoverageManifold};
use crate::metrics::avg;
use crate::quad::integrate;
use crate::tiles::RoiTile;
use crate::{Error, Result};

fn check_threshold(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "SINR threshold {gamma} must be positive"
        )))
    }
}

/// Interference functional `rho(gamma, alpha)`; absolute error below 1e-9.
///
/// The integral is split at `T = max(gamma^(-2/alpha), 2)`: the finite
/// part uses adaptive quadrature and the tail `int_T^inf du / (1 + u^b)`
/// is summed from its alternating expansion
/// `sum_k (-1)^k T^(1 - b(k+1)) / (b(k+1) - 1)`, which converges
/// geometrically with ratio `T^-b <= 1/2`.
pub fn rho(gamma: f64, alpha: f64) -> Result<f64> {
    check_threshold(gamma)?;
    if !(alpha.is_finite() && alpha > 2.0) {
        return Err(Error::domain(format!(
            "pathloss exponent {alpha} must exceed 2 (the integral diverges otherwise)"
        )));
    }
    let b = 0.5 * alpha;
    let scale = gamma.powf(1.0 / b);
    let lower = 1.0 / scale;
    let split = lower.max(2.0);
    let head = integrate(
        |u| 1.0 / (1.0 + u.powf(b)),
        lower,
        split,
        1e-11 / scale.max(1.0),
        1e-14,
    )?;
    Ok(scale * (head + power_tail(split, b)))
}

fn power_tail(t: f64, b: f64) -> f64 {
    let ratio = t.powf(-b);
    let mut magnitude = t.powf(1.0 - b);
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..10_000 {
        let term = magnitude / (b * k as f64 - 1.0);
        sum += sign * term;
        if term <= 1e-17 * sum.abs() {
            break;
        }
        magnitude *= ratio;
        sign = -sign;
    }
    sum
}

/// `rho(gamma, 4) = sqrt(gamma) (pi/2 - atan(1/sqrt(gamma)))`, written as
/// `sqrt(gamma) atan(sqrt(gamma))`. Requires `gamma > 0`.
pub fn rho_alpha4(gamma: f64) -> f64 {
    let s = gamma.sqrt();
    s * s.atan()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PppParams {
    /// BS per m^2; only used when `noise_over_power > 0`.
    pub density: f64,
    pub alpha: f64,
    /// Linear threshold.
    pub gamma: f64,
    pub noise_over_power: f64,
}

impl PppParams {
    pub fn from_channel(params: &ChannelParams, density: f64) -> Self {
        Self {
            density,
            alpha: params.alpha(),
            gamma: params.gamma(),
            noise_over_power: params.noise_over_power(),
        }
    }
}

/// Average coverage probability of a PPP network.
pub fn ppp_acp(params: &PppParams) -> Result<f64> {
    let r = rho(params.gamma, params.alpha)?;
    if params.noise_over_power == 0.0 {
        return Ok(1.0 / (1.0 + r));
    }
    if !(params.noise_over_power > 0.0 && params.noise_over_power.is_finite()) {
        return Err(Error::domain("noise-to-power ratio must be non-negative"));
    }
    if !(params.density > 0.0 && params.density.is_finite()) {
        return Err(Error::domain(format!(
            "PPP density {} must be positive when noise is present",
            params.density
        )));
    }
    // substitute s = pi lambda (1 + rho) v
    let b = 0.5 * params.alpha;
    let rate = std::f64::consts::PI * params.density * (1.0 + r);
    let c = params.gamma * params.noise_over_power * rate.powf(-b);
    let integral = integrate(|s| (-s - c * s.powf(b)).exp(), 0.0, 60.0, 1e-12, 1e-12)?;
    Ok(integral / (1.0 + r))
}

/// Constant manifold at the PPP ACP for the tile's empirical density.
pub fn ppp_manifold(tile: &RoiTile, params: &ChannelParams) -> Result<CoverageManifold> {
    let grid = tile.grid();
    let density = tile.bs_count() as f64 / (grid.side_m() * grid.side_m());
    let acp = ppp_acp(&PppParams::from_channel(params, density))?;
    CoverageManifold::constant(
        tile.tile_id(),
        params.gamma_db() as f32,
        grid.roe_cells(),
        acp as f32,
    )
}

/// Constant manifold at the arithmetic mean of `truth`.
pub fn bfsg_manifold(truth: &CoverageManifold) -> CoverageManifold {
    CoverageManifold::constant(
        truth.tile_id(),
        truth.gamma_db(),
        truth.side(),
        (avg(truth) as f32).clamp(0.0, 1.0),
    )
    .expect("mean of a valid manifold lies in [0, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::db_to_linear;
    use crate::metrics::l1;
    use crate::tiles::GridSpec;
    use std::f64::consts::PI;

    fn acp(gamma_db: f64, noise: f64, density: f64) -> f64 {
        ppp_acp(&PppParams {
            density,
            alpha: 4.0,
            gamma: db_to_linear(gamma_db),
            noise_over_power: noise,
        })
        .unwrap()
    }

    #[test]
    fn rho_examples() {
        assert!((rho(1.0, 4.0).unwrap() - PI / 4.0).abs() < 1e-12);
        // closed form sqrt(10) (pi/2 - atan(1/sqrt(10)))
        assert!((rho(10.0, 4.0).unwrap() - 3.998_760_050_557_662).abs() < 1e-9);
        assert!(rho(1e-12, 4.0).unwrap() < 1e-11);
        assert!(rho(1e-6, 3.0).unwrap() < rho(1e-4, 3.0).unwrap());
        assert!(rho(1.0, 2.0).is_err());
        assert!(rho(0.0, 4.0).is_err());
    }

    #[test]
    fn rho_general_exponent_matches_reference_values() {
        // reference values from an independent adaptive-quadrature package
        for (g, a, want) in [
            (1.0, 3.0, 1.671_297_696_529_442_8),
            (10.0, 3.0, 10.262_883_117_519_115),
            (2.0, 6.0, 0.621_851_740_995_576_5),
            (0.3, 5.0, 0.180_923_602_395_496_2),
            (3.0, 5.0, 1.130_656_246_985_486_4),
            (0.3, 6.0, 0.134_778_004_709_865_73),
            (3.0, 6.0, 0.814_383_010_034_688_6),
        ] {
            let got = rho(g, a).unwrap();
            assert!(
                (got - want).abs() < 1e-9,
                "rho({g}, {a}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn rho_alpha4_examples() {
        assert_eq!(rho_alpha4(1.0), PI / 4.0);
        assert!((rho_alpha4(100.0) - 14.711_276_743_037_345).abs() < 1e-12);
        let mut g = 0.01f64;
        while g <= 100.0 {
            assert!(
                (rho_alpha4(g) - rho(g, 4.0).unwrap()).abs() <= 1e-8,
                "gamma {g}"
            );
            g *= 1.1;
        }
    }

    #[test]
    fn rho_near_critical_exponent() {
        // slow tail decay as alpha -> 2
        let near = rho(1.0, 2.1).unwrap();
        assert!(near.is_finite() && near > rho(1.0, 3.0).unwrap());
    }

    #[test]
    fn acp_examples() {
        assert!((acp(0.0, 0.0, 1.0) - 1.0 / (1.0 + PI / 4.0)).abs() < 1e-12);
        assert!((acp(0.0, 0.0, 1.0) - 0.56010).abs() < 1e-4);
        assert!((acp(10.0, 0.0, 1.0) - 0.200_049_610_280_541_5).abs() < 1e-10);
        assert_eq!(acp(5.0, 0.0, 1e-6), acp(5.0, 0.0, 1e-5));
    }

    #[test]
    fn acp_with_noise_matches_erfc_form() {
        // alpha = 4: pi l int exp(-a v - b v^2) = pi l / 2 sqrt(pi/b) e^(a^2/4b) erfc(a / 2 sqrt b)
        use statrs::function::erf::erfc;
        let density = 1e-5;
        let noise = 1e-9;
        for gamma_db in [0.0, 5.0, 10.0] {
            let g = db_to_linear(gamma_db);
            let a = PI * density * (1.0 + rho_alpha4(g));
            let b = g * noise;
            let want = PI
                * density
                * 0.5
                * (PI / b).sqrt()
                * (a * a / (4.0 * b)).exp()
                * erfc(a / (2.0 * b.sqrt()));
            let got = acp(gamma_db, noise, density);
            assert!((got - want).abs() < 1e-7, "{got} vs {want}");
            assert!(got < acp(gamma_db, 0.0, density));
        }
        assert!(ppp_acp(&PppParams {
            density: 0.0,
            alpha: 4.0,
            gamma: 1.0,
            noise_over_power: 1e-9
        })
        .is_err());
    }

    #[test]
    fn acp_monotone_and_bounded() {
        let mut prev_rho = 0.0;
        let mut prev_acp = 1.0;
        for step in -20..=30 {
            let g = db_to_linear(step as f64);
            let r = rho(g, 3.5).unwrap();
            let p = ppp_acp(&PppParams {
                density: 1.0,
                alpha: 3.5,
                gamma: g,
                noise_over_power: 0.0,
            })
            .unwrap();
            assert!(r > prev_rho && p < prev_acp && p > 0.0 && p < 1.0);
            prev_rho = r;
            prev_acp = p;
        }
    }

    #[test]
    fn ppp_manifold_is_constant_and_density_free() {
        let g = GridSpec::new(5000.0, 16).unwrap();
        let mut occ = vec![0u8; 256];
        occ[..30].fill(1);
        let a = RoiTile::from_occupancy(1, g, occ.clone()).unwrap();
        occ[..90].fill(1);
        let b = RoiTile::from_occupancy(1, g, occ).unwrap();
        let p = ChannelParams::new(4.0, 0.0, 0.0).unwrap();
        let ma = ppp_manifold(&a, &p).unwrap();
        assert_eq!(ma.side(), 8);
        assert!(ma
            .values()
            .iter()
            .all(|&v| (v as f64 - 0.56010).abs() < 1e-4));
        assert_eq!(ma, ppp_manifold(&b, &p).unwrap());
    }

    #[test]
    fn bfsg_examples() {
        let flat = CoverageManifold::constant(2, 5.0, 4, 0.7).unwrap();
        assert_eq!(bfsg_manifold(&flat), flat);
        assert_eq!(l1(&flat, &bfsg_manifold(&flat)).unwrap(), 0.0);

        let halves: Vec<f32> = (0..16).map(|i| if i < 8 { 0.0 } else { 1.0 }).collect();
        let m = CoverageManifold::new(2, 5.0, 4, halves).unwrap();
        let b = bfsg_manifold(&m);
        assert!(b.values().iter().all(|&v| v == 0.5));
        assert_eq!(l1(&m, &b).unwrap(), 0.5);
        assert_eq!(avg(&b), avg(&m));
        assert_eq!(bfsg_manifold(&b), b);
    }
}
