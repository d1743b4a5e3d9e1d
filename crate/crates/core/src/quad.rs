//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

// Node and weight tables keep their published 30-digit form.
#![allow(clippy::excessive_precision)]

use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 2000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (k, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]` until the estimated absolute error is
/// below `max(abs_tol, rel_tol * |result|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature(format!(
            "interval [{a}, {b}] is not finite"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut segments = vec![gk15(&f, a, b)];
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() {
            return Err(Error::Quadrature(
                "integrand produced a non-finite value".into(),
            ));
        }
        if error <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "error estimate {error:e} after {MAX_INTERVALS} subdivisions"
            )));
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("non-empty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        segments.push(gk15(&f, s.a, mid));
        segments.push(gk15(&f, mid, s.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        // 15-point Kronrod is exact through degree 22
        let v = integrate(|x| x.powi(10) - 3.0 * x * x, -1.0, 2.0, 1e-13, 0.0).unwrap();
        let exact = (2f64.powi(11) + 1.0) / 11.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn smooth_and_peaked_integrands() {
        let v = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-14, 0.0).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
        let v = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 0.0).unwrap();
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-8, "{v} vs {exact}");
        assert_eq!(integrate(|x| x, 3.0, 3.0, 1e-9, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_infinite_bounds() {
        assert!(integrate(|x| x, 0.0, f64::INFINITY, 1e-9, 0.0).is_err());
    }
}
