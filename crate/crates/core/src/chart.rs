//! The two-sphere `ℂP¹` seen through the affine chart `z ↦ [z, 1]`.
//!
//! The chart carries the Fubini–Study metric `|dz| / (1 + |z|²)` and the
//! area form `2 (1 + |z|²)⁻² dm` of total mass `2π`. Points are mapped to
//! the unit sphere by `z = (X + iY) / (1 − Z)` whenever great circles are
//! needed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub coord: Complex64,
    pub at_infinity: bool,
}

impl ChartPoint {
    pub fn finite(coord: Complex64) -> Self {
        ChartPoint {
            coord,
            at_infinity: false,
        }
    }

    pub fn infinity() -> Self {
        ChartPoint {
            coord: Complex64::new(0.0, 0.0),
            at_infinity: true,
        }
    }

    /// The chart coordinate, or `AtInfinity` for `[1, 0]`.
    pub fn z(&self) -> Result<Complex64> {
        if self.at_infinity {
            Err(Error::AtInfinity)
        } else {
            Ok(self.coord)
        }
    }

    /// Point on the unit sphere in `ℝ³`.
    pub fn to_sphere(&self) -> [f64; 3] {
        if self.at_infinity {
            return [0.0, 0.0, 1.0];
        }
        let z = self.coord;
        let r2 = z.norm_sqr();
        let d = 1.0 + r2;
        [2.0 * z.re / d, 2.0 * z.im / d, (r2 - 1.0) / d]
    }

    pub fn from_sphere(p: [f64; 3]) -> Self {
        let [x, y, z] = p;
        let denom = 1.0 - z;
        if denom <= 0.0 {
            return ChartPoint::infinity();
        }
        ChartPoint::finite(Complex64::new(x / denom, y / denom))
    }

    pub fn antipode(&self) -> Self {
        let [x, y, z] = self.to_sphere();
        ChartPoint::from_sphere([-x, -y, -z])
    }
}

/// Normalization of the spherical measure per factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureConvention {
    pub total_mass: f64,
}

impl MeasureConvention {
    pub const PROBABILITY: MeasureConvention = MeasureConvention { total_mass: 1.0 };
    pub const FUBINI_STUDY: MeasureConvention = MeasureConvention {
        total_mass: 2.0 * PI,
    };

    pub fn new(total_mass: f64) -> Result<Self> {
        if !(total_mass > 0.0 && total_mass.is_finite()) {
            return Err(Error::Invalid(format!(
                "total mass must be positive, got {total_mass}"
            )));
        }
        Ok(MeasureConvention { total_mass })
    }

    /// Total mass of the `n`-fold product measure.
    pub fn product_mass(&self, n: usize) -> f64 {
        self.total_mass.powi(n as i32)
    }
}

impl Default for MeasureConvention {
    fn default() -> Self {
        MeasureConvention::PROBABILITY
    }
}

/// Fubini–Study length of the chart tangent vector `v` at `z`.
pub fn spherical_speed(z: ChartPoint, v: Complex64) -> Result<f64> {
    let z = z.z()?;
    Ok(v.norm() / (1.0 + z.norm_sqr()))
}

/// Density of the spherical measure against planar Lebesgue measure.
pub fn measure_density(z: ChartPoint, convention: MeasureConvention) -> Result<f64> {
    let z = z.z()?;
    let q = 1.0 + z.norm_sqr();
    Ok(convention.total_mass / PI / (q * q))
}

/// Normalized spherical area `a(r) = r² / (1 + r²)` of the disc `|z| ≤ r`.
pub fn disc_area(r: f64) -> f64 {
    if r.is_infinite() {
        return 1.0;
    }
    let r2 = r * r;
    r2 / (1.0 + r2)
}

/// The height coordinate `u = 1 − 2a(r)`, uniform on `[−1, 1]` under the
/// round measure.
pub fn area_coordinate(r: f64) -> f64 {
    1.0 - 2.0 * disc_area(r)
}

/// Inverse of [`area_coordinate`]: `r(u) = √((1 − u) / (1 + u))`.
pub fn radius_of_area_coordinate(u: f64) -> f64 {
    if u <= -1.0 {
        return f64::INFINITY;
    }
    ((1.0 - u) / (1.0 + u)).max(0.0).sqrt()
}

/// Uniform point for the Fubini–Study probability measure. Never returns the
/// point at infinity.
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> ChartPoint {
    // u ∈ (−1, 1]: u = −1 is the point at infinity.
    let u = 1.0 - 2.0 * rng.gen::<f64>();
    let phi = 2.0 * PI * rng.gen::<f64>();
    let r = radius_of_area_coordinate(u);
    ChartPoint::finite(Complex64::from_polar(r, phi))
}

/// Uniform unit complex number.
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * rng.gen::<f64>())
}

/// Constant-speed minimal great-circle arc from `x` to `y`, at `t ∈ [0, 1]`.
pub fn geodesic_path(x: ChartPoint, y: ChartPoint, t: f64) -> Result<ChartPoint> {
    let p = x.to_sphere();
    let q = y.to_sphere();
    let dot = (p[0] * q[0] + p[1] * q[1] + p[2] * q[2]).clamp(-1.0, 1.0);
    if dot < -1.0 + 1e-12 {
        return Err(Error::Antipodal);
    }
    if t == 0.0 {
        return Ok(x);
    }
    if t == 1.0 {
        return Ok(y);
    }
    let angle = dot.acos();
    if angle < 1e-15 {
        return Ok(x);
    }
    let s = angle.sin();
    let a = ((1.0 - t) * angle).sin() / s;
    let b = (t * angle).sin() / s;
    Ok(ChartPoint::from_sphere([
        a * p[0] + b * q[0],
        a * p[1] + b * q[1],
        a * p[2] + b * q[2],
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> ChartPoint {
        ChartPoint::finite(Complex64::new(re, im))
    }

    #[test]
    fn speed_examples() {
        assert_relative_eq!(spherical_speed(c(0.0, 0.0), Complex64::new(1.0, 0.0)).unwrap(), 1.0);
        assert_relative_eq!(spherical_speed(c(1.0, 0.0), Complex64::new(2.0, 0.0)).unwrap(), 1.0);
        assert_relative_eq!(
            spherical_speed(c(0.0, 3.0), Complex64::new(0.0, 1.0)).unwrap(),
            0.1,
            epsilon = 1e-15
        );
        assert_eq!(
            spherical_speed(ChartPoint::infinity(), Complex64::new(1.0, 0.0)),
            Err(Error::AtInfinity)
        );
    }

    #[test]
    fn density_examples() {
        let fs = MeasureConvention::FUBINI_STUDY;
        assert_relative_eq!(measure_density(c(0.0, 0.0), fs).unwrap(), 2.0);
        assert_relative_eq!(
            measure_density(c(0.0, 0.0), MeasureConvention::PROBABILITY).unwrap(),
            1.0 / PI
        );
        assert_relative_eq!(measure_density(c(1.0, 0.0), fs).unwrap(), 0.5);
        assert!(measure_density(ChartPoint::infinity(), fs).is_err());
        assert!(MeasureConvention::new(0.0).is_err());
    }

    #[test]
    fn density_integrates_to_total_mass() {
        // Midpoint rule on a polar grid in t = r/(1+r), r ∈ [0, ∞).
        for conv in [MeasureConvention::PROBABILITY, MeasureConvention::FUBINI_STUDY] {
            let m = 200_000;
            let mut total = 0.0;
            for k in 0..m {
                let t = (k as f64 + 0.5) / m as f64;
                let r = t / (1.0 - t);
                let dr = 1.0 / ((1.0 - t) * (1.0 - t)) / m as f64;
                total += measure_density(c(r, 0.0), conv).unwrap() * 2.0 * PI * r * dr;
            }
            assert_relative_eq!(total, conv.total_mass, max_relative = 1e-4);
        }
    }

    #[test]
    fn rotation_covariance() {
        let z = c(0.7, -1.3);
        let v = Complex64::new(0.2, 0.5);
        let rot = Complex64::from_polar(1.0, 0.9);
        let zr = ChartPoint::finite(rot * z.coord);
        assert_relative_eq!(
            spherical_speed(z, v).unwrap(),
            spherical_speed(zr, rot * v).unwrap(),
            max_relative = 1e-14
        );
        let fs = MeasureConvention::FUBINI_STUDY;
        assert_relative_eq!(
            measure_density(z, fs).unwrap(),
            measure_density(zr, fs).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn area_examples() {
        assert_eq!(disc_area(0.0), 0.0);
        assert_relative_eq!(disc_area(1.0), 0.5);
        assert_relative_eq!(area_coordinate(1.0), 0.0);
        let r = (1.0f64 / 3.0).sqrt();
        assert_relative_eq!(disc_area(r), 0.25, max_relative = 1e-15);
        assert_relative_eq!(area_coordinate(r), 0.5, max_relative = 1e-15);
        let mut prev = 0.0;
        for k in 1..1000 {
            let a = disc_area(k as f64 * 0.05);
            assert!(a > prev && a < 1.0);
            prev = a;
        }
        assert!(1.0 - disc_area(1e8) < 1e-15);
        for u in [-0.9, -0.2, 0.0, 0.4, 1.0] {
            assert_relative_eq!(
                area_coordinate(radius_of_area_coordinate(u)),
                u,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn sampling_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut sum_a, mut inside) = (0.0, 0usize);
        for _ in 0..n {
            let p = sample_uniform(&mut rng);
            assert!(!p.at_infinity);
            let r = p.coord.norm();
            sum_a += disc_area(r);
            inside += (r <= 1.0) as usize;
        }
        let mean = sum_a / n as f64;
        // a is uniform on [0,1]: σ = 1/√12.
        let sigma = (1.0f64 / 12.0).sqrt() / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma);
        let frac = inside as f64 / n as f64;
        assert!((frac - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn sampling_chi_square_on_deciles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut bins = [0usize; 10];
        for _ in 0..n {
            let u = area_coordinate(sample_uniform(&mut rng).coord.norm());
            let b = (((u + 1.0) / 2.0) * 10.0).floor().clamp(0.0, 9.0) as usize;
            bins[b] += 1;
        }
        let e = n as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        // χ²₉ critical value at 0.01.
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            assert_eq!(sample_uniform(&mut a), sample_uniform(&mut b));
        }
    }

    #[test]
    fn geodesic_examples() {
        let x = c(0.3, -0.2);
        for t in [0.0, 0.4, 1.0] {
            let p = geodesic_path(x, x, t).unwrap();
            assert_relative_eq!(p.coord.re, x.coord.re, epsilon = 1e-14);
            assert_relative_eq!(p.coord.im, x.coord.im, epsilon = 1e-14);
        }
        let end = geodesic_path(c(0.0, 0.0), c(1.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(end.coord.re, 1.0);
        let mid = geodesic_path(c(0.0, 0.0), c(1.0, 0.0), 0.5).unwrap();
        assert_relative_eq!(mid.coord.norm(), (PI / 8.0).tan(), max_relative = 1e-14);
        assert_eq!(
            geodesic_path(c(0.0, 0.0), ChartPoint::infinity(), 0.5),
            Err(Error::Antipodal)
        );
        assert_eq!(geodesic_path(x, x.antipode(), 0.5), Err(Error::Antipodal));
    }
}
