//! The radial twist family `f_ω(z) = e^{2πiω(|z|)} z` and its composites.
//!
//! Every flow here is autonomous: component `i` turns the circle of radius
//! `r` at `vᵢ·ωᵢ(r)` turns per unit time, so all maps are evaluated in closed
//! form and preserve `|z|` exactly.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartPoint, MeasureConvention};
use crate::error::{Error, Result};
use crate::profile::RadialProfile;
use crate::quad::{integrate_breaks, QuadOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub profile: RadialProfile,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    components: Vec<Component>,
    duration: f64,
}

impl FlowSpec {
    pub fn new(components: Vec<Component>, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::Invalid(format!("duration must be positive, got {duration}")));
        }
        if components.iter().any(|c| !c.weight.is_finite()) {
            return Err(Error::Invalid("component weights must be finite".into()));
        }
        if components.len() > 1 {
            for (i, a) in components.iter().enumerate() {
                for b in &components[i + 1..] {
                    if !a.profile.disjoint_from(&b.profile) {
                        return Err(Error::Invalid(
                            "components of a composite flow must have disjoint radial supports".into(),
                        ));
                    }
                }
            }
        }
        Ok(FlowSpec {
            components,
            duration,
        })
    }

    pub fn single(profile: RadialProfile, weight: f64, duration: f64) -> Result<Self> {
        FlowSpec::new(vec![Component { profile, weight }], duration)
    }

    pub fn identity() -> Self {
        FlowSpec {
            components: Vec::new(),
            duration: 1.0,
        }
    }

    /// Rotation of the whole sphere about the vertical axis, `ω ≡ 1`.
    pub fn rigid_rotation(duration: f64) -> Result<Self> {
        FlowSpec::single(RadialProfile::constant(1.0), 1.0, duration)
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn with_duration(&self, duration: f64) -> Result<Self> {
        FlowSpec::new(self.components.clone(), duration)
    }

    pub fn is_identity(&self) -> bool {
        self.components.iter().all(|c| c.weight == 0.0)
            || self.components.iter().all(|c| c.profile.support().is_empty())
    }

    /// Angular rate `Σ vᵢ ωᵢ(r)` in turns per unit time.
    pub fn rate(&self, r: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.profile.value(r))
            .sum()
    }

    /// Angular rate as a function of the area coordinate `u`.
    pub fn rate_at_area_coordinate(&self, u: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.profile.value_at_area_coordinate(u))
            .sum()
    }

    /// Largest angular rate in absolute value over the sphere.
    pub fn max_rate(&self) -> f64 {
        let mut radii: Vec<f64> = vec![0.0];
        for c in &self.components {
            radii.extend(c.profile.breakpoints());
        }
        // Piecewise linear (or averaged piecewise linear): extrema sit at
        // breakpoints; the tail is constant.
        let mut m = radii.iter().map(|&r| self.rate(r).abs()).fold(0.0, f64::max);
        let far = radii.iter().cloned().fold(0.0, f64::max) + 1.0;
        m = m.max(self.rate(far).abs());
        m
    }

    /// Composite of two commuting flows, each run for its own duration.
    /// The result runs for unit time with weights scaled by the durations.
    pub fn compose(&self, other: &FlowSpec) -> Result<Self> {
        let mut components: Vec<Component> = self
            .components
            .iter()
            .map(|c| Component {
                profile: c.profile.clone(),
                weight: c.weight * self.duration,
            })
            .collect();
        components.extend(other.components.iter().map(|c| Component {
            profile: c.profile.clone(),
            weight: c.weight * other.duration,
        }));
        FlowSpec::new(components, 1.0)
    }

    /// Flow whose time-`T` map is the `k`-th power of this one's.
    pub fn power(&self, k: i64) -> Self {
        if k == 0 {
            return FlowSpec {
                components: Vec::new(),
                duration: self.duration,
            };
        }
        FlowSpec {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    profile: c.profile.clone(),
                    weight: c.weight * k as f64,
                })
                .collect(),
            duration: self.duration,
        }
    }

    /// Flow with all weights multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        FlowSpec {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    profile: c.profile.clone(),
                    weight: c.weight * s,
                })
                .collect(),
            duration: self.duration,
        }
    }

    fn area_breakpoints(&self) -> Vec<f64> {
        let mut u: Vec<f64> = vec![-1.0, 1.0];
        for c in &self.components {
            u.extend(c.profile.area_breakpoints());
        }
        u.sort_by(f64::total_cmp);
        u.dedup();
        u
    }
}

/// Chart velocity `Σ 2πi vᵢ ωᵢ(|z|) z` of the flow (time independent).
pub fn velocity(spec: &FlowSpec, _t: f64, z: ChartPoint) -> Result<Complex64> {
    let z = z.z()?;
    Ok(Complex64::new(0.0, 2.0 * PI * spec.rate(z.norm())) * z)
}

/// Time-`t` map `z ↦ exp(2πi t Σ vᵢωᵢ(|z|)) z`; infinity is fixed.
pub fn flow_map(spec: &FlowSpec, t: f64, z: ChartPoint) -> ChartPoint {
    if z.at_infinity {
        return z;
    }
    ChartPoint::finite(rotate(spec, t, z.coord))
}

pub(crate) fn rotate(spec: &FlowSpec, t: f64, z: Complex64) -> Complex64 {
    let turns = t * spec.rate(z.norm());
    // Reduce before forming the angle so integer turn counts stay exact.
    let frac = turns - turns.round();
    if frac == 0.0 {
        return z;
    }
    Complex64::from_polar(1.0, 2.0 * PI * frac) * z
}

/// Samples `t ↦ φ_t(z0)` on `times`.
pub fn trajectory(spec: &FlowSpec, z0: ChartPoint, times: &[f64]) -> Result<Vec<ChartPoint>> {
    let z = z0.z()?;
    Ok(times.iter().map(|&t| ChartPoint::finite(rotate(spec, t, z))).collect())
}

/// Exponent for [`lp_length`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            t => t
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("exponent {t:?}: {e}")))
                .and_then(Exponent::finite),
        }
    }

    pub fn finite(p: f64) -> Result<Self> {
        if p >= 1.0 && p.is_finite() {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::Invalid(format!("exponent must be >= 1, got {p}")))
        }
    }
}

/// `Lᵖ`-length `T·(∫ |X|ᵖ_{Sph} dμ)^{1/p}` of the flow over its duration,
/// with `μ` of total mass `2π`. `p = ∞` gives `T·sup |X|_{Sph}`.
///
/// In the area coordinate the spherical speed is
/// `|X|_{Sph} = π |Ω̃(u)| √(1 − u²)` and `dμ = π du`, so the integral is one
/// dimensional with panels split at the profile breakpoints.
pub fn lp_length(spec: &FlowSpec, p: Exponent, quad: QuadOptions) -> Result<f64> {
    let speed = |u: f64| PI * spec.rate_at_area_coordinate(u).abs() * (1.0 - u * u).max(0.0).sqrt();
    let breaks = spec.area_breakpoints();
    let norm = match p {
        Exponent::Finite(p) => {
            let mass = MeasureConvention::FUBINI_STUDY.total_mass / 2.0;
            let est = integrate_breaks(|u| mass * speed(u).powf(p), &breaks, quad)?;
            est.value.powf(1.0 / p)
        }
        Exponent::Infinity => {
            let mut best = 0.0f64;
            for w in breaks.windows(2) {
                best = best.max(panel_max(&speed, w[0], w[1]));
            }
            best
        }
    };
    Ok(spec.duration * norm)
}

fn panel_max<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    // Inside a panel the speed is smooth; a grid followed by golden-section
    // refinement around the best grid point.
    let n = 64;
    let h = (b - a) / n as f64;
    let mut best_i: usize = 0;
    let mut best = f64::MIN;
    for i in 0..=n {
        // Stay off the endpoints where the profile may jump.
        let x = (a + i as f64 * h).clamp(a + 1e-12 * (b - a), b - 1e-12 * (b - a));
        let v = f(x);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut lo, mut hi) = (
        a + (best_i.saturating_sub(1)) as f64 * h,
        (a + (best_i + 1) as f64 * h).min(b),
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if f(x1) < f(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    best.max(f(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(re: f64, im: f64) -> ChartPoint {
        ChartPoint::finite(Complex64::new(re, im))
    }

    #[test]
    fn velocity_examples() {
        let rot = FlowSpec::rigid_rotation(1.0).unwrap();
        let v = velocity(&rot, 0.0, pt(1.0, 0.0)).unwrap();
        assert_relative_eq!(v.re, 0.0);
        assert_relative_eq!(v.im, 2.0 * PI);
        assert_eq!(velocity(&rot, 0.3, pt(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
        let zero = FlowSpec::single(RadialProfile::constant(0.0), 1.0, 1.0).unwrap();
        assert_eq!(velocity(&zero, 0.0, pt(0.4, 2.0)).unwrap().norm(), 0.0);
        assert!(velocity(&rot, 0.0, ChartPoint::infinity()).is_err());
    }

    #[test]
    fn velocity_is_time_derivative_of_flow() {
        let spec = FlowSpec::single(RadialProfile::step(0.7, 1.0, 0.5).unwrap(), 1.3, 1.0).unwrap();
        let z = pt(0.6, 0.9);
        let h = 1e-6;
        let d = (flow_map(&spec, 0.4 + h, z).coord - flow_map(&spec, 0.4 - h, z).coord) / (2.0 * h);
        let v = velocity(&spec, 0.4, flow_map(&spec, 0.4, z)).unwrap();
        assert_relative_eq!(d.re, v.re, epsilon = 1e-6);
        assert_relative_eq!(d.im, v.im, epsilon = 1e-6);
    }

    #[test]
    fn flow_map_examples() {
        let rot = FlowSpec::rigid_rotation(1.0).unwrap();
        let z = pt(0.3, -0.8);
        assert_eq!(flow_map(&rot, 1.0, z), z);
        let half = FlowSpec::single(RadialProfile::constant(0.5), 1.0, 1.0).unwrap();
        let w = flow_map(&half, 1.0, pt(1.0, 0.0));
        assert_relative_eq!(w.coord.re, -1.0);
        assert_relative_eq!(w.coord.im, 0.0, epsilon = 1e-15);
        assert_eq!(flow_map(&rot, 0.37, ChartPoint::infinity()), ChartPoint::infinity());
    }

    #[test]
    fn power_examples() {
        let s = FlowSpec::single(RadialProfile::step(0.8, 0.9, 0.3).unwrap(), 1.1, 1.0).unwrap();
        assert_eq!(s.power(1), s);
        let id = s.power(0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let z = pt(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let a = flow_map(&s.power(3), 1.0, z);
            let b = flow_map(&s, 3.0, z);
            assert_relative_eq!(a.coord.re, b.coord.re, epsilon = 1e-12);
            assert_relative_eq!(a.coord.im, b.coord.im, epsilon = 1e-12);
            assert_eq!(flow_map(&id, 1.0, z), z);
            let back = flow_map(&s.power(-1), 1.0, flow_map(&s, 1.0, z));
            assert_relative_eq!(back.coord.re, z.coord.re, epsilon = 1e-12);
        }
    }

    #[test]
    fn trajectory_examples() {
        let zero = FlowSpec::identity();
        let times: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let z = pt(0.5, 0.5);
        assert!(trajectory(&zero, z, &times).unwrap().iter().all(|p| *p == z));
        let s = FlowSpec::single(RadialProfile::step(1.0, 1.0, 0.2).unwrap(), 2.0, 1.0).unwrap();
        for p in trajectory(&s, pt(1.05, 0.3), &times).unwrap() {
            assert_relative_eq!(p.coord.norm(), pt(1.05, 0.3).coord.norm(), max_relative = 1e-14);
        }
        assert!(trajectory(&s, ChartPoint::infinity(), &times).is_err());
    }

    #[test]
    fn planar_jacobian_is_one() {
        let spec = FlowSpec::new(
            vec![
                Component {
                    profile: RadialProfile::knots(&[(0.2, 1.0), (0.6, -0.5), (0.9, 0.0)]).unwrap(),
                    weight: 1.7,
                },
                Component {
                    profile: RadialProfile::knots(&[(1.2, 0.0), (1.5, 2.0), (2.5, 0.0)]).unwrap(),
                    weight: -0.6,
                },
            ],
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-6;
        for _ in 0..1000 {
            let z = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let f = |w: Complex64| rotate(&spec, 0.77, w);
            let dx = (f(z + h) - f(z - h)) / (2.0 * h);
            let dy = (f(z + Complex64::new(0.0, h)) - f(z - Complex64::new(0.0, h))) / (2.0 * h);
            let det = dx.re * dy.im - dx.im * dy.re;
            // Points within h of a kink get a one-sided derivative mix.
            let near_kink = spec
                .components()
                .iter()
                .flat_map(|c| c.profile.breakpoints())
                .any(|r| (z.norm() - r).abs() < 10.0 * h);
            if !near_kink {
                assert!((det - 1.0).abs() < 1e-6, "det {det} at {z}");
            }
        }
    }

    #[test]
    fn disjoint_components_commute() {
        let a = FlowSpec::single(RadialProfile::step(1.0, 0.5, 0.1).unwrap(), 0.7, 1.0).unwrap();
        let b = FlowSpec::single(
            RadialProfile::knots(&[(0.8, 0.0), (1.0, 1.0), (1.4, 0.0)]).unwrap(),
            1.9,
            1.0,
        )
        .unwrap();
        let ab = a.compose(&b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let z = pt(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let x = flow_map(&a, 1.0, flow_map(&b, 1.0, z));
            let y = flow_map(&b, 1.0, flow_map(&a, 1.0, z));
            assert_eq!(x, y);
            let c = flow_map(&ab, 1.0, z);
            assert_relative_eq!(c.coord.re, x.coord.re, epsilon = 1e-14);
            assert_relative_eq!(c.coord.im, x.coord.im, epsilon = 1e-14);
        }
        let overlapping = RadialProfile::step(1.0, 0.9, 0.0).unwrap();
        assert!(b.compose(&FlowSpec::single(overlapping, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn rigid_rotation_lp_closed_form() {
        let rot = FlowSpec::rigid_rotation(1.0).unwrap();
        let l2 = lp_length(&rot, Exponent::Finite(2.0), QuadOptions::with_rel(1e-12)).unwrap();
        assert_relative_eq!(l2, 2.0 * PI * (PI / 3.0).sqrt(), max_relative = 1e-10);
        // sup of π√(1−u²) is π at the equator.
        let linf = lp_length(&rot, Exponent::Infinity, QuadOptions::default()).unwrap();
        assert_relative_eq!(linf, PI, max_relative = 1e-10);
        assert_eq!(lp_length(&FlowSpec::identity(), Exponent::Finite(3.0), QuadOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn lp_oracle_in_radius_variable() {
        // Independent route: planar polar integral ∫ |X|ᵖ 2(1+r²)⁻² r dr dφ.
        let spec = FlowSpec::single(RadialProfile::knots(&[(0.3, 1.0), (1.2, 0.2), (2.0, 0.0)]).unwrap(), 1.5, 1.0)
            .unwrap();
        let p = 3.0;
        let m = 400_000;
        let rmax = 2.0;
        let mut acc = 0.0;
        for k in 0..m {
            let r = (k as f64 + 0.5) * rmax / m as f64;
            let speed = 2.0 * PI * spec.rate(r).abs() * r / (1.0 + r * r);
            acc += speed.powf(p) * 2.0 / (1.0 + r * r).powi(2) * 2.0 * PI * r * rmax / m as f64;
        }
        let oracle = acc.powf(1.0 / p);
        let got = lp_length(&spec, Exponent::Finite(p), QuadOptions::with_rel(1e-10)).unwrap();
        assert_relative_eq!(got, oracle, max_relative = 1e-6);
    }

    #[test]
    fn lp_scaling() {
        let s = FlowSpec::single(RadialProfile::step(1.0, 0.6, 0.2).unwrap(), 1.0, 1.0).unwrap();
        let q = QuadOptions::with_rel(1e-12);
        for p in [Exponent::Finite(3.0), Exponent::Finite(2.5), Exponent::Infinity] {
            let base = lp_length(&s, p, q).unwrap();
            assert_relative_eq!(lp_length(&s.scaled(2.0), p, q).unwrap(), 2.0 * base, max_relative = 1e-9);
            assert_relative_eq!(lp_length(&s.with_duration(3.0).unwrap(), p, q).unwrap(), 3.0 * base, max_relative = 1e-12);
            for k in [-3i64, 2, 5] {
                assert_relative_eq!(lp_length(&s.power(k), p, q).unwrap(), k.unsigned_abs() as f64 * base, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn lp_triangle_bound_for_composites() {
        let a = RadialProfile::annulus(1.0, 0.3, 0.6).unwrap();
        let b = RadialProfile::annulus(1.0, -0.6, -0.2).unwrap();
        let q = QuadOptions::with_rel(1e-10);
        let p = Exponent::Finite(3.0);
        let (va, vb) = (0.8, -1.7);
        let comp = FlowSpec::new(
            vec![Component { profile: a.clone(), weight: va }, Component { profile: b.clone(), weight: vb }],
            1.0,
        )
        .unwrap();
        let la = lp_length(&FlowSpec::single(a, 1.0, 1.0).unwrap(), p, q).unwrap();
        let lb = lp_length(&FlowSpec::single(b, 1.0, 1.0).unwrap(), p, q).unwrap();
        let lc = lp_length(&comp, p, q).unwrap();
        assert!(lc <= va.abs() * la + vb.abs() * lb + 1e-12);
        assert!(lc > 0.0);
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!(Exponent::parse("inf").unwrap(), Exponent::Infinity);
        assert_eq!(Exponent::parse("3").unwrap(), Exponent::Finite(3.0));
        assert!(Exponent::parse("0.5").is_err());
        assert!(Exponent::parse("abc").is_err());
    }
}
