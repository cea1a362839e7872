//! Radial twist profiles `ω(r)`.
//!
//! JSON forms:
//!
//! ```text
//! {"knots": [[r, value], ...]}
//! {"type": "step", "lambda": L, "r0": R, "ramp": W}
//! ```
//!
//! Knot profiles are piecewise linear with constant extension on both sides.
//! A step has height `L` on `[0, R)` and ramps linearly to 0 on
//! `[R, R + W]`; `W = 0` gives a sharp jump. Either form takes an optional
//! `"smooth": h`, replacing `ω` by its moving average over windows of width
//! `h`, which is C¹.

use serde::{Deserialize, Serialize};

use crate::chart::{area_coordinate, radius_of_area_coordinate};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum StepTag {
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Shape {
    Step {
        #[serde(rename = "type")]
        tag: StepTag,
        lambda: f64,
        r0: f64,
        ramp: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smooth: Option<f64>,
    },
    Knots {
        knots: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smooth: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape", into = "Shape")]
pub struct RadialProfile {
    shape: Shape,
    // Piecewise-linear knots equivalent to the shape; a step with zero ramp
    // is stored as a repeated radius (a jump).
    knots: Vec<(f64, f64)>,
}

impl TryFrom<Shape> for RadialProfile {
    type Error = Error;

    fn try_from(shape: Shape) -> Result<Self> {
        let (knots, smooth) = match &shape {
            Shape::Step {
                lambda,
                r0,
                ramp,
                smooth,
                ..
            } => {
                if !(lambda.is_finite() && *r0 > 0.0 && r0.is_finite() && *ramp >= 0.0 && ramp.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "step needs finite lambda, r0 > 0, ramp >= 0 (got {lambda}, {r0}, {ramp})"
                    )));
                }
                (vec![(*r0, *lambda), (*r0 + *ramp, 0.0)], *smooth)
            }
            Shape::Knots { knots, smooth } => {
                if knots.is_empty() {
                    return Err(Error::Invalid("profile needs at least one knot".into()));
                }
                for k in knots {
                    if !(k[0] >= 0.0 && k[0].is_finite() && k[1].is_finite()) {
                        return Err(Error::Invalid(format!("bad knot {k:?}")));
                    }
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::Invalid("knot radii must be strictly increasing".into()));
                }
                (knots.iter().map(|k| (k[0], k[1])).collect(), *smooth)
            }
        };
        if let Some(h) = smooth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Invalid(format!("smoothing width must be positive, got {h}")));
            }
        }
        Ok(RadialProfile { shape, knots })
    }
}

impl From<RadialProfile> for Shape {
    fn from(p: RadialProfile) -> Shape {
        p.shape
    }
}

impl RadialProfile {
    pub fn knots(points: &[(f64, f64)]) -> Result<Self> {
        Shape::Knots {
            knots: points.iter().map(|&(r, v)| [r, v]).collect(),
            smooth: None,
        }
        .try_into()
    }

    pub fn constant(value: f64) -> Self {
        RadialProfile::knots(&[(0.0, value)]).expect("constant profile is valid")
    }

    pub fn step(lambda: f64, r0: f64, ramp: f64) -> Result<Self> {
        Shape::Step {
            tag: StepTag::Step,
            lambda,
            r0,
            ramp,
            smooth: None,
        }
        .try_into()
    }

    /// Step of height `lambda` on the region `u > u0` (the disc around 0
    /// of normalized area `(1 − u0)/2`).
    pub fn step_at_area_coordinate(lambda: f64, u0: f64, ramp: f64) -> Result<Self> {
        RadialProfile::step(lambda, radius_of_area_coordinate(u0), ramp)
    }

    /// Height `lambda` on the annulus of area coordinates `u ∈ (u_lo, u_hi)`
    /// with sharp edges (`u_hi < 1`, `u_lo > −1`).
    pub fn annulus(lambda: f64, u_lo: f64, u_hi: f64) -> Result<Self> {
        if !(-1.0 < u_lo && u_lo < u_hi && u_hi < 1.0) {
            return Err(Error::Invalid(format!("bad annulus ({u_lo}, {u_hi})")));
        }
        let r_in = radius_of_area_coordinate(u_hi);
        let r_out = radius_of_area_coordinate(u_lo);
        // Jumps are encoded with a tiny radial offset so knot radii stay increasing.
        let eps = 1e-12 * r_out.max(1.0);
        RadialProfile::knots(&[(r_in, 0.0), (r_in + eps, lambda), (r_out, lambda), (r_out + eps, 0.0)])
    }

    pub fn smoothed(&self, width: f64) -> Result<Self> {
        let shape = match self.shape.clone() {
            Shape::Step {
                tag,
                lambda,
                r0,
                ramp,
                ..
            } => Shape::Step {
                tag,
                lambda,
                r0,
                ramp,
                smooth: Some(width),
            },
            Shape::Knots { knots, .. } => Shape::Knots {
                knots,
                smooth: Some(width),
            },
        };
        shape.try_into()
    }

    fn smoothing(&self) -> Option<f64> {
        match &self.shape {
            Shape::Step { smooth, .. } | Shape::Knots { smooth, .. } => *smooth,
        }
    }

    fn raw_value(&self, r: f64) -> f64 {
        let k = &self.knots;
        if r < k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let (r0, v0) = w[0];
            let (r1, v1) = w[1];
            if r < r1 {
                if r1 == r0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (r - r0) / (r1 - r0);
            }
        }
        k[k.len() - 1].1
    }

    /// `∫_{0}^{r} ω` with the profile extended by its value at 0 for `r < 0`.
    fn raw_antiderivative(&self, r: f64) -> f64 {
        let k = &self.knots;
        let first = k[0];
        if r <= first.0 {
            return first.1 * r;
        }
        let mut acc = first.1 * first.0;
        for w in k.windows(2) {
            let (r0, v0) = w[0];
            let (r1, v1) = w[1];
            if r <= r1 {
                let vr = if r1 == r0 { v1 } else { v0 + (v1 - v0) * (r - r0) / (r1 - r0) };
                return acc + 0.5 * (v0 + vr) * (r - r0);
            }
            acc += 0.5 * (v0 + v1) * (r1 - r0);
        }
        let last = k[k.len() - 1];
        acc + last.1 * (r - last.0)
    }

    /// `ω(r)` in turns per unit time.
    pub fn value(&self, r: f64) -> f64 {
        match self.smoothing() {
            None => self.raw_value(r),
            Some(h) => (self.raw_antiderivative(r + 0.5 * h) - self.raw_antiderivative(r - 0.5 * h)) / h,
        }
    }

    /// `ω̃(u) = ω(r(u))`.
    pub fn value_at_area_coordinate(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return self.tail_value();
        }
        self.value(radius_of_area_coordinate(u))
    }

    /// Constant value near infinity.
    pub fn tail_value(&self) -> f64 {
        self.knots[self.knots.len() - 1].1
    }

    /// Constant value near the origin.
    pub fn core_value(&self) -> f64 {
        self.knots[0].1
    }

    /// Radii where the profile or its derivative may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = match self.smoothing() {
            None => self.knots.iter().map(|k| k.0).collect(),
            Some(h) => self
                .knots
                .iter()
                .flat_map(|k| [k.0 - 0.5 * h, k.0 + 0.5 * h])
                .filter(|&r| r > 0.0)
                .collect(),
        };
        out.retain(|r| *r > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Breakpoints in the area coordinate, sorted ascending and including ±1.
    pub fn area_breakpoints(&self) -> Vec<f64> {
        let mut out = vec![-1.0, 1.0];
        out.extend(self.breakpoints().into_iter().map(area_coordinate));
        out.retain(|u| u.is_finite());
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// True when `ω` vanishes near infinity.
    pub fn is_compactly_supported(&self) -> bool {
        self.tail_value() == 0.0
    }

    /// Closed radial intervals outside of which `ω = 0`.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let k = &self.knots;
        let pad = self.smoothing().map_or(0.0, |h| 0.5 * h);
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut push = |lo: f64, hi: f64| match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        };
        if k[0].1 != 0.0 {
            push(0.0, k[0].0 + pad);
        }
        for w in k.windows(2) {
            if w[0].1 != 0.0 || w[1].1 != 0.0 {
                push((w[0].0 - pad).max(0.0), w[1].0 + pad);
            }
        }
        if k[k.len() - 1].1 != 0.0 {
            push((k[k.len() - 1].0 - pad).max(0.0), f64::INFINITY);
        }
        out
    }

    /// True when the open supports of `self` and `other` do not meet.
    pub fn disjoint_from(&self, other: &RadialProfile) -> bool {
        let a = self.support();
        let b = other.support();
        a.iter()
            .all(|x| b.iter().all(|y| x.1 <= y.0 || y.1 <= x.0))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn step_values() {
        let p = RadialProfile::step(2.0, 1.0, 0.5).unwrap();
        assert_eq!(p.value(0.0), 2.0);
        assert_eq!(p.value(0.99), 2.0);
        assert_relative_eq!(p.value(1.25), 1.0);
        assert_eq!(p.value(1.5), 0.0);
        assert_eq!(p.value(9.0), 0.0);
        assert!(p.is_compactly_supported());
        let sharp = RadialProfile::step(1.0, 1.0, 0.0).unwrap();
        assert_eq!(sharp.value(0.999_999), 1.0);
        assert_eq!(sharp.value(1.0), 0.0);
    }

    #[test]
    fn json_forms() {
        let p = RadialProfile::from_json(r#"{"type":"step","lambda":1,"r0":0.5,"ramp":0.1}"#).unwrap();
        assert_eq!(p.value(0.2), 1.0);
        let q = RadialProfile::from_json(r#"{"knots":[[0.5,1.0],[1.0,0.0]]}"#).unwrap();
        assert_relative_eq!(q.value(0.75), 0.5);
        assert!(RadialProfile::from_json(r#"{"knots":[[1.0,1.0],[0.5,0.0]]}"#).is_err());
        assert!(RadialProfile::from_json(r#"{"knots":[]}"#).is_err());
        assert!(RadialProfile::from_json(r#"{"type":"step","lambda":1,"r0":-1,"ramp":0}"#).is_err());
    }

    #[test]
    fn supports() {
        let inner = RadialProfile::step(1.0, 0.5, 0.1).unwrap();
        let outer = RadialProfile::knots(&[(0.7, 0.0), (0.8, 1.0), (1.0, 0.0)]).unwrap();
        assert!(inner.disjoint_from(&outer));
        let wide = RadialProfile::knots(&[(0.55, 0.0), (0.8, 1.0), (1.0, 0.0)]).unwrap();
        assert!(!inner.disjoint_from(&wide));
        assert!(!RadialProfile::constant(1.0).disjoint_from(&outer));
        assert_eq!(RadialProfile::constant(0.0).support(), vec![]);
    }

    #[test]
    fn area_coordinate_view() {
        let p = RadialProfile::step_at_area_coordinate(1.0, 0.5, 0.0).unwrap();
        assert_eq!(p.value_at_area_coordinate(0.9), 1.0);
        assert_eq!(p.value_at_area_coordinate(0.1), 0.0);
        let a = RadialProfile::annulus(3.0, -0.5, 0.0).unwrap();
        assert_eq!(a.value_at_area_coordinate(-0.25), 3.0);
        assert_eq!(a.value_at_area_coordinate(0.25), 0.0);
        assert_eq!(a.value_at_area_coordinate(-0.75), 0.0);
    }

    #[test]
    fn smoothing_is_continuous_average() {
        let p = RadialProfile::step(1.0, 1.0, 0.0).unwrap().smoothed(0.2).unwrap();
        assert_relative_eq!(p.value(0.5), 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.value(1.0), 0.5, epsilon = 1e-15);
        assert_eq!(p.value(1.2), 0.0);
        let raw = RadialProfile::step(1.0, 1.0, 0.0).unwrap();
        for r in [0.85, 0.9, 0.95, 1.05, 1.1] {
            let avg = crate::quad::integrate_breaks(|x| raw.value(x), &[r - 0.1, 1.0f64.clamp(r - 0.1, r + 0.1), r + 0.1], Default::default())
                .unwrap()
                .value
                / 0.2;
            assert_relative_eq!(p.value(r), avg, epsilon = 1e-12);
        }
        let back = RadialProfile::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    proptest! {
        #[test]
        fn json_roundtrip_is_bit_exact(
            radii in proptest::collection::vec(0.0f64..10.0, 1..6),
            values in proptest::collection::vec(-5.0f64..5.0, 6),
            lambda in -3.0f64..3.0, r0 in 1e-3f64..5.0, ramp in 0.0f64..1.0,
        ) {
            let mut r = radii.clone();
            r.sort_by(f64::total_cmp);
            r.dedup();
            let pts: Vec<(f64, f64)> = r.iter().zip(values.iter()).map(|(&a, &b)| (a, b)).collect();
            let p = RadialProfile::knots(&pts).unwrap();
            let back = RadialProfile::from_json(&p.to_json()).unwrap();
            prop_assert_eq!(&back, &p);
            for (x, y) in pts.iter().zip(back.knots.iter()) {
                prop_assert_eq!(x.0.to_bits(), y.0.to_bits());
                prop_assert_eq!(x.1.to_bits(), y.1.to_bits());
            }
            let s = RadialProfile::step(lambda, r0, ramp).unwrap();
            prop_assert_eq!(RadialProfile::from_json(&s.to_json()).unwrap(), s);
        }
    }
}
