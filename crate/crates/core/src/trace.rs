//! Closed loops in the configuration space of `n` distinct points and the
//! braids they carry.
//!
//! A loop is `short path (base → x) # flow trace of x # reverse(short path
//! (base → φ_T x))`. The loop is stored both as evaluable segments and as an
//! adaptively refined sample sequence; winding functionals and crossing
//! counts are computed on the samples, crossing times are located on the
//! segments themselves.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::braid::{BraidWord, Letter};
use crate::chart::{geodesic_path, ChartPoint};
use crate::error::{Error, Result};
use crate::flow::{rotate, FlowSpec};

pub const DEFAULT_SEPARATION: f64 = 1e-9;
pub const DEFAULT_BASE_RADIUS: f64 = 0.1;
pub const DEFAULT_MAX_ANGLE_STEP: f64 = PI / 8.0;
pub const DEFAULT_MAX_SAMPLES: usize = 1 << 20;

/// Ordered tuple of distinct points of the affine chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigTuple {
    points: Vec<Complex64>,
}

impl ConfigTuple {
    pub fn new(points: Vec<Complex64>, separation: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("configuration needs at least one point".into()));
        }
        if points.iter().any(|p| !(p.re.is_finite() && p.im.is_finite())) {
            return Err(Error::Rejected("non-finite chart coordinate".into()));
        }
        let t = ConfigTuple { points };
        let sep = t.min_separation();
        if sep <= separation {
            return Err(Error::Rejected(format!(
                "points closer than the separation threshold ({sep:e})"
            )));
        }
        Ok(t)
    }

    pub fn from_chart(points: &[ChartPoint], separation: f64) -> Result<Self> {
        let pts = points
            .iter()
            .map(|p| p.z().map_err(|_| Error::Rejected("point at infinity".into())))
            .collect::<Result<Vec<_>>>()?;
        ConfigTuple::new(pts, separation)
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_separation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                m = m.min((a - b).norm());
            }
        }
        m
    }
}

/// Base point `m_k = ε·e^{2πik/n}`, `k = 1..n`.
pub fn base_tuple(n: usize, radius: f64) -> Result<ConfigTuple> {
    if n < 1 || !(radius > 0.0) {
        return Err(Error::Invalid(format!("base tuple needs n >= 1 and ε > 0 (got {n}, {radius})")));
    }
    let pts = (1..=n)
        .map(|k| Complex64::from_polar(radius, k as f64 * 2.0 * PI / n as f64))
        .collect();
    ConfigTuple::new(pts, 0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortPathMode {
    /// Coordinate-wise straight segments in the chart.
    #[default]
    Linear,
    /// Coordinate-wise minimal great-circle arcs.
    Geodesic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Inbound,
    Flow,
    Outbound,
    Custom,
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentKind::Inbound => "inbound",
            SegmentKind::Flow => "flow",
            SegmentKind::Outbound => "outbound",
            SegmentKind::Custom => "custom",
        })
    }
}

type PathFn = Arc<dyn Fn(f64) -> Vec<Complex64> + Send + Sync>;

#[derive(Clone)]
enum Path {
    Linear { from: Vec<Complex64>, to: Vec<Complex64> },
    Geodesic { from: Vec<Complex64>, to: Vec<Complex64> },
    Flow { spec: Arc<FlowSpec>, start: Vec<Complex64> },
    Custom(PathFn),
}

/// One parametrized piece of a loop, `s ∈ [0, 1]`.
#[derive(Clone)]
pub struct Segment {
    kind: SegmentKind,
    path: Path,
    reversed: bool,
}

impl fmt::Debug for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Segment")
            .field("kind", &self.kind)
            .field("reversed", &self.reversed)
            .finish()
    }
}

impl Segment {
    /// Arbitrary path `s ↦ points(s)` on `[0, 1]`, for hand-built loops.
    pub fn custom<F>(f: F) -> Segment
    where
        F: Fn(f64) -> Vec<Complex64> + Send + Sync + 'static,
    {
        Segment {
            kind: SegmentKind::Custom,
            path: Path::Custom(Arc::new(f)),
            reversed: false,
        }
    }

    pub fn kind(&self) -> SegmentKind {
        self.kind
    }

    pub fn reversed(mut self) -> Segment {
        self.reversed = !self.reversed;
        self
    }

    pub fn eval(&self, s: f64) -> Result<Vec<Complex64>> {
        let s = if self.reversed { 1.0 - s } else { s };
        match &self.path {
            Path::Linear { from, to } => Ok(from
                .iter()
                .zip(to)
                .map(|(a, b)| if s == 1.0 { *b } else { a + (b - a) * s })
                .collect()),
            Path::Geodesic { from, to } => from
                .iter()
                .zip(to)
                .map(|(a, b)| {
                    let p = geodesic_path(ChartPoint::finite(*a), ChartPoint::finite(*b), s)?;
                    p.z().map_err(|_| Error::Rejected("geodesic passes through infinity".into()))
                })
                .collect(),
            Path::Flow { spec, start } => {
                let t = s * spec.duration();
                Ok(start.iter().map(|&z| rotate(spec, t, z)).collect())
            }
            Path::Custom(f) => Ok(f(s)),
        }
    }

    fn initial_intervals(&self) -> usize {
        match &self.path {
            Path::Flow { spec, .. } => {
                let turns = spec.duration() * spec.max_rate();
                8 + (32.0 * turns).ceil() as usize
            }
            Path::Custom(_) => 64,
            _ => 8,
        }
    }
}

/// Minimum over `s ∈ [0, 1]` of `|d0 + s (d1 − d0)|`.
fn segment_distance_to_origin(d0: Complex64, d1: Complex64) -> f64 {
    let e = d1 - d0;
    let len2 = e.norm_sqr();
    if len2 == 0.0 {
        return d0.norm();
    }
    let s = (-(d0.re * e.re + d0.im * e.im) / len2).clamp(0.0, 1.0);
    (d0 + e * s).norm()
}

/// Short path from `from` to `to`. Linear paths are checked exactly for
/// passing through the diagonal.
pub fn short_path(
    from: &ConfigTuple,
    to: &ConfigTuple,
    mode: ShortPathMode,
    separation: f64,
) -> Result<Segment> {
    if from.len() != to.len() {
        return Err(Error::Invalid("short path endpoints have different sizes".into()));
    }
    let (a, b) = (from.points.clone(), to.points.clone());
    let path = match mode {
        ShortPathMode::Linear => {
            for i in 0..a.len() {
                for j in i + 1..a.len() {
                    let d = segment_distance_to_origin(a[i] - a[j], b[i] - b[j]);
                    if d <= separation {
                        return Err(Error::Rejected(format!(
                            "short path of strands {i} and {j} meets the diagonal"
                        )));
                    }
                }
            }
            Path::Linear { from: a, to: b }
        }
        ShortPathMode::Geodesic => {
            for (p, q) in a.iter().zip(&b) {
                let (p, q) = (ChartPoint::finite(*p), ChartPoint::finite(*q));
                geodesic_path(p, q, 0.5)?;
                // A minimal arc through [1, 0] leaves the chart.
                let pole = ChartPoint::infinity().to_sphere();
                let (u, v) = (p.to_sphere(), q.to_sphere());
                let cross = |x: [f64; 3], y: [f64; 3]| (x[0] - y[0]).hypot(x[1] - y[1]).hypot(x[2] - y[2]);
                let (du, dv, duv) = (cross(u, pole), cross(v, pole), cross(u, v));
                if (du + dv - duv).abs() < 1e-12 {
                    return Err(Error::Rejected("geodesic passes through infinity".into()));
                }
            }
            Path::Geodesic { from: a, to: b }
        }
    };
    Ok(Segment {
        kind: SegmentKind::Inbound,
        path,
        reversed: false,
    })
}

fn flow_segment(spec: &FlowSpec, start: &ConfigTuple) -> Segment {
    Segment {
        kind: SegmentKind::Flow,
        path: Path::Flow {
            spec: Arc::new(spec.clone()),
            start: start.points.clone(),
        },
        reversed: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopOptions {
    pub mode: ShortPathMode,
    pub separation: f64,
    pub max_angle_step: f64,
    pub max_samples: usize,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            mode: ShortPathMode::Linear,
            separation: DEFAULT_SEPARATION,
            max_angle_step: DEFAULT_MAX_ANGLE_STEP,
            max_samples: DEFAULT_MAX_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub segment: usize,
    pub s: f64,
    pub points: Vec<Complex64>,
}

/// A sampled closed loop in the configuration space.
#[derive(Clone, Debug)]
pub struct LoopTrace {
    segments: Vec<Segment>,
    samples: Vec<Sample>,
    strands: usize,
    duration: f64,
}

/// `arg(d1 / d0)` in `(−π, π]`.
fn angle_step(d0: Complex64, d1: Complex64) -> f64 {
    (d1 * d0.conj()).arg()
}

impl LoopTrace {
    /// Samples `segments` end to end with adaptive refinement. Consecutive
    /// segments must meet; the loop closes when the last segment ends where
    /// the first began.
    pub fn from_segments(segments: Vec<Segment>, opts: &LoopOptions) -> Result<Self> {
        let mut samples: Vec<Sample> = Vec::new();
        let mut strands = 0;
        for (idx, seg) in segments.iter().enumerate() {
            let m = seg.initial_intervals();
            let mut prev_s = 0.0;
            let mut prev = seg.eval(0.0)?;
            if idx == 0 {
                strands = prev.len();
            } else if prev.len() != strands {
                return Err(Error::Invalid("segments carry different numbers of strands".into()));
            }
            check_separation(&prev, opts.separation)?;
            samples.push(Sample {
                segment: idx,
                s: 0.0,
                points: prev.clone(),
            });
            for k in 1..=m {
                let s = k as f64 / m as f64;
                let cur = seg.eval(s)?;
                check_separation(&cur, opts.separation)?;
                refine(seg, idx, prev_s, &prev, s, &cur, opts, &mut samples, 0)?;
                samples.push(Sample {
                    segment: idx,
                    s,
                    points: cur.clone(),
                });
                if samples.len() > opts.max_samples {
                    return Err(Error::Refinement(format!(
                        "more than {} samples",
                        opts.max_samples
                    )));
                }
                prev = cur;
                prev_s = s;
            }
        }
        Ok(LoopTrace {
            segments,
            samples,
            strands,
            duration: 0.0,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn strands(&self) -> usize {
        self.strands
    }

    /// Flow duration carried by the loop (0 for hand-built loops).
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn start(&self) -> &[Complex64] {
        &self.samples[0].points
    }

    pub fn end(&self) -> &[Complex64] {
        &self.samples[self.samples.len() - 1].points
    }

    pub fn is_closed(&self) -> bool {
        self.start() == self.end()
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == j || i >= self.strands || j >= self.strands {
            return Err(Error::Invalid(format!("bad strand pair ({i}, {j})")));
        }
        Ok(())
    }

    /// Per-step relative angle changes of strands `i`, `j` over samples
    /// whose segment index is in `range`.
    fn angle_steps(&self, i: usize, j: usize, range: std::ops::Range<usize>) -> impl Iterator<Item = f64> + '_ {
        self.samples.windows(2).filter_map(move |w| {
            if !range.contains(&w[1].segment) {
                return None;
            }
            let d0 = w[0].points[i] - w[0].points[j];
            let d1 = w[1].points[i] - w[1].points[j];
            Some(angle_step(d0, d1))
        })
    }

    /// Signed number of turns of `z_i − z_j` along the loop.
    pub fn winding(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.angle_steps(i, j, 0..self.segments.len()).sum::<f64>() / (2.0 * PI))
    }

    /// Winding on the segments with indices in `range` only.
    pub fn winding_on(&self, i: usize, j: usize, range: std::ops::Range<usize>) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.angle_steps(i, j, range).sum::<f64>() / (2.0 * PI))
    }

    /// Total variation of `arg(z_i − z_j) / 2π` along the loop.
    pub fn total_angular_variation(&self, i: usize, j: usize) -> Result<f64> {
        self.total_angular_variation_on(i, j, 0..self.segments.len())
    }

    pub fn total_angular_variation_on(&self, i: usize, j: usize, range: std::ops::Range<usize>) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(self.angle_steps(i, j, range).map(f64::abs).sum::<f64>() / (2.0 * PI))
    }

    /// Lifted angle `arg(z_i − z_j) / 2π` at every sample.
    fn lifted_angle(&self, i: usize, j: usize) -> Vec<f64> {
        let d0 = self.samples[0].points[i] - self.samples[0].points[j];
        let mut theta = d0.arg() / (2.0 * PI);
        let mut out = Vec::with_capacity(self.samples.len());
        out.push(theta);
        for w in self.samples.windows(2) {
            let a = w[0].points[i] - w[0].points[j];
            let b = w[1].points[i] - w[1].points[j];
            theta += angle_step(a, b) / (2.0 * PI);
            out.push(theta);
        }
        out
    }

    /// Number of parameters where `(z_i − z_j)/|z_i − z_j| = ω`.
    pub fn crossing_count(&self, i: usize, j: usize, omega: Complex64) -> Result<usize> {
        self.check_pair(i, j)?;
        let level = omega.arg() / (2.0 * PI);
        let theta = self.lifted_angle(i, j);
        let tol = 1e-12;
        let mut count = 0i64;
        for (k, &t) in theta.iter().enumerate() {
            let x = t - level;
            if (x - x.round()).abs() < tol {
                return Err(Error::Degenerate(format!(
                    "sample {k} lies on the direction ω within tolerance"
                )));
            }
        }
        for w in theta.windows(2) {
            count += ((w[1] - level).floor() - (w[0] - level).floor()).abs() as i64;
        }
        Ok(count as usize)
    }

    /// Located times of the crossings counted by [`crossing_count`], as
    /// `(segment, s)` pairs.
    ///
    /// [`crossing_count`]: LoopTrace::crossing_count
    pub fn crossing_times(&self, i: usize, j: usize, omega: Complex64) -> Result<Vec<(usize, f64)>> {
        self.check_pair(i, j)?;
        let rot = omega.conj();
        let mut out = Vec::new();
        for w in self.samples.windows(2) {
            if w[0].segment != w[1].segment {
                continue;
            }
            let f0 = rot * (w[0].points[i] - w[0].points[j]);
            let f1 = rot * (w[1].points[i] - w[1].points[j]);
            if f0.im == 0.0 || f1.im == 0.0 {
                return Err(Error::Degenerate("sample on the crossing line".into()));
            }
            if (f0.im > 0.0) != (f1.im > 0.0) && f0.re > 0.0 && f1.re > 0.0 {
                let seg = &self.segments[w[0].segment];
                let s = locate(seg, w[0].s, w[1].s, |p| (rot * (p[i] - p[j])).im)?;
                out.push((w[0].segment, s));
            }
        }
        Ok(out)
    }

    /// Braid word read off the projection along `ω`: strands are ordered by
    /// `Im(ω̄ z)` and crossings happen exactly when `z_i − z_j` is parallel
    /// to `±ω`. A letter is positive when the strand moving down in the
    /// order has the smaller depth `Re(ω̄ z)`; counterclockwise relative
    /// rotation gives positive letters.
    pub fn extract_braid(&self, omega: Complex64) -> Result<BraidWord> {
        let n = self.strands;
        let rot = omega.conj();
        let pos = |z: Complex64| (rot * z).im;
        let depth = |z: Complex64| (rot * z).re;
        let start = &self.samples[0].points;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| pos(start[a]).total_cmp(&pos(start[b])));
        for w in order.windows(2) {
            if (pos(start[w[1]]) - pos(start[w[0]])).abs() <= 1e-12 {
                return Err(Error::Degenerate("two strands start at the same height".into()));
            }
        }
        let initial = order.clone();
        let mut slot = vec![0usize; n];
        for (p, &s) in order.iter().enumerate() {
            slot[s] = p;
        }
        let mut word = BraidWord::identity(n);
        let mut events: Vec<(f64, usize, usize)> = Vec::new();
        for w in self.samples.windows(2) {
            if w[0].segment != w[1].segment {
                continue;
            }
            let seg = &self.segments[w[0].segment];
            events.clear();
            for i in 0..n {
                for j in i + 1..n {
                    let f0 = pos(w[0].points[i]) - pos(w[0].points[j]);
                    let f1 = pos(w[1].points[i]) - pos(w[1].points[j]);
                    if f0 == 0.0 || f1 == 0.0 {
                        return Err(Error::Degenerate("sample on a crossing".into()));
                    }
                    if (f0 > 0.0) != (f1 > 0.0) {
                        let s = locate(seg, w[0].s, w[1].s, |p| pos(p[i]) - pos(p[j]))?;
                        events.push((s, i, j));
                    }
                }
            }
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            let width = w[1].s - w[0].s;
            for e in events.windows(2) {
                if e[1].0 - e[0].0 <= 1e-9 * width.max(1e-300) {
                    return Err(Error::Degenerate("simultaneous crossings".into()));
                }
            }
            for &(s, i, j) in &events {
                let (lo, hi) = if slot[i] < slot[j] { (i, j) } else { (j, i) };
                if slot[hi] != slot[lo] + 1 {
                    return Err(Error::Degenerate("crossing strands are not adjacent".into()));
                }
                let p = seg.eval(s)?;
                let dd = depth(p[hi]) - depth(p[lo]);
                if dd.abs() <= 1e-12 * (1.0 + p[hi].norm() + p[lo].norm()) {
                    return Err(Error::Degenerate("crossing strands coincide in depth".into()));
                }
                let sign = if dd < 0.0 { 1 } else { -1 };
                word.push(Letter::new(slot[lo] + 1, sign));
                slot.swap(lo, hi);
                order.swap(slot[lo], slot[hi]);
            }
        }
        if order != initial {
            return Err(Error::Internal(
                "strand order at the end of the loop differs from the start".into(),
            ));
        }
        if !word.is_pure() {
            return Err(Error::Internal("extracted word is not a pure braid".into()));
        }
        Ok(word)
    }

    /// [`extract_braid`](LoopTrace::extract_braid), retrying with slightly
    /// rotated directions on degeneracy. The perturbation sequence is fixed,
    /// so the result depends only on the loop and `omega`.
    pub fn extract_braid_retrying(&self, omega: Complex64, retries: usize) -> Result<(BraidWord, Complex64)> {
        let mut last = None;
        for k in 0..=retries {
            // Golden-ratio offsets in (−1e-3, 1e-3) never repeat.
            let shift = if k == 0 { 0.0 } else { 2e-3 * ((k as f64 * 0.618_033_988_749_895).fract() - 0.5) };
            let w = omega * Complex64::from_polar(1.0, shift);
            match self.extract_braid(w) {
                Ok(word) => return Ok((word, w)),
                Err(e @ Error::Degenerate(_)) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Debug dump with columns `segment,t,strand,re,im`; `t` is the
    /// segment-local parameter in `[0, 1]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment,t,strand,re,im\n");
        for s in &self.samples {
            let kind = self.segments[s.segment].kind;
            for (k, z) in s.points.iter().enumerate() {
                let _ = writeln!(out, "{kind},{},{k},{},{}", s.s, z.re, z.im);
            }
        }
        out
    }
}

fn check_separation(points: &[Complex64], separation: f64) -> Result<()> {
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            if (a - b).norm() <= separation {
                return Err(Error::Rejected("strands collide along the loop".into()));
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn refine(
    seg: &Segment,
    idx: usize,
    s0: f64,
    p0: &[Complex64],
    s1: f64,
    p1: &[Complex64],
    opts: &LoopOptions,
    samples: &mut Vec<Sample>,
    depth: usize,
) -> Result<()> {
    if !needs_split(p0, p1, opts.max_angle_step) {
        return Ok(());
    }
    let mid = 0.5 * (s0 + s1);
    if depth > 60 || !(mid > s0 && mid < s1) {
        return Err(Error::Refinement("angle step does not shrink under refinement".into()));
    }
    if samples.len() > opts.max_samples {
        return Err(Error::Refinement(format!("more than {} samples", opts.max_samples)));
    }
    let pm = seg.eval(mid)?;
    check_separation(&pm, opts.separation)?;
    refine(seg, idx, s0, p0, mid, &pm, opts, samples, depth + 1)?;
    samples.push(Sample {
        segment: idx,
        s: mid,
        points: pm.clone(),
    });
    refine(seg, idx, mid, &pm, s1, p1, opts, samples, depth + 1)
}

fn needs_split(p0: &[Complex64], p1: &[Complex64], max_step: f64) -> bool {
    let n = p0.len();
    for i in 0..n {
        let move_i = (p1[i] - p0[i]).norm();
        for j in i + 1..n {
            let d0 = p0[i] - p0[j];
            let d1 = p1[i] - p1[j];
            if angle_step(d0, d1).abs() > max_step {
                return true;
            }
            // Points must move little against their separation, so the
            // relative vector cannot wind between samples.
            let move_j = (p1[j] - p0[j]).norm();
            if move_i + move_j > 0.5 * d0.norm().min(d1.norm()) {
                return true;
            }
        }
    }
    false
}

/// Bisection for a sign change of `f(seg(s))` on `[a, b]` down to `1e-10`
/// in the segment parameter.
fn locate<F: Fn(&[Complex64]) -> f64>(seg: &Segment, mut a: f64, mut b: f64, f: F) -> Result<f64> {
    let mut fa = f(&seg.eval(a)?);
    while b - a > 1e-10 {
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            break;
        }
        let fm = f(&seg.eval(m)?);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// `l(x) = γ(x) # {φ_t x} # γ(φ_T x)⁻¹` based at `base`.
pub fn build_loop(spec: &FlowSpec, x: &ConfigTuple, base: &ConfigTuple, opts: &LoopOptions) -> Result<LoopTrace> {
    if x.len() != base.len() {
        return Err(Error::Invalid("configuration and base point sizes differ".into()));
    }
    let inbound = short_path(base, x, opts.mode, opts.separation)?;
    let end_pts: Vec<Complex64> = x.points.iter().map(|&z| rotate(spec, spec.duration(), z)).collect();
    let end = ConfigTuple::new(end_pts, opts.separation)?;
    let mut outbound = short_path(base, &end, opts.mode, opts.separation)?.reversed();
    outbound.kind = SegmentKind::Outbound;
    let mut trace = LoopTrace::from_segments(vec![inbound, flow_segment(spec, x), outbound], opts)?;
    trace.duration = spec.duration();
    Ok(trace)
}
