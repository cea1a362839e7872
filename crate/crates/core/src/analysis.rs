//! Deterministic quadrature counterparts of the Monte Carlo experiments: the
//! closed formula for the homogenized signature quasimorphisms of radial
//! flows, the `ψ₀` integral, and the bi-Lipschitz embedding bounds.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{lp_length, Component, Exponent, FlowSpec};
use crate::profile::RadialProfile;
use crate::quad::{integrate_breaks, integrate_to_infinity, QuadOptions};

/// `(n/2)∫_{−1}^{1} (u^{2n−1} − u) ω̃(u) du`, the homogenized signature
/// quasimorphism on `2n` points of the unit-time flow of `profile`.
pub fn gg_rhs(profile: &RadialProfile, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Invalid(format!("gg_rhs needs n >= 2, got {n}")));
    }
    let k = 2 * n as i32 - 1;
    let scale = profile
        .area_breakpoints()
        .iter()
        .map(|&u| profile.value_at_area_coordinate(u).abs())
        .fold(profile.tail_value().abs(), f64::max);
    let opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-15 * scale.max(1e-300),
        ..QuadOptions::default()
    };
    let est = integrate_breaks(
        |u| (u.powi(k) - u) * profile.value_at_area_coordinate(u),
        &profile.area_breakpoints(),
        opts,
    )?;
    Ok(0.5 * n as f64 * est.value)
}

/// [`gg_rhs`] for a composite flow: linear in the weights and the duration.
pub fn gg_rhs_flow(spec: &FlowSpec, n: usize) -> Result<f64> {
    let mut acc = 0.0;
    for c in spec.components() {
        acc += c.weight * gg_rhs(&c.profile, n)?;
    }
    Ok(acc * spec.duration())
}

/// `∫_0^∞ dρ / ((ρ − b)² + d)²`.
fn inner_radial(b: f64, d: f64, tol: f64) -> Result<f64> {
    let f = |rho: f64| {
        let x = rho - b;
        let q = x * x + d;
        1.0 / (q * q)
    };
    let opts = QuadOptions::with_rel(tol);
    let split = b.max(0.0);
    let head = if split > 0.0 {
        integrate_breaks(f, &[0.0, split], opts)?.value
    } else {
        0.0
    };
    Ok(head + integrate_to_infinity(f, split, opts)?.value)
}

/// `ψ₀(a) = ∫_ℂ |z − a|⁻¹ (1 + |z|²)⁻² dm(z)`.
///
/// Polar coordinates centred at `a` cancel the singularity:
/// `ψ₀ = 2∫_0^π ∫_0^∞ ((ρ − B)² + D)⁻² dρ dψ` with `B = |a| cos ψ`,
/// `D = 1 + |a|² sin² ψ`, the angle measured from the direction of `a`.
pub fn psi0(a: Complex64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    let r = a.norm();
    if !r.is_finite() {
        return Err(Error::Invalid("ψ₀ needs a finite point".into()));
    }
    // The angular profile has width about 1/|a| around ψ = 0.
    let mut breaks = vec![0.0];
    if r > 1.0 {
        for k in [1.0, 4.0, 16.0, 64.0] {
            let b = k / r;
            if b < PI {
                breaks.push(b);
            }
        }
    }
    breaks.push(PI);
    let mut failure = None;
    let est = integrate_breaks(
        |psi| {
            let (s, c) = psi.sin_cos();
            match inner_radial(r * c, 1.0 + r * r * s * s, 0.1 * tol) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &breaks,
        QuadOptions::with_rel(tol),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(2.0 * est.value)
}

/// `ψ = 2(|a|² + 1)ψ₀`.
pub fn psi_from_psi0(abs_a: f64, psi0: f64) -> f64 {
    2.0 * (abs_a * abs_a + 1.0) * psi0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiRow {
    pub abs_a: f64,
    pub psi0: f64,
    /// `ψ₀(a)(1 + |a|²)^{1/2}`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiScan {
    pub rows: Vec<PsiRow>,
    pub c_star: f64,
    pub argmax: f64,
    /// `max ψ₀` over `|a| ≤ 1`.
    pub c1: f64,
    /// `max ψ₀·|a|` over `|a| ≥ 1`.
    pub c2: f64,
}

/// Grid `0` followed by `10^{k/10}` for `k = −20..=30`.
pub fn default_psi_grid() -> Vec<f64> {
    std::iter::once(0.0).chain((-20..=30).map(|k| 10f64.powf(k as f64 / 10.0))).collect()
}

pub fn psi0_bound_scan(grid: &[f64], tol: f64) -> Result<PsiScan> {
    if grid.is_empty() {
        return Err(Error::Invalid("ψ₀ scan grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    let (mut c_star, mut argmax, mut c1, mut c2) = (f64::MIN, 0.0, 0.0f64, 0.0f64);
    for &r in grid {
        if !(r >= 0.0) {
            return Err(Error::Invalid(format!("grid value {r} is not a modulus")));
        }
        let v = psi0(Complex64::new(r, 0.0), tol)?;
        let ratio = v * (1.0 + r * r).sqrt();
        if ratio > c_star {
            c_star = ratio;
            argmax = r;
        }
        if r <= 1.0 {
            c1 = c1.max(v);
        }
        if r >= 1.0 {
            c2 = c2.max(v * r);
        }
        rows.push(PsiRow { abs_a: r, psi0: v, ratio });
    }
    Ok(PsiScan {
        rows,
        c_star,
        argmax,
        c1,
        c2,
    })
}

/// Concentric annuli with area-coordinate intervals
/// `[−1 + 2k/(d+1), −1 + (2k+1)/(d+1))`, `k = 1..=d`, unit height.
pub fn default_annuli(d: usize) -> Result<Vec<RadialProfile>> {
    if d == 0 {
        return Err(Error::Invalid("embedding dimension must be positive".into()));
    }
    let h = 1.0 / (d + 1) as f64;
    (1..=d)
        .map(|k| {
            let lo = -1.0 + 2.0 * k as f64 * h;
            RadialProfile::annulus(1.0, lo, lo + h)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignMatrix {
    pub d: usize,
    /// `m[n−1][i]`: quasimorphism on `2n + 2` points of profile `i`.
    pub m: Vec<Vec<f64>>,
    pub determinant: f64,
    /// Determinant after scaling every row to unit Euclidean norm.
    pub normalized_determinant: f64,
    pub condition_number: f64,
    /// `coefficients[i][n−1]` so that `Φ̄_i = Σ_n c_{in}·Sign_{2n+2}`.
    pub coefficients: Vec<Vec<f64>>,
    /// `max |C·M − I|`.
    pub residual: f64,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn sign_matrix(profiles: &[RadialProfile]) -> Result<SignMatrix> {
    let d = profiles.len();
    if d == 0 {
        return Err(Error::Invalid("need at least one profile".into()));
    }
    for i in 0..d {
        for j in i + 1..d {
            if !profiles[i].disjoint_from(&profiles[j]) {
                return Err(Error::Invalid(format!("profiles {i} and {j} overlap")));
            }
        }
    }
    let mut m = DMatrix::<f64>::zeros(d, d);
    for n in 1..=d {
        for (i, p) in profiles.iter().enumerate() {
            m[(n - 1, i)] = gg_rhs(p, n + 1)?;
        }
    }
    let determinant = m.clone().lu().determinant();
    let mut normalized = m.clone();
    for mut row in normalized.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let normalized_determinant = normalized.lu().determinant();
    if !(normalized_determinant.abs() > 1e-12) {
        return Err(Error::Singular(normalized_determinant));
    }
    let sv = m.clone().singular_values();
    let condition_number = sv.max() / sv.min();
    let inv = m.clone().try_inverse().ok_or(Error::Singular(normalized_determinant))?;
    let residual = (&inv * &m - DMatrix::<f64>::identity(d, d)).amax();
    Ok(SignMatrix {
        d,
        m: to_rows(&m),
        determinant,
        normalized_determinant,
        condition_number,
        coefficients: to_rows(&inv),
        residual,
    })
}

/// `I(v)`: unit-time flow generated by `Σ vᵢ ωᵢ`.
pub fn embedding_flow(profiles: &[RadialProfile], v: &[f64]) -> Result<FlowSpec> {
    if profiles.len() != v.len() {
        return Err(Error::Invalid("vector length differs from the number of profiles".into()));
    }
    let components = profiles
        .iter()
        .zip(v)
        .map(|(p, &w)| Component {
            profile: p.clone(),
            weight: w,
        })
        .collect();
    FlowSpec::new(components, 1.0)
}

/// `Φ̄ᵢ(spec)` from the quadrature values of the signature quasimorphisms.
pub fn phi_bar_components(matrix: &SignMatrix, spec: &FlowSpec) -> Result<Vec<f64>> {
    let signs = (1..=matrix.d).map(|n| gg_rhs_flow(spec, n + 1)).collect::<Result<Vec<f64>>>()?;
    Ok(matrix
        .coefficients
        .iter()
        .map(|c| c.iter().zip(&signs).map(|(a, b)| a * b).sum())
        .collect())
}

/// `max_{v, i} |Φ̄ᵢ(I(v))| / ‖I(v)‖_p` over `vectors` and the basis vectors.
pub fn lipschitz_constant(profiles: &[RadialProfile], matrix: &SignMatrix, vectors: &[Vec<f64>], p: Exponent) -> Result<f64> {
    let d = profiles.len();
    let basis = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>());
    let mut best: f64 = 0.0;
    for v in basis.chain(vectors.iter().cloned()) {
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        let f = embedding_flow(profiles, &v)?;
        let len = lp_length(&f, p, QuadOptions::default())?;
        let phi = phi_bar_components(matrix, &f)?;
        best = phi.iter().fold(best, |acc, x| acc.max(x.abs() / len));
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub v: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    /// `upper / lower`, absent for `v = 0`.
    pub ratio: Option<f64>,
}

/// Lower and upper bounds for `‖I(v)‖_p`: `maxᵢ|Φ̄ᵢ(I(v))| / Â` and
/// `Σᵢ |vᵢ|·‖f_{ωᵢ}‖_p`.
pub fn embedding_bounds(
    profiles: &[RadialProfile],
    matrix: &SignMatrix,
    v: &[f64],
    p: Exponent,
    lipschitz: f64,
) -> Result<Bounds> {
    if !(lipschitz > 0.0) {
        return Err(Error::Invalid(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    let f = embedding_flow(profiles, v)?;
    let phi = phi_bar_components(matrix, &f)?;
    let lower = phi.iter().fold(0.0f64, |a, x| a.max(x.abs())) / lipschitz;
    let mut upper = 0.0;
    for (prof, &w) in profiles.iter().zip(v) {
        let unit = FlowSpec::single(prof.clone(), 1.0, 1.0)?;
        upper += w.abs() * lp_length(&unit, p, QuadOptions::default())?;
    }
    let ratio = (lower > 0.0).then(|| upper / lower);
    Ok(Bounds {
        v: v.to_vec(),
        lower,
        upper,
        ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub d: usize,
    pub p: f64,
    pub matrix: SignMatrix,
    pub lipschitz: f64,
    pub bounds: Vec<Bounds>,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `ratio_max / ratio_min`.
    pub ratio_spread: f64,
}

pub fn embedding_report(profiles: &[RadialProfile], vectors: &[Vec<f64>], p: Exponent) -> Result<EmbeddingReport> {
    let matrix = sign_matrix(profiles)?;
    let lipschitz = lipschitz_constant(profiles, &matrix, vectors, p)?;
    let bounds = vectors
        .iter()
        .map(|v| embedding_bounds(profiles, &matrix, v, p, lipschitz))
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = bounds.iter().filter_map(|b| b.ratio).collect();
    let ratio_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(EmbeddingReport {
        d: profiles.len(),
        p: match p {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        },
        matrix,
        lipschitz,
        bounds,
        ratio_min,
        ratio_max,
        ratio_spread: ratio_max / ratio_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Closed form of the radial integral.
    fn inner_closed(b: f64, d: f64) -> f64 {
        let c = b * b + d;
        PI / (4.0 * d.powf(1.5)) + b / (2.0 * d * c) + (b / d.sqrt()).atan() / (2.0 * d.powf(1.5))
    }

    #[test]
    fn gg_examples() {
        for n in 2..=5 {
            assert!(gg_rhs(&RadialProfile::constant(2.5), n).unwrap().abs() < 1e-13);
        }
        let step = RadialProfile::step_at_area_coordinate(1.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(gg_rhs(&step, 2).unwrap(), -9.0 / 64.0, max_relative = 1e-10);
        assert!(step.breakpoints().iter().any(|&r| (r - (1.0f64 / 3.0).sqrt()).abs() < 1e-14));
        // ω̃(u) = u via fine knots in r: compare with (n/2)(2/(2n+1) − 2/3).
        let knots: Vec<(f64, f64)> = (0..=4000)
            .map(|k| {
                let u = 1.0 - 2.0 * k as f64 / 4000.0;
                let u = u.clamp(-0.999_999, 1.0);
                (crate::chart::radius_of_area_coordinate(u), u)
            })
            .collect();
        let lin = RadialProfile::knots(&knots).unwrap();
        let n = 2.0;
        assert_relative_eq!(gg_rhs(&lin, 2).unwrap(), (n / 2.0) * (2.0 / (2.0 * n + 1.0) - 2.0 / 3.0), epsilon = 1e-4);
    }

    #[test]
    fn gg_is_linear_in_profiles() {
        let a = RadialProfile::annulus(1.0, -1.0 / 3.0, 0.0).unwrap();
        let b = RadialProfile::annulus(1.0, 1.0 / 3.0, 2.0 / 3.0).unwrap();
        let f = embedding_flow(&[a.clone(), b.clone()], &[2.0, -0.5]).unwrap();
        for n in 2..=4 {
            let sum = 2.0 * gg_rhs(&a, n).unwrap() - 0.5 * gg_rhs(&b, n).unwrap();
            assert_relative_eq!(gg_rhs_flow(&f, n).unwrap(), sum, max_relative = 1e-12);
        }
    }

    #[test]
    fn inner_integral_matches_closed_form() {
        for (b, d) in [(0.0, 1.0), (3.0, 1.5), (-2.0, 7.0), (50.0, 1.01), (1000.0, 1.0)] {
            assert_relative_eq!(inner_radial(b, d, 1e-12).unwrap(), inner_closed(b, d), max_relative = 1e-10);
        }
    }

    #[test]
    fn psi0_examples() {
        assert_relative_eq!(psi0(Complex64::new(0.0, 0.0), 1e-8).unwrap(), PI * PI / 2.0, max_relative = 1e-7);
        let a = psi0(Complex64::new(3.0, 0.0), 1e-8).unwrap();
        let b = psi0(Complex64::from_polar(3.0, 2.1), 1e-8).unwrap();
        assert_eq!(a, b);
        let far = psi0(Complex64::new(100.0, 0.0), 1e-8).unwrap();
        assert!((far * 100.0 / PI - 1.0).abs() < 0.02);
        // The angular integral of the closed-form inner integral is an
        // independent check of the outer quadrature.
        let r: f64 = 7.0;
        let m = 200_000;
        let h = PI / m as f64;
        let mid: f64 = (0..m)
            .map(|k| {
                let psi = (k as f64 + 0.5) * h;
                inner_closed(r * psi.cos(), 1.0 + r * r * psi.sin().powi(2))
            })
            .sum::<f64>()
            * h
            * 2.0;
        assert_relative_eq!(psi0(Complex64::new(r, 0.0), 1e-10).unwrap(), mid, max_relative = 1e-8);
        assert!(psi0(Complex64::new(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn psi_scan() {
        let grid = [0.0, 0.5, 1.0, 2.0, 10.0, 30.0, 100.0, 1000.0];
        let s = psi0_bound_scan(&grid, 1e-8).unwrap();
        assert_relative_eq!(s.rows[0].ratio, PI * PI / 2.0, max_relative = 1e-7);
        assert!(s.c_star.is_finite());
        assert!(s.c_star <= 2.0 * (PI * PI / 2.0).max(PI * 1.02));
        assert!(s.argmax < 10.0);
        // Decreasing towards π beyond |a| = 10.
        let tail: Vec<f64> = s.rows[4..].iter().map(|r| r.ratio).collect();
        assert!(tail.windows(2).all(|w| w[1] < w[0]));
        assert!(tail.iter().all(|&x| x > PI));
        for row in &s.rows {
            if row.abs_a <= 1.0 {
                assert!(row.psi0 <= s.c1);
            } else {
                assert!(row.psi0 * row.abs_a <= s.c2);
            }
        }
        assert!(psi0_bound_scan(&[], 1e-6).is_err());
    }

    #[test]
    fn matrix_examples() {
        let one = sign_matrix(&[RadialProfile::step_at_area_coordinate(1.0, 0.5, 0.0).unwrap()]).unwrap();
        assert_eq!(one.d, 1);
        assert_relative_eq!(one.m[0][0], -9.0 / 64.0, max_relative = 1e-10);
        assert_relative_eq!(one.coefficients[0][0], -64.0 / 9.0, max_relative = 1e-9);
        let two = sign_matrix(&default_annuli(2).unwrap()).unwrap();
        assert!(two.normalized_determinant.abs() > 1e-6);
        assert!(two.residual < 1e-10);
        assert!(sign_matrix(&[RadialProfile::constant(1.0), RadialProfile::constant(2.0)]).is_err());
    }

    #[test]
    fn bounds_examples() {
        let profiles = default_annuli(2).unwrap();
        let m = sign_matrix(&profiles).unwrap();
        let p = Exponent::Finite(3.0);
        let lip = lipschitz_constant(&profiles, &m, &[], p).unwrap();
        let zero = embedding_bounds(&profiles, &m, &[0.0, 0.0], p, lip).unwrap();
        assert_eq!((zero.lower, zero.upper, zero.ratio), (0.0, 0.0, None));
        for i in 0..2 {
            let mut e = vec![0.0; 2];
            e[i] = 1.0;
            let b = embedding_bounds(&profiles, &m, &e, p, lip).unwrap();
            assert_relative_eq!(b.lower, 1.0 / lip, max_relative = 1e-9);
            let unit = FlowSpec::single(profiles[i].clone(), 1.0, 1.0).unwrap();
            assert_eq!(b.upper, lp_length(&unit, p, QuadOptions::default()).unwrap());
            // Â is attained along some basis vector and the bounds sandwich the length.
            assert!(b.lower <= b.upper);
        }
        let v = [0.7, -1.3];
        let b1 = embedding_bounds(&profiles, &m, &v, p, lip).unwrap();
        let b2 = embedding_bounds(&profiles, &m, &[1.4, -2.6], p, lip).unwrap();
        assert_eq!(b2.lower, 2.0 * b1.lower);
        assert_eq!(b2.upper, 2.0 * b1.upper);
        let phi = phi_bar_components(&m, &embedding_flow(&profiles, &v).unwrap()).unwrap();
        assert_relative_eq!(phi[0], 0.7, max_relative = 1e-9);
        assert_relative_eq!(phi[1], -1.3, max_relative = 1e-9);
    }

    #[test]
    fn default_annuli_are_disjoint_and_compact() {
        for d in 1..=4 {
            let a = default_annuli(d).unwrap();
            for (i, p) in a.iter().enumerate() {
                assert!(p.is_compactly_supported());
                for q in &a[i + 1..] {
                    assert!(p.disjoint_from(q));
                }
            }
        }
    }
}
