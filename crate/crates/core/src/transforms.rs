//! Position-space profiles and their passage to momentum space.
//!
//! Radial profiles are closed-form where possible (bump, smoothstep-Coulomb
//! potential and its charge density) so that derivatives are exact; angular
//! factors are axisymmetric and stored by their `Y_l0` coefficients about an
//! axis. The spherical Bessel transform at order `l` and the dilation group
//! connect both sides.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modespace::{AngularTruncation, ModeFunction, RadialGrid};
use crate::quadrature::GaussLegendre;
use crate::special::{polar_angles, spherical_bessel_all, spherical_harmonic, zonal_harmonic};

/// Analytic or tabulated radial factor `p(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialProfile {
    Zero,
    /// `amplitude · exp(-1/(1-t²))`, `t = (r - c)/a` mapping `[r_lo, r_hi]` to `[-1, 1]`.
    Bump { r_lo: f64, r_hi: f64, amplitude: f64 },
    /// `amplitude · exp(-1/(1-(r/radius)²))`, smooth and nonzero at the origin.
    Ball { radius: f64, amplitude: f64 },
    /// `Φ(r) = s((r - r1)/(r2 - r1)) · q/(4πr)`.
    SmoothstepCoulomb { q: f64, r1: f64, r2: f64 },
    /// `-ΔΦ` of the smoothstep-Coulomb potential, supported in `[r1, r2]`.
    SmoothstepCharge { q: f64, r1: f64, r2: f64 },
    /// Samples on `r_start + j·step`, cubic interpolation in between.
    Tabulated { r_start: f64, step: f64, values: Vec<f64> },
    /// `factor · inner(r/lambda)`.
    Scaled { inner: Box<RadialProfile>, lambda: f64, factor: f64 },
    /// `-(p'' + 2p'/r)` of the inner profile.
    NegLaplacian { inner: Box<RadialProfile> },
    Sum { terms: Vec<RadialProfile> },
}

/// `φ(t) = e^{-1/t}` and its first two derivatives, zero for `t ≤ 0`.
fn exp_flank(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [0.0; 3];
    }
    let a = (-1.0 / t).exp();
    let t2 = t * t;
    [a, a / t2, a * (1.0 / (t2 * t2) - 2.0 / (t2 * t))]
}

/// Smooth step `s(t) = φ(t)/(φ(t)+φ(1-t))` with `s`, `s'`, `s''`.
pub fn smoothstep(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [0.0; 3];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let [a, a1, a2] = exp_flank(t);
    let [b, bm1, bm2] = exp_flank(1.0 - t);
    let (b1, b2) = (-bm1, bm2);
    let d = a + b;
    let n = a1 * b - a * b1;
    let n1 = a2 * b - a * b2;
    let s = a / d;
    let s1 = n / (d * d);
    let s2 = n1 / (d * d) - 2.0 * n * (a1 + b1) / (d * d * d);
    [s, s1, s2]
}

impl RadialProfile {
    pub fn bump(r_lo: f64, r_hi: f64, amplitude: f64) -> Result<Self> {
        if !(r_lo >= 0.0 && r_hi > r_lo && r_hi.is_finite()) {
            return Err(Error::InvalidProfile(format!("degenerate bump interval [{r_lo}, {r_hi}]")));
        }
        Ok(Self::Bump { r_lo, r_hi, amplitude })
    }

    pub fn ball(radius: f64, amplitude: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidProfile(format!("ball radius {radius} must be positive")));
        }
        Ok(Self::Ball { radius, amplitude })
    }

    pub fn smoothstep_coulomb(q: f64, r1: f64, r2: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > r1 && r2.is_finite()) {
            return Err(Error::InvalidProfile(format!("need 0 < r1 < r2, got ({r1}, {r2})")));
        }
        Ok(Self::SmoothstepCoulomb { q, r1, r2 })
    }

    pub fn tabulated(r_start: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !(r_start >= 0.0 && step > 0.0) || values.len() < 4 {
            return Err(Error::InvalidProfile("tabulated profile needs step > 0 and four samples".into()));
        }
        Ok(Self::Tabulated { r_start, step, values })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::Scaled { inner: Box::new(self.clone()), lambda: 1.0, factor }
    }

    pub fn sum(terms: Vec<RadialProfile>) -> Self {
        Self::Sum { terms }
    }

    /// `p(r/λ) · λ^{power}`.
    pub fn dilated(&self, lambda: f64, power: f64) -> Self {
        Self::Scaled { inner: Box::new(self.clone()), lambda, factor: lambda.powf(power) }
    }

    /// Tag of a closed-form profile.
    pub fn closed_form(&self) -> Option<&'static str> {
        match self {
            Self::Bump { .. } => Some("bump"),
            Self::Ball { .. } => Some("ball"),
            Self::SmoothstepCoulomb { .. } => Some("smoothstep_coulomb"),
            Self::SmoothstepCharge { .. } => Some("smoothstep_charge"),
            _ => None,
        }
    }

    /// Closed support `[lo, hi]`; `hi` is infinite for the Coulomb tail.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Zero => (0.0, 0.0),
            Self::Bump { r_lo, r_hi, .. } => (*r_lo, *r_hi),
            Self::Ball { radius, .. } => (0.0, *radius),
            Self::SmoothstepCoulomb { r1, .. } => (*r1, f64::INFINITY),
            Self::SmoothstepCharge { r1, r2, .. } => (*r1, *r2),
            Self::Tabulated { r_start, step, values } => {
                (*r_start, r_start + step * (values.len() - 1) as f64)
            }
            Self::Scaled { inner, lambda, .. } => {
                let (a, b) = inner.support();
                (a * lambda, b * lambda)
            }
            Self::NegLaplacian { inner } => match **inner {
                Self::SmoothstepCoulomb { r1, r2, .. } => (r1, r2),
                _ => inner.support(),
            },
            Self::Sum { terms } => {
                let live: Vec<_> = terms.iter().filter(|t| !t.is_zero()).map(|t| t.support()).collect();
                if live.is_empty() {
                    return (0.0, 0.0);
                }
                let lo = live.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
                let hi = live.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Sum { terms } => terms.iter().all(|t| t.is_zero()),
            Self::Scaled { inner, factor, .. } => *factor == 0.0 || inner.is_zero(),
            _ => false,
        }
    }

    /// Points where the profile changes analytic form, inside the support.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match self {
            Self::SmoothstepCoulomb { r1, r2, .. } | Self::SmoothstepCharge { r1, r2, .. } => vec![*r1, *r2],
            Self::Scaled { inner, lambda, .. } => inner.breakpoints().iter().map(|b| b * lambda).collect(),
            Self::NegLaplacian { inner } => inner.breakpoints(),
            Self::Sum { terms } => terms.iter().flat_map(|t| t.breakpoints()).collect(),
            _ => vec![],
        };
        let (lo, hi) = self.support();
        out.push(lo);
        if hi.is_finite() {
            out.push(hi);
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1.0));
        out
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivatives(r)[0]
    }

    /// `[p(r), p'(r), p''(r)]`.
    pub fn derivatives(&self, r: f64) -> [f64; 3] {
        match self {
            Self::Zero => [0.0; 3],
            Self::Bump { r_lo, r_hi, amplitude } => {
                bump_derivatives((r - 0.5 * (r_lo + r_hi)) / (0.5 * (r_hi - r_lo)), 0.5 * (r_hi - r_lo), *amplitude)
            }
            Self::Ball { radius, amplitude } => bump_derivatives(r / radius, *radius, *amplitude),
            Self::SmoothstepCoulomb { q, r1, r2 } => {
                if r <= *r1 {
                    return [0.0; 3];
                }
                let d = r2 - r1;
                let [s, s1, s2] = smoothstep((r - r1) / d);
                let c = q / (4.0 * PI);
                [
                    c * s / r,
                    c * (s1 / (d * r) - s / (r * r)),
                    c * (s2 / (d * d * r) - 2.0 * s1 / (d * r * r) + 2.0 * s / (r * r * r)),
                ]
            }
            Self::SmoothstepCharge { q, r1, r2 } => {
                let d = r2 - r1;
                let f = |x: f64| {
                    if x <= *r1 || x >= *r2 {
                        0.0
                    } else {
                        -q * smoothstep((x - r1) / d)[2] / (4.0 * PI * d * d * x)
                    }
                };
                let v = f(r);
                let [_, d1, d2] = finite_differences(&f, r, 1e-3 * d);
                [v, d1, d2]
            }
            Self::Tabulated { r_start, step, values } => tabulated_derivatives(*r_start, *step, values, r),
            Self::Scaled { inner, lambda, factor } => {
                let [v, d1, d2] = inner.derivatives(r / lambda);
                [factor * v, factor * d1 / lambda, factor * d2 / (lambda * lambda)]
            }
            Self::NegLaplacian { inner } => {
                let f = |x: f64| {
                    if x <= 0.0 {
                        return 0.0;
                    }
                    let [_, p1, p2] = inner.derivatives(x);
                    -(p2 + 2.0 * p1 / x)
                };
                let (lo, hi) = self.support();
                let h = 1e-3 * if hi.is_finite() { hi - lo } else { lo.max(1.0) };
                let v = f(r);
                let [_, d1, d2] = finite_differences(&f, r, h);
                [v, d1, d2]
            }
            Self::Sum { terms } => terms.iter().fold([0.0; 3], |acc, t| {
                let d = t.derivatives(r);
                [acc[0] + d[0], acc[1] + d[1], acc[2] + d[2]]
            }),
        }
    }

    pub fn samples(&self, rs: &[f64]) -> Vec<f64> {
        rs.iter().map(|&r| self.value(r)).collect()
    }

    /// `∫ p(r) r^power dr` over the (compact) support.
    pub fn radial_moment(&self, power: i32) -> Result<f64> {
        let quad = RadialQuadrature::for_profile(self, 0.0)?;
        Ok(quad.r.iter().zip(&quad.w).map(|(&r, &w)| w * self.value(r) * r.powi(power - 2)).sum())
    }

    /// `∫ p d³x = 4π ∫ p r² dr` for a rotation-invariant profile.
    pub fn volume_integral(&self) -> Result<f64> {
        Ok(4.0 * PI * self.radial_moment(2)?)
    }
}

/// `exp(-1/(1-t²))` and its derivatives with respect to `r = c + a t`.
fn bump_derivatives(t: f64, a: f64, amplitude: f64) -> [f64; 3] {
    if t.abs() >= 1.0 {
        return [0.0; 3];
    }
    let u = 1.0 - t * t;
    let psi = amplitude * (-1.0 / u).exp();
    [psi, psi * (-2.0 * t / (u * u)) / a, psi * (6.0 * t.powi(4) - 2.0) / u.powi(4) / (a * a)]
}

/// 5-point central differences for `f'` and `f''`.
fn finite_differences<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> [f64; 3] {
    let (fm2, fm1, f0, fp1, fp2) = (f(x - 2.0 * h), f(x - h), f(x), f(x + h), f(x + 2.0 * h));
    let d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    let d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
    [f0, d1, d2]
}

fn tabulated_derivatives(r0: f64, step: f64, values: &[f64], r: f64) -> [f64; 3] {
    let n = values.len();
    let x = (r - r0) / step;
    if x < 0.0 || x > (n - 1) as f64 {
        return [0.0; 3];
    }
    let at = |j: i64| -> f64 {
        if j < 0 || j >= n as i64 {
            0.0
        } else {
            values[j as usize]
        }
    };
    let node_d = |j: i64| -> [f64; 3] {
        let (m2, m1, c, p1, p2) = (at(j - 2), at(j - 1), at(j), at(j + 1), at(j + 2));
        [
            c,
            (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * step),
            (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * step * step),
        ]
    };
    let j = (x.floor() as i64).clamp(1, n as i64 - 3);
    let t = x - j as f64;
    // cubic Lagrange through nodes j-1..j+2 at local offsets -1, 0, 1, 2
    let basis = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let mut out = [0.0; 3];
    for (k, b) in basis.iter().enumerate() {
        let d = node_d(j - 1 + k as i64);
        for q in 0..3 {
            out[q] += b * d[q];
        }
    }
    out
}

/// `-(Φ'' + (2/r)Φ')` as a profile.
pub fn laplacian_radial(phi: &RadialProfile) -> Result<RadialProfile> {
    match phi {
        RadialProfile::Zero => Ok(RadialProfile::Zero),
        RadialProfile::SmoothstepCoulomb { q, r1, r2 } => {
            Ok(RadialProfile::SmoothstepCharge { q: *q, r1: *r1, r2: *r2 })
        }
        RadialProfile::Scaled { inner, lambda, factor } => Ok(RadialProfile::Scaled {
            inner: Box::new(laplacian_radial(inner)?),
            lambda: *lambda,
            factor: factor / (lambda * lambda),
        }),
        RadialProfile::Sum { terms } => {
            Ok(RadialProfile::Sum { terms: terms.iter().map(laplacian_radial).collect::<Result<_>>()? })
        }
        other => {
            let (lo, _) = other.support();
            if lo <= 0.0 {
                let [v, d1, _] = other.derivatives(0.0);
                let [v1, _, _] = other.derivatives(1e-12);
                if v != 0.0 || d1 != 0.0 || v1 != 0.0 {
                    return Err(Error::InvalidProfile(
                        "r = 0 lies in the support and no regularity data is available".into(),
                    ));
                }
            }
            Ok(RadialProfile::NegLaplacian { inner: Box::new(other.clone()) })
        }
    }
}

/// Axisymmetric function on the sphere, `Σ_l χ_l Y_l0` in a frame whose
/// polar axis is `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularFunction {
    pub coeffs: Vec<f64>,
    pub axis: [f64; 3],
}

pub const Z_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

/// Result of a Legendre analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularExpansion {
    pub function: AngularFunction,
    /// Largest `|χ_l|` over the top quarter of orders relative to the largest
    /// coefficient overall.
    pub tail_ratio: f64,
    pub aliasing_warning: bool,
}

pub const ALIASING_TOLERANCE: f64 = 1e-8;

impl AngularFunction {
    pub fn new(coeffs: Vec<f64>, axis: [f64; 3]) -> Result<Self> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidCone("axis must be a nonzero vector".into()));
        }
        Ok(Self { coeffs, axis: [axis[0] / n, axis[1] / n, axis[2] / n] })
    }

    /// The constant function `c`.
    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c * (4.0 * PI).sqrt()], axis: Z_AXIS }
    }

    pub fn l_max(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coefficient(&self, l: usize) -> f64 {
        self.coeffs.get(l).copied().unwrap_or(0.0)
    }

    /// Value at polar angle `ϑ` from the axis, given `cos ϑ`.
    pub fn evaluate(&self, cos_theta: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(l, c)| c * zonal_harmonic(l, cos_theta)).sum()
    }

    pub fn evaluate_direction(&self, v: [f64; 3]) -> f64 {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let c = (v[0] * self.axis[0] + v[1] * self.axis[1] + v[2] * self.axis[2]) / n;
        self.evaluate(c)
    }

    /// Multiplies `χ_l` by `l(l+1)`.
    pub fn apply_l2(&self) -> Self {
        let coeffs = self.coeffs.iter().enumerate().map(|(l, c)| c * (l * (l + 1)) as f64).collect();
        Self { coeffs, axis: self.axis }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * s).collect(), axis: self.axis }
    }

    /// `‖χ‖²_{L²(S²)} = Σ χ_l²`.
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `∫ χ dΩ = √(4π) χ_0`.
    pub fn integral(&self) -> f64 {
        (4.0 * PI).sqrt() * self.coefficient(0)
    }

    /// Complex `Y_lm` coefficients about the laboratory `z` axis:
    /// `a_lm = χ_l √(4π/(2l+1)) conj(Y_lm(axis))`.
    pub fn channel_coefficients(&self, trunc: AngularTruncation) -> Vec<Complex64> {
        let (theta, phi) = polar_angles(self.axis);
        let mut out = vec![Complex64::new(0.0, 0.0); trunc.channel_count()];
        for (l, m) in trunc.channels() {
            let c = self.coefficient(l);
            if c == 0.0 {
                continue;
            }
            let y = spherical_harmonic(l, m, theta, phi).conj();
            out[trunc.index(l, m)] = y * (c * (4.0 * PI / (2 * l + 1) as f64).sqrt());
        }
        out
    }
}

/// Legendre analysis of an axisymmetric function given as `f(cos ϑ)`, with
/// `2·l_max + 2` Gauss–Legendre nodes in `cos ϑ`.
pub fn angular_expand<F: Fn(f64) -> f64>(f: F, l_max: usize, axis: [f64; 3]) -> Result<AngularExpansion> {
    angular_expand_with(f, l_max, axis, 2 * l_max + 2)
}

pub fn angular_expand_with<F: Fn(f64) -> f64>(
    f: F,
    l_max: usize,
    axis: [f64; 3],
    nodes: usize,
) -> Result<AngularExpansion> {
    let rule = GaussLegendre::new(nodes.max(2 * l_max).max(2));
    let samples: Vec<(f64, f64, f64)> = rule.mapped(-1.0, 1.0).map(|(x, w)| (x, w, f(x))).collect();
    let coeffs: Vec<f64> = (0..=l_max)
        .map(|l| 2.0 * PI * samples.iter().map(|(x, w, v)| w * v * zonal_harmonic(l, *x)).sum::<f64>())
        .collect();
    let function = AngularFunction::new(coeffs, axis)?;
    let (tail_ratio, aliasing_warning) = tail_indicator(&function.coeffs);
    Ok(AngularExpansion { function, tail_ratio, aliasing_warning })
}

fn tail_indicator(coeffs: &[f64]) -> (f64, bool) {
    let peak = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if peak == 0.0 || coeffs.len() < 4 {
        return (0.0, false);
    }
    let start = coeffs.len() - coeffs.len() / 4;
    let tail = coeffs[start..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let ratio = tail / peak;
    (ratio, ratio > ALIASING_TOLERANCE)
}

/// Radial quadrature with `w` including the `r²` measure.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialQuadrature {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
}

const RADIAL_ORDER: usize = 16;
const MIN_PANELS: usize = 24;

impl RadialQuadrature {
    /// Composite Gauss–Legendre on `[lo, hi]` fine enough for kernels
    /// `j_l(k r)` with `k ≤ k_max`.
    pub fn on_interval(lo: f64, hi: f64, k_max: f64) -> Self {
        let rule = GaussLegendre::new(RADIAL_ORDER);
        let width = hi - lo;
        let panels = ((k_max * width / 2.0).ceil() as usize).max(MIN_PANELS);
        let step = width / panels as f64;
        let mut r = Vec::with_capacity(panels * RADIAL_ORDER);
        let mut w = Vec::with_capacity(panels * RADIAL_ORDER);
        for p in 0..panels {
            let a = lo + p as f64 * step;
            for (x, wx) in rule.mapped(a, a + step) {
                r.push(x);
                w.push(wx * x * x);
            }
        }
        Self { r, w }
    }

    /// Quadrature over the support of a compactly supported profile, split
    /// at its breakpoints.
    pub fn for_profile(p: &RadialProfile, k_max: f64) -> Result<Self> {
        let (lo, hi) = p.support();
        if !hi.is_finite() {
            return Err(Error::InvalidProfile("profile is not compactly supported".into()));
        }
        let mut out = Self { r: vec![], w: vec![] };
        if p.is_zero() || hi <= lo {
            return Ok(out);
        }
        for seg in p.breakpoints().windows(2) {
            let q = Self::on_interval(seg[0], seg[1], k_max);
            out.r.extend(q.r);
            out.w.extend(q.w);
        }
        Ok(out)
    }
}

/// `(-i)^l`.
pub fn minus_i_pow(l: usize) -> Complex64 {
    match l % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

/// Real Hankel integrals `√(2/π) Σ_j w_j v_l(r_j) j_l(k r_j)` for every `l`
/// with a profile row and every `k`; rows are indexed by `l`, `None` rows
/// yield zeros. Parallel over `k`.
pub fn hankel_rows(quad: &RadialQuadrature, rows: &[Option<Vec<f64>>], ks: &[f64]) -> Vec<Vec<f64>> {
    let lmax = rows.len().saturating_sub(1);
    let pref = (2.0 / PI).sqrt();
    let per_k: Vec<Vec<f64>> = ks
        .par_iter()
        .map(|&k| {
            let mut acc = vec![0.0; lmax + 1];
            let mut buf = vec![0.0; lmax + 1];
            for (j, (&r, &w)) in quad.r.iter().zip(&quad.w).enumerate() {
                spherical_bessel_all(k * r, &mut buf);
                for (l, row) in rows.iter().enumerate() {
                    if let Some(v) = row {
                        acc[l] += w * v[j] * buf[l];
                    }
                }
            }
            acc.iter().map(|a| a * pref).collect()
        })
        .collect();
    (0..=lmax).map(|l| per_k.iter().map(|v| v[l]).collect()).collect()
}

/// `ĝ_l(k) = (-i)^l √(2/π) ∫ g(r) j_l(kr) r² dr` at the given `k`.
pub fn sbt_at(profile: &RadialProfile, l: usize, ks: &[f64]) -> Result<Vec<Complex64>> {
    let k_max = ks.iter().fold(0.0f64, |m, k| m.max(*k));
    let quad = RadialQuadrature::for_profile(profile, k_max)?;
    let vals = profile.samples(&quad.r);
    let mut rows = vec![None; l + 1];
    rows[l] = Some(vals);
    let out = hankel_rows(&quad, &rows, ks);
    let phase = minus_i_pow(l);
    Ok(out[l].iter().map(|v| phase * v).collect())
}

/// Spherical Bessel transform sampled at the grid nodes.
pub fn sbt(profile: &RadialProfile, l: usize, grid: &RadialGrid) -> Result<Vec<Complex64>> {
    sbt_at(profile, l, grid.nodes())
}

/// A factorised position-space source `R(r) A(x̂)` centred at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTerm {
    pub radial: RadialProfile,
    pub angular: AngularFunction,
}

impl SourceTerm {
    pub fn new(radial: RadialProfile, angular: AngularFunction) -> Self {
        Self { radial, angular }
    }

    pub fn rotation_invariant(radial: RadialProfile) -> Self {
        Self { radial, angular: AngularFunction::constant(1.0) }
    }

    /// The `l = 0` projection as a radial profile: `(χ_0/√(4π)) R`.
    pub fn monopole(&self) -> RadialProfile {
        self.radial.scaled(self.angular.coefficient(0) / (4.0 * PI).sqrt())
    }
}

/// Momentum-space transform `ŝ(k)` of a list of sources as channel
/// coefficients on the grid, truncated at `trunc.l_max`.
pub fn transform_sources(
    parts: &[SourceTerm],
    grid: &Arc<RadialGrid>,
    trunc: AngularTruncation,
) -> Result<ModeFunction> {
    let n = grid.len();
    let mut coeff = vec![Complex64::new(0.0, 0.0); trunc.channel_count() * n];
    let k_max = grid.uv_cutoff();
    for part in parts {
        if part.radial.is_zero() {
            continue;
        }
        let quad = RadialQuadrature::for_profile(&part.radial, k_max)?;
        let vals = part.radial.samples(&quad.r);
        let ang = part.angular.channel_coefficients(trunc);
        let l_top = part.angular.l_max().min(trunc.l_max);
        let rows: Vec<Option<Vec<f64>>> =
            (0..=l_top).map(|l| if part.angular.coefficient(l) != 0.0 { Some(vals.clone()) } else { None }).collect();
        let hankel = hankel_rows(&quad, &rows, grid.nodes());
        for (l, m) in trunc.channels() {
            if l > l_top || ang[trunc.index(l, m)] == Complex64::new(0.0, 0.0) {
                continue;
            }
            let a = ang[trunc.index(l, m)] * minus_i_pow(l);
            let ch = trunc.index(l, m);
            for j in 0..n {
                coeff[ch * n + j] += a * hankel[l][j];
            }
        }
    }
    ModeFunction::from_coefficients(grid.clone(), trunc, coeff)
}

/// Required position-space localisation of a test function's sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportTag {
    Anywhere,
    /// Every radial support lies in `r ≥ r_min`.
    AwayFromOrigin { r_min: f64 },
}

/// `f = ω^{-1/2} ĥ + i ω^{1/2} ĝ` together with its generating data.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub h: Vec<SourceTerm>,
    pub g: Vec<SourceTerm>,
    pub mode: ModeFunction,
}

pub fn build_test_function(
    h_parts: Vec<SourceTerm>,
    g_parts: Vec<SourceTerm>,
    grid: &Arc<RadialGrid>,
    trunc: AngularTruncation,
) -> Result<TestFunction> {
    build_localized_test_function(h_parts, g_parts, grid, trunc, SupportTag::Anywhere)
}

pub fn build_localized_test_function(
    h_parts: Vec<SourceTerm>,
    g_parts: Vec<SourceTerm>,
    grid: &Arc<RadialGrid>,
    trunc: AngularTruncation,
    tag: SupportTag,
) -> Result<TestFunction> {
    for part in h_parts.iter().chain(&g_parts) {
        let (lo, hi) = part.radial.support();
        if !hi.is_finite() {
            return Err(Error::InvalidProfile("test function sources must be compactly supported".into()));
        }
        if let SupportTag::AwayFromOrigin { r_min } = tag {
            if !part.radial.is_zero() && lo < r_min {
                return Err(Error::InvalidProfile(format!(
                    "source support starts at r = {lo}, below the required {r_min}"
                )));
            }
        }
    }
    let h_hat = transform_sources(&h_parts, grid, trunc)?;
    let g_hat = transform_sources(&g_parts, grid, trunc)?;
    let nodes = grid.nodes().to_vec();
    let n = nodes.len();
    let i = Complex64::new(0.0, 1.0);
    let coeff: Vec<Complex64> = h_hat
        .coefficients()
        .iter()
        .zip(g_hat.coefficients())
        .enumerate()
        .map(|(idx, (h, g))| {
            let om = nodes[idx % n];
            h / om.sqrt() + i * g * om.sqrt()
        })
        .collect();
    let mode = ModeFunction::from_coefficients(grid.clone(), trunc, coeff)?;
    Ok(TestFunction { h: h_parts, g: g_parts, mode })
}

impl TestFunction {
    /// `f_λ(k) = λ^{3/2} f(λk)`, rebuilt exactly from the dilated sources
    /// `h_λ(x) = λ^{-2} h(x/λ)` and `g_λ(x) = λ^{-1} g(x/λ)`.
    pub fn dilate(&self, lambda: f64) -> Result<TestFunction> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidProfile(format!("dilation parameter {lambda} must be positive")));
        }
        let map = |parts: &[SourceTerm], power: f64| -> Vec<SourceTerm> {
            parts
                .iter()
                .map(|p| SourceTerm { radial: p.radial.dilated(lambda, power), angular: p.angular.clone() })
                .collect()
        };
        build_test_function(
            map(&self.h, -2.0),
            map(&self.g, -1.0),
            self.mode.grid(),
            self.mode.truncation(),
        )
    }
}

/// Fraction of `‖f‖²` a grid dilation may push below the infrared cutoff.
pub const DILATION_LOSS_TOLERANCE: f64 = 1e-12;

/// `f_λ(k) = λ^{3/2} f(λk)` on the same grid, interpolating each channel in
/// `ln ω` with the Lagrange polynomial through the nodes of the panel that
/// contains `λω`; values above the ultraviolet cutoff are zero.
pub fn dilate(f: &ModeFunction, lambda: f64) -> Result<ModeFunction> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidProfile(format!("dilation parameter {lambda} must be positive")));
    }
    if lambda == 1.0 {
        return Ok(f.clone());
    }
    let grid = f.grid().clone();
    let nodes = grid.nodes();
    let weights = grid.weights();
    let n = grid.len();
    let floor = grid.ir_cutoff() * lambda;
    let total = f.norm_sqr();
    let lost: f64 = f
        .coefficients()
        .chunks(n)
        .map(|c| (0..n).filter(|&j| nodes[j] < floor).map(|j| weights[j] * c[j].norm_sqr()).sum::<f64>())
        .sum();
    if total > 0.0 && lost > DILATION_LOSS_TOLERANCE * total {
        let required = grid.ir_cutoff() * (DILATION_LOSS_TOLERANCE * total / lost).sqrt();
        return Err(Error::DilationOutOfRange { lambda, required });
    }
    let interp = PanelInterpolator::new(&grid);
    let stencils: Vec<Option<(usize, Vec<f64>)>> = nodes.iter().map(|&om| interp.stencil(lambda * om)).collect();
    let np = grid.nodes_per_shell();
    let scale = lambda.powf(1.5);
    let mut out = ModeFunction::zeros(grid.clone(), f.truncation());
    for (ch, src) in f.coefficients().chunks(n).enumerate() {
        let dst = &mut out.coefficients_mut()[ch * n..(ch + 1) * n];
        for (j, st) in stencils.iter().enumerate() {
            if let Some((p, wts)) = st {
                let base = p * np;
                let v: Complex64 = wts.iter().enumerate().map(|(k, w)| src[base + k] * *w).sum();
                dst[j] = v * scale;
            }
        }
    }
    Ok(out)
}

struct PanelInterpolator<'a> {
    grid: &'a RadialGrid,
    bary: Vec<Vec<f64>>,
}

impl<'a> PanelInterpolator<'a> {
    fn new(grid: &'a RadialGrid) -> Self {
        let np = grid.nodes_per_shell();
        let bary = (0..grid.panels().len())
            .map(|p| {
                let t: Vec<f64> = grid.nodes()[p * np..(p + 1) * np].iter().map(|o| o.ln()).collect();
                (0..np)
                    .map(|j| 1.0 / (0..np).filter(|&k| k != j).map(|k| t[j] - t[k]).product::<f64>())
                    .collect()
            })
            .collect();
        Self { grid, bary }
    }

    /// Panel index and Lagrange weights for evaluation at `om`.
    fn stencil(&self, om: f64) -> Option<(usize, Vec<f64>)> {
        let panels = self.grid.panels();
        let lo = panels.first()?.0;
        let hi = panels.last()?.1;
        if om < lo || om > hi {
            return None;
        }
        let p = panels.partition_point(|(_, b)| *b < om).min(panels.len() - 1);
        let np = self.grid.nodes_per_shell();
        let t = om.ln();
        let ts: Vec<f64> = self.grid.nodes()[p * np..(p + 1) * np].iter().map(|o| o.ln()).collect();
        if let Some(k) = ts.iter().position(|x| *x == t) {
            let mut w = vec![0.0; np];
            w[k] = 1.0;
            return Some((p, w));
        }
        let raw: Vec<f64> = ts.iter().zip(&self.bary[p]).map(|(x, b)| b / (t - x)).collect();
        let s: f64 = raw.iter().sum();
        Some((p, raw.iter().map(|v| v / s).collect()))
    }
}
