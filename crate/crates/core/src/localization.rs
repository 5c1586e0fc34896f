//! Charge localisation diagnostics.
//!
//! Two pipelines live here. The dilation-limit detector follows `l_γ(f_λ)` as
//! a test function is spread out, exposing the charge through the limit
//! `q κ_f`. The cone pipeline transports the Coulomb tail of a special-form
//! charge into an upright cone: `Φ^C = χ^C Φ`, `u^C = FT[-ΔΦ^C]`,
//! `v_n = iω^{-3/2} P_{ε_n} u^C`, and checks that `T v_n` converges and
//! intertwines the charged representation on the cone's complement.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charges::{
    kappa, linear_form, materialize_difference, overlap_integral, ChargeAutomorphism, SpecialForm,
    CHARGE_MATCH_TOLERANCE,
};
use crate::convergence::{classify, dyadic_schedule, fit_power_law, linear_fit, richardson, ConvergenceReport, PowerLawFit, VerdictRules};
use crate::error::{Error, Result};
use crate::infravacuum::{apply_t, AngularRankRule, KprConfig};
use crate::modespace::{
    apply_involution, apply_radial_power, inner_product, project_above, AngularTruncation, ModeFunction,
    RadialGrid, RadialPower,
};
use crate::quadrature::GaussLegendre;
use crate::special::{bessel_over_x_cumulative, bessel_over_x_total, legendre_p, zonal_harmonics_all};
use crate::transforms::{
    build_localized_test_function, hankel_rows, minus_i_pow, AngularFunction, RadialProfile, RadialQuadrature,
    SourceTerm, SupportTag, TestFunction,
};

fn normalize(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidCone("axis must be a nonzero finite vector".into()));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0).acos()
}

/// Upright cone with apex at the origin, reduced to its time-zero angular data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub axis: [f64; 3],
    pub half_angle: f64,
}

impl ConeSpec {
    pub fn new(axis: [f64; 3], half_angle: f64) -> Result<Self> {
        if !(half_angle > 0.0 && half_angle < 0.5 * PI) {
            return Err(Error::InvalidCone(format!("half angle {half_angle} outside (0, π/2)")));
        }
        Ok(Self { axis: normalize(axis)?, half_angle })
    }

    /// Angle between the axis and `v`.
    pub fn angle_to(&self, v: [f64; 3]) -> f64 {
        match normalize(v) {
            Ok(u) => angle_between(self.axis, u),
            Err(_) => 0.0,
        }
    }
}

/// `ψ(ϑ) = exp(-β/(1-(ϑ/θ)²))` on `[0, θ)`.
pub fn cap_bump(theta: f64, cap: f64, sharpness: f64) -> f64 {
    let t = theta / cap;
    if !(t.abs() < 1.0) {
        return 0.0;
    }
    (-sharpness / (1.0 - t * t)).exp()
}

/// `Y_l0` coefficients `2π ∫₀^θ ψ Y_l0(cos ϑ) sin ϑ dϑ` of the cap bump and
/// `∫₀^θ ψ sin ϑ dϑ`, by composite Gauss–Legendre with `panels` panels.
fn cap_coefficients_with(cap: f64, sharpness: f64, l_max: usize, panels: usize) -> (Vec<f64>, f64) {
    let rule = GaussLegendre::new(16);
    let step = cap / panels as f64;
    let mut coeffs = vec![0.0; l_max + 1];
    let mut mass = 0.0;
    for p in 0..panels {
        let a = p as f64 * step;
        for (th, w) in rule.mapped(a, a + step) {
            let ws = w * cap_bump(th, cap, sharpness) * th.sin();
            if ws == 0.0 {
                continue;
            }
            mass += ws;
            for (c, y) in coeffs.iter_mut().zip(zonal_harmonics_all(l_max, th.cos())) {
                *c += 2.0 * PI * ws * y;
            }
        }
    }
    (coeffs, mass)
}

/// Agreement required between two quadrature resolutions of the cap
/// coefficients, relative to the largest coefficient.
pub const CAP_ALIASING_TOLERANCE: f64 = 1e-10;

/// Cap-bump coefficients, refused when halving the panel width moves any of
/// them by more than [`CAP_ALIASING_TOLERANCE`].
pub fn cap_coefficients(cap: f64, sharpness: f64, l_max: usize) -> Result<(Vec<f64>, f64)> {
    if !(cap > 0.0 && cap <= PI) || !(sharpness > 0.0) || !sharpness.is_finite() {
        return Err(Error::InvalidCone(format!("cap half angle {cap} or sharpness {sharpness} out of range")));
    }
    let panels = (4 * l_max).max(64);
    let (c1, m1) = cap_coefficients_with(cap, sharpness, l_max, panels);
    let (c2, m2) = cap_coefficients_with(cap, sharpness, l_max, 2 * panels);
    let peak = c2.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let diff = c1.iter().zip(&c2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if diff > CAP_ALIASING_TOLERANCE * peak || (m1 - m2).abs() > CAP_ALIASING_TOLERANCE * m2 {
        return Err(Error::InvalidCone(format!(
            "cap quadrature not resolved at sharpness {sharpness}: coefficient change {diff:e}"
        )));
    }
    Ok((c2, m2))
}

/// Envelope decay of a coefficient sequence over one octave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OctaveDecay {
    pub l: usize,
    /// `max |c_j|` over `l ≤ j < 3l/2`.
    pub envelope: f64,
    /// Log-log slope of the envelope from `l` to `2l`.
    pub exponent: f64,
}

pub fn octave_decay(coeffs: &[f64]) -> Vec<OctaveDecay> {
    let env = |a: usize| coeffs[a..(3 * a / 2).min(coeffs.len())].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut out = vec![];
    let mut a = 4;
    while 3 * a <= coeffs.len() {
        let (e1, e2) = (env(a), env(2 * a));
        let exponent = if e1 > 0.0 && e2 > 0.0 { (e2 / e1).ln() / 2f64.ln() } else { f64::NEG_INFINITY };
        out.push(OctaveDecay { l: a, envelope: e1, exponent });
        a *= 2;
    }
    out
}

/// `χ^C = 1 - A ψ(ϑ)`, equal to one outside the cone and of zero mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCutoff {
    pub cone: ConeSpec,
    pub sharpness: f64,
    /// `A = 2 / ∫₀^{θ₀} ψ sin ϑ dϑ`.
    pub amplitude: f64,
    /// Legendre coefficients with `χ_0` set to zero.
    pub function: AngularFunction,
    /// `χ_0` as computed by quadrature before it is replaced by zero.
    pub raw_monopole: f64,
    pub decay: Vec<OctaveDecay>,
}

impl ConeCutoff {
    /// Closed-form value at angle `ϑ` from the axis.
    pub fn value(&self, theta: f64) -> f64 {
        1.0 - self.amplitude * cap_bump(theta, self.cone.half_angle, self.sharpness)
    }
}

pub fn make_cone_cutoff(cone: ConeSpec, sharpness: f64, l_max: usize) -> Result<ConeCutoff> {
    let (psi, mass) = cap_coefficients(cone.half_angle, sharpness, l_max)?;
    let amplitude = 2.0 / mass;
    let mut coeffs: Vec<f64> = psi.iter().map(|p| -amplitude * p).collect();
    let raw_monopole = coeffs[0] + (4.0 * PI).sqrt();
    coeffs[0] = 0.0;
    let decay = octave_decay(&coeffs);
    Ok(ConeCutoff { cone, sharpness, amplitude, function: AngularFunction::new(coeffs, cone.axis)?, raw_monopole, decay })
}

/// Test function `h(x) = R(r) ψ_p(∠(x̂, d))` with a cap bump of half angle
/// `cap_half_angle` around `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeProbe {
    pub direction: [f64; 3],
    pub cap_half_angle: f64,
    pub radial: RadialProfile,
    /// Legendre order kept for the cap.
    pub l_expand: usize,
}

pub const PROBE_SHARPNESS: f64 = 1.0;

impl ConeProbe {
    /// Probe centred on the direction opposite to the cone axis.
    pub fn opposite(cone: &ConeSpec, cap_half_angle: f64, radial: RadialProfile, l_expand: usize) -> Self {
        let d = cone.axis.map(|x| -x);
        Self { direction: d, cap_half_angle, radial, l_expand }
    }

    /// Angular gap between the probe's support and the closed cone; positive
    /// iff they are disjoint.
    pub fn clearance(&self, cone: &ConeSpec) -> f64 {
        cone.angle_to(self.direction) - self.cap_half_angle - cone.half_angle
    }

    pub fn source(&self) -> Result<SourceTerm> {
        let (coeffs, _) = cap_coefficients(self.cap_half_angle, PROBE_SHARPNESS, self.l_expand)?;
        Ok(SourceTerm::new(self.radial.clone(), AngularFunction::new(coeffs, self.direction)?))
    }

    /// `f = ω^{-1/2} ĥ`, refused unless the support avoids the closed cone,
    /// apex included.
    pub fn build(&self, cone: &ConeSpec, grid: &Arc<RadialGrid>, trunc: AngularTruncation) -> Result<TestFunction> {
        let (lo, _) = self.radial.support();
        if !(self.clearance(cone) > 0.0) || !(lo > 0.0) {
            return Err(Error::SupportIntersectsCone);
        }
        build_localized_test_function(
            vec![self.source()?],
            vec![],
            grid,
            trunc,
            SupportTag::AwayFromOrigin { r_min: lo },
        )
    }
}

/// `∫ Φ χ h d³x` for `h` given by factorised sources, with the angular sums
/// stopped at `l_max`.
pub fn cone_pairing_oracle(
    chi: &AngularFunction,
    phi: &RadialProfile,
    h: &[SourceTerm],
    l_max: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for part in h {
        let c = chi.axis.iter().zip(&part.angular.axis).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
        let top = l_max.min(chi.l_max()).min(part.angular.l_max());
        let ang: f64 =
            (0..=top).map(|l| chi.coefficient(l) * part.angular.coefficient(l) * legendre_p(l, c)).sum();
        if ang != 0.0 {
            total += ang * overlap_integral(phi, &part.radial)?;
        }
    }
    Ok(total)
}

/// Channel plateau of `u^C` as `k → 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub l: usize,
    /// `(Σ_m |u_lm(0)|²)^{1/2}` by linear extrapolation from the two lowest nodes.
    pub measured: f64,
    pub analytic: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallKReport {
    pub k_min: f64,
    pub monopole_at_k_min: f64,
    /// `max |u_00(k)|/k` over the lowest shell.
    pub monopole_slope: f64,
    pub plateaus: Vec<Plateau>,
    /// `|⟨Y_00, η⟩|` of the extrapolated limit.
    pub eta_monopole: f64,
    pub eta_norm: f64,
    pub monopole_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ConePipeline {
    pub cone: ConeSpec,
    pub chi: AngularFunction,
    pub charge: SpecialForm,
    pub u_c: ModeFunction,
    /// Real `η_l` with `η(k̂) = Σ_l (-i)^l η_l Y_l0(k̂)` about the axis of `chi`.
    pub eta: AngularFunction,
    /// Extrapolated `u_lm(0)` per channel.
    pub eta_measured: Vec<Complex64>,
    pub small_k: SmallKReport,
}

/// `u^C = FT[-Δ(χΦ)]`, channel `l` carrying the radial profile
/// `χ_l (ρ + l(l+1) Φ/r²)`; beyond `r₂` the Coulomb tail is integrated in
/// closed form through `∫ j_l(x)/x dx`.
pub fn build_u_c(
    cone: ConeSpec,
    chi: &AngularFunction,
    charge: SpecialForm,
    grid: &Arc<RadialGrid>,
    trunc: AngularTruncation,
) -> Result<ConePipeline> {
    let SpecialForm { q, r1, r2 } = charge;
    let phi = RadialProfile::smoothstep_coulomb(q, r1, r2)?;
    let rho = RadialProfile::SmoothstepCharge { q, r1, r2 };
    let l_top = trunc.l_max.min(chi.l_max());
    let ks = grid.nodes();
    let n = ks.len();
    let quad = RadialQuadrature::on_interval(r1, r2, grid.uv_cutoff());
    let rho_vals = rho.samples(&quad.r);
    let phi_vals = phi.samples(&quad.r);
    let rows: Vec<Option<Vec<f64>>> = (0..=l_top)
        .map(|l| {
            if chi.coefficient(l) == 0.0 {
                return None;
            }
            let ll = (l * (l + 1)) as f64;
            Some(rho_vals.iter().zip(&phi_vals).zip(&quad.r).map(|((p, f), r)| p + ll * f / (r * r)).collect())
        })
        .collect();
    let hankel = hankel_rows(&quad, &rows, ks);
    let scaled: Vec<f64> = ks.iter().map(|k| k * r2).collect();
    let cumulative = bessel_over_x_cumulative(l_top, &scaled);
    let pref = (2.0 / PI).sqrt() * q / (4.0 * PI);
    let ang = chi.channel_coefficients(trunc);
    let mut coeff = vec![Complex64::new(0.0, 0.0); trunc.channel_count() * n];
    let mut eta = vec![0.0; l_top + 1];
    for l in 0..=l_top {
        let c = chi.coefficient(l);
        if c == 0.0 {
            continue;
        }
        let ll = (l * (l + 1)) as f64;
        let g_l = if l == 0 { 0.0 } else { bessel_over_x_total(l) };
        eta[l] = pref * c * if l == 0 { 1.0 } else { ll * g_l };
        let radial: Vec<f64> = (0..n)
            .map(|j| hankel[l][j] + if l == 0 { 0.0 } else { pref * ll * (g_l - cumulative[l][j]) })
            .collect();
        for m in -(l as i64)..=(l as i64) {
            let ch = trunc.index(l, m);
            let a = ang[ch] * minus_i_pow(l);
            for j in 0..n {
                coeff[ch * n + j] = a * radial[j];
            }
        }
    }
    let u_c = ModeFunction::from_coefficients(grid.clone(), trunc, coeff)?;
    let eta = AngularFunction::new(eta, chi.axis)?;
    let (eta_measured, small_k) = small_k_report(&u_c, &eta)?;
    Ok(ConePipeline { cone, chi: chi.clone(), charge, u_c, eta, eta_measured, small_k })
}

fn small_k_report(u: &ModeFunction, eta: &AngularFunction) -> Result<(Vec<Complex64>, SmallKReport)> {
    let grid = u.grid();
    let trunc = u.truncation();
    let ks = grid.nodes();
    let (k0, k1) = (ks[0], ks[1]);
    let extrap = |c: &[Complex64]| c[0] - (c[1] - c[0]) * (k0 / (k1 - k0));
    let eta_measured: Vec<Complex64> = trunc.channels().map(|(l, m)| extrap(u.channel(l, m))).collect();
    let lowest = grid.shell_range(grid.n_shells())?;
    let mono = u.channel(0, 0);
    let monopole_slope = lowest.clone().map(|j| mono[j].norm() / ks[j]).fold(0.0, f64::max);
    let plateaus = (1..=trunc.l_max)
        .map(|l| {
            let measured = (-(l as i64)..=(l as i64))
                .map(|m| eta_measured[trunc.index(l, m)].norm_sqr())
                .sum::<f64>()
                .sqrt();
            let analytic = eta.coefficient(l).abs();
            let rel_error = if analytic > 0.0 { (measured - analytic).abs() / analytic } else { measured };
            Plateau { l, measured, analytic, rel_error }
        })
        .collect();
    let eta_monopole = eta_measured[0].norm();
    let eta_norm = eta_measured.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let report = SmallKReport {
        k_min: k0,
        monopole_at_k_min: mono[0].norm(),
        monopole_slope,
        plateaus,
        eta_monopole,
        eta_norm,
        monopole_ratio: if eta_norm > 0.0 { eta_monopole / eta_norm } else { 0.0 },
    };
    Ok((eta_measured, report))
}

/// `v_n = iω^{-3/2} P_{ε_n} u^C`.
pub fn v_n(u_c: &ModeFunction, n: usize) -> Result<ModeFunction> {
    let grid = u_c.grid();
    if n == 0 || n > grid.n_shells() + 1 {
        return Err(Error::ShellIndex { index: n, count: grid.n_shells() + 1 });
    }
    let w = apply_radial_power(-1.5, u_c, RadialPower::Plain);
    Ok(project_above(grid.epsilon(n), &w)?.scale(Complex64::new(0.0, 1.0)))
}

/// One dyadic increment against its majorant
/// `(Σ_{i=m}^{n-1} ln(ε_i/ε_{i+1})(c_N i^{-N} + b_i²‖η‖²))^{1/2} + ‖ω^{-3/2}(P_{ε_n}-P_{ε_m})R‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementBound {
    pub m: usize,
    pub n: usize,
    pub increment: f64,
    pub series_term: f64,
    pub remainder: f64,
    pub majorant: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct IntertwinerSequence {
    pub convergence: ConvergenceReport,
    /// `‖T v_n‖²` for `n = 1..=n_max`.
    pub norms_sq: Vec<f64>,
    /// Slope of `‖T v_n‖²` against `n` over the second half of the sequence.
    pub growth_slope: Option<f64>,
    pub bounds: Vec<IncrementBound>,
    pub decay_power: i32,
    /// `max_i i^N ‖(1-Q̃_i) η‖²`.
    pub c_n: f64,
    pub eta_norm_sq: f64,
    /// `max_n ‖Γ v_n + v_n‖ / ‖v_n‖`.
    pub gamma_parity_residual: f64,
    pub n_max: usize,
    /// `v_{n_max}`.
    pub v_last: ModeFunction,
    /// `T v_{n_max}`, the finite-stage `v_T`.
    pub v_t: ModeFunction,
}

pub const DECAY_POWER: i32 = 4;

fn check_kpr_like(cfg: &KprConfig, trunc: AngularTruncation) -> Result<()> {
    let summ = cfg.summability();
    if !summ.all_converge() {
        return Err(Error::NotKprLike("summability conditions fail".into()));
    }
    if let AngularRankRule::Capped(cap) = cfg.rank_rule() {
        if cap < trunc.l_max {
            return Err(Error::NotKprLike(format!(
                "rank rule caps at l = {cap}, below the angular truncation {}",
                trunc.l_max
            )));
        }
    }
    Ok(())
}

pub fn intertwiner_sequence(
    p: &ConePipeline,
    cfg: &KprConfig,
    n_max: usize,
    rules: VerdictRules,
) -> Result<IntertwinerSequence> {
    let u = &p.u_c;
    let grid = u.grid().clone();
    let trunc = u.truncation();
    check_kpr_like(cfg, trunc)?;
    let shells = cfg.aligned_shells(&grid)?;
    if n_max == 0 || n_max > shells + 1 {
        return Err(Error::ShellIndex { index: n_max, count: shells + 1 });
    }
    let schedule = dyadic_schedule(n_max);
    let mut norms_sq = Vec::with_capacity(n_max);
    let mut kept: Vec<ModeFunction> = vec![];
    let mut gamma_parity_residual: f64 = 0.0;
    let mut v_last = None;
    for n in 1..=n_max {
        let v = v_n(u, n)?;
        let nv = v.norm();
        if nv > 0.0 {
            let g = apply_involution(cfg.involution(), &v);
            gamma_parity_residual = gamma_parity_residual.max((&g + &v).norm() / nv);
        }
        let tv = apply_t(&v, cfg, None)?;
        norms_sq.push(tv.norm_sqr());
        if n == n_max {
            v_last = Some((v, tv.clone()));
        }
        if schedule.contains(&n) {
            kept.push(tv);
        }
    }
    let (v_last, v_t) = v_last.expect("n_max ≥ 1");
    let norms: Vec<f64> = kept.iter().map(|v| v.norm()).collect();
    let increments: Vec<f64> = kept.windows(2).map(|w| (&w[1] - &w[0]).norm()).collect();

    let eta_norm_sq: f64 = p.eta_measured.iter().map(|z| z.norm_sqr()).sum();
    let outside = |i: usize| -> f64 {
        let lt = cfg.max_angular_momentum(i);
        trunc
            .channels()
            .filter(|&(l, _)| l == 0 || l > lt)
            .map(|(l, m)| p.eta_measured[trunc.index(l, m)].norm_sqr())
            .sum()
    };
    let c_n = (1..=shells).map(|i| (i as f64).powi(DECAY_POWER) * outside(i)).fold(0.0, f64::max);
    // R = u^C - η·1_{ω<ε_1}
    let eps1 = grid.epsilon(1);
    let nn = grid.len();
    let mut remainder_field = u.clone();
    for (idx, z) in remainder_field.coefficients_mut().iter_mut().enumerate() {
        if grid.nodes()[idx % nn] < eps1 {
            *z -= p.eta_measured[idx / nn];
        }
    }
    let weighted = apply_radial_power(-1.5, &remainder_field, RadialPower::Plain);
    let band = |m: usize, n: usize| -> Result<f64> {
        let a = project_above(grid.epsilon(n), &weighted)?;
        let b = project_above(grid.epsilon(m), &weighted)?;
        Ok((&a - &b).norm())
    };
    let mut bounds = vec![];
    for (k, w) in schedule.windows(2).enumerate() {
        let (m, n) = (w[0], w[1]);
        let series: f64 = (m..n)
            .map(|i| {
                let log = (cfg.epsilon(i) / cfg.epsilon(i + 1)).ln();
                log * (c_n * (i as f64).powi(-DECAY_POWER) + cfg.b(i).powi(2) * eta_norm_sq)
            })
            .sum();
        let series_term = series.sqrt();
        let remainder = band(m, n)?;
        let majorant = series_term + remainder;
        let increment = increments[k];
        bounds.push(IncrementBound { m, n, increment, series_term, remainder, majorant, holds: increment <= majorant * (1.0 + 1e-9) });
    }
    let half = n_max / 2;
    let pts: Vec<(f64, f64)> =
        (half.max(1)..=n_max).map(|n| (n as f64, norms_sq[n - 1])).collect();
    let growth_slope = linear_fit(&pts).map(|(_, b)| b);
    let convergence = classify(schedule, norms, increments, rules);
    Ok(IntertwinerSequence {
        convergence,
        norms_sq,
        growth_slope,
        bounds,
        decay_power: DECAY_POWER,
        c_n,
        eta_norm_sq,
        gamma_parity_residual,
        n_max,
        v_last,
        v_t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntertwinerCheck {
    /// `l_γ(f)` from the position-space oracle.
    pub l_gamma: f64,
    pub l_gamma_momentum: f64,
    /// `Im⟨v_T, T f⟩`.
    pub transported: f64,
    pub residual: f64,
    pub relative_residual: f64,
    /// `-Im⟨v_{n_max}, f⟩`.
    pub direct: f64,
    pub direct_residual: f64,
    pub direct_relative_residual: f64,
    /// `(n, |-Im⟨v_n, f⟩ - l_γ(f)|, |-Im⟨v_n, f⟩ - truncated_oracle|)` for
    /// every `n ≤ n_max`.
    pub direct_series: Vec<(usize, f64, f64)>,
    /// `∫ Φ χ h` with the angular sums stopped at the truncation order.
    pub truncated_oracle: f64,
    pub angular_part: f64,
    pub grid_part: f64,
    /// `|Im⟨T v_{n_max}, T f⟩ - Im⟨v_{n_max}, f⟩|`.
    pub symplectic_transport: f64,
    /// `exp(i l_γ(f))` as `[re, im]`.
    pub weyl_phase: [f64; 2],
    pub clearance: f64,
}

pub fn intertwiner_check(
    p: &ConePipeline,
    seq: &IntertwinerSequence,
    cfg: &KprConfig,
    probe: &ConeProbe,
) -> Result<IntertwinerCheck> {
    let grid = p.u_c.grid().clone();
    let trunc = p.u_c.truncation();
    let f = probe.build(&p.cone, &grid, trunc)?;
    let SpecialForm { q, r1, r2 } = p.charge;
    let gamma = ChargeAutomorphism::special(q, r1, r2)?;
    let lf = linear_form(&gamma, &f)?;
    let l_gamma = lf.best();
    let tf = apply_t(&f.mode, cfg, None)?;
    let transported = inner_product(&seq.v_t, &tf)?.im;
    let direct = -inner_product(&seq.v_last, &f.mode)?.im;
    let rel = |x: f64| if l_gamma != 0.0 { x / l_gamma.abs() } else { x };
    let residual = (transported + l_gamma).abs();
    let direct_residual = (direct - l_gamma).abs();

    let full = apply_radial_power(-1.5, &p.u_c, RadialPower::Plain).scale(Complex64::new(0.0, 1.0));
    let n = grid.len();
    let w = grid.weights();
    let mut per_node = vec![0.0; n];
    for (a, b) in full.coefficients().chunks(n).zip(f.mode.coefficients().chunks(n)) {
        for j in 0..n {
            per_node[j] -= (a[j].conj() * b[j]).im * w[j];
        }
    }
    let truncated_oracle = cone_pairing_oracle(&p.chi, &RadialProfile::smoothstep_coulomb(q, r1, r2)?, &f.h, trunc.l_max)?;
    let direct_series = (1..=seq.n_max)
        .map(|k| {
            let eps = grid.epsilon(k);
            let s: f64 = (0..n).filter(|&j| grid.nodes()[j] >= eps).map(|j| per_node[j]).sum();
            (k, (s - l_gamma).abs(), (s - truncated_oracle).abs())
        })
        .collect();

    Ok(IntertwinerCheck {
        l_gamma,
        l_gamma_momentum: lf.value_momentum,
        transported,
        residual,
        relative_residual: rel(residual),
        direct,
        direct_residual,
        direct_relative_residual: rel(direct_residual),
        direct_series,
        truncated_oracle,
        angular_part: (truncated_oracle - l_gamma).abs(),
        grid_part: (direct - truncated_oracle).abs(),
        symplectic_transport: (transported + direct).abs(),
        weyl_phase: [l_gamma.cos(), l_gamma.sin()],
        clearance: probe.clearance(&p.cone),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilationPoint {
    pub lambda: f64,
    pub value_position: f64,
    pub value_momentum: f64,
    pub error_position: f64,
    pub error_momentum: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationLimitReport {
    pub q: f64,
    /// `κ_f` by one-dimensional quadrature.
    pub kappa: f64,
    /// `l_γ(f_λ)/q` at the largest `λ`, momentum path.
    pub kappa_momentum: Option<f64>,
    pub target: f64,
    pub points: Vec<DilationPoint>,
    /// Power law of the position-path error over points above the noise floor.
    pub fit: Option<PowerLawFit>,
    pub fit_momentum: Option<PowerLawFit>,
    /// Richardson limit and order from the last three position values.
    pub richardson: Option<(f64, f64)>,
    pub limit: f64,
    pub limit_error: f64,
    /// `exp(i q κ)` as `[re, im]`.
    pub phase: [f64; 2],
    /// Rescaling `c` with `q κ_{cf} = π`.
    pub phase_gap_scale: Option<f64>,
    pub norm_drift: f64,
}

/// `ε_{N+1} · λ · r_out` must stay below this for `f_λ` to be resolved.
pub const IR_REACH: f64 = 0.05;
/// Errors below this multiple of `max(|qκ|, 1)` count as exact.
pub const DILATION_NOISE_FLOOR: f64 = 1e-12;

/// `f_λ` for every `λ` of an increasing schedule, rebuilt from the dilated
/// sources.
#[derive(Debug, Clone)]
pub struct DilationFamily {
    pub lambdas: Vec<f64>,
    pub base: TestFunction,
    pub members: Vec<TestFunction>,
}

pub fn dilation_family(f: &TestFunction, lambdas: &[f64]) -> Result<DilationFamily> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| !(w[1] > w[0])) || !(lambdas[0] > 0.0) {
        return Err(Error::InvalidConfig("dilation schedule must be positive and increasing".into()));
    }
    let grid = f.mode.grid();
    let r_out = f.h.iter().chain(&f.g).map(|p| p.radial.support().1).fold(0.0, f64::max);
    for &lambda in lambdas {
        let required = IR_REACH / (lambda * r_out);
        if grid.ir_cutoff() > required {
            return Err(Error::DilationOutOfRange { lambda, required });
        }
    }
    let members = lambdas
        .iter()
        .map(|&l| if l == 1.0 { Ok(f.clone()) } else { f.dilate(l) })
        .collect::<Result<Vec<_>>>()?;
    Ok(DilationFamily { lambdas: lambdas.to_vec(), base: f.clone(), members })
}

pub fn dilation_limit(gamma: &ChargeAutomorphism, f: &TestFunction, lambdas: &[f64]) -> Result<DilationLimitReport> {
    dilation_limit_on(gamma, &dilation_family(f, lambdas)?)
}

pub fn dilation_limit_on(gamma: &ChargeAutomorphism, family: &DilationFamily) -> Result<DilationLimitReport> {
    let f = &family.base;
    let lambdas = &family.lambdas;
    let q = gamma.q;
    let kappa = kappa(&f.h)?;
    let target = q * kappa;
    let norm0 = f.mode.norm();
    let mut points = vec![];
    for (&lambda, fl) in lambdas.iter().zip(&family.members) {
        let rep = linear_form(gamma, fl)?;
        let vp = rep.best();
        points.push(DilationPoint {
            lambda,
            value_position: vp,
            value_momentum: rep.value_momentum,
            error_position: (vp - target).abs(),
            error_momentum: (rep.value_momentum - target).abs(),
            norm: fl.mode.norm(),
        });
    }
    let floor = DILATION_NOISE_FLOOR * target.abs().max(1.0);
    let fit_over = |err: &dyn Fn(&DilationPoint) -> f64| {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            points.iter().filter(|p| err(p) > floor).map(|p| (p.lambda, err(p))).unzip();
        fit_power_law(&xs, &ys)
    };
    let fit = fit_over(&|p| p.error_position);
    let fit_momentum = fit_over(&|p| p.error_momentum);
    let values: Vec<f64> = points.iter().map(|p| p.value_position).collect();
    let ratio = if lambdas.len() >= 2 { lambdas[lambdas.len() - 1] / lambdas[lambdas.len() - 2] } else { 2.0 };
    let geometric = lambdas.len() >= 3
        && lambdas.windows(2).rev().take(2).all(|w| ((w[1] / w[0]) - ratio).abs() < 1e-12 * ratio);
    let richardson = if geometric { richardson(&values, ratio) } else { None };
    let limit = richardson.map(|r| r.0).unwrap_or(*values.last().expect("nonempty"));
    let last = points.last().expect("nonempty");
    let norm_drift = points.iter().map(|p| (p.norm - norm0).abs() / norm0.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    Ok(DilationLimitReport {
        q,
        kappa,
        kappa_momentum: if q != 0.0 { Some(last.value_momentum / q) } else { None },
        target,
        points,
        fit,
        fit_momentum,
        richardson,
        limit,
        limit_error: (limit - target).abs(),
        phase: [target.cos(), target.sin()],
        phase_gap_scale: if target != 0.0 { Some(PI / target) } else { None },
        norm_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorVerdict {
    Equivalent,
    Inequivalent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    pub verdict: SectorVerdict,
    pub q1: f64,
    pub q2: f64,
    /// `‖γ₁ - γ₂‖` on the grid.
    pub difference_norm: Option<f64>,
    pub t_difference_norm: Option<f64>,
    /// `‖T(γ₁ - γ₂)‖` with the infrared cutoff halved.
    pub t_difference_norm_extended: Option<f64>,
    pub ir_drift: Option<f64>,
    pub kappa: f64,
    /// `c` with `(q₂ - q₁) κ_{cf} = π`.
    pub probe_scale: Option<f64>,
    /// `|exp(i(q₂-q₁) c κ) - 1|`.
    pub phase_gap: Option<f64>,
    /// Same gap from `l_{γ_j}(c f_λ)` at the largest `λ`.
    pub phase_gap_measured: Option<f64>,
    /// `max_λ ‖T f_λ - f_λ‖`.
    pub probe_fixed_residual: f64,
}

pub fn sector_equiv_test(
    cfg: &KprConfig,
    g1: &ChargeAutomorphism,
    g2: &ChargeAutomorphism,
    probe_h: &RadialProfile,
    grid: &Arc<RadialGrid>,
    trunc: AngularTruncation,
    lambdas: &[f64],
) -> Result<SectorReport> {
    let (lo, _) = probe_h.support();
    let probe = build_localized_test_function(
        vec![SourceTerm::rotation_invariant(probe_h.clone())],
        vec![],
        grid,
        trunc,
        SupportTag::AwayFromOrigin { r_min: lo.max(f64::MIN_POSITIVE) },
    )?;
    let kappa = kappa(&probe.h)?;
    let mut probe_fixed_residual: f64 = 0.0;
    let mut last_probe = probe.clone();
    for &lambda in lambdas {
        let fl = if lambda == 1.0 { probe.clone() } else { probe.dilate(lambda)? };
        probe_fixed_residual = probe_fixed_residual.max((&apply_t(&fl.mode, cfg, None)? - &fl.mode).norm());
        last_probe = fl;
    }
    let scale = 1.0 + g1.q.abs().max(g2.q.abs());
    let equal = (g1.q - g2.q).abs() <= CHARGE_MATCH_TOLERANCE * scale;
    let mut report = SectorReport {
        verdict: if equal { SectorVerdict::Equivalent } else { SectorVerdict::Inequivalent },
        q1: g1.q,
        q2: g2.q,
        difference_norm: None,
        t_difference_norm: None,
        t_difference_norm_extended: None,
        ir_drift: None,
        kappa,
        probe_scale: None,
        phase_gap: None,
        phase_gap_measured: None,
        probe_fixed_residual,
    };
    if equal {
        let d = materialize_difference(g1, g2, grid, trunc)?;
        let ext = Arc::new(grid.extend_ir(1)?);
        let d_ext = materialize_difference(g1, g2, &ext, trunc)?;
        let t = apply_t(&d, cfg, None)?.norm();
        let t_ext = apply_t(&d_ext, cfg, None)?.norm();
        report.difference_norm = Some(d.norm());
        report.t_difference_norm = Some(t);
        report.t_difference_norm_extended = Some(t_ext);
        report.ir_drift = Some(if t > 0.0 { (t_ext - t).abs() / t } else { t_ext });
    } else if kappa != 0.0 {
        let c = PI / ((g2.q - g1.q) * kappa);
        report.probe_scale = Some(c);
        report.phase_gap = Some((Complex64::from_polar(1.0, (g2.q - g1.q) * c * kappa) - 1.0).norm());
        let l1 = linear_form(g1, &last_probe)?.best() * c;
        let l2 = linear_form(g2, &last_probe)?.best() * c;
        report.phase_gap_measured = Some((Complex64::from_polar(1.0, l2) - Complex64::from_polar(1.0, l1)).norm());
    }
    Ok(report)
}
