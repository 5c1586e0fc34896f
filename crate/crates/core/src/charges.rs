//! Charge automorphisms `γ = ω^{-1/2}σ̂ + iω^{-3/2}ρ̂` and the linear form
//! `l_γ`.
//!
//! `γ` is held by its generating sources. Its Weyl phase on `W(f)` is
//! `exp(i l_γ(f))` with
//! `l_γ(f) = ∫ ω^{-2} conj(ρ̂) ĥ d³k - ∫ conj(σ̂) ĝ d³k`, evaluated either on the
//! momentum grid or in position space through the Green's function of `-Δ`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modespace::{AngularTruncation, ModeFunction, RadialGrid};
use crate::quadrature::GaussLegendre;
use crate::special::legendre_p;
use crate::transforms::{
    laplacian_radial, transform_sources, AngularFunction, RadialProfile, RadialQuadrature, SourceTerm, TestFunction,
};

/// Parameters of the rotation-invariant shape `σ = 0`, `ρ = -ΔΦ` with `Φ`
/// the smoothstep-Coulomb potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecialForm {
    pub q: f64,
    pub r1: f64,
    pub r2: f64,
}

impl SpecialForm {
    pub fn potential(&self) -> RadialProfile {
        RadialProfile::SmoothstepCoulomb { q: self.q, r1: self.r1, r2: self.r2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeAutomorphism {
    pub sigma: Vec<SourceTerm>,
    pub rho: Vec<SourceTerm>,
    /// `∫ ρ d³x`.
    pub q: f64,
    pub special_form: Option<SpecialForm>,
}

/// `∫ s d³x` of a factorised source: only the monopole survives.
pub fn source_volume_integral(s: &SourceTerm) -> Result<f64> {
    if s.radial.is_zero() {
        return Ok(0.0);
    }
    Ok((4.0 * PI).sqrt() * s.angular.coefficient(0) * s.radial.radial_moment(2)?)
}

fn check_real(parts: &[SourceTerm]) -> Result<()> {
    for p in parts {
        let (lo, hi) = p.radial.support();
        if !hi.is_finite() {
            return Err(Error::InvalidProfile("charge sources must be compactly supported".into()));
        }
        let probe = [lo, 0.5 * (lo + hi), hi, lo + 0.25 * (hi - lo)];
        if probe.iter().any(|&r| !p.radial.value(r).is_finite()) || p.angular.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidProfile("source values must be finite reals".into()));
        }
    }
    Ok(())
}

impl ChargeAutomorphism {
    pub fn identity() -> Self {
        Self { sigma: vec![], rho: vec![], q: 0.0, special_form: None }
    }

    pub fn is_identity(&self) -> bool {
        self.sigma.iter().chain(&self.rho).all(|p| p.radial.is_zero())
    }

    /// `σ = 0`, `ρ = -ΔΦ`, `Φ = s((r - r1)/(r2 - r1)) q/(4πr)`.
    pub fn special(q: f64, r1: f64, r2: f64) -> Result<Self> {
        let phi = RadialProfile::smoothstep_coulomb(q, r1, r2)?;
        let rho = laplacian_radial(&phi)?;
        let mut out = make_charge(vec![], vec![SourceTerm::rotation_invariant(rho)])?;
        out.special_form = Some(SpecialForm { q, r1, r2 });
        Ok(out)
    }

    /// Composition `γ₁ + γ₂`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            sigma: self.sigma.iter().chain(&other.sigma).cloned().collect(),
            rho: self.rho.iter().chain(&other.rho).cloned().collect(),
            q: self.q + other.q,
            special_form: None,
        }
    }

    pub fn negated(&self) -> Self {
        let neg = |v: &[SourceTerm]| -> Vec<SourceTerm> {
            v.iter().map(|p| SourceTerm { radial: p.radial.scaled(-1.0), angular: p.angular.clone() }).collect()
        };
        Self {
            sigma: neg(&self.sigma),
            rho: neg(&self.rho),
            q: -self.q,
            special_form: self.special_form.map(|s| SpecialForm { q: -s.q, ..s }),
        }
    }

    /// Mode function of `γ` on the grid; refused unless `q = 0`, since
    /// otherwise `γ` is not square integrable.
    pub fn materialize(&self, grid: &Arc<RadialGrid>, trunc: AngularTruncation) -> Result<ModeFunction> {
        if self.q.abs() > CHARGE_MATCH_TOLERANCE * (1.0 + self.charge_scale()) {
            return Err(Error::ChargeMismatch { q1: self.q, q2: 0.0 });
        }
        charge_mode(self, grid, trunc)
    }

    fn charge_scale(&self) -> f64 {
        self.rho
            .iter()
            .filter_map(|p| source_volume_integral(p).ok())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

pub const CHARGE_MATCH_TOLERANCE: f64 = 1e-8;

pub fn make_charge(sigma: Vec<SourceTerm>, rho: Vec<SourceTerm>) -> Result<ChargeAutomorphism> {
    check_real(&sigma)?;
    check_real(&rho)?;
    let q = rho.iter().map(source_volume_integral).sum::<Result<f64>>()?;
    Ok(ChargeAutomorphism { sigma, rho, q, special_form: None })
}

/// `ω^{-1/2}σ̂ + iω^{-3/2}ρ̂` on the grid, whatever the charge.
fn charge_mode(g: &ChargeAutomorphism, grid: &Arc<RadialGrid>, trunc: AngularTruncation) -> Result<ModeFunction> {
    let sig = transform_sources(&g.sigma, grid, trunc)?;
    let rho = transform_sources(&g.rho, grid, trunc)?;
    let nodes = grid.nodes();
    let n = nodes.len();
    let i = Complex64::new(0.0, 1.0);
    let coeff = sig
        .coefficients()
        .iter()
        .zip(rho.coefficients())
        .enumerate()
        .map(|(idx, (s, r))| {
            let om = nodes[idx % n];
            s / om.sqrt() + i * r * om.powf(-1.5)
        })
        .collect();
    ModeFunction::from_coefficients(grid.clone(), trunc, coeff)
}

/// Shape of the grid an evaluation ran on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub nodes: usize,
    pub n_shells: usize,
    pub nodes_per_shell: usize,
    pub ir_cutoff: f64,
    pub uv_cutoff: f64,
    pub l_max: usize,
}

impl GridSummary {
    pub fn of(mode: &ModeFunction) -> Self {
        let g = mode.grid();
        Self {
            nodes: g.len(),
            n_shells: g.n_shells(),
            nodes_per_shell: g.nodes_per_shell(),
            ir_cutoff: g.ir_cutoff(),
            uv_cutoff: g.uv_cutoff(),
            l_max: mode.truncation().l_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFormReport {
    pub value_momentum: f64,
    pub value_position: Option<f64>,
    pub discrepancy: Option<f64>,
    pub grid: GridSummary,
}

impl LinearFormReport {
    /// Position value when available, else the momentum value.
    pub fn best(&self) -> f64 {
        self.value_position.unwrap_or(self.value_momentum)
    }
}

/// `l_γ(f) = -Im⟨γ, f⟩` by grid quadrature, with the interval
/// `[0, ε_{N+1}]` closed by the end value of the radial integrand.
pub fn linear_form_momentum(g: &ChargeAutomorphism, f: &ModeFunction) -> Result<f64> {
    if g.is_identity() {
        return Ok(0.0);
    }
    let gm = charge_mode(g, f.grid(), f.truncation())?;
    let grid = f.grid();
    let n = grid.len();
    let w = grid.weights();
    let mut total = 0.0;
    let mut lowest = 0.0;
    for (a, b) in gm.coefficients().chunks(n).zip(f.coefficients().chunks(n)) {
        total += (0..n).map(|j| -(a[j].conj() * b[j]).im * w[j]).sum::<f64>();
        lowest += -(a[0].conj() * b[0]).im;
    }
    let om0 = grid.nodes()[0];
    Ok(total + grid.ir_cutoff() * om0 * om0 * lowest)
}

/// Cumulative `∫_0^{x_i} f` at sorted abscissae, Gauss–Legendre on each gap
/// with panels no wider than `max_width`.
fn cumulative<F: Fn(f64) -> f64>(f: F, xs: &[f64], start: f64, max_width: f64) -> Vec<f64> {
    let rule = GaussLegendre::new(16);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    let mut lo = start;
    for &hi in xs {
        if hi > lo {
            let panels = ((hi - lo) / max_width).ceil().max(1.0) as usize;
            let step = (hi - lo) / panels as f64;
            for p in 0..panels {
                let a = lo + p as f64 * step;
                acc += rule.integrate(a, a + step, &f);
            }
            lo = hi;
        }
        out.push(acc);
    }
    out
}

/// `∫∫ r² s² R_ρ(r) R_h(s) r_<^l / r_>^{l+1} dr ds`.
pub fn multipole_radial_integral(rho: &RadialProfile, h: &RadialProfile, l: usize) -> Result<f64> {
    let (hl, hh) = h.support();
    if rho.is_zero() || h.is_zero() {
        return Ok(0.0);
    }
    if !hh.is_finite() || !rho.support().1.is_finite() {
        return Err(Error::InvalidProfile("profile is not compactly supported".into()));
    }
    // refine the outer rule so its nodes resolve the kink at s = r
    let mut rs = Vec::new();
    let mut ws = Vec::new();
    let rule = GaussLegendre::new(16);
    let mut bps = rho.breakpoints();
    bps.extend([hl, hh].iter().filter(|b| b.is_finite()).copied());
    bps.sort_by(|a, b| a.total_cmp(b));
    bps.dedup();
    let (rl, rh) = rho.support();
    for seg in bps.windows(2) {
        let (a, b) = (seg[0].max(rl), seg[1].min(rh));
        if b <= a {
            continue;
        }
        let panels = ((b - a) / (rh - rl) * 64.0).ceil().max(4.0) as usize;
        let step = (b - a) / panels as f64;
        for p in 0..panels {
            for (x, w) in rule.mapped(a + p as f64 * step, a + (p + 1) as f64 * step) {
                rs.push(x);
                ws.push(w);
            }
        }
    }
    let lf = l as i32;
    let width = ((hh - hl) / 64.0).max(1e-6);
    let inner_below = cumulative(|s| s.powi(lf + 2) * h.value(s), &rs, hl.min(rs[0]), width);
    let total_above = {
        let v = cumulative(|s| s.powi(1 - lf) * h.value(s), &[hh], hl, width);
        v[0]
    };
    let above_to = cumulative(|s| s.powi(1 - lf) * h.value(s), &rs, hl.min(rs[0]), width);
    Ok(rs
        .iter()
        .zip(&ws)
        .enumerate()
        .map(|(j, (&r, &w))| {
            let a = inner_below[j] / r.powi(lf + 1);
            let b = (total_above - above_to[j]) * r.powi(lf);
            w * r * r * rho.value(r) * (a + b)
        })
        .sum())
}

/// Angular pairing `Σ_m conj(a_lm) b_lm = χ_l ψ_l P_l(n_a · n_b)`.
fn angular_pairing(a: &SourceTerm, b: &SourceTerm, l: usize) -> f64 {
    let c = a.angular.axis.iter().zip(&b.angular.axis).map(|(x, y)| x * y).sum::<f64>();
    a.angular.coefficient(l) * b.angular.coefficient(l) * legendre_p(l, c.clamp(-1.0, 1.0))
}

/// `∫∫ ρ(x) h(y) / (4π|x-y|) d³x d³y - ∫ σ g d³x` by multipole expansion.
pub fn linear_form_position(g: &ChargeAutomorphism, h: &[SourceTerm], gs: &[SourceTerm]) -> Result<f64> {
    let mut total = 0.0;
    for rp in &g.rho {
        for hp in h {
            let l_top = rp.angular.l_max().min(hp.angular.l_max());
            for l in 0..=l_top {
                let ang = angular_pairing(rp, hp, l);
                if ang == 0.0 {
                    continue;
                }
                total += ang / (2 * l + 1) as f64 * multipole_radial_integral(&rp.radial, &hp.radial, l)?;
            }
        }
    }
    for sp in &g.sigma {
        for gp in gs {
            let l_top = sp.angular.l_max().min(gp.angular.l_max());
            let overlap = overlap_integral(&sp.radial, &gp.radial)?;
            for l in 0..=l_top {
                total -= angular_pairing(sp, gp, l) * overlap;
            }
        }
    }
    Ok(total)
}

/// `∫ a(r) b(r) r² dr`.
pub fn overlap_integral(a: &RadialProfile, b: &RadialProfile) -> Result<f64> {
    let (al, ah) = a.support();
    let (bl, bh) = b.support();
    let (lo, hi) = (al.max(bl), ah.min(bh));
    if !(hi > lo) {
        return Ok(0.0);
    }
    let mut bps: Vec<f64> = a.breakpoints().into_iter().chain(b.breakpoints()).filter(|x| *x >= lo && *x <= hi).collect();
    bps.extend([lo, hi]);
    bps.sort_by(|x, y| x.total_cmp(y));
    bps.dedup();
    let mut acc = 0.0;
    for seg in bps.windows(2) {
        let q = RadialQuadrature::on_interval(seg[0], seg[1], 0.0);
        acc += q.r.iter().zip(&q.w).map(|(&r, &w)| w * a.value(r) * b.value(r)).sum::<f64>();
    }
    Ok(acc)
}

pub fn linear_form(g: &ChargeAutomorphism, f: &TestFunction) -> Result<LinearFormReport> {
    let value_momentum = linear_form_momentum(g, &f.mode)?;
    let value_position = linear_form_position(g, &f.h, &f.g)?;
    Ok(LinearFormReport {
        value_momentum,
        value_position: Some(value_position),
        discrepancy: Some((value_momentum - value_position).abs()),
        grid: GridSummary::of(&f.mode),
    })
}

/// Report for a bare mode function: momentum path only.
pub fn linear_form_mode(g: &ChargeAutomorphism, f: &ModeFunction) -> Result<LinearFormReport> {
    Ok(LinearFormReport {
        value_momentum: linear_form_momentum(g, f)?,
        value_position: None,
        discrepancy: None,
        grid: GridSummary::of(f),
    })
}

/// `κ_f = (4π)^{-1} ∫ h(x)/|x| d³x`; only the monopole of `h` contributes.
pub fn kappa(h_parts: &[SourceTerm]) -> Result<f64> {
    h_parts
        .iter()
        .map(|p| Ok(p.angular.coefficient(0) / (4.0 * PI).sqrt() * p.radial.radial_moment(1)?))
        .sum()
}

/// `γ₁ - γ₂` as a mode function; only for equal charges.
pub fn materialize_difference(
    g1: &ChargeAutomorphism,
    g2: &ChargeAutomorphism,
    grid: &Arc<RadialGrid>,
    trunc: AngularTruncation,
) -> Result<ModeFunction> {
    let scale = 1.0 + g1.q.abs().max(g2.q.abs());
    if (g1.q - g2.q).abs() > CHARGE_MATCH_TOLERANCE * scale {
        return Err(Error::ChargeMismatch { q1: g1.q, q2: g2.q });
    }
    let neg = g2.negated();
    // merge radial profiles sharing an angular factor so the cancellation of
    // the monopoles happens inside one quadrature
    let merge = |a: &[SourceTerm], b: &[SourceTerm]| -> Vec<SourceTerm> {
        let mut out: Vec<SourceTerm> = Vec::new();
        for p in a.iter().chain(b) {
            if let Some(t) = out.iter_mut().find(|t| t.angular == p.angular) {
                t.radial = RadialProfile::sum(vec![t.radial.clone(), p.radial.clone()]);
            } else {
                out.push(p.clone());
            }
        }
        out
    };
    let diff = ChargeAutomorphism {
        sigma: merge(&g1.sigma, &neg.sigma),
        rho: merge(&g1.rho, &neg.rho),
        q: 0.0,
        special_form: None,
    };
    charge_mode(&diff, grid, trunc)
}

/// `exp(i l_γ(f))`.
pub fn weyl_phase(g: &ChargeAutomorphism, f: &TestFunction) -> Result<Complex64> {
    let l = linear_form(g, f)?.best();
    Ok(Complex64::from_polar(1.0, l))
}

/// A random charge together with the sources of a test function.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomScenario {
    pub gamma: ChargeAutomorphism,
    pub h: Vec<SourceTerm>,
    pub g: Vec<SourceTerm>,
}

fn random_angular<R: Rng + ?Sized>(rng: &mut R, l_max: usize) -> Result<AngularFunction> {
    let coeffs = (0..=l_max)
        .map(|l| {
            let z: f64 = StandardNormal.sample(rng);
            z / (1 + l) as f64
        })
        .collect();
    let axis: [f64; 3] = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
    AngularFunction::new(coeffs, axis)
}

fn random_bump<R: Rng + ?Sized>(rng: &mut R, lo: (f64, f64), width: (f64, f64)) -> Result<RadialProfile> {
    let a = rng.gen_range(lo.0..lo.1);
    let w = rng.gen_range(width.0..width.1);
    RadialProfile::bump(a, a + w, rng.gen_range(-1.0..1.0))
}

/// Special-form core plus an anisotropic bump in `ρ` and `σ`; `h` and `g`
/// are anisotropic bumps. Angular orders stay at or below `l_max`.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, l_max: usize) -> Result<RandomScenario> {
    let q = rng.gen_range(-2.0..2.0);
    let r1 = rng.gen_range(0.3..1.0);
    let r2 = r1 + rng.gen_range(0.3..1.0);
    let core = laplacian_radial(&RadialProfile::smoothstep_coulomb(q, r1, r2)?)?;
    let rho = vec![
        SourceTerm::rotation_invariant(core),
        SourceTerm::new(random_bump(rng, (0.2, 1.0), (0.5, 1.5))?, random_angular(rng, l_max)?),
    ];
    let sigma = vec![SourceTerm::new(random_bump(rng, (0.2, 1.0), (0.5, 1.5))?, random_angular(rng, l_max)?)];
    let gamma = make_charge(sigma, rho)?;
    let h = vec![SourceTerm::new(random_bump(rng, (0.5, 2.0), (0.5, 1.5))?, random_angular(rng, l_max)?)];
    let g = vec![SourceTerm::new(random_bump(rng, (0.5, 2.0), (0.5, 1.5))?, random_angular(rng, l_max)?)];
    Ok(RandomScenario { gamma, h, g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::geometric_boundaries;
    use crate::quadrature::adaptive;
    use crate::transforms::{build_test_function, AngularFunction};
    use approx::assert_relative_eq;

    fn grid() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::with_panel_width(&geometric_boundaries(1.0, 0.5, 20), 16, 96.0, 1.0).unwrap())
    }

    #[test]
    fn identity_and_special_charge() {
        let id = ChargeAutomorphism::identity();
        assert_eq!(id.q, 0.0);
        let g = grid();
        let t = AngularTruncation::new(0);
        let h = RadialProfile::bump(1.0, 2.0, 1.0).unwrap();
        let f = build_test_function(vec![SourceTerm::rotation_invariant(h)], vec![], &g, t).unwrap();
        let rep = linear_form(&id, &f).unwrap();
        assert_eq!((rep.value_momentum, rep.value_position), (0.0, Some(0.0)));
        assert_eq!(weyl_phase(&id, &f).unwrap(), Complex64::new(1.0, 0.0));
        let s = ChargeAutomorphism::special(1.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(s.q, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn charge_is_additive() {
        let a = SourceTerm::rotation_invariant(RadialProfile::bump(1.0, 2.0, 0.7).unwrap());
        let b = SourceTerm::rotation_invariant(RadialProfile::bump(0.5, 3.0, -0.2).unwrap());
        let qa = make_charge(vec![], vec![a.clone()]).unwrap().q;
        let qb = make_charge(vec![], vec![b.clone()]).unwrap().q;
        let both = make_charge(vec![], vec![a, b]).unwrap().q;
        assert_relative_eq!(both, qa + qb, max_relative = 1e-14);
        let s1 = ChargeAutomorphism::special(1.3, 1.0, 2.0).unwrap();
        let s2 = ChargeAutomorphism::special(1.3, 0.5, 4.0).unwrap();
        assert_relative_eq!(s1.q, s2.q, max_relative = 1e-10);
    }

    #[test]
    fn shell_theorem_case() {
        let g = grid();
        let t = AngularTruncation::new(0);
        let gam = ChargeAutomorphism::special(1.0, 1.0, 2.0).unwrap();
        let h = RadialProfile::bump(4.0, 8.0, 1.0).unwrap();
        let hp = vec![SourceTerm::rotation_invariant(h.clone())];
        let f = build_test_function(hp.clone(), vec![], &g, t).unwrap();
        let rep = linear_form(&gam, &f).unwrap();
        let closed = gam.q * adaptive(&|r: f64| h.value(r) * r, 4.0, 8.0, 1e-14);
        assert_relative_eq!(rep.value_position.unwrap(), closed, max_relative = 1e-12);
        assert_relative_eq!(kappa(&hp).unwrap() * gam.q, closed, max_relative = 1e-12);
        assert!(rep.discrepancy.unwrap() < 1e-4 * closed.abs(), "{rep:?}");
    }

    #[test]
    fn sigma_term_matches_direct_overlap() {
        let g = grid();
        let t = AngularTruncation::new(2);
        let ang = AngularFunction::new(vec![1.0, 0.0, 0.5], [0.0, 1.0, 1.0]).unwrap();
        let sig = SourceTerm::new(RadialProfile::bump(1.0, 3.0, 1.0).unwrap(), ang.clone());
        let gp = SourceTerm::new(RadialProfile::bump(2.0, 4.0, 0.5).unwrap(), AngularFunction::new(vec![0.3, 0.0, -0.8], [0.0, 0.0, 1.0]).unwrap());
        let gam = make_charge(vec![sig.clone()], vec![]).unwrap();
        let f = build_test_function(vec![], vec![gp.clone()], &g, t).unwrap();
        let rep = linear_form(&gam, &f).unwrap();
        let radial = adaptive(&|r: f64| sig.radial.value(r) * gp.radial.value(r) * r * r, 2.0, 3.0, 1e-15);
        let cos = 1.0 / 2f64.sqrt();
        let ang_sum = 1.0 * 0.3 + 0.5 * (-0.8) * (1.5 * cos * cos - 0.5);
        assert_relative_eq!(rep.value_position.unwrap(), -radial * ang_sum, max_relative = 1e-12);
        assert!(rep.discrepancy.unwrap() < 1e-6 * (1.0 + rep.value_position.unwrap().abs()), "{rep:?}");
    }

    #[test]
    fn kappa_ignores_higher_multipoles() {
        let h = RadialProfile::bump(1.0, 2.0, 1.0).unwrap();
        let base = kappa(&[SourceTerm::rotation_invariant(h.clone())]).unwrap();
        assert_relative_eq!(base, 0.332_995_362_126_059_6, max_relative = 1e-12);
        let with_l2 = kappa(&[
            SourceTerm::rotation_invariant(h.clone()),
            SourceTerm::new(h.clone(), AngularFunction::new(vec![0.0, 0.0, 3.0], [1.0, 0.0, 0.0]).unwrap()),
        ])
        .unwrap();
        assert!((with_l2 - base).abs() < 1e-10);
        let scaled = kappa(&[SourceTerm::rotation_invariant(h.scaled(2.5))]).unwrap();
        assert_relative_eq!(scaled, 2.5 * base, max_relative = 1e-14);
    }

    #[test]
    fn differences_need_equal_charges() {
        let g = grid();
        let t = AngularTruncation::new(0);
        let a = ChargeAutomorphism::special(1.0, 1.0, 2.0).unwrap();
        let b = ChargeAutomorphism::special(1.0, 0.5, 3.0).unwrap();
        let c = ChargeAutomorphism::special(2.0, 1.0, 2.0).unwrap();
        assert!(materialize_difference(&a, &a, &g, t).unwrap().is_zero());
        assert!(matches!(materialize_difference(&a, &c, &g, t), Err(Error::ChargeMismatch { .. })));
        let d = materialize_difference(&a, &b, &g, t).unwrap();
        let d2 = materialize_difference(&a, &b, &Arc::new(g.extend_ir(1).unwrap()), t).unwrap();
        assert!(d.norm() > 0.0 && d.norm().is_finite());
        assert!((d2.norm() / d.norm() - 1.0).abs() < 0.01);
    }

    #[test]
    fn phases_compose() {
        let g = grid();
        let t = AngularTruncation::new(0);
        let a = ChargeAutomorphism::special(1.0, 1.0, 2.0).unwrap();
        let b = ChargeAutomorphism::special(-0.4, 0.5, 3.0).unwrap();
        let h = RadialProfile::bump(1.5, 5.0, 2.0).unwrap();
        let f = build_test_function(vec![SourceTerm::rotation_invariant(h)], vec![], &g, t).unwrap();
        let ab = weyl_phase(&a.compose(&b), &f).unwrap();
        let prod = weyl_phase(&a, &f).unwrap() * weyl_phase(&b, &f).unwrap();
        assert!((ab - prod).norm() < 1e-12);
        assert!((ab.norm() - 1.0).abs() < 1e-15);
    }
}
