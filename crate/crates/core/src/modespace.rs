//! Discretised one-particle space: momentum-space wave functions expanded in
//! spherical harmonics `Y_lm(k̂)` times radial samples on a shell-aligned grid.
//!
//! A [`ModeFunction`] stores `c_{l,m}(ω_j)` with
//! `u(k) = Σ_{lm} c_{l,m}(|k|) Y_lm(k̂)`, so that the `L²(ℝ³, d³k)` inner
//! product becomes `Σ_{lm} Σ_j conj(c) c' w_j` with weights for `ω² dω`.

use std::ops::{Add, Mul, Range, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infravacuum::KprConfig;
use crate::quadrature::GaussLegendre;

const BOUNDARY_RTOL: f64 = 1e-12;

/// Where a radial node sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// The region `[ε_1, Λ]` above the first shell boundary.
    Top,
    /// Shell `i` (1-based) covering `[ε_{i+1}, ε_i]`.
    Shell(usize),
}

/// Shell-aligned radial quadrature in momentum space.
///
/// Every shell carries `nodes_per_shell` Gauss–Legendre nodes in `ln ω`; the
/// region above `ε_1` is cut into panels (geometric up to `uv_panel_width`,
/// then of constant width) carrying the same number of nodes each.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    shell_boundaries: Vec<f64>,
    nodes_per_shell: usize,
    uv_cutoff: f64,
    uv_panel_width: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    shell_ranges: Vec<Range<usize>>,
    top_range: Range<usize>,
    panels: Vec<(f64, f64)>,
}

pub const DEFAULT_NODES_PER_SHELL: usize = 16;
pub const DEFAULT_UV_PANEL_WIDTH: f64 = 1.0;

/// `ε_i = ε_1 · ratio^{i-1}` for `i = 1..=n_shells + 1`.
pub fn geometric_boundaries(eps1: f64, ratio: f64, n_shells: usize) -> Vec<f64> {
    (0..=n_shells).map(|i| eps1 * ratio.powi(i as i32)).collect()
}

impl RadialGrid {
    pub fn new(shell_boundaries: &[f64], nodes_per_shell: usize, uv_cutoff: f64) -> Result<Self> {
        Self::with_panel_width(shell_boundaries, nodes_per_shell, uv_cutoff, DEFAULT_UV_PANEL_WIDTH)
    }

    pub fn with_panel_width(
        shell_boundaries: &[f64],
        nodes_per_shell: usize,
        uv_cutoff: f64,
        uv_panel_width: f64,
    ) -> Result<Self> {
        if shell_boundaries.len() < 2 {
            return Err(Error::InvalidGrid("need at least two shell boundaries".into()));
        }
        if nodes_per_shell < 2 {
            return Err(Error::InvalidGrid(format!(
                "nodes_per_shell must be at least 2, got {nodes_per_shell}"
            )));
        }
        if shell_boundaries.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidGrid("shell boundaries must be positive".into()));
        }
        if shell_boundaries.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidGrid("shell boundaries must be strictly decreasing".into()));
        }
        if !(uv_cutoff > shell_boundaries[0]) {
            return Err(Error::InvalidGrid(format!(
                "uv cutoff {uv_cutoff} must exceed the first boundary {}",
                shell_boundaries[0]
            )));
        }
        if !(uv_panel_width > 0.0) {
            return Err(Error::InvalidGrid("uv panel width must be positive".into()));
        }
        let rule = GaussLegendre::new(nodes_per_shell);
        let n_shells = shell_boundaries.len() - 1;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut panels = Vec::new();
        let mut push_panel = |lo: f64, hi: f64, nodes: &mut Vec<f64>, weights: &mut Vec<f64>| {
            panels.push((lo, hi));
            let (a, b) = (lo.ln(), hi.ln());
            for (t, w) in rule.mapped(a, b) {
                let om = t.exp();
                nodes.push(om);
                weights.push(w * om * om * om);
            }
        };
        let mut shell_ranges = vec![0..0; n_shells];
        for i in (1..=n_shells).rev() {
            let start = nodes.len();
            push_panel(shell_boundaries[i], shell_boundaries[i - 1], &mut nodes, &mut weights);
            shell_ranges[i - 1] = start..nodes.len();
        }
        let top_start = nodes.len();
        let mut lo = shell_boundaries[0];
        while lo < uv_cutoff * (1.0 - 1e-14) {
            let step = lo.min(uv_panel_width);
            let mut hi = (lo + step).min(uv_cutoff);
            if uv_cutoff - hi < 0.25 * step {
                hi = uv_cutoff;
            }
            push_panel(lo, hi, &mut nodes, &mut weights);
            lo = hi;
        }
        let top_range = top_start..nodes.len();
        Ok(Self {
            shell_boundaries: shell_boundaries.to_vec(),
            nodes_per_shell,
            uv_cutoff,
            uv_panel_width,
            nodes,
            weights,
            shell_ranges,
            top_range,
            panels,
        })
    }

    pub fn shell_boundaries(&self) -> &[f64] {
        &self.shell_boundaries
    }
    pub fn nodes_per_shell(&self) -> usize {
        self.nodes_per_shell
    }
    pub fn uv_cutoff(&self) -> f64 {
        self.uv_cutoff
    }
    pub fn uv_panel_width(&self) -> f64 {
        self.uv_panel_width
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn n_shells(&self) -> usize {
        self.shell_ranges.len()
    }
    /// Infrared cutoff `ε_{N+1}`.
    pub fn ir_cutoff(&self) -> f64 {
        *self.shell_boundaries.last().expect("validated")
    }
    /// `ε_i`, 1-based.
    pub fn epsilon(&self, i: usize) -> f64 {
        self.shell_boundaries[i - 1]
    }

    /// Node indices of shell `i` (1-based).
    pub fn shell_range(&self, i: usize) -> Result<Range<usize>> {
        if i == 0 || i > self.n_shells() {
            return Err(Error::ShellIndex { index: i, count: self.n_shells() });
        }
        Ok(self.shell_ranges[i - 1].clone())
    }

    /// `[lo, hi]` of every quadrature panel in node order; panel `p` owns
    /// nodes `p·n .. (p+1)·n` with `n = nodes_per_shell`.
    pub fn panels(&self) -> &[(f64, f64)] {
        &self.panels
    }

    pub fn top_range(&self) -> Range<usize> {
        self.top_range.clone()
    }

    pub fn segment(&self, j: usize) -> Segment {
        if self.top_range.contains(&j) {
            return Segment::Top;
        }
        let from_bottom = j / self.nodes_per_shell;
        Segment::Shell(self.n_shells() - from_bottom)
    }

    /// Index of `ε` among the boundaries (0-based), if it is one.
    pub fn boundary_index(&self, eps: f64) -> Option<usize> {
        self.shell_boundaries
            .iter()
            .position(|b| (b - eps).abs() <= BOUNDARY_RTOL * b)
    }

    /// Weighted sum of `f(ω_j)` over all nodes: `∫ f(ω) ω² dω`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&o, &w)| w * f(o)).sum()
    }

    /// Same grid with the infrared cutoff pushed down by `extra` more shells of
    /// the same ratio as the last one.
    pub fn extend_ir(&self, extra: usize) -> Result<Self> {
        let n = self.shell_boundaries.len();
        let ratio = self.shell_boundaries[n - 1] / self.shell_boundaries[n - 2];
        let mut b = self.shell_boundaries.clone();
        for _ in 0..extra {
            let last = *b.last().expect("nonempty");
            b.push(last * ratio);
        }
        Self::with_panel_width(&b, self.nodes_per_shell, self.uv_cutoff, self.uv_panel_width)
    }
}

/// Spherical-harmonic index set `0 ≤ l ≤ l_max, -l ≤ m ≤ l`, ordered by
/// `index = l² + l + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngularTruncation {
    pub l_max: usize,
}

impl AngularTruncation {
    pub fn new(l_max: usize) -> Self {
        Self { l_max }
    }
    pub fn channel_count(&self) -> usize {
        (self.l_max + 1) * (self.l_max + 1)
    }
    pub fn index(&self, l: usize, m: i64) -> usize {
        debug_assert!(m.unsigned_abs() as usize <= l && l <= self.l_max);
        ((l * l + l) as i64 + m) as usize
    }
    pub fn channels(&self) -> impl Iterator<Item = (usize, i64)> {
        let l_max = self.l_max;
        (0..=l_max).flat_map(|l| (-(l as i64)..=l as i64).map(move |m| (l, m)))
    }
    pub fn channel(&self, index: usize) -> (usize, i64) {
        let l = (index as f64).sqrt() as usize;
        let l = if (l + 1) * (l + 1) <= index { l + 1 } else { l };
        (l, index as i64 - (l * l + l) as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrFlag {
    Regular,
    IrCutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Involution {
    /// `(Γv)(k) = conj(v(-k))`: complex conjugation in position space.
    PositionConj,
    /// `(Γ̂v)(k) = conj(v(k))`: complex conjugation in momentum space.
    MomentumConj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialPower {
    /// Multiply by `ω^s`.
    Plain,
    /// Multiply by `ω_r^s`, where `ω_r = ω` below `ε_1` and `ε_1` above.
    Regularized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeFunction {
    grid: Arc<RadialGrid>,
    trunc: AngularTruncation,
    coeff: Vec<Complex64>,
    ir_flag: IrFlag,
}

impl ModeFunction {
    pub fn zeros(grid: Arc<RadialGrid>, trunc: AngularTruncation) -> Self {
        let n = grid.len() * trunc.channel_count();
        Self { grid, trunc, coeff: vec![Complex64::new(0.0, 0.0); n], ir_flag: IrFlag::Regular }
    }

    pub fn from_coefficients(
        grid: Arc<RadialGrid>,
        trunc: AngularTruncation,
        coeff: Vec<Complex64>,
    ) -> Result<Self> {
        if coeff.len() != grid.len() * trunc.channel_count() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, trunc, coeff, ir_flag: IrFlag::Regular })
    }

    /// Builds a mode function channel by channel from `f(l, m, ω)`.
    pub fn from_fn<F>(grid: Arc<RadialGrid>, trunc: AngularTruncation, f: F) -> Self
    where
        F: Fn(usize, i64, f64) -> Complex64,
    {
        let mut out = Self::zeros(grid, trunc);
        let n = out.grid.len();
        for (ch, (l, m)) in trunc.channels().enumerate() {
            for j in 0..n {
                out.coeff[ch * n + j] = f(l, m, out.grid.nodes[j]);
            }
        }
        out
    }

    /// Standard complex Gaussian coefficients on every node and channel.
    pub fn random<R: Rng + ?Sized>(grid: Arc<RadialGrid>, trunc: AngularTruncation, rng: &mut R) -> Self {
        let n = grid.len() * trunc.channel_count();
        let coeff = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im)
            })
            .collect();
        Self { grid, trunc, coeff, ir_flag: IrFlag::Regular }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn truncation(&self) -> AngularTruncation {
        self.trunc
    }
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeff
    }
    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeff
    }
    pub fn ir_flag(&self) -> IrFlag {
        self.ir_flag
    }
    pub fn with_ir_flag(mut self, flag: IrFlag) -> Self {
        self.ir_flag = flag;
        self
    }

    /// Radial samples of channel `(l, m)`.
    pub fn channel(&self, l: usize, m: i64) -> &[Complex64] {
        let n = self.grid.len();
        let ch = self.trunc.index(l, m);
        &self.coeff[ch * n..(ch + 1) * n]
    }

    pub fn channel_mut(&mut self, l: usize, m: i64) -> &mut [Complex64] {
        let n = self.grid.len();
        let ch = self.trunc.index(l, m);
        &mut self.coeff[ch * n..(ch + 1) * n]
    }

    pub fn same_space(&self, other: &Self) -> bool {
        self.trunc == other.trunc
            && (Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        let n = self.grid.len();
        self.coeff
            .chunks(n)
            .map(|c| c.iter().zip(&self.grid.weights).map(|(z, w)| z.norm_sqr() * w).sum::<f64>())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.coeff.iter_mut().for_each(|z| *z *= s);
        out
    }

    pub fn map_nodes<F: Fn(usize, Complex64) -> Complex64>(&self, f: F) -> Self {
        let n = self.grid.len();
        let mut out = self.clone();
        for (k, z) in out.coeff.iter_mut().enumerate() {
            *z = f(k % n, *z);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    /// `l = 0` content only.
    pub fn is_rotation_invariant(&self) -> bool {
        let n = self.grid.len();
        self.coeff[n..].iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    /// Largest coefficient magnitude over all channels.
    pub fn max_abs(&self) -> f64 {
        self.coeff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Add for &ModeFunction {
    type Output = ModeFunction;
    fn add(self, rhs: &ModeFunction) -> ModeFunction {
        assert!(self.same_space(rhs), "adding mode functions on different grids");
        let mut out = self.clone();
        out.coeff.iter_mut().zip(&rhs.coeff).for_each(|(a, b)| *a += b);
        if rhs.ir_flag == IrFlag::IrCutoff {
            out.ir_flag = IrFlag::IrCutoff;
        }
        out
    }
}

impl Sub for &ModeFunction {
    type Output = ModeFunction;
    fn sub(self, rhs: &ModeFunction) -> ModeFunction {
        assert!(self.same_space(rhs), "subtracting mode functions on different grids");
        let mut out = self.clone();
        out.coeff.iter_mut().zip(&rhs.coeff).for_each(|(a, b)| *a -= b);
        if rhs.ir_flag == IrFlag::IrCutoff {
            out.ir_flag = IrFlag::IrCutoff;
        }
        out
    }
}

impl Mul<f64> for &ModeFunction {
    type Output = ModeFunction;
    fn mul(self, rhs: f64) -> ModeFunction {
        self.scale(Complex64::new(rhs, 0.0))
    }
}

/// `⟨u, v⟩ = Σ conj(c^u) c^v w_j`, antilinear in the first slot.
pub fn inner_product(u: &ModeFunction, v: &ModeFunction) -> Result<Complex64> {
    u.check(v)?;
    let n = u.grid.len();
    let w = &u.grid.weights;
    let mut acc = Complex64::new(0.0, 0.0);
    for (cu, cv) in u.coeff.chunks(n).zip(v.coeff.chunks(n)) {
        for j in 0..n {
            acc += cu[j].conj() * cv[j] * w[j];
        }
    }
    Ok(acc)
}

/// `σ(u, v) = -Im⟨u, v⟩`.
pub fn symplectic_form(u: &ModeFunction, v: &ModeFunction) -> Result<f64> {
    Ok(-inner_product(u, v)?.im)
}

/// Pointwise multiplication by `ω^s` (or `ω_r^s`).
pub fn apply_radial_power(s: f64, u: &ModeFunction, kind: RadialPower) -> ModeFunction {
    let grid = u.grid.clone();
    let eps1 = grid.epsilon(1);
    let factors: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&om| match kind {
            RadialPower::Plain => om.powf(s),
            RadialPower::Regularized if om < eps1 => om.powf(s),
            RadialPower::Regularized => eps1.powf(s),
        })
        .collect();
    let mut out = u.map_nodes(|j, z| z * factors[j]);
    if s < 0.0 && kind == RadialPower::Plain && !vanishes_near_ir(u) {
        out.ir_flag = IrFlag::IrCutoff;
    }
    out
}

fn vanishes_near_ir(u: &ModeFunction) -> bool {
    let n = u.grid.len();
    let Ok(lowest) = u.grid.shell_range(u.grid.n_shells()) else {
        return true;
    };
    u.coeff
        .chunks(n)
        .all(|c| c[lowest.clone()].iter().all(|z| *z == Complex64::new(0.0, 0.0)))
}

/// Coefficient-level antiunitary involution.
///
/// Position-space conjugation: `(Γu)_{l,m} = (-1)^{l+m} conj(u_{l,-m})`, from
/// `Y_lm(-k̂) = (-1)^l Y_lm(k̂)` and `conj(Y_lm) = (-1)^m Y_{l,-m}`.
/// Momentum-space conjugation drops the parity factor.
pub fn apply_involution(kind: Involution, u: &ModeFunction) -> ModeFunction {
    let n = u.grid.len();
    let mut out = u.clone();
    for (l, m) in u.trunc.channels() {
        let src = u.trunc.index(l, -m);
        let dst = u.trunc.index(l, m);
        let parity = match kind {
            Involution::PositionConj => (l as i64 + m).rem_euclid(2),
            Involution::MomentumConj => m.rem_euclid(2),
        };
        let sign = if parity == 0 { 1.0 } else { -1.0 };
        for j in 0..n {
            out.coeff[dst * n + j] = u.coeff[src * n + j].conj() * sign;
        }
    }
    out
}

/// `P_ε`: keep nodes with `ω ≥ ε`. `ε` must be a shell boundary.
pub fn project_above(eps: f64, u: &ModeFunction) -> Result<ModeFunction> {
    let idx = u.grid.boundary_index(eps).ok_or(Error::NotShellBoundary(eps))?;
    let cut = u.grid.shell_boundaries[idx];
    // nodes never sit on a boundary; compare against the exact stored value
    Ok(u.map_nodes(|j, z| if u.grid.nodes[j] >= cut { z } else { Complex64::new(0.0, 0.0) }))
}

/// `P_i = P_{ε_{i+1}} - P_{ε_i}`: keep shell `i` only.
pub fn project_shell(i: usize, u: &ModeFunction) -> Result<ModeFunction> {
    let range = u.grid.shell_range(i)?;
    Ok(u.map_nodes(|j, z| if range.contains(&j) { z } else { Complex64::new(0.0, 0.0) }))
}

/// Part of `u` above `ε_1`.
pub fn project_top(u: &ModeFunction) -> ModeFunction {
    let range = u.grid.top_range();
    u.map_nodes(|j, z| if range.contains(&j) { z } else { Complex64::new(0.0, 0.0) })
}

/// The radial ray `ξ_i(ω) = ω^{-3/2}` sampled on shell `i`, together with its
/// squared grid norm `Σ w_j ω_j^{-3}` (closed form `ln(ε_i/ε_{i+1})`).
pub fn radial_ray(grid: &RadialGrid, i: usize) -> Result<(Range<usize>, Vec<f64>, f64)> {
    let range = grid.shell_range(i)?;
    let xi: Vec<f64> = grid.nodes[range.clone()].iter().map(|o| o.powf(-1.5)).collect();
    let norm2 = xi
        .iter()
        .zip(&grid.weights[range.clone()])
        .map(|(x, w)| x * x * w)
        .sum();
    Ok((range, xi, norm2))
}

/// `Q_i = |ξ_i⟩⟨ξ_i| / ⟨ξ_i|ξ_i⟩ ⊗ Σ_{0<l≤L_i} Σ_m |Y_lm⟩⟨Y_lm|` with
/// `L_i` taken from the configuration's angular rank rule.
pub fn apply_q(i: usize, u: &ModeFunction, config: &KprConfig) -> Result<ModeFunction> {
    let l_top = config.max_angular_momentum(i);
    if l_top > u.trunc.l_max {
        return Err(Error::AngularTruncation { needed: l_top, l_max: u.trunc.l_max });
    }
    let mut out = ModeFunction::zeros(u.grid.clone(), u.trunc);
    let (range, xi, norm2) = radial_ray(&u.grid, i)?;
    let n = u.grid.len();
    let w = &u.grid.weights[range.clone()];
    for l in 1..=l_top {
        for m in -(l as i64)..=(l as i64) {
            let ch = u.trunc.index(l, m);
            let src = &u.coeff[ch * n + range.start..ch * n + range.end];
            let overlap: Complex64 =
                src.iter().zip(&xi).zip(w).map(|((z, x), w)| z * (x * w)).sum::<Complex64>() / norm2;
            let dst = &mut out.coeff[ch * n + range.start..ch * n + range.end];
            for (d, x) in dst.iter_mut().zip(&xi) {
                *d = overlap * *x;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infravacuum::{AngularRankRule, KprConfig};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_grid() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::with_panel_width(&geometric_boundaries(1.0, 0.5, 6), 8, 6.0, 1.0).unwrap())
    }

    #[test]
    fn smallest_grid() {
        let g = RadialGrid::new(&[1.0, 0.5], 4, 2.0).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.nodes()[0] > 0.5 && *g.nodes().last().unwrap() < 2.0);
    }

    #[test]
    fn shell_mass_is_exact() {
        let g = RadialGrid::new(&geometric_boundaries(1.0, 0.5, 20), 16, 8.0).unwrap();
        assert!(g.len() >= 320);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        for i in 1..=20 {
            let r = g.shell_range(i).unwrap();
            assert_eq!(r.len(), 16);
            let (hi, lo) = (g.epsilon(i), g.epsilon(i + 1));
            assert!(g.nodes()[r.clone()].iter().all(|&o| o > lo && o < hi));
            let s: f64 = g.weights()[r].iter().sum();
            let exact = (hi.powi(3) - lo.powi(3)) / 3.0;
            assert!((s - exact).abs() <= 1e-12 * exact, "shell {i}");
        }
        let top: f64 = g.weights()[g.top_range()].iter().sum();
        assert_relative_eq!(top, (512.0 - 1.0) / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(RadialGrid::new(&[1.0, 1.5], 4, 2.0).is_err());
        assert!(RadialGrid::new(&[1.0, 0.5], 1, 2.0).is_err());
        assert!(RadialGrid::new(&[1.0, 0.5], 4, 0.9).is_err());
        assert!(RadialGrid::new(&[1.0, -0.5], 4, 2.0).is_err());
    }

    #[test]
    fn segments_are_consistent() {
        let g = small_grid();
        for i in 1..=g.n_shells() {
            for j in g.shell_range(i).unwrap() {
                assert_eq!(g.segment(j), Segment::Shell(i));
            }
        }
        for j in g.top_range() {
            assert_eq!(g.segment(j), Segment::Top);
        }
    }

    #[test]
    fn channel_indexing_roundtrips() {
        let t = AngularTruncation::new(7);
        assert_eq!(t.channels().count(), 64);
        for (k, (l, m)) in t.channels().enumerate() {
            assert_eq!(t.index(l, m), k);
            assert_eq!(t.channel(k), (l, m));
        }
    }

    #[test]
    fn channels_are_orthogonal() {
        let g = small_grid();
        let t = AngularTruncation::new(3);
        let u = ModeFunction::from_fn(g.clone(), t, |l, m, o| {
            if (l, m) == (1, 0) { Complex64::new(o, 1.0) } else { Complex64::new(0.0, 0.0) }
        });
        let v = ModeFunction::from_fn(g, t, |l, m, o| {
            if (l, m) == (2, 0) { Complex64::new(1.0, o) } else { Complex64::new(0.0, 0.0) }
        });
        assert_eq!(inner_product(&u, &v).unwrap(), Complex64::new(0.0, 0.0));
        assert_relative_eq!(inner_product(&u, &u).unwrap().re, u.norm_sqr());
    }

    #[test]
    fn symplectic_form_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = small_grid();
        let t = AngularTruncation::new(2);
        let u = ModeFunction::random(g.clone(), t, &mut rng);
        let v = ModeFunction::random(g, t, &mut rng);
        assert_eq!(symplectic_form(&u, &u).unwrap().abs() < 1e-12 * u.norm_sqr(), true);
        let iu = u.scale(Complex64::i());
        assert_relative_eq!(symplectic_form(&u, &iu).unwrap(), -u.norm_sqr(), max_relative = 1e-13);
        let a = symplectic_form(&u, &v).unwrap();
        let b = symplectic_form(&v, &u).unwrap();
        assert!((a + b).abs() < 1e-12 * u.norm() * v.norm());
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let g1 = small_grid();
        let g2 = Arc::new(RadialGrid::new(&[1.0, 0.5], 4, 2.0).unwrap());
        let t = AngularTruncation::new(1);
        let a = ModeFunction::zeros(g1, t);
        let b = ModeFunction::zeros(g2, t);
        assert_eq!(inner_product(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn radial_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = small_grid();
        let u = ModeFunction::random(g.clone(), AngularTruncation::new(2), &mut rng);
        assert_eq!(apply_radial_power(0.0, &u, RadialPower::Plain).coefficients(), u.coefficients());
        let back = apply_radial_power(0.5, &apply_radial_power(-0.5, &u, RadialPower::Plain), RadialPower::Plain);
        assert!((&back - &u).norm() <= 1e-14 * u.norm());
        assert_eq!(apply_radial_power(-0.5, &u, RadialPower::Plain).ir_flag(), IrFlag::IrCutoff);

        let plain = apply_radial_power(0.7, &u, RadialPower::Plain);
        let reg = apply_radial_power(0.7, &u, RadialPower::Regularized);
        let n = g.len();
        for ch in 0..u.truncation().channel_count() {
            for j in 0..n {
                let k = ch * n + j;
                if g.nodes()[j] < 1.0 {
                    assert_eq!(plain.coefficients()[k], reg.coefficients()[k]);
                } else {
                    let e = u.coefficients()[k] * 1.0f64.powf(0.7);
                    assert!((reg.coefficients()[k] - e).norm() < 1e-15 * e.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn projectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = small_grid();
        let t = AngularTruncation::new(2);
        let u = ModeFunction::random(g.clone(), t, &mut rng);
        let v = ModeFunction::random(g.clone(), t, &mut rng);
        let mut sum = project_top(&u);
        for i in 1..=g.n_shells() {
            sum = &sum + &project_shell(i, &u).unwrap();
        }
        assert!((&sum - &u).norm() == 0.0);
        let e1 = g.epsilon(2);
        let e2 = g.epsilon(4);
        let nested = project_above(e1, &project_above(e2, &u).unwrap()).unwrap();
        assert_eq!(nested, project_above(e1, &u).unwrap());
        let pi = project_shell(2, &u).unwrap();
        let pj = project_shell(3, &v).unwrap();
        assert_eq!(inner_product(&pi, &pj).unwrap(), Complex64::new(0.0, 0.0));
        // self-adjoint and idempotent
        let a = inner_product(&project_shell(2, &u).unwrap(), &v).unwrap();
        let b = inner_product(&u, &project_shell(2, &v).unwrap()).unwrap();
        assert!((a - b).norm() < 1e-13 * u.norm() * v.norm());
        assert_eq!(project_shell(2, &pi).unwrap(), pi);
        assert!(matches!(project_above(0.3, &u), Err(Error::NotShellBoundary(_))));
        assert!(project_shell(0, &u).is_err());
    }

    #[test]
    fn involutions_are_antiunitary_involutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = small_grid();
        let t = AngularTruncation::new(4);
        let u = ModeFunction::random(g.clone(), t, &mut rng);
        let v = ModeFunction::random(g, t, &mut rng);
        for kind in [Involution::PositionConj, Involution::MomentumConj] {
            let gg = apply_involution(kind, &apply_involution(kind, &u));
            assert!((&gg - &u).norm() == 0.0);
            let lhs = inner_product(&apply_involution(kind, &u), &apply_involution(kind, &v)).unwrap();
            let rhs = inner_product(&u, &v).unwrap().conj();
            assert!((lhs - rhs).norm() < 1e-12 * u.norm() * v.norm());
        }
    }

    #[test]
    fn imaginary_monopole_is_gamma_odd() {
        let g = small_grid();
        let t = AngularTruncation::new(2);
        let u = ModeFunction::from_fn(g, t, |l, _, o| {
            if l == 0 { Complex64::new(0.0, o.powf(-1.5)) } else { Complex64::new(0.0, 0.0) }
        });
        let gu = apply_involution(Involution::PositionConj, &u);
        assert!((&gu + &u).norm() == 0.0);
    }

    #[test]
    fn ray_norm_is_log_ratio() {
        let g = RadialGrid::new(&geometric_boundaries(1.0, 0.37, 12), 16, 4.0).unwrap();
        for i in 1..=12 {
            let (_, _, n2) = radial_ray(&g, i).unwrap();
            let exact = (g.epsilon(i) / g.epsilon(i + 1)).ln();
            assert!((n2 - exact).abs() <= 1e-10 * exact);
        }
    }

    #[test]
    fn q_projection_rank_and_kernel() {
        let g = small_grid();
        let l_max = 4;
        let t = AngularTruncation::new(l_max);
        let cfg = KprConfig::from_sequences(
            g.shell_boundaries().to_vec(),
            (1..=g.n_shells()).map(|i| 0.5 / i as f64).collect(),
            AngularRankRule::Capped(l_max),
            Involution::PositionConj,
        )
        .unwrap();
        for i in 1..=4 {
            // range dimension: count independent images of basis vectors
            let mut rank = 0;
            for (l, m) in t.channels() {
                for j in g.shell_range(i).unwrap() {
                    let u = ModeFunction::from_fn(g.clone(), t, |ll, mm, o| {
                        if (ll, mm) == (l, m) && o == g.nodes()[j] {
                            Complex64::new(1.0, 0.0)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    });
                    let q = apply_q(i, &u, &cfg).unwrap();
                    if j == g.shell_range(i).unwrap().start && q.norm() > 0.0 {
                        rank += 1;
                    }
                }
            }
            assert_eq!(rank, i * (i + 2));
        }
        // ξ_i ⊗ Y_10 is fixed, monopole is annihilated
        let i = 3;
        let r = g.shell_range(i).unwrap();
        let fixed = ModeFunction::from_fn(g.clone(), t, |l, m, o| {
            if (l, m) == (1, 0) && o > g.epsilon(i + 1) && o < g.epsilon(i) {
                Complex64::new(o.powf(-1.5), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        assert!(!r.is_empty());
        let q = apply_q(i, &fixed, &cfg).unwrap();
        assert!((&q - &fixed).norm() < 1e-13 * fixed.norm());
        let mono = ModeFunction::from_fn(g.clone(), t, |l, _, o| {
            if l == 0 { Complex64::new(o, 1.0) } else { Complex64::new(0.0, 0.0) }
        });
        for i in 1..=g.n_shells() {
            assert!(apply_q(i, &mono, &cfg).unwrap().is_zero());
        }
        let narrow = ModeFunction::zeros(g.clone(), AngularTruncation::new(2));
        assert!(matches!(apply_q(3, &narrow, &cfg), Err(Error::AngularTruncation { .. })));
    }
}
