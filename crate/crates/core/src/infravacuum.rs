//! KPR-like infravacuum backgrounds.
//!
//! A configuration fixes shell boundaries `ε_i`, amplitudes `b_i ∈ (0, 1)` and
//! the angular content of the finite-rank projections `Q_i`. From these data
//! `T_1 = 1 + Σ (b_i - 1) Q_i`, `T_2 = 1 + Σ (1/b_i - 1) Q_i` and the real
//! linear symplectic operator `T = T_2 (1+Γ)/2 + T_1 (1-Γ)/2` are applied to
//! mode functions, and the quasifree state `ω_T(W(f)) = exp(-‖Tf‖²/4)` is
//! evaluated.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modespace::{
    apply_involution, apply_radial_power, inner_product, project_above, radial_ray, Involution,
    ModeFunction, RadialGrid, RadialPower,
};

/// Which angular momenta enter `Q̃_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "cap")]
pub enum AngularRankRule {
    /// `0 < l ≤ i`.
    UpToShellIndex,
    /// `0 < l ≤ min(i, cap)`.
    Capped(usize),
}

impl AngularRankRule {
    pub fn max_l(&self, i: usize) -> usize {
        match *self {
            AngularRankRule::UpToShellIndex => i,
            AngularRankRule::Capped(cap) => i.min(cap),
        }
    }
}

/// Generating rule `ε_i = ε_1 q^{i-1}`, `b_i = b_0 i^{-α}`; lets the series
/// diagnostics look past the stored shells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KprParams {
    pub eps1: f64,
    pub q_ratio: f64,
    pub b_scale: f64,
    pub b_alpha: f64,
    pub n_shells: usize,
    pub rank_rule: AngularRankRule,
    pub involution: Involution,
}

impl Default for KprParams {
    fn default() -> Self {
        Self {
            eps1: 1.0,
            q_ratio: 0.5,
            b_scale: 0.5,
            b_alpha: 1.0,
            n_shells: 20,
            rank_rule: AngularRankRule::Capped(8),
            involution: Involution::PositionConj,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KprConfig {
    shell_boundaries: Vec<f64>,
    b: Vec<f64>,
    rank_rule: AngularRankRule,
    involution: Involution,
    params: Option<KprParams>,
}

/// Exponent of the radial ray `ξ_i(ω) = ω^{-3/2}`.
pub const XI_EXPONENT: f64 = -1.5;

const SERIES_HORIZON: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesTestKind {
    Ratio,
    Raabe,
}

/// Convergence diagnostics for a positive series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTest {
    pub name: String,
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub kind: SeriesTestKind,
    /// Tail value of the test statistic: `sup a_{i+1}/a_i` (ratio) or
    /// `inf i (a_i/a_{i+1} - 1)` (Raabe) over the second half of the terms.
    pub statistic: f64,
    /// First index (1-based) from which the terms decrease monotonically.
    pub decreasing_from: Option<usize>,
    pub converges: bool,
}

impl SeriesTest {
    /// Ratio test, falling back to Raabe's test when the ratios approach one.
    pub fn classify(name: &str, terms: Vec<f64>) -> Self {
        let mut partial_sums = Vec::with_capacity(terms.len());
        let mut acc = 0.0;
        for t in &terms {
            acc += t;
            partial_sums.push(acc);
        }
        let n = terms.len();
        let decreasing_from = (0..n)
            .find(|&s| terms[s..].windows(2).all(|w| w[1] < w[0]))
            .map(|s| s + 1);
        let half = n / 2;
        let ratio_sup = (half..n.saturating_sub(1))
            .map(|i| terms[i + 1] / terms[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if n >= 4 && ratio_sup < 0.98 {
            return Self {
                name: name.into(),
                terms,
                partial_sums,
                kind: SeriesTestKind::Ratio,
                statistic: ratio_sup,
                decreasing_from,
                converges: true,
            };
        }
        let raabe_inf = (half..n.saturating_sub(1))
            .map(|i| (i + 1) as f64 * (terms[i] / terms[i + 1] - 1.0))
            .fold(f64::INFINITY, f64::min);
        Self {
            name: name.into(),
            terms,
            partial_sums,
            kind: SeriesTestKind::Raabe,
            statistic: raabe_inf,
            decreasing_from,
            converges: n >= 4 && raabe_inf > 1.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    /// `Σ ε_i rk(Q_i) / b_i²` (finite mean energy).
    pub energy: SeriesTest,
    /// `Σ b_i² ln(ε_i/ε_{i+1})`.
    pub kpr_condition: SeriesTest,
    /// Log-log growth exponent of `ln(ε_i/ε_{i+1})` over the tail.
    pub log_ratio_growth: f64,
}

impl SummabilityReport {
    pub fn all_converge(&self) -> bool {
        self.energy.converges && self.kpr_condition.converges && self.log_ratio_growth.is_finite()
    }
}

impl KprConfig {
    /// Geometric shells and power-law amplitudes, with both summability
    /// conditions verified.
    pub fn geometric(params: KprParams) -> Result<(Self, SummabilityReport)> {
        if !(params.q_ratio > 0.0 && params.q_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!("q_ratio {} not in (0, 1)", params.q_ratio)));
        }
        if !(params.b_scale > 0.0 && params.b_scale < 1.0) {
            return Err(Error::InvalidConfig(format!("b_scale {} not in (0, 1)", params.b_scale)));
        }
        if params.n_shells == 0 {
            return Err(Error::InvalidConfig("n_shells must be at least 1".into()));
        }
        if !(params.eps1 > 0.0) {
            return Err(Error::InvalidConfig("eps1 must be positive".into()));
        }
        let boundaries: Vec<f64> = (0..=params.n_shells)
            .map(|k| params.eps1 * params.q_ratio.powi(k as i32))
            .collect();
        let b: Vec<f64> = (1..=params.n_shells)
            .map(|i| params.b_scale * (i as f64).powf(-params.b_alpha))
            .collect();
        let mut cfg = Self::build(boundaries, b, params.rank_rule, params.involution)?;
        cfg.params = Some(params);
        let report = cfg.summability();
        if !report.kpr_condition.converges || params.b_alpha <= 0.5 {
            return Err(Error::NotKprLike(format!(
                "Σ b_i² ln(ε_i/ε_(i+1)) diverges for b_alpha = {} (Raabe statistic {:.3} ≤ 1; geometric shells need b_alpha > 1/2)",
                params.b_alpha, report.kpr_condition.statistic
            )));
        }
        if !report.energy.converges {
            return Err(Error::InvalidConfig(format!(
                "Σ ε_i rk(Q_i)/b_i² diverges (ratio statistic {:.3})",
                report.energy.statistic
            )));
        }
        Ok((cfg, report))
    }

    /// Explicit finite sequences; `b` must lie in `(0, 1)` and decrease.
    pub fn from_sequences(
        shell_boundaries: Vec<f64>,
        b: Vec<f64>,
        rank_rule: AngularRankRule,
        involution: Involution,
    ) -> Result<Self> {
        Self::build(shell_boundaries, b, rank_rule, involution)
    }

    fn build(
        shell_boundaries: Vec<f64>,
        b: Vec<f64>,
        rank_rule: AngularRankRule,
        involution: Involution,
    ) -> Result<Self> {
        if shell_boundaries.len() != b.len() + 1 || b.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "{} boundaries for {} amplitudes",
                shell_boundaries.len(),
                b.len()
            )));
        }
        if shell_boundaries.windows(2).any(|w| !(w[1] < w[0])) || shell_boundaries.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidConfig("shell boundaries must be positive and strictly decreasing".into()));
        }
        if b.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
            return Err(Error::InvalidConfig("amplitudes b_i must lie in (0, 1)".into()));
        }
        if b.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig("amplitudes b_i must decrease".into()));
        }
        Ok(Self { shell_boundaries, b, rank_rule, involution, params: None })
    }

    pub fn n_shells(&self) -> usize {
        self.b.len()
    }
    pub fn shell_boundaries(&self) -> &[f64] {
        &self.shell_boundaries
    }
    pub fn amplitudes(&self) -> &[f64] {
        &self.b
    }
    /// `b_i`, 1-based.
    pub fn b(&self, i: usize) -> f64 {
        self.b[i - 1]
    }
    pub fn epsilon(&self, i: usize) -> f64 {
        self.shell_boundaries[i - 1]
    }
    pub fn rank_rule(&self) -> AngularRankRule {
        self.rank_rule
    }
    pub fn involution(&self) -> Involution {
        self.involution
    }
    pub fn params(&self) -> Option<&KprParams> {
        self.params.as_ref()
    }

    pub fn with_involution(mut self, involution: Involution) -> Self {
        self.involution = involution;
        if let Some(p) = self.params.as_mut() {
            p.involution = involution;
        }
        self
    }

    /// Every amplitude multiplied by `factor`; used for scaling studies and
    /// for deliberately broken inverse pairs.
    pub fn with_scaled_amplitudes(&self, factor: f64) -> Result<Self> {
        let b = self.b.iter().map(|x| x * factor).collect();
        let mut out = Self::build(self.shell_boundaries.clone(), b, self.rank_rule, self.involution)?;
        out.params = self.params.map(|mut p| {
            p.b_scale *= factor;
            p
        });
        Ok(out)
    }

    /// Largest `l` in `Q̃_i`.
    pub fn max_angular_momentum(&self, i: usize) -> usize {
        self.rank_rule.max_l(i)
    }

    /// `rk Q_i = Σ_{l=1}^{L_i} (2l+1) = L_i (L_i + 2)`.
    pub fn rank(&self, i: usize) -> usize {
        let l = self.max_angular_momentum(i);
        l * (l + 2)
    }

    fn eps_any(&self, i: usize) -> f64 {
        match self.params {
            Some(p) => p.eps1 * p.q_ratio.powi(i as i32 - 1),
            None => self.shell_boundaries[i - 1],
        }
    }

    fn b_any(&self, i: usize) -> f64 {
        match self.params {
            Some(p) => p.b_scale * (i as f64).powf(-p.b_alpha),
            None => self.b[i - 1],
        }
    }

    fn horizon(&self) -> usize {
        if self.params.is_some() {
            self.n_shells().max(SERIES_HORIZON)
        } else {
            self.n_shells()
        }
    }

    pub fn summability(&self) -> SummabilityReport {
        let h = self.horizon();
        let energy_terms: Vec<f64> = (1..=h)
            .map(|i| self.eps_any(i) * self.rank(i) as f64 / self.b_any(i).powi(2))
            .collect();
        let log_ratios: Vec<f64> = (1..=h).map(|i| (self.eps_any(i) / self.eps_any(i + 1)).ln()).collect();
        let kpr_terms: Vec<f64> = (1..=h).map(|i| self.b_any(i).powi(2) * log_ratios[i - 1]).collect();
        let growth = if h >= 4 {
            let (a, b) = (h / 2, h);
            (log_ratios[b - 1] / log_ratios[a - 1]).ln() / ((b as f64) / (a as f64)).ln()
        } else {
            0.0
        };
        SummabilityReport {
            energy: SeriesTest::classify("sum eps_i rk(Q_i) / b_i^2", energy_terms),
            kpr_condition: SeriesTest::classify("sum b_i^2 ln(eps_i/eps_(i+1))", kpr_terms),
            log_ratio_growth: growth,
        }
    }

    /// Shells shared by the configuration and `grid`, checking alignment.
    pub fn aligned_shells(&self, grid: &RadialGrid) -> Result<usize> {
        let n = self.n_shells().min(grid.n_shells());
        for k in 0..=n {
            let (a, b) = (self.shell_boundaries[k], grid.shell_boundaries()[k]);
            if (a - b).abs() > 1e-12 * a {
                return Err(Error::NotShellBoundary(a));
            }
        }
        Ok(n)
    }
}

/// Adds `Σ_{i ≤ n} (factor(i) - 1) Q_i u` to `u` in place.
fn shellwise_q_scale<F: Fn(usize) -> f64>(
    u: &mut ModeFunction,
    cfg: &KprConfig,
    n_trunc: Option<usize>,
    factor: F,
) -> Result<()> {
    let grid = u.grid().clone();
    let mut n = cfg.aligned_shells(&grid)?;
    if let Some(t) = n_trunc {
        n = n.min(t);
    }
    let trunc = u.truncation();
    let nodes = grid.len();
    for i in 1..=n {
        let l_top = cfg.max_angular_momentum(i);
        if l_top > trunc.l_max {
            return Err(Error::AngularTruncation { needed: l_top, l_max: trunc.l_max });
        }
        let f = factor(i) - 1.0;
        let (range, xi, norm2) = radial_ray(&grid, i)?;
        let w = &grid.weights()[range.clone()];
        let coeff = u.coefficients_mut();
        for l in 1..=l_top {
            for m in -(l as i64)..=(l as i64) {
                let ch = trunc.index(l, m);
                let seg = &mut coeff[ch * nodes + range.start..ch * nodes + range.end];
                let overlap: Complex64 =
                    seg.iter().zip(&xi).zip(w).map(|((z, x), w)| z * (x * w)).sum::<Complex64>() / norm2;
                let delta = overlap * f;
                for (z, x) in seg.iter_mut().zip(&xi) {
                    *z += delta * *x;
                }
            }
        }
    }
    Ok(())
}

pub fn apply_t1(u: &ModeFunction, cfg: &KprConfig) -> Result<ModeFunction> {
    apply_t1_truncated(u, cfg, None)
}

pub fn apply_t2(u: &ModeFunction, cfg: &KprConfig) -> Result<ModeFunction> {
    apply_t2_truncated(u, cfg, None)
}

pub fn apply_t1_truncated(u: &ModeFunction, cfg: &KprConfig, n: Option<usize>) -> Result<ModeFunction> {
    let mut out = u.clone();
    shellwise_q_scale(&mut out, cfg, n, |i| cfg.b(i))?;
    Ok(out)
}

pub fn apply_t2_truncated(u: &ModeFunction, cfg: &KprConfig, n: Option<usize>) -> Result<ModeFunction> {
    let mut out = u.clone();
    shellwise_q_scale(&mut out, cfg, n, |i| 1.0 / cfg.b(i))?;
    Ok(out)
}

/// Amplification `max 1/b_i` engaged by `T_2` on the configuration's shells.
pub fn t2_amplification(cfg: &KprConfig) -> f64 {
    cfg.amplitudes().iter().map(|b| 1.0 / b).fold(1.0, f64::max)
}

/// `T u = T_2 (1+Γ)/2 u + T_1 (1-Γ)/2 u`, optionally stopping the shell sums
/// at `n_trunc` (the finite-rank approximant `T_n`).
pub fn apply_t(u: &ModeFunction, cfg: &KprConfig, n_trunc: Option<usize>) -> Result<ModeFunction> {
    apply_t_pair(u, cfg, cfg, n_trunc)
}

/// `T` assembled from the `T_1` of `t1_cfg` and the `T_2` of `t2_cfg`. With
/// different configurations the pair is not inverse and `T` not symplectic.
pub fn apply_t_pair(
    u: &ModeFunction,
    t1_cfg: &KprConfig,
    t2_cfg: &KprConfig,
    n_trunc: Option<usize>,
) -> Result<ModeFunction> {
    let gu = apply_involution(t1_cfg.involution(), u);
    let re = &(u + &gu) * 0.5;
    let im = &(u - &gu) * 0.5;
    let a = apply_t2_truncated(&re, t2_cfg, n_trunc)?;
    let b = apply_t1_truncated(&im, t1_cfg, n_trunc)?;
    Ok(&a + &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymplecticResiduals {
    /// `max |Im⟨Tu,Tv⟩ - Im⟨u,v⟩| / (‖u‖‖v‖)`.
    pub symplectic: f64,
    /// `max |⟨T_1 u, T_2 v⟩ - ⟨u,v⟩| / (‖u‖‖v‖)`.
    pub inverse_pair: f64,
    pub trials: usize,
}

/// Random vectors in `D_0`: Gaussian coefficients cut off below a randomly
/// chosen shell boundary.
pub fn random_d0<R: Rng + ?Sized>(
    grid: &std::sync::Arc<RadialGrid>,
    trunc: crate::modespace::AngularTruncation,
    rng: &mut R,
) -> ModeFunction {
    let u = ModeFunction::random(grid.clone(), trunc, rng);
    let k = rng.gen_range(1..=grid.n_shells() + 1);
    project_above(grid.shell_boundaries()[k - 1], &u).expect("boundary from the grid")
}

pub fn symplectic_check<R: Rng + ?Sized>(
    cfg: &KprConfig,
    grid: &std::sync::Arc<RadialGrid>,
    trunc: crate::modespace::AngularTruncation,
    trials: usize,
    rng: &mut R,
) -> Result<SymplecticResiduals> {
    symplectic_check_pair(cfg, cfg, grid, trunc, trials, rng)
}

pub fn symplectic_check_pair<R: Rng + ?Sized>(
    t1_cfg: &KprConfig,
    t2_cfg: &KprConfig,
    grid: &std::sync::Arc<RadialGrid>,
    trunc: crate::modespace::AngularTruncation,
    trials: usize,
    rng: &mut R,
) -> Result<SymplecticResiduals> {
    let mut out = SymplecticResiduals { symplectic: 0.0, inverse_pair: 0.0, trials };
    for _ in 0..trials.max(1) {
        let u = random_d0(grid, trunc, rng);
        let v = random_d0(grid, trunc, rng);
        let scale = u.norm() * v.norm();
        let tu = apply_t_pair(&u, t1_cfg, t2_cfg, None)?;
        let tv = apply_t_pair(&v, t1_cfg, t2_cfg, None)?;
        let s = (inner_product(&tu, &tv)?.im - inner_product(&u, &v)?.im).abs() / scale;
        let t1u = apply_t1(&u, t1_cfg)?;
        let t2v = apply_t2(&v, t2_cfg)?;
        let p = (inner_product(&t1u, &t2v)? - inner_product(&u, &v)?).norm() / scale;
        out.symplectic = out.symplectic.max(s);
        out.inverse_pair = out.inverse_pair.max(p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateValueReport {
    pub f_norm: f64,
    pub tf_norm: f64,
    /// `ω_T(W(f)) = exp(-‖Tf‖²/4)`.
    pub state_value: f64,
    /// `ω_0(W(f)) = exp(-‖f‖²/4)`.
    pub vacuum_value: f64,
}

pub fn state_value(cfg: &KprConfig, f: &ModeFunction) -> Result<StateValueReport> {
    let tf = apply_t(f, cfg, None)?;
    let f_norm = f.norm();
    let tf_norm = tf.norm();
    Ok(StateValueReport {
        f_norm,
        tf_norm,
        state_value: (-0.25 * tf_norm * tf_norm).exp(),
        vacuum_value: (-0.25 * f_norm * f_norm).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2BoundReport {
    /// `Σ (1/b_i - 1)² rk(Q_i) ε_i`, bounding `‖(T_2 - 1) ω_r^{1/2}‖²`.
    pub majorant: f64,
    /// `√ε_1 + √majorant`, bounding `‖T_2 ω_r^{1/2}‖`.
    pub norm_bound: f64,
    /// Largest `‖T_2 ω_r^{1/2} v‖/‖v‖` over the random probes and the
    /// power-iterated vector.
    pub empirical_norm: f64,
    pub probes: usize,
    pub holds: bool,
}

pub fn t2_regularized_bound<R: Rng + ?Sized>(
    cfg: &KprConfig,
    grid: &std::sync::Arc<RadialGrid>,
    trunc: crate::modespace::AngularTruncation,
    probes: usize,
    rng: &mut R,
) -> Result<T2BoundReport> {
    let h = cfg.horizon();
    let majorant: f64 = (1..=h)
        .map(|i| (1.0 / cfg.b_any(i) - 1.0).powi(2) * cfg.rank(i) as f64 * cfg.eps_any(i))
        .sum();
    if !majorant.is_finite() {
        return Err(Error::InvalidConfig("T_2 majorant diverges".into()));
    }
    let op = |v: &ModeFunction| -> Result<ModeFunction> {
        apply_t2(&apply_radial_power(0.5, v, RadialPower::Regularized), cfg)
    };
    let adj = |v: &ModeFunction| -> Result<ModeFunction> {
        Ok(apply_radial_power(0.5, &apply_t2(v, cfg)?, RadialPower::Regularized))
    };
    let mut empirical: f64 = 0.0;
    for _ in 0..probes {
        let v = ModeFunction::random(grid.clone(), trunc, rng);
        empirical = empirical.max(op(&v)?.norm() / v.norm());
    }
    let mut x = ModeFunction::random(grid.clone(), trunc, rng);
    for _ in 0..60 {
        let y = adj(&op(&x)?)?;
        let n = y.norm();
        x = &y * (1.0 / n);
    }
    empirical = empirical.max(op(&x)?.norm() / x.norm());
    let norm_bound = cfg.epsilon(1).sqrt() + majorant.sqrt();
    Ok(T2BoundReport { majorant, norm_bound, empirical_norm: empirical, probes, holds: empirical <= norm_bound })
}

/// Power iteration for a self-adjoint operator; returns `‖A x‖/‖x‖` at the
/// final iterate.
pub fn power_iteration<F>(apply: F, start: ModeFunction, iterations: usize) -> Result<f64>
where
    F: Fn(&ModeFunction) -> Result<ModeFunction>,
{
    let mut x = &start * (1.0 / start.norm());
    let mut est = 0.0;
    for _ in 0..iterations {
        let y = apply(&x)?;
        est = y.norm();
        if est == 0.0 {
            return Ok(0.0);
        }
        x = &y * (1.0 / est);
    }
    Ok(est)
}

/// `‖T_1‖` by power iteration from a random start.
pub fn t1_norm_estimate<R: Rng + ?Sized>(
    cfg: &KprConfig,
    grid: &std::sync::Arc<RadialGrid>,
    trunc: crate::modespace::AngularTruncation,
    iterations: usize,
    rng: &mut R,
) -> Result<f64> {
    let start = ModeFunction::random(grid.clone(), trunc, rng);
    power_iteration(|x| apply_t1(x, cfg), start, iterations)
}

/// `‖T_2‖` restricted to shells `1..=n`, by power iteration from a random
/// start supported on those shells.
pub fn t2_restricted_norm_estimate<R: Rng + ?Sized>(
    cfg: &KprConfig,
    n: usize,
    grid: &std::sync::Arc<RadialGrid>,
    trunc: crate::modespace::AngularTruncation,
    iterations: usize,
    rng: &mut R,
) -> Result<f64> {
    let full = ModeFunction::random(grid.clone(), trunc, rng);
    let start = project_above(grid.epsilon(n + 1), &full)?;
    power_iteration(|x| apply_t2_truncated(x, cfg, Some(n)), start, iterations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Per-shell `ε_i rk(Q_i) / b_i²`.
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub total: f64,
    /// Tail estimate assuming the last term ratio persists.
    pub extrapolated_total: f64,
    pub decreasing_from: Option<usize>,
}

pub fn mean_energy_bound(cfg: &KprConfig) -> EnergyReport {
    let terms: Vec<f64> = (1..=cfg.n_shells())
        .map(|i| cfg.epsilon(i) * cfg.rank(i) as f64 / cfg.b(i).powi(2))
        .collect();
    let test = SeriesTest::classify("energy", terms);
    let n = test.terms.len();
    let total = test.total();
    let extrapolated_total = if n >= 2 {
        let r = test.terms[n - 1] / test.terms[n - 2];
        if r < 1.0 {
            total + test.terms[n - 1] * r / (1.0 - r)
        } else {
            f64::INFINITY
        }
    } else {
        total
    };
    EnergyReport {
        terms: test.terms,
        partial_sums: test.partial_sums,
        total,
        extrapolated_total,
        decreasing_from: test.decreasing_from,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::{geometric_boundaries, AngularTruncation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup(n: usize, l_max: usize) -> (KprConfig, Arc<RadialGrid>, AngularTruncation) {
        let params = KprParams { n_shells: n, rank_rule: AngularRankRule::Capped(l_max), ..Default::default() };
        let (cfg, _) = KprConfig::geometric(params).unwrap();
        let grid = Arc::new(RadialGrid::with_panel_width(&geometric_boundaries(1.0, 0.5, n), 8, 4.0, 1.0).unwrap());
        (cfg, grid, AngularTruncation::new(l_max))
    }

    #[test]
    fn default_config_is_summable() {
        let (_, rep) = KprConfig::geometric(KprParams::default()).unwrap();
        assert!(rep.energy.converges && rep.energy.kind == SeriesTestKind::Ratio);
        assert!(rep.kpr_condition.converges && rep.kpr_condition.kind == SeriesTestKind::Raabe);
        assert!(rep.energy.decreasing_from.unwrap() <= 12);
    }

    #[test]
    fn slow_amplitudes_are_rejected() {
        let p = KprParams { b_alpha: 0.4, ..Default::default() };
        assert!(matches!(KprConfig::geometric(p), Err(Error::NotKprLike(_))));
        // just above the threshold the Raabe statistic exceeds one
        let p = KprParams { b_alpha: 0.6, ..Default::default() };
        assert!(KprConfig::geometric(p).is_ok());
    }

    #[test]
    fn single_shell_config() {
        let (cfg, grid, t) = setup(1, 2);
        assert_eq!(cfg.rank(1), 3);
        let u = ModeFunction::from_fn(grid.clone(), t, |l, m, o| {
            if (l, m) == (1, 0) && o < 1.0 { Complex64::new(o.powf(-1.5), 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        let tu = apply_t(&u, &cfg, None).unwrap();
        // real coefficient with odd l is Γ-odd, so T acts as b_1
        assert!((&tu - &(&u * cfg.b(1))).norm() < 1e-13 * u.norm());
        let w = ModeFunction::from_fn(grid, t, |l, _, _| {
            if l == 2 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        assert_eq!(apply_t(&w, &cfg, None).unwrap(), w);
    }

    #[test]
    fn inverse_pair_and_eigenvalues() {
        let (cfg, grid, t) = setup(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = ModeFunction::random(grid.clone(), t, &mut rng);
        let back = apply_t1(&apply_t2(&u, &cfg).unwrap(), &cfg).unwrap();
        assert!((&back - &u).norm() <= 1e-12 * u.norm());
        let i = 4;
        let r = grid.shell_range(i).unwrap();
        let xi = ModeFunction::from_fn(grid.clone(), t, |l, m, o| {
            if (l, m) == (1, 0) && o > grid.epsilon(i + 1) && o < grid.epsilon(i) {
                Complex64::new(o.powf(-1.5), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        assert_eq!(r.len(), 8);
        let t1 = apply_t1(&xi, &cfg).unwrap();
        let t2 = apply_t2(&xi, &cfg).unwrap();
        assert!((&t1 - &(&xi * cfg.b(i))).norm() < 1e-13 * xi.norm());
        assert!((&t2 - &(&xi * (1.0 / cfg.b(i)))).norm() < 1e-12 * xi.norm() / cfg.b(i));
    }

    #[test]
    fn t_commutes_with_gamma_and_fixes_monopoles() {
        let (cfg, grid, t) = setup(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = ModeFunction::random(grid.clone(), t, &mut rng);
        let a = apply_t(&apply_involution(Involution::PositionConj, &u), &cfg, None).unwrap();
        let b = apply_involution(Involution::PositionConj, &apply_t(&u, &cfg, None).unwrap());
        assert!((&a - &b).norm() <= 1e-12 * u.norm());
        let mono = ModeFunction::from_fn(grid, t, |l, _, o| {
            if l == 0 { Complex64::new(o.sin(), o.cos()) } else { Complex64::new(0.0, 0.0) }
        });
        let tm = apply_t(&mono, &cfg, None).unwrap();
        assert!((&tm - &mono).norm() <= 1e-15 * mono.norm());
        let s = state_value(&cfg, &mono).unwrap();
        assert!((s.state_value - s.vacuum_value).abs() <= 1e-15);
    }

    #[test]
    fn literal_t_matches_block_form() {
        // T via the Γ split equals T_1 on Γ-odd and T_2 on Γ-even inputs
        let (cfg, grid, t) = setup(5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = ModeFunction::random(grid, t, &mut rng);
        let gu = apply_involution(Involution::PositionConj, &u);
        let even = &(&u + &gu) * 0.5;
        let odd = &(&u - &gu) * 0.5;
        let te = apply_t(&even, &cfg, None).unwrap();
        let to = apply_t(&odd, &cfg, None).unwrap();
        assert!((&te - &apply_t2(&even, &cfg).unwrap()).norm() <= 1e-12 * te.norm());
        assert!((&to - &apply_t1(&odd, &cfg).unwrap()).norm() <= 1e-12 * to.norm().max(1e-300));
    }

    #[test]
    fn symplecticity_and_fault_injection() {
        let (cfg, grid, t) = setup(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r = symplectic_check(&cfg, &grid, t, 20, &mut rng).unwrap();
        assert!(r.symplectic < 1e-12 && r.inverse_pair < 1e-12, "{r:?}");
        let broken = cfg.with_scaled_amplitudes(0.5).unwrap();
        let r = symplectic_check_pair(&cfg, &broken, &grid, t, 5, &mut rng).unwrap();
        assert!(r.inverse_pair > 1e-6 && r.symplectic > 1e-6, "{r:?}");
    }

    #[test]
    fn gamma_odd_shell_mode_raises_state_value() {
        let (cfg, grid, t) = setup(6, 3);
        let i = 3;
        let f = ModeFunction::from_fn(grid.clone(), t, |l, m, o| {
            if (l, m) == (1, 0) && o > grid.epsilon(i + 1) && o < grid.epsilon(i) {
                Complex64::new(0.3 * o.powf(-1.5), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let rep = state_value(&cfg, &f).unwrap();
        let expect = (-0.25 * cfg.b(i).powi(2) * f.norm_sqr()).exp();
        assert!((rep.state_value - expect).abs() < 1e-14);
        assert!(rep.state_value > rep.vacuum_value);
        assert_eq!(state_value(&cfg, &ModeFunction::zeros(grid, t)).unwrap().state_value, 1.0);
    }

    #[test]
    fn norms_of_t1_and_t2() {
        let (cfg, grid, t) = setup(6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n1 = t1_norm_estimate(&cfg, &grid, t, 100, &mut rng).unwrap();
        assert!((n1 - 1.0).abs() < 1e-10);
        let mut prev = 0.0;
        for n in 1..=6 {
            let est = t2_restricted_norm_estimate(&cfg, n, &grid, t, 400, &mut rng).unwrap();
            assert!(est > prev);
            assert!((est - 1.0 / cfg.b(n)).abs() < 1e-3 / cfg.b(n), "n={n} est={est}");
            prev = est;
        }
    }

    #[test]
    fn regularized_t2_is_bounded() {
        let (cfg, grid, t) = setup(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rep = t2_regularized_bound(&cfg, &grid, t, 10, &mut rng).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!(rep.majorant.is_finite() && rep.majorant > 0.0);
    }

    #[test]
    fn energy_series() {
        let (cfg, _) = KprConfig::geometric(KprParams::default()).unwrap();
        let e = mean_energy_bound(&cfg);
        assert!(e.decreasing_from.is_some());
        let doubled = cfg.with_scaled_amplitudes(1.9).unwrap();
        let e2 = mean_energy_bound(&doubled);
        for (a, b) in e.terms.iter().zip(&e2.terms) {
            assert!((b / a - 1.0 / 1.9f64.powi(2)).abs() < 1e-12);
        }
        let (cfg40, _) = KprConfig::geometric(KprParams { n_shells: 40, ..Default::default() }).unwrap();
        let e40 = mean_energy_bound(&cfg40);
        assert!((e.extrapolated_total - e40.total).abs() < 0.01 * e40.total);
    }
}
