//! Scenario configuration: TOML blocks and their cross-checks.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use infravac_core::localization::ConeProbe;
use infravac_core::modespace::geometric_boundaries;
use infravac_core::{
    AngularRankRule, AngularTruncation, ChargeAutomorphism, ConeSpec, Error, Involution, KprConfig, KprParams,
    RadialGrid, SpecialForm, SummabilityReport,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridBlock,
    pub kpr: KprBlock,
    pub charge: ChargeBlock,
    pub cone: ConeBlock,
    pub probe: ProbeBlock,
    #[serde(default)]
    pub suite: SuiteBlock,
    #[serde(default)]
    pub outputs: OutputsBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Only `geometric` (`ε_i = eps1 · q_ratio^(i-1)`) is supported.
    #[serde(default = "geometric")]
    pub rule: String,
    pub eps1: f64,
    pub q_ratio: f64,
    pub n_shells: usize,
    pub nodes_per_shell: usize,
    pub uv_cutoff: f64,
    pub l_max: usize,
}

fn geometric() -> String {
    "geometric".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KprBlock {
    pub q_ratio: f64,
    #[serde(default = "half")]
    pub b_scale: f64,
    pub b_alpha: f64,
    pub n_shells: usize,
    #[serde(default = "position_conj")]
    pub involution: Involution,
    pub l_rule: AngularRankRule,
}

fn half() -> f64 {
    0.5
}

fn position_conj() -> Involution {
    Involution::PositionConj
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeBlock {
    pub q: f64,
    pub r1: f64,
    pub r2: f64,
    /// Same charge, different profile: the equal-charge sector partner.
    pub partner_r1: f64,
    pub partner_r2: f64,
    /// Charge of the unequal-charge sector partner (same profile as the main charge).
    pub unequal_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeBlock {
    pub axis: [f64; 3],
    pub half_angle_deg: f64,
    pub bump_sharpness: f64,
    /// Legendre order used to resolve the cutoff before truncation.
    #[serde(default = "sixty_four")]
    pub expansion_order: usize,
}

fn sixty_four() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Bump { r_lo: f64, r_hi: f64, amplitude: f64 },
    Ball { radius: f64, amplitude: f64 },
}

impl ProfileSpec {
    pub fn build(&self) -> infravac_core::Result<infravac_core::RadialProfile> {
        match *self {
            ProfileSpec::Bump { r_lo, r_hi, amplitude } => infravac_core::RadialProfile::bump(r_lo, r_hi, amplitude),
            ProfileSpec::Ball { radius, amplitude } => infravac_core::RadialProfile::ball(radius, amplitude),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBlock {
    pub h: ProfileSpec,
    #[serde(default)]
    pub g: Option<ProfileSpec>,
    pub lambdas: Vec<f64>,
    /// Probe containing the origin, run alongside `h` in the dilation scenario.
    #[serde(default)]
    pub origin_probe: Option<ProfileSpec>,
    #[serde(default)]
    pub origin_lambdas: Vec<f64>,
    pub sector_lambdas: Vec<f64>,
    pub cap_half_angle_deg: f64,
    pub cap_expansion_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteBlock {
    pub symplectic_trials: usize,
    pub symplectic_l_max: usize,
    pub dual_scenarios: usize,
    pub dual_l_max: usize,
    pub power_iterations: usize,
}

impl Default for SuiteBlock {
    fn default() -> Self {
        Self { symplectic_trials: 100, symplectic_l_max: 8, dual_scenarios: 20, dual_l_max: 3, power_iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsBlock {
    pub dir: PathBuf,
    pub csv: bool,
}

impl Default for OutputsBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("results"), csv: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Everything the scenarios need, built once from a valid configuration.
#[derive(Debug, Clone)]
pub struct Validated {
    pub raw: ScenarioConfig,
    pub grid: Arc<RadialGrid>,
    pub trunc: AngularTruncation,
    pub kpr: KprConfig,
    pub summability: SummabilityReport,
    pub charge: SpecialForm,
    pub cone: ConeSpec,
    pub probe: ConeProbe,
}

pub fn load(path: &Path) -> Result<ScenarioConfig, Vec<ConfigIssue>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![ConfigIssue { location: path.display().to_string(), message: e.to_string() }])?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ScenarioConfig, Vec<ConfigIssue>> {
    toml::from_str(text).map_err(|e| {
        let location = match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].lines().count().max(1);
                format!("line {line}")
            }
            None => "document".into(),
        };
        vec![ConfigIssue { location, message: e.message().to_string() }]
    })
}

pub fn load_validated(path: &Path) -> Result<Validated, Vec<ConfigIssue>> {
    validate(load(path)?)
}

pub fn validate(cfg: ScenarioConfig) -> Result<Validated, Vec<ConfigIssue>> {
    let mut issues = vec![];
    let mut push = |location: &str, message: String| issues.push(ConfigIssue { location: location.into(), message });

    let g = &cfg.grid;
    if g.rule != "geometric" {
        push("grid.rule", format!("unknown shell rule {:?} (only \"geometric\")", g.rule));
    }
    if g.nodes_per_shell < 2 {
        push("grid.nodes_per_shell", format!("{} nodes per shell, need at least 2", g.nodes_per_shell));
    }
    let grid = if g.eps1 > 0.0 && g.q_ratio > 0.0 && g.q_ratio < 1.0 && g.n_shells > 0 {
        match RadialGrid::new(&geometric_boundaries(g.eps1, g.q_ratio, g.n_shells), g.nodes_per_shell, g.uv_cutoff) {
            Ok(grid) => Some(Arc::new(grid)),
            Err(e) => {
                push("grid", e.to_string());
                None
            }
        }
    } else {
        push("grid", format!("need eps1 > 0, 0 < q_ratio < 1, n_shells ≥ 1 (got {}, {}, {})", g.eps1, g.q_ratio, g.n_shells));
        None
    };

    let k = &cfg.kpr;
    if k.n_shells > g.n_shells {
        push("kpr.n_shells", format!("{} KPR shells but the grid has only {}", k.n_shells, g.n_shells));
    }
    if (k.q_ratio - g.q_ratio).abs() > 1e-15 {
        push("kpr.q_ratio", format!("{} does not match grid.q_ratio {}; shells would not align", k.q_ratio, g.q_ratio));
    }
    match k.l_rule {
        AngularRankRule::Capped(cap) if cap > g.l_max => {
            push("kpr.l_rule", format!("cap l = {cap} exceeds grid.l_max = {}", g.l_max))
        }
        AngularRankRule::UpToShellIndex if k.n_shells > g.l_max => push(
            "kpr.l_rule",
            format!("l ≤ i reaches l = {} on the last shell, beyond grid.l_max = {}", k.n_shells, g.l_max),
        ),
        _ => {}
    }
    let params = KprParams {
        eps1: g.eps1,
        q_ratio: k.q_ratio,
        b_scale: k.b_scale,
        b_alpha: k.b_alpha,
        n_shells: k.n_shells,
        rank_rule: k.l_rule,
        involution: k.involution,
    };
    let kpr = match KprConfig::geometric(params) {
        Ok(pair) => Some(pair),
        Err(Error::NotKprLike(msg)) => {
            push("kpr.b_alpha", format!("summability-2 fails: {msg}"));
            None
        }
        Err(e) => {
            push("kpr", e.to_string());
            None
        }
    };

    let c = &cfg.charge;
    for (loc, q, r1, r2) in [
        ("charge", c.q, c.r1, c.r2),
        ("charge.partner", c.q, c.partner_r1, c.partner_r2),
        ("charge.unequal_q", c.unequal_q, c.r1, c.r2),
    ] {
        if let Err(e) = ChargeAutomorphism::special(q, r1, r2) {
            push(loc, e.to_string());
        }
    }
    if c.unequal_q == c.q {
        push("charge.unequal_q", "must differ from charge.q".into());
    }

    let cone = match ConeSpec::new(cfg.cone.axis, cfg.cone.half_angle_deg.to_radians()) {
        Ok(cone) => Some(cone),
        Err(e) => {
            push("cone", e.to_string());
            None
        }
    };
    if !(cfg.cone.bump_sharpness > 0.0) {
        push("cone.bump_sharpness", "must be positive".into());
    }
    if cfg.cone.expansion_order < g.l_max {
        push("cone.expansion_order", format!("{} is below grid.l_max = {}", cfg.cone.expansion_order, g.l_max));
    }

    let p = &cfg.probe;
    let h = p.h.build();
    if let Err(e) = &h {
        push("probe.h", e.to_string());
    }
    if let Some(gp) = &p.g {
        if let Err(e) = gp.build() {
            push("probe.g", e.to_string());
        }
    }
    if let Some(op) = &p.origin_probe {
        if let Err(e) = op.build() {
            push("probe.origin_probe", e.to_string());
        }
        check_schedule(&mut push, "probe.origin_lambdas", &p.origin_lambdas);
    }
    check_schedule(&mut push, "probe.lambdas", &p.lambdas);
    check_schedule(&mut push, "probe.sector_lambdas", &p.sector_lambdas);
    let mut probe = None;
    if let (Some(cone), Ok(h)) = (&cone, &h) {
        let candidate = ConeProbe::opposite(cone, p.cap_half_angle_deg.to_radians(), h.clone(), p.cap_expansion_order);
        if !(candidate.clearance(cone) > 0.0) {
            push(
                "probe.cap_half_angle_deg",
                format!("cap of {}° opposite the axis meets the closed cone", p.cap_half_angle_deg),
            );
        } else if !(h.support().0 > 0.0) {
            push("probe.h", "support must stay away from the origin (apex of the cone)".into());
        } else {
            probe = Some(candidate);
        }
    }

    let s = &cfg.suite;
    if s.symplectic_trials == 0 || s.power_iterations == 0 {
        push("suite", "trial and iteration counts must be at least 1".into());
    }

    match (issues.is_empty(), grid, kpr, cone, probe) {
        (true, Some(grid), Some((kpr, summability)), Some(cone), Some(probe)) => Ok(Validated {
            trunc: AngularTruncation::new(cfg.grid.l_max),
            charge: SpecialForm { q: cfg.charge.q, r1: cfg.charge.r1, r2: cfg.charge.r2 },
            raw: cfg,
            grid,
            kpr,
            summability,
            cone,
            probe,
        }),
        _ => Err(issues),
    }
}

fn check_schedule(push: &mut impl FnMut(&str, String), loc: &str, lambdas: &[f64]) {
    if lambdas.is_empty() {
        push(loc, "schedule is empty".into());
    } else if lambdas.iter().any(|l| !(*l >= 1.0)) || lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        push(loc, "schedule must be increasing with every λ ≥ 1".into());
    }
}

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

pub fn default_config() -> ScenarioConfig {
    parse(DEFAULT_CONFIG).expect("shipped default configuration parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issues(edit: impl Fn(&mut ScenarioConfig)) -> Vec<String> {
        let mut c = default_config();
        edit(&mut c);
        match validate(c) {
            Ok(_) => vec![],
            Err(v) => v.into_iter().map(|i| i.location).collect(),
        }
    }

    #[test]
    fn default_validates() {
        let v = validate(default_config()).unwrap();
        assert_eq!(v.grid.n_shells(), 20);
        assert_eq!(v.trunc.l_max, 12);
        assert!(v.summability.all_converge());
    }

    #[test]
    fn shell_index_rule_needs_enough_angular_momentum() {
        assert_eq!(issues(|c| c.kpr.l_rule = AngularRankRule::UpToShellIndex), ["kpr.l_rule"]);
        assert!(issues(|c| {
            c.kpr.l_rule = AngularRankRule::UpToShellIndex;
            c.kpr.n_shells = 12;
        })
        .is_empty());
    }

    #[test]
    fn cross_block_consistency() {
        assert_eq!(issues(|c| c.kpr.q_ratio = 0.25), ["kpr.q_ratio"]);
        assert_eq!(issues(|c| c.kpr.b_alpha = 0.5), ["kpr.b_alpha"]);
        assert_eq!(issues(|c| c.probe.cap_half_angle_deg = 150.0), ["probe.cap_half_angle_deg"]);
        assert_eq!(issues(|c| c.probe.lambdas = vec![1.0, 0.5]), ["probe.lambdas"]);
        assert_eq!(issues(|c| c.charge.unequal_q = c.charge.q), ["charge.unequal_q"]);
        assert_eq!(issues(|c| c.grid.rule = "linear".into()), ["grid.rule"]);
    }
}
