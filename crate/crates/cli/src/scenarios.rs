//! The named diagnostic scenarios.

use std::str::FromStr;
use std::sync::Arc;

use infravac_core::charges::{linear_form, random_scenario};
use infravac_core::convergence::VerdictRules;
use infravac_core::infravacuum::{
    apply_t, apply_t1, apply_t2, mean_energy_bound, state_value, symplectic_check, t1_norm_estimate,
    t2_regularized_bound, t2_restricted_norm_estimate,
};
use infravac_core::localization::{
    build_u_c, dilation_family, dilation_limit_on, intertwiner_check, intertwiner_sequence, make_cone_cutoff,
    sector_equiv_test, ConePipeline, IntertwinerCheck, IntertwinerSequence,
};
use infravac_core::modespace::{geometric_boundaries, inner_product};
use infravac_core::transforms::build_test_function;
use infravac_core::{
    AngularFunction, AngularRankRule, AngularTruncation, ChargeAutomorphism, DilationLimitReport, Error, KprConfig,
    ModeFunction, RadialGrid, SectorVerdict, SourceTerm, Verdict,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Validated;
use crate::report::{col, Check, Method, Metric, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    DilationLimit,
    InfravacuumVerify,
    ConeIntertwiner,
    SectorTest,
    FullSuite,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::DilationLimit,
        Scenario::InfravacuumVerify,
        Scenario::ConeIntertwiner,
        Scenario::SectorTest,
        Scenario::FullSuite,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::DilationLimit => "dilation-limit",
            Scenario::InfravacuumVerify => "infravacuum-verify",
            Scenario::ConeIntertwiner => "cone-intertwiner",
            Scenario::SectorTest => "sector-test",
            Scenario::FullSuite => "full-suite",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL.into_iter().find(|x| x.id() == s).ok_or_else(|| {
            let ids: Vec<&str> = Scenario::ALL.iter().map(|x| x.id()).collect();
            format!("unknown scenario {s:?}; expected one of {}", ids.join(", "))
        })
    }
}

#[derive(Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub metrics: Vec<Metric>,
    pub series: Vec<Series>,
}

impl Outcome {
    fn fail(&mut self, name: &str, e: Error) {
        self.checks.push(Check::holds(name, Method::ClosedForm, false).detail(format!("error: {e}")));
    }

    fn absorb(&mut self, prefix: &str, other: Outcome) {
        self.checks.extend(other.checks.into_iter().map(|c| c.prefixed(prefix)));
        self.metrics.extend(other.metrics.into_iter().map(|mut m| {
            m.name = format!("{prefix}/{}", m.name);
            m
        }));
        self.series.extend(other.series);
    }
}

pub fn run(s: Scenario, v: &Validated, seed: u64, negative_control: bool) -> Outcome {
    match s {
        Scenario::DilationLimit => dilation(v, seed),
        Scenario::InfravacuumVerify => infravacuum(v, seed),
        Scenario::ConeIntertwiner => cone(v, negative_control),
        Scenario::SectorTest => sector(v),
        Scenario::FullSuite => {
            let mut out = Outcome::default();
            for part in &Scenario::ALL[..4] {
                out.absorb(part.id(), run(*part, v, seed, negative_control));
            }
            out
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn geometric_grid(v: &Validated, nodes: usize, shells: usize) -> Result<Arc<RadialGrid>, Error> {
    let g = &v.raw.grid;
    Ok(Arc::new(RadialGrid::new(&geometric_boundaries(g.eps1, g.q_ratio, shells), nodes, g.uv_cutoff)?))
}

fn kpr_with(v: &Validated, shells: usize, l_max: usize) -> Result<KprConfig, Error> {
    let mut params = *v.kpr.params().expect("validated configs are geometric");
    params.n_shells = shells;
    if let AngularRankRule::Capped(cap) = params.rank_rule {
        if cap == v.raw.grid.l_max {
            params.rank_rule = AngularRankRule::Capped(l_max);
        }
    }
    Ok(KprConfig::geometric(params)?.0)
}

fn infravacuum(v: &Validated, seed: u64) -> Outcome {
    let mut out = Outcome::default();
    let (cfg, grid, trunc) = (&v.kpr, &v.grid, v.trunc);
    let suite = &v.raw.suite;

    let l_sym = suite.symplectic_l_max.min(trunc.l_max);
    let mut sym_params = *cfg.params().expect("validated configs are geometric");
    sym_params.rank_rule = AngularRankRule::Capped(sym_params.rank_rule.max_l(cfg.n_shells()).min(l_sym));
    let sym_cfg = match KprConfig::geometric(sym_params) {
        Ok((c, _)) => c,
        Err(e) => return fail_with(out, "symplectic_form_residual", e),
    };
    let t0 = std::time::Instant::now();
    match symplectic_check(&sym_cfg, grid, AngularTruncation::new(l_sym), suite.symplectic_trials, &mut rng(seed)) {
        Ok(r) => {
            let secs = t0.elapsed().as_secs_f64();
            let n = format!("{} pairs at l_max {l_sym}", r.trials);
            out.checks.push(Check::at_most("symplectic_form_residual", Method::MomentumQuadrature, Some(r.symplectic), 1e-10).detail(n.clone()));
            out.checks.push(Check::at_most("t1_t2_pairing_residual", Method::MomentumQuadrature, Some(r.inverse_pair), 1e-10).detail(n));
            out.checks.push(Check::holds("symplectic_check_under_5s", Method::Timing, secs < 5.0));
        }
        Err(e) => out.fail("symplectic_form_residual", e),
    }

    let mut r = rng(seed);
    let mut inverse: f64 = 0.0;
    for _ in 0..10 {
        let u = ModeFunction::random(grid.clone(), trunc, &mut r);
        match apply_t2(&u, cfg).and_then(|w| apply_t1(&w, cfg)) {
            Ok(back) => inverse = inverse.max((&back - &u).norm() / u.norm()),
            Err(e) => return fail_with(out, "t1_t2_inverse", e),
        }
    }
    out.checks.push(Check::at_most("t1_t2_inverse", Method::MomentumQuadrature, Some(inverse), 1e-12));
    match t1_norm_estimate(cfg, grid, trunc, suite.power_iterations, &mut r) {
        Ok(n) => out.checks.push(Check::near("t1_norm", Method::PowerIteration, Some(n), 1.0, 1e-10)),
        Err(e) => out.fail("t1_norm", e),
    }
    let mut t2 = Series::new(
        "t2_restricted_norm",
        vec![
            col("n_shells", "count", "infravacuum.t2_restricted_norm_estimate"),
            col("restricted_t2_norm", "dimensionless", "infravacuum.t2_restricted_norm_estimate"),
            col("max_inverse_amplitude", "dimensionless", "infravacuum.t2_restricted_norm_estimate"),
        ],
    );
    let mut norms = vec![];
    for n in 1..=cfg.n_shells().min(grid.n_shells() - 1) {
        match t2_restricted_norm_estimate(cfg, n, grid, trunc, 30, &mut r) {
            Ok(x) => {
                norms.push(x);
                let amp = (1..=n).map(|i| 1.0 / cfg.b(i)).fold(0.0, f64::max);
                t2.push(vec![n as f64, x, amp]);
            }
            Err(e) => return fail_with(out, "restricted_t2_monotone", e),
        }
    }
    let monotone = norms.windows(2).all(|w| w[1] > w[0]);
    out.checks.push(
        Check::holds("restricted_t2_monotone", Method::PowerIteration, monotone)
            .detail(format!("over {} shells", norms.len())),
    );
    out.series.push(t2);

    match t2_regularized_bound(cfg, grid, trunc, 50, &mut r) {
        Ok(b) => {
            out.checks.push(
                Check::holds("t2_regularized_bound", Method::PowerIteration, b.holds)
                    .detail(format!("empirical {:e} <= bound {:e}", b.empirical_norm, b.norm_bound)),
            );
            out.metrics.push(Metric::new("t2_regularized_majorant", Method::SeriesTest, b.majorant));
        }
        Err(e) => out.fail("t2_regularized_bound", e),
    }

    let s = &v.summability;
    out.checks.push(
        Check::holds("energy_series_converges", Method::SeriesTest, s.energy.converges)
            .detail(format!("{:?} statistic {:e}", s.energy.kind, s.energy.statistic)),
    );
    out.checks.push(
        Check::holds("kpr_series_converges", Method::SeriesTest, s.kpr_condition.converges)
            .detail(format!("{:?} statistic {:e}", s.kpr_condition.kind, s.kpr_condition.statistic)),
    );
    let mut bad = *cfg.params().expect("validated configs are geometric");
    bad.b_alpha = 0.4;
    let rejected = matches!(KprConfig::geometric(bad), Err(Error::NotKprLike(_)));
    out.checks.push(Check::holds("b_alpha_0.4_rejected", Method::SeriesTest, rejected));
    let energy = mean_energy_bound(cfg);
    out.metrics.push(Metric::new("mean_energy_bound", Method::SeriesTest, energy.total));
    out.metrics.push(Metric::new("mean_energy_bound_extrapolated", Method::SeriesTest, energy.extrapolated_total));
    let mut series = Series::new(
        "summability",
        vec![
            col("shell", "index", "infravacuum.make_kpr_config"),
            col("epsilon", "eps1", "infravacuum.make_kpr_config"),
            col("b", "dimensionless", "infravacuum.make_kpr_config"),
            col("energy_term", "eps1", "infravacuum.mean_energy_bound"),
            col("energy_partial_sum", "eps1", "infravacuum.mean_energy_bound"),
            col("kpr_term", "dimensionless", "infravacuum.make_kpr_config"),
            col("kpr_partial_sum", "dimensionless", "infravacuum.make_kpr_config"),
        ],
    );
    for i in 0..cfg.n_shells() {
        series.push(vec![
            (i + 1) as f64,
            cfg.epsilon(i + 1),
            cfg.b(i + 1),
            energy.terms[i],
            energy.partial_sums[i],
            s.kpr_condition.terms[i],
            s.kpr_condition.partial_sums[i],
        ]);
    }
    out.series.push(series);

    let u = ModeFunction::random(grid.clone(), trunc, &mut rng(seed));
    let mut mono = u.clone();
    let n = grid.len();
    mono.coefficients_mut()[n..].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    match apply_t(&mono, cfg, None) {
        Ok(tu) => out.checks.push(Check::at_most(
            "t_fixes_l0",
            Method::MomentumQuadrature,
            Some((&tu - &mono).norm() / mono.norm()),
            1e-15,
        )),
        Err(e) => out.fail("t_fixes_l0", e),
    }
    let h = v.raw.probe.h.build().expect("validated");
    let g: Vec<SourceTerm> = v.raw.probe.g.iter().map(|p| SourceTerm::rotation_invariant(p.build().expect("validated"))).collect();
    match build_test_function(vec![SourceTerm::rotation_invariant(h)], g, grid, trunc)
        .and_then(|f| Ok((state_value(cfg, &f.mode)?, inner_product(&f.mode, &f.mode)?.re)))
    {
        Ok((s, norm_sq)) => {
            out.checks.push(Check::at_most(
                "state_equals_vacuum_on_rotation_invariant",
                Method::ClosedForm,
                Some((s.state_value - s.vacuum_value).abs()),
                1e-15,
            ));
            out.checks.push(Check::holds(
                "state_value_exact",
                Method::ClosedForm,
                s.state_value == (-0.25 * norm_sq).exp(),
            ));
            out.metrics.push(Metric::new("state_value", Method::ClosedForm, s.state_value));
        }
        Err(e) => out.fail("state_equals_vacuum_on_rotation_invariant", e),
    }
    out
}

fn fail_with(mut out: Outcome, name: &str, e: Error) -> Outcome {
    out.fail(name, e);
    out
}

fn dilation_series(name: &str, r: &DilationLimitReport) -> Series {
    let mut s = Series::new(
        name,
        vec![
            col("lambda", "dimensionless", "localization.dilation_limit"),
            col("l_gamma_position", "dimensionless", "localization.dilation_limit"),
            col("l_gamma_momentum", "dimensionless", "localization.dilation_limit"),
            col("error_position", "dimensionless", "localization.dilation_limit"),
            col("error_momentum", "dimensionless", "localization.dilation_limit"),
            col("norm_f_lambda", "dimensionless", "localization.dilation_limit"),
        ],
    );
    for p in &r.points {
        s.push(vec![p.lambda, p.value_position, p.value_momentum, p.error_position, p.error_momentum, p.norm]);
    }
    s
}

fn dilation(v: &Validated, seed: u64) -> Outcome {
    let mut out = Outcome::default();
    let grid = &v.grid;
    let c = &v.raw.charge;
    let rot = |h| build_test_function(vec![SourceTerm::rotation_invariant(h)], vec![], grid, AngularTruncation::new(0));
    let gamma = ChargeAutomorphism::special(c.q, c.r1, c.r2).expect("validated");
    // same probe response, zero total charge
    let neutral = gamma.compose(&ChargeAutomorphism::special(-c.q, 0.5 * c.r1, 0.5 * c.r2).expect("validated"));

    let lambdas = &v.raw.probe.lambdas;
    let family = v.raw.probe.h.build().and_then(rot).and_then(|f| dilation_family(&f, lambdas));
    let pair = family.and_then(|fam| Ok((dilation_limit_on(&gamma, &fam)?, dilation_limit_on(&neutral, &fam)?)));
    match pair {
        Ok((r, z)) => {
            let last = r.points.last().expect("non-empty schedule");
            out.checks.push(
                Check::at_most("limit_error_at_largest_lambda", Method::PositionOracle, Some(last.error_position), 1e-3 * r.target.abs())
                    .detail(format!("lambda {}, target q kappa {:e}", last.lambda, r.target)),
            );
            let decay = r.fit.map(|f| -f.exponent);
            out.checks.push(
                Check::near("error_decay_exponent", Method::PositionOracle, decay, 2.0, 0.3).detail(match r.fit {
                    Some(f) => format!("fit over {} points", f.points),
                    None => format!(
                        "no point above the {:e} noise floor; max error {:e}",
                        infravac_core::localization::DILATION_NOISE_FLOOR,
                        r.points.iter().map(|p| p.error_position).fold(0.0, f64::max)
                    ),
                }),
            );
            let zdecay = z.fit.map(|f| -f.exponent);
            let gap = match (decay, zdecay) {
                (Some(a), Some(b)) => Some((a - b).abs()),
                _ => None,
            };
            out.checks.push(
                Check::at_most("neutral_control_same_rate", Method::PositionOracle, gap, 0.3).detail(format!(
                    "neutral max |l| {:e}",
                    z.points.iter().map(|p| p.value_position.abs()).fold(0.0, f64::max)
                )),
            );
            let km = r.kappa_momentum;
            out.checks.push(Check::at_most(
                "kappa_momentum_vs_quadrature",
                Method::MomentumQuadrature,
                km.map(|k| (k - r.kappa).abs() / r.kappa.abs()),
                1e-4,
            ));
            out.metrics.push(Metric::new("kappa", Method::PositionOracle, r.kappa));
            out.metrics.push(Metric::new("limit", Method::PositionOracle, r.limit));
            out.metrics.push(Metric::new("limit_error", Method::PositionOracle, r.limit_error));
            if let Some((lim, _)) = r.richardson {
                out.metrics.push(Metric::new("richardson_limit", Method::PositionOracle, lim));
            }
            out.series.push(dilation_series("dilation_h", &r));
            out.series.push(dilation_series("dilation_h_neutral", &z));
        }
        Err(e) => out.fail("limit_error_at_largest_lambda", e),
    }

    if let Some(op) = &v.raw.probe.origin_probe {
        let fam = op.build().and_then(rot).and_then(|f| dilation_family(&f, &v.raw.probe.origin_lambdas));
        match fam.and_then(|fam| dilation_limit_on(&gamma, &fam)) {
            Ok(b) => {
                if let Some(f) = b.fit {
                    out.metrics.push(Metric::new("origin_probe_decay_exponent", Method::PositionOracle, -f.exponent));
                }
                if let Some((lim, _)) = b.richardson {
                    out.metrics.push(Metric::new("origin_probe_richardson_error", Method::PositionOracle, (lim - b.target).abs()));
                }
                out.series.push(dilation_series("dilation_origin_probe", &b));
            }
            Err(e) => out.fail("origin_probe", e),
        }
    }

    let suite = &v.raw.suite;
    let trunc = AngularTruncation::new(suite.dual_l_max);
    let n = v.raw.grid.nodes_per_shell;
    let node_counts = [(n / 4).max(2), (n / 2).max(2), n, 2 * n];
    let grids: Result<Vec<_>, _> = node_counts.iter().map(|&k| geometric_grid(v, k, v.raw.grid.n_shells)).collect();
    let grids = match grids {
        Ok(g) => g,
        Err(e) => return fail_with(out, "dual_oracle_agreement", e),
    };
    let mut r = rng(seed);
    let mut series = Series::new(
        "dual_oracle",
        vec![
            col("scenario", "index", "charges.linear_form"),
            col("nodes_per_shell", "count", "charges.linear_form"),
            col("l_gamma_momentum", "dimensionless", "charges.linear_form"),
            col("l_gamma_position", "dimensionless", "charges.linear_form"),
            col("relative_discrepancy", "dimensionless", "charges.linear_form"),
        ],
    );
    let (mut worst, mut halved) = (0.0f64, 0);
    for k in 0..suite.dual_scenarios {
        let s = match random_scenario(&mut r, suite.dual_l_max) {
            Ok(s) => s,
            Err(e) => return fail_with(out, "dual_oracle_agreement", e),
        };
        let mut d = vec![];
        for (g, &nodes) in grids.iter().zip(&node_counts) {
            match build_test_function(s.h.clone(), s.g.clone(), g, trunc).and_then(|f| linear_form(&s.gamma, &f)) {
                Ok(lf) => {
                    let pos = lf.value_position.unwrap_or(f64::NAN);
                    let rel = lf.discrepancy.unwrap_or(f64::NAN) / (pos.abs() + 1.0);
                    series.push(vec![k as f64, nodes as f64, lf.value_momentum, pos, rel]);
                    d.push(rel);
                }
                Err(e) => return fail_with(out, "dual_oracle_agreement", e),
            }
        }
        worst = worst.max(d[2]);
        if 2.0 * d[1] <= d[0] {
            halved += 1;
        }
    }
    out.checks.push(
        Check::at_most("dual_oracle_agreement", Method::PositionOracle, Some(worst), 1e-4)
            .detail(format!("{} random scenarios at {n} nodes per shell", suite.dual_scenarios)),
    );
    out.checks.push(
        Check::at_least("dual_oracle_halving_fraction", Method::PositionOracle, Some(halved as f64 / suite.dual_scenarios.max(1) as f64), 1.0)
            .detail(format!("{} -> {} nodes per shell", node_counts[0], node_counts[1])),
    );
    out.series.push(series);
    out
}

struct ConeRun {
    pipeline: ConePipeline,
    seq: IntertwinerSequence,
    check: IntertwinerCheck,
}

fn cone_run(v: &Validated, nodes: usize, shells: usize, l_max: usize, control: bool) -> Result<ConeRun, Error> {
    let grid = geometric_grid(v, nodes, shells)?;
    let cfg = kpr_with(v, shells, l_max)?;
    let chi = if control {
        AngularFunction::constant(1.0)
    } else {
        make_cone_cutoff(v.cone, v.raw.cone.bump_sharpness, l_max.max(v.raw.cone.expansion_order))?.function
    };
    let pipeline = build_u_c(v.cone, &chi, v.charge, &grid, AngularTruncation::new(l_max))?;
    let seq = intertwiner_sequence(&pipeline, &cfg, shells + 1, VerdictRules::default())?;
    let check = intertwiner_check(&pipeline, &seq, &cfg, &v.probe)?;
    Ok(ConeRun { pipeline, seq, check })
}

fn cone(v: &Validated, negative_control: bool) -> Outcome {
    let mut out = Outcome::default();
    let g = &v.raw.grid;
    let (nodes, shells, l_max) = (g.nodes_per_shell, g.n_shells, g.l_max);
    let base = match cone_run(v, nodes, shells, l_max, negative_control) {
        Ok(r) => r,
        Err(e) => return fail_with(out, "intertwiner_sequence", e),
    };
    let mark = |c: Check| if negative_control { c.control() } else { c };

    let seq = &base.seq;
    out.checks.push(mark(
        Check::holds("verdict_cauchy", Method::MomentumQuadrature, seq.convergence.verdict == Verdict::Cauchy)
            .detail(format!("verdict {:?}", seq.convergence.verdict)),
    ));
    let all = seq.bounds.iter().all(|b| b.holds);
    out.checks.push(mark(
        Check::holds("increments_majorised", Method::MomentumQuadrature, all)
            .detail(format!("{} dyadic steps, c_N {:e}", seq.bounds.len(), seq.c_n)),
    ));
    out.checks.push(Check::at_most("gamma_parity", Method::MomentumQuadrature, Some(seq.gamma_parity_residual), 1e-12));
    let mut inc = Series::new(
        "intertwiner_increments",
        vec![
            col("m", "shell index", "localization.intertwiner_sequence"),
            col("n", "shell index", "localization.intertwiner_sequence"),
            col("increment", "dimensionless", "localization.intertwiner_sequence"),
            col("majorant", "dimensionless", "localization.intertwiner_sequence"),
        ],
    );
    for b in &seq.bounds {
        inc.push(vec![b.m as f64, b.n as f64, b.increment, b.majorant]);
    }
    out.series.push(inc);
    let mut growth = Series::new(
        "intertwiner_norms",
        vec![
            col("n", "shell index", "localization.intertwiner_sequence"),
            col("norm_sq_t_v_n", "dimensionless", "localization.intertwiner_sequence"),
        ],
    );
    for (n, x) in seq.norms_sq.iter().enumerate() {
        growth.push(vec![(n + 1) as f64, *x]);
    }
    out.series.push(growth);

    let ic = &base.check;
    out.checks.push(mark(Check::at_most("intertwiner_identity", Method::PositionOracle, Some(ic.relative_residual), 1e-2).detail(
        format!("angular part {:e}, grid part {:e}", ic.angular_part, ic.grid_part),
    )));
    out.checks.push(mark(Check::at_most(
        "direct_limit",
        Method::PositionOracle,
        Some(ic.direct_relative_residual),
        1e-2,
    )));
    out.metrics.push(Metric::new("l_gamma", Method::PositionOracle, ic.l_gamma));
    out.metrics.push(Metric::new("weyl_phase_re", Method::PositionOracle, ic.weyl_phase[0]));
    out.metrics.push(Metric::new("weyl_phase_im", Method::PositionOracle, ic.weyl_phase[1]));
    out.metrics.push(Metric::new("symplectic_transport", Method::MomentumQuadrature, ic.symplectic_transport));
    let mut direct = Series::new(
        "direct_limit",
        vec![
            col("n", "shell index", "localization.intertwiner_check"),
            col("residual_vs_l_gamma", "dimensionless", "localization.intertwiner_check"),
            col("residual_vs_truncated_oracle", "dimensionless", "localization.intertwiner_check"),
        ],
    );
    for &(n, a, b) in &ic.direct_series {
        direct.push(vec![n as f64, a, b]);
    }
    out.series.push(direct);
    out.series.push(channel_profiles(&base.pipeline));

    if negative_control {
        out.checks.push(Check::holds("control_divergent", Method::MomentumQuadrature, seq.convergence.verdict == Verdict::Divergent));
        out.checks.push(slope_check(&base));
        return out;
    }

    let sk = &base.pipeline.small_k;
    out.checks.push(Check::at_most("eta_monopole_ratio", Method::MomentumQuadrature, Some(sk.monopole_ratio), 1e-6));
    let plateau = sk.plateaus.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    out.checks.push(Check::at_most("plateaus_vs_closed_form", Method::ClosedForm, Some(plateau), 1e-6));

    let coarse = cone_run(v, (nodes / 2).max(2), shells, l_max, false);
    let fine = cone_run(v, 2 * nodes, 2 * shells, l_max, false);
    let angular = cone_run(v, nodes, shells, 2 * l_max, false);
    match (&coarse, &fine) {
        (Ok(c), Ok(f)) => {
            let cs = [c, &base, f].map(|r| r.pipeline.small_k.monopole_slope);
            let bounded = [c, &base, f]
                .iter()
                .all(|r| r.pipeline.small_k.monopole_at_k_min <= r.pipeline.small_k.monopole_slope * r.pipeline.small_k.k_min);
            out.checks.push(Check::holds("monopole_linear_in_k", Method::MomentumQuadrature, bounded));
            let spread = cs.iter().map(|x| (x - cs[1]).abs()).fold(0.0, f64::max) / cs[1].abs().max(f64::MIN_POSITIVE);
            out.checks.push(Check::at_most("monopole_slope_stable", Method::MomentumQuadrature, Some(spread), 0.1));
            let ratio = ic.residual / f.check.residual;
            out.checks.push(
                Check::at_least("intertwiner_refinement_gain", Method::PositionOracle, Some(ratio), 2.0)
                    .refinement(ratio)
                    .detail(format!("({nodes}, {shells}) -> ({}, {})", 2 * nodes, 2 * shells)),
            );
        }
        (Err(e), _) | (_, Err(e)) => out.fail("intertwiner_refinement_gain", e.clone()),
    }
    match angular {
        Ok(a) => out.metrics.push(Metric::new("angular_refinement_gain", Method::PositionOracle, ic.residual / a.check.residual)),
        Err(e) => out.fail("angular_refinement", e),
    }
    match cone_run(v, nodes, shells, l_max, true) {
        Ok(ctl) => {
            out.checks.push(Check::holds("control_divergent", Method::MomentumQuadrature, ctl.seq.convergence.verdict == Verdict::Divergent));
            out.checks.push(slope_check(&ctl));
        }
        Err(e) => out.fail("control_divergent", e),
    }
    out
}

fn slope_check(ctl: &ConeRun) -> Check {
    let plateau = ctl.pipeline.eta_measured[0].norm();
    let q = ctl.pipeline.u_c.grid().epsilon(2) / ctl.pipeline.u_c.grid().epsilon(1);
    let want = (1.0 / q).ln() * plateau * plateau;
    let slope = ctl.seq.growth_slope;
    Check::at_most("control_growth_slope", Method::ClosedForm, slope.map(|s| (s - want).abs() / want), 0.05)
        .detail(format!("slope {} vs ln(1/q) plateau^2 {want:e}", slope.map_or("none".into(), |s| format!("{s:e}"))))
}

fn channel_profiles(p: &ConePipeline) -> Series {
    let mut s = Series::new(
        "u_c_channels",
        vec![
            col("l", "angular momentum", "localization.build_u_c"),
            col("k", "eps1", "localization.build_u_c"),
            col("channel_norm", "dimensionless", "localization.build_u_c"),
        ],
    );
    let u = &p.u_c;
    let trunc = u.truncation();
    for l in 0..=trunc.l_max {
        for (j, &k) in u.grid().nodes().iter().enumerate() {
            let norm: f64 = (-(l as i64)..=l as i64).map(|m| u.channel(l, m)[j].norm_sqr()).sum::<f64>().sqrt();
            s.push(vec![l as f64, k, norm]);
        }
    }
    s
}

fn sector(v: &Validated) -> Outcome {
    let mut out = Outcome::default();
    let c = &v.raw.charge;
    let g1 = ChargeAutomorphism::special(c.q, c.r1, c.r2).expect("validated");
    let g2 = ChargeAutomorphism::special(c.q, c.partner_r1, c.partner_r2).expect("validated");
    let g3 = ChargeAutomorphism::special(c.unequal_q, c.r1, c.r2).expect("validated");
    let h = v.raw.probe.h.build().expect("validated");
    let lambdas = &v.raw.probe.sector_lambdas;
    match sector_equiv_test(&v.kpr, &g1, &g2, &h, &v.grid, v.trunc, lambdas) {
        Ok(eq) => {
            out.checks.push(Check::holds("equal_charges_equivalent", Method::MomentumQuadrature, eq.verdict == SectorVerdict::Equivalent));
            out.checks.push(Check::holds(
                "equal_charges_t_difference_finite",
                Method::MomentumQuadrature,
                eq.t_difference_norm.is_some_and(f64::is_finite),
            ));
            out.checks.push(Check::at_most("equal_charges_ir_drift", Method::MomentumQuadrature, eq.ir_drift, 1e-2));
            if let Some(t) = eq.t_difference_norm {
                out.metrics.push(Metric::new("t_difference_norm", Method::MomentumQuadrature, t));
            }
        }
        Err(e) => out.fail("equal_charges_equivalent", e),
    }
    match sector_equiv_test(&v.kpr, &g1, &g3, &h, &v.grid, v.trunc, lambdas) {
        Ok(ne) => {
            out.checks.push(Check::holds("unequal_charges_inequivalent", Method::PositionOracle, ne.verdict == SectorVerdict::Inequivalent));
            out.checks.push(Check::near("phase_gap", Method::PositionOracle, ne.phase_gap_measured, 2.0, 1e-6));
            out.checks.push(Check::at_most("probe_fixed_by_t", Method::MomentumQuadrature, Some(ne.probe_fixed_residual), 0.0));
            if let Some(s) = ne.probe_scale {
                out.metrics.push(Metric::new("probe_scale", Method::PositionOracle, s));
            }
        }
        Err(e) => out.fail("unequal_charges_inequivalent", e),
    }
    out
}
