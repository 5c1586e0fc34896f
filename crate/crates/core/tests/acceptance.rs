//! Acceptance suite: one line per criterion, with the tolerance it is held to.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use infravac_core::charges::{linear_form, random_scenario};
use infravac_core::convergence::VerdictRules;
use infravac_core::infravacuum::*;
use infravac_core::localization::*;
use infravac_core::modespace::inner_product;
use infravac_core::transforms::build_test_function;
use infravac_core::*;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

struct Line {
    id: usize,
    pass: bool,
    detail: String,
}

fn seed() -> u64 {
    std::env::var("ACCEPTANCE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn c1() -> Line {
    let t0 = Instant::now();
    let cfg = config(20, 8);
    let g = grid(16, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    let r = symplectic_check(&cfg, &g, AngularTruncation::new(8), 100, &mut rng).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = r.symplectic <= 1e-10 && r.inverse_pair <= 1e-10 && secs < 5.0;
    Line {
        id: 1,
        pass,
        detail: format!(
            "symplectic {:.2e}, <T1u,T2v> {:.2e} (tol 1e-10, 100 pairs, l_max 8), {:.2} s (tol 5 s)",
            r.symplectic, r.inverse_pair, secs
        ),
    }
}

fn c2() -> Line {
    let cfg = config(20, 8);
    let g = grid(16, 20);
    let trunc = AngularTruncation::new(8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    let mut inv: f64 = 0.0;
    for _ in 0..10 {
        let u = ModeFunction::random(g.clone(), trunc, &mut rng);
        let back = apply_t1(&apply_t2(&u, &cfg).unwrap(), &cfg).unwrap();
        inv = inv.max((&back - &u).norm() / u.norm());
    }
    let t1 = t1_norm_estimate(&cfg, &g, trunc, 50, &mut rng).unwrap();
    let t2: Vec<f64> =
        (1..=20).map(|n| t2_restricted_norm_estimate(&cfg, n, &g, trunc, 30, &mut rng).unwrap()).collect();
    let monotone = t2.windows(2).all(|w| w[1] > w[0]);
    Line {
        id: 2,
        pass: inv <= 1e-12 && (t1 - 1.0).abs() <= 1e-10 && monotone,
        detail: format!(
            "|T1T2u-u|/|u| {inv:.2e} (tol 1e-12), |T1| {t1:.12} (tol 1e-10), restricted |T2| {:.3} -> {:.3} over 20 shells, monotone {monotone}",
            t2[0], t2[19]
        ),
    }
}

const KAPPA_BUMP: f64 = 0.332995362126059578;

fn c3() -> (Line, String) {
    let g = grid(16, 20);
    let trunc = AngularTruncation::new(0);
    let rot = |h| build_test_function(vec![SourceTerm::rotation_invariant(h)], vec![], &g, trunc).unwrap();
    let lambdas = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];
    let fam = dilation_family(&rot(RadialProfile::bump(1.0, 2.0, 1.0).unwrap()), &lambdas).unwrap();
    let gamma = ChargeAutomorphism::special(1.0, 0.5, 1.0).unwrap();
    let neutral = gamma.compose(&ChargeAutomorphism::special(-1.0, 0.25, 0.5).unwrap());
    let r = dilation_limit_on(&gamma, &fam).unwrap();
    let z = dilation_limit_on(&neutral, &fam).unwrap();
    let last = r.points.last().unwrap();
    let limit_ok = last.error_position <= 1e-3 * r.target.abs();
    let kappa_oracle = (r.kappa - KAPPA_BUMP).abs() <= 1e-12 * KAPPA_BUMP;
    let kappa_mom = r.kappa_momentum.unwrap();
    let kappa_ok = (kappa_mom - r.kappa).abs() <= 1e-4 * r.kappa;
    let decay = r.fit.map(|f| -f.exponent);
    let decay_ok = decay.is_some_and(|p| (p - 2.0).abs() <= 0.3);
    let zdecay = z.fit.map(|f| -f.exponent);
    let zero_ok = match (decay, zdecay) {
        (Some(a), Some(b)) => (a - b).abs() <= 0.3,
        _ => false,
    };
    let max_err = r.points.iter().map(|p| p.error_position).fold(0.0, f64::max);
    let zmax = z.points.iter().map(|p| p.value_position.abs()).fold(0.0, f64::max);
    let fmt = |d: Option<f64>| d.map(|p| format!("{p:.3}")).unwrap_or_else(|| "none".into());
    let line = Line {
        id: 3,
        pass: limit_ok && kappa_oracle && kappa_ok && decay_ok && zero_ok,
        detail: format!(
            "|l(f_128)-q kappa| {:.2e} (tol {:.2e}); kappa momentum/quadrature rel {:.2e} (tol 1e-4); decay exponent {} (want 2.0 +- 0.3; max error over schedule {max_err:.1e}); q=0 control max |l| {zmax:.1e}, exponent {}",
            last.error_position,
            1e-3 * r.target.abs(),
            (kappa_mom - r.kappa).abs() / r.kappa,
            fmt(decay),
            fmt(zdecay),
        ),
    };
    // probe containing the origin, where the approach is not exact
    let ball = dilation_family(&rot(RadialProfile::ball(3.0, 1.0).unwrap()), &[1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
    let b = dilation_limit_on(&gamma, &ball).unwrap();
    let bz = dilation_limit_on(&neutral, &ball).unwrap();
    let info = format!(
        "ball(R=3) probe: decay exponent {} (q=0 control {}), Richardson limit error {:.1e}",
        fmt(b.fit.map(|f| -f.exponent)),
        fmt(bz.fit.map(|f| -f.exponent)),
        b.richardson.map(|r| (r.0 - b.kappa).abs()).unwrap_or(f64::NAN)
    );
    (line, info)
}

fn c4() -> (Line, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    let trunc = AngularTruncation::new(3);
    let grids: Vec<Arc<RadialGrid>> = [4, 8, 16, 32].iter().map(|&n| grid(n, 20)).collect();
    let mut worst_default: f64 = 0.0;
    let mut halvings = 0;
    let mut floor_ratio: f64 = 0.0;
    for _ in 0..20 {
        let s = random_scenario(&mut rng, 3).unwrap();
        let d: Vec<f64> = grids
            .iter()
            .map(|g| {
                let f = build_test_function(s.h.clone(), s.g.clone(), g, trunc).unwrap();
                let r = linear_form(&s.gamma, &f).unwrap();
                r.discrepancy.unwrap() / (r.value_position.unwrap().abs() + 1.0)
            })
            .collect();
        worst_default = worst_default.max(d[2]);
        if 2.0 * d[1] <= d[0] {
            halvings += 1;
        }
        floor_ratio = floor_ratio.max(d[3] / d[2]);
    }
    let line = Line {
        id: 4,
        pass: worst_default <= 1e-4 && halvings == 20,
        detail: format!(
            "20 random scenarios: max discrepancy/(|l|+1) {worst_default:.2e} at 16 nodes (tol 1e-4); halved on 4->8 nodes in {halvings}/20"
        ),
    };
    (line, format!("16->32 nodes: worst discrepancy ratio {floor_ratio:.3} (at the Lambda/IR closure floor)"))
}

fn c5() -> Line {
    let cfg = config(20, 12);
    let rules = VerdictRules::default();
    let good = intertwiner_sequence(&pipeline(16, 20, 12, false), &cfg, 21, rules).unwrap();
    let ctl_pipe = pipeline(16, 20, 12, true);
    let ctl = intertwiner_sequence(&ctl_pipe, &cfg, 21, rules).unwrap();
    let plateau = ctl_pipe.eta_measured[0].norm();
    let want = (1.0 / 0.5f64).ln() * plateau * plateau;
    let slope = ctl.growth_slope.unwrap_or(f64::NAN);
    let bounds = good.bounds.iter().all(|b| b.holds);
    let b816 = good.bounds.iter().find(|b| b.m == 8 && b.n == 16).unwrap();
    Line {
        id: 5,
        pass: good.convergence.verdict == Verdict::Cauchy
            && bounds
            && ctl.convergence.verdict == Verdict::Divergent
            && (slope - want).abs() <= 0.05 * want,
        detail: format!(
            "proper chi: {:?}, increments {} majorised (8->16: {:.3e} <= {:.3e}, c_N {:.3e}); chi=1: {:?}, slope {:.6e} vs ln2*plateau^2 {:.6e} (tol 5%)",
            good.convergence.verdict,
            if bounds { "all" } else { "not all" },
            b816.increment,
            b816.majorant,
            good.c_n,
            ctl.convergence.verdict,
            slope,
            want
        ),
    }
}

fn c6() -> Line {
    let ps: Vec<ConePipeline> = [8, 16, 32].iter().map(|&n| pipeline(n, 20, 12, false)).collect();
    let cs: Vec<f64> = ps.iter().map(|p| p.small_k.monopole_slope).collect();
    let bound_ok = ps.iter().all(|p| p.small_k.monopole_at_k_min <= p.small_k.monopole_slope * p.small_k.k_min);
    let stable = cs.iter().all(|c| (c - cs[1]).abs() <= 0.1 * cs[1].abs() + 1e-300);
    let p = &ps[1];
    let plateau_err = p.small_k.plateaus.iter().map(|pl| pl.rel_error).fold(0.0, f64::max);
    let plateau_drift = ps[1]
        .small_k
        .plateaus
        .iter()
        .zip(&ps[2].small_k.plateaus)
        .map(|(a, b)| (a.measured - b.measured).abs() / b.measured)
        .fold(0.0, f64::max);
    let ratio = p.small_k.monopole_ratio;
    Line {
        id: 6,
        pass: bound_ok && stable && plateau_err <= 1e-6 && plateau_drift <= 1e-2 && ratio <= 1e-6,
        detail: format!(
            "|u00(k_min)| {:.1e} <= C k_min with C = {:?} over 8/16/32 nodes; plateaus l=1..12 vs closed form max rel {plateau_err:.1e}, refinement drift {plateau_drift:.1e}; |<Y00,eta>|/|eta| {ratio:.1e} (tol 1e-6)",
            p.small_k.monopole_at_k_min, cs
        ),
    }
}

fn c7() -> (Line, String) {
    let run = |nodes: usize, shells: usize, l: usize| {
        let cfg = config(shells, l);
        let p = pipeline(nodes, shells, l, false);
        let seq = intertwiner_sequence(&p, &cfg, shells + 1, VerdictRules::default()).unwrap();
        intertwiner_check(&p, &seq, &cfg, &opposite_probe(64)).unwrap()
    };
    let base = run(16, 20, 12);
    let fine = run(32, 40, 12);
    let ang = run(16, 20, 24);
    let decrease = base.residual / fine.residual;
    let pass = base.relative_residual <= 1e-2 && base.direct_relative_residual <= 1e-2 && decrease >= 2.0;
    let line = Line {
        id: 7,
        pass,
        detail: format!(
            "|Im<v_T,Tf>+l(f)|/|l(f)| {:.2e}, direct {:.2e} (tol 1e-2); (nodes, shells) doubling reduces it x{decrease:.3} (want >= 2); split: angular {:.2e}, grid {:.2e}",
            base.relative_residual, base.direct_relative_residual, base.angular_part, base.grid_part
        ),
    };
    let info = format!(
        "l_max 12 -> 24 reduces the residual x{:.1}; Weyl phase exp(i l) = {:.12} + {:.12}i",
        base.residual / ang.residual,
        base.weyl_phase[0],
        base.weyl_phase[1]
    );
    (line, info)
}

fn c8() -> Line {
    let cfg = config(20, 8);
    let g = grid(16, 20);
    let trunc = AngularTruncation::new(8);
    let h = RadialProfile::bump(1.0, 2.0, 1.0).unwrap();
    let g1 = ChargeAutomorphism::special(1.0, 0.5, 1.0).unwrap();
    let g2 = ChargeAutomorphism::special(1.0, 0.75, 1.5).unwrap();
    let g3 = ChargeAutomorphism::special(2.0, 0.5, 1.0).unwrap();
    let lambdas = [1.0, 4.0, 16.0];
    let eq = sector_equiv_test(&cfg, &g1, &g2, &h, &g, trunc, &lambdas).unwrap();
    let ne = sector_equiv_test(&cfg, &g1, &g3, &h, &g, trunc, &lambdas).unwrap();
    let t = eq.t_difference_norm.unwrap();
    let drift = eq.ir_drift.unwrap();
    let gap = ne.phase_gap_measured.unwrap();
    Line {
        id: 8,
        pass: eq.verdict == SectorVerdict::Equivalent
            && t.is_finite()
            && drift < 1e-2
            && ne.verdict == SectorVerdict::Inequivalent
            && (gap - 2.0).abs() <= 1e-6
            && ne.probe_fixed_residual == 0.0,
        detail: format!(
            "equal charges: |T(g1-g2)| {t:.6e}, IR-halving drift {drift:.1e} (tol 1e-2); unequal: gap {gap:.12} (want 2 +- 1e-6) at probe scale {:.6}, |Tf_l - f_l| {:.1e}",
            ne.probe_scale.unwrap(),
            ne.probe_fixed_residual
        ),
    }
}

fn c9() -> Line {
    let (_, rep) = KprConfig::geometric(KprParams::default()).unwrap();
    let rejected = matches!(
        KprConfig::geometric(KprParams { b_alpha: 0.4, ..Default::default() }),
        Err(Error::NotKprLike(_))
    );
    Line {
        id: 9,
        pass: rep.energy.converges && rep.kpr_condition.converges && rejected,
        detail: format!(
            "energy series: {:?} test, statistic {:.4}; KPR series: {:?} test, statistic {:.4}; b_alpha = 0.4 rejected: {rejected}",
            rep.energy.kind, rep.energy.statistic, rep.kpr_condition.kind, rep.kpr_condition.statistic
        ),
    }
}

fn c10() -> Line {
    let cfg = config(20, 8);
    let g = grid(16, 20);
    let trunc = AngularTruncation::new(8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    let u = ModeFunction::random(g.clone(), trunc, &mut rng);
    let mut mono = u.clone();
    let n = g.len();
    mono.coefficients_mut()[n..].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    let fixed = (&apply_t(&mono, &cfg, None).unwrap() - &mono).norm() / mono.norm();
    let f = build_test_function(
        vec![SourceTerm::rotation_invariant(RadialProfile::bump(1.0, 2.0, 1.0).unwrap())],
        vec![SourceTerm::rotation_invariant(RadialProfile::bump(0.5, 1.5, 0.3).unwrap())],
        &g,
        trunc,
    )
    .unwrap();
    let s = state_value(&cfg, &f.mode).unwrap();
    let dev = (s.state_value - s.vacuum_value).abs();
    let same = inner_product(&f.mode, &f.mode).unwrap().re;
    Line {
        id: 10,
        pass: fixed <= 1e-15 && dev <= 1e-15 && s.state_value == (-0.25 * same).exp(),
        detail: format!(
            "|T u - u|/|u| on l=0 data {fixed:.1e}; |omega_T(W(f)) - exp(-|f|^2/4)| {dev:.1e} (tol 1e-15)"
        ),
    }
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let mut lines = vec![];
    let mut notes = vec![];
    lines.push(c1());
    lines.push(c2());
    let (l3, n3) = c3();
    lines.push(l3);
    notes.push((3, n3));
    let (l4, n4) = c4();
    lines.push(l4);
    notes.push((4, n4));
    lines.push(c5());
    lines.push(c6());
    let (l7, n7) = c7();
    lines.push(l7);
    notes.push((7, n7));
    lines.push(c8());
    lines.push(c9());
    lines.push(c10());
    for l in &lines {
        println!("criterion {:>2}: {} | {}", l.id, if l.pass { "PASS" } else { "FAIL" }, l.detail);
    }
    for (id, n) in &notes {
        println!("note {id:>2}: {n}");
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {}/{} passed in {:.1} s (seed {})", lines.len() - failed, lines.len(), t0.elapsed().as_secs_f64(), seed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
