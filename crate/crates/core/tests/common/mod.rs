#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use infravac_core::localization::{build_u_c, make_cone_cutoff};
use infravac_core::modespace::geometric_boundaries;
use infravac_core::*;

pub const UV_CUTOFF: f64 = 96.0;

pub fn grid(nodes: usize, shells: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(&geometric_boundaries(1.0, 0.5, shells), nodes, UV_CUTOFF).unwrap())
}

pub fn config(shells: usize, cap: usize) -> KprConfig {
    let params = KprParams { n_shells: shells, rank_rule: AngularRankRule::Capped(cap), ..Default::default() };
    KprConfig::geometric(params).unwrap().0
}

pub fn cone() -> ConeSpec {
    ConeSpec::new([0.0, 0.0, 1.0], PI / 6.0).unwrap()
}

pub fn charge() -> SpecialForm {
    SpecialForm { q: 1.0, r1: 0.5, r2: 1.0 }
}

pub fn pipeline(nodes: usize, shells: usize, l_max: usize, control: bool) -> ConePipeline {
    let chi = if control {
        AngularFunction::constant(1.0)
    } else {
        make_cone_cutoff(cone(), 1.0, l_max.max(64)).unwrap().function
    };
    build_u_c(cone(), &chi, charge(), &grid(nodes, shells), AngularTruncation::new(l_max)).unwrap()
}

pub fn opposite_probe(l_expand: usize) -> ConeProbe {
    ConeProbe::opposite(&cone(), 2.0 * PI / 3.0, RadialProfile::bump(1.0, 2.0, 1.0).unwrap(), l_expand)
}
