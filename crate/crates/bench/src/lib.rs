//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use infravac_core::localization::{build_u_c, make_cone_cutoff};
use infravac_core::modespace::geometric_boundaries;
use infravac_core::{
    AngularRankRule, AngularTruncation, ConePipeline, ConeSpec, KprConfig, KprParams, RadialGrid, SpecialForm,
};

pub fn grid(nodes: usize, shells: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::new(&geometric_boundaries(1.0, 0.5, shells), nodes, 96.0).expect("valid grid"))
}

pub fn kpr(shells: usize, cap: usize) -> KprConfig {
    let params = KprParams { n_shells: shells, rank_rule: AngularRankRule::Capped(cap), ..Default::default() };
    KprConfig::geometric(params).expect("default parameters are KPR-like").0
}

pub fn cone() -> ConeSpec {
    ConeSpec::new([0.0, 0.0, 1.0], PI / 6.0).expect("valid cone")
}

pub fn pipeline(nodes: usize, shells: usize, l_max: usize) -> ConePipeline {
    let chi = make_cone_cutoff(cone(), 1.0, l_max.max(64)).expect("cutoff").function;
    build_u_c(cone(), &chi, SpecialForm { q: 1.0, r1: 0.5, r2: 1.0 }, &grid(nodes, shells), AngularTruncation::new(l_max))
        .expect("pipeline")
}
