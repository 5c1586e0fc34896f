//! Numerical infravacuum representations of the free massless scalar field.
pub mod charges;
pub mod convergence;
pub mod error;
pub mod infravacuum;
pub mod localization;
pub mod modespace;
pub mod quadrature;
pub mod special;
pub mod transforms;

pub use charges::{ChargeAutomorphism, LinearFormReport, SpecialForm};
pub use convergence::{ConvergenceReport, PowerLawFit, Verdict, VerdictRules};
pub use error::{Error, Result};
pub use infravacuum::{AngularRankRule, KprConfig, KprParams, SummabilityReport};
pub use localization::{ConeCutoff, ConePipeline, ConeProbe, ConeSpec, DilationLimitReport, SectorReport, SectorVerdict};
pub use modespace::{AngularTruncation, Involution, ModeFunction, RadialGrid};
pub use transforms::{AngularFunction, RadialProfile, SourceTerm, TestFunction};
