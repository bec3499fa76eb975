//! Direct simulation of the open system and the small-hole limit.

mod shrink;
mod srb;
mod survival;

pub use shrink::{
    conditional_limit_test, shrink_study, validate_family, ConditionalLimit, FamilyMember,
    ShrinkRecord, ShrinkStudyResult,
};
pub use srb::{srb_reference, SrbMode};
pub use survival::{
    escape_rate_fit, survival_mc, Bins, EscapeFit, InitDensity, SurvivalRun, SurvivalSeries,
    SurvivalSpec, SurvivorHistograms, GENERATOR,
};
