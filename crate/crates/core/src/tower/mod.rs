//! The auxiliary stopping time, the return partition on reference
//! intervals, tower assembly, and the audits of the tail, hole-fall,
//! piece-count and distortion estimates.
mod audits;
mod cover;
mod engine;
mod model;

pub use audits::{
    distortion_audit, free_excursion_constant, growth_lemma_check, hole_fall_stats,
    markov_return_check, piece_count_audit, piece_count_bound, return_audit, stop_length_check,
    tail_audit, DistortionAudit, GrowthLemmaCheck, HoleFallStats, MeasuredConstants,
    PieceCountAudit, ReiterationCheck, ReturnAudit, TailAudit,
};
pub use cover::{build_reference_cover, CoverSegment, ReferenceCover};
pub use engine::{
    aux_partition, full_return_partition, ChainReturn, LevelRecord, Outcome, Residual, RunFlags,
    SeedRun, StopHistory, StoppedCell, TowerParams, TowerSetup,
};
pub use model::{assemble_tower, build_tower, SeedSelection, TowerCell, TowerModel};

#[cfg(test)]
mod tests;
