//! The quadratic family, hole geometry, the partition of the critical
//! neighbourhood, and bound/recovery tables.

mod bound;
mod hole;
mod map;
mod partition;
mod shadow;

pub use bound::{
    audit_bound_derivatives, bound_period, critical_orbit_stats, interval_lengths, recovery_time,
    shadow_time, BoundAudit, BoundRecoveryTables, CriticalOrbitStats,
};
pub use hole::OpenIntervalSet;
pub use map::{QuadMap, TentMap, UnimodalMap};
pub use partition::NeighborhoodPartition;
pub use shadow::{Pt, ShadowOrbit};
