//! Finite-horizon checks of the class M conditions and the hole assumptions,
//! and the length scales derived from them.

mod assumptions;
mod class_m;
mod scales;

pub use assumptions::{
    check_a1, check_a2, check_a4, covering_check, covering_family, derive_n0, forward_images,
    steps_to_cover, A1Report, A2Report, A4Report, A4Violation, CoveringCheck, COVER_TOL,
};
pub use class_m::{check_class_m, ClassMConstants, ClassMReport, ClassMSettings};
pub use scales::{
    a3_bound, derive_length_scales, growth_length, no_piece_left_bound, HoleBound, HoleSizeVerdict,
    LengthScales, ScaleInputs, GROWTH,
};
