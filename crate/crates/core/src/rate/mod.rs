//! N-level optical pumping rate equations.

mod scheme;
mod solve;
mod synthesis;

pub use scheme::{build_four_level, build_three_level, Level, LevelKind, LevelScheme, Transition, MAX_LEVELS};
pub use solve::{
    interval_propagator, rate_matrix, steady_state, time_evolve, DriveField, DriveRole, Populations, Propagator,
    RateMatrix, MAX_RATE_PER_US,
};
pub use synthesis::{average_scans, hole_spectrum, orientation_average, HoleBurning, InhomogeneousModel, Quadrature};
