//! Lifetime and spin-T1 transients, and ensemble Purcell averaging.

mod lifetime;
mod purcell;
mod t1;

pub use lifetime::{fit_lifetime, Excitation, LifetimeFit, Transient};
pub use purcell::{ensemble_purcell, ExcitationProfile, FieldMaps, Grid2};
pub use t1::{
    fit_t1, polarization_ratio, readout_area, run_sequence, simulate_t1_sequence, t1_lasers, t1_sweep, Laser,
    PolarizationRatio, Pulse, PulseSequence, T1Fit, T1Protocol, T1Transients,
};
