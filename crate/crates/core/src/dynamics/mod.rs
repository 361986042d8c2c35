//! Time integration of the bar-and-hinge sheet under base excitation.

mod excitation;
mod integrator;
mod mechanics;
mod modal;
mod model;
mod spectrum;
mod trajectory;

pub use excitation::{base_excitation, ExcitationSegment, ExcitationSpec};
pub use integrator::{simulate, step, steps_per_sample, synchronized_energy, SimState, Stepper};
pub use mechanics::{
    elastic_energy, gravitational_energy, internal_forces, kinetic_energy, ForceTerms,
};
pub use modal::{
    calibrate_crease_stiffness, natural_frequencies, static_equilibrium, tangent_stiffness,
    Calibration,
};
pub use model::{
    attach_payload, station_coordinate, station_index, station_weights, ModelParams, PayloadSpec,
    ReservoirModel, CALIBRATED_CREASE_STIFFNESS, MAX_PAYLOAD_G, STATION_LABELS,
};
pub use spectrum::{nonlinearity_index, tone_amplitude};
pub use trajectory::{channel_name, Trajectory, TrajectoryMeta};
