//! Concrete models for the experiments.

mod linear;
mod radar;
mod transport;

pub use linear::{
    linear_fp_pde_diffusion, linear_fp_scenario, oscillator_scenario, LinearScenario,
};
pub use radar::{
    coordinated_turn_drift, coordinated_turn_hessians, coordinated_turn_jacobian, radar_measure,
    simulate_truth, RadarScenario, Trajectory, TruthScheme, MEAS_DIM, STATE_DIM, TRUTH_SUBSTEPS,
};
pub use transport::{transport_scenario, Grid, TransportScenario};
