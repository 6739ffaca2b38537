//! Fixed-step simulation of quadrotors carrying a shared payload through taut
//! cables.

mod dynamics;
mod params;
mod state;

pub use dynamics::{
    accelerations, apply_motor_limits, step, Accelerations, Actuation, SimError, Simulator, Stepped,
};
pub use params::{
    crazyflie, Integrator, ParamError, PayloadKind, PayloadParams, QuadrotorParams, RigParams,
    SimConfig,
};
pub use state::{
    attachment_position, mechanical_energy, min_pairwise_distance, quad_position, quad_velocity,
    FullSystemState, RobotState,
};
