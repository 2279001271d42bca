//! Quadrotor flight simulator for both domains.

pub mod controller;
pub mod dynamics;
pub mod episode;
pub mod log;
pub mod params;
pub mod plan;

pub use controller::{CascadeController, ControllerGains, Setpoint};
pub use dynamics::{measure, step_dynamics, QuadState};
pub use episode::{mix_seed, simulate_episode, EpisodeRequest, FlightEpisode, SimSettings};
pub use params::{inject_fault, Domain, DomainShiftProfile, FaultSpec, QuadParams, NUM_ROTORS};
pub use plan::{ExcursionSettings, FlightPlan};
