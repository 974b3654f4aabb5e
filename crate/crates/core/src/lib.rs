//! Piecewise deterministic Markov processes with fast chemical jumps:
//! exact simulation, averaging, large deviations, exponential tilting and
//! coarse-graining into metastates, with a three-state molecular motor as a
//! worked model.

pub mod averaging;
pub mod coarse;
pub mod io;
pub mod ldp;
pub mod model;
pub mod motor;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use averaging::{averaged_field, quasistationary, solve_averaged_ode, QuasistationaryMeasure};
pub use model::{MetastatePartition, PdmpModel};
pub use simulator::{simulate_path, SimConfig, Trajectory};
