//! Dead-end membrane filtration of multi-species feeds: pore-scale fouling
//! simulation, pore-shape optimization and multi-stage separation protocols.

pub mod cli;
pub mod error;
pub mod model;
pub mod multistage;
pub mod optim;
pub mod sim;

pub use error::{ModelError, OptError, SimError, StageError};
pub use model::{FeedSpec, PoreProfile, ScreeningParams, ShapeFunction, Species};
pub use sim::{SimConfig, SimRecord};
