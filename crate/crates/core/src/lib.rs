pub mod analytics;
pub mod error;
pub mod experiment;
pub mod frame;
pub mod hv;
pub mod io;
pub mod memory;
pub mod rng;
pub mod scenario;
pub mod sim;

pub use error::{Error, ErrorKind, Result};
pub use frame::SpeckleFrame;
pub use hv::{BinarizePolicy, BundleAccumulator, Hypervector};
pub use memory::PrototypeMemory;
pub use scenario::{Scenario, ScenarioConfig};
