pub mod anomaly;
pub mod campaign;
pub mod encoding;
pub mod eval;
pub mod global;
pub mod local;
pub mod model;
pub mod pipeline;
pub mod scenario;
pub mod simulate;
pub mod spatial_pooler;
pub mod svm;
pub mod temporal_memory;
pub mod trace;
pub mod error;
mod hashmix;
pub mod real;
pub mod sdr;

pub use error::{Error, Result};
pub use real::Real;

// Double-precision aliases for the main pipeline types. The structs are
// generic over the scalar so f32 builds are possible, but f64 is what the
// binaries and tests use.
pub type Detector = anomaly::KpiDetector<f64>;
pub type DetectorConfig = anomaly::DetectorParams<f64>;
pub type OutlierModel = svm::OneClassSvm<f64>;
pub type Params = pipeline::SystemParams<f64>;
pub type System = pipeline::TrainedSystem<f64>;
