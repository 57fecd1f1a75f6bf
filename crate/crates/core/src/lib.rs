pub mod error;
pub mod formats;
pub mod graph;
pub mod harness;
pub mod net;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{ClassIndex, GraphBundle, NormMode};
pub use harness::{EvalReport, TrainConfig, ZslDataset};
pub use net::{ArchSpec, ModelState};
pub use tensor::{DenseMatrix, Rng, SparseAdjacency};
