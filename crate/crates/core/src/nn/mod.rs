//! Minimal dense numerical engine: tensors, layers with exact backward
//! passes, a static layer graph, Adam, and gradient checking.

pub mod gemm;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use graph::{NetNode, Network, Op};
pub use layers::{BatchNorm, Conv1d, Dense, Mode, Param};
pub use optim::{Adam, PlateauScheduler};
pub use tensor::Tensor;
