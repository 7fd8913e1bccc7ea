//! Channels, fine-grained system–environment dynamics and process tensors.

mod channel;
pub mod container;
mod dynamics;
mod lindblad;
mod sim;
mod tensor;

pub(crate) use channel::LinearMap;
pub(crate) use sim::MultiState;
pub use channel::{Channel, QState, PSD_TOL, REPAIR_LIMIT, TP_TOL};
pub use dynamics::{build_dynamics, SEDynamics, MAX_CHOI_DIM};
pub use lindblad::{lindblad_segment, LindbladGenerator};
pub use tensor::{Line, ProcessTensor, CAUSALITY_TOL, MARGINAL_TOL};
