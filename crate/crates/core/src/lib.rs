//! Tensor ring and tree tensor network regression over the polynomial
//! `[1, x]` featurization, with an exact split of every output into
//! contributions of fixed interaction degree.
//!
//! * [`tensor`]: dense tensors, products, contractions.
//! * [`degree`]: degree-indexed tensors and degree-preserving operations.
//! * [`model`]: TR/TTN parameterizations and their contraction schedules.
//! * [`grad`]: tape-based reverse mode, MSE loss, minibatch training.
//! * [`data`]: IDX ingestion, 28×28 → 8×8 resampling, dataset caches.
//! * [`analysis`]: per-degree magnitudes/accuracies and report formats.

pub mod analysis;
pub mod data;
pub mod degree;
pub mod exec;
pub mod grad;
pub mod model;
pub mod tensor;

pub use degree::{DegreeTensor, term_count};
pub use exec::Execution;
pub use model::{DegreeSet, InitScheme, ModelKind, Pass, TensorNetwork};
pub use tensor::DenseTensor;
