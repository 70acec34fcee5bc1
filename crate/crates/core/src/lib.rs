//! Dataset distillation for I/Q modulation recognition by matching feature
//! distributions in both the time and the frequency domain.
//!
//! * [`dataio`]: labeled signal sets and the SIGDS container
//! * [`siggen`]: synthetic modulation datasets with AWGN
//! * [`spectral`]: per-channel DFT magnitude and its gradient
//! * [`autodiff`]: reverse-mode tensors for the embedding networks
//! * [`models`]: network presets
//! * [`distill`]: the matching losses and the optimization loop
//! * [`eval`]: train-from-scratch evaluation

pub mod autodiff;
pub mod dataio;
pub mod distill;
mod error;
pub mod eval;
pub mod models;
mod real;
pub mod rng;
pub mod siggen;
pub mod spectral;

pub use autodiff::{Graph, NodeId, Tensor};
pub use dataio::{load_sigds, save_sigds, split_train_test, take_per_class, LabeledSignalSet, SignalRecord, SyntheticSet};
pub use distill::{combined_loss, dm_distill, mdm_distill, DistillConfig, LossReport};
pub use error::{Error, ParseError, Result};
pub use eval::{cross_arch_matrix, evaluate, train_classifier, CrossArchMatrix, EvalConfig, EvalResult};
pub use models::{sample_network, ArchSpec, Classifier, EmbeddingNet, Layer};
pub use real::Real;
pub use siggen::{generate_dataset, GenConfig, ModulationScheme, Snr};
pub use spectral::{dft_magnitude, dft_magnitude_backward, to_frequency, FreqRecord};
