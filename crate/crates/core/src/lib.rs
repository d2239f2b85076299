//! Pseudo reaction-diffusion laboratory.
//!
//! Two-layer ReLU generators trained with a supervised or critic-augmented objective, the
//! kernel quantities and closed-form bounds that describe their weight dynamics, and explicit
//! simulators for the Turing and Gray-Scott reaction-diffusion systems.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod featviz;
pub mod manifest;
pub mod network;
pub mod numerics;
pub mod objective;
pub mod pgm;
pub mod rdsim;
pub mod theory;
pub mod trainer;

pub use dataset::{Batch, Dataset, LabelMode, ManifoldSpec, Sample};
pub use error::{Error, Result};
pub use network::{DiscriminatorNet, GeneratorNet, InitMode, InitSnapshot};
pub use numerics::{Matrix, SeededRng, Spectrum};
pub use objective::{GeneratorGradients, GradMode, LossBreakdown};
pub use rdsim::{GrayScottParams, RDGrid, RdModel, TuringParams};
pub use theory::{ConstantsReport, GramReport};
pub use trainer::{RDTerms, TrainConfig, TrainMode, TrajectoryLog};
