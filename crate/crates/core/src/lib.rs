//! Optimal-transport dataset distillation on synthetic class-conditional
//! Gaussian mixtures.

pub mod data;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod optim;
pub mod ot;
pub mod relabel;
pub mod rng;
pub mod sampler;
pub mod student;

pub use error::{Error, Result};
pub use data::{GaussianMixture, GmmSpec, GridSpec, LabeledDataset, Split};
pub use harness::{AblationFlags, AblationReport, ExperimentConfig, RunReport, SeedRecord, SweepRow};
pub use model::{Classifier, ModelKind};
pub use ot::{CostMatrix, SinkhornResult, TransportPlan};
pub use relabel::{AlphaReport, AlphaSettings, HardReference, SoftLabelSet, Teacher};
pub use rng::{CountingRng, Stage, StreamUsage};
pub use sampler::{DistilledSet, GuidanceWeights, SamplerConfig};
pub use student::{LossWeights, StudentModel, StudentSettings};
