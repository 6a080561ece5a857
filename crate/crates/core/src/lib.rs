//! Teacher-student competition for unsupervised domain adaptation.
//!
//! An adversarial teacher (DANN or CDAN wiring) learns from labeled source
//! and unlabeled target data. A student with the same extractor and
//! classifier learns from target data only, supervised by pseudo-labels that
//! a per-sample competition picks from the two networks. The teacher keeps
//! priority while its confidence exceeds a threshold that rises over the run.
//!
//! Everything numeric is generic over [`Scalar`]; the `*64` aliases fix the
//! scalar to `f64`, which is what the experiment harness uses.

pub mod autodiff;
pub mod competition;
pub mod config;
pub mod data;
mod error;
pub mod losses;
pub mod networks;
mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Mlp64 = networks::Mlp<f64>;
pub type TeacherNet64 = networks::TeacherNet<f64>;
pub type StudentNet64 = networks::StudentNet<f64>;
pub type PseudoLabel64 = networks::PseudoLabel<f64>;
pub type Decision64 = competition::CompetitionDecision<f64>;
pub type Domain64 = data::Domain<f64>;
pub type Trainer64 = trainer::Trainer<f64>;
pub type RunResult64 = trainer::RunResult<f64>;

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Trainer32 = trainer::Trainer<f32>;
