//! Certified training and verification of variational quantum classifiers.
//!
//! Bounds on the circuit outputs are propagated with interval or affine
//! arithmetic over an l∞ box around an amplitude-encoded input. Both bound
//! paths are generic over [`Scalar`] so the same code runs in plain `f64` and
//! on the reverse-mode tape used for training.

pub mod affine;
pub mod autodiff;
pub mod checkpoint;
pub mod circuit;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod interval;
pub mod propagation;
pub mod scalar;
pub mod training;

pub use affine::{AffineForm, ComplexAffine, NoiseSymbolSpace};
pub use checkpoint::Checkpoint;
pub use circuit::{forward_exact, CircuitSpec, Cnot, Params, RotationKind};
pub use dataset::{Dataset, PrepareConfig, ResizeFilter};
pub use error::{Error, Result};
pub use evaluation::{evaluate, AttackConfig, EvalReport};
pub use interval::{ComplexInterval, Interval};
pub use propagation::{bound_logits, certify_sample, Arithmetic, BoundConfig, BoundedLogits};
pub use scalar::Scalar;
pub use training::{train, LossKind, TrainConfig};
