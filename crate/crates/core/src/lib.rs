//! Audio-driven singing-head motion: a transformer conditional VAE over
//! parametric face coefficients, with the data protocol, a landmark-driven
//! head fitter and the evaluation metrics around it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file name the two concrete instantiations.

pub mod audio;
pub mod autograd;
pub mod container;
pub mod cvae;
pub mod dataset;
pub mod error;
pub mod generation;
pub mod headfit;
pub mod metrics;
pub mod motion;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;
pub use tensor::Matrix;

pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
pub type Cvae32 = cvae::Cvae<f32>;
pub type Cvae64 = cvae::Cvae<f64>;
pub type MotionSequence32 = motion::MotionSequence<f32>;
pub type MotionSequence64 = motion::MotionSequence<f64>;
pub type ShapeParams32 = motion::ShapeParams<f32>;
pub type ShapeParams64 = motion::ShapeParams<f64>;
pub type Trainer32 = training::Trainer<f32>;
pub type Trainer64 = training::Trainer<f64>;
pub type SampleSet32 = metrics::SampleSet<f32>;
pub type SampleSet64 = metrics::SampleSet<f64>;
pub type ToyHeadModel32 = headfit::ToyHeadModel<f32>;
pub type ToyHeadModel64 = headfit::ToyHeadModel<f64>;
