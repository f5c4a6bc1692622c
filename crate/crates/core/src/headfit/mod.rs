//! Landmark-driven head fitting on a toy blendshape head.
//!
//! The model has the parameter interface of the motion types (100 shape,
//! 50 expression, 50 pose coefficients) but only pose dims 0..6 act: jaw
//! rotation then global rotation, both axis-angle. Fitting minimizes sums of
//! squared residuals with damped Gauss-Newton (default) or gradient descent.

mod model;
pub mod rotation;
mod sequence;
mod shape;
mod solver;

pub use model::{project_points, ToyHeadModel, DEFAULT_MODEL_SEED, MODEL_LANDMARKS, VERTEX_COUNT};
pub use sequence::{
    fit_sequence, pack_frames, render_landmarks, sequence_gradient, sequence_objective, similarity_init,
    temporal_variation, FrameParams, SequenceFit, SequenceFitConfig, FRAME_PARAMS,
};
pub use shape::{fit_shape, shape_gradient, shape_objective, Scan, ShapeFit, ShapeFitConfig};
pub use solver::{FitReport, Method, SolverConfig};
