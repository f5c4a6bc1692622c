//! Parametric motion and identity types, frame packing, and motion files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, NamedArray};
use crate::error::{ensure_dim, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const SHAPE_DIM: usize = 100;
pub const EXPRESSION_DIM: usize = 50;
pub const POSE_DIM: usize = 50;
/// Packed per-frame width: expression followed by pose.
pub const FRAME_DIM: usize = EXPRESSION_DIM + POSE_DIM;
pub const DEFAULT_FPS: f64 = 30.0;

fn check_finite<T: Scalar>(what: &str, values: &[T]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} contains non-finite values")))
    }
}

/// Identity coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeParams<T> {
    beta: Vec<T>,
}

impl<T: Scalar> ShapeParams<T> {
    pub fn new(beta: Vec<T>) -> Result<Self> {
        ensure_dim("shape parameters", SHAPE_DIM, beta.len())?;
        check_finite("shape parameters", &beta)?;
        Ok(Self { beta })
    }

    pub fn zeros() -> Self {
        Self {
            beta: vec![T::zero(); SHAPE_DIM],
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.beta
    }

    pub fn to_row(&self) -> Matrix<T> {
        Matrix::row_vector(&self.beta)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionFrame<T> {
    pub expression: Vec<T>,
    pub pose: Vec<T>,
}

impl<T: Scalar> MotionFrame<T> {
    pub fn new(expression: Vec<T>, pose: Vec<T>) -> Result<Self> {
        let frame = Self { expression, pose };
        frame.validate()?;
        Ok(frame)
    }

    pub fn zeros() -> Self {
        Self {
            expression: vec![T::zero(); EXPRESSION_DIM],
            pose: vec![T::zero(); POSE_DIM],
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_dim("frame expression", EXPRESSION_DIM, self.expression.len())?;
        ensure_dim("frame pose", POSE_DIM, self.pose.len())?;
        check_finite("frame expression", &self.expression)?;
        check_finite("frame pose", &self.pose)
    }
}

/// Expression coefficients first, then pose.
pub fn pack_frame<T: Scalar>(frame: &MotionFrame<T>) -> Result<Vec<T>> {
    frame.validate()?;
    let mut out = Vec::with_capacity(FRAME_DIM);
    out.extend_from_slice(&frame.expression);
    out.extend_from_slice(&frame.pose);
    Ok(out)
}

pub fn unpack_frame<T: Scalar>(packed: &[T]) -> Result<MotionFrame<T>> {
    ensure_dim("packed frame", FRAME_DIM, packed.len())?;
    MotionFrame::new(
        packed[..EXPRESSION_DIM].to_vec(),
        packed[EXPRESSION_DIM..].to_vec(),
    )
}

/// A `T x 100` sequence of packed frames sampled at `fps`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence<T> {
    frames: Matrix<T>,
    fps: f64,
}

impl<T: Scalar> MotionSequence<T> {
    pub fn from_matrix(frames: Matrix<T>, fps: f64) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::validation("motion sequence needs at least one frame"));
        }
        ensure_dim("motion frame width", FRAME_DIM, frames.cols())?;
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::validation(format!("fps must be positive, got {fps}")));
        }
        check_finite("motion sequence", frames.as_slice())?;
        Ok(Self { frames, fps })
    }

    pub fn from_frames(frames: &[MotionFrame<T>], fps: f64) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * FRAME_DIM);
        for f in frames {
            data.extend(pack_frame(f)?);
        }
        Self::from_matrix(Matrix::from_vec(frames.len(), FRAME_DIM, data), fps)
    }

    pub fn zeros(len: usize, fps: f64) -> Result<Self> {
        Self::from_matrix(Matrix::zeros(len, FRAME_DIM), fps)
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    /// Always false for a constructed sequence; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.frames
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.frames
    }

    pub fn frame(&self, t: usize) -> MotionFrame<T> {
        let row = self.frames.row(t);
        MotionFrame {
            expression: row[..EXPRESSION_DIM].to_vec(),
            pose: row[EXPRESSION_DIM..].to_vec(),
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.fps
    }
}

/// Pinhole-free scaled orthographic camera: `p = scale * (x, y) + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams<T> {
    pub scale: T,
    pub translation: [T; 2],
}

impl<T: Scalar> CameraParams<T> {
    pub fn new(scale: T, translation: [T; 2]) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::validation(format!("camera scale must be positive, got {scale}")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("camera translation must be finite"));
        }
        Ok(Self { scale, translation })
    }
}

const MOTION_KIND: &str = "motion";

/// Writes `seq` and the identity `shape` as a motion container.
pub fn save_motion<T: Scalar>(
    path: impl AsRef<Path>,
    seq: &MotionSequence<T>,
    shape: &ShapeParams<T>,
    identity: &str,
) -> Result<()> {
    motion_container(seq, shape, identity).write(path)
}

pub(crate) fn motion_container<T: Scalar>(
    seq: &MotionSequence<T>,
    shape: &ShapeParams<T>,
    identity: &str,
) -> Container {
    let identity = if identity.is_empty() { "-" } else { identity };
    let mut c = Container::new(MOTION_KIND)
        .with_meta("identity", identity.replace(char::is_whitespace, "_"))
        .with_meta("fps", seq.fps())
        .with_meta("frames", seq.len())
        .with_meta("dims", FRAME_DIM)
        .with_meta("shape_dims", SHAPE_DIM);
    c.push_array(NamedArray::new(
        "shape",
        1,
        SHAPE_DIM,
        shape.as_slice().iter().map(|v| v.to_f32_lossy()).collect(),
    ));
    c.push_array(NamedArray::new(
        "frames",
        seq.len(),
        FRAME_DIM,
        seq.as_matrix().as_slice().iter().map(|v| v.to_f32_lossy()).collect(),
    ));
    c
}

#[derive(Clone, Debug)]
pub struct LoadedMotion<T> {
    pub sequence: MotionSequence<T>,
    pub shape: ShapeParams<T>,
    pub identity: String,
}

pub fn load_motion<T: Scalar>(path: impl AsRef<Path>) -> Result<LoadedMotion<T>> {
    let c = Container::read(path)?;
    c.expect_kind(MOTION_KIND)?;
    let frames: usize = c.meta("frames")?;
    let dims: usize = c.meta("dims")?;
    let shape_dims: usize = c.meta("shape_dims")?;
    let fps: f64 = c.meta("fps")?;
    ensure_dim("motion file frame width", FRAME_DIM, dims)?;
    ensure_dim("motion file shape width", SHAPE_DIM, shape_dims)?;
    let shape_arr = c.expect_array("shape", 1, SHAPE_DIM)?;
    let frames_arr = c.expect_array("frames", frames, FRAME_DIM)?;
    let cast = |v: &[f32]| v.iter().map(|&x| T::from_f32_lossy(x)).collect::<Vec<T>>();
    Ok(LoadedMotion {
        sequence: MotionSequence::from_matrix(
            Matrix::from_vec(frames, FRAME_DIM, cast(&frames_arr.data)),
            fps,
        )?,
        shape: ShapeParams::new(cast(&shape_arr.data))?,
        identity: c.meta_str("identity")?.to_string(),
    })
}
