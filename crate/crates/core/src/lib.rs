//! Skeleton-based hand gesture recognition.
//!
//! A CNN over the 21-joint feature grid feeds a gaze-fused dense layer and an
//! LSTM that classifies every frame. The crate also ships a deterministic
//! synthetic corpus, a training loop, and a streaming recognition service.

pub mod dataset;
pub mod error;
pub mod model;
pub mod nn;
pub mod rng;
pub mod skeleton;
pub mod stream;
pub mod synth;
pub mod train;
pub mod weights;

pub use error::{Error, Result, WeightFileError};
pub use model::{ModelConfig, Prediction, RecognizerModel, TimestepOutput};
pub use skeleton::{GestureFrame, HandSkeleton, JointId, RigidTransform};
pub use synth::{AugmentSpec, GenConfig, GestureClass, GestureSequence};
pub use train::{Metrics, TrainConfig};
