//! graspbench: a volumetric grasp-planning workbench.
//!
//! The pipeline encodes scenes and grippers as TSDF volumes, scores every
//! top-down grasp pose by cross-convolving the gripper encoding over rotated
//! scene encodings, and selects the best gripper, opening configuration, and
//! pose by global argmax. A deterministic kinematic simulator provides
//! self-supervised training labels and evaluation outcomes.

pub mod error;
pub mod gripper;
pub mod volume;

pub use error::{Error, Result};
