//! Orthographic view rigs and self-calibration by shared body fitting.

mod fit;
mod rig;

pub use fit::{init_shared_model, init_view_from_observation, refine_joint, FitConfig, FitReport, Observation, ViewFitReport};
pub use rig::{rasterize_silhouette, silhouette_iou, Mask, ViewRig};

use alloc::string::String;

use crate::body::BodyModelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("no views to fit")]
    NoViews,
    #[error("{rigs} rigs but {observations} observations")]
    ViewCountMismatch { rigs: usize, observations: usize },
    #[error("observation has {got} keypoint slots, model has {expected} joints")]
    KeypointCount { expected: usize, got: usize },
    #[error("fewer than 4 visible keypoints in every view")]
    Unsolvable,
    #[error("non-finite residual; state: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Body(#[from] BodyModelError),
}
