use crate::body::BodyModelError;
use crate::calib::CalibrationError;
use crate::geometry::GeometryError;
use crate::nn::NnError;
use crate::recon::ReconError;

/// Any failure raised by the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    BodyModel(#[from] BodyModelError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Recon(#[from] ReconError),
    #[error("invalid argument: {0}")]
    InvalidArgument(alloc::string::String),
}
