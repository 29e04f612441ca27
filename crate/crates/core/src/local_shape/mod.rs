//! Local contact-shape estimation: photometric calibration, contact-mask
//! extraction, and gradient integration back to a depth map.

mod calibration;
mod estimate;
mod mask;
mod poisson;
#[cfg(test)]
pub(crate) mod testutil;

pub use calibration::{
    calibrate, calibrate_with, CalibrationParams, PhotometricCalibration, CALIBRATION_MAGIC,
    CALIBRATION_VERSION,
};
pub use estimate::{
    estimate_local_shape, estimate_local_shape_with, heightmap_rmse, image_to_gradients,
};
pub use mask::{extract_contact_mask, MaskParams};
pub use poisson::{integrate_gradients, integrate_gradients_anchored, GradientField};
