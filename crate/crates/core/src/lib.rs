//! Simulated vision-based tactile sensing.
//!
//! The crate covers the full pipeline for a parallel-jaw gripper fitted with a
//! gel tactile sensor: signed-distance object models, contact simulation,
//! photometric rendering of tactile images, calibration-based inversion of
//! those images back to local shape, tactile map construction from a grasp
//! grid, and localization / identification of objects against stored maps.
//!
//! All distances are millimetres, all angles radians unless a name says
//! otherwise. World frame: z up, objects stand on the z = 0 plane. Sensor
//! frame: x right and y down in the image, z pointing out of the gel into the
//! scene; depth values are indentation into the gel, so a contact point at
//! depth `d` sits at z = -d in the sensor frame.

pub mod descriptor;
pub mod error;
pub mod geometry;
pub mod local_shape;
pub mod localization;
pub mod mapping;
pub mod registration;
pub mod sensor_sim;
pub mod util;

pub use error::{Error, FormatError, Result};
