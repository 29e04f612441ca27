//! Shared fixtures for the estimation tests: synthetic parabolic-cap
//! imprints with exactly known depths, rendered through the default
//! photometric model.

use crate::geometry::{Heightmap, TactileImage};
use crate::local_shape::calibration::{calibrate, PhotometricCalibration};
use crate::sensor_sim::{render_tactile_image, PhotometricModel};

pub const W: usize = 48;
pub const H: usize = 36;
pub const PITCH: f64 = 0.3;
pub const MAX_IND: f64 = 2.0;

/// Parabolic indentation d = depth0 - rho^2 / (2 r0) around (cx, cy) in mm.
pub fn cap_heightmap(cx: f64, cy: f64, r0: f64, depth0: f64) -> Heightmap {
    let mut depths = vec![0.0f32; W * H];
    let mut mask = vec![false; W * H];
    for r in 0..H {
        for c in 0..W {
            let dx = c as f64 * PITCH - cx;
            let dy = r as f64 * PITCH - cy;
            let d = depth0 - (dx * dx + dy * dy) / (2.0 * r0);
            if d > 1e-9 {
                depths[r * W + c] = d as f32;
                mask[r * W + c] = true;
            }
        }
    }
    Heightmap::new(W, H, PITCH, MAX_IND, depths, mask).unwrap()
}

pub fn noiseless_model() -> PhotometricModel {
    PhotometricModel::default().with_noise_sigma(0.0).unwrap()
}

/// A spread of caps covering a healthy range of slopes and positions.
pub fn training_pairs() -> Vec<(TactileImage, Heightmap)> {
    let pm = noiseless_model();
    let centers = [
        (7.0, 5.0),
        (4.0, 3.0),
        (10.0, 7.5),
        (7.2, 2.8),
        (3.5, 7.0),
        (11.0, 3.2),
    ];
    let shapes = [(4.0, 1.2), (8.0, 1.5), (2.5, 0.8)];
    let mut pairs = Vec::new();
    let mut seed = 0u64;
    for &(cx, cy) in &centers {
        for &(r0, d0) in &shapes {
            let hm = cap_heightmap(cx, cy, r0, d0);
            if hm.contact_count() == 0 {
                continue;
            }
            let img = render_tactile_image(&hm, &pm, seed).unwrap();
            seed += 1;
            pairs.push((img, hm));
        }
    }
    pairs
}

pub fn test_calibration() -> PhotometricCalibration {
    calibrate(&training_pairs()).unwrap()
}
