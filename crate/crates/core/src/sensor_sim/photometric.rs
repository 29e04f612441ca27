use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Heightmap, TactileImage};
use crate::{Error, Result};

/// Lambertian shading model of the sensor's internal illumination: one
/// directional light per colour channel plus an ambient floor.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotometricModel {
    lights: [Vector3<f64>; 3],
    albedo: [f64; 3],
    ambient: f64,
    noise_sigma: f64,
}

impl PhotometricModel {
    /// Lights must be unit vectors with positive z (illuminating the membrane
    /// from the camera side) and together well-conditioned; `ambient` plus
    /// any albedo may not exceed 1 so that noiseless shading never clips.
    pub fn new(
        lights: [Vector3<f64>; 3],
        albedo: [f64; 3],
        ambient: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        for (k, l) in lights.iter().enumerate() {
            if (l.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Usage(format!("light {k} is not unit length")));
            }
            if l.z <= 0.0 {
                return Err(Error::Usage(format!(
                    "light {k} must have positive z (camera side)"
                )));
            }
        }
        let l_mat = Matrix3::from_rows(&[
            lights[0].transpose(),
            lights[1].transpose(),
            lights[2].transpose(),
        ]);
        if l_mat.determinant().abs() < 1e-3 {
            return Err(Error::Usage(
                "light directions are near-coplanar; shading is not invertible".into(),
            ));
        }
        if !(0.0..1.0).contains(&ambient) {
            return Err(Error::Usage(format!("ambient {ambient} outside [0, 1)")));
        }
        for (k, &a) in albedo.iter().enumerate() {
            if !(a > 0.0) || ambient + a > 1.0 {
                return Err(Error::Usage(format!(
                    "albedo {k} = {a} must be positive with ambient + albedo <= 1"
                )));
            }
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::Usage("noise sigma must be non-negative".into()));
        }
        Ok(Self {
            lights,
            albedo,
            ambient,
            noise_sigma,
        })
    }

    pub fn lights(&self) -> &[Vector3<f64>; 3] {
        &self.lights
    }

    pub fn albedo(&self) -> &[f64; 3] {
        &self.albedo
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn with_noise_sigma(mut self, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma >= 0.0) {
            return Err(Error::Usage("noise sigma must be non-negative".into()));
        }
        self.noise_sigma = noise_sigma;
        Ok(self)
    }

    /// Noiseless shading of a membrane point with depth gradients
    /// (d depth / dx, d depth / dy). The membrane surface is z = -depth, so
    /// its outward (toward-object) normal is (gx, gy, 1) normalized.
    pub fn shade(&self, gx: f64, gy: f64) -> [f64; 3] {
        let n = Vector3::new(gx, gy, 1.0).normalize();
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = self.ambient + self.albedo[k] * n.dot(&self.lights[k]).max(0.0);
        }
        out
    }
}

impl Default for PhotometricModel {
    /// Three lights at 45 deg elevation, 120 deg apart in azimuth.
    fn default() -> Self {
        let el = 45f64.to_radians();
        let light = |az_deg: f64| {
            let az = az_deg.to_radians();
            Vector3::new(az.cos() * el.cos(), az.sin() * el.cos(), el.sin())
        };
        Self::new(
            [light(0.0), light(120.0), light(240.0)],
            [0.85, 0.85, 0.85],
            0.12,
            0.01,
        )
        .expect("default photometric model is valid")
    }
}

/// Renders the tactile image for a contact heightmap: per-channel Lambertian
/// shading of the membrane normals plus i.i.d. Gaussian pixel noise, clamped
/// to [0, 1]. Noise is drawn row-major, channels innermost, from a ChaCha8
/// stream seeded with `seed`, so output is fully reproducible.
pub fn render_tactile_image(
    hm: &Heightmap,
    pm: &PhotometricModel,
    seed: u64,
) -> Result<TactileImage> {
    let (gx, gy) = hm.gradients();
    let n = hm.width() * hm.height();
    let mut channels = [
        vec![0.0f32; n],
        vec![0.0f32; n],
        vec![0.0f32; n],
    ];
    if pm.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, pm.noise_sigma)
            .map_err(|e| Error::Usage(format!("bad noise sigma: {e}")))?;
        for i in 0..n {
            let shade = pm.shade(gx[i], gy[i]);
            for k in 0..3 {
                let v = shade[k] + noise.sample(&mut rng);
                channels[k][i] = v.clamp(0.0, 1.0) as f32;
            }
        }
    } else {
        for i in 0..n {
            let shade = pm.shade(gx[i], gy[i]);
            for k in 0..3 {
                channels[k][i] = shade[k].clamp(0.0, 1.0) as f32;
            }
        }
    }
    TactileImage::new(hm.width(), hm.height(), channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Heightmap;
    use approx::assert_relative_eq;

    #[test]
    fn flat_gel_shades_evenly() {
        let pm = PhotometricModel::default();
        let c = pm.shade(0.0, 0.0);
        // All three lights sit at the same elevation, so a flat membrane
        // reflects them identically.
        let expected = pm.ambient() + pm.albedo()[0] * (45.0f64).to_radians().sin();
        for k in 0..3 {
            assert_relative_eq!(c[k], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn tilt_separates_the_channels() {
        let pm = PhotometricModel::default();
        let c = pm.shade(0.6, 0.0);
        assert!(
            (c[0] - c[1]).abs() > 1e-3 || (c[0] - c[2]).abs() > 1e-3,
            "a tilted surface must break the channel symmetry: {c:?}"
        );
        for k in 0..3 {
            assert!((0.0..=1.0).contains(&c[k]));
        }
    }

    #[test]
    fn shading_is_invariant_to_gradient_scaling_direction_only() {
        let pm = PhotometricModel::default();
        // Same direction, same normal after normalization only if magnitudes
        // match; different magnitudes must differ somewhere.
        let a = pm.shade(0.2, 0.1);
        let b = pm.shade(0.4, 0.2);
        assert!(a.iter().zip(b.iter()).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn rejects_bad_configurations() {
        let lights_ok = PhotometricModel::default().lights().to_owned();
        // Non-unit light.
        assert!(PhotometricModel::new(
            [lights_ok[0] * 2.0, lights_ok[1], lights_ok[2]],
            [0.85; 3],
            0.12,
            0.0
        )
        .is_err());
        // Coplanar (rank-deficient) light rig.
        let l = Vector3::new(0.0, 0.0, 1.0);
        assert!(PhotometricModel::new([l, l, l], [0.85; 3], 0.12, 0.0).is_err());
        // Ambient plus albedo over unity would clip everything.
        assert!(PhotometricModel::new(lights_ok, [0.95; 3], 0.2, 0.0).is_err());
        // Negative noise.
        assert!(PhotometricModel::default().with_noise_sigma(-0.1).is_err());
    }

    fn cap_heightmap(w: usize, h: usize, pitch: f64) -> Heightmap {
        let (r0, depth0) = (6.0, 1.0);
        let cx = (w - 1) as f64 / 2.0 * pitch;
        let cy = (h - 1) as f64 / 2.0 * pitch;
        let mut depths = vec![0.0f32; w * h];
        let mut mask = vec![false; w * h];
        for r in 0..h {
            for c in 0..w {
                let dx = c as f64 * pitch - cx;
                let dy = r as f64 * pitch - cy;
                let d = depth0 - (dx * dx + dy * dy) / (2.0 * r0);
                if d > 0.0 {
                    depths[r * w + c] = d as f32;
                    mask[r * w + c] = true;
                }
            }
        }
        Heightmap::new(w, h, pitch, 2.0, depths, mask).unwrap()
    }

    #[test]
    fn noiseless_render_equals_direct_shading() {
        let hm = cap_heightmap(24, 18, 0.3);
        let pm = PhotometricModel::default().with_noise_sigma(0.0).unwrap();
        let img = render_tactile_image(&hm, &pm, 42).unwrap();
        let (gx, gy) = hm.gradients();
        for r in 0..hm.height() {
            for c in 0..hm.width() {
                let i = hm.idx(r, c);
                let want = pm.shade(gx[i], gy[i]);
                let got = img.pixel(r, c);
                for k in 0..3 {
                    assert!((got[k] - want[k].clamp(0.0, 1.0)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn renders_are_seed_deterministic() {
        let hm = cap_heightmap(24, 18, 0.3);
        let pm = PhotometricModel::default();
        let a = render_tactile_image(&hm, &pm, 7).unwrap();
        let b = render_tactile_image(&hm, &pm, 7).unwrap();
        assert_eq!(a, b);
        let c = render_tactile_image(&hm, &pm, 8).unwrap();
        assert_ne!(a, c, "different seeds should perturb the image");
    }

    #[test]
    fn noise_magnitude_is_plausible() {
        let hm = Heightmap::zeros(50, 50, 0.3, 2.0);
        let pm = PhotometricModel::default(); // sigma = 0.01
        let img = render_tactile_image(&hm, &pm, 3).unwrap();
        let flat = pm.shade(0.0, 0.0);
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for k in 0..3 {
            for &v in img.channel(k) {
                sum_sq += (v as f64 - flat[k]).powi(2);
                n += 1;
            }
        }
        let rms = (sum_sq / n as f64).sqrt();
        assert!((rms - 0.01).abs() < 0.002, "noise rms {rms} far from sigma");
    }
}
