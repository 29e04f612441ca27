use crate::geometry::{Heightmap, TactileImage};
use crate::local_shape::calibration::PhotometricCalibration;
use crate::local_shape::mask::{detect_contact_pixels, dilate, hull_fill_and_grow, MaskParams};
use crate::local_shape::poisson::{integrate_gradients_anchored, GradientField};
use crate::{Error, Result};

/// Looks up depth gradients for every masked pixel of an image; unmasked
/// pixels get zero gradients.
pub fn image_to_gradients(
    img: &TactileImage,
    cal: &PhotometricCalibration,
    mask: &[bool],
) -> Result<GradientField> {
    Ok(gradients_with_fallback_flags(img, cal, mask)?.0)
}

/// Gradient lookup that also reports which masked pixels missed every
/// populated calibration bin, i.e. whose gradients are fallback
/// extrapolations rather than calibrated measurements.
fn gradients_with_fallback_flags(
    img: &TactileImage,
    cal: &PhotometricCalibration,
    mask: &[bool],
) -> Result<(GradientField, Vec<bool>)> {
    let (w, h) = (img.width(), img.height());
    if mask.len() != w * h {
        return Err(Error::Usage(format!(
            "mask holds {} values for a {w}x{h} image",
            mask.len()
        )));
    }
    let mut g = GradientField::zeros(w, h);
    let mut fallback = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !mask[i] {
                continue;
            }
            let (gx, gy, trusted) = cal.gradients_checked(img.pixel(r, c));
            g.gx[i] = gx;
            g.gy[i] = gy;
            fallback[i] = !trusted;
        }
    }
    Ok((g, fallback))
}

/// Full photometric inversion: contact mask from colour deviation, gradient
/// lookup, Poisson integration. An image with no detectable contact yields
/// an all-zero heightmap (not an error).
pub fn estimate_local_shape(
    img: &TactileImage,
    cal: &PhotometricCalibration,
) -> Result<Heightmap> {
    estimate_local_shape_with(img, cal, &MaskParams::default())
}

pub fn estimate_local_shape_with(
    img: &TactileImage,
    cal: &PhotometricCalibration,
    mask_params: &MaskParams,
) -> Result<Heightmap> {
    if img.width() != cal.width() || img.height() != cal.height() {
        return Err(Error::Usage(format!(
            "image {}x{} does not match calibration {}x{}",
            img.width(),
            img.height(),
            cal.width(),
            cal.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let cleaned = detect_contact_pixels(img, cal, mask_params);
    let mask = hull_fill_and_grow(cleaned.clone(), w, h, mask_params.grow);
    if !mask.iter().any(|&m| m) {
        return Ok(Heightmap::zeros(
            w,
            h,
            cal.pixel_pitch(),
            cal.max_indentation(),
        ));
    }
    let (g, fallback) = gradients_with_fallback_flags(img, cal, &mask)?;
    // Zero-depth boundary pixels are only trusted within reach of an actual
    // detection: a mask boundary traced by the hull fill alone (flat contact
    // clipped by the window) is not a zero-depth contour.
    let mut anchors = cleaned;
    dilate(&mut anchors, w, h, mask_params.grow + 1);
    integrate_gradients_anchored(
        &g,
        &mask,
        &anchors,
        &fallback,
        cal.pixel_pitch(),
        cal.max_indentation(),
    )
}

/// RMSE between two heightmaps over the union of their contact masks.
/// Undefined (error) when both masks are empty or dimensions differ.
pub fn heightmap_rmse(a: &Heightmap, b: &Heightmap) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Usage(format!(
            "heightmap dimensions differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..a.depths().len() {
        if a.mask()[i] || b.mask()[i] {
            let d = f64::from(a.depths()[i]) - f64::from(b.depths()[i]);
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(
            "heightmap rmse with two empty masks".into(),
        ));
    }
    Ok((sum / count as f64).sqrt())
}
