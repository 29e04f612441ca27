use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::geometry::{Heightmap, TactileImage};
use crate::{Error, FormatError, Result};

pub const CALIBRATION_MAGIC: &str = "TCAL";
pub const CALIBRATION_VERSION: u32 = 1;

/// Calibration hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    /// Colour quantization per channel for the lookup table.
    pub bins_per_channel: u32,
    /// Gradient magnitudes above this are clamped during inversion.
    pub gradient_cap: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            bins_per_channel: 32,
            gradient_cap: 25.0,
        }
    }
}

/// Colour-to-gradient calibration: a binned lookup table over quantized
/// colours, backed by a linear shading inverse for colours never seen during
/// calibration.
///
/// The fallback models the noiseless render as c = A n + b for the unit
/// membrane normal n; inverting that 3x3 system for an observed colour gives
/// a normal whose x/z and y/z ratios are the depth gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotometricCalibration {
    bins_per_channel: u32,
    gradient_cap: f64,
    lookup: HashMap<u32, (f64, f64)>,
    bin_counts: HashMap<u32, u64>,
    fallback_a: Matrix3<f64>,
    fallback_b: Vector3<f64>,
    reference_color: [f64; 3],
    width: usize,
    height: usize,
    pixel_pitch: f64,
    max_indentation: f64,
}

impl PhotometricCalibration {
    pub fn bins_per_channel(&self) -> u32 {
        self.bins_per_channel
    }

    pub fn gradient_cap(&self) -> f64 {
        self.gradient_cap
    }

    /// Mean colour of a flat, untouched membrane.
    pub fn reference_color(&self) -> [f64; 3] {
        self.reference_color
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn max_indentation(&self) -> f64 {
        self.max_indentation
    }

    pub fn populated_bins(&self) -> usize {
        self.lookup.len()
    }

    #[inline]
    pub fn bin_key(&self, color: [f64; 3]) -> u32 {
        let b = self.bins_per_channel;
        let q = |v: f64| -> u32 {
            let k = (v * b as f64) as i64;
            k.clamp(0, (b - 1) as i64) as u32
        };
        (q(color[0]) * b + q(color[1])) * b + q(color[2])
    }

    /// Mean training gradient stored for a bin key, if the bin was populated.
    pub fn bin_mean(&self, key: u32) -> Option<(f64, f64)> {
        self.lookup.get(&key).copied()
    }

    /// Depth gradients for an observed colour.
    ///
    /// The table stores one mean gradient per quantized colour bin; reading
    /// it back nearest-bin would quantize smooth shading ramps into steps
    /// whose errors correlate across a uniform contact, so the readout
    /// blends the up to eight bins surrounding the colour with trilinear
    /// weights instead. Colours with no populated neighbour fall back to the
    /// linear shading inverse, whose magnitude is clamped to the gradient
    /// cap.
    pub fn gradients_for(&self, color: [f64; 3]) -> (f64, f64) {
        let (gx, gy, _) = self.gradients_checked(color);
        (gx, gy)
    }

    /// Like [`Self::gradients_for`], but also reports whether the colour hit
    /// populated calibration bins (`true`) or needed the linear fallback
    /// (`false`). Fallback colours lie outside everything seen during
    /// calibration, so their gradients are extrapolations rather than
    /// measurements.
    pub fn gradients_checked(&self, color: [f64; 3]) -> (f64, f64, bool) {
        let b = self.bins_per_channel;
        // Continuous bin coordinate with bin centres at integers.
        let coord = |v: f64| -> (u32, u32, f64) {
            let u = v * b as f64 - 0.5;
            let lo = u.floor();
            let f = u - lo;
            let i0 = (lo as i64).clamp(0, (b - 1) as i64) as u32;
            let i1 = (lo as i64 + 1).clamp(0, (b - 1) as i64) as u32;
            (i0, i1, f)
        };
        let (r0, r1, fr) = coord(color[0]);
        let (g0, g1, fg) = coord(color[1]);
        let (b0, b1, fb) = coord(color[2]);
        let mut wsum = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (ri, wr) in [(r0, 1.0 - fr), (r1, fr)] {
            for (gi, wg) in [(g0, 1.0 - fg), (g1, fg)] {
                for (bi, wb) in [(b0, 1.0 - fb), (b1, fb)] {
                    let w = wr * wg * wb;
                    if w <= 0.0 {
                        continue;
                    }
                    if let Some(&(x, y)) = self.lookup.get(&((ri * b + gi) * b + bi)) {
                        wsum += w;
                        gx += w * x;
                        gy += w * y;
                    }
                }
            }
        }
        if wsum > 0.0 {
            return (gx / wsum, gy / wsum, true);
        }
        let (gx, gy) = self.invert_fallback(color);
        (gx, gy, false)
    }

    /// Pure fallback inversion (exposed for calibration diagnostics).
    pub fn invert_fallback(&self, color: [f64; 3]) -> (f64, f64) {
        let rhs = Vector3::new(color[0], color[1], color[2]) - self.fallback_b;
        let n = self.fallback_a * rhs;
        let cap = self.gradient_cap;
        if n.z <= 0.0 {
            // Shading inverse points away from the camera: steepest
            // representable slope in the planar direction, if any.
            let planar = (n.x * n.x + n.y * n.y).sqrt();
            if planar < 1e-12 {
                return (0.0, 0.0);
            }
            return (cap * n.x / planar, cap * n.y / planar);
        }
        let mut gx = n.x / n.z;
        let mut gy = n.y / n.z;
        let mag = (gx * gx + gy * gy).sqrt();
        if mag > cap {
            gx *= cap / mag;
            gy *= cap / mag;
        }
        (gx, gy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bins: Vec<BinRecord> = self
            .lookup
            .iter()
            .map(|(&key, &(gx, gy))| BinRecord {
                key,
                gx,
                gy,
                count: self.bin_counts.get(&key).copied().unwrap_or(0),
            })
            .collect();
        bins.sort_by_key(|b| b.key);
        let file = CalibrationFile {
            magic: CALIBRATION_MAGIC.to_string(),
            version: CALIBRATION_VERSION,
            bins_per_channel: self.bins_per_channel,
            gradient_cap: self.gradient_cap,
            width: self.width,
            height: self.height,
            pixel_pitch: self.pixel_pitch,
            max_indentation: self.max_indentation,
            reference_color: self.reference_color,
            fallback_a: matrix_rows(&self.fallback_a),
            fallback_b: [self.fallback_b.x, self.fallback_b.y, self.fallback_b.z],
            bins,
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::NumericalFailure(format!("calibration serialization: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CalibrationFile = serde_json::from_str(&text)
            .map_err(|e| FormatError::Malformed(format!("calibration json: {e}")))?;
        if file.magic != CALIBRATION_MAGIC {
            return Err(FormatError::BadMagic.into());
        }
        if file.version != CALIBRATION_VERSION {
            return Err(FormatError::Version {
                found: file.version,
                expected: CALIBRATION_VERSION,
            }
            .into());
        }
        let mut lookup = HashMap::new();
        let mut bin_counts = HashMap::new();
        for bin in &file.bins {
            lookup.insert(bin.key, (bin.gx, bin.gy));
            bin_counts.insert(bin.key, bin.count);
        }
        Ok(Self {
            bins_per_channel: file.bins_per_channel,
            gradient_cap: file.gradient_cap,
            lookup,
            bin_counts,
            fallback_a: rows_matrix(&file.fallback_a),
            fallback_b: Vector3::new(file.fallback_b[0], file.fallback_b[1], file.fallback_b[2]),
            reference_color: file.reference_color,
            width: file.width,
            height: file.height,
            pixel_pitch: file.pixel_pitch,
            max_indentation: file.max_indentation,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BinRecord {
    key: u32,
    gx: f64,
    gy: f64,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    magic: String,
    version: u32,
    bins_per_channel: u32,
    gradient_cap: f64,
    width: usize,
    height: usize,
    pixel_pitch: f64,
    max_indentation: f64,
    reference_color: [f64; 3],
    fallback_a: [[f64; 3]; 3],
    fallback_b: [f64; 3],
    bins: Vec<BinRecord>,
}

fn matrix_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn rows_matrix(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_rows(&[
        nalgebra::RowVector3::new(rows[0][0], rows[0][1], rows[0][2]),
        nalgebra::RowVector3::new(rows[1][0], rows[1][1], rows[1][2]),
        nalgebra::RowVector3::new(rows[2][0], rows[2][1], rows[2][2]),
    ])
}

/// Builds a calibration from (image, ground-truth heightmap) pairs with
/// default parameters. See [`calibrate_with`].
pub fn calibrate(pairs: &[(TactileImage, Heightmap)]) -> Result<PhotometricCalibration> {
    calibrate_with(pairs, &CalibrationParams::default())
}

/// Builds a calibration from (image, ground-truth heightmap) pairs.
///
/// Masked pixels populate the colour-bin lookup with the mean ground-truth
/// gradient per bin and feed the linear fallback regression; unmasked pixels
/// define the flat reference colour. All pairs must share sensor geometry.
pub fn calibrate_with(
    pairs: &[(TactileImage, Heightmap)],
    params: &CalibrationParams,
) -> Result<PhotometricCalibration> {
    if pairs.is_empty() {
        return Err(Error::Usage("calibration needs at least one pair".into()));
    }
    if params.bins_per_channel < 2 || params.bins_per_channel > 256 {
        return Err(Error::Usage(format!(
            "bins_per_channel {} outside [2, 256]",
            params.bins_per_channel
        )));
    }
    if !(params.gradient_cap > 0.0) {
        return Err(Error::Usage("gradient cap must be positive".into()));
    }
    let first = &pairs[0].1;
    let (w, h) = (first.width(), first.height());
    let pitch = first.pixel_pitch();
    let max_ind = first.max_indentation();

    let mut cal = PhotometricCalibration {
        bins_per_channel: params.bins_per_channel,
        gradient_cap: params.gradient_cap,
        lookup: HashMap::new(),
        bin_counts: HashMap::new(),
        fallback_a: Matrix3::zeros(),
        fallback_b: Vector3::zeros(),
        reference_color: [0.0; 3],
        width: w,
        height: h,
        pixel_pitch: pitch,
        max_indentation: max_ind,
    };

    let mut bin_sums: HashMap<u32, (f64, f64, u64)> = HashMap::new();
    // Normal-equation accumulators for colour ~ [n; 1] per channel.
    let mut gram = Matrix4::<f64>::zeros();
    let mut rhs = [Vector4::<f64>::zeros(); 3];
    let mut ref_sum = [0.0f64; 3];
    let mut ref_count = 0u64;
    let mut masked_total = 0u64;

    for (img, hm) in pairs {
        if hm.width() != w || hm.height() != h {
            return Err(Error::Usage(
                "calibration pairs must share heightmap dimensions".into(),
            ));
        }
        if (hm.pixel_pitch() - pitch).abs() > 1e-12
            || (hm.max_indentation() - max_ind).abs() > 1e-12
        {
            return Err(Error::Usage(
                "calibration pairs must share pixel pitch and max indentation".into(),
            ));
        }
        if img.width() != w || img.height() != h {
            return Err(Error::Usage(
                "calibration image does not match its heightmap".into(),
            ));
        }
        let (gx, gy) = hm.gradients();
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let color = img.pixel(r, c);
                if !hm.mask()[i] {
                    for k in 0..3 {
                        ref_sum[k] += color[k];
                    }
                    ref_count += 1;
                    continue;
                }
                masked_total += 1;
                let key = cal.bin_key(color);
                let e = bin_sums.entry(key).or_insert((0.0, 0.0, 0));
                e.0 += gx[i];
                e.1 += gy[i];
                e.2 += 1;
                let n = Vector3::new(gx[i], gy[i], 1.0).normalize();
                let x = Vector4::new(n.x, n.y, n.z, 1.0);
                gram += x * x.transpose();
                for k in 0..3 {
                    rhs[k] += x * color[k];
                }
            }
        }
    }

    if masked_total < 100 {
        return Err(Error::DegenerateGeometry(format!(
            "calibration saw only {masked_total} contact pixels; need at least 100"
        )));
    }

    for (key, (sx, sy, n)) in &bin_sums {
        cal.lookup.insert(*key, (sx / *n as f64, sy / *n as f64));
        cal.bin_counts.insert(*key, *n);
    }

    let gram_inv = gram.try_inverse().ok_or_else(|| {
        Error::DegenerateGeometry(
            "calibration normals are degenerate; shading fit is singular".into(),
        )
    })?;
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for k in 0..3 {
        let sol = gram_inv * rhs[k];
        a[(k, 0)] = sol[0];
        a[(k, 1)] = sol[1];
        a[(k, 2)] = sol[2];
        b[k] = sol[3];
    }
    // Store the inverse shading matrix; inversion failure means the lights
    // were degenerate and the fallback cannot work.
    cal.fallback_a = a.try_inverse().ok_or_else(|| {
        Error::DegenerateGeometry("fitted shading matrix is not invertible".into())
    })?;
    cal.fallback_b = b;

    cal.reference_color = if ref_count > 0 {
        [
            ref_sum[0] / ref_count as f64,
            ref_sum[1] / ref_count as f64,
            ref_sum[2] / ref_count as f64,
        ]
    } else {
        // Every calibration pixel was in contact: synthesize the flat colour
        // from the fitted shading model.
        let flat = a * Vector3::new(0.0, 0.0, 1.0) + b;
        [flat.x, flat.y, flat.z]
    };

    Ok(cal)
}
