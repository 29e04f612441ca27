use crate::geometry::RigidTransform;
use crate::{Error, Result};

/// Per-pixel gel indentation over the sensor window.
///
/// `depths[r * width + c]` is how far the gel at pixel (row r, col c) is
/// pressed in, in mm, non-negative and at most `max_indentation`. The contact
/// mask marks pixels considered in contact; every strictly positive depth is
/// masked and every unmasked pixel has depth exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    width: usize,
    height: usize,
    pixel_pitch: f64,
    max_indentation: f64,
    depths: Vec<f32>,
    mask: Vec<bool>,
}

impl Heightmap {
    pub fn new(
        width: usize,
        height: usize,
        pixel_pitch: f64,
        max_indentation: f64,
        depths: Vec<f32>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Usage("heightmap dimensions must be non-zero".into()));
        }
        if !(pixel_pitch > 0.0) || !(max_indentation > 0.0) {
            return Err(Error::Usage(
                "pixel pitch and max indentation must be positive".into(),
            ));
        }
        if depths.len() != width * height || mask.len() != width * height {
            return Err(Error::Usage(format!(
                "heightmap buffers must hold {} values, got {} depths / {} mask",
                width * height,
                depths.len(),
                mask.len()
            )));
        }
        for (i, &d) in depths.iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::Usage(format!("non-finite depth at index {i}")));
            }
            if d < 0.0 || f64::from(d) > max_indentation {
                return Err(Error::Usage(format!(
                    "depth {d} at index {i} outside [0, {max_indentation}]"
                )));
            }
            if d > 0.0 && !mask[i] {
                return Err(Error::Usage(format!(
                    "positive depth at unmasked index {i}"
                )));
            }
            if !mask[i] && d != 0.0 {
                return Err(Error::Usage(format!(
                    "unmasked pixel {i} must have zero depth"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            pixel_pitch,
            max_indentation,
            depths,
            mask,
        })
    }

    pub fn zeros(width: usize, height: usize, pixel_pitch: f64, max_indentation: f64) -> Self {
        Self {
            width,
            height,
            pixel_pitch,
            max_indentation,
            depths: vec![0.0; width * height],
            mask: vec![false; width * height],
        }
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

    pub fn depths(&self) -> &[f32] {
        &self.depths
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn depth(&self, row: usize, col: usize) -> f64 {
        f64::from(self.depths[row * self.width + col])
    }

    #[inline]
    pub fn masked(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn contact_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty_contact(&self) -> bool {
        self.contact_count() == 0
    }

    pub fn max_depth(&self) -> f64 {
        self.depths.iter().copied().fold(0.0f32, f32::max).into()
    }

    /// Central-difference depth gradients (d depth / d x, d depth / d y) in
    /// mm per mm; one-sided at window borders.
    pub fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let (w, h) = (self.width, self.height);
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        let d = |r: usize, c: usize| f64::from(self.depths[r * w + c]);
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                gx[i] = match c {
                    0 => (d(r, 1) - d(r, 0)) / self.pixel_pitch,
                    c if c == w - 1 => (d(r, c) - d(r, c - 1)) / self.pixel_pitch,
                    c => (d(r, c + 1) - d(r, c - 1)) / (2.0 * self.pixel_pitch),
                };
                gy[i] = match r {
                    0 => (d(1, c) - d(0, c)) / self.pixel_pitch,
                    r if r == h - 1 => (d(r, c) - d(r - 1, c)) / self.pixel_pitch,
                    r => (d(r + 1, c) - d(r - 1, c)) / (2.0 * self.pixel_pitch),
                };
            }
        }
        (gx, gy)
    }
}

/// Three-channel tactile image, values normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TactileImage {
    width: usize,
    height: usize,
    channels: [Vec<f32>; 3],
}

impl TactileImage {
    pub fn new(width: usize, height: usize, channels: [Vec<f32>; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Usage("image dimensions must be non-zero".into()));
        }
        for (k, ch) in channels.iter().enumerate() {
            if ch.len() != width * height {
                return Err(Error::Usage(format!(
                    "channel {k} holds {} values, expected {}",
                    ch.len(),
                    width * height
                )));
            }
            for (i, &v) in ch.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Usage(format!(
                        "channel {k} value {v} at index {i} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self {
            width,
            height,
            channels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        &self.channels[k]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = row * self.width + col;
        [
            f64::from(self.channels[0][i]),
            f64::from(self.channels[1][i]),
            f64::from(self.channels[2][i]),
        ]
    }
}

/// Static description of the sensor: image grid, gel properties, and the
/// mounting transform from image-grid coordinates into the sensor frame
/// (identity unless the gel window is offset from the sensor origin).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Pixel pitch in mm.
    pub pixel_pitch: f64,
    /// Maximum gel indentation in mm.
    pub gel_max_indentation: f64,
    pub sensor_frame: RigidTransform,
}

impl SensorIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Usage("sensor dimensions must be non-zero".into()));
        }
        if !(self.pixel_pitch > 0.0) {
            return Err(Error::Usage("pixel pitch must be positive".into()));
        }
        if !(self.gel_max_indentation > 0.0) {
            return Err(Error::Usage("gel max indentation must be positive".into()));
        }
        Ok(())
    }

    /// Physical extent (width, height) of the sensing window in mm.
    pub fn window_extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.pixel_pitch,
            self.height as f64 * self.pixel_pitch,
        )
    }
}

impl Default for SensorIntrinsics {
    /// 24 x 18 mm window at 0.15 mm pitch with a 2 mm gel.
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            pixel_pitch: 0.15,
            gel_max_indentation: 2.0,
            sensor_frame: RigidTransform::identity(),
        }
    }
}
