//! Hand-crafted imprint descriptors and cosine-similarity ranking.

use crate::geometry::{Heightmap, TactileImage};
use crate::{Error, Result};

/// Pooled-depth grid side: the first 256 descriptor entries are a 16x16
/// average-pooled depth image.
const POOL: usize = 16;
/// Gradient-orientation histogram bins.
const ORIENT_BINS: usize = 8;
/// Scalar contact statistics appended at the end.
const STATS: usize = 4;

pub const DESCRIPTOR_DIM: usize = POOL * POOL + ORIENT_BINS + STATS;

/// Fixed-length imprint feature vector, L2-normalized unless the imprint had
/// no contact at all (then all-zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
}

impl Descriptor {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Rebuilds a descriptor from stored values (map deserialization).
    /// Values must be finite; either all zero or unit norm within 1e-9.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Usage("descriptor has non-finite entries".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm != 0.0 && (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Usage(format!(
                "descriptor norm {norm} is neither 0 nor 1"
            )));
        }
        Ok(Self { values })
    }
}

/// Encodes an imprint as pooled depths, a gradient-orientation histogram,
/// and contact statistics (mask area fraction, max depth, normalized mask
/// centroid x/y), L2-normalized. Empty contact gives the zero descriptor.
pub fn compute_descriptor(img: &TactileImage, hm: &Heightmap) -> Result<Descriptor> {
    if img.width() != hm.width() || img.height() != hm.height() {
        return Err(Error::Usage(format!(
            "image {}x{} does not match heightmap {}x{}",
            img.width(),
            img.height(),
            hm.width(),
            hm.height()
        )));
    }
    let (w, h) = (hm.width(), hm.height());
    if hm.is_empty_contact() {
        return Ok(Descriptor {
            values: vec![0.0; DESCRIPTOR_DIM],
        });
    }
    let mut values = Vec::with_capacity(DESCRIPTOR_DIM);

    // (a) 16x16 average-pooled depth (unmasked pixels contribute zero).
    for br in 0..POOL {
        let r0 = br * h / POOL;
        let r1 = ((br + 1) * h / POOL).max(r0 + 1).min(h);
        for bc in 0..POOL {
            let c0 = bc * w / POOL;
            let c1 = ((bc + 1) * w / POOL).max(c0 + 1).min(w);
            let mut sum = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    sum += hm.depth(r, c);
                }
            }
            values.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }

    // (b) magnitude-weighted gradient-orientation histogram over the mask.
    let (gx, gy) = hm.gradients();
    let mut hist = [0.0f64; ORIENT_BINS];
    for i in 0..w * h {
        if !hm.mask()[i] {
            continue;
        }
        let mag = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
        if mag < 1e-9 {
            continue;
        }
        let angle = gy[i].atan2(gx[i]);
        let frac = (angle + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
        let bin = ((frac * ORIENT_BINS as f64) as usize).min(ORIENT_BINS - 1);
        hist[bin] += mag;
    }
    let hist_sum: f64 = hist.iter().sum();
    if hist_sum > 0.0 {
        for b in &mut hist {
            *b /= hist_sum;
        }
    }
    values.extend_from_slice(&hist);

    // (c) contact statistics.
    let area = hm.contact_count() as f64 / (w * h) as f64;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for r in 0..h {
        for c in 0..w {
            if hm.masked(r, c) {
                cx += c as f64;
                cy += r as f64;
            }
        }
    }
    let count = hm.contact_count() as f64;
    values.push(area);
    values.push(hm.max_depth());
    values.push(cx / count / w as f64);
    values.push(cy / count / h as f64);

    debug_assert_eq!(values.len(), DESCRIPTOR_DIM);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    Ok(Descriptor { values })
}

/// Cosine distance in [0, 2]; involving a zero descriptor gives 1.
pub fn cosine_distance(a: &Descriptor, b: &Descriptor) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "descriptor dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(1.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Ranks candidate (index, opening, descriptor) triples by cosine distance
/// to the query, keeping only candidates whose opening differs from the
/// query's by strictly less than `opening_tol`. Ties break on the lower
/// index. An empty result means nothing passed the filter; callers decide
/// how to widen.
pub fn rank_candidates<'a>(
    query: &Descriptor,
    query_opening: f64,
    candidates: impl Iterator<Item = (usize, f64, &'a Descriptor)>,
    opening_tol: f64,
) -> Result<Vec<(usize, f64)>> {
    if !(opening_tol > 0.0) {
        return Err(Error::Usage("opening tolerance must be positive".into()));
    }
    let mut ranked = Vec::new();
    for (index, opening, desc) in candidates {
        if (opening - query_opening).abs() < opening_tol {
            ranked.push((index, cosine_distance(query, desc)?));
        }
    }
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(ranked)
}
