use crate::geometry::TactileImage;
use crate::local_shape::calibration::PhotometricCalibration;

/// Contact-mask extraction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskParams {
    /// Euclidean colour distance from the flat reference above which a pixel
    /// counts as detected.
    pub threshold: f64,
    /// Detected pixels with fewer detected 8-neighbours are dropped as noise.
    pub min_neighbors: usize,
    /// Dilation rounds applied after hull filling.
    pub grow: usize,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            min_neighbors: 2,
            grow: 1,
        }
    }
}

/// Estimates which pixels are in contact from colour deviation alone.
///
/// Contact only changes the image where the membrane is sloped, so the raw
/// detection finds contact rims and textured regions but misses flat
/// plateaus (sphere centres, pressed faces). Filling the convex hull of the
/// detections recovers those interiors; a final dilation claims the shallow
/// fringe just outside the detection threshold.
pub fn extract_contact_mask(
    img: &TactileImage,
    cal: &PhotometricCalibration,
    params: &MaskParams,
) -> Vec<bool> {
    let cleaned = detect_contact_pixels(img, cal, params);
    hull_fill_and_grow(cleaned, img.width(), img.height(), params.grow)
}

/// Despeckled raw detections: the pixels whose colour actually deviates from
/// the flat reference, i.e. sloped rims and texture, before any hull fill.
pub(crate) fn detect_contact_pixels(
    img: &TactileImage,
    cal: &PhotometricCalibration,
    params: &MaskParams,
) -> Vec<bool> {
    let (w, h) = (img.width(), img.height());
    let reference = cal.reference_color();
    let mut detected = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let px = img.pixel(r, c);
            let d2: f64 = (0..3).map(|k| (px[k] - reference[k]).powi(2)).sum();
            detected[r * w + c] = d2.sqrt() > params.threshold;
        }
    }

    // Despeckle: a detection must have company among its 8 neighbours.
    let mut cleaned = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            if !detected[r * w + c] {
                continue;
            }
            let mut neighbors = 0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr >= 0
                        && nr < h as i64
                        && nc >= 0
                        && nc < w as i64
                        && detected[nr as usize * w + nc as usize]
                    {
                        neighbors += 1;
                    }
                }
            }
            cleaned[r * w + c] = neighbors >= params.min_neighbors;
        }
    }
    cleaned
}

/// Fills the convex hull of the detections and dilates `grow` rounds.
pub(crate) fn hull_fill_and_grow(
    cleaned: Vec<bool>,
    w: usize,
    h: usize,
    grow: usize,
) -> Vec<bool> {
    let pts: Vec<(i64, i64)> = (0..h as i64)
        .flat_map(|r| (0..w as i64).map(move |c| (c, r)))
        .filter(|&(c, r)| cleaned[r as usize * w + c as usize])
        .collect();
    if pts.is_empty() {
        return cleaned;
    }

    let hull = convex_hull(&pts);
    let mut mask = cleaned;
    if hull.len() >= 3 {
        let (min_c, max_c) = pts.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
        let (min_r, max_r) = pts.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| {
            (lo.min(p.1), hi.max(p.1))
        });
        for r in min_r..=max_r {
            for c in min_c..=max_c {
                if !mask[r as usize * w + c as usize] && inside_convex(&hull, (c, r)) {
                    mask[r as usize * w + c as usize] = true;
                }
            }
        }
    }

    dilate(&mut mask, w, h, grow);
    mask
}

/// In-place 8-neighbour dilation, `rounds` times.
pub(crate) fn dilate(mask: &mut [bool], w: usize, h: usize, rounds: usize) {
    for _ in 0..rounds {
        let prev = mask.to_vec();
        for r in 0..h as i64 {
            for c in 0..w as i64 {
                if prev[r as usize * w + c as usize] {
                    continue;
                }
                'scan: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r + dr, c + dc);
                        if nr >= 0
                            && nr < h as i64
                            && nc >= 0
                            && nc < w as i64
                            && prev[nr as usize * w + nc as usize]
                        {
                            mask[r as usize * w + c as usize] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
    }
}

/// Monotone-chain convex hull; counter-clockwise, no duplicate endpoint.
fn convex_hull(pts: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = pts.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_convex(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
    let n = hull.len();
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross < 0 {
            return false;
        }
    }
    true
}
