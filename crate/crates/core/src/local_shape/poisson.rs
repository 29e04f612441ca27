use crate::geometry::Heightmap;
use crate::{Error, Result};

/// Per-pixel depth gradients (mm per mm) over an image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }
}

const CG_TARGET_REL_RESIDUAL: f64 = 1e-8;
const CG_FAIL_REL_RESIDUAL: f64 = 1e-6;
const CG_MAX_ITERATIONS: usize = 20_000;

/// An anchor link whose solved residual exceeds this (mm) is discarded: the
/// field around it contradicts the claimed zero, which happens where a
/// marginal detection vouched for a pixel that is actually deep contact.
/// Healthy rim anchors settle well below this even on steep flanks.
const ANCHOR_TRIM_RESIDUAL_MM: f64 = 0.08;
const ANCHOR_TRIM_ROUNDS: usize = 3;

/// Weight on link equations touching a fallback-gradient pixel. Colours
/// outside the calibrated gamut sit on occluding walls steeper than anything
/// a calibration press produces, and on the shadowed side the extrapolated
/// gradients underestimate the drop, so these links keep patches connected
/// and definite but cannot outvote calibrated data across the wall.
const SOFT_LINK_WEIGHT: f64 = 0.05;

/// Integrates a gradient field into a depth map over the masked region by
/// solving the discrete Poisson least-squares problem.
///
/// Each 4-neighbour link with at least one masked endpoint contributes a
/// residual (d_b - d_a - pitch * mean gradient); unmasked pixels are fixed at
/// zero depth, which imposes the Dirichlet boundary on interior mask edges,
/// while links leaving the image get no equation, the natural (Neumann)
/// boundary for contact clipped by the window. Conjugate gradients must reach
/// a relative residual of 1e-8 (numerical failure above 1e-6 at the
/// iteration cap). Depths are clamped into [0, max_indentation].
pub fn integrate_gradients(
    g: &GradientField,
    mask: &[bool],
    pixel_pitch: f64,
    max_indentation: f64,
) -> Result<Heightmap> {
    let anchors = vec![true; g.gx.len()];
    let soft = vec![false; g.gx.len()];
    integrate_impl(g, mask, &anchors, &soft, false, pixel_pitch, max_indentation)
}

/// [`integrate_gradients`] with selective boundary conditions: a mask-edge
/// link is kept (pinning the unmasked endpoint at zero depth) only where
/// `anchors` vouches for that endpoint. An estimated mask can clip contact
/// that runs off the detected rim, e.g. a flat crest reaching the window
/// border; pinning such a cut to zero depth would tilt the whole solution,
/// so those links are dropped and the cut gets the natural boundary instead.
/// Surviving anchors whose solved residual is gross are trimmed and the
/// system re-solved, catching anchors vouched for by stray detections.
///
/// `soft` flags pixels whose gradients are extrapolations (colour outside
/// the calibrated gamut); every link touching one is down-weighted to
/// [`SOFT_LINK_WEIGHT`].
pub fn integrate_gradients_anchored(
    g: &GradientField,
    mask: &[bool],
    anchors: &[bool],
    soft: &[bool],
    pixel_pitch: f64,
    max_indentation: f64,
) -> Result<Heightmap> {
    integrate_impl(g, mask, anchors, soft, true, pixel_pitch, max_indentation)
}

fn integrate_impl(
    g: &GradientField,
    mask: &[bool],
    anchors: &[bool],
    soft: &[bool],
    trim_anchors: bool,
    pixel_pitch: f64,
    max_indentation: f64,
) -> Result<Heightmap> {
    let (w, h) = (g.width, g.height);
    if w == 0 || h == 0 {
        return Err(Error::Usage("gradient field has zero size".into()));
    }
    if g.gx.len() != w * h
        || g.gy.len() != w * h
        || mask.len() != w * h
        || anchors.len() != w * h
        || soft.len() != w * h
    {
        return Err(Error::Usage("gradient/mask buffer sizes disagree".into()));
    }
    if !(pixel_pitch > 0.0) || !(max_indentation > 0.0) {
        return Err(Error::Usage(
            "pixel pitch and max indentation must be positive".into(),
        ));
    }

    let mut unknowns = Vec::new();
    for i in 0..w * h {
        if mask[i] {
            unknowns.push(i);
        }
    }
    if unknowns.is_empty() {
        return Heightmap::new(w, h, pixel_pitch, max_indentation, vec![0.0; w * h], vec![
            false;
            w * h
        ]);
    }

    // Links (a, b, target, weight^2) between pixel a and its right/down
    // neighbour b. A link with one unmasked endpoint only survives if that
    // endpoint is an anchored zero.
    let keep = |i: usize, j: usize| match (mask[i], mask[j]) {
        (true, true) => true,
        (true, false) => anchors[j],
        (false, true) => anchors[i],
        (false, false) => false,
    };
    let weight2 = |i: usize, j: usize| {
        if soft[i] || soft[j] {
            SOFT_LINK_WEIGHT * SOFT_LINK_WEIGHT
        } else {
            1.0
        }
    };
    let mut links: Vec<(usize, usize, f64, f64)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                let j = i + 1;
                if keep(i, j) {
                    links.push((i, j, pixel_pitch * 0.5 * (g.gx[i] + g.gx[j]), weight2(i, j)));
                }
            }
            if r + 1 < h {
                let j = i + w;
                if keep(i, j) {
                    links.push((i, j, pixel_pitch * 0.5 * (g.gy[i] + g.gy[j]), weight2(i, j)));
                }
            }
        }
    }

    let n = unknowns.len();
    let mut active = vec![true; links.len()];
    let mut unknown_id = vec![usize::MAX; w * h];
    let mut x;
    let mut round = 0;
    loop {
        // Pixels whose zero boundary is still active, for pinning decisions.
        let mut boundary = vec![false; w * h];
        for (l, &(a, b, _, _)) in links.iter().enumerate() {
            if active[l] && (mask[a] ^ mask[b]) {
                boundary[if mask[a] { a } else { b }] = true;
            }
        }
        unknown_id.iter_mut().for_each(|v| *v = usize::MAX);
        for (k, &i) in unknowns.iter().enumerate() {
            unknown_id[i] = k;
        }
        pin_floating_components(w, h, mask, &boundary, &mut unknown_id);
        x = solve_links(&links, &active, &unknown_id, n)?;

        if !trim_anchors || round == ANCHOR_TRIM_ROUNDS {
            break;
        }
        round += 1;
        let value = |i: usize| {
            if unknown_id[i] != usize::MAX {
                x[unknown_id[i]]
            } else {
                0.0
            }
        };
        let mut dropped = false;
        for (l, &(a, b, target, w2)) in links.iter().enumerate() {
            // Soft links are expected to hold gross residuals; they are the
            // pressure valve, not a claim to audit.
            if !active[l] || w2 < 1.0 || !(mask[a] ^ mask[b]) {
                continue;
            }
            if (value(b) - value(a) - target).abs() > ANCHOR_TRIM_RESIDUAL_MM {
                active[l] = false;
                dropped = true;
            }
        }
        if !dropped {
            break;
        }
    }

    let mut depths = vec![0.0f32; w * h];
    let out_mask: Vec<bool> = mask.to_vec();
    for &i in &unknowns {
        if unknown_id[i] == usize::MAX {
            continue;
        }
        depths[i] = x[unknown_id[i]].clamp(0.0, max_indentation) as f32;
    }
    Heightmap::new(w, h, pixel_pitch, max_indentation, depths, out_mask)
}

/// Conjugate-gradient solve of the active weighted link equations.
fn solve_links(
    links: &[(usize, usize, f64, f64)],
    active: &[bool],
    unknown_id: &[usize],
    n: usize,
) -> Result<Vec<f64>> {
    let matvec = |x: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (l, &(a, b, _, w2)) in links.iter().enumerate() {
            if !active[l] {
                continue;
            }
            let xa = if unknown_id[a] != usize::MAX {
                x[unknown_id[a]]
            } else {
                0.0
            };
            let xb = if unknown_id[b] != usize::MAX {
                x[unknown_id[b]]
            } else {
                0.0
            };
            let t = w2 * (xb - xa);
            if unknown_id[b] != usize::MAX {
                out[unknown_id[b]] += t;
            }
            if unknown_id[a] != usize::MAX {
                out[unknown_id[a]] -= t;
            }
        }
    };

    let mut rhs = vec![0.0f64; n];
    for (l, &(a, b, target, w2)) in links.iter().enumerate() {
        if !active[l] {
            continue;
        }
        if unknown_id[b] != usize::MAX {
            rhs[unknown_id[b]] += w2 * target;
        }
        if unknown_id[a] != usize::MAX {
            rhs[unknown_id[a]] -= w2 * target;
        }
    }

    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0f64; n];
    if rhs_norm > 0.0 {
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0f64; n];
        let mut rsq = r.iter().map(|v| v * v).sum::<f64>();
        let mut converged = false;
        for _ in 0..CG_MAX_ITERATIONS {
            if rsq.sqrt() <= CG_TARGET_REL_RESIDUAL * rhs_norm {
                converged = true;
                break;
            }
            matvec(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rsq / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rsq_new = r.iter().map(|v| v * v).sum::<f64>();
            let beta = rsq_new / rsq;
            rsq = rsq_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        if !converged {
            let rel = rsq.sqrt() / rhs_norm;
            if rel > CG_FAIL_REL_RESIDUAL {
                return Err(Error::NumericalFailure(format!(
                    "poisson cg stalled at relative residual {rel:.3e}"
                )));
            }
        }
    }
    Ok(x)
}

/// Mask components with no remaining link to a zero-depth neighbour (fully
/// flooded regions, or patches whose every boundary link was dropped) have a
/// free constant; pin their first pixel to zero so the system is definite.
fn pin_floating_components(
    w: usize,
    h: usize,
    mask: &[bool],
    boundary: &[bool],
    unknown_id: &mut [usize],
) {
    let mut component = vec![usize::MAX; w * h];
    let mut comp_count = 0;
    for start in 0..w * h {
        if !mask[start] || component[start] != usize::MAX {
            continue;
        }
        let id = comp_count;
        comp_count += 1;
        let mut stack = vec![start];
        component[start] = id;
        let mut has_dirichlet = false;
        let mut first = start;
        while let Some(i) = stack.pop() {
            first = first.min(i);
            if boundary[i] {
                has_dirichlet = true;
            }
            let (r, c) = (i / w, i % w);
            let neighbors = [
                (r > 0).then(|| i - w),
                (r + 1 < h).then(|| i + w),
                (c > 0).then(|| i - 1),
                (c + 1 < w).then(|| i + 1),
            ];
            for j in neighbors.into_iter().flatten() {
                if mask[j] && component[j] == usize::MAX {
                    component[j] = id;
                    stack.push(j);
                }
            }
        }
        if !has_dirichlet {
            unknown_id[first] = usize::MAX;
        }
    }
}
