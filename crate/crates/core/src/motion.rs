//! Block motion estimation and precision-controlled bilinear warping.
//!
//! Vectors are stored in half-pel units on a 16x16 block grid and tell the
//! predictor where to fetch: warping samples the reference at
//! (x + dx/2, y + dy/2), clamped at edges. A current frame whose view pans
//! right by three pels (current(x) = reference(x + 3)) therefore reports
//! (+6, 0).
//!
//! Warp precision modes quantize the coordinate arithmetic, never the
//! sample values (values stay f64 throughout, which is what makes the
//! zero-field identity exact in every mode):
//!
//! * `Fp32` - sample position and fractional weights computed in binary32.
//! * `Fp16Absolute` - the absolute position, normalized to [-1, 1] over the
//!   plane extent (align-corners convention), is rounded to binary16 before
//!   use; everything after follows the `Fp32` path. At 1080p one binary16
//!   step near the frame edge is close to a full pel, which is the failure
//!   this mode exists to demonstrate.
//! * `Fp16RelativeOffset` - the integer base position stays in exact
//!   integer arithmetic; only the fractional offset and the four bilinear
//!   weights are rounded to binary16. Half-pel offsets are exactly
//!   representable, so this mode agrees with `Fp32` on every integer-pel
//!   field.

use half::f16;

use crate::pixels::{Frame, Plane};
use crate::{Error, Result};

pub const BLOCK_SIZE: usize = 16;
pub const DEFAULT_SEARCH_RANGE: usize = 16;
/// Exceedance thresholds for [`warp_error_ratio`]: relative to the binary32
/// reference value, with an absolute floor for near-zero samples.
pub const WARP_TOL_REL: f64 = 1e-2;
pub const WARP_TOL_ABS: f64 = 1e-3;

/// Half-pel motion vectors on the 16x16 block grid, row-major.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MotionField {
    pub blocks_w: usize,
    pub blocks_h: usize,
    pub vectors: Vec<(i32, i32)>,
}

impl MotionField {
    pub fn zero(width: usize, height: usize) -> Self {
        let blocks_w = width.div_ceil(BLOCK_SIZE);
        let blocks_h = height.div_ceil(BLOCK_SIZE);
        MotionField { blocks_w, blocks_h, vectors: vec![(0, 0); blocks_w * blocks_h] }
    }

    #[inline]
    pub fn get(&self, bx: usize, by: usize) -> (i32, i32) {
        self.vectors[by * self.blocks_w + bx]
    }

    pub fn matches_frame(&self, width: usize, height: usize) -> bool {
        self.blocks_w == width.div_ceil(BLOCK_SIZE)
            && self.blocks_h == height.div_ceil(BLOCK_SIZE)
            && self.vectors.len() == self.blocks_w * self.blocks_h
    }
}

/// Bilinear sample at half-pel offset (dx, dy) from (x, y), clamp-to-edge.
#[inline]
fn sample_halfpel(plane: &Plane, x: usize, y: usize, dx: i32, dy: i32) -> f64 {
    let bx = x as i64 + (dx as i64).div_euclid(2);
    let by = y as i64 + (dy as i64).div_euclid(2);
    let hx = dx.rem_euclid(2) == 1;
    let hy = dy.rem_euclid(2) == 1;
    let p00 = plane.get_clamped(bx as isize, by as isize);
    match (hx, hy) {
        (false, false) => p00,
        (true, false) => 0.5 * (p00 + plane.get_clamped(bx as isize + 1, by as isize)),
        (false, true) => 0.5 * (p00 + plane.get_clamped(bx as isize, by as isize + 1)),
        (true, true) => {
            0.25 * (p00
                + plane.get_clamped(bx as isize + 1, by as isize)
                + plane.get_clamped(bx as isize, by as isize + 1)
                + plane.get_clamped(bx as isize + 1, by as isize + 1))
        }
    }
}

/// SAD of the block at (x0, y0) against the reference sampled at position
/// plus the half-pel vector (dx, dy), the same convention the warp uses.
fn block_sad(
    cur: &Plane,
    reference: &Plane,
    x0: usize,
    y0: usize,
    bw: usize,
    bh: usize,
    dx: i32,
    dy: i32,
) -> f64 {
    let mut acc = 0.0;
    for y in y0..y0 + bh {
        for x in x0..x0 + bw {
            acc += (cur.get(x, y) - sample_halfpel(reference, x, y, dx, dy)).abs();
        }
    }
    acc
}

/// Deterministic candidate preference: lower SAD, then smaller |dx|+|dy|,
/// then smaller dy, then smaller dx.
#[inline]
fn better(sad: f64, v: (i32, i32), best_sad: f64, best: (i32, i32)) -> bool {
    if sad != best_sad {
        return sad < best_sad;
    }
    let cost = v.0.abs() + v.1.abs();
    let best_cost = best.0.abs() + best.1.abs();
    (cost, v.1, v.0) < (best_cost, best.1, best.0)
}

/// Two-stage diamond search (radius-2 pattern walked to a local optimum,
/// then the radius-1 refinement) followed by half-pel refinement over the
/// eight surrounding candidates. The zero vector is always evaluated first,
/// so no reported vector is ever worse than it.
pub fn estimate_motion(current: &Frame, reference: &Frame, search_range: usize) -> Result<MotionField> {
    if current.format != reference.format
        || current.width != reference.width
        || current.height != reference.height
    {
        return Err(Error::invalid("motion estimation needs frames of identical shape"));
    }
    if search_range == 0 {
        return Err(Error::invalid("search range must be positive"));
    }
    let cur = &current.planes[0];
    let reference = &reference.planes[0];
    let mut field = MotionField::zero(current.width, current.height);
    let r = search_range as i32;

    const LDSP: [(i32, i32); 8] = [(0, -2), (-1, -1), (1, -1), (-2, 0), (2, 0), (-1, 1), (1, 1), (0, 2)];
    const SDSP: [(i32, i32); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

    for by in 0..field.blocks_h {
        for bx in 0..field.blocks_w {
            let x0 = bx * BLOCK_SIZE;
            let y0 = by * BLOCK_SIZE;
            let bw = BLOCK_SIZE.min(current.width - x0);
            let bh = BLOCK_SIZE.min(current.height - y0);
            let sad_full = |mx: i32, my: i32| block_sad(cur, reference, x0, y0, bw, bh, 2 * mx, 2 * my);

            let mut best = (0i32, 0i32);
            let mut best_sad = sad_full(0, 0);
            // Large diamond walk; each accepted move strictly improves the
            // (sad, cost, dy, dx) key, so the walk terminates.
            loop {
                let center = best;
                for (ox, oy) in LDSP {
                    let c = (center.0 + ox, center.1 + oy);
                    if c.0.abs() > r || c.1.abs() > r {
                        continue;
                    }
                    let s = sad_full(c.0, c.1);
                    if better(s, c, best_sad, best) {
                        best_sad = s;
                        best = c;
                    }
                }
                if best == center {
                    break;
                }
            }
            let center = best;
            for (ox, oy) in SDSP {
                let c = (center.0 + ox, center.1 + oy);
                if c.0.abs() > r || c.1.abs() > r {
                    continue;
                }
                let s = sad_full(c.0, c.1);
                if better(s, c, best_sad, best) {
                    best_sad = s;
                    best = c;
                }
            }

            // Half-pel refinement around the full-pel winner.
            let mut best_hp = (2 * best.0, 2 * best.1);
            let mut best_hp_sad = best_sad;
            for oy in -1..=1i32 {
                for ox in -1..=1i32 {
                    if ox == 0 && oy == 0 {
                        continue;
                    }
                    let c = (2 * best.0 + ox, 2 * best.1 + oy);
                    if c.0.abs() > 2 * r || c.1.abs() > 2 * r {
                        continue;
                    }
                    let s = block_sad(cur, reference, x0, y0, bw, bh, c.0, c.1);
                    if better(s, c, best_hp_sad, best_hp) {
                        best_hp_sad = s;
                        best_hp = c;
                    }
                }
            }
            field.vectors[by * field.blocks_w + bx] = best_hp;
        }
    }
    Ok(field)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum WarpPrecision {
    Fp32,
    Fp16Absolute,
    Fp16RelativeOffset,
}

impl WarpPrecision {
    pub fn name(self) -> &'static str {
        match self {
            WarpPrecision::Fp32 => "fp32",
            WarpPrecision::Fp16Absolute => "fp16-absolute",
            WarpPrecision::Fp16RelativeOffset => "fp16-relative-offset",
        }
    }
}

#[inline]
fn to_f16(v: f32) -> f32 {
    f16::from_f32(v).to_f32()
}

#[inline]
fn bilinear_f64(plane: &Plane, ix: i64, iy: i64, wx: f64, wy: f64) -> f64 {
    let p00 = plane.get_clamped(ix as isize, iy as isize);
    let p10 = plane.get_clamped(ix as isize + 1, iy as isize);
    let p01 = plane.get_clamped(ix as isize, iy as isize + 1);
    let p11 = plane.get_clamped(ix as isize + 1, iy as isize + 1);
    let top = (1.0 - wx) * p00 + wx * p10;
    let bot = (1.0 - wx) * p01 + wx * p11;
    (1.0 - wy) * top + wy * bot
}

fn warp_plane(plane: &Plane, field: &MotionField, mode: WarpPrecision) -> Plane {
    let mut out = Plane::new(plane.width, plane.height);
    for y in 0..plane.height {
        for x in 0..plane.width {
            let (dx, dy) = field.get(x / BLOCK_SIZE, y / BLOCK_SIZE);
            let v = match mode {
                WarpPrecision::Fp32 => {
                    // Position and weights in binary32.
                    let sx = x as f32 + dx as f32 * 0.5;
                    let sy = y as f32 + dy as f32 * 0.5;
                    let fx = sx.floor();
                    let fy = sy.floor();
                    bilinear_f64(
                        plane,
                        fx as i64,
                        fy as i64,
                        (sx - fx) as f64,
                        (sy - fy) as f64,
                    )
                }
                WarpPrecision::Fp16Absolute => {
                    // Normalized absolute coordinates rounded to binary16
                    // (steps: normalize, round, denormalize), then the fp32
                    // path.
                    let sx = x as f32 + dx as f32 * 0.5;
                    let sy = y as f32 + dy as f32 * 0.5;
                    let gx = to_f16(sx / (plane.width - 1) as f32 * 2.0 - 1.0);
                    let gy = to_f16(sy / (plane.height - 1) as f32 * 2.0 - 1.0);
                    let sx = (gx + 1.0) * 0.5 * (plane.width - 1) as f32;
                    let sy = (gy + 1.0) * 0.5 * (plane.height - 1) as f32;
                    let fx = sx.floor();
                    let fy = sy.floor();
                    bilinear_f64(
                        plane,
                        fx as i64,
                        fy as i64,
                        (sx - fx) as f64,
                        (sy - fy) as f64,
                    )
                }
                WarpPrecision::Fp16RelativeOffset => {
                    // Integer base exactly; fractional offset and the two
                    // 1-w complements rounded to binary16 (steps: offset,
                    // weight, complement). Accumulation keeps full width.
                    let ix = x as i64 + (dx as i64).div_euclid(2);
                    let iy = y as i64 + (dy as i64).div_euclid(2);
                    let wx = to_f16(dx.rem_euclid(2) as f32 * 0.5) as f64;
                    let wy = to_f16(dy.rem_euclid(2) as f32 * 0.5) as f64;
                    let cx = to_f16(1.0 - wx as f32) as f64;
                    let cy = to_f16(1.0 - wy as f32) as f64;
                    let p00 = plane.get_clamped(ix as isize, iy as isize);
                    let p10 = plane.get_clamped(ix as isize + 1, iy as isize);
                    let p01 = plane.get_clamped(ix as isize, iy as isize + 1);
                    let p11 = plane.get_clamped(ix as isize + 1, iy as isize + 1);
                    let top = cx * p00 + wx * p10;
                    let bot = cx * p01 + wx * p11;
                    cy * top + wy * bot
                }
            };
            out.set(x, y, v);
        }
    }
    out
}

/// Warps every plane of a full-resolution frame by the block field.
pub fn warp_bilinear(reference: &Frame, field: &MotionField, mode: WarpPrecision) -> Result<Frame> {
    if !field.matches_frame(reference.width, reference.height) {
        return Err(Error::invalid(format!(
            "field grid {}x{} does not cover a {}x{} frame",
            field.blocks_w, field.blocks_h, reference.width, reference.height
        )));
    }
    if reference.planes.iter().any(|p| p.width != reference.width || p.height != reference.height) {
        return Err(Error::invalid("warping requires full-resolution planes (4:4:4 or rgb)"));
    }
    let mut out = reference.clone();
    for (dst, src) in out.planes.iter_mut().zip(&reference.planes) {
        *dst = warp_plane(src, field, mode);
    }
    Ok(out)
}

/// Fraction of samples where `mode` deviates from the binary32 baseline by
/// more than max(tol_rel * |baseline|, tol_abs). Counted over all planes.
pub fn warp_error_ratio(
    reference: &Frame,
    field: &MotionField,
    mode: WarpPrecision,
    tol_rel: f64,
    tol_abs: f64,
) -> Result<f64> {
    let baseline = warp_bilinear(reference, field, WarpPrecision::Fp32)?;
    let probe = warp_bilinear(reference, field, mode)?;
    let mut exceed = 0usize;
    let mut total = 0usize;
    for (pb, pp) in baseline.planes.iter().zip(&probe.planes) {
        for (b, p) in pb.data.iter().zip(&pp.data) {
            if (b - p).abs() > (tol_rel * b.abs()).max(tol_abs) {
                exceed += 1;
            }
            total += 1;
        }
    }
    Ok(exceed as f64 / total as f64)
}

/// Worst absolute deviation from the binary32 baseline, for reporting.
pub fn warp_max_abs_err(
    reference: &Frame,
    field: &MotionField,
    mode: WarpPrecision,
) -> Result<f64> {
    let baseline = warp_bilinear(reference, field, WarpPrecision::Fp32)?;
    let probe = warp_bilinear(reference, field, mode)?;
    let mut worst = 0.0f64;
    for (pb, pp) in baseline.planes.iter().zip(&probe.planes) {
        for (b, p) in pb.data.iter().zip(&pp.data) {
            worst = worst.max((b - p).abs());
        }
    }
    Ok(worst)
}
